//! Run configuration resolution and the subcommand bodies.

use std::fs;
use std::path::{Path, PathBuf};

use decontam::eval::{Metrics, ReportFormat, TrackReport};
use decontam::kv::{self, Entry};
use decontam::tracking::{
    generate_sequence, load_corruption_labels, load_sequence, track as track_sequence, write_sequence,
    CorruptionScript, Sequence, TrackerConfig,
};
use decontam::weights::{solve_alpha_certified, AlphaSubproblem, PriorWeights};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

/// Command-line values applied after the configuration file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub pairs: Vec<(String, String)>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
enum Source {
    Script(CorruptionScript),
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
struct RunConfig {
    source: Source,
    tracker: TrackerConfig,
    out: PathBuf,
    seed: u64,
    reps: usize,
    format: ReportFormat,
}

impl RunConfig {
    fn load(path: &Path, overrides: &Overrides, extra: &[(String, String)]) -> Result<Self, CliError> {
        let mut entries = kv::read(path).map_err(config_err)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let cli = PathBuf::from("<command line>");
        let flags: Vec<Entry> = overrides
            .pairs
            .iter()
            .chain(extra)
            .map(|(key, value)| Entry {
                line: 0,
                key: key.clone(),
                value: value.clone(),
            })
            .collect();

        let mut tracker = TrackerConfig::default();
        let mut script = CorruptionScript::default();
        let (mut inline, mut script_path, mut directory) = (false, None, None);
        let (mut out, mut seed, mut reps, mut format) = (None, 0u64, 1usize, ReportFormat::Csv);
        let flag_count = flags.len();
        entries.extend(flags);
        let first_flag = entries.len() - flag_count;
        for (i, e) in entries.iter().enumerate() {
            let origin = if i >= first_flag { cli.as_path() } else { path };
            if tracker.set(e, origin).map_err(config_err)? {
                continue;
            }
            match e.key.as_str() {
                "run.script" => script_path = Some(base.join(&e.value)),
                "run.sequence" => directory = Some(base.join(&e.value)),
                "run.out" => out = Some(base.join(&e.value)),
                "run.seed" => seed = kv::value(e, origin).map_err(config_err)?,
                "run.reps" => reps = kv::value(e, origin).map_err(config_err)?,
                "run.format" => format = e.value.parse().map_err(|m| config_err(kv::error(e, origin, format!("{m}"))))?,
                key if key.starts_with("synth.") => {
                    inline = true;
                    script.set(&key["synth.".len()..], e, origin).map_err(config_err)?;
                }
                key => return Err(config_err(kv::error(e, origin, format!("unknown key `{key}`")))),
            }
        }
        tracker.validate().map_err(config_err)?;
        if reps == 0 {
            return Err(config_err("`run.reps` must be at least 1"));
        }
        let source = match (inline, script_path, directory) {
            (true, None, None) => {
                script.validate().map_err(config_err)?;
                Source::Script(script)
            }
            (false, Some(p), None) => Source::Script(CorruptionScript::from_file(&p).map_err(config_err)?),
            (false, None, Some(d)) => Source::Directory(d),
            (false, None, None) => {
                return Err(config_err("no sequence source: set `run.sequence`, `run.script` or `synth.*` keys"))
            }
            _ => {
                return Err(config_err(
                    "more than one sequence source among `run.sequence`, `run.script` and `synth.*` keys",
                ))
            }
        };
        let out = overrides
            .out
            .clone()
            .or(out)
            .ok_or_else(|| config_err("no output directory: set `run.out` or pass --out"))?;
        Ok(Self {
            source,
            tracker,
            out,
            seed,
            reps,
            format,
        })
    }

    /// Everything needed to repeat the run, as `key = value` pairs.
    fn echo(&self, seed: u64, reps: usize) -> Vec<(String, String)> {
        let format = match self.format {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        };
        let mut p = vec![
            ("run.seed".to_string(), seed.to_string()),
            ("run.reps".into(), reps.to_string()),
            ("run.format".into(), format.into()),
        ];
        match &self.source {
            Source::Directory(d) => {
                let abs = fs::canonicalize(d).unwrap_or_else(|_| d.clone());
                p.push(("run.sequence".into(), abs.display().to_string()));
            }
            Source::Script(s) => p.extend(s.to_pairs().into_iter().map(|(k, v)| (format!("synth.{k}"), v))),
        }
        p.extend(self.tracker.to_pairs());
        p
    }

    fn sequence(&self, seed: u64) -> Result<Sequence, CliError> {
        match &self.source {
            Source::Script(s) => generate_sequence(s, seed).map_err(config_err),
            Source::Directory(d) => {
                let mut seq = load_sequence(d).map_err(data_err)?;
                let labels = load_corruption_labels(d).map_err(data_err)?;
                if labels.as_ref().is_some_and(|l| l.len() != seq.len()) {
                    return Err(data_err(format!(
                        "{}: corruption label count differs from frame count",
                        d.display()
                    )));
                }
                seq.corruption_labels = labels;
                Ok(seq)
            }
        }
    }

    /// Tracks every repetition; repetition `r` uses seed `seed + r`.
    fn run_all(&self) -> Result<Vec<TrackReport>, CliError> {
        let shared = match self.source {
            Source::Directory(_) => Some(self.sequence(self.seed)?),
            Source::Script(_) => None,
        };
        (0..self.reps)
            .into_par_iter()
            .map(|r| {
                let seed = self.seed + r as u64;
                let owned;
                let seq = match &shared {
                    Some(s) => s,
                    None => {
                        owned = self.sequence(seed)?;
                        &owned
                    }
                };
                let mut report = track_sequence(seq, &self.tracker, seed).map_err(data_err)?;
                report.config = self.echo(seed, 1);
                Ok(report)
            })
            .collect()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Serialize)]
struct Aggregate {
    runs: Vec<Metrics>,
    median_op_50: f64,
    mean_op_50: f64,
    median_auc: f64,
    mean_auc: f64,
    mean_ms_per_frame: f64,
}

impl Aggregate {
    fn new(runs: Vec<Metrics>) -> Self {
        let op: Vec<f64> = runs.iter().map(|m| m.op_50).collect();
        let auc: Vec<f64> = runs.iter().map(|m| m.auc).collect();
        let ms: Vec<f64> = runs.iter().map(|m| m.mean_ms_per_frame).collect();
        Self {
            median_op_50: median(&op),
            mean_op_50: mean(&op),
            median_auc: median(&auc),
            mean_auc: mean(&auc),
            mean_ms_per_frame: mean(&ms),
            runs,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

pub fn track(config: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, overrides, &[])?;
    let reports = cfg.run_all()?;
    create_dir(&cfg.out)?;
    for (r, report) in reports.iter().enumerate() {
        report
            .export(&cfg.out.join(format!("run_{r:03}")), cfg.format)
            .map_err(data_err)?;
    }
    let aggregate = Aggregate::new(reports.iter().map(TrackReport::metrics).collect());
    let json = serde_json::to_string_pretty(&aggregate).map_err(data_err)?;
    write(&cfg.out.join("metrics.json"), &json)?;
    write(&cfg.out.join("config.txt"), &kv::render(&cfg.echo(cfg.seed, cfg.reps)))?;
    println!(
        "{} run(s): median OP {:.2}, mean OP {:.2}, median AUC {:.2}, mean AUC {:.2}",
        cfg.reps, aggregate.median_op_50, aggregate.mean_op_50, aggregate.median_auc, aggregate.mean_auc
    );
    Ok(())
}

pub fn synth(script: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let script = CorruptionScript::from_file(script).map_err(config_err)?;
    let seq = generate_sequence(&script, seed).map_err(config_err)?;
    write_sequence(&seq, out).map_err(data_err)?;
    println!("wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}

pub fn qp(losses: &[f64], priors: &[f64], mu: f64) -> Result<(), CliError> {
    let priors = PriorWeights::new(priors.to_vec()).map_err(config_err)?;
    let problem = AlphaSubproblem::new(losses.to_vec(), &priors, mu).map_err(config_err)?;
    let solution = solve_alpha_certified(&problem);
    let alpha: Vec<String> = solution.alpha.as_slice().iter().map(f64::to_string).collect();
    println!("alpha = {}", alpha.join(","));
    println!("kkt_residual = {}", solution.kkt_residual);
    Ok(())
}

pub fn sweep(config: &Path, overrides: &Overrides, param: &str, values: &[String]) -> Result<(), CliError> {
    let points = values
        .iter()
        .map(|v| RunConfig::load(config, overrides, &[(param.to_string(), v.clone())]))
        .collect::<Result<Vec<_>, _>>()?;
    let results = points
        .par_iter()
        .map(|cfg| cfg.run_all())
        .collect::<Result<Vec<_>, _>>()?;
    let out = &points[0].out;
    create_dir(out)?;
    let mut table = String::from("param,value,seed,reps,median_op_50,mean_op_50,median_auc,mean_auc\n");
    for ((value, cfg), reports) in values.iter().zip(&points).zip(&results) {
        let a = Aggregate::new(reports.iter().map(TrackReport::metrics).collect());
        table.push_str(&format!(
            "{param},{value},{},{},{},{},{},{}\n",
            cfg.seed, cfg.reps, a.median_op_50, a.mean_op_50, a.median_auc, a.mean_auc
        ));
    }
    write(&out.join("sweep.csv"), &table)?;
    write(&out.join("config.txt"), &kv::render(&points[0].echo(points[0].seed, points[0].reps)))?;
    print!("{table}");
    Ok(())
}
