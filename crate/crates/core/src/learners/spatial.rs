//! Spatially penalized filter, `R(θ) = Σ_l ‖w ⊙ f^l‖²`, solved with
//! warm-started Gauss–Seidel sweeps on the real normal equations.
//!
//! The normal matrix is never stored. Its block `(l, m)` is circulant,
//! generated by the weighted cross-correlation `R^{lm}(s) = Σ_k α_k Σ_q
//! x_k^l(q) x_k^m(q + s)`, plus the diagonal `w²` on the `l = m` blocks.

use rustfft::num_complex::Complex64;

use super::dcf::{CorrelationFilter, SpectralSample, TrainingSample};
use super::{FeatureMap, LabelMap, Learner};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::weights::SimplexWeights;

/// Largest `H·W·d` accepted by the dense solver.
pub const DENSE_SIZE_BOUND: usize = 4096;

/// Normal equations `A f = b` of the spatially penalized objective.
#[derive(Debug, Clone)]
pub struct SpatialSystem {
    height: usize,
    width: usize,
    channels: usize,
    /// `correlations[l * d + m]` is the table `R^{lm}` over wrapped offsets.
    correlations: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    penalty_sq: Vec<f64>,
}

impl SpatialSystem {
    pub fn new(
        fft: &Fft2,
        frames: &[SpectralSample],
        alpha: &[f64],
        penalty: &LabelMap,
    ) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("no training samples"))?;
        if alpha.len() != frames.len() {
            return Err(Error::mismatch(format!("{} weights", frames.len()), alpha.len()));
        }
        let (h, w) = (fft.height(), fft.width());
        let d = first.channels();
        check_penalty(penalty, h, w)?;
        if h * w * d > DENSE_SIZE_BOUND {
            return Err(Error::SizeBound {
                size: h * w * d,
                bound: DENSE_SIZE_BOUND,
            });
        }
        let n = h * w;
        let zero = Complex64::new(0.0, 0.0);
        let mut cross = vec![vec![zero; n]; d * d];
        let mut projected = vec![vec![zero; n]; d];
        for (a, s) in alpha.iter().zip(frames) {
            if s.channels() != d {
                return Err(Error::mismatch(format!("{d} channels"), s.channels()));
            }
            if *a == 0.0 {
                continue;
            }
            let x = s.feature_spectra();
            let y = s.label_spectrum();
            for l in 0..d {
                for u in 0..n {
                    let xl = x[l][u].conj() * *a;
                    projected[l][u] += xl * y[u];
                    for m in 0..d {
                        cross[l * d + m][u] += xl * x[m][u];
                    }
                }
            }
        }
        let correlations = cross.into_iter().map(|c| fft.inverse_real(c).0).collect();
        let rhs = projected
            .into_iter()
            .flat_map(|p| fft.inverse_real(p).0)
            .collect();
        Ok(Self {
            height: h,
            width: w,
            channels: d,
            correlations,
            rhs,
            penalty_sq: penalty.as_slice().iter().map(|v| v * v).collect(),
        })
    }

    /// Number of unknowns `H·W·d`.
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// Entry `A[(l, i), (m, j)]` with flattened indices `l·N + i`, `m·N + j`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let n = self.height * self.width;
        let (l, i) = (row / n, row % n);
        let (m, j) = (col / n, col % n);
        let mut v = self.correlations[l * self.channels + m][self.offset(i, j)];
        if row == col {
            v += self.penalty_sq[i];
        }
        v
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let (ri, ci) = (i / self.width, i % self.width);
        let (rj, cj) = (j / self.width, j % self.width);
        ((ri + self.height - rj) % self.height) * self.width + (ci + self.width - cj) % self.width
    }

    /// Row `p` of `A f`.
    fn row_product(&self, p: usize, f: &[f64]) -> f64 {
        let (h, w, d) = (self.height, self.width, self.channels);
        let n = h * w;
        let (l, i) = (p / n, p % n);
        let (ri, ci) = (i / w, i % w);
        let mut acc = self.penalty_sq[i] * f[p];
        for m in 0..d {
            let table = &self.correlations[l * d + m];
            let fm = &f[m * n..(m + 1) * n];
            for rj in 0..h {
                let base = ((ri + h - rj) % h) * w;
                let frow = &fm[rj * w..(rj + 1) * w];
                for (cj, fv) in frow.iter().enumerate() {
                    acc += table[base + (ci + w - cj) % w] * fv;
                }
            }
        }
        acc
    }

    /// One forward Gauss–Seidel sweep, in place.
    pub fn sweep(&self, f: &mut [f64]) {
        let n = self.height * self.width;
        for p in 0..self.size() {
            let diag = self.correlations[(p / n) * (self.channels + 1)][0] + self.penalty_sq[p % n];
            let r = self.rhs[p] - self.row_product(p, f);
            f[p] += r / diag;
        }
    }

    /// Euclidean norm of `b − A f`.
    pub fn residual_norm(&self, f: &[f64]) -> f64 {
        (0..self.size())
            .map(|p| (self.rhs[p] - self.row_product(p, f)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Quadratic form `½ fᵀ A f − bᵀ f`; Gauss–Seidel never increases it.
    pub fn energy(&self, f: &[f64]) -> f64 {
        (0..self.size())
            .map(|p| f[p] * (0.5 * self.row_product(p, f) - self.rhs[p]))
            .sum()
    }
}

fn check_penalty(penalty: &LabelMap, h: usize, w: usize) -> Result<()> {
    if (penalty.height(), penalty.width()) != (h, w) {
        return Err(Error::mismatch(
            format!("penalty {h}x{w}"),
            format!("{}x{}", penalty.height(), penalty.width()),
        ));
    }
    if penalty.as_slice().iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("spatial penalty entries must be positive".into()));
    }
    Ok(())
}

/// Runs `iterations` Gauss–Seidel sweeps starting from `warm_start`.
pub fn train_filter_spatial(
    samples: &[TrainingSample],
    alpha: &SimplexWeights,
    penalty: &LabelMap,
    iterations: usize,
    warm_start: &CorrelationFilter,
) -> Result<CorrelationFilter> {
    let first = samples.first().ok_or(Error::Empty("no training samples"))?;
    let (h, w, d) = first.features.shape();
    if h * w * d > DENSE_SIZE_BOUND {
        return Err(Error::SizeBound {
            size: h * w * d,
            bound: DENSE_SIZE_BOUND,
        });
    }
    check_penalty(penalty, h, w)?;
    if warm_start.shape() != (h, w, d) {
        return Err(Error::mismatch(format!("{:?}", (h, w, d)), format!("{:?}", warm_start.shape())));
    }
    if iterations == 0 {
        return Ok(warm_start.clone());
    }
    let learner = SpatialFilterLearner::new(h, w, penalty.clone(), iterations)?;
    let spectral = samples
        .iter()
        .map(|s| SpectralSample::new(&learner.fft, s))
        .collect::<Result<Vec<_>>>()?;
    learner.train(&spectral, alpha.as_slice(), Some(warm_start))
}

/// Gauss–Seidel learner for the spatially penalized objective.
#[derive(Debug, Clone)]
pub struct SpatialFilterLearner {
    fft: Fft2,
    penalty: LabelMap,
    sweeps: usize,
}

impl SpatialFilterLearner {
    pub fn new(height: usize, width: usize, penalty: LabelMap, sweeps: usize) -> Result<Self> {
        check_penalty(&penalty, height, width)?;
        Ok(Self {
            fft: Fft2::new(height, width),
            penalty,
            sweeps,
        })
    }

    pub fn spectral(&self, sample: &TrainingSample) -> Result<SpectralSample> {
        SpectralSample::new(&self.fft, sample)
    }

    pub fn system(&self, frames: &[SpectralSample], alpha: &[f64]) -> Result<SpatialSystem> {
        SpatialSystem::new(&self.fft, frames, alpha, &self.penalty)
    }
}

impl Learner for SpatialFilterLearner {
    type Frame = SpectralSample;
    type Model = CorrelationFilter;

    fn train(
        &self,
        frames: &[SpectralSample],
        alpha: &[f64],
        warm: Option<&CorrelationFilter>,
    ) -> Result<CorrelationFilter> {
        let system = self.system(frames, alpha)?;
        let d = frames[0].channels();
        let (h, w) = (self.fft.height(), self.fft.width());
        let mut f = match warm {
            Some(m) if m.shape() == (h, w, d) => m.coeffs().as_slice().to_vec(),
            _ => vec![0.0; system.size()],
        };
        for _ in 0..self.sweeps {
            system.sweep(&mut f);
        }
        CorrelationFilter::from_coeffs(FeatureMap::new(h, w, d, f)?, 1.0, Some(self.penalty.clone()))
    }

    fn frame_loss(&self, model: &CorrelationFilter, frame: &SpectralSample) -> Result<f64> {
        super::dcf::spectral_loss(&self.fft, model, frame)
    }

    fn penalty(&self, model: &CorrelationFilter) -> f64 {
        model.penalty_value()
    }

    fn is_exact(&self) -> bool {
        false
    }
}
