//! Flat `key = value` text format shared by synthetic scripts and run
//! configurations. `#` starts a comment; blank lines are ignored; a key may
//! repeat (for example one `occlusion` line per interval).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `text`; `origin` is used in error messages.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        entries.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

/// Parses one value, naming the key in the error.
pub fn value<T: std::str::FromStr>(entry: &Entry, origin: &Path) -> Result<T> {
    entry.value.parse().map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        line: entry.line,
        message: format!("invalid value `{}` for key `{}`", entry.value, entry.key),
    })
}

pub fn error(entry: &Entry, origin: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line: entry.line,
        message: message.into(),
    }
}

/// Renders pairs as text that [`parse`] reads back.
pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Placeholder origin for text that did not come from a file.
pub fn inline() -> PathBuf {
    PathBuf::from("<inline>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_repeats() {
        let text = "# header\nlength = 40\n\nocclusion = 1:2:1:noise # first\nocclusion=5:6:0.5:gray\n";
        let e = parse(text, &inline()).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!((e[0].line, e[0].key.as_str(), e[0].value.as_str()), (2, "length", "40"));
        assert_eq!(e[2].value, "5:6:0.5:gray");
    }

    #[test]
    fn reports_line_of_bad_entry() {
        let err = parse("a = 1\nnot a pair\n", &inline()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let e = &parse("mu = abc", &inline()).unwrap()[0];
        let msg = value::<f64>(e, &inline()).unwrap_err().to_string();
        assert!(msg.contains("`mu`"), "{msg}");
    }

    #[test]
    fn render_round_trips() {
        let pairs = vec![("joint.mu".to_string(), "5".to_string()), ("seed".into(), "3".into())];
        let back = parse(&render(&pairs), &inline()).unwrap();
        assert_eq!(back.iter().map(|e| (e.key.clone(), e.value.clone())).collect::<Vec<_>>(), pairs);
    }
}
