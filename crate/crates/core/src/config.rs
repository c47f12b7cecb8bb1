//! Flat `key = value` run configuration and per-dataset presets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{GapError, Result};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| GapError::Parse {
            line: lineno + 1,
            msg: format!("expected \"key = value\", got {line:?}"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(GapError::Parse {
                line: lineno + 1,
                msg: "empty key".into(),
            });
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn write_kv(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Per-dataset hyper-parameter presets. `dropout` is a drop probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub neighborhood: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub dim: usize,
}

pub fn preset(name: &str) -> Result<Preset> {
    let (neighborhood, dropout) = match name.to_ascii_lowercase().as_str() {
        "cora" => (100, 0.5),
        "zhihu" => (250, 0.65),
        "email" => (100, 0.8),
        other => return Err(GapError::arg(format!("unknown preset {other:?}"))),
    };
    Ok(Preset {
        neighborhood,
        dropout,
        learning_rate: 1e-4,
        dim: 200,
    })
}

/// Converts a drop probability to the keep probability used internally.
pub fn keep_from_dropout(dropout: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(GapError::arg(format!("dropout must lie in [0, 1), got {dropout}")));
    }
    Ok(1.0 - dropout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let text = "# comment\nlr = 0.0001\n\nneighborhood=100\n";
        let map = parse_kv(text).unwrap();
        assert_eq!(map["lr"], "0.0001");
        assert_eq!(map["neighborhood"], "100");
        assert_eq!(parse_kv(&write_kv(&map)).unwrap(), map);
        assert!(parse_kv("novalue\n").is_err());
    }

    #[test]
    fn presets_and_dropout_semantics() {
        let cora = preset("cora").unwrap();
        assert_eq!((cora.neighborhood, cora.dropout, cora.learning_rate, cora.dim), (100, 0.5, 1e-4, 200));
        let email = preset("Email").unwrap();
        assert_eq!((email.neighborhood, email.dropout), (100, 0.8));
        assert!((keep_from_dropout(email.dropout).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(preset("zhihu").unwrap().neighborhood, 250);
        assert!(keep_from_dropout(1.0).is_err());
    }
}
