//! Plain-text checkpoints: a header line, then row-major decimal floats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a reload
//! reproduces every parameter bit for bit.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{GapError, Result};
use crate::model::{MlpParams, ModelParams};

const GAP_MAGIC: &str = "gap-v1";
const MLP_MAGIC: &str = "gap-mlp-v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Gap { params: ModelParams, neighborhood: usize },
    Mlp { params: MlpParams, neighborhood: usize },
}

fn write_matrix(out: &mut String, m: &Array2<f64>) {
    for row in m.outer_iter() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

impl Checkpoint {
    pub fn neighborhood(&self) -> usize {
        match self {
            Checkpoint::Gap { neighborhood, .. } | Checkpoint::Mlp { neighborhood, .. } => *neighborhood,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            Checkpoint::Gap { params, .. } => params.num_nodes(),
            Checkpoint::Mlp { params, .. } => params.num_nodes(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Checkpoint::Gap { params, neighborhood } => {
                let _ = writeln!(out, "{GAP_MAGIC} {} {} {neighborhood}", params.num_nodes(), params.dim());
                write_matrix(&mut out, &params.embeddings);
                write_matrix(&mut out, &params.attn);
            }
            Checkpoint::Mlp { params, neighborhood } => {
                let _ = writeln!(out, "{MLP_MAGIC} {} {} {neighborhood}", params.num_nodes(), params.dim());
                write_matrix(&mut out, &params.embeddings);
                write_matrix(&mut out, &params.weight);
                write_matrix(&mut out, &params.bias);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GapError::Parse {
            line: 1,
            msg: "empty checkpoint".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || GapError::Parse {
            line: 1,
            msg: format!("bad checkpoint header {header:?}"),
        };
        if fields.len() != 4 {
            return Err(bad_header());
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad_header());
        let (n, d, len) = (parse_usize(fields[1])?, parse_usize(fields[2])?, parse_usize(fields[3])?);
        if d == 0 || len == 0 {
            return Err(bad_header());
        }

        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|_| GapError::Parse {
                    line: i + 2,
                    msg: format!("not a float: {tok:?}"),
                })?);
            }
        }
        let mut cursor = 0usize;
        let mut take = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let end = cursor + rows * cols;
            if end > values.len() {
                return Err(GapError::Parse {
                    line: 0,
                    msg: "checkpoint is truncated".into(),
                });
            }
            let m = Array2::from_shape_vec((rows, cols), values[cursor..end].to_vec()).expect("shape checked");
            cursor = end;
            Ok(m)
        };
        let ckpt = match fields[0] {
            GAP_MAGIC => {
                let embeddings = take(n + 1, d)?;
                let attn = take(d, d)?;
                Checkpoint::Gap {
                    params: ModelParams { embeddings, attn },
                    neighborhood: len,
                }
            }
            MLP_MAGIC => {
                let embeddings = take(n + 1, d)?;
                let weight = take(d, d)?;
                let bias = take(1, d)?;
                Checkpoint::Mlp {
                    params: MlpParams {
                        embeddings,
                        weight,
                        bias,
                    },
                    neighborhood: len,
                }
            }
            _ => return Err(bad_header()),
        };
        if cursor != values.len() {
            return Err(GapError::Parse {
                line: 0,
                msg: format!("{} trailing values in checkpoint", values.len() - cursor),
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ModelParams::init(7, 5, 3).unwrap();
        p.attn[[0, 1]] = 1e-300;
        p.attn[[2, 2]] = -123456.789e10;
        p.embeddings[[1, 1]] = f64::MIN_POSITIVE;
        let ck = Checkpoint::Gap { params: p, neighborhood: 9 };
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        if let (Checkpoint::Gap { params: a, .. }, Checkpoint::Gap { params: b, .. }) = (&ck, &back) {
            for (x, y) in a.embeddings.iter().chain(a.attn.iter()).zip(b.embeddings.iter().chain(b.attn.iter())) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn mlp_round_trip() {
        let ck = Checkpoint::Mlp {
            params: MlpParams::init(4, 3, 1).unwrap(),
            neighborhood: 2,
        };
        assert_eq!(Checkpoint::from_text(&ck.to_text()).unwrap(), ck);
    }

    #[test]
    fn rejects_truncated_and_bad_header() {
        let ck = Checkpoint::Gap {
            params: ModelParams::init(3, 2, 1).unwrap(),
            neighborhood: 2,
        };
        let text = ck.to_text();
        let last_line = text.trim_end().rfind('\n').unwrap();
        assert!(Checkpoint::from_text(&text[..last_line]).is_err());
        assert!(Checkpoint::from_text(&format!("{text}0.5\n")).is_err());
        assert!(Checkpoint::from_text("gap-v2 3 2 2\n").is_err());
        assert!(Checkpoint::from_text("").is_err());
    }
}
