//! Versioned plain-text parameter archive.
//!
//! ```text
//! dcn-checkpoint 1
//! meta <key> <value>
//! tensor <name> <rank> <dim0> <dim1> ...
//! <row-major values, space separated>
//! ```
//!
//! Values are written in shortest round-trip form, so loading restores
//! every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::param::ParamTensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "dcn-checkpoint";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, ParamTensor)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::param(format!("checkpoint lacks `{key}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::param(format!("checkpoint lacks tensor `{name}`")))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for (name, t) in &self.tensors {
            let _ = write!(s, "tensor {name} {}", t.shape().len());
            for d in t.shape() {
                let _ = write!(s, " {d}");
            }
            s.push('\n');
            let vals: Vec<String> = t.values().iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        match lines.next() {
            Some((_, h)) if h == format!("{MAGIC} {CHECKPOINT_VERSION}") => {}
            Some((ln, h)) => return Err(bad(ln, &format!("unsupported checkpoint header `{h}`"))),
            None => return Err(bad(1, "empty checkpoint")),
        }
        let mut ck = Checkpoint::default();
        while let Some((ln, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<_> = rest.split_whitespace().collect();
                if parts.len() < 2 {
                    return Err(bad(ln, "tensor header needs a name and rank"));
                }
                let rank: usize = parts[1].parse().map_err(|_| bad(ln, "bad rank"))?;
                if parts.len() != 2 + rank {
                    return Err(bad(ln, "tensor header rank does not match dims"));
                }
                let shape = parts[2..]
                    .iter()
                    .map(|d| d.parse::<usize>().map_err(|_| bad(ln, "bad dimension")))
                    .collect::<Result<Vec<_>>>()?;
                let (vl, vline) = lines.next().ok_or_else(|| bad(ln, "missing tensor values"))?;
                let values = vline
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| bad(vl, "bad value")))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != shape.iter().product::<usize>() {
                    return Err(bad(vl, "value count does not match shape"));
                }
                ck.tensors.push((parts[0].to_string(), ParamTensor::new(&shape, values)));
            } else {
                return Err(bad(ln, &format!("unexpected line `{line}`")));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let ck = Checkpoint {
            meta: vec![("model".into(), "DCN-T".into()), ("shifts".into(), "1 4 9".into())],
            tensors: vec![
                ("w".into(), ParamTensor::new(&[2, 3], vec![0.1, -1.0 / 3.0, 1e-300, 5e300, -0.0, 2.5])),
                ("b".into(), ParamTensor::new(&[1], vec![std::f64::consts::PI])),
            ],
        };
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        for ((_, a), (_, b)) in back.tensors.iter().zip(&ck.tensors) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_wrong_version_and_counts() {
        assert!(Checkpoint::from_text("dcn-checkpoint 99\n").is_err());
        assert!(Checkpoint::from_text("dcn-checkpoint 1\ntensor w 1 3\n1 2\n").is_err());
    }
}
