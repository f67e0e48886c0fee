//! Flat text container of named parameter arrays.
//!
//! ```text
//! <name> <rows> <cols>
//! <row-major values, one matrix row per line, 17 significant digits>
//! ```
//!
//! Optimizer accumulators are stored under `opt/`-prefixed names.

use std::fmt::Write as _;
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const OPT_PREFIX: &str = "opt/";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, slot)) => *slot = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| Error::Load(format!("missing tensor '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Matrix)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, m) in &self.entries {
            writeln!(out, "{} {} {}", name, m.rows(), m.cols()).unwrap();
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut ckpt = Checkpoint::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((idx, header)) = lines.next() {
            if header.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = header.split_whitespace().collect();
            let [name, rows, cols] = fields[..] else {
                return Err(Error::parse(source_name, idx + 1, "expected '<name> <rows> <cols>'"));
            };
            let dim = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(source_name, idx + 1, format!("bad dimension '{s}'")))
            };
            let (rows, cols) = (dim(rows)?, dim(cols)?);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ridx, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(source_name, idx + 1, format!("'{name}' truncated")))?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    let v = tok.parse::<f64>().map_err(|_| {
                        Error::parse(source_name, ridx + 1, format!("bad value '{tok}'"))
                    })?;
                    data.push(v);
                }
                if data.len() - before != cols {
                    return Err(Error::parse(source_name, ridx + 1, "row length mismatch"));
                }
            }
            let m = Matrix::from_vec(rows, cols, data)
                .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
            ckpt.insert(name, m);
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_value_exact(
            values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..24),
            cols in 1usize..4,
        ) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let m = Matrix::from_vec(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut ckpt = Checkpoint::new();
            ckpt.insert("policy/w", m.clone());
            ckpt.insert(format!("{OPT_PREFIX}policy/w"), m.map(|v| v.abs()));
            let back = Checkpoint::parse(&ckpt.to_text(), "mem").unwrap();
            prop_assert_eq!(back, ckpt);
        }
    }

    #[test]
    fn truncated_record_is_a_parse_error() {
        let err = Checkpoint::parse("w 2 1\n1.0\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }
}
