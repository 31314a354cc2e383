//! Flat container of named, row-major matrices.
//!
//! Used for template model files and decoder weight files. The format is plain
//! UTF-8 text:
//!
//! ```text
//! zoo3d-matrices 1
//! kind <free-form tag>
//! matrix <name> <f64|i64> <rows> <cols>
//! <cols whitespace-separated values>      (repeated `rows` times)
//! ...
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless. Names are unique within a file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "zoo3d-matrices";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: MatrixData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixFile {
    pub kind: String,
    pub entries: Vec<NamedMatrix>,
}

impl MatrixFile {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            entries: Vec::new(),
        }
    }

    pub fn push_f64(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        assert_eq!(rows * cols, data.len(), "matrix {name}: data length");
        self.entries.push(NamedMatrix {
            name: name.to_string(),
            rows,
            cols,
            data: MatrixData::F64(data),
        });
    }

    pub fn push_i64(&mut self, name: &str, rows: usize, cols: usize, data: Vec<i64>) {
        assert_eq!(rows * cols, data.len(), "matrix {name}: data length");
        self.entries.push(NamedMatrix {
            name: name.to_string(),
            rows,
            cols,
            data: MatrixData::I64(data),
        });
    }

    fn get(&self, name: &str) -> Result<&NamedMatrix> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Schema(format!("missing matrix `{name}`")))
    }

    /// Fetch a float matrix, returning `(rows, cols, data)`.
    pub fn f64(&self, name: &str) -> Result<(usize, usize, &[f64])> {
        let m = self.get(name)?;
        match &m.data {
            MatrixData::F64(v) => Ok((m.rows, m.cols, v)),
            MatrixData::I64(_) => Err(Error::Schema(format!("matrix `{name}` must be f64"))),
        }
    }

    pub fn i64(&self, name: &str) -> Result<(usize, usize, &[i64])> {
        let m = self.get(name)?;
        match &m.data {
            MatrixData::I64(v) => Ok((m.rows, m.cols, v)),
            MatrixData::F64(_) => Err(Error::Schema(format!("matrix `{name}` must be i64"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "kind {}", self.kind);
        for m in &self.entries {
            let dtype = match m.data {
                MatrixData::F64(_) => "f64",
                MatrixData::I64(_) => "i64",
            };
            let _ = writeln!(out, "matrix {} {} {} {}", m.name, dtype, m.rows, m.cols);
            for r in 0..m.rows {
                let range = r * m.cols..(r + 1) * m.cols;
                let line = match &m.data {
                    MatrixData::F64(v) => v[range]
                        .iter()
                        .map(|x| format!("{x:?}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                    MatrixData::I64(v) => v[range]
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" "),
                };
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, msg: &str| Error::Schema(format!("line {}: {msg}", n + 1));

        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::Schema("empty file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(n, "missing magic header"));
        }
        match parts.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(VERSION) => {}
            _ => return Err(bad(n, "unsupported version")),
        }

        let (n, kind_line) = lines
            .next()
            .ok_or_else(|| Error::Schema("missing kind".into()))?;
        let kind = kind_line
            .strip_prefix("kind")
            .ok_or_else(|| bad(n, "expected `kind`"))?
            .trim()
            .to_string();

        let mut file = MatrixFile::new(kind);
        loop {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Schema("unexpected end of file (missing `end`)".into()))?;
            let mut f = line.split_whitespace();
            match f.next() {
                Some("end") => break,
                Some("matrix") => {}
                _ => return Err(bad(n, "expected `matrix` or `end`")),
            }
            let name = f.next().ok_or_else(|| bad(n, "missing name"))?.to_string();
            let dtype = f.next().ok_or_else(|| bad(n, "missing dtype"))?;
            let rows: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, "bad row count"))?;
            let cols: usize = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, "bad column count"))?;
            if file.entries.iter().any(|e| e.name == name) {
                return Err(bad(n, &format!("duplicate matrix `{name}`")));
            }

            let mut fl = Vec::new();
            let mut il = Vec::new();
            for _ in 0..rows {
                let (rn, row) = lines
                    .next()
                    .ok_or_else(|| Error::Schema(format!("matrix `{name}` truncated")))?;
                let mut count = 0;
                for tok in row.split_whitespace() {
                    match dtype {
                        "f64" => fl.push(
                            tok.parse::<f64>()
                                .map_err(|_| bad(rn, &format!("bad float `{tok}`")))?,
                        ),
                        "i64" => il.push(
                            tok.parse::<i64>()
                                .map_err(|_| bad(rn, &format!("bad integer `{tok}`")))?,
                        ),
                        other => return Err(bad(n, &format!("unknown dtype `{other}`"))),
                    }
                    count += 1;
                }
                if count != cols {
                    return Err(bad(rn, &format!("expected {cols} values, found {count}")));
                }
            }
            match dtype {
                "f64" => file.push_f64(&name, rows, cols, fl),
                "i64" => file.push_i64(&name, rows, cols, il),
                other => return Err(bad(n, &format!("unknown dtype `{other}`"))),
            }
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_lossless(
            vals in prop::collection::vec(-1e300f64..1e300, 6),
            ints in prop::collection::vec(any::<i64>(), 4),
        ) {
            let mut f = MatrixFile::new("test");
            f.push_f64("a", 2, 3, vals);
            f.push_i64("b", 4, 1, ints);
            let back = MatrixFile::parse(&f.to_text()).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn rejects_truncated_and_malformed() {
        let mut f = MatrixFile::new("t");
        f.push_f64("a", 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let text = f.to_text();
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            MatrixFile::parse(&truncated),
            Err(Error::Schema(_))
        ));
        let bad = text.replace("3.0 4.0", "3.0 x");
        assert!(matches!(MatrixFile::parse(&bad), Err(Error::Schema(_))));
        assert!(matches!(MatrixFile::parse("hello"), Err(Error::Schema(_))));
        assert!(f.i64("a").is_err());
        assert!(f.f64("missing").is_err());
    }
}
