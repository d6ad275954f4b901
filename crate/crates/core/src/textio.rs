//! Plain-text dump format for complex arrays.
//!
//! ```text
//! milacbeam-array v1 <kind> <d0> <d1> <d2>
//! <re>,<im> <re>,<im> ...      (d2 tokens per line, d0*d1 lines)
//! ```
//!
//! Entries are row-major over `(d0, d1, d2)`. Numbers use Rust's shortest
//! round-trip `f64` formatting, so a dump/load cycle is exact. Lines starting
//! with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::C64;

const MAGIC: &str = "milacbeam-array";

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexArray3 {
    pub kind: String,
    pub dims: [usize; 3],
    pub data: Vec<C64>,
}

impl ComplexArray3 {
    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.dims[1] + b) * self.dims[2] + c
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> C64 {
        self.data[self.index(a, b, c)]
    }

    pub fn to_text(&self) -> String {
        let [d0, d1, d2] = self.dims;
        let mut out = format!("{MAGIC} v1 {} {d0} {d1} {d2}\n", self.kind);
        for line in self.data.chunks(d2.max(1)) {
            let toks: Vec<String> = line.iter().map(|z| format!("{},{}", z.re, z.im)).collect();
            let _ = writeln!(out, "{}", toks.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dump".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != MAGIC || fields[1] != "v1" {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        }
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad dimension {s:?}: {e}")))
        };
        let dims = [dim(fields[3])?, dim(fields[4])?, dim(fields[5])?];
        let mut data = Vec::with_capacity(dims.iter().product());
        for (ln, line) in lines.enumerate() {
            let before = data.len();
            for tok in line.split_whitespace() {
                let (re, im) = tok
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad token {tok:?} on data line {ln}")))?;
                let p = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
                };
                data.push(C64::new(p(re)?, p(im)?));
            }
            if data.len() - before != dims[2] {
                return Err(Error::Parse(format!(
                    "data line {ln} has {} entries, expected {}",
                    data.len() - before,
                    dims[2]
                )));
            }
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Parse(format!(
                "expected {} entries, found {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(ComplexArray3 {
            kind: fields[2].to_string(),
            dims,
            data,
        })
    }

    pub fn expect_kind(self, kind: &str) -> Result<Self> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(Error::Parse(format!(
                "expected a {kind:?} dump, found {:?}",
                self.kind
            )))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
