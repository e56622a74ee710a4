//! Plain-text problem format for cross-solver validation.
//!
//! ```text
//! sdp 1
//! blocks <p>
//! psd <n> | nonneg <n> | free <n>          (p lines)
//! objective <j>                            (per block; n rows of `re im` pairs,
//! ...                                       or one row of n values)
//! constraints <m>
//! constraint <eq|le|ge> <bound> <terms> <label>
//! term <j> matrix <nnz>                    followed by nnz lines `r c re im`
//! term <j> vector <nnz>                    followed by nnz lines `i value`
//! ```
//!
//! Numbers use Rust's shortest round-trip rendering, so `load(dump(p)) == p`.

use std::fmt::Write as _;

use nalgebra::DVector;

use super::{BlockData, BlockKind, BlockValue, Constraint, ConstraintKind, Result, SdpError, SdpProblem, SparseHermitian};
use crate::linalg::{self, C64};

pub fn dump(problem: &SdpProblem) -> String {
    let mut s = String::new();
    writeln!(s, "sdp 1").unwrap();
    writeln!(s, "blocks {}", problem.blocks.len()).unwrap();
    for k in &problem.blocks {
        match k {
            BlockKind::Psd(n) => writeln!(s, "psd {n}"),
            BlockKind::Nonneg(n) => writeln!(s, "nonneg {n}"),
            BlockKind::Free(n) => writeln!(s, "free {n}"),
        }
        .unwrap();
    }
    for (j, c) in problem.objective.iter().enumerate() {
        writeln!(s, "objective {j}").unwrap();
        match c {
            BlockValue::Matrix(m) => {
                for r in 0..m.nrows() {
                    let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?} {:?}", m[(r, c)].re, m[(r, c)].im)).collect();
                    writeln!(s, "{}", row.join(" ")).unwrap();
                }
            }
            BlockValue::Vector(v) => {
                let row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
    }
    writeln!(s, "constraints {}", problem.constraints.len()).unwrap();
    for c in &problem.constraints {
        let label = if c.label.is_empty() { "-".to_string() } else { c.label.replace(char::is_whitespace, "_") };
        writeln!(s, "constraint {} {:?} {} {}", c.kind, c.bound, c.terms.len(), label).unwrap();
        for (j, d) in &c.terms {
            match d {
                BlockData::Matrix(a) => {
                    writeln!(s, "term {j} matrix {}", a.entries.len()).unwrap();
                    for &(r, col, v) in &a.entries {
                        writeln!(s, "{r} {col} {:?} {:?}", v.re, v.im).unwrap();
                    }
                }
                BlockData::Vector(v) => {
                    writeln!(s, "term {j} vector {}", v.len()).unwrap();
                    for &(i, x) in v {
                        writeln!(s, "{i} {x:?}").unwrap();
                    }
                }
            }
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Ok(t.split_whitespace().collect());
            }
        }
        Err(SdpError::Parse { line: self.line + 1, reason: "unexpected end of input".into() })
    }

    fn err(&self, reason: impl Into<String>) -> SdpError {
        SdpError::Parse { line: self.line, reason: reason.into() }
    }

    fn keyword(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let t = self.next()?;
        if t.first() != Some(&key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(t[1..].to_vec())
    }

    fn num<T: std::str::FromStr>(&self, s: Option<&&str>) -> Result<T> {
        s.and_then(|v| v.parse().ok()).ok_or_else(|| self.err(format!("bad number {s:?}")))
    }
}

pub fn load(text: &str) -> Result<SdpProblem> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let header = lines.keyword("sdp")?;
    if header.first() != Some(&"1") {
        return Err(lines.err("unsupported version"));
    }
    let p: usize = {
        let t = lines.keyword("blocks")?;
        lines.num(t.first())?
    };
    let mut blocks = Vec::with_capacity(p);
    for _ in 0..p {
        let t = lines.next()?;
        let n: usize = lines.num(t.get(1))?;
        blocks.push(match t[0] {
            "psd" => BlockKind::Psd(n),
            "nonneg" => BlockKind::Nonneg(n),
            "free" => BlockKind::Free(n),
            other => return Err(lines.err(format!("unknown block kind `{other}`"))),
        });
    }
    let mut problem = SdpProblem::new(blocks.clone());
    for (j, &kind) in blocks.iter().enumerate() {
        let t = lines.keyword("objective")?;
        if lines.num::<usize>(t.first())? != j {
            return Err(lines.err("objective blocks out of order"));
        }
        problem.objective[j] = match kind {
            BlockKind::Psd(n) => {
                let mut m = linalg::zeros(n);
                for r in 0..n {
                    let row = lines.next()?;
                    if row.len() != 2 * n {
                        return Err(lines.err("wrong number of matrix entries"));
                    }
                    for c in 0..n {
                        m[(r, c)] = C64::new(lines.num(row.get(2 * c))?, lines.num(row.get(2 * c + 1))?);
                    }
                }
                BlockValue::Matrix(m)
            }
            BlockKind::Nonneg(n) | BlockKind::Free(n) => {
                let row = if n == 0 { Vec::new() } else { lines.next()? };
                if row.len() != n {
                    return Err(lines.err("wrong number of vector entries"));
                }
                let v: Result<Vec<f64>> = row.iter().map(|x| lines.num(Some(x))).collect();
                BlockValue::Vector(DVector::from_vec(v?))
            }
        };
    }
    let m: usize = {
        let t = lines.keyword("constraints")?;
        lines.num(t.first())?
    };
    for _ in 0..m {
        let t = lines.keyword("constraint")?;
        let kind = match t.first() {
            Some(&"eq") => ConstraintKind::Eq,
            Some(&"le") => ConstraintKind::Le,
            Some(&"ge") => ConstraintKind::Ge,
            _ => return Err(lines.err("unknown constraint kind")),
        };
        let bound: f64 = lines.num(t.get(1))?;
        let n_terms: usize = lines.num(t.get(2))?;
        let label = match t.get(3) {
            Some(&"-") | None => String::new(),
            Some(l) => l.to_string(),
        };
        let mut row = Constraint::new(label, kind, bound);
        for _ in 0..n_terms {
            let h = lines.keyword("term")?;
            let j: usize = lines.num(h.first())?;
            let nnz: usize = lines.num(h.get(2))?;
            let dim = blocks.get(j).ok_or_else(|| lines.err("unknown block"))?.dim();
            match h.get(1) {
                Some(&"matrix") => {
                    let mut entries = Vec::with_capacity(nnz);
                    for _ in 0..nnz {
                        let e = lines.next()?;
                        entries.push((
                            lines.num(e.first())?,
                            lines.num(e.get(1))?,
                            C64::new(lines.num(e.get(2))?, lines.num(e.get(3))?),
                        ));
                    }
                    row = row.matrix(j, SparseHermitian { dim, entries });
                }
                Some(&"vector") => {
                    let mut v = Vec::with_capacity(nnz);
                    for _ in 0..nnz {
                        let e = lines.next()?;
                        v.push((lines.num(e.first())?, lines.num(e.get(1))?));
                    }
                    row = row.vector(j, v);
                }
                _ => return Err(lines.err("unknown term kind")),
            }
        }
        problem.push(row);
    }
    problem.validate()?;
    Ok(problem)
}
