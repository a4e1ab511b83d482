//! SDPA sparse format (`.dat-s`) export of the relaxation, and a reader.
//!
//! The format describes the primal
//!
//! ```text
//! minimize  cᵀx   subject to  F(x) = Σᵢ xᵢ Fᵢ − F₀ ⪰ 0
//! ```
//!
//! over block-diagonal symmetric matrices. Only upper-triangle entries are
//! listed, one per line as `matno blkno i j value` (1-based).
//!
//! The relaxation is written with one variable per upper-triangle entry of
//! `Λ` (row-major over `i ≤ j`) plus an epigraph variable `t`:
//!
//! * block 1 (`p×p`): `Λ ⪰ 0`;
//! * block 2 (`(nc+1)×(nc+1)`): `[[I, r], [rᵀ, t]] ⪰ 0` with
//!   `r_{ik} = Λ_{α_i v_k} − Y_{ik}`, i.e. `t ≥ ‖P_α Λ P_vᵀ − Y‖²_F`;
//! * block 3 (diagonal): `Λ_{ij} ≥ 0` on the `(α, β)` block and
//!   `−⟨A0, Λ⟩ ≥ 0`, which on the cone forces `⟨A0, Λ⟩ = 0`.
//!
//! The objective is `t + (γ/2) Σ_{j ∈ u ∪ v} Λ_{jj}`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{mismatch, Error, Result};
use crate::lifted::LiftedProblem;

/// One nonzero of an SDPA coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// 0 for `F₀`, `k` for the coefficient of `x_k`.
    pub mat: usize,
    /// 1-based block number.
    pub block: usize,
    /// 1-based row, `row ≤ col`.
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// An SDPA problem in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    /// Block sizes; negative for diagonal blocks.
    pub block_struct: Vec<i64>,
    pub c: Vec<f64>,
    pub entries: Vec<Entry>,
}

impl SdpaProblem {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.c.len() {
            return Err(mismatch("sdpa variable vector", self.c.len(), x.len()));
        }
        Ok(self.c.iter().zip(x).map(|(c, x)| c * x).sum())
    }

    /// `F(x)` block by block. Diagonal blocks come back as column vectors.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if x.len() != self.c.len() {
            return Err(mismatch("sdpa variable vector", self.c.len(), x.len()));
        }
        let mut blocks: Vec<DMatrix<f64>> = self
            .block_struct
            .iter()
            .map(|&s| {
                if s < 0 {
                    DMatrix::zeros(s.unsigned_abs() as usize, 1)
                } else {
                    DMatrix::zeros(s as usize, s as usize)
                }
            })
            .collect();
        for e in &self.entries {
            let coef = if e.mat == 0 { -1.0 } else { x[e.mat - 1] };
            let diag = self.block_struct[e.block - 1] < 0;
            let b = &mut blocks[e.block - 1];
            if diag {
                b[(e.row - 1, 0)] += coef * e.value;
            } else {
                b[(e.row - 1, e.col - 1)] += coef * e.value;
                if e.row != e.col {
                    b[(e.col - 1, e.row - 1)] += coef * e.value;
                }
            }
        }
        Ok(blocks)
    }

    pub fn write(&self, mut w: impl Write, comment: &str) -> std::io::Result<()> {
        for line in comment.lines() {
            writeln!(w, "\"{line}")?;
        }
        writeln!(w, "{}", self.c.len())?;
        writeln!(w, "{}", self.block_struct.len())?;
        let structs: Vec<String> = self.block_struct.iter().map(|s| s.to_string()).collect();
        writeln!(w, "{}", structs.join(" "))?;
        let mut line = String::new();
        for (k, c) in self.c.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            write!(line, "{c:.16e}").expect("writing to a String");
        }
        writeln!(w, "{line}")?;
        for e in &self.entries {
            writeln!(w, "{} {} {} {} {:.16e}", e.mat, e.block, e.row, e.col, e.value)?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let mut last_header_line = 0;
        let mut entries = Vec::new();
        let mut lines = r.lines().enumerate();
        let mut m: Option<usize> = None;
        let mut nblock: Option<usize> = None;
        let mut block_struct: Option<Vec<i64>> = None;
        let mut c: Option<Vec<f64>> = None;

        let bad = |line: usize, reason: String| Error::Sdpa { line, reason };
        // Header fields may share lines and use `,(){}` as separators.
        let split = |s: &str| -> Vec<String> {
            s.split(|ch: char| ch.is_whitespace() || ",(){}".contains(ch))
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };
        let mut pending: std::collections::VecDeque<(usize, String)> = Default::default();
        while c.is_none() {
            if pending.is_empty() {
                let Some((no, line)) = lines.next() else {
                    return Err(bad(0, "unexpected end of file in header".into()));
                };
                let line = line?;
                let t = line.trim_start();
                if t.starts_with('"') || t.starts_with('*') || t.is_empty() {
                    continue;
                }
                pending.extend(split(t).into_iter().map(|tok| (no + 1, tok)));
                last_header_line = no + 1;
                continue;
            }
            if m.is_none() {
                let (no, tok) = pending.pop_front().expect("nonempty");
                m = Some(tok.parse().map_err(|_| bad(no, format!("bad mDIM `{tok}`")))?);
            } else if nblock.is_none() {
                let (no, tok) = pending.pop_front().expect("nonempty");
                nblock = Some(tok.parse().map_err(|_| bad(no, format!("bad nBLOCK `{tok}`")))?);
            } else if block_struct.is_none() {
                let need = nblock.expect("set above");
                if pending.len() < need {
                    return Err(bad(last_header_line, format!("expected {need} block sizes")));
                }
                let mut v = Vec::with_capacity(need);
                for _ in 0..need {
                    let (no, tok) = pending.pop_front().expect("length checked");
                    let s: i64 = tok.parse().map_err(|_| bad(no, format!("bad block size `{tok}`")))?;
                    if s == 0 {
                        return Err(bad(no, "zero block size".into()));
                    }
                    v.push(s);
                }
                block_struct = Some(v);
            } else if let Some(need) = m {
                if pending.len() < need {
                    let Some((no, line)) = lines.next() else {
                        return Err(bad(0, "unexpected end of file in cost vector".into()));
                    };
                    let line = line?;
                    pending.extend(split(&line).into_iter().map(|tok| (no + 1, tok)));
                    continue;
                }
                let mut v = Vec::with_capacity(need);
                for _ in 0..need {
                    let (no, tok) = pending.pop_front().expect("length checked");
                    v.push(tok.parse::<f64>().map_err(|_| bad(no, format!("bad cost `{tok}`")))?);
                }
                c = Some(v);
            }
        }
        let m = m.expect("parsed");
        let block_struct = block_struct.expect("parsed");
        for (no, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('"') || t.starts_with('*') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(bad(no + 1, format!("expected 5 fields, got {}", toks.len())));
            }
            let int = |k: usize| -> Result<usize> {
                toks[k]
                    .parse()
                    .map_err(|_| bad(no + 1, format!("bad integer `{}`", toks[k])))
            };
            let e = Entry {
                mat: int(0)?,
                block: int(1)?,
                row: int(2)?,
                col: int(3)?,
                value: toks[4]
                    .parse()
                    .map_err(|_| bad(no + 1, format!("bad value `{}`", toks[4])))?,
            };
            if e.mat > m {
                return Err(bad(no + 1, format!("matrix index {} exceeds {m}", e.mat)));
            }
            if e.block == 0 || e.block > block_struct.len() {
                return Err(bad(no + 1, format!("block index {} out of range", e.block)));
            }
            let size = block_struct[e.block - 1].unsigned_abs() as usize;
            if e.row == 0 || e.col == 0 || e.row > size || e.col > size {
                return Err(bad(no + 1, format!("entry ({}, {}) outside block of size {size}", e.row, e.col)));
            }
            if block_struct[e.block - 1] < 0 && e.row != e.col {
                return Err(bad(no + 1, "off-diagonal entry in a diagonal block".into()));
            }
            let (row, col) = if e.row <= e.col { (e.row, e.col) } else { (e.col, e.row) };
            entries.push(Entry { row, col, ..e });
        }
        Ok(Self {
            block_struct,
            c: c.expect("parsed"),
            entries,
        })
    }
}

/// 0-based position of `Λ_{ij}` (`i ≤ j`) in the row-major upper triangle.
/// Rows before `i` hold `p + (p−1) + … + (p−i+1) = i·p − i(i−1)/2` entries.
fn var_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < p);
    i * p - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Build the SDPA form of the relaxation.
pub fn export(prob: &LiftedProblem) -> SdpaProblem {
    let sel = prob.sel();
    let p = prob.p();
    let (n, c) = (sel.n(), sel.c());
    let nv = p * (p + 1) / 2;
    let t_var = nv + 1; // 1-based
    let k = 2 * n;
    let schur = n * c + 1;
    let lp_rows = k * (k + 1) / 2 + 1;

    let mut cost = vec![0.0; nv + 1];
    for &j in sel.u().iter().chain(sel.v()) {
        cost[var_index(p, j, j)] = 0.5 * prob.gamma();
    }
    cost[nv] = 1.0;

    let mut entries = Vec::new();
    for i in 0..p {
        for j in i..p {
            entries.push(Entry {
                mat: var_index(p, i, j) + 1,
                block: 1,
                row: i + 1,
                col: j + 1,
                value: 1.0,
            });
        }
    }

    for q in 0..n * c {
        entries.push(Entry {
            mat: 0,
            block: 2,
            row: q + 1,
            col: q + 1,
            value: -1.0,
        });
    }
    for (i, &a) in sel.alpha().iter().enumerate() {
        for (kk, &v) in sel.v().iter().enumerate() {
            let q = i * c + kk;
            let (lo, hi) = if a <= v { (a, v) } else { (v, a) };
            entries.push(Entry {
                mat: var_index(p, lo, hi) + 1,
                block: 2,
                row: q + 1,
                col: schur,
                value: 1.0,
            });
            entries.push(Entry {
                mat: 0,
                block: 2,
                row: q + 1,
                col: schur,
                value: prob.y()[(i, kk)],
            });
        }
    }
    entries.push(Entry {
        mat: t_var,
        block: 2,
        row: schur,
        col: schur,
        value: 1.0,
    });

    let mut row = 0;
    for i in 0..k {
        for j in i..k {
            row += 1;
            entries.push(Entry {
                mat: var_index(p, i, j) + 1,
                block: 3,
                row,
                col: row,
                value: 1.0,
            });
        }
    }
    row += 1;
    let a0 = prob.a0();
    for i in 0..p {
        for j in i..p {
            let coef = if i == j { a0[(i, i)] } else { a0[(i, j)] + a0[(j, i)] };
            if coef != 0.0 {
                entries.push(Entry {
                    mat: var_index(p, i, j) + 1,
                    block: 3,
                    row,
                    col: row,
                    value: -coef,
                });
            }
        }
    }
    debug_assert_eq!(row, lp_rows);

    SdpaProblem {
        block_struct: vec![p as i64, schur as i64, -(lp_rows as i64)],
        c: cost,
        entries,
    }
}

/// Variable vector of the export for a given `Λ`, with `t` set to the
/// data-fit term so that the SDPA objective equals the lifted objective.
pub fn variables_for(prob: &LiftedProblem, lambda: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = prob.p();
    if lambda.nrows() != p || lambda.ncols() != p {
        return Err(mismatch("sdpa lifted matrix", p, lambda.nrows()));
    }
    let mut x = DVector::zeros(p * (p + 1) / 2 + 1);
    for i in 0..p {
        for j in i..p {
            x[var_index(p, i, j)] = 0.5 * (lambda[(i, j)] + lambda[(j, i)]);
        }
    }
    let sel = prob.sel();
    let mut fit = 0.0;
    for (i, &a) in sel.alpha().iter().enumerate() {
        for (k, &v) in sel.v().iter().enumerate() {
            let r = 0.5 * (lambda[(a, v)] + lambda[(v, a)]) - prob.y()[(i, k)];
            fit += r * r;
        }
    }
    x[p * (p + 1) / 2] = fit;
    Ok(x)
}

/// Lifted matrix encoded by an SDPA variable vector.
pub fn lambda_from_variables(p: usize, x: &[f64]) -> Result<DMatrix<f64>> {
    let nv = p * (p + 1) / 2;
    if x.len() != nv + 1 {
        return Err(mismatch("sdpa variable vector", nv + 1, x.len()));
    }
    let mut l = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = x[var_index(p, i, j)];
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    Ok(l)
}
