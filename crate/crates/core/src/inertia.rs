//! Inertia (Sylvester counts) of symmetric matrices by symmetric-indefinite
//! factorization: dense Bunch–Kaufman, and block LDLᵀ for block-tridiagonal
//! matrices.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{solve, sym_eigenvalues};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    fn add(&mut self, other: Inertia) {
        self.positive += other.positive;
        self.negative += other.negative;
        self.zero += other.zero;
    }

    fn count(values: &[f64], tol: f64) -> Self {
        let mut out = Inertia::default();
        for &v in values {
            if v > tol {
                out.positive += 1;
            } else if v < -tol {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }
}

const BK_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17) / 8

fn swap_sym(a: &mut DMatrix<f64>, i: usize, j: usize) {
    if i != j {
        a.swap_rows(i, j);
        a.swap_columns(i, j);
    }
}

/// Inertia of a dense symmetric matrix. Pivots with magnitude below
/// `rel_tol · max|a|` count as zero.
pub fn bunch_kaufman_inertia(a: &DMatrix<f64>, rel_tol: f64) -> Result<Inertia> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("inertia needs a square matrix"));
    }
    let mut w = (a + a.transpose()) * 0.5;
    let tol = rel_tol * w.amax().max(f64::MIN_POSITIVE);
    let mut out = Inertia::default();
    let mut k = 0;
    while k < n {
        let (mut r, mut lambda) = (k, 0.0f64);
        for i in k + 1..n {
            if w[(i, k)].abs() > lambda {
                lambda = w[(i, k)].abs();
                r = i;
            }
        }
        let akk = w[(k, k)].abs();
        if akk.max(lambda) <= tol {
            out.zero += 1;
            k += 1;
            continue;
        }
        let two_by_two = if akk >= BK_ALPHA * lambda {
            false
        } else {
            let mut sigma = 0.0f64;
            for j in k..n {
                if j != r {
                    sigma = sigma.max(w[(j, r)].abs());
                }
            }
            if akk * sigma >= BK_ALPHA * lambda * lambda {
                false
            } else if w[(r, r)].abs() >= BK_ALPHA * sigma {
                swap_sym(&mut w, k, r);
                false
            } else {
                swap_sym(&mut w, k + 1, r);
                true
            }
        };
        if !two_by_two {
            let d = w[(k, k)];
            out.add(Inertia::count(&[d], tol));
            if d.abs() > tol {
                for i in k + 1..n {
                    let f = w[(i, k)] / d;
                    if f != 0.0 {
                        for j in k + 1..n {
                            w[(i, j)] -= f * w[(k, j)];
                        }
                    }
                }
            }
            k += 1;
        } else {
            let (p, q, s) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
            let block = DMatrix::from_row_slice(2, 2, &[p, q, q, s]);
            out.add(Inertia::count(&sym_eigenvalues(&block), tol));
            let det = p * s - q * q;
            // D⁻¹ = [[s, -q], [-q, p]] / det
            for i in k + 2..n {
                let (x, y) = (w[(i, k)], w[(i, k + 1)]);
                let c0 = (s * x - q * y) / det;
                let c1 = (p * y - q * x) / det;
                for j in k + 2..n {
                    w[(i, j)] -= c0 * w[(k, j)] + c1 * w[(k + 1, j)];
                }
            }
            k += 2;
        }
    }
    Ok(out)
}

/// Symmetric block-tridiagonal matrix: `diag[k]` on the diagonal and
/// `off[k]` in position `(k, k+1)` (its transpose in `(k+1, k)`).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub off: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn dim(&self) -> usize {
        self.diag.len() * self.block_size()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block_size();
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (k, d) in self.diag.iter().enumerate() {
            m.view_mut((k * b, k * b), (b, b)).copy_from(d);
        }
        for (k, e) in self.off.iter().enumerate() {
            m.view_mut((k * b, (k + 1) * b), (b, b)).copy_from(e);
            m.view_mut(((k + 1) * b, k * b), (b, b)).copy_from(&e.transpose());
        }
        m
    }

    /// `self + c · other` (same sparsity).
    pub fn add_scaled(&self, other: &BlockTridiagonal, c: f64) -> BlockTridiagonal {
        BlockTridiagonal {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + b * c).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + b * c).collect(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.off)
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InertiaReport {
    pub inertia: Inertia,
    /// Shift added to the diagonal after a breakdown of the block pivots.
    pub perturbation: f64,
}

fn block_ldl(m: &BlockTridiagonal, shift: f64, tol: f64) -> Option<Inertia> {
    let mut out = Inertia::default();
    let mut prev: Option<DMatrix<f64>> = None;
    for (k, d) in m.diag.iter().enumerate() {
        let mut s = d.clone();
        for i in 0..s.nrows() {
            s[(i, i)] += shift;
        }
        if let Some(p) = &prev {
            let e = &m.off[k - 1];
            let x = solve(p, e).ok()?;
            s -= e.transpose() * x;
        }
        let s = (&s + s.transpose()) * 0.5;
        let ev = sym_eigenvalues(&s);
        if ev.iter().any(|v| v.abs() <= tol) {
            return None;
        }
        out.add(Inertia::count(&ev, 0.0));
        prev = Some(s);
    }
    Some(out)
}

/// Inertia via the block recursion `S_k = D_k - E_{k-1}ᵀ S_{k-1}⁻¹ E_{k-1}`
/// (Haynsworth additivity). A near-singular pivot block triggers a retry with
/// a tiny diagonal shift, which is reported.
pub fn block_tridiagonal_inertia(m: &BlockTridiagonal) -> Result<InertiaReport> {
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    if let Some(inertia) = block_ldl(m, 0.0, tol) {
        return Ok(InertiaReport {
            inertia,
            perturbation: 0.0,
        });
    }
    for p in [1e-11, -1e-11, 1e-9, -1e-9] {
        if let Some(inertia) = block_ldl(m, p * scale, tol) {
            return Ok(InertiaReport {
                inertia,
                perturbation: p * scale,
            });
        }
    }
    Err(Error::NonConvergence(
        "block factorization broke down even after perturbation".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_counts() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, 0.0, 3.0, 1.0]));
        let i = bunch_kaufman_inertia(&a, 1e-12).unwrap();
        assert_eq!((i.positive, i.negative, i.zero), (2, 1, 1));
    }

    #[test]
    fn zero_diagonal_needs_two_by_two_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let i = bunch_kaufman_inertia(&a, 1e-12).unwrap();
        assert_eq!((i.positive, i.negative), (1, 1));
    }

    #[test]
    fn block_matches_dense() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, -1.0]);
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.7]);
        let m = BlockTridiagonal {
            diag: vec![d.clone(), d.clone(), d],
            off: vec![e.clone(), e],
        };
        let dense = bunch_kaufman_inertia(&m.to_dense(), 1e-12).unwrap();
        let block = block_tridiagonal_inertia(&m).unwrap();
        assert_eq!(dense, block.inertia);
    }
}
