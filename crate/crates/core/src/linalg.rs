//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and matching eigenvectors of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// The standard symplectic matrix `[[0, -I], [I, 0]]` of size `2n`.
pub fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Applies `J` without forming it: `J(p, u) = (-u, p)`.
pub fn apply_j(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows() / 2;
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    out.rows_mut(0, n).copy_from(&(-z.rows(n, n)));
    out.rows_mut(n, n).copy_from(&z.rows(0, n));
    out
}

/// Thin orthonormal basis of the column span (assumes full column rank).
pub fn orthonormalize(f: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = f.clone().qr();
    let mut q = qr.q();
    // fix column signs so the construction is deterministic
    let r = qr.r();
    for k in 0..q.ncols() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Thin SVD `m = U diag(σ) Vᵀ` with `σ` ascending.
///
/// One-sided Jacobi. nalgebra's bidiagonal SVD returns inconsistent factors on
/// some rank-deficient inputs (the oblique spectral projectors of `H*` hit
/// this), and Jacobi also keeps small singular values to high relative
/// accuracy, which the transversality tests rely on.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _ in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[x].total_cmp(&norms[y]));
    let mut u = DMatrix::zeros(rows, cols);
    let mut vs = DMatrix::zeros(cols, cols);
    for (k, &i) in order.iter().enumerate() {
        if norms[i] > 0.0 {
            u.set_column(k, &(a.column(i) / norms[i]));
        }
        vs.set_column(k, &v.column(i));
    }
    Svd {
        u,
        sigma: order.iter().map(|&i| norms[i]).collect(),
        v: vs,
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).sigma.last().copied().unwrap_or(0.0)
}

pub fn singular_values_asc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    svd(m).sigma
}

pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NonConvergence("singular linear system".into()))
}

pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::invalid("matrix is not positive definite"))?;
    Ok(chol.inverse())
}

pub fn outer(u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    u * w.transpose()
}

/// Linear interpolation weights for `t` on a sorted grid: `(k, θ)` with
/// `t = (1-θ) grid[k] + θ grid[k+1]`. Caller guarantees `grid[0] <= t <= last`.
pub fn bracket(grid: &[f64], t: f64) -> (usize, f64) {
    let n = grid.len();
    if n < 2 {
        return (0, 0.0);
    }
    let k = match grid.binary_search_by(|g| g.total_cmp(&t)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let w = grid[k + 1] - grid[k];
    let theta = if w > 0.0 { (t - grid[k]) / w } else { 0.0 };
    (k, theta.clamp(0.0, 1.0))
}

/// Composite Simpson rule on a uniform or non-uniform grid (falls back to the
/// trapezoid rule on the last interval when the interval count is odd).
pub fn simpson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * (y[i] * (2.0 - h1 / h0) + y[i + 1] * hs * hs / (h0 * h1) + y[i + 2] * (2.0 - h0 / h1));
        i += 2;
    }
    if i + 1 < n {
        total += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    }
    total
}
