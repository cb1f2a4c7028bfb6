#![allow(dead_code)]

use collision_index::symplectic::LagrangianFrame;
use collision_index::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
    (&m + m.transpose()) * 0.5
}

/// Quadratic symmetric path `A(t) = A₀ + t A₁ + t² A₂`.
#[derive(Clone, Debug)]
pub struct ExpPath {
    pub a: [DMatrix<f64>; 3],
}

impl ExpPath {
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        ExpPath {
            a: [
                random_symmetric(rng, n, 3.0),
                random_symmetric(rng, n, 6.0),
                random_symmetric(rng, n, 3.0),
            ],
        }
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        &self.a[0] + &self.a[1] * t + &self.a[2] * (t * t)
    }

    /// Frame of the Lagrangian with unitary `exp(iA(t))`.
    pub fn frame(&self, t: f64) -> Result<LagrangianFrame> {
        let e = self.at(t).symmetric_eigen();
        let v = &e.eigenvectors;
        let c = DMatrix::from_diagonal(&e.eigenvalues.map(f64::cos));
        let s = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sin));
        let x = v * c * v.transpose();
        let y = v * s * v.transpose();
        let n = x.nrows();
        let mut f = DMatrix::zeros(2 * n, n);
        f.rows_mut(0, n).copy_from(&x);
        f.rows_mut(n, n).copy_from(&y);
        LagrangianFrame::new(f)
    }

    fn eigenvalues(&self, t: f64) -> DVector<f64> {
        self.at(t).symmetric_eigenvalues()
    }

    /// `μ(L₀, ℓ)` in closed form: `ℓ(t) ∩ L₀` is spanned by the eigenvectors
    /// of `A(t)` whose eigenvalue is a multiple of `π`, and every such
    /// eigenvalue moving up counts `+1`. Sorted eigenvalues are continuous,
    /// so the count is a difference of floors.
    pub fn oracle(&self, t0: f64, t1: f64) -> i64 {
        let f = |t: f64| -> i64 {
            self.eigenvalues(t)
                .iter()
                .map(|d| (d / PI).floor() as i64)
                .sum()
        };
        f(t1) - f(t0)
    }

    /// Distance of any eigenvalue at `t` from the lattice `πℤ`.
    pub fn margin(&self, t: f64) -> f64 {
        self.eigenvalues(t)
            .iter()
            .map(|d| {
                let r = d.rem_euclid(PI);
                r.min(PI - r)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Random symplectic matrix: a product of a shear `[[I, 0], [C, I]]`, a
/// block `diag(G, G⁻ᵀ)` and a shear `[[I, D], [0, I]]`.
pub fn random_symplectic(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let c = random_symmetric(rng, n, 1.0);
    let d = random_symmetric(rng, n, 1.0);
    let g = DMatrix::<f64>::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.4..0.4));
    let g_inv_t = g.clone().try_inverse().unwrap().transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let mut lower = DMatrix::<f64>::identity(2 * n, 2 * n);
    lower.view_mut((n, 0), (n, n)).copy_from(&c);
    let mut upper = DMatrix::<f64>::identity(2 * n, 2 * n);
    upper.view_mut((0, n), (n, n)).copy_from(&d);
    let mut diag = DMatrix::<f64>::zeros(2 * n, 2 * n);
    diag.view_mut((0, 0), (n, n)).copy_from(&g);
    diag.view_mut((n, n), (n, n)).copy_from(&g_inv_t);
    let _ = id;
    lower * diag * upper
}
