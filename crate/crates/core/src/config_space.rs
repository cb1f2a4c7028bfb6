//! Mass-metric linear algebra on the barycenter-free configuration space.
//!
//! Ambient vectors are laid out particle by particle: `(q_1, ..., q_n)` with
//! each `q_i ∈ ℝ^d`. A [`Chart`] is an `nd × N` matrix `φ` with
//! `φᵀ M φ = I` whose columns have zero barycenter, so chart coordinates turn
//! the mass inner product into the Euclidean one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COLLISION_FLOOR: f64 = 1e-13;
const ORTHO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSystem {
    masses: Vec<f64>,
    d: usize,
    alpha: f64,
    collision_floor: f64,
}

impl MassSystem {
    pub fn new(masses: Vec<f64>, d: usize, alpha: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::invalid("at least two particles are required"));
        }
        if d < 2 {
            return Err(Error::invalid("space dimension d must be at least 2"));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::invalid(format!("mass {m} is not positive")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(format!("alpha = {alpha} is outside (0, 2)")));
        }
        Ok(Self {
            masses,
            d,
            alpha,
            collision_floor: DEFAULT_COLLISION_FLOOR,
        })
    }

    pub fn with_collision_floor(mut self, floor: f64) -> Self {
        self.collision_floor = floor;
        self
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn collision_floor(&self) -> f64 {
        self.collision_floor
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Ambient dimension `nd`.
    pub fn ambient_dim(&self) -> usize {
        self.n() * self.d
    }

    /// Dimension `N = d(n-1)` of the barycenter-free space.
    pub fn dim(&self) -> usize {
        self.d * (self.n() - 1)
    }

    /// Diagonal of `M`, one entry per ambient coordinate.
    pub fn mass_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.ambient_dim(), |i, _| self.masses[i / self.d])
    }

    /// Mass-weighted barycenter `Σ m_i q_i / Σ m_i`.
    pub fn barycenter(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut b = DVector::zeros(self.d);
        for (i, m) in self.masses.iter().enumerate() {
            for a in 0..self.d {
                b[a] += m * q[i * self.d + a];
            }
        }
        b / self.total_mass()
    }
}

/// Returns `⟨Mu, v⟩`.
pub fn mass_inner(sys: &MassSystem, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let nd = sys.ambient_dim();
    if u.len() != nd || v.len() != nd {
        return Err(Error::invalid(format!(
            "expected ambient vectors of length {nd}, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok((0..nd).map(|i| sys.masses[i / sys.d] * u[i] * v[i]).sum())
}

/// Chart matrix of `u ⊗ w`, i.e. `v ↦ ⟨w, v⟩ u`.
pub fn tensor_m(u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    u * w.transpose()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    sys: MassSystem,
    basis: DMatrix<f64>,
}

/// Mass Gram–Schmidt on the relative-position seeds
/// `e_{k,a} - (m_k / Σm) Σ_i e_{i,a}`, particle-major order.
pub fn build_chart(sys: &MassSystem) -> Chart {
    let (n, d) = (sys.n(), sys.d());
    let nd = sys.ambient_dim();
    let mdiag = sys.mass_diagonal();
    let mtot = sys.total_mass();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(sys.dim());
    for k in 0..n - 1 {
        for a in 0..d {
            let mut v = DVector::zeros(nd);
            let shift = sys.masses[k] / mtot;
            for i in 0..n {
                v[i * d + a] = -shift;
            }
            v[k * d + a] += 1.0;
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.component_mul(&mdiag).dot(&v);
                    v -= c * proj;
                }
            }
            let norm = v.component_mul(&mdiag).dot(&v).sqrt();
            cols.push(v / norm);
        }
    }
    Chart {
        sys: sys.clone(),
        basis: DMatrix::from_columns(&cols),
    }
}

impl Chart {
    pub fn system(&self) -> &MassSystem {
        &self.sys
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Rebuilds a chart from stored basis data, checking the invariants.
    pub fn from_basis(sys: &MassSystem, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != sys.ambient_dim() || basis.ncols() != sys.dim() {
            return Err(Error::invalid(format!(
                "chart basis must be {}x{}, got {}x{}",
                sys.ambient_dim(),
                sys.dim(),
                basis.nrows(),
                basis.ncols()
            )));
        }
        let chart = Chart {
            sys: sys.clone(),
            basis,
        };
        let defect = chart.orthonormality_defect();
        if defect > 1e-10 {
            return Err(Error::invalid(format!(
                "chart basis is not mass-orthonormal (defect {defect:e})"
            )));
        }
        Ok(chart)
    }

    /// `max |φᵀMφ - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let md = DMatrix::from_diagonal(&self.sys.mass_diagonal());
        let g = self.basis.transpose() * md * &self.basis;
        (g - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormality_defect() <= ORTHO_TOL
    }

    pub fn to_ambient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * x
    }

    /// Chart coordinates of the barycenter-free part of `q`.
    pub fn from_ambient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let nd = self.sys.ambient_dim();
        if q.len() != nd {
            return Err(Error::invalid(format!(
                "expected ambient vector of length {nd}, got {}",
                q.len()
            )));
        }
        let b = self.sys.barycenter(q);
        let d = self.sys.d();
        let centered = DVector::from_fn(nd, |i, _| q[i] - b[i % d]);
        let mq = centered.component_mul(&self.sys.mass_diagonal());
        Ok(self.basis.transpose() * mq)
    }

    /// Particle positions of chart vector `x`.
    pub fn positions(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let q = self.to_ambient(x);
        let d = self.sys.d();
        (0..self.sys.n())
            .map(|i| q.rows(i * d, d).into_owned())
            .collect()
    }

    /// Smallest mutual distance of the configuration `x`.
    pub fn min_distance(&self, x: &DVector<f64>) -> f64 {
        let pos = self.positions(x);
        let mut best = f64::INFINITY;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                best = best.min((&pos[i] - &pos[j]).norm());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_body_chart_columns_are_opposite_and_orthonormal() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2, 1.0).unwrap();
        let chart = build_chart(&sys);
        assert_eq!(chart.dim(), 2);
        for c in 0..2 {
            let col = chart.basis().column(c);
            for a in 0..2 {
                assert!((col[a] + col[2 + a]).abs() < 1e-15);
            }
        }
        assert!(chart.is_orthonormal());
    }

    #[test]
    fn three_body_chart_has_four_columns() {
        let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
        let chart = build_chart(&sys);
        assert_eq!(chart.basis().shape(), (6, 4));
        assert!(chart.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn mass_inner_of_unit_vector_is_the_mass() {
        let sys = MassSystem::new(vec![1.0, 2.5, 0.5], 2, 1.0).unwrap();
        let mut e = DVector::zeros(6);
        e[3] = 1.0;
        assert_eq!(mass_inner(&sys, &e, &e).unwrap(), 2.5);
        assert!(mass_inner(&sys, &e, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn rejects_invalid_systems() {
        assert!(MassSystem::new(vec![1.0], 2, 1.0).is_err());
        assert!(MassSystem::new(vec![1.0, 1.0], 1, 1.0).is_err());
        assert!(MassSystem::new(vec![1.0, -1.0], 2, 1.0).is_err());
        assert!(MassSystem::new(vec![1.0, 1.0], 2, 2.0).is_err());
        assert!(MassSystem::new(vec![1.0, 1.0], 2, 0.0).is_err());
    }

    #[test]
    fn ambient_round_trip() {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 3, 0.7).unwrap();
        let chart = build_chart(&sys);
        let x = DVector::from_fn(6, |i, _| (i as f64 * 0.37).sin());
        let back = chart.from_ambient(&chart.to_ambient(&x)).unwrap();
        assert!((back - x).norm() < 1e-13);
    }
}
