//! Coefficient matrices `P, Q, R̃` of the second variation along a McGehee
//! trajectory, their limits, the σ-shift, and the Hamiltonian matrices
//! `B(τ)`, `B*`, `H* = J B*`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config_space::Chart;
use crate::error::{Error, Result};
use crate::linalg::{bracket, inverse_spd, j_matrix, sym_eigen, sym_eigenvalues, symmetrize};
use crate::mcgehee::{trajectory_header, trajectory_row, Constants, TrajectoryData};
use crate::potential::{self, CentralConfiguration};

/// Coefficients at `τ = ∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitBlocks {
    pub p0: DMatrix<f64>,
    pub q0: DMatrix<f64>,
    pub r_tilde0: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPath {
    pub grid: Vec<f64>,
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r_tilde: Vec<DMatrix<f64>>,
    /// Shift already included in `r_tilde` and in the limit block.
    pub sigma: f64,
    pub limit: LimitBlocks,
}

impl CoefficientPath {
    /// Builds a path from arbitrary samples (used by the 1-D oracles as well).
    pub fn from_samples(
        grid: Vec<f64>,
        p: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r_tilde: Vec<DMatrix<f64>>,
        limit: LimitBlocks,
    ) -> Result<Self> {
        let n = grid.len();
        if n < 2 || p.len() != n || q.len() != n || r_tilde.len() != n {
            return Err(Error::invalid("coefficient samples do not match the grid"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("coefficient grid must be strictly increasing"));
        }
        let dim = limit.p0.nrows();
        for m in p.iter().chain(&q).chain(&r_tilde).chain([&limit.p0, &limit.q0, &limit.r_tilde0]) {
            if m.shape() != (dim, dim) {
                return Err(Error::invalid("coefficient blocks have inconsistent shapes"));
            }
        }
        Ok(Self {
            grid,
            p: p.iter().map(symmetrize).collect(),
            q,
            r_tilde: r_tilde.iter().map(symmetrize).collect(),
            sigma: 0.0,
            limit: LimitBlocks {
                p0: symmetrize(&limit.p0),
                q0: limit.q0,
                r_tilde0: symmetrize(&limit.r_tilde0),
            },
        })
    }

    /// Coefficients equal to the limit on the whole grid.
    pub fn constant(limit: LimitBlocks, grid: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        Self::from_samples(
            grid,
            vec![limit.p0.clone(); n],
            vec![limit.q0.clone(); n],
            vec![limit.r_tilde0.clone(); n],
            limit,
        )
    }

    pub fn dim(&self) -> usize {
        self.limit.p0.nrows()
    }

    pub fn tau_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `(P, Q, R̃)` at `τ`: linear interpolation on the grid, the first sample
    /// before it and exactly the limit after it.
    pub fn at(&self, tau: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        if tau >= self.tau_end() {
            return (
                self.limit.p0.clone(),
                self.limit.q0.clone(),
                self.limit.r_tilde0.clone(),
            );
        }
        if tau <= self.grid[0] {
            return (self.p[0].clone(), self.q[0].clone(), self.r_tilde[0].clone());
        }
        let (k, th) = bracket(&self.grid, tau);
        let lerp = |v: &[DMatrix<f64>]| &v[k] * (1.0 - th) + &v[k + 1] * th;
        (lerp(&self.p), lerp(&self.q), lerp(&self.r_tilde))
    }

    /// The family member `R̃ ↦ R̃ + dσ I`.
    pub fn shifted(&self, dsigma: f64) -> Self {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n) * dsigma;
        let mut out = self.clone();
        for r in &mut out.r_tilde {
            *r += &id;
        }
        out.limit.r_tilde0 += &id;
        out.sigma += dsigma;
        out
    }

    /// `max(|P-P₀|, |Q-Q₀|, |R̃-R̃₀|)` (max-entry norms) at sample `k`.
    pub fn distance_to_limit(&self, k: usize) -> f64 {
        (&self.p[k] - &self.limit.p0)
            .amax()
            .max((&self.q[k] - &self.limit.q0).amax())
            .max((&self.r_tilde[k] - &self.limit.r_tilde0).amax())
    }
}

/// `D²W(y)` for `W(y) = |y|^{2+α}U(y) - |y|²U(s₀)`:
/// `(α+2)U|y|^{α-2}(α yyᵀ + |y|² I) + (α+2)|y|^α (y∇Uᵀ + ∇U yᵀ) + |y|^{α+2} D²U - 2U(s₀) I`.
pub fn d2w(chart: &Chart, y: &DVector<f64>, u_s0: f64) -> Result<DMatrix<f64>> {
    let alpha = chart.system().alpha();
    let n = y.len();
    let (u, g, h) = potential::derivatives(chart, y, true)?;
    let r = y.norm();
    let id = DMatrix::<f64>::identity(n, n);
    let m = (y * y.transpose() * alpha + &id * (r * r)) * ((alpha + 2.0) * u * r.powf(alpha - 2.0))
        + (y * g.transpose() + &g * y.transpose()) * ((alpha + 2.0) * r.powf(alpha))
        + h * r.powf(alpha + 2.0)
        - &id * (2.0 * u_s0);
    Ok(symmetrize(&m))
}

pub fn limit_blocks(cc: &CentralConfiguration, constants: &Constants, sigma: f64) -> LimitBlocks {
    let n = cc.dim();
    let c = constants.c_alpha;
    let db = constants.delta_bar;
    let id = DMatrix::<f64>::identity(n, n);
    let ss = &cc.s0 * cc.s0.transpose();
    let r0 = &ss * (c * db * db) + &id * constants.r1();
    LimitBlocks {
        p0: &ss * c + &id,
        q0: (&id - &ss) * (c * db),
        r_tilde0: symmetrize(&(r0 + &cc.d2u_tilde + &id * sigma)),
    }
}

/// `R₀ = c_α δ̄² s₀⊗s₀ + (2-α)²/8 U(s₀) I`.
pub fn r0_matrix(cc: &CentralConfiguration, constants: &Constants) -> DMatrix<f64> {
    let n = cc.dim();
    let ss = &cc.s0 * cc.s0.transpose();
    ss * (constants.c_alpha * constants.delta_bar.powi(2))
        + DMatrix::<f64>::identity(n, n) * constants.r1()
}

/// Assembles `P, Q, R̃ + σI` at every sample of `traj`.
pub fn assemble_coefficients(
    chart: &Chart,
    cc: &CentralConfiguration,
    constants: &Constants,
    traj: &TrajectoryData,
    sigma: f64,
) -> Result<CoefficientPath> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    traj.validate()?;
    if traj.dim() != cc.dim() {
        return Err(Error::invalid("trajectory and central configuration dimensions differ"));
    }
    let n = cc.dim();
    let c = constants.c_alpha;
    let beta = constants.beta;
    let u0 = constants.u_s0;
    let id = DMatrix::<f64>::identity(n, n);
    let m = traj.len();
    let mut p = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut rt = Vec::with_capacity(m);
    for k in 0..m {
        let s = &traj.s[k];
        let sp = &traj.s_prime[k];
        let a = traj.rho_prime[k] / traj.rho[k];
        let hb = traj.energy_h * traj.rho[k].powf(beta - 2.0);
        let ss = s * s.transpose();
        p.push(&ss * c + &id);
        q.push((&id - &ss) * (c * a) + s * sp.transpose() * c);
        let r = &ss * (c * a * a + beta * (beta - 2.0) * hb)
            + &id * (2.0 * u0 - c * a * a + beta * hb)
            + sp * sp.transpose() * c
            - (s * sp.transpose() + sp * s.transpose()) * (c * a);
        // D²W is homogeneous of degree zero in y, so it is evaluated at s
        let w = d2w(chart, s, u0)?;
        rt.push(symmetrize(&(r + w + &id * sigma)));
    }
    let mut path = CoefficientPath::from_samples(
        traj.grid.clone(),
        p,
        q,
        rt,
        limit_blocks(cc, constants, sigma),
    )?;
    path.sigma = sigma;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSpectra {
    pub p0: Vec<f64>,
    pub r0: Vec<f64>,
    pub r_tilde0: Vec<f64>,
    /// `(1, 1 + c_α)`.
    pub p0_expected: (f64, f64),
    /// `(r¹₀, r²₀)`.
    pub r0_expected: (f64, f64),
    /// `|P₀ s₀ - (1+c_α) s₀|` and `|R₀ s₀ - r²₀ s₀|`.
    pub s0_residuals: (f64, f64),
    #[serde(skip)]
    pub p0_vectors: DMatrix<f64>,
    #[serde(skip)]
    pub r0_vectors: DMatrix<f64>,
}

pub fn limit_spectra(cc: &CentralConfiguration, constants: &Constants) -> LimitSpectra {
    let lb = limit_blocks(cc, constants, 0.0);
    let r0 = r0_matrix(cc, constants);
    let (pe, pv) = sym_eigen(&lb.p0);
    let (re, rv) = sym_eigen(&r0);
    let c = constants.c_alpha;
    LimitSpectra {
        p0: pe,
        r0: re,
        r_tilde0: sym_eigenvalues(&lb.r_tilde0),
        p0_expected: (1.0, 1.0 + c),
        r0_expected: (constants.r1(), constants.r2()),
        s0_residuals: (
            (&lb.p0 * &cc.s0 - &cc.s0 * (1.0 + c)).norm(),
            (&r0 * &cc.s0 - &cc.s0 * constants.r2()).norm(),
        ),
        p0_vectors: pv,
        r0_vectors: rv,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianPath {
    pub grid: Vec<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub b_star: DMatrix<f64>,
    pub h_star: DMatrix<f64>,
    pub sigma: f64,
}

/// `B = [[P⁻¹, -P⁻¹Q], [-QᵀP⁻¹, QᵀP⁻¹Q - R̃]]`.
pub fn b_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>, r_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let pinv = inverse_spd(p).map_err(|_| Error::invalid("P is numerically singular"))?;
    let pq = &pinv * q;
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(&pinv);
    b.view_mut((0, n), (n, n)).copy_from(&(-&pq));
    b.view_mut((n, 0), (n, n)).copy_from(&(-pq.transpose()));
    b.view_mut((n, n), (n, n))
        .copy_from(&(q.transpose() * &pq - r_tilde));
    Ok(symmetrize(&b))
}

pub fn assemble_hamiltonian(coeff: &CoefficientPath) -> Result<HamiltonianPath> {
    let b = (0..coeff.grid.len())
        .map(|k| b_matrix(&coeff.p[k], &coeff.q[k], &coeff.r_tilde[k]))
        .collect::<Result<Vec<_>>>()?;
    let b_star = b_matrix(&coeff.limit.p0, &coeff.limit.q0, &coeff.limit.r_tilde0)?;
    let h_star = j_matrix(coeff.dim()) * &b_star;
    Ok(HamiltonianPath {
        grid: coeff.grid.clone(),
        b,
        b_star,
        h_star,
        sigma: coeff.sigma,
    })
}

impl HamiltonianPath {
    pub fn dim(&self) -> usize {
        self.b_star.nrows() / 2
    }

    pub fn tau_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn b_at(&self, tau: f64) -> DMatrix<f64> {
        if tau >= self.tau_end() {
            return self.b_star.clone();
        }
        if tau <= self.grid[0] {
            return self.b[0].clone();
        }
        let (k, th) = bracket(&self.grid, tau);
        &self.b[k] * (1.0 - th) + &self.b[k + 1] * th
    }

    pub fn h_at(&self, tau: f64) -> DMatrix<f64> {
        j_matrix(self.dim()) * self.b_at(tau)
    }

    /// The member of the family with `R̃ + dσ I`, i.e. `B - dσ diag(0, I)`.
    pub fn shifted(&self, dsigma: f64) -> Self {
        let n = self.dim();
        let shift = |m: &DMatrix<f64>| {
            let mut m = m.clone();
            for i in 0..n {
                m[(n + i, n + i)] -= dsigma;
            }
            m
        };
        let b_star = shift(&self.b_star);
        HamiltonianPath {
            grid: self.grid.clone(),
            b: self.b.iter().map(shift).collect(),
            h_star: j_matrix(n) * &b_star,
            b_star,
            sigma: self.sigma + dsigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sigma0 {
    /// Smallest eigenvalue of `R̃ - QᵀP⁻¹Q` over the grid and the limit.
    pub min_schur: f64,
    /// Smallest non-negative shift making every Schur complement semidefinite.
    pub sigma_min: f64,
    pub sigma0: f64,
}

fn schur_min(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let pinv = inverse_spd(p)?;
    Ok(sym_eigenvalues(&(r - q.transpose() * pinv * q))[0])
}

/// Shift `σ₀` with `D_{σ₀}(τ) ≻ 0` everywhere: the minimal shift plus a
/// margin of 10% (at least 0.1).
pub fn compute_sigma0(coeff: &CoefficientPath) -> Result<Sigma0> {
    let mut min_schur = schur_min(&coeff.limit.p0, &coeff.limit.q0, &coeff.limit.r_tilde0)?;
    for k in 0..coeff.grid.len() {
        min_schur = min_schur.min(schur_min(&coeff.p[k], &coeff.q[k], &coeff.r_tilde[k])?);
    }
    let sigma_min = (-min_schur).max(0.0);
    Ok(Sigma0 {
        min_schur,
        sigma_min,
        sigma0: sigma_min + 0.1 * sigma_min.max(1.0),
    })
}

/// Writes the coefficient path as CSV: the trajectory columns (when given)
/// followed by `P_i_j`, `Q_i_j`, `Rt_i_j` in row-major order.
pub fn write_coefficients_csv(
    coeff: &CoefficientPath,
    traj: Option<&TrajectoryData>,
    path: &Path,
) -> Result<()> {
    if let Some(t) = traj {
        if t.grid != coeff.grid {
            return Err(Error::invalid("trajectory grid differs from the coefficient grid"));
        }
    }
    let n = coeff.dim();
    let mut header = match traj {
        Some(t) => trajectory_header(t.dim()),
        None => vec!["tau".to_string()],
    };
    for name in ["P", "Q", "Rt"] {
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("{name}_{i}_{j}"));
            }
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for k in 0..coeff.grid.len() {
        let mut row = match traj {
            Some(t) => trajectory_row(t, k),
            None => vec![format!("{:e}", coeff.grid[k])],
        };
        for m in [&coeff.p[k], &coeff.q[k], &coeff.r_tilde[k]] {
            for i in 0..n {
                for j in 0..n {
                    row.push(format!("{:e}", m[(i, j)]));
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
