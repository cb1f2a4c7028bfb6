//! The potential `U(q) = Σ_{i<j} m_i m_j / |q_i - q_j|^α`, central
//! configurations and the [BS] condition.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config_space::{Chart, MassSystem};
use crate::error::{Error, Result};
use crate::linalg::{svd, sym_eigen, symmetrize};

/// Tolerance on the central configuration residual.
pub const CC_TOL: f64 = 1e-10;
/// Width of the degenerate band around `bs_margin = 0`.
pub const BS_TOL: f64 = 1e-9;
const KERNEL_TOL: f64 = 1e-7;

struct PairIter<'a> {
    pos: Vec<DVector<f64>>,
    masses: &'a [f64],
}

fn pairs<'a>(chart: &'a Chart, x: &DVector<f64>) -> Result<PairIter<'a>> {
    let sys = chart.system();
    let pos = chart.positions(x);
    let floor = sys.collision_floor();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let r = (&pos[i] - &pos[j]).norm();
            if !(r >= floor) {
                return Err(Error::Collision { distance: r, floor });
            }
        }
    }
    Ok(PairIter {
        pos,
        masses: sys.masses(),
    })
}

pub fn value(chart: &Chart, x: &DVector<f64>) -> Result<f64> {
    let p = pairs(chart, x)?;
    let alpha = chart.system().alpha();
    let mut u = 0.0;
    for i in 0..p.pos.len() {
        for j in i + 1..p.pos.len() {
            let r = (&p.pos[i] - &p.pos[j]).norm();
            u += p.masses[i] * p.masses[j] * r.powf(-alpha);
        }
    }
    Ok(u)
}

/// Chart gradient `φᵀ ∇U`.
pub fn grad(chart: &Chart, x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(derivatives(chart, x, false)?.1)
}

/// Chart Hessian `φᵀ D²U φ`.
pub fn hess(chart: &Chart, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(derivatives(chart, x, true)?.2)
}

/// `(U, ∇U, D²U)` in chart coordinates. The Hessian is zero-sized when
/// `with_hessian` is false.
pub fn derivatives(
    chart: &Chart,
    x: &DVector<f64>,
    with_hessian: bool,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let p = pairs(chart, x)?;
    let sys = chart.system();
    let (n, d, alpha) = (sys.n(), sys.d(), sys.alpha());
    let nd = n * d;
    let mut u = 0.0;
    let mut g = DVector::zeros(nd);
    let mut h = if with_hessian {
        DMatrix::zeros(nd, nd)
    } else {
        DMatrix::zeros(0, 0)
    };
    for i in 0..n {
        for j in i + 1..n {
            let diff = &p.pos[i] - &p.pos[j];
            let r2 = diff.norm_squared();
            let r = r2.sqrt();
            let c = p.masses[i] * p.masses[j];
            let ra = r.powf(-alpha);
            u += c * ra;
            let gcoef = -alpha * c * ra / r2;
            for a in 0..d {
                g[i * d + a] += gcoef * diff[a];
                g[j * d + a] -= gcoef * diff[a];
            }
            if with_hessian {
                // D²f = -α c r^{-α-2} (I - (α+2) d dᵀ / r²)
                for a in 0..d {
                    for b in 0..d {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let blk = gcoef * (delta - (alpha + 2.0) * diff[a] * diff[b] / r2);
                        h[(i * d + a, i * d + b)] += blk;
                        h[(j * d + a, j * d + b)] += blk;
                        h[(i * d + a, j * d + b)] -= blk;
                        h[(j * d + a, i * d + b)] -= blk;
                    }
                }
            }
        }
    }
    let phi = chart.basis();
    let gc = phi.transpose() * g;
    let hc = if with_hessian {
        symmetrize(&(phi.transpose() * h * phi))
    } else {
        h
    };
    Ok((u, gc, hc))
}

/// `Ũ(x) = |x|^α U(x)`, the restriction of `U` to the ellipsoid extended
/// homogeneously of degree zero.
pub fn u_tilde(chart: &Chart, x: &DVector<f64>) -> Result<f64> {
    Ok(x.norm().powf(chart.system().alpha()) * value(chart, x)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralConfiguration {
    pub s0: DVector<f64>,
    pub residual: f64,
    pub u_value: f64,
    pub mu1: f64,
    pub bs_margin: f64,
    pub alpha: f64,
    /// Number of eigenvalues of `D²Ũ(s₀)` within the kernel tolerance.
    pub kernel_dim: usize,
    pub d2u: DMatrix<f64>,
    pub d2u_tilde: DMatrix<f64>,
}

impl CentralConfiguration {
    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    /// `(2-α)²/8 · U(s₀)`, the smallest eigenvalue of `R₀`.
    pub fn r1(&self) -> f64 {
        (2.0 - self.alpha).powi(2) / 8.0 * self.u_value
    }
}

/// Residual `|∇U(s) + αU(s) s|` on the unit sphere.
pub fn cc_residual(chart: &Chart, s: &DVector<f64>) -> Result<f64> {
    let (u, g, _) = derivatives(chart, s, false)?;
    Ok((g + s * (chart.system().alpha() * u)).norm())
}

/// Newton iteration on the Lagrange system `∇U(s) + λ s = 0`, `|s|² = 1`,
/// solved in the least-squares sense so that symmetry zero modes do not
/// stall it; projected gradient steps on `½|F|²` when Newton makes no
/// progress.
pub fn find_central_configuration(
    chart: &Chart,
    guess: &DVector<f64>,
) -> Result<CentralConfiguration> {
    let n = chart.dim();
    if guess.len() != n {
        return Err(Error::invalid(format!(
            "guess has length {}, chart dimension is {n}",
            guess.len()
        )));
    }
    let norm = guess.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("guess must be a nonzero finite vector"));
    }
    let alpha = chart.system().alpha();
    let mut s = guess / norm;
    let mut res = cc_residual(chart, &s)?;
    let mut stalled = 0;
    for _ in 0..500 {
        if res < 1e-14 {
            break;
        }
        let (u, g, h) = derivatives(chart, &s, true)?;
        let lambda = alpha * u;
        let f = &g + &s * lambda;
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n))
            .copy_from(&(&h + DMatrix::identity(n, n) * lambda));
        jac.view_mut((0, n), (n, 1)).copy_from(&s);
        jac.view_mut((n, 0), (1, n)).copy_from(&s.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-&f));
        // least-squares step through the pseudo-inverse
        let dec = svd(&jac);
        let smax = dec.sigma.last().copied().unwrap_or(0.0);
        let utb = dec.u.transpose() * &rhs;
        let mut coef = DVector::zeros(n + 1);
        for k in 0..=n {
            if dec.sigma[k] > 1e-11 * smax {
                coef[k] = utb[k] / dec.sigma[k];
            }
        }
        let step = &dec.v * coef;
        let dx = step.rows(0, n).into_owned();

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..40 {
            let cand = (&s + &dx * t).normalize();
            if let Ok(r) = cc_residual(chart, &cand) {
                if r < res * (1.0 - 1e-4 * t) || r < 1e-14 {
                    accepted = Some((cand, r));
                    break;
                }
            }
            t *= 0.5;
        }
        if accepted.is_none() {
            // projected gradient of ½|F|² with backtracking
            let grad_merit = (&h + DMatrix::identity(n, n) * lambda).transpose() * &f;
            let tangent = &grad_merit - &s * s.dot(&grad_merit);
            let gn = tangent.norm();
            if gn > 0.0 {
                let mut t = 0.1 / gn;
                for _ in 0..60 {
                    let cand = (&s - &tangent * t).normalize();
                    if let Ok(r) = cc_residual(chart, &cand) {
                        if r < res {
                            accepted = Some((cand, r));
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
        }
        match accepted {
            Some((cand, r)) => {
                if r > 0.5 * res {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                s = cand;
                res = r;
            }
            None => break,
        }
        if stalled > 50 {
            break;
        }
    }
    if res >= CC_TOL {
        return Err(Error::NonConvergence(format!(
            "central configuration residual {res:e} above {CC_TOL:e}"
        )));
    }
    finish_cc(chart, s, res)
}

fn finish_cc(chart: &Chart, s: DVector<f64>, residual: f64) -> Result<CentralConfiguration> {
    let alpha = chart.system().alpha();
    let (u, _, d2u) = derivatives(chart, &s, true)?;
    let d2u_tilde = u_tilde_hessian(&d2u, &s, u, alpha);
    let (eig, _) = sym_eigen(&d2u_tilde);
    let mu1 = eig[0];
    let scale = eig.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let kernel_dim = eig.iter().filter(|v| v.abs() < KERNEL_TOL * scale).count();
    Ok(CentralConfiguration {
        bs_margin: mu1 + (2.0 - alpha).powi(2) / 8.0 * u,
        s0: s,
        residual,
        u_value: u,
        mu1,
        alpha,
        kernel_dim,
        d2u,
        d2u_tilde,
    })
}

fn u_tilde_hessian(d2u: &DMatrix<f64>, s: &DVector<f64>, u: f64, alpha: f64) -> DMatrix<f64> {
    let n = s.len();
    let m = d2u - s * s.transpose() * (alpha * (alpha + 2.0) * u)
        + DMatrix::identity(n, n) * (alpha * u);
    symmetrize(&m)
}

/// `D²Ũ(s₀) = D²U(s₀) - α(α+2)U(s₀) s₀⊗s₀ + αU(s₀) I`.
pub fn hess_u_tilde(chart: &Chart, cc: &CentralConfiguration) -> Result<DMatrix<f64>> {
    let (u, _, d2u) = derivatives(chart, &cc.s0, true)?;
    Ok(u_tilde_hessian(&d2u, &cc.s0, u, chart.system().alpha()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BsReport {
    pub mu1: f64,
    /// `-(2-α)²/8 · U(s₀)`.
    pub threshold: f64,
    pub margin: f64,
    pub holds: bool,
    pub degenerate: bool,
    pub kernel_dim: usize,
}

pub fn check_bs(cc: &CentralConfiguration) -> BsReport {
    check_bs_with_tol(cc, BS_TOL)
}

pub fn check_bs_with_tol(cc: &CentralConfiguration, tol: f64) -> BsReport {
    let threshold = -cc.r1();
    let margin = cc.mu1 - threshold;
    BsReport {
        mu1: cc.mu1,
        threshold,
        margin,
        holds: margin > tol,
        degenerate: margin.abs() <= tol,
        kernel_dim: cc.kernel_dim,
    }
}

/// Chart vector of the given particle positions, normalized to unit mass norm.
pub fn guess_from_positions(chart: &Chart, positions: &[Vec<f64>]) -> Result<DVector<f64>> {
    let sys = chart.system();
    if positions.len() != sys.n() || positions.iter().any(|p| p.len() != sys.d()) {
        return Err(Error::invalid(format!(
            "expected {} positions in dimension {}",
            sys.n(),
            sys.d()
        )));
    }
    let q = DVector::from_iterator(sys.ambient_dim(), positions.iter().flatten().copied());
    let x = chart.from_ambient(&q)?;
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::invalid("all positions coincide"));
    }
    Ok(x / norm)
}

/// Vertices of a regular polygon in the first coordinate plane.
pub fn polygon_guess(chart: &Chart) -> Result<DVector<f64>> {
    let sys = chart.system();
    let n = sys.n();
    let pos: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let mut p = vec![0.0; sys.d()];
            p[0] = th.cos();
            p[1] = th.sin();
            p
        })
        .collect();
    guess_from_positions(chart, &pos)
}

/// Equally spaced particles on the first axis.
pub fn collinear_guess(chart: &Chart) -> Result<DVector<f64>> {
    let sys = chart.system();
    let pos: Vec<Vec<f64>> = (0..sys.n())
        .map(|i| {
            let mut p = vec![0.0; sys.d()];
            p[0] = i as f64;
            p
        })
        .collect();
    guess_from_positions(chart, &pos)
}

/// Text record of a central configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcRecord {
    pub masses: Vec<f64>,
    pub d: usize,
    pub alpha: f64,
    pub s0: Vec<f64>,
    pub residual: f64,
}

impl CcRecord {
    pub fn new(chart: &Chart, cc: &CentralConfiguration) -> Self {
        let sys = chart.system();
        CcRecord {
            masses: sys.masses().to_vec(),
            d: sys.d(),
            alpha: sys.alpha(),
            s0: chart.to_ambient(&cc.s0).iter().copied().collect(),
            residual: cc.residual,
        }
    }

    pub fn system(&self) -> Result<MassSystem> {
        MassSystem::new(self.masses.clone(), self.d, self.alpha)
    }

    /// Re-verifies the stored configuration in `chart` (polishing it with
    /// the solver, which leaves an exact record unchanged up to rounding).
    pub fn to_cc(&self, chart: &Chart) -> Result<CentralConfiguration> {
        let sys = chart.system();
        if sys.masses() != self.masses.as_slice() || sys.d() != self.d || sys.alpha() != self.alpha
        {
            return Err(Error::invalid("record does not match the mass system"));
        }
        let q = DVector::from_vec(self.s0.clone());
        let x = chart.from_ambient(&q)?;
        let res = cc_residual(chart, &x.normalize())?;
        if res < CC_TOL && (x.norm() - 1.0).abs() < 1e-10 {
            finish_cc(chart, x, res)
        } else {
            find_central_configuration(chart, &x)
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::build_chart;

    fn equilateral() -> (Chart, CentralConfiguration) {
        let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
        let chart = build_chart(&sys);
        let g = polygon_guess(&chart).unwrap();
        let cc = find_central_configuration(&chart, &g).unwrap();
        (chart, cc)
    }

    #[test]
    fn two_body_unit_separation() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2, 1.0).unwrap();
        let chart = build_chart(&sys);
        let x = chart
            .from_ambient(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]))
            .unwrap();
        assert!((value(&chart, &x).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equilateral_cc_has_u_three() {
        let (chart, cc) = equilateral();
        assert!(cc.residual < CC_TOL);
        assert!((cc.u_value - 3.0).abs() < 1e-12);
        assert!((cc.s0.norm() - 1.0).abs() < 1e-12);
        let g = grad(&chart, &cc.s0).unwrap();
        assert!((g + &cc.s0 * cc.u_value).norm() < 1e-10);
        let k = hess_u_tilde(&chart, &cc).unwrap() * &cc.s0;
        assert!(k.norm() < 1e-9);
        assert!(check_bs(&cc).holds);
    }

    #[test]
    fn collision_guess_is_rejected() {
        let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
        let chart = build_chart(&sys);
        let g = guess_from_positions(&chart, &[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]])
            .unwrap();
        assert!(find_central_configuration(&chart, &g).is_err());
    }

    #[test]
    fn record_round_trip() {
        let (chart, cc) = equilateral();
        let rec = CcRecord::new(&chart, &cc);
        let text = serde_json::to_string(&rec).unwrap();
        let back: CcRecord = serde_json::from_str(&text).unwrap();
        let cc2 = back.to_cc(&chart).unwrap();
        assert!((cc2.s0 - cc.s0).norm() < 1e-12);
    }
}
