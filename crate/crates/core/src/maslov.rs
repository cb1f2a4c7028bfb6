//! Maslov index of Lagrangian paths against a fixed Lagrangian.
//!
//! A Lagrangian `ℓ` with orthonormal frame `[X; Y]` is represented by the
//! unitary `U = X + iY`; relative to a reference with unitary `U_ref` the
//! symmetric unitary `W = (U_ref^* U)(U_ref^* U)ᵀ` has eigenvalue 1 exactly on
//! `ℓ ∩ reference`. Crossings are eigen-angles of `W` passing through zero;
//! the positive direction is the one of `e^{tJ}`, which turns every angle
//! counterclockwise.
//!
//! [`maslov_index`] returns `μ(L₀, ℓ)` with the reference first. For the
//! ordered pair with the path first we use `μ(ℓ, L₀) = -μ(L₀, ℓ)`, so
//! `ι_geo = -μ(E^s, L₀) = μ(L₀, E^s)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{assemble_hamiltonian, CoefficientPath, HamiltonianPath};
use crate::linalg::{apply_j, solve, svd, sym_eigen, sym_eigenvalues};
use crate::symplectic::{
    bnd_check, gap_distance, hyperbolic_splitting, BndReport, LagrangianFrame, StablePath,
    TRANSVERSALITY_TOL,
};

use std::f64::consts::PI;

pub trait LagrangianPath {
    fn frame(&self, t: f64) -> Result<LagrangianFrame>;
}

impl<F> LagrangianPath for F
where
    F: Fn(f64) -> Result<LagrangianFrame>,
{
    fn frame(&self, t: f64) -> Result<LagrangianFrame> {
        self(t)
    }
}

impl LagrangianPath for StablePath {
    fn frame(&self, t: f64) -> Result<LagrangianFrame> {
        self.frame_at(t)
    }
}

#[derive(Clone, Debug)]
pub struct MaslovOptions {
    /// Initial uniform samples when no grid is supplied.
    pub samples: usize,
    /// Largest eigen-angle movement accepted between neighbouring samples.
    pub max_move: f64,
    pub location_tol: f64,
    /// Eigen-angles below this count as kernel at a located crossing.
    pub kernel_tol: f64,
    /// Eigen-angles below this at the ends of the interval count as endpoint
    /// crossings.
    pub endpoint_tol: f64,
    pub regular_tol: f64,
    pub max_refinements: usize,
}

impl Default for MaslovOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            max_move: PI / 4.0,
            location_tol: 1e-9,
            kernel_tol: 1e-5,
            endpoint_tol: 1e-8,
            regular_tol: 1e-7,
            max_refinements: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CrossingForm,
    EpsilonRotation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub location: f64,
    pub kernel_dim: usize,
    pub signature: i64,
    pub positive: usize,
    pub negative: usize,
    pub regular: bool,
    pub method: Method,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaslovResult {
    pub crossings: Vec<Crossing>,
    pub index: i64,
    pub method: Method,
    /// An endpoint of the interval lies on the Maslov cycle.
    pub endpoint_convention_applied: bool,
    /// The index from the ε-rotation count, always computed.
    pub epsilon_index: i64,
    pub epsilon: f64,
    /// Crossing forms and the ε-rotation count agree.
    pub agree: bool,
}

/// Orthogonal symplectic map sending `reference` to `L₀` (multiplication by
/// `U_ref^*`).
fn to_horizontal(reference: &LagrangianFrame) -> DMatrix<f64> {
    let n = reference.dim();
    let (x, y) = (reference.top(), reference.bottom());
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&x.transpose());
    m.view_mut((0, n), (n, n)).copy_from(&y.transpose());
    m.view_mut((n, 0), (n, n)).copy_from(&(-y.transpose()));
    m.view_mut((n, n), (n, n)).copy_from(&x.transpose());
    m
}

/// Eigen-angles of `W = UUᵀ` in `(-π, π]`, sorted, for a frame already in
/// reference coordinates.
fn eigen_angles(frame: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = frame.ncols();
    let c = frame.rows(0, n).into_owned();
    let d = frame.rows(n, n).into_owned();
    let a = &c * c.transpose() - &d * d.transpose();
    let b = &c * d.transpose() + &d * c.transpose();
    // A and B commute; a generic combination diagonalizes both
    for kappa in [0.618_033_988_7, 1.234_567, 2.345_678, 0.111_111, 2.9] {
        let comb = &a * f64::cos(kappa) + &b * f64::sin(kappa);
        let (_, vecs) = sym_eigen(&comb);
        let mut angles = Vec::with_capacity(n);
        let mut worst = 0.0f64;
        for k in 0..n {
            let v = vecs.column(k);
            let (re, im) = ((&a * v).dot(&v), (&b * v).dot(&v));
            let phi = im.atan2(re);
            let res = (&a * v - v * phi.cos()).norm() + (&b * v - v * phi.sin()).norm();
            worst = worst.max(res);
            angles.push(phi);
        }
        if worst < 1e-7 {
            angles.sort_by(f64::total_cmp);
            return Ok(angles);
        }
    }
    Err(Error::NonConvergence(
        "could not resolve the eigen-angles of the Souriau map".into(),
    ))
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Matches sorted angle lists by the best cyclic shift; returns the largest
/// movement and, for each `prev[i]`, its signed movement.
fn match_angles(prev: &[f64], next: &[f64]) -> (f64, Vec<f64>) {
    let n = prev.len();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for s in 0..n {
        let moves: Vec<f64> = (0..n).map(|i| wrap(next[(i + s) % n] - prev[i])).collect();
        let worst = moves.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if worst < best.0 {
            best = (worst, moves);
        }
    }
    best
}

struct Sampled {
    ts: Vec<f64>,
    angles: Vec<Vec<f64>>,
    moves: Vec<Vec<f64>>,
}

struct Ctx<'a> {
    path: &'a dyn LagrangianPath,
    to_ref: DMatrix<f64>,
    complement: DMatrix<f64>,
    opts: &'a MaslovOptions,
}

impl Ctx<'_> {
    fn frame(&self, t: f64) -> Result<DMatrix<f64>> {
        let f = self.path.frame(t)?;
        if f.dim() * 2 != self.to_ref.nrows() {
            return Err(Error::invalid("path and reference dimensions differ"));
        }
        Ok(&self.to_ref * f.matrix())
    }

    fn angles(&self, t: f64) -> Result<Vec<f64>> {
        eigen_angles(&self.frame(t)?)
    }

    /// Samples the path and refines until every eigen-angle moves less than
    /// `max_move` between neighbours.
    fn sample(&self, grid: &[f64]) -> Result<Sampled> {
        let mut ts = vec![grid[0]];
        let mut angles = vec![self.angles(grid[0])?];
        let mut moves = Vec::new();
        for w in grid.windows(2) {
            let mut stack = vec![(w[1], 0usize)];
            let mut right_cache: Vec<(f64, Vec<f64>)> = Vec::new();
            while let Some((t, depth)) = stack.pop() {
                let left_t = *ts.last().unwrap();
                let next = match right_cache.iter().position(|(tc, _)| *tc == t) {
                    Some(i) => right_cache.remove(i).1,
                    None => self.angles(t)?,
                };
                let (worst, mv) = match_angles(angles.last().unwrap(), &next);
                if worst <= self.opts.max_move {
                    ts.push(t);
                    angles.push(next);
                    moves.push(mv);
                } else {
                    if depth >= self.opts.max_refinements {
                        return Err(Error::NonConvergence(format!(
                            "eigen-angles jump by {worst:.3} near t = {t}; path not resolved"
                        )));
                    }
                    right_cache.push((t, next));
                    stack.push((t, depth + 1));
                    stack.push((0.5 * (left_t + t), depth + 1));
                }
            }
        }
        Ok(Sampled { ts, angles, moves })
    }

    /// Bisects the crossing of the eigenvalue `i` (index in the sorted list
    /// at `t0`) between `t0` and `t1`.
    fn locate(&self, t0: f64, a0: &[f64], i: usize, t1: f64) -> Result<f64> {
        let (mut lt, mut la, mut li) = (t0, a0.to_vec(), i);
        let mut rt = t1;
        let sign0 = la[li] < 0.0;
        while rt - lt > self.opts.location_tol {
            let mt = 0.5 * (lt + rt);
            let ma = self.angles(mt)?;
            let (_, mv) = match_angles(&la, &ma);
            let moved = la[li] + mv[li];
            if (moved < 0.0) == sign0 {
                // still on the starting side
                let target = wrap(moved);
                li = ma
                    .iter()
                    .enumerate()
                    .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))
                    .map(|(k, _)| k)
                    .unwrap();
                lt = mt;
                la = ma;
            } else {
                rt = mt;
            }
        }
        Ok(0.5 * (lt + rt))
    }

    /// `Γ(v) = d/dt ω(v, w(t))` on `ℓ(t*) ∩ L₀` with `w(t) ∈ W`, `v + w(t) ∈
    /// ℓ(t)`. Returns the form eigenvalues.
    fn crossing_form(&self, t: f64, kernel_dim: usize, lo: f64, hi: f64, spacing: f64) -> Result<Vec<f64>> {
        let f = self.frame(t)?;
        let n = f.ncols();
        let bottom = f.rows(n, n).into_owned();
        let dec = svd(&bottom);
        let coeffs: Vec<_> = (0..kernel_dim).map(|k| dec.v.column(k).into_owned()).collect();
        let kernel: Vec<DMatrix<f64>> = coeffs
            .iter()
            .map(|a| {
                let v = &f * a;
                let mut p = DMatrix::zeros(2 * n, 1);
                // the exact kernel vector lies in L₀; drop the residual u part
                p.view_mut((0, 0), (n, 1)).copy_from(&v.rows(0, n));
                p
            })
            .collect();
        let jv: Vec<DMatrix<f64>> = kernel.iter().map(apply_j).collect();
        let omega_at = |s: f64| -> Result<DMatrix<f64>> {
            let fs = self.frame(s)?;
            let mut sys = DMatrix::zeros(2 * n, 2 * n);
            sys.view_mut((0, 0), (2 * n, n)).copy_from(&fs);
            sys.view_mut((0, n), (2 * n, n)).copy_from(&(-&self.complement));
            let mut rhs = DMatrix::zeros(2 * n, kernel_dim);
            for (j, v) in kernel.iter().enumerate() {
                rhs.set_column(j, &v.column(0));
            }
            let sol = solve(&sys, &rhs).map_err(|_| {
                Error::invalid("complement W is not transversal to the path at the crossing")
            })?;
            let w = &self.complement * sol.rows(n, n);
            let mut g = DMatrix::zeros(kernel_dim, kernel_dim);
            for i in 0..kernel_dim {
                for j in 0..kernel_dim {
                    g[(i, j)] = jv[i].column(0).dot(&w.column(j));
                }
            }
            Ok(g)
        };
        let delta = (1e-3 * spacing).max(1e-6);
        let deriv = if t - delta >= lo && t + delta <= hi {
            (omega_at(t + delta)? - omega_at(t - delta)?) / (2.0 * delta)
        } else if t + 2.0 * delta <= hi {
            (omega_at(t + delta)? * 4.0 - omega_at(t)? * 3.0 - omega_at(t + 2.0 * delta)?)
                / (2.0 * delta)
        } else {
            (omega_at(t)? * 3.0 - omega_at(t - delta)? * 4.0 + omega_at(t - 2.0 * delta)?)
                / (2.0 * delta)
        };
        let deriv = (&deriv + deriv.transpose()) * 0.5;
        Ok(sym_eigenvalues(&deriv))
    }
}

fn count_events(s: &Sampled, shift: f64, skip_ends: bool, endpoint_tol: f64) -> i64 {
    let last = s.moves.len();
    let mut total = 0i64;
    for (k, mv) in s.moves.iter().enumerate() {
        for (i, d) in mv.iter().enumerate() {
            let a = s.angles[k][i];
            let b = a + d;
            if skip_ends && ((k == 0 && a.abs() < endpoint_tol) || (k + 1 == last && b.abs() < endpoint_tol)) {
                continue;
            }
            let (a, b) = (wrap(a - shift), wrap(a - shift) + d);
            if a < 0.0 && b >= 0.0 {
                total += 1;
            } else if a >= 0.0 && b < 0.0 {
                total -= 1;
            }
        }
    }
    total
}

/// ε-rotation count: intersection number of `e^{-εJ}ℓ` with the cycle, with
/// ε halved until the count is unchanged over two successive halvings.
fn epsilon_count(s: &Sampled, endpoint_tol: f64) -> (i64, f64) {
    let ends = s.angles[0].iter().chain(s.angles.last().unwrap());
    let nearest = ends
        .map(|a| a.abs())
        .filter(|a| *a >= endpoint_tol)
        .fold(f64::INFINITY, f64::min);
    let mut eps = (PI / 16.0).min(0.25 * nearest);
    let mut history = vec![count_events(s, 2.0 * eps, false, 0.0)];
    for _ in 0..40 {
        if history.len() >= 3 && history[history.len() - 3..].iter().all(|&c| c == history[history.len() - 1]) {
            break;
        }
        eps *= 0.5;
        history.push(count_events(s, 2.0 * eps, false, 0.0));
    }
    (*history.last().unwrap(), eps)
}

/// Maslov index of `t ↦ path(t)` over `[a, b]` against `reference`.
pub fn maslov_index(
    path: &dyn LagrangianPath,
    a: f64,
    b: f64,
    reference: &LagrangianFrame,
    opts: &MaslovOptions,
) -> Result<MaslovResult> {
    if !(b > a) {
        return Err(Error::invalid("interval must have b > a"));
    }
    let m = opts.samples.max(2);
    let grid: Vec<f64> = (0..m)
        .map(|i| if i + 1 == m { b } else { a + (b - a) * i as f64 / (m - 1) as f64 })
        .collect();
    maslov_index_on_grid(path, &grid, reference, None, opts)
}

/// As [`maslov_index`] with an explicit initial sample grid and an optional
/// complement `W` (default `J · reference`).
pub fn maslov_index_on_grid(
    path: &dyn LagrangianPath,
    grid: &[f64],
    reference: &LagrangianFrame,
    complement: Option<&LagrangianFrame>,
    opts: &MaslovOptions,
) -> Result<MaslovResult> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sample grid must be strictly increasing"));
    }
    let to_ref = to_horizontal(reference);
    let w = complement.cloned().unwrap_or_else(|| reference.complement());
    let ctx = Ctx {
        path,
        complement: &to_ref * w.matrix(),
        to_ref,
        opts,
    };
    let (a, b) = (grid[0], *grid.last().unwrap());
    let s = ctx.sample(grid)?;
    let (epsilon_index, epsilon) = epsilon_count(&s, opts.endpoint_tol);

    let mut crossings: Vec<Crossing> = Vec::new();
    let mut crossing_total = 0i64;
    let mut fallback = false;
    let mut endpoint_convention_applied = false;
    let spacing = |k: usize| s.ts[(k + 1).min(s.ts.len() - 1)] - s.ts[k.min(s.ts.len() - 2)];

    // endpoint crossings: n₊ at a, -n₋ at b
    for (end, t, k) in [(0usize, a, 0usize), (1, b, s.ts.len() - 2)] {
        let angles = if end == 0 { &s.angles[0] } else { s.angles.last().unwrap() };
        let dim = angles.iter().filter(|x| x.abs() < opts.endpoint_tol).count();
        if dim == 0 {
            continue;
        }
        endpoint_convention_applied = true;
        let ev = ctx.crossing_form(t, dim, a, b, spacing(k))?;
        let pos = ev.iter().filter(|&&e| e > opts.regular_tol).count();
        let neg = ev.iter().filter(|&&e| e < -opts.regular_tol).count();
        let regular = pos + neg == dim;
        fallback |= !regular;
        let contribution = if end == 0 { pos as i64 } else { -(neg as i64) };
        crossing_total += contribution;
        crossings.push(Crossing {
            location: t,
            kernel_dim: dim,
            signature: pos as i64 - neg as i64,
            positive: pos,
            negative: neg,
            regular,
            method: if regular { Method::CrossingForm } else { Method::EpsilonRotation },
        });
    }

    // interior events, located and grouped
    let mut events: Vec<(f64, i64)> = Vec::new();
    let last = s.moves.len();
    for (k, mv) in s.moves.iter().enumerate() {
        for (i, d) in mv.iter().enumerate() {
            let x = s.angles[k][i];
            let y = x + d;
            if (k == 0 && x.abs() < opts.endpoint_tol) || (k + 1 == last && y.abs() < opts.endpoint_tol) {
                continue;
            }
            let dir = if x < 0.0 && y >= 0.0 {
                1
            } else if x >= 0.0 && y < 0.0 {
                -1
            } else {
                continue;
            };
            let t = ctx.locate(s.ts[k], &s.angles[k], i, s.ts[k + 1])?;
            events.push((t, dir));
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let group_tol = 1e3 * opts.location_tol.max(1e-12);
    let mut groups: Vec<Vec<(f64, i64)>> = Vec::new();
    for e in events {
        match groups.last_mut() {
            Some(g) if e.0 - g.last().unwrap().0 <= group_tol => g.push(e),
            _ => groups.push(vec![e]),
        }
    }
    for g in groups {
        let t = g.iter().map(|e| e.0).sum::<f64>() / g.len() as f64;
        let net: i64 = g.iter().map(|e| e.1).sum();
        let angles = ctx.angles(t)?;
        let dim = angles
            .iter()
            .filter(|x| x.abs() < opts.kernel_tol)
            .count()
            .max(g.len());
        let k = s.ts.partition_point(|&x| x < t).saturating_sub(1);
        let ev = ctx.crossing_form(t, dim, a, b, spacing(k))?;
        let pos = ev.iter().filter(|&&e| e > opts.regular_tol).count();
        let neg = ev.iter().filter(|&&e| e < -opts.regular_tol).count();
        let signature = pos as i64 - neg as i64;
        let regular = pos + neg == dim && signature == net;
        fallback |= !regular;
        crossing_total += signature;
        crossings.push(Crossing {
            location: t,
            kernel_dim: dim,
            signature,
            positive: pos,
            negative: neg,
            regular,
            method: if regular { Method::CrossingForm } else { Method::EpsilonRotation },
        });
    }
    crossings.sort_by(|x, y| x.location.total_cmp(&y.location));
    let (index, method) = if fallback {
        (epsilon_index, Method::EpsilonRotation)
    } else {
        (crossing_total, Method::CrossingForm)
    };
    Ok(MaslovResult {
        crossings,
        index,
        method,
        endpoint_convention_applied,
        epsilon_index,
        epsilon,
        agree: crossing_total == epsilon_index,
    })
}

#[derive(Clone, Debug)]
pub struct GeometricOptions {
    pub max_step: f64,
    pub maslov: MaslovOptions,
    /// Largest gap between `E^s` and `E^s_*` tolerated at 90% of the path.
    pub tail_tol: f64,
    pub sigma_samples: usize,
}

impl Default for GeometricOptions {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            maslov: MaslovOptions::default(),
            tail_tol: 1e-3,
            sigma_samples: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricIndex {
    pub value: i64,
    pub maslov: MaslovResult,
    pub bnd: BndReport,
    pub tail_gap: f64,
    pub tau_end: f64,
    pub isotropy: f64,
}

/// `ι_geo = -μ(E^s(τ₀), L₀; τ₀ ∈ [0, ∞))`. The path is followed up to the
/// end of the coefficient grid, past which it is constant and equal to
/// `E^s_*`, so the tail carries no crossing once BND holds at the limit.
pub fn geometric_index(ham: &HamiltonianPath, opts: &GeometricOptions) -> Result<GeometricIndex> {
    let split = hyperbolic_splitting(&ham.h_star)?.hyperbolic()?;
    let tau_end = ham.tau_end();
    if !(tau_end > 0.0) {
        return Err(Error::invalid("coefficient grid must extend past tau = 0"));
    }
    let path = StablePath::new(ham, 0.0, tau_end, opts.max_step)?;
    let tail_gap = gap_distance(&path.frame_at(0.9 * tau_end)?, &split.stable);
    if tail_gap > opts.tail_tol {
        return Err(Error::NonConvergence(format!(
            "stable path not settled: gap {tail_gap:e} to the limit at 0.9 tau_end"
        )));
    }
    let bnd = bnd_check(&split, &path.frame_at(0.0)?);
    let reference = LagrangianFrame::horizontal(ham.dim());
    let maslov = maslov_index_on_grid(&path, &path.nodes, &reference, None, &opts.maslov)?;
    Ok(GeometricIndex {
        // -μ(E^s, L₀) = μ(L₀, E^s)
        value: maslov.index,
        maslov,
        bnd,
        tail_gap,
        tau_end,
        isotropy: path.isotropy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RectangleEdges {
    /// `σ ↦ E^s_{*,σ}` stays transversal to `L₀`.
    pub limit_edge_transversal: bool,
    /// Crossings of `τ₀ ↦ E^s_{σ₀}(τ₀)`; zero by positivity.
    pub sigma0_edge_crossings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaPathMaslov {
    /// `μ(E^s_σ(0), L₀; σ ∈ [0, σ₀])`.
    pub value: i64,
    pub maslov: MaslovResult,
    pub rectangle: RectangleEdges,
}

impl SigmaPathMaslov {
    pub fn rectangle(&self) -> &RectangleEdges {
        &self.rectangle
    }
}

/// Maslov index of `σ ↦ E^s_σ(0)` for the family `R̃ + σI`, together with the
/// limit and `σ₀` edges of the rectangle.
pub fn sigma_path_maslov(
    coeff: &CoefficientPath,
    sigma0: f64,
    opts: &GeometricOptions,
) -> Result<SigmaPathMaslov> {
    if !(sigma0 > 0.0) {
        return Err(Error::invalid("sigma0 must be positive"));
    }
    let ham = assemble_hamiltonian(coeff)?;
    let tau_end = ham.tau_end();
    let n = ham.dim();
    let reference = LagrangianFrame::horizontal(n);
    let frame_at = |sigma: f64| -> Result<LagrangianFrame> {
        StablePath::new(&ham.shifted(sigma), 0.0, tau_end, opts.max_step)?.frame_at(0.0)
    };
    let m = opts.sigma_samples.max(2);
    let grid: Vec<f64> = (0..m)
        .map(|i| if i + 1 == m { sigma0 } else { sigma0 * i as f64 / (m - 1) as f64 })
        .collect();
    let maslov = maslov_index_on_grid(&frame_at, &grid, &reference, None, &opts.maslov)?;

    let mut limit_edge_transversal = true;
    for &sigma in &grid {
        let split = hyperbolic_splitting(&ham.shifted(sigma).h_star)?.hyperbolic()?;
        if split.stable.angles_to_horizontal()[0] <= TRANSVERSALITY_TOL {
            limit_edge_transversal = false;
        }
    }
    let top = StablePath::new(&ham.shifted(sigma0), 0.0, tau_end, opts.max_step)?;
    let edge = maslov_index_on_grid(&top, &top.nodes, &reference, None, &opts.maslov)?;
    Ok(SigmaPathMaslov {
        value: -maslov.index,
        maslov,
        rectangle: RectangleEdges {
            limit_edge_transversal,
            sigma0_edge_crossings: edge.crossings.len(),
        },
    })
}
