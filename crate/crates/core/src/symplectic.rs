//! Lagrangian frames in `ℝ^{2N}` with `ω(v, w) = ⟨Jv, w⟩`, the gap metric,
//! hyperbolic splittings of the limit Hamiltonian and backward propagation
//! of the stable subspace.
//!
//! `L₀` is the horizontal Lagrangian `{u = 0}` (first `N` coordinates).

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::HamiltonianPath;
use crate::linalg::{apply_j, j_matrix, orthonormalize, singular_values_asc, solve, spectral_norm, symmetrize};

/// Hyperbolicity threshold on `|Re λ|`. At the [BS] threshold `H*` carries a
/// nilpotent 2×2 block, so eigenvalues there are only resolved to about the
/// square root of the margin tolerance; this matches the 1e-9 margin band.
pub const GAP_TOL: f64 = 3.162_277_660_168_379_5e-5;
pub const TRANSVERSALITY_TOL: f64 = 1e-8;
pub const FRAME_TOL: f64 = 1e-7;
const ISOTROPY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianFrame {
    f: DMatrix<f64>,
}

impl LagrangianFrame {
    /// Orthonormalizes `f` (2N×N) and checks rank and isotropy.
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        let frame = Self::span_of(&f)?;
        let iso = frame.isotropy_residual();
        if iso > ISOTROPY_TOL {
            return Err(Error::invalid(format!(
                "frame is not isotropic (residual {iso:e})"
            )));
        }
        Ok(frame)
    }

    /// Orthonormal frame of the span without the isotropy check; used inside
    /// propagation where the residual is tracked separately.
    pub(crate) fn span_of(f: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = f.shape();
        if rows != 2 * cols || cols == 0 {
            return Err(Error::invalid(format!(
                "a Lagrangian frame must be 2N×N, got {rows}×{cols}"
            )));
        }
        let sv = singular_values_asc(f);
        if !(sv[0] > 1e-12 * sv[cols - 1].max(f64::MIN_POSITIVE)) {
            return Err(Error::invalid("frame columns are linearly dependent"));
        }
        Ok(Self { f: orthonormalize(f) })
    }

    /// `L₀ = ℝ^N × {0}`.
    pub fn horizontal(n: usize) -> Self {
        let mut f = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            f[(i, i)] = 1.0;
        }
        Self { f }
    }

    /// `J L₀ = {0} × ℝ^N`.
    pub fn vertical(n: usize) -> Self {
        let mut f = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            f[(n + i, i)] = 1.0;
        }
        Self { f }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    /// The `p` block (first N rows).
    pub fn top(&self) -> DMatrix<f64> {
        self.f.rows(0, self.dim()).into_owned()
    }

    /// The `u` block (last N rows).
    pub fn bottom(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.f.rows(n, n).into_owned()
    }

    /// `max |FᵀJF|`.
    pub fn isotropy_residual(&self) -> f64 {
        (self.f.transpose() * apply_j(&self.f)).amax()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.f * self.f.transpose()
    }

    /// Image under a linear map, re-orthonormalized.
    pub fn mapped(&self, m: &DMatrix<f64>) -> Result<Self> {
        Self::span_of(&(m * &self.f))
    }

    /// `J F`, the orthogonal complement (again Lagrangian).
    pub fn complement(&self) -> Self {
        Self { f: apply_j(&self.f) }
    }

    /// Sines of the principal angles with `L₀`, ascending.
    pub fn angles_to_horizontal(&self) -> Vec<f64> {
        singular_values_asc(&self.bottom())
    }

    pub fn record(&self) -> FrameRecord {
        FrameRecord {
            rows: self.f.nrows(),
            cols: self.f.ncols(),
            data: self.f.as_slice().to_vec(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.record())?)?;
        Ok(())
    }
}

/// Frame export: `data` holds the 2N×N matrix column by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FrameRecord {
    pub fn to_frame(&self) -> Result<LagrangianFrame> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::invalid("frame record data length does not match its shape"));
        }
        LagrangianFrame::new(DMatrix::from_column_slice(self.rows, self.cols, &self.data))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `‖P_V - P_W‖₂`.
pub fn gap_distance(v: &LagrangianFrame, w: &LagrangianFrame) -> f64 {
    spectral_norm(&(v.projector() - w.projector()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicSplitting {
    pub stable: LagrangianFrame,
    pub unstable: LagrangianFrame,
    /// `min |Re λ|` over the spectrum.
    pub spectral_gap: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Smallest singular value of `[F_s F_u]`; 0 means the splitting degenerates.
    pub conditioning: f64,
    /// `‖H F_s - F_s (F_sᵀ H F_s)‖`.
    pub invariance_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NotHyperbolic {
    pub spectral_gap: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Splitting {
    Hyperbolic(HyperbolicSplitting),
    NotHyperbolic(NotHyperbolic),
}

impl Splitting {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Splitting::Hyperbolic(_))
    }

    pub fn spectral_gap(&self) -> f64 {
        match self {
            Splitting::Hyperbolic(h) => h.spectral_gap,
            Splitting::NotHyperbolic(n) => n.spectral_gap,
        }
    }

    pub fn eigenvalues(&self) -> &[Complex<f64>] {
        match self {
            Splitting::Hyperbolic(h) => &h.eigenvalues,
            Splitting::NotHyperbolic(n) => &n.eigenvalues,
        }
    }

    pub fn hyperbolic(self) -> Result<HyperbolicSplitting> {
        match self {
            Splitting::Hyperbolic(h) => Ok(h),
            Splitting::NotHyperbolic(n) => Err(Error::Hypothesis(format!(
                "limit Hamiltonian is not hyperbolic (min |Re λ| = {:e})",
                n.spectral_gap
            ))),
        }
    }
}

/// Eigenvalues sorted by real part, then imaginary part.
pub fn hamiltonian_eigenvalues(h: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = h.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

/// Matrix sign function of a Hamiltonian `H = JY` by the scaled Newton
/// iteration written on the symmetric factor, `Y ← (cY + J Y⁻¹ J / c) / 2`,
/// symmetrized at every step so the iterates stay Hamiltonian.
fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let j = j_matrix(n / 2);
    let mut y = symmetrize(&(-(&j * h)));
    for _ in 0..100 {
        let lu = y.clone().lu();
        let det = lu.determinant().abs();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::NonConvergence("sign iteration hit a singular matrix".into()))?;
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = symmetrize(&((&y * c + &j * inv * &j / c) * 0.5));
        let change = (&next - &y).norm() / next.norm();
        y = next;
        if change < 1e-14 {
            break;
        }
    }
    let x = &j * y;
    let residual = (&x * &x - DMatrix::identity(n, n)).norm();
    if residual < 1e-8 * x.norm().max(1.0) {
        Ok(x)
    } else {
        Err(Error::NonConvergence(format!(
            "matrix sign iteration stalled (‖S²-I‖ = {residual:e})"
        )))
    }
}

/// Range of a rank-`n` projector: leading columns of a column-pivoted QR.
fn invariant_frame(projector: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let qr = projector.clone().col_piv_qr();
    let r = qr.r();
    let scale = r[(0, 0)].abs().max(f64::MIN_POSITIVE);
    if r[(n - 1, n - 1)].abs() < 1e-10 * scale {
        return Err(Error::NonConvergence("spectral projector lost rank".into()));
    }
    Ok(qr.q().columns(0, n).into_owned())
}

pub fn hyperbolic_splitting(h_star: &DMatrix<f64>) -> Result<Splitting> {
    hyperbolic_splitting_with_tol(h_star, GAP_TOL)
}

/// Splits `ℝ^{2N}` into the stable and unstable invariant subspaces of `H*`.
/// Eigenvalues come from the real Schur form; the subspaces are the ranges of
/// the spectral projectors `(I ∓ sign H*)/2`.
pub fn hyperbolic_splitting_with_tol(h_star: &DMatrix<f64>, gap_tol: f64) -> Result<Splitting> {
    let (rows, cols) = h_star.shape();
    if rows != cols || rows % 2 != 0 || rows == 0 {
        return Err(Error::invalid("H* must be a square matrix of even size"));
    }
    let n = rows / 2;
    let eigenvalues = hamiltonian_eigenvalues(h_star);
    let gap = eigenvalues.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    if !(gap >= gap_tol) {
        return Ok(Splitting::NotHyperbolic(NotHyperbolic {
            spectral_gap: gap,
            eigenvalues,
        }));
    }
    let stable_count = eigenvalues.iter().filter(|l| l.re < 0.0).count();
    if stable_count != n {
        return Err(Error::Hypothesis(format!(
            "stable subspace has dimension {stable_count}, expected {n}"
        )));
    }
    let s = matrix_sign(h_star)?;
    let id = DMatrix::<f64>::identity(rows, rows);
    let fs = invariant_frame(&((&id - &s) * 0.5), n)?;
    let fu = invariant_frame(&((&id + &s) * 0.5), n)?;
    let stable = LagrangianFrame::span_of(&fs)?;
    let unstable = LagrangianFrame::span_of(&fu)?;
    let iso = stable.isotropy_residual().max(unstable.isotropy_residual());
    if iso > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "invariant subspaces of H* are not Lagrangian (residual {iso:e})"
        )));
    }
    let f = stable.matrix();
    let invariance_residual = (h_star * f - f * (f.transpose() * h_star * f)).norm();
    let both = DMatrix::from_columns(
        &f.column_iter()
            .chain(unstable.matrix().column_iter())
            .map(|c| c.into_owned())
            .collect::<Vec<_>>(),
    );
    let conditioning = singular_values_asc(&both)[0];
    Ok(Splitting::Hyperbolic(HyperbolicSplitting {
        stable,
        unstable,
        spectral_gap: gap,
        eigenvalues,
        conditioning,
        invariance_residual,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub p_transform: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub z_hat: DMatrix<f64>,
    /// `max |PᵀZP - Ẑ|`.
    pub congruence_residual: f64,
    /// `max |JẐ - P⁻¹(JZ)P|`.
    pub similarity_residual: f64,
}

/// For `Z = [[I, A], [Aᵀ, AᵀA - C]]` returns `P = [[I, -A], [0, I]]` and
/// `Ẑ = diag(I, -C)`.
pub fn symplectic_similarity(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Similarity> {
    let n = a.nrows();
    if a.shape() != (n, n) || c.shape() != (n, n) {
        return Err(Error::invalid("A and C must be square of the same size"));
    }
    if (a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
        return Err(Error::invalid("A must be symmetric"));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut p = DMatrix::identity(2 * n, 2 * n);
    p.view_mut((0, n), (n, n)).copy_from(&(-a));
    let mut z = DMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(&id);
    z.view_mut((0, n), (n, n)).copy_from(a);
    z.view_mut((n, 0), (n, n)).copy_from(&a.transpose());
    z.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * a - c));
    let mut z_hat = DMatrix::zeros(2 * n, 2 * n);
    z_hat.view_mut((0, 0), (n, n)).copy_from(&id);
    z_hat.view_mut((n, n), (n, n)).copy_from(&(-c));
    let j = j_matrix(n);
    let congruence_residual = (p.transpose() * &z * &p - &z_hat).amax();
    let mut p_inv = DMatrix::identity(2 * n, 2 * n);
    p_inv.view_mut((0, n), (n, n)).copy_from(a);
    let similarity_residual = (&j * &z_hat - &p_inv * (&j * &z) * &p).amax();
    Ok(Similarity {
        p_transform: p,
        z,
        z_hat,
        congruence_residual,
        similarity_residual,
    })
}

#[derive(Clone, Debug)]
pub struct PropagationOptions {
    /// Largest Cayley step; grid intervals are subdivided to respect it.
    pub max_step: f64,
    pub frame_tol: f64,
    /// The refinement run seeds at `far_factor · τ_far`.
    pub far_factor: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            frame_tol: FRAME_TOL,
            far_factor: 1.5,
        }
    }
}

/// Cayley factors `(I - h/2 H, I + h/2 H)` with `H = J B(mid)`.
fn cayley_parts(ham: &HamiltonianPath, a: f64, b: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n2 = 2 * ham.dim();
    let h = b - a;
    let mid = ham.h_at(0.5 * (a + b)) * (0.5 * h);
    let id = DMatrix::<f64>::identity(n2, n2);
    (&id - &mid, &id + &mid)
}

/// Maps states at `b` to states at `a < b` (implicit midpoint, backward).
fn step_back(ham: &HamiltonianPath, a: f64, b: f64, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (minus, plus) = cayley_parts(ham, a, b);
    solve(&plus, &(minus * z))
}

/// Maps states at `a` to states at `b > a`.
fn step_forward(ham: &HamiltonianPath, a: f64, b: f64, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (minus, plus) = cayley_parts(ham, a, b);
    solve(&minus, &(plus * z))
}

/// Integration nodes covering `[a, b]`: grid points inside, subdivided to
/// `max_step`.
fn nodes(ham: &HamiltonianPath, a: f64, b: f64, max_step: f64) -> Vec<f64> {
    let mut pts = vec![a];
    pts.extend(ham.grid.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    let mut out = vec![a];
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let m = (len / max_step).ceil().max(1.0) as usize;
        for i in 1..=m {
            out.push(if i == m { w[1] } else { w[0] + len * i as f64 / m as f64 });
        }
    }
    out
}

/// Frames of `E^s(τ)` at the nodes of `[tau0, tau_far]`, seeded with
/// `E^s_*` at `tau_far`. Returns the nodes, frames and the largest isotropy
/// residual met on the way.
fn sweep(
    ham: &HamiltonianPath,
    seed: &LagrangianFrame,
    tau0: f64,
    tau_far: f64,
    max_step: f64,
) -> Result<(Vec<f64>, Vec<LagrangianFrame>, f64)> {
    let ts = nodes(ham, tau0, tau_far, max_step);
    let mut frames = vec![seed.clone(); ts.len()];
    let mut worst = seed.isotropy_residual();
    for k in (0..ts.len() - 1).rev() {
        let z = step_back(ham, ts[k], ts[k + 1], frames[k + 1].matrix())?;
        let f = LagrangianFrame::span_of(&z)?;
        worst = worst.max(f.isotropy_residual());
        frames[k] = f;
    }
    Ok((ts, frames, worst))
}

#[derive(Clone, Debug)]
pub struct StableRun {
    pub frame: LagrangianFrame,
    /// Gap between the runs seeded at `τ_far` and `far_factor · τ_far`.
    pub refinement_gap: f64,
    pub isotropy: f64,
}

pub fn propagate_stable(ham: &HamiltonianPath, tau0: f64, tau_far: f64) -> Result<LagrangianFrame> {
    Ok(propagate_stable_with(ham, tau0, tau_far, &PropagationOptions::default())?.frame)
}

/// `E^s(τ₀)`: seed `E^s_*` at `tau_far`, integrate `z' = H(τ)z` backward with
/// Cayley steps and orthonormalize after each step.
pub fn propagate_stable_with(
    ham: &HamiltonianPath,
    tau0: f64,
    tau_far: f64,
    opts: &PropagationOptions,
) -> Result<StableRun> {
    if !(tau_far > tau0) {
        return Err(Error::invalid("tau_far must exceed tau0"));
    }
    let split = hyperbolic_splitting(&ham.h_star)?.hyperbolic()?;
    let (_, f1, iso1) = sweep(ham, &split.stable, tau0, tau_far, opts.max_step)?;
    let (_, f2, iso2) = sweep(ham, &split.stable, tau0, opts.far_factor * tau_far, opts.max_step)?;
    let gap = gap_distance(&f1[0], &f2[0]);
    let isotropy = iso1.max(iso2);
    if isotropy > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "propagated frame lost isotropy (residual {isotropy:e})"
        )));
    }
    if gap > opts.frame_tol {
        return Err(Error::NonConvergence(format!(
            "stable frame not settled: refinement gap {gap:e} exceeds {:e}",
            opts.frame_tol
        )));
    }
    Ok(StableRun {
        frame: f1[0].clone(),
        refinement_gap: gap,
        isotropy,
    })
}

/// `τ₀ ↦ E^s(τ₀)` on `[tau0, tau_end]`, stored at the integration nodes.
/// Beyond the coefficient grid the system is autonomous and the path is
/// constant, so choosing `tau_end` at the grid end loses nothing.
#[derive(Clone, Debug)]
pub struct StablePath {
    ham: HamiltonianPath,
    pub nodes: Vec<f64>,
    pub frames: Vec<LagrangianFrame>,
    pub limit: LagrangianFrame,
    pub isotropy: f64,
}

impl StablePath {
    pub fn new(ham: &HamiltonianPath, tau0: f64, tau_end: f64, max_step: f64) -> Result<Self> {
        if !(tau_end > tau0) {
            return Err(Error::invalid("tau_end must exceed tau0"));
        }
        let split = hyperbolic_splitting(&ham.h_star)?.hyperbolic()?;
        let (nodes, frames, isotropy) = sweep(ham, &split.stable, tau0, tau_end, max_step)?;
        Ok(Self {
            ham: ham.clone(),
            nodes,
            frames,
            limit: split.stable,
            isotropy,
        })
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Frame at any `τ₀` in range: one partial Cayley step back from the
    /// next node.
    pub fn frame_at(&self, tau: f64) -> Result<LagrangianFrame> {
        if tau >= self.end() {
            return Ok(self.limit.clone());
        }
        let tau = tau.max(self.start());
        let k = match self.nodes.binary_search_by(|t| t.total_cmp(&tau)) {
            Ok(i) => return Ok(self.frames[i].clone()),
            Err(i) => i,
        };
        let z = step_back(&self.ham, tau, self.nodes[k], self.frames[k].matrix())?;
        LagrangianFrame::span_of(&z)
    }
}

/// Largest change of `ω(v(τ), w(τ))` for two solutions propagated forward
/// over `[a, b]`, relative to `|v(τ)||w(τ)|`.
pub fn omega_drift(
    ham: &HamiltonianPath,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    a: f64,
    b: f64,
    max_step: f64,
) -> Result<f64> {
    let ts = nodes(ham, a, b, max_step);
    let pair = DMatrix::from_columns(&[v.column(0).into_owned(), w.column(0).into_owned()]);
    let omega = |z: &DMatrix<f64>| {
        let jz = apply_j(z);
        jz.column(0).dot(&z.column(1))
    };
    let start = omega(&pair);
    let mut z = pair;
    let mut drift = 0.0f64;
    for t in ts.windows(2) {
        z = step_forward(ham, t[0], t[1], &z)?;
        let scale = (z.column(0).norm() * z.column(1).norm()).max(1.0);
        drift = drift.max((omega(&z) - start).abs() / scale);
    }
    Ok(drift)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BndReport {
    pub limit_transversal: bool,
    pub initial_transversal: bool,
    /// Smallest principal angle between `E^s(0)` and `L₀`.
    pub min_principal_angle: f64,
    pub limit_min_angle: f64,
}

pub fn bnd_check(splitting: &HyperbolicSplitting, e_s_at_0: &LagrangianFrame) -> BndReport {
    let limit = splitting.stable.angles_to_horizontal()[0];
    let initial = e_s_at_0.angles_to_horizontal()[0];
    BndReport {
        limit_transversal: limit > TRANSVERSALITY_TOL,
        initial_transversal: initial > TRANSVERSALITY_TOL,
        min_principal_angle: initial.clamp(-1.0, 1.0).asin(),
        limit_min_angle: limit.clamp(-1.0, 1.0).asin(),
    }
}
