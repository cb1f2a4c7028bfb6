//! McGehee variables `τ`, `ρ = r^{(2-α)/4}`, `y = ρ s`, the constants
//! `c_α, β, δ̄, δ̃`, and trajectory construction (closed form, integration,
//! synthetic data and CSV ingestion).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config_space::{Chart, MassSystem};
use crate::error::{Error, Result};
use crate::ode::{dopri5, OdeOptions};
use crate::potential::{self, CentralConfiguration};

const UNIT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Collision,
    Parabolic,
}

impl Mode {
    fn sign(self) -> f64 {
        match self {
            Mode::Collision => -1.0,
            Mode::Parabolic => 1.0,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collision" => Ok(Mode::Collision),
            "parabolic" => Ok(Mode::Parabolic),
            _ => Err(Error::invalid(format!(
                "mode must be collision or parabolic, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    HomotheticClosedForm,
    Integrated,
    Ingested,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub alpha: f64,
    pub u_s0: f64,
    pub mode: Mode,
    pub c_alpha: f64,
    pub beta: f64,
    pub delta_bar: f64,
    pub delta_tilde: f64,
}

impl Constants {
    pub fn new(alpha: f64, u_s0: f64, mode: Mode) -> Self {
        let c_alpha = (4.0 / (2.0 - alpha)).powi(2) - 1.0;
        let beta = 2.0 * (2.0 + alpha) / (2.0 - alpha);
        let delta_bar = mode.sign() * (2.0 - alpha) / 4.0 * (2.0 * u_s0).sqrt();
        Constants {
            alpha,
            u_s0,
            mode,
            c_alpha,
            beta,
            delta_bar,
            delta_tilde: delta_bar * (beta - 2.0),
        }
    }

    /// `r¹₀ = (2-α)²/8 · U(s₀)`.
    pub fn r1(&self) -> f64 {
        (2.0 - self.alpha).powi(2) / 8.0 * self.u_s0
    }

    /// `r²₀ = 2U(s₀)`.
    pub fn r2(&self) -> f64 {
        2.0 * self.u_s0
    }

    /// `|c_α δ̄² + r¹₀ - 2U(s₀)|`, zero in exact arithmetic.
    pub fn identity_defect(&self) -> f64 {
        (self.c_alpha * self.delta_bar.powi(2) + self.r1() - self.r2()).abs()
    }

    /// Constant `K` of the Sundman–Sperling asymptotics
    /// `r(t) ~ [K |T - t|]^{2/(2+α)}`. It is fixed by the radial energy
    /// equation `½ṙ² = U(s₀) r^{-α}`: `K = (2+α)/2 · √(2U(s₀))`.
    pub fn sundman_sperling_k(&self) -> f64 {
        (2.0 + self.alpha) / 2.0 * (2.0 * self.u_s0).sqrt()
    }
}

pub fn constants(cc: &CentralConfiguration, mode: Mode) -> Constants {
    Constants::new(cc.alpha, cc.u_value, mode)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryData {
    pub mode: Mode,
    pub grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_prime: Vec<f64>,
    pub s: Vec<DVector<f64>>,
    pub s_prime: Vec<DVector<f64>>,
    pub energy_h: f64,
    pub source: Source,
    /// Physical time per sample, when known.
    pub time: Option<Vec<f64>>,
}

impl TrajectoryData {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.s.first().map_or(0, |s| s.len())
    }

    pub fn tau_max(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    /// Checks the sample invariants; messages carry 1-based sample numbers.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if n < 2 {
            return Err(Error::invalid("trajectory needs at least two samples"));
        }
        if [self.rho.len(), self.rho_prime.len(), self.s.len(), self.s_prime.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::invalid("trajectory columns have different lengths"));
        }
        let dim = self.dim();
        for k in 0..n {
            let row = k + 1;
            if self.s[k].len() != dim || self.s_prime[k].len() != dim {
                return Err(Error::invalid(format!("sample {row}: inconsistent dimension")));
            }
            if k > 0 && !(self.grid[k] > self.grid[k - 1]) {
                return Err(Error::invalid(format!("sample {row}: tau is not increasing")));
            }
            if !(self.rho[k] > 0.0) || !self.rho[k].is_finite() {
                return Err(Error::invalid(format!("sample {row}: rho must be positive")));
            }
            if !self.rho_prime[k].is_finite() {
                return Err(Error::invalid(format!("sample {row}: rho_prime is not finite")));
            }
            let norm = self.s[k].norm();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!(
                    "sample {row}: |s| = {norm} deviates from 1"
                )));
            }
            let dot = self.s[k].dot(&self.s_prime[k]);
            if dot.abs() > UNIT_TOL {
                return Err(Error::invalid(format!(
                    "sample {row}: <s, s'> = {dot:e} is not zero"
                )));
            }
        }
        if self.mode == Mode::Parabolic && self.energy_h != 0.0 {
            return Err(Error::invalid(format!(
                "parabolic trajectory must have zero energy, got {}",
                self.energy_h
            )));
        }
        Ok(())
    }
}

/// Energy `h = |y|^{-β} { c_α/2 ρ'² + ½|y'|² - |y|^{2+α} U(y) }` at sample `k`.
pub fn energy_of(chart: &Chart, traj: &TrajectoryData, k: usize) -> Result<f64> {
    let alpha = chart.system().alpha();
    let c = Constants::new(alpha, 1.0, traj.mode);
    let (rho, rp) = (traj.rho[k], traj.rho_prime[k]);
    let u = potential::value(chart, &traj.s[k])?;
    let y_prime_sq = rp * rp + rho * rho * traj.s_prime[k].norm_squared();
    let bracket = 0.5 * c.c_alpha * rp * rp + 0.5 * y_prime_sq - rho * rho * u;
    Ok(bracket * rho.powf(-c.beta))
}

fn uniform_grid(tau_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(tau_max > 0.0) {
        return Err(Error::invalid("need tau_max > 0 and at least two samples"));
    }
    Ok((0..n)
        .map(|k| tau_max * k as f64 / (n - 1) as f64)
        .collect())
}

/// Closed-form homothetic motion `ρ(τ) = e^{δ̄ τ}`, `s ≡ s₀`, `h = 0`.
pub fn homothetic_parabolic(
    cc: &CentralConfiguration,
    constants: &Constants,
    tau_max: f64,
    n_samples: usize,
) -> Result<TrajectoryData> {
    let grid = uniform_grid(tau_max, n_samples)?;
    let db = constants.delta_bar;
    let rho: Vec<f64> = grid.iter().map(|t| (db * t).exp()).collect();
    Ok(TrajectoryData {
        mode: constants.mode,
        rho_prime: rho.iter().map(|r| db * r).collect(),
        rho,
        s: vec![cc.s0.clone(); n_samples],
        s_prime: vec![DVector::zeros(cc.dim()); n_samples],
        energy_h: 0.0,
        source: Source::HomotheticClosedForm,
        time: None,
        grid,
    })
}

#[derive(Clone, Debug)]
pub struct HomotheticOptions {
    /// Initial radius `r = |q|_M`.
    pub r0: f64,
    pub tau_max: f64,
    pub n_samples: usize,
    pub ode: OdeOptions,
}

impl Default for HomotheticOptions {
    fn default() -> Self {
        Self {
            r0: 1.0,
            tau_max: 10.0,
            n_samples: 1001,
            ode: OdeOptions {
                groups: vec![0..1, 1..2, 2..3],
                ..OdeOptions::default()
            },
        }
    }
}

/// Integrates the radial equation `r̈ = -αU(s₀) r^{-α-1}` of the homothetic
/// motion with energy `h`, using `τ` as independent variable
/// (`dt/dτ = r^{(2+α)/2}`), and samples the McGehee variables on a uniform
/// `τ` grid. Physical time is carried along.
pub fn integrate_homothetic(
    chart: &Chart,
    cc: &CentralConfiguration,
    constants: &Constants,
    h: f64,
    opts: &HomotheticOptions,
) -> Result<TrajectoryData> {
    let alpha = chart.system().alpha();
    let u = cc.u_value;
    let r0 = opts.r0;
    if !(r0 > 0.0) {
        return Err(Error::invalid("initial radius must be positive"));
    }
    let kinetic = h + u * r0.powf(-alpha);
    if kinetic < 0.0 {
        return Err(Error::invalid(format!(
            "energy {h} is below the potential at r0 = {r0}"
        )));
    }
    if constants.mode == Mode::Parabolic && h != 0.0 {
        return Err(Error::invalid("parabolic homothetic motion needs h = 0"));
    }
    let rdot0 = constants.mode.sign() * (2.0 * kinetic).sqrt();
    let dmin = chart.min_distance(&cc.s0);
    let floor = chart.system().collision_floor();
    let grid = uniform_grid(opts.tau_max, opts.n_samples)?;
    let e = 1.0 + alpha / 2.0;
    let states = dopri5(
        |_, y, dy| {
            let r = y[0];
            if !(r * dmin >= floor) {
                return Err(Error::Collision {
                    distance: r * dmin,
                    floor,
                });
            }
            let re = r.powf(e);
            dy[0] = y[1] * re;
            dy[1] = -alpha * u * r.powf(-alpha / 2.0);
            dy[2] = re;
            Ok(())
        },
        0.0,
        &[r0, rdot0, 0.0],
        &grid,
        &opts.ode,
    )?;
    let n = grid.len();
    let mut rho = Vec::with_capacity(n);
    let mut rho_prime = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    for y in &states {
        let (r, rdot) = (y[0], y[1]);
        let drift = (0.5 * rdot * rdot - u * r.powf(-alpha) - h).abs() / (u * r.powf(-alpha));
        if drift > 1e-8 {
            return Err(Error::NonConvergence(format!(
                "radial energy drift {drift:e} exceeds 1e-8"
            )));
        }
        rho.push(r.powf((2.0 - alpha) / 4.0));
        rho_prime.push((2.0 - alpha) / 4.0 * r.powf((2.0 + alpha) / 4.0) * rdot);
        time.push(y[2]);
    }
    Ok(TrajectoryData {
        mode: constants.mode,
        grid,
        rho,
        rho_prime,
        s: vec![cc.s0.clone(); n],
        s_prime: vec![DVector::zeros(cc.dim()); n],
        energy_h: if constants.mode == Mode::Parabolic { 0.0 } else { h },
        source: Source::Integrated,
        time: Some(time),
    })
}

/// `∫_{τ_k}^∞ ρ^β dτ` for every sample: Hermite quadrature on the grid plus
/// the exponential tail beyond the last sample. For a collision this is the
/// remaining time `T - t_k`.
pub fn remaining_time(traj: &TrajectoryData, beta: f64) -> Result<Vec<f64>> {
    let n = traj.len();
    let g: Vec<f64> = traj.rho.iter().map(|r| r.powf(beta)).collect();
    let dg: Vec<f64> = (0..n)
        .map(|k| beta * traj.rho[k].powf(beta - 1.0) * traj.rho_prime[k])
        .collect();
    let rate = beta * traj.rho_prime[n - 1] / traj.rho[n - 1];
    if !(rate < 0.0) {
        return Err(Error::invalid("rho^beta is not decaying at the end of the grid"));
    }
    let mut out = vec![0.0; n];
    out[n - 1] = -g[n - 1] / rate;
    for k in (0..n - 1).rev() {
        let h = traj.grid[k + 1] - traj.grid[k];
        let piece = 0.5 * h * (g[k] + g[k + 1]) + h * h / 12.0 * (dg[k] - dg[k + 1]);
        out[k] = out[k + 1] + piece;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SundmanSperling {
    pub k: f64,
    /// Largest `|r [K(T-t)]^{-2/(2+α)} - 1|` over the last decade of `T - t`.
    pub max_deviation: f64,
    pub samples_in_decade: usize,
    pub remaining_at_end: f64,
}

pub fn sundman_sperling_check(
    traj: &TrajectoryData,
    constants: &Constants,
) -> Result<SundmanSperling> {
    if traj.mode != Mode::Collision {
        return Err(Error::invalid("Sundman–Sperling check applies to collisions"));
    }
    let alpha = constants.alpha;
    let rem = remaining_time(traj, constants.beta)?;
    let k = constants.sundman_sperling_k();
    let last = *rem.last().unwrap();
    let mut max_dev = 0.0f64;
    let mut count = 0;
    for (i, &t_left) in rem.iter().enumerate() {
        if t_left <= 10.0 * last {
            let r = traj.rho[i].powf(4.0 / (2.0 - alpha));
            let ratio = r * (k * t_left).powf(-2.0 / (2.0 + alpha));
            max_dev = max_dev.max((ratio - 1.0).abs());
            count += 1;
        }
    }
    Ok(SundmanSperling {
        k,
        max_deviation: max_dev,
        samples_in_decade: count,
        remaining_at_end: last,
    })
}

/// `(∫₀^∞ ρ^β dτ, T)` where `T` is the integrated time span plus the same
/// tail; they agree when the grid resolves the trajectory.
pub fn time_constraint(traj: &TrajectoryData, constants: &Constants) -> Result<(f64, f64)> {
    let time = traj
        .time
        .as_ref()
        .ok_or_else(|| Error::invalid("trajectory carries no physical time"))?;
    let rem = remaining_time(traj, constants.beta)?;
    let tail = *rem.last().unwrap();
    Ok((rem[0], time[time.len() - 1] - time[0] + tail))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailDiagnostics {
    /// `|ρ'/ρ - δ̄|` at the last sample, with `δ̄` built from `U(s)` there.
    pub rate_error: f64,
    /// Largest `|s'|` over the last tenth of the grid.
    pub s_prime_max: f64,
    /// Largest distance of `s` from its final value over the last tenth.
    pub s_spread: f64,
    pub qualifies: bool,
}

pub fn tail_diagnostics(chart: &Chart, traj: &TrajectoryData, tol: f64) -> Result<TailDiagnostics> {
    let n = traj.len();
    let start = n - (n / 10).max(1);
    let alpha = chart.system().alpha();
    let last = n - 1;
    let u_end = potential::value(chart, &traj.s[last])?;
    let sign = if traj.rho_prime[last] < 0.0 { -1.0 } else { 1.0 };
    let db = sign * (2.0 - alpha) / 4.0 * (2.0 * u_end).sqrt();
    let rate_error = (traj.rho_prime[last] / traj.rho[last] - db).abs();
    let mut s_prime_max = 0.0f64;
    let mut s_spread = 0.0f64;
    for k in start..n {
        s_prime_max = s_prime_max.max(traj.s_prime[k].norm());
        s_spread = s_spread.max((&traj.s[k] - &traj.s[last]).norm());
    }
    Ok(TailDiagnostics {
        rate_error,
        s_prime_max,
        s_spread,
        qualifies: rate_error < tol && s_prime_max < tol && s_spread < tol,
    })
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub tau_max: f64,
    pub n_samples: usize,
    pub ode: OdeOptions,
    /// Bound on `|h(τ) - h(0)| / max(1, U)`.
    pub energy_tol: f64,
    pub tail_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tau_max: 10.0,
            n_samples: 1001,
            ode: OdeOptions::default(),
            energy_tol: 1e-6,
            tail_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonRun {
    pub trajectory: TrajectoryData,
    pub tail: TailDiagnostics,
    pub energy: f64,
    pub energy_drift: f64,
    /// Moment of inertia `r²` per sample.
    pub inertia: Vec<f64>,
}

/// Integrates `ẍ = ∇U(x)` in chart coordinates with `τ` as independent
/// variable and samples the McGehee variables. Any mutual distance below the
/// collision floor aborts the run.
pub fn integrate_newton(
    chart: &Chart,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonRun> {
    let n = chart.dim();
    if q0.len() != n || v0.len() != n {
        return Err(Error::invalid("initial data must be chart vectors"));
    }
    let alpha = chart.system().alpha();
    let e = 1.0 + alpha / 2.0;
    let h0 = 0.5 * v0.norm_squared() - potential::value(chart, q0)?;
    let grid = uniform_grid(opts.tau_max, opts.n_samples)?;
    let mut y0 = Vec::with_capacity(2 * n + 1);
    y0.extend(q0.iter());
    y0.extend(v0.iter());
    y0.push(0.0);
    let ode = OdeOptions {
        groups: vec![0..n, n..2 * n, 2 * n..2 * n + 1],
        ..opts.ode.clone()
    };
    let states = dopri5(
        |_, y, dy| {
            let x = DVector::from_column_slice(&y[..n]);
            let g = potential::grad(chart, &x)?;
            let re = x.norm().powf(e);
            for i in 0..n {
                dy[i] = y[n + i] * re;
                dy[n + i] = g[i] * re;
            }
            dy[2 * n] = re;
            Ok(())
        },
        0.0,
        &y0,
        &grid,
        &ode,
    )?;
    let m = grid.len();
    let mut rho = Vec::with_capacity(m);
    let mut rho_prime = Vec::with_capacity(m);
    let mut s = Vec::with_capacity(m);
    let mut s_prime = Vec::with_capacity(m);
    let mut time = Vec::with_capacity(m);
    let mut inertia = Vec::with_capacity(m);
    let mut drift = 0.0f64;
    for y in &states {
        let x = DVector::from_column_slice(&y[..n]);
        let v = DVector::from_column_slice(&y[n..2 * n]);
        let u = potential::value(chart, &x)?;
        let hk = 0.5 * v.norm_squared() - u;
        drift = drift.max((hk - h0).abs() / u.max(1.0));
        let r = x.norm();
        let sk = &x / r;
        let rdot = sk.dot(&v);
        let sdot = (&v - &sk * rdot) / r;
        rho.push(r.powf((2.0 - alpha) / 4.0));
        rho_prime.push((2.0 - alpha) / 4.0 * r.powf((2.0 + alpha) / 4.0) * rdot);
        s_prime.push(sdot * r.powf(e));
        s.push(sk);
        time.push(y[2 * n]);
        inertia.push(r * r);
    }
    if drift > opts.energy_tol {
        return Err(Error::NonConvergence(format!(
            "energy drift {drift:e} exceeds {:e}",
            opts.energy_tol
        )));
    }
    let parabolic = h0.abs() <= 1e-9 * potential::value(chart, q0)? && rho_prime[m - 1] > 0.0;
    let trajectory = TrajectoryData {
        mode: if parabolic { Mode::Parabolic } else { Mode::Collision },
        grid,
        rho,
        rho_prime,
        s,
        s_prime,
        energy_h: if parabolic { 0.0 } else { h0 },
        source: Source::Integrated,
        time: Some(time),
    };
    let tail = tail_diagnostics(chart, &trajectory, opts.tail_tol)?;
    Ok(NewtonRun {
        trajectory,
        tail,
        energy: h0,
        energy_drift: drift,
        inertia,
    })
}

/// `s(τ) = normalize(s₀ + ε e^{-λτ} w)` with the closed-form homothetic `ρ`.
/// Not a solution of the equations of motion; it is admissible input for the
/// index engines because its coefficients converge to the limit ones.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_perturbation(
    chart: &Chart,
    cc: &CentralConfiguration,
    constants: &Constants,
    eps: f64,
    lambda: f64,
    w: &DVector<f64>,
    tau_max: f64,
    n_samples: usize,
) -> Result<TrajectoryData> {
    if w.len() != cc.dim() || (w.norm() - 1.0).abs() > 1e-10 || w.dot(&cc.s0).abs() > 1e-10 {
        return Err(Error::invalid("direction must be a unit chart vector orthogonal to s0"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("decay rate must be positive"));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid(format!(
            "amplitude {eps} outside [0, 1): normalization degenerates"
        )));
    }
    let mut traj = homothetic_parabolic(cc, constants, tau_max, n_samples)?;
    traj.source = Source::Synthetic;
    let floor = chart.system().collision_floor();
    for k in 0..traj.len() {
        let a = eps * (-lambda * traj.grid[k]).exp();
        let x = &cc.s0 + w * a;
        let nx = x.norm();
        let s = &x / nx;
        let xp = w * (-lambda * a);
        let sp = (&xp - &s * s.dot(&xp)) / nx;
        let dmin = chart.min_distance(&s);
        if dmin < floor {
            return Err(Error::Collision {
                distance: dmin,
                floor,
            });
        }
        traj.s[k] = s;
        traj.s_prime[k] = sp;
    }
    Ok(traj)
}

/// Unit vector orthogonal to `s₀`, built deterministically from `seed`.
pub fn direction_from_seed(s0: &DVector<f64>, seed: u64) -> DVector<f64> {
    // splitmix64: a fixed, dependency-free sequence so the CLI is reproducible
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    loop {
        let v = DVector::from_fn(s0.len(), |_, _| next());
        let w = &v - s0 * s0.dot(&v);
        if w.norm() > 1e-3 {
            return w.normalize();
        }
    }
}

// ---------------------------------------------------------------------------
// files

pub(crate) fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["tau", "rho", "rho_prime", "h"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=dim).map(|i| format!("s_{i}")));
    h.extend((1..=dim).map(|i| format!("sp_{i}")));
    h
}

pub(crate) fn trajectory_row(traj: &TrajectoryData, k: usize) -> Vec<String> {
    let mut row = vec![
        format!("{:e}", traj.grid[k]),
        format!("{:e}", traj.rho[k]),
        format!("{:e}", traj.rho_prime[k]),
        format!("{:e}", traj.energy_h),
    ];
    row.extend(traj.s[k].iter().map(|v| format!("{v:e}")));
    row.extend(traj.s_prime[k].iter().map(|v| format!("{v:e}")));
    row
}

pub fn write_trajectory_csv(traj: &TrajectoryData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(traj.dim()))?;
    for k in 0..traj.len() {
        w.write_record(trajectory_row(traj, k))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryData> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory_csv(&text)
}

/// Parses the trajectory CSV format. The mode is read off the sign of the
/// final `rho_prime`.
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryData> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let hdr = rdr.headers()?.clone();
    let line0 = hdr.position().map_or(1, |p| p.line() as usize);
    let cols = hdr.len();
    if cols < 6 || (cols - 4) % 2 != 0 {
        return Err(Error::Parse {
            line: line0,
            message: format!("unexpected column count {cols}"),
        });
    }
    let dim = (cols - 4) / 2;
    let expected = trajectory_header(dim);
    if hdr.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: line0,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut traj = TrajectoryData {
        mode: Mode::Collision,
        grid: Vec::new(),
        rho: Vec::new(),
        rho_prime: Vec::new(),
        s: Vec::new(),
        s_prime: Vec::new(),
        energy_h: 0.0,
        source: Source::Ingested,
        time: None,
    };
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != cols {
            return Err(Error::Parse {
                line,
                message: format!("expected {cols} fields, found {}", rec.len()),
            });
        }
        let vals: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("field {} ({}) is not a number: {f:?}", i + 1, &hdr[i]),
                })
            })
            .collect::<Result<_>>()?;
        if lines.is_empty() {
            traj.energy_h = vals[3];
        } else if vals[3] != traj.energy_h {
            return Err(Error::Parse {
                line,
                message: "energy column must be constant".into(),
            });
        }
        traj.grid.push(vals[0]);
        traj.rho.push(vals[1]);
        traj.rho_prime.push(vals[2]);
        traj.s.push(DVector::from_column_slice(&vals[4..4 + dim]));
        traj.s_prime.push(DVector::from_column_slice(&vals[4 + dim..]));
        lines.push(line);
    }
    if traj.grid.len() < 2 {
        return Err(Error::Parse {
            line: line0,
            message: "need at least two samples".into(),
        });
    }
    traj.mode = if *traj.rho_prime.last().unwrap() < 0.0 {
        Mode::Collision
    } else {
        Mode::Parabolic
    };
    // translate sample numbers in validation messages into file lines
    traj.validate().map_err(|e| match e {
        Error::InvalidInput(msg) => {
            let line = msg
                .strip_prefix("sample ")
                .and_then(|r| r.split(':').next())
                .and_then(|n| n.parse::<usize>().ok())
                .map_or(line0, |k| lines[k - 1]);
            Error::Parse { line, message: msg }
        }
        other => other,
    })?;
    Ok(traj)
}

/// Sidecar record describing the chart used by a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartRecord {
    pub masses: Vec<f64>,
    pub d: usize,
    pub alpha: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major basis entries.
    pub basis: Vec<f64>,
}

impl ChartRecord {
    pub fn new(chart: &Chart) -> Self {
        let sys = chart.system();
        let b = chart.basis();
        ChartRecord {
            masses: sys.masses().to_vec(),
            d: sys.d(),
            alpha: sys.alpha(),
            rows: b.nrows(),
            cols: b.ncols(),
            basis: b.transpose().iter().copied().collect(),
        }
    }

    pub fn to_chart(&self) -> Result<Chart> {
        let sys = MassSystem::new(self.masses.clone(), self.d, self.alpha)?;
        if self.basis.len() != self.rows * self.cols {
            return Err(Error::invalid("chart record has the wrong number of entries"));
        }
        let b = DMatrix::from_row_slice(self.rows, self.cols, &self.basis);
        Chart::from_basis(&sys, b)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
