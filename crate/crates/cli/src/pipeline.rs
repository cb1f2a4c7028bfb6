//! The verbs: each builds its inputs from a [`RunConfig`] and returns a
//! report plus an exit code.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use collision_index::config_space::{build_chart, Chart, MassSystem};
use collision_index::forms::{
    assemble_coefficients, assemble_hamiltonian, limit_blocks, limit_spectra, write_coefficients_csv,
    CoefficientPath, LimitSpectra,
};
use collision_index::maslov::GeometricOptions;
use collision_index::mcgehee::{
    constants, direction_from_seed, homothetic_parabolic, integrate_homothetic, read_trajectory_csv,
    synthetic_perturbation, write_trajectory_csv, ChartRecord, Constants, HomotheticOptions,
};
use collision_index::morse::{spectral_index, verify_index_theorem, Discretization, IndexTheoremReport, TheoremOptions};
use collision_index::potential::{check_bs, collinear_guess, find_central_configuration, polygon_guess, CcRecord};
use collision_index::symplectic::{bnd_check, hyperbolic_splitting, Splitting};
use collision_index::{BsReport, CentralConfiguration, Crossing, Mode, TrajectoryData};
use serde::Serialize;

use crate::config::{ConfigError, Guess, RunConfig, ScanParameter, TrajectoryKind};

pub const EXIT_OK: u8 = 0;
pub const EXIT_HYPOTHESIS: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Warning {
    pub code: &'static str,
    pub message: String,
}

fn warn(code: &'static str, message: impl Into<String>) -> Warning {
    Warning {
        code,
        message: message.into(),
    }
}

/// Codes for the free-text warnings of the index engines.
fn engine_warning(message: &str) -> Warning {
    let code = if message.contains("not hyperbolic") {
        "W_LIMIT_NOT_HYPERBOLIC"
    } else if message.contains("perturbation") {
        "W_FACTORIZATION_PERTURBED"
    } else if message.contains("grid spacing") {
        "W_COARSE_COEFFICIENTS"
    } else if message.contains("enlarged") {
        "W_SIGMA0_ENLARGED"
    } else if message.contains("BND") {
        "W_BND"
    } else if message.contains("tail") {
        "W_TAIL_NOT_SETTLED"
    } else if message.contains("stable") || message.contains("replay") {
        "W_INDEX_UNSTABLE"
    } else if message.contains("disagree") || message.contains("mismatch") || message.contains("≠") {
        "W_INDEX_MISMATCH"
    } else {
        "W_ENGINE"
    };
    warn(code, message)
}

pub enum Output {
    Json(serde_json::Value),
    Text(String),
}

pub struct Outcome {
    pub output: Output,
    pub exit: u8,
}

fn json<T: Serialize>(value: &T, exit: u8) -> Result<Outcome> {
    Ok(Outcome {
        output: Output::Json(serde_json::to_value(value)?),
        exit,
    })
}

fn system(cfg: &RunConfig, masses: &[f64], alpha: f64) -> Result<MassSystem> {
    MassSystem::new(masses.to_vec(), cfg.d, alpha).map_err(|e| ConfigError(format!("system: {e}")).into())
}

fn central_configuration(cfg: &RunConfig, chart: &Chart) -> Result<CentralConfiguration> {
    let cc = match &cfg.guess {
        Guess::Polygon => find_central_configuration(chart, &polygon_guess(chart)?)?,
        Guess::Collinear => find_central_configuration(chart, &collinear_guess(chart)?)?,
        Guess::File(p) => CcRecord::read(p)
            .with_context(|| format!("reading cc.file {}", p.display()))?
            .to_cc(chart)?,
    };
    Ok(cc)
}

struct Setup {
    chart: Chart,
    cc: CentralConfiguration,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let chart = build_chart(&system(cfg, &cfg.masses, cfg.alpha)?);
    let cc = central_configuration(cfg, &chart)?;
    Ok(Setup { chart, cc })
}

fn discretization(cfg: &RunConfig, k: &Constants) -> Result<Discretization> {
    let base = Discretization::default_for(k);
    let length = cfg.length.unwrap_or(base.length);
    Ok(match cfg.mesh {
        Some(m) => Discretization::new(length, m)?,
        None if cfg.length.is_some() => Discretization::with_length(length),
        None => base,
    })
}

fn theorem_options(cfg: &RunConfig) -> TheoremOptions {
    TheoremOptions {
        geometric: GeometricOptions {
            max_step: cfg.max_step,
            tail_tol: cfg.tail_tol,
            sigma_samples: cfg.sigma_samples,
            ..GeometricOptions::default()
        },
    }
}

fn trajectory(cfg: &RunConfig, s: &Setup, disc: &Discretization) -> Result<(TrajectoryData, Vec<Warning>)> {
    let k = constants(&s.cc, cfg.mode);
    let tau_max = cfg.tau_max.unwrap_or(disc.length);
    let n = cfg.samples.unwrap_or(disc.mesh + 1);
    let mut warnings = Vec::new();
    let traj = match &cfg.trajectory {
        TrajectoryKind::Homothetic => homothetic_parabolic(&s.cc, &k, tau_max, n)?,
        TrajectoryKind::Integrate { h, r0 } => {
            let opts = HomotheticOptions {
                r0: *r0,
                tau_max,
                n_samples: n,
                ..HomotheticOptions::default()
            };
            integrate_homothetic(&s.chart, &s.cc, &k, *h, &opts)?
        }
        TrajectoryKind::Synthetic { eps, lambda, seed } => {
            warnings.push(warn(
                "W_SYNTHETIC",
                "synthetic perturbation: valid input for the index engines, not a solution",
            ));
            let w = direction_from_seed(&s.cc.s0, *seed);
            synthetic_perturbation(&s.chart, &s.cc, &k, *eps, *lambda, &w, tau_max, n)?
        }
        TrajectoryKind::Ingest { path, chart } => {
            if let Some(c) = chart {
                let rec = ChartRecord::read(c).with_context(|| format!("reading {}", c.display()))?;
                let other = rec.to_chart()?;
                if (other.basis() - s.chart.basis()).amax() > 1e-12 {
                    return Err(ConfigError(format!(
                        "trajectory.chart {} does not match the chart built for system.masses",
                        c.display()
                    ))
                    .into());
                }
            }
            let t = read_trajectory_csv(path).with_context(|| format!("reading {}", path.display()))?;
            if t.dim() != s.cc.dim() {
                return Err(ConfigError(format!(
                    "trajectory.path has {} angular columns, the system needs {}",
                    t.dim(),
                    s.cc.dim()
                ))
                .into());
            }
            if t.mode != cfg.mode {
                warnings.push(warn("W_MODE_FROM_FILE", "mode taken from the trajectory file"));
            }
            t
        }
    };
    Ok((traj, warnings))
}

pub fn cmd_cc(cfg: &RunConfig) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        record: CcRecord,
        positions: Vec<Vec<f64>>,
        u_value: f64,
        mu1: f64,
        bs_margin: f64,
        kernel_dim: usize,
    }
    let s = setup(cfg)?;
    let report = Report {
        record: CcRecord::new(&s.chart, &s.cc),
        positions: s
            .chart
            .positions(&s.cc.s0)
            .iter()
            .map(|p| p.iter().copied().collect())
            .collect(),
        u_value: s.cc.u_value,
        mu1: s.cc.mu1,
        bs_margin: s.cc.bs_margin,
        kernel_dim: s.cc.kernel_dim,
    };
    json(&report, EXIT_OK)
}

fn bs_warnings(bs: &BsReport) -> Vec<Warning> {
    let mut w = Vec::new();
    if !bs.holds {
        w.push(warn(
            "W_BS_FAILS",
            format!("[BS] fails: margin {:e}; the spectral index is infinite", bs.margin),
        ));
    }
    if bs.degenerate {
        w.push(warn("W_BS_DEGENERATE", "margin within tolerance of zero; borderline case"));
    }
    w
}

pub fn cmd_bs(cfg: &RunConfig) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        bs: BsReport,
        u_value: f64,
        warnings: Vec<Warning>,
    }
    let s = setup(cfg)?;
    let bs = check_bs(&s.cc);
    let exit = if bs.holds { EXIT_OK } else { EXIT_HYPOTHESIS };
    json(
        &Report {
            warnings: bs_warnings(&bs),
            bs,
            u_value: s.cc.u_value,
        },
        exit,
    )
}

#[derive(Serialize)]
struct LimitReport {
    constants: Constants,
    spectra: LimitSpectra,
    /// `[re, im]` pairs.
    h_star_eigenvalues: Vec<[f64; 2]>,
    hyperbolic: bool,
    spectral_gap: f64,
    limit_bnd: Option<bool>,
}

fn limit_report(cc: &CentralConfiguration, mode: Mode) -> Result<LimitReport> {
    let k = constants(cc, mode);
    let coeff = CoefficientPath::constant(limit_blocks(cc, &k, 0.0), vec![0.0, 1.0])?;
    let ham = assemble_hamiltonian(&coeff)?;
    let split = hyperbolic_splitting(&ham.h_star)?;
    let limit_bnd = match &split {
        Splitting::Hyperbolic(h) => Some(bnd_check(h, &h.stable).limit_transversal),
        Splitting::NotHyperbolic(_) => None,
    };
    Ok(LimitReport {
        spectra: limit_spectra(cc, &k),
        constants: k,
        h_star_eigenvalues: split.eigenvalues().iter().map(|z| [z.re, z.im]).collect(),
        hyperbolic: split.is_hyperbolic(),
        spectral_gap: split.spectral_gap(),
        limit_bnd,
    })
}

pub fn cmd_limit(cfg: &RunConfig) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        #[serde(flatten)]
        limit: LimitReport,
        warnings: Vec<Warning>,
    }
    let s = setup(cfg)?;
    let limit = limit_report(&s.cc, cfg.mode)?;
    let mut warnings = bs_warnings(&check_bs(&s.cc));
    if !limit.hyperbolic {
        warnings.push(warn("W_LIMIT_NOT_HYPERBOLIC", "H* has eigenvalues on the imaginary axis"));
    }
    if limit.limit_bnd == Some(false) {
        warnings.push(warn("W_BND", "E^s_* is not transversal to L0"));
    }
    let exit = if limit.hyperbolic && limit.limit_bnd == Some(true) {
        EXIT_OK
    } else {
        EXIT_HYPOTHESIS
    };
    json(&Report { limit, warnings }, exit)
}

pub fn cmd_trajectory(cfg: &RunConfig) -> Result<Outcome> {
    let s = setup(cfg)?;
    let disc = discretization(cfg, &constants(&s.cc, cfg.mode))?;
    let (traj, _) = trajectory(cfg, &s, &disc)?;
    match &cfg.report {
        Some(path) => {
            write_trajectory_csv(&traj, path)?;
            ChartRecord::new(&s.chart).write(&path.with_extension("chart.json"))?;
            Ok(Outcome {
                output: Output::Text(String::new()),
                exit: EXIT_OK,
            })
        }
        None => {
            let dir = std::env::temp_dir().join(format!("collision-index-{}", std::process::id()));
            fs::create_dir_all(&dir)?;
            let tmp = dir.join("trajectory.csv");
            write_trajectory_csv(&traj, &tmp)?;
            let text = fs::read_to_string(&tmp)?;
            fs::remove_dir_all(&dir).ok();
            Ok(Outcome {
                output: Output::Text(text),
                exit: EXIT_OK,
            })
        }
    }
}

#[derive(Serialize)]
struct Flagged<T> {
    value: T,
    stable: bool,
}

#[derive(Serialize)]
struct Indices {
    iota_spec: Flagged<usize>,
    iota_geo: Flagged<i64>,
    sf_sigma: Flagged<i64>,
    sigma_path_maslov: Flagged<i64>,
    all_agree: bool,
}

#[derive(Serialize)]
struct CcSummary {
    u_value: f64,
    mu1: f64,
    bs_margin: f64,
    residual: f64,
}

#[derive(Serialize)]
struct IndexReport {
    config: std::collections::BTreeMap<String, String>,
    cc: CcSummary,
    limit: LimitReport,
    bnd_initial: Option<bool>,
    crossings: Vec<Crossing>,
    indices: Option<Indices>,
    /// Index across `L, 1.5L, 2L` when [BS] fails.
    growth: Option<Vec<(f64, usize)>>,
    warnings: Vec<Warning>,
}

fn write_plot_data(dir: &Path, chart: &Chart, traj: &TrajectoryData, coeff: &CoefficientPath, crossings: &[Crossing]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_trajectory_csv(traj, &dir.join("trajectory.csv"))?;
    ChartRecord::new(chart).write(&dir.join("trajectory.chart.json"))?;
    write_coefficients_csv(coeff, Some(traj), &dir.join("coefficients.csv"))?;
    let mut text = String::from("location,kernel_dim,signature,regular\n");
    for c in crossings {
        text.push_str(&format!("{},{},{},{}\n", c.location, c.kernel_dim, c.signature, c.regular));
    }
    fs::write(dir.join("crossings.csv"), text)?;
    Ok(())
}

struct TheoremRun {
    setup: Setup,
    traj: TrajectoryData,
    /// Kept apart so a [BS] refusal can still produce a report.
    report: Result<IndexTheoremReport>,
    warnings: Vec<Warning>,
    disc: Discretization,
}

fn run_theorem(cfg: &RunConfig) -> Result<TheoremRun> {
    let s = setup(cfg)?;
    let disc = discretization(cfg, &constants(&s.cc, cfg.mode))?;
    let (traj, warnings) = trajectory(cfg, &s, &disc)?;
    let report = verify_index_theorem(&s.chart, &s.cc, &traj, &disc, &theorem_options(cfg)).map_err(Into::into);
    Ok(TheoremRun {
        setup: s,
        traj,
        report,
        warnings,
        disc,
    })
}

pub fn cmd_index(cfg: &RunConfig) -> Result<Outcome> {
    let TheoremRun {
        setup: s,
        traj,
        report,
        mut warnings,
        disc,
    } = run_theorem(cfg)?;
    let bs = check_bs(&s.cc);
    warnings.extend(bs_warnings(&bs));
    let k = constants(&s.cc, traj.mode);
    let coeff = assemble_coefficients(&s.chart, &s.cc, &k, &traj, 0.0)?;
    let limit = limit_report(&s.cc, traj.mode)?;
    let summary = CcSummary {
        u_value: s.cc.u_value,
        mu1: s.cc.mu1,
        bs_margin: s.cc.bs_margin,
        residual: s.cc.residual,
    };
    if !bs.holds {
        let morse = spectral_index(&coeff, &disc)?;
        warnings.extend(morse.warnings.iter().map(|m| engine_warning(m)));
        let growth = morse
            .growth
            .as_ref()
            .map(|g| g.iter().map(|r| (r.length, r.index)).collect());
        if let Some(dir) = &cfg.plot_dir {
            write_plot_data(dir, &s.chart, &traj, &coeff, &[])?;
        }
        let out = IndexReport {
            config: cfg.echo.clone(),
            cc: summary,
            limit,
            bnd_initial: None,
            crossings: Vec::new(),
            indices: None,
            growth,
            warnings,
        };
        return json(&out, EXIT_HYPOTHESIS);
    }
    let r = report?;
    warnings.extend(r.morse.warnings.iter().map(|m| engine_warning(m)));
    warnings.extend(r.diagnostics.iter().map(|m| engine_warning(m)));
    if !r.stable {
        warnings.push(warn("W_INDEX_UNSTABLE", "index changed under the L/mesh refinement replays"));
    }
    if !r.all_agree {
        warnings.push(warn("W_INDEX_MISMATCH", "the index chain does not close"));
    }
    if let Some(dir) = &cfg.plot_dir {
        write_plot_data(dir, &s.chart, &traj, &coeff, &r.crossings)?;
    }
    let flow = &r.morse.flow;
    let indices = Indices {
        iota_spec: Flagged {
            value: r.iota_spec,
            stable: r.stable,
        },
        iota_geo: Flagged {
            value: r.iota_geo,
            stable: r.bnd.limit_transversal && r.bnd.initial_transversal && r.crossings.iter().all(|c| c.regular),
        },
        sf_sigma: Flagged {
            value: r.sf_sigma,
            stable: flow.monotone && flow.unresolved_clusters == 0,
        },
        sigma_path_maslov: Flagged {
            value: r.sigma_path_maslov,
            stable: r.rectangle.limit_edge_transversal && r.rectangle.sigma0_edge_crossings == 0,
        },
        all_agree: r.all_agree,
    };
    let exit = if r.all_agree { EXIT_OK } else { EXIT_NUMERICAL };
    let out = IndexReport {
        config: cfg.echo.clone(),
        cc: summary,
        limit,
        bnd_initial: Some(r.bnd.initial_transversal),
        crossings: r.crossings.clone(),
        indices: Some(indices),
        growth: None,
        warnings,
    };
    json(&out, exit)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        config: std::collections::BTreeMap<String, String>,
        theorem: IndexTheoremReport,
        warnings: Vec<Warning>,
    }
    let run = run_theorem(cfg)?;
    let theorem = run.report?;
    let mut warnings = run.warnings;
    warnings.extend(theorem.diagnostics.iter().map(|m| engine_warning(m)));
    let exit = if theorem.all_agree && theorem.stable {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    };
    json(
        &Report {
            config: cfg.echo.clone(),
            theorem,
            warnings,
        },
        exit,
    )
}

/// CSV `parameter,bs_margin,hyperbolic,iota_spec,iota_geo`; the indices are
/// empty where [BS] fails or when `scan.indices = false`.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome> {
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| ConfigError("scan needs scan.parameter, scan.from and scan.to".into()))?;
    let mut text = String::from("parameter,bs_margin,hyperbolic,iota_spec,iota_geo\n");
    for i in 0..=scan.steps {
        let p = scan.from + (scan.to - scan.from) * i as f64 / scan.steps as f64;
        let mut point = cfg.clone();
        match scan.parameter {
            ScanParameter::Mass(j) => point.masses[j] = p,
            ScanParameter::Alpha => point.alpha = p,
        }
        let chart = build_chart(&system(&point, &point.masses, point.alpha)?);
        let cc = central_configuration(&point, &chart).with_context(|| format!("scan point {p}"))?;
        let bs = check_bs(&cc);
        let limit = limit_report(&cc, point.mode)?;
        let (spec, geo) = if scan.indices && bs.holds && limit.hyperbolic {
            let s = Setup { chart, cc };
            let disc = discretization(&point, &constants(&s.cc, point.mode))?;
            let (traj, _) = trajectory(&point, &s, &disc)?;
            let r = verify_index_theorem(&s.chart, &s.cc, &traj, &disc, &theorem_options(&point))
                .with_context(|| format!("scan point {p}"))?;
            (r.iota_spec.to_string(), r.iota_geo.to_string())
        } else {
            (String::new(), String::new())
        };
        text.push_str(&format!("{p},{},{},{spec},{geo}\n", bs.margin, limit.hyperbolic));
    }
    Ok(Outcome {
        output: Output::Text(text),
        exit: EXIT_OK,
    })
}
