//! Run configuration: flat `key = value` lines with dotted keys.
//!
//! ```text
//! # comment
//! system.masses = 1, 1, 1
//! system.alpha = 1
//! trajectory.kind = synthetic
//! trajectory.eps = 0.1
//! ```
//!
//! Blank lines and `#` comments are ignored. Later lines override earlier
//! ones, and `--set key=value` overrides the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use collision_index::Mode;

/// A configuration problem; the CLI exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

const KEYS: &[&str] = &[
    "system.masses",
    "system.d",
    "system.alpha",
    "mode",
    "cc.guess",
    "cc.file",
    "trajectory.kind",
    "trajectory.h",
    "trajectory.r0",
    "trajectory.tau_max",
    "trajectory.samples",
    "trajectory.path",
    "trajectory.chart",
    "trajectory.eps",
    "trajectory.lambda",
    "trajectory.seed",
    "numerics.L",
    "numerics.mesh",
    "numerics.max_step",
    "numerics.tail_tol",
    "numerics.sigma_samples",
    "outputs.report",
    "outputs.plot_dir",
    "scan.parameter",
    "scan.from",
    "scan.to",
    "scan.steps",
    "scan.indices",
];

/// Raw key/value pairs in key order.
#[derive(Clone, Debug, Default)]
pub struct RawConfig(pub BTreeMap<String, String>);

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", i + 1));
            };
            out.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return err(format!("unknown key `{key}`"));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        match kv.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v.trim()),
            None => err(format!("override `{kv}` is not `key=value`")),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ConfigError(format!("{key}: `{v}` is not a finite number")))
            })
            .transpose()
    }

    fn int(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| ConfigError(format!("{key}: `{v}` is not a non-negative integer")))
            })
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.num(key)? {
            Some(x) if x <= 0.0 => err(format!("{key} = {x} must be positive")),
            other => Ok(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Guess {
    Polygon,
    Collinear,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryKind {
    Homothetic,
    Integrate { h: f64, r0: f64 },
    Ingest { path: PathBuf, chart: Option<PathBuf> },
    Synthetic { eps: f64, lambda: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScanParameter {
    /// 0-based mass index.
    Mass(usize),
    Alpha,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub parameter: ScanParameter,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub indices: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub masses: Vec<f64>,
    pub d: usize,
    pub alpha: f64,
    pub mode: Mode,
    pub guess: Guess,
    pub trajectory: TrajectoryKind,
    pub tau_max: Option<f64>,
    pub samples: Option<usize>,
    pub length: Option<f64>,
    pub mesh: Option<usize>,
    pub max_step: f64,
    pub tail_tol: f64,
    pub sigma_samples: usize,
    pub report: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
    pub scan: Option<Scan>,
    /// Effective key/value pairs, echoed into reports.
    pub echo: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let masses: Vec<f64> = match raw.get("system.masses") {
            None => return err("system.masses is required"),
            Some(v) => v
                .split(',')
                .map(|m| {
                    let m = m.trim();
                    m.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x > 0.0)
                        .ok_or_else(|| ConfigError(format!("system.masses: `{m}` is not a positive number")))
                })
                .collect::<Result<_>>()?,
        };
        if masses.len() < 2 {
            return err("system.masses needs at least two bodies");
        }
        let d = raw.int("system.d")?.unwrap_or(2) as usize;
        if d < 2 {
            return err(format!("system.d = {d} must be at least 2"));
        }
        let alpha = raw.num("system.alpha")?.unwrap_or(1.0);
        if !(alpha > 0.0 && alpha < 2.0) {
            return err(format!("system.alpha = {alpha} is outside the valid range (0,2)"));
        }
        let mode = match raw.get("mode").unwrap_or("parabolic") {
            "parabolic" => Mode::Parabolic,
            "collision" => Mode::Collision,
            other => return err(format!("mode: `{other}` is not `collision` or `parabolic`")),
        };
        let guess = match (raw.get("cc.file"), raw.get("cc.guess").unwrap_or("polygon")) {
            (Some(f), _) => Guess::File(PathBuf::from(f)),
            (None, "polygon") => Guess::Polygon,
            (None, "collinear") => Guess::Collinear,
            (None, other) => return err(format!("cc.guess: `{other}` is not `polygon` or `collinear`")),
        };
        let trajectory = match raw.get("trajectory.kind").unwrap_or("homothetic") {
            "homothetic" => TrajectoryKind::Homothetic,
            "integrate" => TrajectoryKind::Integrate {
                h: raw.num("trajectory.h")?.unwrap_or(0.0),
                r0: raw.positive("trajectory.r0")?.unwrap_or(1.0),
            },
            "ingest" => TrajectoryKind::Ingest {
                path: PathBuf::from(
                    raw.get("trajectory.path")
                        .ok_or_else(|| ConfigError("trajectory.path is required for ingest".into()))?,
                ),
                chart: raw.get("trajectory.chart").map(PathBuf::from),
            },
            "synthetic" => {
                let eps = raw.num("trajectory.eps")?.unwrap_or(0.1);
                if !(0.0..=0.5).contains(&eps) {
                    return err(format!("trajectory.eps = {eps} is outside [0, 0.5]"));
                }
                TrajectoryKind::Synthetic {
                    eps,
                    lambda: raw.positive("trajectory.lambda")?.unwrap_or(1.0),
                    seed: raw.int("trajectory.seed")?.unwrap_or(1),
                }
            }
            other => {
                return err(format!(
                    "trajectory.kind: `{other}` is not one of homothetic, integrate, ingest, synthetic"
                ))
            }
        };
        let mesh = raw.int("numerics.mesh")?.map(|m| m as usize);
        if let Some(m) = mesh {
            if m < 16 {
                return err(format!("numerics.mesh = {m} must be at least 16"));
            }
        }
        let samples = raw.int("trajectory.samples")?.map(|m| m as usize);
        if let Some(s) = samples {
            if s < 2 {
                return err(format!("trajectory.samples = {s} must be at least 2"));
            }
        }
        let sigma_samples = raw.int("numerics.sigma_samples")?.unwrap_or(64) as usize;
        if sigma_samples < 2 {
            return err("numerics.sigma_samples must be at least 2");
        }
        let scan = match raw.get("scan.parameter") {
            None => None,
            Some(p) => {
                let parameter = if p == "alpha" {
                    ScanParameter::Alpha
                } else if let Some(i) = p.strip_prefix("mass.") {
                    let i: usize = i
                        .parse()
                        .ok()
                        .filter(|&i| i >= 1 && i <= masses.len())
                        .ok_or_else(|| {
                            ConfigError(format!("scan.parameter: mass index in `{p}` must be 1..{}", masses.len()))
                        })?;
                    ScanParameter::Mass(i - 1)
                } else {
                    return err(format!("scan.parameter: `{p}` is not `alpha` or `mass.<i>`"));
                };
                let from = raw.num("scan.from")?.ok_or_else(|| ConfigError("scan.from is required".into()))?;
                let to = raw.num("scan.to")?.ok_or_else(|| ConfigError("scan.to is required".into()))?;
                if !(to > from) {
                    return err(format!("scan.to = {to} must exceed scan.from = {from}"));
                }
                if parameter == ScanParameter::Alpha && !(from > 0.0 && to < 2.0) {
                    return err("scan over alpha must stay inside the valid range (0,2)");
                }
                if matches!(parameter, ScanParameter::Mass(_)) && from <= 0.0 {
                    return err("scan.from must be positive for a mass scan");
                }
                let steps = raw.int("scan.steps")?.unwrap_or(40) as usize;
                if steps < 1 {
                    return err("scan.steps must be at least 1");
                }
                let indices = match raw.get("scan.indices").unwrap_or("true") {
                    "true" => true,
                    "false" => false,
                    other => return err(format!("scan.indices: `{other}` is not true or false")),
                };
                Some(Scan {
                    parameter,
                    from,
                    to,
                    steps,
                    indices,
                })
            }
        };
        for key in ["cc.file", "trajectory.path", "trajectory.chart"] {
            if let Some(p) = raw.get(key) {
                if !std::path::Path::new(p).is_file() {
                    return err(format!("{key}: file `{p}` does not exist"));
                }
            }
        }
        Ok(RunConfig {
            masses,
            d,
            alpha,
            mode,
            guess,
            trajectory,
            tau_max: raw.positive("trajectory.tau_max")?,
            samples,
            length: raw.positive("numerics.L")?,
            mesh,
            max_step: raw.positive("numerics.max_step")?.unwrap_or(0.01),
            tail_tol: raw.positive("numerics.tail_tol")?.unwrap_or(1e-3),
            sigma_samples,
            report: raw.get("outputs.report").map(PathBuf::from),
            plot_dir: raw.get("outputs.plot_dir").map(PathBuf::from),
            scan,
            echo: raw.0.clone(),
        })
    }
}
