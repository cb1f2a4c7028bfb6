//! Fixtures shared by the pipeline benchmarks.

use collision_index::config_space::{build_chart, Chart, MassSystem};
use collision_index::mcgehee::{constants, direction_from_seed, synthetic_perturbation, Mode};
use collision_index::potential::{find_central_configuration, polygon_guess};
use collision_index::{CentralConfiguration, Discretization, Result, TrajectoryData};

pub struct Case {
    pub chart: Chart,
    pub cc: CentralConfiguration,
    pub traj: TrajectoryData,
    pub disc: Discretization,
}

pub fn equal_masses(n: usize) -> Result<(Chart, CentralConfiguration)> {
    let chart = build_chart(&MassSystem::new(vec![1.0; n], 2, 1.0)?);
    let cc = find_central_configuration(&chart, &polygon_guess(&chart)?)?;
    Ok((chart, cc))
}

/// Parabolic synthetic perturbation of the regular `n`-gon with the default
/// discretization.
pub fn polygon_case(n: usize, eps: f64) -> Result<Case> {
    let (chart, cc) = equal_masses(n)?;
    let k = constants(&cc, Mode::Parabolic);
    let disc = Discretization::default_for(&k);
    let w = direction_from_seed(&cc.s0, 1);
    let traj = synthetic_perturbation(&chart, &cc, &k, eps, 1.0, &w, disc.length, disc.mesh + 1)?;
    Ok(Case { chart, cc, traj, disc })
}
