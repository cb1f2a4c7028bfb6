use approx::assert_relative_eq;
use collision_index::config_space::{build_chart, MassSystem};
use collision_index::mcgehee::{
    constants, direction_from_seed, energy_of, homothetic_parabolic, integrate_homothetic,
    integrate_newton, parse_trajectory_csv, read_trajectory_csv, sundman_sperling_check,
    synthetic_perturbation, time_constraint, write_trajectory_csv, Constants, HomotheticOptions,
    Mode, NewtonOptions,
};
use collision_index::ode::OdeOptions;
use collision_index::potential::{self, collinear_guess, find_central_configuration, guess_from_positions, polygon_guess};
use collision_index::{Chart, CentralConfiguration};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn equilateral() -> (Chart, CentralConfiguration) {
    let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &polygon_guess(&chart).unwrap()).unwrap();
    (chart, cc)
}

#[test]
fn constants_identity_over_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let alpha = rng.gen_range(0.05..1.95);
        let u = rng.gen_range(0.1..50.0);
        for mode in [Mode::Collision, Mode::Parabolic] {
            let k = Constants::new(alpha, u, mode);
            assert!(k.identity_defect() < 1e-12 * u.max(1.0));
        }
    }
    let k = Constants::new(1.0, 3.0, Mode::Collision);
    assert_eq!((k.c_alpha, k.beta), (15.0, 6.0));
    assert_relative_eq!(k.delta_bar, -6f64.sqrt() / 4.0, epsilon = 1e-15);
}

#[test]
fn homothetic_parabolic_closed_form() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Parabolic);
    let traj = homothetic_parabolic(&cc, &k, 10.0, 201).unwrap();
    for i in 0..traj.len() {
        assert_relative_eq!(traj.rho_prime[i] / traj.rho[i], k.delta_bar, epsilon = 1e-14);
        assert!(energy_of(&chart, &traj, i).unwrap().abs() < 1e-10);
        assert_eq!(traj.s_prime[i].norm(), 0.0);
        assert_relative_eq!(traj.s[i].norm(), 1.0, epsilon = 1e-14);
    }
}

#[test]
fn integrated_collision_tail_and_sundman_sperling() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Collision);
    let traj = integrate_homothetic(&chart, &cc, &k, 0.0, &HomotheticOptions::default()).unwrap();
    let n = traj.len();
    for i in n - n / 10..n {
        assert!((traj.rho_prime[i] / traj.rho[i] - k.delta_bar).abs() < 1e-4);
    }
    let ss = sundman_sperling_check(&traj, &k).unwrap();
    assert!(ss.samples_in_decade > 10);
    assert!(ss.max_deviation < 1e-3, "{ss:?}");
    let (quad, span) = time_constraint(&traj, &k).unwrap();
    assert_relative_eq!(quad, span, max_relative = 1e-6);
}

#[test]
fn bound_collision_keeps_radial_energy() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Collision);
    // h < 0: internal drift check enforces 1e-8 on ½ṙ² - U r^{-α} - h
    let traj = integrate_homothetic(&chart, &cc, &k, -1.0, &HomotheticOptions::default()).unwrap();
    assert_eq!(traj.energy_h, -1.0);
    let ss = sundman_sperling_check(&traj, &k).unwrap();
    assert!(ss.max_deviation < 1e-3);
}

#[test]
fn newton_from_parabolic_data_matches_closed_form() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Parabolic);
    let v0 = &cc.s0 * (2.0 * cc.u_value).sqrt();
    let opts = NewtonOptions {
        tau_max: 6.0,
        n_samples: 301,
        ode: OdeOptions {
            rtol: 1e-12,
            ..OdeOptions::default()
        },
        ..NewtonOptions::default()
    };
    let run = integrate_newton(&chart, &cc.s0, &v0, &opts).unwrap();
    assert_eq!(run.trajectory.mode, Mode::Parabolic);
    let closed = homothetic_parabolic(&cc, &k, 6.0, 301).unwrap();
    for i in 0..closed.len() {
        assert_relative_eq!(run.trajectory.rho[i], closed.rho[i], max_relative = 1e-6);
    }
    assert!(run.tail.qualifies);
}

#[test]
fn bounded_two_body_orbit_is_not_asymptotic() {
    let sys = MassSystem::new(vec![1.0, 1.0], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let q0 = guess_from_positions(&chart, &[vec![-0.5, 0.0], vec![0.5, 0.0]]).unwrap();
    let rot = guess_from_positions(&chart, &[vec![0.0, -0.5], vec![0.0, 0.5]]).unwrap();
    // sub-circular tangential speed: an ellipse
    let u = potential::value(&chart, &q0).unwrap();
    let v0 = rot * (0.8 * u.sqrt());
    let opts = NewtonOptions {
        tau_max: 20.0,
        n_samples: 401,
        ..NewtonOptions::default()
    };
    let run = integrate_newton(&chart, &q0, &v0, &opts).unwrap();
    assert!(!run.tail.qualifies);
    assert!(run.energy < 0.0);
}

#[test]
fn zero_velocity_drop_collapses() {
    let sys = MassSystem::new(vec![1.0, 1.0, 1.0], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &collinear_guess(&chart).unwrap()).unwrap();
    let opts = NewtonOptions {
        tau_max: 5.0,
        n_samples: 201,
        ..NewtonOptions::default()
    };
    let run = integrate_newton(&chart, &cc.s0, &DVector::zeros(cc.dim()), &opts).unwrap();
    assert_eq!(run.trajectory.mode, Mode::Collision);
    // starting from rest, I = r² decreases monotonically
    assert!(run.inertia.windows(2).skip(1).all(|w| w[1] < w[0]));
    let t = run.trajectory.time.as_ref().unwrap();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    // τ keeps growing while the physical time saturates
    let last_gap = t[t.len() - 1] - t[t.len() - 2];
    assert!(last_gap < 1e-3 * (t[1] - t[0]));
}

#[test]
fn csv_round_trip_is_exact() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Parabolic);
    let w = direction_from_seed(&cc.s0, 4);
    let traj = synthetic_perturbation(&chart, &cc, &k, 0.1, 0.7, &w, 5.0, 51).unwrap();
    let dir = std::env::temp_dir().join(format!("ci-traj-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("traj.csv");
    write_trajectory_csv(&traj, &path).unwrap();
    let back = read_trajectory_csv(&path).unwrap();
    assert_eq!(back.grid, traj.grid);
    assert_eq!(back.rho, traj.rho);
    assert_eq!(back.rho_prime, traj.rho_prime);
    assert_eq!(back.s, traj.s);
    assert_eq!(back.s_prime, traj.s_prime);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn csv_rejects_non_unit_row_with_its_index() {
    let text = "tau,rho,rho_prime,h,s_1,s_2,sp_1,sp_2\n0,1,0.5,0,1,0,0,0\n1,1.5,0.7,0,1.1,0,0,0\n";
    let err = parse_trajectory_csv(text).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
}

#[test]
fn synthetic_perturbation_properties() {
    let (chart, cc) = equilateral();
    let k = constants(&cc, Mode::Parabolic);
    let w = direction_from_seed(&cc.s0, 9);
    let plain = homothetic_parabolic(&cc, &k, 40.0, 801).unwrap();
    let zero = synthetic_perturbation(&chart, &cc, &k, 0.0, 0.5, &w, 40.0, 801).unwrap();
    assert_eq!(zero.rho, plain.rho);
    assert_eq!(zero.s, plain.s);
    let traj = synthetic_perturbation(&chart, &cc, &k, 0.1, 0.5, &w, 40.0, 801).unwrap();
    for i in 0..traj.len() {
        assert!(traj.s[i].dot(&traj.s_prime[i]).abs() < 1e-10);
        if traj.grid[i] > 28.0 {
            assert!((&traj.s[i] - &cc.s0).norm() < 1e-6);
        }
    }
}
