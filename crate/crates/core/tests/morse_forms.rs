mod common;

use collision_index::config_space::{build_chart, MassSystem};
use collision_index::forms::{
    assemble_coefficients, compute_sigma0, CoefficientPath, LimitBlocks,
};
use collision_index::inertia::{bunch_kaufman_inertia, block_tridiagonal_inertia, BlockTridiagonal};
use collision_index::maslov::{sigma_path_maslov, GeometricOptions};
use collision_index::mcgehee::{
    constants, direction_from_seed, homothetic_parabolic, synthetic_perturbation, Mode,
};
use collision_index::morse::{
    assemble_form, negative_count, pencil_head, relative_morse_index, sigma_spectral_flow,
    spectral_index, verify_index_theorem, Discretization, TheoremOptions,
};
use collision_index::potential::{check_bs, collinear_guess, find_central_configuration};
use collision_index::Error;
use common::random_symmetric;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn constant_1d(r: f64, end: f64) -> CoefficientPath {
    let limit = LimitBlocks {
        p0: scalar(1.0),
        q0: scalar(0.0),
        r_tilde0: scalar(r),
    };
    CoefficientPath::constant(limit, vec![0.0, end]).unwrap()
}

// R̃ = -k on [0, a), +1 afterwards
fn well(k: f64, a: f64, end: f64) -> CoefficientPath {
    let grid = vec![0.0, a, a + 1e-7, end];
    let r = vec![scalar(-k), scalar(-k), scalar(1.0), scalar(1.0)];
    let limit = LimitBlocks {
        p0: scalar(1.0),
        q0: scalar(0.0),
        r_tilde0: scalar(1.0),
    };
    CoefficientPath::from_samples(grid, vec![scalar(1.0); 4], vec![scalar(0.0); 4], r, limit).unwrap()
}

fn dense_negative(m: &DMatrix<f64>) -> usize {
    m.clone().symmetric_eigenvalues().iter().filter(|&&x| x < 0.0).count()
}

#[test]
fn dirichlet_toys() {
    let pi = std::f64::consts::PI;
    let pos = assemble_form(&constant_1d(1.0, 10.0), &Discretization::new(10.0, 200).unwrap()).unwrap();
    assert_eq!(negative_count(&pos.a).unwrap().0, 0);

    let neg = assemble_form(&constant_1d(-4.0, pi), &Discretization::new(pi, 400).unwrap()).unwrap();
    assert_eq!(negative_count(&neg.a).unwrap().0, 1);
    let head = pencil_head(&neg.a, &neg.g_l2, 4).unwrap();
    for (got, n) in head.iter().zip(1..) {
        let exact = (n * n) as f64 - 4.0;
        assert!((got - exact).abs() < 0.02 * (1.0 + exact.abs()), "{got} vs {exact}");
    }
}

#[test]
fn block_inertia_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..100 {
        let n = rng.gen_range(1..5);
        let blocks = rng.gen_range(1..8);
        let shift = rng.gen_range(-2.0..2.0);
        let mut m = BlockTridiagonal {
            diag: (0..blocks)
                .map(|_| random_symmetric(&mut rng, n, 2.0) + DMatrix::identity(n, n) * shift)
                .collect(),
            off: (0..blocks - 1)
                .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
        };
        if trial % 10 == 0 {
            // exact singular pivot in the first block
            m.diag[0] = DMatrix::zeros(n, n);
        }
        let dense = m.to_dense();
        let expected = dense_negative(&dense);
        let bk = bunch_kaufman_inertia(&dense, 1e-12).unwrap();
        assert_eq!(bk.negative, expected, "trial {trial} dense LDL");
        let bt = block_tridiagonal_inertia(&m).unwrap();
        assert_eq!(bt.inertia.negative, expected, "trial {trial} block LDL");
    }
}

#[test]
fn relative_morse_index_examples() {
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
    let t = DMatrix::identity(3, 3);
    assert_eq!(relative_morse_index(&s, &t).unwrap(), -1);
    assert_eq!(relative_morse_index(&s, &s).unwrap(), 0);
    assert!(relative_morse_index(&DMatrix::zeros(3, 3), &t).is_err());
}

#[test]
fn relative_morse_index_on_commuting_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(1..7);
        let v = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let sv: Vec<f64> = (0..n).map(|_| sign_away(&mut rng)).collect();
        let tv: Vec<f64> = (0..n).map(|_| sign_away(&mut rng)).collect();
        let s = &v * DMatrix::from_diagonal(&DVector::from_vec(sv.clone())) * v.transpose();
        let t = &v * DMatrix::from_diagonal(&DVector::from_vec(tv.clone())) * v.transpose();
        let plus_minus = sv.iter().zip(&tv).filter(|(a, b)| **a > 0.0 && **b < 0.0).count() as i64;
        let minus_plus = sv.iter().zip(&tv).filter(|(a, b)| **a < 0.0 && **b > 0.0).count() as i64;
        assert_eq!(relative_morse_index(&s, &t).unwrap(), plus_minus - minus_plus);
    }
}

fn sign_away(rng: &mut ChaCha8Rng) -> f64 {
    let x: f64 = rng.gen_range(0.2..3.0);
    if rng.gen_bool(0.5) {
        x
    } else {
        -x
    }
}

#[test]
fn sigma_flow_endpoint_identity_and_monotone_branches() {
    let coeff = well(9.0, 2.0, 8.0);
    let disc = Discretization::new(8.0, 400).unwrap();
    let form = assemble_form(&coeff, &disc).unwrap();
    let n_minus = negative_count(&form.a).unwrap().0;
    // Sturm count for the well: floor((√k a + atan √k)/π)
    assert_eq!(n_minus, ((3.0f64 * 2.0 + 3.0f64.atan()) / std::f64::consts::PI).floor() as usize);
    let flow = sigma_spectral_flow(&coeff, &disc, 12.0).unwrap();
    assert_eq!(flow.end_negative, 0);
    assert_eq!(flow.value, n_minus as i64);
    assert!(flow.monotone);

    // eigenvalue branches of A + σG on a coarse mesh, tracked by sorting
    let small = assemble_form(&coeff, &Discretization::new(8.0, 40).unwrap()).unwrap();
    let (a, g) = (small.a.to_dense(), small.g_w12.to_dense());
    let mut prev: Option<Vec<f64>> = None;
    for i in 0..=40 {
        let sigma = 12.0 * i as f64 / 40.0;
        let mut ev: Vec<f64> = (&a + &g * sigma).symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        if let Some(p) = &prev {
            assert!(p.iter().zip(&ev).all(|(x, y)| y >= &(x - 1e-10)));
        }
        prev = Some(ev);
    }
}

#[test]
fn homothetic_flow_is_zero() {
    let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &collision_index::potential::polygon_guess(&chart).unwrap()).unwrap();
    let k = constants(&cc, Mode::Parabolic);
    let traj = homothetic_parabolic(&cc, &k, 10.0, 201).unwrap();
    let coeff = assemble_coefficients(&chart, &cc, &k, &traj, 0.0).unwrap();
    let disc = Discretization::new(10.0, 200).unwrap();
    let res = spectral_index(&coeff, &disc).unwrap();
    assert_eq!(res.index, 0);
    assert!(res.stability.stable);
    assert_eq!(res.sf_sigma, 0);
}

#[test]
fn enlarging_the_space_never_lowers_the_index() {
    let coeff = well(4.0, 3.0, 40.0);
    let mut last = 0;
    // nested meshes on a fixed interval
    for mesh in [40, 80, 160, 320] {
        let form = assemble_form(&coeff, &Discretization::new(10.0, mesh).unwrap()).unwrap();
        let idx = negative_count(&form.a).unwrap().0;
        assert!(idx >= last);
        last = idx;
    }
    // same element size, longer interval: extension by zero
    let mut last = 0;
    for (len, mesh) in [(5.0, 100), (10.0, 200), (20.0, 400)] {
        let form = assemble_form(&coeff, &Discretization::new(len, mesh).unwrap()).unwrap();
        let idx = negative_count(&form.a).unwrap().0;
        assert!(idx >= last);
        last = idx;
    }
}

// uᵀ A v against a direct evaluation of
// ∫ ⟨Pu', v'⟩ + ⟨Qu, v'⟩ + ⟨Qᵀu', v⟩ + ⟨R̃u, v⟩ by Simpson's rule per element
#[test]
fn assembled_form_matches_direct_quadrature() {
    let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &collision_index::potential::polygon_guess(&chart).unwrap()).unwrap();
    let k = constants(&cc, Mode::Parabolic);
    let w = direction_from_seed(&cc.s0, 13);
    let mesh = 64;
    let len = 4.0;
    // coefficient nodes on the element nodes, extending past L
    let traj = synthetic_perturbation(&chart, &cc, &k, 0.3, 0.8, &w, 2.0 * len, 2 * mesh + 1).unwrap();
    let coeff = assemble_coefficients(&chart, &cc, &k, &traj, 0.0).unwrap();
    let disc = Discretization::new(len, mesh).unwrap();
    let form = assemble_form(&coeff, &disc).unwrap();
    let a = form.a.to_dense();
    let n = cc.dim();
    let h = len / mesh as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let u = DVector::from_fn((mesh - 1) * n, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn((mesh - 1) * n, |_, _| rng.gen_range(-1.0..1.0));
        let node = |x: &DVector<f64>, i: usize| -> DVector<f64> {
            if i == 0 || i == mesh {
                DVector::zeros(n)
            } else {
                x.rows((i - 1) * n, n).into_owned()
            }
        };
        let mut direct = 0.0;
        for e in 0..mesh {
            let (u0, u1, v0, v1) = (node(&u, e), node(&u, e + 1), node(&v, e), node(&v, e + 1));
            let du = (&u1 - &u0) / h;
            let dv = (&v1 - &v0) / h;
            for (x, wt) in [(0.0, 1.0 / 6.0), (0.5, 4.0 / 6.0), (1.0, 1.0 / 6.0)] {
                let (p, q, r) = coeff.at((e as f64 + x) * h);
                let uu = &u0 * (1.0 - x) + &u1 * x;
                let vv = &v0 * (1.0 - x) + &v1 * x;
                let f = (&p * &du).dot(&dv) + (&q * &uu).dot(&dv) + (q.transpose() * &du).dot(&vv) + (&r * &uu).dot(&vv);
                direct += wt * h * f;
            }
        }
        let assembled = u.dot(&(&a * &v));
        assert!((assembled - direct).abs() < 1e-8 * direct.abs().max(1.0), "{assembled} vs {direct}");
    }
}

#[test]
fn bs_failing_input_is_refused() {
    let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &collinear_guess(&chart).unwrap()).unwrap();
    let k = constants(&cc, Mode::Parabolic);
    let traj = homothetic_parabolic(&cc, &k, 10.0, 201).unwrap();
    let disc = Discretization::new(10.0, 200).unwrap();
    let err = verify_index_theorem(&chart, &cc, &traj, &disc, &TheoremOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Hypothesis(_)), "{err}");
}

// Below threshold, shifting R̃ by more than the [BS] deficit restores a
// hyperbolic limit and the chain ι_spec = -μ(σ-path) holds for the shifted
// family.
#[test]
fn sigma_path_on_the_shifted_collinear_family() {
    let sys = MassSystem::new(vec![1.0; 3], 2, 1.0).unwrap();
    let chart = build_chart(&sys);
    let cc = find_central_configuration(&chart, &collinear_guess(&chart).unwrap()).unwrap();
    let bs = check_bs(&cc);
    assert!(!bs.holds);
    let k = constants(&cc, Mode::Parabolic);
    let w = direction_from_seed(&cc.s0, 3);
    let traj = synthetic_perturbation(&chart, &cc, &k, 0.2, 0.5, &w, 20.0, 401).unwrap();
    let coeff = assemble_coefficients(&chart, &cc, &k, &traj, 0.0).unwrap();
    let sigma0 = compute_sigma0(&coeff).unwrap().sigma0;
    let start = bs.margin.abs() + 0.5;
    let base = coeff.shifted(start);
    let res = sigma_path_maslov(&base, sigma0 - start, &GeometricOptions::default()).unwrap();
    assert_eq!(res.maslov.index, res.maslov.epsilon_index);
    assert!(res.rectangle.limit_edge_transversal);
    let spec = spectral_index(&base, &Discretization::with_length(20.0)).unwrap();
    assert!(spec.stability.stable);
    assert_eq!(res.value, -(spec.index as i64));
}
