mod common;

use collision_index::maslov::{maslov_index, maslov_index_on_grid, MaslovOptions, Method};
use collision_index::symplectic::LagrangianFrame;
use common::{random_symplectic, ExpPath};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn path_for(seed: u64, n: usize) -> Option<ExpPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ExpPath::random(&mut rng, n);
    (p.margin(0.0) > 1e-4 && p.margin(1.0) > 1e-4 && p.margin(0.5) > 1e-4).then_some(p)
}

fn index(p: &ExpPath, a: f64, b: f64) -> collision_index::MaslovResult {
    let f = |t: f64| p.frame(t);
    maslov_index(&f, a, b, &LagrangianFrame::horizontal(p.a[0].nrows()), &MaslovOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matches_exponential_oracle(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        let r = index(&p, 0.0, 1.0);
        prop_assert_eq!(r.index, p.oracle(0.0, 1.0));
        prop_assert_eq!(r.epsilon_index, r.index);
        prop_assert_eq!(r.method, Method::CrossingForm);
    }

    #[test]
    fn additive_under_concatenation(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        let whole = index(&p, 0.0, 1.0).index;
        let left = index(&p, 0.0, 0.5).index;
        let right = index(&p, 0.5, 1.0).index;
        prop_assert_eq!(whole, left + right);
    }

    #[test]
    fn invariant_under_reparametrization(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        let g = |s: f64| p.frame(s * s * (3.0 - 2.0 * s) * 0.999 + 0.0005 * s);
        let h = LagrangianFrame::horizontal(n);
        let end = 0.999 + 0.0005;
        let direct = maslov_index(&|t: f64| p.frame(t), 0.0, end, &h, &MaslovOptions::default()).unwrap();
        let slow = maslov_index(&g, 0.0, 1.0, &h, &MaslovOptions::default()).unwrap();
        prop_assert_eq!(direct.index, slow.index);
    }

    #[test]
    fn invariant_under_symplectic_maps(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let psi = random_symplectic(&mut rng, n);
        let reference = LagrangianFrame::horizontal(n).mapped(&psi).unwrap();
        let mapped = |t: f64| p.frame(t)?.mapped(&psi);
        let grid: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let r = maslov_index_on_grid(&mapped, &grid, &reference, None, &MaslovOptions::default()).unwrap();
        prop_assert_eq!(r.index, p.oracle(0.0, 1.0));
        prop_assert_eq!(r.epsilon_index, r.index);
    }

    #[test]
    fn reversal_negates(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        let back = |t: f64| p.frame(1.0 - t);
        let h = LagrangianFrame::horizontal(n);
        let r = maslov_index(&back, 0.0, 1.0, &h, &MaslovOptions::default()).unwrap();
        prop_assert_eq!(r.index, -p.oracle(0.0, 1.0));
    }

    #[test]
    fn any_transversal_complement_gives_the_same_forms(seed in any::<u64>(), n in 1usize..4) {
        let Some(p) = path_for(seed, n) else { return Ok(()) };
        // W = graph of a symmetric map over the vertical is Lagrangian and
        // transversal to L₀
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let s = common::random_symmetric(&mut rng, n, 0.5);
        let mut w = DMatrix::zeros(2 * n, n);
        w.rows_mut(0, n).copy_from(&s);
        w.rows_mut(n, n).copy_from(&DMatrix::identity(n, n));
        let w = LagrangianFrame::new(w).unwrap();
        let grid: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let f = |t: f64| p.frame(t);
        let h = LagrangianFrame::horizontal(n);
        let a = maslov_index_on_grid(&f, &grid, &h, None, &MaslovOptions::default()).unwrap();
        let b = maslov_index_on_grid(&f, &grid, &h, Some(&w), &MaslovOptions::default()).unwrap();
        prop_assert_eq!(a.crossings.len(), b.crossings.len());
        for (x, y) in a.crossings.iter().zip(&b.crossings) {
            prop_assert_eq!(x.signature, y.signature);
        }
    }
}

#[test]
fn catenation_through_a_crossing_uses_endpoint_conventions() {
    // rotation of the vertical crosses L₀ at π/2; split exactly there
    let path = |t: f64| LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[-t.sin(), t.cos()]));
    let h = LagrangianFrame::horizontal(1);
    let o = MaslovOptions::default();
    let half = std::f64::consts::FRAC_PI_2;
    let left = maslov_index(&path, 0.3, half, &h, &o).unwrap();
    let right = maslov_index(&path, half, 2.8, &h, &o).unwrap();
    let whole = maslov_index(&path, 0.3, 2.8, &h, &o).unwrap();
    assert_eq!(whole.index, 1);
    assert_eq!(left.index + right.index, 1);
    assert_eq!(right.index, 1);
    assert!(left.endpoint_convention_applied && right.endpoint_convention_applied);
}

#[test]
fn tangential_touch_is_not_counted() {
    // the eigen-angle -2(t - 1/2)² touches the cycle from below at t = 1/2
    let path = |t: f64| {
        let th = std::f64::consts::FRAC_PI_2 - (t - 0.5).powi(2);
        LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[-th.sin(), th.cos()]))
    };
    let h = LagrangianFrame::horizontal(1);
    let r = maslov_index(&path, 0.0, 1.0, &h, &MaslovOptions::default()).unwrap();
    assert_eq!(r.index, 0);
    assert_eq!(r.epsilon_index, 0);
}

#[test]
fn degenerate_crossing_falls_back_to_epsilon_rotation() {
    // eigen-angle (t - 1/2)³: crosses upward with a vanishing crossing form
    let path = |t: f64| {
        let th = std::f64::consts::FRAC_PI_2 + 0.5 * (t - 0.5).powi(3);
        LagrangianFrame::new(DMatrix::from_column_slice(2, 1, &[-th.sin(), th.cos()]))
    };
    let h = LagrangianFrame::horizontal(1);
    let r = maslov_index(&path, 0.0, 1.0, &h, &MaslovOptions::default()).unwrap();
    assert_eq!(r.method, Method::EpsilonRotation);
    assert!(!r.crossings[0].regular);
    assert_eq!(r.index, 1);
}
