//! Scalar and two-dimensional coefficient paths where the index is known in
//! closed form from Sturm oscillation.

use collision_index::forms::{CoefficientPath, LimitBlocks};
use collision_index::morse::{verify_coefficients, Discretization, TheoremOptions};
use nalgebra::DMatrix;

/// `-u'' + r(τ) u` on the half line with `u(0) = 0`, where `r = -k` on
/// `[0, a]` and `+1` after. The decaying solution is `e^{-(τ-a)}` past `a`
/// and `sin(√k (a-τ) + atan √k)` before it; its zeros in `(0, a)` are the
/// negative eigenvalues.
fn sturm_count(k: f64, a: f64) -> usize {
    ((k.sqrt() * a + k.sqrt().atan()) / std::f64::consts::PI).floor() as usize
}

fn well(k: f64, a: f64, end: f64) -> CoefficientPath {
    let m = |x: f64| DMatrix::from_element(1, 1, x);
    let grid = vec![0.0, a, a + 1e-7, end];
    let r = vec![m(-k), m(-k), m(1.0), m(1.0)];
    let limit = LimitBlocks {
        p0: m(1.0),
        q0: m(0.0),
        r_tilde0: m(1.0),
    };
    CoefficientPath::from_samples(grid, vec![m(1.0); 4], vec![m(0.0); 4], r, limit).unwrap()
}

#[test]
fn square_well_indices_agree_with_sturm() {
    for (k, a) in [(4.0, 3.0), (1.0, 1.0), (9.0, 2.0)] {
        let expected = sturm_count(k, a);
        let c = well(k, a, a + 10.0);
        let disc = Discretization::new(a + 15.0, 2400).unwrap();
        let rep = verify_coefficients(&c, &disc, &TheoremOptions::default()).unwrap();
        assert_eq!(rep.iota_spec, expected, "spectral, k={k} a={a}");
        assert_eq!(rep.iota_geo, expected as i64, "geometric, k={k} a={a}");
        assert_eq!(rep.sf_sigma, expected as i64, "spectral flow, k={k} a={a}");
        assert_eq!(rep.sigma_path_maslov, -(expected as i64));
        assert!(rep.all_agree);
        // conjugate points are the zeros of the decaying solution
        let theta = k.sqrt().atan();
        let mut zeros: Vec<f64> = (1..=expected)
            .map(|j| a - (j as f64 * std::f64::consts::PI - theta) / k.sqrt())
            .collect();
        zeros.sort_by(f64::total_cmp);
        let mut found: Vec<f64> = rep.crossings.iter().map(|c| c.location).collect();
        found.sort_by(f64::total_cmp);
        assert_eq!(found.len(), zeros.len(), "crossing count, k={k} a={a}");
        for (f, z) in found.iter().zip(&zeros) {
            assert!((f - z).abs() < 1e-3, "crossing at {f}, expected {z}");
        }
    }
}
