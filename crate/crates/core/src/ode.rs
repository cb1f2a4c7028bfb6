//! Adaptive Dormand–Prince 5(4) integrator with exact landing on output
//! points.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    /// Components are measured relative to `max(|y_i|, floor·g)` where `g` is
    /// the largest magnitude in the component's group, so solutions that
    /// shrink or grow exponentially keep a relative tolerance.
    pub floor: f64,
    pub max_steps: usize,
    pub h0: f64,
    /// Index ranges sharing one magnitude for the floor; defaults to the
    /// whole state.
    pub groups: Vec<std::ops::Range<usize>>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            floor: 1e-3,
            max_steps: 2_000_000,
            h0: 1e-3,
            groups: Vec::new(),
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` and returns the state at each entry of
/// `outputs` (non-decreasing, all `>= t0`).
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], outputs: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k[0])?;
    let mut h = opts.h0;
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(outputs.len());
    let groups: Vec<_> = if opts.groups.is_empty() {
        std::iter::once(0..n).collect()
    } else {
        opts.groups.clone()
    };
    let mut group_of = vec![0usize; n];
    for (g, r) in groups.iter().enumerate() {
        for i in r.clone() {
            group_of[i] = g;
        }
    }
    let mut gmax = vec![0.0; groups.len()];
    for &target in outputs {
        if target < t - 1e-15 * t.abs().max(1.0) {
            return Err(Error::invalid("output points must be non-decreasing"));
        }
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::NonConvergence(format!(
                    "integrator exceeded {} steps at t = {t}",
                    opts.max_steps
                )));
            }
            let remaining = target - t;
            let landing = h >= remaining;
            let hs = if landing { remaining } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += hs * A[s][j] * kj[i];
                    }
                    tmp[i] = acc;
                }
                let (_, tail) = k.split_at_mut(s);
                f(t + C[s] * hs, &tmp, &mut tail[0])?;
            }
            // stage 7 argument is the 5th-order solution
            ynew.copy_from_slice(&tmp);
            for (g, range) in groups.iter().enumerate() {
                gmax[g] = range
                    .clone()
                    .fold(0.0f64, |m, i| m.max(y[i].abs()).max(ynew[i].abs()));
            }
            let mut err = 0.0f64;
            for i in 0..n {
                let ymax = gmax[group_of[i]];
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                e *= hs;
                let sc = opts.rtol * y[i].abs().max(ynew[i].abs()).max(opts.floor * ymax)
                    + f64::MIN_POSITIVE;
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h = hs * 0.2;
                if h < 1e-300 {
                    return Err(Error::NonConvergence("step size underflow".into()));
                }
                continue;
            }
            if err <= 1.0 {
                t = if landing { target } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                let last = k.pop().unwrap();
                k.insert(0, last);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !landing || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * t.abs().max(1e-300) {
                    return Err(Error::NonConvergence(format!("step size underflow at t = {t}")));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
