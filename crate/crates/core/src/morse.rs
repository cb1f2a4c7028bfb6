//! Finite element Morse index of the index form on a truncated half-line,
//! the σ spectral flow, the relative Morse index, and the index theorem
//! check tying both engines together.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config_space::Chart;
use crate::error::{Error, Result};
use crate::forms::{assemble_coefficients, assemble_hamiltonian, b_matrix, compute_sigma0, CoefficientPath};
use crate::inertia::{block_tridiagonal_inertia, BlockTridiagonal};
use crate::linalg::{j_matrix, singular_values_asc, sym_eigen};
use crate::maslov::{
    geometric_index, sigma_path_maslov, Crossing, GeometricOptions, RectangleEdges as RectangleReport,
};
use crate::mcgehee::{constants, Constants, TrajectoryData};
use crate::potential::{check_bs, CentralConfiguration};
use crate::symplectic::{hyperbolic_splitting, BndReport};

pub const MIN_MESH: usize = 16;
const TARGET_H: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discretization {
    /// Truncation length `L`; Dirichlet conditions at `0` and `L`.
    pub length: f64,
    pub mesh: usize,
    /// Gauss points per element (1 to 3).
    pub quadrature: usize,
}

impl Discretization {
    pub fn new(length: f64, mesh: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!("truncation length {length} must be positive")));
        }
        if mesh < MIN_MESH {
            return Err(Error::invalid(format!("mesh {mesh} is below {MIN_MESH}")));
        }
        Ok(Self {
            length,
            mesh,
            quadrature: 2,
        })
    }

    /// `L = 40/|δ̃|` with elements of size about 0.05.
    pub fn default_for(constants: &Constants) -> Self {
        let length = 40.0 / constants.delta_tilde.abs();
        Self::with_length(length)
    }

    pub fn with_length(length: f64) -> Self {
        let mesh = ((length / TARGET_H).ceil() as usize).max(MIN_MESH);
        Self {
            length,
            mesh,
            quadrature: 2,
        }
    }

    pub fn step(&self) -> f64 {
        self.length / self.mesh as f64
    }

    pub fn scaled(&self, length_factor: f64, mesh_factor: usize) -> Self {
        Self {
            length: self.length * length_factor,
            mesh: self.mesh * mesh_factor,
            quadrature: self.quadrature,
        }
    }
}

fn gauss(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match order {
        1 => Ok((vec![0.5], vec![1.0])),
        2 => {
            let d = 0.5 / 3f64.sqrt();
            Ok((vec![0.5 - d, 0.5 + d], vec![0.5, 0.5]))
        }
        3 => {
            let d = 0.5 * (0.6f64).sqrt();
            Ok((vec![0.5 - d, 0.5, 0.5 + d], vec![5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]))
        }
        _ => Err(Error::invalid(format!("unsupported quadrature order {order}"))),
    }
}

/// Discretized index form (`a`) and Gram matrices on the interior nodes.
#[derive(Clone, Debug)]
pub struct IndexForm {
    pub a: BlockTridiagonal,
    pub g_l2: BlockTridiagonal,
    pub g_w12: BlockTridiagonal,
    pub step: f64,
    pub warnings: Vec<String>,
}

/// Continuous P1 elements; coefficients are read off the path at the Gauss
/// points, so beyond the coefficient grid they equal the limit blocks.
pub fn assemble_form(coeff: &CoefficientPath, disc: &Discretization) -> Result<IndexForm> {
    let n = coeff.dim();
    let m = disc.mesh;
    let h = disc.step();
    let (xs, ws) = gauss(disc.quadrature)?;
    let zero = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    let interior = m - 1;
    let mut a = BlockTridiagonal {
        diag: vec![zero.clone(); interior],
        off: vec![zero.clone(); interior.saturating_sub(1)],
    };
    let mut g_l2 = a.clone();
    let mut g_w12 = a.clone();
    for e in 0..m {
        let ta = e as f64 * h;
        // local blocks (0,0), (0,1), (1,1)
        let mut loc = [zero.clone(), zero.clone(), zero.clone()];
        let mut mass = [0.0; 3];
        let mut stiff = [0.0; 3];
        for (x, w) in xs.iter().zip(&ws) {
            let (p, q, r) = coeff.at(ta + x * h);
            let phi = [1.0 - x, *x];
            let dphi = [-1.0 / h, 1.0 / h];
            for (slot, (i, j)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                let blk = &p * (dphi[i] * dphi[j])
                    + &q * (dphi[i] * phi[j])
                    + q.transpose() * (phi[i] * dphi[j])
                    + &r * (phi[i] * phi[j]);
                loc[slot] += blk * (w * h);
                mass[slot] += w * h * phi[i] * phi[j];
                stiff[slot] += w * h * dphi[i] * dphi[j];
            }
        }
        // node e is local 0, node e+1 local 1; interior node k sits at index k-1
        if e >= 1 {
            let k = e - 1;
            a.diag[k] += &loc[0];
            g_l2.diag[k] += &id * mass[0];
            g_w12.diag[k] += &id * (mass[0] + stiff[0]);
        }
        if e < interior {
            let k = e;
            a.diag[k] += &loc[2];
            g_l2.diag[k] += &id * mass[2];
            g_w12.diag[k] += &id * (mass[2] + stiff[2]);
        }
        if e >= 1 && e < interior {
            let k = e - 1;
            a.off[k] += &loc[1];
            g_l2.off[k] += &id * mass[1];
            g_w12.off[k] += &id * (mass[1] + stiff[1]);
        }
    }
    for d in &mut a.diag {
        *d = (&*d + d.transpose()) * 0.5;
    }
    let mut warnings = Vec::new();
    let covered: Vec<f64> = coeff
        .grid
        .iter()
        .copied()
        .filter(|&t| t <= disc.length)
        .collect();
    let coarse = covered.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if coarse > h * (1.0 + 1e-9) {
        warnings.push(format!(
            "coefficient grid spacing {coarse:.3e} exceeds the element size {h:.3e}"
        ));
    }
    Ok(IndexForm {
        a,
        g_l2,
        g_w12,
        step: h,
        warnings,
    })
}

/// Writes a block-tridiagonal matrix as `# rows cols nnz` followed by
/// `i j value` lines (0-based, upper and lower parts both listed).
pub fn write_triplets(m: &BlockTridiagonal, path: &Path) -> Result<()> {
    let dense = m.to_dense();
    let mut body = String::new();
    let mut nnz = 0;
    for i in 0..dense.nrows() {
        for j in 0..dense.ncols() {
            let v = dense[(i, j)];
            if v != 0.0 {
                nnz += 1;
                let _ = writeln!(body, "{i} {j} {v:e}");
            }
        }
    }
    let text = format!("# {} {} {nnz}\n{body}", dense.nrows(), dense.ncols());
    std::fs::write(path, text)?;
    Ok(())
}

/// Negative inertia of `m` and whether the factorization needed a perturbation.
pub fn negative_count(m: &BlockTridiagonal) -> Result<(usize, bool)> {
    let r = block_tridiagonal_inertia(m)?;
    Ok((r.inertia.negative, r.perturbation != 0.0))
}

/// `k` smallest eigenvalues of the pencil `(A, G)` by bisection on the
/// negative counts of `A - xG`.
pub fn pencil_head(a: &BlockTridiagonal, g: &BlockTridiagonal, k: usize) -> Result<Vec<f64>> {
    let count = |x: f64| -> Result<usize> { Ok(negative_count(&a.add_scaled(g, -x))?.0) };
    let total = a.dim();
    let k = k.min(total);
    let mut lo = -1.0;
    while count(lo)? > 0 {
        lo *= 2.0;
        if lo < -1e30 {
            return Err(Error::NonConvergence("pencil spectrum unbounded below".into()));
        }
    }
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let mut hi = lo.abs().max(1.0);
        while count(hi)? < j {
            hi *= 2.0;
            if hi > 1e30 {
                return Err(Error::NonConvergence("pencil eigenvalue search diverged".into()));
            }
        }
        let mut l = out.last().copied().unwrap_or(lo).min(hi) - 1e-12;
        let mut u = hi;
        for _ in 0..200 {
            let mid = 0.5 * (l + u);
            if count(mid)? >= j {
                u = mid;
            } else {
                l = mid;
            }
            if u - l <= 1e-11 * u.abs().max(1.0) {
                break;
            }
        }
        out.push(0.5 * (l + u));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replay {
    pub length: f64,
    pub mesh: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stability {
    /// Same index for `(L, mesh)`, `(1.5L, 2 mesh)` and `(2L, 4 mesh)`.
    pub stable: bool,
    pub replays: Vec<Replay>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralFlow {
    pub value: i64,
    pub sigma0: f64,
    /// `σ₀` had to be enlarged to make the end form positive definite.
    pub enlarged: bool,
    /// Where the negative count drops, as `(σ, drop)`.
    pub crossings: Vec<(f64, i64)>,
    pub start_negative: usize,
    pub end_negative: usize,
    /// Negative counts never increased along the grid.
    pub monotone: bool,
    pub unresolved_clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MorseResult {
    pub index: usize,
    pub spectrum_head: Vec<f64>,
    pub stability: Stability,
    pub sigma0: f64,
    pub sf_sigma: i64,
    /// Whether the limit Hamiltonian is hyperbolic ([BS] for n-body data).
    pub limit_hyperbolic: bool,
    /// Index growth across `L, 1.5L, 2L` when the limit is not hyperbolic.
    pub growth: Option<Vec<Replay>>,
    pub flow: SpectralFlow,
    pub warnings: Vec<String>,
}

fn limit_hyperbolic(coeff: &CoefficientPath) -> Result<bool> {
    let l = &coeff.limit;
    let b = b_matrix(&l.p0, &l.q0, &l.r_tilde0)?;
    Ok(hyperbolic_splitting(&(j_matrix(coeff.dim()) * b))?.is_hyperbolic())
}

const SPECTRUM_HEAD: usize = 4;
const SIGMA_GRID: usize = 64;

/// `ι_spec`: negative inertia of the discretized form, with the stability
/// replays, the head of the `L²` spectrum, `σ₀` and the σ spectral flow.
pub fn spectral_index(coeff: &CoefficientPath, disc: &Discretization) -> Result<MorseResult> {
    let mut warnings = Vec::new();
    let limit_hyperbolic = limit_hyperbolic(coeff)?;
    if !limit_hyperbolic {
        warnings.push(
            "limit Hamiltonian not hyperbolic: the index may grow without bound with L".to_string(),
        );
    }
    let form = assemble_form(coeff, disc)?;
    warnings.extend(form.warnings.iter().cloned());
    let (index, perturbed) = negative_count(&form.a)?;
    if perturbed {
        warnings.push("block factorization needed a diagonal perturbation".to_string());
    }
    let mut replays = vec![Replay {
        length: disc.length,
        mesh: disc.mesh,
        index,
    }];
    for (lf, mf) in [(1.5, 2), (2.0, 4)] {
        let d = disc.scaled(lf, mf);
        let f = assemble_form(coeff, &d)?;
        replays.push(Replay {
            length: d.length,
            mesh: d.mesh,
            index: negative_count(&f.a)?.0,
        });
    }
    let stable = replays.iter().all(|r| r.index == index);
    let growth = if limit_hyperbolic {
        None
    } else {
        Some(replays.clone())
    };
    let spectrum_head = pencil_head(&form.a, &form.g_l2, SPECTRUM_HEAD)?;
    let sigma0 = compute_sigma0(coeff)?.sigma0;
    let flow = sigma_spectral_flow(coeff, disc, sigma0)?;
    if flow.enlarged {
        warnings.push(format!("sigma0 enlarged to {:e} for the discretized form", flow.sigma0));
    }
    Ok(MorseResult {
        index,
        spectrum_head,
        stability: Stability { stable, replays },
        sigma0: flow.sigma0,
        sf_sigma: flow.value,
        limit_hyperbolic,
        growth,
        flow,
        warnings,
    })
}

/// Spectral flow of `σ ↦ A + σ G_{W^{1,2}}` over `[0, σ₀]`: the net drop of
/// the negative count on a 64-point grid, bisected where the count jumps by
/// more than one.
pub fn sigma_spectral_flow(
    coeff: &CoefficientPath,
    disc: &Discretization,
    sigma0: f64,
) -> Result<SpectralFlow> {
    if !(sigma0 > 0.0) {
        return Err(Error::invalid("sigma0 must be positive"));
    }
    let form = assemble_form(coeff, disc)?;
    let count = |s: f64| -> Result<usize> { Ok(negative_count(&form.a.add_scaled(&form.g_w12, s))?.0) };
    let mut sigma0 = sigma0;
    let mut enlarged = false;
    let mut end = count(sigma0)?;
    for _ in 0..30 {
        if end == 0 {
            break;
        }
        sigma0 *= 2.0;
        enlarged = true;
        end = count(sigma0)?;
    }
    if end != 0 {
        return Err(Error::NonConvergence(
            "no sigma makes the discretized form positive definite".into(),
        ));
    }
    let mut pts: Vec<(f64, usize)> = Vec::with_capacity(SIGMA_GRID);
    for i in 0..SIGMA_GRID {
        let s = sigma0 * i as f64 / (SIGMA_GRID - 1) as f64;
        pts.push((s, if i + 1 == SIGMA_GRID { end } else { count(s)? }));
    }
    let mut crossings = Vec::new();
    let mut monotone = true;
    let mut unresolved = 0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.1 > a.1 {
            monotone = false;
        }
        if a.1 == b.1 {
            continue;
        }
        // isolate single drops by bisection
        let mut stack = vec![(a, b)];
        while let Some((l, r)) = stack.pop() {
            let jump = l.1 as i64 - r.1 as i64;
            if jump == 0 {
                continue;
            }
            if jump.abs() == 1 || r.0 - l.0 < 1e-10 * sigma0 {
                if jump.abs() > 1 {
                    unresolved += 1;
                }
                // locate the single change
                let (mut lo, mut hi) = (l, r);
                while hi.0 - lo.0 > 1e-9 * sigma0.max(1.0) {
                    let mid = 0.5 * (lo.0 + hi.0);
                    let c = count(mid)?;
                    if c == lo.1 {
                        lo = (mid, c);
                    } else {
                        hi = (mid, c);
                    }
                }
                crossings.push((0.5 * (lo.0 + hi.0), jump));
                continue;
            }
            let mid = 0.5 * (l.0 + r.0);
            let c = count(mid)?;
            if c > l.1.max(r.1) || c < l.1.min(r.1) {
                monotone = false;
            }
            stack.push(((mid, c), r));
            stack.push((l, (mid, c)));
        }
    }
    crossings.sort_by(|x, y| x.0.total_cmp(&y.0));
    let start = pts[0].1;
    Ok(SpectralFlow {
        value: crossings.iter().map(|c| c.1).sum(),
        sigma0,
        enlarged,
        crossings,
        start_negative: start,
        end_negative: end,
        monotone,
        unresolved_clusters: unresolved,
    })
}

/// `I(S, T) = dim(E₊(S) ∩ E₋(T)) - dim(E₋(S) ∩ E₊(T))`, intersections from
/// principal angles between the spectral subspaces.
pub fn relative_morse_index(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<i64> {
    let n = s.nrows();
    if s.shape() != (n, n) || t.shape() != (n, n) {
        return Err(Error::invalid("S and T must be square of the same size"));
    }
    let split = |m: &DMatrix<f64>, name: &str| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (vals, vecs) = sym_eigen(m);
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if vals.iter().any(|v| v.abs() <= 1e-10 * scale) {
            return Err(Error::invalid(format!("{name} is numerically singular")));
        }
        let pick = |neg: bool| {
            let cols: Vec<_> = vals
                .iter()
                .enumerate()
                .filter(|(_, v)| (**v < 0.0) == neg)
                .map(|(k, _)| vecs.column(k).into_owned())
                .collect();
            if cols.is_empty() {
                DMatrix::zeros(n, 0)
            } else {
                DMatrix::from_columns(&cols)
            }
        };
        Ok((pick(false), pick(true)))
    };
    let (sp, sn) = split(s, "S")?;
    let (tp, tn) = split(t, "T")?;
    let meet = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> usize {
        if a.ncols() == 0 || b.ncols() == 0 {
            return 0;
        }
        singular_values_asc(&(a.transpose() * b))
            .iter()
            .filter(|&&c| c > 1.0 - 1e-8)
            .count()
    };
    Ok(meet(&sp, &tn) as i64 - meet(&sn, &tp) as i64)
}

#[derive(Clone, Debug, Default)]
pub struct TheoremOptions {
    pub geometric: GeometricOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexTheoremReport {
    pub iota_spec: usize,
    pub iota_geo: i64,
    pub sf_sigma: i64,
    pub sigma_path_maslov: i64,
    pub spec_equals_geo: bool,
    pub spec_equals_sf: bool,
    /// `sigma_path_maslov = -ι_geo`.
    pub sigma_path_consistent: bool,
    pub all_agree: bool,
    pub stable: bool,
    pub bnd: BndReport,
    pub rectangle: RectangleReport,
    pub crossings: Vec<Crossing>,
    pub sigma0: f64,
    pub morse: MorseResult,
    /// Hypothesis violations and mismatches, in plain words.
    pub diagnostics: Vec<String>,
}

/// Runs both index engines on an arbitrary coefficient path.
pub fn verify_coefficients(
    coeff: &CoefficientPath,
    disc: &Discretization,
    opts: &TheoremOptions,
) -> Result<IndexTheoremReport> {
    if !limit_hyperbolic(coeff)? {
        return Err(Error::Hypothesis(
            "limit Hamiltonian is not hyperbolic; the index theorem does not apply".into(),
        ));
    }
    let morse = spectral_index(coeff, disc)?;
    let ham = assemble_hamiltonian(coeff)?;
    let geo = geometric_index(&ham, &opts.geometric)?;
    let sigma = sigma_path_maslov(coeff, morse.sigma0, &opts.geometric)?;
    let mut diagnostics = Vec::new();
    if !geo.bnd.limit_transversal {
        diagnostics.push("BND fails at the limit: E^s_* meets L0".to_string());
    }
    if !geo.bnd.initial_transversal {
        diagnostics.push("BND fails at tau0 = 0: E^s(0) meets L0".to_string());
    }
    let spec_equals_geo = morse.index as i64 == geo.value;
    let spec_equals_sf = morse.index as i64 == morse.sf_sigma;
    let sigma_path_consistent = sigma.value == -geo.value;
    if !spec_equals_geo {
        diagnostics.push(format!(
            "iota_spec = {} but iota_geo = {}",
            morse.index, geo.value
        ));
    }
    if !spec_equals_sf {
        diagnostics.push(format!(
            "iota_spec = {} but sf_sigma = {}",
            morse.index, morse.sf_sigma
        ));
    }
    if !sigma_path_consistent {
        diagnostics.push(format!(
            "sigma-path Maslov index {} is not -iota_geo = {}",
            sigma.value, -geo.value
        ));
    }
    if !morse.stability.stable {
        diagnostics.push("spectral index changes under the L/mesh replays".to_string());
    }
    if !sigma.rectangle.limit_edge_transversal {
        diagnostics.push("limit edge of the rectangle meets L0".to_string());
    }
    if sigma.rectangle.sigma0_edge_crossings != 0 {
        diagnostics.push("sigma0 edge of the rectangle has crossings".to_string());
    }
    Ok(IndexTheoremReport {
        iota_spec: morse.index,
        iota_geo: geo.value,
        sf_sigma: morse.sf_sigma,
        sigma_path_maslov: sigma.value,
        spec_equals_geo,
        spec_equals_sf,
        sigma_path_consistent,
        all_agree: spec_equals_geo && spec_equals_sf && sigma_path_consistent,
        stable: morse.stability.stable,
        bnd: geo.bnd,
        rectangle: sigma.rectangle,
        crossings: geo.maslov.crossings,
        sigma0: morse.sigma0,
        morse,
        diagnostics,
    })
}

/// The full chain `ι_spec = sf_σ = -(-ι_geo) = ι_geo` for an n-body
/// trajectory. Refuses when [BS] fails.
pub fn verify_index_theorem(
    chart: &Chart,
    cc: &CentralConfiguration,
    traj: &TrajectoryData,
    disc: &Discretization,
    opts: &TheoremOptions,
) -> Result<IndexTheoremReport> {
    let bs = check_bs(cc);
    if !bs.holds {
        return Err(Error::Hypothesis(format!(
            "[BS] fails (margin {:e}); the spectral index is not finite",
            bs.margin
        )));
    }
    let k = constants(cc, traj.mode);
    let coeff = assemble_coefficients(chart, cc, &k, traj, 0.0)?;
    verify_coefficients(&coeff, disc, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::LimitBlocks;

    fn toy(r: f64, length: f64) -> CoefficientPath {
        let one = DMatrix::from_element(1, 1, 1.0);
        let limit = LimitBlocks {
            p0: one.clone(),
            q0: DMatrix::zeros(1, 1),
            r_tilde0: one * r,
        };
        CoefficientPath::constant(limit, vec![0.0, length]).unwrap()
    }

    #[test]
    fn positive_toy_has_index_zero() {
        let c = toy(1.0, 10.0);
        let f = assemble_form(&c, &Discretization::new(10.0, 200).unwrap()).unwrap();
        assert_eq!(negative_count(&f.a).unwrap().0, 0);
    }

    #[test]
    fn dirichlet_toy_on_pi() {
        let c = toy(-4.0, std::f64::consts::PI);
        let d = Discretization::new(std::f64::consts::PI, 400).unwrap();
        let f = assemble_form(&c, &d).unwrap();
        assert_eq!(negative_count(&f.a).unwrap().0, 1);
        let head = pencil_head(&f.a, &f.g_l2, 2).unwrap();
        assert!((head[0] + 3.0).abs() < 1e-3);
        assert!(head[1] > 0.0 && head[1] < 1e-3);
    }

    #[test]
    fn relative_index_against_positive() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let t = DMatrix::identity(3, 3);
        assert_eq!(relative_morse_index(&s, &t).unwrap(), -1);
        assert_eq!(relative_morse_index(&s, &s).unwrap(), 0);
    }
}
