//! Fredholm determinants and resolvents of weighted block kernels, the
//! densities built from them, and the resolvent identity residuals.
//!
//! The operator `Ǩ ∘ w` on the direct sum of levels is discretized as the
//! flat matrix `M = Ǩ · diag(μ w)`; `det(1 - Ǩ^w) = det(I - M)`.

use std::sync::Arc;

use crate::biortho::{complement_factors, dual_bases, DualBases};
use crate::chain::{check_intervals, in_interval, ChainTables, WeightSet};
use crate::error::{Error, Result};
use crate::kernels::{build_g, build_k, check_kernel, compose_w, BlockKernel};
use crate::linalg::{det, max_abs, minor_det, scale_cols, Lu, Matrix};
use crate::wide::{to_f64, Dd, DdLu, DdMatrix, ONE, ZERO};

/// Fredholm determinants below this magnitude have no usable resolvent.
pub const RESOLVENT_DET_FLOOR: f64 = 1e-12;
/// Largest per-interval count recoverable by κ-interpolation.
pub const MAX_INTERPOLATED_COUNT: usize = 8;

/// Flattened `Ǩ · diag(μ w)` with level start offsets.
#[derive(Debug, Clone)]
pub struct BigMatrix {
    pub data: Matrix,
    pub offsets: Vec<usize>,
}

impl BigMatrix {
    pub fn assemble(kernel: &BlockKernel, weights: &WeightSet) -> Result<Self> {
        check_shape(kernel, weights)?;
        Ok(BigMatrix {
            data: kernel.right_weighted(weights).to_dense(),
            offsets: kernel.offsets(),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// `I - M`
    pub fn one_minus(&self) -> Matrix {
        Matrix::identity(self.dim(), self.dim()) - &self.data
    }
}

fn check_shape(kernel: &BlockKernel, weights: &WeightSet) -> Result<()> {
    let sizes = kernel.sizes();
    if weights.levels() != sizes.len()
        || sizes.iter().enumerate().any(|(j, &n)| weights.level(j).len() != n)
    {
        return Err(Error::ShapeError("weights do not match the kernel grids".into()));
    }
    Ok(())
}

fn require_checked(kernel: &BlockKernel) -> Result<()> {
    if !kernel.is_checked() {
        return Err(Error::StateError("expected a checked kernel (K - g)".into()));
    }
    Ok(())
}

/// `det(1 - Ǩ^w)`; for indicator weights the probability of no points in the sets.
pub fn fredholm_det(kc: &BlockKernel, weights: &WeightSet) -> Result<f64> {
    require_checked(kc)?;
    check_shape(kc, weights)?;
    Ok(to_f64(DdLu::new(&one_minus_wide(kc, weights)).det()))
}

/// `1 - Ǩ · diag(μ w)` in double-double; the products are exact.
fn one_minus_wide(kc: &BlockKernel, weights: &WeightSet) -> DdMatrix {
    let dense = kc.to_dense();
    let mw: Vec<Dd> = kc
        .grids()
        .iter()
        .zip(weights.as_slices())
        .flat_map(|(g, w)| g.weights().iter().zip(w).map(|(&m, &w)| Dd::new_mul(m, w)).collect::<Vec<_>>())
        .collect();
    DdMatrix::from_fn(dense.nrows(), dense.ncols(), |r, c| {
        let delta = if r == c { ONE } else { ZERO };
        delta - mw[c] * dense[(r, c)]
    })
}

/// Kernel-valued resolvent: `R^w = (1 - Ǩ^w)^{-1} Ǩ^w` with its right
/// `μ w` factor removed, so `R^w = R ∘ w`. Computed as `(1 - Ǩ^w)^{-1} Ǩ`
/// with the columns outside the support of `w` set to zero.
pub fn resolvent(kc: &BlockKernel, weights: &WeightSet) -> Result<BlockKernel> {
    require_checked(kc)?;
    check_shape(kc, weights)?;
    let lu = DdLu::new(&one_minus_wide(kc, weights));
    let d = to_f64(lu.det());
    if !(d.abs() > RESOLVENT_DET_FLOOR) {
        return Err(Error::ResolventSingular(d));
    }
    let mut r = lu
        .solve(&DdMatrix::from_f64(&kc.to_dense()))
        .ok_or(Error::ResolventSingular(d))?
        .to_f64();
    let off = kc.offsets();
    for j in 0..weights.levels() {
        for (i, &wi) in weights.level(j).iter().enumerate() {
            if wi == 0.0 {
                r.column_mut(off[j] + i).fill(0.0);
            }
        }
    }
    Ok(BlockKernel::from_dense(Arc::clone(kc.grids()), &r, true))
}

fn check_points(sizes: &[usize], points: &[Vec<usize>]) -> Result<()> {
    if points.len() != sizes.len() {
        return Err(Error::ShapeError(format!(
            "{} point lists for {} levels",
            points.len(),
            sizes.len()
        )));
    }
    for (level, (pts, &size)) in points.iter().zip(sizes).enumerate() {
        if let Some(&index) = pts.iter().find(|&&p| p >= size) {
            return Err(Error::IndexError { level, index, size });
        }
    }
    Ok(())
}

/// Flattened (level, node) indices of a per-level point list.
fn flat_indices(offsets: &[usize], points: &[Vec<usize>]) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .flat_map(|(j, pts)| pts.iter().map(move |&p| offsets[j] + p))
        .collect()
}

fn sampled_det(kernel: &BlockKernel, points: &[Vec<usize>]) -> Result<f64> {
    check_points(&kernel.sizes(), points)?;
    let idx = flat_indices(&kernel.offsets(), points);
    if idx.is_empty() {
        return Ok(1.0);
    }
    let dense = kernel.to_dense();
    Ok(minor_det(&dense, &idx, &idx))
}

/// `det(Ǩ_ij(x_a^{(i)}, x_b^{(j)}))` over the given node indices per level.
pub fn correlation(kc: &BlockKernel, points: &[Vec<usize>]) -> Result<f64> {
    require_checked(kc)?;
    sampled_det(kc, points)
}

/// Density of finding exactly the given points inside the indicator sets:
/// `det(1 - Ǩ^χ) · det(R_ij(x_a, x_b))`.
pub fn janossy(kc: &BlockKernel, weights: &WeightSet, points: &[Vec<usize>]) -> Result<f64> {
    require_checked(kc)?;
    check_shape(kc, weights)?;
    if !weights.is_indicator() {
        return Err(Error::DomainError(
            "Janossy densities need indicator weights (entries 0 or 1)".into(),
        ));
    }
    check_points(&kc.sizes(), points)?;
    for (j, pts) in points.iter().enumerate() {
        if let Some(&p) = pts.iter().find(|&&p| weights.level(j)[p] != 1.0) {
            return Err(Error::DomainError(format!(
                "node {p} at level {j} lies outside the indicator set"
            )));
        }
    }
    let c = fredholm_det(kc, weights)?;
    if points.iter().all(Vec::is_empty) {
        return Ok(c);
    }
    let r = resolvent(kc, weights)?;
    Ok(c * sampled_det(&r, points)?)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Joint density of a full configuration (N node indices per level) by
/// both routes: `(N!)^m · det ψ^{(1)} · det φ^{(m)} · Π det g / z` and
/// `det Ǩ`. `z` is the labeled total mass of the same product with the
/// `bases`' end rows (see [`crate::oracle::Enumeration::with_end_rows`]).
pub fn joint_density(
    bases: &DualBases,
    tables: &ChainTables,
    config: &[Vec<usize>],
    z: f64,
) -> Result<(f64, f64)> {
    if !bases.weights.is_zero() {
        return Err(Error::StateError("joint density needs the plain (w = 0) bases".into()));
    }
    let m = tables.levels();
    let n_rank = tables.rank();
    check_points(&tables.sizes(), config)?;
    if config.iter().any(|c| c.len() != n_rank) {
        return Err(Error::ShapeError(format!("need {n_rank} particles per level")));
    }
    let all_rows: Vec<usize> = (0..n_rank).collect();
    let mut product = minor_det(&bases.psi[0], &all_rows, &config[0])
        * minor_det(&bases.phi[m - 1], &all_rows, &config[m - 1]);
    for (j, g) in tables.g_values().iter().enumerate() {
        product *= minor_det(g, &config[j + 1], &config[j]);
    }
    let prob = factorial(n_rank).powi(m as i32) * product / z;

    let zero = WeightSet::zeros(tables.grids());
    let kc = check_kernel(&build_k(bases), &build_g(tables, &zero)?)?;
    let eynard_mehta = sampled_det(&kc, config)?;
    Ok((prob, eynard_mehta))
}

/// Probabilities of count vectors, one count per (level, interval) in
/// level-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    shape: Vec<usize>,
    probabilities: Vec<f64>,
}

impl CountDistribution {
    pub(crate) fn new(shape: Vec<usize>, probabilities: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), probabilities.len());
        CountDistribution { shape, probabilities }
    }

    /// Number of possible values per interval (max count + 1).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn get(&self, counts: &[usize]) -> Option<f64> {
        flat_index(&self.shape, counts).map(|i| self.probabilities[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| (unflatten(&self.shape, i), p))
    }

    pub fn max_abs_diff(&self, other: &CountDistribution) -> Option<f64> {
        (self.shape == other.shape).then(|| {
            self.probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }
}

pub(crate) fn flat_index(shape: &[usize], counts: &[usize]) -> Option<usize> {
    if counts.len() != shape.len() {
        return None;
    }
    let mut idx = 0;
    for (&c, &s) in counts.iter().zip(shape) {
        if c >= s {
            return None;
        }
        idx = idx * s + c;
    }
    Some(idx)
}

fn unflatten(shape: &[usize], mut i: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for (slot, &s) in out.iter_mut().zip(shape).rev() {
        *slot = i % s;
        i /= s;
    }
    out
}

/// Per-interval maximum count: `min(N, nodes inside the interval)`.
pub(crate) fn interval_capacities(
    grids: &[crate::measure::Grid],
    intervals: &[Vec<(f64, f64)>],
    rank: usize,
) -> Result<Vec<usize>> {
    if intervals.len() != grids.len() {
        return Err(Error::ShapeError("need one interval list per level".into()));
    }
    let mut caps = Vec::new();
    for (j, (grid, ivs)) in grids.iter().zip(intervals).enumerate() {
        check_intervals(j, ivs)?;
        for &iv in ivs {
            let inside = grid.nodes().iter().filter(|&&x| in_interval(x, iv)).count();
            caps.push(inside.min(rank));
        }
    }
    Ok(caps)
}

/// Count probabilities for the given disjoint intervals, read off as the
/// coefficients of `det(1 - Ǩ ∘ Σ_α (1 - ξ_α) χ_α)` in the monomials `Π ξ_α^{n_α}`.
pub fn gap_generating_function(
    kc: &BlockKernel,
    intervals: &[Vec<(f64, f64)>],
    rank: usize,
) -> Result<CountDistribution> {
    require_checked(kc)?;
    let grids = Arc::clone(kc.grids());
    let caps = interval_capacities(&grids, intervals, rank)?;
    if let Some(&bad) = caps.iter().find(|&&c| c > MAX_INTERPOLATED_COUNT) {
        return Err(Error::ConditioningError(bad));
    }
    let shape: Vec<usize> = caps.iter().map(|c| c + 1).collect();
    let nodes: Vec<Vec<f64>> = caps.iter().map(|&d| chebyshev_unit(d + 1)).collect();
    // (level, interval) of each variable
    let owners: Vec<(usize, (f64, f64))> = intervals
        .iter()
        .enumerate()
        .flat_map(|(j, ivs)| ivs.iter().map(move |&iv| (j, iv)))
        .collect();

    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(total);
    for flat in 0..total {
        let pick = unflatten(&shape, flat);
        let w: Vec<Vec<f64>> = grids
            .iter()
            .enumerate()
            .map(|(j, grid)| {
                grid.nodes()
                    .iter()
                    .map(|&x| {
                        owners
                            .iter()
                            .zip(&pick)
                            .enumerate()
                            .filter(|(_, ((lvl, iv), _))| *lvl == j && in_interval(x, *iv))
                            .map(|(alpha, (_, &k))| 1.0 - nodes[alpha][k])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let weights = WeightSet::new(&grids, w)?;
        values.push(fredholm_det(kc, &weights)?);
    }

    // invert the Vandermonde system along each axis
    for (axis, xi) in nodes.iter().enumerate() {
        let n = xi.len();
        let vander = Matrix::from_fn(n, n, |r, p| xi[r].powi(p as i32));
        let lu = Lu::new(&vander);
        let stride: usize = shape[axis + 1..].iter().product();
        let outer = total / (stride * n);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                let fiber = Matrix::from_fn(n, 1, |r, _| values[base + r * stride]);
                let coef = lu.solve(&fiber).ok_or(Error::ConditioningError(n - 1))?;
                for r in 0..n {
                    values[base + r * stride] = coef[(r, 0)];
                }
            }
        }
    }
    Ok(CountDistribution::new(shape, values))
}

/// Chebyshev points of the first kind mapped to [0, 1].
fn chebyshev_unit(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let t = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * count) as f64;
            0.5 * (1.0 - t.cos())
        })
        .collect()
}

/// Max-norm residuals of the resolvent identity and its supporting identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `R^w - Ǩ̃ ∘ w`
    pub resolvent: f64,
    /// `Σ_j Ǩ_ij ∘_{w_j} Ǩ̃_jk - (Ǩ̃_ik - Ǩ_ik)`
    pub composite: f64,
    /// `g ∘_w g̃ + g̃ - g`
    pub g_tilde_g: f64,
    /// `K ∘_w K̃` against its closed form
    pub k_tilde_k: f64,
    /// `g ∘_w K̃` against its closed form
    pub g_tilde_k: f64,
    /// `K ∘_w g̃` against its closed form
    pub k_tilde_g: f64,
    /// `max(1, ‖Ǩ‖_∞)`
    pub kernel_scale: f64,
    /// `max(1, ‖K‖, ‖K̃‖, ‖g‖, ‖g̃‖)`
    pub instance_scale: f64,
}

impl IdentityResiduals {
    pub fn identities(&self) -> [(&'static str, f64); 5] {
        [
            ("composite", self.composite),
            ("g_tilde_g", self.g_tilde_g),
            ("k_tilde_k", self.k_tilde_k),
            ("g_tilde_k", self.g_tilde_k),
            ("k_tilde_g", self.k_tilde_g),
        ]
    }

    pub fn within(&self, tol: f64) -> bool {
        self.resolvent <= tol * self.kernel_scale
            && self
                .identities()
                .iter()
                .all(|(_, r)| *r <= tol * self.instance_scale)
    }
}

/// Plain and weighted constructions of one instance.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    pub bases: DualBases,
    pub k: BlockKernel,
    pub g: BlockKernel,
    pub checked: BlockKernel,
}

impl KernelFamily {
    pub fn build(tables: &ChainTables, weights: &WeightSet) -> Result<Self> {
        let bases = dual_bases(tables, weights)?;
        let k = build_k(&bases);
        let g = build_g(tables, weights)?;
        let checked = check_kernel(&k, &g)?;
        Ok(KernelFamily { bases, k, g, checked })
    }
}

pub fn identity_residuals(tables: &ChainTables, weights: &WeightSet) -> Result<IdentityResiduals> {
    let plain = KernelFamily::build(tables, &WeightSet::zeros(tables.grids()))?;
    let tilde = KernelFamily::build(tables, weights)?;
    identity_residuals_from(tables, weights, &plain, &tilde)
}

pub fn identity_residuals_from(
    tables: &ChainTables,
    weights: &WeightSet,
    plain: &KernelFamily,
    tilde: &KernelFamily,
) -> Result<IdentityResiduals> {
    let m = tables.levels();
    let (k, g, kc) = (&plain.k, &plain.g, &plain.checked);
    let (kt, gt, kct) = (&tilde.k, &tilde.g, &tilde.checked);

    let r = resolvent(kc, weights)?;
    let resolvent_res = r
        .right_weighted(weights)
        .sub(&kct.right_weighted(weights))?
        .max_abs();

    let composite = compose_w(kc, weights, kct)?
        .sub(&kct.sub(kc)?)?
        .max_abs();

    let g_tilde_g = compose_w(g, weights, gt)?.add(gt)?.sub(g)?.max_abs();

    let mu_first = tables.grid(0).weights().to_vec();
    let d_last = complement_factors(tables, weights, m - 1);
    // g_{i1} ∘ K̃_{1j} + δ_{i1} K̃_{1j}
    let lead = |i: usize, j: usize| -> Matrix {
        if i == 0 {
            kt.block_or_zero(0, j)
        } else {
            scale_cols(&g.block_or_zero(i, 0), &mu_first) * kt.block_or_zero(0, j)
        }
    };
    // K_im ∘_{1-w_m} g̃_mj + δ_mj K_im
    let tail = |i: usize, j: usize| -> Matrix {
        if j == m - 1 {
            k.block_or_zero(i, m - 1)
        } else {
            scale_cols(&k.block_or_zero(i, m - 1), &d_last) * gt.block_or_zero(m - 1, j)
        }
    };

    let kw_kt = compose_w(k, weights, kt)?;
    let gw_kt = compose_w(g, weights, kt)?;
    let kw_gt = compose_w(k, weights, gt)?;
    let (mut k_tilde_k, mut g_tilde_k, mut k_tilde_g) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..m {
        for j in 0..m {
            let lhs = kw_kt.block_or_zero(i, j);
            k_tilde_k = k_tilde_k.max(max_abs(&(lhs - (lead(i, j) - tail(i, j)))));

            let lhs = gw_kt.block_or_zero(i, j);
            let rhs = lead(i, j) - kt.block_or_zero(i, j);
            g_tilde_k = g_tilde_k.max(max_abs(&(lhs - rhs)));

            let lhs = kw_gt.block_or_zero(i, j);
            let rhs = k.block_or_zero(i, j) - tail(i, j);
            k_tilde_g = k_tilde_g.max(max_abs(&(lhs - rhs)));
        }
    }

    let instance_scale = [k.max_abs(), kt.max_abs(), g.max_abs(), gt.max_abs()]
        .into_iter()
        .fold(1.0, f64::max);
    Ok(IdentityResiduals {
        resolvent: resolvent_res,
        composite,
        g_tilde_g,
        k_tilde_k,
        g_tilde_k,
        k_tilde_g,
        kernel_scale: kc.max_abs().max(1.0),
        instance_scale,
    })
}

/// `g^w` is the Fredholm resolvent of `g̃^w`:
/// max-norm of `(1 - g̃^w)^{-1} g̃^w - g^w`.
pub fn transfer_resolvent_residual(tables: &ChainTables, weights: &WeightSet) -> Result<f64> {
    let g = build_g(tables, &WeightSet::zeros(tables.grids()))?;
    let gt = build_g(tables, weights)?;
    let gw = BigMatrix::assemble(&g, weights)?.data;
    let gtw = BigMatrix::assemble(&gt, weights)?;
    let lu = Lu::new(&gtw.one_minus());
    let d = lu.det();
    let res = lu.solve(&gtw.data).ok_or(Error::ResolventSingular(d))?;
    Ok(max_abs(&(res - gw)))
}

/// `det(1 - g^w)`: unipotent for strictly lower block kernels.
pub fn transfer_fredholm_det(tables: &ChainTables, weights: &WeightSet) -> Result<f64> {
    let g = build_g(tables, &WeightSet::zeros(tables.grids()))?;
    Ok(det(&BigMatrix::assemble(&g, weights)?.one_minus()))
}
