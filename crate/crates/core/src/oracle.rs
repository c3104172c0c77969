//! Exact enumeration of every labeled particle configuration of a small
//! discrete instance. Reference values for gap probabilities, correlation
//! and Janossy densities, and count distributions.
//!
//! Weight of a labeled configuration `x = (x^{(1)}, …, x^{(m)})`:
//! `det(f_a(x^{(1)}_b)) · Π_j det(g_{j+1,j}(x^{(j+1)}_a, x^{(j)}_b)) · det(h_a(x^{(m)}_b)) · Π μ`.
//! Tuples with a repeated node within a level have zero weight and are
//! skipped. With the raw `f`, `h` rows, `Z = (N!)^m · det A`.

use crate::chain::{in_interval, ChainTables, WeightSet};
use crate::error::{Error, Result};
use crate::fredholm::{flat_index, interval_capacities, CountDistribution};
use crate::kernels::BlockKernel;
use crate::linalg::{minor_det, Matrix};
use crate::measure::Grid;

/// Hard cap on labeled configurations (`Π_j n_j^N`).
pub const MAX_CONFIGURATIONS: u128 = 10_000_000;

/// One labeled configuration: `N` node indices per level.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub levels: Vec<Vec<usize>>,
    pub weight: f64,
}

impl Configuration {
    /// Any particle at a node where `w ≠ 0`.
    pub fn hits(&self, weights: &WeightSet) -> bool {
        self.levels
            .iter()
            .enumerate()
            .any(|(j, nodes)| nodes.iter().any(|&i| weights.in_support(j, i)))
    }
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    grids: Vec<Grid>,
    rank: usize,
    /// `levels · rank` node indices per stored configuration
    indices: Vec<u32>,
    /// normalized weights
    probs: Vec<f64>,
    z: f64,
}

/// Ordered `len`-tuples of distinct indices below `n`.
fn distinct_tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(n: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, len, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, len, &mut cur, &mut out);
    out
}

pub(crate) fn labeled_count(sizes: &[usize], rank: usize) -> u128 {
    sizes
        .iter()
        .map(|&n| (n as u128).saturating_pow(rank as u32))
        .fold(1u128, |a, b| a.saturating_mul(b))
}

/// Visits every labeled configuration with distinct nodes per level and
/// its weight under the given end rows.
fn for_each_configuration(
    grids: &[Grid],
    first: &Matrix,
    transfers: &[Matrix],
    last: &Matrix,
    mut visit: impl FnMut(&[Vec<usize>], f64),
) {
    let m = grids.len();
    let rank = first.nrows();
    let rows: Vec<usize> = (0..rank).collect();
    let tuples: Vec<Vec<Vec<usize>>> = grids.iter().map(|g| distinct_tuples(g.len(), rank)).collect();
    let mass = |j: usize, t: &[usize]| t.iter().map(|&i| grids[j].weights()[i]).product::<f64>();
    let mut stack: Vec<Vec<usize>> = Vec::with_capacity(m);

    fn rec(
        j: usize,
        partial: f64,
        ctx: &Ctx,
        stack: &mut Vec<Vec<usize>>,
        visit: &mut dyn FnMut(&[Vec<usize>], f64),
    ) {
        let m = ctx.tuples.len();
        for t in &ctx.tuples[j] {
            let mut w = partial * (ctx.mass)(j, t);
            if j == 0 {
                w *= minor_det(ctx.first, ctx.rows, t);
            } else {
                w *= minor_det(&ctx.transfers[j - 1], t, &stack[j - 1]);
            }
            if w == 0.0 {
                continue;
            }
            stack.push(t.clone());
            if j + 1 == m {
                let total = w * minor_det(ctx.last, ctx.rows, t);
                if total != 0.0 {
                    visit(stack, total);
                }
            } else {
                rec(j + 1, w, ctx, stack, visit);
            }
            stack.pop();
        }
    }

    struct Ctx<'a> {
        tuples: &'a [Vec<Vec<usize>>],
        first: &'a Matrix,
        last: &'a Matrix,
        transfers: &'a [Matrix],
        rows: &'a [usize],
        mass: &'a dyn Fn(usize, &[usize]) -> f64,
    }
    let ctx = Ctx {
        tuples: &tuples,
        first,
        last,
        transfers,
        rows: &rows,
        mass: &mass,
    };
    rec(0, 1.0, &ctx, &mut stack, &mut visit);
}

impl Enumeration {
    /// Enumeration with arbitrary end rows in place of `f` and `h`.
    pub fn with_end_rows(grids: &[Grid], first: &Matrix, transfers: &[Matrix], last: &Matrix) -> Result<Self> {
        let m = grids.len();
        let rank = first.nrows();
        if m == 0 || rank == 0 || last.nrows() != rank || transfers.len() + 1 != m {
            return Err(Error::ShapeError("inconsistent enumeration inputs".into()));
        }
        if first.ncols() != grids[0].len() || last.ncols() != grids[m - 1].len() {
            return Err(Error::ShapeError("end rows do not match the end grids".into()));
        }
        for (j, g) in transfers.iter().enumerate() {
            if g.shape() != (grids[j + 1].len(), grids[j].len()) {
                return Err(Error::ShapeError(format!("transfer {j} has the wrong shape")));
            }
        }
        let sizes: Vec<usize> = grids.iter().map(Grid::len).collect();
        let count = labeled_count(&sizes, rank);
        if count > MAX_CONFIGURATIONS {
            return Err(Error::TooManyConfigurations(count));
        }
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for_each_configuration(grids, first, transfers, last, |cfg, w| {
            indices.extend(cfg.iter().flatten().map(|&i| i as u32));
            weights.push(w);
        });
        let z: f64 = weights.iter().sum();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NotAProbability(format!("total mass Z = {z:e}")));
        }
        let probs = weights.into_iter().map(|w| w / z).collect();
        Ok(Enumeration {
            grids: grids.to_vec(),
            rank,
            indices,
            probs,
            z,
        })
    }

    pub fn levels(&self) -> usize {
        self.grids.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Total unnormalized mass over labeled configurations.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Number of stored (nonzero-weight) configurations.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn raw(&self, k: usize) -> &[u32] {
        let stride = self.levels() * self.rank;
        &self.indices[k * stride..(k + 1) * stride]
    }

    fn level_nodes(&self, k: usize, j: usize) -> &[u32] {
        &self.raw(k)[j * self.rank..(j + 1) * self.rank]
    }

    /// Configuration `k` with its normalized weight.
    pub fn configuration(&self, k: usize) -> Configuration {
        Configuration {
            levels: (0..self.levels())
                .map(|j| self.level_nodes(k, j).iter().map(|&i| i as usize).collect())
                .collect(),
            weight: self.probs[k],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.len()).map(|k| self.configuration(k))
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn point_mass(&self, points: &[Vec<usize>]) -> f64 {
        points
            .iter()
            .enumerate()
            .flat_map(|(j, pts)| pts.iter().map(move |&p| self.grids[j].weights()[p]))
            .product()
    }
}

pub fn enumerate(tables: &ChainTables) -> Result<Enumeration> {
    Enumeration::with_end_rows(tables.grids(), tables.f_values(), tables.g_values(), tables.h_values())
}

/// Unnormalized weight of one labeled configuration under the raw
/// `f`, `h` rows. Zero when a node repeats within a level.
pub fn configuration_weight(tables: &ChainTables, config: &[Vec<usize>]) -> f64 {
    let m = tables.levels();
    let rows: Vec<usize> = (0..tables.rank()).collect();
    let mut w = minor_det(tables.f_values(), &rows, &config[0]) * minor_det(tables.h_values(), &rows, &config[m - 1]);
    for (j, g) in tables.g_values().iter().enumerate() {
        w *= minor_det(g, &config[j + 1], &config[j]);
    }
    let mass: f64 = config
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.iter().map(move |&i| tables.grid(j).weights()[i]))
        .product();
    if has_duplicates(config) {
        0.0
    } else {
        w * mass
    }
}

fn has_duplicates(points: &[Vec<usize>]) -> bool {
    points.iter().any(|pts| {
        let mut s = pts.clone();
        s.sort_unstable();
        s.windows(2).any(|w| w[0] == w[1])
    })
}

fn valid_points(en: &Enumeration, points: &[Vec<usize>]) -> bool {
    points.len() == en.levels()
        && points
            .iter()
            .zip(&en.grids)
            .all(|(pts, g)| pts.iter().all(|&p| p < g.len()))
}

/// Density (per unit mass of the given nodes) of finding particles at all
/// of the given nodes.
pub fn oracle_correlation(en: &Enumeration, points: &[Vec<usize>]) -> f64 {
    if !valid_points(en, points) || has_duplicates(points) {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..en.len() {
        let contains = points.iter().enumerate().all(|(j, pts)| {
            let nodes = en.level_nodes(k, j);
            pts.iter().all(|&p| nodes.contains(&(p as u32)))
        });
        if contains {
            acc += en.probs[k];
        }
    }
    acc / en.point_mass(points)
}

/// Density of finding exactly the given nodes (and no others) inside the
/// support of `weights`.
pub fn oracle_janossy(en: &Enumeration, weights: &WeightSet, points: &[Vec<usize>]) -> f64 {
    if !valid_points(en, points) || has_duplicates(points) {
        return 0.0;
    }
    let targets: Vec<Vec<u32>> = points
        .iter()
        .map(|pts| {
            let mut s: Vec<u32> = pts.iter().map(|&p| p as u32).collect();
            s.sort_unstable();
            s
        })
        .collect();
    let mut acc = 0.0;
    for k in 0..en.len() {
        let matches = (0..en.levels()).all(|j| {
            let mut inside: Vec<u32> = en
                .level_nodes(k, j)
                .iter()
                .copied()
                .filter(|&i| weights.in_support(j, i as usize))
                .collect();
            inside.sort_unstable();
            inside == targets[j]
        });
        if matches {
            acc += en.probs[k];
        }
    }
    acc / en.point_mass(points)
}

/// Probability of no particle in the support of `weights`.
pub fn oracle_gap(en: &Enumeration, weights: &WeightSet) -> f64 {
    (0..en.len())
        .filter(|&k| {
            (0..en.levels()).all(|j| {
                en.level_nodes(k, j)
                    .iter()
                    .all(|&i| !weights.in_support(j, i as usize))
            })
        })
        .map(|k| en.probs[k])
        .sum()
}

/// Exact count-vector histogram for disjoint half-open intervals.
pub fn oracle_counts(en: &Enumeration, intervals: &[Vec<(f64, f64)>]) -> Result<CountDistribution> {
    let caps = interval_capacities(&en.grids, intervals, en.rank)?;
    let shape: Vec<usize> = caps.iter().map(|c| c + 1).collect();
    let mut probs = vec![0.0; shape.iter().product()];
    let mut counts = vec![0usize; caps.len()];
    for k in 0..en.len() {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut alpha = 0;
        for (j, ivs) in intervals.iter().enumerate() {
            for &iv in ivs {
                counts[alpha] = en
                    .level_nodes(k, j)
                    .iter()
                    .filter(|&&i| in_interval(en.grids[j].nodes()[i as usize], iv))
                    .count();
                alpha += 1;
            }
        }
        let idx = flat_index(&shape, &counts).expect("counts bounded by capacity");
        probs[idx] += en.probs[k];
    }
    Ok(CountDistribution::new(shape, probs))
}

/// `Σ` over labeled configurations with distinct nodes of `det Ǩ(x) · Π μ`.
/// Equals `(N!)^m` when `Ǩ` is the Eynard–Mehta kernel of the ensemble.
pub fn labeled_eynard_mehta_total(tables: &ChainTables, kc: &BlockKernel) -> Result<f64> {
    let rank = tables.rank();
    let count = labeled_count(&tables.sizes(), rank);
    if count > MAX_CONFIGURATIONS {
        return Err(Error::TooManyConfigurations(count));
    }
    let dense = kc.to_dense();
    let off = kc.offsets();
    let tuples: Vec<Vec<Vec<usize>>> = tables
        .grids()
        .iter()
        .map(|g| distinct_tuples(g.len(), rank))
        .collect();
    let m = tables.levels();
    let mut total = 0.0;
    let mut choice = vec![0usize; m];
    loop {
        let mut idx = Vec::with_capacity(m * rank);
        let mut mass = 1.0;
        for j in 0..m {
            for &i in &tuples[j][choice[j]] {
                idx.push(off[j] + i);
                mass *= tables.grid(j).weights()[i];
            }
        }
        total += minor_det(&dense, &idx, &idx) * mass;
        // odometer
        let mut j = 0;
        loop {
            if j == m {
                return Ok(total);
            }
            choice[j] += 1;
            if choice[j] < tuples[j].len() {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{from_indicators, from_tables};
    use crate::measure::make_discrete_grid;
    use crate::random::positive_discrete_instance;
    use approx::assert_abs_diff_eq;

    fn two_point() -> ChainTables {
        let grid = make_discrete_grid(&[0.0, 1.0], &[1.0, 1.0], 0).unwrap();
        let f = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        from_tables(vec![grid], f.clone(), f, vec![]).unwrap()
    }

    #[test]
    fn single_particle_total_mass() {
        let en = enumerate(&two_point()).unwrap();
        assert_eq!(en.z(), 2.0);
        assert_eq!(en.len(), 2);
    }

    #[test]
    fn two_particles_on_one_node_is_not_a_probability() {
        let grid = make_discrete_grid(&[0.0], &[1.0], 0).unwrap();
        let f = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let err = Enumeration::with_end_rows(&[grid], &f, &[], &f);
        assert!(matches!(err, Err(Error::NotAProbability(_))));
    }

    #[test]
    fn cap_is_enforced() {
        let t = positive_discrete_instance(1, 3, &[30, 30, 30], 1.0);
        assert!(matches!(enumerate(&t), Err(Error::TooManyConfigurations(_))));
    }

    #[test]
    fn normalized_and_symmetric() {
        let t = positive_discrete_instance(2, 2, &[4, 5], 0.8);
        let en = enumerate(&t).unwrap();
        assert_abs_diff_eq!(en.total_probability(), 1.0, epsilon = 1e-12);
        // relabeling within a level leaves the weight unchanged
        for cfg in en.iter() {
            let swapped: Vec<Vec<usize>> = cfg.levels.iter().map(|l| l.iter().rev().copied().collect()).collect();
            let k = (0..en.len()).find(|&k| en.configuration(k).levels == swapped).unwrap();
            assert_abs_diff_eq!(en.configuration(k).weight, cfg.weight, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_point_sets_and_trivial_sets() {
        let t = positive_discrete_instance(3, 2, &[4, 4], 1.0);
        let en = enumerate(&t).unwrap();
        let empty = vec![vec![], vec![]];
        assert_abs_diff_eq!(oracle_correlation(&en, &empty), 1.0, epsilon = 1e-12);
        let none = WeightSet::zeros(t.grids());
        assert_abs_diff_eq!(oracle_gap(&en, &none), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle_janossy(&en, &none, &empty), 1.0, epsilon = 1e-12);
        let full_first = from_indicators(t.grids(), &[vec![(-10.0, 10.0)], vec![]], &[vec![1.0], vec![]]).unwrap();
        assert_eq!(oracle_gap(&en, &full_first), 0.0);
        let counts = oracle_counts(&en, &[vec![], vec![]]).unwrap();
        assert_abs_diff_eq!(counts.get(&[]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_point_sum_rule() {
        let t = positive_discrete_instance(4, 2, &[4, 5], 1.0);
        let en = enumerate(&t).unwrap();
        for j in 0..2 {
            let total: f64 = (0..t.grid(j).len())
                .map(|i| {
                    let mut pts = vec![vec![]; 2];
                    pts[j] = vec![i];
                    t.grid(j).weights()[i] * oracle_correlation(&en, &pts)
                })
                .sum();
            assert_abs_diff_eq!(total, 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn full_configuration_janossy_is_joint_density() {
        let t = positive_discrete_instance(5, 1, &[3], 1.0);
        let en = enumerate(&t).unwrap();
        let all = WeightSet::ones(t.grids());
        for k in 0..en.len() {
            let cfg = en.configuration(k);
            let mass = t.grid(0).weights()[cfg.levels[0][0]];
            assert_abs_diff_eq!(oracle_janossy(&en, &all, &cfg.levels), cfg.weight / mass, epsilon = 1e-14);
        }
    }

    #[test]
    fn marginal_counts_match_single_level_law() {
        let t = positive_discrete_instance(6, 2, &[4, 4], 1.0);
        let en = enumerate(&t).unwrap();
        let both = oracle_counts(&en, &[vec![(-0.5, 1.0)], vec![(0.0, 2.0)]]).unwrap();
        let first = oracle_counts(&en, &[vec![(-0.5, 1.0)], vec![]]).unwrap();
        for (c, p) in first.iter() {
            let marginal: f64 = (0..both.shape()[1]).map(|k| both.get(&[c[0], k]).unwrap()).sum();
            assert_abs_diff_eq!(marginal, p, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(both.total(), 1.0, epsilon = 1e-12);
    }
}
