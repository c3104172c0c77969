//! Chain instances: rank `N`, `m` levels, the end functions `f_a`, `h_a` and
//! the transfer kernels `g_{j+1,j}`, tabulated on the level grids.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measure::Grid;

/// Polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Degree after dropping trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0.0)
    }

    pub fn leading(&self) -> f64 {
        self.degree().map_or(0.0, |d| self.0[d])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `f_a = x^{a-1} e^{-V_1/2}`, `h_a = x^{a-1} e^{-V_m/2}`,
    /// `g_{j,j-1} = exp(c_j x_{j-1} x_j - (V_{j-1} + V_j)/2)`.
    MonomialExponential,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub levels: usize,
    pub rank: usize,
    pub family: Family,
    pub potentials: Vec<Polynomial>,
    pub couplings: Vec<f64>,
}

impl ChainSpec {
    pub fn monomial_exponential(
        rank: usize,
        potentials: Vec<Polynomial>,
        couplings: Vec<f64>,
    ) -> Result<Self> {
        let spec = ChainSpec {
            levels: potentials.len(),
            rank,
            family: Family::MonomialExponential,
            potentials,
            couplings,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.rank == 0 {
            return Err(Error::InvalidSpec("need m >= 1 and N >= 1".into()));
        }
        if self.family == Family::Tabulated {
            return Ok(());
        }
        if self.potentials.len() != self.levels {
            return Err(Error::InvalidSpec(format!(
                "{} potentials for {} levels",
                self.potentials.len(),
                self.levels
            )));
        }
        if self.couplings.len() + 1 != self.levels {
            return Err(Error::InvalidSpec(format!(
                "{} couplings for {} levels",
                self.couplings.len(),
                self.levels
            )));
        }
        for (j, v) in self.potentials.iter().enumerate() {
            if v.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSpec(format!("potential {j} is not finite")));
            }
            // V = 0 is allowed (flat weight on a bounded grid)
            if let Some(d) = v.degree() {
                if d % 2 != 0 || v.leading() <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "potential {j} must have even degree and positive leading coefficient"
                    )));
                }
            }
        }
        if let Some(c) = self.couplings.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec(format!("coupling {c} is not finite")));
        }
        Ok(())
    }
}

/// Tabulated chain: grids, `f` (N×n_1), `h` (N×n_m) and the transfers,
/// `g[j]` of shape n_{j+1}×n_j holding `g_{j+1,j}(x_{j+1}, x_j)`.
#[derive(Debug, Clone)]
pub struct ChainTables {
    grids: Arc<Vec<Grid>>,
    f: Matrix,
    h: Matrix,
    g: Vec<Matrix>,
}

const MONOMIAL_CONDITION_WARNING_RANK: usize = 12;

pub fn tabulate(spec: &ChainSpec, grids: Vec<Grid>) -> Result<ChainTables> {
    spec.validate()?;
    if spec.family != Family::MonomialExponential {
        return Err(Error::InvalidSpec(
            "tabulate needs the monomial/exponential family; use from_tables".into(),
        ));
    }
    if grids.len() != spec.levels {
        return Err(Error::ShapeError(format!(
            "{} grids for {} levels",
            grids.len(),
            spec.levels
        )));
    }
    if let Some(g) = grids.iter().find(|g| g.len() < spec.rank) {
        return Err(Error::DegenerateBasis(format!(
            "level {} has {} nodes, fewer than N = {}",
            g.level(),
            g.len(),
            spec.rank
        )));
    }
    if spec.rank > MONOMIAL_CONDITION_WARNING_RANK {
        log::warn!(
            "raw monomial basis with N = {} is badly conditioned",
            spec.rank
        );
    }
    let (f, h, g) = tabulate_values(spec, &grids);
    from_tables(grids, f, h, g)
}

fn tabulate_values(spec: &ChainSpec, grids: &[Grid]) -> (Matrix, Matrix, Vec<Matrix>) {
    let m = spec.levels;
    let n_rank = spec.rank;
    let end_rows = |grid: &Grid, v: &Polynomial| {
        Matrix::from_fn(n_rank, grid.len(), |a, i| {
            let x = grid.nodes()[i];
            x.powi(a as i32) * (-0.5 * v.eval(x)).exp()
        })
    };
    let f = end_rows(&grids[0], &spec.potentials[0]);
    let h = end_rows(&grids[m - 1], &spec.potentials[m - 1]);
    let g = (0..m - 1)
        .map(|j| {
            let (lo, hi) = (&grids[j], &grids[j + 1]);
            let (v_lo, v_hi) = (&spec.potentials[j], &spec.potentials[j + 1]);
            let c = spec.couplings[j];
            Matrix::from_fn(hi.len(), lo.len(), |r, s| {
                let y = hi.nodes()[r];
                let x = lo.nodes()[s];
                (c * x * y - 0.5 * (v_lo.eval(x) + v_hi.eval(y))).exp()
            })
        })
        .collect();
    (f, h, g)
}

pub fn from_tables(grids: Vec<Grid>, f: Matrix, h: Matrix, g: Vec<Matrix>) -> Result<ChainTables> {
    let m = grids.len();
    if m == 0 {
        return Err(Error::ShapeError("no levels".into()));
    }
    let grids: Vec<Grid> = grids.into_iter().enumerate().map(|(j, g)| g.with_level(j)).collect();
    let n_rank = f.nrows();
    if n_rank == 0 || h.nrows() != n_rank {
        return Err(Error::ShapeError(format!(
            "f has {} rows, h has {}",
            f.nrows(),
            h.nrows()
        )));
    }
    if f.ncols() != grids[0].len() || h.ncols() != grids[m - 1].len() {
        return Err(Error::ShapeError(
            "f must have n_1 columns and h n_m columns".into(),
        ));
    }
    if g.len() + 1 != m {
        return Err(Error::ShapeError(format!(
            "{} transfer tables for {} levels",
            g.len(),
            m
        )));
    }
    for (j, gj) in g.iter().enumerate() {
        if gj.nrows() != grids[j + 1].len() || gj.ncols() != grids[j].len() {
            return Err(Error::ShapeError(format!(
                "transfer {j} has shape {}x{}, expected {}x{}",
                gj.nrows(),
                gj.ncols(),
                grids[j + 1].len(),
                grids[j].len()
            )));
        }
    }
    let finite = |a: &Matrix| a.iter().all(|v| v.is_finite());
    if !finite(&f) || !finite(&h) || !g.iter().all(finite) {
        return Err(Error::ShapeError("non-finite table entries".into()));
    }
    check_full_row_rank(&f, "f")?;
    check_full_row_rank(&h, "h")?;
    Ok(ChainTables {
        grids: Arc::new(grids),
        f,
        h,
        g,
    })
}

fn check_full_row_rank(a: &Matrix, name: &str) -> Result<()> {
    if a.nrows() > a.ncols() {
        return Err(Error::DegenerateBasis(format!(
            "{name} has {} rows but only {} columns",
            a.nrows(),
            a.ncols()
        )));
    }
    let sv = a.clone().svd(false, false).singular_values;
    let largest = sv.max();
    let tol = largest * (a.ncols() as f64) * 1e-13;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if largest == 0.0 || rank < a.nrows() {
        return Err(Error::DegenerateBasis(format!(
            "{name} has rank {rank} < N = {}",
            a.nrows()
        )));
    }
    Ok(())
}

impl ChainTables {
    pub fn levels(&self) -> usize {
        self.grids.len()
    }

    pub fn rank(&self) -> usize {
        self.f.nrows()
    }

    pub fn grids(&self) -> &Arc<Vec<Grid>> {
        &self.grids
    }

    pub fn grid(&self, level: usize) -> &Grid {
        &self.grids[level]
    }

    pub fn f_values(&self) -> &Matrix {
        &self.f
    }

    pub fn h_values(&self) -> &Matrix {
        &self.h
    }

    /// `g_{j+1,j}` for `j = 0..m-1`.
    pub fn g_values(&self) -> &[Matrix] {
        &self.g
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Grid::len).collect()
    }

    pub fn all_discrete(&self) -> bool {
        self.grids
            .iter()
            .all(|g| g.kind() == crate::measure::GridKind::Discrete)
    }
}

/// Per-level weight functions sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    w: Vec<Vec<f64>>,
}

impl WeightSet {
    pub fn new(grids: &[Grid], w: Vec<Vec<f64>>) -> Result<Self> {
        if w.len() != grids.len() {
            return Err(Error::ShapeError(format!(
                "{} weight vectors for {} levels",
                w.len(),
                grids.len()
            )));
        }
        for (j, (wj, g)) in w.iter().zip(grids).enumerate() {
            if wj.len() != g.len() {
                return Err(Error::ShapeError(format!(
                    "weight vector {j} has length {}, grid has {}",
                    wj.len(),
                    g.len()
                )));
            }
            if wj.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeError(format!("weight vector {j} is not finite")));
            }
        }
        Ok(WeightSet { w })
    }

    pub fn constant(grids: &[Grid], value: f64) -> Self {
        WeightSet {
            w: grids.iter().map(|g| vec![value; g.len()]).collect(),
        }
    }

    pub fn zeros(grids: &[Grid]) -> Self {
        Self::constant(grids, 0.0)
    }

    pub fn ones(grids: &[Grid]) -> Self {
        Self::constant(grids, 1.0)
    }

    pub fn levels(&self) -> usize {
        self.w.len()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.w[j]
    }

    pub fn as_slices(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// `1 - w`
    pub fn complement(&self) -> WeightSet {
        WeightSet {
            w: self
                .w
                .iter()
                .map(|wj| wj.iter().map(|v| 1.0 - v).collect())
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().flatten().all(|&v| v == 0.0)
    }

    /// All entries in {0, 1}.
    pub fn is_indicator(&self) -> bool {
        self.w.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Node is in the support of the weight.
    pub fn in_support(&self, level: usize, node: usize) -> bool {
        self.w[level][node] != 0.0
    }
}

/// Half-open membership `a < x <= b`.
pub fn in_interval(x: f64, (a, b): (f64, f64)) -> bool {
    a < x && x <= b
}

pub(crate) fn check_intervals(level: usize, intervals: &[(f64, f64)]) -> Result<()> {
    for &(a, b) in intervals {
        if !(a < b) || a.is_nan() || b.is_nan() {
            return Err(Error::InvalidInterval(a, b));
        }
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
    if let Some(w) = sorted.windows(2).find(|w| w[1].0 < w[0].1) {
        return Err(Error::OverlapError {
            level,
            a1: w[0].0,
            b1: w[0].1,
            a2: w[1].0,
            b2: w[1].1,
        });
    }
    Ok(())
}

/// `w_j[i] = Σ_α κ_{α,j} · [x_i ∈ (a_{α,j}, b_{α,j}]]`.
pub fn from_indicators(
    grids: &[Grid],
    intervals: &[Vec<(f64, f64)>],
    kappas: &[Vec<f64>],
) -> Result<WeightSet> {
    if intervals.len() != grids.len() || kappas.len() != grids.len() {
        return Err(Error::ShapeError(
            "need one interval list and one kappa list per level".into(),
        ));
    }
    let mut w = Vec::with_capacity(grids.len());
    for (j, grid) in grids.iter().enumerate() {
        if intervals[j].len() != kappas[j].len() {
            return Err(Error::ShapeError(format!(
                "level {j}: {} intervals but {} kappas",
                intervals[j].len(),
                kappas[j].len()
            )));
        }
        check_intervals(j, &intervals[j])?;
        let wj = grid
            .nodes()
            .iter()
            .map(|&x| {
                intervals[j]
                    .iter()
                    .zip(&kappas[j])
                    .filter(|(iv, _)| in_interval(x, **iv))
                    .map(|(_, k)| k)
                    .sum()
            })
            .collect();
        w.push(wj);
    }
    WeightSet::new(grids, w)
}
