//! Block kernels on the direct sum of the level spaces and their weighted
//! composition.
//!
//! Blocks hold kernel values with the measure factored out; a composition
//! `A ∘_v B` inserts `diag(μ_j v_j)` between the blocks.

use std::sync::Arc;

use crate::biortho::{complement_factors, pairing_matrix, tilde_propagator, DualBases};
use crate::chain::{ChainTables, WeightSet};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, scale_cols, scale_rows, Matrix};
use crate::measure::Grid;

/// `m × m` block kernel; block `(i, j)` is `n_i × n_j`. `None` is a zero block.
#[derive(Debug, Clone)]
pub struct BlockKernel {
    blocks: Vec<Option<Matrix>>,
    checked: bool,
    grids: Arc<Vec<Grid>>,
}

impl BlockKernel {
    pub fn zeros(grids: Arc<Vec<Grid>>) -> Self {
        let m = grids.len();
        BlockKernel {
            blocks: vec![None; m * m],
            checked: false,
            grids,
        }
    }

    pub fn levels(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &Arc<Vec<Grid>> {
        &self.grids
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Grid::len).collect()
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn with_checked(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Matrix> {
        self.blocks[i * self.levels() + j].as_ref()
    }

    pub fn block_or_zero(&self, i: usize, j: usize) -> Matrix {
        self.block(i, j)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.grids[i].len(), self.grids[j].len()))
    }

    pub fn set_block(&mut self, i: usize, j: usize, value: Matrix) {
        assert_eq!(value.shape(), (self.grids[i].len(), self.grids[j].len()));
        let m = self.levels();
        self.blocks[i * m + j] = Some(value);
    }

    /// Kernel value between node `a` of level `i` and node `b` of level `j`.
    pub fn value(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        self.block(i, j).map_or(0.0, |blk| blk[(a, b)])
    }

    /// Largest absolute entry over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().map(max_abs).fold(0.0, f64::max)
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::with_capacity(self.levels() + 1);
        out.push(0);
        for g in self.grids.iter() {
            acc += g.len();
            out.push(acc);
        }
        out
    }

    /// Flattened `(Σn_j) × (Σn_j)` matrix of kernel values.
    pub fn to_dense(&self) -> Matrix {
        let off = self.offsets();
        let total = off[self.levels()];
        let mut out = Matrix::zeros(total, total);
        for i in 0..self.levels() {
            for j in 0..self.levels() {
                if let Some(b) = self.block(i, j) {
                    out.view_mut((off[i], off[j]), b.shape()).copy_from(b);
                }
            }
        }
        out
    }

    pub fn from_dense(grids: Arc<Vec<Grid>>, dense: &Matrix, checked: bool) -> Self {
        let mut k = BlockKernel::zeros(grids);
        let off = k.offsets();
        for i in 0..k.levels() {
            for j in 0..k.levels() {
                let shape = (off[i + 1] - off[i], off[j + 1] - off[j]);
                k.set_block(i, j, dense.view((off[i], off[j]), shape).into_owned());
            }
        }
        k.checked = checked;
        k
    }

    fn same_grids(&self, other: &BlockKernel) -> bool {
        Arc::ptr_eq(&self.grids, &other.grids) || self.grids == other.grids
    }

    fn combine(&self, other: &BlockKernel, sign: f64) -> Result<BlockKernel> {
        if !self.same_grids(other) {
            return Err(Error::ShapeError("kernels live on different grids".into()));
        }
        let mut out = BlockKernel::zeros(Arc::clone(&self.grids));
        for (idx, (a, b)) in self.blocks.iter().zip(&other.blocks).enumerate() {
            out.blocks[idx] = match (a, b) {
                (None, None) => None,
                (Some(a), None) => Some(a.clone()),
                (None, Some(b)) => Some(b * sign),
                (Some(a), Some(b)) => Some(a + b * sign),
            };
        }
        Ok(out)
    }

    pub fn add(&self, other: &BlockKernel) -> Result<BlockKernel> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &BlockKernel) -> Result<BlockKernel> {
        self.combine(other, -1.0)
    }

    /// Kernel values times `μ_j v_j` on the right, i.e. `K ∘ v` as a value matrix.
    pub fn right_weighted(&self, factors: &WeightSet) -> BlockKernel {
        let mut out = self.clone();
        for i in 0..self.levels() {
            for j in 0..self.levels() {
                if let Some(b) = self.block(i, j) {
                    let d = measure_times(&self.grids[j], factors.level(j));
                    out.set_block(i, j, scale_cols(b, &d));
                }
            }
        }
        out
    }
}

fn measure_times(grid: &Grid, v: &[f64]) -> Vec<f64> {
    grid.weights().iter().zip(v).map(|(m, v)| m * v).collect()
}

/// `K̃_ij = ψ̃^{(i)ᵀ} φ̃^{(j)}`
pub fn build_k(bases: &DualBases) -> BlockKernel {
    let mut k = BlockKernel::zeros(Arc::clone(&bases.grids));
    let m = bases.levels();
    for i in 0..m {
        for j in 0..m {
            let block = bases.psi_wide[i].transpose().mul(&bases.phi_wide[j]);
            k.set_block(i, j, block.to_f64());
        }
    }
    k
}

/// Strictly lower block kernel with `g̃_ij` for `i > j`.
pub fn build_g(tables: &ChainTables, weights: &WeightSet) -> Result<BlockKernel> {
    let mut g = BlockKernel::zeros(Arc::clone(tables.grids()));
    for i in 0..tables.levels() {
        for j in 0..i {
            g.set_block(i, j, tilde_propagator(tables, weights, i, j)?);
        }
    }
    Ok(g)
}

/// `Ǩ = K - g`
pub fn check_kernel(k: &BlockKernel, g: &BlockKernel) -> Result<BlockKernel> {
    if k.checked {
        return Err(Error::StateError("kernel already has g subtracted".into()));
    }
    let m = g.levels();
    if (0..m).any(|i| (i..m).any(|j| g.block(i, j).is_some())) {
        return Err(Error::ShapeError("g kernel must be strictly lower triangular".into()));
    }
    Ok(k.sub(g)?.with_checked(true))
}

/// `(A ∘_v B)_ik = Σ_j A_ij diag(μ_j v_j) B_jk`
pub fn compose_with(a: &BlockKernel, factors: &WeightSet, b: &BlockKernel) -> Result<BlockKernel> {
    if !a.same_grids(b) || factors.levels() != a.levels() {
        return Err(Error::ShapeError("composition across different grids".into()));
    }
    let m = a.levels();
    let d: Vec<Vec<f64>> = (0..m)
        .map(|j| measure_times(&a.grids[j], factors.level(j)))
        .collect();
    let mut out = BlockKernel::zeros(Arc::clone(&a.grids));
    for i in 0..m {
        for k in 0..m {
            let mut acc: Option<Matrix> = None;
            for (j, dj) in d.iter().enumerate() {
                let (Some(aij), Some(bjk)) = (a.block(i, j), b.block(j, k)) else {
                    continue;
                };
                let term = scale_cols(aij, dj) * bjk;
                acc = Some(match acc {
                    Some(s) => s + term,
                    None => term,
                });
            }
            if let Some(v) = acc {
                out.set_block(i, k, v);
            }
        }
    }
    Ok(out)
}

/// `A ∘_w B`
pub fn compose_w(a: &BlockKernel, weights: &WeightSet, b: &BlockKernel) -> Result<BlockKernel> {
    compose_with(a, weights, b)
}

/// Plain composition `A ∘ B` (integration against `dμ`).
pub fn compose(a: &BlockKernel, b: &BlockKernel) -> Result<BlockKernel> {
    compose_with(a, &WeightSet::ones(&a.grids), b)
}

/// `K̃` built without any PLU step: the corner block
/// `K̃_{1m}(x, y) = Σ_{b,c} f_b(x) (A^{-1})_{cb} h_c(y)` and every other
/// block by `K̃_ij = g̃_{i1} ∘_{1-w_1} K̃_{1m} ∘_{1-w_m} g̃_{mj}`.
pub fn kernel_via_inverse(tables: &ChainTables, weights: &WeightSet) -> Result<BlockKernel> {
    let a = pairing_matrix(tables, weights)?;
    let cond = a.clone().svd(false, false);
    let inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularPairing(f64::INFINITY))?;
    let sv = cond.singular_values;
    let condition = sv.max() / sv.min();
    if !(condition < crate::biortho::SINGULARITY_THRESHOLD) {
        return Err(Error::SingularPairing(condition));
    }
    let m = tables.levels();
    let corner = tables.f_values().transpose() * inv.transpose() * tables.h_values();
    let d_first = complement_factors(tables, weights, 0);
    let d_last = complement_factors(tables, weights, m - 1);
    let left: Vec<Option<Matrix>> = (0..m)
        .map(|i| {
            (i > 0).then(|| tilde_propagator(tables, weights, i, 0).map(|g| scale_cols(&g, &d_first)))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let right: Vec<Option<Matrix>> = (0..m)
        .map(|j| {
            (j + 1 < m)
                .then(|| tilde_propagator(tables, weights, m - 1, j).map(|g| scale_rows(&g, &d_last)))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let mut k = BlockKernel::zeros(Arc::clone(tables.grids()));
    for i in 0..m {
        let row = match &left[i] {
            Some(l) => l * &corner,
            None => corner.clone(),
        };
        for j in 0..m {
            let blk = match &right[j] {
                Some(r) => &row * r,
                None => row.clone(),
            };
            k.set_block(i, j, blk);
        }
    }
    Ok(k)
}

/// Max deviation of `K_ij` from `g̃_{i1} ∘_{1-w_1} K_{1m} ∘_{1-w_m} g̃_{mj}`
/// over all blocks (plain family: pass zero weights).
pub fn factorization_residual(
    k: &BlockKernel,
    g: &BlockKernel,
    tables: &ChainTables,
    weights: &WeightSet,
) -> f64 {
    let m = k.levels();
    let corner = k.block_or_zero(0, m - 1);
    let d_first = complement_factors(tables, weights, 0);
    let d_last = complement_factors(tables, weights, m - 1);
    let mut worst = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let mut rhs = corner.clone();
            if i > 0 {
                rhs = scale_cols(&g.block_or_zero(i, 0), &d_first) * rhs;
            }
            if j + 1 < m {
                rhs = rhs * scale_rows(&g.block_or_zero(m - 1, j), &d_last);
            }
            worst = worst.max(max_abs(&(k.block_or_zero(i, j) - rhs)));
        }
    }
    worst
}

/// `K̃_jj ∘_{1-w_j}` fixes every `ψ̃^{(j)}` row, and its transpose every `φ̃^{(j)}` row.
pub fn projection_residual(k: &BlockKernel, bases: &DualBases, tables: &ChainTables) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..k.levels() {
        let d = complement_factors(tables, &bases.weights, j);
        let kjj = k.block_or_zero(j, j);
        // ψ (N×n) as functions: K·diag(d)·ψᵀ = ψᵀ
        let psi_image = &kjj * scale_rows(&bases.psi[j].transpose(), &d);
        let phi_image = kjj.transpose() * scale_rows(&bases.phi[j].transpose(), &d);
        worst = worst
            .max(max_abs(&(psi_image - bases.psi[j].transpose())))
            .max(max_abs(&(phi_image - bases.phi[j].transpose())));
    }
    worst
}

/// Adjacent-level relations `K_ij = g̃_{i,i-1} ∘_{1-w_{i-1}} K_{i-1,j}` and
/// `K_ij = K_{i,j+1} ∘_{1-w_{j+1}} g̃_{j+1,j}`.
pub fn adjacent_residual(
    k: &BlockKernel,
    g: &BlockKernel,
    tables: &ChainTables,
    weights: &WeightSet,
) -> f64 {
    let m = k.levels();
    let mut worst = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            let kij = k.block_or_zero(i, j);
            if i > 0 {
                let d = complement_factors(tables, weights, i - 1);
                let rhs = scale_cols(&g.block_or_zero(i, i - 1), &d) * k.block_or_zero(i - 1, j);
                worst = worst.max(max_abs(&(&kij - rhs)));
            }
            if j + 1 < m {
                let d = complement_factors(tables, weights, j + 1);
                let rhs = scale_cols(&k.block_or_zero(i, j + 1), &d) * g.block_or_zero(j + 1, j);
                worst = worst.max(max_abs(&(&kij - rhs)));
            }
        }
    }
    worst
}
