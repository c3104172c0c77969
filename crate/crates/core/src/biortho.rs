//! Weighted pairing matrix, its normalized PLU decomposition and the dual
//! bases `ψ̃^{(j)}`, `φ̃^{(j)}` that are biorthogonal under `(1 - w_j) dμ_j`.
//!
//! Conventions: levels are 0-based. `D̃_j = diag(μ_j (1 - w_j))`. The tilde
//! propagator is `G̃_{kj} = G_{k,k-1} D̃_{k-1} ⋯ D̃_{j+1} G_{j+1,j}` and the
//! pairing is `A^w = F D̃_0 G̃_{m-1,0}ᵀ D̃_{m-1} Hᵀ`. With `w = 0` every
//! object reduces to its plain counterpart through the same code path.
//!
//! Everything here is computed in double-double and rounded on the way out;
//! the decomposition and the bases keep their wide values for the kernels.

use std::sync::Arc;

use crate::chain::{ChainTables, WeightSet};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, Lu, Matrix};
use crate::measure::Grid;
use crate::wide::{div, sqrt, to_f64, Dd, DdLu, DdMatrix, ONE};

/// Condition estimate above which the pairing is treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e12;
/// Relative tolerance of the mandatory two-route pairing check.
pub const PAIRING_CONSISTENCY_TOL: f64 = 1e-11;

/// `μ_j (1 - w_j)` at every node of level `j`.
pub(crate) fn complement_factors(tables: &ChainTables, weights: &WeightSet, j: usize) -> Vec<f64> {
    complement_factors_wide(tables, weights, j).into_iter().map(to_f64).collect()
}

pub(crate) fn complement_factors_wide(tables: &ChainTables, weights: &WeightSet, j: usize) -> Vec<Dd> {
    tables
        .grid(j)
        .weights()
        .iter()
        .zip(weights.level(j))
        .map(|(&mu, &w)| Dd::new_add(1.0, -w) * mu)
        .collect()
}

fn check_weights(tables: &ChainTables, weights: &WeightSet) -> Result<()> {
    if weights.levels() != tables.levels()
        || (0..tables.levels()).any(|j| weights.level(j).len() != tables.grid(j).len())
    {
        return Err(Error::ShapeError("weight set does not match the grids".into()));
    }
    Ok(())
}

pub(crate) fn tilde_propagator_wide(tables: &ChainTables, weights: &WeightSet, k: usize, j: usize) -> DdMatrix {
    let g = tables.g_values();
    let mut acc = DdMatrix::from_f64(&g[j]);
    for l in j + 1..k {
        let d = complement_factors_wide(tables, weights, l);
        acc = DdMatrix::from_f64(&g[l]).mul(&acc.scale_rows(&d));
    }
    acc
}

/// `g̃_{kj}` as an n_k × n_j value matrix, `k > j`.
pub fn tilde_propagator(tables: &ChainTables, weights: &WeightSet, k: usize, j: usize) -> Result<Matrix> {
    if k <= j {
        return Err(Error::OrderError { k, j });
    }
    if k >= tables.levels() {
        return Err(Error::ShapeError(format!("level {k} out of range")));
    }
    check_weights(tables, weights)?;
    Ok(tilde_propagator_wide(tables, weights, k, j).to_f64())
}

fn pairing_wide(tables: &ChainTables, weights: &WeightSet) -> Result<(DdMatrix, DdMatrix)> {
    check_weights(tables, weights)?;
    let m = tables.levels();
    let g: Vec<DdMatrix> = tables.g_values().iter().map(DdMatrix::from_f64).collect();
    let d: Vec<Vec<Dd>> = (0..m).map(|j| complement_factors_wide(tables, weights, j)).collect();
    let f = DdMatrix::from_f64(tables.f_values());
    let h = DdMatrix::from_f64(tables.h_values());

    if m == 1 {
        return Ok((f.scale_cols(&d[0]).mul_transpose(&h), f.mul_transpose(&h.scale_cols(&d[0]))));
    }

    // level-1 expression: f · D̃_0 · (h pulled down)ᵀ
    let mut pulled = h.scale_cols(&d[m - 1]);
    for j in (0..m - 1).rev() {
        pulled = pulled.mul(&g[j]);
        if j > 0 {
            pulled = pulled.scale_cols(&d[j]);
        }
    }
    let at_first = f.scale_cols(&d[0]).mul_transpose(&pulled);

    // level-m expression: (f pushed up) · D̃_{m-1} · hᵀ
    let mut pushed = f.scale_cols(&d[0]);
    for (j, gj) in g.iter().enumerate() {
        pushed = pushed.mul_transpose(gj);
        if j + 1 < m - 1 {
            pushed = pushed.scale_cols(&d[j + 1]);
        }
    }
    let at_last = pushed.scale_cols(&d[m - 1]).mul_transpose(&h);
    Ok((at_first, at_last))
}

/// Both association orders of the pairing: `f` pushed up to level `m` and
/// paired with `h` there, and `h` pulled down to level 1 and paired with `f`.
pub fn pairing_expressions(tables: &ChainTables, weights: &WeightSet) -> Result<(Matrix, Matrix)> {
    let (first, last) = pairing_wide(tables, weights)?;
    Ok((first.to_f64(), last.to_f64()))
}

/// Same product with every factor replaced by its absolute value: the
/// natural magnitude against which rounding in the pairing is measured.
pub fn pairing_magnitude(tables: &ChainTables, weights: &WeightSet) -> f64 {
    let abs = |a: &Matrix| a.map(f64::abs);
    let absd = |j: usize| -> Vec<f64> { complement_factors(tables, weights, j).iter().map(|v| v.abs()).collect() };
    let mut pushed = crate::linalg::scale_cols(&abs(tables.f_values()), &absd(0));
    for (j, gj) in tables.g_values().iter().enumerate() {
        pushed = crate::linalg::scale_cols(&(&pushed * abs(gj).transpose()), &absd(j + 1));
    }
    max_abs(&(pushed * abs(tables.h_values()).transpose()))
}

fn checked_pairing_wide(tables: &ChainTables, weights: &WeightSet) -> Result<DdMatrix> {
    let (first, last) = pairing_wide(tables, weights)?;
    let diff = first.sub(&last).max_abs();
    let bound = PAIRING_CONSISTENCY_TOL * pairing_magnitude(tables, weights);
    if !(diff <= bound) {
        return Err(Error::CompositionInconsistency { diff, bound });
    }
    Ok(first)
}

/// `A^w`, verified against the second association order.
pub fn pairing_matrix(tables: &ChainTables, weights: &WeightSet) -> Result<Matrix> {
    Ok(checked_pairing_wide(tables, weights)?.to_f64())
}

/// `A = P·L·U` with `|diag L| = |diag U| = √|d|` for the Doolittle pivots `d`;
/// the sign of each pivot sits on `L`'s diagonal.
#[derive(Debug, Clone)]
pub struct PairingDecomposition {
    pub a: Matrix,
    /// `A[perm[i], :] = (L·U)[i, :]`
    pub perm: Vec<usize>,
    pub l: Matrix,
    pub u: Matrix,
    /// Diagonal signs moved onto `L` (one per row).
    pub signs: Vec<f64>,
    pub condition: f64,
    a_wide: DdMatrix,
    l_wide: DdMatrix,
    u_wide: DdMatrix,
}

pub fn plu_decompose(a: &Matrix) -> Result<PairingDecomposition> {
    let wide = DdMatrix::from_f64(a);
    let lu = DdLu::new(&wide);
    PairingDecomposition::from_lu(wide, lu)
}

fn plu_decompose_wide(a: DdMatrix) -> Result<PairingDecomposition> {
    let lu = DdLu::new(&a);
    PairingDecomposition::from_lu(a, lu)
}

impl PairingDecomposition {
    /// The same pairing decomposed with a prescribed row order instead of
    /// partial pivoting.
    pub fn with_row_order(&self, perm: &[usize]) -> Result<Self> {
        let lu = DdLu::with_row_order(&self.a_wide, perm)
            .ok_or_else(|| Error::ShapeError("row order is not a permutation".into()))?;
        Self::from_lu(self.a_wide.clone(), lu)
    }

    fn from_lu(a_wide: DdMatrix, lu: DdLu) -> Result<Self> {
        let n = a_wide.nrows();
        if n != a_wide.ncols() || n == 0 {
            return Err(Error::ShapeError("pairing must be square and nonempty".into()));
        }
        let a = a_wide.to_f64();
        let condition = Lu::new(&a).condition_estimate(&a);
        if lu.is_singular() || !(condition < SINGULARITY_THRESHOLD) {
            return Err(Error::SingularPairing(condition));
        }
        let l0 = lu.l();
        let u0 = lu.u();
        let pivots: Vec<Dd> = (0..n).map(|i| u0[(i, i)]).collect();
        let signs: Vec<f64> = pivots.iter().map(|d| d.hi().signum()).collect();
        let l_scale: Vec<Dd> = pivots
            .iter()
            .zip(&signs)
            .map(|(d, &s)| sqrt(d.abs()) * s)
            .collect();
        let inv_scale: Vec<Dd> = l_scale.iter().map(|v| div(ONE, *v)).collect();
        let l_wide = l0.scale_cols(&l_scale);
        let u_wide = u0.scale_rows(&inv_scale);
        Ok(PairingDecomposition {
            a,
            perm: lu.permutation().to_vec(),
            l: l_wide.to_f64(),
            u: u_wide.to_f64(),
            signs,
            condition,
            a_wide,
            l_wide,
            u_wide,
        })
    }

    pub fn permutation_matrix(&self) -> Matrix {
        let n = self.perm.len();
        let mut p = Matrix::zeros(n, n);
        for (i, &r) in self.perm.iter().enumerate() {
            p[(r, i)] = 1.0;
        }
        p
    }

    pub fn reconstruct(&self) -> Matrix {
        self.permutation_matrix() * &self.l * &self.u
    }

    /// Flips the diagonal sign of every row with `flip[a]` set:
    /// `L → L·S`, `U → S·U`. `L·U` is unchanged.
    pub fn flip_signs(&self, flip: &[bool]) -> Self {
        let s: Vec<f64> = flip.iter().map(|&f| if f { -1.0 } else { 1.0 }).collect();
        let sd: Vec<Dd> = s.iter().map(|&v| Dd::from(v)).collect();
        PairingDecomposition {
            l: crate::linalg::scale_cols(&self.l, &s),
            u: crate::linalg::scale_rows(&self.u, &s),
            signs: self.signs.iter().zip(&s).map(|(a, b)| a * b).collect(),
            l_wide: self.l_wide.scale_cols(&sd),
            u_wide: self.u_wide.scale_rows(&sd),
            ..self.clone()
        }
    }
}

/// Dual bases on every level. `psi[j]` and `phi[j]` are N × n_j.
#[derive(Debug, Clone)]
pub struct DualBases {
    pub psi: Vec<Matrix>,
    pub phi: Vec<Matrix>,
    pub decomposition: PairingDecomposition,
    pub weights: WeightSet,
    pub grids: Arc<Vec<Grid>>,
    pub(crate) psi_wide: Vec<DdMatrix>,
    pub(crate) phi_wide: Vec<DdMatrix>,
}

pub fn dual_bases(tables: &ChainTables, weights: &WeightSet) -> Result<DualBases> {
    let decomposition = plu_decompose_wide(checked_pairing_wide(tables, weights)?)?;
    dual_bases_with(tables, weights, decomposition)
}

/// Dual bases from a given decomposition of the pairing.
pub fn dual_bases_with(
    tables: &ChainTables,
    weights: &WeightSet,
    decomposition: PairingDecomposition,
) -> Result<DualBases> {
    check_weights(tables, weights)?;
    let m = tables.levels();
    let singular = || Error::SingularPairing(decomposition.condition);
    // ψ̃^(1) = (P L)^{-1} f = L^{-1} Pᵀ f
    let pt_f = DdMatrix::from_f64(tables.f_values()).select_rows(&decomposition.perm);
    let psi_first = decomposition.l_wide.solve_lower(&pt_f).ok_or_else(singular)?;
    // φ̃^(m) = U^{-T} h
    let phi_last = decomposition
        .u_wide
        .transpose()
        .solve_lower(&DdMatrix::from_f64(tables.h_values()))
        .ok_or_else(singular)?;

    let g: Vec<DdMatrix> = tables.g_values().iter().map(DdMatrix::from_f64).collect();
    let mut psi = Vec::with_capacity(m);
    psi.push(psi_first);
    for j in 0..m - 1 {
        let d = complement_factors_wide(tables, weights, j);
        let next = psi[j].scale_cols(&d).mul_transpose(&g[j]);
        psi.push(next);
    }
    let mut phi = vec![DdMatrix::zeros(0, 0); m];
    phi[m - 1] = phi_last;
    for j in (0..m - 1).rev() {
        let d = complement_factors_wide(tables, weights, j + 1);
        phi[j] = phi[j + 1].scale_cols(&d).mul(&g[j]);
    }
    Ok(DualBases {
        psi: psi.iter().map(DdMatrix::to_f64).collect(),
        phi: phi.iter().map(DdMatrix::to_f64).collect(),
        decomposition,
        weights: weights.clone(),
        grids: Arc::clone(tables.grids()),
        psi_wide: psi,
        phi_wide: phi,
    })
}

impl DualBases {
    pub fn levels(&self) -> usize {
        self.psi.len()
    }

    pub fn rank(&self) -> usize {
        self.psi[0].nrows()
    }

    /// `max_{j,a,b} |⟨ψ̃_a^{(j)}, φ̃_b^{(j)}⟩_{(1-w_j)dμ_j} - δ_ab|`
    pub fn biorthogonality_residual(&self, tables: &ChainTables) -> f64 {
        let n = self.rank();
        (0..self.levels())
            .map(|j| {
                let d = complement_factors_wide(tables, &self.weights, j);
                let gram = self.psi_wide[j].scale_cols(&d).mul_transpose(&self.phi_wide[j]);
                gram.sub(&DdMatrix::identity(n)).max_abs()
            })
            .fold(0.0, f64::max)
    }
}
