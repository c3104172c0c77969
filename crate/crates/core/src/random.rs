//! Seeded random chain instances for tests, fixtures and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{from_tables, tabulate, ChainSpec, ChainTables, Polynomial, WeightSet};
use crate::error::Error;
use crate::linalg::Matrix;
use crate::measure::{make_discrete_grid, Grid};

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub tables: ChainTables,
    pub seed: u64,
}

fn random_grids(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<Grid> {
    sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let points: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(-0.3..0.3)).collect();
            let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            make_discrete_grid(&points, &masses, j).expect("valid random grid")
        })
        .collect()
}

impl RandomInstance {
    /// Discrete instance with `f`, `h` uniform in [-1, 1], transfers
    /// uniform in [0, 1] and masses uniform in [0.5, 1.5]. Redraws on the
    /// (measure-zero) event of a rank-deficient end table.
    pub fn generate(seed: u64, levels: usize, rank: usize, sizes: &[usize]) -> Self {
        assert_eq!(sizes.len(), levels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let grids = random_grids(&mut rng, sizes);
            let mut uniform = |r: usize, c: usize, lo: f64, hi: f64| {
                Matrix::from_fn(r, c, |_, _| rng.gen_range(lo..hi))
            };
            let f = uniform(rank, sizes[0], -1.0, 1.0);
            let h = uniform(rank, sizes[levels - 1], -1.0, 1.0);
            let g = (0..levels - 1)
                .map(|j| uniform(sizes[j + 1], sizes[j], 0.0, 1.0))
                .collect();
            match from_tables(grids, f, h, g) {
                Ok(tables) => return RandomInstance { tables, seed },
                Err(Error::DegenerateBasis(_)) => continue,
                Err(e) => panic!("random instance construction failed: {e}"),
            }
        }
    }

    /// Weights uniform in `[0, max)`.
    pub fn random_weights(&self, seed: u64, max: f64) -> WeightSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self
            .tables
            .grids()
            .iter()
            .map(|g| (0..g.len()).map(|_| rng.gen_range(0.0..max)).collect())
            .collect();
        WeightSet::new(self.tables.grids(), w).expect("shapes match")
    }

    /// Indicator weights, each node included with probability `p`.
    pub fn random_indicator(&self, seed: u64, p: f64) -> WeightSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self
            .tables
            .grids()
            .iter()
            .map(|g| (0..g.len()).map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 }).collect())
            .collect();
        WeightSet::new(self.tables.grids(), w).expect("shapes match")
    }
}

/// Discrete instance of the monomial/exponential family: every determinant
/// in the joint density is nonnegative, so it is a genuine probability
/// ensemble. Potentials `V_j(x) = x²/2`, couplings `c`.
pub fn positive_discrete_instance(seed: u64, rank: usize, sizes: &[usize], coupling: f64) -> ChainTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids: Vec<Grid> = sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let points: Vec<f64> = (0..n)
                .map(|i| -1.5 + 3.0 * (i as f64 + rng.gen_range(0.2..0.8)) / n as f64)
                .collect();
            let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            make_discrete_grid(&points, &masses, j).expect("valid grid")
        })
        .collect();
    let spec = ChainSpec::monomial_exponential(
        rank,
        vec![Polynomial(vec![0.0, 0.0, 0.5]); sizes.len()],
        vec![coupling; sizes.len() - 1],
    )
    .expect("valid spec");
    tabulate(&spec, grids).expect("positive instance tabulates")
}
