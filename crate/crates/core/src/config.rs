//! TOML instance configs for the command-line tool. Schema in
//! `docs/config.md`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::chain::{from_indicators, from_tables, tabulate, ChainSpec, ChainTables, Polynomial, WeightSet};
use crate::error::Error;
use crate::linalg::Matrix;
use crate::measure::{make_composite_gauss_legendre_grid, make_discrete_grid, make_gauss_legendre_grid, Grid};
use crate::sampler::{Proposal, SamplerConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("{}: {0}", .0.name())]
    Model(#[from] Error),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub chain: ChainSection,
    pub grids: Vec<GridSection>,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub task: TaskSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    MonomialExponential,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub family: FamilyName,
    pub levels: usize,
    pub rank: usize,
    #[serde(default)]
    pub potentials: Vec<Vec<f64>>,
    #[serde(default)]
    pub couplings: Vec<f64>,
    pub f: Option<Vec<Vec<f64>>>,
    pub h: Option<Vec<Vec<f64>>>,
    pub g: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSection {
    GaussLegendre {
        interval: [f64; 2],
        n: usize,
        #[serde(default)]
        breakpoints: Vec<f64>,
    },
    Discrete {
        points: Vec<f64>,
        masses: Vec<f64>,
    },
    /// `n` jittered points in `interval`, one per equal cell, masses in
    /// `[0.5, 1.5)`.
    SeededDiscrete {
        interval: [f64; 2],
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub vectors: Option<Vec<Vec<f64>>>,
    pub intervals: Option<Vec<Vec<[f64; 2]>>>,
    pub kappas: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub points: Option<Vec<Vec<usize>>>,
    pub tolerance: Option<f64>,
    pub sampler: Option<SamplerSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: u64,
    pub burn_in: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

/// A parsed and tabulated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tables: ChainTables,
    pub weights: WeightSet,
    /// per-level intervals, when the weights were given that way
    pub intervals: Option<Vec<Vec<(f64, f64)>>>,
    pub points: Option<Vec<Vec<usize>>>,
    pub tolerance: Option<f64>,
    pub sampler: Option<SamplerConfig>,
    /// hex SHA-256 of the config bytes
    pub hash: String,
}

pub fn instance_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &std::path::Path) -> Result<Instance, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut inst = parse(&text)?;
    inst.hash = instance_hash(&bytes);
    Ok(inst)
}

pub fn parse(text: &str) -> Result<Instance, ConfigError> {
    let cfg: InstanceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    build(&cfg, instance_hash(text.as_bytes()))
}

fn build_grid(j: usize, section: &GridSection) -> Result<Grid, ConfigError> {
    let grid = match section {
        GridSection::GaussLegendre {
            interval,
            n,
            breakpoints,
        } => {
            if breakpoints.is_empty() {
                make_gauss_legendre_grid((interval[0], interval[1]), *n, j)?
            } else {
                if let Some(b) = breakpoints.iter().find(|&&b| !(b > interval[0] && b < interval[1])) {
                    return Err(field(
                        format!("grids[{j}].breakpoints"),
                        format!("{b} is not inside the interval"),
                    ));
                }
                let mut all = vec![interval[0]];
                all.extend(breakpoints);
                all.push(interval[1]);
                all.sort_by(f64::total_cmp);
                all.dedup();
                make_composite_gauss_legendre_grid(&all, *n, j)?
            }
        }
        GridSection::Discrete { points, masses } => {
            if points.len() != masses.len() {
                return Err(field(format!("grids[{j}]"), "points and masses differ in length"));
            }
            make_discrete_grid(points, masses, j)?
        }
        GridSection::SeededDiscrete { interval, n, seed } => {
            let (a, b) = (interval[0], interval[1]);
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidInterval(a, b).into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let points: Vec<f64> = (0..*n)
                .map(|i| a + (b - a) * (i as f64 + rng.gen_range(0.2..0.8)) / *n as f64)
                .collect();
            let masses: Vec<f64> = (0..*n).map(|_| rng.gen_range(0.5..1.5)).collect();
            make_discrete_grid(&points, &masses, j)?
        }
    };
    Ok(grid)
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(field(name, "rows have different lengths"));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn build(cfg: &InstanceConfig, hash: String) -> Result<Instance, ConfigError> {
    let m = cfg.chain.levels;
    if m == 0 {
        return Err(field("chain.levels", "must be at least 1"));
    }
    if cfg.grids.len() != m {
        return Err(field("grids", format!("{} grids given for {m} levels", cfg.grids.len())));
    }
    let grids = cfg
        .grids
        .iter()
        .enumerate()
        .map(|(j, g)| build_grid(j, g))
        .collect::<Result<Vec<_>, _>>()?;

    let tables = match cfg.chain.family {
        FamilyName::MonomialExponential => {
            let spec = ChainSpec::monomial_exponential(
                cfg.chain.rank,
                cfg.chain.potentials.iter().cloned().map(Polynomial).collect(),
                cfg.chain.couplings.clone(),
            )?;
            if spec.levels != m {
                return Err(field("chain.potentials", format!("need one potential per level ({m})")));
            }
            tabulate(&spec, grids.clone())?
        }
        FamilyName::Tabulated => {
            let (Some(f), Some(h)) = (&cfg.chain.f, &cfg.chain.h) else {
                return Err(field("chain", "tabulated family needs f and h"));
            };
            let f = rows_to_matrix("chain.f", f)?;
            let h = rows_to_matrix("chain.h", h)?;
            if f.nrows() != cfg.chain.rank || h.nrows() != cfg.chain.rank {
                return Err(field("chain", "f and h need one row per basis function"));
            }
            let g = cfg.chain.g.clone().unwrap_or_default();
            if g.len() + 1 != m {
                return Err(field("chain.g", format!("need {} transfer tables", m - 1)));
            }
            let g = g
                .iter()
                .enumerate()
                .map(|(j, rows)| rows_to_matrix(&format!("chain.g[{j}]"), rows))
                .collect::<Result<Vec<_>, _>>()?;
            from_tables(grids.clone(), f, h, g)?
        }
    };

    let per_level = |name: &str, len: usize| -> Result<(), ConfigError> {
        if len != m {
            Err(field(name, format!("{len} entries for {m} levels")))
        } else {
            Ok(())
        }
    };
    let w = &cfg.weights;
    let (weights, intervals) = match (&w.vectors, &w.intervals) {
        (Some(_), Some(_)) => return Err(field("weights", "give either vectors or intervals, not both")),
        (Some(v), None) => {
            per_level("weights.vectors", v.len())?;
            (WeightSet::new(&grids, v.clone())?, None)
        }
        (None, Some(ivs)) => {
            per_level("weights.intervals", ivs.len())?;
            let ivs: Vec<Vec<(f64, f64)>> = ivs.iter().map(|l| l.iter().map(|p| (p[0], p[1])).collect()).collect();
            let kappas = match &w.kappas {
                Some(k) => {
                    per_level("weights.kappas", k.len())?;
                    k.clone()
                }
                None => ivs.iter().map(|l| vec![1.0; l.len()]).collect(),
            };
            (from_indicators(&grids, &ivs, &kappas)?, Some(ivs))
        }
        (None, None) => {
            if w.kappas.is_some() {
                return Err(field("weights.kappas", "kappas need intervals"));
            }
            (WeightSet::zeros(&grids), None)
        }
    };

    if let Some(p) = &cfg.task.points {
        per_level("task.points", p.len())?;
    }
    if let Some(t) = cfg.task.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(field("task.tolerance", "must be positive"));
        }
    }
    let sampler = cfg.task.sampler.as_ref().map(|s| SamplerConfig {
        steps: s.steps,
        burn_in: s.burn_in.unwrap_or(s.steps / 10),
        seed: s.seed,
        proposal: Proposal::SingleParticleNodeHop,
    });
    if let Some(s) = &sampler {
        s.validate()?;
    }
    Ok(Instance {
        tables,
        weights,
        intervals,
        points: cfg.task.points.clone(),
        tolerance: cfg.task.tolerance,
        sampler,
        hash,
    })
}
