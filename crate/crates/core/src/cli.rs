//! Command-line front end. Every numeric output row carries the instance
//! hash and the tolerance in force; column contracts are in `docs/output.md`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::biortho::{pairing_expressions, pairing_magnitude};
use crate::chain::{ChainTables, WeightSet};
use crate::config::{self, ConfigError, Instance};
use crate::error::Error;
use crate::fredholm::{
    correlation, fredholm_det, gap_generating_function, janossy, joint_density, identity_residuals_from,
    transfer_resolvent_residual, KernelFamily,
};
use crate::linalg::max_abs;
use crate::oracle::{self, Enumeration};
use crate::sampler::{empirical_gap, sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Gap,
    Janossy,
    Correlate,
    Counts,
    Sample,
    Oracle,
}

#[derive(Debug, Parser)]
#[command(name = "janossy", version, about = "Multilevel determinantal ensembles: kernels, gaps, Janossy densities")]
pub struct Cli {
    #[command(subcommand)]
    pub invocation: Invocation,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Flags {
    /// Instance config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampler seed, overriding the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance, overriding the config and the command default
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Invocation {
    /// Resolvent and identity residuals, biorthogonality, pairing routes
    Check(Flags),
    /// Fredholm determinant (gap probability for indicator weights)
    Gap(Flags),
    /// Janossy density at task.points
    Janossy(Flags),
    /// Correlation function at task.points
    Correlate(Flags),
    /// Joint count distribution over weights.intervals
    Counts(Flags),
    /// Metropolis run and empirical gap probability
    Sample(Flags),
    /// Exact-enumeration cross-checks (discrete instances)
    Oracle(Flags),
}

impl Invocation {
    pub fn split(&self) -> (Command, &Flags) {
        match self {
            Invocation::Check(f) => (Command::Check, f),
            Invocation::Gap(f) => (Command::Gap, f),
            Invocation::Janossy(f) => (Command::Janossy, f),
            Invocation::Correlate(f) => (Command::Correlate, f),
            Invocation::Counts(f) => (Command::Counts, f),
            Invocation::Sample(f) => (Command::Sample, f),
            Invocation::Oracle(f) => (Command::Oracle, f),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {0}", .0.name())]
    Numerical(Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            CliError::Config(ConfigError::Model(e))
        } else {
            CliError::Numerical(e)
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Output(_) => 3,
            CliError::Config(ConfigError::Model(e)) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

pub fn default_tolerance(command: Command) -> f64 {
    match command {
        Command::Counts => 1e-8,
        // standard errors
        Command::Sample => 3.0,
        _ => 1e-10,
    }
}

/// One output row. Empty optional fields print as empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub error: Option<f64>,
    pub pass: Option<bool>,
}

impl Row {
    fn value(quantity: &str, value: f64) -> Self {
        Row {
            quantity: quantity.into(),
            value,
            reference: None,
            error: None,
            pass: None,
        }
    }

    /// `error = value / scale` checked against `tol`.
    fn residual(quantity: &str, value: f64, scale: f64, tol: f64) -> Self {
        let error = value / scale;
        Row {
            quantity: quantity.into(),
            value,
            reference: Some(scale),
            error: Some(error),
            pass: Some(error <= tol),
        }
    }

    /// `error = |value - reference| / max(1, |reference|)`.
    fn compare(quantity: &str, value: f64, reference: f64, tol: f64) -> Self {
        let error = (value - reference).abs() / reference.abs().max(1.0);
        Row {
            quantity: quantity.into(),
            value,
            reference: Some(reference),
            error: Some(error),
            pass: Some(error <= tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Scalars(Vec<Row>),
    Counts {
        rows: Vec<(Vec<usize>, f64)>,
        total: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub hash: String,
    pub tolerance: f64,
    pub report: Report,
    pub passed: bool,
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

impl Outcome {
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let out = |e: csv::Error| CliError::Output(e.to_string());
        let tol = fmt(self.tolerance);
        match &self.report {
            Report::Scalars(rows) => {
                w.write_record(["instance_hash", "tolerance", "quantity", "value", "reference", "error", "pass"])
                    .map_err(out)?;
                for r in rows {
                    w.write_record([
                        self.hash.clone(),
                        tol.clone(),
                        r.quantity.clone(),
                        fmt(r.value),
                        r.reference.map(fmt).unwrap_or_default(),
                        r.error.map(fmt).unwrap_or_default(),
                        r.pass.map(|p| p.to_string()).unwrap_or_default(),
                    ])
                    .map_err(out)?;
                }
            }
            Report::Counts { rows, .. } => {
                w.write_record(["instance_hash", "tolerance", "counts", "probability"])
                    .map_err(out)?;
                for (c, p) in rows {
                    let counts: Vec<String> = c.iter().map(usize::to_string).collect();
                    w.write_record([self.hash.clone(), tol.clone(), counts.join(";"), fmt(*p)])
                        .map_err(out)?;
                }
            }
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }
}

fn require_points(inst: &Instance) -> Result<Vec<Vec<usize>>, CliError> {
    inst.points
        .clone()
        .ok_or_else(|| CliError::Usage("this command needs task.points".into()))
}

fn require_intervals(inst: &Instance) -> Result<Vec<Vec<(f64, f64)>>, CliError> {
    inst.intervals
        .clone()
        .ok_or_else(|| CliError::Usage("this command needs weights.intervals".into()))
}

fn plain_family(tables: &ChainTables) -> Result<KernelFamily, CliError> {
    Ok(KernelFamily::build(tables, &WeightSet::zeros(tables.grids()))?)
}

fn check_rows(inst: &Instance, tol: f64) -> Result<Vec<Row>, CliError> {
    let t = &inst.tables;
    let w = &inst.weights;
    let plain = plain_family(t)?;
    let tilde = KernelFamily::build(t, w)?;
    let res = identity_residuals_from(t, w, &plain, &tilde)?;
    let mut rows = vec![Row::residual("resolvent", res.resolvent, res.kernel_scale, tol)];
    for (name, r) in res.identities() {
        rows.push(Row::residual(name, r, res.instance_scale, tol));
    }
    let tr = transfer_resolvent_residual(t, w)?;
    rows.push(Row::residual("transfer_resolvent", tr, res.instance_scale, tol));
    rows.push(Row::residual("biorthogonality", tilde.bases.biorthogonality_residual(t), 1.0, tol));
    let (first, last) = pairing_expressions(t, w)?;
    rows.push(Row::residual(
        "pairing_routes",
        max_abs(&(first - last)),
        pairing_magnitude(t, w),
        tol,
    ));
    Ok(rows)
}

fn oracle_rows(inst: &Instance, tol: f64) -> Result<Vec<Row>, CliError> {
    let t = &inst.tables;
    if !t.all_discrete() {
        return Err(CliError::Usage("oracle needs discrete grids on every level".into()));
    }
    let w = &inst.weights;
    let en = oracle::enumerate(t)?;
    let plain = plain_family(t)?;
    let kc = &plain.checked;
    let mut rows = vec![Row::compare("gap", fredholm_det(kc, w)?, oracle::oracle_gap(&en, w), tol)];
    if let Some(points) = &inst.points {
        rows.push(Row::compare(
            "correlation",
            correlation(kc, points)?,
            oracle::oracle_correlation(&en, points),
            tol,
        ));
        if w.is_indicator() {
            rows.push(Row::compare(
                "janossy",
                janossy(kc, w, points)?,
                oracle::oracle_janossy(&en, w, points),
                tol,
            ));
        }
    }
    if let Some(ivs) = &inst.intervals {
        let computed = gap_generating_function(kc, ivs, t.rank())?;
        let exact = oracle::oracle_counts(&en, ivs)?;
        let diff = computed.max_abs_diff(&exact).unwrap_or(f64::INFINITY);
        rows.push(Row::residual("counts", diff, 1.0, tol));
        rows.push(Row::compare("counts_total", computed.total(), 1.0, tol));
    }
    let nfact: f64 = (1..=t.rank()).map(|k| k as f64).product();
    let expected = nfact.powi(t.levels() as i32);
    let total = oracle::labeled_eynard_mehta_total(t, kc)?;
    rows.push(Row::compare("eynard_mehta_total", total, expected, tol));
    let b = &plain.bases;
    let z = Enumeration::with_end_rows(t.grids(), &b.psi[0], t.g_values(), &b.phi[t.levels() - 1])?.z();
    let mut worst = 0.0_f64;
    for cfg in en.iter() {
        let (p, d) = joint_density(b, t, &cfg.levels, z)?;
        worst = worst.max((p - d).abs() / d.abs().max(f64::MIN_POSITIVE));
    }
    rows.push(Row::residual("joint_density", worst, 1.0, tol));
    Ok(rows)
}

/// Runs one command on a loaded instance.
pub fn execute(command: Command, inst: &Instance, seed: Option<u64>, tol: Option<f64>) -> Result<Outcome, CliError> {
    let tol = tol.or(inst.tolerance).unwrap_or_else(|| default_tolerance(command));
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Usage(format!("tolerance {tol} must be positive")));
    }
    let t = &inst.tables;
    let w = &inst.weights;
    let report = match command {
        Command::Check => Report::Scalars(check_rows(inst, tol)?),
        Command::Gap => {
            let name = if w.is_indicator() { "gap" } else { "fredholm_det" };
            Report::Scalars(vec![Row::value(name, fredholm_det(&plain_family(t)?.checked, w)?)])
        }
        Command::Janossy => {
            let points = require_points(inst)?;
            Report::Scalars(vec![Row::value("janossy", janossy(&plain_family(t)?.checked, w, &points)?)])
        }
        Command::Correlate => {
            let points = require_points(inst)?;
            Report::Scalars(vec![Row::value("correlation", correlation(&plain_family(t)?.checked, &points)?)])
        }
        Command::Counts => {
            let ivs = require_intervals(inst)?;
            let dist = gap_generating_function(&plain_family(t)?.checked, &ivs, t.rank())?;
            Report::Counts {
                rows: dist.iter().collect(),
                total: dist.total(),
            }
        }
        Command::Sample => {
            let mut cfg = inst
                .sampler
                .clone()
                .ok_or_else(|| CliError::Usage("sample needs a [task.sampler] section".into()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let exact = fredholm_det(&plain_family(t)?.checked, w)?;
            let mut chain = sample(t, &cfg)?;
            let samples = chain.by_ref().collect::<Result<Vec<_>, _>>()?;
            let (est, se) = empirical_gap(&samples, w)?;
            let z = (est - exact).abs() / se;
            let pass = (est - exact).abs() <= tol * se;
            Report::Scalars(vec![
                Row {
                    quantity: "empirical_gap".into(),
                    value: est,
                    reference: Some(exact),
                    error: Some(z),
                    pass: Some(pass),
                },
                Row::value("stderr", se),
                Row::value("acceptance_rate", chain.acceptance_rate()),
                Row::value("samples", samples.len() as f64),
            ])
        }
        Command::Oracle => Report::Scalars(oracle_rows(inst, tol)?),
    };
    let passed = match &report {
        Report::Scalars(rows) => rows.iter().all(|r| r.pass != Some(false)),
        Report::Counts { total, .. } => (total - 1.0).abs() <= tol,
    };
    Ok(Outcome {
        hash: inst.hash.clone(),
        tolerance: tol,
        report,
        passed,
    })
}

/// Loads, runs and writes. Returns the process exit code.
pub fn run(command: Command, flags: &Flags) -> i32 {
    let result = config::load(&flags.config)
        .map_err(CliError::from)
        .and_then(|inst| execute(command, &inst, flags.seed, flags.tol))
        .and_then(|outcome| {
            let bytes = outcome.to_csv()?;
            match &flags.out {
                Some(path) => std::fs::write(path, &bytes).map_err(|e| CliError::Output(e.to_string()))?,
                None => std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| CliError::Output(e.to_string()))?,
            }
            Ok(outcome.passed)
        });
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("tolerance not met");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
