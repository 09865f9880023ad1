//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! non-convergence, 3 at least one verification check failed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::criticality::{self, CritOptions, TOOL_NAME, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::landscape::{self, Objective};
use crate::linalg::lambda_max;
use crate::model::ModelSpec;
use crate::montecarlo::disorder::{self, tensor_entries, CoefficientLaw};
use crate::montecarlo::estimators::{self, EstimatorResult};
use crate::montecarlo::rng::{derive_seed, Domain, KeyedStream};
use crate::montecarlo::{self as mc, FiniteModel};

pub const DEFAULT_FIXTURE: &str = include_str!("../fixtures/two_species_cubic.json");
pub const SCAN_HEADER: &str = "beta,max_f,argmax,lambda_max_M,max_f_tilde";
pub const TABLE_HEADER: &str = "beta,N,estimate,stderr,prediction,residual";

#[derive(Debug, Parser)]
#[command(name = "pspin-critical", version, about = "Second-moment thresholds for spherical mixed p-spin models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thresholds and the singular-Hessian verdict as a JSON report.
    Critical(RunConfig),
    /// CSV of max f, argmax, top eigenvalue of M and max f-tilde over a beta grid.
    Scan(RunConfig),
    /// Monte Carlo verification battery with a pass/fail summary.
    Verify(RunConfig),
    /// Band free energies around a level-set point against 1/2 beta^2 xi(1) + f_beta(r).
    BandProbe(RunConfig),
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Model file (JSON). verify and band-probe fall back to a built-in two-species cubic mixture.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Root seed for all random streams.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Total dimension of the finite model.
    #[arg(long = "N", default_value_t = 40)]
    pub n: usize,
    /// Monte Carlo samples per estimate.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Single inverse temperature (default for verify and band-probe: beta_m / 2).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Inclusive grid start for scan.
    #[arg(long)]
    pub beta_min: Option<f64>,
    /// Inclusive grid end for scan.
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// Grid spacing for scan.
    #[arg(long)]
    pub beta_step: Option<f64>,
    /// Output file. verify also writes a CSV table next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative band for calling the origin Hessian singular [default: 1e-6].
    #[arg(long)]
    pub tol_sing: Option<f64>,
    /// Values of the landscape maximum at or below this count as zero [default: 1e-10].
    #[arg(long)]
    pub tol_zero: Option<f64>,
    /// Overlaps (broadcast to every species) for band-probe.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3")]
    pub r: Vec<f64>,
    /// Level-set half-width used by verify and band-probe.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Drop the multinomial factor from the tuple variances (mutation check).
    #[arg(long, hide = true)]
    pub mutate_missing_factorial: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            seed: 7,
            n: 40,
            samples: 20_000,
            beta: None,
            beta_min: None,
            beta_max: None,
            beta_step: None,
            out: None,
            tol_sing: None,
            tol_zero: None,
            r: vec![0.0, 0.05, 0.1, 0.2, 0.3],
            epsilon: 0.05,
            mutate_missing_factorial: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.samples == 0 {
            return Err(Error::Config("N and samples must be positive".into()));
        }
        for (name, v) in [("tol-sing", self.tol_sing), ("tol-zero", self.tol_zero)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Config(format!("--{name} must be positive")));
                }
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Config("--epsilon must be positive".into()));
        }
        Ok(())
    }

    fn crit_options(&self) -> CritOptions {
        let mut o = CritOptions::default();
        if let Some(t) = self.tol_sing {
            o.tol_sing = t;
        }
        if let Some(t) = self.tol_zero {
            o.tol_zero = t;
        }
        o
    }

    fn load_model(&self, fallback: bool) -> Result<ModelSpec> {
        match (&self.model, fallback) {
            (Some(p), _) => ModelSpec::load(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
                other => other,
            }),
            (None, true) => ModelSpec::from_json(DEFAULT_FIXTURE),
            (None, false) => Err(Error::Config("--model is required".into())),
        }
    }

    /// Explicit `--beta`, or the inclusive grid `min, min + step, ..., <= max`.
    pub fn beta_grid(&self) -> Result<Vec<f64>> {
        if let Some(b) = self.beta {
            return Ok(vec![b]);
        }
        let (Some(lo), Some(hi), Some(step)) = (self.beta_min, self.beta_max, self.beta_step) else {
            return Err(Error::Config(
                "supply --beta or all of --beta-min, --beta-max, --beta-step".into(),
            ));
        };
        if !(step.is_finite() && lo.is_finite() && hi.is_finite()) || step <= 0.0 || hi < lo || lo < 0.0 {
            return Err(Error::Config(format!(
                "empty beta grid: min {lo}, max {hi}, step {step}"
            )));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // snap away accumulated representation noise such as 0.7000000000000001
        Ok((0..count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) | Error::Quadrature { .. } => 2,
        _ => 1,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout();
    let outcome = match &cli.command {
        Command::Critical(c) => cmd_critical(c, &mut stdout),
        Command::Scan(c) => cmd_scan(c, &mut stdout),
        Command::Verify(c) => cmd_verify(c, &mut stdout),
        Command::BandProbe(c) => cmd_band_probe(c, &mut stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn std::io::Write, path: Option<&Path>, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if let Some(p) = path {
        fs::write(p, text)?;
    }
    Ok(())
}

fn provenance_line(model: &ModelSpec) -> String {
    format!(
        "# tool={TOOL_NAME} version={TOOL_VERSION} model_hash={}\n",
        model.hash()
    )
}

pub fn cmd_critical(cfg: &RunConfig, out: &mut dyn std::io::Write) -> Result<i32> {
    cfg.validate()?;
    let model = cfg.load_model(false)?;
    let report = criticality::verdict_with(&model, &cfg.crit_options())?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    emit(out, cfg.out.as_deref(), &text)?;
    Ok(if report.converged { 0 } else { 2 })
}

pub fn cmd_scan(cfg: &RunConfig, out: &mut dyn std::io::Write) -> Result<i32> {
    cfg.validate()?;
    let model = cfg.load_model(false)?;
    let grid = cfg.beta_grid()?;
    let opts = landscape::MaximizeOptions {
        tol_zero: cfg.crit_options().tol_zero,
        ..Default::default()
    };
    let rows: Vec<Result<(String, bool)>> = grid
        .par_iter()
        .map(|&beta| {
            let plain = landscape::maximize(&model, beta, Objective::Plain, &opts)?;
            let tilde = landscape::maximize(&model, beta, Objective::Tilde, &opts)?;
            let lam = lambda_max(&landscape::hessian_at_zero(&model, beta));
            let argmax: Vec<String> = plain.argmax.iter().map(|v| v.to_string()).collect();
            Ok((
                format!(
                    "{beta},{},{},{lam},{}\n",
                    plain.value,
                    argmax.join(";"),
                    tilde.value
                ),
                plain.converged && tilde.converged,
            ))
        })
        .collect();
    let mut text = provenance_line(&model);
    text.push_str(SCAN_HEADER);
    text.push('\n');
    let mut converged = true;
    for row in rows {
        let (line, ok) = row?;
        converged &= ok;
        text.push_str(&line);
    }
    emit(out, cfg.out.as_deref(), &text)?;
    Ok(if converged { 0 } else { 2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub tool: String,
    pub tool_version: String,
    pub model_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub block_sizes: Vec<usize>,
    pub samples: usize,
    pub beta: f64,
    pub checks: Vec<Check>,
    pub free_energy: EstimatorResult,
    pub level_set: EstimatorResult,
    pub all_passed: bool,
}

const COVARIANCE_N: usize = 24;
const COVARIANCE_REPLICAS: usize = 2000;
const Z2_SIZES: [usize; 4] = [50, 100, 200, 400];

fn covariance_checks(
    model: &ModelSpec,
    law: CoefficientLaw,
    seed: u64,
    checks: &mut Vec<Check>,
) -> Result<()> {
    let fm = FiniteModel::build(model, COVARIANCE_N.max(3 * model.n_species()))?;
    let mut st = KeyedStream::new(seed, Domain::Pairs, 0);
    let anchor = mc::sample_uniform(&fm, &mut st);
    let mut failures = Vec::new();
    let mut pairs = vec![(anchor.clone(), anchor.clone()), (anchor.clone(), anchor.negated())];
    for _ in 0..8 {
        pairs.push((mc::sample_uniform(&fm, &mut st), mc::sample_uniform(&fm, &mut st)));
    }
    for (k, (a, b)) in pairs.iter().enumerate() {
        if let Err(e) = disorder::covariance_exact_with(&fm, law, a, b) {
            failures.push(format!("pair {k}: {e}"));
        }
    }
    checks.push(Check::new(
        "covariance_exact",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} pairs agree with N xi(R) at N = {}", pairs.len(), fm.n())
        } else {
            failures.join("; ")
        },
    ));

    // empirical covariance across disorder replicas at a fixed pair
    let (a, b) = &pairs[2];
    let r = mc::overlap(&fm, a, b);
    let n = fm.n() as f64;
    let products: Vec<(f64, f64)> = (0..COVARIANCE_REPLICAS)
        .into_par_iter()
        .map(|j| {
            let dis = disorder::sample_disorder_with(
                &fm,
                derive_seed(seed, j as u64),
                disorder::DEFAULT_TENSOR_BUDGET,
                law,
            )?;
            let ha = dis.evaluate_h(a);
            Ok((ha * dis.evaluate_h(b), ha * ha))
        })
        .collect::<Result<Vec<_>>>()?;
    for (label, target, values) in [
        (
            "empirical_covariance",
            n * model.mixture().eval(&r),
            products.iter().map(|p| p.0).collect::<Vec<_>>(),
        ),
        (
            "empirical_variance",
            n * model.xi_one(),
            products.iter().map(|p| p.1).collect::<Vec<_>>(),
        ),
    ] {
        let m = estimators::pairwise_sum(&values) / values.len() as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
        let se = (estimators::pairwise_sum(&sq) / (values.len() - 1) as f64).sqrt()
            / (values.len() as f64).sqrt();
        let z = (m - target) / se;
        checks.push(Check::new(
            label,
            z.abs() <= 5.0,
            format!("mean {m:.6} vs {target:.6} ({z:+.3} stderr over {COVARIANCE_REPLICAS} replicas)"),
        ));
    }
    Ok(())
}

fn z2_table(model: &ModelSpec, beta: f64, checks: &mut Vec<Check>) -> Result<String> {
    let mut csv = provenance_line(model);
    csv.push_str(TABLE_HEADER);
    csv.push('\n');
    if model.n_species() > 3 {
        checks.push(Check::new(
            "second_moment_convergence",
            true,
            "skipped: exact quadrature needs at most 3 species".into(),
        ));
        return Ok(csv);
    }
    let limit = beta * beta * model.xi_one()
        + landscape::maximize_f(model, beta, Objective::Plain)?.value;
    let mut residuals = Vec::new();
    let mut zero_worst: f64 = 0.0;
    for &n in &Z2_SIZES {
        let fm = FiniteModel::build(model, n)?;
        zero_worst = zero_worst.max(mc::log_e_z2_exact(&fm, 0.0)?.abs());
        let v = mc::log_e_z2_exact(&fm, beta)?;
        let res = v - limit;
        residuals.push(res.abs());
        let _ = writeln!(csv, "{beta},{n},{v},0,{limit},{res}");
    }
    checks.push(Check::new(
        "second_moment_normalization",
        zero_worst <= 1e-8,
        format!("max |value| at beta = 0: {zero_worst:e}"),
    ));
    let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    let last = *residuals.last().expect("non-empty");
    checks.push(Check::new(
        "second_moment_convergence",
        decreasing && last <= 0.02,
        format!("|residual| by N: {residuals:?}"),
    ));
    Ok(csv)
}

pub fn cmd_verify(cfg: &RunConfig, out: &mut dyn std::io::Write) -> Result<i32> {
    cfg.validate()?;
    let model = cfg.load_model(true)?;
    let fm = FiniteModel::build(&model, cfg.n)?;
    let entries = tensor_entries(&fm);
    if entries > disorder::DEFAULT_TENSOR_BUDGET {
        return Err(Error::Budget {
            term: "all terms".into(),
            entries,
            budget: disorder::DEFAULT_TENSOR_BUDGET,
        });
    }
    let law = if cfg.mutate_missing_factorial {
        CoefficientLaw::MissingFactorial
    } else {
        CoefficientLaw::Exact
    };
    let mut checks = Vec::new();
    covariance_checks(&model, law, cfg.seed, &mut checks)?;

    let beta = match cfg.beta {
        Some(b) => b,
        None => {
            let bm = criticality::beta_m_with(&model, &cfg.crit_options())?.beta;
            if bm.is_finite() { 0.5 * bm } else { 0.5 }
        }
    };
    let xi1 = model.xi_one();
    let dis = disorder::sample_disorder_with(&fm, cfg.seed, disorder::DEFAULT_TENSOR_BUDGET, law)?;
    let fe = estimators::estimate_free_energy(&dis, beta, cfg.samples, cfg.seed)?;
    let annealed = 0.5 * beta * beta * xi1;
    checks.push(Check::new(
        "free_energy",
        (fe.estimate - annealed).abs() <= 0.1,
        format!("F = {:.6} +- {:.6} vs {annealed:.6}", fe.estimate, fe.std_error),
    ));
    let ls = estimators::estimate_level_set(&dis, beta, cfg.epsilon, cfg.samples, cfg.seed)?;
    checks.push(Check::new(
        "level_set",
        (ls.estimate - (-annealed)).abs() <= 0.15,
        format!(
            "log-volume = {:.6} vs {:.6} ({} hits)",
            ls.estimate,
            -annealed,
            ls.hits.unwrap_or(0)
        ),
    ));
    let csv = z2_table(&model, beta, &mut checks)?;

    let all_passed = checks.iter().all(|c| c.passed);
    let summary = VerifySummary {
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        model_hash: model.hash(),
        seed: cfg.seed,
        n: fm.n(),
        block_sizes: fm.block_sizes().to_vec(),
        samples: cfg.samples,
        beta,
        checks,
        free_energy: fe,
        level_set: ls,
        all_passed,
    };
    let mut text = String::new();
    for c in &summary.checks {
        let _ = writeln!(text, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    out.write_all(text.as_bytes())?;
    if let Some(p) = &cfg.out {
        fs::write(p, serde_json::to_string_pretty(&summary)? + "\n")?;
        fs::write(p.with_extension("csv"), &csv)?;
    }
    Ok(if all_passed { 0 } else { 3 })
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub r: f64,
    pub result: EstimatorResult,
    pub prediction: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandProbe {
    pub tool: String,
    pub tool_version: String,
    pub model_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub block_sizes: Vec<usize>,
    pub beta: f64,
    pub free_energy: EstimatorResult,
    pub rows: Vec<BandRow>,
}

pub fn cmd_band_probe(cfg: &RunConfig, out: &mut dyn std::io::Write) -> Result<i32> {
    cfg.validate()?;
    let model = cfg.load_model(true)?;
    let fm = FiniteModel::build(&model, cfg.n)?;
    let beta = match cfg.beta {
        Some(b) => b,
        None => 0.5 * criticality::beta_m_with(&model, &cfg.crit_options())?.beta,
    };
    let dis = mc::sample_disorder(&fm, cfg.seed)?;
    let anchor = estimators::sample_level_set_anchor(&dis, beta, cfg.epsilon, cfg.seed, 1_000_000)?;
    let free_energy = estimators::estimate_free_energy(&dis, beta, cfg.samples, cfg.seed)?;
    let annealed = 0.5 * beta * beta * model.xi_one();
    let mut rows = Vec::new();
    for &r in &cfg.r {
        let rv = vec![r; model.n_species()];
        let result = estimators::estimate_band_free_energy(&dis, &anchor, &rv, beta, cfg.samples, cfg.seed)?;
        let prediction = annealed + landscape::f_beta(&model, beta, &rv)?;
        rows.push(BandRow {
            r,
            residual: result.estimate - prediction,
            result,
            prediction,
        });
    }
    let probe = BandProbe {
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        model_hash: model.hash(),
        seed: cfg.seed,
        n: fm.n(),
        block_sizes: fm.block_sizes().to_vec(),
        beta,
        free_energy,
        rows,
    };
    let text = serde_json::to_string_pretty(&probe)? + "\n";
    emit(out, cfg.out.as_deref(), &text)?;
    Ok(0)
}
