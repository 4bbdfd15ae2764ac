//! Experiment configuration, Monte Carlo execution, and rate-exponent
//! fitting.
//!
//! A run sweeps a grid of (n, p) points, draws `replicates` data sets per
//! point (replicate r at grid point g is seeded by `base_seed ^ hash(g, r)`),
//! estimates the spike with the configured method, and records the
//! projection loss. Records stream to CSV one grid point at a time and the
//! output is byte-identical for a fixed base seed regardless of thread
//! count.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Init, Method};
use crate::linalg::{projection_loss, UnitVector};
use crate::model::{
    make_spiked, sample_covariance, sample_data_with_root, NoiseScales, Pattern, SamplerKind,
    SamplerSpec, Sigma0, SparsityClass, SpikedModel,
};
use crate::rng::replicate_seed;

/// How the target spike is built at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetSpec {
    /// Fixed pattern, independent of n.
    FirstKEqual { k: Option<usize> },
    GeometricDecay { rate: f64 },
    /// Least-favorable spread for the lq ball at sample size n: one large
    /// head coordinate plus d(n) equal coordinates pinned at `multiplier`
    /// times the per-coordinate noise scale sqrt(sigma2/n), with d(n) chosen
    /// to exhaust the ball radius. This is the configuration that makes the
    /// minimax exponent visible in a fixed-(p, lambda) sweep.
    CriticalSpread { multiplier: f64 },
}

/// Model block of an experiment config. `p` acts as a default when a grid
/// entry does not override it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBlock {
    pub p: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta1_pattern: TargetSpec,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Gaussian
}

/// Estimator block: method plus its knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorBlock {
    pub method: Method,
    /// Ball radius for the constrained methods (R0 for l0).
    #[serde(default)]
    pub rho_q: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_init")]
    pub init: Init,
    /// Support-enumeration cap for l0_exact.
    #[serde(default = "default_budget")]
    pub enumeration_budget: u128,
}

fn default_max_iter() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-8
}
fn default_restarts() -> usize {
    8
}
fn default_init() -> Init {
    Init::DiagThresh
}
fn default_budget() -> u128 {
    crate::estimators::DEFAULT_ENUMERATION_BUDGET
}

/// One experiment: model x sparsity x estimator over a grid of (n, p).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub sparsity: SparsityClass,
    pub estimator: EstimatorBlock,
    /// `(n, p)` pairs.
    pub grid: Vec<(usize, usize)>,
    pub replicates: usize,
    pub base_seed: u64,
    pub output_path: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        for &(n, p) in &self.grid {
            if n == 0 || p == 0 {
                return Err(Error::Config(format!("grid point ({n}, {p}) invalid")));
            }
        }
        SparsityClass::new(self.sparsity.q, self.sparsity.rq, self.sparsity.alpha, self.sparsity.kappa)?;
        Ok(())
    }

    fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        let rho = self.estimator.rho_q.unwrap_or(self.sparsity.rq);
        EstimatorConfig {
            method: self.estimator.method,
            rho_q: rho,
            q: self.sparsity.q,
            max_iter: self.estimator.max_iter,
            tol: self.estimator.tol,
            restarts: self.estimator.restarts,
            init: self.estimator.init.clone(),
            seed,
            enumeration_budget: self.estimator.enumeration_budget,
        }
    }
}

/// Builds the target spike for a grid point.
pub fn build_target(
    spec: TargetSpec,
    p: usize,
    n: usize,
    sparsity: &SparsityClass,
    scales: &NoiseScales,
) -> Result<UnitVector> {
    match spec {
        TargetSpec::FirstKEqual { k } => Ok(crate::model::sparse_unit_vector(
            p,
            sparsity.q,
            sparsity.rq,
            Pattern::FirstKEqual { k },
        )?
        .vector),
        TargetSpec::GeometricDecay { rate } => Ok(crate::model::sparse_unit_vector(
            p,
            sparsity.q,
            sparsity.rq,
            Pattern::GeometricDecay { rate },
        )?
        .vector),
        TargetSpec::CriticalSpread { multiplier } => {
            critical_spread_target(p, n, sparsity, scales.sigma2, multiplier)
        }
    }
}

/// Spread target: head coordinate `sqrt(1 - d c^2)` plus `d` equal
/// coordinates of size `c` near `multiplier * sqrt(sigma2 / n)`, with `d`
/// chosen to exhaust the reduced budget (`d c^q = Rq - 1` for q > 0, or
/// `d = Rq - 1` coordinates for q = 0). Always stays inside the ball since
/// the head contributes at most 1 to the lq sum.
pub fn critical_spread_target(
    p: usize,
    n: usize,
    sparsity: &SparsityClass,
    sigma2: f64,
    multiplier: f64,
) -> Result<UnitVector> {
    if multiplier <= 0.0 {
        return Err(Error::Config(format!("spread multiplier must be positive, got {multiplier}")));
    }
    if p < 2 {
        return Err(Error::Config("critical_spread needs p >= 2".into()));
    }
    let rq_bar = sparsity.rq_bar();
    if rq_bar <= 0.0 {
        return Err(Error::Config("critical_spread needs Rq > 1".into()));
    }
    let q = sparsity.q;
    let noise = multiplier * (sigma2 / n as f64).sqrt();
    let d = if q == 0.0 {
        (rq_bar.floor() as usize).clamp(1, p - 1)
    } else {
        ((rq_bar / noise.powf(q)).round() as usize).clamp(1, p - 1)
    };
    let mut c = if q == 0.0 { noise } else { (rq_bar / d as f64).powf(1.0 / q) };
    // a unit vector cannot carry more than all of its mass in the spread
    if d as f64 * c * c >= 1.0 {
        c = (0.999 / d as f64).sqrt();
    }
    let eps_sq = d as f64 * c * c;
    let mut v = ndarray::Array1::zeros(p);
    v[0] = (1.0 - eps_sq).sqrt();
    for i in 0..d {
        v[1 + i] = c;
    }
    let u = UnitVector::normalized(v)?;
    let lq = crate::model::lq_norm(u.coords().as_slice().unwrap(), q);
    if lq > sparsity.rq + 1e-9 {
        return Err(Error::Config(format!(
            "critical spread left the ball: lq = {lq:.9} > Rq = {}",
            sparsity.rq
        )));
    }
    Ok(u)
}

/// One Monte Carlo replicate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub p: usize,
    pub q: f64,
    pub rq: f64,
    pub method: String,
    pub replicate: usize,
    pub seed: u64,
    pub loss: f64,
    pub loss_sq: f64,
    pub objective: f64,
    pub wall_time_ms: u64,
    pub status: String,
}

pub const CSV_HEADER: &str = "n,p,q,Rq,method,replicate,seed,loss,loss_sq,objective,wall_time_ms,status";

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.q,
            self.rq,
            self.method,
            self.replicate,
            self.seed,
            self.loss,
            self.loss_sq,
            self.objective,
            self.wall_time_ms,
            self.status
        )
    }
}

/// Runtime options that are not part of the experiment definition.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Write wall_time_ms as 0 so re-runs compare byte-identical.
    pub stable_time: bool,
    /// Skip writing the CSV (records are still returned).
    pub no_output: bool,
}

/// Executes the experiment; returns all records and, unless disabled,
/// appends them to `cfg.output_path` (header plus one row per replicate,
/// flushed one grid point at a time).
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut out: Option<std::io::BufWriter<std::fs::File>> = if opts.no_output {
        None
    } else {
        let f = std::fs::File::create(&cfg.output_path)?;
        Some(std::io::BufWriter::new(f))
    };
    if let Some(w) = out.as_mut() {
        writeln!(w, "{CSV_HEADER}")?;
    }

    let mut all = Vec::with_capacity(cfg.grid.len() * cfg.replicates);
    for (g_idx, &(n, p)) in cfg.grid.iter().enumerate() {
        let scales = NoiseScales::from_eigenvalues(cfg.model.lambda1, cfg.model.lambda2)?;
        let theta1 = build_target(cfg.model.theta1_pattern, p, n, &cfg.sparsity, &scales)?;
        let model: SpikedModel =
            make_spiked(p, cfg.model.lambda1, cfg.model.lambda2, theta1.clone(), Sigma0::Canonical)?;
        let root = model.covariance_root()?;

        let rows: Vec<ExperimentRecord> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.base_seed, g_idx as u64, r as u64);
                let started = Instant::now();
                let outcome = (|| -> Result<(f64, f64)> {
                    let sampler = match cfg.model.sampler {
                        SamplerKind::Gaussian => SamplerSpec::gaussian(seed),
                        SamplerKind::Rademacher => SamplerSpec::rademacher(seed),
                    };
                    let x = sample_data_with_root(&root, n, &sampler)?;
                    let s = sample_covariance(&x)?;
                    let est = cfg.estimator_config(seed).run(&s)?;
                    let loss = projection_loss(&est.theta_hat, &theta1)?;
                    Ok((loss, est.objective))
                })();
                let wall = if opts.stable_time { 0 } else { started.elapsed().as_millis() as u64 };
                match outcome {
                    Ok((loss, objective)) => ExperimentRecord {
                        n,
                        p,
                        q: cfg.sparsity.q,
                        rq: cfg.sparsity.rq,
                        method: cfg.estimator.method.name().to_string(),
                        replicate: r,
                        seed,
                        loss,
                        loss_sq: loss * loss,
                        objective,
                        wall_time_ms: wall,
                        status: "ok".to_string(),
                    },
                    Err(e) => ExperimentRecord {
                        n,
                        p,
                        q: cfg.sparsity.q,
                        rq: cfg.sparsity.rq,
                        method: cfg.estimator.method.name().to_string(),
                        replicate: r,
                        seed,
                        loss: f64::NAN,
                        loss_sq: f64::NAN,
                        objective: f64::NAN,
                        wall_time_ms: wall,
                        status: format!("error:{}", error_tag(&e)),
                    },
                }
            })
            .collect();

        if let Some(w) = out.as_mut() {
            // one buffered block per grid point
            let mut block = String::with_capacity(rows.len() * 96);
            for row in &rows {
                block.push_str(&row.csv_row());
                block.push('\n');
            }
            w.write_all(block.as_bytes())?;
            w.flush()?;
        }
        all.extend(rows);
    }
    Ok(all)
}

fn error_tag(e: &Error) -> &'static str {
    match e {
        Error::EnumerationBudget { .. } => "budget",
        Error::EigNonConvergence { .. } => "eig",
        Error::DegenerateInput(_) => "degenerate",
        Error::OutOfRegime(_) => "regime",
        _ => "other",
    }
}

/// Axis for the rate regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    N,
    P,
}

/// Which empirical moment the regression uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    MeanLoss,
    MeanLossSq,
}

/// Log-log OLS fit against a target exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub target_exponent: f64,
    pub pass: bool,
}

/// Ordinary least squares of `log(moment)` on `log(x)` with one point per
/// distinct x value; `pass` iff `|slope - target| <= tolerance`.
pub fn fit_rate(
    records: &[ExperimentRecord],
    x_axis: XAxis,
    moment: Moment,
    target_exponent: f64,
    tolerance: f64,
) -> Result<RateFit> {
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = std::collections::BTreeMap::new();
    for r in records.iter().filter(|r| r.status == "ok") {
        let x = match x_axis {
            XAxis::N => r.n,
            XAxis::P => r.p,
        };
        let v = match moment {
            Moment::MeanLoss => r.loss,
            Moment::MeanLossSq => r.loss_sq,
        };
        groups.entry(x).or_default().push(v);
    }
    if groups.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need >= 4 distinct grid values, got {}",
            groups.len()
        )));
    }
    for (x, vs) in &groups {
        if vs.len() < 30 {
            return Err(Error::InvalidArgument(format!(
                "need >= 30 replicates per grid value, got {} at x = {x}",
                vs.len()
            )));
        }
    }
    let pts: Vec<(f64, f64)> = groups
        .iter()
        .map(|(x, vs)| {
            let mean = vs.iter().sum::<f64>() / vs.len() as f64;
            ((*x as f64).ln(), mean.ln())
        })
        .collect();
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = pts.iter().map(|p| {
        let e = p.1 - (intercept + slope * p.0);
        e * e
    }).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - ym) * (p.1 - ym)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let stderr = if pts.len() > 2 { (ss_res / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    let pass = (slope - target_exponent).abs() <= tolerance;
    Ok(RateFit { slope, intercept, stderr, r2, target_exponent, pass })
}
