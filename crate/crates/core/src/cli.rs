//! Command-line interface: `simulate`, `rates`, `verify`, `pack`.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime error.

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::deviation::{lemma_bound, linf_stat, l0_quad_stat, l1_quad_stat, StatKind};
use crate::error::{Error, Result};
use crate::harness::{run_experiment, ExperimentConfig, RunOptions};
use crate::model::{
    make_spiked, sample_covariance, sample_data_with_root, sparse_unit_vector, Pattern,
    SamplerSpec, Sigma0, GAUSSIAN_K_SQ,
};
use crate::rng::replicate_seed;
use crate::theory::{
    assemble_lower_bound, epsilon_star, lower_bound_rate, packing_set, upper_bound_rate, RateQuery,
};

#[derive(Debug, Parser)]
#[command(name = "spca", version, about = "Sparse PCA estimators, spiked-model simulation, and minimax rate machinery", disable_help_subcommand = true)]
struct Cli {
    /// Base seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path override.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Output format for report-style subcommands.
    #[arg(long, global = true, value_parser = ["csv", "json"], default_value = "csv")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a JSON config file.
    Simulate {
        /// Path to the experiment config.
        config: String,
        /// Zero out the wall_time_ms column so repeated runs are
        /// byte-identical.
        #[arg(long)]
        stable_time: bool,
        /// Rayon thread count (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the rate formulas at one query point.
    Rates(RatesArgs),
    /// Sweep a deviation statistic against its bound formula.
    Verify(VerifyArgs),
    /// Construct a packing set and print its certificate as JSON.
    Pack(PackArgs),
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long)]
    q: f64,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    /// Reduced radius Rq - 1 (for the lower bound).
    #[arg(long)]
    rbar: Option<f64>,
    /// Ball radius Rq (for the upper bound); defaults to rbar + 1.
    #[arg(long)]
    rq: Option<f64>,
    /// Effective noise sigma^2; derived from the eigenvalues when omitted.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Constant C in the critical separation scale.
    #[arg(long, default_value_t = 0.1)]
    c: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Statistic to sweep.
    #[arg(value_parser = ["linf", "l0", "l1"])]
    kind: String,
    /// Comma-separated dimension grid.
    #[arg(long, default_value = "16,64,256", value_delimiter = ',')]
    p_grid: Vec<usize>,
    /// Comma-separated sample-size grid.
    #[arg(long, default_value = "100,1000,10000", value_delimiter = ',')]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Support size for l0 (statistic uses d = 2 R0) or radius for l1.
    #[arg(long, default_value_t = 2.0)]
    param: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
}

#[derive(Debug, Args)]
struct PackArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: f64,
    /// Ball radius Rq.
    #[arg(long, short = 'R')]
    r: f64,
    #[arg(long)]
    eps: f64,
}

/// Parses and runs; returns the process exit code.
pub fn cli_dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints usage/help; help requests exit 0, anything else is
            // a validation failure
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => 1,
                _ => 2,
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, stable_time, threads } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(seed) = cli.seed {
                cfg.base_seed = seed;
            }
            if let Some(out) = cli.out {
                cfg.output_path = out;
            }
            let opts = RunOptions { stable_time, no_output: false };
            let records = if let Some(t) = threads {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                pool.install(|| run_experiment(&cfg, &opts))?
            } else {
                run_experiment(&cfg, &opts)?
            };
            let ok = records.iter().filter(|r| r.status == "ok").count();
            println!("wrote {} records ({} ok) to {}", records.len(), ok, cfg.output_path);
            Ok(())
        }
        Command::Rates(a) => {
            let report = rates_report(&a, &cli.format)?;
            print!("{report}");
            Ok(())
        }
        Command::Verify(a) => {
            let report = verify_report(&a, cli.seed.unwrap_or(0))?;
            match cli.out {
                Some(path) => std::fs::write(path, report)?,
                None => print!("{report}"),
            }
            Ok(())
        }
        Command::Pack(a) => {
            let report = pack_report(&a, cli.seed.unwrap_or(0))?;
            match cli.out {
                Some(path) => std::fs::write(path, report)?,
                None => println!("{report}"),
            }
            Ok(())
        }
    }
}

fn rates_report(a: &RatesArgs, format: &str) -> Result<String> {
    let (sigma2, sigma_tilde2) = match (a.sigma2, a.lambda1, a.lambda2) {
        (Some(s2), _, _) => {
            let st2 = match (a.lambda1, a.lambda2) {
                (Some(l1), Some(l2)) if l1 > l2 && l2 >= 0.0 => {
                    Some((l1 / (l1 - l2)) * (l1 / (l1 - l2)))
                }
                _ => None,
            };
            (Some(s2), st2)
        }
        (None, Some(l1), Some(l2)) => {
            let scales = crate::model::NoiseScales::from_eigenvalues(l1, l2)?;
            (Some(scales.sigma2), Some(scales.sigma_tilde * scales.sigma_tilde))
        }
        _ => (None, None),
    };
    let rbar = a.rbar.or(a.rq.map(|r| r - 1.0));
    let rq_radius = a.rq.or(a.rbar.map(|r| r + 1.0));

    let mut rows: Vec<(String, Option<f64>, String)> = Vec::new();
    if let (Some(rbar), Some(s2)) = (rbar, sigma2) {
        let query = RateQuery {
            q: a.q,
            p: a.p,
            n: a.n,
            rq_bar: rbar,
            rq: rq_radius.unwrap_or(rbar + 1.0),
            sigma2: s2,
            sigma_tilde2: sigma_tilde2.unwrap_or(0.0),
        };
        let lo = lower_bound_rate(&query)?;
        rows.push((
            "lower_bound_rate".into(),
            Some(lo.value),
            if lo.in_regime { "in_regime".into() } else { "out_of_regime".into() },
        ));
        let eps = epsilon_star(a.q, a.p, rbar, s2, a.n, a.c)?;
        rows.push((
            "epsilon_star".into(),
            Some(eps.value),
            if eps.in_regime { "in_regime".into() } else { "out_of_regime".into() },
        ));
        if let Some(st2) = sigma_tilde2 {
            let up = upper_bound_rate(&RateQuery { sigma_tilde2: st2, ..query })?;
            rows.push((
                "upper_bound_rate".into(),
                Some(up.value),
                if up.in_regime { "in_regime".into() } else { "out_of_regime".into() },
            ));
        }
        if let (Some(l1), Some(l2)) = (a.lambda1, a.lambda2) {
            if l2 > 0.0 {
                match assemble_lower_bound(a.q, a.p, a.n, rq_radius.unwrap_or(rbar + 1.0), l1, l2, a.c, 0) {
                    Ok(cert) => rows.push((
                        "fano_lower_bound".into(),
                        Some(cert.bound),
                        format!("card_{}", cert.packing.vectors.len()),
                    )),
                    Err(e) => rows.push(("fano_lower_bound".into(), None, format!("skipped: {e}"))),
                }
            }
        }
    } else {
        return Err(Error::InvalidArgument(
            "rates needs --rbar (or --rq) plus --sigma2 or --lambda1/--lambda2".into(),
        ));
    }

    if format == "json" {
        let mut map = serde_json::Map::new();
        for (name, value, note) in rows {
            map.insert(name, json!({ "value": value, "note": note }));
        }
        Ok(format!("{}\n", serde_json::Value::Object(map)))
    } else {
        let mut out = String::new();
        for (name, value, note) in rows {
            match value {
                Some(v) => out.push_str(&format!("{name:>18}  {v:.5}  {note}\n")),
                None => out.push_str(&format!("{name:>18}  -  {note}\n")),
            }
        }
        Ok(out)
    }
}

fn verify_report(a: &VerifyArgs, seed: u64) -> Result<String> {
    let kind = match a.kind.as_str() {
        "linf" => StatKind::Linf,
        "l0" => StatKind::L0Quad,
        "l1" => StatKind::L1Quad,
        other => return Err(Error::InvalidArgument(format!("unknown statistic {other}"))),
    };
    let k = GAUSSIAN_K_SQ.sqrt();
    let mut out = String::from("kind,p,n,param,value,bound,ratio,seed\n");
    for (gi, &p) in a.p_grid.iter().enumerate() {
        // a mildly sparse spike so Sigma is not diagonal
        let spike = sparse_unit_vector(p, 0.0, 4.0f64.min(p as f64), Pattern::FirstKEqual { k: None })?;
        let model = make_spiked(p, a.lambda1, a.lambda2, spike.vector, Sigma0::Canonical)?;
        let sigma = model.covariance();
        let root = model.covariance_root()?;
        for (gj, &n) in a.n_grid.iter().enumerate() {
            let bound = match kind {
                StatKind::Linf => lemma_bound(kind, p, n, 0.0, a.lambda1, k)?,
                StatKind::L0Quad => lemma_bound(kind, p, n, 2.0 * a.param, a.lambda1, k)?,
                StatKind::L1Quad => lemma_bound(kind, p, n, a.param, a.lambda1, k)?,
            };
            for r in 0..a.reps {
                let rep_seed = replicate_seed(seed, (gi * a.n_grid.len() + gj) as u64, r as u64);
                let x = sample_data_with_root(&root, n, &SamplerSpec::gaussian(rep_seed))?;
                let s = sample_covariance(&x)?;
                let diff = crate::linalg::SymMatrix::new(s.as_array() - sigma.as_array())?;
                let value = match kind {
                    StatKind::Linf => linf_stat(&s, &sigma)?,
                    StatKind::L0Quad => l0_quad_stat(&diff, (2.0 * a.param) as usize)?,
                    StatKind::L1Quad => l1_quad_stat(&diff, a.param, 8)?,
                };
                let ratio = if bound.in_regime { value / bound.value } else { f64::NAN };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    kind.name(),
                    p,
                    n,
                    a.param,
                    value,
                    if bound.in_regime { bound.value } else { f64::NAN },
                    ratio,
                    rep_seed
                ));
            }
        }
    }
    Ok(out)
}

fn pack_report(a: &PackArgs, seed: u64) -> Result<String> {
    let pack = packing_set(a.p, a.q, a.r, a.eps, seed)?;
    let value = json!({
        "epsilon": pack.epsilon,
        "d": pack.d,
        "card": pack.vectors.len(),
        "log_card": pack.log_card,
        "min_sep": pack.min_sep,
        "max_sep": pack.max_sep,
        "max_lq_norm": pack.max_lq_norm,
    });
    Ok(serde_json::to_string_pretty(&value)?)
}
