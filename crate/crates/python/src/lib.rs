//! Python bindings: the main types and operations of the `sparsepca` crate.
//!
//! Matrices cross the boundary as nested lists of floats and vectors as flat
//! lists; the module targets interactive exploration and smoke testing, not
//! bulk data transfer.

use ndarray::{Array1, Array2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sparsepca::estimators::{self, EstimatorConfig};
use sparsepca::harness;
use sparsepca::linalg::{self, SymMatrix, UnitVector};
use sparsepca::model::{self, Pattern, SamplerSpec, Sigma0};
use sparsepca::theory::{self, FanoInput, RateQuery};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_unit(v: Vec<f64>) -> PyResult<UnitVector> {
    UnitVector::normalized(Array1::from(v)).map_err(err)
}

fn to_sym(rows: Vec<Vec<f64>>) -> PyResult<SymMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let mut a = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    SymMatrix::new(a).map_err(err)
}

fn matrix_out(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `||u u' - v v'||_F`, the sign-invariant projection distance.
#[pyfunction]
fn projection_loss(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    linalg::projection_loss(&to_unit(u)?, &to_unit(v)?).map_err(err)
}

/// Sine of the principal angle between two directions.
#[pyfunction]
fn sin_theta(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    linalg::sin_theta(&to_unit(u)?, &to_unit(v)?).map_err(err)
}

/// lq "norm": nonzero count for q = 0, else sum |v_j|^q.
#[pyfunction]
fn lq_norm(v: Vec<f64>, q: f64) -> f64 {
    model::lq_norm(&v, q)
}

/// Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix.
#[pyfunction]
fn sym_eig(m: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = linalg::sym_eig(&to_sym(m)?).map_err(err)?;
    Ok((eig.eigenvalues.to_vec(), matrix_out(&eig.eigenvectors)))
}

/// Unit vector in the lq ball: `first_k_equal` or `geometric_decay`.
#[pyfunction]
#[pyo3(signature = (p, q, rq, pattern = "first_k_equal", k = None, rate = 0.5))]
fn sparse_unit_vector(
    p: usize,
    q: f64,
    rq: f64,
    pattern: &str,
    k: Option<usize>,
    rate: f64,
) -> PyResult<Vec<f64>> {
    let pattern = match pattern {
        "first_k_equal" => Pattern::FirstKEqual { k },
        "geometric_decay" => Pattern::GeometricDecay { rate },
        other => return Err(PyValueError::new_err(format!("unknown pattern {other}"))),
    };
    let sv = model::sparse_unit_vector(p, q, rq, pattern).map_err(err)?;
    Ok(sv.vector.coords().to_vec())
}

/// A spiked covariance model with the canonical bulk `I - t1 t1'`.
#[pyclass]
struct SpikedModel {
    inner: model::SpikedModel,
}

#[pymethods]
impl SpikedModel {
    #[new]
    fn new(p: usize, lambda1: f64, lambda2: f64, theta1: Vec<f64>) -> PyResult<Self> {
        let inner =
            model::make_spiked(p, lambda1, lambda2, to_unit(theta1)?, Sigma0::Canonical).map_err(err)?;
        Ok(Self { inner })
    }

    /// The population covariance matrix.
    fn covariance(&self) -> Vec<Vec<f64>> {
        matrix_out(self.inner.covariance().as_array())
    }

    /// Draws an n x p data matrix ("gaussian" or "rademacher" rows).
    #[pyo3(signature = (n, seed, kind = "gaussian"))]
    fn sample(&self, n: usize, seed: u64, kind: &str) -> PyResult<Vec<Vec<f64>>> {
        let sampler = match kind {
            "gaussian" => SamplerSpec::gaussian(seed),
            "rademacher" => SamplerSpec::rademacher(seed),
            other => return Err(PyValueError::new_err(format!("unknown sampler {other}"))),
        };
        let x = model::sample_data(&self.inner, n, &sampler).map_err(err)?;
        Ok(matrix_out(&x))
    }

    /// Effective noise scales (sigma^2, sigma_tilde).
    fn noise_scales(&self) -> PyResult<(f64, f64)> {
        let ns = self.inner.noise_scales().map_err(err)?;
        Ok((ns.sigma2, ns.sigma_tilde))
    }
}

/// Sample covariance `(1/n) sum x_i x_i' - xbar xbar'`.
#[pyfunction]
fn sample_covariance(data: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let n = data.len();
    if n == 0 {
        return Err(PyValueError::new_err("need at least one row"));
    }
    let p = data[0].len();
    if data.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("ragged data matrix"));
    }
    let mut x = Array2::zeros((n, p));
    for (i, row) in data.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let s = model::sample_covariance(&x).map_err(err)?;
    Ok(matrix_out(s.as_array()))
}

/// Result of one estimation call.
#[pyclass]
struct EstimateResult {
    #[pyo3(get)]
    theta_hat: Vec<f64>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    support: Option<Vec<usize>>,
}

impl From<estimators::EstimateResult> for EstimateResult {
    fn from(r: estimators::EstimateResult) -> Self {
        Self {
            theta_hat: r.theta_hat.coords().to_vec(),
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
            support: r.support,
        }
    }
}

/// Top eigenvector of S (ordinary PCA).
#[pyfunction]
fn plain_pca(s: Vec<Vec<f64>>) -> PyResult<EstimateResult> {
    Ok(estimators::plain_pca(&to_sym(s)?).map_err(err)?.into())
}

/// Exact l0-constrained maximizer of b'Sb by support enumeration.
#[pyfunction]
#[pyo3(signature = (s, r0, budget = 1_000_000))]
fn l0_exact(s: Vec<Vec<f64>>, r0: usize, budget: u64) -> PyResult<EstimateResult> {
    Ok(estimators::l0_exact_with_budget(&to_sym(s)?, r0, budget as u128).map_err(err)?.into())
}

/// Truncated power iteration with restarts.
#[pyfunction]
#[pyo3(signature = (s, r0, restarts = 8, seed = 0))]
fn l0_truncated_power(s: Vec<Vec<f64>>, r0: usize, restarts: usize, seed: u64) -> PyResult<EstimateResult> {
    let cfg = EstimatorConfig::l0_truncated_power(r0).with_restarts(restarts).with_seed(seed);
    Ok(estimators::l0_truncated_power(&to_sym(s)?, r0, &cfg).map_err(err)?.into())
}

/// Projected power ascent over the sphere intersected with an lq ball.
#[pyfunction]
#[pyo3(signature = (s, q, rho, restarts = 8, seed = 0))]
fn lq_projected(s: Vec<Vec<f64>>, q: f64, rho: f64, restarts: usize, seed: u64) -> PyResult<EstimateResult> {
    let cfg = EstimatorConfig::lq_projected(q, rho).with_restarts(restarts).with_seed(seed);
    Ok(estimators::lq_projected(&to_sym(s)?, q, rho, &cfg).map_err(err)?.into())
}

/// Constant-free minimax lower-bound rate; returns (value, in_regime).
#[pyfunction]
fn lower_bound_rate(q: f64, p: usize, n: usize, rq_bar: f64, sigma2: f64) -> PyResult<(f64, bool)> {
    let rq = RateQuery { q, p, n, rq_bar, rq: rq_bar + 1.0, sigma2, sigma_tilde2: 0.0 };
    let f = theory::lower_bound_rate(&rq).map_err(err)?;
    Ok((f.value, f.in_regime))
}

/// Constant-free minimax upper-bound rate; returns (value, in_regime, branch).
#[pyfunction]
fn upper_bound_rate(q: f64, p: usize, n: usize, rq: f64, sigma_tilde2: f64) -> PyResult<(f64, bool, String)> {
    let query = RateQuery { q, p, n, rq_bar: rq - 1.0, rq, sigma2: 0.0, sigma_tilde2 };
    let u = theory::upper_bound_rate(&query).map_err(err)?;
    let branch = match u.branch {
        theory::UpperBranch::SoftSparse => "soft_sparse",
        theory::UpperBranch::L1 => "l1",
        theory::UpperBranch::L0 => "l0",
    };
    Ok((u.value, u.in_regime, branch.to_string()))
}

/// Critical packing separation scale; returns (epsilon, in_regime).
#[pyfunction]
fn epsilon_star(q: f64, p: usize, rq_bar: f64, sigma2: f64, n: usize, c: f64) -> PyResult<(f64, bool)> {
    let f = theory::epsilon_star(q, p, rq_bar, sigma2, n, c).map_err(err)?;
    Ok((f.value, f.in_regime))
}

/// Generalized Fano bound `max{0, alpha/2 (1 - (beta + log 2)/log N)}`.
#[pyfunction]
fn fano_bound(alpha_n: f64, beta_n: f64, cardinality: usize) -> PyResult<f64> {
    theory::fano_bound(&FanoInput { alpha_n, beta_n, cardinality }).map_err(err)
}

/// KL divergence between two n-fold spiked Gaussians.
#[pyfunction]
fn kl_spiked(x1: Vec<f64>, x2: Vec<f64>, lambda1: f64, lambda2: f64, n: usize) -> PyResult<f64> {
    theory::kl_spiked(&to_unit(x1)?, &to_unit(x2)?, lambda1, lambda2, n).map_err(err)
}

/// Local packing of the sparse sphere; returns a certificate dict-like tuple
/// (vectors, epsilon, d, log_card, min_sep, max_sep, max_lq_norm).
#[pyfunction]
#[pyo3(signature = (p, q, rq, epsilon, seed = 0))]
fn packing_set(
    p: usize,
    q: f64,
    rq: f64,
    epsilon: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64, usize, f64, f64, f64, f64)> {
    let pack = theory::packing_set(p, q, rq, epsilon, seed).map_err(err)?;
    let vectors: Vec<Vec<f64>> = pack.vectors.iter().map(|v| v.coords().to_vec()).collect();
    Ok((vectors, pack.epsilon, pack.d, pack.log_card, pack.min_sep, pack.max_sep, pack.max_lq_norm))
}

/// End-to-end Fano lower bound; returns (bound, epsilon, cardinality, vacuous).
#[pyfunction]
#[pyo3(signature = (q, p, n, rq, lambda1, lambda2, c = 0.1, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn assemble_lower_bound(
    q: f64,
    p: usize,
    n: usize,
    rq: f64,
    lambda1: f64,
    lambda2: f64,
    c: f64,
    seed: u64,
) -> PyResult<(f64, f64, usize, bool)> {
    let cert = theory::assemble_lower_bound(q, p, n, rq, lambda1, lambda2, c, seed).map_err(err)?;
    Ok((cert.bound, cert.epsilon, cert.packing.vectors.len(), cert.vacuous))
}

/// Largest absolute entry of S - Sigma.
#[pyfunction]
fn linf_stat(s: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> PyResult<f64> {
    sparsepca::deviation::linf_stat(&to_sym(s)?, &to_sym(sigma)?).map_err(err)
}

/// Exact sparse quadratic supremum over supports of size d.
#[pyfunction]
fn l0_quad_stat(m: Vec<Vec<f64>>, d: usize) -> PyResult<f64> {
    sparsepca::deviation::l0_quad_stat(&to_sym(m)?, d).map_err(err)
}

/// Deviation bound formula; kind is "linf", "l0" or "l1"; returns
/// (value, in_regime).
#[pyfunction]
fn lemma_bound(kind: &str, p: usize, n: usize, d_or_r1: f64, lambda1: f64, k: f64) -> PyResult<(f64, bool)> {
    let kind = match kind {
        "linf" => sparsepca::deviation::StatKind::Linf,
        "l0" => sparsepca::deviation::StatKind::L0Quad,
        "l1" => sparsepca::deviation::StatKind::L1Quad,
        other => return Err(PyValueError::new_err(format!("unknown kind {other}"))),
    };
    let f = sparsepca::deviation::lemma_bound(kind, p, n, d_or_r1, lambda1, k).map_err(err)?;
    Ok((f.value, f.in_regime))
}

/// Runs an experiment config (JSON text); returns the CSV rows as strings.
#[pyfunction]
#[pyo3(signature = (config_json, stable_time = true))]
fn run_experiment(config_json: &str, stable_time: bool) -> PyResult<Vec<String>> {
    let cfg = harness::ExperimentConfig::from_json(config_json).map_err(err)?;
    let records = harness::run_experiment(
        &cfg,
        &harness::RunOptions { stable_time, no_output: true },
    )
    .map_err(err)?;
    Ok(records.iter().map(|r| r.csv_row()).collect())
}

/// Log-log OLS of group means against a target exponent; takes (x, loss)
/// pairs, returns (slope, stderr, r2, pass).
#[pyfunction]
fn fit_power_law(xs: Vec<usize>, losses: Vec<f64>, target: f64, tolerance: f64) -> PyResult<(f64, f64, f64, bool)> {
    if xs.len() != losses.len() {
        return Err(PyValueError::new_err("xs and losses must have equal length"));
    }
    let records: Vec<harness::ExperimentRecord> = xs
        .iter()
        .zip(losses.iter())
        .map(|(&n, &l)| harness::ExperimentRecord {
            n,
            p: 0,
            q: 0.0,
            rq: 0.0,
            method: String::new(),
            replicate: 0,
            seed: 0,
            loss: l,
            loss_sq: l * l,
            objective: 0.0,
            wall_time_ms: 0,
            status: "ok".into(),
        })
        .collect();
    let fit = harness::fit_rate(&records, harness::XAxis::N, harness::Moment::MeanLossSq, target, tolerance)
        .map_err(err)?;
    Ok((fit.slope, fit.stderr, fit.r2, fit.pass))
}

#[pymodule]
fn sparsepca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(projection_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sin_theta, m)?)?;
    m.add_function(wrap_pyfunction!(lq_norm, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_unit_vector, m)?)?;
    m.add_function(wrap_pyfunction!(sample_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(plain_pca, m)?)?;
    m.add_function(wrap_pyfunction!(l0_exact, m)?)?;
    m.add_function(wrap_pyfunction!(l0_truncated_power, m)?)?;
    m.add_function(wrap_pyfunction!(lq_projected, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_rate, m)?)?;
    m.add_function(wrap_pyfunction!(upper_bound_rate, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_star, m)?)?;
    m.add_function(wrap_pyfunction!(fano_bound, m)?)?;
    m.add_function(wrap_pyfunction!(kl_spiked, m)?)?;
    m.add_function(wrap_pyfunction!(packing_set, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(linf_stat, m)?)?;
    m.add_function(wrap_pyfunction!(l0_quad_stat, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_class::<SpikedModel>()?;
    m.add_class::<EstimateResult>()?;
    Ok(())
}
