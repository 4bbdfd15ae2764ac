//! Solvers for the sphere-constrained sparse eigenvector problem
//! `maximize b' S b  over  b in S^{p-1} with lq(b) <= rho`.
//!
//! `l0_exact` enumerates supports and is the ground truth at desk scale;
//! `l0_truncated_power` and `lq_projected` are the scalable projected-ascent
//! surrogates. All methods canonicalize the sign of the returned vector
//! (first nonzero coordinate nonnegative) so outputs are deterministic.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_max_scratch, sym_eig, SymMatrix, UnitVector};
use crate::model::lq_norm;
use crate::rng::split_seed;

/// Default cap on `C(p, R0)` for exhaustive support enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PlainPca,
    L0Exact,
    L0TruncatedPower,
    LqProjected,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::PlainPca => "plain_pca",
            Method::L0Exact => "l0_exact",
            Method::L0TruncatedPower => "l0_truncated_power",
            Method::LqProjected => "lq_projected",
        }
    }
}

/// Initialization for the iterative methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Unit vector on the largest diagonal entries of S (R0 of them, or
    /// ceil(rho) for the lq methods). Deterministic and cheap.
    DiagThresh,
    /// Random unit vector per restart.
    Random,
    /// Caller-provided warm start.
    Warm(Vec<f64>),
}

/// Configuration for one estimation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Ball radius rho_q >= 1 (R0 for the l0 methods).
    pub rho_q: f64,
    pub q: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub init: Init,
    /// Seed for random restarts; restart k draws from substream k.
    #[serde(default)]
    pub seed: u64,
    /// Support-enumeration cap for `l0_exact`.
    #[serde(default = "default_budget")]
    pub enumeration_budget: u128,
}

fn default_budget() -> u128 {
    DEFAULT_ENUMERATION_BUDGET
}

impl EstimatorConfig {
    pub fn plain_pca() -> Self {
        Self {
            method: Method::PlainPca,
            rho_q: f64::INFINITY,
            q: 2.0,
            max_iter: 0,
            tol: 1e-8,
            restarts: 1,
            init: Init::DiagThresh,
            seed: 0,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }

    pub fn l0_exact(r0: usize) -> Self {
        Self { method: Method::L0Exact, rho_q: r0 as f64, q: 0.0, ..Self::plain_pca() }
    }

    pub fn l0_truncated_power(r0: usize) -> Self {
        Self {
            method: Method::L0TruncatedPower,
            rho_q: r0 as f64,
            q: 0.0,
            max_iter: 500,
            ..Self::plain_pca()
        }
    }

    pub fn lq_projected(q: f64, rho: f64) -> Self {
        Self { method: Method::LqProjected, rho_q: rho, q, max_iter: 500, ..Self::plain_pca() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.method != Method::PlainPca && self.rho_q < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "rho_q must be >= 1 for a non-empty feasible set, got {}",
                self.rho_q
            )));
        }
        Ok(())
    }

    /// Dispatches on `method`.
    pub fn run(&self, s: &SymMatrix) -> Result<EstimateResult> {
        self.validate()?;
        match self.method {
            Method::PlainPca => plain_pca(s),
            Method::L0Exact => l0_exact_with_budget(s, self.rho_q as usize, self.enumeration_budget),
            Method::L0TruncatedPower => l0_truncated_power(s, self.rho_q as usize, self),
            Method::LqProjected => lq_projected(s, self.q, self.rho_q, self),
        }
    }
}

/// Result of one estimation call.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub theta_hat: UnitVector,
    /// `theta_hat' S theta_hat`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Selected support, for the l0 methods.
    pub support: Option<Vec<usize>>,
    /// Top eigenvalue not unique (spectral gap below threshold).
    pub degenerate: bool,
}

/// Top eigenvector of S; ordinary PCA.
pub fn plain_pca(s: &SymMatrix) -> Result<EstimateResult> {
    let eig = sym_eig(s)?;
    let theta_hat = eig.top_eigenvector()?.sign_canonical();
    Ok(EstimateResult {
        theta_hat,
        objective: eig.eigenvalues[0],
        iterations: 0,
        converged: true,
        support: None,
        degenerate: !eig.top_is_unique(),
    })
}

/// Number of size-k subsets of 0..p, saturating.
pub fn binomial(p: usize, k: usize) -> u128 {
    if k > p {
        return 0;
    }
    let k = k.min(p - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((p - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Visits every size-k subset of `lo..p` in lexicographic order.
fn for_each_support<F: FnMut(&[usize])>(p: usize, k: usize, lo: usize, mut f: F) {
    let mut idx: Vec<usize> = (lo..lo + k).collect();
    if idx.last().map(|&l| l >= p).unwrap_or(true) {
        return;
    }
    loop {
        f(&idx);
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + p - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact l0-constrained maximizer with the default enumeration budget.
pub fn l0_exact(s: &SymMatrix, r0: usize) -> Result<EstimateResult> {
    l0_exact_with_budget(s, r0, DEFAULT_ENUMERATION_BUDGET)
}

/// Exact l0-constrained maximizer of `b' S b`: for every support of size R0,
/// the top eigenvalue of the principal submatrix; the best support wins, ties
/// broken toward the lexicographically smallest support.
pub fn l0_exact_with_budget(s: &SymMatrix, r0: usize, budget: u128) -> Result<EstimateResult> {
    let p = s.dim();
    if r0 == 0 || r0 > p {
        return Err(Error::InvalidArgument(format!("R0 = {r0} outside [1, {p}]")));
    }
    let required = binomial(p, r0);
    if required > budget {
        return Err(Error::EnumerationBudget { required, budget });
    }
    let a = s.as_array();
    let flat = a.as_slice();

    // Scan blocks by leading index in parallel; each block is a sequential
    // lexicographic scan so the (objective, support) winner is deterministic
    // under any thread count. A Gershgorin bound on each principal submatrix
    // prunes supports that cannot beat the current best before paying for an
    // eigensolve; equal-objective ties keep the earlier (lex smaller)
    // support, with or without pruning.
    let block_best: Vec<(f64, Vec<usize>)> = (0..=p - r0)
        .into_par_iter()
        .map(|first| {
            let mut scratch = vec![0.0f64; r0 * r0];
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut visit = |idx: &[usize]| {
                match flat {
                    Some(flat) => {
                        for (r, &ir) in idx.iter().enumerate() {
                            let row = ir * p;
                            for (c, &ic) in idx.iter().enumerate().skip(r) {
                                let v = flat[row + ic];
                                scratch[r * r0 + c] = v;
                                scratch[c * r0 + r] = v;
                            }
                        }
                    }
                    None => {
                        for (r, &ir) in idx.iter().enumerate() {
                            for (c, &ic) in idx.iter().enumerate().skip(r) {
                                let v = a[(ir, ic)];
                                scratch[r * r0 + c] = v;
                                scratch[c * r0 + r] = v;
                            }
                        }
                    }
                }
                let mut gersh = f64::NEG_INFINITY;
                for r in 0..r0 {
                    let mut bound = scratch[r * r0 + r];
                    for c in 0..r0 {
                        if c != r {
                            bound += scratch[r * r0 + c].abs();
                        }
                    }
                    if bound > gersh {
                        gersh = bound;
                    }
                }
                if gersh <= best.0 {
                    return;
                }
                let lam = lambda_max_scratch(&mut scratch, r0).expect("small Jacobi converges");
                if lam > best.0 {
                    best = (lam, idx.to_vec());
                }
            };
            if r0 == 1 {
                visit(&[first]);
            } else {
                let mut idx = vec![0usize; r0];
                idx[0] = first;
                // enumerate the remaining r0-1 indices above `first`
                for_each_support(p, r0 - 1, first + 1, |tail| {
                    idx[1..].copy_from_slice(tail);
                    visit(&idx);
                });
            }
            best
        })
        .collect();

    let (best_lam, best_support) = block_best
        .into_iter()
        .filter(|(l, _)| l.is_finite())
        .reduce(|x, y| if y.0 > x.0 { y } else { x })
        .ok_or_else(|| Error::InvalidArgument("empty enumeration".into()))?;

    // top eigenvector of the winning principal submatrix
    let mut sub = ndarray::Array2::zeros((r0, r0));
    for (r, &ir) in best_support.iter().enumerate() {
        for (c, &ic) in best_support.iter().enumerate() {
            sub[(r, c)] = a[(ir, ic)];
        }
    }
    let eig = sym_eig(&SymMatrix::new(sub)?)?;
    let mut coords = Array1::zeros(p);
    for (r, &ir) in best_support.iter().enumerate() {
        coords[ir] = eig.eigenvectors[(r, 0)];
    }
    let theta_hat = UnitVector::normalized(coords)?.sign_canonical();
    Ok(EstimateResult {
        theta_hat,
        objective: best_lam,
        iterations: 0,
        converged: true,
        support: Some(best_support),
        degenerate: false,
    })
}

/// Nonnegative shift making `S + shift I` PSD by Gershgorin, so projected
/// power ascent is monotone even on indefinite inputs.
fn psd_shift(s: &SymMatrix) -> f64 {
    let p = s.dim();
    let mut low = f64::INFINITY;
    for i in 0..p {
        let mut radius = 0.0;
        for j in 0..p {
            if j != i {
                radius += s[(i, j)].abs();
            }
        }
        low = low.min(s[(i, i)] - radius);
    }
    (-low).max(0.0)
}

/// One projected power-ascent run from a given start.
///
/// `project` must return the exact maximizer of `<y, v>` over the feasible
/// set (then ascent is monotone for PSD matrices); a defensive check stops
/// the iteration if the objective ever decreases past roundoff.
fn ascend<P>(
    s: &SymMatrix,
    shift: f64,
    start: UnitVector,
    max_iter: usize,
    tol: f64,
    mut project: P,
) -> Result<(UnitVector, f64, usize, bool)>
where
    P: FnMut(&Array1<f64>) -> Result<Array1<f64>>,
{
    let mut b = start;
    let mut obj = s.quad_form(b.coords());
    let mut converged = false;
    let mut iters = 0;
    for _ in 0..max_iter {
        iters += 1;
        let mut y = s.matvec(b.coords());
        if shift > 0.0 {
            y += &(b.coords() * shift);
        }
        let next = UnitVector::new(project(&y)?)?;
        let next_obj = s.quad_form(next.coords());
        if next_obj < obj - 1e-12 * (obj.abs() + 1.0) {
            // roundoff guard; the exact linear maximizer cannot descend
            converged = true;
            break;
        }
        let step = crate::linalg::projection_loss(&next, &b)?;
        b = next;
        obj = next_obj;
        if step < tol {
            converged = true;
            break;
        }
    }
    Ok((b, obj, iters, converged))
}

/// Exact maximizer of `<y, v>` over unit vectors with at most r0 nonzeros:
/// keep the r0 largest |entries|, normalize. Ties break toward lower index.
fn truncate_project(y: &Array1<f64>, r0: usize) -> Result<Array1<f64>> {
    let p = y.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        y[j].abs().partial_cmp(&y[i].abs()).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    let mut v = Array1::zeros(p);
    let mut norm_sq = 0.0;
    for &i in order.iter().take(r0) {
        v[i] = y[i];
        norm_sq += y[i] * y[i];
    }
    if norm_sq == 0.0 {
        return Err(Error::DegenerateInput("power step produced the zero vector".into()));
    }
    Ok(v / norm_sq.sqrt())
}

/// Maximizer of `<y, v>` over the sphere intersected with the lq ball of
/// radius rho, via soft-threshold-then-normalize with the threshold found by
/// bisection on the lq norm of the normalized vector. Exact for q = 1; an
/// approximate metric projection for q in (0,1).
fn soft_threshold_project(y: &Array1<f64>, q: f64, rho: f64) -> Result<Array1<f64>> {
    let norm = y.dot(y).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("cannot project the zero vector".into()));
    }
    let plain = y / norm;
    if lq_norm(plain.as_slice().unwrap(), q) <= rho {
        return Ok(plain);
    }
    let soft_norm = |tau: f64| -> (Array1<f64>, f64) {
        let v = y.mapv(|x| x.signum() * (x.abs() - tau).max(0.0));
        let n = v.dot(&v).sqrt();
        if n == 0.0 {
            (v, f64::INFINITY)
        } else {
            let u = v / n;
            let l = lq_norm(u.as_slice().unwrap(), q);
            (u, l)
        }
    };
    let max_abs = y.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut lo = 0.0;
    let mut hi = max_abs;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (_, l) = soft_norm(mid);
        if l > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (u, l) = soft_norm(hi);
    if l.is_finite() && l <= rho + 1e-9 {
        return Ok(u);
    }
    // All entries tied at the maximum; fall back to the best basis vector,
    // always feasible for rho >= 1.
    let arg = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut v = Array1::zeros(y.len());
    v[arg] = y[arg].signum();
    Ok(v)
}

/// Initial vectors for a multi-restart run: the configured init, then the
/// top eigenvector of S (the ascent projects it onto the feasible set), then
/// seeded random vectors supported on k random coordinates. Sparse random
/// starts explore distinct support basins far better than dense ones.
fn restart_inits(
    s: &SymMatrix,
    k_support: usize,
    cfg: &EstimatorConfig,
) -> Result<Vec<UnitVector>> {
    let p = s.dim();
    let k = k_support.clamp(1, p);
    let first = match &cfg.init {
        Init::DiagThresh => {
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&i, &j| {
                s[(j, j)].partial_cmp(&s[(i, i)]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
            });
            let mut v = Array1::zeros(p);
            let w = 1.0 / (k as f64).sqrt();
            for &i in order.iter().take(k) {
                v[i] = w;
            }
            UnitVector::normalized(v)?
        }
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 0));
            random_sparse_unit(p, k, &mut rng)?
        }
        Init::Warm(w) => {
            if w.len() != p {
                return Err(Error::DimMismatch(format!("warm start dim {} != p {p}", w.len())));
            }
            UnitVector::normalized(Array1::from(w.clone()))?
        }
    };
    let mut inits = vec![first];
    if cfg.restarts >= 2 {
        inits.push(top_direction(s));
    }
    for r in 2..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, r as u64));
        inits.push(random_sparse_unit(p, k, &mut rng)?);
    }
    Ok(inits)
}

/// Cheap approximation of the top eigenvector by shifted power iteration;
/// only used as a restart seed, so moderate accuracy is fine.
fn top_direction(s: &SymMatrix) -> UnitVector {
    let p = s.dim();
    let shift = psd_shift(s);
    let mut b = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    for _ in 0..120 {
        let mut y = s.matvec(&b);
        if shift > 0.0 {
            y += &(&b * shift);
        }
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let next = y / norm;
        let delta: f64 = (&next - &b).iter().map(|x| x * x).sum();
        b = next;
        if delta < 1e-20 {
            break;
        }
    }
    UnitVector::normalized(b).unwrap_or_else(|_| UnitVector::basis(p, 0))
}

/// Random unit vector supported on k uniformly chosen coordinates.
fn random_sparse_unit(p: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<UnitVector> {
    for _ in 0..16 {
        let mut idx: Vec<usize> = (0..p).collect();
        for i in 0..k {
            let j = i + (rng.random::<u64>() as usize) % (p - i);
            idx.swap(i, j);
        }
        let mut v = Array1::zeros(p);
        for &i in &idx[..k] {
            v[i] = rng.sample::<f64, _>(StandardNormal);
        }
        if let Ok(u) = UnitVector::normalized(v) {
            return Ok(u);
        }
    }
    Err(Error::DegenerateInput("could not draw a random unit vector".into()))
}

fn support_of(v: &UnitVector) -> Vec<usize> {
    v.coords()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Merges restart results: max objective first, then lexicographically
/// smallest support.
fn merge_best(results: Vec<EstimateResult>) -> Result<EstimateResult> {
    results
        .into_iter()
        .reduce(|best, cand| {
            if cand.objective > best.objective
                || (cand.objective == best.objective && cand.support < best.support)
            {
                cand
            } else {
                best
            }
        })
        .ok_or_else(|| Error::InvalidArgument("no restarts configured".into()))
}

/// Truncated power iteration: `b <- normalize(truncate_top_R0(S b))` with
/// restarts. Feasible at every step, monotone in the objective.
pub fn l0_truncated_power(s: &SymMatrix, r0: usize, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let p = s.dim();
    if r0 == 0 || r0 > p {
        return Err(Error::InvalidArgument(format!("R0 = {r0} outside [1, {p}]")));
    }
    let shift = psd_shift(s);
    let runs = restart_inits(s, r0, cfg)?
        .into_iter()
        .map(|init| {
            // start from a feasible point so monotone ascent holds throughout
            let start = UnitVector::new(truncate_project(init.coords(), r0)?)?;
            let (b, obj, iterations, converged) =
                ascend(s, shift, start, cfg.max_iter, cfg.tol, |y| truncate_project(y, r0))?;
            let theta_hat = b.sign_canonical();
            let support = Some(support_of(&theta_hat));
            Ok(EstimateResult { theta_hat, objective: obj, iterations, converged, support, degenerate: false })
        })
        .collect::<Result<Vec<_>>>()?;
    merge_best(runs)
}

/// Projected power ascent for q in (0, 1]: soft-threshold-and-normalize
/// steps with the threshold chosen by bisection, multiple restarts, best
/// objective wins.
pub fn lq_projected(s: &SymMatrix, q: f64, rho: f64, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0,1], got {q}")));
    }
    if rho < 1.0 {
        return Err(Error::InvalidArgument(format!("rho must be >= 1, got {rho}")));
    }
    let shift = psd_shift(s);
    let k_init = rho.ceil() as usize;
    let runs = restart_inits(s, k_init, cfg)?
        .into_iter()
        .map(|init| {
            let start = UnitVector::new(soft_threshold_project(init.coords(), q, rho)?)?;
            let (b, obj, iterations, converged) =
                ascend(s, shift, start, cfg.max_iter, cfg.tol, |y| soft_threshold_project(y, q, rho))?;
            let theta_hat = b.sign_canonical();
            // feasibility is enforced by the projection; double-check here
            let norm = lq_norm(theta_hat.coords().as_slice().unwrap(), q);
            if norm > rho + 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "projection returned infeasible iterate (lq = {norm:.12}, rho = {rho})"
                )));
            }
            Ok(EstimateResult { theta_hat, objective: obj, iterations, converged, support: None, degenerate: false })
        })
        .collect::<Result<Vec<_>>>()?;
    merge_best(runs)
}
