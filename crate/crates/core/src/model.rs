//! Spiked population covariances, lq sparsity classes, and sub-Gaussian
//! sampling.
//!
//! The population model is `Sigma = lambda1 t1 t1' + lambda2 Sigma0` with
//! `Sigma0 t1 = 0` and `||Sigma0||_2 = 1`; the canonical bulk choice is
//! `I - t1 t1'`. Data rows are `X_i = mu + Sigma^{1/2} Z_i` with isotropic
//! sub-Gaussian `Z_i`.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix, UnitVector};

/// Sub-Gaussian constant for one-dimensional projections of a standard
/// Gaussian vector: K^2 = 8/3.
pub const GAUSSIAN_K_SQ: f64 = 8.0 / 3.0;

/// Bulk covariance choice for the spiked model.
#[derive(Debug, Clone)]
pub enum Sigma0 {
    /// `I - t1 t1'`: eigenvalue lambda2 on the whole orthogonal complement.
    Canonical,
    /// Explicit PSD matrix with `Sigma0 t1 = 0` and unit spectral norm.
    Explicit(SymMatrix),
}

/// Spiked covariance model: dimension, eigenvalues, spike direction, bulk.
#[derive(Debug, Clone)]
pub struct SpikedModel {
    pub p: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta1: UnitVector,
    pub sigma0: Sigma0,
}

/// Constructs a spiked model, validating the bulk when it is explicit.
pub fn make_spiked(
    p: usize,
    lambda1: f64,
    lambda2: f64,
    theta1: UnitVector,
    sigma0: Sigma0,
) -> Result<SpikedModel> {
    if p == 0 || theta1.dim() != p {
        return Err(Error::DimMismatch(format!("p = {p}, theta1 dim = {}", theta1.dim())));
    }
    if !(lambda1 > lambda2 && lambda2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need lambda1 > lambda2 >= 0, got ({lambda1}, {lambda2})"
        )));
    }
    if let Sigma0::Explicit(ref s0) = sigma0 {
        if s0.dim() != p {
            return Err(Error::DimMismatch(format!("sigma0 dim {} != p {p}", s0.dim())));
        }
        let s0t = s0.matvec(theta1.coords());
        let res = s0t.dot(&s0t).sqrt();
        if res > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "sigma0 * theta1 must vanish (||sigma0 theta1|| = {res:.3e})"
            )));
        }
        let eig = sym_eig(s0)?;
        let lmin = eig.eigenvalues[p - 1];
        if lmin < -1e-10 {
            return Err(Error::InvalidArgument(format!("sigma0 not PSD (lambda_min = {lmin:.3e})")));
        }
        let lmax = eig.eigenvalues[0];
        if (lmax - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "sigma0 spectral norm must be 1 (got {lmax:.12})"
            )));
        }
    }
    Ok(SpikedModel { p, lambda1, lambda2, theta1, sigma0 })
}

impl SpikedModel {
    /// The realized covariance `lambda1 t1 t1' + lambda2 Sigma0`.
    pub fn covariance(&self) -> SymMatrix {
        let t = self.theta1.coords();
        let mut a = match &self.sigma0 {
            Sigma0::Canonical => {
                let mut a = Array2::eye(self.p) * self.lambda2;
                for i in 0..self.p {
                    for j in 0..self.p {
                        a[(i, j)] += (self.lambda1 - self.lambda2) * t[i] * t[j];
                    }
                }
                a
            }
            Sigma0::Explicit(s0) => {
                let mut a = s0.as_array() * self.lambda2;
                for i in 0..self.p {
                    for j in 0..self.p {
                        a[(i, j)] += self.lambda1 * t[i] * t[j];
                    }
                }
                a
            }
        };
        // exact symmetry survives the construction, but normalize anyway
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix::new(a).expect("square by construction")
    }

    /// Symmetric square root of the covariance via eigendecomposition, so
    /// rank-deficient models (lambda2 = 0) sample correctly.
    pub fn covariance_root(&self) -> Result<Array2<f64>> {
        let eig = sym_eig(&self.covariance())?;
        let sqrt = eig.eigenvalues.mapv(|l| l.max(0.0).sqrt());
        let scaled = &eig.eigenvectors * &sqrt; // scales columns
        Ok(scaled.dot(&eig.eigenvectors.t()))
    }

    /// Noise scales derived from the eigenvalue pair.
    pub fn noise_scales(&self) -> Result<NoiseScales> {
        NoiseScales::from_eigenvalues(self.lambda1, self.lambda2)
    }
}

/// Effective noise-to-signal scales of the spiked pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    /// `lambda1 lambda2 / (lambda1 - lambda2)^2`
    pub sigma2: f64,
    /// `lambda1 / (lambda1 - lambda2)`
    pub sigma_tilde: f64,
}

impl NoiseScales {
    pub fn from_eigenvalues(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > lambda2 && lambda2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lambda1 > lambda2 >= 0, got ({lambda1}, {lambda2})"
            )));
        }
        let gap = lambda1 - lambda2;
        Ok(Self { sigma2: lambda1 * lambda2 / (gap * gap), sigma_tilde: lambda1 / gap })
    }
}

/// The lq-ball parameter class `(q, R_q, alpha, kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityClass {
    pub q: f64,
    pub rq: f64,
    pub alpha: f64,
    pub kappa: f64,
}

impl SparsityClass {
    pub fn new(q: f64, rq: f64, alpha: f64, kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("q must lie in [0,1], got {q}")));
        }
        if rq < 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!("need Rq >= 1 + 1e-12, got {rq}")));
        }
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0,1], got {alpha}")));
        }
        if kappa <= 0.0 {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { q, rq, alpha, kappa })
    }

    /// The reduced radius `R_q - 1`.
    pub fn rq_bar(&self) -> f64 {
        self.rq - 1.0
    }
}

/// lq "norm": nonzero count for q = 0 (|v_j| > 1e-12), else `sum |v_j|^q`.
pub fn lq_norm(v: &[f64], q: f64) -> f64 {
    if q == 0.0 {
        v.iter().filter(|x| x.abs() > 1e-12).count() as f64
    } else {
        v.iter().map(|x| x.abs().powf(q)).sum()
    }
}

/// Deterministic sparse target patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Pattern {
    /// `k` equal-weight leading coordinates; `k` defaults to the largest
    /// count that keeps the vector inside the ball.
    FirstKEqual { k: Option<usize> },
    /// Coordinates proportional to `rate^j`. For q = 0 the support is
    /// truncated to fit the ball; for q > 0 the full-support vector must fit.
    GeometricDecay { rate: f64 },
}

/// A sparse unit vector together with its reported lq norm.
#[derive(Debug, Clone)]
pub struct SparseVector {
    pub vector: UnitVector,
    pub lq_norm: f64,
}

/// Builds a unit vector inside `B_q^p(Rq)` following `pattern`.
pub fn sparse_unit_vector(p: usize, q: f64, rq: f64, pattern: Pattern) -> Result<SparseVector> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q must lie in [0,1], got {q}")));
    }
    if rq < 1.0 {
        return Err(Error::InfeasiblePattern(format!(
            "ball radius {rq} < 1 contains no unit vector"
        )));
    }
    // Largest equal-weight support that fits: k^(1 - q/2) <= Rq.
    let max_equal_k = if q == 0.0 {
        (rq.floor() as usize).clamp(1, p)
    } else {
        (rq.powf(2.0 / (2.0 - q)).floor() as usize).clamp(1, p)
    };
    let coords = match pattern {
        Pattern::FirstKEqual { k } => {
            let k = k.unwrap_or(max_equal_k);
            if k == 0 || k > p {
                return Err(Error::InfeasiblePattern(format!("k = {k} outside [1, {p}]")));
            }
            let mut v = Array1::zeros(p);
            let w = 1.0 / (k as f64).sqrt();
            for i in 0..k {
                v[i] = w;
            }
            v
        }
        Pattern::GeometricDecay { rate } => {
            if !(0.0 < rate && rate < 1.0) {
                return Err(Error::InvalidArgument(format!("decay rate must lie in (0,1), got {rate}")));
            }
            let support = if q == 0.0 { (rq.floor() as usize).clamp(1, p) } else { p };
            let mut v = Array1::zeros(p);
            for i in 0..support {
                v[i] = rate.powi(i as i32);
            }
            let norm = v.dot(&v).sqrt();
            v / norm
        }
    };
    let vector = UnitVector::normalized(coords)?;
    let norm = lq_norm(vector.coords().as_slice().unwrap(), q);
    if norm > rq + 1e-9 {
        return Err(Error::InfeasiblePattern(format!(
            "pattern yields lq norm {norm:.6} > Rq = {rq}"
        )));
    }
    Ok(SparseVector { vector, lq_norm: norm })
}

/// Sub-Gaussian row distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Gaussian,
    Rademacher,
}

/// Sampler specification: distribution family, sub-Gaussian constant, seed,
/// optional mean shift.
#[derive(Debug, Clone)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    /// Uniform psi_2 bound on one-dimensional projections of Z. The
    /// Rademacher family reports the Gaussian constant as a conservative
    /// stand-in.
    pub k_sub_gaussian: f64,
    pub seed: u64,
    pub mu: Option<Array1<f64>>,
}

impl SamplerSpec {
    pub fn gaussian(seed: u64) -> Self {
        Self { kind: SamplerKind::Gaussian, k_sub_gaussian: GAUSSIAN_K_SQ.sqrt(), seed, mu: None }
    }

    pub fn rademacher(seed: u64) -> Self {
        Self { kind: SamplerKind::Rademacher, k_sub_gaussian: GAUSSIAN_K_SQ.sqrt(), seed, mu: None }
    }

    pub fn with_mu(mut self, mu: Array1<f64>) -> Self {
        self.mu = Some(mu);
        self
    }
}

/// Draws an `n x p` matrix of i.i.d. rows with population covariance
/// `model.covariance()`.
pub fn sample_data(model: &SpikedModel, n: usize, sampler: &SamplerSpec) -> Result<Array2<f64>> {
    let root = model.covariance_root()?;
    sample_data_with_root(&root, n, sampler)
}

/// Same as [`sample_data`] but reusing a precomputed covariance square root;
/// the harness shares one root across all replicates of a grid point.
pub fn sample_data_with_root(
    root: &Array2<f64>,
    n: usize,
    sampler: &SamplerSpec,
) -> Result<Array2<f64>> {
    let p = root.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    if let Some(mu) = &sampler.mu {
        if mu.len() != p {
            return Err(Error::DimMismatch(format!("mu dim {} != p {p}", mu.len())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let z = match sampler.kind {
        SamplerKind::Gaussian => {
            Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
        }
        SamplerKind::Rademacher => {
            Array2::from_shape_fn((n, p), |_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
    };
    let mut x = z.dot(root);
    if let Some(mu) = &sampler.mu {
        for mut row in x.rows_mut() {
            row += mu;
        }
    }
    Ok(x)
}

/// Sample covariance `S = (1/n) sum X_i X_i' - Xbar Xbar'` (biased, 1/n,
/// mean-subtracted).
pub fn sample_covariance(data: &Array2<f64>) -> Result<SymMatrix> {
    let (n, p) = data.dim();
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and p >= 1, got {n} x {p}")));
    }
    let nf = n as f64;
    let xbar = data.mean_axis(ndarray::Axis(0)).expect("n >= 1");
    let mut s = data.t().dot(data) / nf;
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] -= xbar[i] * xbar[j];
        }
    }
    SymMatrix::new(s)
}

/// Serializable model block: everything needed to rebuild a spiked model and
/// its sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta1_pattern: Pattern,
    pub q: f64,
    pub rq: f64,
    pub sampler: SamplerKind,
    pub seed: u64,
}

impl ModelSpec {
    /// Builds the spiked model (canonical bulk) and sampler this spec names.
    pub fn materialize(&self) -> Result<(SpikedModel, SamplerSpec)> {
        let target = sparse_unit_vector(self.p, self.q, self.rq, self.theta1_pattern)?;
        let model = make_spiked(self.p, self.lambda1, self.lambda2, target.vector, Sigma0::Canonical)?;
        let sampler = match self.sampler {
            SamplerKind::Gaussian => SamplerSpec::gaussian(self.seed),
            SamplerKind::Rademacher => SamplerSpec::rademacher(self.seed),
        };
        Ok((model, sampler))
    }
}
