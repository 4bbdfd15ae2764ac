//! Dense symmetric linear algebra and the projection-distance loss geometry.
//!
//! Everything here is pure: matrices and vectors are immutable inputs, results
//! are freshly allocated. The eigensolver is a cyclic Jacobi sweep, which is
//! plenty at desk scale (p <= 2048) and gives orthonormal eigenvectors for
//! free.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`sym_eig`].
pub const MAX_EIG_DIM: usize = 2048;

/// Off-diagonal Frobenius mass below `JACOBI_TOL_REL * ||m||_F` counts as
/// converged.
const JACOBI_TOL_REL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 64;

/// Relative spectral gap below which the top eigenvector is flagged
/// non-unique.
pub const DEGENERATE_GAP_REL: f64 = 1e-10;

/// A real symmetric matrix, stored exactly symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square array, averaging `a` with its
    /// transpose so that `m[i][j] == m[j][i]` holds exactly.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimMismatch(format!("expected square matrix, got {r}x{c}")));
        }
        if r == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        let mut data = a;
        for i in 0..r {
            for j in (i + 1)..r {
                let v = 0.5 * (data[(i, j)] + data[(j, i)]);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Ok(Self { data })
    }

    /// Identity matrix of dimension `p`.
    pub fn identity(p: usize) -> Self {
        Self { data: Array2::eye(p) }
    }

    /// Diagonal matrix from the given entries.
    pub fn diagonal(entries: &[f64]) -> Self {
        Self { data: Array2::from_diag(&Array1::from(entries.to_vec())) }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Quadratic form `b' M b`.
    pub fn quad_form(&self, b: &Array1<f64>) -> f64 {
        self.data.dot(b).dot(b)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, b: &Array1<f64>) -> Array1<f64> {
        self.data.dot(b)
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.data[idx]
    }
}

/// A vector on the unit sphere (`| ||v|| - 1 | <= 1e-12`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    coords: Array1<f64>,
}

impl UnitVector {
    /// Accepts coordinates already on the unit sphere.
    pub fn new(coords: Array1<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("unit vector dimension must be >= 1".into()));
        }
        let norm = coords.dot(&coords).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "not a unit vector: ||v|| = {norm:.17}"
            )));
        }
        Ok(Self { coords })
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn normalized(coords: Array1<f64>) -> Result<Self> {
        let norm = coords.dot(&coords).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateInput("cannot normalize zero or non-finite vector".into()));
        }
        Ok(Self { coords: coords / norm })
    }

    /// Standard basis vector `e_i`.
    pub fn basis(p: usize, i: usize) -> Self {
        let mut coords = Array1::zeros(p);
        coords[i] = 1.0;
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &Array1<f64> {
        &self.coords
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.coords.dot(&other.coords)
    }

    /// Flips the sign of every coordinate.
    pub fn negated(&self) -> Self {
        Self { coords: self.coords.mapv(|x| -x) }
    }

    /// Flips signs so the first nonzero coordinate is nonnegative.
    pub fn sign_canonical(self) -> Self {
        match self.coords.iter().find(|&&x| x != 0.0) {
            Some(&x) if x < 0.0 => self.negated(),
            _ => self,
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues sorted in descending order.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors as columns, ordered to match `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

impl SymEig {
    /// Top eigenvector as a unit vector.
    pub fn top_eigenvector(&self) -> Result<UnitVector> {
        UnitVector::normalized(self.eigenvectors.column(0).to_owned())
    }

    /// Whether the top eigenvalue is separated from the second by more than
    /// the degeneracy threshold. A false value means "any vector in the top
    /// eigenspace" rather than a specific direction.
    pub fn top_is_unique(&self) -> bool {
        if self.eigenvalues.len() < 2 {
            return true;
        }
        let l1 = self.eigenvalues[0];
        let l2 = self.eigenvalues[1];
        l1 - l2 >= DEGENERATE_GAP_REL * l1.abs().max(1e-300)
    }

    /// Largest |eigenvalue| (the spectral norm).
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()))
    }
}

/// Cyclic Jacobi eigendecomposition. Converges when the off-diagonal
/// Frobenius mass drops below `1e-12 * ||m||_F`.
pub fn sym_eig(m: &SymMatrix) -> Result<SymEig> {
    let n = m.dim();
    if n > MAX_EIG_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimension {n} exceeds eigensolver limit {MAX_EIG_DIM}"
        )));
    }
    let mut a: Vec<f64> = m.as_array().iter().copied().collect();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    jacobi_rotate_all(&mut a, Some(&mut v), n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[(row, new_col)] = v[row * n + old_col];
        }
    }
    Ok(SymEig { eigenvalues, eigenvectors })
}

/// Jacobi sweeps on a row-major `n x n` buffer, optionally accumulating the
/// rotations into `v`. On success the diagonal of `a` holds the (unsorted)
/// eigenvalues.
fn jacobi_rotate_all(a: &mut [f64], mut v: Option<&mut [f64]>, n: usize) -> Result<()> {
    if n == 1 {
        return Ok(());
    }
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Ok(());
    }
    let tol = JACOBI_TOL_REL * fro;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off_sq = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_sq += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        if off_sq.sqrt() < tol {
            return Ok(());
        }
        // Rotating every pair whose entry still carries a meaningful share of
        // the remaining off-diagonal mass keeps sweeps effective without
        // grinding on entries that are already numerically zero.
        let skip = off_sq.sqrt() / (n as f64 * n as f64) * 1e-3;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip.min(tol * 0.1) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        a[k * n + p] = np;
                        a[p * n + k] = np;
                        a[k * n + q] = nq;
                        a[q * n + k] = nq;
                    }
                }
                if let Some(v) = v.as_deref_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut off_sq = 0.0f64;
    for p in 0..n - 1 {
        for q in p + 1..n {
            off_sq += 2.0 * a[p * n + q] * a[p * n + q];
        }
    }
    Err(Error::EigNonConvergence { residual: off_sq.sqrt(), sweeps: MAX_JACOBI_SWEEPS })
}

/// Cutoff below which the stack-allocated Jacobi kernel is used.
pub(crate) const SMALL_EIG_DIM: usize = 8;

/// Diagonalizes a small (n <= 8) symmetric matrix in place with a tight
/// cyclic Jacobi loop on the stack; returns nothing, eigenvalues end up on
/// the diagonal. This is the kernel of the support-enumeration loops, where
/// it runs hundreds of millions of times.
#[inline]
fn jacobi_small(a: &mut [f64], n: usize) {
    debug_assert!(n <= SMALL_EIG_DIM);
    let mut scale = 0.0f64;
    for i in 0..n * n {
        let v = a[i].abs();
        if v > scale {
            scale = v;
        }
    }
    if scale == 0.0 {
        return;
    }
    let eps = scale * 1e-14;
    for _sweep in 0..24 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= eps {
                    continue;
                }
                rotated = true;
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        a[k * n + p] = np;
                        a[p * n + k] = np;
                        a[k * n + q] = nq;
                        a[q * n + k] = nq;
                    }
                }
            }
        }
        if !rotated {
            return;
        }
    }
}

/// Eigenvalues (unsorted) of a small symmetric matrix held in a row-major
/// scratch buffer. Used in the hot enumeration loops where allocating an
/// `Array2` per support would dominate.
pub(crate) fn eigvals_scratch(a: &mut [f64], n: usize) -> Result<()> {
    if n <= SMALL_EIG_DIM {
        jacobi_small(a, n);
        Ok(())
    } else {
        jacobi_rotate_all(a, None, n)
    }
}

/// Largest eigenvalue of a small symmetric matrix in a scratch buffer.
pub(crate) fn lambda_max_scratch(a: &mut [f64], n: usize) -> Result<f64> {
    if n <= SMALL_EIG_DIM {
        jacobi_small(a, n);
    } else {
        jacobi_rotate_all(a, None, n)?;
    }
    let mut best = a[0];
    for i in 1..n {
        best = best.max(a[i * n + i]);
    }
    Ok(best)
}

/// `||u u' - v v'||_F = sqrt(2 (1 - <u,v>^2))`, the sign-invariant projection
/// distance, in [0, sqrt(2)].
pub fn projection_loss(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch(format!("{} vs {}", u.dim(), v.dim())));
    }
    let c = u.dot(v);
    // Clamp: roundoff can push 1 - c^2 fractionally negative.
    let g = (1.0 - c * c).clamp(0.0, 1.0);
    Ok((2.0 * g).sqrt())
}

/// Sine of the principal angle: `sqrt(1 - <u,v>^2) = projection_loss / sqrt(2)`.
pub fn sin_theta(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch(format!("{} vs {}", u.dim(), v.dim())));
    }
    let c = u.dot(v);
    Ok((1.0 - c * c).clamp(0.0, 1.0).sqrt())
}

/// Curvature slack `<Sigma, t1 t1' - t t'> - (lambda1 - lambda2)/2 * ||t t' - t1 t1'||_F^2`.
///
/// Nonnegative (up to -1e-10 roundoff) whenever `theta1` really is the top
/// eigenvector of `sigma` with eigenvalue `lambda1` and `lambda2` is the
/// second eigenvalue.
pub fn curvature_gap(
    sigma: &SymMatrix,
    theta1: &UnitVector,
    lambda1: f64,
    lambda2: f64,
    theta: &UnitVector,
) -> Result<f64> {
    let p = sigma.dim();
    if theta1.dim() != p || theta.dim() != p {
        return Err(Error::DimMismatch(format!(
            "matrix dim {p}, theta1 dim {}, theta dim {}",
            theta1.dim(),
            theta.dim()
        )));
    }
    let st1 = sigma.matvec(theta1.coords());
    let residual = {
        let mut r = 0.0;
        for i in 0..p {
            let d = st1[i] - lambda1 * theta1.coords()[i];
            r += d * d;
        }
        r.sqrt()
    };
    if residual > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "theta1 is not an eigenvector of sigma for lambda1 (residual {residual:.3e})"
        )));
    }
    let q1 = theta1.coords().dot(&st1);
    let q = sigma.quad_form(theta.coords());
    let loss_sq = {
        let c = theta1.dot(theta);
        2.0 * (1.0 - c * c).clamp(0.0, 1.0)
    };
    Ok(q1 - q - 0.5 * (lambda1 - lambda2) * loss_sq)
}
