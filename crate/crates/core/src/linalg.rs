//! Small dense symmetric linear algebra.
//!
//! Everything here targets low dimensions (d ≤ 64): dense storage, cyclic
//! Jacobi eigendecomposition, and an exact solver for the ball-constrained
//! quadratic minimization both learning policies rely on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues below `-PSD_TOL` count as genuine negative curvature;
/// anything above is treated as rank-one-update dust.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("matrix data length {len} does not match dim {dim}")]
    BadShape { dim: usize, len: usize },
    #[error("dimension must be at least 1")]
    EmptyDim,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(
        "ball minimizer did not converge after {max_iter} iterations (norm residual {residual:e})"
    )]
    NoConvergence {
        max_iter: usize,
        residual: f64,
        best: Vec<f64>,
    },
}

/// Dense symmetric matrix, row-major storage, symmetrized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymMatrixRaw", into = "SymMatrixRaw")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SymMatrixRaw {
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<SymMatrixRaw> for SymMatrix {
    type Error = LinalgError;

    fn try_from(raw: SymMatrixRaw) -> Result<Self, Self::Error> {
        SymMatrix::from_raw(raw.dim, raw.entries)
    }
}

impl From<SymMatrix> for SymMatrixRaw {
    fn from(m: SymMatrix) -> Self {
        SymMatrixRaw {
            dim: m.dim,
            entries: m.data,
        }
    }
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, v: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = v;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = v;
        }
        m
    }

    /// Builds from row-major data, symmetrizing as `(A + Aᵀ)/2`.
    pub fn from_raw(dim: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::EmptyDim);
        }
        if data.len() != dim * dim {
            return Err(LinalgError::BadShape {
                dim,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { context: "matrix" });
        }
        let mut m = SymMatrix { dim, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::BadShape {
                    dim,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_raw(dim, data)
    }

    fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let v = 0.5 * (self.data[i * self.dim + j] + self.data[j * self.dim + i]);
                self.data[i * self.dim + j] = v;
                self.data[j * self.dim + i] = v;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i,j)` and `(j,i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += w · v vᵀ`, computed once per unordered pair so symmetry is exact.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                let upd = w * v[i] * v[j];
                self.data[i * self.dim + j] += upd;
                if j != i {
                    self.data[j * self.dim + i] = self.data[i * self.dim + j];
                }
            }
        }
    }

    /// `self += w · other`.
    pub fn add_scaled(&mut self, other: &SymMatrix, w: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += w * b;
        }
    }

    pub fn add_scaled_identity(&mut self, w: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += w;
        }
    }

    pub fn scaled(&self, w: f64) -> SymMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= w;
        }
        out
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        self.data.chunks_exact(self.dim).map(|row| dot(row, x)).collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(sym_eigen(self)?.eigenvalues[0])
    }

    /// Operator norm (largest absolute eigenvalue).
    pub fn op_norm(&self) -> Result<f64, LinalgError> {
        let e = sym_eigen(self)?;
        let lo = e.eigenvalues[0].abs();
        let hi = e.eigenvalues[self.dim - 1].abs();
        Ok(lo.max(hi))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `xᵀ A x`.
pub fn quad_form(a: &SymMatrix, x: &[f64]) -> Result<f64, LinalgError> {
    if x.len() != a.dim {
        return Err(LinalgError::DimMismatch {
            expected: a.dim,
            got: x.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..a.dim {
        let row = &a.data[i * a.dim..(i + 1) * a.dim];
        acc += x[i] * dot(row, x);
    }
    Ok(acc)
}

/// Eigendecomposition of a symmetric matrix: `A = Q Λ Qᵀ`.
///
/// Eigenvalues are sorted ascending; `eigenvectors[i]` is the unit column
/// paired with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenDecomp {
    /// Reconstructs `Q Λ Qᵀ` (used by tests to verify the decomposition).
    pub fn reconstruct(&self) -> SymMatrix {
        let dim = self.eigenvalues.len();
        let mut m = SymMatrix::zeros(dim);
        for (lam, q) in self.eigenvalues.iter().zip(self.eigenvectors.iter()) {
            m.add_outer(q, *lam);
        }
        m
    }
}

/// Cyclic Jacobi eigendecomposition. Quadratically convergent and very
/// accurate for the small symmetric matrices used here.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomp, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { context: "eigen" });
    }
    let n = a.dim;
    let mut m = a.data.clone();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }

    let scale: f64 = m
        .iter()
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let idx = |i: usize, j: usize| i * n + j;

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[idx(i, j)] * m[idx(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for qq in (p + 1)..n {
                let apq = m[idx(p, qq)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(qq, qq)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    // Avoid overflow in theta^2; rotation is essentially zero.
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[idx(p, p)] = app - t * apq;
                m[idx(qq, qq)] = aqq + t * apq;
                m[idx(p, qq)] = 0.0;
                m[idx(qq, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != qq {
                        let arp = m[idx(r, p)];
                        let arq = m[idx(r, qq)];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        m[idx(r, p)] = new_rp;
                        m[idx(p, r)] = new_rp;
                        m[idx(r, qq)] = new_rq;
                        m[idx(qq, r)] = new_rq;
                    }
                }
                for r in 0..n {
                    let vrp = q[idx(r, p)];
                    let vrq = q[idx(r, qq)];
                    q[idx(r, p)] = vrp - s * (vrq + tau * vrp);
                    q[idx(r, qq)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[idx(i, i)].partial_cmp(&m[idx(j, j)]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[idx(i, i)]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|r| q[idx(r, col)]).collect())
        .collect();
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Loewner comparison `A ⪯ B`, i.e. `λ_min(B − A) ≥ −tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool, LinalgError> {
    if a.dim != b.dim {
        return Err(LinalgError::DimMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    Ok(b.sub(a).min_eigenvalue()? >= -tol)
}

/// Minimizes `νᵀAν − 2bᵀν` over `‖ν‖ ≤ s` for symmetric (possibly
/// indefinite) `A`.
///
/// Eigendecomposes `A`, then solves the secular equation
/// `‖(A + μI)⁻¹ b‖ = s` for `μ ≥ max(0, −λ_min)` by safeguarded bisection;
/// when `b` is orthogonal to the bottom eigenspace (the hard case) the
/// boundary is reached by adding a bottom-eigenvector component.
pub fn min_quadratic_on_ball(
    a: &SymMatrix,
    b: &[f64],
    s: f64,
    tol: f64,
) -> Result<Vec<f64>, LinalgError> {
    let n = a.dim;
    if b.len() != n {
        return Err(LinalgError::DimMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) || !s.is_finite() {
        return Err(LinalgError::NonFinite { context: "ball minimizer" });
    }
    if s <= 0.0 || tol <= 0.0 {
        return Err(LinalgError::InvalidParam(format!(
            "need s > 0 and tol > 0, got s={s}, tol={tol}"
        )));
    }

    let eig = sym_eigen(a)?;
    let lam = &eig.eigenvalues;
    let lam_min = lam[0];
    // b in the eigenbasis.
    let beta: Vec<f64> = eig.eigenvectors.iter().map(|q| dot(q, b)).collect();
    let from_coeffs = |coef: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (c, qv) in coef.iter().zip(eig.eigenvectors.iter()) {
            for (o, q) in out.iter_mut().zip(qv.iter()) {
                *o += c * q;
            }
        }
        out
    };
    let norm_at = |mu: f64| -> f64 {
        let mut acc = 0.0;
        for (l, bb) in lam.iter().zip(beta.iter()) {
            let denom = l + mu;
            if denom <= 0.0 {
                if bb.abs() > 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            acc += (bb / denom) * (bb / denom);
        }
        acc.sqrt()
    };
    let solution_at = |mu: f64| -> Vec<f64> {
        let coef: Vec<f64> = lam
            .iter()
            .zip(beta.iter())
            .map(|(l, bb)| {
                let denom = l + mu;
                if denom > 0.0 {
                    bb / denom
                } else {
                    0.0
                }
            })
            .collect();
        from_coeffs(&coef)
    };

    let scale = lam[0].abs().max(lam[n - 1].abs()).max(1.0);

    // Positive definite with interior minimizer: done.
    if lam_min > 0.0 && norm_at(0.0) <= s {
        return Ok(solution_at(0.0));
    }

    let mu0 = (-lam_min).max(0.0);

    // Hard case: b has no weight on the bottom eigenspace and the limit
    // solution stays inside the ball.
    let gap_tol = 1e-12 * scale;
    let bottom: Vec<usize> = (0..n).filter(|&i| lam[i] + mu0 <= gap_tol).collect();
    if !bottom.is_empty() {
        let bnorm = norm(b).max(1.0);
        let bottom_weight = bottom
            .iter()
            .map(|&i| beta[i].abs())
            .fold(0.0_f64, f64::max);
        if bottom_weight <= 1e-12 * bnorm {
            let coef: Vec<f64> = (0..n)
                .map(|i| {
                    if lam[i] + mu0 > gap_tol {
                        beta[i] / (lam[i] + mu0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let limit_norm = norm(&coef);
            if limit_norm <= s {
                let mut x = from_coeffs(&coef);
                if lam_min < -gap_tol {
                    // Negative curvature: fill out to the boundary along the
                    // bottom eigenvector.
                    let tau = (s * s - limit_norm * limit_norm).max(0.0).sqrt();
                    for (xi, qi) in x.iter_mut().zip(eig.eigenvectors[0].iter()) {
                        *xi += tau * qi;
                    }
                }
                return Ok(x);
            }
        }
    }

    // Boundary solution via the secular equation; the norm is strictly
    // decreasing in mu on (mu0, inf).
    let mut lo = mu0;
    let mut hi = mu0 + scale.max(norm(b) / s);
    let mut grow = 0;
    while norm_at(hi) > s {
        hi = mu0 + 2.0 * (hi - mu0);
        grow += 1;
        if grow > 200 {
            return Err(LinalgError::NoConvergence {
                max_iter: 200,
                residual: norm_at(hi) - s,
                best: solution_at(hi),
            });
        }
    }
    let target = (1e-10 * s.max(1.0)).min(tol.max(1e-300));
    let mut best_mu = hi;
    let mut best_resid = (norm_at(hi) - s).abs();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = norm_at(mid) - s;
        if r.abs() < best_resid {
            best_resid = r.abs();
            best_mu = mid;
        }
        if r.abs() <= target {
            return Ok(solution_at(mid));
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_resid <= 1e-8 * s.max(1.0) {
        // Close enough for any downstream tolerance we use.
        return Ok(solution_at(best_mu));
    }
    Err(LinalgError::NoConvergence {
        max_iter: 200,
        residual: best_resid,
        best: solution_at(best_mu),
    })
}

/// Objective value `νᵀAν − 2bᵀν` of the ball-constrained problem.
pub fn ball_objective(a: &SymMatrix, b: &[f64], nu: &[f64]) -> Result<f64, LinalgError> {
    Ok(quad_form(a, nu)? - 2.0 * dot(b, nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_sym(rng: &mut ChaCha12Rng, dim: usize, amp: f64) -> SymMatrix {
        let data: Vec<f64> = (0..dim * dim)
            .map(|_| rng.gen_range(-amp..amp))
            .collect();
        SymMatrix::from_raw(dim, data).unwrap()
    }

    fn random_psd(rng: &mut ChaCha12Rng, dim: usize, amp: f64) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for _ in 0..(dim + 2) {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-amp..amp)).collect();
            m.add_outer(&v, 1.0);
        }
        m
    }

    #[test]
    fn quad_form_diagonal() {
        let a = SymMatrix::diag(&[1.0, 2.0]);
        assert_eq!(quad_form(&a, &[1.0, 1.0]).unwrap(), 3.0);
    }

    #[test]
    fn quad_form_zero_vector() {
        let a = SymMatrix::identity(3);
        assert_eq!(quad_form(&a, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn quad_form_matches_naive_double_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_psd(&mut rng, 4, 1.0);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut naive = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    naive += a.get(i, j) * x[i] * x[j];
                }
            }
            let got = quad_form(&a, &x).unwrap();
            assert!((got - naive).abs() <= 1e-12 * naive.abs().max(1.0));
        }
    }

    #[test]
    fn quad_form_dim_mismatch_errors() {
        let a = SymMatrix::identity(2);
        assert!(quad_form(&a, &[1.0]).is_err());
    }

    #[test]
    fn eigen_diagonal_sorted() {
        let e = sym_eigen(&SymMatrix::diag(&[3.0, 1.0])).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&SymMatrix::identity(4)).unwrap();
        for v in e.eigenvalues {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for trial in 0..40 {
            let dim = 2 + (trial % 5);
            let a = random_sym(&mut rng, dim, 3.0);
            let e = sym_eigen(&a).unwrap();
            let recon = e.reconstruct();
            let err = recon.sub(&a).op_norm().unwrap();
            let scale = a.op_norm().unwrap().max(1.0);
            assert!(err <= 1e-9 * scale, "reconstruction error {err}");
            for i in 0..dim {
                for j in 0..dim {
                    let g = dot(&e.eigenvectors[i], &e.eigenvectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() <= 1e-9, "gram[{i}][{j}] = {g}");
                }
            }
        }
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut a = SymMatrix::identity(2);
        a.set_sym(0, 1, f64::NAN);
        assert!(sym_eigen(&a).is_err());
    }

    #[test]
    fn loewner_basic() {
        let i = SymMatrix::identity(2);
        let two_i = SymMatrix::scaled_identity(2, 2.0);
        assert!(loewner_leq(&i, &two_i, 0.0).unwrap());
        // Incomparable pair.
        let a = SymMatrix::diag(&[1.0, 0.0]);
        let b = SymMatrix::diag(&[0.0, 1.0]);
        assert!(!loewner_leq(&a, &b, 1e-12).unwrap());
        assert!(!loewner_leq(&b, &a, 1e-12).unwrap());
    }

    #[test]
    fn psd_quad_form_nonnegative() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = random_psd(&mut rng, 3, 1.5);
            assert!(loewner_leq(&SymMatrix::zeros(3), &a, PSD_TOL).unwrap());
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q = quad_form(&a, &x).unwrap();
            let nx2 = dot(&x, &x);
            assert!(q >= -PSD_TOL * nx2);
        }
    }

    #[test]
    fn ball_projection_case() {
        let a = SymMatrix::identity(2);
        let x = min_quadratic_on_ball(&a, &[3.0, 0.0], 1.0, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8, "{x:?}");
        assert!(x[1].abs() < 1e-8);
    }

    #[test]
    fn ball_negative_curvature_zero_b() {
        let a = SymMatrix::diag(&[1.0, -1.0]);
        let x = min_quadratic_on_ball(&a, &[0.0, 0.0], 1.0, 1e-10).unwrap();
        let obj = ball_objective(&a, &[0.0, 0.0], &x).unwrap();
        assert!((obj + 1.0).abs() < 1e-9, "objective {obj}");
        assert!(x[0].abs() < 1e-8);
        assert!((x[1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ball_interior_psd_matches_direct_solve() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..40 {
            let mut a = random_psd(&mut rng, 3, 1.0);
            a.add_scaled_identity(0.5);
            // Pick nu* inside a generous ball, then b = A nu*.
            let nu_star: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let b = a.matvec(&nu_star);
            let s = norm(&nu_star) + 1.0;
            let x = min_quadratic_on_ball(&a, &b, s, 1e-10).unwrap();
            for (xi, ni) in x.iter().zip(nu_star.iter()) {
                assert!((xi - ni).abs() <= 1e-8, "{x:?} vs {nu_star:?}");
            }
        }
    }

    #[test]
    fn ball_beats_random_feasible_points() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..30 {
            let a = random_sym(&mut rng, 3, 2.0);
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = rng.gen_range(0.3..2.5);
            let x = min_quadratic_on_ball(&a, &b, s, 1e-10).unwrap();
            assert!(norm(&x) <= s + 1e-8);
            let obj = ball_objective(&a, &b, &x).unwrap();
            for _ in 0..1000 {
                let mut p: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = norm(&p);
                if n > 0.0 {
                    let r = s * rng.gen::<f64>().powf(1.0 / 3.0);
                    for v in &mut p {
                        *v *= r / n;
                    }
                }
                let other = ball_objective(&a, &b, &p).unwrap();
                assert!(obj <= other + 1e-7, "solver {obj} vs random {other}");
            }
        }
    }

    #[test]
    fn ball_hard_case_reaches_boundary() {
        // b orthogonal to the bottom eigenspace; limit solution is interior,
        // so the bottom eigenvector must top it up to the boundary.
        let a = SymMatrix::diag(&[-2.0, 1.0]);
        let b = [0.0, 0.3];
        let s = 1.0;
        let x = min_quadratic_on_ball(&a, &b, s, 1e-10).unwrap();
        assert!((norm(&x) - 1.0).abs() < 1e-8, "{x:?}");
        // Second coordinate solves (1 + 2) x = 0.3.
        assert!((x[1] - 0.1).abs() < 1e-8, "{x:?}");
        let obj = ball_objective(&a, &b, &x).unwrap();
        // mu = 2: objective = -mu s^2 - b^T (A + mu I)^{-1} b ... check directly.
        let direct = x[0] * x[0] * -2.0 + x[1] * x[1] - 2.0 * 0.3 * x[1];
        assert!((obj - direct).abs() < 1e-12);
    }

    #[test]
    fn ball_rejects_bad_inputs() {
        let a = SymMatrix::identity(2);
        assert!(min_quadratic_on_ball(&a, &[f64::NAN, 0.0], 1.0, 1e-10).is_err());
        assert!(min_quadratic_on_ball(&a, &[1.0, 0.0], 0.0, 1e-10).is_err());
        assert!(min_quadratic_on_ball(&a, &[1.0], 1.0, 1e-10).is_err());
    }

    #[test]
    fn sym_matrix_serde_roundtrip() {
        let a = SymMatrix::from_rows(&[vec![1.0, 0.25], vec![0.25, 2.0]]).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let back: SymMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }
}
