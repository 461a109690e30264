//! Dense complex linear algebra used by the detectors: Hermitian solves,
//! orthogonal projectors, Gram square-root inverses, and colored
//! circularly-symmetric Gaussian sampling.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex<f64>`. Solves go
//! through a hand-rolled Hermitian Cholesky factorization so that
//! positive-definiteness failures can report the offending pivot; the
//! factor-based solve is followed by compensated-residual refinement, which
//! keeps the solution accurate for condition numbers up to ~1e8.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative asymmetry tolerance for inputs that must be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |M - M^H| = {max_asym:.3e} exceeds {tol:.3e}")]
    NotHermitian { max_asym: f64, tol: f64 },
    #[error("matrix is not positive definite: nonpositive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("rank-deficient rows: Gram matrix is not positive definite")]
    RankDeficient,
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("non-finite value produced in {context}")]
    NonFinite { context: &'static str },
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn ensure_finite(m: &CMatrix, context: &'static str) -> Result<(), LinalgError> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite { context })
    }
}

fn check_hermitian(m: &CMatrix) -> Result<(), LinalgError> {
    let asym = max_abs(&(m - m.adjoint()));
    let scale = max_abs(m).max(1.0);
    if asym > HERMITIAN_TOL * scale {
        return Err(LinalgError::NotHermitian {
            max_asym: asym,
            tol: HERMITIAN_TOL * scale,
        });
    }
    Ok(())
}

/// Averages a numerically-Hermitian matrix with its adjoint, removing
/// roundoff asymmetry.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    let mut h = (m + m.adjoint()).scale(0.5);
    for i in 0..h.nrows() {
        h[(i, i)].im = 0.0;
    }
    h
}

/// Lower-triangular Cholesky factor `G` with `G G^H = M`.
///
/// Only the lower triangle of `M` is read. A nonpositive pivot is reported
/// with its index, which distinguishes a singular sample covariance (early
/// pivot collapse) from a plain dimension bug.
pub fn cholesky_factor(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            context: format!("cholesky expects a square matrix, got {}x{}", n, m.ncols()),
        });
    }
    let mut g = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= g[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let gjj = d.sqrt();
        g[(j, j)] = C64::new(gjj, 0.0);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= g[(i, k)] * g[(j, k)].conj();
            }
            g[(i, j)] = s / gjj;
        }
    }
    Ok(g)
}

/// Solves `G Y = B` for lower-triangular `G`.
fn solve_lower(g: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = g.nrows();
    let mut y = b.clone();
    for col in 0..y.ncols() {
        for i in 0..n {
            let mut s = y[(i, col)];
            for k in 0..i {
                s -= g[(i, k)] * y[(k, col)];
            }
            y[(i, col)] = s / g[(i, i)].re;
        }
    }
    y
}

/// Solves `G^H X = Y` for lower-triangular `G`.
fn solve_lower_adjoint(g: &CMatrix, y: &CMatrix) -> CMatrix {
    let n = g.nrows();
    let mut x = y.clone();
    for col in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in (i + 1)..n {
                s -= g[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = s / g[(i, i)].re;
        }
    }
    x
}

/// Solves `M X = B` given the Cholesky factor `G` of `M` (no refinement).
pub fn solve_with_factor(g: &CMatrix, b: &CMatrix) -> CMatrix {
    solve_lower_adjoint(g, &solve_lower(g, b))
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    fn new(v: f64) -> Self {
        Accum { sum: v, comp: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a * b` together with the rounding error of the product.
    fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.add(e);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Residual `B - M X` with compensated products and sums, accurate enough to
/// drive iterative refinement well past the plain f64 residual floor.
fn compensated_residual(m: &CMatrix, x: &CMatrix, b: &CMatrix) -> CMatrix {
    let (n, cols) = (b.nrows(), b.ncols());
    let mut r = CMatrix::zeros(n, cols);
    for col in 0..cols {
        for i in 0..n {
            let mut re = Accum::new(b[(i, col)].re);
            let mut im = Accum::new(b[(i, col)].im);
            for k in 0..n {
                let a = m[(i, k)];
                let v = x[(k, col)];
                re.add_prod(-a.re, v.re);
                re.add_prod(a.im, v.im);
                im.add_prod(-a.re, v.im);
                im.add_prod(-a.im, v.re);
            }
            r[(i, col)] = C64::new(re.value(), im.value());
        }
    }
    r
}

/// Solves `M X = B` for Hermitian positive-definite `M`.
///
/// The input must be Hermitian within [`HERMITIAN_TOL`]. Up to two
/// refinement steps with compensated residuals are applied, so solutions of
/// systems with condition number up to ~1e8 recover the true answer to
/// better than 1e-9 relative error.
pub fn hermitian_solve(m: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if m.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch {
            context: format!(
                "solve: matrix is {}x{} but right-hand side has {} rows",
                m.nrows(),
                m.ncols(),
                b.nrows()
            ),
        });
    }
    check_hermitian(m)?;
    let g = cholesky_factor(m)?;
    let mut x = solve_with_factor(&g, b);
    let b_scale = max_abs(b).max(f64::MIN_POSITIVE);
    for _ in 0..2 {
        let r = compensated_residual(m, &x, b);
        if max_abs(&r) <= 1e-14 * b_scale {
            break;
        }
        x += solve_with_factor(&g, &r);
    }
    ensure_finite(&x, "hermitian_solve")?;
    Ok(x)
}

/// Orthogonal projector pair for the row space of `C` (`Q x P`,
/// full row rank): returns `(P_C, P_C_perp)`, both `P x P`, with
/// `P_C = C^H (C C^H)^{-1} C` and `P_C_perp = I - P_C`.
pub fn projector(c: &CMatrix) -> Result<(CMatrix, CMatrix), LinalgError> {
    let p = c.ncols();
    let gram = hermitize(&(c * c.adjoint()));
    let x = hermitian_solve(&gram, c).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => LinalgError::RankDeficient,
        other => other,
    })?;
    let proj = hermitize(&(c.adjoint() * x));
    let perp = CMatrix::identity(p, p) - &proj;
    ensure_finite(&proj, "projector")?;
    Ok((proj, perp))
}

/// Inverse symmetric square root `(C C^H)^{-1/2}` of the Gram matrix of `C`.
///
/// Computed from the Hermitian eigendecomposition of the `Q x Q` Gram
/// matrix; the symmetric square root of a positive-definite matrix is
/// unique, so the result is Hermitian.
pub fn gram_inv_sqrt(c: &CMatrix) -> Result<CMatrix, LinalgError> {
    let gram = hermitize(&(c * c.adjoint()));
    let eig = gram.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    if !(max_ev > 0.0) || eig.eigenvalues.iter().any(|&v| v <= 1e-12 * max_ev) {
        return Err(LinalgError::RankDeficient);
    }
    let q = gram.nrows();
    let mut w = CMatrix::zeros(q, q);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let vk = eig.eigenvectors.column(k);
        let scale = C64::new(1.0 / ev.sqrt(), 0.0);
        // w += scale * vk vk^H
        for i in 0..q {
            for j in 0..q {
                w[(i, j)] += scale * vk[i] * vk[j].conj();
            }
        }
    }
    let w = hermitize(&w);
    ensure_finite(&w, "gram_inv_sqrt")?;
    Ok(w)
}

/// Matrix of i.i.d. standard circularly-symmetric complex Gaussian entries
/// (real and imaginary parts independent, each with variance 1/2, so every
/// entry has unit total variance).
pub fn sample_standard_complex<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Colored complex Gaussian sample `G W` where `G G^H = R` and `W` has
/// standard circularly-symmetric entries; each column is `CN(0, R)`.
pub fn sample_colored_gaussian<R: Rng + ?Sized>(
    factor: &CMatrix,
    cols: usize,
    rng: &mut R,
) -> CMatrix {
    factor * sample_standard_complex(factor.nrows(), cols, rng)
}
