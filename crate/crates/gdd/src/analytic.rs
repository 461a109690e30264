//! Closed-form detection performance.
//!
//! Under the null hypothesis the odds-form GLRT statistic and the
//! matched-filter statistic follow complex central F / Beta laws whose
//! parameters depend only on the problem dimensions. Conditioned on its
//! Beta-distributed loss factor, each statistic has a complex noncentral-F
//! CDF that reduces to a finite sum of binomial and incomplete-gamma terms;
//! detection probability is that CDF averaged over the loss-factor density.
//!
//! Everything here is pure and reentrant: combinatorial and power factors
//! are evaluated in the log domain and accumulated with compensated sums,
//! the Beta mixing integrals go through fixed-order Gauss-Legendre rules
//! with an order-doubling convergence check, and thresholds are recovered by
//! bisection with geometric bracket growth.

use thiserror::Error;

/// Default Gauss-Legendre order for the loss-factor integrals. The
/// integrands are low-degree polynomials in the loss factor times smooth
/// exponential factors, so convergence is spectral and this is generous.
pub const DEFAULT_QUAD_ORDER: usize = 96;

/// Maximum order tried by the order-doubling convergence loop.
const MAX_QUAD_ORDER: usize = 1536;

/// Change between successive doubled orders below which the integral is
/// considered converged.
const QUAD_CONVERGENCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("{name} must be finite and nonnegative, got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{name} must lie in [{min}, {max}], got {value}")]
    OutOfInterval {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("binomial coefficient undefined for m={m} > n={n}")]
    BinomialDomain { n: usize, m: usize },
    #[error("invalid distribution dimensions: {detail}")]
    InvalidDimensions { detail: String },
    #[error("quadrature failed to converge: last order-doubling change was {delta:.3e}")]
    QuadratureNotConverged { delta: f64 },
    #[error("threshold target must lie strictly inside (0,1), got {target}")]
    TargetNotBracketable { target: f64 },
    #[error("numerical failure in {context}: value {value}")]
    Numerical { context: &'static str, value: f64 },
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// ln(n!) by direct logarithm summation; exact to a few ulps for the
/// integer ranges used here.
fn ln_factorial(n: usize) -> f64 {
    compensated_sum((2..=n).map(|i| (i as f64).ln()))
}

/// Regularized upper incomplete gamma with integer shape:
/// `e^{-a} * sum_{m=0..k} a^m / m!`, the probability that a Poisson(a)
/// count does not exceed `k`. Terms use a multiplicative recurrence, so
/// there is no factorial overflow.
pub fn inc_gamma(k: usize, a: f64) -> Result<f64, AnalyticError> {
    if !a.is_finite() || a < 0.0 {
        return Err(AnalyticError::OutOfRange { name: "a", value: a });
    }
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for m in 1..=k {
        term *= a / (m as f64);
        sum += term;
    }
    Ok(((-a).exp() * sum).min(1.0))
}

/// Natural log of the binomial coefficient `C(n, m)`.
pub fn log_binom(n: usize, m: usize) -> Result<f64, AnalyticError> {
    if m > n {
        return Err(AnalyticError::BinomialDomain { n, m });
    }
    Ok(ln_factorial(n) - ln_factorial(m) - ln_factorial(n - m))
}

fn ln_beta_fn(m: usize, n: usize) -> f64 {
    // B(m, n) = (m-1)!(n-1)!/(m+n-1)! for integer arguments.
    ln_factorial(m - 1) + ln_factorial(n - 1) - ln_factorial(m + n - 1)
}

/// Distribution parameters: the problem dimensions plus the linear SNR.
///
/// The dimension bounds mirror the scenario invariants; the derived
/// quantities are the CDF exponent `L+P-O`, the CDF sum bound `L+P-Q-O`,
/// and the degrees of freedom of the F and Beta laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistParams {
    channels: usize,
    test_cols: usize,
    row_dim: usize,
    training_cols: usize,
    snr: f64,
}

impl DistParams {
    pub fn new(
        channels: usize,
        test_cols: usize,
        row_dim: usize,
        training_cols: usize,
        snr: f64,
    ) -> Result<Self, AnalyticError> {
        if channels < 2 {
            return Err(AnalyticError::InvalidDimensions {
                detail: format!("channel count must be at least 2, got {channels}"),
            });
        }
        if row_dim < 1 || row_dim > test_cols {
            return Err(AnalyticError::InvalidDimensions {
                detail: format!("need 1 <= Q <= P, got Q={row_dim}, P={test_cols}"),
            });
        }
        if training_cols + test_cols < row_dim + channels {
            return Err(AnalyticError::InvalidDimensions {
                detail: format!(
                    "need L+P-Q >= O, got L={training_cols}, P={test_cols}, Q={row_dim}, O={channels}"
                ),
            });
        }
        if training_cols + test_cols < channels + 1 {
            return Err(AnalyticError::InvalidDimensions {
                detail: format!(
                    "need L+P >= O+1, got L={training_cols}, P={test_cols}, O={channels}"
                ),
            });
        }
        if !snr.is_finite() || snr < 0.0 {
            return Err(AnalyticError::OutOfRange {
                name: "snr",
                value: snr,
            });
        }
        Ok(DistParams {
            channels,
            test_cols,
            row_dim,
            training_cols,
            snr,
        })
    }

    pub fn from_scenario(s: &crate::model::Scenario, snr: f64) -> Result<Self, AnalyticError> {
        DistParams::new(s.channels, s.test_cols, s.row_dim, s.training_cols, snr)
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self, AnalyticError> {
        DistParams::new(
            self.channels,
            self.test_cols,
            self.row_dim,
            self.training_cols,
            snr,
        )
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    /// `L + P - O`, the exponent of the conditional CDF.
    pub fn cdf_exponent(&self) -> usize {
        self.training_cols + self.test_cols - self.channels
    }

    /// `L + P - Q - O`, the upper bound of the CDF sum.
    pub fn sum_bound(&self) -> usize {
        self.training_cols + self.test_cols - self.row_dim - self.channels
    }

    /// Degrees of freedom of the conditional complex F law.
    pub fn f_dof(&self) -> (usize, usize) {
        (self.row_dim, self.sum_bound() + 1)
    }

    /// Degrees of freedom of the GLRT loss-factor Beta law.
    pub fn beta_g_dof(&self) -> (usize, usize) {
        (self.cdf_exponent() + 1, self.channels - 1)
    }

    /// Degrees of freedom of the matched-filter loss-factor Beta law.
    pub fn beta_a_dof(&self) -> (usize, usize) {
        (self.sum_bound() + 2, self.channels - 1)
    }

    /// Location of the GLRT loss-factor density maximum,
    /// `(L+P-O) / (L+P-2)`.
    pub fn beta_g_mode(&self) -> f64 {
        let num = self.cdf_exponent();
        let den = num + self.channels - 2;
        num as f64 / den as f64
    }

    /// Location of the matched-filter loss-factor density maximum,
    /// `(L+P-Q-O+1) / (L+P-Q-1)`.
    pub fn beta_a_mode(&self) -> f64 {
        let num = self.sum_bound() + 1;
        let den = num + self.channels - 2;
        num as f64 / den as f64
    }
}

/// Conditional CDF sum; assumes arguments already validated.
fn cdf_p1_inner(eta: f64, noncentrality: f64, p: &DistParams) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let n1 = p.cdf_exponent();
    let kmax = p.sum_bound();
    let q = p.row_dim;
    let ln_eta = eta.ln();
    let ln_one_plus = eta.ln_1p();
    let a = noncentrality / (1.0 + eta);
    let sum = compensated_sum((0..=kmax).map(|k| {
        let j = k + q;
        let log_weight = log_binom(n1, j).expect("j <= n1 by construction")
            + (j as f64) * ln_eta
            - (n1 as f64) * ln_one_plus;
        log_weight.exp() * inc_gamma(k, a).expect("a >= 0 by construction")
    }));
    sum.clamp(0.0, 1.0)
}

/// Conditional CDF of the odds-form GLRT statistic given its loss factor:
/// a finite sum of binomial terms weighted by incomplete-gamma factors,
/// `sum_{k=0..L+P-Q-O} C(L+P-O, k+Q) eta^{k+Q}
///  IG_{k+1}(nc/(1+eta)) / (1+eta)^{L+P-O}`.
///
/// `noncentrality` is the SNR-scaled loss factor (`rho * beta`). The value
/// is nondecreasing in `eta` and nonincreasing in `noncentrality`.
pub fn cdf_p1(eta: f64, noncentrality: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(AnalyticError::OutOfRange {
            name: "eta",
            value: eta,
        });
    }
    if !noncentrality.is_finite() || noncentrality < 0.0 {
        return Err(AnalyticError::OutOfRange {
            name: "noncentrality",
            value: noncentrality,
        });
    }
    let v = cdf_p1_inner(eta, noncentrality, p);
    if !v.is_finite() {
        return Err(AnalyticError::Numerical {
            context: "cdf_p1",
            value: v,
        });
    }
    Ok(v)
}

fn pdf_beta_inner(beta: f64, exp_lo: usize, exp_hi: usize, ln_norm: f64) -> f64 {
    // Density proportional to beta^exp_lo (1-beta)^exp_hi.
    if beta == 0.0 {
        return if exp_lo > 0 { 0.0 } else { (-ln_norm).exp() };
    }
    if beta == 1.0 {
        return if exp_hi > 0 { 0.0 } else { (-ln_norm).exp() };
    }
    ((exp_lo as f64) * beta.ln() + (exp_hi as f64) * (1.0 - beta).ln() - ln_norm).exp()
}

fn check_beta_arg(beta: f64) -> Result<(), AnalyticError> {
    if !beta.is_finite() || !(0.0..=1.0).contains(&beta) {
        return Err(AnalyticError::OutOfInterval {
            name: "beta",
            value: beta,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok(())
}

/// Density of the GLRT loss factor:
/// `beta^(L+P-O) (1-beta)^(O-2) / B(L+P-O+1, O-1)`.
pub fn pdf_beta_g(beta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    check_beta_arg(beta)?;
    let (m, n) = p.beta_g_dof();
    Ok(pdf_beta_inner(beta, m - 1, n - 1, ln_beta_fn(m, n)))
}

/// Density of the matched-filter loss factor:
/// `beta^(L+P-Q-O+1) (1-beta)^(O-2) / B(L+P-Q-O+2, O-1)`.
pub fn pdf_beta_a(beta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    check_beta_arg(beta)?;
    let (m, n) = p.beta_a_dof();
    Ok(pdf_beta_inner(beta, m - 1, n - 1, ln_beta_fn(m, n)))
}

/// Gauss-Legendre quadrature rule mapped to [0,1]; weights are positive and
/// sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Builds the rule by Newton iteration on the Legendre polynomial roots;
    /// nodes and weights are accurate to machine precision. Exact for
    /// polynomials up to degree `2 * order - 1`.
    pub fn gauss_legendre(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Chebyshev-based initial guess for the i-th root.
            let mut z =
                (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p0 = 1.0f64;
                let mut p1 = z;
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                // p1 = P_n(z), p0 = P_{n-1}(z)
                dp = (n as f64) * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // Map [-1,1] -> [0,1]; the symmetric partner lands at 1 - node.
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5;
        }
        QuadratureRule {
            nodes,
            weights,
            order,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [0,1].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        compensated_sum(
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(|(&x, &w)| w * f(x)),
        )
    }
}

fn check_eta(eta: f64) -> Result<(), AnalyticError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(AnalyticError::OutOfRange {
            name: "eta",
            value: eta,
        });
    }
    Ok(())
}

fn clamp_probability(v: f64, context: &'static str) -> Result<f64, AnalyticError> {
    if !v.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&v) {
        return Err(AnalyticError::Numerical { context, value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// GLRT detection probability at a fixed quadrature order:
/// `integral of [1 - cdf_p1(eta, rho*beta)] pdf_beta_g(beta) d beta`.
pub fn pd_glrgdd_with(
    eta: f64,
    p: &DistParams,
    rule: &QuadratureRule,
) -> Result<f64, AnalyticError> {
    check_eta(eta)?;
    let rho = p.snr;
    let (m, n) = p.beta_g_dof();
    let ln_norm = ln_beta_fn(m, n);
    let v = rule.integrate(|beta| {
        (1.0 - cdf_p1_inner(eta, rho * beta, p)) * pdf_beta_inner(beta, m - 1, n - 1, ln_norm)
    });
    clamp_probability(v, "pd_glrgdd")
}

/// Matched-filter detection probability at a fixed quadrature order:
/// `integral of [1 - cdf_p1(eta*beta, rho*beta)] pdf_beta_a(beta) d beta`
/// (the threshold is scaled by the loss factor because the statistic is a
/// ratio with the loss factor in its denominator).
pub fn pd_amgdd_with(
    eta: f64,
    p: &DistParams,
    rule: &QuadratureRule,
) -> Result<f64, AnalyticError> {
    check_eta(eta)?;
    let rho = p.snr;
    let (m, n) = p.beta_a_dof();
    let ln_norm = ln_beta_fn(m, n);
    let v = rule.integrate(|beta| {
        (1.0 - cdf_p1_inner(eta * beta, rho * beta, p))
            * pdf_beta_inner(beta, m - 1, n - 1, ln_norm)
    });
    clamp_probability(v, "pd_amgdd")
}

fn converge<F: Fn(&QuadratureRule) -> Result<f64, AnalyticError>>(
    eval: F,
) -> Result<f64, AnalyticError> {
    let mut order = DEFAULT_QUAD_ORDER;
    let mut prev = eval(&QuadratureRule::gauss_legendre(order))?;
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let curr = eval(&QuadratureRule::gauss_legendre(order))?;
        if (curr - prev).abs() < QUAD_CONVERGENCE_TOL {
            return Ok(curr);
        }
        prev = curr;
    }
    Err(AnalyticError::QuadratureNotConverged {
        delta: f64::INFINITY,
    })
}

/// GLRT detection probability with an order-doubling convergence check.
pub fn pd_glrgdd(eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    converge(|rule| pd_glrgdd_with(eta, p, rule))
}

/// Matched-filter detection probability with an order-doubling convergence
/// check.
pub fn pd_amgdd(eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    converge(|rule| pd_amgdd_with(eta, p, rule))
}

/// GLRT false-alarm probability in closed form. At zero SNR the
/// incomplete-gamma factors in the conditional CDF all equal one, the loss
/// factor integrates out, and no quadrature is needed:
/// `1 - sum_k C(L+P-O, k+Q) eta^{k+Q} / (1+eta)^{L+P-O}`.
/// Strictly decreasing in `eta`.
pub fn pfa_glrgdd(eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    check_eta(eta)?;
    clamp_probability(1.0 - cdf_p1_inner(eta, 0.0, p), "pfa_glrgdd")
}

/// Matched-filter false-alarm probability: the detection integral at zero
/// SNR (the loss factor does not integrate out here because it scales the
/// threshold). Strictly decreasing in `eta`.
pub fn pfa_amgdd(eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
    let p0 = p.with_snr(0.0)?;
    pd_amgdd(eta, &p0)
}

/// Matched-filter false-alarm probability at a fixed quadrature order.
pub fn pfa_amgdd_with(
    eta: f64,
    p: &DistParams,
    rule: &QuadratureRule,
) -> Result<f64, AnalyticError> {
    let p0 = p.with_snr(0.0)?;
    pd_amgdd_with(eta, &p0, rule)
}

/// Inverts a strictly decreasing false-alarm function: finds `eta` with
/// `pfa_fn(eta) = target` by geometric bracket expansion followed by
/// bisection. Stops when the residual drops below `1e-12 * target` or the
/// bracket width falls below `1e-12` relative.
pub fn invert_threshold<F>(pfa_fn: F, target: f64) -> Result<f64, AnalyticError>
where
    F: Fn(f64) -> Result<f64, AnalyticError>,
{
    if !target.is_finite() || target <= 0.0 || target >= 1.0 {
        return Err(AnalyticError::TargetNotBracketable { target });
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while pfa_fn(hi)? > target {
        lo = hi;
        hi *= 4.0;
        if hi > 1e300 {
            return Err(AnalyticError::TargetNotBracketable { target });
        }
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        let f = pfa_fn(mid)?;
        if (f - target).abs() <= 1e-12 * target {
            return Ok(mid);
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(AnalyticError::Numerical {
        context: "invert_threshold: bisection did not converge",
        value: 0.5 * (lo + hi),
    })
}

/// Threshold of the odds-form GLRT statistic at the given false-alarm
/// target.
pub fn threshold_glrgdd(p: &DistParams, target: f64) -> Result<f64, AnalyticError> {
    invert_threshold(|eta| pfa_glrgdd(eta, p), target)
}

/// Threshold of the matched-filter statistic at the given false-alarm
/// target.
pub fn threshold_amgdd(p: &DistParams, target: f64) -> Result<f64, AnalyticError> {
    let p0 = p.with_snr(0.0)?;
    let rule = QuadratureRule::gauss_legendre(2 * DEFAULT_QUAD_ORDER);
    invert_threshold(|eta| pd_amgdd_with(eta, &p0, &rule), target)
}
