//! Plug-in bandwidth selection.
//!
//! Both estimators share the asymptotic weighted MISE structure
//! `A * I1 / h^3 + B * I2 * h^4`, where `I1 = int f_Y^2` and
//! `I2 = int (f_X')^2 f_Y`. The functionals are estimated from the
//! contaminated sample with deconvoluting kernels and pilot bandwidths
//! `b = scale * n^-beta` (beta = 2/9 for `I1`, 1/6 for `I2`); the recursive
//! versions additionally weight observation k by `Pi_n Pi_k^-1 gamma_k`
//! with `gamma_k = 1.93 / k` for `I1` and `1.736 / k` for `I2`.
//!
//! The triple sums defining the `I2` estimators are evaluated in O(n^2)
//! through `sum_{j != k} a_j a_k = (sum_j a_j)^2 - sum_j a_j^2`.
//!
//! Note: the `I1` estimators apply a deconvoluting kernel to differences of
//! contaminated observations, so for `sigma > 0` they do not target
//! `int f_Y^2` exactly. They are implemented as written and only checked
//! against the target in the error-free case.

use std::f64::consts::PI;

use crate::error::{invalid, DeconvError, Result};
use crate::kernels::{kernel_deriv_with_ratio, kernel_with_ratio};
use crate::numeric::compensated_sum;
use crate::schedules::{averaging_weights, pilot_scale, BandwidthSchedule, StepsizeSchedule};

/// Pilot exponent for the `I1` estimators.
pub const I1_PILOT_BETA: f64 = 2.0 / 9.0;
/// Pilot exponent for the `I2` estimators.
pub const I2_PILOT_BETA: f64 = 1.0 / 6.0;
/// Stepsize constant of the recursive `I1` estimator.
pub const I1_STEPSIZE: f64 = 1.93;
/// Stepsize constant of the recursive `I2` estimator.
pub const I2_STEPSIZE: f64 = 1.736;
/// Bandwidth exponent of both optimal plans.
pub const BANDWIDTH_EXPONENT: f64 = 1.0 / 7.0;
/// Recursive plans are defined only for `gamma0` above this value.
pub const MIN_GAMMA0: f64 = 2.0 / 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Recursive,
    Batch,
}

/// Where the `I2` value of a [`PluginFunctionals`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum I2Source {
    Recursive,
    Batch,
    /// The recursive estimate was not positive and the batch one was used.
    BatchFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginFunctionals {
    pub i1: f64,
    pub i2: f64,
    pub method: Method,
    pub i2_source: I2Source,
}

/// An `I2` estimate together with a flag telling callers to fall back when
/// the value is not positive (the estimator is not a square).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct I2Estimate {
    pub value: f64,
    pub fallback_required: bool,
}

impl I2Estimate {
    fn new(value: f64) -> Self {
        Self {
            value,
            fallback_required: !(value > 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPlan {
    /// Bandwidth constant: `h_k = c * k^-a` (recursive) or `h = c * n^-a`
    /// (batch). Zero only in the error-free limit `sigma = 0`.
    pub c: f64,
    pub a: f64,
    /// Predicted AMISE* at the planned sample size.
    pub amise: f64,
    /// Stepsize constant; `None` for batch plans.
    pub gamma0: Option<f64>,
    pub n: usize,
}

impl BandwidthPlan {
    pub fn method(&self) -> Method {
        if self.gamma0.is_some() {
            Method::Recursive
        } else {
            Method::Batch
        }
    }

    /// Bandwidth at the planned sample size.
    pub fn bandwidth_at_n(&self) -> f64 {
        self.c * (self.n as f64).powf(-self.a)
    }

    /// Largest bandwidth the plan uses: `h_1 = c` for recursive plans.
    pub fn max_bandwidth(&self) -> f64 {
        match self.method() {
            Method::Recursive => self.c,
            Method::Batch => self.bandwidth_at_n(),
        }
    }

    /// The recursive bandwidth sequence `h_k = c * k^-a`.
    pub fn schedule(&self) -> Result<BandwidthSchedule> {
        BandwidthSchedule::new(self.c, self.a)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(invalid("sigma", format!("must be nonnegative, got {sigma}")))
    }
}

fn check_len(data: &[f64], required: usize) -> Result<()> {
    if data.len() < required {
        return Err(DeconvError::SampleTooSmall {
            required,
            actual: data.len(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("data", "contains non-finite values"));
    }
    Ok(())
}

fn check_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(invalid("scale", format!("pilot scale must be positive, got {scale}")))
    }
}

/// `(Pi_n / n) sum_{i,k} Pi_k^-1 gamma_k b_k^-1 K_eps((Y_i - Y_k) / b_k)`.
pub fn i1_recursive(data: &[f64], sigma: f64) -> Result<f64> {
    check_len(data, 2)?;
    i1_recursive_with_scale(data, sigma, pilot_scale(data)?)
}

/// [`i1_recursive`] with an explicit pilot scale in place of
/// `min{s, IQR / 1.349}`.
pub fn i1_recursive_with_scale(data: &[f64], sigma: f64, scale: f64) -> Result<f64> {
    check_len(data, 2)?;
    check_sigma(sigma)?;
    check_scale(scale)?;
    let n = data.len();
    let weights = averaging_weights(&StepsizeSchedule::new(I1_STEPSIZE)?, n);
    let terms: Vec<(f64, f64, f64)> = (1..=n)
        .map(|k| {
            let b = scale * (k as f64).powf(-I1_PILOT_BETA);
            (weights[k - 1] / b, 1.0 / b, (sigma / b) * (sigma / b))
        })
        .collect();
    let rows = data.iter().map(|&yi| {
        compensated_sum(
            data.iter()
                .zip(&terms)
                .map(|(&yk, &(w, inv_b, r))| w * kernel_with_ratio((yi - yk) * inv_b, r)),
        )
    });
    Ok(compensated_sum(rows) / n as f64)
}

/// `(Pi_n^2 / n) sum_i sum_{j != k} Pi_j^-1 Pi_k^-1 gamma_j gamma_k
/// b_j^-2 b_k^-2 K_eps'((Y_i - Y_j) / b_j) K_eps'((Y_i - Y_k) / b_k)`.
pub fn i2_recursive(data: &[f64], sigma: f64) -> Result<I2Estimate> {
    check_len(data, 3)?;
    i2_recursive_with_scale(data, sigma, pilot_scale(data)?)
}

pub fn i2_recursive_with_scale(data: &[f64], sigma: f64, scale: f64) -> Result<I2Estimate> {
    check_len(data, 3)?;
    check_sigma(sigma)?;
    check_scale(scale)?;
    let n = data.len();
    let weights = averaging_weights(&StepsizeSchedule::new(I2_STEPSIZE)?, n);
    let terms: Vec<(f64, f64, f64)> = (1..=n)
        .map(|k| {
            let b = scale * (k as f64).powf(-I2_PILOT_BETA);
            (weights[k - 1] / (b * b), 1.0 / b, (sigma / b) * (sigma / b))
        })
        .collect();
    let rows = data.iter().map(|&yi| {
        off_diagonal_square(
            data.iter()
                .zip(&terms)
                .map(|(&yj, &(w, inv_b, r))| w * kernel_deriv_with_ratio((yi - yj) * inv_b, r)),
        )
    });
    Ok(I2Estimate::new(compensated_sum(rows) / n as f64))
}

/// `1 / (n (n - 1) b) sum_{i != j} K_eps((Y_i - Y_j) / b)`, `b = scale n^-2/9`.
pub fn i1_batch(data: &[f64], sigma: f64) -> Result<f64> {
    check_len(data, 2)?;
    i1_batch_with_scale(data, sigma, pilot_scale(data)?)
}

pub fn i1_batch_with_scale(data: &[f64], sigma: f64, scale: f64) -> Result<f64> {
    check_len(data, 2)?;
    check_sigma(sigma)?;
    check_scale(scale)?;
    let n = data.len();
    let b = scale * (n as f64).powf(-I1_PILOT_BETA);
    let r = (sigma / b) * (sigma / b);
    let rows = data.iter().enumerate().map(|(i, &yi)| {
        compensated_sum(
            data.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &yj)| kernel_with_ratio((yi - yj) / b, r)),
        )
    });
    Ok(compensated_sum(rows) / (n as f64 * (n as f64 - 1.0) * b))
}

/// `1 / (n^3 b'^4) sum_i sum_{j != k} K_eps'((Y_i - Y_j) / b')
/// K_eps'((Y_i - Y_k) / b')`, `b' = scale n^-1/6`.
pub fn i2_batch(data: &[f64], sigma: f64) -> Result<I2Estimate> {
    check_len(data, 3)?;
    i2_batch_with_scale(data, sigma, pilot_scale(data)?)
}

pub fn i2_batch_with_scale(data: &[f64], sigma: f64, scale: f64) -> Result<I2Estimate> {
    check_len(data, 3)?;
    check_sigma(sigma)?;
    check_scale(scale)?;
    let n = data.len() as f64;
    let b = scale * n.powf(-I2_PILOT_BETA);
    let r = (sigma / b) * (sigma / b);
    let rows = data.iter().map(|&yi| {
        off_diagonal_square(data.iter().map(|&yj| kernel_deriv_with_ratio((yi - yj) / b, r)))
    });
    Ok(I2Estimate::new(compensated_sum(rows) / (n * n * n * b.powi(4))))
}

/// `sum_{j != k} a_j a_k`
fn off_diagonal_square<I: Iterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    let mut squares = Vec::new();
    for a in terms {
        let t = sum + a;
        if f64::abs(sum) >= a.abs() {
            carry += (sum - t) + a;
        } else {
            carry += (a - t) + sum;
        }
        sum = t;
        squares.push(a * a);
    }
    let total = sum + carry;
    total * total - compensated_sum(squares)
}

fn check_plan_inputs(i1: f64, i2: f64, sigma: f64, n: usize) -> Result<()> {
    check_sigma(sigma)?;
    if !(i2.is_finite() && i2 > 0.0) {
        return Err(DeconvError::NonPositiveFunctional { name: "I2", value: i2 });
    }
    if !(i1.is_finite() && i1 > 0.0) {
        return Err(DeconvError::NonPositiveFunctional { name: "I1", value: i1 });
    }
    if n == 0 {
        return Err(invalid("n", "sample size must be at least 1"));
    }
    Ok(())
}

fn check_gamma0(gamma0: f64) -> Result<()> {
    if gamma0.is_finite() && gamma0 > MIN_GAMMA0 {
        Ok(())
    } else {
        Err(invalid("gamma0", format!("must exceed 2/7, got {gamma0}")))
    }
}

fn sqrt_pi() -> f64 {
    PI.sqrt()
}

/// `c = (3 sigma^4 / (8 sqrt pi))^(1/7) (gamma0 - 2/7)^(1/7) (I1 / I2)^(1/7)`
/// with `h_k = c k^-1/7`.
pub fn optimal_bandwidth_recursive(i1: f64, i2: f64, sigma: f64, gamma0: f64, n: usize) -> Result<BandwidthPlan> {
    check_plan_inputs(i1, i2, sigma, n)?;
    check_gamma0(gamma0)?;
    let lead = 3.0 * sigma.powi(4) / (8.0 * sqrt_pi());
    let c = (lead * (gamma0 - MIN_GAMMA0) * i1 / i2).powf(1.0 / 7.0);
    Ok(BandwidthPlan {
        c,
        a: BANDWIDTH_EXPONENT,
        amise: amise_recursive(i1, i2, sigma, gamma0, n)?,
        gamma0: Some(gamma0),
        n,
    })
}

/// `c = (3 sigma^4 / (4 sqrt pi))^(1/7) (I1 / I2)^(1/7)` with the constant
/// bandwidth `h = c n^-1/7`.
pub fn optimal_bandwidth_batch(i1: f64, i2: f64, sigma: f64, n: usize) -> Result<BandwidthPlan> {
    check_plan_inputs(i1, i2, sigma, n)?;
    let lead = 3.0 * sigma.powi(4) / (4.0 * sqrt_pi());
    let c = (lead * i1 / i2).powf(1.0 / 7.0);
    Ok(BandwidthPlan {
        c,
        a: BANDWIDTH_EXPONENT,
        amise: amise_batch(i1, i2, sigma, n)?,
        gamma0: None,
        n,
    })
}

/// `(7/12) (3 sigma^4 / (8 sqrt pi))^(4/7) gamma0^2 (gamma0 - 2/7)^(-10/7)
/// I1^(4/7) I2^(3/7) n^(-4/7)`
pub fn amise_recursive(i1: f64, i2: f64, sigma: f64, gamma0: f64, n: usize) -> Result<f64> {
    check_plan_inputs(i1, i2, sigma, n)?;
    check_gamma0(gamma0)?;
    let lead = (3.0 * sigma.powi(4) / (8.0 * sqrt_pi())).powf(4.0 / 7.0);
    Ok(7.0 / 12.0
        * lead
        * stepsize_penalty(gamma0)
        * i1.powf(4.0 / 7.0)
        * i2.powf(3.0 / 7.0)
        * (n as f64).powf(-4.0 / 7.0))
}

/// `(7/3) (3/4)^(4/7) (sigma^4 / (4 sqrt pi))^(4/7) (1/4)^(3/7)
/// I1^(4/7) I2^(3/7) n^(-4/7)`
pub fn amise_batch(i1: f64, i2: f64, sigma: f64, n: usize) -> Result<f64> {
    check_plan_inputs(i1, i2, sigma, n)?;
    let lead = (sigma.powi(4) / (4.0 * sqrt_pi())).powf(4.0 / 7.0);
    Ok(7.0 / 3.0
        * 0.75_f64.powf(4.0 / 7.0)
        * lead
        * 0.25_f64.powf(3.0 / 7.0)
        * i1.powf(4.0 / 7.0)
        * i2.powf(3.0 / 7.0)
        * (n as f64).powf(-4.0 / 7.0))
}

/// `gamma0^2 (gamma0 - 2/7)^(-10/7)`, minimized at `gamma0 = 1`.
pub fn stepsize_penalty(gamma0: f64) -> f64 {
    gamma0 * gamma0 * (gamma0 - MIN_GAMMA0).powf(-10.0 / 7.0)
}

/// AMISE* of the recursive estimator as a function of `h_n` (stepsize
/// `gamma0 / n`, bandwidth exponent 1/7).
pub fn amise_objective_recursive(h: f64, i1: f64, i2: f64, sigma: f64, gamma0: f64, n: usize) -> f64 {
    let xi = 1.0 / gamma0;
    let a = BANDWIDTH_EXPONENT;
    let gamma_n = gamma0 / n as f64;
    let variance = sigma.powi(4) / (4.0 * sqrt_pi() * (2.0 - (1.0 - 3.0 * a) * xi)) * gamma_n * i1 / h.powi(3);
    let bias = h.powi(4) * i2 / (4.0 * (1.0 - 2.0 * a * xi).powi(2));
    variance + bias
}

/// AMISE* of the batch estimator as a function of `h`.
pub fn amise_objective_batch(h: f64, i1: f64, i2: f64, sigma: f64, n: usize) -> f64 {
    sigma.powi(4) / (4.0 * sqrt_pi()) * i1 / (n as f64 * h.powi(3)) + 0.25 * h.powi(4) * i2
}

/// `I1` and `I2` by the batch estimators. A nonpositive `I2` makes the
/// batch plan invalid.
pub fn batch_functionals(data: &[f64], sigma: f64) -> Result<PluginFunctionals> {
    check_len(data, 3)?;
    let scale = pilot_scale(data)?;
    let i1 = i1_batch_with_scale(data, sigma, scale)?;
    let i2 = i2_batch_with_scale(data, sigma, scale)?;
    if i2.fallback_required {
        return Err(DeconvError::NonPositiveFunctional { name: "I2", value: i2.value });
    }
    Ok(PluginFunctionals {
        i1,
        i2: i2.value,
        method: Method::Batch,
        i2_source: I2Source::Batch,
    })
}

/// `I1` and `I2` by the recursive estimators. A nonpositive recursive `I2`
/// is replaced by the batch estimate; if that is nonpositive too the plan
/// is invalid.
pub fn recursive_functionals(data: &[f64], sigma: f64) -> Result<PluginFunctionals> {
    check_len(data, 3)?;
    let scale = pilot_scale(data)?;
    let i1 = i1_recursive_with_scale(data, sigma, scale)?;
    let i2 = i2_recursive_with_scale(data, sigma, scale)?;
    let (i2, source) = if i2.fallback_required {
        let fallback = i2_batch_with_scale(data, sigma, scale)?;
        if fallback.fallback_required {
            return Err(DeconvError::NonPositiveFunctional {
                name: "I2",
                value: fallback.value,
            });
        }
        (fallback.value, I2Source::BatchFallback)
    } else {
        (i2.value, I2Source::Recursive)
    };
    Ok(PluginFunctionals {
        i1,
        i2,
        method: Method::Recursive,
        i2_source: source,
    })
}
