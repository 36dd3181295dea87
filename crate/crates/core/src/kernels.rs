//! Gaussian kernel and its deconvoluting counterpart for Laplace errors.
//!
//! With a standard normal kernel (Fourier transform `exp(-t^2/2)`) and a
//! centred Laplace error of scale `sigma` (characteristic function
//! `1 / (1 + sigma^2 t^2)`), the deconvoluting kernel at bandwidth `h` has
//! the closed form
//!
//! ```text
//! K_eps(u) = phi(u) * (1 + r * (1 - u^2)),    r = sigma^2 / h^2
//! ```
//!
//! and its antiderivative is `Phi(u) + r * u * phi(u)`. Both depend on
//! `sigma` and `h` only through the ratio `r`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::numeric::{compensated_sum, simpson};

/// `1 / sqrt(2 pi)`
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Beyond this |u| every kernel value is below 1e-300 and is returned as an
/// exact 0 (or 0/1 for the integrated kernel).
pub const KERNEL_CUTOFF: f64 = 40.0;

/// Noise scale, bandwidth and their squared ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvKernelParams {
    sigma: f64,
    h: f64,
    ratio: f64,
}

impl DeconvKernelParams {
    pub fn new(sigma: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("h", format!("bandwidth must be positive and finite, got {h}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("sigma", format!("noise scale must be nonnegative, got {sigma}")));
        }
        Ok(Self {
            sigma,
            h,
            ratio: (sigma / h) * (sigma / h),
        })
    }

    /// Unit bandwidth with `sigma = sqrt(r)`, i.e. a kernel parameterized by
    /// the ratio alone.
    pub fn from_ratio(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(invalid("r", format!("ratio must be nonnegative, got {r}")));
        }
        Self::new(r.sqrt(), 1.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `sigma^2 / h^2`
    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

pub fn gauss_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

pub fn gauss_cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

pub fn deconv_kernel(u: f64, p: &DeconvKernelParams) -> f64 {
    kernel_with_ratio(u, p.ratio)
}

pub fn deconv_cdf_kernel(u: f64, p: &DeconvKernelParams) -> f64 {
    cdf_kernel_with_ratio(u, p.ratio)
}

pub fn deconv_kernel_deriv(u: f64, p: &DeconvKernelParams) -> f64 {
    kernel_deriv_with_ratio(u, p.ratio)
}

/// Deconvoluting kernel evaluated directly from the ratio `r`.
#[inline]
pub fn kernel_with_ratio(u: f64, r: f64) -> f64 {
    if u.abs() > KERNEL_CUTOFF {
        return 0.0;
    }
    gauss_pdf(u) * (1.0 + r * (1.0 - u * u))
}

/// Integrated deconvoluting kernel. Exceeds 1 (and dips below 0) for r > 0.
#[inline]
pub fn cdf_kernel_with_ratio(u: f64, r: f64) -> f64 {
    if u > KERNEL_CUTOFF {
        return 1.0;
    }
    if u < -KERNEL_CUTOFF {
        return 0.0;
    }
    gauss_cdf(u) + r * u * gauss_pdf(u)
}

/// Derivative of the deconvoluting kernel: `-u phi(u) (1 + r (3 - u^2))`.
#[inline]
pub fn kernel_deriv_with_ratio(u: f64, r: f64) -> f64 {
    if u.abs() > KERNEL_CUTOFF {
        return 0.0;
    }
    -u * gauss_pdf(u) * (1.0 + r * (3.0 - u * u))
}

/// Trapezoidal inversion of `phi_K(t) / phi_eps(t / h)` on `[-t_max, t_max]`.
///
/// Reference implementation used to validate [`deconv_kernel`]; the
/// integrand is even in `t`, so only the cosine part contributes.
pub fn fourier_inversion_oracle(u: f64, p: &DeconvKernelParams, t_max: f64, dt: f64) -> Result<f64> {
    if !(t_max.is_finite() && t_max >= 8.0) {
        return Err(invalid("t_max", format!("truncation must be at least 8, got {t_max}")));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= 0.05) {
        return Err(invalid("dt", format!("step must lie in (0, 0.05], got {dt}")));
    }
    let steps = (2.0 * t_max / dt).round() as usize;
    let step = 2.0 * t_max / steps as f64;
    let r = p.ratio;
    let integrand = |t: f64| (t * u).cos() * (-0.5 * t * t).exp() * (1.0 + r * t * t);
    let inner = compensated_sum((1..steps).map(|i| integrand(-t_max + step * i as f64)));
    let ends = 0.5 * (integrand(-t_max) + integrand(t_max));
    Ok((inner + ends) * step / (2.0 * PI))
}

/// Integration range and resolution for [`psi_functional`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub lower: f64,
    pub upper: f64,
    pub intervals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            lower: -20.0,
            upper: 20.0,
            intervals: 8000,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(invalid(
                "quadrature",
                format!("need finite lower < upper, got [{}, {}]", self.lower, self.upper),
            ));
        }
        if self.intervals < 2 {
            return Err(invalid("quadrature", "at least two intervals are required"));
        }
        Ok(())
    }
}

/// `psi(K_eps) = integral of u K_eps(u) cal_K_eps(u) du`, by composite Simpson.
pub fn psi_functional(p: &DeconvKernelParams, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let r = p.ratio;
    Ok(simpson(
        |u| u * kernel_with_ratio(u, r) * cdf_kernel_with_ratio(u, r),
        spec.lower,
        spec.upper,
        spec.intervals,
    ))
}
