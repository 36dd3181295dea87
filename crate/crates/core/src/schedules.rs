//! Stepsize, bandwidth and pilot-bandwidth sequences.

use crate::error::{invalid, DeconvError, Result};
use crate::numeric::mean_and_variance;

/// Stepsize `gamma_k = gamma0 / k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeSchedule {
    gamma0: f64,
}

impl StepsizeSchedule {
    pub fn new(gamma0: f64) -> Result<Self> {
        if !(gamma0.is_finite() && gamma0 > 0.0) {
            return Err(invalid("gamma0", format!("must be positive, got {gamma0}")));
        }
        Ok(Self { gamma0 })
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// `xi = lim (k gamma_k)^-1`
    pub fn xi(&self) -> f64 {
        1.0 / self.gamma0
    }

    pub fn at(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(DeconvError::ZeroIndex(k));
        }
        Ok(self.gamma0 / k as f64)
    }
}

pub fn stepsize(s: &StepsizeSchedule, k: usize) -> Result<f64> {
    s.at(k)
}

/// Bandwidth `h_k = c * k^-a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSchedule {
    c: f64,
    a: f64,
}

impl BandwidthSchedule {
    pub fn new(c: f64, a: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("c", format!("bandwidth scale must be positive, got {c}")));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid("a", format!("exponent must lie in (0, 1), got {a}")));
        }
        Ok(Self { c, a })
    }

    /// `h_k = h` for every k. The only schedule allowed to have `a = 0`.
    pub fn constant(h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("h", format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { c: h, a: 0.0 })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn at(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(DeconvError::ZeroIndex(k));
        }
        Ok(self.h(k))
    }

    #[inline]
    pub(crate) fn h(&self, k: usize) -> f64 {
        if self.a == 0.0 {
            self.c
        } else {
            self.c * (k as f64).powf(-self.a)
        }
    }
}

pub fn bandwidth_at(b: &BandwidthSchedule, k: usize) -> Result<f64> {
    b.at(k)
}

/// Pilot bandwidth `b_k = scale * k^-beta` used inside the functional
/// estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotBandwidthSpec {
    pub beta: f64,
    pub scale: f64,
}

impl PilotBandwidthSpec {
    pub fn new(beta: f64, scale: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("scale", format!("pilot scale must be positive, got {scale}")));
        }
        Ok(Self { beta, scale })
    }

    pub fn from_sample(sample: &[f64], beta: f64) -> Result<Self> {
        Self::new(beta, pilot_scale(sample)?)
    }

    pub fn at(&self, k: usize) -> f64 {
        self.scale * (k as f64).powf(-self.beta)
    }
}

/// Quantile with linear interpolation between order statistics (type 7).
/// `sorted` must be sorted ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// `min{ s, (Q3 - Q1) / 1.349 }` with the (n - 1) standard deviation and
/// type-7 quartiles.
pub fn pilot_scale(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(DeconvError::SampleTooSmall {
            required: 2,
            actual: sample.len(),
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sample", "contains non-finite values"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(DeconvError::DegenerateSample(
            "all observations are equal, pilot scale would be zero".into(),
        ));
    }
    let (_, var) = mean_and_variance(sample);
    let sd = var.sqrt();
    let iqr = quantile_type7(&sorted, 0.75) - quantile_type7(&sorted, 0.25);
    let scale = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    Ok(scale)
}

/// `n (1 - v_{n-1} / v_n)` at the last index of `seq`, which tends to the
/// regular-variation index of the sequence.
pub fn gs_index_probe(seq: &[f64]) -> Result<f64> {
    if seq.len() < 3 {
        return Err(DeconvError::SampleTooSmall {
            required: 3,
            actual: seq.len(),
        });
    }
    if seq.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("seq", "all terms must be positive and finite"));
    }
    let n = seq.len();
    Ok(n as f64 * (1.0 - seq[n - 2] / seq[n - 1]))
}

/// Weights `w_k = gamma_k * prod_{j=k+1}^{n} (1 - gamma_j)` for k = 1..n,
/// i.e. `Pi_n Pi_k^-1 gamma_k` without the division that breaks down when
/// some `gamma_j = 1`.
pub fn averaging_weights(s: &StepsizeSchedule, n: usize) -> Vec<f64> {
    let mut weights = vec![0.0; n];
    let mut tail = 1.0;
    for k in (1..=n).rev() {
        let gamma = s.gamma0 / k as f64;
        weights[k - 1] = gamma * tail;
        tail *= 1.0 - gamma;
    }
    weights
}
