//! Recursive (stochastic-approximation) and batch deconvolution estimators
//! of a distribution function, evaluated on a fixed grid.

use crate::error::{invalid, DeconvError, Result};
use crate::kernels::cdf_kernel_with_ratio;
use crate::numeric::{compensated_sum, linspace};
use crate::schedules::{BandwidthSchedule, StepsizeSchedule};

/// Default number of evaluation points.
pub const DEFAULT_GRID_POINTS: usize = 101;
/// Default margin, in multiples of the largest bandwidth, added on both
/// sides of the data range.
pub const DEFAULT_GRID_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("grid", "at least two points are required"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(invalid("grid", "points must be finite"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid", "points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(invalid("grid", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Self::new(linspace(lo, hi, count))
    }

    /// `count` equally spaced points on `[min(data) - margin * h_max,
    /// max(data) + margin * h_max]`.
    pub fn spanning(data: &[f64], h_max: f64, margin: f64, count: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(DeconvError::SampleTooSmall {
                required: 1,
                actual: 0,
            });
        }
        let (lo, hi) = data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let pad = margin * h_max;
        let (lo, hi) = if pad > 0.0 { (lo - pad, hi + pad) } else { (lo - 1.0, hi + 1.0) };
        Self::uniform(lo, hi, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Linear interpolation of `values` (one per grid point) at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(DeconvError::LengthMismatch(values.len(), self.points.len()));
        }
        if !(x >= self.lo() && x <= self.hi()) {
            return Err(DeconvError::OutsideGrid {
                x,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let idx = self.points.partition_point(|&p| p <= x);
        if idx == 0 {
            return Ok(values[0]);
        }
        let i = idx - 1;
        if self.points[i] == x || i + 1 == self.points.len() {
            return Ok(values[i]);
        }
        let t = (x - self.points[i]) / (self.points[i + 1] - self.points[i]);
        Ok(values[i] + t * (values[i + 1] - values[i]))
    }
}

/// Streaming state of the recursive estimator on a grid.
#[derive(Debug, Clone)]
pub struct RecursiveCdfState {
    grid: EvaluationGrid,
    k: usize,
    values: Vec<f64>,
    sigma: f64,
    stepsize: StepsizeSchedule,
    bandwidth: BandwidthSchedule,
}

impl RecursiveCdfState {
    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    /// Number of observations absorbed so far.
    pub fn count(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn stepsize(&self) -> &StepsizeSchedule {
        &self.stepsize
    }

    pub fn bandwidth(&self) -> &BandwidthSchedule {
        &self.bandwidth
    }

    pub fn update(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(invalid("y", format!("observation must be finite, got {y}")));
        }
        let k = self.k + 1;
        let gamma = self.stepsize.gamma0() / k as f64;
        let h = self.bandwidth.h(k);
        let r = (self.sigma / h) * (self.sigma / h);
        let keep = 1.0 - gamma;
        for (value, &x) in self.values.iter_mut().zip(self.grid.points()) {
            *value = keep * *value + gamma * cdf_kernel_with_ratio((x - y) / h, r);
        }
        self.k = k;
        Ok(())
    }

    pub fn update_all(&mut self, ys: &[f64]) -> Result<()> {
        ys.iter().try_for_each(|&y| self.update(y))
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.grid.interpolate(&self.values, x)
    }
}

pub fn recursive_init(
    grid: EvaluationGrid,
    sigma: f64,
    stepsize: StepsizeSchedule,
    bandwidth: BandwidthSchedule,
) -> Result<RecursiveCdfState> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    let values = vec![0.0; grid.len()];
    Ok(RecursiveCdfState {
        grid,
        k: 0,
        values,
        sigma,
        stepsize,
        bandwidth,
    })
}

pub fn recursive_update(state: &mut RecursiveCdfState, y: f64) -> Result<()> {
    state.update(y)
}

pub fn recursive_evaluate(state: &RecursiveCdfState, x: f64) -> Result<f64> {
    state.evaluate(x)
}

/// Recursive estimate at a single point after absorbing `data` in order.
pub fn recursive_estimate_at(
    data: &[f64],
    x: f64,
    sigma: f64,
    stepsize: &StepsizeSchedule,
    bandwidth: &BandwidthSchedule,
) -> f64 {
    let mut value = 0.0;
    for (i, &y) in data.iter().enumerate() {
        let k = i + 1;
        let gamma = stepsize.gamma0() / k as f64;
        let h = bandwidth.h(k);
        let r = (sigma / h) * (sigma / h);
        value = (1.0 - gamma) * value + gamma * cdf_kernel_with_ratio((x - y) / h, r);
    }
    value
}

/// Batch deconvolution estimator `(1/n) sum_i cal_K_eps((x - Y_i) / h)`.
pub fn nadaraya_estimate(data: &[f64], h: f64, sigma: f64, grid: &EvaluationGrid) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(DeconvError::SampleTooSmall {
            required: 1,
            actual: 0,
        });
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid("h", format!("bandwidth must be positive, got {h}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    let r = (sigma / h) * (sigma / h);
    let n = data.len() as f64;
    Ok(grid
        .points()
        .iter()
        .map(|&x| compensated_sum(data.iter().map(|&y| cdf_kernel_with_ratio((x - y) / h, r))) / n)
        .collect())
}

/// Zero-bandwidth limit of the recursive estimator: the same recursion with
/// the step function `1{Y_k <= x}` in place of the integrated kernel.
pub fn recursive_step_limit(data: &[f64], stepsize: &StepsizeSchedule, grid: &EvaluationGrid) -> Vec<f64> {
    let mut values = vec![0.0; grid.len()];
    for (i, &y) in data.iter().enumerate() {
        let gamma = stepsize.gamma0() / (i + 1) as f64;
        for (v, &x) in values.iter_mut().zip(grid.points()) {
            let step = if y <= x { 1.0 } else { 0.0 };
            *v = (1.0 - gamma) * *v + gamma * step;
        }
    }
    values
}

/// Empirical distribution function on the grid (zero-bandwidth limit of the
/// batch estimator).
pub fn empirical_cdf(data: &[f64], grid: &EvaluationGrid) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    grid.points()
        .iter()
        .map(|&x| sorted.partition_point(|&y| y <= x) as f64 / n)
        .collect()
}

/// Clips to [0, 1] and enforces monotonicity with a running maximum.
/// Never applied inside the estimators or the metrics.
pub fn clip_and_monotonize(values: &[f64]) -> Vec<f64> {
    let mut running = 0.0_f64;
    values
        .iter()
        .map(|v| {
            running = running.max(v.clamp(0.0, 1.0));
            running
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{deconv_cdf_kernel, DeconvKernelParams};

    fn grid() -> EvaluationGrid {
        EvaluationGrid::uniform(-3.0, 3.0, 13).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(EvaluationGrid::new(vec![0.0]).is_err());
        assert!(EvaluationGrid::new(vec![0.0, 0.0]).is_err());
        assert!(EvaluationGrid::new(vec![1.0, 0.0]).is_err());
        assert!(EvaluationGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(EvaluationGrid::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn init_is_all_zero() {
        let s = recursive_init(
            EvaluationGrid::uniform(-1.0, 1.0, 101).unwrap(),
            0.0,
            StepsizeSchedule::new(1.0).unwrap(),
            BandwidthSchedule::new(0.5, 1.0 / 7.0).unwrap(),
        )
        .unwrap();
        assert_eq!(s.count(), 0);
        assert_eq!(s.values().len(), 101);
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_update_with_unit_gain_is_the_kernel() {
        let b = BandwidthSchedule::new(0.6, 1.0 / 7.0).unwrap();
        let mut s = recursive_init(grid(), 0.3, StepsizeSchedule::new(1.0).unwrap(), b).unwrap();
        s.update(0.4).unwrap();
        let p = DeconvKernelParams::new(0.3, 0.6).unwrap();
        for (&x, &v) in s.grid().points().iter().zip(s.values()) {
            assert_eq!(v, deconv_cdf_kernel((x - 0.4) / 0.6, &p));
        }
    }

    #[test]
    fn first_update_with_two_thirds_gain() {
        let b = BandwidthSchedule::new(0.6, 1.0 / 7.0).unwrap();
        let mut s = recursive_init(grid(), 0.3, StepsizeSchedule::new(2.0 / 3.0).unwrap(), b).unwrap();
        s.update(-0.2).unwrap();
        let p = DeconvKernelParams::new(0.3, 0.6).unwrap();
        for (&x, &v) in s.grid().points().iter().zip(s.values()) {
            let want = (2.0 / 3.0) * deconv_cdf_kernel((x + 0.2) / 0.6, &p);
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn update_rejects_non_finite() {
        let b = BandwidthSchedule::new(0.6, 1.0 / 7.0).unwrap();
        let mut s = recursive_init(grid(), 0.3, StepsizeSchedule::new(1.0).unwrap(), b).unwrap();
        assert!(s.update(f64::NAN).is_err());
        assert!(s.update(f64::INFINITY).is_err());
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn evaluate_interpolates_linearly() {
        let b = BandwidthSchedule::new(0.6, 1.0 / 7.0).unwrap();
        let mut s = recursive_init(grid(), 0.1, StepsizeSchedule::new(1.0).unwrap(), b).unwrap();
        s.update_all(&[0.1, -0.7, 1.2]).unwrap();
        let pts = s.grid().points().to_vec();
        let vals = s.values().to_vec();
        assert_eq!(s.evaluate(pts[4]).unwrap(), vals[4]);
        let mid = 0.5 * (pts[4] + pts[5]);
        assert!((s.evaluate(mid).unwrap() - 0.5 * (vals[4] + vals[5])).abs() < 1e-15);
        assert_eq!(s.evaluate(pts[12]).unwrap(), vals[12]);
        assert!(matches!(s.evaluate(3.5), Err(DeconvError::OutsideGrid { .. })));
        assert!(s.evaluate(-3.01).is_err());
    }

    #[test]
    fn nadaraya_single_observation() {
        let g = grid();
        let v = nadaraya_estimate(&[0.25], 0.4, 0.2, &g).unwrap();
        let p = DeconvKernelParams::new(0.2, 0.4).unwrap();
        for (&x, &got) in g.points().iter().zip(&v) {
            assert_eq!(got, deconv_cdf_kernel((x - 0.25) / 0.4, &p));
        }
    }

    #[test]
    fn nadaraya_error_free_upper_tail() {
        let data = [0.3, -1.2, 0.8, 2.0];
        let h = 0.5;
        let g = EvaluationGrid::new(vec![-5.0, 2.0 + 10.0 * h]).unwrap();
        let v = nadaraya_estimate(&data, h, 0.0, &g).unwrap();
        assert!(v[1] >= 0.9999);
    }

    #[test]
    fn nadaraya_rejects_bad_inputs() {
        let g = grid();
        assert!(nadaraya_estimate(&[], 0.4, 0.1, &g).is_err());
        assert!(nadaraya_estimate(&[1.0], 0.0, 0.1, &g).is_err());
        assert!(nadaraya_estimate(&[1.0], -1.0, 0.1, &g).is_err());
    }

    #[test]
    fn single_point_estimate_matches_grid_state() {
        let data = [0.3, -1.2, 0.8, 2.0, -0.1];
        let st = StepsizeSchedule::new(4.0 / 3.0).unwrap();
        let bw = BandwidthSchedule::new(0.7, 1.0 / 7.0).unwrap();
        let mut s = recursive_init(grid(), 0.25, st, bw).unwrap();
        s.update_all(&data).unwrap();
        for (&x, &v) in s.grid().points().iter().zip(s.values()) {
            assert_eq!(recursive_estimate_at(&data, x, 0.25, &st, &bw), v);
        }
    }

    #[test]
    fn step_limits() {
        let g = EvaluationGrid::new(vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        let data = [0.0, 1.0, -0.5, 0.5];
        assert_eq!(empirical_cdf(&data, &g), vec![0.0, 0.5, 0.75, 1.0]);
        let unit = StepsizeSchedule::new(1.0).unwrap();
        let rec = recursive_step_limit(&data, &unit, &g);
        for (a, b) in rec.iter().zip(empirical_cdf(&data, &g)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_and_monotonize_output_is_a_cdf() {
        let out = clip_and_monotonize(&[-0.1, 0.2, 0.15, 0.9, 1.2, 1.05]);
        assert_eq!(out, vec![0.0, 0.2, 0.2, 0.9, 1.0, 1.0]);
    }
}
