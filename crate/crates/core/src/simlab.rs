//! Monte Carlo experiments: contaminated sampling, scoring, scenario runs
//! and pointwise probes of the recursive estimator.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, DeconvError, Result};
use crate::estimators::{
    empirical_cdf, nadaraya_estimate, recursive_estimate_at, recursive_init, recursive_step_limit, EvaluationGrid,
    DEFAULT_GRID_MARGIN, DEFAULT_GRID_POINTS,
};
use crate::kernels::{gauss_cdf, gauss_pdf};
use crate::numeric::{adaptive_simpson_pieces, compensated_sum, mean_and_variance};
use crate::plugin::{
    batch_functionals, optimal_bandwidth_batch, optimal_bandwidth_recursive, recursive_functionals, BandwidthPlan,
    MIN_GAMMA0,
};
use crate::schedules::{BandwidthSchedule, StepsizeSchedule};

pub const DEFAULT_RMRE_THRESHOLD: f64 = 0.01;
pub const MAX_NSR: f64 = 0.5;

/// Signal distributions with closed-form cdf, pdf and pdf derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueDistribution {
    Normal { mean: f64, variance: f64 },
    /// `N(1/2, 1) / 2 + N(-1/2, 1) / 2`
    Mixture,
    Exponential { rate: f64 },
}

impl TrueDistribution {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
            return Err(invalid("distribution", format!("normal needs a positive variance, got {variance}")));
        }
        Ok(Self::Normal { mean, variance })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("distribution", format!("exponential needs a positive rate, got {rate}")));
        }
        Ok(Self::Exponential { rate })
    }

    /// The five signal laws of the simulation tables.
    pub fn table_set() -> [Self; 5] {
        [
            Self::Normal { mean: 0.0, variance: 0.5 },
            Self::Normal { mean: 0.0, variance: 1.0 },
            Self::Normal { mean: 0.0, variance: 2.0 },
            Self::Mixture,
            Self::Exponential { rate: 0.5 },
        ]
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, variance } => gauss_cdf((x - mean) / variance.sqrt()),
            Self::Mixture => 0.5 * (gauss_cdf(x - 0.5) + gauss_cdf(x + 0.5)),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, variance } => {
                let sd = variance.sqrt();
                gauss_pdf((x - mean) / sd) / sd
            }
            Self::Mixture => 0.5 * (gauss_pdf(x - 0.5) + gauss_pdf(x + 0.5)),
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, variance } => -(x - mean) / variance * self.pdf(x),
            Self::Mixture => -0.5 * ((x - 0.5) * gauss_pdf(x - 0.5) + (x + 0.5) * gauss_pdf(x + 0.5)),
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    -rate * rate * (-rate * x).exp()
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Normal { variance, .. } => variance,
            Self::Mixture => 1.25,
            Self::Exponential { rate } => 1.0 / (rate * rate),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Normal { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            Self::Mixture => {
                let z: f64 = StandardNormal.sample(rng);
                if rng.random::<bool>() {
                    z + 0.5
                } else {
                    z - 0.5
                }
            }
            Self::Exponential { rate } => Exp::new(rate).expect("rate checked at construction").sample(rng),
        }
    }

    /// Density of `Y = X + eps` with Laplace(0, sigma) noise, by adaptive
    /// quadrature of `int f_X(y - e) f_eps(e) de` over `|e| <= 40 sigma`.
    pub fn contaminated_pdf(&self, y: f64, sigma: f64) -> Result<f64> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(self.pdf(y));
        }
        let reach = 40.0 * sigma;
        let mut breaks = vec![-reach, 0.0, reach];
        if let Self::Exponential { .. } = self {
            if y.abs() < reach && y != 0.0 {
                breaks.push(y);
            }
        }
        breaks.sort_by(f64::total_cmp);
        let integrand = |e: f64| self.pdf(y - e) * (-e.abs() / sigma).exp() / (2.0 * sigma);
        Ok(adaptive_simpson_pieces(&integrand, &breaks, 1e-8))
    }
}

impl fmt::Display for TrueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mean, variance } => write!(f, "normal({mean};{variance})"),
            Self::Mixture => write!(f, "mixture"),
            Self::Exponential { rate } => write!(f, "exponential({rate})"),
        }
    }
}

impl FromStr for TrueDistribution {
    type Err = DeconvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let args = |prefix: &str| -> Option<Vec<f64>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            inner.split([',', ';']).map(|v| v.trim().parse().ok()).collect()
        };
        if s == "mixture" {
            return Ok(Self::Mixture);
        }
        if let Some(v) = args("normal") {
            if let [mean, variance] = v[..] {
                return Self::normal(mean, variance);
            }
        }
        if let Some(v) = args("exponential") {
            if let [rate] = v[..] {
                return Self::exponential(rate);
            }
        }
        Err(invalid(
            "distribution",
            format!("expected normal(m;v), mixture or exponential(rate), got `{s}`"),
        ))
    }
}

/// Laplace scale giving `Var(eps) / Var(X) = nsr`: `sqrt(nsr var_x / 2)`.
pub fn sigma_from_nsr(var_x: f64, nsr: f64) -> Result<f64> {
    if !(var_x.is_finite() && var_x > 0.0) {
        return Err(invalid("var_x", format!("must be positive, got {var_x}")));
    }
    if !(nsr.is_finite() && nsr >= 0.0) {
        return Err(invalid("nsr", format!("must be nonnegative, got {nsr}")));
    }
    Ok((nsr * var_x / 2.0).sqrt())
}

/// Inverse-cdf Laplace(0, sigma) draw from `u` in (0, 1).
pub fn laplace_from_uniform(u: f64, sigma: f64) -> f64 {
    let c = u - 0.5;
    -sigma * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// RNG stream of replication `k` under master seed `seed`.
pub fn replication_rng(seed: u64, k: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Draws `n` signal values, then `n` Laplace errors, from the same stream.
pub fn sample_contaminated<R: Rng + ?Sized>(
    dist: &TrueDistribution,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    let y = add_laplace_noise(&x, sigma, rng);
    (x, y)
}

/// `x_i + eps_i` with Laplace(0, sigma) errors. One uniform is consumed per
/// value even when `sigma = 0`, so streams stay aligned across noise levels.
pub fn add_laplace_noise<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let u: f64 = Open01.sample(rng);
            if sigma == 0.0 {
                xi
            } else {
                xi + laplace_from_uniform(u, sigma)
            }
        })
        .collect()
}

/// Mean of `|estimate / truth - 1|` over points with `|truth| > threshold`.
pub fn rmre(estimate: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(DeconvError::LengthMismatch(estimate.len(), truth.len()));
    }
    if !(threshold > 0.0) {
        return Err(invalid("rmre_threshold", format!("must be positive, got {threshold}")));
    }
    let errors: Vec<f64> = estimate
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.abs() > threshold)
        .map(|(e, t)| (e / t - 1.0).abs())
        .collect();
    if errors.is_empty() {
        return Err(DeconvError::EmptyMetricSupport(threshold));
    }
    Ok(compensated_sum(errors.iter().copied()) / errors.len() as f64)
}

pub fn pearson_cor(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(DeconvError::LengthMismatch(estimate.len(), truth.len()));
    }
    if estimate.len() < 2 {
        return Err(DeconvError::SampleTooSmall {
            required: 2,
            actual: estimate.len(),
        });
    }
    let (ma, va) = mean_and_variance(estimate);
    let (mb, vb) = mean_and_variance(truth);
    if va == 0.0 || vb == 0.0 {
        return Err(DeconvError::DegenerateSample("correlation of a constant sequence".into()));
    }
    let cov = compensated_sum(estimate.iter().zip(truth).map(|(a, b)| (a - ma) * (b - mb)))
        / (estimate.len() - 1) as f64;
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorVariant {
    Nadaraya,
    Recursive { gamma0: f64 },
}

impl EstimatorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nadaraya => "nadaraya",
            Self::Recursive { .. } => "recursive",
        }
    }

    pub fn gamma0(&self) -> Option<f64> {
        match *self {
            Self::Nadaraya => None,
            Self::Recursive { gamma0 } => Some(gamma0),
        }
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Nadaraya => write!(f, "nadaraya"),
            Self::Recursive { gamma0 } => write!(f, "recursive({gamma0})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub distribution: TrueDistribution,
    pub n: usize,
    pub nsr: f64,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorVariant>,
    pub grid_points: usize,
    pub grid_margin: f64,
    pub rmre_threshold: f64,
}

impl ScenarioConfig {
    /// Nadaraya plus recursive estimators with `gamma0` in {2/3, 1, 4/3, 5/3}.
    pub fn table_estimators() -> Vec<EstimatorVariant> {
        let mut v = vec![EstimatorVariant::Nadaraya];
        v.extend([2.0 / 3.0, 1.0, 4.0 / 3.0, 5.0 / 3.0].map(|gamma0| EstimatorVariant::Recursive { gamma0 }));
        v
    }

    pub fn new(distribution: TrueDistribution, n: usize, nsr: f64, reps: usize, seed: u64) -> Self {
        Self {
            distribution,
            n,
            nsr,
            reps,
            seed,
            estimators: Self::table_estimators(),
            grid_points: DEFAULT_GRID_POINTS,
            grid_margin: DEFAULT_GRID_MARGIN,
            rmre_threshold: DEFAULT_RMRE_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(invalid("n", format!("need at least 5 observations, got {}", self.n)));
        }
        if self.reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        if !(self.nsr.is_finite() && (0.0..=MAX_NSR).contains(&self.nsr)) {
            return Err(invalid("nsr", format!("must lie in [0, 0.5], got {}", self.nsr)));
        }
        if self.estimators.is_empty() {
            return Err(invalid("estimators", "the estimator list is empty"));
        }
        for e in &self.estimators {
            if let Some(g) = e.gamma0() {
                if !(g.is_finite() && g > MIN_GAMMA0) {
                    return Err(invalid("gamma0", format!("must exceed 2/7, got {g}")));
                }
            }
        }
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "need at least two grid points"));
        }
        if !(self.grid_margin.is_finite() && self.grid_margin >= 0.0) {
            return Err(invalid("grid_margin", format!("must be nonnegative, got {}", self.grid_margin)));
        }
        if !(self.rmre_threshold > 0.0 && self.rmre_threshold < 1.0) {
            return Err(invalid(
                "rmre_threshold",
                format!("must lie in (0, 1), got {}", self.rmre_threshold),
            ));
        }
        Ok(())
    }

    pub fn sigma(&self) -> Result<f64> {
        sigma_from_nsr(self.distribution.variance(), self.nsr)
    }
}

/// Score of one estimator on one replication; `None` marks an invalid plan
/// or an unscorable estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationScore {
    pub rmre: f64,
    pub cor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub estimator: EstimatorVariant,
    pub mean_rmre: f64,
    pub mean_cor: f64,
    pub cpu_seconds: f64,
    pub excluded_reps: usize,
    /// Indexed by replication.
    pub scores: Vec<Option<ReplicationScore>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub config: ScenarioConfig,
    pub sigma: f64,
    pub estimators: Vec<EstimatorReport>,
}

impl MetricsReport {
    pub fn get(&self, estimator: EstimatorVariant) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|r| r.estimator == estimator)
    }
}

struct Outcome {
    score: Option<ReplicationScore>,
    seconds: f64,
}

enum Fitted {
    Values(Vec<f64>),
    Invalid,
}

fn run_replication(cfg: &ScenarioConfig, sigma: f64, k: usize) -> Vec<Outcome> {
    let mut rng = replication_rng(cfg.seed, k as u64);
    let (_, y) = sample_contaminated(&cfg.distribution, cfg.n, sigma, &mut rng);
    let n = cfg.n;

    // Plans. The recursive functionals are shared by every gamma0.
    let mut seconds = vec![0.0; cfg.estimators.len()];
    let mut plans: Vec<Option<BandwidthPlan>> = vec![None; cfg.estimators.len()];
    if sigma > 0.0 {
        let needs_recursive = cfg.estimators.iter().any(|e| e.gamma0().is_some());
        let start = Instant::now();
        let recursive = if needs_recursive {
            recursive_functionals(&y, sigma).ok()
        } else {
            None
        };
        let shared = start.elapsed().as_secs_f64();
        for (i, est) in cfg.estimators.iter().enumerate() {
            let start = Instant::now();
            plans[i] = match *est {
                EstimatorVariant::Nadaraya => batch_functionals(&y, sigma)
                    .and_then(|f| optimal_bandwidth_batch(f.i1, f.i2, sigma, n))
                    .ok(),
                EstimatorVariant::Recursive { gamma0 } => recursive
                    .and_then(|f| optimal_bandwidth_recursive(f.i1, f.i2, sigma, gamma0, n).ok()),
            };
            seconds[i] += start.elapsed().as_secs_f64();
            if est.gamma0().is_some() {
                seconds[i] += shared;
            }
        }
    }

    let h_max = plans.iter().flatten().map(BandwidthPlan::max_bandwidth).fold(0.0, f64::max);
    let grid = match EvaluationGrid::spanning(&y, h_max, cfg.grid_margin, cfg.grid_points) {
        Ok(g) => g,
        Err(_) => {
            return seconds
                .into_iter()
                .map(|seconds| Outcome { score: None, seconds })
                .collect()
        }
    };
    let truth: Vec<f64> = grid.points().iter().map(|&x| cfg.distribution.cdf(x)).collect();

    cfg.estimators
        .iter()
        .zip(plans)
        .zip(seconds)
        .map(|((est, plan), mut seconds)| {
            let start = Instant::now();
            let fitted = fit(est, plan, &y, sigma, &grid);
            seconds += start.elapsed().as_secs_f64();
            let score = match fitted {
                Fitted::Values(v) => match (rmre(&v, &truth, cfg.rmre_threshold), pearson_cor(&v, &truth)) {
                    (Ok(rmre), Ok(cor)) => Some(ReplicationScore { rmre, cor }),
                    _ => None,
                },
                Fitted::Invalid => None,
            };
            Outcome { score, seconds }
        })
        .collect()
}

fn fit(est: &EstimatorVariant, plan: Option<BandwidthPlan>, y: &[f64], sigma: f64, grid: &EvaluationGrid) -> Fitted {
    if sigma == 0.0 {
        return match *est {
            EstimatorVariant::Nadaraya => Fitted::Values(empirical_cdf(y, grid)),
            EstimatorVariant::Recursive { gamma0 } => match StepsizeSchedule::new(gamma0) {
                Ok(s) => Fitted::Values(recursive_step_limit(y, &s, grid)),
                Err(_) => Fitted::Invalid,
            },
        };
    }
    let Some(plan) = plan else {
        return Fitted::Invalid;
    };
    let values = match *est {
        EstimatorVariant::Nadaraya => nadaraya_estimate(y, plan.bandwidth_at_n(), sigma, grid),
        EstimatorVariant::Recursive { gamma0 } => StepsizeSchedule::new(gamma0)
            .and_then(|s| Ok((s, plan.schedule()?)))
            .and_then(|(s, b)| recursive_init(grid.clone(), sigma, s, b))
            .and_then(|mut state| {
                state.update_all(y)?;
                Ok(state.into_values())
            }),
    };
    match values {
        Ok(v) => Fitted::Values(v),
        Err(_) => Fitted::Invalid,
    }
}

/// Runs every replication of a scenario and averages the scores of each
/// estimator over the replications where its plan was valid.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let sigma = cfg.sigma()?;
    let outcomes: Vec<Vec<Outcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|k| run_replication(cfg, sigma, k))
        .collect();

    let estimators = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &estimator)| {
            let scores: Vec<Option<ReplicationScore>> = outcomes.iter().map(|o| o[i].score).collect();
            let valid: Vec<ReplicationScore> = scores.iter().flatten().copied().collect();
            let count = valid.len() as f64;
            EstimatorReport {
                estimator,
                mean_rmre: compensated_sum(valid.iter().map(|s| s.rmre)) / count,
                mean_cor: compensated_sum(valid.iter().map(|s| s.cor)) / count,
                cpu_seconds: outcomes.iter().map(|o| o[i].seconds).sum(),
                excluded_reps: cfg.reps - valid.len(),
                scores,
            }
        })
        .collect();

    Ok(MetricsReport {
        config: cfg.clone(),
        sigma,
        estimators,
    })
}

/// Pointwise probe of the recursive estimator with `gamma_k = gamma0 / k`
/// and `h_k = bandwidth_c * k^-1/7`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub distribution: TrueDistribution,
    pub x: f64,
    pub n: usize,
    pub gamma0: f64,
    pub sigma: f64,
    pub bandwidth_c: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 > MIN_GAMMA0) {
            return Err(invalid("gamma0", format!("must exceed 2/7, got {}", self.gamma0)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be nonnegative, got {}", self.sigma)));
        }
        if !self.x.is_finite() {
            return Err(invalid("x", "must be finite"));
        }
        if self.n == 0 {
            return Err(invalid("n", "need at least one observation"));
        }
        if self.reps < 3 {
            return Err(invalid("reps", format!("need at least 3 replications, got {}", self.reps)));
        }
        Ok(())
    }

    fn bandwidth(&self) -> Result<BandwidthSchedule> {
        BandwidthSchedule::new(self.bandwidth_c, 1.0 / 7.0)
    }

    /// `h_n`
    pub fn final_bandwidth(&self) -> Result<f64> {
        self.bandwidth()?.at(self.n)
    }

    /// `gamma_n`
    pub fn final_stepsize(&self) -> f64 {
        self.gamma0 / self.n as f64
    }
}

/// Monte Carlo draws of `F_n(x)`, indexed by replication.
pub fn probe_draws(cfg: &ProbeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let stepsize = StepsizeSchedule::new(cfg.gamma0)?;
    let bandwidth = cfg.bandwidth()?;
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|k| {
            let mut rng = replication_rng(cfg.seed, k as u64);
            let (_, y) = sample_contaminated(&cfg.distribution, cfg.n, cfg.sigma, &mut rng);
            recursive_estimate_at(&y, cfg.x, cfg.sigma, &stepsize, &bandwidth)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVarianceProbe {
    pub mc_bias: f64,
    pub mc_var: f64,
    /// Standard error of `mc_bias`.
    pub mc_bias_se: f64,
    pub predicted_bias: f64,
    pub predicted_var: f64,
}

/// Asymptotic bias `h_n^2 f_X'(x) / (2 (1 - 2 a xi))` and variance
/// `sigma^4 / (4 sqrt pi) gamma_n h_n^-3 f_Y(x) / (2 - (1 - 3a) xi)` with
/// `a = 1/7`, `xi = 1 / gamma0`.
pub fn predicted_bias_variance(cfg: &ProbeConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let a = 1.0 / 7.0;
    let xi = 1.0 / cfg.gamma0;
    let h = cfg.final_bandwidth()?;
    let bias = h * h * cfg.distribution.pdf_deriv(cfg.x) / (2.0 * (1.0 - 2.0 * a * xi));
    let fy = cfg.distribution.contaminated_pdf(cfg.x, cfg.sigma)?;
    let var = cfg.sigma.powi(4) / (4.0 * std::f64::consts::PI.sqrt()) * cfg.final_stepsize() / h.powi(3)
        / (2.0 - (1.0 - 3.0 * a) * xi)
        * fy;
    Ok((bias, var))
}

pub fn bias_variance_probe(cfg: &ProbeConfig) -> Result<BiasVarianceProbe> {
    let (predicted_bias, predicted_var) = predicted_bias_variance(cfg)?;
    let draws = probe_draws(cfg)?;
    let (mean, var) = mean_and_variance(&draws);
    Ok(BiasVarianceProbe {
        mc_bias: mean - cfg.distribution.cdf(cfg.x),
        mc_var: var,
        mc_bias_se: (var / draws.len() as f64).sqrt(),
        predicted_bias,
        predicted_var,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalitySummary {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Largest gap between the sorted standardized draws and the matching
    /// standard normal quantiles `(i - 1/2) / m`.
    pub qq_max_deviation: f64,
    pub reps: usize,
}

/// Shape of the standardized draws `(F_n(x) - mean) / sd`, which carry the
/// same law as `sqrt(h_n^3 / gamma_n) (F_n(x) - mean)` up to scale.
pub fn clt_probe(cfg: &ProbeConfig) -> Result<NormalitySummary> {
    let draws = probe_draws(cfg)?;
    normality_summary(&draws)
}

pub fn normality_summary(values: &[f64]) -> Result<NormalitySummary> {
    if values.len() < 3 {
        return Err(DeconvError::SampleTooSmall {
            required: 3,
            actual: values.len(),
        });
    }
    let (mean, var) = mean_and_variance(values);
    if !(var > 0.0) {
        return Err(DeconvError::DegenerateSample("all probe values are equal".into()));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    let m = z.len() as f64;
    let m3 = compensated_sum(z.iter().map(|v| v.powi(3))) / m;
    let m2 = compensated_sum(z.iter().map(|v| v * v)) / m;
    let m4 = compensated_sum(z.iter().map(|v| v.powi(4))) / m;
    z.sort_by(f64::total_cmp);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let qq = z
        .iter()
        .enumerate()
        .map(|(i, v)| (v - std_normal.inverse_cdf((i as f64 + 0.5) / m)).abs())
        .fold(0.0, f64::max);
    Ok(NormalitySummary {
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        qq_max_deviation: qq,
        reps: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_from_nsr_examples() {
        assert!((sigma_from_nsr(1.0, 0.2).unwrap() - 0.316_227_766).abs() < 1e-8);
        assert_eq!(sigma_from_nsr(3.7, 0.0).unwrap(), 0.0);
        assert!((sigma_from_nsr(2.0, 0.05).unwrap() - 0.05f64.sqrt()).abs() < 1e-15);
        assert!(sigma_from_nsr(-1.0, 0.1).is_err());
        assert!(sigma_from_nsr(1.0, -0.1).is_err());
    }

    #[test]
    fn laplace_inverse_cdf() {
        assert_eq!(laplace_from_uniform(0.5, 2.0), 0.0);
        // P(eps <= -sigma ln 2) = 1/4
        assert!((laplace_from_uniform(0.25, 1.0) + 2f64.ln()).abs() < 1e-15);
        assert!((laplace_from_uniform(0.75, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn laplace_moments() {
        let dist = TrueDistribution::Normal { mean: 0.0, variance: 1.0 };
        let (x, y) = sample_contaminated(&dist, 100_000, 1.0, &mut replication_rng(7, 0));
        let eps: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let (m, v) = mean_and_variance(&eps);
        assert!(m.abs() < 0.01);
        assert!((1.96..=2.04).contains(&v));
    }

    #[test]
    fn zero_noise_leaves_signal_untouched() {
        let (x, y) = sample_contaminated(&TrueDistribution::Mixture, 50, 0.0, &mut replication_rng(1, 3));
        assert_eq!(x, y);
    }

    #[test]
    fn sampling_is_reproducible_per_stream() {
        let d = TrueDistribution::Exponential { rate: 0.5 };
        let a = sample_contaminated(&d, 20, 0.3, &mut replication_rng(11, 4));
        let b = sample_contaminated(&d, 20, 0.3, &mut replication_rng(11, 4));
        let c = sample_contaminated(&d, 20, 0.3, &mut replication_rng(11, 5));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rmre_examples() {
        assert_eq!(rmre(&[0.2, 0.5], &[0.2, 0.5], 0.01).unwrap(), 0.0);
        assert!((rmre(&[1.1], &[1.0], 0.01).unwrap() - 0.1).abs() < 1e-15);
        let v = rmre(&[0.5, 0.6], &[0.005, 0.5], 0.01).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        assert!(matches!(rmre(&[0.1], &[0.001], 0.01), Err(DeconvError::EmptyMetricSupport(_))));
        assert!(rmre(&[0.1, 0.2], &[0.5], 0.01).is_err());
    }

    #[test]
    fn pearson_examples() {
        let t = [0.1, 0.4, 0.5, 0.9];
        assert!((pearson_cor(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let affine: Vec<f64> = t.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_cor(&affine, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_cor(&neg, &t).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_cor(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn distribution_closed_forms() {
        for d in TrueDistribution::table_set() {
            // pdf is the derivative of cdf, pdf_deriv the derivative of pdf
            for x in [-1.3, 0.4, 2.2] {
                let e = 1e-5;
                let dc = (d.cdf(x + e) - d.cdf(x - e)) / (2.0 * e);
                assert!((dc - d.pdf(x)).abs() < 1e-7, "{d} cdf at {x}");
                let dp = (d.pdf(x + e) - d.pdf(x - e)) / (2.0 * e);
                assert!((dp - d.pdf_deriv(x)).abs() < 1e-7, "{d} pdf at {x}");
            }
            let mut rng = replication_rng(3, 0);
            let draws: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
            let (_, v) = mean_and_variance(&draws);
            assert!((v / d.variance() - 1.0).abs() < 0.03, "{d} variance {v}");
        }
    }

    #[test]
    fn distribution_names_round_trip() {
        for d in TrueDistribution::table_set() {
            assert_eq!(d.to_string().parse::<TrueDistribution>().unwrap(), d);
        }
        assert!("normal(0)".parse::<TrueDistribution>().is_err());
        assert!("normal(0,-1)".parse::<TrueDistribution>().is_err());
        assert!("cauchy".parse::<TrueDistribution>().is_err());
    }

    #[test]
    fn contaminated_density_integrates_to_one() {
        for d in TrueDistribution::table_set() {
            let total = crate::numeric::simpson(|y| d.contaminated_pdf(y, 0.5).unwrap(), -30.0, 60.0, 9000);
            assert!((total - 1.0).abs() < 1e-4, "{d}: {total}");
        }
    }

    #[test]
    fn contaminated_density_normal_closed_form() {
        // N(0,1) + Laplace(sigma) has a closed form in terms of Phi.
        let d = TrueDistribution::Normal { mean: 0.0, variance: 1.0 };
        let s: f64 = 0.6;
        let a = 1.0 / s;
        for y in [-2.0, 0.0, 0.7, 3.0] {
            let want = 0.5 * a * (0.5 * a * a).exp()
                * ((-a * y).exp() * gauss_cdf(y - a) + (a * y).exp() * gauss_cdf(-y - a));
            assert!((d.contaminated_pdf(y, s).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn scenario_validation() {
        let base = ScenarioConfig::new(TrueDistribution::Mixture, 25, 0.1, 2, 1);
        assert!(base.validate().is_ok());
        let mut c = base.clone();
        c.estimators.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.n = 4;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.nsr = -0.1;
        assert!(c.validate().is_err());
        let mut c = base;
        c.estimators = vec![EstimatorVariant::Recursive { gamma0: 0.2 }];
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_replication_is_deterministic() {
        let cfg = ScenarioConfig::new(TrueDistribution::Normal { mean: 0.0, variance: 0.5 }, 25, 0.05, 1, 99);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        for (x, y) in a.estimators.iter().zip(&b.estimators) {
            assert_eq!(x.scores, y.scores);
            assert_eq!(x.mean_rmre.to_bits(), y.mean_rmre.to_bits());
        }
    }

    #[test]
    fn probe_predictions_at_unit_gain() {
        let cfg = ProbeConfig {
            distribution: TrueDistribution::Normal { mean: 0.0, variance: 1.0 },
            x: 1.0,
            n: 128,
            gamma0: 1.0,
            sigma: 1.0,
            bandwidth_c: 2.0,
            reps: 10,
            seed: 0,
        };
        let (bias, var) = predicted_bias_variance(&cfg).unwrap();
        let h = 1.0;
        assert!((bias - 0.7 * h * h * cfg.distribution.pdf_deriv(1.0)).abs() < 1e-14);
        let fy = cfg.distribution.contaminated_pdf(1.0, 1.0).unwrap();
        let want = 0.7 / (4.0 * std::f64::consts::PI.sqrt()) / 128.0 * fy;
        assert!((var - want).abs() < 1e-14);
        let mut bad = cfg;
        bad.gamma0 = 2.0 / 7.0;
        assert!(bias_variance_probe(&bad).is_err());
        assert!(clt_probe(&bad).is_err());
    }

    #[test]
    fn normality_summary_rejects_constants() {
        assert!(normality_summary(&[0.3; 10]).is_err());
        let v = normality_summary(&[-1.0, 0.0, 1.0]).unwrap();
        assert!(v.skewness.abs() < 1e-12);
    }
}
