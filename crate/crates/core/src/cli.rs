//! Command-line front end: `simulate`, `estimate`, `kernels` and `verify`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config or argument
//! parse error, 3 invalid parameter, 4 data parse error, 5 degenerate data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use crate::error::DeconvError;
use crate::estimators::{nadaraya_estimate, recursive_init, EvaluationGrid, DEFAULT_GRID_MARGIN, DEFAULT_GRID_POINTS};
use crate::kernels::{
    cdf_kernel_with_ratio, deconv_cdf_kernel, deconv_kernel, deconv_kernel_deriv, fourier_inversion_oracle, gauss_cdf,
    gauss_pdf, kernel_deriv_with_ratio, kernel_with_ratio, DeconvKernelParams,
};
use crate::numeric::mean_and_variance;
use crate::plugin::{
    amise_batch, amise_recursive, batch_functionals, optimal_bandwidth_batch, optimal_bandwidth_recursive,
    recursive_functionals, stepsize_penalty, BandwidthPlan, MIN_GAMMA0,
};
use crate::schedules::{BandwidthSchedule, StepsizeSchedule};
use crate::simlab::{
    add_laplace_noise, replication_rng, run_scenario, sigma_from_nsr, EstimatorVariant, ScenarioConfig,
    TrueDistribution, DEFAULT_RMRE_THRESHOLD,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_INVALID: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_DEGENERATE: u8 = 5;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "deconv-cdf", version, about = "Deconvolution estimators of a distribution function")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte Carlo scenarios described by a key = value config file.
    Simulate(SimulateArgs),
    /// Estimate the distribution function of a single-column dataset.
    Estimate(EstimateArgs),
    /// Tabulate the deconvoluting kernel family.
    Kernels(KernelsArgs),
    /// Check analytic constants, the kernel oracle and reduction identities.
    Verify,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub rmre_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noise-to-signal ratio of the injected Laplace errors.
    #[arg(long)]
    pub nsr: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Treat the data as already contaminated; requires --sigma.
    #[arg(long)]
    pub already_contaminated: bool,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KernelsArgs {
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub r: f64,
    #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
    pub from: f64,
    #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
    pub to: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<DeconvError> for Failure {
    fn from(e: DeconvError) -> Self {
        let code = match e {
            DeconvError::DegenerateSample(_)
            | DeconvError::SampleTooSmall { .. }
            | DeconvError::NonPositiveFunctional { .. } => EXIT_DEGENERATE,
            _ => EXIT_INVALID,
        };
        Self::new(code, e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::new(EXIT_INVALID, e)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<u8> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, stdout),
        Command::Estimate(args) => cmd_estimate(&args, stdout),
        Command::Kernels(args) => cmd_kernels(&args, stdout),
        Command::Verify => Ok(cmd_verify(&VerifyHooks::default(), stdout).map_err(io_failure)?),
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => write_atomic(path, text).map_err(io_failure),
        None => stdout.write_all(text.as_bytes()).map_err(io_failure),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Accepts plain decimals and fractions such as `2/3`.
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Nadaraya,
    Recursive,
}

/// Resolved simulate configuration. Every field has a default; the
/// defaults reproduce the layout of the first simulation table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub seed: u64,
    pub distributions: Vec<TrueDistribution>,
    pub sizes: Vec<usize>,
    pub nsr: Vec<f64>,
    pub reps: usize,
    pub estimators: Vec<EstimatorKind>,
    pub gamma0: Vec<f64>,
    pub grid_points: usize,
    pub grid_margin: f64,
    pub rmre_threshold: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            distributions: vec![TrueDistribution::Normal { mean: 0.0, variance: 0.5 }],
            sizes: vec![25, 50, 150],
            nsr: vec![0.05, 0.1, 0.2],
            reps: 500,
            estimators: vec![EstimatorKind::Nadaraya, EstimatorKind::Recursive],
            gamma0: vec![2.0 / 3.0, 1.0, 4.0 / 3.0, 5.0 / 3.0],
            grid_points: DEFAULT_GRID_POINTS,
            grid_margin: DEFAULT_GRID_MARGIN,
            rmre_threshold: DEFAULT_RMRE_THRESHOLD,
        }
    }
}

const CONFIG_PREFIX: &str = "# config:";

impl SimulateConfig {
    pub const KEYS: [&'static str; 10] = [
        "seed",
        "distributions",
        "n",
        "nsr",
        "reps",
        "estimators",
        "gamma0",
        "grid_points",
        "grid_margin",
        "rmre_threshold",
    ];

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped, except that when the text contains
    /// `# config:` lines (the header of a previous output) only those
    /// are read.
    pub fn parse(text: &str) -> CliResult<Self> {
        let header_mode = text.lines().any(|l| l.trim_start().starts_with(CONFIG_PREFIX));
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = raw.trim();
            let line = if header_mode {
                match trimmed.strip_prefix(CONFIG_PREFIX) {
                    Some(rest) => rest.trim(),
                    None => continue,
                }
            } else {
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                trimmed
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_failure(format!("line {line_no}: expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            let Some(&known) = Self::KEYS.iter().find(|k| **k == key) else {
                return Err(parse_failure(format!("line {line_no}: unknown key `{key}`")));
            };
            if seen.contains(&known) {
                return Err(parse_failure(format!("line {line_no}: duplicate key `{key}`")));
            }
            seen.push(known);
            cfg.set(known, value)
                .map_err(|msg| parse_failure(format!("line {line_no}: key `{key}`: {msg}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let tokens: Vec<&str> = value.split_whitespace().collect();
        let one = || -> std::result::Result<&str, String> {
            match tokens[..] {
                [t] => Ok(t),
                _ => Err(format!("expected a single value, got `{value}`")),
            }
        };
        let number = |t: &str| parse_number(t).ok_or_else(|| format!("`{t}` is not a number"));
        let count = |t: &str| t.parse::<usize>().map_err(|_| format!("`{t}` is not a nonnegative integer"));
        match key {
            "seed" => self.seed = one()?.parse().map_err(|_| format!("`{value}` is not a u64"))?,
            "distributions" => {
                self.distributions = tokens
                    .iter()
                    .map(|t| t.parse::<TrueDistribution>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "n" => self.sizes = tokens.iter().map(|t| count(t)).collect::<std::result::Result<_, _>>()?,
            "nsr" => self.nsr = tokens.iter().map(|t| number(t)).collect::<std::result::Result<_, _>>()?,
            "reps" => self.reps = count(one()?)?,
            "estimators" => {
                self.estimators = tokens
                    .iter()
                    .map(|t| match *t {
                        "nadaraya" => Ok(EstimatorKind::Nadaraya),
                        "recursive" => Ok(EstimatorKind::Recursive),
                        other => Err(format!("unknown estimator `{other}`")),
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "gamma0" => self.gamma0 = tokens.iter().map(|t| number(t)).collect::<std::result::Result<_, _>>()?,
            "grid_points" => self.grid_points = count(one()?)?,
            "grid_margin" => self.grid_margin = number(one()?)?,
            "rmre_threshold" => self.rmre_threshold = number(one()?)?,
            _ => unreachable!("key checked against KEYS"),
        }
        Ok(())
    }

    fn variants(&self) -> Vec<EstimatorVariant> {
        let mut v = Vec::new();
        for kind in &self.estimators {
            match kind {
                EstimatorKind::Nadaraya => v.push(EstimatorVariant::Nadaraya),
                EstimatorKind::Recursive => {
                    v.extend(self.gamma0.iter().map(|&gamma0| EstimatorVariant::Recursive { gamma0 }))
                }
            }
        }
        v
    }

    /// Scenarios in output order: distribution, then NSR, then n.
    pub fn scenarios(&self) -> CliResult<Vec<ScenarioConfig>> {
        let invalid = |key: &str, msg: &str| Failure::new(EXIT_INVALID, anyhow!("key `{key}`: {msg}"));
        if self.estimators.is_empty() {
            return Err(invalid("estimators", "the estimator list is empty"));
        }
        if self.estimators.contains(&EstimatorKind::Recursive) && self.gamma0.is_empty() {
            return Err(invalid("gamma0", "recursive estimators need at least one gamma0"));
        }
        if self.distributions.is_empty() {
            return Err(invalid("distributions", "the distribution list is empty"));
        }
        if self.sizes.is_empty() {
            return Err(invalid("n", "the sample size list is empty"));
        }
        if self.nsr.is_empty() {
            return Err(invalid("nsr", "the NSR list is empty"));
        }
        let mut out = Vec::new();
        for &distribution in &self.distributions {
            for &nsr in &self.nsr {
                for &n in &self.sizes {
                    let cfg = ScenarioConfig {
                        distribution,
                        n,
                        nsr,
                        reps: self.reps,
                        seed: self.seed,
                        estimators: self.variants(),
                        grid_points: self.grid_points,
                        grid_margin: self.grid_margin,
                        rmre_threshold: self.rmre_threshold,
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }

    /// `# config: key = value` lines that [`SimulateConfig::parse`] reads
    /// back into an identical configuration.
    pub fn header_lines(&self) -> String {
        let join = |v: Vec<String>| v.join(" ");
        let values = [
            self.seed.to_string(),
            join(self.distributions.iter().map(|d| d.to_string()).collect()),
            join(self.sizes.iter().map(|n| n.to_string()).collect()),
            join(self.nsr.iter().map(|v| v.to_string()).collect()),
            self.reps.to_string(),
            join(self
                .estimators
                .iter()
                .map(|e| match e {
                    EstimatorKind::Nadaraya => "nadaraya".to_string(),
                    EstimatorKind::Recursive => "recursive".to_string(),
                })
                .collect()),
            join(self.gamma0.iter().map(|v| v.to_string()).collect()),
            self.grid_points.to_string(),
            self.grid_margin.to_string(),
            self.rmre_threshold.to_string(),
        ];
        let mut s = String::new();
        for (key, value) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(s, "{CONFIG_PREFIX} {key} = {value}");
        }
        s
    }
}

fn parse_failure(msg: String) -> Failure {
    Failure::new(EXIT_PARSE, anyhow!(msg))
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<u8> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(|e| Failure::new(EXIT_PARSE, e))?;
            SimulateConfig::parse(&text)?
        }
        None => SimulateConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(g) = args.grid_points {
        cfg.grid_points = g;
    }
    if let Some(t) = args.rmre_threshold {
        cfg.rmre_threshold = t;
    }
    let scenarios = cfg.scenarios()?;

    let mut text = format!("# deconv-cdf {VERSION} simulate\n");
    text.push_str(&cfg.header_lines());
    text.push_str("scenario_id,distribution,n,nsr,estimator,gamma0,mean_rmre,mean_cor,cpu_seconds,excluded_reps\n");
    for (i, scenario) in scenarios.iter().enumerate() {
        let report = run_scenario(scenario)?;
        for e in &report.estimators {
            let gamma0 = e.estimator.gamma0().map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{:.3},{}",
                i + 1,
                scenario.distribution,
                scenario.n,
                scenario.nsr,
                e.estimator.name(),
                gamma0,
                e.mean_rmre,
                e.mean_cor,
                e.cpu_seconds,
                e.excluded_reps
            );
        }
    }
    emit(&text, args.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

/// Reads one number per line. Blank lines and `#` comments are skipped;
/// anything else that does not parse fails with its 1-based line number.
pub fn read_single_column(text: &str) -> CliResult<Vec<f64>> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.strip_suffix(',').unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(Failure::new(
                    EXIT_DATA,
                    anyhow!("line {}: `{}` is not a finite number", idx + 1, line),
                ))
            }
        }
    }
    Ok(values)
}

/// Output of the estimate pipeline on a single dataset.
#[derive(Debug, Clone)]
pub struct EstimateSummary {
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub f_recursive: Vec<f64>,
    pub f_nadaraya: Vec<f64>,
    pub recursive_plan: BandwidthPlan,
    pub batch_plan: BandwidthPlan,
    pub i1_recursive: f64,
    pub i2_recursive: f64,
    pub i1_batch: f64,
    pub i2_batch: f64,
}

/// Runs both plug-in pipelines and both estimators on contaminated data.
pub fn estimate_pipeline(y: &[f64], sigma: f64, gamma0: f64, grid_points: usize) -> CliResult<EstimateSummary> {
    let rec = recursive_functionals(y, sigma)?;
    let bat = batch_functionals(y, sigma)?;
    let n = y.len();
    let recursive_plan = optimal_bandwidth_recursive(rec.i1, rec.i2, sigma, gamma0, n)?;
    let batch_plan = optimal_bandwidth_batch(bat.i1, bat.i2, sigma, n)?;
    let h_max = recursive_plan.max_bandwidth().max(batch_plan.max_bandwidth());
    let grid = EvaluationGrid::spanning(y, h_max, DEFAULT_GRID_MARGIN, grid_points)?;
    let mut state = recursive_init(grid.clone(), sigma, StepsizeSchedule::new(gamma0)?, recursive_plan.schedule()?)?;
    state.update_all(y)?;
    let f_nadaraya = nadaraya_estimate(y, batch_plan.bandwidth_at_n(), sigma, &grid)?;
    Ok(EstimateSummary {
        sigma,
        grid: grid.points().to_vec(),
        f_recursive: state.into_values(),
        f_nadaraya,
        recursive_plan,
        batch_plan,
        i1_recursive: rec.i1,
        i2_recursive: rec.i2,
        i1_batch: bat.i1,
        i2_batch: bat.i2,
    })
}

pub fn cmd_estimate(args: &EstimateArgs, stdout: &mut dyn Write) -> CliResult<u8> {
    if !(args.gamma0.is_finite() && args.gamma0 > MIN_GAMMA0) {
        return Err(Failure::new(EXIT_INVALID, anyhow!("--gamma0 must exceed 2/7, got {}", args.gamma0)));
    }
    if args.grid_points < 2 {
        return Err(Failure::new(EXIT_INVALID, anyhow!("--grid-points must be at least 2")));
    }
    let text = fs::read_to_string(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))
        .map_err(|e| Failure::new(EXIT_DATA, e))?;
    let data = read_single_column(&text)?;
    if data.len() < 5 {
        return Err(Failure::new(
            EXIT_DEGENERATE,
            anyhow!("need at least 5 observations, got {}", data.len()),
        ));
    }
    let (_, var) = mean_and_variance(&data);
    if !(var > 0.0) {
        return Err(Failure::new(EXIT_DEGENERATE, anyhow!("all observations are equal")));
    }

    let (y, sigma, mode) = if args.already_contaminated {
        let sigma = args
            .sigma
            .ok_or_else(|| Failure::new(EXIT_INVALID, anyhow!("--already-contaminated requires --sigma")))?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Failure::new(EXIT_INVALID, anyhow!("--sigma must be positive, got {sigma}")));
        }
        (data, sigma, "contaminated")
    } else {
        let nsr = args
            .nsr
            .ok_or_else(|| Failure::new(EXIT_INVALID, anyhow!("--nsr is required unless --already-contaminated")))?;
        if !(nsr.is_finite() && nsr > 0.0) {
            return Err(Failure::new(EXIT_INVALID, anyhow!("--nsr must be positive, got {nsr}")));
        }
        let sigma = sigma_from_nsr(var, nsr)?;
        let mut rng = replication_rng(args.seed, 0);
        (add_laplace_noise(&data, sigma, &mut rng), sigma, "clean")
    };

    let s = estimate_pipeline(&y, sigma, args.gamma0, args.grid_points)?;
    let h_recursive = s.recursive_plan.bandwidth_at_n();
    let h_nadaraya = s.batch_plan.bandwidth_at_n();
    let mut out = format!("# deconv-cdf {VERSION} estimate\n");
    let _ = writeln!(out, "# config: data = {}", args.data.display());
    let _ = writeln!(out, "# config: input = {mode}");
    let _ = writeln!(out, "# config: nsr = {}", args.nsr.map(|v| v.to_string()).unwrap_or_default());
    let _ = writeln!(out, "# config: sigma = {sigma}");
    let _ = writeln!(out, "# config: gamma0 = {}", args.gamma0);
    let _ = writeln!(out, "# config: seed = {}", args.seed);
    let _ = writeln!(out, "# config: grid_points = {}", args.grid_points);
    let _ = writeln!(out, "# summary: n = {}", y.len());
    let _ = writeln!(out, "# summary: c_recursive = {}", s.recursive_plan.c);
    let _ = writeln!(out, "# summary: c_nadaraya = {}", s.batch_plan.c);
    out.push_str(
        "x,F_recursive,F_nadaraya,h_recursive,h_nadaraya,I1_recursive,I1_nadaraya,I2_recursive,I2_nadaraya,AMISE_recursive,AMISE_nadaraya\n",
    );
    for ((x, fr), fb) in s.grid.iter().zip(&s.f_recursive).zip(&s.f_nadaraya) {
        let _ = writeln!(
            out,
            "{x},{fr},{fb},{h_recursive},{h_nadaraya},{},{},{},{},{},{}",
            s.i1_recursive,
            s.i1_batch,
            s.i2_recursive,
            s.i2_batch,
            s.recursive_plan.amise,
            s.batch_plan.amise
        );
    }
    emit(&out, args.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

pub fn cmd_kernels(args: &KernelsArgs, stdout: &mut dyn Write) -> CliResult<u8> {
    let params = DeconvKernelParams::from_ratio(args.r)?;
    if !(args.step.is_finite() && args.step > 0.0) {
        return Err(Failure::new(EXIT_INVALID, anyhow!("--step must be positive, got {}", args.step)));
    }
    if !(args.from.is_finite() && args.to.is_finite() && args.from <= args.to) {
        return Err(Failure::new(
            EXIT_INVALID,
            anyhow!("need --from <= --to, got [{}, {}]", args.from, args.to),
        ));
    }
    let rows = ((args.to - args.from) / args.step + 1e-9).floor() as usize + 1;
    let mut out = format!("# deconv-cdf {VERSION} kernels\n");
    let _ = writeln!(out, "# config: r = {}", args.r);
    let _ = writeln!(out, "# config: from = {}", args.from);
    let _ = writeln!(out, "# config: to = {}", args.to);
    let _ = writeln!(out, "# config: step = {}", args.step);
    out.push_str("u,gauss_pdf,K_eps,cal_K_eps,K_eps_deriv\n");
    for i in 0..rows {
        let u = args.from + i as f64 * args.step;
        let _ = writeln!(
            out,
            "{u},{},{},{},{}",
            gauss_pdf(u),
            deconv_kernel(u, &params),
            deconv_cdf_kernel(u, &params),
            deconv_kernel_deriv(u, &params)
        );
    }
    emit(&out, args.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

type PlanFn = fn(f64, f64, f64, f64, usize) -> crate::Result<BandwidthPlan>;
type BatchPlanFn = fn(f64, f64, f64, usize) -> crate::Result<BandwidthPlan>;
type AmiseFn = fn(f64, f64, f64, f64, usize) -> crate::Result<f64>;
type BatchAmiseFn = fn(f64, f64, f64, usize) -> crate::Result<f64>;
type KernelFn = fn(f64, &DeconvKernelParams) -> f64;

/// Functions exercised by [`cmd_verify`]; replaceable in tests.
#[derive(Clone, Copy)]
pub struct VerifyHooks {
    pub optimal_bandwidth_recursive: PlanFn,
    pub amise_recursive: AmiseFn,
    pub optimal_bandwidth_batch: BatchPlanFn,
    pub amise_batch: BatchAmiseFn,
    pub deconv_kernel: KernelFn,
}

impl Default for VerifyHooks {
    fn default() -> Self {
        Self {
            optimal_bandwidth_recursive,
            amise_recursive,
            optimal_bandwidth_batch,
            amise_batch,
            deconv_kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(name: &'static str, observed: crate::Result<f64>, expected: f64, tol: f64) -> CheckOutcome {
    match observed {
        Ok(v) => CheckOutcome {
            name,
            passed: (v - expected).abs() <= tol,
            detail: format!("observed {v:.6}, expected {expected} +/- {tol}"),
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn bound(name: &'static str, observed: f64, limit: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: observed <= limit,
        detail: format!("observed {observed:.3e}, limit {limit:.0e}"),
    }
}

/// Oracle grid `u in {-8, -7.5, ..., 8}`, `r in {0, 0.1, 0.5, 1, 5, 10, 100}`.
pub fn oracle_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(33 * 7);
    for i in 0..33 {
        let u = -8.0 + 0.5 * i as f64;
        for r in [0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0] {
            grid.push((u, r));
        }
    }
    grid
}

/// Largest `|kernel - fourier oracle|` over [`oracle_grid`].
pub fn max_oracle_gap(kernel: KernelFn) -> crate::Result<f64> {
    let mut worst = 0.0_f64;
    for (u, r) in oracle_grid() {
        let p = DeconvKernelParams::from_ratio(r)?;
        let oracle = fourier_inversion_oracle(u, &p, 12.0, 0.01)?;
        worst = worst.max((kernel(u, &p) - oracle).abs());
    }
    Ok(worst)
}

/// Largest pointwise gap between the recursive estimator with unit gain and
/// constant bandwidth and the batch estimator, over `datasets` samples.
pub fn max_reduction_gap(datasets: usize, seed: u64) -> crate::Result<f64> {
    let mut worst = 0.0_f64;
    for k in 0..datasets {
        let mut rng = replication_rng(seed, k as u64);
        let n = 5 + (k * 37) % 196;
        let dist = TrueDistribution::Mixture;
        let (_, y) = crate::simlab::sample_contaminated(&dist, n, 0.4, &mut rng);
        let h = 0.15 + 0.05 * (k % 10) as f64;
        let grid = EvaluationGrid::uniform(-6.0, 6.0, 61)?;
        let mut state = recursive_init(grid.clone(), 0.4, StepsizeSchedule::new(1.0)?, BandwidthSchedule::constant(h)?)?;
        state.update_all(&y)?;
        let batch = nadaraya_estimate(&y, h, 0.4, &grid)?;
        for (a, b) in state.values().iter().zip(&batch) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

pub fn verify_checks(hooks: &VerifyHooks) -> Vec<CheckOutcome> {
    let mut checks = vec![
        close(
            "optimal_bandwidth_recursive",
            (hooks.optimal_bandwidth_recursive)(1.0, 1.0, 1.0, 1.0, 1).map(|p| p.c),
            0.7634,
            5e-4,
        ),
        close("amise_recursive", (hooks.amise_recursive)(1.0, 1.0, 1.0, 1.0, 1), 0.3883, 5e-4),
        close(
            "optimal_bandwidth_batch",
            (hooks.optimal_bandwidth_batch)(1.0, 1.0, 1.0, 1).map(|p| p.c),
            0.8844,
            5e-4,
        ),
        close("amise_batch", (hooks.amise_batch)(1.0, 1.0, 1.0, 1), 0.3568, 1e-3),
    ];

    let argmin = (1..=3714)
        .map(|i| MIN_GAMMA0 + i as f64 * 0.001)
        .min_by(|a, b| stepsize_penalty(*a).total_cmp(&stepsize_penalty(*b)))
        .unwrap_or(f64::NAN);
    checks.push(close("stepsize_penalty_argmin", Ok(argmin), 1.0, 1.5e-3));

    checks.push(match max_oracle_gap(hooks.deconv_kernel) {
        Ok(gap) => bound("kernel_oracle_grid", gap, 1e-6),
        Err(e) => CheckOutcome {
            name: "kernel_oracle_grid",
            passed: false,
            detail: format!("error: {e}"),
        },
    });

    let mut free = 0.0_f64;
    for i in 0..=160 {
        let u = -8.0 + 0.1 * i as f64;
        free = free
            .max((kernel_with_ratio(u, 0.0) - gauss_pdf(u)).abs())
            .max((cdf_kernel_with_ratio(u, 0.0) - gauss_cdf(u)).abs())
            .max((kernel_deriv_with_ratio(u, 0.0) + u * gauss_pdf(u)).abs());
    }
    checks.push(bound("error_free_reduction", free, 1e-12));

    let mass = [0.0, 1.0, 10.0, 100.0]
        .iter()
        .map(|&r| (cdf_kernel_with_ratio(20.0, r) - cdf_kernel_with_ratio(-20.0, r) - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(bound("cdf_kernel_unit_mass", mass, 1e-10));

    checks.push(match max_reduction_gap(20, 3) {
        Ok(gap) => bound("recursive_batch_reduction", gap, 1e-12),
        Err(e) => CheckOutcome {
            name: "recursive_batch_reduction",
            passed: false,
            detail: format!("error: {e}"),
        },
    });
    checks
}

/// Prints one line per check and returns 0 when all pass, 1 otherwise.
pub fn cmd_verify(hooks: &VerifyHooks, out: &mut dyn Write) -> io::Result<u8> {
    let checks = verify_checks(hooks);
    for c in &checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        writeln!(out, "all {} checks passed", checks.len())?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "failed: {}", failed.join(", "))?;
        Ok(EXIT_VERIFY_FAILED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_fractions() {
        assert_eq!(parse_number("2/3"), Some(2.0 / 3.0));
        assert_eq!(parse_number(" 0.05 "), Some(0.05));
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("abc"), None);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let f = SimulateConfig::parse("reps = 3\nbogus = 1\n").unwrap_err();
        assert_eq!(f.code, EXIT_PARSE);
        assert!(f.error.to_string().contains("bogus"));
        let f = SimulateConfig::parse("reps 3\n").unwrap_err();
        assert_eq!(f.code, EXIT_PARSE);
        let f = SimulateConfig::parse("reps = x\n").unwrap_err();
        assert!(f.error.to_string().contains("reps"));
    }

    #[test]
    fn header_round_trips() {
        let cfg = SimulateConfig::parse(
            "seed = 9\ndistributions = mixture exponential(0.5) normal(0;2)\nn = 30\nnsr = 0.1 1/5\ngamma0 = 2/3 1\n",
        )
        .unwrap();
        let text = format!("# something\n{}x,y\n1,2\n", cfg.header_lines());
        assert_eq!(SimulateConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_estimator_list_is_invalid() {
        let cfg = SimulateConfig::parse("estimators =\n").unwrap();
        assert_eq!(cfg.scenarios().unwrap_err().code, EXIT_INVALID);
    }

    #[test]
    fn default_layout_matches_first_table() {
        let cfg = SimulateConfig::default();
        let scenarios = cfg.scenarios().unwrap();
        assert_eq!(scenarios.len(), 9);
        assert!(scenarios.iter().all(|s| s.estimators.len() == 5));
    }

    #[test]
    fn single_column_reader() {
        assert_eq!(read_single_column("1\n\n# c\n2.5,\n").unwrap(), vec![1.0, 2.5]);
        let f = read_single_column("y\n1\n").unwrap_err();
        assert_eq!(f.code, EXIT_DATA);
        assert!(f.error.to_string().contains("line 1"));
        let f = read_single_column("1\n2\nnan\n").unwrap_err();
        assert!(f.error.to_string().contains("line 3"));
    }

    #[test]
    fn oracle_grid_shape() {
        assert_eq!(oracle_grid().len(), 231);
    }
}
