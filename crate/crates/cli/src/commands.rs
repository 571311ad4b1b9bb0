//! The `simulate`, `predict`, `compare`, `convergence-study` and
//! `lemma-check` commands.

use std::path::{Path, PathBuf};

use covertime::asymptotics::{
    conjecture_crossover, conjecture_regimes, inclusion_exclusion_max, single_searcher_td,
    theorem1_moment, theorem2_moment, Regime,
};
use covertime::estimator::{run_replicas, summarize, ExperimentOptions, DEFAULT_MAX_MOMENT};
use covertime::geometry::{StartSet, Target};
use covertime::scenario::{Motion, PlannedMotion, Scenario, StepOverrides};
use covertime::Real;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Precision, ScenarioConfig};
use crate::output::{self, num, opt, Manifest, Table};
use crate::presets::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Predict,
    Compare,
    ConvergenceStudy,
    LemmaCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Predict => "predict",
            Command::Compare => "compare",
            Command::ConvergenceStudy => "convergence-study",
            Command::LemmaCheck => "lemma-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Invalid model input reported by the library (bad `N`, unsupported
    /// combination, ...).
    #[error("{0}")]
    Model(covertime::Error),
    #[error("{0}")]
    Censored(String),
    #[error("{0}")]
    Numeric(covertime::Error),
    #[error("lemma check failed: {0}")]
    LemmaFailed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<covertime::Error> for CliError {
    fn from(e: covertime::Error) -> Self {
        match e {
            covertime::Error::Numeric(_) | covertime::Error::Range(_) => CliError::Numeric(e),
            other => CliError::Model(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 2,
            CliError::Censored(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::LemmaFailed(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    /// Number of halvings in `convergence-study` (level 0 is the base step).
    pub levels: u32,
    pub lemma_cases: usize,
    pub lemma_seed: Option<u64>,
    /// Progress lines on stderr.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            out_dir: PathBuf::from("covertime-out"),
            levels: 3,
            lemma_cases: 1000,
            lemma_seed: None,
            progress: false,
        }
    }
}

/// Tables produced by a command, plus a human-readable digest.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Run `command` over `configs` and write its tables and manifest into
/// `opts.out_dir`.
pub fn run_command(
    configs: &[ScenarioConfig],
    warnings: &[String],
    command: Command,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    if configs.is_empty() && command != Command::LemmaCheck {
        return Err(ConfigError::one("no scenario given (use --config or --preset)").into());
    }
    let mut outcome = match command {
        Command::Simulate => simulate(configs, opts)?,
        Command::Predict => predict(configs)?,
        Command::Compare => compare(configs, opts)?,
        Command::ConvergenceStudy => convergence(configs, opts)?,
        Command::LemmaCheck => lemma_check(configs, opts),
    };
    write_outcome(&mut outcome, configs, warnings, command, opts)?;
    if command == Command::LemmaCheck {
        if let Some(fail) = outcome.lines.iter().find(|l| l.starts_with("FAIL")) {
            return Err(CliError::LemmaFailed(fail.clone()));
        }
    }
    Ok(outcome)
}

fn write_outcome(
    outcome: &mut Outcome,
    configs: &[ScenarioConfig],
    warnings: &[String],
    command: Command,
    opts: &RunOptions,
) -> Result<(), CliError> {
    let dir: &Path = &opts.out_dir;
    std::fs::create_dir_all(dir)?;
    for t in &outcome.tables {
        outcome.files.push(t.write(dir)?);
    }
    let mut manifest = Manifest::new(command.name(), configs, warnings, opts.threads);
    manifest.files = outcome.tables.iter().map(|t| t.name.clone()).collect();
    outcome.files.push(manifest.write(dir)?);
    Ok(())
}

fn f<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn seeds(configs: &[ScenarioConfig]) -> Vec<u64> {
    configs.iter().map(|c| c.seed).collect()
}

fn max_moment(c: &ScenarioConfig) -> u32 {
    c.numerics.max_moment.unwrap_or(DEFAULT_MAX_MOMENT)
}

// ---------------------------------------------------------------------------
// simulation

/// Precision-free copy of a [`covertime::estimator::MomentReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct NReport {
    pub searchers: u64,
    pub replicas: usize,
    /// `(m, estimate, stderr, prediction)`.
    pub moments: Vec<(u32, f64, f64, Option<f64>)>,
    pub cv: Option<f64>,
    pub cv_stderr: Option<f64>,
    pub trivially_covered: usize,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl NReport {
    pub fn mean(&self) -> f64 {
        self.moments[0].1
    }

    pub fn mean_stderr(&self) -> f64 {
        self.moments[0].2
    }
}

fn simulate_typed<T: Real>(
    c: &ScenarioConfig,
    opts: &RunOptions,
    n_list: &[u64],
    steps: Option<StepOverrides<T>>,
) -> Result<Vec<NReport>, CliError> {
    let mut sc = c.to_scenario::<T>()?;
    if let Some(s) = steps {
        sc = sc.with_steps(s);
    }
    let prepared = sc.prepare()?;
    let options = ExperimentOptions {
        threads: opts.threads,
        max_moment: max_moment(c),
        keep_samples: true,
    };
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let plan = prepared.plan(n)?;
        let results = run_replicas(&plan, c.replicas, c.seed, opts.threads)?;
        let censored = results.iter().filter(|r| r.censored).count();
        if censored > 0 {
            return Err(CliError::Censored(format!(
                "{}: {censored} of {} replicas at N = {n} reached the time cap t_max = {} before covering the target; \
                 moments would be biased. Raise numerics.t_max_factor (or --t-max-factor) or set numerics.t_max",
                c.id(),
                c.replicas,
                f(plan.t_max)
            )));
        }
        let r = summarize(&prepared, &plan, &results, &options)?;
        if opts.progress {
            eprintln!(
                "{} N={n}: mean {} (s.e. {})",
                c.id(),
                f(r.mean()),
                f(r.mean_stderr())
            );
        }
        out.push(NReport {
            searchers: n,
            replicas: r.replicas,
            moments: r
                .moments
                .iter()
                .map(|m| (m.order, f(m.estimate), f(m.stderr), m.prediction.map(f)))
                .collect(),
            cv: r.cv.map(f),
            cv_stderr: r.cv_stderr.map(f),
            trivially_covered: r.trivially_covered,
            dt: f(r.dt),
            samples: r.samples.unwrap_or_default().into_iter().map(f).collect(),
        });
    }
    Ok(out)
}

/// Moment reports for every `N` of `c`.
pub fn simulate_config(c: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<NReport>, CliError> {
    match c.numerics.precision {
        Precision::F64 => simulate_typed::<f64>(c, opts, &c.n_list, None),
        Precision::F32 => simulate_typed::<f32>(c, opts, &c.n_list, None),
    }
}

fn moment_rows(table: &mut Table, c: &ScenarioConfig, reports: &[NReport]) {
    for r in reports {
        for &(m, est, se, pred) in &r.moments {
            table.push(vec![
                c.id(),
                r.searchers.to_string(),
                m.to_string(),
                num(est),
                num(se),
                opt(pred),
                opt(pred.map(|p| est / p)),
                r.replicas.to_string(),
                c.seed.to_string(),
            ]);
        }
    }
}

fn summary_rows(table: &mut Table, c: &ScenarioConfig, reports: &[NReport]) {
    for r in reports {
        table.push(vec![
            c.id(),
            r.searchers.to_string(),
            r.replicas.to_string(),
            num(r.mean()),
            num(r.mean_stderr()),
            opt(r.cv),
            opt(r.cv_stderr),
            r.trivially_covered.to_string(),
            num(r.dt),
            c.seed.to_string(),
        ]);
    }
}

fn sample_rows(table: &mut Table, c: &ScenarioConfig, reports: &[NReport]) {
    for r in reports {
        for (i, s) in r.samples.iter().enumerate() {
            table.push(vec![
                c.id(),
                r.searchers.to_string(),
                i.to_string(),
                num(*s),
                c.seed.to_string(),
            ]);
        }
    }
}

fn digest(c: &ScenarioConfig, r: &NReport) -> String {
    let (_, est, se, pred) = r.moments[0];
    let ratio = pred
        .map(|p| format!("  ratio {:.4}", est / p))
        .unwrap_or_default();
    let cv = r.cv.map(|v| format!("  cv {v:.4}")).unwrap_or_default();
    format!(
        "{:<36} N={:<7} mean {est:.6e} ± {se:.2e}{ratio}{cv}",
        c.id(),
        r.searchers
    )
}

fn simulate(configs: &[ScenarioConfig], opts: &RunOptions) -> Result<Outcome, CliError> {
    let cmd = Command::Simulate.name();
    let s = seeds(configs);
    let mut moments = Table::new("moments.csv", cmd, &s, output::MOMENTS_HEADER);
    let mut samples = Table::new("samples.csv", cmd, &s, output::SAMPLES_HEADER);
    let mut summary = Table::new("summary.csv", cmd, &s, output::SUMMARY_HEADER);
    let mut lines = Vec::new();
    for c in configs {
        let reports = simulate_config(c, opts)?;
        moment_rows(&mut moments, c, &reports);
        sample_rows(&mut samples, c, &reports);
        summary_rows(&mut summary, c, &reports);
        lines.extend(reports.iter().map(|r| digest(c, r)));
    }
    Ok(Outcome {
        tables: vec![moments, samples, summary],
        files: Vec::new(),
        lines,
    })
}

// ---------------------------------------------------------------------------
// predictions

/// Mean single-searcher cover time from a closed form, when one applies:
/// `L²/D` on the 1-d torus (the range reaching `2L`) and the small-`r`
/// approximation on higher-dimensional tori.
pub fn single_searcher_mean<T: Real>(sc: &Scenario<T>, length: T) -> Result<Option<T>, CliError> {
    let Motion::Diffusive { diffusivity, .. } = &sc.motion else {
        return Ok(None);
    };
    let eligible = sc.motion.is_pure()
        && sc.domain.is_periodic()
        && sc.target == Target::FullDomain
        && matches!(sc.start, StartSet::Point(_));
    if !eligible {
        return Ok(None);
    }
    let dim = sc.domain.dim();
    if dim == 1 {
        return Ok(Some(length * length / *diffusivity));
    }
    let volume = sc.domain.volume().expect("torus has a volume");
    Ok(Some(single_searcher_td(
        dim as u32,
        volume,
        sc.detection_radius,
        *diffusivity,
    )?))
}

fn predict_typed<T: Real>(
    c: &ScenarioConfig,
    table: &mut Table,
    lines: &mut Vec<String>,
) -> Result<(), CliError> {
    let sc = c.to_scenario::<T>()?;
    let length = sc.geodesic_length()?.value;
    let mean_single = single_searcher_mean(&sc, length)?;
    let t_d = match (&sc.motion, sc.domain.dim()) {
        (_, 1) => None,
        _ => mean_single,
    };
    for &n in &c.n_list {
        let nt = T::from_u64(n).unwrap();
        for m in 1..=max_moment(c) {
            let (th1, th2) = match &sc.motion {
                Motion::Diffusive { diffusivity, .. } => {
                    (theorem1_moment(length, *diffusivity, nt, m)?, None)
                }
                Motion::Subdiffusive { alpha, diffusivity } => (
                    theorem1_moment(length, *diffusivity, nt, m)?,
                    Some(theorem2_moment(length, *diffusivity, *alpha, nt, m)?),
                ),
            };
            let regimes = match (m, mean_single) {
                (1, Some(ms)) => Some(conjecture_regimes(ms, length, sc.motion.diffusivity(), nt)?),
                _ => None,
            };
            table.push(vec![
                c.id(),
                n.to_string(),
                m.to_string(),
                num(f(th1)),
                opt(th2.map(f)),
                opt(t_d.map(|t| f(t.powi(m as i32)))),
                opt(regimes.map(|r| f(r.rescaling))),
                opt(regimes.map(|r| f(r.log_n))),
                opt(regimes.map(|r| f(r.max))),
                regimes
                    .map(|r| regime_name(r.active).to_string())
                    .unwrap_or_default(),
            ]);
            if m == 1 {
                let main = th2.unwrap_or(th1);
                lines.push(format!(
                    "{:<36} N={n:<7} E[sigma_N] ~ {:.6e}",
                    c.id(),
                    f(main)
                ));
            }
        }
    }
    Ok(())
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Rescaling => "rescaling",
        Regime::LogN => "log-n",
    }
}

fn predict(configs: &[ScenarioConfig]) -> Result<Outcome, CliError> {
    let mut table = Table::new(
        "predict.csv",
        Command::Predict.name(),
        &seeds(configs),
        output::PREDICT_HEADER,
    );
    let mut lines = Vec::new();
    for c in configs {
        match c.numerics.precision {
            Precision::F64 => predict_typed::<f64>(c, &mut table, &mut lines)?,
            Precision::F32 => predict_typed::<f32>(c, &mut table, &mut lines)?,
        }
    }
    Ok(Outcome {
        tables: vec![table],
        files: Vec::new(),
        lines,
    })
}

// ---------------------------------------------------------------------------
// compare

fn regime_rows<T: Real>(
    c: &ScenarioConfig,
    reports: &[NReport],
    table: &mut Table,
) -> Result<(), CliError> {
    let sc = c.to_scenario::<T>()?;
    if !matches!(sc.motion, Motion::Diffusive { .. }) {
        return Ok(());
    }
    let length = sc.geodesic_length()?.value;
    if length <= T::zero() {
        return Ok(());
    }
    let simulated_single = reports
        .iter()
        .find(|r| r.searchers == 1)
        .map(|r| T::lit(r.mean()));
    let Some(ms) = simulated_single.or(single_searcher_mean(&sc, length)?) else {
        return Ok(());
    };
    if ms <= T::zero() {
        return Ok(());
    }
    let d = sc.motion.diffusivity();
    let crossover = conjecture_crossover(ms, length, d)?;
    for r in reports.iter().filter(|r| r.searchers >= 2) {
        let g = conjecture_regimes(ms, length, d, T::from_u64(r.searchers).unwrap())?;
        table.push(vec![
            c.id(),
            r.searchers.to_string(),
            num(f(ms)),
            num(f(g.rescaling)),
            num(f(g.log_n)),
            num(f(g.max)),
            regime_name(g.active).to_string(),
            num(r.mean()),
            opt(crossover.map(f)),
        ]);
    }
    Ok(())
}

fn compare(configs: &[ScenarioConfig], opts: &RunOptions) -> Result<Outcome, CliError> {
    let cmd = Command::Compare.name();
    let s = seeds(configs);
    let mut moments = Table::new("moments.csv", cmd, &s, output::MOMENTS_HEADER);
    let mut summary = Table::new("summary.csv", cmd, &s, output::SUMMARY_HEADER);
    let mut regimes = Table::new("regimes.csv", cmd, &s, output::REGIMES_HEADER);
    let mut samples = Table::new("samples.csv", cmd, &s, output::SAMPLES_HEADER);
    let mut lines = vec![format!(
        "{:<36} {:<7} {:>2} {:>13} {:>13} {:>8}",
        "scenario", "N", "m", "simulated", "predicted", "ratio"
    )];
    let mut keep = false;
    for c in configs {
        let reports = simulate_config(c, opts)?;
        moment_rows(&mut moments, c, &reports);
        summary_rows(&mut summary, c, &reports);
        if c.output.keep_samples {
            keep = true;
            sample_rows(&mut samples, c, &reports);
        }
        match c.numerics.precision {
            Precision::F64 => regime_rows::<f64>(c, &reports, &mut regimes)?,
            Precision::F32 => regime_rows::<f32>(c, &reports, &mut regimes)?,
        }
        for r in &reports {
            for &(m, est, _, pred) in &r.moments {
                lines.push(format!(
                    "{:<36} {:<7} {m:>2} {est:>13.6e} {:>13} {:>8}",
                    c.id(),
                    r.searchers,
                    pred.map(|p| format!("{p:.6e}"))
                        .unwrap_or_else(|| "-".into()),
                    pred.map(|p| format!("{:.4}", est / p))
                        .unwrap_or_else(|| "-".into()),
                ));
            }
        }
    }
    let mut tables = vec![moments, summary, regimes];
    if keep {
        tables.push(samples);
    }
    Ok(Outcome {
        tables,
        files: Vec::new(),
        lines,
    })
}

// ---------------------------------------------------------------------------
// convergence study

struct BaseSteps {
    dt: f64,
    ds: Option<f64>,
    dx: Option<f64>,
}

fn base_steps<T: Real>(c: &ScenarioConfig, n: u64) -> Result<BaseSteps, CliError> {
    let prepared = c.to_scenario::<T>()?.prepare()?;
    let plan = prepared.plan(n)?;
    let ds = match &plan.motion {
        PlannedMotion::Subdiffusive(s) => Some(f(s.ds)),
        PlannedMotion::Diffusive(_) => None,
    };
    Ok(BaseSteps {
        dt: f(plan.dt()),
        ds,
        dx: prepared.grid().map(|g| f(g.spacing())),
    })
}

fn convergence_typed<T: Real>(
    c: &ScenarioConfig,
    opts: &RunOptions,
    table: &mut Table,
    lines: &mut Vec<String>,
) -> Result<(), CliError> {
    for &n in &c.n_list {
        let base = base_steps::<T>(c, n)?;
        for level in 0..opts.levels {
            let k = 0.5f64.powi(level as i32);
            let steps = StepOverrides {
                dt: Some(T::lit(base.dt * k)),
                ds: base.ds.map(|v| T::lit(v * k)),
                dx: base.dx.map(|v| T::lit(v * k)),
            };
            let r = simulate_typed::<T>(c, opts, &[n], Some(steps))?.remove(0);
            table.push(vec![
                c.id(),
                n.to_string(),
                level.to_string(),
                opt(base.dx.map(|v| v * k)),
                num(base.dt * k),
                opt(base.ds.map(|v| v * k)),
                num(r.mean()),
                num(r.mean_stderr()),
                r.replicas.to_string(),
                c.seed.to_string(),
            ]);
            lines.push(format!(
                "{:<36} N={n:<7} level {level}  dt {:.3e}  mean {:.6e} ± {:.2e}",
                c.id(),
                base.dt * k,
                r.mean(),
                r.mean_stderr()
            ));
        }
    }
    Ok(())
}

fn convergence(configs: &[ScenarioConfig], opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut table = Table::new(
        "convergence.csv",
        Command::ConvergenceStudy.name(),
        &seeds(configs),
        output::CONVERGENCE_HEADER,
    );
    let mut lines = Vec::new();
    for c in configs {
        match c.numerics.precision {
            Precision::F64 => convergence_typed::<f64>(c, opts, &mut table, &mut lines)?,
            Precision::F32 => convergence_typed::<f32>(c, opts, &mut table, &mut lines)?,
        }
    }
    Ok(Outcome {
        tables: vec![table],
        files: Vec::new(),
        lines,
    })
}

// ---------------------------------------------------------------------------
// lemma check

pub const LEMMA_TOLERANCE: f64 = 1e-9;
pub const LEMMA_MAX_LEN: usize = 12;

/// A random multiset with frequent duplicates and negative entries.
pub fn random_multiset<R: Rng>(rng: &mut R) -> Vec<f64> {
    let k = rng.random_range(1..=LEMMA_MAX_LEN);
    let pool: Vec<f64> = (0..rng.random_range(1..=k))
        .map(|_| {
            if rng.random_bool(0.3) {
                rng.random_range(-5i32..=5) as f64
            } else {
                rng.random_range(-100.0..100.0)
            }
        })
        .collect();
    (0..k)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}

fn lemma_check(configs: &[ScenarioConfig], opts: &RunOptions) -> Outcome {
    let seed = opts
        .lemma_seed
        .or(configs.first().map(|c| c.seed))
        .unwrap_or(DEFAULT_SEED);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut table = Table::new(
        "lemma.csv",
        Command::LemmaCheck.name(),
        &[seed],
        output::LEMMA_HEADER,
    );
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for case in 0..opts.lemma_cases {
        let v = random_multiset(&mut rng);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = v
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let (ie, err) = match inclusion_exclusion_max(&v) {
            Ok(ie) => (ie, (ie - max).abs() / scale),
            Err(_) => (f64::NAN, f64::INFINITY),
        };
        let pass = err <= LEMMA_TOLERANCE;
        failures += usize::from(!pass);
        worst = worst.max(err);
        table.push(vec![
            case.to_string(),
            v.len().to_string(),
            num(max),
            num(ie),
            num(err),
            pass.to_string(),
        ]);
    }
    let verdict = if failures == 0 { "PASS" } else { "FAIL" };
    let line = format!(
        "{verdict} inclusion-exclusion vs max: {} multisets, {failures} failures, worst relative error {worst:.3e}",
        opts.lemma_cases
    );
    Outcome {
        tables: vec![table],
        files: Vec::new(),
        lines: vec![line],
    }
}
