use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use covertime_cli::config::{validated, ConfigError};
use covertime_cli::presets::{preset, PRESET_NAMES};
use covertime_cli::{load_config, run_command, CliError, Command, RunOptions, ScenarioConfig};

/// Cover times of many diffusive or subdiffusive searchers.
#[derive(Debug, Parser)]
#[command(name = "covertime", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario family.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    #[arg(long, value_enum, default_value = "simulate")]
    command: Command,
    /// Comma-separated searcher counts, e.g. `1,10,1e3`.
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    n_list: Option<Vec<u64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Censoring cap as a multiple of the predicted mean.
    #[arg(long)]
    t_max_factor: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Lattice spacing of the coverage tracker.
    #[arg(long)]
    dx: Option<f64>,
    /// Step halvings in `convergence-study`.
    #[arg(long, default_value_t = 3)]
    levels: u32,
    /// Multisets drawn by `lemma-check`.
    #[arg(long, default_value_t = 1000)]
    cases: usize,
}

fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("`{s}` is not a searcher count")),
    }
}

fn apply_overrides(c: &mut ScenarioConfig, args: &Args) {
    if let Some(n) = &args.n_list {
        c.n_list = n.clone();
    }
    if let Some(r) = args.replicas {
        c.replicas = r;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(f) = args.t_max_factor {
        c.numerics.t_max_factor = Some(f);
        c.numerics.t_max = None;
    }
    if let Some(dt) = args.dt {
        c.numerics.dt = Some(dt);
    }
    if let Some(dx) = args.dx {
        c.numerics.dx = Some(dx);
    }
}

fn scenarios(args: &Args) -> Result<(Vec<ScenarioConfig>, Vec<String>), CliError> {
    let mut configs = match (&args.config, &args.preset) {
        (Some(path), _) => vec![load_config(path)?.config],
        (None, Some(name)) => preset(name).expect("validated by clap"),
        (None, None) if args.command == Command::LemmaCheck => return Ok((Vec::new(), Vec::new())),
        (None, None) => {
            return Err(
                ConfigError::one("give a scenario with --config <file> or --preset <name>").into(),
            )
        }
    };
    let mut warnings = Vec::new();
    let mut problems = Vec::new();
    for c in configs.iter_mut() {
        apply_overrides(c, args);
        match validated(c.clone()) {
            Ok(loaded) => warnings.extend(
                loaded
                    .warnings
                    .into_iter()
                    .map(|w| format!("{}: {w}", c.id())),
            ),
            Err(e) => problems.extend(e.problems.into_iter().map(|p| format!("{}: {p}", c.id()))),
        }
    }
    if problems.is_empty() {
        Ok((configs, warnings))
    } else {
        Err(ConfigError { problems }.into())
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    let (configs, warnings) = scenarios(args)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| {
            configs
                .first()
                .and_then(|c| c.output.dir.clone())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| RunOptions::default().out_dir);
    let opts = RunOptions {
        threads: args.threads,
        out_dir,
        levels: args.levels,
        lemma_cases: args.cases,
        lemma_seed: args.seed,
        progress: true,
    };
    let outcome = run_command(&configs, &warnings, args.command, &opts)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    for file in &outcome.files {
        eprintln!("wrote {}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_end());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
