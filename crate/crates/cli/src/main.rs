//! `topeq`: condition checks, conjugacy maps, verification suites and
//! 𝔻-power expansions from the command line.
//!
//! Exit status is 0 when everything passes, 1 when a condition or property
//! fails and 2 on usage, configuration or precondition errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use topeq_core::certificates::make_scenario_unchecked;
use topeq_core::harness::{run_all, run_dif_suite, run_equivalence_suite, run_smoothness_suite, RunSettings};
use topeq_core::{
    check_all, expand_d_power, make_scenario, ConjugacyEngine, Direction, Error, Scenario, ScenarioParams,
    TruncationPolicy, Variant, Vector, DEFAULT_HORIZON,
};

#[derive(Parser)]
#[command(
    name = "topeq",
    version,
    about = "Topological equivalence of linear difference systems and their perturbations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the condition checks d0–d7 (and c2 for second-order scenarios).
    Check {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate H or G at one point.
    Map {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: Output,
        #[arg(short = 'd', long, value_enum)]
        direction: Dir,
        #[arg(short = 'k', long, default_value_t = 0)]
        k: usize,
        /// Comma-separated coordinates.
        #[arg(short = 'p', long, allow_hyphen_values = true)]
        point: String,
    },
    /// Run a property suite and emit a report.
    Verify {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: Output,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Smoothness order for the dif suite.
        #[arg(short = 'r', long, default_value_t = 4)]
        order: u32,
    },
    /// Print the expansion of 𝔻^s(Γ_0).
    Dif {
        #[arg(short = 's', long)]
        power: u32,
        #[arg(short = 'r', long, default_value_t = 6)]
        order: u32,
        #[command(flatten)]
        output: Output,
    },
    /// List the registered presets.
    Presets,
}

#[derive(Args)]
struct Source {
    /// Registered preset name.
    #[arg(long, conflicts_with = "file")]
    preset: Option<String>,
    /// JSON scenario file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Constant override `key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long)]
    series_horizon: Option<usize>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    #[value(name = "H", alias = "h")]
    H,
    #[value(name = "G", alias = "g")]
    G,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    Equivalence,
    Smoothness,
    Dif,
    All,
}

/// Command failure carrying its exit status.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(2, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Check { source, policy, output } => {
            let scenario = load(&source, false)?;
            let report = check_all(&scenario, policy.horizon);
            let text = match output.format {
                Format::Json => serde_json::to_string_pretty(&report).expect("reports serialize"),
                Format::Text => report.to_text(),
            };
            emit(&output, &text)?;
            let all = report.conditions.iter().all(|c| c.status.is_satisfied());
            Ok(if all { 0 } else { 1 })
        }
        Command::Map {
            source,
            policy,
            output,
            direction,
            k,
            point,
        } => {
            let scenario = load(&source, true)?;
            let engine = ConjugacyEngine::new(&scenario, truncation(&policy)?)?;
            let p = parse_point(&point, scenario.dim())?;
            let dir = match direction {
                Dir::H => Direction::H,
                Dir::G => Direction::G,
            };
            let v = engine.map(dir, k, &p)?;
            let coords: Vec<f64> = v.iter().copied().collect();
            let text = match output.format {
                Format::Json => serde_json::to_string(&coords).expect("vectors serialize"),
                Format::Text => coords.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(","),
            };
            emit(&output, &text)?;
            Ok(0)
        }
        Command::Verify {
            source,
            policy,
            output,
            suite,
            order,
        } => {
            let settings = RunSettings {
                policy: truncation(&policy)?,
                horizon: policy.horizon,
                samples: policy.samples,
                seed: policy.seed,
                timings: false,
            };
            let report = if suite == Suite::Dif && source.preset.is_none() && source.file.is_none() {
                run_dif_suite(order, &settings)?
            } else {
                let scenario = load(&source, true)?;
                match suite {
                    Suite::Equivalence => run_equivalence_suite(&scenario, &settings)?,
                    Suite::Smoothness => run_smoothness_suite(&scenario, &settings)?,
                    Suite::Dif => {
                        let mut r = run_dif_suite(order, &settings)?;
                        r.scenario = scenario.id.clone();
                        r
                    }
                    Suite::All => run_all(&scenario, &settings, order)?,
                }
            };
            let text = match output.format {
                Format::Json => report.to_json(),
                Format::Text => report.to_text(),
            };
            emit(&output, &text)?;
            Ok(report.exit_code() as u8)
        }
        Command::Dif { power, order, output } => {
            let e = expand_d_power(power, order)?;
            let text = match output.format {
                Format::Json => e.to_json(),
                Format::Text => e.to_string(),
            };
            emit(&output, &text)?;
            Ok(0)
        }
        Command::Presets => {
            for v in Variant::PRESETS {
                println!("{:<14} {}", v.name(), v.summary());
            }
            Ok(0)
        }
    }
}

/// Builds the scenario. `check` skips the parameter constraints so it can
/// report which condition a broken configuration violates.
fn load(source: &Source, validate: bool) -> Result<Scenario, Failure> {
    let mut params = match (&source.preset, &source.file) {
        (Some(name), None) => {
            let v: Variant = name.parse()?;
            ScenarioParams::preset(v)
        }
        (None, Some(path)) => {
            let raw = fs::read_to_string(path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
            serde_json::from_str(&raw).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?
        }
        _ => return Err(Failure(2, "one of --preset or --file is required".into())),
    };
    for o in &source.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Failure(2, format!("override {o:?} is not key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| Failure(2, format!("override {key}: {e}")))?;
        params.constants.insert(key.trim().to_string(), value);
    }
    let scenario = if validate {
        make_scenario(&params)?
    } else {
        make_scenario_unchecked(&params)?
    };
    Ok(scenario)
}

fn truncation(args: &PolicyArgs) -> Result<TruncationPolicy, Failure> {
    let mut p = TruncationPolicy::default();
    if let Some(j) = args.series_horizon {
        p.series_horizon = j;
    }
    if let Some(t) = args.fp_tol {
        p.fp_tol = t;
    }
    if let Some(h) = args.fd_step {
        p.fd_step = h;
    }
    p.validate()?;
    Ok(p)
}

fn parse_point(raw: &str, dim: usize) -> Result<Vector, Failure> {
    let coords = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure(2, format!("point {raw:?}: {e}")))?;
    if coords.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: coords.len(),
        }
        .into());
    }
    Ok(Vector::from_vec(coords))
}

fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure(2, format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
