use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmab_sa::FeedbackMode;
use mmab_sa_harness::output::emit_outputs;
use mmab_sa_harness::scenario::parse_feedback;
use mmab_sa_harness::{presets, run_experiment, Algorithm, HarnessError, Scenario};

#[derive(Parser)]
#[command(name = "mmab-sa", version, about = "Multi-player bandits with shareable arms: simulation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) pair of a scenario and write CSV/TOML results.
    Run(RunArgs),
    /// List the built-in scenarios.
    ListScenarios,
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Preset name or path to a TOML scenario.
    #[arg(long)]
    scenario: String,
    /// One algorithm, or `all` for the scenario's list.
    #[arg(long, default_value = "all")]
    algo: AlgoChoice,
    #[arg(long)]
    horizon: Option<u64>,
    /// A count N (seeds 0..N) or a comma-separated list.
    #[arg(long)]
    seeds: Option<SeedChoice>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_feedback)]
    feedback: Option<FeedbackMode>,
    /// Output directory; `results/<scenario>` by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every CPU.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone)]
enum AlgoChoice {
    All,
    One(Algorithm),
}

impl std::str::FromStr for AlgoChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            Ok(AlgoChoice::All)
        } else {
            s.parse().map(AlgoChoice::One)
        }
    }
}

#[derive(Clone)]
enum SeedChoice {
    Count(u64),
    List(Vec<u64>),
}

impl std::str::FromStr for SeedChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed {p:?}: {e}")))
                .collect::<Result<_, _>>()
                .map(SeedChoice::List)
        } else {
            s.parse().map(SeedChoice::Count).map_err(|e| format!("bad seed count {s:?}: {e}"))
        }
    }
}

fn apply_overrides(mut scenario: Scenario, args: &RunArgs) -> Scenario {
    if let AlgoChoice::One(a) = args.algo {
        scenario.algorithms = vec![a];
    }
    if let Some(h) = args.horizon {
        if h != scenario.horizon {
            scenario.horizon = h;
            scenario.checkpoints = None;
        }
    }
    match &args.seeds {
        Some(SeedChoice::Count(n)) => scenario.seeds = (0..*n).collect(),
        Some(SeedChoice::List(list)) => scenario.seeds = list.clone(),
        None => {}
    }
    if args.delta.is_some() {
        scenario.delta = args.delta;
    }
    if let Some(f) = args.feedback {
        scenario.feedback = f;
    }
    scenario
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let scenario = apply_overrides(Scenario::resolve(&args.scenario)?, &args);
    let result = run_experiment(&scenario, args.jobs)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&scenario.name));
    let paths = emit_outputs(&scenario, &result, &dir)?;
    for &algorithm in &scenario.algorithms {
        if let Some(mean) = result.mean_final(algorithm) {
            println!("{algorithm:<15} mean final regret {mean:.1}");
        }
    }
    println!("wrote {}", paths.raw.display());
    println!("wrote {}", paths.summary.display());
    println!("wrote {}", paths.resolved.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::ListScenarios => {
            for s in presets() {
                let algos: Vec<&str> = s.algorithms.iter().map(|a| a.as_str()).collect();
                println!(
                    "{:<18} K={:<3} M={:<3} T={:<8} {} [{}]",
                    s.name,
                    s.num_arms(),
                    s.num_players,
                    s.horizon,
                    s.feedback.as_str(),
                    algos.join(", ")
                );
            }
            Ok(())
        }
        Command::Validate { scenario } => Scenario::load(&scenario).and_then(|s| {
            s.validate()?;
            println!("{}: ok", scenario.display());
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
