use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use predev::design::EtaMode;
use predev::io::{
    builtin_scenario, emit_plot_data, run_pipeline, save_dataset, Overrides, Report, ScenarioConfig, Stage,
};
use predev::Error;

#[derive(Parser)]
#[command(name = "predev", version, about = "Prediction deviation and experiment impact for ODE models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Random restarts for fitting and deviation solves.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Level of the best-fit error interval.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    bootstrap_samples: Option<usize>,
    #[arg(long, global = true, value_enum)]
    eta_mode: Option<EtaArg>,
    /// Value used with `--eta-mode fixed`.
    #[arg(long, global = true)]
    eta_value: Option<f64>,
    #[arg(long, global = true, value_parser = ["1", "4"])]
    eta_multiplier: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaArg {
    Ratio,
    Chi2,
    Fixed,
}

#[derive(Args)]
struct Source {
    /// Scenario config file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario's synthetic dataset.
    Simulate(Source),
    /// Best fit and its error interval.
    Fit(Source),
    /// Most different pair of good-fit models on the prediction problems.
    Deviate(Source),
    /// Worst-case impact of candidate experiments.
    Impact {
        #[command(flatten)]
        source: Source,
        /// Only this candidate.
        #[arg(long)]
        candidate: Option<String>,
    },
    /// Rank all candidates by worst-case impact.
    Rank(Source),
    /// Greedy sequential design.
    Sequence {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Monte Carlo checks configured in the scenario.
    Validate(Source),
    /// Plot tables from a saved report.
    Report {
        /// Report JSON written by an earlier run.
        report: PathBuf,
    },
}

fn load(source: &Source) -> predev::Result<ScenarioConfig> {
    match (&source.config, &source.scenario) {
        (Some(path), _) => ScenarioConfig::load(path),
        (None, Some(name)) => builtin_scenario(name),
        (None, None) => Err(Error::Config("pass --config FILE or --scenario NAME".into())),
    }
}

fn overrides(g: &Global) -> Overrides {
    Overrides {
        seed: g.seed,
        restarts: g.restarts,
        alpha: g.alpha,
        bootstrap_samples: g.bootstrap_samples,
        eta_mode: g.eta_mode.map(|m| match m {
            EtaArg::Ratio => EtaMode::Ratio,
            EtaArg::Chi2 => EtaMode::Chi2,
            EtaArg::Fixed => EtaMode::Fixed,
        }),
        eta_value: g.eta_value,
        eta_multiplier: g.eta_multiplier.as_deref().map(|m| m.parse().expect("validated by clap")),
    }
}

fn run(cli: Cli) -> predev::Result<i32> {
    let g = &cli.global;
    let (source, stages) = match &cli.command {
        Command::Report { report } => {
            let report = Report::load(report)?;
            for path in emit_plot_data(&report, &g.out)? {
                println!("{}", path.display());
            }
            return Ok(0);
        }
        Command::Simulate(s) => (s, vec![Stage::Simulate]),
        Command::Fit(s) => (s, vec![Stage::Fit]),
        Command::Deviate(s) => (s, vec![Stage::Deviate]),
        Command::Impact { source, .. } => (source, vec![Stage::Impact]),
        Command::Rank(s) => (s, vec![Stage::Rank]),
        Command::Sequence { source, .. } => (source, vec![Stage::Sequence]),
        Command::Validate(s) => (s, vec![Stage::Validate]),
    };
    let mut config = load(source)?;
    config.apply(&overrides(g));
    config.stages = stages;
    match &cli.command {
        Command::Impact { candidate: Some(name), .. } => {
            config.candidates.retain(|c| &c.name == name);
            if config.candidates.is_empty() {
                return Err(Error::Config(format!("no candidate named '{name}'")));
            }
        }
        Command::Sequence { rounds: Some(r), .. } => config.sequence.rounds = *r,
        _ => {}
    }

    let report = run_pipeline(&config);
    std::fs::create_dir_all(&g.out)?;
    if let (Command::Simulate(_), Some(data)) = (&cli.command, &report.dataset) {
        let path = g.out.join("data.csv");
        save_dataset(data, &path)?;
        println!("{}", path.display());
    }
    let path = g.out.join("report.json");
    report.save(&path)?;
    println!("{}", path.display());
    emit_plot_data(&report, &g.out)?;
    if let Some(f) = &report.failure {
        eprintln!("error in stage '{}': {}", f.stage, f.message);
        return Ok(f.exit_code);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
