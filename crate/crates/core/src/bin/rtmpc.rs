use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memory_mpc::cli::{self, Overrides};
use memory_mpc::learner::LearnerKind;
use memory_mpc::Error;

#[derive(Parser)]
#[command(name = "rtmpc", version, about = "Real-time MPC with a learned value function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its CSVs.
    Run(RunArgs),
    /// Accumulated cost and step time over iteration budgets, learning on and off.
    Sweep(SweepArgs),
    /// Check every hull invariant on a saved dump.
    AuditHull {
        dump: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in name (double-integrator, unicycle, servo) or a TOML file.
    #[arg(long, default_value = "double-integrator")]
    scenario: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Same as --scenario.
    name: Option<String>,
    #[command(flatten)]
    common: Common,
    /// Optimizer iterations per step.
    #[arg(long)]
    it: Option<usize>,
    #[arg(long)]
    no_learning: bool,
    /// Also write per-step suboptimality against a converged solve.
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_parser = parse_learner)]
    learner: Option<LearnerKind>,
    /// Learner latency in control periods: N, or MIN..MAX drawn with --seed.
    #[arg(long)]
    async_latency: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps_per_run: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    name: Option<String>,
    #[command(flatten)]
    common: Common,
    /// `1..10`, `1,2,5` or one count.
    #[arg(long, default_value = "1..10")]
    it: String,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

fn parse_learner(s: &str) -> Result<LearnerKind, String> {
    match s.parse::<LearnerKind>() {
        Ok(LearnerKind::Off) | Err(_) => Err(format!("unknown learner `{s}` (hull or lipschitz)")),
        Ok(k) => Ok(k),
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::ControllerFault { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let name = args.name.unwrap_or(args.common.scenario);
    let overrides = Overrides {
        steps: args.common.steps,
        iterations: args.it,
        seed: args.common.seed,
        no_learning: args.no_learning,
        learner: args.learner,
        latency: args.async_latency,
        threshold: args.threshold,
        runs: args.runs,
        steps_per_run: args.steps_per_run,
        periods: args.periods,
    };
    let config = cli::apply_overrides(cli::load_scenario(&name)?, &overrides)?;
    let out = args.common.out.unwrap_or_else(|| cli::default_out(&config.name));
    let result = cli::run_scenario(&config, args.oracle, Some(&out))?;
    let rec = &result.record;
    println!(
        "{}: {} steps, cost {:.6}, {} spatial, {:.2?}",
        rec.scenario,
        rec.rows.len(),
        rec.accumulated_cost(),
        rec.spatial_count(),
        rec.elapsed
    );
    let s = rec.stats;
    println!(
        "learner: offered {} added {} skipped-small {} skipped-busy {} rejected {}",
        s.offered, s.added, s.skipped_small, s.skipped_busy, s.rejected
    );
    println!("checks: {:?}", rec.counts);
    println!("wrote {}", out.display());
    Ok(if result.is_clean() {
        ExitCode::SUCCESS
    } else {
        eprintln!("runtime invariant violated");
        ExitCode::from(1)
    })
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let name = args.name.unwrap_or(args.common.scenario);
    let mut config = cli::load_scenario(&name)?;
    if let Some(s) = args.common.steps {
        config.steps = s;
    }
    let its = cli::parse_iterations(&args.it)?;
    let rows = cli::sweep_iterations(&config, &its, args.repeats, args.common.seed)?;
    print!("{}", cli::sweep_csv(&rows));
    let out = args.common.out.unwrap_or_else(|| cli::default_out(&format!("{}-sweep", config.name)));
    cli::write_sweep(&out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::AuditHull { dump } => cli::audit_hull(&dump).map(|report| {
            print!("{report}");
            if report.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
    };
    result.unwrap_or_else(fail)
}
