use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qfedfisher::fedcore::Strategy;
use qfedfisher::runner::{self, FlagOverrides};

#[derive(Parser)]
#[command(name = "qfedfisher", version, about = "Quantum federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy and write metrics to the output directory.
    Run(RunArgs),
    /// Resolve and check a configuration, printing it as TOML.
    Validate(RunArgs),
    /// Compare the simulator, gradients and aggregation against brute-force oracles.
    Oracle {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file with flat `key = value` entries.
    config: Option<PathBuf>,
    /// mnist | mnist-paper | mnist-small | binary | binary-small
    #[arg(long)]
    preset: Option<String>,
    /// Strategy to run; repeat or comma-separate for several.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<Strategy>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $QFEDFISHER_OUT, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 = single-threaded, 0 = all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set local_lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn flags(&self) -> FlagOverrides {
        FlagOverrides {
            preset: self.preset.clone(),
            strategies: (!self.strategies.is_empty()).then(|| self.strategies.clone()),
            rounds: self.rounds,
            seed: self.seed,
            out_dir: self.out.clone(),
            threads: self.threads,
            set: self.set.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Box<dyn std::error::Error>> = match cli.command {
        Command::Validate(args) => runner::parse_config(args.config.as_deref(), &args.flags())
            .map(|cfg| print!("{}", cfg.to_toml()))
            .map_err(Into::into),
        Command::Run(args) => run(args),
        Command::Oracle { cases, seed } => {
            let checks = runner::run_oracle_checks(cases, seed);
            let mut ok = true;
            for c in &checks {
                ok &= c.passed();
                println!(
                    "{} {:<45} cases={:<4} max_error={:.3e} tol={:.0e}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.max_error,
                    c.tolerance
                );
            }
            if ok {
                Ok(())
            } else {
                Err("oracle mismatch".into())
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = runner::parse_config(args.config.as_deref(), &args.flags())?;
    eprintln!(
        "preset={} qubits={} layers={} clients={} rounds={} strategies={:?} out={}",
        cfg.preset,
        cfg.n_qubits,
        cfg.n_layers,
        cfg.n_clients,
        cfg.rounds,
        cfg.strategies.iter().map(|s| s.name()).collect::<Vec<_>>(),
        cfg.out_dir.display()
    );
    let summary = runner::run_experiment(&cfg, |strategy, r| {
        eprintln!(
            "[{strategy}] round {:>4} acc={:.4} loss={:.4} train_loss={:.4} substituted={} {:.2}s",
            r.round, r.test_accuracy, r.test_loss, r.mean_client_train_loss, r.substituted_count,
            r.wall_time_s
        );
    })?;
    println!("strategy,final_test_accuracy,final_test_loss,local_mean_accuracy,wall_time_s");
    for run in &summary.runs {
        let last = run.final_report();
        println!(
            "{},{:.4},{:.4},{},{:.1}",
            run.strategy,
            last.test_accuracy,
            last.test_loss,
            run.local_mean_accuracy
                .map_or_else(|| "-".to_string(), |a| format!("{a:.4}")),
            run.total_wall_time_s
        );
    }
    Ok(())
}
