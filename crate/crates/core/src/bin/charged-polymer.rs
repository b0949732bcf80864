use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use charged_polymer::config::ExperimentConfig;
use charged_polymer::oracles::return_probabilities;
use charged_polymer::runner;
use charged_polymer::walk::{make_step_law, WalkKind};
use charged_polymer::Error;

#[derive(Parser)]
#[command(
    name = "charged-polymer",
    version,
    about = "Charged-polymer Monte Carlo and oracle checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; exit 0 on pass, 2 on a failed gate, 1 on bad input.
    Run {
        config: PathBuf,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores). Never changes results.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Output directory (default: the config's `output`, else results/<experiment>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the charge environments as CSV.
        #[arg(long)]
        export_env: bool,
    },
    /// Tabulate every results.json under a directory.
    Summarize { dir: PathBuf },
    /// Print the return-probability oracle for a walk such as `srw:3`,
    /// `lazy_srw:2` or `lazy_srw:2:0.25`.
    Oracle {
        walk: String,
        #[arg(long = "max-m")]
        max_m: usize,
        /// Write oracle.csv and oracle.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_walk(spec: &str) -> Result<charged_polymer::walk::StepLaw, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::InvalidArgument(format!(
            "walk spec {spec:?}; expected <srw|lazy_srw>:<d>[:<lazy_weight>]"
        ))
    };
    if parts.len() < 2 || parts.len() > 3 {
        return Err(bad());
    }
    let kind: WalkKind = parts[0].parse()?;
    let dim: usize = parts[1].parse().map_err(|_| bad())?;
    let lazy = match (kind, parts.get(2)) {
        (_, Some(w)) => w.parse().map_err(|_| bad())?,
        (WalkKind::LazySrw, None) => 0.5,
        _ => 0.0,
    };
    make_step_law(kind, dim, lazy, None)
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    workers: usize,
    out: Option<PathBuf>,
    export_env: bool,
) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    match cfg.validate() {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.experiment.name()));
    match runner::run(&cfg, workers, &dir, export_env) {
        Ok(results) => {
            for r in &results.reports {
                println!("{}", r.line());
            }
            println!("{} -> {}", results.verdict, dir.display());
            if results.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn summarize(dir: PathBuf) -> ExitCode {
    match runner::summarize(&dir) {
        Ok(s) => {
            for (path, why) in &s.skipped {
                eprintln!("warning: skipped {}: {why}", path.display());
            }
            print!("{}", s.table());
            if s.rows.is_empty() {
                eprintln!("error: no readable results in {}", dir.display());
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn oracle(walk: String, max_m: usize, out: Option<PathBuf>) -> Result<(), Error> {
    let law = parse_walk(&walk)?;
    let table = return_probabilities(&law, max_m)?;
    let summary = serde_json::to_string_pretty(&table.summary())?;
    println!("{summary}");
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        table.write_csv(&dir.join("oracle.csv"))?;
        let path = dir.join("oracle.json");
        std::fs::write(&path, summary + "\n").map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            workers,
            out,
            export_env,
        } => run(config, seed, workers, out, export_env),
        Command::Summarize { dir } => summarize(dir),
        Command::Oracle { walk, max_m, out } => match oracle(walk, max_m, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
