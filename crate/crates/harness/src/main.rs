use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use distill_core::mdp::{generate_random_mdp, GenParams};
use distill_harness::prepare::{base_world, build_teacher};
use distill_harness::seeds::teacher_rng;
use distill_harness::sweep::write_json;
use distill_harness::{
    prepare, read_csv, run_once, run_sweep, summarize, verify_report, write_csv, write_outputs, ExperimentConfig,
    HarnessError, VerifyOptions,
};

#[derive(Parser)]
#[command(name = "pdistill", version, about = "Tabular policy distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config file's.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-key override, e.g. `--set steps=1000`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random grid world and write it as JSON and ASCII.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        width: usize,
        #[arg(long, default_value_t = 20)]
        height: usize,
        /// Total actions; those past the 4 moves are no-ops.
        #[arg(long, default_value_t = 4)]
        action_count: usize,
    },
    /// Build the teacher of one world and write it as JSON.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        mdp_index: usize,
    },
    /// Run one distillation and write its evaluation curve.
    Distill {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        mdp_index: usize,
        /// Method preset; defaults to the config's first.
        #[arg(long)]
        method: Option<String>,
        /// Run seed; defaults to the config's first.
        #[arg(long)]
        run_seed: Option<u64>,
    },
    /// Run every world, method and run seed of a config.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check the exact-dynamics claims and write verify_report.json.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random parameter points per preset and world.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Summarise a results CSV into JSON.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn load(args: &ConfigArgs, common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Gen { common, width, height, action_count } => {
            let seed = common.seed.unwrap_or(0);
            let world = generate_random_mdp(seed, &GenParams::default(), width, height)?.with_action_count(action_count)?;
            create_dir(&common.out_dir)?;
            let stem = common.out_dir.join(format!("mdp_{seed}"));
            write_json(&stem.with_extension("json"), &world)?;
            let txt = stem.with_extension("txt");
            std::fs::write(&txt, world.ascii()).map_err(|e| HarnessError::io(&txt, e))?;
            println!("{}", stem.with_extension("json").display());
            Ok(true)
        }
        Command::TrainTeacher { common, config, mdp_index } => {
            let config = load(&config, &common)?;
            let base = base_world(&config, mdp_index)?;
            let teacher = build_teacher(&config, &base, &mut teacher_rng(config.seed, mdp_index))?;
            create_dir(&common.out_dir)?;
            let path = common.out_dir.join(format!("teacher_{}.json", config.world.mdp_seed(mdp_index)));
            write_json(&path, &teacher.to_doc())?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Distill { common, config, mdp_index, method, run_seed } => {
            let config = load(&config, &common)?;
            let method = method.unwrap_or_else(|| config.methods[0].clone());
            distill_core::distill::MethodSpec::preset(&method).map_err(|e| HarnessError::Config(e.to_string()))?;
            let run_seed = run_seed.unwrap_or(config.run_seeds[0]);
            let prepared = prepare(&config, mdp_index)?;
            let records = run_once(&config, &prepared, &method, run_seed)?;
            create_dir(&common.out_dir)?;
            let path = common.out_dir.join(format!("{}_{}_{}.csv", prepared.mdp_seed, method, run_seed));
            write_csv(&path, &records)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Sweep { common, config } => {
            let config = load(&config, &common)?;
            let parallelism = common
                .parallelism
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = run_sweep(&config, parallelism)?;
            create_dir(&common.out_dir)?;
            write_outputs(&common.out_dir, &outcome)?;
            for f in &outcome.failures {
                eprintln!("run failed: mdp {} method {} seed {}: {}", f.mdp_seed, f.method, f.run_seed, f.error);
            }
            println!("{} records, {} failed runs", outcome.records.len(), outcome.failures.len());
            Ok(outcome.failures.is_empty())
        }
        Command::Verify { common, points } => {
            let options = VerifyOptions { seed: common.seed.unwrap_or(0), points, ..VerifyOptions::default() };
            let report = verify_report(&options)?;
            create_dir(&common.out_dir)?;
            let path = common.out_dir.join("verify_report.json");
            write_json(&path, &report)?;
            for c in &report.classification {
                let (lo, hi) = c.defects.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
                let worst = if c.expected_gradient { hi } else { lo };
                println!(
                    "{:<4} {:<18} {:<15} gradient field: {:<5} symmetry defect {worst:.3e}",
                    if c.passed { "ok" } else { "FAIL" },
                    c.preset,
                    c.fixture,
                    c.expected_gradient,
                );
            }
            println!("{}: {}", path.display(), if report.passed { "all checks passed" } else { "some checks failed" });
            Ok(report.passed)
        }
        Command::Report { common, csv } => {
            let records = read_csv(&csv)?;
            create_dir(&common.out_dir)?;
            let path = common.out_dir.join("summary.json");
            write_json(&path, &summarize(&records))?;
            println!("{}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
