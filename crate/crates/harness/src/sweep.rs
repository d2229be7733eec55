use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::prepare::{prepare, Prepared};
use crate::report::{summarize, Summary};
use crate::run::{run_once, sort_records, write_csv, RunRecord};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub mdp_seed: u64,
    pub run_seed: u64,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Sorted by (mdp_seed, run_seed, method, step).
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

/// Runs every (world, method, run seed) task on a pool of `parallelism`
/// workers. A failed task is reported and never stops the others.
pub fn run_sweep(config: &ExperimentConfig, parallelism: usize) -> Result<SweepOutcome, HarnessError> {
    config.validate()?;
    let pool = pool(parallelism)?;
    let worlds: Vec<Result<Prepared, String>> = pool.install(|| {
        (0..config.world.count()).into_par_iter().map(|i| prepare(config, i).map_err(|e| e.to_string())).collect()
    });
    let mut failures = Vec::new();
    let mut tasks = Vec::new();
    for (i, w) in worlds.iter().enumerate() {
        for &run_seed in &config.run_seeds {
            for method in &config.methods {
                match w {
                    Ok(p) => tasks.push((p, method.as_str(), run_seed)),
                    Err(e) => failures.push(RunFailure {
                        mdp_seed: config.world.mdp_seed(i),
                        run_seed,
                        method: method.clone(),
                        error: e.clone(),
                    }),
                }
            }
        }
    }
    let results: Vec<_> =
        pool.install(|| tasks.par_iter().map(|(p, m, s)| (*p, *m, *s, run_once(config, p, m, *s))).collect());
    let mut records = Vec::new();
    for (p, method, run_seed, r) in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(e) => failures.push(RunFailure {
                mdp_seed: p.mdp_seed,
                run_seed,
                method: method.to_string(),
                error: e.to_string(),
            }),
        }
    }
    sort_records(&mut records);
    failures.sort_by(|a, b| (a.mdp_seed, a.run_seed, &a.method).cmp(&(b.mdp_seed, b.run_seed, &b.method)));
    Ok(SweepOutcome { records, failures })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Writes `runs/<mdp>_<method>_<seed>.csv` shards, the merged
/// `results.csv`, `summary.json` and `failures.json` under `out_dir`.
pub fn write_outputs(out_dir: &Path, outcome: &SweepOutcome) -> Result<Summary, HarnessError> {
    let runs = out_dir.join("runs");
    std::fs::create_dir_all(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    for chunk in outcome.records.chunk_by(|a, b| (a.mdp_seed, a.run_seed, &a.method) == (b.mdp_seed, b.run_seed, &b.method)) {
        let r = &chunk[0];
        write_csv(&runs.join(format!("{}_{}_{}.csv", r.mdp_seed, r.method, r.run_seed)), chunk)?;
    }
    write_csv(&out_dir.join("results.csv"), &outcome.records)?;
    let summary = summarize(&outcome.records);
    write_json(&out_dir.join("summary.json"), &summary)?;
    write_json(&out_dir.join("failures.json"), &outcome.failures)?;
    Ok(summary)
}

