use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::{mean_sem, Metric};
use crate::run::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// 1.96·SEM; absent with a single run.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub runs: usize,
    pub final_step: u64,
    /// Final-step statistics across runs.
    pub final_metrics: BTreeMap<String, MetricSummary>,
    /// Mean over runs of the time-averaged student return (trapezoidal).
    pub mean_return_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub methods: BTreeMap<String, MethodSummary>,
}

/// Per-method final-step statistics of a record set.
pub fn summarize(records: &[RunRecord]) -> Summary {
    let mut by_run: BTreeMap<&str, BTreeMap<(u64, u64), Vec<&RunRecord>>> = BTreeMap::new();
    for r in records {
        by_run.entry(&r.method).or_default().entry((r.mdp_seed, r.run_seed)).or_default().push(r);
    }
    let methods = by_run
        .into_iter()
        .map(|(method, mut runs)| {
            let mut finals = Vec::new();
            let mut areas = Vec::new();
            for rs in runs.values_mut() {
                rs.sort_by_key(|r| r.step);
                finals.push(*rs.last().expect("runs hold at least one record"));
                let span = rs.last().unwrap().step - rs[0].step;
                let area = if span == 0 {
                    rs[0].ret_student
                } else {
                    rs.windows(2)
                        .map(|w| (w[1].step - w[0].step) as f64 * (w[0].ret_student + w[1].ret_student) / 2.0)
                        .sum::<f64>()
                        / span as f64
                };
                areas.push(area);
            }
            let final_metrics = Metric::ALL
                .iter()
                .map(|m| {
                    let s = mean_sem(&finals.iter().map(|r| m.of(r)).collect::<Vec<_>>());
                    let half_width = (s.n > 1).then(|| s.half_width());
                    (m.column().to_string(), MetricSummary { mean: s.mean, half_width })
                })
                .collect();
            let summary = MethodSummary {
                runs: runs.len(),
                final_step: finals.iter().map(|r| r.step).max().unwrap_or(0),
                final_metrics,
                mean_return_area: mean_sem(&areas).mean,
            };
            (method.to_string(), summary)
        })
        .collect();
    Summary { records: records.len(), methods }
}
