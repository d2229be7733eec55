use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::run::RunRecord;
use crate::HarnessError;

/// z for a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RetStudent,
    RetTeacherRef,
    XentStudent,
    XentTeacher,
    XentUniform,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::RetStudent, Metric::RetTeacherRef, Metric::XentStudent, Metric::XentTeacher, Metric::XentUniform];

    pub fn of(self, r: &RunRecord) -> f64 {
        match self {
            Metric::RetStudent => r.ret_student,
            Metric::RetTeacherRef => r.ret_teacher_ref,
            Metric::XentStudent => r.xent_student,
            Metric::XentTeacher => r.xent_teacher,
            Metric::XentUniform => r.xent_uniform,
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Metric::RetStudent => "ret_student",
            Metric::RetTeacherRef => "ret_teacher_ref",
            Metric::XentStudent => "xent_student",
            Metric::XentTeacher => "xent_teacher",
            Metric::XentUniform => "xent_uniform",
        }
    }
}

/// Record fields curves can be grouped by; the others identify runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Method,
    MdpSeed,
    RunSeed,
}

impl GroupKey {
    fn name(self) -> &'static str {
        match self {
            GroupKey::Method => "method",
            GroupKey::MdpSeed => "mdp_seed",
            GroupKey::RunSeed => "run_seed",
        }
    }

    fn value(self, r: &RunRecord) -> String {
        match self {
            GroupKey::Method => r.method.clone(),
            GroupKey::MdpSeed => r.mdp_seed.to_string(),
            GroupKey::RunSeed => r.run_seed.to_string(),
        }
    }
}

/// Mean and 95% half-width of one metric per evaluation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub group: BTreeMap<String, String>,
    pub metric: Metric,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub runs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSem {
    pub mean: f64,
    /// Standard error from the sample standard deviation; 0 for one value.
    pub sem: f64,
    pub n: usize,
}

impl MeanSem {
    pub fn half_width(&self) -> f64 {
        Z95 * self.sem
    }
}

pub fn mean_sem(values: &[f64]) -> MeanSem {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sem = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    MeanSem { mean, sem, n }
}

/// One curve per distinct value of `group_by`; each run contributes one
/// value per step. Groups with fewer than two runs are an error.
pub fn aggregate(records: &[RunRecord], group_by: &[GroupKey], metric: Metric) -> Result<Vec<AggregateCurve>, HarnessError> {
    let mut groups: BTreeMap<Vec<String>, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut run_ids: BTreeMap<Vec<String>, std::collections::BTreeSet<(u64, u64, &str)>> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|g| g.value(r)).collect();
        groups.entry(key.clone()).or_default().entry(r.step).or_default().push(metric.of(r));
        run_ids.entry(key).or_default().insert((r.mdp_seed, r.run_seed, &r.method));
    }
    groups
        .into_iter()
        .map(|(key, by_step)| {
            let group: BTreeMap<String, String> =
                group_by.iter().zip(&key).map(|(g, v)| (g.name().to_string(), v.clone())).collect();
            let runs = run_ids[&key].len();
            if runs < 2 {
                return Err(HarnessError::InsufficientRuns { group: format!("{group:?}"), runs });
            }
            let mut curve =
                AggregateCurve { group, metric, steps: vec![], mean: vec![], half_width: vec![], runs: vec![] };
            for (step, values) in by_step {
                let m = mean_sem(&values);
                curve.steps.push(step);
                curve.mean.push(m.mean);
                curve.half_width.push(m.half_width());
                curve.runs.push(m.n);
            }
            Ok(curve)
        })
        .collect()
}

fn trapezoid(steps: &[u64], values: &[f64]) -> f64 {
    steps.windows(2).zip(values.windows(2)).map(|(s, v)| (s[1] - s[0]) as f64 * (v[0] + v[1]) / 2.0).sum()
}

/// Ratio of areas under two return curves on a shared step grid, both
/// shifted down by their common initial return.
pub fn area_speedup(student_driven: &[f64], teacher_driven: &[f64], steps: &[u64]) -> Result<f64, HarnessError> {
    if student_driven.len() != steps.len() || teacher_driven.len() != steps.len() || steps.len() < 2 {
        return Err(HarnessError::Config("curves must share a step grid of at least two points".into()));
    }
    let shift = (student_driven[0] + teacher_driven[0]) / 2.0;
    let shifted = |c: &[f64]| c.iter().map(|v| v - shift).collect::<Vec<_>>();
    let a = trapezoid(steps, &shifted(student_driven));
    let b = trapezoid(steps, &shifted(teacher_driven));
    for area in [a, b] {
        if !(area > 0.0) {
            return Err(HarnessError::DegenerateCurve { area });
        }
    }
    Ok(a / b)
}
