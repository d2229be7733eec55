//! Tabular softmax policies, value and Q tables, and the additive update
//! accumulator used by every learner.
//!
//! Tables are indexed by [`ObsId`] and grow on first write; reads of keys that
//! were never written return zeros (uniform policies).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ObsId, ObservationKey, ObservationSpace};

/// Teacher probabilities are floored here before any logarithm.
pub const TEACHER_PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TabularError {
    #[error("teacher assigns zero probability to action {action}; clamp before taking logs")]
    DegenerateTeacher { action: usize },
    #[error("observation key {0} is not part of this observation space")]
    UnknownKey(ObservationKey),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

/// Numerically stable softmax.
pub fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for &l in logits {
        let e = (l - max).exp();
        total += e;
        out.push(e);
    }
    for p in out.iter_mut() {
        *p /= total;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    softmax_into(logits, &mut out);
    out
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

/// Teacher distribution with every entry floored at [`TEACHER_PROB_FLOOR`].
pub fn clamp_teacher(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| p.max(TEACHER_PROB_FLOOR)).collect()
}

/// H×(p‖q) = -Σ p log q, with q given in log space.
pub fn cross_entropy(p: &[f64], log_q: &[f64]) -> f64 {
    p.iter().zip(log_q).filter(|(pa, _)| **pa > 0.0).map(|(pa, lq)| -pa * lq).sum()
}

/// KL(p‖q) with q given in log space.
pub fn kl_divergence(p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_q)
        .filter(|(pa, _)| **pa > 0.0)
        .map(|(pa, lq)| pa * (pa.ln() - lq))
        .sum()
}

/// Which distribution weights the per-action penalty in a cross-entropy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XentDirection {
    /// H×(π‖π_θ): teacher-weighted, the cloning direction.
    TeacherGivenStudent,
    /// H×(π_θ‖π): student-weighted, argmax-seeking.
    StudentGivenTeacher,
}

/// Family of per-step matching losses ℓ(p‖q) = Σ_a p(a) φ(q(a)).
///
/// `CrossEntropy` uses φ(x) = -log x. `InformationPotential` uses
/// φ(x) = -scale·x; the oscillation game supervises its student with it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Matching {
    #[default]
    CrossEntropy,
    InformationPotential { scale: f64 },
}

impl Matching {
    /// φ evaluated at a teacher probability (floored for the log).
    pub fn teacher_penalty(&self, p: f64) -> f64 {
        match *self {
            Matching::CrossEntropy => -p.max(TEACHER_PROB_FLOOR).ln(),
            Matching::InformationPotential { scale } => -scale * p,
        }
    }

    /// Loss value in the given direction. `student` and `log_student` are the
    /// same distribution.
    pub fn loss(
        &self,
        direction: XentDirection,
        teacher: &[f64],
        student: &[f64],
        log_student: &[f64],
    ) -> f64 {
        match (self, direction) {
            (Matching::CrossEntropy, XentDirection::TeacherGivenStudent) => {
                cross_entropy(teacher, log_student)
            }
            (Matching::InformationPotential { scale }, XentDirection::TeacherGivenStudent) => {
                -scale * teacher.iter().zip(student).map(|(p, q)| p * q).sum::<f64>()
            }
            (_, XentDirection::StudentGivenTeacher) => student
                .iter()
                .zip(teacher)
                .map(|(q, p)| q * self.teacher_penalty(*p))
                .sum(),
        }
    }

    /// Adds `coefficient · ∇_logits ℓ` into `out`.
    pub fn add_gradient(
        &self,
        direction: XentDirection,
        teacher: &[f64],
        student: &[f64],
        coefficient: f64,
        out: &mut [f64],
    ) {
        match (self, direction) {
            (Matching::CrossEntropy, XentDirection::TeacherGivenStudent) => {
                let mass: f64 = teacher.iter().sum();
                for ((o, q), p) in out.iter_mut().zip(student).zip(teacher) {
                    *o += coefficient * (mass * q - p);
                }
            }
            (Matching::InformationPotential { scale }, XentDirection::TeacherGivenStudent) => {
                let overlap: f64 = teacher.iter().zip(student).map(|(p, q)| p * q).sum();
                for ((o, q), p) in out.iter_mut().zip(student).zip(teacher) {
                    *o += coefficient * (-scale * q * (p - overlap));
                }
            }
            (_, XentDirection::StudentGivenTeacher) => {
                let mean: f64 =
                    student.iter().zip(teacher).map(|(q, p)| q * self.teacher_penalty(*p)).sum();
                for ((o, q), p) in out.iter_mut().zip(student).zip(teacher) {
                    *o += coefficient * q * (self.teacher_penalty(*p) - mean);
                }
            }
        }
    }
}

/// Softmax policy over logits, one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    action_count: usize,
    logits: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(action_count: usize) -> Self {
        Self { action_count, logits: Vec::new() }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    /// Logits at `o`, or `None` if never written (all zeros).
    pub fn logits(&self, o: ObsId) -> Option<&[f64]> {
        self.logits.get(o.index()).filter(|row| !row.is_empty()).map(Vec::as_slice)
    }

    pub fn logits_or_zero(&self, o: ObsId) -> Vec<f64> {
        self.logits(o).map_or_else(|| vec![0.0; self.action_count], <[f64]>::to_vec)
    }

    pub fn row_mut(&mut self, o: ObsId) -> &mut [f64] {
        let idx = o.index();
        if self.logits.len() <= idx {
            self.logits.resize_with(idx + 1, Vec::new);
        }
        let row = &mut self.logits[idx];
        if row.is_empty() {
            row.resize(self.action_count, 0.0);
        }
        row
    }

    pub fn set_logits(&mut self, o: ObsId, values: &[f64]) {
        self.row_mut(o).copy_from_slice(values);
    }

    pub fn probabilities_into(&self, o: ObsId, out: &mut Vec<f64>) {
        match self.logits(o) {
            Some(l) => softmax_into(l, out),
            None => {
                out.clear();
                out.resize(self.action_count, 1.0 / self.action_count as f64);
            }
        }
    }

    pub fn log_probabilities(&self, o: ObsId) -> Vec<f64> {
        match self.logits(o) {
            Some(l) => log_softmax(l),
            None => vec![-(self.action_count as f64).ln(); self.action_count],
        }
    }

    /// Observations with materialized logits.
    pub fn touched(&self) -> impl Iterator<Item = ObsId> + '_ {
        self.logits.iter().enumerate().filter(|(_, r)| !r.is_empty()).map(|(i, _)| ObsId(i as u32))
    }

    pub fn to_keyed(&self, space: &ObservationSpace) -> BTreeMap<ObservationKey, Vec<f64>> {
        self.touched().map(|o| (space.key(o).clone(), self.logits_or_zero(o))).collect()
    }

    pub fn from_keyed(
        action_count: usize,
        rows: &BTreeMap<ObservationKey, Vec<f64>>,
        space: &ObservationSpace,
    ) -> Result<Self, TabularError> {
        let index = key_index(space);
        let mut table = Self::new(action_count);
        for (k, v) in rows {
            if v.len() != action_count {
                return Err(TabularError::ActionCount { expected: action_count, got: v.len() });
            }
            let o = *index.get(k).ok_or_else(|| TabularError::UnknownKey(k.clone()))?;
            table.set_logits(o, v);
        }
        Ok(table)
    }
}

fn key_index(space: &ObservationSpace) -> HashMap<&ObservationKey, ObsId> {
    space.ids().map(|o| (space.key(o), o)).collect()
}

/// Action distributions of a frozen policy, computed once per observation.
#[derive(Debug, Clone)]
pub struct ProbabilityCache<'a> {
    policy: &'a PolicyTable,
    rows: HashMap<ObsId, Vec<f64>>,
}

impl<'a> ProbabilityCache<'a> {
    pub fn new(policy: &'a PolicyTable) -> Self {
        Self { policy, rows: HashMap::new() }
    }

    pub fn policy(&self) -> &'a PolicyTable {
        self.policy
    }

    pub fn get(&mut self, o: ObsId) -> &[f64] {
        let policy = self.policy;
        self.rows.entry(o).or_insert_with(|| action_probabilities(policy, o))
    }
}

/// π_θ(·|o): softmax of the logits, uniform for unseen keys.
pub fn action_probabilities(policy: &PolicyTable, o: ObsId) -> Vec<f64> {
    let mut out = Vec::with_capacity(policy.action_count());
    policy.probabilities_into(o, &mut out);
    out
}

/// Fixed action distributions (teacher policies), uniform for unseen keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    action_count: usize,
    probs: Vec<Vec<f64>>,
}

impl DistributionTable {
    pub fn new(action_count: usize) -> Self {
        Self { action_count, probs: Vec::new() }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn set(&mut self, o: ObsId, probs: Vec<f64>) {
        debug_assert_eq!(probs.len(), self.action_count);
        let idx = o.index();
        if self.probs.len() <= idx {
            self.probs.resize_with(idx + 1, Vec::new);
        }
        self.probs[idx] = probs;
    }

    pub fn get(&self, o: ObsId) -> Option<&[f64]> {
        self.probs.get(o.index()).filter(|r| !r.is_empty()).map(Vec::as_slice)
    }

    pub fn probs(&self, o: ObsId) -> std::borrow::Cow<'_, [f64]> {
        match self.get(o) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => std::borrow::Cow::Owned(vec![1.0 / self.action_count as f64; self.action_count]),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = ObsId> + '_ {
        self.probs.iter().enumerate().filter(|(_, r)| !r.is_empty()).map(|(i, _)| ObsId(i as u32))
    }

    /// Pads every row with zero-probability actions up to `total`.
    pub fn extended(&self, total: usize) -> Self {
        let probs = self
            .probs
            .iter()
            .map(|r| {
                if r.is_empty() {
                    Vec::new()
                } else {
                    let mut r = r.clone();
                    r.resize(total, 0.0);
                    r
                }
            })
            .collect();
        Self { action_count: total, probs }
    }

    pub fn from_policy(policy: &PolicyTable, space: &ObservationSpace) -> Self {
        let mut d = Self::new(policy.action_count());
        for o in space.ids() {
            d.set(o, action_probabilities(policy, o));
        }
        d
    }

    pub fn to_keyed(&self, space: &ObservationSpace) -> BTreeMap<ObservationKey, Vec<f64>> {
        self.keys().map(|o| (space.key(o).clone(), self.probs[o.index()].clone())).collect()
    }

    pub fn from_keyed(
        action_count: usize,
        rows: &BTreeMap<ObservationKey, Vec<f64>>,
        space: &ObservationSpace,
    ) -> Result<Self, TabularError> {
        let index = key_index(space);
        let mut table = Self::new(action_count);
        for (k, v) in rows {
            if v.len() != action_count {
                return Err(TabularError::ActionCount { expected: action_count, got: v.len() });
            }
            let o = *index.get(k).ok_or_else(|| TabularError::UnknownKey(k.clone()))?;
            table.set(o, v.clone());
        }
        Ok(table)
    }
}

/// One scalar per observation, zero for unseen keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    values: Vec<f64>,
    #[serde(default)]
    seen: Vec<bool>,
}

impl ValueTable {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, o: ObsId) -> f64 {
        self.values.get(o.index()).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, o: ObsId, v: f64) {
        let idx = o.index();
        if self.values.len() <= idx {
            self.values.resize(idx + 1, 0.0);
            self.seen.resize(idx + 1, false);
        }
        self.values[idx] = v;
        self.seen[idx] = true;
    }

    pub fn add(&mut self, o: ObsId, delta: f64) {
        let v = self.get(o);
        self.set(o, v + delta);
    }

    pub fn contains(&self, o: ObsId) -> bool {
        self.seen.get(o.index()).copied().unwrap_or(false)
    }

    pub fn keys(&self) -> impl Iterator<Item = ObsId> + '_ {
        self.seen.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| ObsId(i as u32))
    }

    pub fn to_keyed(&self, space: &ObservationSpace) -> BTreeMap<ObservationKey, f64> {
        self.keys().map(|o| (space.key(o).clone(), self.get(o))).collect()
    }

    pub fn from_keyed(
        rows: &BTreeMap<ObservationKey, f64>,
        space: &ObservationSpace,
    ) -> Result<Self, TabularError> {
        let index = key_index(space);
        let mut table = Self::new();
        for (k, v) in rows {
            let o = *index.get(k).ok_or_else(|| TabularError::UnknownKey(k.clone()))?;
            table.set(o, *v);
        }
        Ok(table)
    }
}

/// Per-action values, zero vector for unseen keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    action_count: usize,
    q: Vec<Vec<f64>>,
}

impl QTable {
    pub fn new(action_count: usize) -> Self {
        Self { action_count, q: Vec::new() }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn row(&self, o: ObsId) -> std::borrow::Cow<'_, [f64]> {
        match self.q.get(o.index()).filter(|r| !r.is_empty()) {
            Some(r) => std::borrow::Cow::Borrowed(r.as_slice()),
            None => std::borrow::Cow::Owned(vec![0.0; self.action_count]),
        }
    }

    pub fn get(&self, o: ObsId, a: usize) -> f64 {
        self.q.get(o.index()).and_then(|r| r.get(a)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, o: ObsId, a: usize, v: f64) {
        let idx = o.index();
        if self.q.len() <= idx {
            self.q.resize_with(idx + 1, Vec::new);
        }
        let row = &mut self.q[idx];
        if row.is_empty() {
            row.resize(self.action_count, 0.0);
        }
        row[a] = v;
    }

    pub fn max(&self, o: ObsId) -> f64 {
        self.row(o).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().flatten().all(|v| *v == 0.0)
    }
}

/// Pending additive adjustments to policy logits and values.
#[derive(Debug, Clone, Default)]
pub struct UpdateAccumulator {
    logits: HashMap<ObsId, Vec<f64>>,
    values: HashMap<ObsId, f64>,
}

impl UpdateAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty() && self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.logits.clear();
        self.values.clear();
    }

    pub fn pending_logits(&self, o: ObsId) -> Option<&[f64]> {
        self.logits.get(&o).map(Vec::as_slice)
    }

    pub fn pending_value(&self, o: ObsId) -> Option<f64> {
        self.values.get(&o).copied()
    }

    pub fn logit_entries(&self) -> impl Iterator<Item = (ObsId, &[f64])> {
        self.logits.iter().map(|(o, v)| (*o, v.as_slice()))
    }

    /// Mutable pending row at `o`, created as zeros.
    pub fn logit_row(&mut self, o: ObsId, action_count: usize) -> &mut [f64] {
        self.logits.entry(o).or_insert_with(|| vec![0.0; action_count])
    }

    pub fn add_value(&mut self, o: ObsId, delta: f64) {
        *self.values.entry(o).or_insert(0.0) += delta;
    }

    /// Adds `coefficient · (onehot(a) - probs)` at `o`.
    pub fn add_logprob_gradient(&mut self, o: ObsId, probs: &[f64], action: usize, coefficient: f64) {
        if coefficient == 0.0 {
            return;
        }
        let row = self.logit_row(o, probs.len());
        for (b, (r, p)) in row.iter_mut().zip(probs).enumerate() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            *r += coefficient * (indicator - p);
        }
    }

    /// Sum of two accumulators.
    pub fn merge(&mut self, other: &UpdateAccumulator) {
        for (o, v) in &other.logits {
            let row = self.logit_row(*o, v.len());
            for (r, d) in row.iter_mut().zip(v) {
                *r += d;
            }
        }
        for (o, v) in &other.values {
            self.add_value(*o, *v);
        }
    }
}

/// Adds `coefficient · ∇_θ log π_θ(a|o)` to the accumulator.
pub fn accumulate_logprob_gradient(
    acc: &mut UpdateAccumulator,
    policy: &PolicyTable,
    o: ObsId,
    action: usize,
    coefficient: f64,
) {
    let probs = action_probabilities(policy, o);
    acc.add_logprob_gradient(o, &probs, action, coefficient);
}

/// Adds `coefficient · ∇_θ H×` in the given direction. StudentGivenTeacher
/// needs log π, so a zero teacher probability is rejected: clamp first.
pub fn accumulate_cross_entropy_gradient(
    acc: &mut UpdateAccumulator,
    teacher_probs: &[f64],
    policy: &PolicyTable,
    o: ObsId,
    direction: XentDirection,
    coefficient: f64,
) -> Result<(), TabularError> {
    if teacher_probs.len() != policy.action_count() {
        return Err(TabularError::ActionCount {
            expected: policy.action_count(),
            got: teacher_probs.len(),
        });
    }
    if direction == XentDirection::StudentGivenTeacher {
        if let Some(action) = teacher_probs.iter().position(|p| *p <= 0.0) {
            return Err(TabularError::DegenerateTeacher { action });
        }
    }
    if coefficient == 0.0 {
        return Ok(());
    }
    let probs = action_probabilities(policy, o);
    let row = acc.logit_row(o, probs.len());
    Matching::CrossEntropy.add_gradient(direction, teacher_probs, &probs, coefficient, row);
    Ok(())
}

/// θ ← θ + lr · pending for logits; the accumulator is cleared.
pub fn apply_to_policy(acc: &mut UpdateAccumulator, policy: &mut PolicyTable, learning_rate: f64) {
    for (o, delta) in acc.logits.drain() {
        let row = policy.row_mut(o);
        for (r, d) in row.iter_mut().zip(&delta) {
            *r += learning_rate * d;
        }
    }
}

/// V ← V + lr · pending for values; the accumulator is cleared.
pub fn apply_to_values(acc: &mut UpdateAccumulator, values: &mut ValueTable, learning_rate: f64) {
    for (o, delta) in acc.values.drain() {
        values.add(o, learning_rate * delta);
    }
}

/// Applies both halves of the accumulator.
pub fn apply(
    acc: &mut UpdateAccumulator,
    policy: &mut PolicyTable,
    values: &mut ValueTable,
    learning_rate: f64,
) {
    apply_to_policy(acc, policy, learning_rate);
    apply_to_values(acc, values, learning_rate);
}
