use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mdp::{ObsId, ObservationKey, ObservationSpace, StateId};
use crate::tabular::{DistributionTable, Matching, TabularError, ValueTable};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TeacherProvenance {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub corruption_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TeacherProvenance {
    pub fn named(method: &str) -> Self {
        Self { method: method.to_string(), ..Self::default() }
    }
}

/// A frozen teacher: action distributions over its own observation space,
/// an optional critic, and the matching loss students use against it.
///
/// Observations outside `supervised` carry no distillation signal; when the
/// teacher drives the episode there, it acts uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBundle {
    pub observations: ObservationSpace,
    pub policy: DistributionTable,
    pub values: Option<ValueTable>,
    pub supervised: Option<Vec<bool>>,
    pub matching: Matching,
    pub provenance: TeacherProvenance,
}

impl TeacherBundle {
    pub fn new(
        observations: ObservationSpace,
        policy: DistributionTable,
        provenance: TeacherProvenance,
    ) -> Self {
        Self {
            observations,
            policy,
            values: None,
            supervised: None,
            matching: Matching::CrossEntropy,
            provenance,
        }
    }

    pub fn with_values(mut self, values: ValueTable) -> Self {
        self.values = Some(values);
        self
    }

    pub fn with_matching(mut self, matching: Matching) -> Self {
        self.matching = matching;
        self
    }

    /// Restricts supervision to the given observations.
    pub fn with_supervision(mut self, supervised: &[ObsId]) -> Self {
        let mut mask = vec![false; self.observations.len()];
        for o in supervised {
            mask[o.index()] = true;
        }
        self.supervised = Some(mask);
        self
    }

    pub fn action_count(&self) -> usize {
        self.policy.action_count()
    }

    /// Same teacher over `total` actions; added actions get probability 0.
    pub fn extended(&self, total: usize) -> Self {
        Self { policy: self.policy.extended(total), ..self.clone() }
    }

    #[inline]
    pub fn obs(&self, state: StateId) -> ObsId {
        self.observations.obs(state)
    }

    pub fn is_supervised(&self, state: StateId) -> bool {
        match &self.supervised {
            None => true,
            Some(mask) => mask[self.obs(state).index()],
        }
    }

    /// Distribution the teacher samples from when it controls the episode.
    pub fn control_probs(&self, state: StateId) -> Cow<'_, [f64]> {
        if self.is_supervised(state) {
            self.policy.probs(self.obs(state))
        } else {
            Cow::Owned(vec![1.0 / self.action_count() as f64; self.action_count()])
        }
    }

    /// Distillation target at `state`, `None` where the teacher is silent.
    pub fn target(&self, state: StateId) -> Option<Cow<'_, [f64]>> {
        self.is_supervised(state).then(|| self.policy.probs(self.obs(state)))
    }

    /// Teacher critic at a decision state, `None` without a critic.
    pub fn value(&self, state: StateId) -> Option<f64> {
        self.values.as_ref().map(|v| v.get(self.obs(state)))
    }

    /// Teacher critic at a successor; the end of the episode is worth 0.
    pub fn value_after(&self, next: Option<StateId>) -> Option<f64> {
        match next {
            Some(s) => self.value(s),
            None => self.values.as_ref().map(|_| 0.0),
        }
    }

    pub fn to_doc(&self) -> TeacherDoc {
        TeacherDoc {
            action_count: self.action_count(),
            policy: self.policy.to_keyed(&self.observations),
            values: self.values.as_ref().map(|v| v.to_keyed(&self.observations)),
            supervised: self.supervised.as_ref().map(|mask| {
                self.observations
                    .ids()
                    .filter(|o| mask[o.index()])
                    .map(|o| self.observations.key(o).clone())
                    .collect()
            }),
            matching: self.matching,
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_doc(doc: &TeacherDoc, observations: ObservationSpace) -> Result<Self, TabularError> {
        let policy = DistributionTable::from_keyed(doc.action_count, &doc.policy, &observations)?;
        let values = doc
            .values
            .as_ref()
            .map(|v| ValueTable::from_keyed(v, &observations))
            .transpose()?;
        let mut bundle = Self::new(observations, policy, doc.provenance.clone());
        bundle.values = values;
        bundle.matching = doc.matching;
        if let Some(keys) = &doc.supervised {
            let ids = keys
                .iter()
                .map(|k| bundle.observations.id_of(k).ok_or_else(|| TabularError::UnknownKey(k.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            bundle = bundle.with_supervision(&ids);
        }
        Ok(bundle)
    }
}

/// Serialized teacher, keyed by observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherDoc {
    pub action_count: usize,
    pub policy: BTreeMap<ObservationKey, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<ObservationKey, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised: Option<Vec<ObservationKey>>,
    #[serde(default)]
    pub matching: Matching,
    pub provenance: TeacherProvenance,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ObservationSpace {
        ObservationSpace::from_keys(vec![
            Some(ObservationKey::new("a")),
            Some(ObservationKey::new("b")),
            None,
        ])
    }

    #[test]
    fn json_round_trip() {
        let mut policy = DistributionTable::new(2);
        policy.set(ObsId(0), vec![0.25, 0.75]);
        policy.set(ObsId(1), vec![1.0, 0.0]);
        let mut values = ValueTable::new();
        values.set(ObsId(1), -3.0);
        let t = TeacherBundle::new(space(), policy, TeacherProvenance::named("test"))
            .with_values(values)
            .with_supervision(&[ObsId(1)])
            .with_matching(Matching::InformationPotential { scale: 4.0 });
        let json = serde_json::to_string(&t.to_doc()).unwrap();
        let doc: TeacherDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(TeacherBundle::from_doc(&doc, space()).unwrap(), t);
    }

    #[test]
    fn silent_observations_act_uniformly() {
        let mut policy = DistributionTable::new(2);
        policy.set(ObsId(0), vec![1.0, 0.0]);
        policy.set(ObsId(1), vec![1.0, 0.0]);
        let t = TeacherBundle::new(space(), policy, TeacherProvenance::default())
            .with_supervision(&[ObsId(1)]);
        assert!(t.target(0).is_none());
        assert_eq!(t.control_probs(0).as_ref(), &[0.5, 0.5]);
        assert_eq!(t.target(1).unwrap().as_ref(), &[1.0, 0.0]);
        assert_eq!(t.value(1), None);
        assert_eq!(t.value_after(None), None);
    }
}
