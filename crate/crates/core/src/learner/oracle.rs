//! Mock learners with a known segment-count threshold.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::{Learner, LearnerConfig, LearnerError, Query};
use crate::drawing::ConceptName;
use crate::render::Stimulus;

pub const UNKNOWN_ANSWER: &str = "unknown";

/// Answers the true concept with probability `p` when the stimulus has at
/// least `threshold` segments, `"unknown"` otherwise. `None` never recognizes.
pub fn oracle_identify(
    threshold: Option<usize>,
    p: f64,
    stim: &Stimulus,
    rng: &mut dyn RngCore,
) -> String {
    match threshold {
        Some(k) if stim.segment_count >= k => {
            // p = 1 never draws, so the deterministic oracle consumes no randomness
            if p >= 1.0 || rng.random::<f64>() < p {
                stim.concept.as_str().to_owned()
            } else {
                UNKNOWN_ANSWER.to_owned()
            }
        }
        _ => UNKNOWN_ANSWER.to_owned(),
    }
}

#[derive(Debug, Clone)]
pub struct OracleLearner {
    name: String,
    default_threshold: Option<usize>,
    thresholds: BTreeMap<ConceptName, usize>,
    probability: f64,
}

impl OracleLearner {
    pub fn deterministic(name: impl Into<String>, threshold: Option<usize>) -> Self {
        Self::stochastic(name, threshold, 1.0)
    }

    pub fn stochastic(name: impl Into<String>, threshold: Option<usize>, p: f64) -> Self {
        Self {
            name: name.into(),
            default_threshold: threshold,
            thresholds: BTreeMap::new(),
            probability: p,
        }
    }

    pub fn with_threshold(mut self, concept: ConceptName, k: usize) -> Self {
        self.thresholds.insert(concept, k);
        self
    }

    pub fn threshold_for(&self, concept: &ConceptName) -> Option<usize> {
        self.thresholds.get(concept).copied().or(self.default_threshold)
    }

    pub(crate) fn from_config(cfg: &LearnerConfig, deterministic: bool) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let p = if deterministic { 1.0 } else { cfg.success_probability };
        let mut learner = Self::stochastic(cfg.name.clone(), cfg.threshold, p);
        for (concept, &k) in &cfg.thresholds {
            learner = learner.with_threshold(ConceptName::new(concept), k);
        }
        Ok(learner)
    }
}

impl Learner for OracleLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn identify(&self, query: &Query<'_>, rng: &mut dyn RngCore) -> Result<String, LearnerError> {
        let k = self.threshold_for(&query.stimulus.concept);
        Ok(oracle_identify(k, self.probability, query.stimulus, rng))
    }
}
