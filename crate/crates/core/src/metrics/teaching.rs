use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::drawing::ConceptName;
use crate::render::{Modality, Stimulus};
use crate::simplify::Epsilon;

fn default_rho() -> f64 {
    0.5
}
fn default_trials() -> u32 {
    50
}
fn default_teaching_temperature() -> f64 {
    1.0
}

/// Acceptance rule for one candidate: at least `ceil(rho * n_trials)`
/// correct answers out of `n_trials` at `temperature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_trials")]
    pub n_trials: u32,
    #[serde(default = "default_teaching_temperature")]
    pub temperature: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            n_trials: default_trials(),
            temperature: default_teaching_temperature(),
        }
    }
}

impl Protocol {
    pub fn new(rho: f64, n_trials: u32, temperature: f64) -> Result<Self, MetricsError> {
        let p = Self {
            rho,
            n_trials,
            temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(MetricsError::Protocol(format!("rho {} outside (0, 1]", self.rho)));
        }
        if self.n_trials == 0 {
            return Err(MetricsError::Protocol("n_trials must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(MetricsError::Protocol(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Successes needed to accept a candidate.
    pub fn required(&self) -> u32 {
        // tolerate products like 0.3 * 50 landing a hair above an integer
        let need = (self.rho * f64::from(self.n_trials) - 1e-9).ceil();
        (need.max(1.0) as u32).min(self.n_trials)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingSizeResult {
    pub concept: ConceptName,
    pub modality: Modality,
    /// Segment count of the smallest accepted candidate; `None` means not
    /// identified.
    pub ts: Option<usize>,
    pub witness: Option<(String, Epsilon)>,
    /// Correct answers for the witness.
    pub successes: u32,
    /// Trials run on the witness.
    pub trials: u32,
    pub candidates_tried: usize,
    /// Trials run over all candidates.
    pub total_trials: u64,
}

impl TeachingSizeResult {
    pub fn is_identified(&self) -> bool {
        self.ts.is_some()
    }
}

/// Candidate visiting order: segment count, then drawing id, then epsilon.
pub fn order_candidates(candidates: &[Stimulus]) -> Vec<&Stimulus> {
    let mut v: Vec<&Stimulus> = candidates.iter().collect();
    v.sort_by(|a, b| {
        a.segment_count
            .cmp(&b.segment_count)
            .then_with(|| a.drawing_id.cmp(&b.drawing_id))
            .then_with(|| a.epsilon.value().total_cmp(&b.epsilon.value()))
    });
    v
}

/// Smallest candidate that `run_trial` answers correctly often enough.
///
/// `run_trial(stim, i)` returns whether trial `i` of `stim` was correct.
/// A candidate is dropped as soon as its failures make acceptance
/// impossible; an accepted candidate runs all trials so its success count
/// is out of `n_trials`.
pub fn teaching_size<E, F>(
    concept: &ConceptName,
    modality: Modality,
    candidates: &[Stimulus],
    proto: &Protocol,
    mut run_trial: F,
) -> Result<TeachingSizeResult, E>
where
    F: FnMut(&Stimulus, u32) -> Result<bool, E>,
{
    let need = proto.required();
    let allowed_failures = proto.n_trials - need;
    let mut result = TeachingSizeResult {
        concept: concept.clone(),
        modality,
        ts: None,
        witness: None,
        successes: 0,
        trials: 0,
        candidates_tried: 0,
        total_trials: 0,
    };
    for stim in order_candidates(candidates) {
        result.candidates_tried += 1;
        let mut successes = 0u32;
        let mut failures = 0u32;
        let mut ran = 0u32;
        for i in 0..proto.n_trials {
            ran += 1;
            if run_trial(stim, i)? {
                successes += 1;
            } else {
                failures += 1;
                if failures > allowed_failures {
                    break;
                }
            }
        }
        result.total_trials += u64::from(ran);
        if successes >= need {
            result.ts = Some(stim.segment_count);
            result.witness = Some((stim.drawing_id.clone(), stim.epsilon));
            result.successes = successes;
            result.trials = ran;
            break;
        }
    }
    Ok(result)
}
