//! Accuracy, frequency of mistakes, teaching size, confusion matrices and
//! the correlation statistics used to compare rankings.

mod confusion;
mod stats;
mod teaching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drawing::ConceptName;
use crate::learner::TrialRecord;

pub use confusion::{ConfusionMatrix, OTHER_LABEL};
pub use stats::{
    kendall_tau, kendall_tau_b, mean, ols, ols_residuals, pearson, sample_sd, OlsFit, RankedOrder,
};
pub use teaching::{order_candidates, teaching_size, Protocol, TeachingSizeResult};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no trials for concept `{0}`")]
    NoTrials(ConceptName),
    #[error("total prompt count is zero")]
    ZeroTotal,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("regressor is constant")]
    ConstantRegressor,
    #[error("rank orders cover different items")]
    ItemMismatch,
    #[error("bad rank order `{0}`")]
    BadOrder(String),
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("prior for `{concept}` is {value}, outside [0, 1]")]
    PriorRange { concept: ConceptName, value: f64 },
}

/// Share of the trials of concept `c` judged correct.
pub fn accuracy(trials: &[TrialRecord], c: &ConceptName) -> Result<f64, MetricsError> {
    let mut n = 0usize;
    let mut correct = 0usize;
    for t in trials.iter().filter(|t| &t.concept == c) {
        n += 1;
        if t.judgment.is_correct() {
            correct += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoTrials(c.clone()));
    }
    Ok(correct as f64 / n as f64)
}

/// Trials not showing `c` whose answer was judged to be `c`, divided by the
/// phase's total prompt count.
pub fn frequency_of_mistakes(
    all_trials: &[TrialRecord],
    c: &ConceptName,
    n_total: usize,
) -> Result<f64, MetricsError> {
    if n_total == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    let mistakes = all_trials
        .iter()
        .filter(|t| &t.concept != c && t.judgment.predicted(&t.concept) == Some(c))
        .count();
    Ok(mistakes as f64 / n_total as f64)
}

/// Normalized familiarity of each concept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ConceptName, f64>", into = "BTreeMap<ConceptName, f64>")]
pub struct PriorTable(BTreeMap<ConceptName, f64>);

impl PriorTable {
    pub fn new(values: BTreeMap<ConceptName, f64>) -> Result<Self, MetricsError> {
        for (concept, &value) in &values {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::PriorRange {
                    concept: concept.clone(),
                    value,
                });
            }
        }
        Ok(Self(values))
    }

    pub fn get(&self, c: &ConceptName) -> Option<f64> {
        self.0.get(c).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConceptName, f64)> {
        self.0.iter().map(|(c, &v)| (c, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<BTreeMap<ConceptName, f64>> for PriorTable {
    type Error = MetricsError;

    fn try_from(v: BTreeMap<ConceptName, f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PriorTable> for BTreeMap<ConceptName, f64> {
    fn from(p: PriorTable) -> Self {
        p.0
    }
}
