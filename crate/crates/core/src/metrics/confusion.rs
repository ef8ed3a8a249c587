use serde::Serialize;

use crate::drawing::ConceptName;
use crate::learner::TrialRecord;

pub const OTHER_LABEL: &str = "other";

/// Counts of (actual concept, predicted concept or other). Trials whose
/// actual concept is not listed are ignored; predictions outside the list
/// count as other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    concepts: Vec<ConceptName>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn build(trials: &[TrialRecord], concepts: &[ConceptName]) -> Self {
        let mut concepts = concepts.to_vec();
        concepts.sort();
        concepts.dedup();
        let width = concepts.len() + 1;
        let mut counts = vec![vec![0u64; width]; concepts.len()];
        for t in trials {
            let Ok(row) = concepts.binary_search(&t.concept) else {
                continue;
            };
            let col = t
                .judgment
                .predicted(&t.concept)
                .and_then(|p| concepts.binary_search(p).ok())
                .unwrap_or(concepts.len());
            counts[row][col] += 1;
        }
        Self { concepts, counts }
    }

    pub fn concepts(&self) -> &[ConceptName] {
        &self.concepts
    }

    /// Column labels: the concepts, then `other`.
    pub fn columns(&self) -> Vec<String> {
        self.concepts
            .iter()
            .map(|c| c.to_string())
            .chain(std::iter::once(OTHER_LABEL.to_owned()))
            .collect()
    }

    /// Row `i`, one count per column.
    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i]
    }

    pub fn count(&self, actual: &ConceptName, predicted: Option<&ConceptName>) -> u64 {
        let Ok(r) = self.concepts.binary_search(actual) else {
            return 0;
        };
        let c = match predicted {
            Some(p) => match self.concepts.binary_search(p) {
                Ok(c) => c,
                Err(_) => return 0,
            },
            None => self.concepts.len(),
        };
        self.counts[r][c]
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Percentage of the row, rounded to two decimals; 0 for an empty row.
    pub fn percentage(&self, i: usize, j: usize) -> f64 {
        let total = self.row_total(i);
        if total == 0 {
            return 0.0;
        }
        let pct = 100.0 * self.counts[i][j] as f64 / total as f64;
        (pct * 100.0).round() / 100.0
    }

    /// `count (pct%)` as printed in the result tables.
    pub fn cell_label(&self, i: usize, j: usize) -> String {
        format!("{} ({:.2}%)", self.counts[i][j], self.percentage(i, j))
    }
}
