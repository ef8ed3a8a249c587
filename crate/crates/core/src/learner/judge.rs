//! Exact-match answer judging against per-concept hyponym sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drawing::ConceptName;

const BUILTIN_TABLE: &str = include_str!("../../data/hyponyms.csv");

#[derive(Debug, Error)]
pub enum HyponymError {
    #[error("answer `{answer}` is accepted for both `{first}` and `{second}`")]
    Overlap {
        answer: String,
        first: ConceptName,
        second: ConceptName,
    },
    #[error("hyponym table row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("reading hyponym table: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "concept", rename_all = "snake_case")]
pub enum Judgment {
    Correct,
    WrongConcept(ConceptName),
    Other,
}

impl Judgment {
    pub fn is_correct(&self) -> bool {
        matches!(self, Judgment::Correct)
    }

    /// The concept the learner named, if it named one of the table's concepts.
    pub fn predicted<'a>(&'a self, expected: &'a ConceptName) -> Option<&'a ConceptName> {
        match self {
            Judgment::Correct => Some(expected),
            Judgment::WrongConcept(c) => Some(c),
            Judgment::Other => None,
        }
    }
}

/// Lowercase, trim, and strip punctuation from both ends.
pub fn normalize_answer(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
}

/// Accepted answers per concept. The concept name itself is always accepted,
/// and no answer may be accepted for two concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyponymTable {
    accepted: BTreeMap<ConceptName, BTreeSet<String>>,
    owner: HashMap<String, ConceptName>,
}

impl HyponymTable {
    pub fn from_pairs<I, C, A>(pairs: I) -> Result<Self, HyponymError>
    where
        I: IntoIterator<Item = (C, A)>,
        C: AsRef<str>,
        A: AsRef<str>,
    {
        let mut accepted: BTreeMap<ConceptName, BTreeSet<String>> = BTreeMap::new();
        for (concept, answer) in pairs {
            let concept = ConceptName::new(concept.as_ref());
            let answer = normalize_answer(answer.as_ref());
            let set = accepted.entry(concept.clone()).or_default();
            set.insert(concept.as_str().to_owned());
            if !answer.is_empty() {
                set.insert(answer);
            }
        }
        let mut owner: HashMap<String, ConceptName> = HashMap::new();
        for (concept, answers) in &accepted {
            for a in answers {
                if let Some(prev) = owner.insert(a.clone(), concept.clone()) {
                    return Err(HyponymError::Overlap {
                        answer: a.clone(),
                        first: prev,
                        second: concept.clone(),
                    });
                }
            }
        }
        Ok(Self { accepted, owner })
    }

    /// Table with only the concept names and no hyponyms.
    pub fn names_only<'a>(concepts: impl IntoIterator<Item = &'a ConceptName>) -> Self {
        Self::from_pairs(concepts.into_iter().map(|c| (c.as_str(), "")))
            .expect("distinct concept names never overlap")
    }

    /// Two-column CSV `concept,accepted_answer`. A header row is allowed.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, HyponymError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(HyponymError::Row {
                    row: i + 1,
                    reason: format!("expected 2 columns, found {}", rec.len()),
                });
            }
            if i == 0 && rec[0].eq_ignore_ascii_case("concept") {
                continue;
            }
            if rec[0].is_empty() {
                return Err(HyponymError::Row {
                    row: i + 1,
                    reason: "empty concept".into(),
                });
            }
            pairs.push((rec[0].to_owned(), rec[1].to_owned()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, HyponymError> {
        let file = std::fs::File::open(path).map_err(csv::Error::from)?;
        Self::from_csv_reader(file)
    }

    /// The shipped table covering the twenty study concepts.
    pub fn builtin() -> Self {
        Self::from_csv_reader(BUILTIN_TABLE.as_bytes()).expect("builtin hyponym table is valid")
    }

    /// Keeps only the given concepts; concepts missing from the table are
    /// added with just their own name.
    pub fn restrict<'a>(&self, concepts: impl IntoIterator<Item = &'a ConceptName>) -> Self {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for c in concepts {
            pairs.push((c.as_str().to_owned(), String::new()));
            if let Some(set) = self.accepted.get(c) {
                pairs.extend(set.iter().map(|a| (c.as_str().to_owned(), a.clone())));
            }
        }
        Self::from_pairs(pairs).expect("subset of a disjoint table is disjoint")
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptName> {
        self.accepted.keys()
    }

    pub fn accepted(&self, concept: &ConceptName) -> Option<&BTreeSet<String>> {
        self.accepted.get(concept)
    }

    pub fn concept_for(&self, normalized_answer: &str) -> Option<&ConceptName> {
        self.owner.get(normalized_answer)
    }
}

pub fn judge(raw: &str, expected: &ConceptName, table: &HyponymTable) -> Judgment {
    let answer = normalize_answer(raw);
    if answer == expected.as_str() {
        return Judgment::Correct;
    }
    match table.concept_for(&answer) {
        Some(c) if c == expected => Judgment::Correct,
        Some(c) => Judgment::WrongConcept(c.clone()),
        None => Judgment::Other,
    }
}
