use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::drawing::ConceptName;
use crate::learner::{HyponymTable, LearnerConfig, LearnerRegistry};
use crate::metrics::{PriorTable, Protocol};
use crate::render::{Modality, RenderStyle};
use crate::simplify::Epsilon;

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_eps_start() -> f64 {
    Epsilon::DATASET.value()
}
fn default_eps_step() -> f64 {
    1.0
}
fn default_concurrency() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_target() -> usize {
    50
}
fn default_rho() -> f64 {
    0.5
}
fn default_trials() -> u32 {
    50
}
fn default_teaching_temperature() -> f64 {
    1.0
}
fn default_modalities() -> Vec<Modality> {
    Modality::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default = "default_target")]
    pub target_size: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            target_size: default_target(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_trials")]
    pub n_trials: u32,
    #[serde(default)]
    pub selection_temperature: f64,
    #[serde(default = "default_teaching_temperature")]
    pub teaching_temperature: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            n_trials: default_trials(),
            selection_temperature: 0.0,
            teaching_temperature: default_teaching_temperature(),
        }
    }
}

impl ProtocolSection {
    pub fn teaching(&self) -> Protocol {
        Protocol {
            rho: self.rho,
            n_trials: self.n_trials,
            temperature: self.teaching_temperature,
        }
    }
}

/// Experiment description. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// NDJSON drawing corpus.
    pub dataset: PathBuf,
    pub concepts: Vec<String>,
    /// Two-column CSV of accepted answers; the built-in table when absent.
    #[serde(default)]
    pub hyponyms: Option<PathBuf>,
    /// Two-column CSV of concept priors in [0, 1].
    #[serde(default)]
    pub priors: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps_start")]
    pub eps_start: f64,
    #[serde(default = "default_eps_step")]
    pub eps_step: f64,
    /// Maximum learner calls in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Keep only drawings the dataset marks as recognized.
    #[serde(default = "default_true")]
    pub recognized_only: bool,
    /// Stamp cache records with wall-clock time.
    #[serde(default = "default_true")]
    pub timestamps: bool,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<Modality>,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub render: RenderStyle,
    #[serde(default)]
    pub learners: Vec<LearnerConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        if let Some(p) = self.hyponyms.as_mut() {
            fix(p);
        }
        if let Some(p) = self.priors.as_mut() {
            fix(p);
        }
    }

    /// Configured concepts, normalized, sorted and deduplicated.
    pub fn concept_set(&self) -> BTreeSet<ConceptName> {
        self.concepts.iter().map(|c| ConceptName::new(c)).collect()
    }

    pub fn eps_start(&self) -> Result<Epsilon, PipelineError> {
        Epsilon::new(self.eps_start)
            .ok_or_else(|| PipelineError::Config(format!("eps_start {} must be positive", self.eps_start)))
    }

    /// Stable digest of everything that affects results.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..12])
    }

    /// Checks everything that can fail before any learner is called.
    pub fn validate(&self, registry: &LearnerRegistry) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.concepts.is_empty() {
            return bad("no concepts configured".into());
        }
        if self.concept_set().len() != self.concepts.len() {
            return bad("duplicate concept names".into());
        }
        if !self.dataset.is_file() {
            return bad(format!("dataset {} not found", self.dataset.display()));
        }
        self.eps_start()?;
        if !(self.eps_step > 0.0 && self.eps_step.is_finite()) {
            return bad(format!("eps_step {} must be positive", self.eps_step));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.sample.target_size == 0 {
            return bad("sample.target_size must be positive".into());
        }
        if self.modalities.is_empty() {
            return bad("no modalities configured".into());
        }
        if self.render.stroke_width == 0 {
            return bad("render.stroke_width must be positive".into());
        }
        self.protocol
            .teaching()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for t in [self.protocol.selection_temperature, self.protocol.teaching_temperature] {
            crate::learner::validate_temperature(t).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.learners.is_empty() {
            return bad("no learners configured".into());
        }
        let mut names = BTreeSet::new();
        for l in &self.learners {
            l.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            if !names.insert(l.name.as_str()) {
                return bad(format!("duplicate learner name `{}`", l.name));
            }
            if !registry.contains(&l.kind) {
                return bad(format!(
                    "learner `{}`: unknown kind `{}` (known: {})",
                    l.name,
                    l.kind,
                    registry.kinds().collect::<Vec<_>>().join(", ")
                ));
            }
        }
        self.hyponym_table()?;
        if self.priors.is_some() {
            self.prior_table()?;
        }
        Ok(())
    }

    /// Hyponym table restricted to the configured concepts.
    pub fn hyponym_table(&self) -> Result<HyponymTable, PipelineError> {
        let table = match &self.hyponyms {
            Some(p) => HyponymTable::load(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
            None => HyponymTable::builtin(),
        };
        Ok(table.restrict(&self.concept_set()))
    }

    pub fn prior_table(&self) -> Result<Option<PriorTable>, PipelineError> {
        match &self.priors {
            None => Ok(None),
            Some(p) => load_priors(p, &self.concept_set()).map(Some),
        }
    }
}

/// Reads `concept,prior` rows; every configured concept must be present.
pub fn load_priors(path: &Path, concepts: &BTreeSet<ConceptName>) -> Result<PriorTable, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Io {
        path: path.to_owned(),
        source: e,
    })?;
    read_priors(file, concepts).map_err(|e| match e {
        PipelineError::Priors(m) => PipelineError::Priors(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_priors<R: std::io::Read>(
    reader: R,
    concepts: &BTreeSet<ConceptName>,
) -> Result<PriorTable, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut values = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| PipelineError::Priors(e.to_string()))?;
        if row.len() != 2 {
            return Err(PipelineError::Priors(format!("row {}: expected 2 fields", i + 1)));
        }
        let value: f64 = match row[1].parse() {
            Ok(v) => v,
            // header row
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(PipelineError::Priors(format!("row {}: `{}` is not a number", i + 1, &row[1])))
            }
        };
        let concept = ConceptName::new(&row[0]);
        if concepts.is_empty() || concepts.contains(&concept) {
            values.insert(concept, value);
        }
    }
    if let Some(missing) = concepts.iter().find(|c| !values.contains_key(*c)) {
        return Err(PipelineError::Priors(format!("no prior for `{missing}`")));
    }
    PriorTable::new(values).map_err(|e| PipelineError::Priors(e.to_string()))
}
