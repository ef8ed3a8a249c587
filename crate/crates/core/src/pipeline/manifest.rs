use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub completed: bool,
    /// Cached records per `model/modality/concept`.
    pub progress: BTreeMap<String, u64>,
}

/// Progress of a run directory. Written after every phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub phases: BTreeMap<String, PhaseState>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            phases: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Option<Self>, PipelineError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::Io {
                path: path.to_owned(),
                source: e,
            }),
        }
    }

    /// Writes via a temporary file so a crash never leaves half a manifest.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let io = |e| PipelineError::Io {
            path: path.to_owned(),
            source: e,
        };
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseState> {
        self.phases.get(name)
    }

    pub fn is_complete(&self, name: &str) -> bool {
        self.phase(name).is_some_and(|p| p.completed)
    }

    /// Raises counters to `counts`; counters never go down.
    pub fn record_progress(&mut self, name: &str, counts: &BTreeMap<String, u64>) {
        let phase = self.phases.entry(name.to_owned()).or_default();
        for (k, &v) in counts {
            let slot = phase.progress.entry(k.clone()).or_insert(0);
            *slot = (*slot).max(v);
        }
    }

    pub fn mark_complete(&mut self, name: &str) {
        self.phases.entry(name.to_owned()).or_default().completed = true;
    }
}
