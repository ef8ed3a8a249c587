//! Append-only NDJSON log of learner answers, keyed so reruns skip work
//! already paid for.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::judge::{judge, HyponymTable, Judgment};
use super::prompt::PROMPT_TEMPLATE_VERSION;
use super::{Learner, LearnerError, Query};
use crate::drawing::ConceptName;
use crate::render::{Modality, Stimulus};
use crate::simplify::Epsilon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model_name: String,
    pub modality: Modality,
    pub drawing_id: String,
    /// Expected concept of the drawing.
    pub concept: ConceptName,
    pub epsilon: Epsilon,
    pub segment_count: usize,
    pub temperature: f64,
    /// Repetition index for repeated queries of one stimulus.
    pub trial: u32,
    pub template_version: u32,
    pub raw_answer: String,
    pub judgment: Judgment,
    /// Unix milliseconds; omitted when the run disables wall-clock stamps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl TrialRecord {
    pub fn new(
        model_name: &str,
        stim: &Stimulus,
        temperature: f64,
        trial: u32,
        raw_answer: String,
        table: &HyponymTable,
        timestamp: Option<u64>,
    ) -> Self {
        let judgment = judge(&raw_answer, &stim.concept, table);
        Self {
            model_name: model_name.to_owned(),
            modality: stim.modality,
            drawing_id: stim.drawing_id.clone(),
            concept: stim.concept.clone(),
            epsilon: stim.epsilon,
            segment_count: stim.segment_count,
            temperature,
            trial,
            template_version: PROMPT_TEMPLATE_VERSION,
            raw_answer,
            judgment,
            timestamp,
        }
    }

    pub fn key(&self) -> CacheKey {
        CacheKey {
            model: self.model_name.clone(),
            modality: self.modality,
            drawing_id: self.drawing_id.clone(),
            epsilon_bits: self.epsilon.value().to_bits(),
            temperature_bits: self.temperature.to_bits(),
            trial: self.trial,
            template_version: self.template_version,
        }
    }

    /// Judgment recomputed from the raw answer.
    pub fn rejudge(&self, table: &HyponymTable) -> Judgment {
        judge(&self.raw_answer, &self.concept, table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub model: String,
    pub modality: Modality,
    pub drawing_id: String,
    epsilon_bits: u64,
    temperature_bits: u64,
    pub trial: u32,
    pub template_version: u32,
}

impl CacheKey {
    pub fn new(model: &str, stim: &Stimulus, temperature: f64, trial: u32) -> Self {
        Self::from_parts(model, stim.modality, &stim.drawing_id, stim.epsilon, temperature, trial)
    }

    pub fn from_parts(
        model: &str,
        modality: Modality,
        drawing_id: &str,
        epsilon: Epsilon,
        temperature: f64,
        trial: u32,
    ) -> Self {
        Self {
            model: model.to_owned(),
            modality,
            drawing_id: drawing_id.to_owned(),
            epsilon_bits: epsilon.value().to_bits(),
            temperature_bits: temperature.to_bits(),
            trial,
            template_version: PROMPT_TEMPLATE_VERSION,
        }
    }

    pub fn epsilon(&self) -> f64 {
        f64::from_bits(self.epsilon_bits)
    }

    pub fn temperature(&self) -> f64 {
        f64::from_bits(self.temperature_bits)
    }

    /// Printable form, also used to derive per-query random generators.
    pub fn label(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|v{}",
            self.model,
            self.modality,
            self.drawing_id,
            self.epsilon(),
            self.temperature(),
            self.trial,
            self.template_version
        )
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Inner {
    file: File,
    records: Vec<TrialRecord>,
    index: HashMap<CacheKey, usize>,
}

pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl ResponseCache {
    /// Opens or creates the cache file. A torn final line left by an
    /// interrupted write is truncated away; any other bad line is an error.
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut text = String::new();
        if path.exists() {
            File::open(path)?.read_to_string(&mut text)?;
        }
        let mut records = Vec::new();
        let mut index = HashMap::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let mut torn = false;
        for chunk in text.split_inclusive('\n') {
            offset += chunk.len();
            let line = chunk.trim();
            if line.is_empty() {
                good_len = offset;
                continue;
            }
            match serde_json::from_str::<TrialRecord>(line) {
                Ok(rec) => {
                    index.entry(rec.key()).or_insert(records.len());
                    records.push(rec);
                    good_len = offset;
                }
                Err(e) if offset == text.len() && !chunk.ends_with('\n') => {
                    log::warn!("{}: dropping torn final line ({e})", path.display());
                    torn = true;
                }
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}: bad cache line: {e}", path.display()),
                    ))
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn {
            file.set_len(good_len as u64)?;
        }
        Ok(Self {
            path: path.to_owned(),
            inner: Mutex::new(Inner {
                file,
                records,
                index,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("cache lock poisoned")
    }

    pub fn get(&self, key: &CacheKey) -> Option<TrialRecord> {
        let inner = self.lock();
        inner.index.get(key).map(|&i| inner.records[i].clone())
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.lock().index.contains_key(key)
    }

    /// Writes one record. Returns false, writing nothing, if its key is
    /// already present.
    pub fn append(&self, record: &TrialRecord) -> io::Result<bool> {
        let mut inner = self.lock();
        let key = record.key();
        if inner.index.contains_key(&key) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        inner.file.write_all(line.as_bytes())?;
        inner.file.flush()?;
        let at = inner.records.len();
        inner.records.push(record.clone());
        inner.index.insert(key, at);
        Ok(true)
    }

    /// All records in file order.
    pub fn records(&self) -> Vec<TrialRecord> {
        self.lock().records.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads every record of a cache file without opening it for writing.
pub fn read_records(path: &Path) -> io::Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// Answers from the cache when possible; otherwise asks the learner, judges
/// the answer and appends the record before returning it.
#[allow(clippy::too_many_arguments)]
pub fn identify_cached(
    learner: &dyn Learner,
    cache: &ResponseCache,
    stim: &Stimulus,
    temperature: f64,
    trial: u32,
    table: &HyponymTable,
    rng: &mut dyn RngCore,
    timestamp: bool,
) -> Result<TrialRecord, LearnerError> {
    let key = CacheKey::new(learner.name(), stim, temperature, trial);
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let raw = learner.identify(
        &Query {
            stimulus: stim,
            temperature,
        },
        rng,
    )?;
    let record = TrialRecord::new(
        learner.name(),
        stim,
        temperature,
        trial,
        raw,
        table,
        timestamp.then(now_millis),
    );
    cache.append(&record)?;
    Ok(record)
}
