use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::executor::run_ordered;
use super::manifest::RunManifest;
use super::report::emit_reports;
use super::{io_err, PipelineError};
use crate::drawing::{load_corpus_with_stats, parse_dataset_line, ConceptName, Drawing, LoadStats};
use crate::learner::cache::{now_millis, read_records};
use crate::learner::{
    task_rng, CacheKey, HyponymTable, Learner, LearnerRegistry, Query, ResponseCache, TrialRecord,
};
use crate::metrics::teaching_size;
use crate::render::{Modality, Payload, Stimulus};
use crate::sampling::{stratified_sample, SampleConfig};
use crate::simplify::{build_ladder, Epsilon};

pub const SELECT_PHASE: &str = "select";
pub const TEACH_PHASE: &str = "teach";

/// Command-line overrides for one invocation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Restrict to these learner names.
    pub models: Option<Vec<String>>,
    /// Restrict to these modalities.
    pub modalities: Option<Vec<Modality>>,
    /// Discard cached answers and progress of the phase first.
    pub fresh: bool,
    /// Count prompts without calling any learner.
    pub dry_run: bool,
}

/// File locations inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn samples_dir(&self) -> PathBuf {
        self.root.join("samples")
    }
    pub fn sample_file(&self, c: &ConceptName) -> PathBuf {
        self.samples_dir().join(format!("{}.ndjson", file_stem(c.as_str())))
    }
    pub fn selection_cache(&self) -> PathBuf {
        self.root.join("cache").join("selection.ndjson")
    }
    pub fn teaching_cache(&self) -> PathBuf {
        self.root.join("cache").join("teaching.ndjson")
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// File-name-safe form of a label.
pub(crate) fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub skipped_unknown_concept: usize,
    pub skipped_unrecognized: usize,
    /// Per concept: (available drawings, sampled drawings).
    pub concepts: BTreeMap<ConceptName, (usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub phase: String,
    pub tasks: usize,
    /// Prompts the phase needs; for teaching an upper bound.
    pub prompts_planned: u64,
    /// Prompts answered from the cache instead of a learner.
    pub cached: u64,
    pub learner_calls: u64,
    pub failures: usize,
    pub completed: bool,
    pub dry_run: bool,
}

/// Sampled drawings per concept, in concept order.
type Samples = Vec<(ConceptName, Vec<Drawing>)>;

struct RungRef {
    concept: usize,
    drawing: Drawing,
    epsilon: Epsilon,
}

impl RungRef {
    fn placeholder(&self, modality: Modality) -> Stimulus {
        Stimulus {
            drawing_id: self.drawing.id.clone(),
            concept: self.drawing.concept.clone(),
            epsilon: self.epsilon,
            modality,
            payload: Payload::Tikz(String::new()),
            segment_count: self.drawing.segment_count(),
        }
    }
}

#[derive(Default)]
struct Outcome {
    records: Vec<TrialRecord>,
    /// Prompts answered from the cache.
    hits: u64,
    error: Option<String>,
}

/// A validated experiment with its learners built.
pub struct Experiment {
    cfg: ExperimentConfig,
    learners: Vec<Box<dyn Learner>>,
    table: HyponymTable,
    modalities: Vec<Modality>,
    layout: Layout,
    full_scope: bool,
}

impl Experiment {
    pub fn new(
        mut cfg: ExperimentConfig,
        registry: &LearnerRegistry,
        opts: &RunOptions,
    ) -> Result<Self, PipelineError> {
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        cfg.validate(registry)?;
        let table = cfg.hyponym_table()?;

        let modalities = match &opts.modalities {
            None => cfg.modalities.clone(),
            Some(req) => {
                if let Some(m) = req.iter().find(|m| !cfg.modalities.contains(m)) {
                    return Err(PipelineError::Config(format!("modality {m} is not configured")));
                }
                cfg.modalities.iter().copied().filter(|m| req.contains(m)).collect()
            }
        };
        let selected: Vec<_> = match &opts.models {
            None => cfg.learners.iter().collect(),
            Some(names) => {
                if let Some(n) = names.iter().find(|n| !cfg.learners.iter().any(|l| &l.name == *n)) {
                    return Err(PipelineError::Config(format!("no learner named `{n}`")));
                }
                cfg.learners.iter().filter(|l| names.contains(&l.name)).collect()
            }
        };
        let full_scope = selected.len() == cfg.learners.len() && modalities.len() == cfg.modalities.len();
        let mut learners = Vec::new();
        for l in selected {
            learners.push(registry.build(l)?);
        }
        let layout = Layout {
            root: cfg.output_dir.clone(),
        };
        Ok(Self {
            cfg,
            learners,
            table,
            modalities,
            layout,
            full_scope,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn concepts(&self) -> Vec<ConceptName> {
        self.cfg.concept_set().into_iter().collect()
    }

    fn open_manifest(&self) -> Result<RunManifest, PipelineError> {
        let hash = self.cfg.config_hash();
        match RunManifest::load(&self.layout.manifest())? {
            Some(m) if m.config_hash != hash => Err(PipelineError::ConfigChanged {
                expected: hash,
                found: m.config_hash,
            }),
            Some(m) => Ok(m),
            None => Ok(RunManifest::new(hash)),
        }
    }

    fn remove_if_present(path: &Path) -> Result<(), PipelineError> {
        match fs::remove_file(path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(path)(e)),
            _ => Ok(()),
        }
    }

    /// Per-concept sampling seed derived from the run seed.
    fn sample_seed(&self, c: &ConceptName) -> u64 {
        task_rng(self.cfg.seed, &format!("sample|{c}")).next_u64()
    }

    fn draw_samples(&self) -> Result<(Samples, IngestSummary), PipelineError> {
        let concepts = self.cfg.concept_set();
        let (corpora, stats): (_, LoadStats) =
            load_corpus_with_stats(&self.cfg.dataset, &concepts, self.cfg.recognized_only)?;
        let mut by_concept: BTreeMap<ConceptName, _> =
            corpora.into_iter().map(|c| (c.concept.clone(), c)).collect();
        let mut out = Vec::new();
        let mut summary = IngestSummary {
            records: stats.records,
            skipped_unknown_concept: stats.skipped_unknown_concept,
            skipped_unrecognized: stats.skipped_unrecognized,
            concepts: BTreeMap::new(),
        };
        for c in concepts {
            let sample = match by_concept.remove(&c) {
                Some(corpus) => {
                    let cfg = SampleConfig {
                        target_size: self.cfg.sample.target_size,
                        seed: self.sample_seed(&c),
                    };
                    let s = stratified_sample(&corpus, &cfg);
                    summary.concepts.insert(c.clone(), (corpus.drawings.len(), s.len()));
                    s
                }
                None => {
                    log::warn!("no drawings for concept `{c}` in {}", self.cfg.dataset.display());
                    summary.concepts.insert(c.clone(), (0, 0));
                    Vec::new()
                }
            };
            out.push((c, sample));
        }
        Ok((out, summary))
    }

    /// Samples every concept and writes `samples/<concept>.ndjson`.
    pub fn ingest(&self) -> Result<IngestSummary, PipelineError> {
        let (samples, summary) = self.draw_samples()?;
        let dir = self.layout.samples_dir();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (c, drawings) in &samples {
            let path = self.layout.sample_file(c);
            let mut text = String::new();
            for d in drawings {
                text.push_str(&d.to_dataset_line());
                text.push('\n');
            }
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(summary)
    }

    fn load_samples(&self) -> Result<Samples, PipelineError> {
        let mut out = Vec::new();
        for c in self.concepts() {
            let path = self.layout.sample_file(&c);
            let text = fs::read_to_string(&path).map_err(|_| PipelineError::PhaseMissing {
                phase: SELECT_PHASE,
                missing: path.display().to_string(),
            })?;
            let drawings = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(parse_dataset_line)
                .collect::<Result<Vec<_>, _>>()?;
            out.push((c, drawings));
        }
        Ok(out)
    }

    fn rungs(&self, samples: &[(ConceptName, Vec<Drawing>)]) -> Result<Vec<RungRef>, PipelineError> {
        let start = self.cfg.eps_start()?;
        let mut out = Vec::new();
        for (ci, (_, drawings)) in samples.iter().enumerate() {
            for d in drawings {
                for rung in build_ladder(d, start, self.cfg.eps_step).rungs {
                    out.push(RungRef {
                        concept: ci,
                        drawing: rung.drawing,
                        epsilon: rung.epsilon,
                    });
                }
            }
        }
        Ok(out)
    }

    fn progress(records: &[TrialRecord], temperature: f64) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for r in records.iter().filter(|r| r.temperature == temperature) {
            *counts
                .entry(format!("{}/{}/{}", r.model_name, r.modality, r.concept))
                .or_insert(0) += 1;
        }
        counts
    }

    fn existing_keys(path: &Path) -> Result<HashSet<CacheKey>, PipelineError> {
        if !path.exists() {
            return Ok(HashSet::new());
        }
        Ok(read_records(path).map_err(io_err(path))?.iter().map(TrialRecord::key).collect())
    }

    fn ask(
        &self,
        learner: &dyn Learner,
        key: &CacheKey,
        stim: &Stimulus,
        temperature: f64,
    ) -> Result<TrialRecord, String> {
        let mut rng = task_rng(self.cfg.seed, &key.label());
        let raw = learner
            .identify(
                &Query {
                    stimulus: stim,
                    temperature,
                },
                &mut rng,
            )
            .map_err(|e| format!("{}: {e}", learner.name()))?;
        Ok(TrialRecord::new(
            learner.name(),
            stim,
            temperature,
            key.trial,
            raw,
            &self.table,
            self.cfg.timestamps.then(now_millis),
        ))
    }

    fn commit_all(
        &self,
        cache: &ResponseCache,
        tasks: usize,
        run: impl Fn(usize) -> Outcome + Sync,
    ) -> (PhaseSummary, Vec<String>) {
        let mut summary = PhaseSummary {
            tasks,
            ..PhaseSummary::default()
        };
        let mut errors = Vec::new();
        let indices: Vec<usize> = (0..tasks).collect();
        run_ordered(&indices, self.cfg.concurrency, |_, &i| run(i), |_, outcome| {
            summary.cached += outcome.hits;
            for r in &outcome.records {
                match cache.append(r) {
                    Ok(_) => summary.learner_calls += 1,
                    Err(e) => errors.push(format!("{}: {e}", cache.path().display())),
                }
            }
            if let Some(e) = outcome.error {
                errors.push(e);
            }
        });
        summary.failures = errors.len();
        (summary, errors)
    }

    fn finish(
        &self,
        mut manifest: RunManifest,
        phase: &str,
        cache: &ResponseCache,
        temperature: f64,
        mut summary: PhaseSummary,
        errors: Vec<String>,
    ) -> Result<PhaseSummary, PipelineError> {
        manifest.record_progress(phase, &Self::progress(&cache.records(), temperature));
        if errors.is_empty() && self.full_scope {
            manifest.mark_complete(phase);
        }
        summary.completed = manifest.is_complete(phase);
        manifest.save(&self.layout.manifest())?;
        emit_reports(&self.cfg, &self.layout)?;
        match errors.first() {
            None => Ok(summary),
            Some(first) => Err(PipelineError::Incomplete {
                failed: errors.len(),
                first: first.clone(),
            }),
        }
    }

    fn prepare_dir(&self, fresh: bool, wipe: &[PathBuf], reset: &[&str]) -> Result<RunManifest, PipelineError> {
        fs::create_dir_all(&self.layout.root).map_err(io_err(&self.layout.root))?;
        if fresh {
            for p in wipe {
                Self::remove_if_present(p)?;
            }
            let mut m = match RunManifest::load(&self.layout.manifest())? {
                Some(m) if m.config_hash == self.cfg.config_hash() => m,
                _ => RunManifest::new(self.cfg.config_hash()),
            };
            for phase in reset {
                m.phases.remove(*phase);
            }
            m.save(&self.layout.manifest())?;
            return Ok(m);
        }
        self.open_manifest()
    }

    /// Selection phase: every ladder rung of every sampled drawing, in each
    /// modality, once per learner at the selection temperature.
    pub fn select(&self, opts: &RunOptions) -> Result<PhaseSummary, PipelineError> {
        let temperature = self.cfg.protocol.selection_temperature;
        let cache_path = self.layout.selection_cache();
        if opts.dry_run {
            if !opts.fresh {
                self.open_manifest()?;
            }
            let (samples, _) = self.draw_samples()?;
            let rungs = self.rungs(&samples)?;
            let known = if opts.fresh { HashSet::new() } else { Self::existing_keys(&cache_path)? };
            let mut s = PhaseSummary {
                phase: SELECT_PHASE.into(),
                dry_run: true,
                ..PhaseSummary::default()
            };
            for r in &rungs {
                for &m in &self.modalities {
                    for l in &self.learners {
                        s.tasks += 1;
                        s.prompts_planned += 1;
                        let key = CacheKey::from_parts(l.name(), m, &r.drawing.id, r.epsilon, temperature, 0);
                        if known.contains(&key) {
                            s.cached += 1;
                        }
                    }
                }
            }
            return Ok(s);
        }

        let manifest = self.prepare_dir(
            opts.fresh,
            &[cache_path.clone(), self.layout.teaching_cache()],
            &[SELECT_PHASE, TEACH_PHASE],
        )?;
        self.ingest()?;
        let samples = self.load_samples()?;
        let rungs = self.rungs(&samples)?;
        let cache = ResponseCache::open(&cache_path).map_err(io_err(&cache_path))?;

        let mut tasks = Vec::new();
        for (ri, _) in rungs.iter().enumerate() {
            for &m in &self.modalities {
                for li in 0..self.learners.len() {
                    tasks.push((ri, m, li));
                }
            }
        }
        let (mut summary, errors) = self.commit_all(&cache, tasks.len(), |i| {
            let (ri, m, li) = tasks[i];
            let rung = &rungs[ri];
            let learner = self.learners[li].as_ref();
            let key = CacheKey::from_parts(learner.name(), m, &rung.drawing.id, rung.epsilon, temperature, 0);
            if cache.contains(&key) {
                return Outcome {
                    hits: 1,
                    ..Outcome::default()
                };
            }
            let stim = Stimulus::render(&rung.drawing, rung.epsilon, m, &self.cfg.render);
            match self.ask(learner, &key, &stim, temperature) {
                Ok(r) => Outcome {
                    records: vec![r],
                    ..Outcome::default()
                },
                Err(e) => Outcome {
                    error: Some(e),
                    ..Outcome::default()
                },
            }
        });
        summary.phase = SELECT_PHASE.into();
        summary.prompts_planned = tasks.len() as u64;
        self.finish(manifest, SELECT_PHASE, &cache, temperature, summary, errors)
    }

    /// Teaching-size phase: for each learner, modality and concept, search
    /// the rungs answered correctly in the selection phase.
    pub fn teach(&self, opts: &RunOptions) -> Result<PhaseSummary, PipelineError> {
        let sel_temp = self.cfg.protocol.selection_temperature;
        let proto = self.cfg.protocol.teaching();
        let sel_path = self.layout.selection_cache();
        let cache_path = self.layout.teaching_cache();
        if !sel_path.exists() {
            return Err(PipelineError::PhaseMissing {
                phase: SELECT_PHASE,
                missing: sel_path.display().to_string(),
            });
        }
        let samples = self.load_samples()?;
        let rungs = self.rungs(&samples)?;
        let selection = read_records(&sel_path).map_err(io_err(&sel_path))?;
        let correct: HashSet<CacheKey> = selection
            .iter()
            .filter(|r| r.temperature == sel_temp && r.judgment.is_correct())
            .map(TrialRecord::key)
            .collect();

        // (learner, modality, concept) -> candidate rung indices
        let mut tasks: Vec<(usize, Modality, usize, Vec<usize>)> = Vec::new();
        for li in 0..self.learners.len() {
            let name = self.learners[li].name();
            for &m in &self.modalities {
                for ci in 0..samples.len() {
                    let cands: Vec<usize> = rungs
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| {
                            r.concept == ci
                                && correct.contains(&CacheKey::from_parts(
                                    name,
                                    m,
                                    &r.drawing.id,
                                    r.epsilon,
                                    sel_temp,
                                    0,
                                ))
                        })
                        .map(|(i, _)| i)
                        .collect();
                    tasks.push((li, m, ci, cands));
                }
            }
        }

        if opts.dry_run {
            if !opts.fresh {
                self.open_manifest()?;
            }
            let known = if opts.fresh { HashSet::new() } else { Self::existing_keys(&cache_path)? };
            let mut s = PhaseSummary {
                phase: TEACH_PHASE.into(),
                dry_run: true,
                tasks: tasks.len(),
                ..PhaseSummary::default()
            };
            for (li, m, _, cands) in &tasks {
                for &ri in cands {
                    for t in 0..proto.n_trials {
                        let r = &rungs[ri];
                        s.prompts_planned += 1;
                        let key = CacheKey::from_parts(
                            self.learners[*li].name(),
                            *m,
                            &r.drawing.id,
                            r.epsilon,
                            proto.temperature,
                            t,
                        );
                        if known.contains(&key) {
                            s.cached += 1;
                        }
                    }
                }
            }
            return Ok(s);
        }

        let manifest = self.prepare_dir(opts.fresh, std::slice::from_ref(&cache_path), &[TEACH_PHASE])?;
        let cache = ResponseCache::open(&cache_path).map_err(io_err(&cache_path))?;
        let (mut summary, errors) = self.commit_all(&cache, tasks.len(), |i| {
            let (li, m, ci, ref cands) = tasks[i];
            let learner = self.learners[li].as_ref();
            let stims: Vec<Stimulus> = cands.iter().map(|&ri| rungs[ri].placeholder(m)).collect();
            let by_key: HashMap<(String, u64), usize> = cands
                .iter()
                .map(|&ri| ((rungs[ri].drawing.id.clone(), rungs[ri].epsilon.value().to_bits()), ri))
                .collect();
            let mut rendered: HashMap<usize, Stimulus> = HashMap::new();
            let mut fresh_records = Vec::new();
            let mut hits = 0u64;
            let result = teaching_size(&samples[ci].0, m, &stims, &proto, |stim, trial| {
                let key = CacheKey::new(learner.name(), stim, proto.temperature, trial);
                if let Some(hit) = cache.get(&key) {
                    hits += 1;
                    return Ok(hit.judgment.is_correct());
                }
                let ri = by_key[&(stim.drawing_id.clone(), stim.epsilon.value().to_bits())];
                let full = rendered.entry(ri).or_insert_with(|| {
                    Stimulus::render(&rungs[ri].drawing, rungs[ri].epsilon, m, &self.cfg.render)
                });
                let rec = self.ask(learner, &key, full, proto.temperature)?;
                let ok = rec.judgment.is_correct();
                fresh_records.push(rec);
                Ok(ok)
            });
            Outcome {
                records: fresh_records,
                hits,
                error: result.err(),
            }
        });
        summary.phase = TEACH_PHASE.into();
        summary.prompts_planned = tasks
            .iter()
            .map(|t| t.3.len() as u64 * u64::from(proto.n_trials))
            .sum();
        self.finish(manifest, TEACH_PHASE, &cache, proto.temperature, summary, errors)
    }

    /// Rewrites every report from the caches.
    pub fn report(&self) -> Result<super::ReportSummary, PipelineError> {
        emit_reports(&self.cfg, &self.layout)
    }
}
