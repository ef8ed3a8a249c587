//! Report files, recomputed from the caches alone.
//!
//! ```text
//! reports/accuracy.csv        concept,model,modality,trials,correct,accuracy
//! reports/fom.csv             concept,model,modality,mistakes,n_total,fom
//! reports/confusion.csv       model,modality,actual,predicted,count,row_total,percentage
//! reports/confusion/<model>_<modality>.csv   one wide matrix per learner and modality
//! reports/teaching_size.csv   concept,model,modality,status,ts,drawing_id,epsilon,successes,trials
//! reports/rankings.csv        model,modality,identified,order
//! reports/correlation.csv     model,shared_concepts,kendall_tau_b,pearson_accuracy,residual_kendall_tau_b
//! reports/report.json         summary statistics
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{file_stem, Layout};
use super::{io_err, PipelineError};
use crate::drawing::ConceptName;
use crate::learner::cache::read_records;
use crate::learner::{CacheKey, TrialRecord};
use crate::metrics::{
    accuracy, frequency_of_mistakes, kendall_tau, kendall_tau_b, mean, ols_residuals, pearson,
    sample_sd, teaching_size, ConfusionMatrix, PriorTable, RankedOrder, TeachingSizeResult,
};
use crate::render::{Modality, Payload, Stimulus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalitySummary {
    /// Identified (model, concept) rows.
    pub identified_rows: usize,
    pub mean_ts_rows: Option<f64>,
    pub sd_ts_rows: Option<f64>,
    /// Concepts identified by at least one model.
    pub identified_concepts: usize,
    /// Mean and SD over per-concept mean teaching sizes.
    pub mean_ts_concepts: Option<f64>,
    pub sd_ts_concepts: Option<f64>,
    /// Pearson of model-averaged frequency of mistakes against priors.
    pub fom_prior_pearson: Option<f64>,
    /// Pearson of teaching size against prior over identified rows.
    pub ts_prior_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub model: String,
    pub shared_concepts: usize,
    pub kendall_tau_b: Option<f64>,
    pub pearson_accuracy: Option<f64>,
    pub residual_kendall_tau_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub config_hash: String,
    pub seed: u64,
    pub selection_prompts: BTreeMap<String, usize>,
    pub teaching_prompts: BTreeMap<String, usize>,
    pub modalities: BTreeMap<String, ModalitySummary>,
    pub correlations: Vec<CorrelationRow>,
}

type Group = (String, Modality);

fn group_by_model(records: Vec<TrialRecord>, temperature: f64) -> BTreeMap<Group, Vec<TrialRecord>> {
    let mut out: BTreeMap<Group, Vec<TrialRecord>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.temperature == temperature) {
        out.entry((r.model_name.clone(), r.modality)).or_default().push(r);
    }
    out
}

fn load(path: &Path) -> Result<Option<Vec<TrialRecord>>, PipelineError> {
    if path.exists() {
        read_records(path).map(Some).map_err(io_err(path))
    } else {
        Ok(None)
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

struct Csv {
    path: std::path::PathBuf,
    w: csv::Writer<fs::File>,
}

impl Csv {
    fn create(path: &Path, header: &[&str]) -> Result<Self, PipelineError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut c = Self {
            path: path.to_owned(),
            w: csv::Writer::from_writer(file),
        };
        c.row(header.iter().map(|s| s.to_string()))?;
        Ok(c)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<(), PipelineError> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| csv_err(&self.path, e))
    }

    fn finish(mut self) -> Result<(), PipelineError> {
        self.w.flush().map_err(io_err(&self.path))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e),
    }
}

/// Correct selection rungs of one concept as placeholder stimuli.
fn candidates(group: &[TrialRecord], concept: &ConceptName) -> Vec<Stimulus> {
    let mut seen = BTreeSet::new();
    group
        .iter()
        .filter(|r| &r.concept == concept && r.judgment.is_correct())
        .filter(|r| seen.insert((r.drawing_id.clone(), r.epsilon.value().to_bits())))
        .map(|r| Stimulus {
            drawing_id: r.drawing_id.clone(),
            concept: r.concept.clone(),
            epsilon: r.epsilon,
            modality: r.modality,
            payload: Payload::Tikz(String::new()),
            segment_count: r.segment_count,
        })
        .collect()
}

enum TsRow {
    Done(TeachingSizeResult),
    Incomplete,
}

/// Teaching size replayed from cached trials; `Incomplete` when the search
/// would need a trial that is not cached.
fn replay_teaching(
    cfg: &ExperimentConfig,
    model: &str,
    modality: Modality,
    concept: &ConceptName,
    group: &[TrialRecord],
    trials: &HashMap<CacheKey, bool>,
) -> TsRow {
    let proto = cfg.protocol.teaching();
    let cands = candidates(group, concept);
    let r = teaching_size(concept, modality, &cands, &proto, |stim, i| {
        trials
            .get(&CacheKey::new(model, stim, proto.temperature, i))
            .copied()
            .ok_or(())
    });
    match r {
        Ok(r) => TsRow::Done(r),
        Err(()) => TsRow::Incomplete,
    }
}

fn order_of(ts: &BTreeMap<ConceptName, usize>, keep: &BTreeSet<&ConceptName>) -> RankedOrder {
    RankedOrder::from_scores(
        ts.iter()
            .filter(|(c, _)| keep.contains(c))
            .map(|(c, &v)| (c.clone(), v as f64)),
    )
}

/// Writes every report file and returns the summary written to `report.json`.
pub fn emit_reports(cfg: &ExperimentConfig, layout: &Layout) -> Result<ReportSummary, PipelineError> {
    let dir = layout.reports_dir();
    let wide_dir = dir.join("confusion");
    if wide_dir.exists() {
        fs::remove_dir_all(&wide_dir).map_err(io_err(&wide_dir))?;
    }
    fs::create_dir_all(&wide_dir).map_err(io_err(&wide_dir))?;

    let concepts: Vec<ConceptName> = cfg.concept_set().into_iter().collect();
    let mut modalities = cfg.modalities.clone();
    modalities.sort_by_key(|m| m.as_str());
    modalities.dedup();
    let priors: Option<PriorTable> = cfg.prior_table()?;

    let selection = group_by_model(
        load(&layout.selection_cache())?.unwrap_or_default(),
        cfg.protocol.selection_temperature,
    );
    let teaching_raw = load(&layout.teaching_cache())?;
    let teaching_ran = teaching_raw.is_some();
    let teaching = group_by_model(teaching_raw.unwrap_or_default(), cfg.protocol.teaching_temperature);
    let models: BTreeSet<&str> = selection.keys().map(|(m, _)| m.as_str()).collect();

    // accuracy and frequency of mistakes
    let mut acc_csv = Csv::create(
        &dir.join("accuracy.csv"),
        &["concept", "model", "modality", "trials", "correct", "accuracy"],
    )?;
    let mut fom_csv = Csv::create(
        &dir.join("fom.csv"),
        &["concept", "model", "modality", "mistakes", "n_total", "fom"],
    )?;
    let mut acc: BTreeMap<(String, Modality, ConceptName), f64> = BTreeMap::new();
    let mut fom: BTreeMap<(Modality, ConceptName), Vec<f64>> = BTreeMap::new();
    for c in &concepts {
        for &model in &models {
            for &m in &modalities {
                let Some(group) = selection.get(&(model.to_owned(), m)) else {
                    continue;
                };
                let n = group.iter().filter(|r| &r.concept == c).count();
                if n > 0 {
                    let correct = group.iter().filter(|r| &r.concept == c && r.judgment.is_correct()).count();
                    let a = accuracy(group, c).expect("trials present");
                    acc.insert((model.to_owned(), m, c.clone()), a);
                    acc_csv.row([
                        c.to_string(),
                        model.to_owned(),
                        m.to_string(),
                        n.to_string(),
                        correct.to_string(),
                        f6(a),
                    ])?;
                }
                let mistakes = group
                    .iter()
                    .filter(|r| &r.concept != c && r.judgment.predicted(&r.concept) == Some(c))
                    .count();
                let f = frequency_of_mistakes(group, c, group.len()).expect("group is non-empty");
                fom.entry((m, c.clone())).or_default().push(f);
                fom_csv.row([
                    c.to_string(),
                    model.to_owned(),
                    m.to_string(),
                    mistakes.to_string(),
                    group.len().to_string(),
                    f6(f),
                ])?;
            }
        }
    }
    acc_csv.finish()?;
    fom_csv.finish()?;

    // confusion matrices
    let mut conf_csv = Csv::create(
        &dir.join("confusion.csv"),
        &["model", "modality", "actual", "predicted", "count", "row_total", "percentage"],
    )?;
    for ((model, m), group) in &selection {
        let cm = ConfusionMatrix::build(group, &concepts);
        let cols = cm.columns();
        let wide_path = wide_dir.join(format!("{}_{}.csv", file_stem(model), m));
        let mut header: Vec<&str> = vec!["actual"];
        header.extend(cols.iter().map(String::as_str));
        header.push("total");
        let mut wide = Csv::create(&wide_path, &header)?;
        for (i, actual) in cm.concepts().iter().enumerate() {
            let total = cm.row_total(i);
            for (j, col) in cols.iter().enumerate() {
                conf_csv.row([
                    model.clone(),
                    m.to_string(),
                    actual.to_string(),
                    col.clone(),
                    cm.row(i)[j].to_string(),
                    total.to_string(),
                    format!("{:.2}", cm.percentage(i, j)),
                ])?;
            }
            let mut fields = vec![actual.to_string()];
            fields.extend((0..cols.len()).map(|j| cm.cell_label(i, j)));
            fields.push(total.to_string());
            wide.row(fields)?;
        }
        wide.finish()?;
    }
    conf_csv.finish()?;

    // teaching size
    let mut ts_csv = Csv::create(
        &dir.join("teaching_size.csv"),
        &["concept", "model", "modality", "status", "ts", "drawing_id", "epsilon", "successes", "trials"],
    )?;
    // (model, modality) -> concept -> ts
    let mut ts: BTreeMap<Group, BTreeMap<ConceptName, usize>> = BTreeMap::new();
    if teaching_ran {
        let lookup: HashMap<CacheKey, bool> = teaching
            .values()
            .flatten()
            .map(|r| (r.key(), r.judgment.is_correct()))
            .collect();
        for c in &concepts {
            for (g, group) in &selection {
                let (model, m) = (g.0.as_str(), g.1);
                let fields = match replay_teaching(cfg, model, m, c, group, &lookup) {
                    TsRow::Done(r) => match (&r.ts, &r.witness) {
                        (Some(size), Some((id, eps))) => {
                            ts.entry(g.clone()).or_default().insert(c.clone(), *size);
                            [
                                "identified".to_owned(),
                                size.to_string(),
                                id.clone(),
                                eps.to_string(),
                                r.successes.to_string(),
                                r.trials.to_string(),
                            ]
                        }
                        _ => ["not_identified".to_owned(), String::new(), String::new(), String::new(), String::new(), String::new()],
                    },
                    TsRow::Incomplete => ["incomplete".to_owned(), String::new(), String::new(), String::new(), String::new(), String::new()],
                };
                ts_csv.row([c.to_string(), model.to_owned(), m.to_string()].into_iter().chain(fields))?;
            }
        }
    }
    ts_csv.finish()?;

    let mut rank_csv = Csv::create(&dir.join("rankings.csv"), &["model", "modality", "identified", "order"])?;
    for ((model, m), sizes) in &ts {
        let all: BTreeSet<&ConceptName> = sizes.keys().collect();
        rank_csv.row([model.clone(), m.to_string(), sizes.len().to_string(), order_of(sizes, &all).to_string()])?;
    }
    rank_csv.finish()?;

    // cross-modality correlations
    let mut correlations = Vec::new();
    let both = modalities.contains(&Modality::Bitmap) && modalities.contains(&Modality::Coordinates);
    if both && teaching_ran {
        for &model in &models {
            let empty = BTreeMap::new();
            let img = ts.get(&(model.to_owned(), Modality::Bitmap)).unwrap_or(&empty);
            let crd = ts.get(&(model.to_owned(), Modality::Coordinates)).unwrap_or(&empty);
            let shared: BTreeSet<&ConceptName> = img.keys().filter(|c| crd.contains_key(*c)).collect();
            let kendall = kendall_tau(&order_of(img, &shared), &order_of(crd, &shared)).ok();

            let (mut xa, mut ya) = (Vec::new(), Vec::new());
            for c in &concepts {
                let a = acc.get(&(model.to_owned(), Modality::Bitmap, c.clone()));
                let b = acc.get(&(model.to_owned(), Modality::Coordinates, c.clone()));
                if let (Some(a), Some(b)) = (a, b) {
                    xa.push(*a);
                    ya.push(*b);
                }
            }
            let pearson_accuracy = pearson(&xa, &ya).ok();

            let residual = priors.as_ref().and_then(|p| {
                let prior: Vec<f64> = shared.iter().map(|c| p.get(c).unwrap_or(0.0)).collect();
                let yi: Vec<f64> = shared.iter().map(|c| img[*c] as f64).collect();
                let yc: Vec<f64> = shared.iter().map(|c| crd[*c] as f64).collect();
                let ri = ols_residuals(&yi, &prior).ok()?;
                let rc = ols_residuals(&yc, &prior).ok()?;
                kendall_tau_b(&ri, &rc).ok()
            });
            correlations.push(CorrelationRow {
                model: model.to_owned(),
                shared_concepts: shared.len(),
                kendall_tau_b: kendall,
                pearson_accuracy,
                residual_kendall_tau_b: residual,
            });
        }
    }
    let mut corr_csv = Csv::create(
        &dir.join("correlation.csv"),
        &["model", "shared_concepts", "kendall_tau_b", "pearson_accuracy", "residual_kendall_tau_b"],
    )?;
    for r in &correlations {
        corr_csv.row([
            r.model.clone(),
            r.shared_concepts.to_string(),
            opt6(r.kendall_tau_b),
            opt6(r.pearson_accuracy),
            opt6(r.residual_kendall_tau_b),
        ])?;
    }
    corr_csv.finish()?;

    // summary
    let mut per_modality = BTreeMap::new();
    for &m in &modalities {
        let rows: Vec<(&ConceptName, f64)> = ts
            .iter()
            .filter(|((_, gm), _)| *gm == m)
            .flat_map(|(_, sizes)| sizes.iter().map(|(c, &v)| (c, v as f64)))
            .collect();
        let row_ts: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut by_concept: BTreeMap<&ConceptName, Vec<f64>> = BTreeMap::new();
        for (c, v) in &rows {
            by_concept.entry(*c).or_default().push(*v);
        }
        let concept_means: Vec<f64> = by_concept.values().filter_map(|v| mean(v)).collect();
        let (fom_prior, ts_prior) = match &priors {
            None => (None, None),
            Some(p) => {
                let (mut xf, mut yf) = (Vec::new(), Vec::new());
                for c in &concepts {
                    if let (Some(v), Some(pr)) = (fom.get(&(m, c.clone())), p.get(c)) {
                        xf.push(mean(v).unwrap_or(0.0));
                        yf.push(pr);
                    }
                }
                let xs: Vec<f64> = rows.iter().filter_map(|(c, _)| p.get(c)).collect();
                (pearson(&xf, &yf).ok(), pearson(&row_ts, &xs).ok())
            }
        };
        per_modality.insert(
            m.to_string(),
            ModalitySummary {
                identified_rows: rows.len(),
                mean_ts_rows: mean(&row_ts),
                sd_ts_rows: sample_sd(&row_ts),
                identified_concepts: by_concept.len(),
                mean_ts_concepts: mean(&concept_means),
                sd_ts_concepts: sample_sd(&concept_means),
                fom_prior_pearson: fom_prior,
                ts_prior_pearson: ts_prior,
            },
        );
    }
    let counts = |groups: &BTreeMap<Group, Vec<TrialRecord>>| {
        groups
            .iter()
            .map(|((model, m), v)| (format!("{model}/{m}"), v.len()))
            .collect::<BTreeMap<_, _>>()
    };
    let summary = ReportSummary {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        selection_prompts: counts(&selection),
        teaching_prompts: counts(&teaching),
        modalities: per_modality,
        correlations,
    };
    let json_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    Ok(summary)
}
