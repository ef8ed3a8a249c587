use std::fs;
use std::path::{Path, PathBuf};

use teachsize::drawing::parse_dataset_line;
use teachsize::learner::cache::read_records;
use teachsize::learner::LearnerRegistry;
use teachsize::pipeline::{Experiment, ExperimentConfig, PipelineError, RunManifest, RunOptions, SELECT_PHASE, TEACH_PHASE};
use teachsize::simplify::{build_ladder, Epsilon};

const CORPUS: &str = r#"{"key_id":"h1","word":"house","recognized":true,"drawing":[[[10,10,128,246,246,10],[250,120,10,120,250,250]],[[100,100,150,150],[250,180,180,250]]]}
{"key_id":"h2","word":"house","recognized":true,"drawing":[[[20,20,130,240,240],[240,110,20,110,240]],[[20,240],[240,240]]]}
{"key_id":"h3","word":"house","recognized":false,"drawing":[[[0,255],[0,255]]]}
{"key_id":"s1","word":"sun","recognized":true,"drawing":[[[128,180,200,180,128,76,56,76,128],[60,80,128,176,196,176,128,80,60]],[[128,128],[0,40]],[[200,240],[128,128]]]}
{"key_id":"s2","word":"sun","recognized":true,"drawing":[[[100,150,170,150,100,50,30,50,100],[50,60,100,140,150,140,100,60,50]]]}
{"key_id":"b1","word":"bicycle","recognized":true,"drawing":[[[0,50,100],[0,50,0]]]}
"#;

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.ndjson"), CORPUS).unwrap();
    let cfg = format!(
        r#"dataset = "corpus.ndjson"
concepts = ["house", "sun"]
output_dir = "out"
timestamps = false
concurrency = 3
eps_step = 4.0
{extra}
[protocol]
n_trials = 10

[[learners]]
name = "oracle-a"
kind = "oracle-deterministic"
threshold = 3

[[learners]]
name = "oracle-b"
kind = "oracle-stochastic"
threshold = 2
success_probability = 0.8
"#
    );
    let path = dir.path().join("experiment.toml");
    fs::write(&path, cfg).unwrap();
    (dir, path)
}

fn experiment(path: &Path, opts: &RunOptions) -> Result<Experiment, PipelineError> {
    let cfg = ExperimentConfig::load(path)?;
    Experiment::new(cfg, &LearnerRegistry::with_builtin(), opts)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect()
}

fn expected_rungs(out: &Path) -> usize {
    let mut n = 0;
    for entry in fs::read_dir(out.join("samples")).unwrap() {
        for line in fs::read_to_string(entry.unwrap().path()).unwrap().lines() {
            let d = parse_dataset_line(line).unwrap();
            n += build_ladder(&d, Epsilon::DATASET, 4.0).len();
        }
    }
    n
}

fn rung_counts(out: &Path, concept: &str) -> Vec<usize> {
    let text = fs::read_to_string(out.join("samples").join(format!("{concept}.ndjson"))).unwrap();
    text.lines()
        .flat_map(|l| build_ladder(&parse_dataset_line(l).unwrap(), Epsilon::DATASET, 4.0).segment_counts())
        .collect()
}

#[test]
fn selection_prompts_every_rung_once_per_modality_and_learner() {
    let (dir, path) = setup("");
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    let s = exp.select(&opts).unwrap();
    let out = dir.path().join("out");
    let rungs = expected_rungs(&out);
    assert_eq!(s.tasks, rungs * 2 * 2);
    assert_eq!(s.learner_calls as usize, rungs * 4);
    assert_eq!(s.cached, 0);
    assert!(s.completed);
    let records = read_records(&out.join("cache/selection.ndjson")).unwrap();
    assert_eq!(records.len(), rungs * 4);
    // unrecognized and out-of-set drawings never reach the samples
    assert!(records.iter().all(|r| r.drawing_id != "h3" && r.drawing_id != "b1"));
    assert!(records.iter().all(|r| r.timestamp.is_none() && r.temperature == 0.0));
}

#[test]
fn rerun_is_served_from_cache() {
    let (dir, path) = setup("");
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    exp.select(&opts).unwrap();
    exp.teach(&opts).unwrap();
    let out = dir.path().join("out");
    let sel = fs::read(out.join("cache/selection.ndjson")).unwrap();
    let teach = fs::read(out.join("cache/teaching.ndjson")).unwrap();
    let report = fs::read(out.join("reports/teaching_size.csv")).unwrap();

    let exp = experiment(&path, &opts).unwrap();
    let s = exp.select(&opts).unwrap();
    assert_eq!(s.learner_calls, 0);
    assert_eq!(s.cached as usize, s.tasks);
    let t = exp.teach(&opts).unwrap();
    assert_eq!(t.learner_calls, 0);
    assert!(t.cached > 0);
    assert_eq!(fs::read(out.join("cache/selection.ndjson")).unwrap(), sel);
    assert_eq!(fs::read(out.join("cache/teaching.ndjson")).unwrap(), teach);
    assert_eq!(fs::read(out.join("reports/teaching_size.csv")).unwrap(), report);

    let manifest = RunManifest::load(&out.join("manifest.json")).unwrap().unwrap();
    assert!(manifest.is_complete(SELECT_PHASE));
    assert!(manifest.is_complete(TEACH_PHASE));
}

#[test]
fn dry_run_counts_without_side_effects() {
    let (dir, path) = setup("");
    let dry = RunOptions {
        dry_run: true,
        ..RunOptions::default()
    };
    let exp = experiment(&path, &dry).unwrap();
    let planned = exp.select(&dry).unwrap();
    assert!(planned.dry_run);
    assert_eq!(planned.learner_calls, 0);
    assert!(!dir.path().join("out").exists());

    let opts = RunOptions::default();
    let real = experiment(&path, &opts).unwrap().select(&opts).unwrap();
    assert_eq!(planned.prompts_planned, real.prompts_planned);

    let again = exp.select(&dry).unwrap();
    assert_eq!(again.cached, again.prompts_planned);
    let teach_plan = exp.teach(&dry).unwrap();
    assert!(!dir.path().join("out/cache/teaching.ndjson").exists());
    assert_eq!(teach_plan.cached, 0);
}

#[test]
fn teaching_needs_selection_first() {
    let (_dir, path) = setup("");
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    let err = exp.teach(&opts).unwrap_err();
    assert!(matches!(err, PipelineError::PhaseMissing { phase: "select", .. }), "{err}");
}

#[test]
fn teaching_sizes_follow_oracle_thresholds() {
    let (dir, path) = setup("");
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    exp.select(&opts).unwrap();
    exp.teach(&opts).unwrap();
    let rows = csv_rows(&dir.path().join("out/reports/teaching_size.csv"));
    assert_eq!(
        rows[0],
        ["concept", "model", "modality", "status", "ts", "drawing_id", "epsilon", "successes", "trials"]
    );
    for r in &rows[1..] {
        assert_eq!(r[3], "identified", "{r:?}");
        let ts: usize = r[4].parse().unwrap();
        if r[1] == "oracle-a" {
            assert_eq!(r[7], "10");
            // the deterministic oracle's teaching size is the smallest rung it can see
            let want = rung_counts(&dir.path().join("out"), &r[0]).into_iter().filter(|&n| n >= 3).min();
            assert_eq!(Some(ts), want, "{r:?}");
        } else {
            assert!(ts >= 2);
        }
    }
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
}

#[test]
fn reports_without_runs_are_header_only() {
    let (dir, path) = setup("");
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    fs::create_dir_all(dir.path().join("out/reports")).unwrap();
    let summary = exp.report().unwrap();
    assert!(summary.correlations.is_empty());
    for name in ["accuracy.csv", "fom.csv", "confusion.csv", "teaching_size.csv", "rankings.csv", "correlation.csv"] {
        let rows = csv_rows(&dir.path().join("out/reports").join(name));
        assert_eq!(rows.len(), 1, "{name}");
    }
}

#[test]
fn changed_config_requires_fresh() {
    let (dir, path) = setup("");
    let opts = RunOptions::default();
    experiment(&path, &opts).unwrap().select(&opts).unwrap();
    let other = RunOptions {
        seed: Some(99),
        ..RunOptions::default()
    };
    let exp = experiment(&path, &other).unwrap();
    let err = exp.select(&other).unwrap_err();
    assert!(matches!(err, PipelineError::ConfigChanged { .. }), "{err}");
    let fresh = RunOptions {
        seed: Some(99),
        fresh: true,
        ..RunOptions::default()
    };
    let s = exp.select(&fresh).unwrap();
    assert_eq!(s.cached, 0);
    assert!(s.learner_calls > 0);
    let m = RunManifest::load(&dir.path().join("out/manifest.json")).unwrap().unwrap();
    assert_eq!(m.config_hash, exp.config().config_hash());
}

#[test]
fn partial_scope_does_not_complete_phase() {
    let (dir, path) = setup("");
    let opts = RunOptions {
        models: Some(vec!["oracle-a".into()]),
        ..RunOptions::default()
    };
    let exp = experiment(&path, &opts).unwrap();
    let s = exp.select(&opts).unwrap();
    assert!(!s.completed);
    let records = read_records(&dir.path().join("out/cache/selection.ndjson")).unwrap();
    assert!(records.iter().all(|r| r.model_name == "oracle-a"));

    // the full run picks up where the partial one stopped
    let full = RunOptions::default();
    let s = experiment(&path, &full).unwrap().select(&full).unwrap();
    assert_eq!(s.cached as usize, records.len());
    assert!(s.completed);
}

#[test]
fn unknown_model_filter_is_rejected() {
    let (_dir, path) = setup("");
    let opts = RunOptions {
        models: Some(vec!["nobody".into()]),
        ..RunOptions::default()
    };
    assert!(matches!(experiment(&path, &opts), Err(PipelineError::Config(_))));
}

#[test]
fn priors_feed_residual_correlation() {
    let (dir, path) = setup("priors = \"priors.csv\"\n");
    fs::write(dir.path().join("priors.csv"), "concept,prior\nhouse,0.8\nsun,0.3\n").unwrap();
    let opts = RunOptions::default();
    let exp = experiment(&path, &opts).unwrap();
    exp.select(&opts).unwrap();
    exp.teach(&opts).unwrap();
    let summary = exp.report().unwrap();
    assert_eq!(summary.correlations.len(), 2);
    // two concepts are too few for a correlation against priors
    for m in summary.modalities.values() {
        assert_eq!(m.fom_prior_pearson, None);
    }

    fs::write(dir.path().join("priors.csv"), "house,0.8\n").unwrap();
    assert!(ExperimentConfig::load(&path).unwrap().prior_table().is_err());
    fs::write(dir.path().join("priors.csv"), "house,0.8\nsun,1.5\n").unwrap();
    assert!(ExperimentConfig::load(&path).unwrap().prior_table().is_err());
}

#[test]
fn shipped_example_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    // the example points at a full dataset download
    let (dir, _) = setup("");
    cfg.dataset = dir.path().join("corpus.ndjson");
    cfg.validate(&LearnerRegistry::with_builtin()).unwrap();
    assert_eq!(cfg.learners.len(), 2);
    assert_eq!(cfg.protocol.teaching().required(), 25);
}
