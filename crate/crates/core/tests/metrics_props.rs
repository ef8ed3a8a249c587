use std::convert::Infallible;

use proptest::prelude::*;
use teachsize::drawing::{ConceptCorpus, ConceptName, Drawing, Stroke};
use teachsize::learner::{Judgment, TrialRecord, PROMPT_TEMPLATE_VERSION};
use teachsize::metrics::{kendall_tau_b, pearson, teaching_size, ConfusionMatrix, Protocol};
use teachsize::render::{Modality, Payload, Stimulus};
use teachsize::sampling::{allocate_quotas, bin_width, stratified_sample, SampleConfig};
use teachsize::simplify::Epsilon;

fn stim(id: usize, segments: usize) -> Stimulus {
    Stimulus {
        drawing_id: format!("d{id:03}"),
        concept: ConceptName::new("sun"),
        epsilon: Epsilon::DATASET,
        modality: Modality::Coordinates,
        payload: Payload::Tikz(String::new()),
        segment_count: segments,
    }
}

/// Candidate `i` has a fixed success pattern over the trials.
fn outcome(patterns: &[Vec<bool>], s: &Stimulus, trial: u32) -> bool {
    let i: usize = s.drawing_id[1..].parse().unwrap();
    patterns[i][trial as usize]
}

fn record(concept: &str, judgment: Judgment) -> TrialRecord {
    TrialRecord {
        model_name: "m".into(),
        modality: Modality::Bitmap,
        drawing_id: "d".into(),
        concept: ConceptName::new(concept),
        epsilon: Epsilon::DATASET,
        segment_count: 1,
        temperature: 0.0,
        trial: 0,
        template_version: PROMPT_TEMPLATE_VERSION,
        raw_answer: String::new(),
        judgment,
        timestamp: None,
    }
}

const NAMES: [&str; 4] = ["cat", "cup", "fish", "sun"];

fn arb_judgment() -> impl Strategy<Value = Judgment> {
    prop_oneof![
        Just(Judgment::Correct),
        Just(Judgment::Other),
        (0..NAMES.len()).prop_map(|i| Judgment::WrongConcept(ConceptName::new(NAMES[i]))),
        Just(Judgment::WrongConcept(ConceptName::new("bicycle"))),
    ]
}

proptest! {
    #[test]
    fn teaching_size_is_minimal_and_order_free(
        segs in prop::collection::vec(1usize..40, 1..12),
        patterns in prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.55), 10), 12),
        rotate in 0usize..12,
    ) {
        let proto = Protocol::new(0.5, 10, 1.0).unwrap();
        let need = proto.required() as usize;
        let cands: Vec<Stimulus> = segs.iter().enumerate().map(|(i, &s)| stim(i, s)).collect();
        let concept = ConceptName::new("sun");
        let run = |cs: &[Stimulus]| {
            teaching_size(&concept, Modality::Coordinates, cs, &proto, |s, t| {
                Ok::<_, Infallible>(outcome(&patterns, s, t))
            })
            .unwrap()
        };
        let r = run(&cands);

        // full-count scan: a candidate passes if its pattern reaches `need`
        let passing = |i: usize| patterns[i].iter().filter(|&&b| b).count() >= need;
        let want = (0..cands.len())
            .filter(|&i| passing(i))
            .min_by_key(|&i| (segs[i], cands[i].drawing_id.clone()));
        prop_assert_eq!(r.ts, want.map(|i| segs[i]));
        prop_assert_eq!(r.witness.as_ref().map(|w| w.0.clone()), want.map(|i| cands[i].drawing_id.clone()));
        if let Some(i) = want {
            prop_assert_eq!(r.trials, 10);
            prop_assert_eq!(r.successes as usize, patterns[i].iter().filter(|&&b| b).count());
        }

        let mut shuffled = cands.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let again = run(&shuffled);
        prop_assert_eq!(again.ts, r.ts);
        prop_assert_eq!(again.witness, r.witness);
        prop_assert_eq!(again.total_trials, r.total_trials);
    }

    #[test]
    fn kendall_bounds_symmetry_and_monotone_invariance(
        pairs in prop::collection::vec((0u8..6, 0u8..6), 2..30),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        if let Ok(t) = kendall_tau_b(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((kendall_tau_b(&y, &x).unwrap() - t).abs() < 1e-12);
            let warped: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
            prop_assert!((kendall_tau_b(&warped, &y).unwrap() - t).abs() < 1e-12);
            let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((kendall_tau_b(&flipped, &y).unwrap() + t).abs() < 1e-12);
            prop_assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn pearson_affine_invariance(
        xs in prop::collection::vec(-50.0f64..50.0, 3..30),
        a in 0.5f64..4.0,
        b in -10.0f64..10.0,
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            let scaled: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&scaled, &ys).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn confusion_rows_add_up(
        trials in prop::collection::vec((0..NAMES.len(), arb_judgment()), 0..200),
    ) {
        let records: Vec<TrialRecord> = trials.iter().map(|(i, j)| record(NAMES[*i], j.clone())).collect();
        let concepts: Vec<ConceptName> = NAMES.iter().map(|n| ConceptName::new(n)).collect();
        let cm = ConfusionMatrix::build(&records, &concepts);
        for (i, c) in cm.concepts().iter().enumerate() {
            let shown = records.iter().filter(|r| &r.concept == c).count() as u64;
            prop_assert_eq!(cm.row_total(i), shown);
            prop_assert_eq!(cm.row(i).iter().sum::<u64>(), shown);
            if shown > 0 {
                let pct: f64 = (0..cm.columns().len()).map(|j| cm.percentage(i, j)).sum();
                prop_assert!((pct - 100.0).abs() <= 0.01 * cm.columns().len() as f64);
            }
        }
    }

    #[test]
    fn quotas_bounded_by_population(pops in prop::collection::vec(0usize..40, 1..10), target in 0usize..80) {
        let q = allocate_quotas(&pops, target);
        prop_assert_eq!(q.len(), pops.len());
        prop_assert!(q.iter().zip(&pops).all(|(a, b)| a <= b));
        let total: usize = pops.iter().sum();
        if total <= target {
            prop_assert_eq!(q, pops);
        } else {
            // rounding error is at most half a drawing per bin
            let sum: usize = q.iter().sum();
            prop_assert!(sum.abs_diff(target) * 2 <= pops.len());
        }
    }

    #[test]
    fn bin_width_positive(values in prop::collection::vec(1usize..300, 1..200)) {
        let w = bin_width(&values).unwrap();
        prop_assert!(w > 0.0 && w.is_finite());
    }

    #[test]
    fn stratified_sample_is_deterministic_subset(
        lens in prop::collection::vec(2usize..40, 1..60),
        target in 1usize..30,
        seed in any::<u64>(),
    ) {
        let drawings: Vec<Drawing> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let pts: Vec<(u8, u8)> = (0..n).map(|k| (k as u8 * 5, (k % 2) as u8 * 40 + i as u8)).collect();
                Drawing::new(format!("k{i}"), ConceptName::new("cup"), true, vec![Stroke::from_coords(&pts).unwrap()]).unwrap()
            })
            .collect();
        let corpus = ConceptCorpus { concept: ConceptName::new("cup"), drawings };
        let cfg = SampleConfig { target_size: target, seed };
        let a = stratified_sample(&corpus, &cfg);
        prop_assert_eq!(&a, &stratified_sample(&corpus, &cfg));
        let mut ids: Vec<&str> = a.iter().map(|d| d.id.as_str()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(a.iter().all(|d| corpus.drawings.contains(d)));
        if corpus.drawings.len() <= target {
            prop_assert_eq!(n, corpus.drawings.len());
        }
    }
}
