use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use factprobe::verdata::{
    enumerate_frames, frame_by_id, generate_dataset, load_megaveridicality, normalize_responses,
    read_verb_inventory, render_sentence, substitute_indefinites, AnnotationRecord, Polarity,
    Response,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn inventory_reproduces_frame_counts() {
    let pairs = read_verb_inventory(File::open(data("verb_inventory.tsv")).unwrap()).unwrap();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, f) in &pairs {
        *counts.entry(f.id).or_default() += 1;
    }
    let expected = [
        ("NP _ed that S", 375),
        ("NP was _ed that S", 169),
        ("NP _ed for NP to VP", 184),
        ("NP _ed NP to VP[+ev]", 197),
        ("NP _ed NP to VP[-ev]", 128),
        ("NP was _ed to VP[+ev]", 278),
        ("NP was _ed to VP[-ev]", 256),
        ("NP _ed to VP[+ev]", 217),
        ("NP _ed to VP[-ev]", 165),
    ];
    for (id, n) in expected {
        assert_eq!(counts[id], n, "{id}");
    }
    assert_eq!(pairs.len(), 1969);
    let sentences = generate_dataset(&pairs).unwrap();
    assert_eq!(sentences.len(), 3938);
    for s in &sentences {
        let frame = frame_by_id(&s.frame_id).unwrap();
        assert_eq!(s.tokens[s.target_index], frame.embedded_predicate());
        assert_eq!(s.heads[s.verb_index], 0);
        let has_neg = s.tokens.iter().any(|t| t == "n't");
        assert_eq!(has_neg, s.polarity == Polarity::Negative);
    }
}

#[test]
fn sample_reproduces_spot_values() {
    let rows = load_megaveridicality(&data("megaveridicality2_sample.tsv")).unwrap();
    assert_eq!(rows.len(), 20);
    let gold = |sentence: &str| {
        rows.iter()
            .find(|r| r.sentence == sentence)
            .and_then(|r| r.gold_factuality)
            .unwrap()
    };
    assert_eq!(gold("Someone faked that something happened ."), -3.15);
    assert_eq!(gold("Someone did n't hesitate to do something ."), 1.86);
    assert_eq!(gold("Someone did n't hesitate to have something ."), 1.84);
    assert_eq!(gold("Someone was misjudged to have something ."), -2.46);
    for row in &rows {
        let frame = frame_by_id(&row.frame_id).unwrap();
        let rendered = render_sentence(&row.verb, frame, row.polarity).unwrap();
        assert_eq!(substitute_indefinites(&rendered).text(), row.sentence);
        let recovered = row.to_rendered().unwrap();
        assert_eq!(recovered.heads, substitute_indefinites(&rendered).heads);
    }
}

#[test]
fn empty_file_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.tsv");
    std::fs::write(&path, "").unwrap();
    assert!(load_megaveridicality(&path).unwrap().is_empty());
}

proptest! {
    #[test]
    fn polarity_changes_one_contiguous_region(frame_ix in 0usize..9, verb_ix in 0usize..6) {
        let verb = ["know", "want", "manage", "tell", "forget", "deny"][verb_ix];
        let frame = &enumerate_frames()[frame_ix];
        let pos = render_sentence(verb, frame, Polarity::Positive).unwrap();
        let neg = render_sentence(verb, frame, Polarity::Negative).unwrap();
        let prefix = pos.tokens.iter().zip(&neg.tokens).take_while(|(a, b)| a == b).count();
        let suffix = pos.tokens.iter().rev().zip(neg.tokens.iter().rev()).take_while(|(a, b)| a == b).count();
        // everything outside [prefix, len - suffix) is shared
        prop_assert!(prefix + suffix >= pos.tokens.len() - 1);
        prop_assert!(neg.tokens.len() > pos.tokens.len());
        let sub = substitute_indefinites(&neg);
        prop_assert_eq!(&sub.tokens[sub.target_index], &neg.tokens[neg.target_index]);
        prop_assert_eq!(&sub.tokens[sub.verb_index], &neg.tokens[neg.verb_index]);
    }
}

// ---- normalisation --------------------------------------------------------

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Draws responses from a cumulative-logit model with known means.
/// Means span several logistic noise units so that ten three-level
/// responses carry enough information to rank items.
fn simulate(seed: u64, sentences: usize, annotators: usize) -> (Vec<f64>, Vec<AnnotationRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut = [-1.5, 1.5];
    let truth: Vec<f64> = (0..sentences).map(|_| rng.random_range(-5.0..5.0)).collect();
    let bias: Vec<f64> = (0..annotators).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut records = Vec::new();
    for (s, mu) in truth.iter().enumerate() {
        for (j, b) in bias.iter().enumerate() {
            let eta = mu + b;
            let u: f64 = rng.random();
            let p0 = 1.0 / (1.0 + (-(cut[0] - eta)).exp());
            let p1 = 1.0 / (1.0 + (-(cut[1] - eta)).exp());
            let response = if u < p0 {
                Response::No
            } else if u < p1 {
                Response::Maybe
            } else {
                Response::Yes
            };
            records.push(AnnotationRecord {
                sentence_id: format!("s{s:04}"),
                annotator_id: format!("a{j:02}"),
                response,
            });
        }
    }
    (truth, records)
}

#[test]
fn recovers_simulated_latent_means() {
    for seed in [7, 8, 9] {
        let (truth, records) = simulate(seed, 200, 10);
        let out = normalize_responses(&records).unwrap();
        let scores: Vec<f64> = out.iter().map(|i| i.factuality).collect();
        let r = pearson(&scores, &truth);
        eprintln!("seed {seed}: r = {r:.4}");
        assert!(r > 0.95, "seed {seed}: r = {r}");
    }
}

#[test]
fn invariant_to_annotator_relabelling() {
    let (_, records) = simulate(3, 30, 6);
    let base = normalize_responses(&records).unwrap();
    let relabelled: Vec<_> = records
        .iter()
        .map(|r| AnnotationRecord {
            annotator_id: format!("z{}", 99 - r.annotator_id[1..].parse::<i32>().unwrap()),
            ..r.clone()
        })
        .collect();
    let other = normalize_responses(&relabelled).unwrap();
    for (a, b) in base.iter().zip(&other) {
        assert_eq!(a.sentence_id, b.sentence_id);
        assert!((a.factuality - b.factuality).abs() < 1e-7);
    }
}

#[test]
fn reversing_levels_negates_scores() {
    let (_, records) = simulate(5, 30, 6);
    let base = normalize_responses(&records).unwrap();
    let flipped: Vec<_> = records
        .iter()
        .map(|r| AnnotationRecord {
            response: Response::from_level(2 - r.response.level()).unwrap(),
            ..r.clone()
        })
        .collect();
    let other = normalize_responses(&flipped).unwrap();
    for (a, b) in base.iter().zip(&other) {
        assert!((a.factuality + b.factuality).abs() < 1e-7);
    }
}
