//! Cross-module flow: corpus → train → persist → evaluate → neighbors →
//! period entropy, all in-process.

use std::fs;

use qlm_core::corpus::{tokenize, PeriodManifest, TokenizeMode};
use qlm_core::embed::{load_model, save_model};
use qlm_core::ensemble::{period_entropy_series, SeriesMode};
use qlm_core::eval::{evaluate, nearest_neighbors, SimKind, SimilarityDataset};
use qlm_core::linalg::{hs_similarity, uhlmann_fidelity, LogBase};
use qlm_core::trainer::{train, TrainConfig};

fn fruit_and_tool_corpus() -> Vec<String> {
    // Two topical registers sharing function words.
    let text = "the apple and the pear grew in the orchard \
                the hammer and the wrench lay in the toolbox \
                an apple fell near the pear tree in the orchard \
                a hammer struck the nail beside the wrench \n"
        .repeat(120);
    tokenize(&text, TokenizeMode::Whitespace)
}

#[test]
fn train_persist_evaluate_flow() {
    let tokens = fruit_and_tool_corpus();
    let config = TrainConfig {
        dim: 8,
        epochs: 3,
        min_count: 2,
        window: 4,
        negatives: 4,
        subsample_t: 0.0,
        seed: 11,
        workers: 1,
        ..TrainConfig::default()
    };
    let (store, stats) = train(&tokens, &config).unwrap();
    assert!(stats.epoch_losses.last().unwrap() < stats.epoch_losses.first().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.qlm");
    save_model(&store, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.vocab().words(), store.vocab().words());
    for id in 0..store.vocab().len() as u32 {
        let a = store.density_by_id(id).unwrap();
        let b = loaded.density_by_id(id).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
    }

    // Topical pairs should score above cross-topic pairs in both similarity
    // modes after this much training.
    let hs = |a: &str, b: &str| {
        hs_similarity(&loaded.get_density(a).unwrap(), &loaded.get_density(b).unwrap()).unwrap()
    };
    let uh = |a: &str, b: &str| {
        uhlmann_fidelity(&loaded.get_density(a).unwrap(), &loaded.get_density(b).unwrap()).unwrap()
    };
    assert!(hs("apple", "pear") > hs("apple", "wrench"));
    assert!(uh("apple", "pear") > uh("apple", "wrench"));

    let dataset = SimilarityDataset {
        pairs: vec![
            ("apple".into(), "pear".into(), 9.0),
            ("hammer".into(), "wrench".into(), 8.5),
            ("apple".into(), "wrench".into(), 1.0),
            ("pear".into(), "hammer".into(), 1.5),
        ],
    };
    let report = evaluate(&loaded, &dataset, SimKind::Hs).unwrap();
    assert_eq!(report.pairs_covered, 4);
    assert!(report.pearson > 0.0);
    assert!(report.spearman > 0.0);

    let neighbors = nearest_neighbors(&loaded, "apple", 3, SimKind::Hs).unwrap();
    assert_eq!(neighbors.len(), 3);
    assert!(neighbors.iter().all(|(w, _)| w != "apple"));
}

#[test]
fn entropy_modes_share_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let early = dir.path().join("early.txt");
    fs::write(&early, "apple pear apple orchard pear apple\n".repeat(40)).unwrap();
    let late = dir.path().join("late.txt");
    fs::write(&late, "hammer wrench nail hammer toolbox wrench\n".repeat(40)).unwrap();
    let manifest = PeriodManifest::from_entries(vec![
        ("early".into(), vec![early]),
        ("late".into(), vec![late]),
    ]);

    let tokens = fruit_and_tool_corpus();
    let config = TrainConfig {
        dim: 4,
        epochs: 1,
        min_count: 1,
        window: 3,
        negatives: 2,
        subsample_t: 0.0,
        seed: 5,
        workers: 1,
        ..TrainConfig::default()
    };
    let (store, _) = train(&tokens, &config).unwrap();

    let global = period_entropy_series(
        &manifest,
        SeriesMode::GlobalModel(&store),
        TokenizeMode::Whitespace,
        LogBase::Two,
    )
    .unwrap();
    assert_eq!(global.rows.len(), 2);
    for row in &global.rows {
        assert!(row.entropy >= 0.0 && row.entropy <= 2.0 + 1e-12); // ≤ log₂(4)
        assert!(row.coverage > 0.0 && row.coverage <= 1.0);
    }

    let per_period = period_entropy_series(
        &manifest,
        SeriesMode::PerPeriodModel(&config),
        TokenizeMode::Whitespace,
        LogBase::Two,
    )
    .unwrap();
    assert_eq!(per_period.rows.len(), 2);
    assert_eq!(per_period.rows[0].period, "early");
    assert_eq!(per_period.rows[1].period, "late");
}
