use std::path::Path;

use kwdrift::cooccur::Weighting;
use kwdrift::glove::{export_vectors, train};
use kwdrift::keywords::{run_pipeline, simulate_drift, Collector, DriftConfig};
use kwdrift::{CooccurrenceTable, EmbeddingModel, ExportMode, PipelineConfig, Query, TrainConfig, TrainMode, VectorSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn drift() -> DriftConfig {
    DriftConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/drift/five_rounds.json")).unwrap()
}

fn zipf_table(seed: u64) -> CooccurrenceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = 400usize;
    let docs: Vec<Vec<u32>> = (0..300)
        .map(|_| {
            (0..30)
                .map(|_| {
                    let u: f64 = rng.random();
                    ((v as f64).powf(u) as u32).saturating_sub(1).min(v as u32 - 1)
                })
                .collect()
        })
        .collect();
    CooccurrenceTable::build(&docs, v, 5, Weighting::InverseDistance).unwrap()
}

#[test]
fn parallel_training_lands_near_the_deterministic_loss() {
    let table = zipf_table(11);
    let cfg = TrainConfig {
        dim: 16,
        epochs: 15,
        seed: 5,
        ..TrainConfig::default()
    };
    let init = || EmbeddingModel::init(table.vocab_size(), cfg.dim, cfg.seed).unwrap();
    let det = train(init(), &table, &cfg, TrainMode::Deterministic).unwrap();
    let par = train(init(), &table, &cfg, TrainMode::Parallel { threads: 4 }).unwrap();
    assert_eq!(det.initial_loss, par.initial_loss);
    let (d, p) = (det.final_loss(), par.final_loss());
    assert!(p < par.initial_loss);
    assert!((p - d).abs() <= 0.1 * d, "deterministic {d}, parallel {p}");

    let again = train(init(), &table, &cfg, TrainMode::Deterministic).unwrap();
    assert_eq!(det.loss_trace, again.loss_trace);
}

#[test]
fn one_round_places_family_tokens_near_their_anchor() {
    let drift = drift();
    let sim = simulate_drift(&drift).unwrap();
    let docs = sim.query(1, &["#metoo".to_string(), "#timesup".to_string()], 5000).unwrap();
    assert!(!docs.is_empty());
    let cfg = PipelineConfig {
        k_clusters: 30,
        ..PipelineConfig::default()
    };
    let art = run_pipeline(&docs, &["#metoo", "#timesup"], &cfg).unwrap();

    let family = &drift.families[0][0];
    let near: Vec<String> = art
        .space
        .nearest_neighbors(Query::Token(&family.anchor), 10, &[] as &[&str])
        .unwrap()
        .into_iter()
        .map(|n| n.token)
        .collect();
    let hits = family.tokens.iter().filter(|t| near.contains(t)).count();
    assert!(hits >= 3, "{:?} not near {}: {near:?}", family.tokens, family.anchor);

    let union: Vec<&str> = art.candidates.union.iter().map(|c| c.token.as_str()).collect();
    for t in drift.planted(1) {
        assert!(union.contains(&t.as_str()), "{t} missing from candidates");
    }
    assert!(!union.contains(&"#metoo"));
}

#[test]
fn exported_space_survives_a_text_round_trip() {
    let table = zipf_table(12);
    let cfg = TrainConfig {
        dim: 8,
        epochs: 3,
        ..TrainConfig::default()
    };
    let out = train(EmbeddingModel::init(table.vocab_size(), 8, 1).unwrap(), &table, &cfg, TrainMode::Deterministic).unwrap();
    let tokens: Vec<String> = (0..table.vocab_size()).map(|i| format!("tok{i}")).collect();
    let space = export_vectors(&out.model, &tokens, ExportMode::Sum, "zipf").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    space.save_text(&path).unwrap();
    let back = VectorSpace::load_text(&path).unwrap();
    let a = space.nearest_neighbors(Query::Token("tok3"), 5, &[] as &[&str]).unwrap();
    let b = back.nearest_neighbors(Query::Token("tok3"), 5, &[] as &[&str]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.similarity - y.similarity).abs() < 1e-5);
    }
}
