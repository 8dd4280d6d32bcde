//! End-to-end grid and learning-curve runs on a tiny synthetic corpus.

use std::fs;
use std::path::{Path, PathBuf};

use embalign_core::embedding::load_embeddings;
use embalign_core::experiment::{run_grid, run_learning_curve, Algorithm, ExperimentPlan, Method};
use embalign_core::gan::{GanConfig, RefineConfig, TrainingLog};
use embalign_core::procrustes::AlignmentMap;
use embalign_core::synth::{generate_corpus, SynthCorpusConfig};

fn write_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.txt");
    let cfg = SynthCorpusConfig {
        vocab_size: 400,
        n_topics: 6,
        target_bytes: 250_000,
        mean_doc_tokens: 80,
        function_words: 10,
        ..Default::default()
    };
    generate_corpus(&cfg, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn tiny_plan(corpus: PathBuf, out: PathBuf) -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        corpus: Some(corpus),
        dim: 8,
        min_count: 5,
        seed_words: 60,
        output_dir: out,
        sample_fractions: vec![0.3, 1.0],
        gan: GanConfig {
            epochs: 1,
            iterations_per_epoch: 150,
            dis_hidden: 16,
            eval_interval: 50,
            log_interval: 25,
            val_words: 100,
            ortho_tolerance: f64::INFINITY,
            ..Default::default()
        },
        refine: RefineConfig {
            rounds: 2,
            max_rank: 300,
            ..Default::default()
        },
        ..Default::default()
    };
    plan.sgns.epochs = 1;
    plan.eval.lexicon_size = 100;
    plan
}

#[test]
fn two_by_two_grid_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let plan = tiny_plan(corpus.clone(), dir.path().join("run1"));
    let records = run_grid(&plan).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert!(r.error.is_none(), "{}: {:?}", r.cell_id, r.error);
        let p1 = r.precision_at(1).unwrap();
        assert!((0.0..=1.0).contains(&p1));
        for (name, path) in &r.paths {
            assert!(path.exists(), "{name} missing for {}", r.cell_id);
        }
        AlignmentMap::load(&r.paths["map"]).unwrap();
        load_embeddings(&r.paths["source_embeddings"], None).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&r.paths["record"]).unwrap()).unwrap();
        assert_eq!(json["cell_id"], r.cell_id.as_str());
        if r.method != "supervised" {
            let log = TrainingLog::read_csv(fs::File::open(&r.paths["gan_log"]).unwrap()).unwrap();
            assert!(!log.records.is_empty());
        }
    }
    let results = fs::read_to_string(plan.output_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5);
    assert!(results.starts_with("block,cell,source_algorithm,source_split,target_algorithm,"));
    let merged = plan.output_dir.join("loss_curves").join("loss_curves.csv");
    assert!(merged.exists());
    let table = fs::read_to_string(plan.output_dir.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);

    // Same plan and seed, different directory: identical results.
    let again = run_grid(&tiny_plan(corpus, dir.path().join("run2"))).unwrap();
    let results2 = fs::read_to_string(dir.path().join("run2").join("results.csv")).unwrap();
    assert_eq!(results, results2);
    assert_eq!(again.len(), records.len());
}

#[test]
fn failed_cells_are_recorded_and_the_grid_continues() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let mut plan = tiny_plan(corpus, dir.path().join("out"));
    plan.method = Method::Supervised;
    plan.algorithms = vec![
        Algorithm::PpmiSvd,
        "missing=nope_a.vec+nope_b.vec".parse().unwrap(),
    ];
    let records = run_grid(&plan).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records[0].error.is_none());
    assert!(records[1].error.is_some());
    assert!(records[2].error.is_some());
    let results = fs::read_to_string(plan.output_dir.join("results.csv")).unwrap();
    assert_eq!(results.matches("error:").count(), 2);
}

#[test]
fn learning_curve_emits_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let mut plan = tiny_plan(corpus, dir.path().join("curve"));
    plan.algorithms = vec![Algorithm::PpmiSvd];
    plan.method = Method::Gan;
    let points = run_learning_curve(&plan).unwrap();
    assert_eq!(points.len(), 2);
    assert!(points[0].tokens < points[1].tokens);
    let csv = fs::read_to_string(plan.output_dir.join("learning_curve").join("learning_curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tokens,p_at_1");
    assert_eq!(lines.len(), 3);
    assert!(points.iter().all(|p| p.error.is_none() && p.n_evaluated > 0));
    assert_eq!(points[0].n_evaluated, points[1].n_evaluated);
}
