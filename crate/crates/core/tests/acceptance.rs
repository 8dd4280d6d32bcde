//! Acceptance run. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails. Artifacts are kept under the cargo
//! target temp directory for inspection.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use embalign_core::embedding::{EmbeddingSpace, Normalization, SeedDictionary, Vocabulary};
use embalign_core::experiment::{
    run_grid, run_learning_curve, tail_dis_loss, Block, ExperimentPlan, RunRecord,
};
use embalign_core::gan::{refine, train_gan, GanConfig, RefineConfig, TrainingLog};
use embalign_core::geometry::geometry_report;
use embalign_core::linalg::{gaussian_matrix, random_orthogonal};
use embalign_core::procrustes::{procrustes_solve, AlignmentMap};
use embalign_core::retrieval::{
    precision_at_k, precision_at_ks, BruteForceScorer, EvalLexicon, RetrievalIndex, Scorer,
};
use embalign_core::seed::{derive_rng, rng_from_seed};
use embalign_core::synth::{gaussian_space, generate_corpus, rotated_copy, SynthCorpusConfig};
use ndarray::Array1;

use common::gradients::{discriminator_worst, generator_worst, TOLERANCE};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn named_space(rows: ndarray::Array2<f64>) -> EmbeddingSpace {
    let words = (0..rows.nrows()).map(|i| format!("w{i}")).collect();
    EmbeddingSpace::new(Vocabulary::from_words(words).unwrap(), rows).unwrap()
}

fn identity_words(space: &EmbeddingSpace, n: usize) -> EvalLexicon {
    EvalLexicon::identity(&space.vocab().words()[..n]).unwrap()
}

fn criterion_1() -> Verdict {
    let d = 50;
    let mut rng = rng_from_seed(1);
    let x = gaussian_matrix(1000, d, &mut rng);
    let q = random_orthogonal(d, &mut rng);
    let src = named_space(x.clone());
    let tgt = named_space(x.dot(&q.t()));
    let start = Instant::now();
    let dict = SeedDictionary::identity(src.vocab().words()).unwrap();
    let w = procrustes_solve(&src, &tgt, &dict).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = (&w.matrix() - &q).mapv(|v| v * v).sum().sqrt();
    let bound = 1e-8 * (d as f64).sqrt();
    verdict(
        err <= bound && secs < 1.0,
        format!("|W-Q|_F = {err:.3e} (bound {bound:.3e}), {secs:.3}s"),
    )
}

/// GAN configuration for the synthetic recovery runs.
fn synthetic_gan_config() -> GanConfig {
    GanConfig {
        epochs: 5,
        iterations_per_epoch: 10_000,
        dis_hidden: 128,
        sample_pool: 5000,
        eval_interval: 1000,
        val_words: 1000,
        gen_learning_rate: 0.3,
        ortho_beta: 0.3,
        seed: 1,
        ..Default::default()
    }
}

/// Source space and rotation for the synthetic recovery runs.
fn synthetic_pair() -> (EmbeddingSpace, EmbeddingSpace) {
    let mut rng = rng_from_seed(1);
    let src = gaussian_space(5000, 50, &mut rng);
    let q = random_orthogonal(50, &mut rng);
    let tgt = rotated_copy(&src, &q);
    (src, tgt)
}

fn gan_recovery() -> (f64, f64) {
    let (src, tgt) = synthetic_pair();
    let start = Instant::now();
    let gan = train_gan(&src, &tgt, &synthetic_gan_config()).unwrap();
    let refine_cfg = RefineConfig {
        rounds: 3,
        max_rank: 5000,
        ..Default::default()
    };
    let refined = refine(&src, &tgt, &gan.best, &refine_cfg).unwrap();
    let lex = identity_words(&src, 500);
    let p = precision_at_k(&src, &tgt, &refined.map, &lex, 1, Scorer::CSLS_DEFAULT)
        .unwrap()
        .precision;
    (p, start.elapsed().as_secs_f64())
}

fn criterion_2(p: f64, secs: f64) -> Verdict {
    verdict(
        p >= 0.95 && secs <= 600.0,
        format!("P@1 = {p:.4} after 3 refinement rounds, {secs:.0}s"),
    )
}

fn self_alignment() -> (f64, f64) {
    let (src, _) = synthetic_pair();
    let gan = train_gan(&src, &src, &synthetic_gan_config()).unwrap();
    let lex = identity_words(&src, 500);
    let p = |m: &AlignmentMap| {
        precision_at_k(&src, &src, m, &lex, 1, Scorer::CSLS_DEFAULT)
            .unwrap()
            .precision
    };
    (p(&gan.best), p(&gan.last))
}

fn criterion_3(best: f64, last: f64) -> Verdict {
    verdict(
        best >= 0.99,
        format!("P@1 = {best:.4} (selected map), {last:.4} (last iterate)"),
    )
}

fn criterion_4() -> Verdict {
    let dis = (0..10).map(discriminator_worst).fold(0.0f64, f64::max);
    let gen = (100..110).map(generator_worst).fold(0.0f64, f64::max);
    verdict(
        dis <= TOLERANCE && gen <= TOLERANCE,
        format!("worst relative error: discriminator {dis:.2e}, generator {gen:.2e}"),
    )
}

fn criterion_5() -> Verdict {
    let mut worst_centered: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = derive_rng(seed, "acceptance/geometry");
        let n = 50 + 50 * seed as usize;
        let d = 5 + seed as usize * 3;
        let shift = Array1::from_elem(d, (seed as f64 - 10.0) * 0.3);
        let space = named_space(gaussian_matrix(n, d, &mut rng) + &shift);
        let r = geometry_report(&space).unwrap();
        let norm_sq = r.mean_vector_norm * r.mean_vector_norm;
        worst_identity = worst_identity.max((r.avg_inner_product_to_mean - norm_sq).abs());
        let c = geometry_report(&space.center()).unwrap();
        worst_centered = worst_centered.max(c.avg_inner_product_to_mean.abs());
    }
    verdict(
        worst_centered <= 1e-10 && worst_identity <= 1e-10,
        format!("centered {worst_centered:.2e}, mean identity {worst_identity:.2e}"),
    )
}

fn criterion_6() -> Verdict {
    let mut rng = derive_rng(1, "acceptance/retrieval");
    let mut problems = Vec::new();

    let space = named_space(gaussian_matrix(2000, 30, &mut rng));
    let lex = identity_words(&space, 2000);
    let p = precision_at_k(&space, &space, &AlignmentMap::identity(30), &lex, 1, Scorer::Cosine)
        .unwrap()
        .precision;
    if p != 1.0 {
        problems.push(format!("identity P@1 = {p}"));
    }

    for trial in 0..10 {
        let n = 200 + 50 * trial;
        let src = named_space(gaussian_matrix(n, 20, &mut rng));
        let tgt = named_space(gaussian_matrix(n, 20, &mut rng));
        let lex = identity_words(&src, n);
        for scorer in [Scorer::Cosine, Scorer::CSLS_DEFAULT] {
            let index = RetrievalIndex::new(&src, &tgt, &AlignmentMap::identity(20), scorer).unwrap();
            let ks: Vec<usize> = (1..=50).collect();
            let reports = precision_at_ks(&index, &src, &tgt, &lex, &ks).unwrap();
            if reports.windows(2).any(|w| w[0].precision > w[1].precision) {
                problems.push(format!("P@k decreases (trial {trial}, {scorer:?})"));
            }
        }
    }

    let n = 10_000;
    let d = 50;
    let src = named_space(gaussian_matrix(n, d, &mut rng));
    let tgt = named_space(gaussian_matrix(n, d, &mut rng));
    let w = AlignmentMap::new(random_orthogonal(d, &mut rng)).unwrap();
    let rows: Vec<usize> = (0..n).collect();
    for scorer in [Scorer::Cosine, Scorer::CSLS_DEFAULT] {
        let index = RetrievalIndex::new(&src, &tgt, &w, scorer).unwrap();
        let brute = BruteForceScorer::new(&src, &tgt, &w, scorer);
        let fast = index.top_k_batch(&rows, 10);
        let mismatched = rows
            .iter()
            .filter(|&&i| fast[i] != brute.top_k(i, 10))
            .count();
        if mismatched > 0 {
            problems.push(format!("{mismatched} of {n} top-10 rankings differ ({scorer:?})"));
        }
    }

    let detail = if problems.is_empty() {
        "identity P@1 = 1, P@k monotone, 10000-word rankings equal brute force".to_string()
    } else {
        problems.join("; ")
    };
    verdict(problems.is_empty(), detail)
}

fn artifact_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// The ~50 MB synthetic desk corpus, generated once and reused.
fn desk_corpus() -> PathBuf {
    let dir = artifact_root();
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("desk_corpus.txt");
    let config = SynthCorpusConfig::default();
    let complete = fs::metadata(&path).is_ok_and(|m| m.len() >= config.target_bytes);
    if !complete {
        let tmp = dir.join("desk_corpus.txt.partial");
        generate_corpus(&config, fs::File::create(&tmp).unwrap()).unwrap();
        fs::rename(&tmp, &path).unwrap();
    }
    path
}

fn desk_plan(corpus: PathBuf, output_dir: PathBuf) -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        corpus: Some(corpus),
        dim: 50,
        seed_words: 3000,
        normalize_source: vec![Normalization::Center, Normalization::Unit],
        normalize_target: vec![Normalization::Center, Normalization::Unit],
        output_dir,
        gan: GanConfig {
            epochs: 5,
            iterations_per_epoch: 10_000,
            dis_hidden: 128,
            sample_pool: 5000,
            eval_interval: 1000,
            val_words: 1000,
            gen_learning_rate: 0.3,
            ortho_beta: 0.3,
            ortho_tolerance: 1.0,
            ..Default::default()
        },
        refine: RefineConfig {
            rounds: 3,
            ..Default::default()
        },
        ..Default::default()
    };
    plan.sgns.epochs = 5;
    plan
}

fn read_log(record: &RunRecord) -> Option<TrainingLog> {
    let path = record.paths.get("gan_log")?;
    TrainingLog::read_csv(fs::File::open(path).ok()?).ok()
}

fn is_diagonal(r: &RunRecord) -> bool {
    r.source.algorithm == r.target.algorithm
}

fn criterion_7(records: &[RunRecord], secs: f64) -> Verdict {
    let mut parts = Vec::new();
    let mut passed = secs <= 7200.0;
    if let Some(bad) = records.iter().find(|r| r.error.is_some()) {
        return verdict(false, format!("cell {} failed: {:?}", bad.cell_id, bad.error));
    }
    let p1 = |r: &RunRecord| r.precision_at(1).unwrap_or(f64::NAN);

    let diagonal: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.block == Block::Unsupervised && is_diagonal(r))
        .collect();
    let a_ok = !diagonal.is_empty() && diagonal.iter().all(|r| p1(r) >= 0.3);
    passed &= a_ok;
    parts.push(format!(
        "(a) {} [{}]",
        if a_ok { "ok" } else { "no" },
        diagonal
            .iter()
            .map(|r| format!("{} {:.3}", r.cell_id, p1(r)))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    let cross_gan: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.block == Block::Unsupervised && !is_diagonal(r))
        .collect();
    let mut b_ok = !cross_gan.is_empty();
    let mut gaps = Vec::new();
    for g in &cross_gan {
        let sup = records.iter().find(|r| {
            r.block == Block::Supervised && r.source == g.source && r.target == g.target
        });
        let gap = sup.map_or(f64::NAN, |s| p1(s) - p1(g));
        b_ok &= gap >= 0.3;
        gaps.push(format!("{} gap {gap:.3}", g.cell_id));
    }
    passed &= b_ok;
    parts.push(format!("(b) {} [{}]", if b_ok { "ok" } else { "no" }, gaps.join(", ")));

    let tail = |r: &RunRecord| read_log(r).and_then(|l| tail_dis_loss(&l, 0.1)).unwrap_or(f64::NAN);
    let same_min = diagonal.iter().map(|r| tail(r)).fold(f64::INFINITY, f64::min);
    let cross_max = cross_gan.iter().map(|r| tail(r)).fold(f64::NEG_INFINITY, f64::max);
    let c_ok = cross_max < same_min;
    passed &= c_ok;
    parts.push(format!(
        "(c) {} [cross dis loss {cross_max:.4} vs same {same_min:.4}]",
        if c_ok { "ok" } else { "no" }
    ));
    parts.push(format!("{secs:.0}s"));
    verdict(passed, parts.join("; "))
}

fn criterion_8(corpus: PathBuf) -> Verdict {
    let mut plan = desk_plan(corpus, artifact_root().join("curve"));
    plan.algorithms.truncate(1);
    plan.sample_fractions = vec![0.01, 0.1, 1.0];
    let points = run_learning_curve(&plan).unwrap();
    let csv = fs::read_to_string(plan.output_dir.join("learning_curve").join("learning_curve.csv"))
        .unwrap();
    let rows = csv.lines().count().saturating_sub(1);
    let first = points.first().and_then(|p| p.p_at_1).unwrap_or(f64::NAN);
    let last = points.last().and_then(|p| p.p_at_1).unwrap_or(f64::NAN);
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{}", p.tokens, p.p_at_1.map_or("error".into(), |v| format!("{v:.3}"))))
        .collect();
    verdict(
        last >= first && rows == plan.sample_fractions.len(),
        format!("{rows} rows, tokens:P@1 {}", curve.join(" ")),
    )
}

fn grid_precisions(records: &[RunRecord]) -> Vec<(String, Option<u64>)> {
    records
        .iter()
        .map(|r| (r.cell_id.clone(), r.precision_at(1).map(f64::to_bits)))
        .collect()
}

fn main() -> ExitCode {
    let mut verdicts: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut report = |id: u8, name: &'static str, v: Verdict| {
        println!(
            "{} criterion {id} ({name}): {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((id, name, v));
    };

    report(1, "procrustes exact recovery", criterion_1());

    let (p2, secs2) = gan_recovery();
    report(2, "GAN synthetic recovery", criterion_2(p2, secs2));

    let (p3_best, p3_last) = self_alignment();
    report(3, "self-alignment stability", criterion_3(p3_best, p3_last));

    report(4, "gradient audit", criterion_4());
    report(5, "geometry identities", criterion_5());
    report(6, "retrieval identities", criterion_6());

    let corpus = desk_corpus();
    let start = Instant::now();
    let grid = run_grid(&desk_plan(corpus.clone(), artifact_root().join("grid"))).unwrap();
    report(7, "desk-scale replication", criterion_7(&grid, start.elapsed().as_secs_f64()));

    report(8, "learning curve", criterion_8(corpus.clone()));

    let (p2_again, _) = gan_recovery();
    let (p3_again, _) = self_alignment();
    let grid_again = run_grid(&desk_plan(corpus, artifact_root().join("grid_rerun"))).unwrap();
    let same2 = p2.to_bits() == p2_again.to_bits();
    let same3 = p3_best.to_bits() == p3_again.to_bits();
    let same7 = grid_precisions(&grid) == grid_precisions(&grid_again);
    report(
        9,
        "determinism",
        verdict(
            same2 && same3 && same7,
            format!("bit-identical P@1: criterion 2 {same2}, criterion 3 {same3}, criterion 7 {same7}"),
        ),
    );

    let failed: Vec<u8> = verdicts.iter().filter(|(_, _, v)| !v.passed).map(|(id, _, _)| *id).collect();
    if failed.is_empty() {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
