//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values once its assertions hold.
//!
//! Criteria 1-3 share a 500-model zoo of seeded random table models.
//! Criteria 5, 6, 8, 9 share one full pipeline run (synthesize, train with
//! default hyperparameters, decode, analyze); criterion 7 shares a grid of
//! nine reduced-size training runs; criterion 10 repeats both pipelines with
//! identical seeds and compares artifacts byte for byte (timing columns
//! excluded).

use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use mitd_cli::{cmd_decode, cmd_synth, cmd_train, AnalyzeArgs, DecodeArgs, SynthArgs, TrainArgs};
use mitd_core::calibration::{
    empty_optimum_rate, exact_match_accuracy, probability_summary, records_from_tsv,
    search_error_rate, timing_summary, RecordSet,
};
use mitd_core::model::{sample_random_model, TableModel};
use mitd_core::search::{
    beam_decode, brute_force_argmax, dijkstra_decode, greedy_decode, DecodeConfig, Strategy,
};
use mitd_core::transducer::{check_gradients, init_params, Hyperparameters};
use mitd_core::{build_vocabulary, encode_all, parse_unimorph, Hypothesis};

const SCORE_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

/// 500 random table models over |V| in {2, 3} and depth 1..=5.
fn zoo() -> &'static Vec<(u64, TableModel)> {
    static ZOO: OnceLock<Vec<(u64, TableModel)>> = OnceLock::new();
    ZOO.get_or_init(|| {
        let mut models = Vec::with_capacity(500);
        let mut seed = 1000u64;
        for vocab in [2usize, 3] {
            for depth in 1..=5usize {
                for _ in 0..50 {
                    models.push((seed, sample_random_model(seed, vocab, depth)));
                    seed += 1;
                }
            }
        }
        models
    })
}

struct PipelineRun {
    model_bytes: Vec<u8>,
    predictions: String,
    records_text: String,
    records: RecordSet,
    report_csv_no_timing: String,
    best_dev_accuracy: f64,
    first_epoch_loss: f64,
    selected_epoch_loss: f64,
    wall_seconds: f64,
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("mitd-acceptance").join(tag);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn default_train_args(train: PathBuf, dev: PathBuf, model: PathBuf, report: PathBuf) -> TrainArgs {
    TrainArgs {
        train,
        dev,
        model,
        report: Some(report),
        embed_dim: 64,
        hidden_dim: 128,
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        patience: 5,
        grad_clip_norm: 5.0,
        seed: 42,
    }
}

fn parse_best_dev_accuracy(report_text: &str) -> f64 {
    let (_, _, accuracy) = parse_selected_epoch_row(report_text);
    accuracy
}

/// `(selected epoch, its train loss, its dev accuracy)` from a train report.
fn parse_selected_epoch_row(report_text: &str) -> (usize, f64, f64) {
    let selected: usize = report_text
        .lines()
        .find_map(|l| l.strip_prefix("selected_epoch\t"))
        .expect("selected_epoch line")
        .parse()
        .unwrap();
    for line in report_text.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() == 3 && fields[0] == selected.to_string() {
            return (
                selected,
                fields[1].parse().unwrap(),
                fields[2].parse().unwrap(),
            );
        }
    }
    panic!("selected epoch row missing");
}

/// Train loss of the first epoch, from a train report.
fn parse_first_epoch_loss(report_text: &str) -> f64 {
    for line in report_text.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() == 3 && fields[0] == "1" {
            return fields[1].parse().unwrap();
        }
    }
    panic!("epoch 1 row missing");
}

/// Drop the per-row timing column from a records TSV.
fn strip_records_timing(text: &str) -> String {
    text.lines()
        .map(|line| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() == 8 {
                let mut kept = fields.clone();
                kept.remove(4); // seconds
                kept.join("\t")
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Drop the mean_seconds column from a report CSV.
fn strip_report_timing(text: &str) -> String {
    text.lines()
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            cells[..cells.len().saturating_sub(1)].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The criterion-5 pipeline: synth 5000/500/500, train with defaults,
/// decode the test set with greedy, beam 10, beam 100, exact, and analyze.
fn run_main_pipeline(tag: &str) -> PipelineRun {
    let start = Instant::now();
    let dir = workdir(tag);
    let data = dir.join("data");
    cmd_synth(&SynthArgs {
        out: data.clone(),
        train_count: 5000,
        dev_count: 500,
        test_count: 500,
        alphabet_size: 12,
        lemma_min: 3,
        lemma_max: 8,
        seed: 42,
    })
    .expect("synth");

    let model_path = dir.join("model.mitd");
    let train_report = dir.join("train.txt");
    cmd_train(&default_train_args(
        data.join("train.tsv"),
        data.join("dev.tsv"),
        model_path.clone(),
        train_report.clone(),
    ))
    .expect("train");

    let predictions_path = dir.join("predictions.tsv");
    let records_path = dir.join("records.tsv");
    cmd_decode(&DecodeArgs {
        model: model_path.clone(),
        test: data.join("test.tsv"),
        strategies: "greedy,beam:10,beam:100,exact".into(),
        max_len: None,
        lower_bound: "none".into(),
        queue_capacity: None,
        out: predictions_path.clone(),
        records: records_path.clone(),
        train_size: Some(5000),
    })
    .expect("decode");

    let report_path = dir.join("report.csv");
    mitd_cli::cmd_analyze(&AnalyzeArgs {
        records: vec![records_path.clone()],
        report: report_path.clone(),
    })
    .expect("analyze");

    let records_text = fs::read_to_string(&records_path).unwrap();
    let report_text = fs::read_to_string(&train_report).unwrap();
    let records = records_from_tsv("main", &records_text).unwrap();
    PipelineRun {
        model_bytes: fs::read(&model_path).unwrap(),
        predictions: fs::read_to_string(&predictions_path).unwrap(),
        records_text: records_text.clone(),
        records,
        report_csv_no_timing: strip_report_timing(&fs::read_to_string(&report_path).unwrap()),
        best_dev_accuracy: parse_best_dev_accuracy(&report_text),
        first_epoch_loss: parse_first_epoch_loss(&report_text),
        selected_epoch_loss: parse_selected_epoch_row(&report_text).1,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn main_pipeline() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| run_main_pipeline("main-run"))
}

struct CurveRun {
    size: usize,
    seed: u64,
    best_dev_accuracy: f64,
    mean_empty_log_prob: f64,
    model_bytes: Vec<u8>,
    records_no_timing: String,
}

/// Criterion-7 grid: three seeds at train sizes 50, 500, 5000, trained with
/// a reduced architecture for ten fixed epochs.
fn run_curve_grid(tag: &str) -> Vec<CurveRun> {
    let dir = workdir(tag);
    let mut runs = Vec::new();
    for &seed in &[201u64, 202, 203] {
        for &size in &[50usize, 500, 5000] {
            let run_dir = dir.join(format!("s{}-n{}", seed, size));
            let data = run_dir.join("data");
            cmd_synth(&SynthArgs {
                out: data.clone(),
                train_count: size,
                dev_count: 200,
                test_count: 200,
                alphabet_size: 12,
                lemma_min: 3,
                lemma_max: 8,
                seed,
            })
            .expect("synth");
            let model_path = run_dir.join("model.mitd");
            let report_path = run_dir.join("train.txt");
            cmd_train(&TrainArgs {
                train: data.join("train.tsv"),
                dev: data.join("dev.tsv"),
                model: model_path.clone(),
                report: Some(report_path.clone()),
                embed_dim: 32,
                hidden_dim: 48,
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 10,
                patience: 10,
                grad_clip_norm: 5.0,
                seed,
            })
            .expect("train");
            let records_path = run_dir.join("records.tsv");
            cmd_decode(&DecodeArgs {
                model: model_path.clone(),
                test: data.join("test.tsv"),
                strategies: "exact".into(),
                max_len: None,
                lower_bound: "none".into(),
                queue_capacity: None,
                out: run_dir.join("predictions.tsv"),
                records: records_path.clone(),
                train_size: Some(size),
            })
            .expect("decode");

            let records_text = fs::read_to_string(&records_path).unwrap();
            let records = records_from_tsv("curve", &records_text).unwrap();
            let mean_empty = records
                .records
                .iter()
                .map(|r| r.empty_log_prob)
                .sum::<f64>()
                / records.records.len() as f64;
            runs.push(CurveRun {
                size,
                seed,
                best_dev_accuracy: parse_best_dev_accuracy(
                    &fs::read_to_string(&report_path).unwrap(),
                ),
                mean_empty_log_prob: mean_empty,
                model_bytes: fs::read(&model_path).unwrap(),
                records_no_timing: strip_records_timing(&records_text),
            });
        }
    }
    runs
}

fn curve_grid() -> &'static Vec<CurveRun> {
    static RUNS: OnceLock<Vec<CurveRun>> = OnceLock::new();
    RUNS.get_or_init(|| run_curve_grid("curve-run"))
}

fn mean_over(runs: &[CurveRun], size: usize, f: impl Fn(&CurveRun) -> f64) -> f64 {
    let values: Vec<f64> = runs.iter().filter(|r| r.size == size).map(f).collect();
    assert_eq!(values.len(), 3, "three seeds per size");
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_exact_search_matches_the_brute_force_oracle() {
    let start = Instant::now();
    for (seed, model) in zoo() {
        let exact = dijkstra_decode(model, &[], &DecodeConfig::default()).unwrap();
        let brute = brute_force_argmax(model, &[], 5).unwrap();
        assert_eq!(exact.y, brute.y, "seed {}", seed);
        assert!(
            (exact.score - brute.score).abs() <= SCORE_TOL,
            "seed {}: |{} - {}| > 1e-9",
            seed,
            exact.score,
            brute.score
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "oracle sweep took {:.1} s", elapsed);
    println!(
        "criterion 1: PASS - dijkstra = brute force on 500 models in {:.2} s",
        elapsed
    );
}

#[test]
fn criterion_02_strategy_algebra_holds() {
    let mut saturated = 0usize;
    for (seed, model) in zoo() {
        let exact = dijkstra_decode(model, &[], &DecodeConfig::default()).unwrap();
        let greedy = greedy_decode(model, &[], &DecodeConfig::default()).unwrap();
        let beam1 = beam_decode(model, &[], &DecodeConfig::with_beam(1)).unwrap();
        assert_eq!(greedy.y, beam1.y, "seed {}", seed);
        assert_eq!(greedy.score, beam1.score, "seed {}", seed);
        for k in [1usize, 2, 5] {
            let beam = beam_decode(model, &[], &DecodeConfig::with_beam(k)).unwrap();
            assert!(
                beam.score <= exact.score + SCORE_TOL,
                "seed {} k {}: beam {} above optimum {}",
                seed,
                k,
                beam.score,
                exact.score
            );
        }
        if model.alphabet().len() == 2 && model.depth_bound() <= 3 {
            let wide = beam_decode(model, &[], &DecodeConfig::with_beam(64)).unwrap();
            assert_eq!(wide.y, exact.y, "seed {}", seed);
            assert!(
                (wide.score - exact.score).abs() <= SCORE_TOL,
                "seed {}",
                seed
            );
            saturated += 1;
        }
    }
    assert_eq!(saturated, 150, "|V|=2, depth <= 3 subset");
    println!(
        "criterion 2: PASS - greedy = beam(1), beam scores bounded by the optimum, beam(64) exact on {} small models",
        saturated
    );
}

#[test]
fn criterion_03_lower_bound_pruning_is_sound() {
    let mut saved_queue = 0usize;
    for (seed, model) in zoo() {
        let unpruned = dijkstra_decode(model, &[], &DecodeConfig::default()).unwrap();
        let bound = beam_decode(model, &[], &DecodeConfig::with_beam(5)).unwrap();
        let pruned = dijkstra_decode(
            model,
            &[],
            &DecodeConfig {
                lower_bound: Some(bound.score),
                bound_witness: Some(Hypothesis {
                    prefix: bound.y.clone(),
                    score: bound.score,
                    complete: true,
                }),
                ..DecodeConfig::default()
            },
        )
        .unwrap();
        assert_eq!(pruned.y, unpruned.y, "seed {}", seed);
        assert_eq!(pruned.score, unpruned.score, "seed {}", seed);
        assert!(
            pruned.stats.nodes_expanded <= unpruned.stats.nodes_expanded,
            "seed {}: {} > {}",
            seed,
            pruned.stats.nodes_expanded,
            unpruned.stats.nodes_expanded
        );
        // Best-first order means pruning trims memory, not expansions.
        saved_queue += unpruned
            .stats
            .max_queue
            .saturating_sub(pruned.stats.max_queue);
    }
    println!(
        "criterion 3: PASS - beam(5)-bounded search identical on 500 models, peak queue trimmed by {} entries in total",
        saved_queue
    );
}

#[test]
fn criterion_04_gradients_match_finite_differences() {
    let corpus = "\
abeda\tabedel\tN;PL\nbadec\tbadecba\tG;SG\ncabe\tcabe\tN;SG\ndeba\tdebelb\tG;PL\n\
ebad\tebedel\tN;PL\nface\tface\tN;SG\n";
    let samples = parse_unimorph(corpus).unwrap();
    let vocab = build_vocabulary(&samples).unwrap();
    let (encoded, _) = encode_all(&vocab, &samples);
    let mut worst = 0.0f64;
    for draw in 0..10u64 {
        let hyper = Hyperparameters {
            embed_dim: 8,
            hidden_dim: 12,
            seed: 7000 + draw,
            ..Hyperparameters::default()
        };
        let params = init_params(&hyper, vocab.len());
        let sample = &encoded[(draw as usize) % encoded.len()];
        let err = check_gradients(&params, sample, 1e-5).unwrap();
        assert!(err < 1e-4, "draw {}: max relative error {}", draw, err);
        worst = worst.max(err);
    }
    println!(
        "criterion 4: PASS - 10 gradient checks under 1e-4 (worst {:.3e})",
        worst
    );
}

#[test]
fn criterion_05_toy_reproduction_of_accuracy_flatness_and_error_decay() {
    let run = main_pipeline();
    assert!(
        run.best_dev_accuracy >= 0.95,
        "dev exact match {} below 0.95",
        run.best_dev_accuracy
    );
    assert!(
        run.selected_epoch_loss < run.first_epoch_loss,
        "train loss did not decrease: epoch 1 {} vs selected {}",
        run.first_epoch_loss,
        run.selected_epoch_loss
    );
    let records = &run.records.records;
    let acc_greedy = exact_match_accuracy(records, Strategy::Greedy).unwrap();
    let acc_beam100 = exact_match_accuracy(records, Strategy::Beam { width: 100 }).unwrap();
    assert!(
        (acc_greedy - acc_beam100).abs() <= 0.005,
        "accuracy moved from {} (k=1) to {} (k=100)",
        acc_greedy,
        acc_beam100
    );
    let err_greedy = search_error_rate(records, Strategy::Greedy, SCORE_TOL).unwrap();
    let err_beam10 = search_error_rate(records, Strategy::Beam { width: 10 }, SCORE_TOL).unwrap();
    let err_beam100 = search_error_rate(records, Strategy::Beam { width: 100 }, SCORE_TOL).unwrap();
    assert!(
        err_greedy <= 0.01,
        "greedy search-error rate {}",
        err_greedy
    );
    assert_eq!(err_beam10, 0.0, "beam(10) search-error rate");
    assert_eq!(err_beam100, 0.0, "beam(100) search-error rate");
    assert!(
        run.wall_seconds <= 900.0,
        "pipeline took {:.0} s",
        run.wall_seconds
    );
    println!(
        "criterion 5: PASS - dev acc {:.4}; test acc {:.4} (k=1) vs {:.4} (k=100); search errors {:.4}/{:.4}/{:.4} at k=1/10/100; {:.0} s",
        run.best_dev_accuracy, acc_greedy, acc_beam100, err_greedy, err_beam10, err_beam100, run.wall_seconds
    );
}

#[test]
fn criterion_06_trained_model_never_prefers_the_empty_string() {
    let run = main_pipeline();
    let rate = empty_optimum_rate(&run.records.records).unwrap();
    assert_eq!(rate, 0.0, "empty-string optimum rate");
    println!(
        "criterion 6: PASS - empty-string optimum rate 0 over {} test samples",
        run.records.records.len()
    );
}

#[test]
fn criterion_07_smaller_training_sets_put_more_mass_on_the_empty_string() {
    let runs = curve_grid();
    let mean_50 = mean_over(runs, 50, |r| r.mean_empty_log_prob);
    let mean_500 = mean_over(runs, 500, |r| r.mean_empty_log_prob);
    let mean_5000 = mean_over(runs, 5000, |r| r.mean_empty_log_prob);
    assert!(
        mean_50 > mean_500 && mean_500 > mean_5000,
        "means not monotone: {} (50), {} (500), {} (5000)",
        mean_50,
        mean_500,
        mean_5000
    );
    println!(
        "criterion 7: PASS - mean empty-string log prob {:.3} (50) > {:.3} (500) > {:.3} (5000)",
        mean_50, mean_500, mean_5000
    );
}

#[test]
fn criterion_08_optimum_probability_dwarfs_the_empty_string() {
    let run = main_pipeline();
    let summary = probability_summary(&run.records.records, Strategy::Exact).unwrap();
    let chosen = summary.mean_chosen_log_prob.unwrap();
    let empty = summary.mean_empty_log_prob.unwrap();
    let gap = chosen - empty;
    assert!(gap >= 3.0, "gap {} nats below 3", gap);
    println!(
        "criterion 8: PASS - mean optimum log prob {:.3} vs empty {:.3} (gap {:.2} nats)",
        chosen, empty, gap
    );
}

#[test]
fn criterion_09_exact_decoding_stays_within_10x_greedy_time() {
    let run = main_pipeline();
    let greedy = timing_summary(&run.records.records, Strategy::Greedy).unwrap();
    let exact = timing_summary(&run.records.records, Strategy::Exact).unwrap();
    assert!(
        exact <= 10.0 * greedy,
        "mean exact {:.6} s > 10 x mean greedy {:.6} s",
        exact,
        greedy
    );
    println!(
        "criterion 9: PASS - mean decode time greedy {:.6} s, exact {:.6} s (ratio {:.2})",
        greedy,
        exact,
        exact / greedy
    );
}

#[test]
fn criterion_10_repeated_runs_are_bit_identical() {
    let first = main_pipeline();
    let second = run_main_pipeline("main-rerun");
    assert_eq!(
        first.model_bytes, second.model_bytes,
        "model files differ between runs"
    );
    assert_eq!(
        first.predictions, second.predictions,
        "prediction files differ between runs"
    );
    assert_eq!(
        strip_records_timing(&first.records_text),
        strip_records_timing(&second.records_text),
        "records differ between runs outside timing columns"
    );
    assert_eq!(
        first.report_csv_no_timing, second.report_csv_no_timing,
        "report CSVs differ between runs outside timing columns"
    );

    let curve_first = curve_grid();
    let curve_second = run_curve_grid("curve-rerun");
    for (a, b) in curve_first.iter().zip(&curve_second) {
        assert_eq!(a.size, b.size);
        assert_eq!(a.seed, b.seed);
        assert_eq!(
            a.model_bytes, b.model_bytes,
            "curve model (size {}, seed {}) differs",
            a.size, a.seed
        );
        assert_eq!(
            a.records_no_timing, b.records_no_timing,
            "curve records (size {}, seed {}) differ",
            a.size, a.seed
        );
    }
    println!(
        "criterion 10: PASS - model files, predictions, records, and reports are bit-identical across reruns"
    );
}

/// Companion to criterion 7: starved training is strictly worse than the
/// 5000-sample runs on dev exact match, averaged over the three seeds.
#[test]
fn starved_training_is_strictly_worse_on_dev() {
    let runs = curve_grid();
    let acc_50 = mean_over(runs, 50, |r| r.best_dev_accuracy);
    let acc_5000 = mean_over(runs, 5000, |r| r.best_dev_accuracy);
    assert!(
        acc_50 < acc_5000,
        "mean dev accuracy {} (50) not below {} (5000)",
        acc_50,
        acc_5000
    );
    println!(
        "train-size check: PASS - mean dev accuracy {:.3} (50) < {:.3} (5000)",
        acc_50, acc_5000
    );
}
