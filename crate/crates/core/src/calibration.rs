//! Calibration measurement over persisted decode records: exact-match
//! accuracy, search-error rates, empty-string statistics, probability
//! summaries, size curves, and decode timing.
//!
//! A search error is a score gap, not a string mismatch: the strategy erred
//! if the exact optimum scores more than `tolerance` above its hypothesis,
//! so co-optimal distinct strings do not count. Non-finite scores (zero
//! probability or failed decodes) are excluded from means and reported as a
//! count.
//!
//! Records persist as a TSV (header line plus one row per sample and
//! strategy) so expensive decodes run once and analysis can re-run from the
//! file; re-analysis of the same records is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{classify_resource, ResourceClass};
use crate::search::Strategy;

/// Default score-gap tolerance for search errors, matched to double-precision
/// sums over short sequences.
pub const SEARCH_ERROR_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no records to analyze")]
    Empty,
    #[error("record {sample_id} is missing strategy {strategy}")]
    MissingStrategy {
        sample_id: String,
        strategy: Strategy,
    },
    #[error("record {sample_id} has no exact-search result")]
    MissingExact { sample_id: String },
    #[error("records disagree on their strategy sets: {detail}")]
    MismatchedStrategies { detail: String },
    #[error("size curve needs at least 2 distinct training sizes, found {found}")]
    NeedTwoSizes { found: usize },
    #[error("records file line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Outcome of one strategy on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub y_hat: String,
    pub score: f64,
    pub seconds: f64,
    pub nodes: u64,
}

/// Everything recorded for one sample: the gold form, the empty-string log
/// probability under the model, and one result per strategy. All results
/// come from the same model and input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub gold: String,
    pub empty_log_prob: f64,
    pub results: BTreeMap<Strategy, StrategyResult>,
}

impl PredictionRecord {
    fn require(&self, strategy: Strategy) -> Result<&StrategyResult, CalibrationError> {
        self.results
            .get(&strategy)
            .ok_or_else(|| CalibrationError::MissingStrategy {
                sample_id: self.sample_id.clone(),
                strategy,
            })
    }

    fn require_exact(&self) -> Result<&StrategyResult, CalibrationError> {
        self.results
            .get(&Strategy::Exact)
            .ok_or_else(|| CalibrationError::MissingExact {
                sample_id: self.sample_id.clone(),
            })
    }
}

/// One decoded dataset: its records plus optional training-size metadata for
/// resource classification.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub name: String,
    pub train_size: Option<usize>,
    pub records: Vec<PredictionRecord>,
}

/// Fraction of records whose decoded string equals gold exactly.
pub fn exact_match_accuracy(
    records: &[PredictionRecord],
    strategy: Strategy,
) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut hits = 0usize;
    for r in records {
        if r.require(strategy)?.y_hat == r.gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Fraction of records where the exact optimum scores more than `tolerance`
/// above the strategy's hypothesis. Non-finite strategy scores count as
/// errors when the optimum is finite.
pub fn search_error_rate(
    records: &[PredictionRecord],
    strategy: Strategy,
    tolerance: f64,
) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut errors = 0usize;
    for r in records {
        let exact = r.require_exact()?.score;
        let found = r.require(strategy)?.score;
        let erred = if found.is_finite() {
            exact - found > tolerance
        } else {
            exact.is_finite()
        };
        if erred {
            errors += 1;
        }
    }
    Ok(errors as f64 / records.len() as f64)
}

/// Fraction of records whose exact-search optimum is the empty sequence.
pub fn empty_optimum_rate(records: &[PredictionRecord]) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut empties = 0usize;
    for r in records {
        if r.require_exact()?.y_hat.is_empty() {
            empties += 1;
        }
    }
    Ok(empties as f64 / records.len() as f64)
}

/// Means of the chosen-hypothesis and empty-string log probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySummary {
    pub mean_chosen_log_prob: Option<f64>,
    pub mean_empty_log_prob: Option<f64>,
    /// Entries excluded from the means because they were not finite.
    pub non_finite: usize,
}

fn mean_finite(values: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    for v in values {
        if v.is_finite() {
            sum += v;
            n += 1;
        } else {
            skipped += 1;
        }
    }
    let mean = if n > 0 { Some(sum / n as f64) } else { None };
    (mean, skipped)
}

/// Mean chosen log probability for a strategy and mean empty-string log
/// probability, excluding non-finite entries (reported as a count).
pub fn probability_summary(
    records: &[PredictionRecord],
    strategy: Strategy,
) -> Result<ProbabilitySummary, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    for r in records {
        r.require(strategy)?;
    }
    let (mean_chosen, skipped_chosen) =
        mean_finite(records.iter().map(|r| r.results[&strategy].score));
    let (mean_empty, skipped_empty) = mean_finite(records.iter().map(|r| r.empty_log_prob));
    Ok(ProbabilitySummary {
        mean_chosen_log_prob: mean_chosen,
        mean_empty_log_prob: mean_empty,
        non_finite: skipped_chosen + skipped_empty,
    })
}

/// Mean wall seconds for a strategy.
pub fn timing_summary(
    records: &[PredictionRecord],
    strategy: Strategy,
) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut sum = 0.0;
    for r in records {
        sum += r.require(strategy)?.seconds;
    }
    Ok(sum / records.len() as f64)
}

/// One `(train size, mean empty-string log prob)` point per run, sorted by
/// size. Requires at least two distinct sizes.
pub fn size_vs_empty_curve(
    runs: &[(usize, &[PredictionRecord])],
) -> Result<Vec<(usize, f64)>, CalibrationError> {
    let distinct: std::collections::BTreeSet<usize> = runs.iter().map(|(s, _)| *s).collect();
    if distinct.len() < 2 {
        return Err(CalibrationError::NeedTwoSizes {
            found: distinct.len(),
        });
    }
    let mut points = Vec::with_capacity(runs.len());
    for (size, records) in runs {
        if records.is_empty() {
            return Err(CalibrationError::Empty);
        }
        let (mean, _) = mean_finite(records.iter().map(|r| r.empty_log_prob));
        points.push((*size, mean.unwrap_or(f64::NEG_INFINITY)));
    }
    points.sort_by_key(|&(size, _)| size);
    Ok(points)
}

/// One aggregated report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: Strategy,
    /// `None` aggregates every dataset regardless of metadata.
    pub class: Option<ResourceClass>,
    pub datasets: usize,
    pub records: usize,
    pub accuracy: f64,
    pub search_error_rate: f64,
    pub mean_chosen_log_prob: Option<f64>,
    pub mean_empty_log_prob: Option<f64>,
    pub non_finite: usize,
    pub empty_optimum_rate: f64,
    pub mean_seconds: f64,
}

/// The full calibration report: one row per (strategy, class) with class
/// `None` rows covering all datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rows: Vec<ReportRow>,
}

fn macro_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregate datasets into the calibration report. Per-dataset metrics are
/// computed first and then macro-averaged within each resource class,
/// mirroring per-language averaging. Every record set must carry the same
/// strategy set on every record.
pub fn build_report(datasets: &[RecordSet]) -> Result<CalibrationReport, CalibrationError> {
    if datasets.is_empty() || datasets.iter().all(|d| d.records.is_empty()) {
        return Err(CalibrationError::Empty);
    }
    let strategies = validate_strategies(datasets)?;

    let mut classes: Vec<Option<ResourceClass>> = vec![None];
    for class in [ResourceClass::Low, ResourceClass::Mid, ResourceClass::High] {
        if datasets
            .iter()
            .any(|d| d.train_size.map(classify_resource) == Some(class))
        {
            classes.push(Some(class));
        }
    }

    let mut rows = Vec::new();
    for &strategy in &strategies {
        for &class in &classes {
            let members: Vec<&RecordSet> = datasets
                .iter()
                .filter(|d| match class {
                    None => true,
                    Some(c) => d.train_size.map(classify_resource) == Some(c),
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut accuracies = Vec::new();
            let mut error_rates = Vec::new();
            let mut chosen_means = Vec::new();
            let mut empty_means = Vec::new();
            let mut empty_rates = Vec::new();
            let mut second_means = Vec::new();
            let mut non_finite = 0usize;
            let mut n_records = 0usize;
            for d in &members {
                accuracies.push(exact_match_accuracy(&d.records, strategy)?);
                error_rates.push(search_error_rate(&d.records, strategy, SEARCH_ERROR_TOL)?);
                let summary = probability_summary(&d.records, strategy)?;
                if let Some(m) = summary.mean_chosen_log_prob {
                    chosen_means.push(m);
                }
                if let Some(m) = summary.mean_empty_log_prob {
                    empty_means.push(m);
                }
                non_finite += summary.non_finite;
                empty_rates.push(empty_optimum_rate(&d.records)?);
                second_means.push(timing_summary(&d.records, strategy)?);
                n_records += d.records.len();
            }
            rows.push(ReportRow {
                strategy,
                class,
                datasets: members.len(),
                records: n_records,
                accuracy: macro_mean(&accuracies),
                search_error_rate: macro_mean(&error_rates),
                mean_chosen_log_prob: if chosen_means.is_empty() {
                    None
                } else {
                    Some(macro_mean(&chosen_means))
                },
                mean_empty_log_prob: if empty_means.is_empty() {
                    None
                } else {
                    Some(macro_mean(&empty_means))
                },
                non_finite,
                empty_optimum_rate: macro_mean(&empty_rates),
                mean_seconds: macro_mean(&second_means),
            });
        }
    }
    Ok(CalibrationReport { rows })
}

fn validate_strategies(datasets: &[RecordSet]) -> Result<Vec<Strategy>, CalibrationError> {
    let mut expected: Option<Vec<Strategy>> = None;
    for d in datasets {
        for r in &d.records {
            let got: Vec<Strategy> = r.results.keys().copied().collect();
            match &expected {
                None => expected = Some(got),
                Some(e) if *e == got => {}
                Some(e) => {
                    return Err(CalibrationError::MismatchedStrategies {
                        detail: format!(
                            "{} has [{}], expected [{}]",
                            r.sample_id,
                            got.iter()
                                .map(|s| s.to_string())
                                .collect::<Vec<_>>()
                                .join(", "),
                            e.iter()
                                .map(|s| s.to_string())
                                .collect::<Vec<_>>()
                                .join(", "),
                        ),
                    })
                }
            }
        }
    }
    expected.ok_or(CalibrationError::Empty)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{}", v),
        None => String::new(),
    }
}

fn class_name(class: Option<ResourceClass>) -> &'static str {
    match class {
        None => "all",
        Some(c) => c.as_str(),
    }
}

impl CalibrationReport {
    /// Fixed-order CSV rendering.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,resource_class,datasets,records,accuracy,search_error_rate,\
             mean_chosen_logprob,mean_empty_logprob,non_finite,empty_optimum_rate,mean_seconds\n",
        );
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.strategy,
                class_name(row.class),
                row.datasets,
                row.records,
                row.accuracy,
                row.search_error_rate,
                fmt_opt(row.mean_chosen_log_prob),
                fmt_opt(row.mean_empty_log_prob),
                row.non_finite,
                row.empty_optimum_rate,
                row.mean_seconds,
            )
            .unwrap();
        }
        out
    }

    /// Aligned human-readable rendering.
    pub fn to_aligned_text(&self) -> String {
        let headers = [
            "strategy",
            "class",
            "accuracy",
            "search_err",
            "mean_logp",
            "empty_logp",
            "empty_opt",
            "mean_sec",
        ];
        let mut table: Vec<[String; 8]> = vec![headers.map(String::from)];
        for row in &self.rows {
            table.push([
                row.strategy.to_string(),
                class_name(row.class).to_string(),
                format!("{:.4}", row.accuracy),
                format!("{:.4}", row.search_error_rate),
                row.mean_chosen_log_prob
                    .map(|v| format!("{:.4}", v))
                    .unwrap_or_default(),
                row.mean_empty_log_prob
                    .map(|v| format!("{:.4}", v))
                    .unwrap_or_default(),
                format!("{:.4}", row.empty_optimum_rate),
                format!("{:.6}", row.mean_seconds),
            ]);
        }
        let mut widths = [0usize; 8];
        for row in &table {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{:<width$}", cell, width = w))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Records file header prefix; the optional `train_size=N` token carries the
/// dataset metadata used for resource classification.
const RECORDS_MAGIC: &str = "# mitd records v1";
const COLUMNS: &str = "sample_id\tstrategy\ty_hat\tscore\tseconds\tnodes\tgold\tempty_logprob";

/// Serialize a record set as TSV. Row order follows the record order, with
/// strategies in their fixed ordering.
pub fn records_to_tsv(set: &RecordSet) -> String {
    let mut out = String::new();
    match set.train_size {
        Some(size) => {
            let _ = writeln!(out, "{} train_size={}", RECORDS_MAGIC, size);
        }
        None => {
            let _ = writeln!(out, "{}", RECORDS_MAGIC);
        }
    }
    out.push_str(COLUMNS);
    out.push('\n');
    for r in &set.records {
        for (strategy, result) in &r.results {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.sample_id,
                strategy,
                result.y_hat,
                result.score,
                result.seconds,
                result.nodes,
                r.gold,
                r.empty_log_prob,
            );
        }
    }
    out
}

/// Parse a records TSV produced by [`records_to_tsv`].
pub fn records_from_tsv(name: &str, text: &str) -> Result<RecordSet, CalibrationError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(CalibrationError::Empty)?;
    if !first.starts_with(RECORDS_MAGIC) {
        return Err(CalibrationError::Format {
            line: 1,
            msg: format!("expected `{}` header", RECORDS_MAGIC),
        });
    }
    let train_size = first
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("train_size="))
        .map(|v| {
            v.parse::<usize>().map_err(|_| CalibrationError::Format {
                line: 1,
                msg: format!("bad train_size {:?}", v),
            })
        })
        .transpose()?;
    match lines.next() {
        Some((_, cols)) if cols == COLUMNS => {}
        other => {
            return Err(CalibrationError::Format {
                line: 2,
                msg: format!("unexpected column header {:?}", other.map(|(_, l)| l)),
            })
        }
    }

    let mut records: Vec<PredictionRecord> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(CalibrationError::Format {
                line: line_no,
                msg: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| CalibrationError::Format {
            line: line_no,
            msg: format!("bad {}", what),
        };
        let strategy: Strategy = fields[1].parse().map_err(|_| bad("strategy"))?;
        let score: f64 = fields[3].parse().map_err(|_| bad("score"))?;
        let seconds: f64 = fields[4].parse().map_err(|_| bad("seconds"))?;
        let nodes: u64 = fields[5].parse().map_err(|_| bad("nodes"))?;
        let empty_log_prob: f64 = fields[7].parse().map_err(|_| bad("empty_logprob"))?;

        let sample_id = fields[0].to_string();
        let slot = *index.entry(sample_id.clone()).or_insert_with(|| {
            records.push(PredictionRecord {
                sample_id: sample_id.clone(),
                gold: fields[6].to_string(),
                empty_log_prob,
                results: BTreeMap::new(),
            });
            records.len() - 1
        });
        records[slot].results.insert(
            strategy,
            StrategyResult {
                y_hat: fields[2].to_string(),
                score,
                seconds,
                nodes,
            },
        );
    }
    if records.is_empty() {
        return Err(CalibrationError::Empty);
    }
    Ok(RecordSet {
        name: name.to_string(),
        train_size,
        records,
    })
}
