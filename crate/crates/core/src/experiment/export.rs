//! Tidy plot-data CSVs built from results files.
//!
//! Each export starts with `#` comment lines naming the kind and describing
//! the columns, followed by a header row and one observation per row.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::results::{aggregate, ResultsFile, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    LearningCurve,
    Consensus,
    Histogram,
    SchemeComparison,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] =
        [ExportKind::LearningCurve, ExportKind::Consensus, ExportKind::Histogram, ExportKind::SchemeComparison];

    pub fn as_str(self) -> &'static str {
        match self {
            ExportKind::LearningCurve => "learning_curve",
            ExportKind::Consensus => "consensus",
            ExportKind::Histogram => "histogram",
            ExportKind::SchemeComparison => "scheme_comparison",
        }
    }

    fn columns(self) -> &'static [(&'static str, &'static str)] {
        match self {
            ExportKind::LearningCurve => &[
                ("config", "config hash"),
                ("scheme", "search scheme"),
                ("seed", "trial seed"),
                ("iteration", "0 is the random initialization"),
                ("unique_count", "distinct ids in the subset"),
                ("total_count", "training-stream size"),
                ("train_accuracy", "iteration ensemble on the subset"),
                ("test_accuracy", "iteration ensemble on the test set"),
            ],
            ExportKind::Consensus => &[
                ("config", "config hash"),
                ("scheme", "search scheme"),
                ("seed", "trial seed"),
                ("measure", "cumulative (last n checkpoints agree) or pairwise (checkpoints n-1 and n agree)"),
                ("n", "group size, or 1-based index of the later checkpoint of a pair"),
                ("count", "agreeing samples"),
                ("eval_size", "evaluated samples"),
            ],
            ExportKind::Histogram => &[
                ("config", "config hash"),
                ("scheme", "search scheme"),
                ("seed", "trial seed"),
                ("iteration", "iteration after which the subset is counted"),
                ("multiplicity", "occurrences in the training stream"),
                ("count", "ids with that multiplicity"),
            ],
            ExportKind::SchemeComparison => &[
                ("name", "scheme or baseline"),
                ("target_size", "configured subset size"),
                ("trials", "successful trials"),
                ("mean_accuracy", "mean test accuracy"),
                ("std_accuracy", "sample standard deviation of test accuracy"),
            ],
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown export kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub config: String,
    pub scheme: String,
    pub seed: u64,
    pub iteration: usize,
    pub unique_count: usize,
    pub total_count: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub config: String,
    pub scheme: String,
    pub seed: u64,
    pub measure: String,
    pub n: usize,
    pub count: usize,
    pub eval_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub config: String,
    pub scheme: String,
    pub seed: u64,
    pub iteration: usize,
    pub multiplicity: u32,
    pub count: u64,
}

pub use crate::experiment::results::AggregateRow as ComparisonRow;

/// Successful trials of every run of every file.
fn trials(files: &[ResultsFile]) -> impl Iterator<Item = (&str, &TrialRecord)> {
    files.iter().flat_map(|f| {
        f.runs
            .iter()
            .flat_map(|r| r.trials.iter())
            .filter(|t| !t.failed())
            .map(move |t| (f.config_hash.as_str(), t))
    })
}

pub fn learning_curve_rows(files: &[ResultsFile]) -> Vec<LearningCurveRow> {
    trials(files)
        .flat_map(|(config, t)| {
            t.iterations.iter().map(move |it| LearningCurveRow {
                config: config.to_string(),
                scheme: t.scheme.to_string(),
                seed: t.seed,
                iteration: it.iteration,
                unique_count: it.unique_count,
                total_count: it.total_count,
                train_accuracy: it.train_accuracy,
                test_accuracy: it.test_accuracy,
            })
        })
        .collect()
}

pub fn consensus_rows(files: &[ResultsFile]) -> Vec<ConsensusRow> {
    let mut rows = Vec::new();
    for (config, t) in trials(files) {
        let Some(report) = t.result.as_ref().and_then(|r| r.consensus.as_ref()) else { continue };
        let row = |measure: &str, n: usize, count: usize| ConsensusRow {
            config: config.to_string(),
            scheme: t.scheme.to_string(),
            seed: t.seed,
            measure: measure.to_string(),
            n,
            count,
            eval_size: report.eval_size,
        };
        rows.extend(report.cumulative.iter().enumerate().map(|(i, &c)| row("cumulative", i + 1, c)));
        rows.extend(report.pairwise.iter().enumerate().map(|(i, &c)| row("pairwise", i + 2, c)));
    }
    rows
}

pub fn histogram_rows(files: &[ResultsFile]) -> Vec<HistogramRow> {
    let mut rows = Vec::new();
    for (config, t) in trials(files) {
        for it in &t.iterations {
            for (&multiplicity, &count) in &it.histogram {
                rows.push(HistogramRow {
                    config: config.to_string(),
                    scheme: t.scheme.to_string(),
                    seed: t.seed,
                    iteration: it.iteration,
                    multiplicity,
                    count,
                });
            }
        }
    }
    rows
}

/// Mean and std of test accuracy per (scheme or baseline, target size),
/// pooled over every file and run.
pub fn comparison_rows(files: &[ResultsFile]) -> Vec<ComparisonRow> {
    aggregate(files.iter().flat_map(|f| f.runs.iter()).flat_map(|r| r.trials.iter()))
}

fn write_rows<W: Write, T: Serialize>(mut out: W, kind: ExportKind, rows: &[T]) -> Result<()> {
    let columns = kind.columns();
    writeln!(out, "# kind: {kind}")?;
    for (name, doc) in columns {
        writeln!(out, "# {name}: {doc}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(columns.iter().map(|(name, _)| *name))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `kind` table for `files`. Returns the number of data rows.
pub fn export_plot_data<W: Write>(files: &[ResultsFile], kind: ExportKind, out: W) -> Result<usize> {
    match kind {
        ExportKind::LearningCurve => {
            let rows = learning_curve_rows(files);
            write_rows(out, kind, &rows).map(|_| rows.len())
        }
        ExportKind::Consensus => {
            let rows = consensus_rows(files);
            write_rows(out, kind, &rows).map(|_| rows.len())
        }
        ExportKind::Histogram => {
            let rows = histogram_rows(files);
            write_rows(out, kind, &rows).map(|_| rows.len())
        }
        ExportKind::SchemeComparison => {
            let rows = comparison_rows(files);
            write_rows(out, kind, &rows).map(|_| rows.len())
        }
    }
}

/// Parses an exported table back into rows.
pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::analysis::ConsensusReport;
    use crate::experiment::results::{BaselineRecord, FinalMetrics, IterationMetrics, RunDocument};
    use crate::subset::Scheme;

    fn trial(seed: u64, scheme: Scheme, size: usize, acc: f64) -> TrialRecord {
        TrialRecord {
            seed,
            scheme,
            target_size: size,
            error: None,
            iterations: vec![IterationMetrics {
                iteration: 0,
                unique_count: size,
                total_count: size as u64 + 1,
                added: Vec::new(),
                scores: None,
                train_accuracy: 0.1 + acc / 3.0,
                test_accuracy: acc,
                histogram: BTreeMap::from([(1, size as u64 - 1), (2, 1)]),
            }],
            result: Some(FinalMetrics {
                unique_count: size,
                total_count: size as u64 + 1,
                subset_hash: "ff".into(),
                test_accuracy: acc,
                per_class: Vec::new(),
                selected_accuracy: None,
                unselected_accuracy: None,
                histogram: BTreeMap::new(),
                consensus: Some(ConsensusReport { eval_size: 9, cumulative: vec![9, 7, 6], pairwise: vec![8, 7] }),
            }),
            baselines: Vec::new(),
            wall_time_ms: None,
        }
    }

    fn file(trials: Vec<TrialRecord>) -> ResultsFile {
        ResultsFile {
            schema_version: 1,
            config_hash: "0123456789abcdef".into(),
            config_name: "t".into(),
            config: String::new(),
            runs: vec![RunDocument::from_trials(trials)],
        }
    }

    fn export(files: &[ResultsFile], kind: ExportKind) -> (usize, String) {
        let mut buf = Vec::new();
        let n = export_plot_data(files, kind, &mut buf).unwrap();
        (n, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn empty_input_gives_header_only() {
        for kind in ExportKind::ALL {
            let (n, text) = export(&[], kind);
            assert_eq!(n, 0);
            let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
            let header = kind.columns().iter().map(|c| c.0).collect::<Vec<_>>().join(",");
            assert_eq!(data, vec![header.as_str()]);
        }
    }

    #[test]
    fn four_schemes_by_three_sizes_is_twelve_rows() {
        let mut trials = Vec::new();
        for (i, scheme) in Scheme::ALL.into_iter().enumerate() {
            for size in [100, 200, 400] {
                for seed in 0..3 {
                    trials.push(trial(seed, scheme, size, 0.5 + 0.01 * (i + seed as usize) as f64));
                }
            }
        }
        let (n, text) = export(&[file(trials)], ExportKind::SchemeComparison);
        assert_eq!(n, 12);
        let rows: Vec<ComparisonRow> = read_rows(text.as_bytes()).unwrap();
        assert!(rows.iter().all(|r| r.trials == 3));
    }

    #[test]
    fn exports_round_trip_exactly() {
        let mut with_baseline = trial(4, Scheme::AutomaticDuplication, 30, 0.1 + 0.2);
        with_baseline.baselines.push(BaselineRecord { name: "random".into(), size: 30, test_accuracy: 1.0 / 3.0 });
        let files = [file(vec![trial(3, Scheme::BuildUp, 20, 2.0 / 3.0), with_baseline])];

        let (_, text) = export(&files, ExportKind::LearningCurve);
        assert_eq!(read_rows::<_, LearningCurveRow>(text.as_bytes()).unwrap(), learning_curve_rows(&files));
        let (n, text) = export(&files, ExportKind::Consensus);
        assert_eq!(n, 10);
        assert_eq!(read_rows::<_, ConsensusRow>(text.as_bytes()).unwrap(), consensus_rows(&files));
        let (_, text) = export(&files, ExportKind::Histogram);
        assert_eq!(read_rows::<_, HistogramRow>(text.as_bytes()).unwrap(), histogram_rows(&files));
        let (n, text) = export(&files, ExportKind::SchemeComparison);
        assert_eq!(n, 3);
        assert_eq!(read_rows::<_, ComparisonRow>(text.as_bytes()).unwrap(), comparison_rows(&files));
        assert!("plots".parse::<ExportKind>().is_err());
    }
}
