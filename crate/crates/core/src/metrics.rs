//! Windowed run metrics, seed aggregation and report tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::StepRecord;

/// Which steps of a run a metric covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    Full,
    /// The final `n` steps (all of them when the run is shorter).
    Last(usize),
    /// Steps `start..end` by position.
    Range { start: usize, end: usize },
}

impl WindowSpec {
    fn bounds(self, len: usize) -> Result<(usize, usize)> {
        let (start, end) = match self {
            WindowSpec::Full => (0, len),
            WindowSpec::Last(n) => (len.saturating_sub(n), len),
            WindowSpec::Range { start, end } => {
                if start > end || end > len {
                    return Err(Error::domain(format!(
                        "window {start}..{end} outside a trace of {len} steps"
                    )));
                }
                (start, end)
            }
        };
        if start == end {
            return Err(Error::EmptyWindow);
        }
        Ok((start, end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWindow {
    pub start: usize,
    pub end: usize,
    pub hit_rate: f64,
    /// Ground-truth recall, logged even in phases where the learner never sees it.
    pub mean_recall: f64,
    pub mean_delay: f64,
    /// Summed expected hit shortfall against the per-step oracle arm.
    pub regret: f64,
}

impl MetricWindow {
    pub fn steps(&self) -> usize {
        self.end - self.start
    }
}

pub fn compute_window(trace: &[StepRecord], window: WindowSpec) -> Result<MetricWindow> {
    let (start, end) = window.bounds(trace.len())?;
    let slice = &trace[start..end];
    let n = slice.len() as f64;
    let hits = slice.iter().filter(|r| r.outcome.hit).count() as f64;
    Ok(MetricWindow {
        start,
        end,
        hit_rate: hits / n,
        mean_recall: slice.iter().map(|r| r.outcome.recall).sum::<f64>() / n,
        mean_delay: slice.iter().map(|r| r.outcome.delay).sum::<f64>() / n,
        regret: slice.iter().map(StepRecord::pseudo_regret).sum(),
    })
}

/// Cumulative regret after each step.
pub fn regret_curve(trace: &[StepRecord]) -> Vec<f64> {
    trace
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.pseudo_regret();
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; `None` for a single run.
    pub std: Option<f64>,
}

impl MeanStd {
    /// Order-independent: values are summed in sorted order.
    fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let std = (sorted.len() > 1).then(|| {
            let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (n - 1.0)).sqrt()
        });
        Self { mean, std }
    }
}

/// Mean and spread of each metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub hit: MeanStd,
    pub recall: MeanStd,
    pub delay: MeanStd,
    pub regret: MeanStd,
    pub seeds: usize,
}

impl SeedAggregate {
    fn from_windows(runs: &[MetricWindow]) -> Self {
        let col = |f: fn(&MetricWindow) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            hit: col(|w| w.hit_rate),
            recall: col(|w| w.mean_recall),
            delay: col(|w| w.mean_delay),
            regret: col(|w| w.regret),
            seeds: runs.len(),
        }
    }

    /// Report entry for a one-seed experiment (no spread).
    pub fn single(run: &MetricWindow) -> Self {
        Self::from_windows(std::slice::from_ref(run))
    }
}

/// Mean ± sample std (n − 1) over at least two runs.
pub fn aggregate_seeds(runs: &[MetricWindow]) -> Result<SeedAggregate> {
    if runs.len() < 2 {
        return Err(Error::TooFewRuns {
            required: 2,
            actual: runs.len(),
        });
    }
    Ok(SeedAggregate::from_windows(runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub scenario: String,
    pub stats: SeedAggregate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Markdown,
}

pub const TABLE_COLUMNS: [&str; 7] = ["policy", "scenario", "hit", "recall", "delay", "regret", "seeds"];

/// Rounds to six significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn fmt_cell(m: &MeanStd) -> String {
    match m.std {
        Some(s) => format!("{} ± {}", round_sig6(m.mean), round_sig6(s)),
        None => format!("{}", round_sig6(m.mean)),
    }
}

fn row_cells(row: &ReportRow) -> [String; 7] {
    let s = &row.stats;
    [
        row.policy.clone(),
        row.scenario.clone(),
        fmt_cell(&s.hit),
        fmt_cell(&s.recall),
        fmt_cell(&s.delay),
        fmt_cell(&s.regret),
        s.seeds.to_string(),
    ]
}

pub fn render_table(report: &AggregateReport, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::domain(format!("csv: {e}"));
            w.write_record(TABLE_COLUMNS).map_err(csv_err)?;
            for row in &report.rows {
                w.write_record(row_cells(row)).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::domain(format!("csv: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::domain(format!("csv: {e}")))
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", TABLE_COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(TABLE_COLUMNS.len()));
            for row in &report.rows {
                let cells = row_cells(row).map(|c| c.replace('|', "\\|"));
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            Ok(out)
        }
    }
}

pub fn emit_table(report: &AggregateReport, format: TableFormat, path: &Path) -> Result<()> {
    let text = render_table(report, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_cell(cell: &str) -> Result<MeanStd> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::domain(format!("bad number '{s}': {e}")))
    };
    Ok(match cell.split_once('±') {
        Some((m, s)) => MeanStd {
            mean: num(m)?,
            std: Some(num(s)?),
        },
        None => MeanStd {
            mean: num(cell)?,
            std: None,
        },
    })
}

/// Reads a CSV table back; values come back at table precision.
pub fn parse_csv_table(text: &str) -> Result<AggregateReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::domain(format!("csv: {e}")))?
        .clone();
    if header.iter().ne(TABLE_COLUMNS) {
        return Err(Error::domain(format!("unexpected csv header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::domain(format!("csv: {e}")))?;
        let seeds = record[6]
            .parse()
            .map_err(|e| Error::domain(format!("bad seed count '{}': {e}", &record[6])))?;
        rows.push(ReportRow {
            policy: record[0].to_string(),
            scenario: record[1].to_string(),
            stats: SeedAggregate {
                hit: parse_cell(&record[2])?,
                recall: parse_cell(&record[3])?,
                delay: parse_cell(&record[4])?,
                regret: parse_cell(&record[5])?,
                seeds,
            },
        });
    }
    Ok(AggregateReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(hit: f64, recall: f64, delay: f64, regret: f64) -> MetricWindow {
        MetricWindow {
            start: 0,
            end: 10,
            hit_rate: hit,
            mean_recall: recall,
            mean_delay: delay,
            regret,
        }
    }

    #[test]
    fn aggregate_examples() {
        let same = aggregate_seeds(&[window(0.8, 0.5, 1.0, 0.0); 3]).unwrap();
        assert!((same.hit.mean - 0.8).abs() < 1e-12);
        assert!(same.hit.std.unwrap() < 1e-12);

        let two = aggregate_seeds(&[window(0.7, 0.5, 1.0, 0.0), window(0.9, 0.5, 1.0, 0.0)]).unwrap();
        assert!((two.hit.mean - 0.8).abs() < 1e-12);
        assert!((two.hit.std.unwrap() - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert_eq!(two.seeds, 2);

        assert!(matches!(
            aggregate_seeds(&[window(0.7, 0.5, 1.0, 0.0)]),
            Err(Error::TooFewRuns { actual: 1, .. })
        ));
    }

    #[test]
    fn aggregate_ignores_run_order() {
        let runs = [
            window(0.1, 0.33, 7.0, 3.0),
            window(0.7, 0.21, 1.0, 0.1),
            window(0.3, 0.9, 15.0, 2.2),
            window(0.05, 0.123, 2.5, 9.0),
        ];
        let a = aggregate_seeds(&runs).unwrap();
        let mut rev = runs;
        rev.reverse();
        assert_eq!(a, aggregate_seeds(&rev).unwrap());
        rev.swap(0, 2);
        assert_eq!(a, aggregate_seeds(&rev).unwrap());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig6(0.141_421_356), 0.141421);
        assert_eq!(round_sig6(1_234_567.0), 1_234_570.0);
        assert_eq!(round_sig6(0.0), 0.0);
        assert_eq!(round_sig6(-2.0 / 3.0), -0.666667);
    }

    fn report() -> AggregateReport {
        let runs = [window(0.7, 0.5, 1.0, 3.0), window(0.9, 0.6, 2.0, 4.5)];
        let stats = aggregate_seeds(&runs).unwrap();
        AggregateReport {
            rows: vec![
                ReportRow {
                    policy: "ggi_mo_mab".into(),
                    scenario: "stationary_webqsp".into(),
                    stats,
                },
                ReportRow {
                    policy: "ucb1".into(),
                    scenario: "a, b".into(),
                    stats: SeedAggregate::single(&runs[0]),
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip_at_table_precision() {
        let r = report();
        let text = render_table(&r, TableFormat::Csv).unwrap();
        assert!(text.starts_with("policy,scenario,hit,recall,delay,regret,seeds\n"));
        let back = parse_csv_table(&text).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[1].scenario, "a, b");
        assert_eq!(back.rows[0].stats.hit.mean, 0.8);
        assert_eq!(back.rows[0].stats.hit.std, Some(0.141421));
        assert_eq!(back.rows[1].stats.hit.std, None);
        assert_eq!(render_table(&back, TableFormat::Csv).unwrap(), text);
    }

    #[test]
    fn markdown_has_one_row_per_entry() {
        let text = render_table(&report(), TableFormat::Markdown).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2 + 2);
        assert!(lines[0].starts_with("| policy | scenario | hit"));
    }

    #[test]
    fn emit_is_deterministic_and_reports_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        emit_table(&report(), TableFormat::Csv, &a).unwrap();
        emit_table(&report(), TableFormat::Csv, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let bad = dir.path().join("missing").join("x.md");
        assert!(matches!(
            emit_table(&report(), TableFormat::Markdown, &bad),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn empty_and_out_of_range_windows() {
        assert!(matches!(compute_window(&[], WindowSpec::Full), Err(Error::EmptyWindow)));
        assert!(compute_window(&[], WindowSpec::Range { start: 0, end: 3 }).is_err());
    }

    fn record(hit: bool, delay: f64, oracle: f64, chosen: f64) -> StepRecord {
        use crate::env::{Outcome, QueryType};
        use crate::learning::Phase;
        StepRecord {
            phase: Phase::Online,
            step: 0,
            query_id: 0,
            query: String::new(),
            hidden_type: QueryType::Simple1Hop,
            arm: Some(0),
            was_exploration: false,
            z: None,
            outcome: Outcome { hit, recall: 0.5, delay },
            losses: None,
            sim_clock: 0.0,
            oracle_arm: 0,
            oracle_p_hit: oracle,
            chosen_p_hit: chosen,
            events: Vec::new(),
            warning: None,
        }
    }

    #[test]
    fn window_examples() {
        let hits: Vec<_> = [true, false, true, true].iter().map(|&h| record(h, 1.0, 0.9, 0.9)).collect();
        let w = compute_window(&hits, WindowSpec::Full).unwrap();
        assert!((w.hit_rate - 0.75).abs() < 1e-12);
        assert_eq!(w.regret, 0.0);
        let delays: Vec<_> = [1.0, 15.0, 8.0].iter().map(|&d| record(true, d, 0.9, 0.5)).collect();
        let w = compute_window(&delays, WindowSpec::Full).unwrap();
        assert!((w.mean_delay - 8.0).abs() < 1e-12);
        assert!((w.regret - 1.2).abs() < 1e-12);
        assert_eq!(compute_window(&delays, WindowSpec::Last(2)).unwrap().steps(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn trace() -> impl Strategy<Value = Vec<StepRecord>> {
            proptest::collection::vec((any::<bool>(), 0.05f64..20.0, 0.0f64..1.0, 0.0f64..1.0), 2..60).prop_map(|v| {
                v.into_iter().map(|(h, d, o, c)| record(h, d, o.max(c), c)).collect()
            })
        }

        proptest! {
            #[test]
            fn regret_is_additive_over_adjacent_windows(t in trace(), cut in 1usize..59) {
                let cut = 1 + cut % (t.len() - 1);
                let whole = compute_window(&t, WindowSpec::Full).unwrap().regret;
                let left = compute_window(&t, WindowSpec::Range { start: 0, end: cut }).unwrap().regret;
                let right = compute_window(&t, WindowSpec::Range { start: cut, end: t.len() }).unwrap().regret;
                prop_assert!((whole - left - right).abs() < 1e-9);
            }

            #[test]
            fn cumulative_regret_never_decreases(t in trace()) {
                let curve = regret_curve(&t);
                prop_assert_eq!(curve.len(), t.len());
                prop_assert!(curve.windows(2).all(|p| p[1] >= p[0]));
            }
        }
    }
}
