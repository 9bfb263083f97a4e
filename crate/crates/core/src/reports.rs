//! Result-file formats: `results.csv`, `summary.json`, and the plot-ready
//! report CSV.
//!
//! Everything here is rendered to strings with round-trippable float
//! formatting, so two runs of the same experiment produce byte-identical
//! files regardless of worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::evaluation::RunSummary;
use crate::harness::WeekRecord;
use crate::memory::UpdateStrategy;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed results at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Header prefix shared by every results file; per-class count columns
/// named `count_<class>` follow.
const RESULT_COLUMNS: [&str; 7] = [
    "run",
    "week",
    "strategy",
    "accuracy",
    "log_loss",
    "retrained",
    "evaluations",
];

/// Renders week records as `results.csv`.
pub fn results_csv(records: &[WeekRecord], class_names: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&RESULT_COLUMNS.join(","));
    for name in class_names {
        let _ = write!(out, ",count_{name}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.run, r.week, r.strategy, r.accuracy, r.log_loss, r.retrained, r.evaluations
        );
        for count in &r.store_class_counts {
            let _ = write!(out, ",{count}");
        }
        out.push('\n');
    }
    out
}

/// A parsed results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub records: Vec<WeekRecord>,
    pub class_names: Vec<String>,
}

/// Parses `results.csv`, reporting the 1-based file line of any defect.
pub fn parse_results_csv(text: &str) -> Result<ResultsFile, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::Malformed {
        line: 1,
        reason: "missing header".to_string(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < RESULT_COLUMNS.len()
        || columns[..RESULT_COLUMNS.len()] != RESULT_COLUMNS
    {
        return Err(ReportError::Malformed {
            line: 1,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let class_names: Vec<String> = columns[RESULT_COLUMNS.len()..]
        .iter()
        .map(|c| {
            c.strip_prefix("count_")
                .map(str::to_string)
                .ok_or(ReportError::Malformed {
                    line: 1,
                    reason: format!("expected a count_<class> column, found `{c}`"),
                })
        })
        .collect::<Result<_, _>>()?;

    let expected_fields = RESULT_COLUMNS.len() + class_names.len();
    let mut records = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != expected_fields {
            return Err(ReportError::Malformed {
                line,
                reason: format!("expected {expected_fields} fields, found {}", fields.len()),
            });
        }
        let field = |i: usize, what: &str, err: &dyn std::fmt::Display| ReportError::Malformed {
            line,
            reason: format!("{what} `{}`: {err}", fields[i]),
        };
        let run: usize = fields[0]
            .parse()
            .map_err(|e| field(0, "bad run", &e))?;
        let week: u32 = fields[1]
            .parse()
            .map_err(|e| field(1, "bad week", &e))?;
        let strategy: UpdateStrategy = fields[2]
            .parse()
            .map_err(|e: String| field(2, "bad strategy", &e))?;
        let accuracy: f64 = fields[3]
            .parse()
            .map_err(|e| field(3, "bad accuracy", &e))?;
        let log_loss: f64 = fields[4]
            .parse()
            .map_err(|e| field(4, "bad log_loss", &e))?;
        let retrained: bool = fields[5]
            .parse()
            .map_err(|e| field(5, "bad retrained flag", &e))?;
        let evaluations: usize = fields[6]
            .parse()
            .map_err(|e| field(6, "bad evaluations", &e))?;
        let store_class_counts: Vec<usize> = fields[RESULT_COLUMNS.len()..]
            .iter()
            .map(|f| f.parse().map_err(|e| field(0, "bad class count", &e)))
            .collect::<Result<_, _>>()?;
        records.push(WeekRecord {
            run,
            week,
            strategy,
            accuracy,
            log_loss,
            retrained,
            store_class_counts,
            evaluations,
        });
    }
    Ok(ResultsFile {
        records,
        class_names,
    })
}

#[derive(Serialize)]
struct WeekDto {
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_log_loss: f64,
    std_log_loss: f64,
}

/// Renders `summary.json`: strategy, then week, then the four aggregate
/// fields. Keys appear in strategy order and numeric week order.
pub fn summary_json(weekly: &RunSummary) -> String {
    let mut tree: BTreeMap<String, BTreeMap<u32, WeekDto>> = BTreeMap::new();
    for (&(strategy, week), aggregate) in weekly {
        tree.entry(strategy.to_string()).or_default().insert(
            week,
            WeekDto {
                mean_accuracy: aggregate.mean_accuracy,
                std_accuracy: aggregate.std_accuracy,
                mean_log_loss: aggregate.mean_log_loss,
                std_log_loss: aggregate.std_log_loss,
            },
        );
    }
    let mut out = serde_json::to_string_pretty(&tree).expect("summary serializes");
    out.push('\n');
    out
}

/// Renders the plot-ready long-format report CSV, one row per
/// (week, strategy) in ascending week order.
pub fn report_csv(weekly: &RunSummary) -> String {
    let mut rows: Vec<(u32, UpdateStrategy)> =
        weekly.keys().map(|&(strategy, week)| (week, strategy)).collect();
    rows.sort();
    let mut out =
        String::from("week,strategy,mean_accuracy,std_accuracy,mean_log_loss,std_log_loss\n");
    for (week, strategy) in rows {
        let aggregate = &weekly[&(strategy, week)];
        let _ = writeln!(
            out,
            "{week},{strategy},{},{},{},{}",
            aggregate.mean_accuracy,
            aggregate.std_accuracy,
            aggregate.mean_log_loss,
            aggregate.std_log_loss
        );
    }
    out
}
