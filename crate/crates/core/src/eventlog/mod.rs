//! Event logs: parsing, case grouping, and dataset statistics.
//!
//! An event log is a set of traces; a trace is the time-ordered sequence of
//! events sharing one case identifier. Parsers for CSV ([`parse_csv`]) and
//! XES ([`parse_xes`]) produce the same in-memory representation.

mod csv_parse;
mod xes;

pub use csv_parse::{parse_csv, ColumnMapping, TypeHint};
pub use xes::{parse_xes, XesOptions};

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

/// A single event attribute value, before any encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum AttributeValue {
    Categorical(String),
    /// Always finite; parsers reject NaN and infinities.
    Numeric(f64),
    /// UTC instant with millisecond precision.
    Timestamp(DateTime<Utc>),
}

impl AttributeValue {
    /// Render the value the way the parsers accept it back.
    pub fn render(&self) -> String {
        match self {
            AttributeValue::Categorical(s) => s.clone(),
            AttributeValue::Numeric(x) => format!("{x}"),
            AttributeValue::Timestamp(t) => t.to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }
}

/// One recorded event.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    /// Extra attributes; never contains the case/activity/timestamp keys.
    pub extras: BTreeMap<String, AttributeValue>,
}

/// The time-ordered events of one case.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

/// Declared attribute kind of a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttrKind {
    Categorical,
    Numeric,
    Timestamp,
}

/// Column names and attribute types of the source log.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LogSchema {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    pub extra_columns: Vec<(String, AttrKind)>,
}

/// A parsed, case-grouped event log.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub schema: LogSchema,
    pub source: String,
}

impl EventLog {
    pub fn total_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    /// Longest trace length, 0 for an empty log.
    pub fn max_trace_len(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }

    /// Distinct activity labels in first-seen-independent (sorted) order.
    pub fn activity_alphabet(&self) -> Vec<String> {
        let mut set: Vec<String> = self
            .traces
            .iter()
            .flat_map(|t| t.activities().map(str::to_owned))
            .collect();
        set.sort();
        set.dedup();
        set
    }

    /// Histogram of next-activity prediction targets: every activity that
    /// occurs at position two or later of some trace.
    pub fn label_histogram(&self) -> BTreeMap<String, u64> {
        let mut hist = BTreeMap::new();
        for trace in &self.traces {
            for event in trace.events.iter().skip(1) {
                *hist.entry(event.activity.clone()).or_insert(0) += 1;
            }
        }
        hist
    }
}

/// Headline statistics of a log.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogStats {
    pub cases: usize,
    pub events: usize,
    pub distinct_activities: usize,
    pub avg_trace_length: f64,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp {value:?}")]
    TimestampParse { row: usize, value: String },
    #[error("input contains no events")]
    EmptyLog,
    #[error("{} row(s) rejected: {}", .0.len(), format_row_errors(.0))]
    RowErrors(Vec<RowError>),
    #[error("malformed XML at byte {position}: {message}")]
    XmlMalformed { position: usize, message: String },
    #[error("trace {trace_index} has no concept:name")]
    MissingConceptName { trace_index: usize },
    #[error("event in trace {trace_index} has no time:timestamp (row-order fallback disabled)")]
    MissingTimestamp { trace_index: usize },
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

/// One rejected input row and why.
#[derive(Clone, Debug, PartialEq)]
pub struct RowError {
    pub row: usize,
    pub reason: String,
}

fn format_row_errors(errors: &[RowError]) -> String {
    let shown: Vec<String> = errors
        .iter()
        .take(5)
        .map(|e| format!("row {}: {}", e.row, e.reason))
        .collect();
    let mut out = shown.join("; ");
    if errors.len() > 5 {
        out.push_str("; ...");
    }
    out
}

/// Headline statistics of a non-empty log.
pub fn log_stats(log: &EventLog) -> Result<LogStats, ParseError> {
    if log.traces.is_empty() {
        return Err(ParseError::EmptyLog);
    }
    let cases = log.traces.len();
    let events = log.total_events();
    Ok(LogStats {
        cases,
        events,
        distinct_activities: log.activity_alphabet().len(),
        avg_trace_length: events as f64 / cases as f64,
    })
}

/// Group (case_id, event) pairs into traces sorted by timestamp within each
/// case, breaking ties by input order. Trace order follows first appearance
/// of each case in the input.
pub(crate) fn group_into_traces(events: Vec<Event>) -> Vec<Trace> {
    let mut order: Vec<String> = Vec::new();
    let mut by_case: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for event in events {
        if !by_case.contains_key(&event.case_id) {
            order.push(event.case_id.clone());
        }
        by_case
            .entry(event.case_id.clone())
            .or_default()
            .push(event);
    }
    order
        .into_iter()
        .map(|case_id| {
            let mut events = by_case.remove(&case_id).expect("case present");
            // Stable sort keeps input order for equal timestamps.
            events.sort_by_key(|e| e.timestamp);
            Trace { case_id, events }
        })
        .collect()
}
