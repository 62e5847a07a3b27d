//! CSV event-log ingestion.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, TimeZone, Timelike, Utc};

use super::{
    group_into_traces, AttrKind, AttributeValue, Event, EventLog, LogSchema, ParseError, RowError,
};

/// Declared type of an extra column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeHint {
    Categorical,
    Numeric,
    Timestamp,
}

impl TypeHint {
    fn attr_kind(self) -> AttrKind {
        match self {
            TypeHint::Categorical => AttrKind::Categorical,
            TypeHint::Numeric => AttrKind::Numeric,
            TypeHint::Timestamp => AttrKind::Timestamp,
        }
    }
}

/// How to read a CSV file: which columns carry the case, activity, and
/// timestamp, the timestamp format, and type hints for the remaining columns.
#[derive(Clone, Debug)]
pub struct ColumnMapping {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    /// chrono format string; `None` accepts ISO-8601 (with or without offset).
    pub timestamp_format: Option<String>,
    pub delimiter: u8,
    /// Columns without a hint default to categorical text.
    pub type_hints: BTreeMap<String, TypeHint>,
}

impl ColumnMapping {
    pub fn new(case: &str, activity: &str, timestamp: &str) -> Self {
        Self {
            case: case.to_string(),
            activity: activity.to_string(),
            timestamp: timestamp.to_string(),
            timestamp_format: None,
            delimiter: b',',
            type_hints: BTreeMap::new(),
        }
    }

    pub fn with_format(mut self, format: &str) -> Self {
        self.timestamp_format = Some(format.to_string());
        self
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn with_hint(mut self, column: &str, hint: TypeHint) -> Self {
        self.type_hints.insert(column.to_string(), hint);
        self
    }
}

/// Truncate to millisecond precision.
pub(crate) fn to_millis(ts: DateTime<Utc>) -> DateTime<Utc> {
    let nanos = ts.nanosecond();
    ts.with_nanosecond(nanos / 1_000_000 * 1_000_000)
        .unwrap_or(ts)
}

/// Parse a timestamp string, normalizing to UTC at millisecond precision.
pub(crate) fn parse_timestamp(value: &str, format: Option<&str>) -> Option<DateTime<Utc>> {
    let value = value.trim();
    if let Some(fmt) = format {
        if fmt.contains("%z") || fmt.contains("%:z") || fmt.contains("%#z") {
            return DateTime::parse_from_str(value, fmt)
                .ok()
                .map(|t| to_millis(t.with_timezone(&Utc)));
        }
        return NaiveDateTime::parse_from_str(value, fmt)
            .ok()
            .map(|t| to_millis(Utc.from_utc_datetime(&t)));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Some(to_millis(t.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(value, fmt) {
            return Some(to_millis(Utc.from_utc_datetime(&t)));
        }
    }
    None
}

/// Parse a CSV event log. Rows are grouped by case and sorted by timestamp
/// within each case (ties keep file order). Rows with an empty case or
/// activity fail the parse with a row-indexed error list.
pub fn parse_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<EventLog, ParseError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter)
        .flexible(false)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| ParseError::Csv(e.to_string()))?
        .clone();
    let column_index = |name: &str| -> Result<usize, ParseError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ParseError::MissingColumn(name.to_string()))
    };
    let case_idx = column_index(&mapping.case)?;
    let activity_idx = column_index(&mapping.activity)?;
    let timestamp_idx = column_index(&mapping.timestamp)?;

    let extra_columns: Vec<(usize, String, TypeHint)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != case_idx && *i != activity_idx && *i != timestamp_idx)
        .map(|(i, name)| {
            let hint = mapping
                .type_hints
                .get(name)
                .copied()
                .unwrap_or(TypeHint::Categorical);
            // The reserved extras keys stay free even when an unmapped
            // column carries one of those literal names.
            let key = if matches!(name, "case_id" | "activity" | "timestamp") {
                format!("extra:{name}")
            } else {
                name.to_string()
            };
            (i, key, hint)
        })
        .collect();

    let mut events = Vec::new();
    let mut row_errors = Vec::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| ParseError::Csv(e.to_string()))?;
        let case_id = record.get(case_idx).unwrap_or("").trim().to_string();
        let activity = record.get(activity_idx).unwrap_or("").trim().to_string();
        if case_id.is_empty() {
            row_errors.push(RowError {
                row,
                reason: "empty case id".to_string(),
            });
            continue;
        }
        if activity.is_empty() {
            row_errors.push(RowError {
                row,
                reason: "empty activity".to_string(),
            });
            continue;
        }
        let ts_raw = record.get(timestamp_idx).unwrap_or("");
        let timestamp =
            parse_timestamp(ts_raw, mapping.timestamp_format.as_deref()).ok_or_else(|| {
                ParseError::TimestampParse {
                    row,
                    value: ts_raw.to_string(),
                }
            })?;

        let mut extras = BTreeMap::new();
        for (idx, name, hint) in &extra_columns {
            let raw = record.get(*idx).unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            let value = match hint {
                TypeHint::Categorical => AttributeValue::Categorical(raw.to_string()),
                TypeHint::Numeric => match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => AttributeValue::Numeric(x),
                    // Unparseable extras degrade to text instead of failing the row.
                    _ => AttributeValue::Categorical(raw.to_string()),
                },
                TypeHint::Timestamp => {
                    match parse_timestamp(raw, mapping.timestamp_format.as_deref()) {
                        Some(t) => AttributeValue::Timestamp(t),
                        None => AttributeValue::Categorical(raw.to_string()),
                    }
                }
            };
            extras.insert(name.clone(), value);
        }

        events.push(Event {
            case_id,
            activity,
            timestamp,
            extras,
        });
    }

    if !row_errors.is_empty() {
        return Err(ParseError::RowErrors(row_errors));
    }
    if events.is_empty() {
        return Err(ParseError::EmptyLog);
    }

    let schema = LogSchema {
        case_column: mapping.case.clone(),
        activity_column: mapping.activity.clone(),
        timestamp_column: mapping.timestamp.clone(),
        extra_columns: extra_columns
            .iter()
            .map(|(_, name, hint)| (name.clone(), hint.attr_kind()))
            .collect(),
    };
    Ok(EventLog {
        traces: group_into_traces(events),
        schema,
        source: "csv".to_string(),
    })
}
