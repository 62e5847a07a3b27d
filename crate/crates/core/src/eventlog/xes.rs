//! XES event-log ingestion.
//!
//! Reads the common XES layout: a `log` element containing `trace` elements,
//! each containing `event` elements, with typed attribute leaves
//! (`string`/`date`/`int`/`float`/`boolean`/`id`). `concept:name` maps to the
//! activity at event level and the case id at trace level, `time:timestamp`
//! to the event timestamp; everything else lands in extras. Unrecognized
//! attribute elements are preserved as categorical text. Gzip-compressed
//! input is detected by its magic bytes.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Utc};
use flate2::read::GzDecoder;

use super::csv_parse::to_millis;
use super::{group_into_traces, AttrKind, AttributeValue, Event, EventLog, LogSchema, ParseError};

#[derive(Clone, Copy, Debug, Default)]
pub struct XesOptions {
    /// Synthesize document-order timestamps for events without
    /// `time:timestamp` instead of failing.
    pub timestamp_fallback: bool,
}

/// Parse an XES (optionally gzipped) event log.
pub fn parse_xes<R: Read>(mut reader: R, options: &XesOptions) -> Result<EventLog, ParseError> {
    let mut raw = Vec::new();
    reader
        .read_to_end(&mut raw)
        .map_err(|e| ParseError::Io(e.to_string()))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut decoded = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut decoded)
            .map_err(|e| ParseError::Io(format!("gzip: {e}")))?;
        decoded
    } else {
        raw
    };

    let mut scanner = XmlScanner::new(&bytes);
    let mut stack: Vec<String> = Vec::new();
    let mut trace_index = 0usize;
    let mut current_trace: Option<TraceBuilder> = None;
    let mut current_event: Option<EventBuilder> = None;
    let mut events: Vec<Event> = Vec::new();

    while let Some(token) = scanner.next_token()? {
        match token {
            XmlToken::StartTag {
                name,
                attrs,
                self_closing,
            } => {
                let parent = stack.last().map(String::as_str);
                match name.as_str() {
                    "trace" if parent == Some("log") => {
                        current_trace = Some(TraceBuilder::default());
                    }
                    "event" if parent == Some("trace") => {
                        current_event = Some(EventBuilder::default());
                    }
                    _ => {
                        // Typed attribute leaf directly inside a trace or event.
                        if let Some(kv) = attribute_leaf(&name, &attrs) {
                            match parent {
                                Some("event") => {
                                    if let Some(builder) = current_event.as_mut() {
                                        builder.attrs.push(kv);
                                    }
                                }
                                Some("trace") => {
                                    if let Some(builder) = current_trace.as_mut() {
                                        builder.push(kv);
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                if !self_closing {
                    stack.push(name);
                }
            }
            XmlToken::EndTag { name } => {
                match stack.pop() {
                    Some(open) if open == name => {}
                    Some(open) => {
                        return Err(ParseError::XmlMalformed {
                            position: scanner.pos,
                            message: format!("</{name}> closes <{open}>"),
                        })
                    }
                    None => {
                        return Err(ParseError::XmlMalformed {
                            position: scanner.pos,
                            message: format!("unmatched </{name}>"),
                        })
                    }
                }
                if name == "event" {
                    if let (Some(builder), Some(trace)) =
                        (current_event.take(), current_trace.as_mut())
                    {
                        trace.events.push(builder);
                    }
                } else if name == "trace" {
                    if let Some(builder) = current_trace.take() {
                        events.extend(builder.build(trace_index, options)?);
                        trace_index += 1;
                    }
                }
            }
        }
    }
    if !stack.is_empty() {
        return Err(ParseError::XmlMalformed {
            position: scanner.pos,
            message: format!("unclosed <{}>", stack.last().unwrap()),
        });
    }
    if events.is_empty() {
        return Err(ParseError::EmptyLog);
    }

    let mut extra_columns: Vec<(String, AttrKind)> = Vec::new();
    for event in &events {
        for (key, value) in &event.extras {
            if !extra_columns.iter().any(|(name, _)| name == key) {
                let kind = match value {
                    AttributeValue::Categorical(_) => AttrKind::Categorical,
                    AttributeValue::Numeric(_) => AttrKind::Numeric,
                    AttributeValue::Timestamp(_) => AttrKind::Timestamp,
                };
                extra_columns.push((key.clone(), kind));
            }
        }
    }
    extra_columns.sort_by(|a, b| a.0.cmp(&b.0));

    let schema = LogSchema {
        case_column: "concept:name".to_string(),
        activity_column: "concept:name".to_string(),
        timestamp_column: "time:timestamp".to_string(),
        extra_columns,
    };
    Ok(EventLog {
        traces: group_into_traces(events),
        schema,
        source: "xes".to_string(),
    })
}

#[derive(Clone, Debug)]
struct XesAttr {
    key: String,
    value: AttributeValue,
}

#[derive(Default)]
struct TraceBuilder {
    attrs: Vec<XesAttr>,
    events: Vec<EventBuilder>,
}

#[derive(Default)]
struct EventBuilder {
    attrs: Vec<XesAttr>,
}

impl TraceBuilder {
    fn push(&mut self, attr: XesAttr) {
        self.attrs.push(attr);
    }

    fn build(self, trace_index: usize, options: &XesOptions) -> Result<Vec<Event>, ParseError> {
        let case_id = self
            .attrs
            .iter()
            .find(|a| a.key == "concept:name")
            .map(|a| a.value.render().trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or(ParseError::MissingConceptName { trace_index })?;

        let mut out = Vec::with_capacity(self.events.len());
        let mut last_ts: Option<DateTime<Utc>> = None;
        for (event_index, builder) in self.events.into_iter().enumerate() {
            let mut activity = None;
            let mut timestamp = None;
            let mut extras = BTreeMap::new();
            for attr in builder.attrs {
                match attr.key.as_str() {
                    "concept:name" => activity = Some(attr.value.render().trim().to_string()),
                    "time:timestamp" => {
                        if let AttributeValue::Timestamp(t) = attr.value {
                            timestamp = Some(t);
                        }
                    }
                    _ => {
                        let key =
                            if matches!(attr.key.as_str(), "case_id" | "activity" | "timestamp") {
                                format!("extra:{}", attr.key)
                            } else {
                                attr.key
                            };
                        extras.insert(key, attr.value);
                    }
                }
            }
            let activity = activity
                .filter(|a| !a.is_empty())
                .ok_or(ParseError::MissingConceptName { trace_index })?;
            let timestamp = match timestamp {
                Some(t) => t,
                None if options.timestamp_fallback => {
                    let base = last_ts.unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
                    base + chrono::Duration::milliseconds(event_index as i64 + 1)
                }
                None => return Err(ParseError::MissingTimestamp { trace_index }),
            };
            last_ts = Some(timestamp);
            out.push(Event {
                case_id: case_id.clone(),
                activity,
                timestamp,
                extras,
            });
        }
        Ok(out)
    }
}

/// Interpret a leaf element with `key`/`value` attributes as a typed value.
fn attribute_leaf(name: &str, attrs: &[(String, String)]) -> Option<XesAttr> {
    let key = attrs.iter().find(|(k, _)| k == "key")?.1.clone();
    let raw = attrs
        .iter()
        .find(|(k, _)| k == "value")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    let value = match name {
        "date" => DateTime::parse_from_rfc3339(raw.trim())
            .map(|t| AttributeValue::Timestamp(to_millis(t.with_timezone(&Utc))))
            .unwrap_or(AttributeValue::Categorical(raw)),
        "int" => raw
            .trim()
            .parse::<i64>()
            .map(|x| AttributeValue::Numeric(x as f64))
            .unwrap_or(AttributeValue::Categorical(raw)),
        "float" => match raw.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => AttributeValue::Numeric(x),
            _ => AttributeValue::Categorical(raw),
        },
        // string, boolean, id, and anything from unrecognized extensions.
        _ => AttributeValue::Categorical(raw),
    };
    Some(XesAttr { key, value })
}

enum XmlToken {
    StartTag {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    EndTag {
        name: String,
    },
}

/// Byte-level scanner for the XML subset XES files use.
struct XmlScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> XmlScanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        let mut pos = 0;
        // UTF-8 BOM.
        if bytes.starts_with(&[0xef, 0xbb, 0xbf]) {
            pos = 3;
        }
        Self { bytes, pos }
    }

    fn malformed(&self, message: &str) -> ParseError {
        ParseError::XmlMalformed {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn starts_with(&self, prefix: &[u8]) -> bool {
        self.bytes[self.pos..].starts_with(prefix)
    }

    fn skip_until(&mut self, needle: &[u8], what: &str) -> Result<(), ParseError> {
        while self.pos < self.bytes.len() {
            if self.starts_with(needle) {
                self.pos += needle.len();
                return Ok(());
            }
            self.pos += 1;
        }
        Err(self.malformed(&format!("unterminated {what}")))
    }

    fn skip_whitespace(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn read_name(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, b':' | b'_' | b'-' | b'.') {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.malformed("expected a name"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn read_quoted(&mut self) -> Result<String, ParseError> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return Err(self.malformed("expected a quoted value")),
        };
        self.pos += 1;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == quote {
                let raw = &self.bytes[start..self.pos];
                self.pos += 1;
                return Ok(decode_entities(&String::from_utf8_lossy(raw)));
            }
            self.pos += 1;
        }
        Err(self.malformed("unterminated attribute value"))
    }

    fn next_token(&mut self) -> Result<Option<XmlToken>, ParseError> {
        loop {
            // Skip text content.
            while let Some(c) = self.peek() {
                if c == b'<' {
                    break;
                }
                self.pos += 1;
            }
            if self.peek().is_none() {
                return Ok(None);
            }
            if self.starts_with(b"<?") {
                self.skip_until(b"?>", "processing instruction")?;
                continue;
            }
            if self.starts_with(b"<!--") {
                self.skip_until(b"-->", "comment")?;
                continue;
            }
            if self.starts_with(b"<![CDATA[") {
                self.skip_until(b"]]>", "CDATA section")?;
                continue;
            }
            if self.starts_with(b"<!") {
                self.skip_until(b">", "declaration")?;
                continue;
            }
            if self.starts_with(b"</") {
                self.pos += 2;
                self.skip_whitespace();
                let name = self.read_name()?;
                self.skip_whitespace();
                if self.peek() != Some(b'>') {
                    return Err(self.malformed("expected '>' after end tag name"));
                }
                self.pos += 1;
                return Ok(Some(XmlToken::EndTag { name }));
            }
            // Start tag.
            self.pos += 1;
            let name = self.read_name()?;
            let mut attrs = Vec::new();
            loop {
                self.skip_whitespace();
                match self.peek() {
                    Some(b'>') => {
                        self.pos += 1;
                        return Ok(Some(XmlToken::StartTag {
                            name,
                            attrs,
                            self_closing: false,
                        }));
                    }
                    Some(b'/') => {
                        self.pos += 1;
                        if self.peek() != Some(b'>') {
                            return Err(self.malformed("expected '/>'"));
                        }
                        self.pos += 1;
                        return Ok(Some(XmlToken::StartTag {
                            name,
                            attrs,
                            self_closing: true,
                        }));
                    }
                    Some(_) => {
                        let attr_name = self.read_name()?;
                        self.skip_whitespace();
                        if self.peek() != Some(b'=') {
                            return Err(self.malformed("expected '=' in attribute"));
                        }
                        self.pos += 1;
                        self.skip_whitespace();
                        let value = self.read_quoted()?;
                        attrs.push((attr_name, value));
                    }
                    None => return Err(self.malformed("unterminated start tag")),
                }
            }
        }
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(idx) = rest.find('&') {
        out.push_str(&rest[..idx]);
        rest = &rest[idx..];
        if let Some(end) = rest.find(';') {
            let entity = &rest[1..end];
            let decoded = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                _ => entity.strip_prefix("#x").map_or_else(
                    || {
                        entity
                            .strip_prefix('#')
                            .and_then(|d| d.parse::<u32>().ok())
                            .and_then(char::from_u32)
                    },
                    |h| u32::from_str_radix(h, 16).ok().and_then(char::from_u32),
                ),
            };
            match decoded {
                Some(c) => {
                    out.push(c);
                    rest = &rest[end + 1..];
                }
                None => {
                    out.push('&');
                    rest = &rest[1..];
                }
            }
        } else {
            out.push('&');
            rest = &rest[1..];
        }
    }
    out.push_str(rest);
    out
}
