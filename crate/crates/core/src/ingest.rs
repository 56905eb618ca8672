//! Streaming ingestion of proxy logs: line parsing, error filtering, host
//! partitioning and corpus statistics.
//!
//! Two line formats are understood. The canonical one is delimited text
//! (TAB by default) whose first line may be a header naming the columns.
//! Fields may contain the delimiter, line breaks or backslashes; these are
//! written as backslash escapes (`\t`, `\n`, `\r`, `\\`, or `\` followed by
//! the delimiter). A field whose raw text equals the schema's missing token,
//! or is empty, is absent. The sequence `\.` expands to nothing and lets a
//! real value that happens to equal the missing token be written
//! unambiguously.
//!
//! The second format is line-delimited JSON objects keyed by field name.
//!
//! Either may be gzip-compressed; compression is detected from the magic
//! bytes, not the file name.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::{
    format_timestamp, Coordinates, Field, FieldValue, HitStatus, LogRecord, UnknownField,
};

/// Hosts need strictly more than this many error records to
/// be clustered.
pub const DEFAULT_MIN_HOST_COUNT: u64 = 1000;

/// Lines longer than this are rejected without being buffered in full.
pub const DEFAULT_MAX_LINE_BYTES: usize = 1 << 20;

const BATCH_LINES: usize = 4096;
const LOGGED_FAILURES: usize = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("I/O error after {} lines: {source}", stats.total_lines)]
    Io {
        #[source]
        source: io::Error,
        stats: CorpusStats,
    },
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl From<UnknownField> for IngestError {
    fn from(e: UnknownField) -> Self {
        IngestError::Schema(e.to_string())
    }
}

/// Column layout of delimited input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Field>,
    pub delimiter: char,
    pub missing_token: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            columns: Field::ALL.to_vec(),
            delimiter: '\t',
            missing_token: "-".to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    columns: Option<Vec<String>>,
    delimiter: Option<String>,
    missing_token: Option<String>,
}

impl Schema {
    pub fn new(
        columns: Vec<Field>,
        delimiter: char,
        missing_token: impl Into<String>,
    ) -> Result<Schema, IngestError> {
        let schema = Schema {
            columns,
            delimiter,
            missing_token: missing_token.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let set: BTreeSet<Field> = self.columns.iter().copied().collect();
        if set.len() != self.columns.len() || set.len() != Field::ALL.len() {
            return Err(IngestError::Schema(format!(
                "columns must name each of the {} log fields exactly once (got {} columns, {} distinct)",
                Field::ALL.len(),
                self.columns.len(),
                set.len()
            )));
        }
        if matches!(self.delimiter, '\\' | '\n' | '\r') {
            return Err(IngestError::Schema(format!(
                "delimiter {:?} is reserved",
                self.delimiter
            )));
        }
        if self.missing_token.contains(self.delimiter) {
            return Err(IngestError::Schema(
                "missing token contains the delimiter".into(),
            ));
        }
        if self.missing_token.contains(['\\', '\n', '\r']) {
            return Err(IngestError::Schema(
                "missing token may not contain backslashes or line breaks".into(),
            ));
        }
        Ok(())
    }

    /// Schema description in TOML: optional `columns` (field names),
    /// `delimiter` (one character) and `missing_token`.
    pub fn from_toml(text: &str) -> Result<Schema, IngestError> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
        let mut schema = Schema::default();
        if let Some(cols) = file.columns {
            schema.columns = cols
                .iter()
                .map(|c| c.parse::<Field>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(d) = file.delimiter {
            let mut chars = d.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => schema.delimiter = c,
                _ => {
                    return Err(IngestError::Schema(format!(
                        "delimiter must be a single character, got {d:?}"
                    )))
                }
            }
        }
        if let Some(m) = file.missing_token {
            schema.missing_token = m;
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Schema::from_toml(&text)
    }

    /// Interpret `line` as a header. Returns the reordered schema when every
    /// token is a field name and together they cover the field set.
    pub fn with_header(&self, line: &str) -> Option<Schema> {
        let cols: Vec<Field> = line
            .split(self.delimiter)
            .map(|t| t.parse::<Field>().ok())
            .collect::<Option<_>>()?;
        let schema = Schema {
            columns: cols,
            ..self.clone()
        };
        schema.validate().ok().map(|_| schema)
    }

    pub fn header_line(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                out.push(self.delimiter);
            }
            out.push_str(c.name());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseReason {
    WrongColumnCount { expected: usize, found: usize },
    NonIntegerStatus { value: String },
    StatusOutOfRange { value: i64 },
    MissingRequired { field: Field },
    BadTimestamp { value: String },
    InvalidUtf8,
    LineTooLong { limit: usize },
    BadJson { message: String },
}

impl fmt::Display for ParseReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseReason::WrongColumnCount { expected, found } => {
                write!(f, "wrong column count: expected {expected}, found {found}")
            }
            ParseReason::NonIntegerStatus { value } => {
                write!(f, "non-integer status code {value:?}")
            }
            ParseReason::StatusOutOfRange { value } => {
                write!(f, "status code {value} outside 100-599")
            }
            ParseReason::MissingRequired { field } => {
                write!(f, "required field `{field}` is missing")
            }
            ParseReason::BadTimestamp { value } => write!(f, "unparseable timestamp {value:?}"),
            ParseReason::InvalidUtf8 => f.write_str("line is not valid UTF-8"),
            ParseReason::LineTooLong { limit } => write!(f, "line exceeds {limit} bytes"),
            ParseReason::BadJson { message } => write!(f, "invalid JSON record: {message}"),
        }
    }
}

/// A rejected line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("line {line}: {reason}")]
pub struct ParseFailure {
    pub line: u64,
    pub reason: ParseReason,
}

struct RawField {
    is_missing: bool,
    value: String,
}

fn split_fields(line: &str, schema: &Schema) -> Vec<RawField> {
    let mut out = Vec::with_capacity(schema.columns.len());
    let mut value = String::new();
    let mut start = 0;
    let mut chars = line.char_indices();
    let finish = |value: &mut String, raw: &str, out: &mut Vec<RawField>| {
        out.push(RawField {
            is_missing: raw.is_empty() || raw == schema.missing_token,
            value: std::mem::take(value),
        });
    };
    while let Some((i, c)) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some((_, 't')) => value.push('\t'),
                Some((_, 'n')) => value.push('\n'),
                Some((_, 'r')) => value.push('\r'),
                Some((_, '.')) => {}
                Some((_, other)) => value.push(other),
                None => value.push('\\'),
            }
        } else if c == schema.delimiter {
            finish(&mut value, &line[start..i], &mut out);
            start = i + c.len_utf8();
        } else {
            value.push(c);
        }
    }
    finish(&mut value, &line[start..], &mut out);
    out
}

fn escape_into(out: &mut String, value: &str, schema: &Schema) {
    let start = out.len();
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if c == schema.delimiter => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    if &out[start..] == schema.missing_token {
        out.insert_str(start, "\\.");
    }
}

fn parse_status(raw: &str) -> Result<u16, ParseReason> {
    let trimmed = raw.trim();
    let code: i64 = trimmed.parse().map_err(|_| ParseReason::NonIntegerStatus {
        value: raw.to_string(),
    })?;
    if !(100..=599).contains(&code) {
        return Err(ParseReason::StatusOutOfRange { value: code });
    }
    Ok(code as u16)
}

/// RFC 3339, or seconds since the Unix epoch (fractional allowed).
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    let secs: f64 = raw.parse().ok()?;
    if !secs.is_finite() || secs.abs() > 1e11 {
        return None;
    }
    let whole = secs.floor();
    let nanos = ((secs - whole) * 1e9).round().min(999_999_999.0) as u32;
    Utc.timestamp_opt(whole as i64, nanos).single()
}

fn parse_nonneg_real(raw: &str) -> Option<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
}

fn parse_coordinates(raw: &str) -> Option<Coordinates> {
    let (lon, lat) = raw.split_once(';')?;
    let longitude: f64 = lon.trim().parse().ok()?;
    let latitude: f64 = lat.trim().parse().ok()?;
    (longitude.is_finite() && latitude.is_finite()).then_some(Coordinates {
        longitude,
        latitude,
    })
}

/// Default-filled record builder shared by the TSV and JSON readers.
#[derive(Default)]
struct RecordDraft {
    statuscode: Option<u16>,
    timestamp: Option<DateTime<Utc>>,
    host: Option<String>,
    method: Option<String>,
    rec: Option<LogRecord>,
}

impl RecordDraft {
    fn new() -> Self {
        RecordDraft {
            rec: Some(
                LogRecord::new(200, String::new(), String::new(), DateTime::<Utc>::UNIX_EPOCH)
                    .expect("200 is a valid status"),
            ),
            ..Default::default()
        }
    }

    /// `text` is `None` if the value is absent.
    fn set(&mut self, field: Field, text: Option<String>) -> Result<(), ParseReason> {
        let rec = self.rec.as_mut().expect("draft not finished");
        match field {
            Field::StatusCode => {
                let raw = text.ok_or(ParseReason::MissingRequired { field })?;
                self.statuscode = Some(parse_status(&raw)?);
            }
            Field::Timestamp => {
                let raw = text.ok_or(ParseReason::MissingRequired { field })?;
                self.timestamp = Some(
                    parse_timestamp(&raw).ok_or(ParseReason::BadTimestamp { value: raw })?,
                );
            }
            Field::Host => self.host = Some(text.ok_or(ParseReason::MissingRequired { field })?),
            Field::Method => {
                self.method = Some(text.ok_or(ParseReason::MissingRequired { field })?)
            }
            Field::ContentLength => {
                rec.contentlength = text.and_then(|t| t.trim().parse().ok())
            }
            Field::TimeFirstByte => rec.timefirstbyte = text.and_then(|t| parse_nonneg_real(&t)),
            Field::TimeToServ => rec.timetoserv = text.and_then(|t| parse_nonneg_real(&t)),
            Field::Coordinates => rec.coordinates = text.and_then(|t| parse_coordinates(&t)),
            Field::Hit => {
                rec.hit = text.map_or(HitStatus::Missing, |t| HitStatus::parse(&t))
            }
            other => {
                *rec.text_slot_mut(other).expect("remaining fields are free text") =
                    text.filter(|t| !t.is_empty())
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<LogRecord, ParseReason> {
        let mut rec = self.rec.take().expect("draft not finished");
        rec.statuscode = self.statuscode.ok_or(ParseReason::MissingRequired {
            field: Field::StatusCode,
        })?;
        rec.timestamp = self.timestamp.ok_or(ParseReason::MissingRequired {
            field: Field::Timestamp,
        })?;
        rec.host = self
            .host
            .filter(|h| !h.is_empty())
            .ok_or(ParseReason::MissingRequired { field: Field::Host })?;
        rec.method = self
            .method
            .filter(|m| !m.is_empty())
            .ok_or(ParseReason::MissingRequired {
                field: Field::Method,
            })?;
        Ok(rec)
    }
}

/// Parse one physical line (without terminator) of delimited text.
pub fn parse_line(line: &str, schema: &Schema, line_no: u64) -> Result<LogRecord, ParseFailure> {
    let fail = |reason| ParseFailure {
        line: line_no,
        reason,
    };
    let fields = split_fields(line, schema);
    if fields.len() != schema.columns.len() {
        return Err(fail(ParseReason::WrongColumnCount {
            expected: schema.columns.len(),
            found: fields.len(),
        }));
    }
    // Status first so that a bad status is reported in preference to other
    // defects on the same line.
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.sort_by_key(|&i| schema.columns[i] != Field::StatusCode);
    let mut fields: Vec<Option<RawField>> = fields.into_iter().map(Some).collect();
    let mut draft = RecordDraft::new();
    for i in order {
        let raw = fields[i].take().expect("each column visited once");
        let text = (!raw.is_missing).then_some(raw.value);
        draft.set(schema.columns[i], text).map_err(fail)?;
    }
    draft.finish().map_err(fail)
}

/// Render a record as one delimited line in `schema`'s column order.
pub fn format_line(record: &LogRecord, schema: &Schema) -> String {
    let mut out = String::with_capacity(256);
    for (i, &field) in schema.columns.iter().enumerate() {
        if i > 0 {
            out.push(schema.delimiter);
        }
        match record.value(field) {
            FieldValue::Text(None)
            | FieldValue::Integer(None)
            | FieldValue::Real(None)
            | FieldValue::Coordinates(None)
            | FieldValue::Hit(HitStatus::Missing) => out.push_str(&schema.missing_token),
            FieldValue::Text(Some(s)) => escape_into(&mut out, s, schema),
            FieldValue::Integer(Some(v)) => out.push_str(&v.to_string()),
            FieldValue::Real(Some(v)) => out.push_str(&v.to_string()),
            FieldValue::Status(code) => out.push_str(&code.to_string()),
            FieldValue::Time(t) => out.push_str(&format_timestamp(&t)),
            FieldValue::Coordinates(Some(c)) => {
                escape_into(&mut out, &format!("{};{}", c.longitude, c.latitude), schema)
            }
            FieldValue::Hit(h) => out.push_str(h.as_str()),
        }
    }
    out
}

fn json_text(value: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match value {
        Value::Null => None,
        Value::String(s) if s.is_empty() => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(if *b { "hit" } else { "miss" }.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => match items.as_slice() {
            [lon, lat] => Some(format!("{};{}", lon.as_f64()?, lat.as_f64()?)),
            _ => None,
        },
        Value::Object(map) => {
            let lon = map.get("longitude")?.as_f64()?;
            let lat = map.get("latitude")?.as_f64()?;
            Some(format!("{lon};{lat}"))
        }
    }
}

/// Parse one JSON object line. Keys are field names; unknown keys are
/// ignored and absent keys are missing values.
pub fn parse_json_line(line: &str, line_no: u64) -> Result<LogRecord, ParseFailure> {
    let fail = |reason| ParseFailure {
        line: line_no,
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
        fail(ParseReason::BadJson {
            message: e.to_string(),
        })
    })?;
    let map = value.as_object().ok_or_else(|| {
        fail(ParseReason::BadJson {
            message: "expected a JSON object".into(),
        })
    })?;
    let mut draft = RecordDraft::new();
    let mut fields: Vec<(Field, Option<String>)> = Field::ALL
        .iter()
        .map(|&f| (f, map.get(f.name()).and_then(json_text)))
        .collect();
    fields.sort_by_key(|(f, _)| *f != Field::StatusCode);
    for (field, text) in fields {
        draft.set(field, text).map_err(fail)?;
    }
    draft.finish().map_err(fail)
}

/// Render a record as a JSON object line (missing values omitted).
pub fn format_json_line(record: &LogRecord) -> String {
    let mut map = serde_json::Map::new();
    for field in Field::ALL {
        let value = match record.value(field) {
            FieldValue::Text(Some(s)) => serde_json::Value::from(s),
            FieldValue::Integer(Some(v)) => serde_json::Value::from(v),
            FieldValue::Real(Some(v)) => serde_json::Value::from(v),
            FieldValue::Status(code) => serde_json::Value::from(code),
            FieldValue::Time(t) => serde_json::Value::from(format_timestamp(&t)),
            FieldValue::Coordinates(Some(c)) => serde_json::json!([c.longitude, c.latitude]),
            FieldValue::Hit(HitStatus::Missing) => continue,
            FieldValue::Hit(h) => serde_json::Value::from(h.as_str()),
            _ => continue,
        };
        map.insert(field.name().to_string(), value);
    }
    serde_json::Value::Object(map).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Decide from the first non-blank byte of the stream.
    #[default]
    Auto,
    Delimited,
    Jsonl,
}

/// Line and error counts over everything a stream has seen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_lines: u64,
    pub parsed: u64,
    pub rejected: u64,
    pub error_lines: u64,
    /// Error lines per host.
    pub per_host_counts: BTreeMap<String, u64>,
}

impl CorpusStats {
    /// Combine partial statistics; associative and commutative.
    pub fn merge(&mut self, other: &CorpusStats) {
        self.total_lines += other.total_lines;
        self.parsed += other.parsed;
        self.rejected += other.rejected;
        self.error_lines += other.error_lines;
        for (host, n) in &other.per_host_counts {
            *self.per_host_counts.entry(host.clone()).or_default() += n;
        }
    }
}

/// Stream options beyond the schema.
#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub format: InputFormat,
    /// Yield only records with status >= 400.
    pub errors_only: bool,
    /// Parse batches of lines on the rayon pool. Output order is unchanged.
    pub parallel: bool,
    pub max_line_bytes: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            format: InputFormat::Auto,
            errors_only: true,
            parallel: false,
            max_line_bytes: DEFAULT_MAX_LINE_BYTES,
        }
    }
}

enum RawLine {
    Text(u64, String),
    Bad(u64, ParseReason),
}

fn parse_raw(raw: RawLine, schema: &Schema, format: InputFormat) -> Result<LogRecord, ParseFailure> {
    match raw {
        RawLine::Bad(line, reason) => Err(ParseFailure { line, reason }),
        RawLine::Text(line, text) => match format {
            InputFormat::Jsonl => parse_json_line(&text, line),
            _ => parse_line(&text, schema, line),
        },
    }
}

/// Iterator over the records of a line-oriented source.
///
/// Memory use is bounded by the batch size times the line-length cap,
/// independent of the size of the source.
pub struct RecordStream<R> {
    reader: R,
    schema: Schema,
    options: StreamOptions,
    stats: CorpusStats,
    pending: VecDeque<LogRecord>,
    failures: Vec<ParseFailure>,
    line_no: u64,
    buf: Vec<u8>,
    header_checked: bool,
    done: bool,
}

impl<R: BufRead> RecordStream<R> {
    pub fn new(reader: R, schema: Schema, options: StreamOptions) -> Self {
        RecordStream {
            reader,
            schema,
            options,
            stats: CorpusStats::default(),
            pending: VecDeque::new(),
            failures: Vec::new(),
            line_no: 0,
            buf: Vec::new(),
            header_checked: false,
            done: false,
        }
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    /// The first few rejected lines, for diagnostics.
    pub fn sample_failures(&self) -> &[ParseFailure] {
        &self.failures
    }

    /// Schema in effect, after any header line has been applied.
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Read one line into `self.buf`, discarding bytes beyond the cap.
    /// Returns `Ok(None)` at end of input, `Ok(Some(true))` when truncated.
    fn read_line(&mut self) -> io::Result<Option<bool>> {
        self.buf.clear();
        let cap = self.options.max_line_bytes;
        let mut truncated = false;
        let mut any = false;
        loop {
            let chunk = match self.reader.fill_buf() {
                Ok(c) => c,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if chunk.is_empty() {
                break;
            }
            any = true;
            let (take, found) = match chunk.iter().position(|&b| b == b'\n') {
                Some(pos) => (pos, true),
                None => (chunk.len(), false),
            };
            let room = cap.saturating_sub(self.buf.len());
            if take > room {
                truncated = true;
            }
            self.buf.extend_from_slice(&chunk[..take.min(room)]);
            self.reader.consume(if found { take + 1 } else { take });
            if found {
                break;
            }
        }
        if !any {
            return Ok(None);
        }
        if self.buf.last() == Some(&b'\r') {
            self.buf.pop();
        }
        Ok(Some(truncated))
    }

    fn next_raw(&mut self) -> io::Result<Option<RawLine>> {
        loop {
            let Some(truncated) = self.read_line()? else {
                return Ok(None);
            };
            self.line_no += 1;
            if truncated {
                return Ok(Some(RawLine::Bad(
                    self.line_no,
                    ParseReason::LineTooLong {
                        limit: self.options.max_line_bytes,
                    },
                )));
            }
            let text = match std::str::from_utf8(&self.buf) {
                Ok(t) => t.to_string(),
                Err(_) => return Ok(Some(RawLine::Bad(self.line_no, ParseReason::InvalidUtf8))),
            };
            if !self.header_checked {
                if text.trim().is_empty() {
                    // Leading blank lines carry no data and do not settle
                    // the format.
                    self.line_no -= 1;
                    continue;
                }
                self.header_checked = true;
                if self.options.format == InputFormat::Auto {
                    self.options.format = if text.trim_start().starts_with('{') {
                        InputFormat::Jsonl
                    } else {
                        InputFormat::Delimited
                    };
                }
                if self.options.format == InputFormat::Delimited {
                    if let Some(schema) = self.schema.with_header(&text) {
                        self.schema = schema;
                        continue;
                    }
                }
            }
            return Ok(Some(RawLine::Text(self.line_no, text)));
        }
    }


    fn fill(&mut self) -> io::Result<()> {
        let mut batch = Vec::with_capacity(BATCH_LINES);
        while batch.len() < BATCH_LINES {
            match self.next_raw()? {
                Some(raw) => batch.push(raw),
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        let (schema, format) = (&self.schema, self.options.format);
        let results: Vec<Result<LogRecord, ParseFailure>> = if self.options.parallel {
            batch
                .into_par_iter()
                .map(|r| parse_raw(r, schema, format))
                .collect()
        } else {
            batch
                .into_iter()
                .map(|r| parse_raw(r, schema, format))
                .collect()
        };
        for result in results {
            self.stats.total_lines += 1;
            match result {
                Ok(rec) => {
                    self.stats.parsed += 1;
                    if rec.is_error() {
                        self.stats.error_lines += 1;
                        *self.stats.per_host_counts.entry(rec.host.clone()).or_default() += 1;
                    }
                    if rec.is_error() || !self.options.errors_only {
                        self.pending.push_back(rec);
                    }
                }
                Err(failure) => {
                    self.stats.rejected += 1;
                    if self.failures.len() < LOGGED_FAILURES {
                        log::warn!("skipping malformed input: {failure}");
                        self.failures.push(failure);
                    }
                }
            }
        }
        Ok(())
    }
}

impl<R: BufRead> Iterator for RecordStream<R> {
    type Item = Result<LogRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(rec) = self.pending.pop_front() {
                return Some(Ok(rec));
            }
            if self.done {
                return None;
            }
            if let Err(source) = self.fill() {
                self.done = true;
                return Some(Err(IngestError::Io {
                    source,
                    stats: self.stats.clone(),
                }));
            }
        }
    }
}

/// Stream the error records (status >= 400) of `source`.
pub fn stream_errors<R: BufRead>(source: R, schema: &Schema) -> RecordStream<R> {
    RecordStream::new(source, schema.clone(), StreamOptions::default())
}

/// Wrap a raw byte source, transparently decompressing gzip input.
pub fn decode_source<R: Read + 'static>(inner: R) -> io::Result<Box<dyn BufRead>> {
    let mut reader = BufReader::with_capacity(1 << 16, inner);
    let head = reader.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::with_capacity(
            1 << 16,
            flate2::bufread::MultiGzDecoder::new(reader),
        )))
    } else {
        Ok(Box::new(reader))
    }
}

pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>, IngestError> {
    let open_err = |source| IngestError::Open {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(open_err)?;
    decode_source(file).map_err(open_err)
}

/// Read every record of a file into memory. Intended for partition-sized
/// inputs.
pub fn read_records(
    path: &Path,
    schema: &Schema,
    options: StreamOptions,
) -> Result<(Vec<LogRecord>, CorpusStats), IngestError> {
    let mut stream = RecordStream::new(open_input(path)?, schema.clone(), options);
    let records = stream.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, stream.stats().clone()))
}

/// Write records as delimited text with a header line.
pub fn write_records<W: Write>(
    mut out: W,
    records: &[LogRecord],
    schema: &Schema,
) -> io::Result<()> {
    writeln!(out, "{}", schema.header_line())?;
    for rec in records {
        writeln!(out, "{}", format_line(rec, schema))?;
    }
    out.flush()
}

/// Error records of one host.
#[derive(Debug, Clone, PartialEq)]
pub struct HostPartition {
    pub host: String,
    pub records: Vec<LogRecord>,
    pub status_histogram: BTreeMap<u16, u64>,
}

impl HostPartition {
    pub fn new(host: impl Into<String>, records: Vec<LogRecord>) -> HostPartition {
        let mut status_histogram = BTreeMap::new();
        for r in &records {
            *status_histogram.entry(r.statuscode).or_default() += 1;
        }
        HostPartition {
            host: host.into(),
            records,
            status_histogram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    BelowThreshold,
    NotAllowed,
}

/// A host left out of clustering, kept for manual review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedHost {
    pub host: String,
    pub count: u64,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default)]
pub struct PartitionOutcome {
    pub partitions: Vec<HostPartition>,
    pub excluded: Vec<ExcludedHost>,
}

/// Group records by host, keeping hosts with strictly more than `min_count`
/// records. With an allowlist, other hosts are excluded regardless of size.
/// Hosts are returned in lexicographic order; records keep their input order.
pub fn partition_by_host(
    records: impl IntoIterator<Item = LogRecord>,
    min_count: u64,
    allowlist: Option<&BTreeSet<String>>,
) -> PartitionOutcome {
    let mut groups: BTreeMap<String, Vec<LogRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry(rec.host.clone()).or_default().push(rec);
    }
    let mut outcome = PartitionOutcome::default();
    for (host, recs) in groups {
        let count = recs.len() as u64;
        let reason = if allowlist.is_some_and(|a| !a.contains(&host)) {
            Some(ExclusionReason::NotAllowed)
        } else if count <= min_count {
            Some(ExclusionReason::BelowThreshold)
        } else {
            None
        };
        match reason {
            Some(reason) => outcome.excluded.push(ExcludedHost {
                host,
                count,
                reason,
            }),
            None => outcome.partitions.push(HostPartition::new(host, recs)),
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRow {
    pub host: String,
    pub statuscode: u16,
    pub count: u64,
}

/// One row per (host, status code), sorted by host then code.
pub fn host_status_report(partitions: &[HostPartition]) -> Vec<StatusRow> {
    let mut rows: Vec<StatusRow> = partitions
        .iter()
        .flat_map(|p| {
            p.status_histogram
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(&code, &count)| StatusRow {
                    host: p.host.clone(),
                    statuscode: code,
                    count,
                })
        })
        .collect();
    rows.sort_by(|a, b| (&a.host, a.statuscode).cmp(&(&b.host, b.statuscode)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(status: u16, host: &str) -> LogRecord {
        let mut r = LogRecord::new(
            status,
            host,
            "GET",
            Utc.with_ymd_and_hms(2022, 3, 1, 12, 0, 0).unwrap(),
        )
        .unwrap();
        r.protocol = Some("HTTP/1.1".into());
        r.contentlength = Some(1024);
        r.timetoserv = Some(0.25);
        r.path = Some("/live/ch1/seg_001.ts".into());
        r.hit = HitStatus::Miss;
        r
    }

    #[test]
    fn parses_full_line() {
        let schema = Schema::default();
        let line = format_line(&sample(502, "h1"), &schema);
        assert_eq!(line.split('\t').count(), Field::ALL.len());
        let rec = parse_line(&line, &schema, 1).unwrap();
        assert_eq!(rec.statuscode, 502);
        assert_eq!(rec.method, "GET");
        assert_eq!(rec, sample(502, "h1"));
    }

    #[test]
    fn column_count_checked() {
        let schema = Schema::default();
        let line = format_line(&sample(502, "h1"), &schema);
        let short = line.rsplit_once('\t').unwrap().0;
        let err = parse_line(short, &schema, 7).unwrap_err();
        assert_eq!(err.line, 7);
        assert_eq!(
            err.reason,
            ParseReason::WrongColumnCount {
                expected: 28,
                found: 27
            }
        );
    }

    #[test]
    fn status_checked() {
        let schema = Schema::default();
        let line = format_line(&sample(502, "h1"), &schema);
        let bad = line.replacen("502", "abc", 1);
        assert!(matches!(
            parse_line(&bad, &schema, 1).unwrap_err().reason,
            ParseReason::NonIntegerStatus { .. }
        ));
        let bad = line.replacen("502", "99", 1);
        assert_eq!(
            parse_line(&bad, &schema, 1).unwrap_err().reason,
            ParseReason::StatusOutOfRange { value: 99 }
        );
    }

    #[test]
    fn dirty_optional_fields_become_missing() {
        let schema = Schema::default();
        let mut cols: Vec<String> = format_line(&sample(404, "h"), &schema)
            .split('\t')
            .map(String::from)
            .collect();
        cols[Field::ContentLength.index()] = "12kb".into();
        cols[Field::TimeToServ.index()] = "-3".into();
        cols[Field::Hit.index()] = "TCP_WEIRD".into();
        let rec = parse_line(&cols.join("\t"), &schema, 1).unwrap();
        assert_eq!(rec.contentlength, None);
        assert_eq!(rec.timetoserv, None);
        assert_eq!(rec.hit, HitStatus::Missing);
    }

    #[test]
    fn required_fields_enforced() {
        let schema = Schema::default();
        let mut cols: Vec<String> = format_line(&sample(404, "h"), &schema)
            .split('\t')
            .map(String::from)
            .collect();
        cols[Field::Host.index()] = "-".into();
        assert_eq!(
            parse_line(&cols.join("\t"), &schema, 1).unwrap_err().reason,
            ParseReason::MissingRequired { field: Field::Host }
        );
    }

    #[test]
    fn epoch_timestamps() {
        let t = parse_timestamp("1646136000.5").unwrap();
        assert_eq!(t.timestamp(), 1646136000);
        assert_eq!(t.timestamp_subsec_millis(), 500);
        assert!(parse_timestamp("yesterday").is_none());
        assert!(parse_timestamp("2022-03-01T12:00:00+01:00").is_some());
    }

    #[test]
    fn escapes_survive() {
        let schema = Schema::default();
        let mut rec = sample(404, "h");
        rec.path = Some("/a\tb\\c\nd".into());
        rec.devicebrand = Some("-".into());
        let line = format_line(&rec, &schema);
        assert!(!line.contains('\n'));
        assert_eq!(parse_line(&line, &schema, 1).unwrap(), rec);
    }

    #[test]
    fn stream_filters_errors() {
        let schema = Schema::default();
        let mut text = schema.header_line() + "\n";
        for code in [200, 404, 502, 302] {
            text += &format_line(&sample(code, "h"), &schema);
            text += "\n";
        }
        text += "garbage line\n";
        let mut stream = stream_errors(text.as_bytes(), &schema);
        let codes: Vec<u16> = stream.by_ref().map(|r| r.unwrap().statuscode).collect();
        assert_eq!(codes, vec![404, 502]);
        let stats = stream.stats();
        assert_eq!(stats.total_lines, 5);
        assert_eq!(stats.parsed, 4);
        assert_eq!(stats.rejected, 1);
        assert_eq!(stats.error_lines, 2);
        assert_eq!(stream.sample_failures()[0].line, 6);
    }

    #[test]
    fn empty_stream() {
        let mut stream = stream_errors(&b""[..], &Schema::default());
        assert!(stream.next().is_none());
        assert_eq!(stream.stats(), &CorpusStats::default());
    }

    #[test]
    fn header_reorders_columns() {
        let schema = Schema::default();
        let mut cols = Field::ALL.to_vec();
        cols.reverse();
        let reversed = Schema::new(cols, '\t', "-").unwrap();
        let rec = sample(503, "x");
        let text = format!(
            "{}\n{}\n",
            reversed.header_line(),
            format_line(&rec, &reversed)
        );
        let got: Vec<_> = stream_errors(text.as_bytes(), &schema)
            .map(Result::unwrap)
            .collect();
        assert_eq!(got, vec![rec]);
    }

    #[test]
    fn jsonl_stream() {
        let rec = sample(412, "h7");
        let text = format!("{}\n{{\"statuscode\": 200}}\nnot json\n", format_json_line(&rec));
        let mut stream = stream_errors(text.as_bytes(), &Schema::default());
        let got: Vec<_> = stream.by_ref().map(Result::unwrap).collect();
        assert_eq!(got, vec![rec]);
        assert_eq!(stream.stats().rejected, 2);
    }

    #[test]
    fn gzip_detected() {
        use flate2::write::GzEncoder;
        let schema = Schema::default();
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        writeln!(enc, "{}", format_line(&sample(404, "h"), &schema)).unwrap();
        let bytes = enc.finish().unwrap();
        let reader = decode_source(io::Cursor::new(bytes)).unwrap();
        assert_eq!(stream_errors(reader, &schema).count(), 1);
    }

    #[test]
    fn long_lines_rejected_not_buffered() {
        let schema = Schema::default();
        let good = format_line(&sample(404, "h"), &schema);
        let text = format!("{}\n{}\n{}\n", good, "x".repeat(5000), good);
        let options = StreamOptions {
            max_line_bytes: 1000,
            ..Default::default()
        };
        let mut stream = RecordStream::new(text.as_bytes(), schema, options);
        assert_eq!(stream.by_ref().count(), 2);
        assert_eq!(stream.stats().rejected, 1);
        assert_eq!(
            stream.sample_failures()[0].reason,
            ParseReason::LineTooLong { limit: 1000 }
        );
    }

    #[test]
    fn parallel_matches_sequential() {
        let schema = Schema::default();
        let mut text = String::new();
        for i in 0..10_000u32 {
            let code = [200u16, 404, 502, 412][(i % 4) as usize];
            text += &format_line(&sample(code, &format!("h{}", i % 3)), &schema);
            text += "\n";
            if i % 997 == 0 {
                text += "bad\n";
            }
        }
        let run = |parallel| {
            let options = StreamOptions {
                parallel,
                ..Default::default()
            };
            let mut s = RecordStream::new(text.as_bytes(), schema.clone(), options);
            let recs: Vec<_> = s.by_ref().map(Result::unwrap).collect();
            (recs, s.stats().clone())
        };
        assert_eq!(run(false), run(true));
    }

    #[test]
    fn truncated_io_reports_partial_stats() {
        struct Failing(Vec<u8>, bool);
        impl Read for Failing {
            fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
                if self.1 {
                    return Err(io::Error::other("disk on fire"));
                }
                self.1 = true;
                let n = self.0.len().min(buf.len());
                buf[..n].copy_from_slice(&self.0[..n]);
                Ok(n)
            }
        }
        let schema = Schema::default();
        let text = format!("{}\n", format_line(&sample(404, "h"), &schema));
        let reader = BufReader::new(Failing(text.into_bytes(), false));
        let results: Vec<_> = stream_errors(reader, &schema).collect();
        let last = results.last().unwrap();
        match last {
            Err(IngestError::Io { stats, .. }) => assert_eq!(stats.parsed, 0),
            other => panic!("expected I/O error, got {other:?}"),
        }
    }

    #[test]
    fn threshold_is_strict() {
        let mut recs = Vec::new();
        for (host, n) in [("A", 1500), ("B", 999), ("C", 1000)] {
            recs.extend((0..n).map(|_| sample(404, host)));
        }
        let out = partition_by_host(recs, DEFAULT_MIN_HOST_COUNT, None);
        assert_eq!(
            out.partitions.iter().map(|p| p.host.as_str()).collect::<Vec<_>>(),
            vec!["A"]
        );
        let excluded: Vec<_> = out.excluded.iter().map(|e| (e.host.as_str(), e.count)).collect();
        assert_eq!(excluded, vec![("B", 999), ("C", 1000)]);
    }

    #[test]
    fn reference_host_sizes_retained() {
        for n in [13886, 31492] {
            let out = partition_by_host((0..n).map(|_| sample(400, "h")), 1000, None);
            assert_eq!(out.partitions.len(), 1);
            assert_eq!(out.partitions[0].records.len(), n);
        }
    }

    #[test]
    fn allowlist_excludes() {
        let recs: Vec<_> = (0..1200).map(|i| sample(404, if i % 2 == 0 { "a" } else { "b" })).collect();
        let allow: BTreeSet<String> = ["a".to_string()].into();
        let out = partition_by_host(recs, 100, Some(&allow));
        assert_eq!(out.partitions.len(), 1);
        assert_eq!(out.excluded[0].reason, ExclusionReason::NotAllowed);
    }

    #[test]
    fn status_report_rows() {
        let mut recs = Vec::new();
        recs.extend((0..1197).map(|_| sample(403, "host3")));
        recs.extend((0..40).map(|_| sample(405, "host3")));
        recs.push(sample(500, "solo"));
        let parts = vec![
            HostPartition::new("solo", vec![sample(500, "solo")]),
            HostPartition::new("host3", recs[..1237].to_vec()),
        ];
        let rows: Vec<_> = host_status_report(&parts)
            .into_iter()
            .map(|r| (r.host, r.statuscode, r.count))
            .collect();
        assert_eq!(
            rows,
            vec![
                ("host3".to_string(), 403, 1197),
                ("host3".to_string(), 405, 40),
                ("solo".to_string(), 500, 1)
            ]
        );
    }

    #[test]
    fn schema_toml() {
        let s = Schema::from_toml("delimiter = \",\"\nmissing_token = \"NA\"\n").unwrap();
        assert_eq!(s.delimiter, ',');
        assert_eq!(s.columns, Field::ALL.to_vec());
        assert!(Schema::from_toml("delimiter = \"ab\"").is_err());
        assert!(Schema::from_toml("columns = [\"statuscode\"]").is_err());
        assert!(Schema::from_toml("delimiter = \",\"\nmissing_token = \"a,b\"").is_err());
        assert!(Schema::from_toml("nonsense = 1").is_err());
    }

    fn opt_text() -> impl Strategy<Value = Option<String>> {
        proptest::option::of("[ -~\t\n\\\\é]{1,12}")
    }

    prop_compose! {
        fn arb_record()(
            status in 100u16..600,
            host in "[a-z0-9]{1,6}",
            method in "[A-Z]{3,6}",
            secs in 0i64..4_000_000_000,
            nanos in 0u32..1_000_000_000,
            texts in proptest::collection::vec(opt_text(), 19),
            length in proptest::option::of(any::<u64>()),
            tfb in proptest::option::of(0.0f64..1e6),
            tts in proptest::option::of(0.0f64..1e6),
            coords in proptest::option::of((-180.0f64..180.0, -90.0f64..90.0)),
            hit in prop_oneof![Just(HitStatus::Hit), Just(HitStatus::Miss), Just(HitStatus::Missing)],
        ) -> LogRecord {
            let ts = Utc.timestamp_opt(secs, nanos).unwrap();
            let mut r = LogRecord::new(status, host, method, ts).unwrap();
            let text_fields: Vec<Field> = Field::ALL
                .into_iter()
                .filter(|f| r.clone().text_slot_mut(*f).is_some())
                .collect();
            for (f, t) in text_fields.into_iter().zip(texts) {
                *r.text_slot_mut(f).unwrap() = t;
            }
            r.contentlength = length;
            r.timefirstbyte = tfb;
            r.timetoserv = tts;
            r.coordinates = coords.map(|(longitude, latitude)| Coordinates { longitude, latitude });
            r.hit = hit;
            r
        }
    }

    proptest! {
        #[test]
        fn delimited_round_trip(rec in arb_record(), comma in any::<bool>()) {
            let schema = if comma {
                Schema::new(Field::ALL.to_vec(), ',', "NA").unwrap()
            } else {
                Schema::default()
            };
            let line = format_line(&rec, &schema);
            prop_assert_eq!(parse_line(&line, &schema, 1).unwrap(), rec);
        }

        #[test]
        fn json_round_trip(rec in arb_record()) {
            let line = format_json_line(&rec);
            prop_assert_eq!(parse_json_line(&line, 1).unwrap(), rec);
        }

        #[test]
        fn parse_never_panics(line in "\\PC{0,300}") {
            let _ = parse_line(&line, &Schema::default(), 1);
            let _ = parse_json_line(&line, 1);
        }
    }
}
