// SPDX-License-Identifier: MIT OR Apache-2.0

//! Series parsing, z-normalization, and JSON result documents.
//!
//! Floats in every JSON document are written with 17 significant digits so
//! that reading a document back reproduces the exact `f64` bits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::{StatsResult, SummaryOptions};
use crate::series::{Dataset, TimeSeries};
use crate::summarizer::{SummarizedSeries, SummaryMethod, DEFAULT_CHUNKS, DEFAULT_COMPONENTS};
use crate::tokenizer::{ScaleStats, Segmentation, TokenizerConfig};

const FLAT_CHANNEL_STDEV: f64 = 1e-12;

/// Per-channel z-normalization with population statistics.
/// Channels with stdev below `1e-12` become all zeros.
pub fn znormalize(series: &TimeSeries) -> TimeSeries {
    let dim = series.dim();
    let n = series.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in series.values().chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in series.values().chunks_exact(dim) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let stdev: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();

    let values = series
        .values()
        .chunks_exact(dim)
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&stdev)
                .map(|((x, m), s)| {
                    if *s < FLAT_CHANNEL_STDEV {
                        0.0
                    } else {
                        (x - m) / s
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    series
        .with_values(values)
        .expect("normalized values of a finite series are finite")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    Comma,
}

impl Delimiter {
    fn as_char(self) -> char {
        match self {
            Self::Tab => '\t',
            Self::Comma => ',',
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" | "\\t" | "\t" => Ok(Self::Tab),
            "comma" | "," => Ok(Self::Comma),
            other => Err(Error::invalid(format!("unknown delimiter `{other}`"))),
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines as `(1-based line number, trimmed fields)`.
fn records(text: &str, delimiter: char) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(move |(idx, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            None
        } else {
            Some((idx + 1, line.split(delimiter).map(str::trim).collect()))
        }
    })
}

fn parse_value(field: &str, source: &str, line: usize, column: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::parse(
            source,
            line,
            format!("non-finite value in column {column}"),
        )),
        Err(_) => Err(Error::parse(
            source,
            line,
            format!("column {column}: `{field}` is not a number"),
        )),
    }
}

/// Parses `label<delim>v1<delim>v2…` lines, one univariate series per line.
pub fn parse_labeled_rows(path: impl AsRef<Path>, delimiter: Delimiter) -> Result<Dataset> {
    let path = path.as_ref();
    let name = file_name(path);
    parse_labeled_rows_str(&read_text(path)?, &name, delimiter)
}

/// [`parse_labeled_rows`] over in-memory text; `source` names the input in ids and errors.
pub fn parse_labeled_rows_str(text: &str, source: &str, delimiter: Delimiter) -> Result<Dataset> {
    let mut series = Vec::new();
    for (line, record) in records(text, delimiter.as_char()) {
        let label = record[0].to_string();
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, f)| !f.is_empty())
            .map(|(col, f)| parse_value(f, source, line, col))
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(source, line, "row has a label but no values"));
        }
        let ts = TimeSeries::univariate(format!("{source}:{line}"), values)
            .map_err(|e| Error::parse(source, line, e.to_string()))?
            .with_label(label);
        series.push(ts);
    }
    Dataset::new(source, series)
}

/// Parses a numeric CSV (rows = timesteps, columns = channels) with an optional header row.
pub fn parse_matrix_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name(path));
    parse_matrix_csv_str(&read_text(path)?, &id)
}

pub fn parse_matrix_csv_str(text: &str, id: &str) -> Result<TimeSeries> {
    let mut values = Vec::new();
    let mut width = None;
    let mut first = true;
    for (line, record) in records(text, ',') {
        if first {
            first = false;
            if record.iter().any(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::parse(
                    id,
                    line,
                    format!("ragged row: {} columns, expected {w}", record.len()),
                ))
            }
            Some(_) => {}
        }
        for (col, field) in record.iter().enumerate() {
            values.push(parse_value(field, id, line, col)?);
        }
    }
    let Some(dim) = width else {
        return Err(Error::EmptyDataset(id.to_string()));
    };
    TimeSeries::new(id, values, dim)
}

/// Reads a manifest of `path,label` lines; relative paths resolve against the manifest's directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let source = file_name(path);
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.clone());
    let mut series = Vec::new();
    for (idx, raw) in read_text(path)?.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (entry, label) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(&source, idx + 1, "expected `path,label`"))?;
        let entry_path = base.join(entry.trim());
        series.push(parse_matrix_csv(&entry_path)?.with_label(label.trim()));
    }
    Dataset::new(name, series)
}

/// Writes a series as a header-less numeric CSV.
pub fn write_matrix_csv(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in series.values().chunks_exact(series.dim()) {
        let fields: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 17-significant-digit scientific notation; parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct ExactFloatFormatter;

impl serde_json::ser::Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes `value` as compact JSON with exact floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Schema(format!("cannot serialize: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}

fn require_fields(value: &Value, fields: &[&str]) -> Result<()> {
    let Some(obj) = value.as_object() else {
        return Err(Error::Schema("expected a JSON object".into()));
    };
    match fields.iter().find(|f| !obj.contains_key(**f)) {
        Some(missing) => Err(Error::Schema(format!("missing field `{missing}`"))),
        None => Ok(()),
    }
}

fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))
}

/// Split points of one series, as emitted by `detect` and `gen`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitsDocument {
    pub id: String,
    pub length: usize,
    pub splits: Vec<usize>,
}

impl SplitsDocument {
    pub fn from_segmentation(id: impl Into<String>, seg: &Segmentation) -> Self {
        Self {
            id: id.into(),
            length: seg.length(),
            splits: seg.splits().to_vec(),
        }
    }
}

/// Reads one splits document or an array of them.
pub fn read_splits_str(text: &str) -> Result<Vec<SplitsDocument>> {
    let value = parse_json(text)?;
    let items = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    items
        .into_iter()
        .map(|item| {
            require_fields(&item, &["splits"])?;
            let splits: Vec<usize> = from_value(item["splits"].clone())?;
            let id = item
                .get("id")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let length = match item.get("length") {
                Some(v) => from_value(v.clone())?,
                None => splits.last().map_or(0, |s| s + 1),
            };
            Ok(SplitsDocument { id, length, splits })
        })
        .collect()
}

pub fn read_splits(path: impl AsRef<Path>) -> Result<Vec<SplitsDocument>> {
    read_splits_str(&read_text(path.as_ref())?)
}

#[derive(Serialize, Deserialize)]
struct ResultDocument {
    id: String,
    config: TokenizerConfig,
    splits: Vec<usize>,
    tokens: Vec<Vec<f64>>,
    provenance: Vec<[usize; 2]>,
    method: SummaryMethod,
    compression_ratio: f64,
    scale_stats: Vec<ScaleStats>,
    length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_components")]
    components: usize,
    #[serde(default = "default_chunks")]
    chunks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variances: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

fn default_components() -> usize {
    DEFAULT_COMPONENTS
}

fn default_chunks() -> usize {
    DEFAULT_CHUNKS
}

const RESULT_FIELDS: [&str; 9] = [
    "id",
    "config",
    "splits",
    "tokens",
    "provenance",
    "method",
    "compression_ratio",
    "scale_stats",
    "length",
];

impl From<&StatsResult> for ResultDocument {
    fn from(r: &StatsResult) -> Self {
        let dim = r.summary.dim;
        Self {
            id: r.input_id.clone(),
            config: r.config.clone(),
            splits: r.segmentation.splits().to_vec(),
            tokens: r.summary.tokens().map(<[f64]>::to_vec).collect(),
            provenance: r
                .summary
                .provenance
                .iter()
                .map(|p| [p.start, p.end])
                .collect(),
            method: r.summary.method,
            compression_ratio: r.compression_ratio,
            scale_stats: r.scale_stats.clone(),
            length: r.segmentation.length(),
            label: r.label.clone(),
            seed: r.options.seed,
            components: r.options.components,
            chunks: r.options.chunks,
            variances: r
                .summary
                .variances
                .as_ref()
                .map(|v| v.chunks_exact(dim).map(<[f64]>::to_vec).collect()),
            weights: r.summary.weights.clone(),
        }
    }
}

impl TryFrom<ResultDocument> for StatsResult {
    type Error = Error;

    fn try_from(doc: ResultDocument) -> Result<Self> {
        let dim = doc.tokens.first().map_or(0, Vec::len);
        if dim == 0 || doc.tokens.iter().any(|t| t.len() != dim) {
            return Err(Error::Schema("`tokens` must be a non-empty matrix".into()));
        }
        if doc.provenance.len() != doc.tokens.len() {
            return Err(Error::Schema(
                "`provenance` and `tokens` lengths differ".into(),
            ));
        }
        let segmentation = Segmentation::new(doc.length, doc.splits)
            .map_err(|e| Error::Schema(format!("`splits`: {e}")))?;
        let variances = match doc.variances {
            Some(v) if v.len() != doc.tokens.len() || v.iter().any(|r| r.len() != dim) => {
                return Err(Error::Schema(
                    "`variances` shape does not match `tokens`".into(),
                ))
            }
            v => v.map(|rows| rows.concat()),
        };
        Ok(StatsResult {
            input_id: doc.id,
            label: doc.label,
            config: doc.config,
            options: SummaryOptions {
                method: doc.method,
                components: doc.components,
                chunks: doc.chunks,
                seed: doc.seed,
            },
            segmentation,
            summary: SummarizedSeries {
                dim,
                tokens: doc.tokens.concat(),
                provenance: doc.provenance.iter().map(|p| p[0]..p[1]).collect(),
                method: doc.method,
                variances,
                weights: doc.weights,
            },
            scale_stats: doc.scale_stats,
            compression_ratio: doc.compression_ratio,
        })
    }
}

pub fn result_to_json(result: &StatsResult) -> Result<String> {
    to_json_string(&ResultDocument::from(result))
}

pub fn results_to_json(results: &[StatsResult]) -> Result<String> {
    let docs: Vec<ResultDocument> = results.iter().map(ResultDocument::from).collect();
    to_json_string(&docs)
}

pub fn result_from_json(text: &str) -> Result<StatsResult> {
    let value = parse_json(text)?;
    require_fields(&value, &RESULT_FIELDS)?;
    from_value::<ResultDocument>(value)?.try_into()
}

pub fn write_result(path: impl AsRef<Path>, result: &StatsResult) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, result_to_json(result)?).map_err(|e| Error::io(path, e))
}

pub fn read_result(path: impl AsRef<Path>) -> Result<StatsResult> {
    result_from_json(&read_text(path.as_ref())?)
}
