//! File formats: call CSV, thresholds JSON, report CSVs, run metadata.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{GroupId, LossBreakdown, RawRecord, Rejection, RejectReason, ScoredCall, Thresholds};
use crate::error::{Error, Result};
use crate::experiment::{BinCell, ConditionReport, SkipRecord};
use crate::mapping::{map_proba_with, BoundaryMode};
use crate::strategy::Provenance;

pub const CALL_COLUMNS: [&str; 5] = ["call_id", "group_id", "date", "proba", "survey_csat"];
pub const THRESHOLDS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CallsRead {
    pub calls: Vec<ScoredCall<f64>>,
    pub rejections: Vec<Rejection>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn read_calls(path: &Path) -> Result<CallsRead> {
    read_calls_from(open(path)?)
}

/// Valid rows in file order; malformed rows are collected with their 1-based row number.
pub fn read_calls_from<R: Read>(reader: R) -> Result<CallsRead> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    check_columns(&headers)?;

    let mut calls = Vec::new();
    let mut rejections = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        match parse_record(&record?, &headers, row) {
            Ok(call) => calls.push(call),
            Err(rejection) => rejections.push(rejection),
        }
    }
    Ok(CallsRead { calls, rejections })
}

fn check_columns(headers: &csv::StringRecord) -> Result<()> {
    let missing: Vec<&str> = CALL_COLUMNS
        .iter()
        .copied()
        .filter(|col| !headers.iter().any(|h| h.trim() == *col))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing required column(s): {}", missing.join(", "))));
    }
    Ok(())
}

fn parse_record(
    record: &csv::StringRecord,
    headers: &csv::StringRecord,
    row: usize,
) -> std::result::Result<ScoredCall<f64>, Rejection> {
    if record.len() != headers.len() {
        return Err(Rejection {
            row,
            reason: RejectReason::Malformed(format!("expected {} fields, found {}", headers.len(), record.len())),
        });
    }
    let raw: RawRecord = record.deserialize(Some(headers)).map_err(|e| Rejection {
        row,
        reason: RejectReason::Malformed(e.to_string()),
    })?;
    crate::domain::validate_call(&raw, row)
}

pub fn write_calls(path: &Path, calls: &[ScoredCall<f64>]) -> Result<()> {
    let mut w = create(path)?;
    write_calls_to(&mut w, calls)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_calls_to<W: Write>(writer: W, calls: &[ScoredCall<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CALL_COLUMNS)?;
    for call in calls {
        wtr.write_record([
            call.call_id.as_str(),
            call.group_id.as_str(),
            &call.date.format("%Y-%m-%d").to_string(),
            // shortest representation that parses back to the same f64
            &call.proba().to_string(),
            &call.survey_csat.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One set of thresholds, as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub schema: u32,
    pub t12: f64,
    pub t23: f64,
    pub t34: f64,
    pub t45: f64,
    pub fitted_on: String,
    pub loss: LossBreakdown<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub warm_start_selected: bool,
}

impl ThresholdsFile {
    pub fn thresholds(&self) -> Result<Thresholds<f64>> {
        Thresholds::new(self.t12, self.t23, self.t34, self.t45)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub t12: f64,
    pub t23: f64,
    pub t34: f64,
    pub t45: f64,
    pub provenance: Provenance,
}

impl GroupEntry {
    pub fn new(th: &Thresholds<f64>, provenance: Provenance) -> Self {
        let [t12, t23, t34, t45] = th.as_array();
        GroupEntry {
            t12,
            t23,
            t34,
            t45,
            provenance,
        }
    }

    pub fn thresholds(&self) -> Result<Thresholds<f64>> {
        Thresholds::new(self.t12, self.t23, self.t34, self.t45)
    }
}

/// Per-group thresholds, as written by `fit --mode per_group|hybrid`.
/// `default` applies to groups not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholdsFile {
    pub schema: u32,
    pub mode: String,
    pub default: GroupEntry,
    pub groups: BTreeMap<String, GroupEntry>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdsDoc {
    Single(ThresholdsFile),
    PerGroup(GroupThresholdsFile),
}

/// Resolved thresholds lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    default: Thresholds<f64>,
    groups: BTreeMap<GroupId, Thresholds<f64>>,
}

impl ThresholdTable {
    pub fn uniform(th: Thresholds<f64>) -> Self {
        ThresholdTable {
            default: th,
            groups: BTreeMap::new(),
        }
    }

    pub fn get(&self, group: &GroupId) -> &Thresholds<f64> {
        self.groups.get(group).unwrap_or(&self.default)
    }

    pub fn is_per_group(&self) -> bool {
        !self.groups.is_empty()
    }
}

impl ThresholdsDoc {
    pub fn table(&self) -> Result<ThresholdTable> {
        match self {
            ThresholdsDoc::Single(f) => Ok(ThresholdTable::uniform(f.thresholds()?)),
            ThresholdsDoc::PerGroup(f) => Ok(ThresholdTable {
                default: f.default.thresholds()?,
                groups: f
                    .groups
                    .iter()
                    .map(|(k, v)| Ok((GroupId::new(k), v.thresholds()?)))
                    .collect::<Result<_>>()?,
            }),
        }
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdsDoc> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    parse_thresholds(&text)
}

pub fn parse_thresholds(text: &str) -> Result<ThresholdsDoc> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let schema = value.get("schema").and_then(|v| v.as_u64());
    if schema != Some(u64::from(THRESHOLDS_SCHEMA)) {
        return Err(Error::Schema(format!(
            "unsupported thresholds schema {schema:?}, expected {THRESHOLDS_SCHEMA}"
        )));
    }
    let doc = if value.get("groups").is_some() {
        ThresholdsDoc::PerGroup(serde_json::from_value(value)?)
    } else {
        ThresholdsDoc::Single(serde_json::from_value(value)?)
    };
    doc.table()?;
    Ok(doc)
}

/// Copies every input row verbatim and appends a `pcsat` column.
///
/// Fails without writing anything if any row does not validate, so the output
/// always has exactly one row per input row.
pub fn apply_thresholds<R: Read, W: Write>(
    input: R,
    output: W,
    table: &ThresholdTable,
    boundary: BoundaryMode,
) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;

    check_columns(&headers)?;
    let calls: Vec<ScoredCall<f64>> = records
        .iter()
        .enumerate()
        .map(|(i, record)| parse_record(record, &headers, i + 1).map_err(Error::InvalidRecord))
        .collect::<Result<_>>()?;

    let mut wtr = csv::Writer::from_writer(output);
    let mut out_headers = headers.clone();
    out_headers.push_field("pcsat");
    wtr.write_record(&out_headers)?;
    for (record, call) in records.iter().zip(&calls) {
        let level = map_proba_with(call.proba(), table.get(&call.group_id), boundary);
        let mut row = record.clone();
        row.push_field(&level.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(records.len())
}

pub fn write_cells(path: &Path, reports: &[ConditionReport<f64>]) -> Result<()> {
    let mut w = create(path)?;
    write_cells_to(&mut w, reports)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CELL_COLUMNS: [&str; 11] = [
    "trial",
    "group_id",
    "condition",
    "bin",
    "n_train_responses",
    "n_test_responses",
    "delta_pct_satisfied",
    "delta_mean_signed",
    "delta_mean_abs",
    "mse",
    "loss_total",
];

pub fn write_cells_to<W: Write>(writer: W, reports: &[ConditionReport<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CELL_COLUMNS)?;
    for r in reports {
        wtr.write_record([
            r.trial_index.to_string(),
            r.group_id.to_string(),
            r.condition.to_string(),
            r.bin.clone(),
            r.n_train_responses.to_string(),
            r.n_test_responses.to_string(),
            r.metrics.delta_pct_satisfied.to_string(),
            r.delta_mean_signed.to_string(),
            r.metrics.delta_mean.to_string(),
            r.metrics.mse.to_string(),
            r.metrics.total.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_bins(path: &Path, cells: &[BinCell<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record([
        "bin",
        "condition",
        "n",
        "delta_pct_satisfied",
        "delta_mean_signed",
        "delta_mean_abs",
        "mse",
        "loss_total",
    ])?;
    for c in cells {
        wtr.write_record([
            c.bin.clone(),
            c.condition.to_string(),
            c.n.to_string(),
            c.delta_pct_satisfied.to_string(),
            c.delta_mean_signed.to_string(),
            c.delta_mean_abs.to_string(),
            c.mse.to_string(),
            c.loss_total.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn write_skips(path: &Path, skips: &[SkipRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["trial", "group_id", "reason"])?;
    for s in skips {
        wtr.write_record([s.trial_index.to_string(), s.group_id.to_string(), s.reason.clone()])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut reader = open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to every CLI output.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub rejected_rows: usize,
    pub notes: Vec<String>,
}

impl RunMetadata {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunMetadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            rejected_rows: 0,
            notes: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }
}

/// Parses flat `key = value` text. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::InvalidConfig(format!("line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(map)
}
