//! Activity-table ingestion: CSV loading, IC50 labeling, deduplication and
//! validation against the parser and an embedding table.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::embedding::EmbeddingTable;
use crate::smiles::parse;

/// Activity threshold in nM; values at or below it are active.
pub const DEFAULT_IC50_THRESHOLD_NM: f64 = 200.0;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: unit {unit:?} is not nM; convert values before ingest")]
    Unit { line: usize, unit: String },
    #[error("record {molecule_id}: no IC50 value")]
    MissingValue { molecule_id: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    /// `molecule_id,smiles,ic50_nm`
    Ic50,
    /// `molecule_id,smiles,label`
    Labeled,
}

impl IngestMode {
    fn value_column(self) -> &'static str {
        match self {
            IngestMode::Ic50 => "ic50_nm",
            IngestMode::Labeled => "label",
        }
    }
}

impl std::str::FromStr for IngestMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ic50" => Ok(IngestMode::Ic50),
            "labeled" => Ok(IngestMode::Labeled),
            other => Err(format!(
                "unknown ingest mode {other:?} (expected ic50 or labeled)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based line in the source file (the header is line 1).
    pub line: usize,
    pub molecule_id: String,
    pub smiles: String,
    pub ic50_nm: Option<f64>,
    pub label: Option<usize>,
}

/// One row that did not make it into the dataset, or was kept but needs
/// attention.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub molecule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledRecord {
    pub molecule_id: String,
    pub smiles: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    mode: IngestMode,
) -> Result<(Vec<RawRecord>, Vec<Rejection>), PipelineError> {
    read_dataset(File::open(path)?, mode)
}

/// Parses a CSV activity table. Malformed rows land in the rejection list
/// with their line number; only structural problems abort.
pub fn read_dataset<R: Read>(
    reader: R,
    mode: IngestMode,
) -> Result<(Vec<RawRecord>, Vec<Rejection>), PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize, PipelineError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::MissingColumn(name.to_string()))
    };
    let id_col = column("molecule_id")?;
    let smiles_col = column("smiles")?;
    let value_col = column(mode.value_column())?;
    let unit_col = headers.iter().position(|h| h == "unit" || h == "units");

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let molecule_id = field(id_col).to_string();
        let mut reject = |reason: String| {
            rejections.push(Rejection {
                line,
                molecule_id: molecule_id.clone(),
                reason,
            })
        };
        if row.len() != headers.len() {
            reject(format!(
                "expected {} fields, found {}",
                headers.len(),
                row.len()
            ));
            continue;
        }
        if let Some(u) = unit_col {
            let unit = field(u);
            if unit != "nM" {
                return Err(PipelineError::Unit {
                    line,
                    unit: unit.to_string(),
                });
            }
        }
        if molecule_id.is_empty() {
            reject("empty molecule_id".into());
            continue;
        }
        let smiles = field(smiles_col).to_string();
        if smiles.is_empty() {
            reject("empty smiles".into());
            continue;
        }
        let raw_value = field(value_col);
        let mut record = RawRecord {
            line,
            molecule_id: molecule_id.clone(),
            smiles,
            ic50_nm: None,
            label: None,
        };
        match mode {
            IngestMode::Ic50 => match raw_value.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => record.ic50_nm = Some(v),
                Ok(_) => {
                    reject("non-positive ic50".into());
                    continue;
                }
                Err(_) => {
                    reject("unparseable ic50".into());
                    continue;
                }
            },
            IngestMode::Labeled => match raw_value {
                "0" => record.label = Some(0),
                "1" => record.label = Some(1),
                _ => {
                    reject(format!("invalid label {raw_value:?}"));
                    continue;
                }
            },
        }
        records.push(record);
    }
    Ok((records, rejections))
}

/// 1 when `ic50_nm <= threshold_nm`, else 0.
pub fn label_ic50(record: &RawRecord, threshold_nm: f64) -> Result<usize, PipelineError> {
    match record.ic50_nm {
        Some(v) => Ok(usize::from(v <= threshold_nm)),
        None => Err(PipelineError::MissingValue {
            molecule_id: record.molecule_id.clone(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupReport {
    /// `(index of removed record in the input, index of the kept original)`.
    pub removed: Vec<(usize, usize)>,
    /// SMILES strings that appear with both labels.
    pub conflicts: Vec<String>,
}

/// Keeps the first record of each `(smiles, label)` pair, preserving input
/// order. Same SMILES with different labels are all kept and flagged.
pub fn dedup_records(records: &[LabeledRecord]) -> (Vec<LabeledRecord>, DedupReport) {
    let mut first: HashMap<(&str, usize), usize> = HashMap::new();
    let mut labels_seen: HashMap<&str, [bool; 2]> = HashMap::new();
    let mut kept = Vec::new();
    let mut report = DedupReport::default();
    for (i, r) in records.iter().enumerate() {
        let seen = labels_seen.entry(r.smiles.as_str()).or_default();
        if r.label < 2 {
            let before = seen[0] || seen[1];
            seen[r.label] = true;
            if before && seen[0] && seen[1] && !report.conflicts.contains(&r.smiles) {
                report.conflicts.push(r.smiles.clone());
            }
        }
        match first.get(&(r.smiles.as_str(), r.label)) {
            Some(&orig) => report.removed.push((i, orig)),
            None => {
                first.insert((r.smiles.as_str(), r.label), i);
                kept.push(r.clone());
            }
        }
    }
    (kept, report)
}

/// Removes every record whose SMILES is listed as conflicting.
pub fn drop_conflicts(records: Vec<LabeledRecord>, conflicts: &[String]) -> Vec<LabeledRecord> {
    records
        .into_iter()
        .filter(|r| !conflicts.contains(&r.smiles))
        .collect()
}

/// Keeps the fragment with the most heavy atoms (the first on ties). Falls
/// back to the input when fragments cannot be split textually, e.g. when a
/// ring bond crosses a `.`.
pub fn strip_salts(smiles: &str) -> String {
    let smiles = smiles.trim();
    if !smiles.contains('.') {
        return smiles.to_string();
    }
    let Ok(whole) = parse(smiles) else {
        return smiles.to_string();
    };
    let mut best: Option<(&str, usize)> = None;
    let mut total = 0;
    for piece in smiles.split('.') {
        let Ok(g) = parse(piece) else {
            return smiles.to_string();
        };
        total += g.atoms.len();
        if best.is_none_or(|(_, n)| g.atoms.len() > n) {
            best = Some((piece, g.atoms.len()));
        }
    }
    if total != whole.atoms.len() {
        return smiles.to_string();
    }
    best.map_or_else(|| smiles.to_string(), |(s, _)| s.to_string())
}

/// A record the model cannot consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub index: usize,
    pub molecule_id: String,
    pub smiles: String,
    pub reason: String,
}

/// Every record that fails to parse or (when a table is given) lacks an
/// embedding. All failures are listed, not just the first.
pub fn validate_records(
    records: &[LabeledRecord],
    table: Option<&EmbeddingTable>,
) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for (index, r) in records.iter().enumerate() {
        let mut issue = |reason: String| {
            issues.push(ValidationIssue {
                index,
                molecule_id: r.molecule_id.clone(),
                smiles: r.smiles.clone(),
                reason,
            })
        };
        if let Err(e) = parse(&r.smiles) {
            issue(format!("unparseable smiles: {e}"));
        }
        if let Some(t) = table {
            if !t.contains(&r.smiles) {
                issue(format!("missing embedding key {:?}", r.smiles.trim()));
            }
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub mode: IngestMode,
    pub threshold_nm: f64,
    pub strip_salts: bool,
    pub drop_conflicts: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            mode: IngestMode::Ic50,
            threshold_nm: DEFAULT_IC50_THRESHOLD_NM,
            strip_salts: false,
            drop_conflicts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOutcome {
    pub dataset: LabeledDataset,
    /// Rejected rows in line order, plus kept-but-conflicting rows.
    pub report: Vec<Rejection>,
}

/// Load, label, optionally strip salts, drop unparseable rows, dedup.
pub fn prepare(
    path: impl AsRef<Path>,
    options: &PrepareOptions,
) -> Result<PrepareOutcome, PipelineError> {
    let path = path.as_ref();
    let (raw, mut report) = load_dataset(path, options.mode)?;
    let mut lines = Vec::new();
    let mut labeled = Vec::new();
    for r in &raw {
        let label = match options.mode {
            IngestMode::Ic50 => label_ic50(r, options.threshold_nm)?,
            IngestMode::Labeled => r.label.expect("labeled mode sets label"),
        };
        let smiles = if options.strip_salts {
            strip_salts(&r.smiles)
        } else {
            r.smiles.clone()
        };
        if let Err(e) = parse(&smiles) {
            report.push(Rejection {
                line: r.line,
                molecule_id: r.molecule_id.clone(),
                reason: format!("unparseable smiles: {e}"),
            });
            continue;
        }
        lines.push(r.line);
        labeled.push(LabeledRecord {
            molecule_id: r.molecule_id.clone(),
            smiles,
            label,
        });
    }

    let (mut kept, dedup) = dedup_records(&labeled);
    for &(removed, orig) in &dedup.removed {
        report.push(Rejection {
            line: lines[removed],
            molecule_id: labeled[removed].molecule_id.clone(),
            reason: format!(
                "duplicate of {} (line {})",
                labeled[orig].molecule_id, lines[orig]
            ),
        });
    }
    if !dedup.conflicts.is_empty() {
        let kept_lines: HashMap<&LabeledRecord, usize> = labeled
            .iter()
            .zip(&lines)
            .rev()
            .map(|(r, &l)| (r, l))
            .collect();
        for r in kept.iter().filter(|r| dedup.conflicts.contains(&r.smiles)) {
            let reason = if options.drop_conflicts {
                "conflicting labels for identical smiles (dropped)"
            } else {
                "conflicting labels for identical smiles (kept)"
            };
            report.push(Rejection {
                line: kept_lines[r],
                molecule_id: r.molecule_id.clone(),
                reason: reason.into(),
            });
        }
        if options.drop_conflicts {
            kept = drop_conflicts(kept, &dedup.conflicts);
        }
    }
    report.sort_by_key(|r| r.line);

    let provenance = format!(
        "{} mode={} threshold_nm={} strip_salts={} drop_conflicts={}",
        path.display(),
        options.mode.value_column(),
        options.threshold_nm,
        options.strip_salts,
        options.drop_conflicts
    );
    Ok(PrepareOutcome {
        dataset: LabeledDataset {
            records: kept,
            provenance,
        },
        report,
    })
}

pub fn write_clean_csv<W: Write>(
    writer: W,
    records: &[LabeledRecord],
) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["molecule_id", "smiles", "label"])?;
    for r in records {
        w.write_record([
            r.molecule_id.as_str(),
            r.smiles.as_str(),
            &r.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejections<W: Write>(
    mut writer: W,
    report: &[Rejection],
) -> Result<(), PipelineError> {
    for r in report {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a cleaned `molecule_id,smiles,label` file. Any malformed row is
/// returned as a rejection so callers can refuse the file.
pub fn read_clean_dataset(
    path: impl AsRef<Path>,
) -> Result<(LabeledDataset, Vec<Rejection>), PipelineError> {
    let path = path.as_ref();
    let (raw, rejections) = load_dataset(path, IngestMode::Labeled)?;
    let records = raw
        .into_iter()
        .map(|r| LabeledRecord {
            molecule_id: r.molecule_id,
            smiles: r.smiles,
            label: r.label.expect("labeled mode sets label"),
        })
        .collect();
    Ok((
        LabeledDataset {
            records,
            provenance: path.display().to_string(),
        },
        rejections,
    ))
}
