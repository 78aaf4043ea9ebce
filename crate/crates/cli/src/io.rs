//! CSV and JSON files.
//!
//! Parameter-set CSVs have a header of dimension names and one numeric row
//! per scenario. Lines starting with `#` are comments; every file written
//! here starts with a `# config_sha256=<hex> seed=<n>` line. JSON documents
//! carry the same facts in a `provenance` object.

use std::fs;
use std::path::Path;

use scenario_coverage::geometry::ParameterPoint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Dimensionality of the parameter space the payload refers to.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dims: Option<usize>,
}

impl Provenance {
    pub fn new(config_sha256: &str, seed: u64, dims: Option<usize>) -> Self {
        Provenance {
            tool: concat!("scencov ", env!("CARGO_PKG_VERSION")).to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
            dims,
        }
    }

    fn comment(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

/// A JSON payload with its provenance.
#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: &'a T,
}

#[derive(Deserialize)]
struct ProvenanceOnly {
    provenance: Option<Provenance>,
}

/// Reads parameter points, checking the header against `names`.
pub fn read_points(path: &Path, names: &[String]) -> Result<Vec<ParameterPoint>, CliError> {
    let file = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("cannot read {file}: {e}")))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::input(format!("{file}: unreadable header: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::input(format!("{file}: empty file")));
    }
    if header.len() != names.len() {
        return Err(CliError::input(format!(
            "{file}: {} columns but the parameter space has {} dimensions",
            header.len(),
            names.len()
        )));
    }
    if header.iter().zip(names).any(|(h, n)| h != n) {
        tracing::warn!(
            file = %file,
            header = ?header.iter().collect::<Vec<_>>(),
            "CSV header differs from configured dimension names; columns are taken in order"
        );
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::input(format!("{file}: row {row}: {e}")))?;
        if record.len() != names.len() {
            return Err(CliError::input(format!(
                "{file}: row {row}: {} fields, expected {}",
                record.len(),
                names.len()
            )));
        }
        let coords = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::input(format!(
                        "{file}: row {row}, column {} ({}): '{field}' is not a finite number",
                        col + 1,
                        &header[col]
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        points.push(ParameterPoint::new(coords).map_err(|e| CliError::input(format!("{file}: row {row}: {e}")))?);
    }
    if points.is_empty() {
        return Err(CliError::input(format!("{file}: no data rows")));
    }
    Ok(points)
}

/// Writes parameter points under a header of `names`.
pub fn write_points(
    path: &Path,
    names: &[String],
    points: &[ParameterPoint],
    prov: &Provenance,
) -> Result<(), CliError> {
    let mut rows = vec![names.to_vec()];
    rows.extend(
        points
            .iter()
            .map(|p| p.coords().iter().map(|v| v.to_string()).collect()),
    );
    write_rows(path, &rows, prov)
}

/// Writes a CSV of pre-formatted rows after the provenance comment.
pub fn write_rows(path: &Path, rows: &[Vec<String>], prov: &Provenance) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(prov.comment().into_bytes());
    for row in rows {
        writer.write_record(row).map_err(|e| CliError::output(path, e))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::output(path, e.error()))?;
    fs::write(path, bytes).map_err(|e| CliError::output(path, e))
}

/// Writes a CSV of serializable records (header from the field names).
pub fn write_records<T: Serialize>(path: &Path, records: &[T], prov: &Provenance) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(prov.comment().into_bytes());
    for r in records {
        writer.serialize(r).map_err(|e| CliError::output(path, e))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::output(path, e.error()))?;
    fs::write(path, bytes).map_err(|e| CliError::output(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, body: &T, prov: &Provenance) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(&Document { provenance: prov, body }).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

/// Reads a JSON document and its provenance, if present.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, Option<Provenance>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let body = serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let prov: ProvenanceOnly =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((body, prov.provenance))
}
