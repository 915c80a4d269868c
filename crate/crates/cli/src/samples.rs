//! `sample.json` files and the sidecars they point at.

use std::path::{Path, PathBuf};

use chartattrib_core::chartgen::GroundTruth;
use chartattrib_core::model::{AttributionSample, CellRef, ChartType, DataTable};
use serde::{Deserialize, Serialize};

use crate::fsio::read_json;
use crate::CliError;

pub const SAMPLE_FILE: &str = "sample.json";

/// On-disk sample descriptor. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub sample_id: String,
    pub chart_image: PathBuf,
    pub chart_type: ChartType,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence_cells: Vec<CellRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
}

fn existing(base: &Path, rel: &Path) -> Result<PathBuf, CliError> {
    let p = base.join(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

/// Loads a sample and its sidecars. Referenced files must exist; the image
/// is decoded later, per sample.
pub fn load_sample(path: &Path) -> Result<AttributionSample, CliError> {
    let file: SampleFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if file.sample_id.trim().is_empty() || file.sample_id.contains(['/', '\\']) || file.sample_id.starts_with('.') {
        return Err(CliError::bad_file(path, format!("unusable sample_id '{}'", file.sample_id)));
    }
    let chart_image = existing(base, &file.chart_image)?;
    let table = match &file.table {
        Some(rel) => {
            let p = existing(base, rel)?;
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            Some(DataTable::from_json(&text).map_err(|e| CliError::bad_file(&p, e))?)
        }
        None => None,
    };
    let ground_truth: Option<GroundTruth> = match &file.ground_truth {
        Some(rel) => Some(read_json(&existing(base, rel)?)?),
        None => None,
    };
    if let (Some(t), Some(gt)) = (&table, &ground_truth) {
        if let Some(e) = gt.entries.iter().find(|e| !t.contains(e.cell)) {
            return Err(CliError::bad_file(path, format!("ground truth cell {} is outside the table", e.cell)));
        }
    }
    if let Some(t) = &table {
        if let Some(c) = file.evidence_cells.iter().find(|c| !t.contains(**c)) {
            return Err(CliError::bad_file(path, format!("evidence cell {c} is outside the table")));
        }
    }
    let detections = file.detections.as_ref().map(|rel| existing(base, rel)).transpose()?;
    Ok(AttributionSample {
        sample_id: file.sample_id,
        chart_image,
        chart_type: file.chart_type,
        question: file.question,
        answer: file.answer,
        table,
        ground_truth,
        evidence_cells: file.evidence_cells,
        detections,
    })
}

/// Expands command-line paths: a `sample.json`, a directory holding one, or
/// a directory whose immediate subdirectories hold them (sorted by name).
pub fn expand_sample_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_file() {
            out.push(p.clone());
        } else if p.join(SAMPLE_FILE).is_file() {
            out.push(p.join(SAMPLE_FILE));
        } else if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path().join(SAMPLE_FILE)))
                .filter(|s| s.is_file())
                .collect();
            if found.is_empty() {
                return Err(CliError::bad_file(p, "no samples found"));
            }
            found.sort();
            out.extend(found);
        } else {
            return Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such sample")));
        }
    }
    Ok(out)
}

pub fn load_samples(paths: &[PathBuf]) -> Result<Vec<AttributionSample>, CliError> {
    let files = expand_sample_paths(paths)?;
    let samples = files.iter().map(|p| load_sample(p)).collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Config(format!("duplicate sample id '{}'", w[0])));
    }
    Ok(samples)
}
