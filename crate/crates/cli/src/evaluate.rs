//! `evaluate`: score run directories against synthetic ground truth.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chartattrib_core::chartgen::GroundTruth;
use chartattrib_core::eval::{evaluate_run, render_table, EvalConfig, EvalReport, SamplePrediction};
use chartattrib_core::model::{CellRef, CitationsFile};
use serde::{Deserialize, Serialize};

use crate::fsio::{read_json, write_atomic, write_json};
use crate::run::{resolve_run_dir, Manifest, CITATIONS, MANIFEST, SAMPLES_DIR};
use crate::samples::{load_sample, SAMPLE_FILE};
use crate::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub reports: Vec<EvalReport>,
}

/// Keeps only the entries of the cited evidence cells; with no evidence
/// recorded every entry counts.
pub fn restrict_to_evidence(gt: &GroundTruth, evidence: &[CellRef]) -> GroundTruth {
    if evidence.is_empty() {
        return gt.clone();
    }
    GroundTruth {
        chart_type: gt.chart_type,
        entries: gt.entries.iter().filter(|e| evidence.contains(&e.cell)).cloned().collect(),
    }
}

/// Ground truth of every sample under `dir` (one level of subdirectories),
/// keyed by sample id.
pub fn load_ground_truth(dir: &Path) -> Result<BTreeMap<String, GroundTruth>, CliError> {
    let mut out = BTreeMap::new();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path().join(SAMPLE_FILE)))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    for path in files {
        let sample = load_sample(&path)?;
        let gt = sample
            .ground_truth
            .as_ref()
            .ok_or_else(|| CliError::bad_file(&path, "sample has no ground truth"))?;
        out.insert(sample.sample_id.clone(), restrict_to_evidence(gt, &sample.evidence_cells));
    }
    if out.is_empty() {
        return Err(CliError::bad_file(dir, "no ground-truth samples found"));
    }
    Ok(out)
}

/// Predictions of one run. Samples that failed count as empty predictions.
pub fn load_predictions(run_dir: &Path) -> Result<(Manifest, Vec<SamplePrediction>), CliError> {
    let manifest: Manifest = read_json(&run_dir.join(MANIFEST))?;
    let mut preds = Vec::with_capacity(manifest.samples.len());
    for id in &manifest.samples {
        let boxes = if manifest.failed.contains(id) {
            Vec::new()
        } else {
            let path = run_dir.join(SAMPLES_DIR).join(id).join(CITATIONS);
            let file: CitationsFile = read_json(&path)?;
            if &file.sample_id != id {
                return Err(CliError::bad_file(&path, format!("sample_id '{}' does not match '{id}'", file.sample_id)));
            }
            file.boxes()
        };
        preds.push(SamplePrediction { sample_id: id.clone(), boxes });
    }
    Ok((manifest, preds))
}

/// Evaluates each run and writes `report.json` and `report.txt` to `out`.
pub fn cmd_evaluate(
    runs: &[PathBuf],
    gt_dir: &Path,
    out: &Path,
    config: &EvalConfig,
    labels: &[String],
) -> Result<Vec<EvalReport>, CliError> {
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if !labels.is_empty() && labels.len() != runs.len() {
        return Err(CliError::Config(format!("{} labels given for {} runs", labels.len(), runs.len())));
    }
    let gts = load_ground_truth(gt_dir)?;
    let mut reports: Vec<EvalReport> = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let run_dir = resolve_run_dir(run)?;
        let (manifest, preds) = load_predictions(&run_dir)?;
        let unknown: Vec<&str> =
            preds.iter().filter(|p| !gts.contains_key(&p.sample_id)).map(|p| p.sample_id.as_str()).collect();
        if !unknown.is_empty() {
            return Err(CliError::Mismatch(format!(
                "{}: no ground truth for sample ids {}",
                run_dir.display(),
                unknown.join(", ")
            )));
        }
        let mut label = labels.get(i).cloned().unwrap_or_else(|| manifest.command.method_label().to_string());
        let base = label.clone();
        let mut n = 2;
        while reports.iter().any(|r| r.label == label) {
            label = format!("{base} ({n})");
            n += 1;
        }
        let report = evaluate_run(&label, &preds, &gts, config).map_err(|e| CliError::Mismatch(e.to_string()))?;
        reports.push(report);
    }
    write_json(&out.join(REPORT_JSON), &ReportFile { reports: reports.clone() })?;
    write_atomic(&out.join(REPORT_TXT), render_table(&reports).as_bytes())?;
    Ok(reports)
}
