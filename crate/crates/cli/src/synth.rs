//! `synthesize`: tables to charts with ground truth, templated QA pairs and
//! an oracle mock script.

use std::path::{Path, PathBuf};

use chartattrib_core::chartgen::{encode_png, render_chart, GroundTruth, Layout};
use chartattrib_core::gateway::{sha256_hex, ImageRef, Matcher, MockScript, ScriptEntry};
use chartattrib_core::html::serialize_table_html;
use chartattrib_core::model::{CellRef, ChartType, DataTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::fsio::{write_atomic, write_json};
use crate::samples::{SampleFile, SAMPLE_FILE};
use crate::CliError;

pub const ORACLE_MOCK: &str = "oracle_mock.json";
pub const SKIPPED: &str = "skipped.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub table: String,
    pub chart_type: ChartType,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SynthSummary {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<Skipped>,
}

/// Per-sample seed: independent of iteration order and of other tables.
fn sample_seed(seed: u64, sample_id: &str) -> u64 {
    let digest = sha256_hex(format!("{seed}:{sample_id}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

pub fn question_for(table: &DataTable, cell: CellRef) -> (String, String) {
    let row = &table.row_headers()[cell.row];
    let col = &table.column_headers()[cell.col];
    let value = &table.rows()[cell.row][cell.col];
    (format!("What is the value of {row} in {col}?"), format!("The value of {row} in {col} is {value}."))
}

/// Sorted `*.json` table files of `dir`.
pub fn table_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

struct Oracle {
    specific: Vec<ScriptEntry>,
}

impl Oracle {
    fn add(&mut self, image: &ImageRef, table: &DataTable, question: &str, answer: &str, evidence: CellRef) {
        let html = serialize_table_html(table);
        let tag = format!("<image sha256={}>", image.digest());
        self.specific.push(ScriptEntry::new(Matcher::all(["task: extract.", tag.as_str()]), html.clone()));
        self.specific.push(ScriptEntry::new(Matcher::all(["task: refine", tag.as_str()]), html));
        let claims = json!({"claims": [answer]}).to_string();
        let qa = format!("Question: {question}\nAnswer: {answer}\n");
        self.specific.push(ScriptEntry::new(Matcher::all(["task: reformulate", qa.as_str()]), claims));
        let claim = format!("Claim: {answer}\n");
        let relevant = json!({"score": 1.0, "rationale": "named in the claim"}).to_string();
        let row = format!("Row header: {}\n", table.row_headers()[evidence.row]);
        let col = format!("Column header: {}\n", table.column_headers()[evidence.col]);
        self.specific.push(ScriptEntry::new(
            Matcher::all(["task: prefilter.row", claim.as_str(), row.as_str()]),
            relevant.clone(),
        ));
        self.specific.push(ScriptEntry::new(Matcher::all(["task: prefilter.col", claim.as_str(), col.as_str()]), relevant));
    }

    fn script(self) -> MockScript {
        let consistent = json!({"consistent": true, "discrepancies": []}).to_string();
        let mut entries = self.specific;
        entries.extend([
            ScriptEntry::new(Matcher::contains("task: reflect"), consistent.clone()),
            ScriptEntry::new(Matcher::contains("task: caption."), json!({"caption": ""}).to_string()),
            ScriptEntry::new(
                Matcher::contains("task: prefilter."),
                json!({"score": 0.0, "rationale": "not named in the claim"}).to_string(),
            ),
            ScriptEntry::new(Matcher::contains("task: rerank"), json!({"ranking": [1], "rationale": "first"}).to_string()),
            ScriptEntry::new(Matcher::contains("task: som.map"), json!({"assignments": []}).to_string()),
            ScriptEntry::new(Matcher::contains("task: som.verify"), consistent),
            ScriptEntry::new(Matcher::contains("task: baseline.bbox"), json!({"boxes": []}).to_string()),
        ]);
        MockScript::new(entries)
    }
}

/// Renders every table as every requested chart type. Unrenderable pairs
/// are skipped and listed in `skipped.json`; a table that fails to parse
/// aborts the command.
pub fn synthesize(tables_dir: &Path, types: &[ChartType], seed: u64, out: &Path) -> Result<SynthSummary, CliError> {
    let layout = Layout::default();
    let mut summary = SynthSummary::default();
    let mut oracle = Oracle { specific: Vec::new() };
    let files = table_files(tables_dir)?;
    if files.is_empty() {
        return Err(CliError::bad_file(tables_dir, "no *.json tables found"));
    }
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table = DataTable::from_json(&text).map_err(|e| CliError::bad_file(path, e))?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        for &chart_type in types {
            let sample_id = format!("{stem}-{chart_type}");
            let s = sample_seed(seed, &sample_id);
            let skip = |reason: String| Skipped { table: stem.clone(), chart_type, reason };
            let (img, gt) = match render_chart(&table, chart_type, &layout, s) {
                Ok(r) => r,
                Err(e) => {
                    summary.skipped.push(skip(e.to_string()));
                    continue;
                }
            };
            if gt.entries.is_empty() {
                summary.skipped.push(skip("no visible data marks".into()));
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let evidence = gt.entries[rng.random_range(0..gt.entries.len())].cell;
            let (question, answer) = question_for(&table, evidence);
            let dir = out.join(&sample_id);
            write_sample(&dir, &img, &gt, &table)?;
            let sample = SampleFile {
                sample_id,
                chart_image: "chart.png".into(),
                chart_type,
                question: question.clone(),
                answer: answer.clone(),
                table: Some("table.json".into()),
                ground_truth: Some("groundtruth.json".into()),
                evidence_cells: vec![evidence],
                detections: None,
            };
            write_json(&dir.join(SAMPLE_FILE), &sample)?;
            oracle.add(&ImageRef::from_rgb(&img), &table, &question, &answer, evidence);
            summary.written.push(dir);
        }
    }
    write_atomic(&out.join(ORACLE_MOCK), format!("{}\n", oracle.script().to_json()).as_bytes())?;
    write_json(&out.join(SKIPPED), &summary.skipped)?;
    Ok(summary)
}

fn write_sample(dir: &Path, img: &image::RgbImage, gt: &GroundTruth, table: &DataTable) -> Result<(), CliError> {
    write_atomic(&dir.join("chart.png"), &encode_png(img))?;
    write_atomic(&dir.join("groundtruth.json"), format!("{}\n", gt.to_json()).as_bytes())?;
    write_atomic(&dir.join("table.json"), format!("{}\n", table.to_json()).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_table(dir: &Path, name: &str, t: &DataTable) {
        std::fs::write(dir.join(format!("{name}.json")), t.to_json()).unwrap();
    }

    #[test]
    fn question_template() {
        let t = DataTable::numeric(&["2020"], &["A"], &[vec![10.0]]).unwrap();
        let (q, a) = question_for(&t, CellRef::new(0, 0));
        assert_eq!(q, "What is the value of A in 2020?");
        assert_eq!(a, "The value of A in 2020 is 10.");
    }

    #[test]
    fn negative_pie_skipped_with_reason() {
        let tables = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let t = DataTable::numeric(&["a", "b"], &["r"], &[vec![-1.0, 3.0]]).unwrap();
        write_table(tables.path(), "neg", &t);
        let s = synthesize(tables.path(), &[ChartType::Pie], 1, out.path()).unwrap();
        assert!(s.written.is_empty());
        assert_eq!(s.skipped.len(), 1);
        assert!(!s.skipped[0].reason.is_empty());
    }

    #[test]
    fn seeds_differ_per_sample() {
        assert_ne!(sample_seed(1, "a-bar"), sample_seed(1, "a-pie"));
        assert_eq!(sample_seed(1, "a-bar"), sample_seed(1, "a-bar"));
    }
}
