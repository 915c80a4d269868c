//! Localization agent: data-mark detection, set-of-marks annotation,
//! cell-to-mark mapping with a verification pass, and the direct-bbox
//! baseline.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{AgentError, Llm};
use crate::chart2table::{verdict_schema, ReflectionVerdict};
use crate::chartgen::{marker_box, raster, GroundTruth, Region};
use crate::gateway::ImageRef;
use crate::html::serialize_table_html;
use crate::model::{BBox, CellRef, ChartType, Claim, DataTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkKind {
    Bar,
    Slice,
    Point,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMark {
    pub id: u32,
    pub kind: MarkKind,
    pub region: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellRef>,
}

/// A source of candidate data marks. Ids assigned by the detector are
/// ignored; [`detect_marks`] renumbers in reading order.
pub trait Detector: Send + Sync {
    fn identity(&self) -> &str;
    fn detect(&self, image: &RgbImage, chart_type: ChartType) -> Result<Vec<DataMark>, AgentError>;
    /// Whether marks carry trustworthy cell links.
    fn is_oracle(&self) -> bool {
        false
    }
}

/// Reads marks straight from generator ground truth.
pub struct OracleDetector {
    gt: GroundTruth,
}

impl OracleDetector {
    pub fn new(gt: GroundTruth) -> Self {
        Self { gt }
    }
}

impl Detector for OracleDetector {
    fn identity(&self) -> &str {
        "oracle"
    }

    fn detect(&self, image: &RgbImage, _chart_type: ChartType) -> Result<Vec<DataMark>, AgentError> {
        Ok(self
            .gt
            .entries
            .iter()
            .map(|e| {
                let (kind, region) = match &e.region {
                    Region::Box(b) => {
                        (if self.gt.chart_type == ChartType::Pie { MarkKind::Slice } else { MarkKind::Bar }, *b)
                    }
                    Region::Points(p) => (MarkKind::Point, marker_box(p[0], image.width(), image.height())),
                };
                DataMark { id: 0, kind, region, cell: Some(e.cell) }
            })
            .collect())
    }

    fn is_oracle(&self) -> bool {
        true
    }
}

#[derive(Deserialize)]
struct DetectionsFile {
    marks: Vec<DetectionEntry>,
}

#[derive(Deserialize)]
struct DetectionEntry {
    kind: MarkKind,
    #[serde(rename = "box")]
    region: BBox,
}

/// Adapter for detections produced offline by any detector:
/// `{"marks":[{"kind":"bar","box":[x0,y0,x1,y1]}]}`.
pub struct ExternalDetector {
    identity: String,
    marks: Vec<DataMark>,
}

impl ExternalDetector {
    pub fn from_json(identity: impl Into<String>, text: &str) -> Result<Self, AgentError> {
        let file: DetectionsFile =
            serde_json::from_str(text).map_err(|e| AgentError::Detector(format!("bad detections file: {e}")))?;
        let marks = file
            .marks
            .into_iter()
            .map(|m| DataMark { id: 0, kind: m.kind, region: m.region, cell: None })
            .collect();
        Ok(Self { identity: identity.into(), marks })
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Detector(format!("{}: {e}", path.display())))?;
        Self::from_json(format!("external:{}", path.display()), &text)
    }
}

impl Detector for ExternalDetector {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn detect(&self, _image: &RgbImage, _chart_type: ChartType) -> Result<Vec<DataMark>, AgentError> {
        Ok(self.marks.clone())
    }
}

/// Runs the detector, validates regions and numbers marks 1..n by region
/// centroid, left to right then top to bottom.
pub fn detect_marks(image: &RgbImage, chart_type: ChartType, detector: &dyn Detector) -> Result<Vec<DataMark>, AgentError> {
    let mut marks = detector.detect(image, chart_type)?;
    for m in &marks {
        m.region
            .check()
            .map_err(|v| AgentError::Detector(format!("{} returned a bad region: {v}", detector.identity())))?;
    }
    marks.sort_by(|a, b| {
        let (ca, cb) = (a.region.center(), b.region.center());
        ca.x.total_cmp(&cb.x).then(ca.y.total_cmp(&cb.y))
    });
    for (i, m) in marks.iter_mut().enumerate() {
        m.id = i as u32 + 1;
    }
    Ok(marks)
}

const OUTLINE: Rgb<u8> = Rgb([230, 0, 120]);
const HIGHLIGHT: Rgb<u8> = Rgb([220, 0, 0]);

fn label_scale(img: &RgbImage) -> u32 {
    (img.width().min(img.height()) / 480).max(1)
}

/// Outlines every mark and stamps its id on a white disc at the centroid.
pub fn annotate_marks(image: &RgbImage, marks: &[DataMark]) -> Result<RgbImage, AgentError> {
    if marks.is_empty() {
        return Err(AgentError::InvalidInput("no marks to annotate".into()));
    }
    let mut out = image.clone();
    let scale = label_scale(image);
    let (w, h) = (image.width() as f64, image.height() as f64);
    for m in marks {
        raster::outline_box(&mut out, &m.region, scale as i64, OUTLINE);
    }
    for m in marks {
        let c = m.region.center();
        let (cx, cy) = (c.x * w, c.y * h);
        let text = m.id.to_string();
        let tw = raster::text_width(&text, scale) as f64;
        let th = (raster::GLYPH * scale) as f64;
        raster::fill_disc_px(&mut out, cx, cy, tw.max(th) * 0.5 + 2.0 * scale as f64, raster::WHITE);
        raster::draw_text(&mut out, (cx - tw / 2.0).round() as i64, (cy - th / 2.0).round() as i64, &text, scale, raster::BLACK);
    }
    Ok(out)
}

/// Draws cited boxes for verification and for the final overlay.
pub fn highlight_boxes(image: &RgbImage, boxes: &[BBox]) -> RgbImage {
    let mut out = image.clone();
    let stroke = label_scale(image) as i64 * 2;
    for b in boxes {
        raster::outline_box(&mut out, b, stroke, HIGHLIGHT);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub assignments: Vec<(CellRef, u32)>,
    pub unmapped: Vec<CellRef>,
}

#[derive(Deserialize)]
struct AssignmentReply {
    assignments: Vec<AssignmentEntry>,
}

#[derive(Deserialize)]
struct AssignmentEntry {
    cell: [i64; 2],
    mark: i64,
}

fn mapping_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "assignments": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "cell": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                        "mark": {"type": "integer"}
                    },
                    "required": ["cell", "mark"]
                }
            }
        },
        "required": ["assignments"]
    })
}

/// Keeps the first valid assignment per cited cell; cells without one are
/// unmapped.
fn settle(cited: &[CellRef], proposed: impl IntoIterator<Item = (CellRef, u32)>, marks: &[DataMark]) -> Mapping {
    let mut assignments: Vec<(CellRef, u32)> = Vec::new();
    for (cell, mark) in proposed {
        let known = marks.iter().any(|m| m.id == mark);
        if known && cited.contains(&cell) && !assignments.iter().any(|(c, _)| *c == cell) {
            assignments.push((cell, mark));
        }
    }
    assignments.sort_by_key(|(c, _)| cited.iter().position(|x| x == c));
    let unmapped = cited.iter().filter(|c| !assignments.iter().any(|(a, _)| a == *c)).copied().collect();
    Mapping { assignments, unmapped }
}

/// Uses the detector's own cell links.
pub fn oracle_mapping(marks: &[DataMark], cited: &[CellRef]) -> Mapping {
    let proposed: Vec<(CellRef, u32)> =
        cited.iter().filter_map(|c| marks.iter().find(|m| m.cell == Some(*c)).map(|m| (*c, m.id))).collect();
    settle(cited, proposed, marks)
}

pub struct SceneRef<'a> {
    pub chart_type: ChartType,
    pub table: &'a DataTable,
    pub annotated: &'a ImageRef,
    pub marks: &'a [DataMark],
}

pub fn map_cells_to_marks(
    llm: &Llm,
    scene: &SceneRef,
    cited: &[CellRef],
    claim: &Claim,
    feedback: &[String],
) -> Result<(Mapping, Vec<String>), AgentError> {
    let table = scene.table;
    let cells: String = cited
        .iter()
        .map(|c| {
            let header = |v: &[String], i: usize| v.get(i).cloned().unwrap_or_default();
            let value = table.get(*c).map(|v| v.to_string()).unwrap_or_default();
            format!(
                "- cell [{}, {}]: {} / {} = {value}\n",
                c.row,
                c.col,
                header(table.row_headers(), c.row),
                header(table.column_headers(), c.col)
            )
        })
        .collect();
    let ids: Vec<String> = scene.marks.iter().map(|m| m.id.to_string()).collect();
    let feedback_text = if feedback.is_empty() {
        String::new()
    } else {
        let listed: String = feedback.iter().map(|d| format!("- {d}\n")).collect();
        format!("\nA previous attempt was checked and found wrong:\n{listed}")
    };
    let html = serialize_table_html(table);
    let prompt = llm.prompt(
        "som.map",
        &[
            ("chart_type", scene.chart_type.as_str()),
            ("claim", &claim.text),
            ("table_html", &html),
            ("cells", cells.trim_end()),
            ("marks", &ids.join(", ")),
            ("feedback", &feedback_text),
        ],
    )?;
    let prompt = llm.vision(prompt, &[scene.annotated]);
    let reply = llm.structured::<AssignmentReply>(&prompt, &mapping_schema())?;
    let proposed = reply.value.assignments.iter().filter_map(|a| {
        let [r, c] = a.cell;
        (r >= 0 && c >= 0 && a.mark >= 0 && a.mark <= u32::MAX as i64)
            .then(|| (CellRef::new(r as usize, c as usize), a.mark as u32))
    });
    Ok((settle(cited, proposed, scene.marks), reply.keys))
}

pub fn verify_localization(
    llm: &Llm,
    image: &RgbImage,
    boxes: &[BBox],
    claim: &Claim,
    cells: &[CellRef],
    chart_type: ChartType,
) -> Result<(ReflectionVerdict, Vec<String>), AgentError> {
    if boxes.is_empty() {
        return Err(AgentError::InvalidInput("nothing to verify".into()));
    }
    let highlighted = ImageRef::from_rgb(&highlight_boxes(image, boxes));
    let listed: String = cells.iter().map(|c| format!("- cell [{}, {}]\n", c.row, c.col)).collect();
    let prompt = llm.prompt(
        "som.verify",
        &[("chart_type", chart_type.as_str()), ("claim", &claim.text), ("cells", listed.trim_end())],
    )?;
    let prompt = llm.vision(prompt, &[&highlighted]);
    let s = llm.structured::<ReflectionVerdict>(&prompt, &verdict_schema())?;
    Ok((s.value.normalized(), s.keys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    /// Oracle links when the detector provides them, the model otherwise.
    #[default]
    Auto,
    Oracle,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedCell {
    pub cell: CellRef,
    pub mark: u32,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub claim_index: usize,
    pub cells: Vec<LocalizedCell>,
    pub unmapped: Vec<CellRef>,
    pub verified: bool,
    pub mapping_calls: usize,
    pub verdicts: Vec<ReflectionVerdict>,
    pub transcripts: Vec<String>,
}

impl LocalizationResult {
    pub fn boxes(&self) -> Vec<BBox> {
        self.cells.iter().map(|c| c.bbox).collect()
    }
}

fn resolve(mapping: &Mapping, marks: &[DataMark]) -> Vec<LocalizedCell> {
    mapping
        .assignments
        .iter()
        .filter_map(|(cell, id)| marks.iter().find(|m| m.id == *id).map(|m| LocalizedCell { cell: *cell, mark: *id, bbox: m.region }))
        .collect()
}

/// Map, verify, and on a failed verification re-map once with the verdict
/// as feedback. The oracle path is taken as verified without a check.
pub fn localize_claim(
    llm: &Llm,
    image: &RgbImage,
    scene: &SceneRef,
    claim: &Claim,
    cited: &[CellRef],
    oracle: bool,
) -> Result<LocalizationResult, AgentError> {
    let mut result = LocalizationResult {
        claim_index: claim.index,
        cells: Vec::new(),
        unmapped: cited.to_vec(),
        verified: false,
        mapping_calls: 0,
        verdicts: Vec::new(),
        transcripts: Vec::new(),
    };
    if scene.marks.is_empty() || cited.is_empty() {
        return Ok(result);
    }
    if oracle {
        let mapping = oracle_mapping(scene.marks, cited);
        result.cells = resolve(&mapping, scene.marks);
        result.unmapped = mapping.unmapped;
        result.verified = true;
        return Ok(result);
    }
    let mut feedback: Vec<String> = Vec::new();
    for round in 0..2 {
        let (mapping, keys) = map_cells_to_marks(llm, scene, cited, claim, &feedback)?;
        result.mapping_calls += 1;
        result.transcripts.extend(keys);
        result.cells = resolve(&mapping, scene.marks);
        result.unmapped = mapping.unmapped;
        let boxes: Vec<BBox> = result.cells.iter().map(|c| c.bbox).collect();
        if boxes.is_empty() {
            result.verified = false;
            break;
        }
        let mapped: Vec<CellRef> = result.cells.iter().map(|c| c.cell).collect();
        let (verdict, keys) = verify_localization(llm, image, &boxes, claim, &mapped, scene.chart_type)?;
        result.transcripts.extend(keys);
        result.verified = verdict.consistent;
        feedback = verdict.discrepancies.clone();
        if feedback.is_empty() && !verdict.consistent {
            feedback.push("the highlighted marks do not match the claim".into());
        }
        result.verdicts.push(verdict);
        if result.verified || round == 1 {
            break;
        }
    }
    Ok(result)
}

#[derive(Deserialize)]
struct BoxesReply {
    boxes: Vec<Vec<f64>>,
}

fn boxes_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {"boxes": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}},
        "required": ["boxes"]
    })
}

/// Zero-shot baseline: ask for normalized boxes directly. Inverted pairs are
/// swapped and coordinates clamped; boxes of the wrong arity are dropped.
pub fn direct_bbox_baseline(
    llm: &Llm,
    image: &ImageRef,
    question: &str,
    claim: &Claim,
) -> Result<(Vec<BBox>, Vec<String>), AgentError> {
    let prompt = llm.prompt("baseline.bbox", &[("question", question), ("claim", &claim.text)])?;
    let prompt = llm.vision(prompt, &[image]);
    let reply = llm.structured::<BoxesReply>(&prompt, &boxes_schema())?;
    let boxes = reply
        .value
        .boxes
        .iter()
        .filter_map(|b| <[f64; 4]>::try_from(b.as_slice()).ok())
        .filter_map(BBox::repaired)
        .collect();
    Ok((boxes, reply.keys))
}
