//! Per-sample orchestration: extract, decompose, caption, retrieve and
//! localize, in that order. No file IO happens here.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, Llm};
use crate::captioning::{caption_table, CaptionSet};
use crate::chart2table::{extract_table, ExtractionOptions, ExtractionResult};
use crate::gateway::ImageRef;
use crate::localization::{
    annotate_marks, detect_marks, direct_bbox_baseline, localize_claim, DataMark, Detector, LocalizationResult,
    MappingMode, SceneRef,
};
use crate::model::{BBox, ChartType, Citation, CitationsFile};
use crate::reformulate::{decompose_answer, ClaimSet};
use crate::retrieval::{retrieve_citation_cells, RetrievalConfig, RetrievalTrace};

#[derive(Debug, Clone, Default)]
pub struct AttributionOptions {
    pub extraction: ExtractionOptions,
    pub retrieval: RetrievalConfig,
    pub mapping: MappingMode,
}

pub struct SampleInput<'a> {
    pub sample_id: &'a str,
    pub image: &'a RgbImage,
    pub chart_type: ChartType,
    pub question: &'a str,
    pub answer: &'a str,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributionOutput {
    pub citations: CitationsFile,
    pub extraction: ExtractionResult,
    pub claims: ClaimSet,
    pub captions: CaptionSet,
    pub retrieval: Vec<RetrievalTrace>,
    pub marks: Vec<DataMark>,
    pub localization: Vec<LocalizationResult>,
    #[serde(skip)]
    pub annotated: Option<RgbImage>,
}

impl AttributionOutput {
    /// Every transcript key the sample touched, in stage order.
    pub fn transcripts(&self) -> Vec<String> {
        let mut keys = self.extraction.transcripts.clone();
        keys.extend(self.claims.transcripts.iter().cloned());
        for r in &self.retrieval {
            keys.extend(r.transcripts.iter().cloned());
        }
        for l in &self.localization {
            keys.extend(l.transcripts.iter().cloned());
        }
        keys
    }
}

fn use_oracle(mode: MappingMode, detector: &dyn Detector) -> Result<bool, AgentError> {
    match mode {
        MappingMode::Auto => Ok(detector.is_oracle()),
        MappingMode::Model => Ok(false),
        MappingMode::Oracle if detector.is_oracle() => Ok(true),
        MappingMode::Oracle => Err(AgentError::InvalidInput(format!(
            "oracle mapping needs an oracle detector, got {}",
            detector.identity()
        ))),
    }
}

pub fn attribute_sample(
    llm: &Llm,
    input: &SampleInput,
    detector: &dyn Detector,
    opts: &AttributionOptions,
) -> Result<AttributionOutput, AgentError> {
    let oracle = use_oracle(opts.mapping, detector)?;
    let image = ImageRef::from_rgb(input.image);
    let extraction = extract_table(llm, &image, input.chart_type, &opts.extraction)?;
    let table = &extraction.table;
    let claims = decompose_answer(llm, input.question, input.answer)?;
    let captions = caption_table(llm, table)?;

    let marks = detect_marks(input.image, input.chart_type, detector)?;
    let annotated = if marks.is_empty() { None } else { Some(annotate_marks(input.image, &marks)?) };
    let annotated_ref = annotated.as_ref().map(ImageRef::from_rgb).unwrap_or_else(|| image.clone());
    let scene = SceneRef { chart_type: input.chart_type, table, annotated: &annotated_ref, marks: &marks };

    let mut retrieval = Vec::with_capacity(claims.claims.len());
    let mut localization = Vec::with_capacity(claims.claims.len());
    let mut citations = Vec::with_capacity(claims.claims.len());
    for claim in &claims.claims {
        let trace = retrieve_citation_cells(llm, table, &captions, claim, &opts.retrieval)?;
        let loc = localize_claim(llm, input.image, &scene, claim, &trace.cells, oracle)?;
        citations.push(Citation {
            claim_index: claim.index,
            claim_text: claim.text.clone(),
            cells: trace.cells.clone(),
            boxes: loc.boxes(),
            rationale: trace.rationale.clone(),
        });
        retrieval.push(trace);
        localization.push(loc);
    }
    Ok(AttributionOutput {
        citations: CitationsFile { sample_id: input.sample_id.to_string(), citations },
        extraction,
        claims,
        captions,
        retrieval,
        marks,
        localization,
        annotated,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub citations: CitationsFile,
    pub claims: ClaimSet,
    pub transcripts: Vec<String>,
}

/// Direct-bbox baseline: decompose, then ask for boxes per claim. No table
/// exists on this path, so citations carry no cells.
pub fn baseline_sample(llm: &Llm, input: &SampleInput) -> Result<BaselineOutput, AgentError> {
    let image = ImageRef::from_rgb(input.image);
    let claims = decompose_answer(llm, input.question, input.answer)?;
    let mut transcripts = claims.transcripts.clone();
    let mut citations = Vec::with_capacity(claims.claims.len());
    for claim in &claims.claims {
        let (boxes, keys): (Vec<BBox>, _) = direct_bbox_baseline(llm, &image, input.question, claim)?;
        transcripts.extend(keys);
        citations.push(Citation {
            claim_index: claim.index,
            claim_text: claim.text.clone(),
            cells: Vec::new(),
            boxes,
            rationale: String::new(),
        });
    }
    Ok(BaselineOutput {
        citations: CitationsFile { sample_id: input.sample_id.to_string(), citations },
        claims,
        transcripts,
    })
}
