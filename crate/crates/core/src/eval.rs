//! IoU metrics, region matching, line-point coverage and run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chartgen::{GroundTruth, Region};
use crate::model::{BBox, ChartType, Point};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.9;

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMatch {
    pub predicted: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub matches: Vec<RegionMatch>,
    /// IoU of the prediction assigned to each GT region (0 if none).
    pub gt_best: Vec<f64>,
}

/// Greedy one-to-one assignment in descending IoU order (ties broken by
/// prediction then GT index). Every positive-IoU pair may be assigned; an
/// assignment counts as a match iff its IoU reaches `threshold`.
pub fn match_regions(predicted: &[BBox], gt: &[BBox], threshold: f64) -> MatchResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pb) in predicted.iter().enumerate() {
        for (g, gb) in gt.iter().enumerate() {
            let v = iou(pb, gb);
            if v > 0.0 {
                pairs.push((v, p, g));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predicted.len()];
    let mut gt_best = vec![0.0; gt.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matches = Vec::new();
    for (v, p, g) in pairs {
        if pred_used[p] || gt_used[g] {
            continue;
        }
        pred_used[p] = true;
        gt_used[g] = true;
        gt_best[g] = v;
        if v >= threshold {
            matches.push(RegionMatch { predicted: p, gt: g, iou: v });
        }
    }
    MatchResult { matches, gt_best }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Covered GT points over all GT points.
    #[default]
    Recall,
    /// Covered GT points over the number of predicted regions (at least 1).
    PrecisionLike,
}

pub fn line_coverage(predicted: &[BBox], gt_points: &[Point], mode: CoverageMode) -> f64 {
    let covered = gt_points.iter().filter(|p| predicted.iter().any(|b| b.contains(**p))).count() as f64;
    match mode {
        CoverageMode::Recall if gt_points.is_empty() => 0.0,
        CoverageMode::Recall => covered / gt_points.len() as f64,
        CoverageMode::PrecisionLike => (covered / predicted.len().max(1) as f64).min(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_match_threshold: f64,
    pub line_coverage_mode: CoverageMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_match_threshold: DEFAULT_IOU_THRESHOLD, line_coverage_mode: CoverageMode::Recall }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no ground truth for sample {0}")]
    MissingGroundTruth(String),
    #[error("IoU threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.iou_match_threshold > 0.0 && self.iou_match_threshold <= 1.0 {
            Ok(())
        } else {
            Err(EvalError::InvalidThreshold(self.iou_match_threshold))
        }
    }
}

/// Predicted regions for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    pub sample_id: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub chart_type: ChartType,
    pub n_gt: usize,
    pub n_predicted: usize,
    /// Bar/pie: mean over GT regions of the assigned IoU (unmatched = 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_precision_like: Option<f64>,
    /// Headline number: mean IoU, or line coverage in the configured mode.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_precision_like: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub config: EvalConfig,
    pub samples: Vec<SampleMetrics>,
    pub per_type: BTreeMap<ChartType, Aggregate>,
    pub overall: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(samples: &[&SampleMetrics]) -> Aggregate {
    Aggregate {
        n_samples: samples.len(),
        mean_iou: mean(samples.iter().filter_map(|s| s.mean_iou)),
        match_rate: mean(samples.iter().filter_map(|s| s.match_rate)),
        line_recall: mean(samples.iter().filter_map(|s| s.line_recall)),
        line_precision_like: mean(samples.iter().filter_map(|s| s.line_precision_like)),
        score: mean(samples.iter().map(|s| s.score)).unwrap_or(0.0),
    }
}

pub fn evaluate_sample(
    sample_id: &str,
    predicted: &[BBox],
    gt: &GroundTruth,
    config: &EvalConfig,
) -> Result<SampleMetrics, EvalError> {
    if gt.entries.is_empty() {
        return Err(EvalError::MissingGroundTruth(sample_id.to_string()));
    }
    let mut m = SampleMetrics {
        sample_id: sample_id.to_string(),
        chart_type: gt.chart_type,
        n_gt: gt.entries.len(),
        n_predicted: predicted.len(),
        mean_iou: None,
        match_rate: None,
        line_recall: None,
        line_precision_like: None,
        score: 0.0,
    };
    match gt.chart_type {
        ChartType::Line => {
            let points: Vec<Point> = gt
                .entries
                .iter()
                .flat_map(|e| match &e.region {
                    Region::Points(p) => p.clone(),
                    Region::Box(b) => vec![b.center()],
                })
                .collect();
            let recall = line_coverage(predicted, &points, CoverageMode::Recall);
            let precision = line_coverage(predicted, &points, CoverageMode::PrecisionLike);
            m.line_recall = Some(recall);
            m.line_precision_like = Some(precision);
            m.score = match config.line_coverage_mode {
                CoverageMode::Recall => recall,
                CoverageMode::PrecisionLike => precision,
            };
        }
        ChartType::Bar | ChartType::Pie => {
            let boxes: Vec<BBox> = gt
                .entries
                .iter()
                .map(|e| match &e.region {
                    Region::Box(b) => *b,
                    Region::Points(p) => BBox::unchecked(p[0].x, p[0].y, p[0].x, p[0].y),
                })
                .collect();
            let r = match_regions(predicted, &boxes, config.iou_match_threshold);
            let mean_iou = mean(r.gt_best.iter().copied()).unwrap_or(0.0);
            m.mean_iou = Some(mean_iou);
            m.match_rate = Some(r.matches.len() as f64 / boxes.len() as f64);
            m.score = mean_iou;
        }
    }
    Ok(m)
}

/// Scores every prediction against its ground truth. Aggregates are means
/// over samples, summed in sample-id order.
pub fn evaluate_run(
    label: &str,
    results: &[SamplePrediction],
    gts: &BTreeMap<String, GroundTruth>,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let mut samples = results
        .par_iter()
        .map(|r| {
            let gt = gts.get(&r.sample_id).ok_or_else(|| EvalError::MissingGroundTruth(r.sample_id.clone()))?;
            evaluate_sample(&r.sample_id, &r.boxes, gt, config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut per_type = BTreeMap::new();
    for ty in ChartType::ALL {
        let of_type: Vec<&SampleMetrics> = samples.iter().filter(|s| s.chart_type == ty).collect();
        if !of_type.is_empty() {
            per_type.insert(ty, aggregate(&of_type));
        }
    }
    let all: Vec<&SampleMetrics> = samples.iter().collect();
    let overall = aggregate(&all);
    Ok(EvalReport { label: label.to_string(), config: config.clone(), samples, per_type, overall })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", v * 100.0))
}

/// Plain-text comparison table, one row per report, scores x100.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}", "Method", "Bar IoU", "Pie IoU", "Line Cov", "Overall");
    for r in reports {
        let ty = |t: ChartType| r.per_type.get(&t);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            r.label,
            pct(ty(ChartType::Bar).and_then(|a| a.mean_iou)),
            pct(ty(ChartType::Pie).and_then(|a| a.mean_iou)),
            pct(ty(ChartType::Line).map(|a| a.score)),
            pct((r.overall.n_samples > 0).then_some(r.overall.score)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::GtEntry;
    use crate::model::CellRef;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::unchecked(x0, y0, x1, y1)
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 0.1, 0.1);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(0.5, 0.5, 0.6, 0.6)), 0.0);
        assert!((iou(&a, &b(0.05, 0.05, 0.15, 0.15)) - 1.0 / 7.0).abs() < 1e-12);
        let p = b(0.3, 0.3, 0.3, 0.3);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn greedy_matching_consumes_prediction() {
        // One prediction overlapping two GT boxes at IoU 0.95 and ~0.92.
        let pred = [b(0.0, 0.0, 1.0, 1.0)];
        let gt = [b(0.0, 0.0, 1.0, 0.95), b(0.0, 0.0, 1.0, 0.92)];
        assert!((iou(&pred[0], &gt[0]) - 0.95).abs() < 1e-12);
        let r = match_regions(&pred, &gt, 0.9);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].gt, 0);
        assert_eq!(r.gt_best[1], 0.0);
    }

    #[test]
    fn matching_identity_and_empty() {
        let gt = [b(0.0, 0.0, 0.2, 0.2), b(0.5, 0.5, 0.9, 0.9)];
        let r = match_regions(&gt, &gt, 0.9);
        assert_eq!(r.matches.len(), 2);
        assert_eq!(r.gt_best, vec![1.0, 1.0]);
        let r = match_regions(&[], &gt, 0.9);
        assert!(r.matches.is_empty());
        assert_eq!(r.gt_best, vec![0.0, 0.0]);
    }

    #[test]
    fn line_coverage_fixture() {
        let pts = [Point::new(0.1, 0.1), Point::new(0.2, 0.2), Point::new(0.9, 0.9)];
        let region = [b(0.0, 0.0, 0.5, 0.5)];
        assert_eq!(line_coverage(&region, &pts, CoverageMode::Recall), 2.0 / 3.0);
        assert_eq!(line_coverage(&region, &pts, CoverageMode::PrecisionLike), 1.0);
        assert_eq!(line_coverage(&[b(0.0, 0.0, 1.0, 1.0)], &pts, CoverageMode::Recall), 1.0);
        assert_eq!(line_coverage(&[], &pts, CoverageMode::Recall), 0.0);
    }

    fn bar_gt(boxes: &[BBox]) -> GroundTruth {
        GroundTruth {
            chart_type: ChartType::Bar,
            entries: boxes
                .iter()
                .enumerate()
                .map(|(i, bx)| GtEntry { cell: CellRef::new(0, i), region: Region::Box(*bx), fill: None })
                .collect(),
        }
    }

    #[test]
    fn half_matched_run() {
        let boxes = [b(0.0, 0.0, 0.2, 0.5), b(0.3, 0.0, 0.5, 0.5)];
        let mut gts = BTreeMap::new();
        let mut results = Vec::new();
        for i in 0..10 {
            let id = format!("s{i:02}");
            gts.insert(id.clone(), bar_gt(&boxes[..1]));
            let boxes = if i % 2 == 0 { vec![boxes[0]] } else { vec![] };
            results.push(SamplePrediction { sample_id: id, boxes });
        }
        let r = evaluate_run("m", &results, &gts, &EvalConfig::default()).unwrap();
        let bar = &r.per_type[&ChartType::Bar];
        assert_eq!(bar.mean_iou, Some(0.5));
        assert_eq!(bar.match_rate, Some(0.5));
        assert_eq!(r.overall.score, 0.5);
        assert!(render_table(&[r]).contains("50.0"));
    }

    #[test]
    fn missing_ground_truth() {
        let results = [SamplePrediction { sample_id: "x".into(), boxes: vec![] }];
        assert_eq!(
            evaluate_run("m", &results, &BTreeMap::new(), &EvalConfig::default()),
            Err(EvalError::MissingGroundTruth("x".into()))
        );
    }

    #[test]
    fn threshold_bounds() {
        let cfg = EvalConfig { iou_match_threshold: 0.0, ..EvalConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
