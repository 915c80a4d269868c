use std::collections::BTreeSet;
use std::sync::Arc;

use chartattrib_core::agent::Llm;
use chartattrib_core::captioning::{fallback_cell, fallback_col, fallback_row, CaptionSet};
use chartattrib_core::chartgen::{pie_extents, render_chart, Layout};
use chartattrib_core::eval::{iou, match_regions};
use chartattrib_core::gateway::{FnBackend, Gateway, ImageRef, Matcher, Prompt, ScriptEntry, ScriptedMock};
use chartattrib_core::html::{parse_table_html, serialize_table_html, HtmlError};
use chartattrib_core::localization::{detect_marks, direct_bbox_baseline, OracleDetector};
use chartattrib_core::model::{validate_citation, BBox, CellRef, CellValue, ChartType, Citation, Claim, DataTable};
use chartattrib_core::retrieval::{apply_ranking, rerank, retain, RelevanceJudgment, Target};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn unit_box() -> impl Strategy<Value = BBox> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_map(|(a, b, c, d)| BBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap())
}

fn header() -> impl Strategy<Value = String> {
    // Mixed text including markup-significant characters.
    "[A-Za-z0-9<>&\"' ]{0,8}[A-Za-z<&]".prop_map(|s| s.trim().to_string()).prop_filter("non-empty", |s| !s.is_empty())
}

fn cell_value() -> impl Strategy<Value = CellValue> {
    prop_oneof![
        (-1_000_000i64..1_000_000).prop_map(|v| CellValue::Number(v as f64 / 100.0)),
        "[a-z<>&]{1,6}".prop_map(|s| CellValue::from_text(&s)),
    ]
}

fn data_table() -> impl Strategy<Value = DataTable> {
    (1usize..5, 1usize..5).prop_flat_map(|(rows, cols)| {
        (
            prop::collection::vec(header(), cols),
            prop::collection::vec(header(), rows),
            prop::collection::vec(prop::collection::vec(cell_value(), cols), rows),
        )
            .prop_map(|(ch, rh, cells)| DataTable::new(ch, rh, cells).unwrap())
    })
}

fn captions(t: &DataTable) -> CaptionSet {
    CaptionSet {
        row_captions: (0..t.n_rows()).map(|r| fallback_row(t, r)).collect(),
        col_captions: (0..t.n_cols()).map(|c| fallback_col(t, c)).collect(),
        cell_captions: (0..t.n_rows())
            .map(|r| (0..t.n_cols()).map(|c| fallback_cell(t, CellRef::new(r, c))).collect())
            .collect(),
    }
}

fn claim() -> Claim {
    Claim { index: 0, text: "A claim.".into() }
}

proptest! {
    #[test]
    fn html_round_trip(t in data_table()) {
        let html = serialize_table_html(&t);
        prop_assert_eq!(parse_table_html(&html).unwrap(), t);
    }

    #[test]
    fn html_ragged_rows_rejected(cols in 2usize..5, short in 1usize..5) {
        let short = short.min(cols - 1);
        let head: String = (0..cols).map(|c| format!("<th>h{c}</th>")).collect();
        let body: String = (0..short).map(|c| format!("<td>{c}</td>")).collect();
        let html = format!("<table><tr><th></th>{head}</tr><tr><th>r</th>{body}</tr></table>");
        prop_assert!(matches!(parse_table_html(&html), Err(HtmlError::RaggedRows(_))));
    }

    #[test]
    fn citation_validation(t in data_table(), row in 0usize..6, col in 0usize..6, b in unit_box()) {
        let cit = Citation {
            claim_index: 0,
            claim_text: "c".into(),
            cells: vec![CellRef::new(row, col)],
            boxes: vec![b],
            rationale: String::new(),
        };
        let in_range = row < t.n_rows() && col < t.n_cols();
        prop_assert_eq!(validate_citation(&cit, &t).is_empty(), in_range);
        let inverted = Citation { boxes: vec![BBox::unchecked(0.6, 0.0, 0.4, 1.0)], ..cit.clone() };
        prop_assert!(!validate_citation(&inverted, &t).is_empty());
        let empty = Citation { cells: vec![], ..cit };
        prop_assert!(!validate_citation(&empty, &t).is_empty());
    }

    #[test]
    fn retain_is_monotone(scores in prop::collection::vec((any::<bool>(), 0usize..10, 0.0..=1.0f64), 0..30),
                          a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let js: Vec<RelevanceJudgment> = scores
            .into_iter()
            .map(|(row, i, score)| RelevanceJudgment {
                target: if row { Target::Row(i) } else { Target::Col(i) },
                score,
                rationale: String::new(),
            })
            .collect();
        let (lo, hi) = (a.min(b), a.max(b));
        let (r_lo, c_lo) = retain(&js, lo);
        let (r_hi, c_hi) = retain(&js, hi);
        prop_assert!(r_hi.is_subset(&r_lo));
        prop_assert!(c_hi.is_subset(&c_lo));
    }

    #[test]
    fn apply_ranking_is_a_permutation(n in 0usize..40, returned in prop::collection::vec(-5i64..50, 0..60)) {
        let order = apply_ranking(n, &returned);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn rerank_returns_distinct_candidates(rows in 1usize..7, cols in 1usize..7, top_k in 1usize..6,
                                          ranking in prop::collection::vec(-3i64..25, 0..25)) {
        let values = vec![vec![1.0; cols]; rows];
        let ch: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
        let rh: Vec<String> = (0..rows).map(|r| format!("r{r}")).collect();
        let t = DataTable::numeric(
            &ch.iter().map(String::as_str).collect::<Vec<_>>(),
            &rh.iter().map(String::as_str).collect::<Vec<_>>(),
            &values,
        ).unwrap();
        let reply = serde_json::json!({"ranking": ranking, "rationale": ""}).to_string();
        let g = Gateway::new(Arc::new(ScriptedMock::new(vec![ScriptEntry::new(Matcher::Any, reply)])));
        let cands: Vec<CellRef> = t.cell_refs().collect();
        let (r, _, _) = rerank(&Llm::new(&g), &cands, &captions(&t), &claim(), top_k).unwrap();
        prop_assert_eq!(r.ordered.len(), top_k.min(cands.len()));
        let distinct: BTreeSet<CellRef> = r.ordered.iter().copied().collect();
        prop_assert_eq!(distinct.len(), r.ordered.len());
        prop_assert!(r.ordered.iter().all(|c| cands.contains(c)));
    }

    #[test]
    fn iou_symmetric_and_bounded(a in unit_box(), b in unit_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v.to_bits(), iou(&b, &a).to_bits());
        if a.area() > 0.0 {
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }

    #[test]
    fn iou_scale_invariant(a in unit_box(), b in unit_box(), k in 0.1..1.0f64) {
        let s = |x: &BBox| BBox::unchecked(x.x_min * k, x.y_min * k, x.x_max * k, x.y_max * k);
        prop_assert!((iou(&a, &b) - iou(&s(&a), &s(&b))).abs() < 1e-9);
    }

    #[test]
    fn matching_is_one_to_one(pred in prop::collection::vec(unit_box(), 0..8),
                              gt in prop::collection::vec(unit_box(), 0..8),
                              threshold in 0.0..=1.0f64) {
        let r = match_regions(&pred, &gt, threshold);
        let p: BTreeSet<usize> = r.matches.iter().map(|m| m.predicted).collect();
        let g: BTreeSet<usize> = r.matches.iter().map(|m| m.gt).collect();
        prop_assert_eq!(p.len(), r.matches.len());
        prop_assert_eq!(g.len(), r.matches.len());
        prop_assert_eq!(r.gt_best.len(), gt.len());
        for m in &r.matches {
            prop_assert!(m.iou >= threshold);
            prop_assert_eq!(m.iou, iou(&pred[m.predicted], &gt[m.gt]));
        }
    }

    #[test]
    fn repaired_boxes_are_valid(c in prop::array::uniform4(-5.0..5.0f64)) {
        let b = BBox::repaired(c).unwrap();
        prop_assert!(b.check().is_ok());
    }

    #[test]
    fn pie_extents_sum_to_full_turn(values in prop::collection::vec(0.0..1e6f64, 1..12)) {
        prop_assume!(values.iter().any(|v| *v > 0.0));
        let total: BigRational = pie_extents(&values).unwrap().into_iter().sum();
        prop_assert_eq!(total, BigRational::from_integer(BigInt::from(360)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn detect_marks_deterministic(values in prop::collection::vec(prop::collection::vec(10.0..100.0f64, 3), 1..3),
                                  seed in any::<u64>()) {
        let t = DataTable::numeric(&["a", "b", "c"], &["x", "y"][..values.len()], &values).unwrap();
        let (img, gt) = render_chart(&t, ChartType::Bar, &Layout::default(), seed).unwrap();
        let detector = OracleDetector::new(gt);
        let a = detect_marks(&img, ChartType::Bar, &detector).unwrap();
        let b = detect_marks(&img, ChartType::Bar, &detector).unwrap();
        prop_assert_eq!(&a, &b);
        let ids: Vec<u32> = a.iter().map(|m| m.id).collect();
        prop_assert_eq!(ids, (1..=a.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn baseline_boxes_always_valid(boxes in prop::collection::vec(prop::array::uniform4(-3.0..3.0f64), 0..6)) {
        let reply = serde_json::json!({ "boxes": boxes }).to_string();
        let g = Gateway::new(Arc::new(FnBackend::new("fixed", true, move |_: &Prompt| Ok(reply.clone()))));
        let img = ImageRef::from_rgb(&image::RgbImage::new(4, 4));
        let (out, _) = direct_bbox_baseline(&Llm::new(&g), &img, "q", &claim()).unwrap();
        prop_assert_eq!(out.len(), boxes.len());
        prop_assert!(out.iter().all(|b| b.check().is_ok()));
    }
}
