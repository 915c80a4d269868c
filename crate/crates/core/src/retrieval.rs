//! Retrieve-then-rank: row/column relevance prefiltering, candidate cells
//! from the retained rows x columns, then listwise re-ranking.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{AgentError, Llm};
use crate::captioning::CaptionSet;
use crate::model::{CellRef, Claim, DataTable};

pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_TOP_K: usize = 3;
pub const WINDOW: usize = 20;
pub const STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Row(usize),
    Col(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub target: Target,
    pub score: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefilterResult {
    pub retained_rows: BTreeSet<usize>,
    pub retained_cols: BTreeSet<usize>,
    pub judgments: Vec<RelevanceJudgment>,
    pub threshold: f64,
}

/// Targets whose score reaches `threshold`.
pub fn retain(judgments: &[RelevanceJudgment], threshold: f64) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut rows = BTreeSet::new();
    let mut cols = BTreeSet::new();
    for j in judgments.iter().filter(|j| j.score >= threshold) {
        match j.target {
            Target::Row(r) => rows.insert(r),
            Target::Col(c) => cols.insert(c),
        };
    }
    (rows, cols)
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
    #[serde(default)]
    rationale: String,
}

fn score_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {"score": {"type": "number"}, "rationale": {"type": "string"}},
        "required": ["score"]
    })
}

fn check_threshold(threshold: f64) -> Result<(), AgentError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(AgentError::InvalidInput(format!("threshold must be in [0, 1], got {threshold}")))
    }
}

/// Scores every row and column caption against the claim.
pub fn prefilter(
    llm: &Llm,
    table: &DataTable,
    captions: &CaptionSet,
    claim: &Claim,
    threshold: f64,
) -> Result<(PrefilterResult, Vec<String>), AgentError> {
    check_threshold(threshold)?;
    if !captions.matches(table) {
        return Err(AgentError::InvalidInput("captions do not match the table".into()));
    }
    let targets: Vec<Target> =
        (0..table.n_rows()).map(Target::Row).chain((0..table.n_cols()).map(Target::Col)).collect();
    let score = |target: &Target| -> Result<(RelevanceJudgment, Vec<String>), AgentError> {
        let (template, idx, header, caption) = match *target {
            Target::Row(r) => ("prefilter.row", r, &table.row_headers()[r], &captions.row_captions[r]),
            Target::Col(c) => ("prefilter.col", c, &table.column_headers()[c], &captions.col_captions[c]),
        };
        let idx = idx.to_string();
        let prompt = llm.prompt(
            template,
            &[("claim", &claim.text), ("index", &idx), ("header", header), ("caption", caption)],
        )?;
        let reply = llm.structured::<ScoreReply>(&prompt, &score_schema())?;
        let score = if reply.value.score.is_finite() { reply.value.score.clamp(0.0, 1.0) } else { 0.0 };
        Ok((RelevanceJudgment { target: *target, score, rationale: reply.value.rationale }, reply.keys))
    };
    let scored: Vec<(RelevanceJudgment, Vec<String>)> = if llm.gateway.parallelism() > 1 {
        targets.par_iter().map(score).collect::<Result<_, _>>()?
    } else {
        targets.iter().map(score).collect::<Result<_, _>>()?
    };
    let mut keys = Vec::new();
    let mut judgments = Vec::new();
    for (j, k) in scored {
        judgments.push(j);
        keys.extend(k);
    }
    let (retained_rows, retained_cols) = retain(&judgments, threshold);
    Ok((PrefilterResult { retained_rows, retained_cols, judgments, threshold }, keys))
}

/// Retained rows x retained columns in row-major order. An empty dimension
/// is widened to all of its indices.
pub fn candidate_cells(pref: &PrefilterResult, table: &DataTable) -> Vec<CellRef> {
    let all_rows: BTreeSet<usize> = (0..table.n_rows()).collect();
    let all_cols: BTreeSet<usize> = (0..table.n_cols()).collect();
    let in_range_rows: BTreeSet<usize> = pref.retained_rows.intersection(&all_rows).copied().collect();
    let in_range_cols: BTreeSet<usize> = pref.retained_cols.intersection(&all_cols).copied().collect();
    let rows = if in_range_rows.is_empty() { &all_rows } else { &in_range_rows };
    let cols = if in_range_cols.is_empty() { &all_cols } else { &in_range_cols };
    rows.iter().flat_map(|r| cols.iter().map(move |c| CellRef::new(*r, *c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub ordered: Vec<CellRef>,
    pub rationale: String,
}

/// Turns a model's 1-based candidate numbers into a full permutation of
/// `0..n`: out-of-range and repeated numbers are dropped, unmentioned
/// candidates follow in their original order.
pub fn apply_ranking(n: usize, returned: &[i64]) -> Vec<usize> {
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for &k in returned {
        if k >= 1 && (k as u64) <= n as u64 {
            let i = (k - 1) as usize;
            if !used[i] {
                used[i] = true;
                order.push(i);
            }
        }
    }
    order.extend((0..n).filter(|i| !used[*i]));
    order
}

#[derive(Deserialize)]
struct RankReply {
    ranking: Vec<serde_json::Value>,
    #[serde(default)]
    rationale: String,
}

fn rank_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "ranking": {"type": "array", "items": {"type": "number"}},
            "rationale": {"type": "string"}
        },
        "required": ["ranking"]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTrace {
    pub start: usize,
    pub end: usize,
    pub input: Vec<CellRef>,
    pub output: Vec<CellRef>,
}

fn rank_window(
    llm: &Llm,
    window: &[CellRef],
    captions: &CaptionSet,
    claim: &Claim,
    keys: &mut Vec<String>,
) -> Result<(Vec<usize>, String), AgentError> {
    let listing: String = window
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] cell ({}, {}): {}\n", i + 1, c.row, c.col, captions.cell(*c)))
        .collect();
    let count = window.len().to_string();
    let prompt = llm.prompt("rerank", &[("claim", &claim.text), ("candidates", listing.trim_end()), ("count", &count)])?;
    let reply = llm.structured::<RankReply>(&prompt, &rank_schema())?;
    keys.extend(reply.keys);
    let numbers: Vec<i64> = reply
        .value
        .ranking
        .iter()
        .filter_map(|v| v.as_f64())
        .filter(|f| f.fract() == 0.0)
        .map(|f| f as i64)
        .collect();
    Ok((apply_ranking(window.len(), &numbers), reply.value.rationale))
}

/// Listwise re-ranking. Lists longer than [`WINDOW`] are ranked in windows
/// of that size moving from the back to the front with stride [`STRIDE`], so
/// strong candidates bubble forward.
pub fn rerank(
    llm: &Llm,
    candidates: &[CellRef],
    captions: &CaptionSet,
    claim: &Claim,
    top_k: usize,
) -> Result<(Ranking, Vec<WindowTrace>, Vec<String>), AgentError> {
    if candidates.is_empty() {
        return Err(AgentError::InvalidInput("no candidates to rank".into()));
    }
    if top_k == 0 {
        return Err(AgentError::InvalidInput("top_k must be at least 1".into()));
    }
    let mut order = candidates.to_vec();
    let mut windows = Vec::new();
    let mut keys = Vec::new();
    let mut rationale: String;
    if order.len() == 1 {
        rationale = "single candidate".into();
    } else {
        let mut end = order.len();
        loop {
            let start = end.saturating_sub(WINDOW);
            let input = order[start..end].to_vec();
            let (perm, why) = rank_window(llm, &input, captions, claim, &mut keys)?;
            let output: Vec<CellRef> = perm.iter().map(|i| input[*i]).collect();
            order[start..end].copy_from_slice(&output);
            windows.push(WindowTrace { start, end, input, output });
            rationale = why;
            if start == 0 {
                break;
            }
            end -= STRIDE.min(end);
        }
    }
    order.truncate(top_k);
    Ok((Ranking { ordered: order, rationale }, windows, keys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, top_k: DEFAULT_TOP_K }
    }
}

/// Everything retrieval decided for one claim; persisted as
/// `retrieval_trace.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub claim_index: usize,
    pub claim: String,
    pub prefilter: PrefilterResult,
    pub candidates: Vec<CellRef>,
    pub windows: Vec<WindowTrace>,
    pub cells: Vec<CellRef>,
    pub rationale: String,
    pub transcripts: Vec<String>,
}

pub fn retrieve_citation_cells(
    llm: &Llm,
    table: &DataTable,
    captions: &CaptionSet,
    claim: &Claim,
    cfg: &RetrievalConfig,
) -> Result<RetrievalTrace, AgentError> {
    let (pref, mut transcripts) = prefilter(llm, table, captions, claim, cfg.threshold)?;
    let candidates = candidate_cells(&pref, table);
    let (ranking, windows, keys) = rerank(llm, &candidates, captions, claim, cfg.top_k)?;
    transcripts.extend(keys);
    Ok(RetrievalTrace {
        claim_index: claim.index,
        claim: claim.text.clone(),
        prefilter: pref,
        candidates,
        windows,
        cells: ranking.ordered,
        rationale: ranking.rationale,
        transcripts,
    })
}
