//! Captioning agent: row, column and cell descriptions used for retrieval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{AgentError, Llm};
use crate::gateway::Prompt;
use crate::html::serialize_table_html;
use crate::model::{CellRef, DataTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub row_captions: Vec<String>,
    pub col_captions: Vec<String>,
    pub cell_captions: Vec<Vec<String>>,
}

impl CaptionSet {
    pub fn cell(&self, cell: CellRef) -> &str {
        &self.cell_captions[cell.row][cell.col]
    }

    pub fn matches(&self, table: &DataTable) -> bool {
        self.row_captions.len() == table.n_rows()
            && self.col_captions.len() == table.n_cols()
            && self.cell_captions.len() == table.n_rows()
            && self.cell_captions.iter().all(|r| r.len() == table.n_cols())
    }
}

#[derive(Deserialize)]
struct Reply {
    caption: String,
}

fn caption_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {"caption": {"type": "string"}},
        "required": ["caption"]
    })
}

pub fn fallback_row(table: &DataTable, row: usize) -> String {
    let cells: Vec<String> = table
        .column_headers()
        .iter()
        .zip(&table.rows()[row])
        .map(|(h, v)| format!("{h}={v}"))
        .collect();
    format!("Row '{}': {}", table.row_headers()[row], cells.join("; "))
}

pub fn fallback_col(table: &DataTable, col: usize) -> String {
    let cells: Vec<String> = table
        .row_headers()
        .iter()
        .zip(table.rows())
        .map(|(h, r)| format!("{h}={}", r[col]))
        .collect();
    format!("Column '{}': {}", table.column_headers()[col], cells.join("; "))
}

pub fn fallback_cell(table: &DataTable, cell: CellRef) -> String {
    format!(
        "Cell ({}, {}) = {}",
        table.row_headers()[cell.row],
        table.column_headers()[cell.col],
        table.rows()[cell.row][cell.col]
    )
}

/// One caption call. Empty output or a model failure yields `fallback`.
fn caption_one(llm: &Llm, prompt: Result<Prompt, AgentError>, fallback: impl FnOnce() -> String) -> Result<String, AgentError> {
    match prompt.and_then(|p| llm.structured::<Reply>(&p, &caption_schema())) {
        Ok(r) if !r.value.caption.trim().is_empty() => Ok(r.value.caption.trim().to_string()),
        Ok(_) => Ok(fallback()),
        Err(e) if e.is_model_failure() => {
            log::debug!("caption fell back to template: {e}");
            Ok(fallback())
        }
        Err(e) => Err(e),
    }
}

/// Runs `f` over `0..n`, in parallel when the gateway allows more than one
/// request in flight; results keep index order.
fn fan_out<T: Send>(llm: &Llm, n: usize, f: impl Fn(usize) -> Result<T, AgentError> + Sync + Send) -> Result<Vec<T>, AgentError> {
    if llm.gateway.parallelism() > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

pub fn caption_rows(llm: &Llm, table: &DataTable) -> Result<Vec<String>, AgentError> {
    let html = serialize_table_html(table);
    fan_out(llm, table.n_rows(), |r| {
        let idx = r.to_string();
        let prompt = llm.prompt(
            "caption.row",
            &[("table_html", &html), ("row_index", &idx), ("row_header", &table.row_headers()[r])],
        );
        caption_one(llm, prompt, || fallback_row(table, r))
    })
}

pub fn caption_columns(llm: &Llm, table: &DataTable) -> Result<Vec<String>, AgentError> {
    let html = serialize_table_html(table);
    fan_out(llm, table.n_cols(), |c| {
        let idx = c.to_string();
        let prompt = llm.prompt(
            "caption.col",
            &[("table_html", &html), ("col_index", &idx), ("col_header", &table.column_headers()[c])],
        );
        caption_one(llm, prompt, || fallback_col(table, c))
    })
}

pub fn caption_cells(
    llm: &Llm,
    table: &DataTable,
    row_captions: &[String],
    col_captions: &[String],
) -> Result<Vec<Vec<String>>, AgentError> {
    if row_captions.len() != table.n_rows() || col_captions.len() != table.n_cols() {
        return Err(AgentError::InvalidInput("caption lists do not match the table dimensions".into()));
    }
    let cols = table.n_cols();
    let flat = fan_out(llm, table.n_rows() * cols, |i| {
        let cell = CellRef::new(i / cols, i % cols);
        let (r, c) = (cell.row.to_string(), cell.col.to_string());
        let value = table.rows()[cell.row][cell.col].to_string();
        let prompt = llm.prompt(
            "caption.cell",
            &[
                ("row_index", &r),
                ("col_index", &c),
                ("row_header", &table.row_headers()[cell.row]),
                ("col_header", &table.column_headers()[cell.col]),
                ("value", &value),
                ("row_caption", &row_captions[cell.row]),
                ("col_caption", &col_captions[cell.col]),
            ],
        );
        caption_one(llm, prompt, || fallback_cell(table, cell))
    })?;
    Ok(flat.chunks(cols.max(1)).map(<[String]>::to_vec).collect())
}

pub fn caption_table(llm: &Llm, table: &DataTable) -> Result<CaptionSet, AgentError> {
    let row_captions = caption_rows(llm, table)?;
    let col_captions = caption_columns(llm, table)?;
    let cell_captions = caption_cells(llm, table, &row_captions, &col_captions)?;
    Ok(CaptionSet { row_captions, col_captions, cell_captions })
}
