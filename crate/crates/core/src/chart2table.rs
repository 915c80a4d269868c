//! Extraction agent: chart image to data table, refined by visual
//! self-reflection against a re-plot of its own output.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{AgentError, Llm};
use crate::chartgen::{render_chart, Layout};
use crate::gateway::{GatewayError, ImageRef};
use crate::html::{extract_table_fragment, parse_table_html, serialize_table_html};
use crate::model::{ChartType, DataTable};

pub const DEFAULT_MAX_ITERATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub consistent: bool,
    #[serde(default)]
    pub discrepancies: Vec<String>,
}

impl ReflectionVerdict {
    /// A verdict listing discrepancies is never consistent.
    pub fn normalized(mut self) -> Self {
        self.discrepancies.retain(|d| !d.trim().is_empty());
        if !self.discrepancies.is_empty() {
            self.consistent = false;
        }
        self
    }
}

pub fn verdict_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {
            "consistent": {"type": "boolean"},
            "discrepancies": {"type": "array", "items": {"type": "string"}}
        },
        "required": ["consistent", "discrepancies"]
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractionResult {
    pub table: DataTable,
    pub iterations: usize,
    pub consistent: bool,
    pub verdicts: Vec<ReflectionVerdict>,
    pub transcripts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExtractionOptions {
    pub max_iterations: usize,
    /// Layout used to re-plot extracted tables.
    pub layout: Layout,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self { max_iterations: DEFAULT_MAX_ITERATIONS, layout: Layout::default() }
    }
}

const HTML_REPAIR: &str = "Emit only a single valid HTML table.";

struct Exemplar {
    image: ImageRef,
    html: String,
}

fn exemplar_tables(chart_type: ChartType) -> Vec<DataTable> {
    let t = |cols: &[&str], rows: &[&str], cells: &[Vec<f64>]| DataTable::numeric(cols, rows, cells).expect("exemplar table");
    match chart_type {
        ChartType::Bar => vec![
            t(&["2019", "2020", "2021"], &["Revenue"], &[vec![12.0, 18.0, 15.0]]),
            t(&["Q1", "Q2"], &["North", "South"], &[vec![30.0, 42.0], vec![25.0, 20.0]]),
        ],
        ChartType::Pie => vec![
            t(&["Chrome", "Safari", "Firefox"], &["Share"], &[vec![64.0, 19.0, 17.0]]),
            t(&["Rent", "Food", "Travel", "Other"], &["Budget"], &[vec![40.0, 25.0, 20.0, 15.0]]),
        ],
        ChartType::Line => vec![
            t(&["Jan", "Feb", "Mar", "Apr"], &["Visitors"], &[vec![120.0, 150.0, 90.0, 180.0]]),
            t(&["2018", "2019", "2020"], &["A", "B"], &[vec![3.0, 5.0, 4.0], vec![6.0, 2.0, 7.0]]),
        ],
    }
}

/// Few-shot (chart, table) pairs, rendered once per process.
fn exemplars(chart_type: ChartType) -> &'static [Exemplar] {
    static CACHE: OnceLock<HashMap<ChartType, Vec<Exemplar>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        ChartType::ALL
            .iter()
            .map(|ty| {
                let shots = exemplar_tables(*ty)
                    .into_iter()
                    .map(|table| {
                        let (img, _) = render_chart(&table, *ty, &Layout::default(), 0).expect("exemplar renders");
                        Exemplar { image: ImageRef::from_rgb(&img), html: serialize_table_html(&table) }
                    })
                    .collect();
                (*ty, shots)
            })
            .collect()
    });
    &all[&chart_type]
}

fn parse_html_reply(raw: &str) -> Result<DataTable, String> {
    let fragment = extract_table_fragment(raw).ok_or_else(|| "no <table> element found".to_string())?;
    parse_table_html(fragment).map_err(|e| e.to_string())
}

fn request_table(llm: &Llm, prompt: &crate::gateway::Prompt, transcripts: &mut Vec<String>) -> Result<DataTable, AgentError> {
    match llm.gateway.complete_parsed(prompt, llm.max_repairs, HTML_REPAIR, parse_html_reply) {
        Ok(s) => {
            transcripts.extend(s.keys);
            Ok(s.value)
        }
        Err(GatewayError::StructuredOutputExhausted { attempts, last_error }) => Err(AgentError::ExtractionFailed(
            format!("no parseable HTML table after {} attempts: {last_error}", attempts.len()),
        )),
        Err(e) => Err(e.into()),
    }
}

/// Asks the backend whether a re-plot of `table` matches the original chart.
pub fn reflect_consistency(
    llm: &Llm,
    original: &ImageRef,
    rerendered: &ImageRef,
    table: &DataTable,
    chart_type: ChartType,
) -> Result<(ReflectionVerdict, Vec<String>), AgentError> {
    let html = serialize_table_html(table);
    let prompt = llm.prompt("reflect", &[("chart_type", chart_type.as_str()), ("table_html", &html)])?;
    let prompt = llm.vision(prompt, &[original, rerendered]);
    let s = llm.structured::<ReflectionVerdict>(&prompt, &verdict_schema())?;
    Ok((s.value.normalized(), s.keys))
}

/// Extract-reflect-refine loop. Returns the last parsed table; `consistent`
/// reports whether the final reflection agreed.
pub fn extract_table(
    llm: &Llm,
    image: &ImageRef,
    chart_type: ChartType,
    opts: &ExtractionOptions,
) -> Result<ExtractionResult, AgentError> {
    if opts.max_iterations == 0 {
        return Err(AgentError::InvalidInput("max_iterations must be at least 1".into()));
    }
    let template = format!("extract.{chart_type}");
    let mut prompt = llm.prompt(&template, &[])?;
    for (k, shot) in exemplars(chart_type).iter().enumerate() {
        prompt = prompt
            .text(format!("Example {} chart:", k + 1))
            .image(shot.image.clone())
            .text(format!("Example {} table:\n{}", k + 1, shot.html));
    }
    prompt = prompt.text("Chart to transcribe:").image(image.clone());

    let mut transcripts = Vec::new();
    let mut verdicts = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let table = request_table(llm, &prompt, &mut transcripts)?;
        let verdict = match render_chart(&table, chart_type, &opts.layout, 0) {
            Ok((img, _)) => {
                let (v, keys) = reflect_consistency(llm, image, &ImageRef::from_rgb(&img), &table, chart_type)?;
                transcripts.extend(keys);
                v
            }
            Err(e) => ReflectionVerdict {
                consistent: false,
                discrepancies: vec![format!("the table cannot be drawn as a {chart_type} chart: {e}")],
            },
        };
        let consistent = verdict.consistent;
        verdicts.push(verdict);
        if consistent || iterations >= opts.max_iterations {
            return Ok(ExtractionResult { table, iterations, consistent, verdicts, transcripts });
        }
        let previous = serialize_table_html(&table);
        let listed: String = verdicts
            .last()
            .map(|v| v.discrepancies.iter().map(|d| format!("- {d}\n")).collect())
            .unwrap_or_default();
        let refine = llm.prompt(
            "refine",
            &[("chart_type", chart_type.as_str()), ("previous_html", &previous), ("discrepancies", listed.trim_end())],
        )?;
        prompt = refine.image(image.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, Matcher, ScriptEntry, ScriptedMock};
    use std::sync::Arc;

    const HTML_A: &str = "<table><tr><th></th><th>A</th><th>B</th></tr><tr><th>v</th><td>10</td><td>20</td></tr></table>";
    const HTML_B: &str = "<table><tr><th></th><th>A</th><th>B</th></tr><tr><th>v</th><td>10</td><td>25</td></tr></table>";
    const CONSISTENT: &str = r#"{"consistent":true,"discrepancies":[]}"#;
    const WRONG: &str = r#"{"consistent":false,"discrepancies":["bar B wrong"]}"#;

    fn chart() -> ImageRef {
        let t = DataTable::numeric(&["A", "B"], &["v"], &[vec![10.0, 25.0]]).unwrap();
        ImageRef::from_rgb(&render_chart(&t, ChartType::Bar, &Layout::default(), 5).unwrap().0)
    }

    fn gateway(entries: Vec<ScriptEntry>) -> Gateway {
        Gateway::new(Arc::new(ScriptedMock::new(entries)))
    }

    #[test]
    fn consistent_first_pass() {
        let g = gateway(vec![
            ScriptEntry::new(Matcher::contains("task: extract.bar"), HTML_A),
            ScriptEntry::new(Matcher::contains("task: reflect"), CONSISTENT),
        ]);
        let r = extract_table(&Llm::new(&g), &chart(), ChartType::Bar, &ExtractionOptions::default()).unwrap();
        assert_eq!((r.iterations, r.consistent), (1, true));
        assert_eq!(r.table, parse_table_html(HTML_A).unwrap());
    }

    #[test]
    fn refines_after_inconsistent_verdict() {
        let g = gateway(vec![
            ScriptEntry::new(Matcher::contains("task: extract.bar"), HTML_A),
            ScriptEntry::new(Matcher::all(["task: refine", "- bar B wrong"]), HTML_B),
            ScriptEntry::once(Matcher::contains("task: reflect"), WRONG),
            ScriptEntry::new(Matcher::contains("task: reflect"), CONSISTENT),
        ]);
        let r = extract_table(&Llm::new(&g), &chart(), ChartType::Bar, &ExtractionOptions::default()).unwrap();
        assert_eq!((r.iterations, r.consistent), (2, true));
        assert_eq!(r.table, parse_table_html(HTML_B).unwrap());
    }

    #[test]
    fn budget_is_respected() {
        let g = gateway(vec![
            ScriptEntry::new(Matcher::contains("task: extract.bar"), HTML_A),
            ScriptEntry::new(Matcher::contains("task: refine"), HTML_A),
            ScriptEntry::new(Matcher::contains("task: reflect"), WRONG),
        ]);
        let r = extract_table(&Llm::new(&g), &chart(), ChartType::Bar, &ExtractionOptions::default()).unwrap();
        assert_eq!((r.iterations, r.consistent), (3, false));
        assert_eq!(r.verdicts.len(), 3);
    }

    #[test]
    fn unparseable_html_fails_extraction() {
        let g = gateway(vec![ScriptEntry::new(Matcher::contains("task: extract.bar"), "no table, sorry")]);
        let err = extract_table(&Llm::new(&g), &chart(), ChartType::Bar, &ExtractionOptions::default()).unwrap_err();
        assert!(matches!(err, AgentError::ExtractionFailed(_)));
        assert_eq!(g.backend_calls(), 3);
    }

    #[test]
    fn consistent_with_discrepancies_is_normalized() {
        let g = gateway(vec![ScriptEntry::new(
            Matcher::contains("task: reflect"),
            r#"{"consistent":true,"discrepancies":["pie slice 2 too big"]}"#,
        )]);
        let t = parse_table_html(HTML_A).unwrap();
        let (v, _) = reflect_consistency(&Llm::new(&g), &chart(), &chart(), &t, ChartType::Bar).unwrap();
        assert!(!v.consistent);
    }

    #[test]
    fn reflection_repairs_non_json() {
        let g = gateway(vec![
            ScriptEntry::once(Matcher::contains("task: reflect"), "looks fine to me"),
            ScriptEntry::new(Matcher::contains("task: reflect"), CONSISTENT),
        ]);
        let t = parse_table_html(HTML_A).unwrap();
        let (v, keys) = reflect_consistency(&Llm::new(&g), &chart(), &chart(), &t, ChartType::Bar).unwrap();
        assert!(v.consistent);
        assert_eq!(keys.len(), 2);
    }

    #[test]
    fn unrenderable_table_is_inconsistent_without_a_call() {
        // A 2x2 grid cannot be drawn as a pie.
        let two_rows = "<table><tr><th></th><th>A</th><th>B</th></tr><tr><th>x</th><td>1</td><td>3</td></tr><tr><th>y</th><td>2</td><td>4</td></tr></table>";
        let g = gateway(vec![ScriptEntry::new(Matcher::contains("task: extract.pie"), two_rows)]);
        let opts = ExtractionOptions { max_iterations: 1, ..ExtractionOptions::default() };
        let r = extract_table(&Llm::new(&g), &chart(), ChartType::Pie, &opts).unwrap();
        assert!(!r.consistent);
        assert_eq!(g.backend_calls(), 1);
    }
}
