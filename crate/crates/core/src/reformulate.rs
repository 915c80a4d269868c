//! Reformulation agent: answer to ordered, independent single-fact claims.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{AgentError, Llm};
use crate::model::Claim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimSet {
    pub claims: Vec<Claim>,
    pub source_answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<String>,
}

#[derive(Deserialize)]
struct Reply {
    claims: Vec<String>,
}

pub fn claims_schema() -> serde_json::Value {
    json!({
        "type": "object",
        "properties": {"claims": {"type": "array", "items": {"type": "string"}}},
        "required": ["claims"]
    })
}

/// Trims, drops empties and duplicates (first occurrence wins), and falls
/// back to the whole answer when nothing is left.
pub fn normalize_claims(raw: &[String], answer: &str) -> Vec<Claim> {
    let mut seen: Vec<&str> = Vec::new();
    for text in raw.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if !seen.contains(&text) {
            seen.push(text);
        }
    }
    if seen.is_empty() {
        seen.push(answer.trim());
    }
    seen.into_iter().enumerate().map(|(index, text)| Claim { index, text: text.to_string() }).collect()
}

pub fn decompose_answer(llm: &Llm, question: &str, answer: &str) -> Result<ClaimSet, AgentError> {
    if answer.trim().is_empty() {
        return Err(AgentError::InvalidInput("answer is empty".into()));
    }
    let prompt = llm.prompt("reformulate", &[("question", question.trim()), ("answer", answer.trim())])?;
    let reply = llm.structured::<Reply>(&prompt, &claims_schema())?;
    Ok(ClaimSet {
        claims: normalize_claims(&reply.value.claims, answer),
        source_answer: answer.to_string(),
        transcripts: reply.keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, Matcher, ScriptEntry, ScriptedMock};
    use std::sync::Arc;

    fn run(reply: &str, answer: &str) -> ClaimSet {
        let g = Gateway::new(Arc::new(ScriptedMock::new(vec![ScriptEntry::new(Matcher::contains("task: reformulate"), reply)])));
        decompose_answer(&Llm::new(&g), "q?", answer).unwrap()
    }

    fn texts(c: &ClaimSet) -> Vec<&str> {
        c.claims.iter().map(|c| c.text.as_str()).collect()
    }

    #[test]
    fn claims_in_order() {
        let c = run(r#"{"claims":["B was 10 in 2020","B was 20 in 2021"]}"#, "B rose from 10 in 2020 to 20 in 2021");
        assert_eq!(texts(&c), ["B was 10 in 2020", "B was 20 in 2021"]);
        assert_eq!(c.claims[1].index, 1);
    }

    #[test]
    fn empty_list_falls_back_to_answer() {
        assert_eq!(texts(&run(r#"{"claims":[]}"#, "Yes")), ["Yes"]);
    }

    #[test]
    fn duplicates_removed() {
        let c = run(r#"{"claims":["a"," b ","a","", "b"]}"#, "x");
        assert_eq!(texts(&c), ["a", "b"]);
        assert_eq!(c.claims.iter().map(|c| c.index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn empty_answer_rejected() {
        let g = Gateway::new(Arc::new(ScriptedMock::new(vec![])));
        assert!(matches!(decompose_answer(&Llm::new(&g), "q", "  "), Err(AgentError::InvalidInput(_))));
    }
}
