//! Named prompt templates.
//!
//! Each template is a text asset holding a system part and a user part
//! separated by a line containing only `===`. The system part carries a
//! `task: <name>` line so scripted mocks can match on it. Placeholders are
//! `{name}` with a lowercase identifier; braces around anything else are
//! literal, which keeps JSON examples in templates readable.

use std::collections::BTreeSet;

use thiserror::Error;

pub struct Template {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! templates {
    ($($name:literal),* $(,)?) => {
        &[$(Template { name: $name, source: include_str!(concat!("../prompts/", $name, ".txt")) }),*]
    };
}

pub const CATALOG: &[Template] = templates![
    "extract.bar",
    "extract.pie",
    "extract.line",
    "reflect",
    "refine",
    "reformulate",
    "caption.row",
    "caption.col",
    "caption.cell",
    "prefilter.row",
    "prefilter.col",
    "rerank",
    "som.map",
    "som.verify",
    "baseline.bbox",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown prompt template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{template}' needs a value for {{{name}}}")]
    MissingValue { template: String, name: String },
    #[error("template '{0}' has no '===' separator")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub system: String,
    pub user: String,
}

pub fn template(name: &str) -> Result<&'static Template, PromptError> {
    CATALOG
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
}

impl Template {
    fn parts(&self) -> Result<(&'static str, &'static str), PromptError> {
        let src = self.source;
        let idx = src.find("\n===\n").ok_or_else(|| PromptError::Malformed(self.name.to_string()))?;
        Ok((src[..idx].trim_end(), src[idx + 5..].trim_end()))
    }

    /// Placeholder names used by the template, sorted.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        scan(self.source, |name| {
            out.insert(name.to_string());
            None
        });
        out
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<Rendered, PromptError> {
        let (system, user) = self.parts()?;
        Ok(Rendered { system: self.fill(system, values)?, user: self.fill(user, values)? })
    }

    fn fill(&self, text: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut missing = None;
        let out = scan(text, |name| {
            let v = values.iter().find(|(k, _)| *k == name).map(|(_, v)| v.to_string());
            if v.is_none() && missing.is_none() {
                missing = Some(name.to_string());
            }
            v
        });
        match missing {
            Some(name) => Err(PromptError::MissingValue { template: self.name.to_string(), name }),
            None => Ok(out),
        }
    }
}

/// Convenience for `template(name)?.render(values)`.
pub fn render(name: &str, values: &[(&str, &str)]) -> Result<Rendered, PromptError> {
    template(name)?.render(values)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Walks `text`, replacing each placeholder with `sub(name)` (kept verbatim
/// when `sub` returns `None`).
fn scan(text: &str, mut sub: impl FnMut(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                match sub(name) {
                    Some(v) => out.push_str(&v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_parses_and_names_its_task() {
        for t in CATALOG {
            let (system, user) = t.parts().unwrap();
            assert!(system.contains(&format!("task: {}", t.name)), "{}", t.name);
            assert!(!user.is_empty());
        }
    }

    #[test]
    fn fills_placeholders_and_keeps_json_braces() {
        let r = render("reformulate", &[("question", "Q?"), ("answer", "A.")]).unwrap();
        assert!(r.user.contains("Question: Q?\nAnswer: A.\n"));
        assert!(r.user.contains(r#"{"claims": ["..."]}"#));
        assert!(!r.user.contains("{answer}"));
    }

    #[test]
    fn missing_values_are_errors() {
        let err = render("reformulate", &[("question", "Q?")]).unwrap_err();
        assert_eq!(err, PromptError::MissingValue { template: "reformulate".into(), name: "answer".into() });
        assert!(matches!(render("nope", &[]), Err(PromptError::UnknownTemplate(_))));
    }

    #[test]
    fn placeholder_inventory() {
        let names = template("rerank").unwrap().placeholders();
        assert_eq!(names.into_iter().collect::<Vec<_>>(), vec!["candidates", "claim", "count"]);
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let r = render("reformulate", &[("question", "{answer}"), ("answer", "x")]).unwrap();
        assert!(r.user.contains("Question: {answer}\n"));
    }
}
