//! HTML table interchange for the extraction agent.
//!
//! The accepted subset is a single flat table: one header row whose first
//! cell is the corner (optional), then body rows whose first cell is the
//! row header. `thead`/`tbody`/`tfoot` wrappers and inline formatting tags
//! are tolerated; `</td>` and `</tr>` may be omitted as in ordinary HTML.

use thiserror::Error;

use crate::model::{CellValue, DataTable, TableError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HtmlError {
    #[error("malformed html: {0}")]
    MalformedHtml(String),
    #[error("ragged rows: {0}")]
    RaggedRows(String),
}

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Open(String),
    Close(String),
    Text(&'a str),
}

fn tokenize(html: &str) -> Result<Vec<Token<'_>>, HtmlError> {
    let bytes = html.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut text_start = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let starts_tag = matches!(next, Some(b) if b.is_ascii_alphabetic() || b == b'/' || b == b'!');
        if !starts_tag {
            i += 1;
            continue;
        }
        if text_start < i {
            tokens.push(Token::Text(&html[text_start..i]));
        }
        if html[i..].starts_with("<!--") {
            let end = html[i..]
                .find("-->")
                .ok_or_else(|| HtmlError::MalformedHtml("unterminated comment".into()))?;
            i += end + 3;
            text_start = i;
            continue;
        }
        let end = html[i..]
            .find('>')
            .ok_or_else(|| HtmlError::MalformedHtml("unterminated tag".into()))?;
        let inner = &html[i + 1..i + end];
        i += end + 1;
        text_start = i;
        if inner.starts_with('!') {
            continue;
        }
        let (closing, rest) = match inner.strip_prefix('/') {
            Some(r) => (true, r),
            None => (false, inner),
        };
        let name: String = rest
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        if name.is_empty() {
            return Err(HtmlError::MalformedHtml(format!("bad tag <{inner}>")));
        }
        if closing {
            tokens.push(Token::Close(name));
        } else if name == "br" {
            tokens.push(Token::Text(" "));
        } else if !rest.trim_end().ends_with('/') {
            tokens.push(Token::Open(name));
        }
    }
    if text_start < bytes.len() {
        tokens.push(Token::Text(&html[text_start..]));
    }
    Ok(tokens)
}

struct RawCell {
    header: bool,
    text: String,
}

/// Parses a single-table HTML fragment into a [`DataTable`].
pub fn parse_table_html(html: &str) -> Result<DataTable, HtmlError> {
    let tokens = tokenize(html)?;
    let mut in_table = false;
    let mut seen_table = false;
    let mut rows: Vec<Vec<RawCell>> = Vec::new();
    let mut row: Option<Vec<RawCell>> = None;
    let mut cell: Option<RawCell> = None;

    fn close_cell(row: &mut Option<Vec<RawCell>>, cell: &mut Option<RawCell>) {
        if let (Some(r), Some(c)) = (row.as_mut(), cell.take()) {
            r.push(c);
        }
    }
    fn close_row(rows: &mut Vec<Vec<RawCell>>, row: &mut Option<Vec<RawCell>>, cell: &mut Option<RawCell>) {
        close_cell(row, cell);
        if let Some(r) = row.take() {
            rows.push(r);
        }
    }

    for tok in tokens {
        match tok {
            Token::Open(name) => match name.as_str() {
                "table" => {
                    if in_table {
                        return Err(HtmlError::MalformedHtml("nested <table>".into()));
                    }
                    if seen_table {
                        return Err(HtmlError::MalformedHtml("more than one <table>".into()));
                    }
                    in_table = true;
                    seen_table = true;
                }
                "tr" => {
                    if !in_table {
                        return Err(HtmlError::MalformedHtml("<tr> outside <table>".into()));
                    }
                    close_row(&mut rows, &mut row, &mut cell);
                    row = Some(Vec::new());
                }
                "td" | "th" => {
                    if row.is_none() {
                        return Err(HtmlError::MalformedHtml(format!("<{name}> outside <tr>")));
                    }
                    close_cell(&mut row, &mut cell);
                    cell = Some(RawCell { header: name == "th", text: String::new() });
                }
                _ => {}
            },
            Token::Close(name) => match name.as_str() {
                "table" => {
                    if !in_table {
                        return Err(HtmlError::MalformedHtml("</table> without <table>".into()));
                    }
                    close_row(&mut rows, &mut row, &mut cell);
                    in_table = false;
                }
                "tr" => {
                    if row.is_none() {
                        return Err(HtmlError::MalformedHtml("</tr> without <tr>".into()));
                    }
                    close_row(&mut rows, &mut row, &mut cell);
                }
                "td" | "th" => {
                    if cell.is_none() {
                        return Err(HtmlError::MalformedHtml(format!("</{name}> without <{name}>")));
                    }
                    close_cell(&mut row, &mut cell);
                }
                _ => {}
            },
            Token::Text(t) => {
                if let Some(c) = cell.as_mut() {
                    c.text.push_str(t);
                }
            }
        }
    }
    if !seen_table {
        return Err(HtmlError::MalformedHtml("no <table> element".into()));
    }
    if in_table {
        return Err(HtmlError::MalformedHtml("missing </table>".into()));
    }
    build_table(rows)
}

fn decode(text: &str) -> String {
    html_escape::decode_html_entities(text).trim().to_string()
}

fn build_table(rows: Vec<Vec<RawCell>>) -> Result<DataTable, HtmlError> {
    let mut rows = rows.into_iter().filter(|r| !r.is_empty());
    let header = rows
        .next()
        .ok_or_else(|| HtmlError::MalformedHtml("table has no rows".into()))?;
    let body: Vec<Vec<RawCell>> = rows.collect();
    if body.is_empty() {
        return Err(HtmlError::MalformedHtml("table has no data rows".into()));
    }
    let width = body[0].len();
    if width < 2 {
        return Err(HtmlError::MalformedHtml("data rows need a row header and at least one value".into()));
    }
    for (i, r) in body.iter().enumerate() {
        if r.len() != width {
            return Err(HtmlError::RaggedRows(format!(
                "row {i} has {} cells, expected {width}",
                r.len()
            )));
        }
    }
    // The header row may omit the corner cell.
    let column_headers: Vec<String> = if header.len() == width {
        header[1..].iter().map(|c| decode(&c.text)).collect()
    } else if header.len() + 1 == width && header.iter().all(|c| c.header) {
        header.iter().map(|c| decode(&c.text)).collect()
    } else {
        return Err(HtmlError::RaggedRows(format!(
            "header row has {} cells, data rows have {width}",
            header.len()
        )));
    };
    let mut row_headers = Vec::with_capacity(body.len());
    let mut cells = Vec::with_capacity(body.len());
    for r in body {
        let mut it = r.into_iter();
        let head = it.next().expect("width >= 2");
        row_headers.push(decode(&head.text));
        cells.push(it.map(|c| CellValue::from_text(&decode(&c.text))).collect());
    }
    DataTable::new(column_headers, row_headers, cells).map_err(|e| match e {
        TableError::RaggedRows { .. } | TableError::RowCountMismatch { .. } => {
            HtmlError::RaggedRows(e.to_string())
        }
        other => HtmlError::MalformedHtml(other.to_string()),
    })
}

fn escape(text: &str) -> String {
    html_escape::encode_text(text).into_owned()
}

/// Canonical HTML form of a table. Inverse of [`parse_table_html`].
pub fn serialize_table_html(table: &DataTable) -> String {
    let mut out = String::from("<table>\n<thead><tr><th></th>");
    for h in table.column_headers() {
        out.push_str(&format!("<th>{}</th>", escape(h)));
    }
    out.push_str("</tr></thead>\n<tbody>\n");
    for (head, row) in table.row_headers().iter().zip(table.rows()) {
        out.push_str(&format!("<tr><th>{}</th>", escape(head)));
        for cell in row {
            out.push_str(&format!("<td>{}</td>", escape(&cell.to_string())));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</tbody>\n</table>");
    out
}

/// Pulls the first `<table>...</table>` fragment out of free-form model
/// output (code fences, prose before and after).
pub fn extract_table_fragment(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("<table")?;
    let end = lower[start..].find("</table>")? + start + "</table>".len();
    Some(&text[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellRef;

    #[test]
    fn parses_minimal_example() {
        let t = parse_table_html("<table><tr><th></th><th>2020</th></tr><tr><th>A</th><td>10</td></tr></table>").unwrap();
        assert_eq!(t.column_headers(), ["2020"]);
        assert_eq!(t.row_headers(), ["A"]);
        assert_eq!(t.rows(), &[vec![CellValue::Number(10.0)]]);
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(matches!(parse_table_html(""), Err(HtmlError::MalformedHtml(_))));
    }

    #[test]
    fn unbalanced_tags_are_malformed() {
        for html in [
            "<table><tr><th></th><th>x</th></tr><tr><th>a</th><td>1</td></tr>",
            "<tr><td>1</td></tr></table>",
            "<table><table></table></table>",
            "<table><tr><th></th><th>x</th></tr></td></table>",
            "<table><tr><th></th><th>x</th></tr></table><table></table>",
        ] {
            assert!(matches!(parse_table_html(html), Err(HtmlError::MalformedHtml(_))), "{html}");
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let html = "<table><tr><th></th><th>a</th><th>b</th></tr>\
                    <tr><th>r0</th><td>1</td><td>2</td></tr>\
                    <tr><th>r1</th><td>1</td></tr></table>";
        assert!(matches!(parse_table_html(html), Err(HtmlError::RaggedRows(_))));
    }

    #[test]
    fn tolerates_sections_missing_corner_and_omitted_closers() {
        let html = "```html\n<TABLE class=\"x\"><thead><tr><th>Q1</th><th>Q2</th></thead>\
                    <tbody><tr><th>Sales<td> 1,200 <td><b>7.5</b></tbody></table>\n```";
        let t = parse_table_html(extract_table_fragment(html).unwrap()).unwrap();
        assert_eq!(t.column_headers(), ["Q1", "Q2"]);
        assert_eq!(t.get(CellRef::new(0, 0)), Some(&CellValue::Number(1200.0)));
        assert_eq!(t.get(CellRef::new(0, 1)), Some(&CellValue::Number(7.5)));
    }

    #[test]
    fn one_by_one_has_exactly_one_td() {
        let t = DataTable::numeric(&["c"], &["r"], &[vec![1.0]]).unwrap();
        assert_eq!(serialize_table_html(&t).matches("<td>").count(), 1);
    }

    #[test]
    fn fixture_round_trip() {
        let t = DataTable::new(
            vec!["2020".into(), "2021".into()],
            vec!["North".into(), "South".into(), "East & West".into()],
            vec![
                vec![CellValue::Number(10.0), CellValue::Number(12.5)],
                vec![CellValue::Number(-3.0), CellValue::Text("n/a".into())],
                vec![CellValue::Number(0.125), CellValue::Number(1e-7)],
            ],
        )
        .unwrap();
        assert_eq!(parse_table_html(&serialize_table_html(&t)).unwrap(), t);
    }

    #[test]
    fn angle_brackets_are_escaped() {
        let t = DataTable::new(
            vec!["a<b".into()],
            vec!["<td>".into()],
            vec![vec![CellValue::Text("x < y & z".into())]],
        )
        .unwrap();
        let html = serialize_table_html(&t);
        assert!(html.contains("a&lt;b"));
        assert!(html.contains("&lt;td&gt;"));
        assert_eq!(parse_table_html(&html).unwrap(), t);
    }
}
