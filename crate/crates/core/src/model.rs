//! Shared domain types: tables, cell references, boxes, claims and citations.
//!
//! Coordinates crossing module boundaries are always normalized to `[0, 1]`
//! with the origin at the top-left corner of the image.

use std::fmt;
use std::path::PathBuf;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chartgen::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Bar,
    Pie,
    Line,
}

impl ChartType {
    pub const ALL: [ChartType; 3] = [ChartType::Bar, ChartType::Pie, ChartType::Line];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::Pie => "pie",
            ChartType::Line => "line",
        }
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ChartType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bar" => Ok(ChartType::Bar),
            "pie" => Ok(ChartType::Pie),
            "line" => Ok(ChartType::Line),
            other => Err(format!("unknown chart type '{other}' (expected bar, pie or line)")),
        }
    }
}

/// A table cell: a finite number or free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Number(f64),
    Text(String),
}

impl CellValue {
    /// Applies the canonical numeric rule to raw cell text.
    pub fn from_text(raw: &str) -> CellValue {
        let trimmed = raw.trim();
        match parse_decimal(trimmed) {
            Some(v) => CellValue::Number(v),
            None => CellValue::Text(trimmed.to_string()),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(v) => Some(*v),
            CellValue::Text(_) => None,
        }
    }

    fn normalized(self) -> Result<CellValue, TableError> {
        match self {
            CellValue::Number(v) if !v.is_finite() => Err(TableError::NonFiniteNumber),
            CellValue::Number(v) => Ok(CellValue::Number(v)),
            CellValue::Text(t) => Ok(CellValue::from_text(&t)),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Number(v) => write!(f, "{v}"),
            CellValue::Text(t) => f.write_str(t),
        }
    }
}

/// Parses a locale-free decimal: optional sign, digits with optional
/// well-formed thousands separators, optional fraction. No exponents.
pub fn parse_decimal(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if let Some(frac) = frac_part {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    if int_part.is_empty() {
        frac_part?;
    } else if int_part.contains(',') {
        let mut groups = int_part.split(',');
        let head = groups.next()?;
        if head.is_empty() || head.len() > 3 || !head.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        for g in groups {
            if g.len() != 3 || !g.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
        }
    } else if !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let cleaned: String = text.chars().filter(|c| *c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table needs at least one row header and one column header")]
    EmptyHeaders,
    #[error("table has {found} rows but {expected} row headers")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("numeric cells must be finite")]
    NonFiniteNumber,
}

/// Rectangular grid of cells with flat row and column headers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataTable {
    column_headers: Vec<String>,
    row_headers: Vec<String>,
    cells: Vec<Vec<CellValue>>,
}

impl DataTable {
    /// Builds a validated table. Header and cell text is trimmed and text
    /// cells that satisfy the numeric rule become numbers, so every table has
    /// exactly one canonical form.
    pub fn new(
        column_headers: Vec<String>,
        row_headers: Vec<String>,
        cells: Vec<Vec<CellValue>>,
    ) -> Result<Self, TableError> {
        if column_headers.is_empty() || row_headers.is_empty() {
            return Err(TableError::EmptyHeaders);
        }
        if cells.len() != row_headers.len() {
            return Err(TableError::RowCountMismatch {
                expected: row_headers.len(),
                found: cells.len(),
            });
        }
        let width = column_headers.len();
        let mut grid = Vec::with_capacity(cells.len());
        for (row, values) in cells.into_iter().enumerate() {
            if values.len() != width {
                return Err(TableError::RaggedRows {
                    row,
                    expected: width,
                    found: values.len(),
                });
            }
            grid.push(
                values
                    .into_iter()
                    .map(CellValue::normalized)
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        Ok(Self {
            column_headers: column_headers.into_iter().map(|h| h.trim().to_string()).collect(),
            row_headers: row_headers.into_iter().map(|h| h.trim().to_string()).collect(),
            cells: grid,
        })
    }

    /// Convenience constructor for all-numeric tables.
    pub fn numeric(
        column_headers: &[&str],
        row_headers: &[&str],
        values: &[Vec<f64>],
    ) -> Result<Self, TableError> {
        Self::new(
            column_headers.iter().map(|s| s.to_string()).collect(),
            row_headers.iter().map(|s| s.to_string()).collect(),
            values
                .iter()
                .map(|row| row.iter().map(|v| CellValue::Number(*v)).collect())
                .collect(),
        )
    }

    pub fn column_headers(&self) -> &[String] {
        &self.column_headers
    }

    pub fn row_headers(&self) -> &[String] {
        &self.row_headers
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.cells
    }

    pub fn n_rows(&self) -> usize {
        self.row_headers.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_headers.len()
    }

    pub fn get(&self, cell: CellRef) -> Option<&CellValue> {
        self.cells.get(cell.row)?.get(cell.col)
    }

    pub fn contains(&self, cell: CellRef) -> bool {
        cell.row < self.n_rows() && cell.col < self.n_cols()
    }

    /// All cells in row-major order.
    pub fn cell_refs(&self) -> impl Iterator<Item = CellRef> + '_ {
        (0..self.n_rows()).flat_map(move |r| (0..self.n_cols()).map(move |c| CellRef::new(r, c)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl<'de> Deserialize<'de> for DataTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            column_headers: Vec<String>,
            row_headers: Vec<String>,
            cells: Vec<Vec<CellValue>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        DataTable::new(raw.column_headers, raw.row_headers, raw.cells).map_err(D::Error::custom)
    }
}

/// Zero-based (row, column) reference into a [`DataTable`]; serialized as `[r, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellRef {
    pub row: usize,
    pub col: usize,
}

impl CellRef {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

impl Serialize for CellRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.row, self.col].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CellRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [row, col] = <[usize; 2]>::deserialize(deserializer)?;
        Ok(CellRef { row, col })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BoxViolation {
    #[error("inverted box")]
    Inverted,
    #[error("coordinate out of range")]
    OutOfRange,
}

/// Normalized axis-aligned box, serialized as `[x_min, y_min, x_max, y_max]`.
///
/// Deserialization does not validate; boxes read from files are checked at
/// the boundary with [`BBox::check`] or [`validate_citation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, BoxViolation> {
        let b = Self { x_min, y_min, x_max, y_max };
        b.check().map(|_| b)
    }

    pub const fn unchecked(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn check(&self) -> Result<(), BoxViolation> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(BoxViolation::OutOfRange);
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(BoxViolation::Inverted);
        }
        Ok(())
    }

    /// Repairs a model-emitted box: swaps inverted pairs and clamps into the
    /// unit square. Returns `None` for non-finite input.
    pub fn repaired(coords: [f64; 4]) -> Option<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let [a, b, c, d] = coords.map(|v| v.clamp(0.0, 1.0));
        BBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).ok()
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Inclusive point containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Box of the given size centered on `p`, clipped to the unit square.
    pub fn around(p: Point, half_w: f64, half_h: f64) -> Self {
        BBox::unchecked(
            (p.x - half_w).clamp(0.0, 1.0),
            (p.y - half_h).clamp(0.0, 1.0),
            (p.x + half_w).clamp(0.0, 1.0),
            (p.y + half_h).clamp(0.0, 1.0),
        )
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [a, b, c, d] = <[f64; 4]>::deserialize(deserializer)?;
        Ok(BBox::unchecked(a, b, c, d))
    }
}

/// Normalized image point, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(deserializer)?;
        Ok(Point { x, y })
    }
}

/// One independent declarative sentence of a decomposed answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub claim_index: usize,
    pub claim_text: String,
    pub cells: Vec<CellRef>,
    pub boxes: Vec<BBox>,
    pub rationale: String,
}

/// On-disk `citations.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationsFile {
    pub sample_id: String,
    pub citations: Vec<Citation>,
}

impl CitationsFile {
    /// All boxes across citations, in citation order.
    pub fn boxes(&self) -> Vec<BBox> {
        self.citations.iter().flat_map(|c| c.boxes.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyCells,
    RowOutOfRange(CellRef),
    ColumnOutOfRange(CellRef),
    Box { index: usize, violation: BoxViolation },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyCells => f.write_str("citation cites no cells"),
            Violation::RowOutOfRange(c) => write!(f, "row out of range: cell {c}"),
            Violation::ColumnOutOfRange(c) => write!(f, "column out of range: cell {c}"),
            Violation::Box { index, violation } => write!(f, "box {index}: {violation}"),
        }
    }
}

/// Checks a citation against the table it cites. An empty result means valid.
pub fn validate_citation(cit: &Citation, table: &DataTable) -> Vec<Violation> {
    let mut out = Vec::new();
    if cit.cells.is_empty() {
        out.push(Violation::EmptyCells);
    }
    for &cell in &cit.cells {
        if cell.row >= table.n_rows() {
            out.push(Violation::RowOutOfRange(cell));
        } else if cell.col >= table.n_cols() {
            out.push(Violation::ColumnOutOfRange(cell));
        }
    }
    for (index, b) in cit.boxes.iter().enumerate() {
        if let Err(violation) = b.check() {
            out.push(Violation::Box { index, violation });
        }
    }
    out
}

/// A chart image with its question and answer, plus optional synthetic
/// ground truth.
#[derive(Debug, Clone)]
pub struct AttributionSample {
    pub sample_id: String,
    pub chart_image: PathBuf,
    pub chart_type: ChartType,
    pub question: String,
    pub answer: String,
    pub table: Option<DataTable>,
    pub ground_truth: Option<GroundTruth>,
    /// Cells that support the answer, when known.
    pub evidence_cells: Vec<CellRef>,
    /// External detector output for this chart, if any.
    pub detections: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one() -> DataTable {
        DataTable::numeric(&["2020"], &["A"], &[vec![10.0]]).unwrap()
    }

    #[test]
    fn numeric_rule() {
        assert_eq!(parse_decimal("10"), Some(10.0));
        assert_eq!(parse_decimal(" -3.5".trim()), Some(-3.5));
        assert_eq!(parse_decimal("+1,234,567.25"), Some(1234567.25));
        assert_eq!(parse_decimal(".5"), Some(0.5));
        assert_eq!(parse_decimal("1,23"), None);
        assert_eq!(parse_decimal("12,345,"), None);
        assert_eq!(parse_decimal("1e5"), None);
        assert_eq!(parse_decimal("NaN"), None);
        assert_eq!(parse_decimal("inf"), None);
        assert_eq!(parse_decimal(""), None);
        assert_eq!(parse_decimal("5."), None);
        assert_eq!(parse_decimal("-"), None);
    }

    #[test]
    fn text_cells_are_normalized() {
        let t = DataTable::new(
            vec![" c ".into()],
            vec!["r".into()],
            vec![vec![CellValue::Text(" 1,000 ".into())]],
        )
        .unwrap();
        assert_eq!(t.column_headers(), ["c"]);
        assert_eq!(t.get(CellRef::new(0, 0)), Some(&CellValue::Number(1000.0)));
    }

    #[test]
    fn rejects_ragged_and_empty() {
        let err = DataTable::new(
            vec!["a".into(), "b".into()],
            vec!["r0".into(), "r1".into()],
            vec![vec![CellValue::Number(1.0), CellValue::Number(2.0)], vec![CellValue::Number(1.0)]],
        )
        .unwrap_err();
        assert_eq!(err, TableError::RaggedRows { row: 1, expected: 2, found: 1 });
        assert_eq!(DataTable::new(vec![], vec!["r".into()], vec![vec![]]).unwrap_err(), TableError::EmptyHeaders);
        assert_eq!(
            DataTable::numeric(&["a"], &["r"], &[vec![f64::NAN]]).unwrap_err(),
            TableError::NonFiniteNumber
        );
    }

    #[test]
    fn canonical_json_schema() {
        let t = DataTable::new(
            vec!["2020".into(), "Note".into()],
            vec!["A".into()],
            vec![vec![CellValue::Number(10.0), CellValue::Text("n/a".into())]],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"column_headers":["2020","Note"],"row_headers":["A"],"cells":[[10.0,"n/a"]]})
        );
        assert_eq!(DataTable::from_json(&t.to_json()).unwrap(), t);
        assert!(DataTable::from_json(r#"{"column_headers":["a"],"row_headers":["r"],"cells":[[1,2]]}"#).is_err());
    }

    #[test]
    fn validate_citation_cases() {
        let table = one_by_one();
        let ok = Citation {
            claim_index: 0,
            claim_text: "A was 10".into(),
            cells: vec![CellRef::new(0, 0)],
            boxes: vec![BBox::unchecked(0.0, 0.0, 1.0, 1.0)],
            rationale: String::new(),
        };
        assert!(validate_citation(&ok, &table).is_empty());

        let bad_row = Citation { cells: vec![CellRef::new(2, 0)], ..ok.clone() };
        let v = validate_citation(&bad_row, &table);
        assert_eq!(v, vec![Violation::RowOutOfRange(CellRef::new(2, 0))]);
        assert!(v[0].to_string().contains("row out of range"));

        let inverted = Citation { boxes: vec![BBox::unchecked(0.9, 0.0, 0.1, 1.0)], ..ok.clone() };
        let v = validate_citation(&inverted, &table);
        assert_eq!(v, vec![Violation::Box { index: 0, violation: BoxViolation::Inverted }]);
        assert!(v[0].to_string().contains("inverted box"));
    }

    #[test]
    fn box_repair_swaps_and_clamps() {
        let b = BBox::repaired([0.5, 0.5, 0.2, 0.9]).unwrap();
        assert_eq!(b.to_array(), [0.2, 0.5, 0.5, 0.9]);
        let b = BBox::repaired([-0.2, 0.1, 1.4, 0.3]).unwrap();
        assert_eq!(b.to_array(), [0.0, 0.1, 1.0, 0.3]);
        assert!(BBox::repaired([f64::NAN, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn cellref_and_bbox_wire_forms() {
        assert_eq!(serde_json::to_string(&CellRef::new(2, 1)).unwrap(), "[2,1]");
        let b: BBox = serde_json::from_str("[0.1,0.2,0.3,0.4]").unwrap();
        assert_eq!(b, BBox::unchecked(0.1, 0.2, 0.3, 0.4));
    }
}
