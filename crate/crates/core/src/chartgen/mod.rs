//! Synthetic chart renderer with analytic per-cell ground truth.

mod geometry;
pub mod raster;

use std::collections::HashMap;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{bar_geometry, direction, line_geometry, pie_extents, pie_geometry, GeometryError, Slice};

use crate::model::{BBox, CellRef, ChartType, DataTable, Point};
use raster::{BLACK, GRAY, WHITE};

/// Minimum per-channel (Chebyshev) distance between any two palette colors
/// and between palette colors and the ink/background colors.
pub const MIN_COLOR_DISTANCE: u8 = 48;

/// Half-size of a line marker, as a fraction of the shorter image side.
pub const MARKER_HALF: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("unrenderable table: {0}")]
    UnrenderableTable(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("color collision: {0}")]
    ColorCollision(String),
    #[error("image decode failed: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub width: u32,
    pub height: u32,
    /// Plot rectangle in normalized image coordinates.
    pub plot: BBox,
    /// Fraction of each group slot left empty around the bars.
    pub bar_gap: f64,
    pub pie_center: (f64, f64),
    /// Pie radius as a fraction of the shorter image side.
    pub pie_radius: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 960,
            plot: BBox::unchecked(0.1, 0.08, 0.76, 0.84),
            bar_gap: 0.2,
            pie_center: (0.4, 0.5),
            pie_radius: 0.38,
        }
    }
}

impl Layout {
    /// Normalized radii of the pie disc along x and y.
    pub fn pie_radii(&self) -> (f64, f64) {
        let m = self.width.min(self.height) as f64;
        (self.pie_radius * m / self.width as f64, self.pie_radius * m / self.height as f64)
    }

    pub fn pie_bbox(&self) -> BBox {
        let (rx, ry) = self.pie_radii();
        let (cx, cy) = self.pie_center;
        BBox::unchecked(cx - rx, cy - ry, cx + rx, cy + ry)
    }

    /// Square marker box drawn around a line point.
    pub fn marker_box(&self, p: Point) -> BBox {
        marker_box(p, self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        let bad = |m: &str| Err(ChartError::InvalidLayout(m.to_string()));
        if self.width < 16 || self.height < 16 {
            return bad("image must be at least 16x16");
        }
        if self.plot.check().is_err() || self.plot.area() <= 0.0 {
            return bad("plot rect must be a non-empty box within the unit square");
        }
        if !(0.0..1.0).contains(&self.bar_gap) {
            return bad("bar gap must be in [0, 1)");
        }
        if !(self.pie_radius > 0.0) {
            return bad("pie radius must be positive");
        }
        if self.pie_bbox().check().is_err() {
            return bad("pie disc must lie within the image");
        }
        Ok(())
    }
}

pub fn marker_box(p: Point, width: u32, height: u32) -> BBox {
    let m = width.min(height) as f64;
    BBox::around(p, MARKER_HALF * m / width as f64, MARKER_HALF * m / height as f64)
}

/// Ground-truth region of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Box(BBox),
    Points(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub cell: CellRef,
    #[serde(flatten)]
    pub region: Region,
    /// Fill color of the cell's mark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub chart_type: ChartType,
    pub entries: Vec<GtEntry>,
}

impl GroundTruth {
    pub fn entry(&self, cell: CellRef) -> Option<&GtEntry> {
        self.entries.iter().find(|e| e.cell == cell)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

/// Chart spec sidecar: how to render a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub style_seed: u64,
}

/// Seeded palette of colors pairwise at least [`MIN_COLOR_DISTANCE`] apart
/// and that far from white, black and the gray used for axes and lines.
pub fn palette(style_seed: u64) -> Vec<[u8; 3]> {
    let step = MIN_COLOR_DISTANCE as usize;
    let levels: Vec<u8> = (0..=255usize).step_by(step).map(|v| v as u8).collect();
    let reserved = [WHITE.0, BLACK.0, GRAY.0];
    let mut colors: Vec<[u8; 3]> = Vec::new();
    for &r in &levels {
        for &g in &levels {
            for &b in &levels {
                let c = [r, g, b];
                if reserved.iter().all(|q| chebyshev(c, *q) >= MIN_COLOR_DISTANCE) {
                    colors.push(c);
                }
            }
        }
    }
    colors.shuffle(&mut ChaCha8Rng::seed_from_u64(style_seed));
    colors
}

pub fn chebyshev(a: [u8; 3], b: [u8; 3]) -> u8 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    use image::ImageEncoder as _;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory png encoding");
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, ChartError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| ChartError::Decode(e.to_string()))
}

fn numeric_grid(table: &DataTable) -> Result<Vec<Vec<Option<f64>>>, ChartError> {
    let grid: Vec<Vec<Option<f64>>> =
        table.rows().iter().map(|r| r.iter().map(|c| c.as_number()).collect()).collect();
    let mut any = false;
    for v in grid.iter().flatten().flatten() {
        any = true;
        if *v < 0.0 {
            return Err(ChartError::UnrenderableTable(format!("negative value {v}")));
        }
    }
    if !any {
        return Err(ChartError::UnrenderableTable("table has no numeric cells".into()));
    }
    Ok(grid)
}

fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Painter {
    img: RgbImage,
    w: f64,
    h: f64,
    scale: u32,
}

impl Painter {
    fn new(layout: &Layout) -> Self {
        let scale = (layout.width.min(layout.height) / 480).max(1);
        Self {
            img: RgbImage::from_pixel(layout.width, layout.height, WHITE),
            w: layout.width as f64,
            h: layout.height as f64,
            scale,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.w, y * self.h)
    }

    fn glyph(&self) -> f64 {
        (raster::GLYPH * self.scale) as f64
    }

    /// Text centered horizontally on `x` with its top at `y` (normalized).
    fn text_centered(&mut self, x: f64, y: f64, text: &str) {
        let (px, py) = self.px(x, y);
        let tw = raster::text_width(text, self.scale) as f64;
        raster::draw_text(&mut self.img, (px - tw / 2.0).round() as i64, py.round() as i64, text, self.scale, BLACK);
    }

    /// Text right-aligned at `x`, vertically centered on `y`.
    fn text_right(&mut self, x: f64, y: f64, text: &str) {
        let (px, py) = self.px(x, y);
        let tw = raster::text_width(text, self.scale) as f64;
        let g = self.glyph();
        raster::draw_text(&mut self.img, (px - tw).round() as i64, (py - g / 2.0).round() as i64, text, self.scale, BLACK);
    }

    fn text_left(&mut self, x: f64, y: f64, text: &str) {
        let (px, py) = self.px(x, y);
        let g = self.glyph();
        raster::draw_text(&mut self.img, px.round() as i64, (py - g / 2.0).round() as i64, text, self.scale, BLACK);
    }

    /// Max characters fitting in a normalized width.
    fn chars_in(&self, width: f64) -> usize {
        (width * self.w / self.glyph()).floor().max(0.0) as usize
    }

    fn axes(&mut self, plot: &BBox) {
        let (x0, y0) = self.px(plot.x_min, plot.y_min);
        let (x1, y1) = self.px(plot.x_max, plot.y_max);
        let t = self.scale as f64;
        raster::line_px(&mut self.img, (x0 - t, y1 + t), (x1, y1 + t), t, GRAY);
        raster::line_px(&mut self.img, (x0 - t, y0), (x0 - t, y1 + t), t, GRAY);
    }

    fn y_ticks(&mut self, plot: &BBox, lo: f64, hi: f64) {
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let y = plot.y_max - f * plot.height();
            let label = fmt_value(lo + f * (hi - lo));
            self.text_right(plot.x_min - 0.012, y, &label);
        }
    }

    fn legend(&mut self, x: f64, y0: f64, items: &[String]) {
        let g = self.glyph() / self.h;
        let max_chars = self.chars_in(0.99 - x);
        for (i, item) in items.iter().enumerate() {
            let text = raster::fit(item, max_chars);
            self.text_left(x, y0 + i as f64 * g * 1.6, &text);
        }
    }
}

/// Renders `table` and returns the image with per-cell ground truth.
///
/// Bars and lines draw rows as series over the columns; a pie takes the
/// table's single row or single column. Text cells and zero-valued bars or
/// slices draw nothing and get no ground-truth entry.
pub fn render_chart(
    table: &DataTable,
    chart_type: ChartType,
    layout: &Layout,
    style_seed: u64,
) -> Result<(RgbImage, GroundTruth), ChartError> {
    layout.validate()?;
    let grid = numeric_grid(table)?;
    let colors = palette(style_seed);
    let n_cells = table.n_rows() * table.n_cols();
    if n_cells > colors.len() {
        return Err(ChartError::UnrenderableTable(format!(
            "{n_cells} cells exceed the {}-color palette",
            colors.len()
        )));
    }
    let color_of = |cell: CellRef| colors[cell.row * table.n_cols() + cell.col];
    let mut painter = Painter::new(layout);
    let mut entries = Vec::new();
    let plot = layout.plot;
    match chart_type {
        ChartType::Bar => {
            let boxes = bar_geometry(&grid, layout).map_err(|e| ChartError::UnrenderableTable(e.to_string()))?;
            let max = grid.iter().flatten().flatten().cloned().fold(0.0, f64::max);
            painter.axes(&plot);
            painter.y_ticks(&plot, 0.0, max);
            let n_series = table.n_rows();
            let g = painter.glyph() / layout.height as f64;
            for (r, row) in boxes.iter().enumerate() {
                for (c, b) in row.iter().enumerate() {
                    let Some(b) = b else { continue };
                    if b.height() <= 0.0 {
                        continue;
                    }
                    let cell = CellRef::new(r, c);
                    let fill = color_of(cell);
                    raster::fill_box(&mut painter.img, b, Rgb(fill));
                    if n_series > 1 {
                        painter.text_centered(b.center().x, plot.y_max + 0.6 * g, &(r + 1).to_string());
                    }
                    entries.push(GtEntry { cell, region: Region::Box(*b), fill: Some(fill) });
                }
            }
            let slot = plot.width() / table.n_cols() as f64;
            let label_y = plot.y_max + if n_series > 1 { 2.2 } else { 0.8 } * g;
            let max_chars = painter.chars_in(slot * 0.95);
            for (c, header) in table.column_headers().iter().enumerate() {
                let x = plot.x_min + (c as f64 + 0.5) * slot;
                painter.text_centered(x, label_y, &raster::fit(header, max_chars));
            }
            if n_series > 1 {
                let items: Vec<String> =
                    table.row_headers().iter().enumerate().map(|(i, h)| format!("{} = {h}", i + 1)).collect();
                painter.legend(plot.x_max + 0.02, plot.y_min, &items);
            }
        }
        ChartType::Line => {
            let points = line_geometry(&grid, layout);
            let (lo, hi) = grid
                .iter()
                .flatten()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            painter.axes(&plot);
            if hi > lo {
                painter.y_ticks(&plot, lo, hi);
            } else {
                painter.text_right(plot.x_min - 0.012, plot.center().y, &fmt_value(lo));
            }
            let stroke = painter.scale as f64 * 1.5;
            for row in &points {
                let pts: Vec<(f64, f64)> = row.iter().flatten().map(|p| painter.px(p.x, p.y)).collect();
                for pair in pts.windows(2) {
                    raster::line_px(&mut painter.img, pair[0], pair[1], stroke, GRAY);
                }
            }
            for (r, row) in points.iter().enumerate() {
                for (c, p) in row.iter().enumerate() {
                    let Some(p) = p else { continue };
                    let cell = CellRef::new(r, c);
                    let fill = color_of(cell);
                    raster::fill_box(&mut painter.img, &layout.marker_box(*p), Rgb(fill));
                    entries.push(GtEntry { cell, region: Region::Points(vec![*p]), fill: Some(fill) });
                }
                if table.n_rows() > 1 {
                    if let Some(last) = row.iter().flatten().last() {
                        let m = layout.marker_box(*last);
                        painter.text_left(m.x_max + 0.006, last.y, &(r + 1).to_string());
                    }
                }
            }
            let n = table.n_cols();
            let step = if n > 1 { plot.width() / (n - 1) as f64 } else { plot.width() };
            let max_chars = painter.chars_in(step * 0.95);
            let g = painter.glyph() / layout.height as f64;
            for (c, header) in table.column_headers().iter().enumerate() {
                let x = if n > 1 { plot.x_min + c as f64 * step } else { plot.x_min };
                painter.text_centered(x, plot.y_max + 0.8 * g, &raster::fit(header, max_chars));
            }
            if table.n_rows() > 1 {
                let items: Vec<String> =
                    table.row_headers().iter().enumerate().map(|(i, h)| format!("{} = {h}", i + 1)).collect();
                painter.legend(plot.x_max + 0.06, plot.y_min, &items);
            }
        }
        ChartType::Pie => {
            let (cells, labels): (Vec<CellRef>, Vec<&String>) = if table.n_rows() == 1 {
                ((0..table.n_cols()).map(|c| CellRef::new(0, c)).collect(), table.column_headers().iter().collect())
            } else if table.n_cols() == 1 {
                ((0..table.n_rows()).map(|r| CellRef::new(r, 0)).collect(), table.row_headers().iter().collect())
            } else {
                return Err(ChartError::UnrenderableTable("pie needs a single row or a single column".into()));
            };
            let present: Vec<(CellRef, &String, f64)> = cells
                .iter()
                .zip(labels)
                .filter_map(|(cell, label)| grid[cell.row][cell.col].map(|v| (*cell, label, v)))
                .collect();
            let values: Vec<f64> = present.iter().map(|p| p.2).collect();
            let slices = pie_geometry(&values, layout).map_err(|e| ChartError::UnrenderableTable(e.to_string()))?;
            paint_pie(&mut painter.img, layout, &slices, &present.iter().map(|p| color_of(p.0)).collect::<Vec<_>>());
            let (cx, cy) = layout.pie_center;
            let (rx, ry) = layout.pie_radii();
            let mut items = Vec::new();
            for (i, ((cell, label, v), slice)) in present.iter().zip(&slices).enumerate() {
                items.push(format!("{} = {label} ({})", i + 1, fmt_value(*v)));
                if slice.end_deg <= slice.start_deg {
                    continue;
                }
                let (dx, dy) = direction((slice.start_deg + slice.end_deg) / 2.0);
                let g = painter.glyph();
                let (lx, ly) = (cx + dx * (rx + 1.2 * g / painter.w), cy + dy * (ry + 1.0 * g / painter.h));
                let (px, py) = painter.px(lx, ly);
                let text = (i + 1).to_string();
                let tw = raster::text_width(&text, painter.scale) as f64;
                raster::draw_text(
                    &mut painter.img,
                    (px - tw / 2.0).round() as i64,
                    (py - g / 2.0).round() as i64,
                    &text,
                    painter.scale,
                    BLACK,
                );
                let fill = color_of(*cell);
                entries.push(GtEntry { cell: *cell, region: Region::Box(slice.bbox), fill: Some(fill) });
            }
            let legend_x = (cx + rx + 0.06).min(0.9);
            painter.legend(legend_x, cy - ry, &items);
        }
    }
    Ok((painter.img, GroundTruth { chart_type, entries }))
}

fn paint_pie(img: &mut RgbImage, layout: &Layout, slices: &[Slice], fills: &[[u8; 3]]) {
    let (w, h) = (layout.width as f64, layout.height as f64);
    let (cx, cy) = layout.pie_center;
    let (rx, ry) = layout.pie_radii();
    let disc = layout.pie_bbox();
    let (x0, x1) = raster::span(disc.x_min * w, disc.x_max * w, layout.width);
    let (y0, y1) = raster::span(disc.y_min * h, disc.y_max * h, layout.height);
    for y in y0..y1 {
        for x in x0..x1 {
            let u = ((x as f64 + 0.5) / w - cx) / rx;
            let v = ((y as f64 + 0.5) / h - cy) / ry;
            if u * u + v * v > 1.0 {
                continue;
            }
            let mut deg = u.atan2(-v).to_degrees();
            if deg < 0.0 {
                deg += 360.0;
            }
            if let Some(i) = slices.iter().position(|s| deg >= s.start_deg && deg < s.end_deg) {
                img.put_pixel(x, y, Rgb(fills[i]));
            }
        }
    }
}

/// Pixel-level agreement between a rendered mark and its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCheck {
    pub cell: CellRef,
    /// Tight normalized box around the pixels of the cell's color.
    pub pixel_box: Option<BBox>,
    /// Compared region: the mark box, or the marker box around a line point.
    pub expected: BBox,
    pub iou: f64,
}

/// Measures each ground-truth entry against the pixels of its fill color.
pub fn rasterize_check(img: &RgbImage, gt: &GroundTruth) -> Result<Vec<CellCheck>, ChartError> {
    let mut by_color: HashMap<[u8; 3], usize> = HashMap::new();
    for (i, e) in gt.entries.iter().enumerate() {
        let fill = e.fill.ok_or_else(|| ChartError::ColorCollision(format!("cell {} has no fill color", e.cell)))?;
        if [WHITE.0, BLACK.0, GRAY.0].iter().any(|r| chebyshev(*r, fill) < MIN_COLOR_DISTANCE) {
            return Err(ChartError::ColorCollision(format!("cell {} uses a reserved color", e.cell)));
        }
        if let Some(j) = by_color.insert(fill, i) {
            return Err(ChartError::ColorCollision(format!(
                "cells {} and {} share color {fill:?}",
                gt.entries[j].cell, e.cell
            )));
        }
    }
    let mut extents: Vec<Option<(u32, u32, u32, u32)>> = vec![None; gt.entries.len()];
    for (x, y, p) in img.enumerate_pixels() {
        if let Some(&i) = by_color.get(&p.0) {
            let e = extents[i].get_or_insert((x, y, x, y));
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
        }
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    Ok(gt
        .entries
        .iter()
        .zip(extents)
        .map(|(e, ext)| {
            let expected = match &e.region {
                Region::Box(b) => *b,
                Region::Points(pts) => marker_box(pts[0], img.width(), img.height()),
            };
            let pixel_box = ext.map(|(x0, y0, x1, y1)| {
                BBox::unchecked(x0 as f64 / w, y0 as f64 / h, (x1 + 1) as f64 / w, (y1 + 1) as f64 / h)
            });
            let iou = pixel_box.map_or(0.0, |b| crate::eval::iou(&b, &expected));
            CellCheck { cell: e.cell, pixel_box, expected, iou }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[f64]]) -> DataTable {
        let cols: Vec<String> = (0..rows[0].len()).map(|i| format!("C{i}")).collect();
        let rh: Vec<String> = (0..rows.len()).map(|i| format!("R{i}")).collect();
        let c: Vec<&str> = cols.iter().map(String::as_str).collect();
        let r: Vec<&str> = rh.iter().map(String::as_str).collect();
        DataTable::numeric(&c, &r, &rows.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn lone_bar_spans_plot_height() {
        let layout = Layout { plot: BBox::unchecked(0.1, 0.1, 0.9, 0.9), ..Layout::default() };
        let (_, gt) = render_chart(&table(&[&[5.0]]), ChartType::Bar, &layout, 0).unwrap();
        let Region::Box(b) = gt.entries[0].region else { panic!() };
        assert_eq!((b.y_min, b.y_max), (0.1, 0.9));
    }

    #[test]
    fn full_pie_is_disc_bbox() {
        let layout = Layout::default();
        let (img, gt) = render_chart(&table(&[&[3.0]]), ChartType::Pie, &layout, 0).unwrap();
        assert_eq!(gt.entries[0].region, Region::Box(layout.pie_bbox()));
        let check = rasterize_check(&img, &gt).unwrap();
        assert!(check[0].iou >= 0.98, "{check:?}");
    }

    #[test]
    fn bars_pass_pixel_check() {
        let (img, gt) = render_chart(&table(&[&[30.0, 60.0, 45.0], &[50.0, 40.0, 90.0]]), ChartType::Bar, &Layout::default(), 7).unwrap();
        assert_eq!(gt.entries.len(), 6);
        for c in rasterize_check(&img, &gt).unwrap() {
            assert!(c.iou >= 0.98, "{c:?}");
        }
    }

    #[test]
    fn shifted_ground_truth_is_detected() {
        let (img, mut gt) = render_chart(&table(&[&[30.0, 60.0]]), ChartType::Bar, &Layout::default(), 1).unwrap();
        for e in &mut gt.entries {
            if let Region::Box(b) = &mut e.region {
                b.x_min += 0.1;
                b.x_max += 0.1;
            }
        }
        assert!(rasterize_check(&img, &gt).unwrap().iter().all(|c| c.iou < 0.9));
    }

    #[test]
    fn color_collision_is_reported() {
        let (img, mut gt) = render_chart(&table(&[&[1.0, 2.0]]), ChartType::Bar, &Layout::default(), 1).unwrap();
        gt.entries[1].fill = gt.entries[0].fill;
        assert!(matches!(rasterize_check(&img, &gt), Err(ChartError::ColorCollision(_))));
    }

    #[test]
    fn rejects_bad_tables() {
        let l = Layout::default();
        assert!(matches!(render_chart(&table(&[&[0.0, 0.0]]), ChartType::Pie, &l, 0), Err(ChartError::UnrenderableTable(_))));
        assert!(matches!(render_chart(&table(&[&[-1.0, 2.0]]), ChartType::Bar, &l, 0), Err(ChartError::UnrenderableTable(_))));
        assert!(matches!(render_chart(&table(&[&[1.0, 2.0], &[3.0, 4.0]]), ChartType::Pie, &l, 0), Err(ChartError::UnrenderableTable(_))));
        let text = DataTable::new(vec!["a".into()], vec!["r".into()], vec![vec![crate::model::CellValue::from_text("x")]]).unwrap();
        assert!(matches!(render_chart(&text, ChartType::Line, &l, 0), Err(ChartError::UnrenderableTable(_))));
    }

    #[test]
    fn zero_bars_have_no_entry() {
        let (_, gt) = render_chart(&table(&[&[0.0, 5.0]]), ChartType::Bar, &Layout::default(), 0).unwrap();
        assert_eq!(gt.entries.len(), 1);
        assert_eq!(gt.entries[0].cell, CellRef::new(0, 1));
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = table(&[&[3.0, 1.0, 4.0], &[1.0, 5.0, 9.0]]);
        for ty in [ChartType::Bar, ChartType::Line] {
            let a = render_chart(&t, ty, &Layout::default(), 3).unwrap();
            let b = render_chart(&t, ty, &Layout::default(), 3).unwrap();
            assert_eq!(encode_png(&a.0), encode_png(&b.0));
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn palette_respects_distance() {
        let p = palette(9);
        assert!(p.len() > 200);
        for (i, a) in p.iter().enumerate() {
            for b in &p[i + 1..] {
                assert!(chebyshev(*a, *b) >= MIN_COLOR_DISTANCE);
            }
        }
    }

    #[test]
    fn ground_truth_json_shape() {
        let (_, gt) = render_chart(&table(&[&[1.0, 2.0]]), ChartType::Line, &Layout::default(), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&gt.to_json()).unwrap();
        assert_eq!(v["chart_type"], "line");
        assert!(v["entries"][0]["points"][0].is_array());
        assert_eq!(serde_json::from_value::<GroundTruth>(v).unwrap(), gt);
    }
}
