//! Analytic mark geometry in normalized image coordinates.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use super::Layout;
use crate::model::{BBox, Point};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("all bar values are zero")]
    AllZeroValues,
    #[error("pie values sum to zero")]
    ZeroSum,
    #[error("negative value {0}")]
    Negative(String),
    #[error("no values")]
    Empty,
}

/// Grouped vertical bars. `values[series][group]`: groups partition the
/// plot width in order, series sit side by side within a group, heights are
/// normalized by the global maximum. `None` marks a cell with no bar.
pub fn bar_geometry(values: &[Vec<Option<f64>>], layout: &Layout) -> Result<Vec<Vec<Option<BBox>>>, GeometryError> {
    let n_series = values.len();
    let n_groups = values.first().map_or(0, Vec::len);
    if n_series == 0 || n_groups == 0 {
        return Err(GeometryError::Empty);
    }
    let mut max = 0.0f64;
    for v in values.iter().flatten().flatten() {
        if *v < 0.0 {
            return Err(GeometryError::Negative(v.to_string()));
        }
        max = max.max(*v);
    }
    if max <= 0.0 {
        return Err(GeometryError::AllZeroValues);
    }
    let plot = layout.plot;
    let slot = plot.width() / n_groups as f64;
    let inner = slot * (1.0 - layout.bar_gap);
    let pad = (slot - inner) / 2.0;
    let bar_w = inner / n_series as f64;
    Ok(values
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .enumerate()
                .map(|(g, v)| {
                    let v = (*v)?;
                    let x0 = plot.x_min + g as f64 * slot + pad + s as f64 * bar_w;
                    let y0 = plot.y_min + (1.0 - v / max) * plot.height();
                    Some(BBox::unchecked(x0, y0, (x0 + bar_w).min(plot.x_max), plot.y_max))
                })
                .collect()
        })
        .collect())
}

/// Angular layout of one pie slice, in degrees clockwise from 12 o'clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub start_deg: f64,
    pub end_deg: f64,
    /// Exact angular extent.
    pub extent: BigRational,
    pub bbox: BBox,
}

/// Exact angular extents (degrees) proportional to value share; the last
/// slice takes the remainder so the extents sum to exactly 360.
pub fn pie_extents(values: &[f64]) -> Result<Vec<BigRational>, GeometryError> {
    if values.is_empty() {
        return Err(GeometryError::Empty);
    }
    let mut exact = Vec::with_capacity(values.len());
    for &v in values {
        if !(v >= 0.0) {
            return Err(GeometryError::Negative(v.to_string()));
        }
        exact.push(BigRational::from_float(v).ok_or(GeometryError::Negative(v.to_string()))?);
    }
    let total: BigRational = exact.iter().cloned().sum();
    if total.is_zero() {
        return Err(GeometryError::ZeroSum);
    }
    let full = BigRational::from_integer(BigInt::from(360));
    let mut extents: Vec<BigRational> = exact[..exact.len() - 1]
        .iter()
        .map(|v| v * &full / &total)
        .collect();
    let used: BigRational = extents.iter().cloned().sum();
    extents.push(full - used);
    Ok(extents)
}

/// Unit direction for an angle measured clockwise from 12 o'clock, with
/// quarter turns snapped to exact values.
pub fn direction(deg: f64) -> (f64, f64) {
    let turns = deg / 90.0;
    if turns.fract() == 0.0 {
        return match (turns as i64).rem_euclid(4) {
            0 => (0.0, -1.0),
            1 => (1.0, 0.0),
            2 => (0.0, 1.0),
            _ => (-1.0, 0.0),
        };
    }
    let r = deg.to_radians();
    (r.sin(), -r.cos())
}

/// Pie slices clockwise from 12 o'clock. Each box is the tight box over the
/// center, both radial endpoints and the arc's axis extremes inside the
/// slice's angular interval.
pub fn pie_geometry(values: &[f64], layout: &Layout) -> Result<Vec<Slice>, GeometryError> {
    let extents = pie_extents(values)?;
    let (cx, cy) = layout.pie_center;
    let (rx, ry) = layout.pie_radii();
    let mut start = BigRational::zero();
    let mut slices = Vec::with_capacity(extents.len());
    for extent in extents {
        let end = &start + &extent;
        let s = start.to_f64().unwrap_or(0.0);
        let e = end.to_f64().unwrap_or(360.0);
        let at = |deg: f64| {
            let (dx, dy) = direction(deg);
            Point::new(cx + rx * dx, cy + ry * dy)
        };
        let mut pts = vec![Point::new(cx, cy), at(s), at(e)];
        for q in [0.0, 90.0, 180.0, 270.0, 360.0] {
            if q >= s && q <= e {
                pts.push(at(q));
            }
        }
        let bbox = BBox::unchecked(
            pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        slices.push(Slice { start_deg: s, end_deg: e, extent, bbox });
        start = end;
    }
    Ok(slices)
}

/// Line-chart points. `values[series][x]`: x positions are equally spaced
/// across the plot (a lone point sits at the left edge); y maps the global
/// value range linearly onto the plot with the maximum at the top. A
/// degenerate range maps to the vertical midline.
pub fn line_geometry(values: &[Vec<Option<f64>>], layout: &Layout) -> Vec<Vec<Option<Point>>> {
    let plot = layout.plot;
    let n_x = values.first().map_or(0, Vec::len);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.iter().flatten().flatten() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = hi - lo;
    values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, v)| {
                    let v = (*v)?;
                    let fx = if n_x > 1 { i as f64 / (n_x - 1) as f64 } else { 0.0 };
                    let fy = if span > 0.0 { 1.0 - (v - lo) / span } else { 0.5 };
                    Some(Point::new(plot.x_min + fx * plot.width(), plot.y_min + fy * plot.height()))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_layout(gap: f64) -> Layout {
        Layout {
            width: 1000,
            height: 1000,
            plot: BBox::unchecked(0.0, 0.0, 1.0, 1.0),
            bar_gap: gap,
            pie_center: (0.5, 0.5),
            pie_radius: 0.5,
        }
    }

    fn some(rows: &[&[f64]]) -> Vec<Vec<Option<f64>>> {
        rows.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect()
    }

    #[test]
    fn bars_two_groups_one_series() {
        // slot = 0.5; heights 10/20 and 20/20 of the plot.
        let b = bar_geometry(&some(&[&[10.0, 20.0]]), &unit_layout(0.0)).unwrap();
        assert_eq!(b[0][0], Some(BBox::unchecked(0.0, 0.5, 0.5, 1.0)));
        assert_eq!(b[0][1], Some(BBox::unchecked(0.5, 0.0, 1.0, 1.0)));
    }

    #[test]
    fn lone_bar_fills_plot() {
        let mut layout = unit_layout(0.0);
        layout.plot = BBox::unchecked(0.1, 0.1, 0.9, 0.9);
        let b = bar_geometry(&some(&[&[5.0]]), &layout).unwrap();
        let bar = b[0][0].unwrap();
        assert_eq!((bar.y_min, bar.y_max), (0.1, 0.9));
        assert!((bar.x_min - 0.1).abs() < 1e-12 && (bar.x_max - 0.9).abs() < 1e-12);
        let b = bar_geometry(&some(&[&[123.4]]), &unit_layout(0.0)).unwrap();
        assert_eq!(b[0][0], Some(BBox::unchecked(0.0, 0.0, 1.0, 1.0)));
    }

    #[test]
    fn two_series_split_the_group() {
        let b = bar_geometry(&some(&[&[10.0], &[10.0]]), &unit_layout(0.0)).unwrap();
        assert_eq!(b[0][0], Some(BBox::unchecked(0.0, 0.0, 0.5, 1.0)));
        assert_eq!(b[1][0], Some(BBox::unchecked(0.5, 0.0, 1.0, 1.0)));
    }

    #[test]
    fn bar_gap_centers_bars_in_slot() {
        let b = bar_geometry(&some(&[&[1.0]]), &unit_layout(0.5)).unwrap();
        assert_eq!(b[0][0], Some(BBox::unchecked(0.25, 0.0, 0.75, 1.0)));
    }

    #[test]
    fn bar_errors() {
        assert_eq!(bar_geometry(&some(&[&[0.0, 0.0]]), &unit_layout(0.0)), Err(GeometryError::AllZeroValues));
        assert!(matches!(bar_geometry(&some(&[&[-1.0]]), &unit_layout(0.0)), Err(GeometryError::Negative(_))));
    }

    #[test]
    fn pie_zero_sum() {
        assert_eq!(pie_geometry(&[0.0, 0.0], &unit_layout(0.0)), Err(GeometryError::ZeroSum));
    }

    #[test]
    fn pie_extents_are_exact() {
        let e = pie_extents(&[0.1, 0.2, 0.3, 1.7]).unwrap();
        let sum: BigRational = e.into_iter().sum();
        assert_eq!(sum, BigRational::from_integer(BigInt::from(360)));
    }

    #[test]
    fn lines() {
        let layout = unit_layout(0.0);
        let p = line_geometry(&some(&[&[0.0, 10.0]]), &layout);
        assert_eq!(p[0], vec![Some(Point::new(0.0, 1.0)), Some(Point::new(1.0, 0.0))]);
        let p = line_geometry(&some(&[&[5.0, 5.0, 5.0]]), &layout);
        assert!(p[0].iter().all(|q| q.unwrap().y == 0.5));
        let p = line_geometry(&some(&[&[7.0]]), &layout);
        assert_eq!(p[0][0], Some(Point::new(0.0, 0.5)));
    }
}
