//! Minimal aliasing-free drawing on RGB buffers. A pixel belongs to a shape
//! when its center lies inside it.

use image::{Rgb, RgbImage};

use crate::model::BBox;

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub const GRAY: Rgb<u8> = Rgb([128, 128, 128]);

pub const GLYPH: u32 = 8;

/// Pixel index range `[lo, hi)` whose centers fall in `[a, b)` (pixel units).
pub fn span(a: f64, b: f64, limit: u32) -> (u32, u32) {
    let lo = (a - 0.5).ceil().max(0.0);
    let hi = (b - 0.5).ceil().max(0.0);
    (lo.min(limit as f64) as u32, hi.min(limit as f64) as u32)
}

pub fn fill_box(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (x0, x1) = span(b.x_min * w as f64, b.x_max * w as f64, w);
    let (y0, y1) = span(b.y_min * h as f64, b.y_max * h as f64, h);
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x, y, color);
        }
    }
}

pub fn fill_rect_px(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Rgb<u8>) {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    for yy in y.max(0)..(y + h).min(ih) {
        for xx in x.max(0)..(x + w).min(iw) {
            img.put_pixel(xx as u32, yy as u32, color);
        }
    }
}

/// Rectangle outline with the given stroke, drawn inside the box's pixel span.
pub fn outline_box(img: &mut RgbImage, b: &BBox, stroke: i64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (x0, x1) = span(b.x_min * w as f64, b.x_max * w as f64, w);
    let (y0, y1) = span(b.y_min * h as f64, b.y_max * h as f64, h);
    let (x0, x1, y0, y1) = (x0 as i64, x1 as i64, y0 as i64, y1 as i64);
    let (bw, bh) = (x1 - x0, y1 - y0);
    fill_rect_px(img, x0, y0, bw, stroke.min(bh), color);
    fill_rect_px(img, x0, y1 - stroke.min(bh), bw, stroke.min(bh), color);
    fill_rect_px(img, x0, y0, stroke.min(bw), bh, color);
    fill_rect_px(img, x1 - stroke.min(bw), y0, stroke.min(bw), bh, color);
}

pub fn fill_disc_px(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (x0, x1) = span(cx - r, cx + r, w);
    let (y0, y1) = span(cy - r, cy + r, h);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Thick segment between two pixel-space points.
pub fn line_px(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), thickness: f64, color: Rgb<u8>) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let half = thickness / 2.0;
    let (w, h) = img.dimensions();
    let (x0, x1) = span(a.0.min(b.0) - half, a.0.max(b.0) + half, w);
    let (y0, y1) = span(a.1.min(b.1) - half, a.1.max(b.1) + half, h);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if qx * qx + qy * qy <= half * half {
                img.put_pixel(x, y, color);
            }
        }
    }
}

pub fn text_width(text: &str, scale: u32) -> u32 {
    text.chars().count() as u32 * GLYPH * scale
}

/// Draws ASCII text with the embedded 8x8 font; other characters render as '?'.
/// `(x, y)` is the top-left corner in pixels; glyphs outside the image are clipped.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, color: Rgb<u8>) {
    let s = scale as i64;
    for (i, ch) in text.chars().enumerate() {
        let code = if ch.is_ascii() && !ch.is_ascii_control() { ch as usize } else { '?' as usize };
        let glyph = font8x8::legacy::BASIC_LEGACY[code];
        let gx = x + i as i64 * GLYPH as i64 * s;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) != 0 {
                    fill_rect_px(img, gx + col * s, y + row as i64 * s, s, s, color);
                }
            }
        }
    }
}

/// Shortens `text` to at most `max_chars`, marking the cut with '~'.
pub fn fit(text: &str, max_chars: usize) -> String {
    let n = text.chars().count();
    if n <= max_chars || max_chars == 0 {
        return if max_chars == 0 { String::new() } else { text.to_string() };
    }
    let mut s: String = text.chars().take(max_chars.saturating_sub(1)).collect();
    s.push('~');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_uses_pixel_centers() {
        assert_eq!(span(0.0, 10.0, 100), (0, 10));
        assert_eq!(span(0.4, 1.6, 100), (0, 2));
        assert_eq!(span(0.6, 1.4, 100), (1, 1));
        assert_eq!(span(-5.0, 500.0, 100), (0, 100));
    }

    #[test]
    fn fill_box_covers_exact_pixels() {
        let mut img = RgbImage::from_pixel(10, 10, WHITE);
        fill_box(&mut img, &BBox::unchecked(0.2, 0.0, 0.5, 1.0), BLACK);
        let black: Vec<u32> = (0..10).filter(|x| *img.get_pixel(*x, 5) == BLACK).collect();
        assert_eq!(black, vec![2, 3, 4]);
    }

    #[test]
    fn text_draws_ink() {
        let mut img = RgbImage::from_pixel(40, 20, WHITE);
        draw_text(&mut img, 0, 0, "A1", 2, BLACK);
        assert!(img.pixels().any(|p| *p == BLACK));
        assert_eq!(text_width("A1", 2), 32);
    }

    #[test]
    fn fit_truncates() {
        assert_eq!(fit("abcdef", 4), "abc~");
        assert_eq!(fit("abc", 4), "abc");
    }
}
