//! Atomic file writes and overlay PNGs that carry their boxes as metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chartattrib_core::model::BBox;
use image::RgbImage;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// tEXt keyword holding the JSON list of outlined boxes.
pub const OVERLAY_KEY: &str = "chartattrib:boxes";

/// Writes to a temp file in the target directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::bad_file(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::bad_file(path, e))
}

fn encode_png_with_text(img: &RgbImage, key: &str, text: &str) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), img.width(), img.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk(key.to_string(), text.to_string())?;
        let mut writer = enc.write_header()?;
        writer.write_image_data(img.as_raw())?;
        writer.finish()?;
    }
    Ok(out)
}

/// Writes `img` (already carrying the outlines) with `boxes` recorded in a
/// tEXt chunk so the overlay can be checked against citations.json.
pub fn write_overlay(path: &Path, img: &RgbImage, boxes: &[BBox]) -> Result<(), CliError> {
    let meta = serde_json::to_string(boxes).map_err(|e| CliError::bad_file(path, e))?;
    let bytes = encode_png_with_text(img, OVERLAY_KEY, &meta).map_err(|e| CliError::bad_file(path, e))?;
    write_atomic(path, &bytes)
}

/// Boxes recorded in an overlay PNG written by [`write_overlay`].
pub fn read_overlay_boxes(path: &Path) -> Result<Vec<BBox>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| CliError::bad_file(path, e))?;
    let chunk = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == OVERLAY_KEY)
        .ok_or_else(|| CliError::bad_file(path, format!("no {OVERLAY_KEY} chunk")))?;
    serde_json::from_str(&chunk.text).map_err(|e| CliError::bad_file(path, e))
}
