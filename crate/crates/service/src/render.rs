//! Query payloads: decoded images become grayscale PNGs, low-dimensional
//! samples are sent as raw coordinates.

use base64::Engine;
use leapfactual::data::SampleShape;
use serde::Serialize;

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum QueryPayload {
    Image { png_base64: String, width: usize, height: usize },
    Point { z: Vec<f32>, centers: Vec<Vec<f64>> },
}

/// Encodes `[0, 1]` intensities as an 8-bit grayscale PNG.
pub fn png_gray8(values: &[f32], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(ServiceError::Validation(format!("{} pixels for a {width}x{height} image", values.len())));
    }
    let pixels: Vec<u8> = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| ServiceError::Setup(format!("png: {e}")))?;
    writer.write_image_data(&pixels).map_err(|e| ServiceError::Setup(format!("png: {e}")))?;
    writer.finish().map_err(|e| ServiceError::Setup(format!("png: {e}")))?;
    Ok(out)
}

pub fn payload(x: &[f32], shape: SampleShape, centers: &[Vec<f64>]) -> Result<QueryPayload> {
    Ok(match shape {
        SampleShape::Image { rows, cols } => QueryPayload::Image {
            png_base64: base64::engine::general_purpose::STANDARD.encode(png_gray8(x, cols, rows)?),
            width: cols,
            height: rows,
        },
        SampleShape::Vector { .. } => QueryPayload::Point {
            z: x.to_vec(),
            centers: centers.to_vec(),
        },
    })
}
