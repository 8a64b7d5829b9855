//! Grayscale image samples and their on-disk encodings (PNG and raw f32
//! with a JSON sidecar).

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use super::{IngestError, LabelVector};

/// How a generated image was produced. Written to PNG sidecars so that a
/// generated suite can be re-scored from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub caption: String,
    pub seed: u64,
    pub steps: usize,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_label: Option<u8>,
}

/// A single-channel image with pixels normalised to `[0, 1]`.
///
/// `source_range` records the original dynamic range (255 for 8-bit, 65535
/// for 16-bit) so that errors can be reported in source units.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    id: String,
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    source_range: f64,
    pub labels: Option<LabelVector>,
    pub generation: Option<GenerationMeta>,
}

impl ImageSample {
    /// Row-major pixels in `[0, 1]`.
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        source_range: f64,
    ) -> Result<Self, IngestError> {
        let id = id.into();
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(IngestError::Shape { id, width, height, len: pixels.len() });
        }
        if !(source_range > 0.0 && source_range.is_finite()) {
            return Err(IngestError::SourceRange { id, range: source_range });
        }
        if let Some(&value) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IngestError::Range { id, value: value * source_range, range: source_range });
        }
        Ok(Self { id, width, height, pixels, source_range, labels: None, generation: None })
    }

    /// Like [`ImageSample::new`] but clamps pixels into `[0, 1]` first
    /// (non-finite values become 0). Used for model outputs.
    pub fn from_unclamped(
        id: impl Into<String>,
        width: usize,
        height: usize,
        mut pixels: Vec<f64>,
        source_range: f64,
    ) -> Result<Self, IngestError> {
        for p in &mut pixels {
            *p = if p.is_finite() { p.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self::new(id, width, height, pixels, source_range)
    }

    /// Builds a sample from values in source units (`0..=source_range`).
    pub fn from_source_units(
        id: impl Into<String>,
        width: usize,
        height: usize,
        values: &[f64],
        source_range: f64,
    ) -> Result<Self, IngestError> {
        let id = id.into();
        if let Some(&value) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0 && **v <= source_range)) {
            return Err(IngestError::Range { id, value, range: source_range });
        }
        let pixels = values.iter().map(|v| v / source_range).collect();
        Self::new(id, width, height, pixels, source_range)
    }

    pub fn with_labels(mut self, labels: LabelVector) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn source_range(&self) -> f64 {
        self.source_range
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixels scaled back to source units.
    pub fn source_values(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p * self.source_range).collect()
    }
}

/// Decodes an 8- or 16-bit grayscale PNG.
pub fn decode_png(id: &str, bytes: &[u8]) -> Result<ImageSample, IngestError> {
    let fail = |m: String| IngestError::Png { id: id.to_string(), message: m };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| fail(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| fail("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| fail(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(fail(format!("expected grayscale, found {:?}", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let (values, range): (Vec<f64>, f64) = match info.bit_depth {
        png::BitDepth::Eight => (buf[..w * h].iter().map(|&b| b as f64).collect(), 255.0),
        png::BitDepth::Sixteen => (
            buf[..w * h * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect(),
            65535.0,
        ),
        other => return Err(fail(format!("unsupported bit depth {other:?}"))),
    };
    ImageSample::from_source_units(id, w, h, &values, range)
}

/// Encodes as 16-bit grayscale PNG. No time or text chunks are written, so
/// the output is a pure function of the pixels.
pub fn encode_png16(img: &ImageSample) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().expect("in-memory png header");
        let data: Vec<u8> = img
            .pixels
            .iter()
            .flat_map(|p| ((p * 65535.0).round() as u16).to_be_bytes())
            .collect();
        writer.write_image_data(&data).expect("in-memory png data");
    }
    out
}

/// Encodes as 8-bit grayscale PNG.
pub fn encode_png8(img: &ImageSample) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        let data: Vec<u8> = img.pixels.iter().map(|p| (p * 255.0).round() as u8).collect();
        writer.write_image_data(&data).expect("in-memory png data");
    }
    out
}
