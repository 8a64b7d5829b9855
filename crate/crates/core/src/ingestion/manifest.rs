//! Dataset manifests.
//!
//! A manifest is a JSON document listing record paths relative to the
//! manifest's directory:
//!
//! ```json
//! {"schema_version": 1, "kind": "images",
//!  "records": ["a.png", {"path": "b.json", "labels": [1, 0, null, ...]}]}
//! ```
//!
//! * `images`: each record is a grayscale PNG (8 or 16 bit) or a JSON
//!   sidecar `{id, width, height, source_range, data?, labels?, generation?}`
//!   whose `data` file (default: the sidecar path with a `.raw` extension)
//!   is either a PNG or row-major little-endian f32 values in source units.
//! * `reports`: each record is a JSON-lines file of
//!   `{"id", "text", "labels": [14 × -1|0|1|null]}` objects.
//! * `prompts`: each record is a text file with one prompt per line; blank
//!   lines are skipped.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{decode_png, GenerationMeta, ImageSample, IngestError, LabelVector, LabeledReport};
use crate::{io, par, Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Images,
    Reports,
    Prompts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestRecord {
    Path(PathBuf),
    Entry {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<LabelVector>,
    },
}

impl ManifestRecord {
    fn path(&self) -> &Path {
        match self {
            ManifestRecord::Path(p) | ManifestRecord::Entry { path: p, .. } => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: DatasetKind,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSidecar {
    id: String,
    width: usize,
    height: usize,
    source_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<LabelVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generation: Option<GenerationMeta>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ReportLine {
    id: String,
    text: String,
    labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Images(Vec<ImageSample>),
    Reports(Vec<LabeledReport>),
    Prompts(Vec<String>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Images(v) => v.len(),
            Dataset::Reports(v) => v.len(),
            Dataset::Prompts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_images(self) -> Option<Vec<ImageSample>> {
        match self {
            Dataset::Images(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_reports(self) -> Option<Vec<LabeledReport>> {
        match self {
            Dataset::Reports(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_prompts(self) -> Option<Vec<String>> {
        match self {
            Dataset::Prompts(v) => Some(v),
            _ => None,
        }
    }
}

/// A loaded value plus any non-fatal warnings raised while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub data: T,
    pub warnings: Vec<String>,
}

/// Loads every record listed in a manifest. Images and reports come back
/// sorted by id; prompts keep file order.
pub fn load_manifest(path: &Path, kind: DatasetKind) -> Result<Loaded<Dataset>> {
    let manifest: Manifest = io::read_json(path)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(IngestError::format(
            path.display().to_string(),
            format!("unsupported schema_version {}", manifest.schema_version),
        )
        .into());
    }
    if manifest.kind != kind {
        return Err(IngestError::format(
            path.display().to_string(),
            format!("manifest kind is {:?}, expected {kind:?}", manifest.kind),
        )
        .into());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut warnings = Vec::new();
    if manifest.records.is_empty() {
        let w = format!("{}: manifest lists no records", path.display());
        tracing::warn!("{w}");
        warnings.push(w);
    }

    let data = match kind {
        DatasetKind::Images => {
            let mut images =
                par::try_map_slice(&manifest.records, |r| load_image_record(base, r))?;
            images.sort_by(|a, b| a.id().cmp(b.id()));
            check_unique(path, images.iter().map(|i| i.id()))?;
            Dataset::Images(images)
        }
        DatasetKind::Reports => {
            let chunks = par::try_map_slice(&manifest.records, |r| {
                let p = io::resolve(base, r.path());
                let text = io::read_to_string(&p)?;
                parse_reports_jsonl(&p.display().to_string(), &text)
            })?;
            let mut reports: Vec<LabeledReport> = chunks.into_iter().flatten().collect();
            reports.sort_by(|a, b| a.id.cmp(&b.id));
            check_unique(path, reports.iter().map(|r| r.id.as_str()))?;
            for r in reports.iter().filter(|r| !r.is_valid()) {
                let w = format!("report {}: no impression section, flagged invalid", r.id);
                tracing::warn!("{w}");
                warnings.push(w);
            }
            Dataset::Reports(reports)
        }
        DatasetKind::Prompts => {
            let files = par::try_map_slice(&manifest.records, |r| io::read_to_string(&io::resolve(base, r.path())))?;
            let prompts = files
                .iter()
                .flat_map(|f| f.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from))
                .collect();
            Dataset::Prompts(prompts)
        }
    };
    Ok(Loaded { data, warnings })
}

fn check_unique<'a>(path: &Path, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut prev: Option<&str> = None;
    for id in ids {
        if prev == Some(id) {
            return Err(IngestError::format(path.display().to_string(), format!("duplicate id {id:?}")).into());
        }
        prev = Some(id);
    }
    Ok(())
}

fn load_image_record(base: &Path, record: &ManifestRecord) -> Result<ImageSample> {
    let path = io::resolve(base, record.path());
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut img = match ext.as_str() {
        "png" => {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            decode_png(&stem, &io::read_bytes(&path)?)?
        }
        "json" => load_sidecar(&path)?,
        _ => {
            return Err(IngestError::format(path.display().to_string(), "image records must be .png or .json").into())
        }
    };
    if let ManifestRecord::Entry { id, labels, .. } = record {
        if let Some(id) = id {
            img = img.with_id(id.clone());
        }
        if let Some(l) = labels {
            img.labels = Some(*l);
        }
    }
    Ok(img)
}

fn load_sidecar(path: &Path) -> Result<ImageSample> {
    let sidecar: ImageSidecar = io::read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let data = sidecar.data.clone().unwrap_or_else(|| PathBuf::from(path.file_name().unwrap()).with_extension("raw"));
    let data_path = io::resolve(dir, &data);
    let bytes = io::read_bytes(&data_path)?;
    let is_png = data_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let mut img = if is_png {
        let img = decode_png(&sidecar.id, &bytes)?;
        if (img.width(), img.height()) != (sidecar.width, sidecar.height) {
            return Err(Error::from(IngestError::format(
                data_path.display().to_string(),
                format!("png is {}x{}, sidecar says {}x{}", img.width(), img.height(), sidecar.width, sidecar.height),
            )));
        }
        // the sidecar's declared range wins over the bit depth
        if img.source_range() != sidecar.source_range {
            let values: Vec<f64> = img.source_values();
            ImageSample::from_source_units(&sidecar.id, sidecar.width, sidecar.height, &values, sidecar.source_range)?
        } else {
            img
        }
    } else {
        let n = sidecar.width * sidecar.height;
        if bytes.len() != n * 4 {
            return Err(IngestError::format(
                data_path.display().to_string(),
                format!("expected {} bytes of f32 data, found {}", n * 4, bytes.len()),
            )
            .into());
        }
        let values = io::f32_le_at(&bytes, 0, n).expect("length checked");
        ImageSample::from_source_units(&sidecar.id, sidecar.width, sidecar.height, &values, sidecar.source_range)?
    };
    img.labels = sidecar.labels;
    img.generation = sidecar.generation;
    Ok(img)
}

/// Parses report JSON lines; `locus` prefixes error messages.
pub fn parse_reports_jsonl(locus: &str, text: &str) -> Result<Vec<LabeledReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let r: ReportLine = serde_json::from_str(line)
                .map_err(|e| IngestError::format(format!("{locus}:{}", n + 1), e.to_string()))?;
            Ok(LabeledReport::from_text(r.id, r.text, r.labels))
        })
        .collect()
}

pub fn write_reports_jsonl(path: &Path, reports: &[LabeledReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        let line = ReportLine { id: r.id.clone(), text: r.full_text.clone(), labels: r.labels };
        out.push_str(&serde_json::to_string(&line).expect("report serializes"));
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

/// Writes images as raw f32 + sidecar pairs and a manifest listing them.
/// Returns the manifest path.
pub fn write_image_collection(dir: &Path, images: &[ImageSample]) -> Result<PathBuf> {
    let mut records = Vec::with_capacity(images.len());
    for img in images {
        let stem = file_safe(img.id());
        let mut raw = Vec::with_capacity(img.pixels().len() * 4);
        io::push_f32_le(&mut raw, &img.source_values());
        io::write_atomic(&dir.join(format!("{stem}.raw")), &raw)?;
        let sidecar = ImageSidecar {
            id: img.id().to_string(),
            width: img.width(),
            height: img.height(),
            source_range: img.source_range(),
            data: Some(PathBuf::from(format!("{stem}.raw"))),
            labels: img.labels,
            generation: img.generation.clone(),
        };
        io::write_json(&dir.join(format!("{stem}.json")), &sidecar)?;
        records.push(ManifestRecord::Path(PathBuf::from(format!("{stem}.json"))));
    }
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA_VERSION, kind: DatasetKind::Images, records };
    let path = dir.join("manifest.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}

/// Writes a generated image as a 16-bit PNG plus JSON sidecar and returns
/// the sidecar's file name.
pub(crate) fn write_png_with_sidecar(dir: &Path, img: &ImageSample) -> Result<PathBuf> {
    let stem = file_safe(img.id());
    let png_name = PathBuf::from(format!("{stem}.png"));
    io::write_atomic(&dir.join(&png_name), &super::encode_png16(img))?;
    let sidecar = ImageSidecar {
        id: img.id().to_string(),
        width: img.width(),
        height: img.height(),
        source_range: 65535.0,
        data: Some(png_name),
        labels: img.labels,
        generation: img.generation.clone(),
    };
    let name = PathBuf::from(format!("{stem}.json"));
    io::write_json(&dir.join(&name), &sidecar)?;
    Ok(name)
}

/// Writes generated images as PNG + sidecar pairs with a manifest.
pub fn write_png_collection(dir: &Path, images: &[ImageSample]) -> Result<PathBuf> {
    let records = images
        .iter()
        .map(|img| write_png_with_sidecar(dir, img).map(ManifestRecord::Path))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA_VERSION, kind: DatasetKind::Images, records };
    let path = dir.join("manifest.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}
