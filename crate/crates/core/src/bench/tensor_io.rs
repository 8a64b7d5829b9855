//! On-disk encoder outputs.
//!
//! An index file holds one JSON object per line:
//!
//! ```json
//! {"id": "r1", "encoder_id": "clip", "payload": "clip.bin", "tokens": 12, "dim": 768,
//!  "token_states_offset": 0, "pooled_offset": 36864, "model_specific_offset": null}
//! ```
//!
//! Offsets are byte offsets into the payload file (resolved relative to the
//! index), which stores little-endian f32 values. `token_states` is
//! `tokens × dim` row-major; `pooled` and `model_specific` are `dim` long.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchError, EncoderOutput};
use crate::tensor::Matrix;
use crate::{io, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderRecord {
    pub id: String,
    pub output: EncoderOutput,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexLine {
    id: String,
    encoder_id: String,
    payload: PathBuf,
    tokens: usize,
    dim: usize,
    token_states_offset: usize,
    #[serde(default)]
    pooled_offset: Option<usize>,
    #[serde(default)]
    model_specific_offset: Option<usize>,
}

/// Writes `records` to `index_path`, with all tensors in one payload file
/// next to it named `payload_name`.
pub fn write_encoder_outputs(index_path: &Path, payload_name: &str, records: &[EncoderRecord]) -> Result<()> {
    let mut payload = Vec::new();
    let mut index = String::new();
    for r in records {
        let o = &r.output;
        let token_states_offset = payload.len();
        io::push_f32_le(&mut payload, o.token_states.as_slice());
        let mut push_opt = |v: &Option<Vec<f64>>| {
            v.as_ref().map(|v| {
                let at = payload.len();
                io::push_f32_le(&mut payload, v);
                at
            })
        };
        let pooled_offset = push_opt(&o.pooled);
        let model_specific_offset = push_opt(&o.model_specific);
        let line = IndexLine {
            id: r.id.clone(),
            encoder_id: o.encoder_id.clone(),
            payload: PathBuf::from(payload_name),
            tokens: o.len(),
            dim: o.dim(),
            token_states_offset,
            pooled_offset,
            model_specific_offset,
        };
        index.push_str(&serde_json::to_string(&line).expect("index line serializes"));
        index.push('\n');
    }
    let dir = index_path.parent().unwrap_or(Path::new("."));
    io::write_atomic(&dir.join(payload_name), &payload)?;
    io::write_atomic(index_path, index.as_bytes())
}

/// Reads an index and its payloads, keyed by record id.
pub fn read_encoder_outputs(index_path: &Path) -> Result<BTreeMap<String, EncoderOutput>> {
    let text = io::read_to_string(index_path)?;
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let mut payloads: BTreeMap<PathBuf, Vec<u8>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let locus = format!("{}:{}", index_path.display(), n + 1);
        let fail = |m: String| BenchError::Format { locus: locus.clone(), message: m };
        let entry: IndexLine = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if entry.tokens == 0 {
            return Err(fail("tokens must be at least 1".into()).into());
        }
        let path = io::resolve(dir, &entry.payload);
        if !payloads.contains_key(&path) {
            let bytes = io::read_bytes(&path)?;
            payloads.insert(path.clone(), bytes);
        }
        let bytes = &payloads[&path];
        let read = |offset: usize, count: usize| {
            io::f32_le_at(bytes, offset, count).ok_or_else(|| fail(format!("payload too short at offset {offset}")))
        };
        let states = read(entry.token_states_offset, entry.tokens * entry.dim)?;
        let output = EncoderOutput {
            token_states: Matrix::from_vec(entry.tokens, entry.dim, states),
            pooled: entry.pooled_offset.map(|o| read(o, entry.dim)).transpose()?,
            model_specific: entry.model_specific_offset.map(|o| read(o, entry.dim)).transpose()?,
            encoder_id: entry.encoder_id,
        };
        if out.insert(entry.id.clone(), output).is_some() {
            return Err(fail(format!("duplicate id {:?}", entry.id)).into());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = EncoderOutput::new("enc", Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.25]]).unwrap());
        a.pooled = Some(vec![3.0, 4.0]);
        let mut b = EncoderOutput::new("enc", Matrix::from_rows(&[vec![-1.0, 0.0]]).unwrap());
        b.model_specific = Some(vec![0.125, 8.0]);
        let recs = vec![EncoderRecord { id: "a".into(), output: a.clone() }, EncoderRecord { id: "b".into(), output: b.clone() }];
        let idx = dir.path().join("enc.jsonl");
        write_encoder_outputs(&idx, "enc.bin", &recs).unwrap();
        let back = read_encoder_outputs(&idx).unwrap();
        assert_eq!(back["a"], a);
        assert_eq!(back["b"], b);
    }

    #[test]
    fn short_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.bin"), [0u8; 4]).unwrap();
        std::fs::write(
            dir.path().join("i.jsonl"),
            r#"{"id":"x","encoder_id":"e","payload":"p.bin","tokens":1,"dim":2,"token_states_offset":0}"#,
        )
        .unwrap();
        let err = read_encoder_outputs(&dir.path().join("i.jsonl")).unwrap_err();
        assert!(err.to_string().contains("i.jsonl:1"), "{err}");
    }
}
