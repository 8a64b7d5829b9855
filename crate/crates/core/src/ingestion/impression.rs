//! Impression-section extraction from free-text radiology reports.

use std::sync::OnceLock;

use regex::Regex;

use super::IngestError;

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bimpression\s*:").expect("valid regex"))
}

// An all-caps header of at least three characters followed by a colon,
// starting a line or following whitespace ("NOTIFICATION:", "CT SCAN:").
fn section_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)(?:^|\s)[A-Z][A-Z ]{2,}:").expect("valid regex"))
}

/// Returns the text after the last `IMPRESSION:` marker (case-insensitive),
/// up to the next all-caps section header, trimmed.
///
/// The result is always a contiguous substring of `full_text`.
pub fn extract_impression(full_text: &str) -> Result<&str, IngestError> {
    let last = marker().find_iter(full_text).last().ok_or(IngestError::MissingSection)?;
    let rest = &full_text[last.end()..];
    let end = section_header().find(rest).map_or(rest.len(), |m| m.start());
    let impression = rest[..end].trim();
    if impression.is_empty() {
        return Err(IngestError::EmptySection);
    }
    Ok(impression)
}
