//! Regenerates `fixtures/toy_classifier.json`.
//!
//! cargo run -p latentbench --example fit_toy_classifier

use latentbench::eval::{FitConfig, ToyClassifier};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clf = ToyClassifier::fit_synthetic(FitConfig::default())?;
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy_classifier.json");
    latentbench::io::write_json(&path, &clf)?;
    println!("wrote {}", path.display());
    Ok(())
}
