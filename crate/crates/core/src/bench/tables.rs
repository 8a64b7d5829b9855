//! Benchmark tables: macro scores per encoder and strategy, and per-class
//! scores per encoder. Scores are multiplied by 100 at emission.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{BenchmarkResult, ExtractionStrategy};

pub const BOW_ENCODER_ID: &str = "bag-of-words";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTables {
    pub schema_version: u32,
    pub k: usize,
    pub results: Vec<BenchmarkResult>,
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Rows are encoders, columns are extraction strategies; cells hold the
/// macro-averaged score. Strategy-less results (the baseline) are skipped.
pub fn table_strategies_csv(results: &[BenchmarkResult]) -> String {
    let mut out = String::from("Encoder");
    for s in ExtractionStrategy::ALL {
        out.push(',');
        out.push_str(s.as_str());
    }
    out.push('\n');
    let encoders: Vec<&str> = {
        let mut seen = BTreeSet::new();
        results.iter().filter(|r| r.strategy.is_some()).map(|r| r.encoder_id.as_str()).filter(|e| seen.insert(*e)).collect()
    };
    for enc in encoders {
        out.push_str(enc);
        for s in ExtractionStrategy::ALL {
            out.push(',');
            if let Some(r) = results.iter().find(|r| r.encoder_id == enc && r.strategy == Some(s)) {
                out.push_str(&pct(r.scores.macro_avg));
            }
        }
        out.push('\n');
    }
    out
}

/// Rows are classes plus a final `Macro` row, columns are results (one per
/// encoder, labelled `encoder` or `encoder/strategy` when an encoder
/// appears more than once).
pub fn table_per_class_csv(results: &[BenchmarkResult]) -> String {
    let label = |r: &BenchmarkResult| {
        let dup = results.iter().filter(|o| o.encoder_id == r.encoder_id).count() > 1;
        match (dup, r.strategy) {
            (true, Some(s)) => format!("{}/{}", r.encoder_id, s.as_str()),
            _ => r.encoder_id.clone(),
        }
    };
    let classes: BTreeSet<&String> = results.iter().flat_map(|r| r.scores.per_class.keys()).collect();
    let mut out = String::from("Class");
    for r in results {
        out.push(',');
        out.push_str(&label(r));
    }
    out.push('\n');
    for c in classes {
        out.push_str(c);
        for r in results {
            out.push(',');
            if let Some(v) = r.scores.per_class.get(c) {
                out.push_str(&pct(*v));
            }
        }
        out.push('\n');
    }
    out.push_str("Macro");
    for r in results {
        out.push(',');
        out.push_str(&pct(r.scores.macro_avg));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{ClassScores, LabelMode};
    use std::collections::BTreeMap;

    fn result(enc: &str, s: Option<ExtractionStrategy>, a: f64, b: f64) -> BenchmarkResult {
        let per_class = BTreeMap::from([("Edema".to_string(), a), ("No Finding".to_string(), b)]);
        BenchmarkResult {
            encoder_id: enc.into(),
            strategy: s,
            label_mode: LabelMode::PrimaryClass,
            n_reports: 10,
            scores: ClassScores { k: 10, per_class, macro_avg: (a + b) / 2.0, global: 0.5 },
        }
    }

    #[test]
    fn layouts() {
        let results = vec![
            result("CXR-BERT-specialized", Some(ExtractionStrategy::ClsHiddenState), 0.6, 0.62),
            result("CXR-BERT-specialized", Some(ExtractionStrategy::MeanHiddenStates), 0.5, 0.5),
            result(BOW_ENCODER_ID, None, 0.3, 0.4),
        ];
        let t2 = table_strategies_csv(&results);
        assert_eq!(
            t2,
            "Encoder,cls_hidden_state,mean_hidden_states,pooler_output,model_specific\n\
             CXR-BERT-specialized,61.0,50.0,,\n"
        );
        let t3 = table_per_class_csv(&results);
        let lines: Vec<&str> = t3.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].ends_with("CXR-BERT-specialized/mean_hidden_states,bag-of-words"));
        assert_eq!(lines[3], "Macro,61.0,50.0,35.0");
    }
}
