use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use latentbench::bench::{write_encoder_outputs, EncoderOutput, EncoderRecord};
use latentbench::ingestion::{
    write_image_collection, write_reports_jsonl, ChexpertClass, LabelVector, LabeledReport,
};
use latentbench::synthetic::toy_corpus;
use latentbench::tensor::Matrix;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latentbench"));
    c.env_remove("LATENTBENCH_OUT").env_remove("LATENTBENCH_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(command: &str, config: &Path, out: &Path) -> (Output, Value) {
    let output = bin().arg(command).arg("--config").arg(config).arg("--out").arg(out).output().unwrap();
    let stdout = String::from_utf8(output.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "stdout: {stdout}");
    let summary: Value = serde_json::from_str(stdout.trim()).unwrap();
    (output, summary)
}

fn small_bundle() -> Value {
    json!({"toy": {"hidden": 16, "cond_width": 16, "vae_fit_images": 8}})
}

#[test]
fn unknown_key_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for cfg in [
        json!({"schema_version": 1, "seed": 1, "surprise": true}),
        json!({"schema_version": 1, "params": {"spec": {"per_prompt_count": 1}, "colour": "red"}}),
        json!({"schema_version": 1, "params": {"spec": {"per_prompt_count": 1, "extra": 0}}}),
    ] {
        let config = write_config(dir.path(), "bad.json", &cfg);
        let (output, summary) = run("generate", &config, &out);
        assert_eq!(output.status.code(), Some(2), "{summary}");
        assert_eq!(summary["status"], "error");
        assert!(!out.exists());
    }
}

#[test]
fn schema_version_and_command_mismatch_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), "v2.json", &json!({"schema_version": 2}));
    assert_eq!(run("generate", &config, &out).0.status.code(), Some(2));
    let config = write_config(dir.path(), "other.json", &json!({"schema_version": 1, "command": "fid-grid"}));
    assert_eq!(run("generate", &config, &out).0.status.code(), Some(2));
    assert!(!out.exists());
}

fn four_point_fixture(dir: &Path) {
    let effusion = LabelVector::from_positives(&[ChexpertClass::PleuralEffusion]);
    let normal = LabelVector::from_positives(&[]);
    let reports: Vec<LabeledReport> = [("r1", effusion), ("r2", effusion), ("r3", normal), ("r4", normal)]
        .into_iter()
        .map(|(id, l)| LabeledReport::from_text(id, format!("FINDINGS: see below. IMPRESSION: case {id}"), l))
        .collect();
    write_reports_jsonl(&dir.join("reports.jsonl"), &reports).unwrap();
    std::fs::write(
        dir.join("manifest.json"),
        json!({"schema_version": 1, "kind": "reports", "records": ["reports.jsonl"]}).to_string(),
    )
    .unwrap();
    let points = [[1.0, 0.0], [0.99, 0.01], [0.0, 1.0], [0.01, 0.99]];
    let records: Vec<EncoderRecord> = points
        .iter()
        .enumerate()
        .map(|(i, p)| EncoderRecord {
            id: format!("r{}", i + 1),
            output: EncoderOutput::new("fixture-encoder", Matrix::from_vec(1, 2, p.to_vec())),
        })
        .collect();
    write_encoder_outputs(&dir.join("outputs.jsonl"), "outputs.bin", &records).unwrap();
}

#[test]
fn text_bench_four_point_fixture() {
    let dir = tempfile::tempdir().unwrap();
    four_point_fixture(dir.path());
    let config = write_config(
        dir.path(),
        "bench.json",
        &json!({
            "schema_version": 1,
            "command": "text-bench",
            "params": {
                "reports": ".",
                "encoders": [{"index": "outputs.jsonl", "strategies": ["cls_hidden_state", "mean_hidden_states"]}],
                "k": 1,
                "bag_of_words": false
            }
        }),
    );
    let out = dir.path().join("out");
    let (output, summary) = run("text-bench", &config, &out);
    assert_eq!(output.status.code(), Some(0), "{summary}");
    let written: Value = serde_json::from_slice(&std::fs::read(out.join("bench.json")).unwrap()).unwrap();
    for r in written["results"].as_array().unwrap() {
        assert_eq!(r["global"], 1.0);
        assert_eq!(r["encoder_id"], "fixture-encoder");
    }
    assert_eq!(summary["results"][0]["global"], 1.0);
    assert!(out.join("table_strategies.csv").exists());
    assert!(out.join("table_per_class.csv").exists());
}

#[test]
fn recon_eval_identical_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let images = toy_corpus(3, 4, true);
    for side in ["orig", "recon"] {
        let d = dir.path().join(side);
        std::fs::create_dir_all(&d).unwrap();
        write_image_collection(&d, &images).unwrap();
    }
    let config = write_config(
        dir.path(),
        "recon.json",
        &json!({"schema_version": 1, "params": {"originals": "orig", "reconstructions": "recon", "fid_batch_size": 4}}),
    );
    let out = dir.path().join("out");
    let (output, summary) = run("recon-eval", &config, &out);
    assert_eq!(output.status.code(), Some(0), "{summary}");
    assert_eq!(summary["ssim_mean"], 1.0);
    assert_eq!(summary["rmse_mean"], 0.0);
    assert!(summary["fid_mean"].as_f64().unwrap().abs() < 1e-8);
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("recon_report.json")).unwrap()).unwrap();
    assert_eq!(report["ssim"]["mean"], 1.0);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "recon.json",
        &json!({"schema_version": 1, "params": {"originals": "nowhere", "reconstructions": "nowhere"}}),
    );
    let out = dir.path().join("out");
    let (output, summary) = run("recon-eval", &config, &out);
    assert_eq!(output.status.code(), Some(3), "{summary}");
    assert!(!out.exists());
}

#[test]
fn generate_is_byte_identical_and_feeds_classify_eval() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "gen.json",
        &json!({
            "schema_version": 1,
            "seed": 5,
            "params": {"bundle": small_bundle(), "spec": {"per_prompt_count": 2, "sampler": {"steps": 5}}}
        }),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let (output, summary) = run("generate", &config, out);
        assert_eq!(output.status.code(), Some(0), "{summary}");
        assert_eq!(summary["images"], 4);
    }
    let files: Vec<_> = std::fs::read_dir(a.join("images")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 9);
    for f in files {
        assert_eq!(std::fs::read(a.join("images").join(&f)).unwrap(), std::fs::read(b.join("images").join(&f)).unwrap());
    }

    let config = write_config(
        dir.path(),
        "cls.json",
        &json!({"schema_version": 1, "params": {"images": "a/images", "method": "toy"}}),
    );
    let out = dir.path().join("cls");
    let (output, summary) = run("classify-eval", &config, &out);
    assert_eq!(output.status.code(), Some(0), "{summary}");
    assert_eq!(summary["images"], 4);
    let csv = std::fs::read_to_string(out.join("classification.csv")).unwrap();
    assert!(csv.starts_with("Method,Prevalence,AUC,Accuracy,F1Score,Precision,Recall\ntoy,2,"));
}

#[test]
fn env_overrides_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "gen.json",
        &json!({"schema_version": 1, "params": {"bundle": small_bundle(), "spec": {"per_prompt_count": 1, "sampler": {"steps": 2}}}}),
    );
    let env_out = dir.path().join("from-env");
    let status = bin()
        .args(["generate", "--config"])
        .arg(&config)
        .env("LATENTBENCH_OUT", &env_out)
        .env("LATENTBENCH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(env_out.join("images/manifest.json").exists());

    let flag_out = dir.path().join("from-flag");
    let status = bin()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_out)
        .env("LATENTBENCH_OUT", dir.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(flag_out.join("images/manifest.json").exists());
    assert!(!dir.path().join("unused").exists());

    let bad = bin().args(["generate", "--config"]).arg(&config).env("LATENTBENCH_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_unet_writes_bundle_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "unet.json",
        &json!({
            "schema_version": 1,
            "seed": 2,
            "params": {
                "bundle": small_bundle(),
                "data": {"source": {"synthetic": {"negatives": 2, "positives": 2}}},
                "finetune": {"steps": 5, "batch_size": 2, "prior_sampler": {"steps": 3}}
            }
        }),
    );
    let out = dir.path().join("out");
    let (output, summary) = run("train-unet", &config, &out);
    assert_eq!(output.status.code(), Some(0), "{summary}");
    assert_eq!(summary["steps"], 5);
    for f in ["bundle.json", "provenance.json", "loss.csv", "denoiser.f32"] {
        assert!(out.join("bundle").join(f).exists(), "{f}");
    }
    // the fine-tuned bundle loads back as a generation source
    let config = write_config(
        dir.path(),
        "gen.json",
        &json!({"schema_version": 1, "params": {"bundle": {"path": "out/bundle"}, "spec": {"per_prompt_count": 1, "sampler": {"steps": 2}}}}),
    );
    let (output, summary) = run("generate", &config, &dir.path().join("gen"));
    assert_eq!(output.status.code(), Some(0), "{summary}");
}

#[test]
fn train_ti_rejects_caption_without_token() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "ti.json",
        &json!({
            "schema_version": 1,
            "params": {"bundle": small_bundle(), "token": "<lung-xray>", "finetune": {"steps": 2}}
        }),
    );
    let out = dir.path().join("out");
    let (output, summary) = run("train-ti", &config, &out);
    assert_eq!(output.status.code(), Some(3), "{summary}");
    assert!(!out.exists());

    let config = write_config(
        dir.path(),
        "ti2.json",
        &json!({
            "schema_version": 1,
            "params": {
                "bundle": small_bundle(),
                "token": "<lung-xray>",
                "init_from": "photo",
                "data": {
                    "source": {"synthetic": {"negatives": 0, "positives": 2}},
                    "positive_caption": "a photo of a <lung-xray>"
                },
                "finetune": {"steps": 3, "learning_rate": 0.01}
            }
        }),
    );
    let (output, summary) = run("train-ti", &config, &out);
    assert_eq!(output.status.code(), Some(0), "{summary}");
    assert!(summary["token_id"].as_u64().unwrap() >= 1024);
}
