//! One function per subcommand. Each stages its artifacts and returns the
//! command-specific part of the stdout summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tracing::info;

use latentbench::bench::{
    read_encoder_outputs, run_bow_benchmark, run_encoder_benchmark, table_per_class_csv, table_strategies_csv,
    BenchmarkResult, BenchmarkTables, EncoderOutput,
};
use latentbench::diffusion::{build_toy_bundle, load_bundle, DiffusionBundle};
use latentbench::eval::{
    evaluate_generated, fid_grid, generate_suite, classification_csv, BundleSource, SampleSource, ClassificationRow, ToyClassifier,
};
use latentbench::finetune::{
    generate_prior_set, provenance, register_token, save_finetuned, train_textual_inversion, train_unet, Strategy,
    TrainOutcome,
};
use latentbench::ingestion::{load_manifest, DatasetKind, FinetuneSet, ImageSample, LabeledReport};
use latentbench::metrics::{reconstruction_report, Classifier, FeatureSet, ToyFeatureExtractor};
use latentbench::projection::{loss_trace_csv, save_projection, train_projection, ProjectionError};
use latentbench::{rng, synthetic};

use crate::config::*;
use crate::stage::Stage;
use crate::CliError;

/// Resolves config-relative paths.
pub struct Ctx {
    pub base: PathBuf,
    pub seed: u64,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        latentbench::io::resolve(&self.base, p)
    }

    /// A manifest path, or a directory holding `manifest_name`.
    fn manifest(&self, p: &Path, manifest_name: &str) -> PathBuf {
        let p = self.resolve(p);
        if p.is_dir() {
            p.join(manifest_name)
        } else {
            p
        }
    }

    fn images(&self, p: &Path) -> Result<Vec<ImageSample>, CliError> {
        let loaded = load_manifest(&self.manifest(p, "manifest.json"), DatasetKind::Images)?;
        Ok(loaded.data.into_images().expect("images manifest yields images"))
    }

    fn reports(&self, p: &Path) -> Result<Vec<LabeledReport>, CliError> {
        let loaded = load_manifest(&self.manifest(p, "manifest.json"), DatasetKind::Reports)?;
        Ok(loaded.data.into_reports().expect("reports manifest yields reports"))
    }

    fn bundle(&self, spec: &BundleSpec) -> Result<DiffusionBundle, CliError> {
        match spec {
            BundleSpec::Toy(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = self.seed;
                Ok(build_toy_bundle(&cfg).map_err(latentbench::Error::from)?)
            }
            BundleSpec::Path(p) => Ok(load_bundle(&self.manifest(p, "bundle.json"))?),
        }
    }

    fn classifier(&self, name: &str) -> Result<ToyClassifier, CliError> {
        if name == "toy" {
            return Ok(ToyClassifier::fixture());
        }
        let path = self.resolve(Path::new(name));
        let text = latentbench::io::read_to_string(&path)?;
        Ok(ToyClassifier::from_json(&text).map_err(latentbench::Error::from)?)
    }

    fn finetune_set(&self, data: &FinetuneData) -> Result<FinetuneSet, CliError> {
        let set = match &data.source {
            DataSource::Synthetic(s) => synthetic::toy_finetune_set(s.base_seed, s.negatives, s.positives),
            DataSource::Manifests(m) => {
                let neg = self.images(&m.negatives)?;
                let pos = self.images(&m.positives)?;
                FinetuneSet::new(
                    neg,
                    pos,
                    latentbench::ingestion::NEGATIVE_PROMPT,
                    latentbench::ingestion::POSITIVE_PROMPT,
                )
            }
        };
        let n_neg = set.negatives.len();
        let (neg_cap, pos_cap) = (data.negative_caption.clone(), data.positive_caption.clone());
        let mut set = set;
        for (i, c) in set.captions.iter_mut().enumerate() {
            let over = if i < n_neg { &neg_cap } else { &pos_cap };
            if let Some(o) = over {
                *c = o.clone();
            }
        }
        if set.negatives.is_empty() && set.positives.is_empty() {
            return Err(CliError::Config("fine-tuning data is empty".into()));
        }
        Ok(set)
    }
}

pub fn recon_eval(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: ReconEvalParams = cfg.params()?;
    let originals = ctx.images(&p.originals)?;
    let recons = ctx.images(&p.reconstructions)?;
    let extractor = ToyFeatureExtractor::new(p.extractor.seed, p.extractor.dim);
    let classifiers = p.classifiers.iter().map(|c| ctx.classifier(c)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&dyn Classifier> = classifiers.iter().map(|c| c as &dyn Classifier).collect();
    let report = reconstruction_report(&originals, &recons, &extractor, &refs, p.fid_batch_size)
        .map_err(latentbench::Error::from)?;
    stage.write_json("recon_report.json", &report)?;
    if !report.findings.is_empty() {
        stage.write("findings.csv", report.findings_csv().as_bytes())?;
    }
    info!(pairs = report.pairs.len(), "reconstruction report written");
    Ok(json!({
        "pairs": report.pairs.len(),
        "ssim_mean": report.ssim.mean,
        "psnr_mean": finite_or_null(report.psnr.mean),
        "rmse_mean": report.rmse.mean,
        "fid_mean": report.fid.as_ref().map(|f| f.mean),
    }))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn text_bench(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: TextBenchParams = cfg.params()?;
    let reports = ctx.reports(&p.reports)?;
    let mut results: Vec<BenchmarkResult> = Vec::new();
    for enc in &p.encoders {
        let outputs = read_encoder_outputs(&ctx.resolve(&enc.index))?;
        for &s in &enc.strategies {
            let r = run_encoder_benchmark(&reports, &outputs, s, p.k, p.label_mode).map_err(latentbench::Error::from)?;
            info!(encoder = %r.encoder_id, strategy = s.as_str(), global = r.scores.global, "benchmarked");
            results.push(r);
        }
    }
    if p.bag_of_words {
        results.push(run_bow_benchmark(&reports, p.k, p.label_mode).map_err(latentbench::Error::from)?);
    }
    if results.is_empty() {
        return Err(CliError::Config("no encoders and bag_of_words disabled: nothing to benchmark".into()));
    }
    let tables = BenchmarkTables { schema_version: 1, k: p.k, results };
    stage.write_json("bench.json", &tables)?;
    stage.write("table_strategies.csv", table_strategies_csv(&tables.results).as_bytes())?;
    stage.write("table_per_class.csv", table_per_class_csv(&tables.results).as_bytes())?;
    let rows: Vec<Value> = tables
        .results
        .iter()
        .map(|r| {
            json!({
                "encoder_id": r.encoder_id,
                "strategy": r.strategy.map(|s| s.as_str()),
                "global": r.scores.global,
                "macro": r.scores.macro_avg,
            })
        })
        .collect();
    Ok(json!({ "k": p.k, "reports": reports.len(), "results": rows }))
}

/// Pairs source and target outputs by id; every id must appear on both sides.
fn paired(
    source: BTreeMap<String, EncoderOutput>,
    mut target: BTreeMap<String, EncoderOutput>,
) -> Result<(Vec<EncoderOutput>, Vec<EncoderOutput>), CliError> {
    if source.len() != target.len() || source.keys().any(|k| !target.contains_key(k)) {
        return Err(latentbench::Error::from(ProjectionError::UnpairedInputs {
            source_len: source.len(),
            target_len: target.len(),
        })
        .into());
    }
    let mut s = Vec::with_capacity(source.len());
    let mut t = Vec::with_capacity(source.len());
    for (id, out) in source {
        t.push(target.remove(&id).expect("checked above"));
        s.push(out);
    }
    Ok((s, t))
}

pub fn train_projection_cmd(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: TrainProjectionParams = cfg.params()?;
    let source = read_encoder_outputs(&ctx.resolve(&p.source))?;
    let target = read_encoder_outputs(&ctx.resolve(&p.target))?;
    let (s, t) = paired(source, target)?;
    let mut train = p.train.clone();
    train.seed = ctx.seed;
    let trained = train_projection(&s, &t, &train).map_err(latentbench::Error::from)?;
    save_projection(&stage.path("projection.lbck"), &trained.mlp, train.mode, ctx.seed, train.steps)?;
    stage.write("loss.csv", loss_trace_csv(&trained.trace).as_bytes())?;
    Ok(json!({
        "pairs_used": trained.pairs_used,
        "pairs_dropped": trained.pairs_dropped,
        "loss_first": trained.trace.first().map(|p| p.loss),
        "loss_last": trained.trace.last().map(|p| p.loss),
    }))
}

fn outcome_summary(outcome: &TrainOutcome, bundle: &DiffusionBundle) -> Value {
    let (head, tail) = outcome.head_tail(0.1);
    json!({
        "steps": outcome.trace.len(),
        "loss_head": head,
        "loss_tail": tail,
        "checksum": bundle.checksum(),
    })
}

pub fn train_ti(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: TrainTiParams = cfg.params()?;
    let mut bundle = ctx.bundle(&p.bundle)?;
    let data = ctx.finetune_set(&p.data)?;
    let mut ft = p.finetune.clone();
    ft.strategy = Strategy::TextualInversion;
    ft.seed = ctx.seed;
    let before = bundle.checksum();
    let reg = register_token(&mut bundle, &p.token, p.init_from.as_deref()).map_err(latentbench::Error::from)?;
    let outcome = train_textual_inversion(&mut bundle, &data, &reg, &ft).map_err(latentbench::Error::from)?;
    let prov = provenance(&ft, &data, &[], Some(&reg), &before, &bundle, &outcome);
    save_finetuned(&stage.subdir("bundle")?, &bundle, &prov, &outcome)?;
    let mut summary = outcome_summary(&outcome, &bundle);
    summary["token_id"] = json!(reg.token_id);
    Ok(summary)
}

pub fn train_unet_cmd(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: TrainUnetParams = cfg.params()?;
    let mut bundle = ctx.bundle(&p.bundle)?;
    let data = ctx.finetune_set(&p.data)?;
    let mut ft = p.finetune.clone();
    ft.seed = ctx.seed;
    if ft.strategy == Strategy::TextualInversion {
        return Err(CliError::Config("train-unet needs strategy unet or unet_with_prior".into()));
    }
    let before = bundle.checksum();
    let prior = if ft.strategy == Strategy::UnetWithPrior {
        let n = ft.prior_size_for(data.len());
        generate_prior_set(&bundle, &ft.class_caption, n, rng::derive_seed(ctx.seed, &[0x9e1]), &ft.prior_sampler)
            .map_err(latentbench::Error::from)?
    } else {
        Vec::new()
    };
    info!(prior = prior.len(), "prior set ready");
    let outcome = train_unet(&mut bundle, &data, Some(&prior), &ft).map_err(latentbench::Error::from)?;
    let prov = provenance(&ft, &data, &prior, None, &before, &bundle, &outcome);
    save_finetuned(&stage.subdir("bundle")?, &bundle, &prov, &outcome)?;
    Ok(outcome_summary(&outcome, &bundle))
}

pub fn generate(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: GenerateParams = cfg.params()?;
    let bundle = ctx.bundle(&p.bundle)?;
    let mut spec = p.spec.clone();
    spec.seed = ctx.seed;
    let images = generate_suite(&bundle, &spec).map_err(latentbench::Error::from)?;
    latentbench::ingestion::write_png_collection(&stage.subdir("images")?, &images)?;
    Ok(json!({ "images": images.len(), "prompts": spec.prompts.len() }))
}

pub fn classify_eval(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: ClassifyEvalParams = cfg.params()?;
    let images = ctx.images(&p.images)?;
    let clf = ctx.classifier(&p.classifier)?;
    let report = evaluate_generated(&images, &clf).map_err(latentbench::Error::from)?;
    let row = ClassificationRow::new(&p.method, &report);
    stage.write_json("classification.json", &report)?;
    stage.write("classification.csv", classification_csv(std::slice::from_ref(&row)).as_bytes())?;
    Ok(json!({
        "images": images.len(),
        "auc": report.auc,
        "accuracy": report.accuracy,
        "f1": report.f1,
        "precision": report.precision,
        "recall": report.recall,
    }))
}

pub fn fid_grid_cmd(cfg: &RunConfig, ctx: &Ctx, stage: &Stage) -> Result<Value, CliError> {
    let p: FidGridParams = cfg.params()?;
    let extractor = ToyFeatureExtractor::new(p.extractor.seed, p.extractor.dim);
    let references = p
        .references
        .iter()
        .map(|r| ctx.images(r).map(|imgs| FeatureSet::from_images(&extractor, &imgs)))
        .collect::<Result<Vec<_>, _>>()?;
    let bundles = p.sources.iter().map(|s| ctx.bundle(&s.bundle)).collect::<Result<Vec<_>, _>>()?;
    let sources: Vec<BundleSource> = p
        .sources
        .iter()
        .zip(&bundles)
        .map(|(s, b)| BundleSource { name: s.name.clone(), bundle: b, sampler: p.sampler })
        .collect();
    let dyn_sources: Vec<&dyn SampleSource> = sources.iter().map(|s| s as &dyn SampleSource).collect();
    let grid = fid_grid(&dyn_sources, &p.prompts, &references, &extractor, p.per_prompt_count, ctx.seed)
        .map_err(latentbench::Error::from)?;
    stage.write_json("fid_grid.json", &grid)?;
    stage.write("fid_grid.csv", grid.to_csv().as_bytes())?;
    Ok(json!({ "extractor_id": grid.extractor_id, "values": grid.values }))
}
