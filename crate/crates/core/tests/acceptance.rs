//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any failed. Uses its own harness so the report
//! is always visible.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng as _;

use latentbench::bench::{chexpert_at_k, chexpert_per_class};
use latentbench::diffusion::*;
use latentbench::eval::{evaluate_generated, generate_suite, GenerationSpec, ToyClassifier};
use latentbench::finetune::*;
use latentbench::gradcheck::{max_relative_error, numeric_gradient};
use latentbench::ingestion::{FinetuneSet, ImageSample};
use latentbench::metrics::*;
use latentbench::projection::{loss_and_grad, mean_squared_error, ProjectionDims, ProjectionMlp};
use latentbench::synthetic::{toy_cxr, toy_finetune_set};
use latentbench::tensor::{dot, Matrix};
use latentbench::{io, rng};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ----------------------------------------------------------------------

fn confusion_arithmetic() -> Outcome {
    let start = Instant::now();
    let confusion = Confusion { tp: 45, fp: 0, fn_: 5, tn: 50 };
    let direct = ClassificationReport::from_confusion(confusion, None);
    // same counts reached through scores at the 0.5 threshold
    let mut scores = vec![0.9; 45];
    scores.extend([0.1; 5]);
    scores.extend([0.2; 50]);
    let truth: Vec<bool> = (0..100).map(|i| i < 50).collect();
    let scored = classification_report(&scores, &truth).map_err(|e| e.to_string())?;
    for r in [&direct, &scored] {
        ensure(r.confusion == confusion, || format!("confusion {:?}", r.confusion))?;
        ensure((r.precision - 1.000).abs() <= 5e-4, || format!("precision {}", r.precision))?;
        ensure((r.recall - 0.900).abs() <= 5e-4, || format!("recall {}", r.recall))?;
        ensure((r.f1 - 0.947).abs() <= 5e-4, || format!("f1 {}", r.f1))?;
        ensure(r.accuracy == 0.95, || format!("accuracy {}", r.accuracy))?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!("p={:.3} r={:.3} f1={:.4} acc={:.3}", direct.precision, direct.recall, direct.f1, direct.accuracy))
}

// 2 ----------------------------------------------------------------------

struct Instance {
    emb: Matrix,
    labels: Vec<u8>,
    k: usize,
}

fn random_instance(r: &mut rng::Rng) -> Instance {
    let n = r.gen_range(2..=50);
    let d = r.gen_range(1..=8);
    let k = r.gen_range(1..=(n - 1).min(10));
    let classes = r.gen_range(1..=4u8);
    let labels = (0..n).map(|_| r.gen_range(0..classes)).collect();
    Instance { emb: Matrix::from_vec(n, d, rng::gaussian_vec(r, n * d)), labels, k }
}

/// Brute force: full sort of every other report by (similarity desc, index).
fn oracle_scores(inst: &Instance) -> (Vec<f64>, f64, BTreeMap<String, f64>, f64) {
    let n = inst.labels.len();
    let mut per_report = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = Vec::new();
        for j in 0..n {
            if j != i {
                let mut s = 0.0;
                for c in 0..inst.emb.cols() {
                    s += inst.emb[(i, c)] * inst.emb[(j, c)];
                }
                others.push((s, j));
            }
        }
        others.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let hits = others[..inst.k].iter().filter(|(_, j)| inst.labels[*j] == inst.labels[i]).count();
        per_report.push(hits as f64 / inst.k as f64);
    }
    let global = per_report.iter().sum::<f64>() / n as f64;
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (l, s) in inst.labels.iter().zip(&per_report) {
        let e = groups.entry(l.to_string()).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    let per_class: BTreeMap<String, f64> = groups.iter().map(|(g, (s, c))| (g.clone(), s / *c as f64)).collect();
    let macro_avg = per_class.values().sum::<f64>() / per_class.len() as f64;
    (per_report, global, per_class, macro_avg)
}

fn chexpert_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2002);
    for case in 0..200 {
        let inst = random_instance(&mut r);
        let (per_report, global, per_class, macro_avg) = oracle_scores(&inst);
        let got = chexpert_at_k(&inst.emb, &inst.labels, inst.k).map_err(|e| e.to_string())?;
        let cls = chexpert_per_class(&inst.emb, &inst.labels, inst.k).map_err(|e| e.to_string())?;
        ensure(got.per_report == per_report && got.global == global, || format!("case {case}: global mismatch"))?;
        ensure(cls.global == global, || format!("case {case}: per-class global mismatch"))?;
        ensure(cls.per_class == per_class, || format!("case {case}: per-class mismatch"))?;
        ensure(cls.macro_avg == macro_avg, || format!("case {case}: macro {} vs {}", cls.macro_avg, macro_avg))?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!("200 instances exact in {took:.2?}"))
}

// 3 ----------------------------------------------------------------------

fn random_orthogonal(r: &mut rng::Rng, d: usize) -> Matrix {
    let a = DMatrix::from_vec(d, d, rng::gaussian_vec(r, d * d));
    let q = a.qr().q();
    Matrix::from_vec(d, d, (0..d * d).map(|i| q[(i / d, i % d)]).collect())
}

fn chexpert_invariance() -> Outcome {
    let mut r = rng::seeded(3003);
    for case in 0..50 {
        let inst = random_instance(&mut r);
        let base = chexpert_per_class(&inst.emb, &inst.labels, inst.k).map_err(|e| e.to_string())?;
        let rotated = inst.emb.matmul(&random_orthogonal(&mut r, inst.emb.cols()));
        let mut scaled = inst.emb.clone();
        scaled.scale(r.gen_range(0.01..100.0));
        for (what, e) in [("rotation", &rotated), ("scaling", &scaled)] {
            let got = chexpert_per_class(e, &inst.labels, inst.k).map_err(|e| e.to_string())?;
            ensure(got == base, || format!("case {case}: {what} changed scores"))?;
        }
    }
    Ok("50 instances, rotation and scaling".into())
}

// 4 ----------------------------------------------------------------------

fn random_image(r: &mut rng::Rng, id: &str) -> ImageSample {
    let (w, h) = (r.gen_range(11..40), r.gen_range(11..40));
    let px = (0..w * h).map(|_| r.gen_range(0.0..=1.0)).collect();
    ImageSample::new(id, w, h, px, 255.0).unwrap()
}

fn metric_identities() -> Outcome {
    let mut r = rng::seeded(4004);
    let mut worst_fid: f64 = 0.0;
    for case in 0..100 {
        let a = random_image(&mut r, "a");
        let s = ssim(&a, &a).map_err(|e| e.to_string())?;
        ensure(s == 1.0, || format!("case {case}: ssim {s}"))?;
        let e = rmse(&a, &a).map_err(|e| e.to_string())?;
        ensure(e == 0.0, || format!("case {case}: rmse {e}"))?;
        let d = r.gen_range(2..6);
        let n = r.gen_range(d + 2..30);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng::gaussian_vec(&mut r, d)).collect();
        let p = FeatureSet { features: Matrix::from_rows(&rows).unwrap(), extractor_id: "fixture".into() };
        let f = fid(&p, &p).map_err(|e| e.to_string())?;
        worst_fid = worst_fid.max(f);
        ensure(f < 1e-8, || format!("case {case}: fid {f}"))?;
        let u = rng::gaussian_vec(&mut r, d);
        let c = cosine_similarity(&u, &u).map_err(|e| e.to_string())?;
        ensure(c == 1.0, || format!("case {case}: cosine {c}"))?;
    }
    let set = |v: [f64; 2], n: usize| FeatureSet {
        features: Matrix::from_rows(&vec![v.to_vec(); n]).unwrap(),
        extractor_id: "fixture".into(),
    };
    let closed = fid(&set([0.0, 0.0], 5), &set([3.0, 4.0], 7)).map_err(|e| e.to_string())?;
    ensure((closed - 25.0).abs() < 1e-8, || format!("constant-set fid {closed}"))?;
    let flat = |v: f64| ImageSample::new("c", 8, 8, vec![v / 255.0; 64], 255.0).unwrap();
    let db = psnr(&flat(100.0), &flat(101.0)).map_err(|e| e.to_string())?;
    ensure((db - 48.1308).abs() < 1e-3, || format!("psnr {db}"))?;
    Ok(format!("100 fixtures, max fid(p,p) {worst_fid:.1e}, fid {closed}, psnr {db:.4} dB"))
}

// 5 ----------------------------------------------------------------------

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut worst_mlp: f64 = 0.0;
    for draw in 0..20u64 {
        let mut r = rng::seeded(5000 + draw);
        let dims = ProjectionDims { input: r.gen_range(2..7), hidden: r.gen_range(2..7), output: r.gen_range(1..5) };
        let mut m = ProjectionMlp::new(dims, draw);
        for p in m.params_mut() {
            *p += 0.3 * rng::gaussian_vec(&mut r, 1)[0];
        }
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..r.gen_range(1..5))
            .map(|_| (rng::gaussian_vec(&mut r, dims.input), rng::gaussian_vec(&mut r, dims.output)))
            .collect();
        let rows: Vec<(&[f64], &[f64])> = data.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let (_, analytic) = loss_and_grad(&m, &rows);
        let numeric = numeric_gradient(
            |p| mean_squared_error(&ProjectionMlp::from_params(dims, p.to_vec()).unwrap(), &rows),
            m.params(),
        );
        let err = max_relative_error(&analytic, &numeric);
        worst_mlp = worst_mlp.max(err);
        ensure(err < 1e-4, || format!("projection draw {draw}: {err:.2e}"))?;
    }
    let schedule = NoiseSchedule::toy();
    let (skip, scale) = preconditioning(&schedule);
    let mut worst_den: f64 = 0.0;
    for draw in 0..20u64 {
        let mut r = rng::seeded(5500 + draw);
        let (l, cw) = (r.gen_range(2..9), r.gen_range(2..7));
        let cfg = ToyDenoiserConfig {
            latent_len: l,
            cond_width: cw,
            hidden: r.gen_range(2..9),
            time_dim: 2 * r.gen_range(1..4),
            seed: draw,
            skip: skip.clone(),
            scale: scale.clone(),
        };
        let d = ToyDenoiser::new(cfg).map_err(|e| e.to_string())?;
        let t = r.gen_range(0..schedule.len());
        let x = rng::gaussian_vec(&mut r, l);
        let rows = r.gen_range(1..4);
        let cond = Matrix::from_vec(rows, cw, rng::gaussian_vec(&mut r, rows * cw));
        let g = rng::gaussian_vec(&mut r, l);
        let grads = d.backward(&x, t, &cond, &g).map_err(|e| e.to_string())?;
        let f = |p: &[f64]| {
            let mut e = d.clone();
            e.params_mut().copy_from_slice(p);
            dot(&e.predict_noise(&x, t, &cond).unwrap(), &g)
        };
        let fc = |c: &[f64]| dot(&d.predict_noise(&x, t, &Matrix::from_vec(rows, cw, c.to_vec())).unwrap(), &g);
        let err = max_relative_error(&grads.params, &numeric_gradient(f, d.params()))
            .max(max_relative_error(grads.cond.as_slice(), &numeric_gradient(fc, cond.as_slice())));
        worst_den = worst_den.max(err);
        ensure(err < 1e-4, || format!("denoiser draw {draw}: {err:.2e}"))?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("max rel err projection {worst_mlp:.1e}, denoiser {worst_den:.1e}"))
}

// 6 ----------------------------------------------------------------------

fn forward_statistics() -> Outcome {
    let schedule = NoiseSchedule::toy();
    let n = 100_000;
    let x0 = 0.7;
    let mut r = rng::seeded(6006);
    let mut worst: f64 = 0.0;
    for t in [0, schedule.len() / 2, schedule.len() - 1] {
        let eps = rng::gaussian_vec(&mut r, n);
        let xt = forward_diffuse(&vec![x0; n], t, &eps, &schedule).map_err(|e| e.to_string())?;
        let ab = schedule.alpha_bars[t];
        let mean = xt.iter().sum::<f64>() / n as f64;
        let var = xt.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (want_mean, want_var) = (ab.sqrt() * x0, 1.0 - ab);
        let se_mean = (want_var / n as f64).sqrt();
        let se_var = want_var * (2.0 / (n - 1) as f64).sqrt();
        let (zm, zv) = ((mean - want_mean).abs() / se_mean, (var - want_var).abs() / se_var);
        worst = worst.max(zm).max(zv);
        ensure(zm < 3.0 && zv < 3.0, || format!("t={t}: mean z {zm:.2}, var z {zv:.2}"))?;
    }
    Ok(format!("3 timesteps, worst deviation {worst:.2} SE"))
}

// 7 ----------------------------------------------------------------------

fn oracle_inversion() -> Outcome {
    let schedule = NoiseSchedule::toy();
    let cfg = SamplerConfig { steps: 50, mode: SamplerMode::Deterministic };
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let mut r = rng::seeded(7000 + i);
        let x0 = rng::gaussian_vec(&mut r, 64);
        let oracle = OracleDenoiser::new(x0.clone(), &schedule, 4);
        let init = rng::gaussian_vec(&mut r, 64);
        let out = sample_latent(&oracle, &schedule, &Matrix::zeros(1, 4), &cfg, init, &mut r).map_err(|e| e.to_string())?;
        let err = out.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err < 1e-5, || format!("latent {i}: max abs err {err:.2e}"))?;
    }
    Ok(format!("10 latents, max abs err {worst:.1e}"))
}

// 8 ----------------------------------------------------------------------

fn small_bundle() -> DiffusionBundle {
    build_toy_bundle(&ToyBundleConfig { seed: 8, hidden: 32, cond_width: 32, vae_fit_images: 16, ..Default::default() })
        .unwrap()
}

fn freeze_discipline() -> Outcome {
    let mut b = small_bundle();
    let reg = register_token(&mut b, "<lung-xray>", Some("photo")).map_err(|e| e.to_string())?;
    let before = b.parameter_blocks();
    let table_before = b.text.embedding_table().clone();
    let data = FinetuneSet::new(Vec::new(), (0..3).map(|i| toy_cxr(80 + i, true)).collect(), "", "a photo of a <lung-xray>");
    let cfg = FinetuneConfig { strategy: Strategy::TextualInversion, steps: 20, learning_rate: 1e-2, ..Default::default() };
    train_textual_inversion(&mut b, &data, &reg, &cfg).map_err(|e| e.to_string())?;
    let after = b.parameter_blocks();
    for ((name, p), (_, q)) in before.iter().zip(&after) {
        if *name != "text.embeddings" {
            ensure(bits(p) == bits(q), || format!("textual inversion changed {name}"))?;
        }
    }
    let table = b.text.embedding_table();
    let changed: Vec<usize> =
        (0..table.rows()).filter(|&i| bits(table.row(i)) != bits(table_before.row(i))).collect();
    ensure(changed == vec![reg.token_id], || format!("changed rows {changed:?}, token {}", reg.token_id))?;

    let before = b.parameter_blocks();
    let data = toy_finetune_set(90, 2, 2);
    let cfg = FinetuneConfig { strategy: Strategy::Unet, steps: 10, ..Default::default() };
    train_unet(&mut b, &data, None, &cfg).map_err(|e| e.to_string())?;
    for ((name, p), (_, q)) in before.iter().zip(&b.parameter_blocks()) {
        let same = bits(p) == bits(q);
        ensure(same == (*name != "denoiser"), || format!("unet training: {name} same={same}"))?;
    }
    Ok("one embedding row after inversion; denoiser only after unet".into())
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

// 9 and 10 ---------------------------------------------------------------

const DESK_SEED: u64 = 0;

struct DeskRun {
    head: f64,
    tail: f64,
    report: ClassificationReport,
    report_json: String,
    files: BTreeMap<String, Vec<u8>>,
    took: Duration,
}

fn desk_run(dir: &Path) -> Result<DeskRun, String> {
    let start = Instant::now();
    let mut b = build_toy_bundle(&ToyBundleConfig { seed: DESK_SEED, ..Default::default() }).map_err(|e| e.to_string())?;
    let before = b.checksum();
    let data = toy_finetune_set(7, 5, 5);
    let cfg = FinetuneConfig { seed: DESK_SEED, ..Default::default() };
    let prior = generate_prior_set(&b, &cfg.class_caption, cfg.prior_size_for(data.len()), 11, &cfg.prior_sampler)
        .map_err(|e| e.to_string())?;
    let outcome = train_unet(&mut b, &data, Some(&prior), &cfg).map_err(|e| e.to_string())?;
    let (head, tail) = outcome.head_tail(0.1);
    let prov = provenance(&cfg, &data, &prior, None, &before, &b, &outcome);
    save_finetuned(dir, &b, &prov, &outcome).map_err(|e| e.to_string())?;
    let images = generate_suite(&b, &GenerationSpec { seed: 3, ..Default::default() }).map_err(|e| e.to_string())?;
    let report = evaluate_generated(&images, &ToyClassifier::fixture()).map_err(|e| e.to_string())?;
    let report_json = serde_json::to_string(&report).map_err(|e| e.to_string())?;
    io::write_atomic(&dir.join("metrics.json"), report_json.as_bytes()).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    Ok(DeskRun { head, tail, report, report_json, files, took })
}

fn desk_end_to_end(first: &DeskRun, second: &DeskRun) -> Outcome {
    let auc = first.report.auc.unwrap_or(f64::NAN);
    let ratio = first.tail / first.head;
    let detail = format!(
        "auc {auc:.4}, acc {:.2}, loss head {:.4} tail {:.4} ratio {ratio:.3}, {:.1?}",
        first.report.accuracy, first.head, first.tail, first.took
    );
    ensure(auc >= 0.90, || format!("AUC below 0.90: {detail}"))?;
    ensure(ratio < 0.5, || format!("loss did not halve: {detail}"))?;
    ensure(first.took <= Duration::from_secs(600), || format!("too slow: {detail}"))?;
    ensure(first.report_json == second.report_json, || format!("metrics differ between runs: {detail}"))?;
    Ok(detail)
}

fn determinism(first: &DeskRun, second: &DeskRun) -> Outcome {
    ensure(first.files.keys().eq(second.files.keys()), || "artifact sets differ".into())?;
    for (name, bytes) in &first.files {
        ensure(second.files[name] == *bytes, || format!("{name} differs"))?;
    }
    ensure(first.report_json == second.report_json, || "metric JSON differs".into())?;
    Ok(format!("{} artifacts bit-identical", first.files.len()))
}

// ------------------------------------------------------------------------

fn run(results: &mut Vec<bool>, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let took = start.elapsed();
    match &outcome {
        Ok(detail) => println!("criterion {id:>2} {name:<26} PASS  {took:>9.2?}  {detail}"),
        Err(detail) => println!("criterion {id:>2} {name:<26} FAIL  {took:>9.2?}  {detail}"),
    }
    results.push(outcome.is_ok());
}

fn main() {
    // libtest arguments such as --nocapture or filters are accepted and ignored
    let mut results = Vec::new();
    run(&mut results, 1, "confusion-arithmetic", confusion_arithmetic);
    run(&mut results, 2, "chexpert-oracle", chexpert_oracle);
    run(&mut results, 3, "chexpert-invariance", chexpert_invariance);
    run(&mut results, 4, "metric-identities", metric_identities);
    run(&mut results, 5, "gradient-checks", gradient_checks);
    run(&mut results, 6, "forward-statistics", forward_statistics);
    run(&mut results, 7, "oracle-inversion", oracle_inversion);
    run(&mut results, 8, "freeze-discipline", freeze_discipline);

    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs = desk_run(dirs.0.path()).and_then(|a| desk_run(dirs.1.path()).map(|b| (a, b)));
    match &runs {
        Ok((a, b)) => {
            run(&mut results, 9, "desk-end-to-end", || desk_end_to_end(a, b));
            run(&mut results, 10, "determinism", || determinism(a, b));
        }
        Err(e) => {
            run(&mut results, 9, "desk-end-to-end", || Err(e.clone()));
            run(&mut results, 10, "determinism", || Err(e.clone()));
        }
    }

    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
