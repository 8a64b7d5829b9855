use super::*;
use crate::diffusion::{build_toy_bundle, SamplerMode, ToyBundleConfig};
use crate::ingestion::{NEGATIVE_PROMPT, POSITIVE_PROMPT};
use crate::synthetic::toy_finetune_set;

fn small_bundle() -> DiffusionBundle {
    build_toy_bundle(&ToyBundleConfig { cond_width: 32, hidden: 32, vae_fit_images: 16, ..Default::default() }).unwrap()
}

fn quick(strategy: Strategy, steps: usize) -> FinetuneConfig {
    FinetuneConfig {
        strategy,
        steps,
        batch_size: 2,
        prior_sampler: SamplerConfig { steps: 5, mode: SamplerMode::Deterministic },
        ..Default::default()
    }
}

fn with_token(set: FinetuneSet) -> FinetuneSet {
    set.map_captions(|c| c.replace("lung xray", "<lung-xray>"))
}

#[test]
fn registration_contract() {
    let mut b = small_bundle();
    let photo = b.text.word_id("photo");
    let reg = register_token(&mut b, "<lung-xray>", Some("photo")).unwrap();
    let ids = b.text.tokenize("a photo of a <lung-xray>");
    assert_eq!(ids.iter().filter(|&&i| i == reg.token_id).count(), 1);
    assert_eq!(b.text.embedding_table().row(reg.token_id), b.text.embedding_table().row(photo));
    assert!(matches!(register_token(&mut b, "<lung-xray>", None), Err(FinetuneError::DuplicateToken(_))));
    assert!(matches!(register_token(&mut b, "<other>", Some("two words")), Err(FinetuneError::UnknownInitToken(_))));
    let rand_reg = register_token(&mut b, "<other>", None).unwrap();
    assert_eq!(rand_reg.token_id, reg.token_id + 1);
}

#[test]
fn textual_inversion_touches_one_row() {
    let mut b = small_bundle();
    let reg = register_token(&mut b, "<lung-xray>", Some("photo")).unwrap();
    let before = b.clone();
    let data = with_token(toy_finetune_set(0, 3, 2));
    train_textual_inversion(&mut b, &data, &reg, &quick(Strategy::TextualInversion, 100)).unwrap();
    assert_eq!(b.denoiser.params(), before.denoiser.params());
    assert_eq!(b.vae.state(), before.vae.state());
    assert_eq!(b.text.other_params(), before.text.other_params());
    let (new, old) = (b.text.embedding_table(), before.text.embedding_table());
    let changed: Vec<usize> = (0..new.rows()).filter(|&r| new.row(r) != old.row(r)).collect();
    assert_eq!(changed, vec![reg.token_id]);
}

#[test]
fn textual_inversion_zero_lr_and_caption_check() {
    let mut b = small_bundle();
    let reg = register_token(&mut b, "<lung-xray>", None).unwrap();
    let before = b.checksum();
    let data = with_token(toy_finetune_set(0, 2, 2));
    let cfg = FinetuneConfig { learning_rate: 0.0, ..quick(Strategy::TextualInversion, 5) };
    train_textual_inversion(&mut b, &data, &reg, &cfg).unwrap();
    assert_eq!(b.checksum(), before);
    let plain = toy_finetune_set(0, 2, 2);
    assert!(matches!(
        train_textual_inversion(&mut b, &plain, &reg, &cfg),
        Err(FinetuneError::TokenNotInCaption { .. })
    ));
    assert!(matches!(train_unet(&mut b, &data, None, &cfg), Err(FinetuneError::WrongStrategy { .. })));
}

#[test]
fn unet_training_freezes_vae_and_text() {
    let mut b = small_bundle();
    let before = b.clone();
    let data = toy_finetune_set(0, 2, 2);
    train_unet(&mut b, &data, None, &quick(Strategy::Unet, 10)).unwrap();
    assert_ne!(b.denoiser.params(), before.denoiser.params());
    assert_eq!(b.vae.state(), before.vae.state());
    assert_eq!(b.text.state(), before.text.state());
}

#[test]
fn prior_contract() {
    let b = small_bundle();
    let cfg = quick(Strategy::UnetWithPrior, 6);
    let prior = generate_prior_set(&b, "a photo", 3, 9, &cfg.prior_sampler).unwrap();
    assert_eq!(prior.len(), 3);
    assert!(prior.iter().all(|p| p.caption == "a photo"
        && p.image.generation.as_ref().unwrap().caption == "a photo"));
    assert_eq!(prior, generate_prior_set(&b, "a photo", 3, 9, &cfg.prior_sampler).unwrap());
    let data = toy_finetune_set(0, 2, 2);

    let mut empty = b.clone();
    assert!(matches!(train_unet(&mut empty, &data, Some(&[]), &cfg), Err(FinetuneError::EmptyPriorSet)));

    let mut plain = b.clone();
    train_unet(&mut plain, &data, None, &FinetuneConfig { strategy: Strategy::Unet, ..cfg.clone() }).unwrap();
    let mut zero = b.clone();
    train_unet(&mut zero, &data, Some(&prior), &FinetuneConfig { prior_weight: 0.0, ..cfg.clone() }).unwrap();
    assert_eq!(plain.denoiser.params(), zero.denoiser.params());
    let mut weighted = b.clone();
    train_unet(&mut weighted, &data, Some(&prior), &cfg).unwrap();
    assert_ne!(weighted.checksum(), plain.checksum());
}

#[test]
fn trainers_are_deterministic() {
    let data = toy_finetune_set(0, 2, 2);
    let run = || {
        let mut b = small_bundle();
        let t = train_unet(&mut b, &data, None, &quick(Strategy::Unet, 8)).unwrap();
        (b.checksum(), t)
    };
    assert_eq!(run(), run());
}

#[test]
fn provenance_records_inputs() {
    let mut b = small_bundle();
    let before = b.checksum();
    let data = toy_finetune_set(0, 1, 1);
    let cfg = quick(Strategy::Unet, 3);
    let out = train_unet(&mut b, &data, None, &cfg).unwrap();
    let p = provenance(&cfg, &data, &[], None, &before, &b, &out);
    assert_eq!(p.data.len(), 2);
    assert_eq!(p.data[0].1, NEGATIVE_PROMPT);
    assert_eq!(p.data[1].1, POSITIVE_PROMPT);
    assert_ne!(p.bundle_before, p.bundle_after);
    let dir = tempfile::tempdir().unwrap();
    save_finetuned(dir.path(), &b, &p, &out).unwrap();
    assert!(dir.path().join("provenance.json").exists());
    assert!(dir.path().join("bundle.json").exists());
}
