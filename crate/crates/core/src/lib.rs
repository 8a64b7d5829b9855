//! Desk-scale workbench for adapting a latent diffusion pipeline to chest
//! radiographs.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingestion`]: images, reports, labels and prompt corpora.
//! * [`metrics`]: RMSE/PSNR/SSIM/FID, cosine similarity, classification
//!   reports and the paired reconstruction evaluation.
//! * [`bench`]: text-encoder retrieval benchmarking (CheXpert@k).
//! * [`projection`]: the embedding projection MLP and its trainer.
//! * [`diffusion`]: noise schedules, samplers, component contracts and the
//!   toy reference components.
//! * [`finetune`]: textual inversion and denoiser fine-tuning (with and
//!   without prior preservation).
//! * [`eval`]: generate-then-classify evaluation and FID grids.
//!
//! Every data-parallel loop goes through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Results are
//! identical either way.

pub mod bench;
pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod finetune;
pub mod gradcheck;
pub mod ingestion;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod projection;
pub mod rng;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, ErrorFamily, Result};
