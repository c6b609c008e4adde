//! Phase retrieval from magnitude-only measurements with generative priors.
//!
//! The crate covers the measurement operators (2-D Fourier and dense
//! Gaussian), fully-connected generators with subnetwork evaluation and
//! vector-Jacobian products, l1-ball projected gradient descent, and the
//! reconstruction algorithms built on them: Fienup's ER/HIO, latent-space
//! descent (DPR) and intermediate layer optimization (PRILO).

pub mod error;
pub mod generator;
pub mod init;
pub mod math;
pub mod measurement;
pub mod metrics;
pub mod projection;
pub mod solvers;
pub mod vae;

pub use error::{Error, Result};
pub use generator::{load_weights, sample_latent, save_weights, Activation, ActivationTrace, DenseLayer, GeneratorNet};
pub use init::{initial_latent, mii_init, InitScheme, MiiSettings};
pub use math::{dft2, gaussian_matrix, idft2, GaussianKind, Seed, Shape2D};
pub use measurement::{Magnitudes, MeasurementOperator};
pub use metrics::{evaluate, psnr, register_trivial, ssim, MetricReport};
pub use projection::{pgd, project_l1, L1Ball, NoiseSchedule, PgdSettings};
pub use solvers::{
    dpr_solve, er, hio, prilo_solve, run_with_restarts, PriloConfig, PriloPhase, ReconstructionResult, StageFlags,
    TraceOptions,
};
pub use vae::{train_vae, TrainedVae, VaeSpec};
