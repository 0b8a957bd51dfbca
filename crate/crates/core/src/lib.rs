//! Second-order ODE variational autoencoder for physical-motion video.
//!
//! The crate bundles the ground-truth simulators and dataset format, a small
//! reverse-mode autodiff tape, the latent ODE with its log-density flow, the
//! encoders/decoder and weight posterior, the penalized ELBO, a training
//! loop, evaluation metrics, figure output and the command-line front end.
//!
//! All model numerics are generic over [`Scalar`] (`f32` or `f64`).

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod latent_ode;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod plot;
pub mod scalar;
pub mod sim;
pub mod trainer;
pub mod vae;

pub use scalar::Scalar;

pub type VariationalModel32 = vae::VariationalModel<f32>;
pub type VariationalModel64 = vae::VariationalModel<f64>;
pub type DiagonalGaussian32 = vae::DiagonalGaussian<f32>;
pub type DiagonalGaussian64 = vae::DiagonalGaussian<f64>;
pub type LatentState32 = latent_ode::LatentState<f32>;
pub type LatentState64 = latent_ode::LatentState<f64>;
pub type LatentTrajectory32 = latent_ode::LatentTrajectory<f32>;
pub type LatentTrajectory64 = latent_ode::LatentTrajectory<f64>;
pub type WeightSample32 = latent_ode::WeightSample<f32>;
pub type WeightSample64 = latent_ode::WeightSample<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Adam32 = optim::Adam<f32>;
pub type Adam64 = optim::Adam<f64>;
