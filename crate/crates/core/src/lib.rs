//! Physics-informed neural networks for coupled Allen-Cahn / Cahn-Hilliard
//! phase-field corrosion, with a finite-difference reference solver.
//!
//! The crate is organised bottom-up:
//!
//! - [`physics`]: KKS corrosion model, non-dimensional groups, initial
//!   profiles and benchmark scenarios.
//! - [`autodiff`]: a small reverse-mode tape plus second-order forward jets,
//!   nestable so that input Laplacians can be differentiated with respect to
//!   network parameters.
//! - [`network`]: Fourier embedding, gated MLP backbone and the KKS output
//!   head, with a batched jet evaluator used for training.
//! - [`sampling`]: collocation sets for the residual, boundary and initial
//!   losses.
//! - [`training`]: staggered loss assembly, grad-norm weighting and Adam.
//! - [`refsolver`]: implicit finite-difference solver with adaptive steps.
//! - [`metrics`]: snapshots, error reports and CSV / VTK export.
//! - [`config`]: plain-text scenario and training configuration files.

pub mod autodiff;
pub mod config;
pub mod metrics;
pub mod network;
pub mod physics;
pub mod refsolver;
pub mod sampling;
pub mod training;

pub use autodiff::{Jet, Real, Tape, Var};
pub use metrics::{ErrorReport, FieldSnapshot};
pub use network::{NetworkConfig, NetworkParams};
pub use physics::{NondimParams, PhysicalParams, Scenario};
pub use training::{TrainConfig, TrainOutcome};
