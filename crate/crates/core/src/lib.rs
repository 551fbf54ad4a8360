//! Tensorial blind source separation.
//!
//! Estimates per-mode unmixing matrices for samples of i.i.d. tensors
//! `X = Z x_1 Ω_1 ... x_r Ω_r` with TFOBI, TJADE and k-TJADE, compares them
//! with vectorized FOBI/JADE baselines and evaluates them with the MD index.

pub mod assignment;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod jointdiag;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod simulation;
pub mod tensor;

pub use error::{Result, TbssError};
pub use estimators::{fit, fit_vectorized, ModeEstimator, ModePlan, UnmixingResult, VectorMethod};
pub use jointdiag::{joint_diagonalize, JointDiagConfig};
pub use metrics::{gain_matrix, md_index, scree};
pub use tensor::{Matrix, Tensor, TensorSample};
