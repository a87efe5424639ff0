//! Time-aware low-rank factorized bilinear models for temporal knowledge
//! graph completion.
//!
//! The crate covers the whole pipeline:
//!
//! * [`data`]: quadruple parsing, vocabularies, reciprocal augmentation,
//!   time resampling and 1-N target grouping;
//! * [`cycles`]: simple and cycle-aware timestamp encoders;
//! * [`scoring`]: the LowFER, T, TNT, CFB and FTP fusion functions with
//!   hand-written gradients;
//! * [`train`], [`optim`], [`checkpoint`]: label-smoothed 1-N training
//!   with Adam and bit-exact checkpoints;
//! * [`eval`]: time-aware filtered ranking metrics and heatmap exports;
//! * [`tensor`], [`gradcheck`]: the dense kernels underneath and a
//!   finite-difference checker for the backward passes.

pub mod checkpoint;
pub mod cycles;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod optim;
pub mod scoring;
pub mod tensor;
pub mod train;

pub use cycles::{decompose_date, CycleComponent, CycleIndices, TimeEncoder, TimeTables};
pub use data::{Dataset, DatasetStats, Quadruple, QueryKey, RawQuadruple, Split, TargetIndex, Vocab};
pub use error::{Error, Result};
pub use eval::{EvalMode, FilterIndex, RankingMetrics};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport, ParameterSet};
pub use scoring::{EncoderKind, FusedQuery, Model, ModelParams, ModelShape, Variant};
pub use tensor::{DenseMatrix, DenseVector};
pub use train::{TrainConfig, TrainHistory, Trainer};
