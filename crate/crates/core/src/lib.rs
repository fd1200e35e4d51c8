//! Desk-scale laboratory for a recurrent model that learns to count objects
//! while producing (or receiving) pointing gestures.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, deterministic RNG, Glorot init, Adam, PCA, SSE
//! - [`gesture`]: synthetic 6-DOF arm, inverse kinematics and the PCA gesture table
//! - [`network`]: Elman network with optional Jordan gesture loop, forward pass and BPTT
//! - [`datagen`]: scenes, sequence pairs, sub-epoch sets and per-condition wiring
//! - [`training`]: one-stage and multi-stage training protocols, repetitions
//! - [`evaluation`]: decoding, accuracy scoring, aggregation and one-way ANOVA

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod gesture;
pub mod network;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};

pub use datagen::{ConditionSpec, GestureConvention, Scene, SequencePair, SubEpochSet};
pub use evaluation::{AccuracyReport, AnovaResult, Pointed, Summary, Word};
pub use gesture::{ArmGeometry, ArmModel, GestureTable};
pub use network::{BlockConfig, FeedbackMode, NetworkState, SequenceBatch};
pub use numerics::{Matrix, Rng};
pub use training::{Pretraining, RunReport, TrainSpec, TrainTrace};
