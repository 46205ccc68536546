//! Compact quantum metric spaces on finite-dimensional C*-algebras.
//!
//! Inductive sequences of block algebras carry β-weighted Lip-norms built from
//! trace-preserving conditional expectations. On top of those the crate
//! computes Monge–Kantorovich state-distance brackets, bridge and tunnel
//! estimates with certified propinquity bounds, and the ideal space of an AF
//! algebra with its Fell metric.

// Index loops mirror the matrix formulas; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod bratteli;
pub mod error;
pub mod expectations;
pub mod ideals;
pub mod invariants;
pub mod lipnorms;
pub mod lp;
pub mod propinquity;
pub mod state_metrics;

pub use algebra::{AlgebraElement, BlockAlgebra, C64};
pub use bratteli::{
    BetaSchedule, BetaSpec, Caps, Embedding, FamilySpec, InductiveSequence, MultiplicityMatrix, SequenceDescriptor,
};
pub use error::{QmsError, Result};
pub use expectations::{ConditionalExpectation, ExpectationChain, TraceState};
pub use ideals::{FellValue, IdealDescriptor, IdealSpec, LipschitzCertificate, UnitizedStage};
pub use invariants::{CheckOutcome, SuiteConfig};
pub use lipnorms::{BetaWeight, LipNorm, LipNormChain, ResidualLipNorm, TraceLipNorm};
pub use propinquity::{BridgeOptions, BridgeReport, CoherenceWindow, PropTarget, TunnelLipNorm};
pub use state_metrics::{MkBracket, QuantumState, SolverOptions, StateKind};
