//! Network building blocks on top of the tape.

pub mod attention;
pub mod dense;
pub mod lstm;
pub mod temporal;

pub use attention::{AttentionLayer, AttentionOutput, Projection};
pub use dense::{Activation, DenseLayer};
pub use lstm::{LstmLayer, LstmState};
pub use temporal::TemporalTransform;
