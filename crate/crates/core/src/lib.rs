//! Frame-semantic sequence tagging with adversarial domain adaptation.
//!
//! The crate trains a multi-layer bidirectional gated recurrent tagger on a
//! joint frame+argument BIO label space, optionally with an adversarial
//! domain classifier attached through a gradient reversal connector, and
//! provides BIO-constrained decoding, a frame-coherence filter, a tunable
//! null-label offset, ASR-style corpus alignment/projection, and
//! precision/recall evaluation tooling.


pub mod align;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod net;
pub mod synth;

pub mod error;

pub mod format;
pub mod labels;

pub mod optim;

pub mod tape;
pub mod train;
pub mod tensor;


pub use error::{Error, Result};
