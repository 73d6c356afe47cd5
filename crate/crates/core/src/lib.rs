//! Zero-delay lossy compression with per-sequence outage guarantees.
//!
//! A predictor supplies a distribution over the next symbol. An online
//! conformal calibrator turns it into a prediction set whose miscoverage rate
//! tracks a target `alpha` on every sequence. Covered symbols are coded
//! losslessly under the distribution truncated to the set; the rest are
//! replaced by the decoder's best guess outside the set.

pub mod benchmarks;
pub mod codec;
pub mod coder;
pub mod conformal;
pub mod exec;
pub mod predictor;
pub mod transport;

pub use codec::{
    CodecConfig, CodecError, CodecParams, CoderBackend, Decoder, Encoder, Mode, RunMetrics,
    StepOutcome,
};
pub use conformal::{coverage_bound, ConformalConfig};
pub use exec::Execution;
pub use predictor::{Distribution, Predictor, PredictorSpec, Symbol};
pub use transport::{read_container, write_container, SlotMessage, StreamContainer};
