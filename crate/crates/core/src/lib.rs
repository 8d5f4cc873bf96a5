//! Cycle-accurate simulator of a memristor-based stochastic Bayesian machine.
//!
//! The machine stores quantized likelihoods in per-block memory arrays,
//! turns them into proportional pseudo-random bit streams (one shared LFSR
//! per column), multiplies streams along each row with AND gates and counts
//! the ones at the row outputs. This crate reproduces that behavior at the
//! bitstream level and pairs it with an exact Bayesian oracle, an LFSR seed
//! optimizer, a calibrated energy model and an end-to-end gesture
//! recognition application on a synthetic IMU dataset.

pub mod energy;
pub mod error;
pub mod gesture;
pub mod machine;
pub mod memory;
pub mod oracle;
pub mod rng;
pub mod seedopt;
pub mod trace;
pub mod util;

pub use error::{Error, Result};
pub use machine::{Decision, MachineConfig, MachineImage, Observation};
pub use memory::{FaultModel, LikelihoodArray};
pub use rng::{gupta_bit, seed_load, LfsrState, ProbByte, LFSR_PERIOD};
pub use trace::InferenceTrace;
