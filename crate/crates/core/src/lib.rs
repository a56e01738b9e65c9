//! Time-switching energy-harvesting relays over Rayleigh block fading.
//!
//! A source reaches a destination through a battery-powered relay that
//! harvests energy from the source signal. The crate simulates the four
//! harvest/transmit protocols (amplify- or decode-and-forward, continuous or
//! whole-block harvesting) plus a fixed-fraction baseline, evaluates their
//! closed-form throughput, and runs parameter sweeps and optimizations.
// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod error;
pub mod params;
pub mod protocols;
pub mod sim;
pub mod specfun;
pub mod study;

pub use analytic::{throughput, TheoremInputs};
pub use channel::{split_stream, ChannelBlock, FadingStream};
pub use error::{AnalyticError, ParamsError, SpecfunError, StudyError};
pub use params::{derive_constants, ConfigFile, DerivedConstants, SystemParams};
pub use protocols::{BlockKind, BlockOutcome, Protocol, RelayState};
pub use sim::{run, run_parallel, SimResult, Tallies};
pub use study::{Axis, Figure, Mode, Objective, SimSettings, SweepRow, SweepSpec};
