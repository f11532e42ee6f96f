//! Gated recurrent cells with refine gates, uniform gate initialization and
//! the nine-variant gate ablation matrix, trained with hand-derived
//! backpropagation through time.

pub mod error;
pub mod exec;
pub mod cells;
pub mod gatelib;
pub mod io;
pub mod tasks;
pub mod ndmath;
pub mod train;
pub mod analysis;
pub mod experiment;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
