//! Cycle-accurate, bit-exact model of a neuron-machine CNN accelerator:
//! model ingestion, reference convolution, memory part, hardware neurons,
//! stored-program control and utilization metrics.

pub mod error;
pub mod fuzz;
pub mod gen;
pub mod hn;
pub mod hw;
pub mod image;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod report;
pub mod sot;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
