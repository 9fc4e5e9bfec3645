//! Memory part: banked feature-map storage and the receptor unit.

pub mod mau;
pub mod receptor;
pub mod ru;

pub use mau::{MapRegion, MemoryArrayUnit, PortCounters};
pub use receptor::{symbolic_stream, trace, MaskedWindow, Receptor, Symbol, TraceRow, WindowInfo};
pub use ru::ReceptorUnit;
