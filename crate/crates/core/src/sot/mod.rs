//! Stored-program control: compiler, cycle predictor and executor.

pub mod exec;
pub mod program;

pub use exec::{
    execute, execute_with, CycleStats, ExecOptions, ExecOutput, Fault, HnProbe, HnTraceRow, LayerStats, Machine,
    Overheads, ReceptorProbe, ReceptorTraceRow,
};
pub use program::{compile_sot, load_sot, passes, predict_cycles, save_sot, SotProgram, SotRow};
