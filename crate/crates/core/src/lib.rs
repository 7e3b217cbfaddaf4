//! Tiled MATMUL on a vector core with a matrix extension: an analytic
//! transfer-count model, a small ISA, a counting interpreter, kernel
//! generators and a configuration explorer.

pub mod config;
pub mod config_file;
pub mod cost_model;
pub mod explore;
pub mod isa;
pub mod kernels;
pub mod ledger;
pub mod machine;
pub mod sim;

pub use config::{
    validate, ConfigError, ElementType, KernelKind, MachineConfig, ProblemShape, SubTileConfig, TileConfig, Validated,
};
pub use cost_model::{BufResidency, BufferingOptions, EnergyCoefficients};
pub use ledger::{Boundary, Terms, TransferLedger};
pub use machine::{MachineState, Memory, RunReport, SimError, SimErrorKind};
pub use sim::{predict, simulate, verify, CostOptions, Exec, Prediction};
