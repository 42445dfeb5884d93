//! Dynamic basic-block core model.

pub mod config;

pub use config::{instruction_cost, BranchMode, CoreConfig, Cost, LatencyTable};
pub mod tile;

pub use tile::{AccelJob, CoreStats, CoreTile, External, Port, ReorderPair};
