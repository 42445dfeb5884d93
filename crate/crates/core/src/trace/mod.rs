//! Dynamic traces: what a kernel actually did on concrete inputs.
//!
//! The interpreter runs kernels once, functionally, and records the control
//! path, every memory address, every inter-tile message peer and every
//! accelerator invocation. The timing models replay these records.

mod interp;
pub mod io;
mod memory;

pub use interp::{generate_spmd_traces, interpret, interpret_multi, InterpOptions, TileProgram};
pub use memory::{MemImage, WORD};

use crate::ir::{BlockId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemRecord {
    pub node: NodeId,
    pub addr: u64,
    pub size: u16,
    pub is_write: bool,
}

/// Peer tile of one dynamic SEND or RECV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommRecord {
    pub node: NodeId,
    pub peer: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccelInvocation {
    pub node: NodeId,
    pub model_id: String,
    /// `iteration_counts[process][loop]`.
    pub iteration_counts: Vec<Vec<u64>>,
    pub bytes: u64,
    pub num_instances: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DynamicTrace {
    pub tile_id: u32,
    pub num_tiles: u32,
    pub ctrl: Vec<BlockId>,
    pub mem: Vec<MemRecord>,
    pub comm: Vec<CommRecord>,
    pub accel: Vec<AccelInvocation>,
    /// Dynamic instruction count seen by the interpreter.
    pub instructions: u64,
}

impl DynamicTrace {
    pub fn loads(&self) -> usize {
        self.mem.iter().filter(|r| !r.is_write).count()
    }

    pub fn stores(&self) -> usize {
        self.mem.iter().filter(|r| r.is_write).count()
    }
}
