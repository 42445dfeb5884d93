//! Cycle-driven timing simulator for heterogeneous tiled systems.
//!
//! Kernels are written in a small block-structured IR, interpreted once to
//! produce dynamic traces, and then replayed against a dependence-graph core
//! model, a cache/DRAM hierarchy, accelerator models and inter-tile message
//! channels.

pub mod accel;
pub mod cpu;
pub mod config;
pub mod corpus;
pub mod dae;
pub mod ddg;
pub mod error;
pub mod experiment;
pub mod interleave;
pub mod ir;
pub mod mao;
pub mod mem;
pub mod trace;

pub use ddg::{build_ddg, StaticDdg};
pub use ir::{parse_kernel, KernelProgram, OpClass};
