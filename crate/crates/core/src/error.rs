use thiserror::Error;

use crate::ir::{BlockId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: undefined value `{name}`")]
    Undefined { line: usize, name: String },
    #[error("missing terminator, block {block}")]
    MissingTerminator { block: BlockId, line: usize },
    #[error("line {line}: duplicate block ID {block}")]
    DuplicateBlock { line: usize, block: BlockId },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DdgError {
    #[error("cyclic data dependence in block {block} through node {node}")]
    Cycle { block: BlockId, node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("tile {tile}, node {node}: address {addr:#x} is outside the memory image")]
    OutOfBounds { tile: u32, node: NodeId, addr: u64 },
    #[error("tile {tile}, node {node}: address {addr:#x} is not 8-byte aligned")]
    Misaligned { tile: u32, node: NodeId, addr: u64 },
    #[error("tile {tile}, node {node}: division by zero")]
    DivisionByZero { tile: u32, node: NodeId },
    #[error("tile {tile}: dynamic instruction budget of {budget} exceeded")]
    BudgetExceeded { tile: u32, budget: u64 },
    #[error("rendezvous deadlock: tile {tile} blocked at node {node}")]
    Deadlock { tile: u32, node: NodeId },
    #[error("tile {tile}, node {node}: send/recv peer {peer} does not exist")]
    BadPeer { tile: u32, node: NodeId, peer: u64 },
    #[error("parameter `{0}` is not bound")]
    MissingParam(String),
    #[error("expected {expected} parameter bindings, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("tile {tile}, node {node}: unknown accelerator kind `{model}`")]
    UnknownAccel { tile: u32, node: NodeId, model: String },
    #[error("tile {tile}, node {node}: {msg}")]
    BadAccelArgs { tile: u32, node: NodeId, msg: String },
    #[error("trace format: {0}")]
    Format(String),
    #[error("trace I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for TraceError {
    fn from(e: std::io::Error) -> Self {
        TraceError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{file}:{line}: {msg}")]
    At { file: String, line: usize, msg: String },
    #[error("{file}: {msg}")]
    Invalid { file: String, msg: String },
    #[error("{file}: {msg}")]
    Io { file: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccelError {
    #[error("accelerator `{model}`: invocation has {got} processes/loops shaped {got_shape:?}, model expects {want_shape:?}")]
    DimensionMismatch {
        model: String,
        got: usize,
        got_shape: Vec<usize>,
        want_shape: Vec<usize>,
    },
    #[error("accelerator `{0}`: zero bandwidth with nonzero bytes")]
    ZeroBandwidth(String),
    #[error("accelerator `{0}`: instances must be at least 1")]
    NoInstances(String),
    #[error("unknown accelerator model `{0}`")]
    UnknownModel(String),
    #[error("accelerator model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DaeError {
    #[error("loss of decoupling: control flow depends on computed value at node {node} ({what})")]
    LossOfDecoupling { node: NodeId, what: String },
    #[error("node {node}: {what} is not supported in a sliced kernel")]
    Unsupported { node: NodeId, what: String },
    #[error("slice construction produced an invalid kernel: {0}")]
    Ir(#[from] IrError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("tile {tile}: control trace steps from block {from} to block {to}, which has no control edge")]
    BadSuccessor { tile: u32, from: BlockId, to: BlockId },
    #[error("tile {tile}: control trace does not start at the entry block")]
    BadEntry { tile: u32 },
    #[error("tile {tile}: {what} trace does not match node {node}")]
    TraceMismatch { tile: u32, node: NodeId, what: &'static str },
    #[error("tile {tile}: {what} trace has {extra} unconsumed records")]
    TraceLeftover { tile: u32, what: &'static str, extra: usize },
    #[error("simulation deadlock\n{0}")]
    Deadlock(String),
    #[error(transparent)]
    Accel(#[from] AccelError),
    #[error("{0}")]
    Setup(String),
}
