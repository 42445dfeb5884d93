//! The kernel IR: a small, typed, block-structured instruction set.
//!
//! A [`KernelProgram`] is a list of basic blocks. Each block declares named
//! inputs (values supplied by the branch that enters it) and ends with exactly
//! one terminator. Values are local to a block; anything that crosses a block
//! boundary travels through block inputs. Kernel parameters are visible
//! everywhere.

mod opclass;
mod parse;
mod print;

use std::collections::HashSet;
use std::fmt;

pub use opclass::{OpClass, UnknownOpClass};
pub use parse::parse_kernel;

use crate::error::IrError;

pub type BlockId = u32;
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    Float,
    Ptr,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Int => "int",
            ParamKind::Float => "float",
            ParamKind::Ptr => "ptr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    IAdd,
    ISub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    IMin,
    IMax,
    IMul,
    IDiv,
    IRem,
    FAdd,
    FSub,
    FMin,
    FMax,
    FMul,
    FDiv,
}

impl BinOp {
    pub const ALL: [BinOp; 18] = [
        BinOp::IAdd,
        BinOp::ISub,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::IMin,
        BinOp::IMax,
        BinOp::IMul,
        BinOp::IDiv,
        BinOp::IRem,
        BinOp::FAdd,
        BinOp::FSub,
        BinOp::FMin,
        BinOp::FMax,
        BinOp::FMul,
        BinOp::FDiv,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::IAdd => "iadd",
            BinOp::ISub => "isub",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::IMin => "imin",
            BinOp::IMax => "imax",
            BinOp::IMul => "imul",
            BinOp::IDiv => "idiv",
            BinOp::IRem => "irem",
            BinOp::FAdd => "fadd",
            BinOp::FSub => "fsub",
            BinOp::FMin => "fmin",
            BinOp::FMax => "fmax",
            BinOp::FMul => "fmul",
            BinOp::FDiv => "fdiv",
        }
    }

    pub fn opclass(self) -> OpClass {
        match self {
            BinOp::IAdd
            | BinOp::ISub
            | BinOp::And
            | BinOp::Or
            | BinOp::Xor
            | BinOp::Shl
            | BinOp::Shr
            | BinOp::IMin
            | BinOp::IMax => OpClass::IAdd,
            BinOp::IMul => OpClass::IMul,
            BinOp::IDiv | BinOp::IRem => OpClass::IDiv,
            BinOp::FAdd | BinOp::FSub | BinOp::FMin | BinOp::FMax => OpClass::FAdd,
            BinOp::FMul => OpClass::FMul,
            BinOp::FDiv => OpClass::FDiv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpPred {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    FEq,
    FNe,
    FLt,
    FLe,
    FGt,
    FGe,
}

impl CmpPred {
    pub const ALL: [CmpPred; 12] = [
        CmpPred::Eq,
        CmpPred::Ne,
        CmpPred::Lt,
        CmpPred::Le,
        CmpPred::Gt,
        CmpPred::Ge,
        CmpPred::FEq,
        CmpPred::FNe,
        CmpPred::FLt,
        CmpPred::FLe,
        CmpPred::FGt,
        CmpPred::FGe,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            CmpPred::Eq => "eq",
            CmpPred::Ne => "ne",
            CmpPred::Lt => "lt",
            CmpPred::Le => "le",
            CmpPred::Gt => "gt",
            CmpPred::Ge => "ge",
            CmpPred::FEq => "feq",
            CmpPred::FNe => "fne",
            CmpPred::FLt => "flt",
            CmpPred::FLe => "fle",
            CmpPred::FGt => "fgt",
            CmpPred::FGe => "fge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CastKind {
    IntToFloat,
    FloatToInt,
}

impl CastKind {
    pub fn suffix(self) -> &'static str {
        match self {
            CastKind::IntToFloat => "itof",
            CastKind::FloatToInt => "ftoi",
        }
    }
}

/// A constant literal. Floats are stored as raw bits so that programs compare
/// structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Literal {
    Int(i64),
    Float(u64),
}

impl Literal {
    pub fn bits(self) -> u64 {
        match self {
            Literal::Int(v) => v as u64,
            Literal::Float(b) => b,
        }
    }
}

/// Successor of a branch, with the values bound to the target's inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub target: BlockId,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Binary(BinOp),
    Cmp(CmpPred),
    Cast(CastKind),
    Load,
    Store,
    Send,
    Recv,
    Accel(String),
    TileId,
    NumTiles,
    Const(Literal),
    Mov,
    Select,
    Br(Edge),
    CondBr(Edge, Edge),
    Ret,
}

impl Op {
    pub fn opclass(&self) -> OpClass {
        match self {
            Op::Binary(b) => b.opclass(),
            Op::Cmp(_) => OpClass::Cmp,
            Op::Cast(_) => OpClass::Cast,
            Op::Load => OpClass::Load,
            Op::Store => OpClass::Store,
            Op::Send => OpClass::Send,
            Op::Recv => OpClass::Recv,
            Op::Accel(_) => OpClass::AccelInvoke,
            Op::TileId => OpClass::TileId,
            Op::NumTiles => OpClass::NumTiles,
            Op::Const(_) => OpClass::Const,
            Op::Mov | Op::Select => OpClass::Move,
            Op::Br(_) => OpClass::Branch,
            Op::CondBr(..) => OpClass::CondBranch,
            Op::Ret => OpClass::Return,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br(_) | Op::CondBr(..) | Op::Ret)
    }

    /// Successor edges in declaration order (empty for non-terminators and `ret`).
    pub fn edges(&self) -> Vec<&Edge> {
        match self {
            Op::Br(e) => vec![e],
            Op::CondBr(t, f) => vec![t, f],
            _ => Vec::new(),
        }
    }

    /// Whether the op defines a result value.
    pub fn has_result(&self) -> bool {
        !matches!(
            self,
            Op::Store | Op::Send | Op::Accel(_) | Op::Br(_) | Op::CondBr(..) | Op::Ret
        )
    }

    /// Allowed operand counts, as an inclusive range.
    fn arity(&self) -> (usize, usize) {
        match self {
            Op::Binary(_) | Op::Cmp(_) => (2, 2),
            Op::Cast(_) | Op::Load | Op::Recv | Op::Mov => (1, 1),
            Op::Store | Op::Send => (2, 2),
            Op::Accel(_) => (0, usize::MAX),
            Op::TileId | Op::NumTiles | Op::Const(_) => (0, 0),
            Op::Select => (3, 3),
            Op::Br(_) => (0, 0),
            Op::CondBr(..) => (1, 1),
            Op::Ret => (0, 1),
        }
    }
}

/// A static instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub op: Op,
    pub operands: Vec<String>,
    pub result: Option<String>,
}

impl Node {
    pub fn opclass(&self) -> OpClass {
        self.op.opclass()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub inputs: Vec<String>,
    pub nodes: Vec<Node>,
}

impl BasicBlock {
    pub fn terminator(&self) -> &Node {
        self.nodes.last().expect("validated block has a terminator")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelProgram {
    pub name: String,
    pub params: Vec<Param>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
}

/// A node before global IDs are assigned; used when building programs in code.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDraft {
    pub op: Op,
    pub operands: Vec<String>,
    pub result: Option<String>,
}

impl NodeDraft {
    pub fn new(op: Op, operands: &[&str], result: Option<&str>) -> Self {
        NodeDraft {
            op,
            operands: operands.iter().map(|s| s.to_string()).collect(),
            result: result.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockDraft {
    pub inputs: Vec<String>,
    pub nodes: Vec<NodeDraft>,
}

/// Source positions recorded by the parser so validation errors can point at lines.
#[derive(Debug, Default, Clone)]
pub(crate) struct SourceMap {
    pub block_lines: Vec<usize>,
    pub node_lines: Vec<usize>,
}

impl SourceMap {
    fn node(&self, id: NodeId) -> usize {
        self.node_lines.get(id as usize).copied().unwrap_or(0)
    }

    fn block(&self, id: BlockId) -> usize {
        self.block_lines.get(id as usize).copied().unwrap_or(0)
    }
}

impl KernelProgram {
    /// Assemble a program from drafts (block `i` gets ID `i`, nodes numbered in
    /// order) and validate it.
    pub fn from_drafts(
        name: &str,
        params: Vec<Param>,
        drafts: Vec<BlockDraft>,
    ) -> Result<KernelProgram, IrError> {
        let mut next = 0u32;
        let blocks = drafts
            .into_iter()
            .enumerate()
            .map(|(i, d)| BasicBlock {
                id: i as BlockId,
                inputs: d.inputs,
                nodes: d
                    .nodes
                    .into_iter()
                    .map(|n| {
                        let id = next;
                        next += 1;
                        Node {
                            id,
                            op: n.op,
                            operands: n.operands,
                            result: n.result,
                        }
                    })
                    .collect(),
            })
            .collect();
        let program = KernelProgram {
            name: name.to_string(),
            params,
            blocks,
            entry: 0,
        };
        program.validate()?;
        Ok(program)
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id as usize]
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks.iter().map(|b| b.nodes.len()).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.blocks.iter().flat_map(|b| b.nodes.iter())
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), IrError> {
        self.validate_with(&SourceMap::default())
    }

    pub(crate) fn validate_with(&self, src: &SourceMap) -> Result<(), IrError> {
        let invalid = |line: usize, msg: String| IrError::Invalid { line, msg };
        if self.blocks.is_empty() {
            return Err(invalid(0, "kernel has no blocks".into()));
        }
        if self.entry as usize >= self.blocks.len() {
            return Err(invalid(0, format!("entry block {} does not exist", self.entry)));
        }
        let mut names = HashSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return Err(invalid(0, format!("duplicate parameter `{}`", p.name)));
            }
        }
        let mut expected_node = 0u32;
        for (i, block) in self.blocks.iter().enumerate() {
            if block.id as usize != i {
                return Err(invalid(
                    src.block(block.id),
                    format!("block IDs must be dense; found {} at position {}", block.id, i),
                ));
            }
            if block.id == self.entry && !block.inputs.is_empty() {
                return Err(invalid(
                    src.block(block.id),
                    format!("entry block {} cannot declare inputs", block.id),
                ));
            }
            let mut defined: HashSet<&str> = HashSet::new();
            for input in &block.inputs {
                if self.param_index(input).is_some() || !defined.insert(input) {
                    return Err(invalid(
                        src.block(block.id),
                        format!("block {}: input `{}` redefines a value", block.id, input),
                    ));
                }
            }
            match block.nodes.last() {
                Some(n) if n.op.is_terminator() => {}
                _ => {
                    return Err(IrError::MissingTerminator {
                        block: block.id,
                        line: src.block(block.id),
                    })
                }
            }
            for (k, node) in block.nodes.iter().enumerate() {
                let line = src.node(node.id);
                if node.id != expected_node {
                    return Err(invalid(
                        line,
                        format!("node IDs must be dense; expected {} found {}", expected_node, node.id),
                    ));
                }
                expected_node += 1;
                if node.op.is_terminator() && k + 1 != block.nodes.len() {
                    return Err(invalid(
                        line,
                        format!("block {}: terminator must be the last instruction", block.id),
                    ));
                }
                let (lo, hi) = node.op.arity();
                if node.operands.len() < lo || node.operands.len() > hi {
                    return Err(invalid(
                        line,
                        format!(
                            "`{}` takes {} operand(s), got {}",
                            print::mnemonic(&node.op),
                            if lo == hi { lo.to_string() } else { format!("{}..", lo) },
                            node.operands.len()
                        ),
                    ));
                }
                for operand in &node.operands {
                    if !defined.contains(operand.as_str()) && self.param_index(operand).is_none() {
                        return Err(IrError::Undefined {
                            line,
                            name: operand.clone(),
                        });
                    }
                }
                for edge in node.op.edges() {
                    let Some(target) = self.blocks.get(edge.target as usize) else {
                        return Err(invalid(line, format!("branch to unknown block {}", edge.target)));
                    };
                    if edge.target == self.entry {
                        return Err(invalid(line, "branch to the entry block".into()));
                    }
                    if target.inputs.len() != edge.args.len() {
                        return Err(invalid(
                            line,
                            format!(
                                "block {} takes {} input(s), branch passes {}",
                                edge.target,
                                target.inputs.len(),
                                edge.args.len()
                            ),
                        ));
                    }
                    for arg in &edge.args {
                        if !defined.contains(arg.as_str()) && self.param_index(arg).is_none() {
                            return Err(IrError::Undefined {
                                line,
                                name: arg.clone(),
                            });
                        }
                    }
                }
                if let Op::CondBr(t, f) = &node.op {
                    if t.target == f.target && t.args != f.args {
                        return Err(invalid(
                            line,
                            "both branch targets name the same block with different arguments".into(),
                        ));
                    }
                }
                match (&node.result, node.op.has_result()) {
                    (Some(r), true) => {
                        if self.param_index(r).is_some() || !defined.insert(r.as_str()) {
                            return Err(invalid(line, format!("value `{}` is defined twice", r)));
                        }
                    }
                    (None, false) => {}
                    (Some(r), false) => {
                        return Err(invalid(
                            line,
                            format!("`{}` produces no value but assigns `{}`", print::mnemonic(&node.op), r),
                        ))
                    }
                    (None, true) => {
                        return Err(invalid(
                            line,
                            format!("`{}` needs a result name", print::mnemonic(&node.op)),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for KernelProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print_kernel(self))
    }
}
