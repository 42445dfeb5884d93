//! Static data-dependency graph.
//!
//! Besides the plain edge lists, every node carries its dependence shape in
//! block-relative form (parent offsets, block-input indices) so the core model
//! can instantiate dynamic blocks without walking names.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::DdgError;
use crate::ir::{BlockId, KernelProgram, NodeId, OpClass};

/// Where an operand value comes from, relative to the consuming block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueSrc {
    /// Result of the node at this offset in the same block.
    Node(u32),
    /// The block input at this index.
    Input(u32),
    /// The kernel parameter at this index.
    Param(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub block: BlockId,
    pub offset: u32,
    pub opclass: OpClass,
    pub operands: Vec<ValueSrc>,
    /// Distinct producer offsets in the same block.
    pub local_parents: Vec<u32>,
    /// Distinct block-input indices read by this node.
    pub input_parents: Vec<u32>,
    pub local_children: Vec<u32>,
    /// For terminators: each successor edge with its argument sources.
    pub edges: Vec<(BlockId, Vec<ValueSrc>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockShape {
    pub id: BlockId,
    pub first: NodeId,
    pub len: u32,
    pub terminator: NodeId,
    pub num_inputs: u32,
    /// Distinct successor blocks in edge order.
    pub successors: Vec<BlockId>,
    /// Memory nodes of this block in program order.
    pub memory_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticDdg {
    pub blocks: Vec<BlockShape>,
    pub nodes: Vec<NodeInfo>,
    /// Distinct (producer, consumer) pairs, in-block edges first, then edges
    /// that cross a block boundary through a block input.
    pub data_edges: Vec<(NodeId, NodeId)>,
    pub control_edges: Vec<(NodeId, BlockId)>,
    /// Every LOAD/STORE in static program order.
    pub memory_nodes: Vec<NodeId>,
}

impl StaticDdg {
    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id as usize]
    }

    pub fn block(&self, id: BlockId) -> &BlockShape {
        &self.blocks[id as usize]
    }

    pub fn has_control_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.blocks
            .get(from as usize)
            .is_some_and(|b| b.successors.contains(&to))
    }

    /// Number of edges whose producer and consumer share a block.
    pub fn local_edge_count(&self) -> usize {
        self.data_edges
            .iter()
            .filter(|(a, b)| self.node(*a).block == self.node(*b).block)
            .count()
    }

    /// One record per line: `node`, `data`, `ctrl` and `mem` records.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let _ = writeln!(
                out,
                "block {} nodes={}..{} terminator={} inputs={}",
                b.id,
                b.first,
                b.first + b.len,
                b.terminator,
                b.num_inputs
            );
        }
        for n in &self.nodes {
            let _ = writeln!(out, "node {} block={} op={}", n.id, n.block, n.opclass);
        }
        for (a, b) in &self.data_edges {
            let _ = writeln!(out, "data {} {}", a, b);
        }
        for (t, b) in &self.control_edges {
            let _ = writeln!(out, "ctrl {} {}", t, b);
        }
        for (i, m) in self.memory_nodes.iter().enumerate() {
            let _ = writeln!(out, "mem {} {}", i, m);
        }
        out
    }
}

fn push_unique(v: &mut Vec<u32>, x: u32) {
    if !v.contains(&x) {
        v.push(x);
    }
}

pub fn build_ddg(program: &KernelProgram) -> Result<StaticDdg, DdgError> {
    let mut nodes = Vec::with_capacity(program.num_nodes());
    let mut blocks = Vec::with_capacity(program.blocks.len());

    for block in &program.blocks {
        let first = block.nodes.first().map(|n| n.id).unwrap_or(0);
        let mut scope: HashMap<&str, ValueSrc> = HashMap::new();
        for (i, p) in program.params.iter().enumerate() {
            scope.insert(p.name.as_str(), ValueSrc::Param(i as u32));
        }
        for (i, name) in block.inputs.iter().enumerate() {
            scope.insert(name.as_str(), ValueSrc::Input(i as u32));
        }
        let start = nodes.len();
        let mut memory_nodes = Vec::new();
        for (offset, node) in block.nodes.iter().enumerate() {
            let lookup = |s: &HashMap<&str, ValueSrc>, name: &str| {
                *s.get(name).expect("validated program defines every operand")
            };
            let operands: Vec<ValueSrc> = node.operands.iter().map(|o| lookup(&scope, o)).collect();
            let mut local_parents = Vec::new();
            let mut input_parents = Vec::new();
            for src in &operands {
                match *src {
                    ValueSrc::Node(p) => push_unique(&mut local_parents, p),
                    ValueSrc::Input(i) => push_unique(&mut input_parents, i),
                    ValueSrc::Param(_) => {}
                }
            }
            let edges = node
                .op
                .edges()
                .into_iter()
                .map(|e| (e.target, e.args.iter().map(|a| lookup(&scope, a)).collect()))
                .collect();
            if node.opclass().is_memory() {
                memory_nodes.push(node.id);
            }
            nodes.push(NodeInfo {
                id: node.id,
                block: block.id,
                offset: offset as u32,
                opclass: node.opclass(),
                operands,
                local_parents,
                input_parents,
                local_children: Vec::new(),
                edges,
            });
            if let Some(r) = &node.result {
                scope.insert(r.as_str(), ValueSrc::Node(offset as u32));
            }
        }
        // Children lists, then a Kahn pass to prove the block acyclic.
        let len = block.nodes.len();
        for off in 0..len {
            let parents = nodes[start + off].local_parents.clone();
            for p in parents {
                nodes[start + p as usize].local_children.push(off as u32);
            }
        }
        let mut indeg: Vec<usize> = (0..len).map(|o| nodes[start + o].local_parents.len()).collect();
        let mut stack: Vec<usize> = (0..len).filter(|&o| indeg[o] == 0).collect();
        let mut seen = 0;
        while let Some(o) = stack.pop() {
            seen += 1;
            for &c in &nodes[start + o].local_children {
                indeg[c as usize] -= 1;
                if indeg[c as usize] == 0 {
                    stack.push(c as usize);
                }
            }
        }
        if seen != len {
            let stuck = (0..len).find(|&o| indeg[o] > 0).unwrap_or(0);
            return Err(DdgError::Cycle {
                block: block.id,
                node: nodes[start + stuck].id,
            });
        }

        let term = block.terminator();
        let mut successors = Vec::new();
        for e in term.op.edges() {
            if !successors.contains(&e.target) {
                successors.push(e.target);
            }
        }
        blocks.push(BlockShape {
            id: block.id,
            first,
            len: len as u32,
            terminator: term.id,
            num_inputs: block.inputs.len() as u32,
            successors,
            memory_nodes,
        });
    }

    let mut data_edges = Vec::new();
    for n in &nodes {
        let first = blocks[n.block as usize].first;
        for &p in &n.local_parents {
            data_edges.push((first + p, n.id));
        }
    }
    let mut cross = Vec::new();
    for n in &nodes {
        let first = blocks[n.block as usize].first;
        for (target, args) in &n.edges {
            let t = &blocks[*target as usize];
            for (i, src) in args.iter().enumerate() {
                let ValueSrc::Node(p) = *src else { continue };
                for c in t.first..t.first + t.len {
                    if nodes[c as usize].input_parents.contains(&(i as u32)) {
                        let e = (first + p, c);
                        if !cross.contains(&e) {
                            cross.push(e);
                        }
                    }
                }
            }
        }
    }
    data_edges.extend(cross);

    let mut control_edges = Vec::new();
    for b in &blocks {
        for &s in &b.successors {
            control_edges.push((b.terminator, s));
        }
    }
    let memory_nodes = blocks.iter().flat_map(|b| b.memory_nodes.iter().copied()).collect();

    Ok(StaticDdg {
        blocks,
        nodes,
        data_edges,
        control_edges,
        memory_nodes,
    })
}
