//! Decoupled access/execute slicing.
//!
//! The access slice keeps address arithmetic, control flow and every memory
//! operation. Each load forwards its value to the execute slice, and each
//! store takes its value from it. The execute slice keeps the value
//! computation plus its own copy of the control flow, with loads replaced by
//! receives and stores by sends. Both slices take one extra trailing
//! parameter, the tile ID of their partner.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{DaeError, TraceError};
use crate::ir::{BasicBlock, BlockDraft, BlockId, Edge, KernelProgram, NodeDraft, NodeId, Op, OpClass, Param, ParamKind};
use crate::trace::{interpret_multi, DynamicTrace, InterpOptions, MemImage, TileProgram};

/// Name of the partner-tile parameter appended to both slices.
pub const PEER_PARAM: &str = "__peer";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueConfig {
    pub capacity: usize,
    pub latency: u64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            capacity: 512,
            latency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePair {
    pub access: KernelProgram,
    pub execute: KernelProgram,
    /// Access to execute: loaded values.
    pub load_values: QueueConfig,
    /// Execute to access: values to store.
    pub store_values: QueueConfig,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Access,
    Execute,
}

/// Where a name used in a block comes from.
enum Def<'a> {
    Node(&'a crate::ir::Node),
    Input(usize),
    Outside,
}

fn lookup<'a>(block: &'a BasicBlock, name: &str) -> Def<'a> {
    if let Some(n) = block.nodes.iter().find(|n| n.result.as_deref() == Some(name)) {
        Def::Node(n)
    } else if let Some(i) = block.inputs.iter().position(|x| x == name) {
        Def::Input(i)
    } else {
        Def::Outside
    }
}

/// Nodes and block inputs each slice has to compute.
struct Needs {
    nodes: HashSet<NodeId>,
    inputs: HashSet<(BlockId, usize)>,
}

fn needs(program: &KernelProgram, side: Side) -> Needs {
    let mut out = Needs {
        nodes: HashSet::new(),
        inputs: HashSet::new(),
    };
    let mut work: VecDeque<(BlockId, String)> = VecDeque::new();
    for b in &program.blocks {
        for n in &b.nodes {
            let roots: &[String] = match (&n.op, side) {
                (Op::Load, Side::Access) => &n.operands[..1],
                (Op::Store, Side::Access) => &n.operands[..1],
                (Op::Store, Side::Execute) => &n.operands[1..2],
                (Op::CondBr(..), _) => &n.operands[..1],
                (Op::Ret, Side::Execute) => &n.operands,
                _ => &[],
            };
            work.extend(roots.iter().map(|r| (b.id, r.clone())));
        }
    }
    let mut seen: HashSet<(BlockId, String)> = HashSet::new();
    while let Some((bid, name)) = work.pop_front() {
        if !seen.insert((bid, name.clone())) {
            continue;
        }
        let block = program.block(bid);
        match lookup(block, &name) {
            Def::Node(n) => {
                out.nodes.insert(n.id);
                // On the execute side a loaded value arrives by message.
                if !(side == Side::Execute && n.op == Op::Load) {
                    work.extend(n.operands.iter().map(|o| (bid, o.clone())));
                }
            }
            Def::Input(i) => {
                if out.inputs.insert((bid, i)) {
                    for pred in &program.blocks {
                        for e in pred.terminator().op.edges() {
                            if e.target == bid {
                                work.push_back((pred.id, e.args[i].clone()));
                            }
                        }
                    }
                }
            }
            Def::Outside => {}
        }
    }
    out
}

fn check_supported(program: &KernelProgram) -> Result<(), DaeError> {
    for n in program.nodes() {
        let what = match n.op {
            Op::Send => "send",
            Op::Recv => "recv",
            Op::Accel(_) => "accelerator invocation",
            _ => continue,
        };
        return Err(DaeError::Unsupported {
            node: n.id,
            what: what.into(),
        });
    }
    if program.param_index(PEER_PARAM).is_some() {
        return Err(DaeError::Unsupported {
            node: 0,
            what: format!("parameter named `{}`", PEER_PARAM),
        });
    }
    Ok(())
}

fn fresh(block: &BasicBlock, k: &mut usize) -> String {
    loop {
        let name = format!("__sv{}", *k);
        *k += 1;
        if matches!(lookup(block, &name), Def::Outside) {
            return name;
        }
    }
}

fn filter_edge(e: &Edge, needs: &Needs) -> Edge {
    Edge {
        target: e.target,
        args: e
            .args
            .iter()
            .enumerate()
            .filter(|(i, _)| needs.inputs.contains(&(e.target, *i)))
            .map(|(_, a)| a.clone())
            .collect(),
    }
}

fn emit(program: &KernelProgram, needs: &Needs, side: Side) -> Result<KernelProgram, DaeError> {
    let mut drafts = Vec::new();
    for b in &program.blocks {
        let mut d = BlockDraft {
            inputs: b
                .inputs
                .iter()
                .enumerate()
                .filter(|(i, _)| needs.inputs.contains(&(b.id, *i)))
                .map(|(_, x)| x.clone())
                .collect(),
            nodes: Vec::new(),
        };
        let mut k = 0;
        for n in &b.nodes {
            let r = n.result.as_deref();
            match (&n.op, side) {
                (Op::Load, Side::Access) => {
                    d.nodes.push(NodeDraft::new(Op::Load, &[&n.operands[0]], r));
                    d.nodes.push(NodeDraft::new(Op::Send, &[PEER_PARAM, r.unwrap_or_default()], None));
                }
                (Op::Load, Side::Execute) => d.nodes.push(NodeDraft::new(Op::Recv, &[PEER_PARAM], r)),
                (Op::Store, Side::Access) => {
                    let v = fresh(b, &mut k);
                    d.nodes.push(NodeDraft::new(Op::Recv, &[PEER_PARAM], Some(&v)));
                    d.nodes.push(NodeDraft::new(Op::Store, &[&n.operands[0], &v], None));
                }
                (Op::Store, Side::Execute) => {
                    d.nodes.push(NodeDraft::new(Op::Send, &[PEER_PARAM, &n.operands[1]], None))
                }
                (Op::Br(e), _) => d.nodes.push(NodeDraft::new(Op::Br(filter_edge(e, needs)), &[], None)),
                (Op::CondBr(t, f), _) => d.nodes.push(NodeDraft::new(
                    Op::CondBr(filter_edge(t, needs), filter_edge(f, needs)),
                    &[&n.operands[0]],
                    None,
                )),
                (Op::Ret, Side::Access) => d.nodes.push(NodeDraft::new(Op::Ret, &[], None)),
                _ if needs.nodes.contains(&n.id) || n.op == Op::Ret => d.nodes.push(NodeDraft {
                    op: n.op.clone(),
                    operands: n.operands.clone(),
                    result: n.result.clone(),
                }),
                _ => {}
            }
        }
        drafts.push(d);
    }
    let mut params = program.params.clone();
    params.push(Param {
        name: PEER_PARAM.into(),
        kind: ParamKind::Int,
    });
    let suffix = if side == Side::Access { "access" } else { "execute" };
    Ok(KernelProgram::from_drafts(
        &format!("{}.{}", program.name, suffix),
        params,
        drafts,
    )?)
}

/// Split a plain compute kernel into access and execute slices.
pub fn slice(program: &KernelProgram) -> Result<SlicePair, DaeError> {
    check_supported(program)?;
    let access = needs(program, Side::Access);
    // Control and addresses may only depend on integer work the access
    // side can redo on its own.
    let mut ids: Vec<NodeId> = access.nodes.iter().copied().collect();
    ids.sort_unstable();
    let by_id: HashMap<NodeId, &crate::ir::Node> = program.nodes().map(|n| (n.id, n)).collect();
    for id in ids {
        let n = by_id[&id];
        if matches!(n.opclass(), OpClass::FAdd | OpClass::FMul | OpClass::FDiv | OpClass::Cast) {
            return Err(DaeError::LossOfDecoupling {
                node: id,
                what: format!("{} feeds an address or branch", n.opclass()),
            });
        }
    }
    let execute = needs(program, Side::Execute);
    Ok(SlicePair {
        access: emit(program, &access, Side::Access)?,
        execute: emit(program, &execute, Side::Execute)?,
        load_values: QueueConfig::default(),
        store_values: QueueConfig::default(),
    })
}

/// Tile programs for `pairs` decoupled pairs: pair `p` runs its access
/// slice on tile `2p` and its execute slice on tile `2p + 1`.
pub fn pair_tiles<'a>(pair: &'a SlicePair, params: &[u64], pairs: u32) -> Vec<TileProgram<'a>> {
    let mut tiles = Vec::with_capacity(2 * pairs as usize);
    for p in 0..pairs {
        for (prog, peer) in [(&pair.access, 2 * p + 1), (&pair.execute, 2 * p)] {
            let mut ps = params.to_vec();
            ps.push(peer as u64);
            tiles.push(TileProgram {
                program: prog,
                params: ps,
                logical_id: p,
                logical_count: pairs,
            });
        }
    }
    tiles
}

/// Interpret `pairs` decoupled pairs over a shared image.
pub fn run_pairs(
    pair: &SlicePair,
    params: &[u64],
    mem: MemImage,
    pairs: u32,
    opts: InterpOptions,
) -> Result<(Vec<DynamicTrace>, MemImage), TraceError> {
    interpret_multi(&pair_tiles(pair, params, pairs), mem, opts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Divergence {
    /// First word whose final value differs.
    Memory { addr: u64, original: Option<u64>, sliced: Option<u64> },
    /// The slices did not run to completion (deadlock, fault).
    Sliced(TraceError),
    /// The original program itself failed.
    Original(TraceError),
    Slice(DaeError),
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Memory { addr, original, sliced } => write!(
                f,
                "memory differs at {:#x}: original {:?}, sliced {:?}",
                addr, original, sliced
            ),
            Divergence::Sliced(e) => write!(f, "sliced run failed: {}", e),
            Divergence::Original(e) => write!(f, "original run failed: {}", e),
            Divergence::Slice(e) => write!(f, "{}", e),
        }
    }
}

/// Check a given slice pair against the original on `pairs` SPMD tiles.
pub fn verify_pair(
    program: &KernelProgram,
    pair: &SlicePair,
    params: &[u64],
    mem: &MemImage,
    pairs: u32,
) -> Result<(), Divergence> {
    let opts = InterpOptions::default();
    let (_, want) =
        crate::trace::generate_spmd_traces(program, pairs, params, mem.clone(), opts).map_err(Divergence::Original)?;
    let (_, got) = run_pairs(pair, params, mem.clone(), pairs, opts).map_err(Divergence::Sliced)?;
    match want.first_difference(&got) {
        None => Ok(()),
        Some(addr) => Err(Divergence::Memory {
            addr,
            original: want.read(addr),
            sliced: got.read(addr),
        }),
    }
}

/// Slice `program` and check that the pair leaves the same final memory as
/// the original, with one pair per original tile.
pub fn verify_slice_equivalence(
    program: &KernelProgram,
    params: &[u64],
    mem: &MemImage,
    pairs: u32,
) -> Result<(), Divergence> {
    let pair = slice(program).map_err(Divergence::Slice)?;
    verify_pair(program, &pair, params, mem, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ir::parse_kernel;

    const SCALE: &str = "
kernel scale(p: ptr, q: ptr, c: float)
block 0():
  v = load p
  w = fmul v c
  store q w
  ret
";

    #[test]
    fn one_load_one_store_schema() {
        let pair = slice(&parse_kernel(SCALE).unwrap()).unwrap();
        let ops = |k: &KernelProgram| k.nodes().map(|n| n.opclass().name()).collect::<Vec<_>>();
        assert_eq!(ops(&pair.access), ["LOAD", "SEND", "RECV", "STORE", "RETURN"]);
        assert_eq!(ops(&pair.execute), ["RECV", "FMUL", "SEND", "RETURN"]);
        assert_eq!(pair.access.params.last().unwrap().name, PEER_PARAM);
    }

    #[test]
    fn pure_compute_kernel() {
        let k = parse_kernel(
            "kernel f(n: int)\nblock 0():\n  a = const 1.5\n  b = fmul a a\n  ret b\n",
        )
        .unwrap();
        let pair = slice(&k).unwrap();
        assert_eq!(pair.access.num_nodes(), 1);
        assert_eq!(pair.execute.num_nodes(), 3);
    }

    #[test]
    fn gather_update_keeps_f_on_execute_side() {
        let k = parse_kernel(
            "kernel gu(base: ptr, idx: ptr, n: int)
block 0():
  zero = const 0
  go = cmp.lt zero n
  cbr go 1(zero) 2()
block 1(i):
  eight = const 8
  oi = imul i eight
  pi = iadd idx oi
  j = load pi
  oj = imul j eight
  p = iadd base oj
  v = load p
  two = const 2.0
  w = fmul v two
  store p w
  one = const 1
  i2 = iadd i one
  more = cmp.lt i2 n
  cbr more 1(i2) 2()
block 2():
  ret
",
        )
        .unwrap();
        let pair = slice(&k).unwrap();
        let count = |k: &KernelProgram, op: OpClass| k.nodes().filter(|n| n.opclass() == op).count();
        assert_eq!(count(&pair.access, OpClass::Load), 2);
        assert_eq!(count(&pair.access, OpClass::Store), 1);
        assert_eq!(count(&pair.access, OpClass::FMul), 0);
        assert_eq!(count(&pair.execute, OpClass::FMul), 1);
        assert_eq!(count(&pair.execute, OpClass::Load), 0);
        let mut mem = MemImage::new();
        let base = mem.alloc_f64(&[1.0, 2.0, 3.0, 4.0]);
        let idx = mem.alloc_from(&[3, 1, 3, 0]);
        verify_slice_equivalence(&k, &[base, idx, 4], &mem, 1).unwrap();
    }

    #[test]
    fn float_controlled_loop_is_rejected() {
        let k = parse_kernel(
            "kernel f(x: float)
block 0():
  br 1(x)
block 1(v):
  h = const 0.5
  w = fmul v h
  eps = const 0.001
  more = cmp.fgt w eps
  cbr more 1(w) 2()
block 2():
  ret
",
        )
        .unwrap();
        match slice(&k) {
            Err(DaeError::LossOfDecoupling { node, .. }) => assert_eq!(node, 2),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn messages_are_rejected() {
        let k = corpus::benchmark("pingpong").unwrap().program();
        assert!(matches!(slice(&k), Err(DaeError::Unsupported { .. })));
    }

    #[test]
    fn corpus_kernels_are_equivalent() {
        for b in corpus::BENCHMARKS.iter().filter(|b| b.sliceable) {
            let p = b.program();
            for pairs in [1, 2] {
                let w = corpus::workload(b.name, b.default_size.min(64), 5, pairs).unwrap();
                verify_slice_equivalence(&p, &w.params, &w.mem, pairs)
                    .unwrap_or_else(|e| panic!("{} x{}: {}", b.name, pairs, e));
            }
        }
    }

    #[test]
    fn dropped_send_is_caught() {
        let p = corpus::benchmark("vecadd").unwrap().program();
        let w = corpus::workload("vecadd", 16, 1, 1).unwrap();
        let mut pair = slice(&p).unwrap();
        let blocks: Vec<BlockDraft> = pair
            .access
            .blocks
            .iter()
            .map(|b| {
                let mut nodes: Vec<NodeDraft> = b
                    .nodes
                    .iter()
                    .map(|n| NodeDraft {
                        op: n.op.clone(),
                        operands: n.operands.clone(),
                        result: n.result.clone(),
                    })
                    .collect();
                if let Some(i) = nodes.iter().position(|n| n.op == Op::Send) {
                    nodes.remove(i);
                }
                BlockDraft {
                    inputs: b.inputs.clone(),
                    nodes,
                }
            })
            .collect();
        pair.access = KernelProgram::from_drafts("broken", pair.access.params.clone(), blocks).unwrap();
        assert!(verify_pair(&p, &pair, &w.params, &w.mem, 1).is_err());
    }
}
