use std::collections::VecDeque;

use super::{AccelInvocation, CommRecord, DynamicTrace, MemImage, MemRecord, WORD};
use crate::ddg::{build_ddg, StaticDdg, ValueSrc};
use crate::error::TraceError;
use crate::ir::{BinOp, BlockId, CastKind, CmpPred, KernelProgram, Node, NodeId, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpOptions {
    /// Dynamic instruction budget per tile.
    pub budget: u64,
    /// Stamped into accelerator invocation records.
    pub accel_instances: u32,
}

impl Default for InterpOptions {
    fn default() -> Self {
        InterpOptions {
            budget: 100_000_000,
            accel_instances: 1,
        }
    }
}

/// One tile's program in a multi-tile interpretation. `logical_id` and
/// `logical_count` are what TILE_ID / NUM_TILES return; SEND/RECV peers are
/// positions in the tile list.
#[derive(Debug, Clone)]
pub struct TileProgram<'a> {
    pub program: &'a KernelProgram,
    pub params: Vec<u64>,
    pub logical_id: u32,
    pub logical_count: u32,
}

enum Step {
    Ran,
    Blocked,
    Done,
}

struct Tile<'a> {
    id: u32,
    program: &'a KernelProgram,
    ddg: StaticDdg,
    params: Vec<u64>,
    logical_id: u32,
    logical_count: u32,
    block: BlockId,
    pc: usize,
    vals: Vec<u64>,
    inputs: Vec<u64>,
    done: bool,
    trace: DynamicTrace,
}

struct Shared {
    num_tiles: u32,
    channels: Vec<VecDeque<u64>>,
    accel_instances: u32,
}

impl Shared {
    fn channel(&mut self, src: u32, dst: u32) -> &mut VecDeque<u64> {
        &mut self.channels[(src * self.num_tiles + dst) as usize]
    }
}

fn f(bits: u64) -> f64 {
    f64::from_bits(bits)
}

fn binary(op: BinOp, a: u64, b: u64) -> Option<u64> {
    let (ia, ib) = (a as i64, b as i64);
    Some(match op {
        BinOp::IAdd => a.wrapping_add(b),
        BinOp::ISub => a.wrapping_sub(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl((b & 63) as u32),
        BinOp::Shr => a.wrapping_shr((b & 63) as u32),
        BinOp::IMin => ia.min(ib) as u64,
        BinOp::IMax => ia.max(ib) as u64,
        BinOp::IMul => a.wrapping_mul(b),
        BinOp::IDiv => {
            if ib == 0 {
                return None;
            }
            ia.wrapping_div(ib) as u64
        }
        BinOp::IRem => {
            if ib == 0 {
                return None;
            }
            ia.wrapping_rem(ib) as u64
        }
        BinOp::FAdd => (f(a) + f(b)).to_bits(),
        BinOp::FSub => (f(a) - f(b)).to_bits(),
        BinOp::FMin => f(a).min(f(b)).to_bits(),
        BinOp::FMax => f(a).max(f(b)).to_bits(),
        BinOp::FMul => (f(a) * f(b)).to_bits(),
        BinOp::FDiv => (f(a) / f(b)).to_bits(),
    })
}

fn compare(p: CmpPred, a: u64, b: u64) -> u64 {
    let (ia, ib) = (a as i64, b as i64);
    let r = match p {
        CmpPred::Eq => a == b,
        CmpPred::Ne => a != b,
        CmpPred::Lt => ia < ib,
        CmpPred::Le => ia <= ib,
        CmpPred::Gt => ia > ib,
        CmpPred::Ge => ia >= ib,
        CmpPred::FEq => f(a) == f(b),
        CmpPred::FNe => f(a) != f(b),
        CmpPred::FLt => f(a) < f(b),
        CmpPred::FLe => f(a) <= f(b),
        CmpPred::FGt => f(a) > f(b),
        CmpPred::FGe => f(a) >= f(b),
    };
    r as u64
}

impl<'a> Tile<'a> {
    fn new(id: u32, num_tiles: u32, tp: &TileProgram<'a>) -> Result<Self, TraceError> {
        if tp.params.len() != tp.program.params.len() {
            return Err(TraceError::ParamCount {
                expected: tp.program.params.len(),
                got: tp.params.len(),
            });
        }
        let ddg = build_ddg(tp.program).map_err(|e| TraceError::Format(e.to_string()))?;
        let entry = tp.program.entry;
        let len = tp.program.block(entry).nodes.len();
        Ok(Tile {
            id,
            program: tp.program,
            ddg,
            params: tp.params.clone(),
            logical_id: tp.logical_id,
            logical_count: tp.logical_count,
            block: entry,
            pc: 0,
            vals: vec![0; len],
            inputs: Vec::new(),
            done: false,
            trace: DynamicTrace {
                tile_id: id,
                num_tiles,
                ctrl: vec![entry],
                ..Default::default()
            },
        })
    }

    fn value(&self, src: ValueSrc) -> u64 {
        match src {
            ValueSrc::Node(o) => self.vals[o as usize],
            ValueSrc::Input(i) => self.inputs[i as usize],
            ValueSrc::Param(p) => self.params[p as usize],
        }
    }

    fn current(&self) -> &'a Node {
        &self.program.block(self.block).nodes[self.pc]
    }

    fn mem_addr(&self, node: NodeId, addr: u64, mem: &MemImage) -> Result<(), TraceError> {
        match mem.check(addr) {
            Ok(_) => Ok(()),
            Err(true) => Err(TraceError::Misaligned {
                tile: self.id,
                node,
                addr,
            }),
            Err(false) => Err(TraceError::OutOfBounds {
                tile: self.id,
                node,
                addr,
            }),
        }
    }

    fn step(&mut self, mem: &mut MemImage, shared: &mut Shared, budget: u64) -> Result<Step, TraceError> {
        if self.done {
            return Ok(Step::Done);
        }
        let node = self.current();
        let info = self.ddg.node(node.id);
        let arg = |k: usize| self.value(info.operands[k]);
        let id = node.id;
        let mut result = 0u64;
        match &node.op {
            Op::Binary(b) => {
                result = binary(*b, arg(0), arg(1)).ok_or(TraceError::DivisionByZero {
                    tile: self.id,
                    node: id,
                })?;
            }
            Op::Cmp(p) => result = compare(*p, arg(0), arg(1)),
            Op::Cast(CastKind::IntToFloat) => result = (arg(0) as i64 as f64).to_bits(),
            Op::Cast(CastKind::FloatToInt) => result = f(arg(0)) as i64 as u64,
            Op::Load => {
                let addr = arg(0);
                self.mem_addr(id, addr, mem)?;
                result = mem.read(addr).unwrap_or(0);
                self.trace.mem.push(MemRecord {
                    node: id,
                    addr,
                    size: WORD as u16,
                    is_write: false,
                });
            }
            Op::Store => {
                let (addr, v) = (arg(0), arg(1));
                self.mem_addr(id, addr, mem)?;
                mem.write(addr, v);
                self.trace.mem.push(MemRecord {
                    node: id,
                    addr,
                    size: WORD as u16,
                    is_write: true,
                });
            }
            Op::Send => {
                let peer = arg(0);
                if peer >= shared.num_tiles as u64 {
                    return Err(TraceError::BadPeer {
                        tile: self.id,
                        node: id,
                        peer,
                    });
                }
                let v = arg(1);
                shared.channel(self.id, peer as u32).push_back(v);
                self.trace.comm.push(CommRecord {
                    node: id,
                    peer: peer as u32,
                });
            }
            Op::Recv => {
                let peer = arg(0);
                if peer >= shared.num_tiles as u64 {
                    return Err(TraceError::BadPeer {
                        tile: self.id,
                        node: id,
                        peer,
                    });
                }
                let Some(v) = shared.channel(peer as u32, self.id).pop_front() else {
                    return Ok(Step::Blocked);
                };
                result = v;
                self.trace.comm.push(CommRecord {
                    node: id,
                    peer: peer as u32,
                });
            }
            Op::Accel(model) => {
                let args: Vec<u64> = (0..node.operands.len()).map(arg).collect();
                let inv = run_accel(self.id, id, model, &args, mem, shared.accel_instances)?;
                self.trace.accel.push(inv);
            }
            Op::TileId => result = self.logical_id as u64,
            Op::NumTiles => result = self.logical_count as u64,
            Op::Const(lit) => result = lit.bits(),
            Op::Mov => result = arg(0),
            Op::Select => result = if arg(0) != 0 { arg(1) } else { arg(2) },
            Op::Ret => {
                self.count(budget)?;
                self.done = true;
                return Ok(Step::Done);
            }
            Op::Br(_) | Op::CondBr(..) => {
                let which = match node.op {
                    Op::CondBr(..) if arg(0) == 0 => 1,
                    _ => 0,
                };
                let (target, srcs) = &info.edges[which];
                let inputs: Vec<u64> = srcs.iter().map(|s| self.value(*s)).collect();
                let target = *target;
                self.count(budget)?;
                self.inputs = inputs;
                self.block = target;
                self.pc = 0;
                let len = self.program.block(target).nodes.len();
                self.vals.clear();
                self.vals.resize(len, 0);
                self.trace.ctrl.push(target);
                return Ok(Step::Ran);
            }
        }
        self.vals[self.pc] = result;
        self.pc += 1;
        self.count(budget)?;
        Ok(Step::Ran)
    }

    fn count(&mut self, budget: u64) -> Result<(), TraceError> {
        self.trace.instructions += 1;
        if self.trace.instructions > budget {
            return Err(TraceError::BudgetExceeded { tile: self.id, budget });
        }
        Ok(())
    }
}

fn accel_err(tile: u32, node: NodeId, msg: impl Into<String>) -> TraceError {
    TraceError::BadAccelArgs {
        tile,
        node,
        msg: msg.into(),
    }
}

/// Functional behaviour of the built-in accelerator kinds. The iteration
/// counts follow a load / compute / store process layout.
fn run_accel(
    tile: u32,
    node: NodeId,
    model: &str,
    args: &[u64],
    mem: &mut MemImage,
    instances: u32,
) -> Result<AccelInvocation, TraceError> {
    let kind = model.split(['.', '_']).next().unwrap_or(model);
    let need = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(accel_err(tile, node, format!("`{}` takes {} operands, got {}", kind, n, args.len())))
        }
    };
    let read = |mem: &MemImage, a: u64| {
        mem.read(a).ok_or(TraceError::OutOfBounds { tile, node, addr: a })
    };
    let (iters, bytes) = match kind {
        "sgemm" => {
            need(6)?;
            let (a, b, c, m, n, k) = (args[0], args[1], args[2], args[3], args[4], args[5]);
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..k {
                        acc += f(read(mem, a + (i * k + l) * WORD)?) * f(read(mem, b + (l * n + j) * WORD)?);
                    }
                    let dst = c + (i * n + j) * WORD;
                    if !mem.write(dst, acc.to_bits()) {
                        return Err(TraceError::OutOfBounds { tile, node, addr: dst });
                    }
                }
            }
            (
                vec![vec![m * k + k * n], vec![m * n, m * n * k], vec![m * n]],
                WORD * (m * k + k * n + m * n),
            )
        }
        "histo" => {
            need(4)?;
            let (data, n, bins, nbins) = (args[0], args[1], args[2], args[3]);
            if nbins == 0 {
                return Err(accel_err(tile, node, "histo needs at least one bin"));
            }
            for i in 0..n {
                let v = read(mem, data + i * WORD)?;
                let dst = bins + (v % nbins) * WORD;
                let old = read(mem, dst)?;
                mem.write(dst, old.wrapping_add(1));
            }
            (vec![vec![n], vec![n], vec![nbins]], WORD * (n + nbins))
        }
        "ewise" => {
            need(4)?;
            let (a, b, c, n) = (args[0], args[1], args[2], args[3]);
            for i in 0..n {
                let v = f(read(mem, a + i * WORD)?) * f(read(mem, b + i * WORD)?);
                let dst = c + i * WORD;
                if !mem.write(dst, v.to_bits()) {
                    return Err(TraceError::OutOfBounds { tile, node, addr: dst });
                }
            }
            (vec![vec![2 * n], vec![n], vec![n]], WORD * 3 * n)
        }
        _ => {
            return Err(TraceError::UnknownAccel {
                tile,
                node,
                model: model.to_string(),
            })
        }
    };
    Ok(AccelInvocation {
        node,
        model_id: model.to_string(),
        iteration_counts: iters,
        bytes,
        num_instances: instances.max(1),
    })
}

/// Interpret one tile on its own. SEND/RECV must not be used (there is no
/// peer), except to the tile itself.
pub fn interpret(
    program: &KernelProgram,
    params: &[u64],
    mem: MemImage,
    tile_id: u32,
    num_tiles: u32,
) -> Result<(DynamicTrace, MemImage), TraceError> {
    let tp = TileProgram {
        program,
        params: params.to_vec(),
        logical_id: tile_id,
        logical_count: num_tiles,
    };
    let (mut traces, mem) = interpret_multi(&[tp], mem, InterpOptions::default())?;
    let mut t = traces.pop().expect("one tile");
    t.tile_id = tile_id;
    t.num_tiles = num_tiles;
    Ok((t, mem))
}

/// Round-robin interpretation of several tiles over one shared image, with
/// unbounded FIFO channels between every ordered pair of tiles.
pub fn interpret_multi(
    tiles: &[TileProgram<'_>],
    mut mem: MemImage,
    opts: InterpOptions,
) -> Result<(Vec<DynamicTrace>, MemImage), TraceError> {
    const QUANTUM: usize = 4096;
    let n = tiles.len() as u32;
    let mut shared = Shared {
        num_tiles: n,
        channels: vec![VecDeque::new(); (n * n) as usize],
        accel_instances: opts.accel_instances,
    };
    let mut states = tiles
        .iter()
        .enumerate()
        .map(|(i, tp)| Tile::new(i as u32, n, tp))
        .collect::<Result<Vec<_>, _>>()?;
    loop {
        let mut progress = false;
        let mut all_done = true;
        for t in states.iter_mut() {
            for _ in 0..QUANTUM {
                match t.step(&mut mem, &mut shared, opts.budget)? {
                    Step::Ran => progress = true,
                    Step::Blocked | Step::Done => break,
                }
            }
            all_done &= t.done;
        }
        if all_done {
            break;
        }
        if !progress {
            let t = states.iter().find(|t| !t.done).expect("some tile is unfinished");
            return Err(TraceError::Deadlock {
                tile: t.id,
                node: t.current().id,
            });
        }
    }
    Ok((states.into_iter().map(|t| t.trace).collect(), mem))
}

/// SPMD expansion: the same program on `t` tiles, tile IDs 0..t.
pub fn generate_spmd_traces(
    program: &KernelProgram,
    t: u32,
    params: &[u64],
    mem: MemImage,
    opts: InterpOptions,
) -> Result<(Vec<DynamicTrace>, MemImage), TraceError> {
    assert!(t >= 1, "need at least one tile");
    let tiles: Vec<TileProgram> = (0..t)
        .map(|i| TileProgram {
            program,
            params: params.to_vec(),
            logical_id: i,
            logical_count: t,
        })
        .collect();
    interpret_multi(&tiles, mem, opts)
}
