//! A core tile replaying one dynamic trace against the static DDG.
//!
//! The control trace says which block runs next. Each launch instantiates
//! every node of that block as a fresh dynamic instance with a global,
//! program-ordered ID. Instances issue out of order as soon as their
//! operands are ready, within the issue width, the instruction window, the
//! functional-unit counts and the memory-ordering rules.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use super::config::{BranchMode, CoreConfig, Cost, LatencyTable};
use crate::ddg::{StaticDdg, ValueSrc};
use crate::error::SimError;
use crate::interleave::channel::{Channels, Delivery, MsgId};
use crate::ir::{BlockId, NodeId, OpClass};
use crate::mao::{Check, Mao, MemKind};
use crate::mem::MemRequest;
use crate::trace::{AccelInvocation, DynamicTrace};

/// An accelerator call handed to the interleaver.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelJob {
    pub tile: u32,
    pub gid: u64,
    pub invocation: AccelInvocation,
    pub time_fs: u64,
}

/// Something that happened outside the tile and affects it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum External {
    MemDone { gid: u64 },
    Recv { gid: u64, avail_fs: u64 },
    AccelDone { gid: u64 },
    Wake,
}

impl From<Delivery> for External {
    fn from(d: Delivery) -> Self {
        match d {
            Delivery::Recv { gid, avail_fs } => External::Recv { gid, avail_fs },
            Delivery::Space => External::Wake,
        }
    }
}

/// Shared resources a tile touches while ticking.
pub struct Port<'a> {
    pub mem: &'a mut Vec<MemRequest>,
    pub channels: &'a mut Channels,
    pub accel: &'a mut Vec<AccelJob>,
    pub log: Option<&'a mut Vec<String>>,
}

/// Two memory accesses that issued out of program order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReorderPair {
    pub older_gid: u64,
    pub older_addr: u64,
    pub older_size: u32,
    pub older_is_store: bool,
    pub younger_gid: u64,
    pub younger_addr: u64,
    pub younger_size: u32,
    pub younger_is_store: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoreStats {
    pub cycles: u64,
    pub instructions: u64,
    pub by_opclass: [u64; OpClass::COUNT],
    /// Instruction energy from the latency table (memory energy is counted
    /// by the hierarchy).
    pub energy: f64,
    pub dbbs: u64,
    pub mispredictions: u64,
    pub mao_stalls: u64,
    pub mao_full_cycles: u64,
    pub window_stalls: u64,
    pub live_dbb_stalls: u64,
    pub fu_stalls: u64,
    pub mao_peak: usize,
    pub loads: u64,
    pub stores: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Waiting,
    Ready,
    Issued,
    Done,
}

/// How a node behaves on a decoupled access tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Plain,
    /// Load whose value only feeds SENDs: retires from the core at once.
    TerminalLoad,
    /// SEND carrying a terminal load's value.
    LoadSend,
    /// RECV whose value only feeds stores as data.
    ValueRecv,
    /// Store whose data comes from a value RECV.
    DeferredStore,
}

#[derive(Debug)]
struct Inst {
    node: NodeId,
    opclass: OpClass,
    dbb: u64,
    pending: u32,
    state: State,
    ext_children: Vec<u64>,
    mem: Option<(u64, u32, bool)>,
    /// Producer of the address operand while it is still incomplete.
    addr_src: Option<u64>,
    peer: u32,
    accel: Option<Box<AccelInvocation>>,
    issue_cycle: u64,
}

#[derive(Debug)]
struct Dbb {
    block: BlockId,
    base: u64,
    remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    At(u64),
    /// Waiting for the terminator `gid` to complete, plus a penalty.
    Terminator { gid: u64, penalty: u64 },
}

pub struct CoreTile {
    id: u32,
    cfg: CoreConfig,
    costs: [(u64, f64); OpClass::COUNT],
    ddg: Arc<StaticDdg>,
    trace: DynamicTrace,
    period_fs: u64,
    roles: Vec<Role>,

    next_ctrl: usize,
    mem_pos: usize,
    comm_pos: usize,
    accel_pos: usize,
    gate: Gate,
    next_inputs: Vec<Option<u64>>,

    insts: VecDeque<Inst>,
    base_gid: u64,
    next_gid: u64,
    dbbs: VecDeque<Dbb>,
    dbb_base: u64,
    live: Vec<u32>,
    ready: BTreeSet<u64>,
    completions: BinaryHeap<Reverse<(u64, u64)>>,
    inbox: BinaryHeap<Reverse<(u64, u64, External)>>,
    inbox_seq: u64,
    fu_busy: [u32; OpClass::COUNT],
    mao: Mao,
    mem_queue: VecDeque<u64>,
    comm_order: HashMap<(u32, bool), VecDeque<u64>>,

    // Decoupled access state.
    early_mem: HashMap<u64, Role>,
    load_done_fs: HashMap<u64, u64>,
    load_msg: HashMap<u64, MsgId>,
    value_ready_fs: HashMap<u64, u64>,
    deferred: HashMap<u64, Vec<(u64, u64, NodeId)>>,
    /// Decoupled stores whose value is known, by gid: (addr, node, value
    /// arrival). They write once the MAO store rule allows.
    store_buffer: BTreeMap<u64, (u64, NodeId, u64)>,

    now: u64,
    last_tick: Option<u64>,
    busy: bool,
    reorders: Option<Vec<ReorderPair>>,
    stats: CoreStats,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn decoupled_roles(ddg: &StaticDdg) -> Vec<Role> {
    let mut roles = vec![Role::Plain; ddg.nodes.len()];
    for n in &ddg.nodes {
        let block = ddg.block(n.block);
        let me = ValueSrc::Node(n.offset);
        let escapes = ddg.node(block.terminator).edges.iter().any(|(_, args)| args.contains(&me));
        if escapes || n.local_children.is_empty() {
            continue;
        }
        let (child_class, role, child_role) = match n.opclass {
            OpClass::Load => (OpClass::Send, Role::TerminalLoad, Role::LoadSend),
            OpClass::Recv => (OpClass::Store, Role::ValueRecv, Role::DeferredStore),
            _ => continue,
        };
        let children: Vec<NodeId> = n.local_children.iter().map(|&c| block.first + c).collect();
        let only_data = children.iter().all(|&c| {
            let cn = ddg.node(c);
            cn.opclass == child_class && cn.operands[1] == me && cn.operands[0] != me
        });
        if only_data {
            roles[n.id as usize] = role;
            for c in children {
                roles[c as usize] = child_role;
            }
        }
    }
    roles
}

impl CoreTile {
    pub fn new(
        id: u32,
        cfg: CoreConfig,
        latency: &LatencyTable,
        ddg: Arc<StaticDdg>,
        trace: DynamicTrace,
        decoupled: bool,
    ) -> Result<Self, SimError> {
        cfg.validate().map_err(SimError::Setup)?;
        let mut costs = [(1, 0.0); OpClass::COUNT];
        for n in &ddg.nodes {
            match latency.cost(n.opclass) {
                Some(Cost::Fixed { latency, energy }) => costs[n.opclass.index()] = (latency, energy),
                Some(Cost::Dynamic) => costs[n.opclass.index()] = (0, 0.0),
                None => {
                    return Err(SimError::Setup(format!(
                        "latency table has no entry for {} (used by node {})",
                        n.opclass, n.id
                    )))
                }
            }
        }
        let roles = if decoupled {
            decoupled_roles(&ddg)
        } else {
            vec![Role::Plain; ddg.nodes.len()]
        };
        let period_fs = crate::interleave::period_fs(cfg.freq_hz);
        let live = vec![0; ddg.blocks.len()];
        let mao = Mao::new(cfg.lsq_size as usize);
        Ok(CoreTile {
            id,
            cfg,
            costs,
            ddg,
            trace,
            period_fs,
            roles,
            next_ctrl: 0,
            mem_pos: 0,
            comm_pos: 0,
            accel_pos: 0,
            gate: Gate::At(0),
            next_inputs: Vec::new(),
            insts: VecDeque::new(),
            base_gid: 0,
            next_gid: 0,
            dbbs: VecDeque::new(),
            dbb_base: 0,
            live,
            ready: BTreeSet::new(),
            completions: BinaryHeap::new(),
            inbox: BinaryHeap::new(),
            inbox_seq: 0,
            fu_busy: [0; OpClass::COUNT],
            mao,
            mem_queue: VecDeque::new(),
            comm_order: HashMap::new(),
            early_mem: HashMap::new(),
            load_done_fs: HashMap::new(),
            load_msg: HashMap::new(),
            value_ready_fs: HashMap::new(),
            deferred: HashMap::new(),
            store_buffer: BTreeMap::new(),
            now: 0,
            last_tick: None,
            busy: true,
            reorders: None,
            stats: CoreStats::default(),
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn config(&self) -> &CoreConfig {
        &self.cfg
    }

    pub fn period_fs(&self) -> u64 {
        self.period_fs
    }

    /// Charge energy spent on this tile's behalf (inline accelerator calls).
    pub fn add_energy(&mut self, joules: f64) {
        self.stats.energy += joules;
    }

    pub fn stats(&self) -> &CoreStats {
        &self.stats
    }

    /// Record every pair of memory accesses that issue out of order.
    pub fn log_reorders(&mut self) {
        self.reorders = Some(Vec::new());
    }

    pub fn reorders(&self) -> &[ReorderPair] {
        self.reorders.as_deref().unwrap_or(&[])
    }

    pub fn is_finished(&self) -> bool {
        self.next_ctrl >= self.trace.ctrl.len()
            && self.insts.is_empty()
            && self.mao.is_empty()
            && self.deferred.is_empty()
            && self.store_buffer.is_empty()
            && self.early_mem.is_empty()
    }

    pub fn deliver(&mut self, time_fs: u64, ev: External) {
        self.inbox.push(Reverse((time_fs, self.inbox_seq, ev)));
        self.inbox_seq += 1;
    }

    /// Next global time at which this tile has work, if any.
    pub fn next_event_fs(&self) -> Option<u64> {
        let floor = self.last_tick.map_or(0, |c| c + 1);
        if self.busy {
            return Some(floor * self.period_fs);
        }
        let mut next: Option<u64> = None;
        let mut consider = |c: u64| next = Some(next.map_or(c, |n: u64| n.min(c)));
        if let Some(Reverse((c, _))) = self.completions.peek() {
            consider(*c);
        }
        if let Some(Reverse((t, _, _))) = self.inbox.peek() {
            consider(ceil_div(*t, self.period_fs));
        }
        if let Gate::At(c) = self.gate {
            if self.next_ctrl < self.trace.ctrl.len() && c > self.now {
                consider(c);
            }
        }
        for &(_, _, ready) in self.store_buffer.values() {
            let c = ceil_div(ready, self.period_fs);
            if c > self.now {
                consider(c);
            }
        }
        next.map(|c| c.max(floor) * self.period_fs)
    }

    fn oldest_uncompleted(&self) -> u64 {
        if self.insts.is_empty() {
            self.next_gid
        } else {
            self.base_gid
        }
    }

    fn inst(&self, gid: u64) -> Option<&Inst> {
        gid.checked_sub(self.base_gid).and_then(|i| self.insts.get(i as usize))
    }

    fn inst_mut(&mut self, gid: u64) -> Option<&mut Inst> {
        gid.checked_sub(self.base_gid).and_then(move |i| self.insts.get_mut(i as usize))
    }

    fn is_done(&self, gid: u64) -> bool {
        self.inst(gid).map_or(gid < self.base_gid, |i| i.state == State::Done)
    }

    fn dbb(&self, idx: u64) -> &Dbb {
        &self.dbbs[(idx - self.dbb_base) as usize]
    }

    fn dbb_mut(&mut self, idx: u64) -> &mut Dbb {
        &mut self.dbbs[(idx - self.dbb_base) as usize]
    }

    fn log(&self, port: &mut Port, what: std::fmt::Arguments) {
        if let Some(log) = port.log.as_mut() {
            log.push(format!("t={} tile={} {}", self.now * self.period_fs, self.id, what));
        }
    }

    /// Advance one cycle at global time `time_fs`, which must be a multiple
    /// of this tile's period.
    pub fn tick(&mut self, time_fs: u64, port: &mut Port) -> Result<(), SimError> {
        let cycle = time_fs / self.period_fs;
        self.now = cycle;
        self.last_tick = Some(cycle);
        self.busy = false;

        self.take_inbox(port)?;
        while let Some(&Reverse((c, gid))) = self.completions.peek() {
            if c > cycle {
                break;
            }
            self.completions.pop();
            self.complete(gid, port);
        }
        self.drain_store_buffer(port);
        self.launch(port)?;
        self.dispatch_mem();
        self.issue(port);
        self.drain_store_buffer(port);
        if self.next_ctrl >= self.trace.ctrl.len() && self.insts.is_empty() {
            self.check_leftovers()?;
        }
        Ok(())
    }

    fn take_inbox(&mut self, port: &mut Port) -> Result<(), SimError> {
        let now_fs = self.now * self.period_fs;
        while let Some(&Reverse((t, _, ev))) = self.inbox.peek() {
            if t > now_fs {
                break;
            }
            self.inbox.pop();
            self.busy = true;
            match ev {
                External::Wake => {}
                External::MemDone { gid } => self.mem_done(gid, t, port),
                External::Recv { gid, avail_fs } => {
                    let node = self.inst(gid).map(|i| i.node);
                    match node.map(|n| self.roles[n as usize]) {
                        Some(Role::ValueRecv) | None => self.value_ready(gid, avail_fs, port),
                        Some(_) => {
                            let issue = self.inst(gid).map_or(self.now, |i| i.issue_cycle);
                            let at = (issue + 1).max(ceil_div(avail_fs, self.period_fs)).max(self.now);
                            self.completions.push(Reverse((at, gid)));
                        }
                    }
                }
                External::AccelDone { gid } => {
                    self.completions.push(Reverse((ceil_div(t, self.period_fs).max(self.now), gid)));
                }
            }
        }
        Ok(())
    }

    fn mem_done(&mut self, gid: u64, t: u64, port: &mut Port) {
        let cycle = ceil_div(t, self.period_fs).max(self.now);
        self.stats.cycles = self.stats.cycles.max(cycle);
        if self.mao.contains(gid) {
            self.mao.complete(gid);
            self.mao.retire(gid);
        }
        match self.early_mem.remove(&gid) {
            Some(Role::TerminalLoad) => match self.load_msg.remove(&gid) {
                Some(id) => port.channels.resolve(id, t),
                None => {
                    self.load_done_fs.insert(gid, t);
                }
            },
            Some(_) => {}
            None => self.completions.push(Reverse((cycle, gid))),
        }
    }

    fn value_ready(&mut self, recv: u64, avail_fs: u64, port: &mut Port) {
        match self.deferred.remove(&recv) {
            Some(stores) => {
                for (gid, addr, node) in stores {
                    self.submit_store(gid, addr, node, avail_fs, port);
                }
            }
            None => {
                self.value_ready_fs.insert(recv, avail_fs);
            }
        }
    }

    fn submit_store(&mut self, gid: u64, addr: u64, node: NodeId, at_fs: u64, port: &mut Port) {
        self.store_buffer.insert(gid, (addr, node, at_fs));
        self.drain_store_buffer(port);
    }

    /// Write buffered stores whose value has arrived and which no older
    /// access blocks.
    fn drain_store_buffer(&mut self, port: &mut Port) {
        let now_fs = self.now * self.period_fs;
        let due: Vec<u64> = self
            .store_buffer
            .iter()
            .filter(|(_, &(_, _, ready))| ceil_div(ready, self.period_fs) <= self.now)
            .map(|(&g, _)| g)
            .collect();
        for gid in due {
            if self.mao.check(gid, self.cfg.alias_speculation) == Check::Stall {
                continue;
            }
            let (addr, node, ready) = self.store_buffer.remove(&gid).expect("listed");
            self.busy = true;
            port.mem.push(MemRequest {
                tile: self.id,
                gid,
                node,
                addr,
                is_write: true,
                time_fs: ready.max(now_fs),
            });
        }
    }

    fn complete(&mut self, gid: u64, port: &mut Port) {
        let Some(inst) = self.inst_mut(gid) else { return };
        if inst.state == State::Done {
            return;
        }
        inst.state = State::Done;
        let (op, node, dbb_idx) = (inst.opclass, inst.node, inst.dbb);
        let ext = std::mem::take(&mut inst.ext_children);
        self.busy = true;
        self.stats.cycles = self.stats.cycles.max(self.now);
        self.stats.instructions += 1;
        self.stats.by_opclass[op.index()] += 1;
        self.stats.energy += self.costs[op.index()].1;
        if self.cfg.fu_count(op).is_some() {
            self.fu_busy[op.index()] -= 1;
        }
        self.log(port, format_args!("ev=complete gid={} node={}", gid, node));

        let base = self.dbb(dbb_idx).base;
        let info = self.ddg.node(node);
        let children: Vec<u64> = info.local_children.iter().map(|&c| base + c as u64).collect();
        for c in children.into_iter().chain(ext) {
            self.parent_done(c);
            if let Some(child) = self.inst_mut(c) {
                if child.addr_src == Some(gid) {
                    child.addr_src = None;
                    if self.mao.contains(c) {
                        self.mao.resolve(c);
                    }
                }
            }
        }

        let d = self.dbb_mut(dbb_idx);
        d.remaining -= 1;
        if d.remaining == 0 {
            let b = d.block;
            self.live[b as usize] -= 1;
        }
        if let Gate::Terminator { gid: g, penalty } = self.gate {
            if g == gid {
                self.gate = Gate::At(self.now + penalty);
            }
        }
        while self.insts.front().is_some_and(|i| i.state == State::Done) {
            self.insts.pop_front();
            self.base_gid += 1;
        }
        while self.dbbs.front().is_some_and(|d| d.remaining == 0) {
            self.dbbs.pop_front();
            self.dbb_base += 1;
        }
    }

    fn parent_done(&mut self, gid: u64) {
        let Some(child) = self.inst_mut(gid) else { return };
        child.pending -= 1;
        if child.pending == 0 {
            child.state = State::Ready;
            self.ready.insert(gid);
        }
    }

    fn launch(&mut self, port: &mut Port) -> Result<(), SimError> {
        while self.next_ctrl < self.trace.ctrl.len() {
            let Gate::At(at) = self.gate else { break };
            if self.now < at {
                break;
            }
            let block = self.trace.ctrl[self.next_ctrl];
            if block as usize >= self.ddg.blocks.len() {
                return Err(SimError::BadSuccessor {
                    tile: self.id,
                    from: self.trace.ctrl.get(self.next_ctrl.wrapping_sub(1)).copied().unwrap_or(0),
                    to: block,
                });
            }
            let limit = self.cfg.live_dbb_limit;
            if limit > 0 && self.live[block as usize] >= limit {
                self.stats.live_dbb_stalls += 1;
                break;
            }
            if self.next_gid >= self.oldest_uncompleted() + self.cfg.window_size as u64 {
                self.stats.window_stalls += 1;
                break;
            }
            self.launch_one(block, port)?;
        }
        Ok(())
    }

    fn launch_one(&mut self, block: BlockId, port: &mut Port) -> Result<(), SimError> {
        let ddg = Arc::clone(&self.ddg);
        let shape = ddg.block(block);
        let base = self.next_gid;
        let dbb_idx = self.dbb_base + self.dbbs.len() as u64;
        let input_src = if self.next_ctrl == 0 {
            if block != 0 {
                return Err(SimError::BadEntry { tile: self.id });
            }
            vec![None; shape.num_inputs as usize]
        } else {
            std::mem::take(&mut self.next_inputs)
        };

        for off in 0..shape.len {
            let node = shape.first + off;
            let info = ddg.node(node);
            let gid = base + off as u64;
            let mut pending = info.local_parents.len() as u32;
            for &i in &info.input_parents {
                if let Some(src) = input_src[i as usize] {
                    if !self.is_done(src) {
                        pending += 1;
                        self.inst_mut(src).expect("live producer").ext_children.push(gid);
                    }
                }
            }
            let mut inst = Inst {
                node,
                opclass: info.opclass,
                dbb: dbb_idx,
                pending,
                state: State::Waiting,
                ext_children: Vec::new(),
                mem: None,
                addr_src: None,
                peer: 0,
                accel: None,
                issue_cycle: 0,
            };
            match info.opclass {
                OpClass::Load | OpClass::Store => {
                    let rec = self.trace.mem.get(self.mem_pos).copied();
                    match rec {
                        Some(r) if r.node == node && r.is_write == (info.opclass == OpClass::Store) => {
                            inst.mem = Some((r.addr, r.size as u32, r.is_write));
                            inst.addr_src = match info.operands[0] {
                                ValueSrc::Node(o) => Some(base + o as u64),
                                ValueSrc::Input(i) => input_src[i as usize].filter(|&g| !self.is_done(g)),
                                ValueSrc::Param(_) => None,
                            };
                        }
                        _ => {
                            return Err(SimError::TraceMismatch {
                                tile: self.id,
                                node,
                                what: "memory",
                            })
                        }
                    }
                    self.mem_pos += 1;
                    self.mem_queue.push_back(gid);
                }
                OpClass::Send | OpClass::Recv => {
                    match self.trace.comm.get(self.comm_pos) {
                        Some(r) if r.node == node => inst.peer = r.peer,
                        _ => {
                            return Err(SimError::TraceMismatch {
                                tile: self.id,
                                node,
                                what: "communication",
                            })
                        }
                    }
                    self.comm_pos += 1;
                    let key = (inst.peer, info.opclass == OpClass::Send);
                    self.comm_order.entry(key).or_default().push_back(gid);
                }
                OpClass::AccelInvoke => {
                    match self.trace.accel.get(self.accel_pos) {
                        Some(r) if r.node == node => inst.accel = Some(Box::new(r.clone())),
                        _ => {
                            return Err(SimError::TraceMismatch {
                                tile: self.id,
                                node,
                                what: "accelerator",
                            })
                        }
                    }
                    self.accel_pos += 1;
                }
                _ => {}
            }
            if pending == 0 {
                inst.state = State::Ready;
                self.ready.insert(gid);
            }
            self.insts.push_back(inst);
        }
        self.next_gid = base + shape.len as u64;
        self.live[block as usize] += 1;
        self.stats.dbbs += 1;
        self.busy = true;
        self.log(port, format_args!("ev=launch block={} first={} len={}", block, base, shape.len));

        // Successor bookkeeping.
        let term_gid = base + (shape.terminator - shape.first) as u64;
        let term = ddg.node(shape.terminator);
        self.next_ctrl += 1;
        let Some(&next) = self.trace.ctrl.get(self.next_ctrl) else {
            self.dbbs.push_back(Dbb {
                block,
                base,
                remaining: shape.len,
            });
            return Ok(());
        };
        let Some((_, args)) = term.edges.iter().find(|(t, _)| *t == next) else {
            return Err(SimError::BadSuccessor {
                tile: self.id,
                from: block,
                to: next,
            });
        };
        self.next_inputs = args
            .iter()
            .map(|a| match *a {
                ValueSrc::Node(o) => Some(base + o as u64),
                ValueSrc::Input(i) => input_src[i as usize],
                ValueSrc::Param(_) => None,
            })
            .collect();
        self.dbbs.push_back(Dbb {
            block,
            base,
            remaining: shape.len,
        });
        self.gate = match self.cfg.branch_mode {
            BranchMode::Off => Gate::Terminator {
                gid: term_gid,
                penalty: 0,
            },
            BranchMode::Perfect => Gate::At(self.now + 1),
            BranchMode::Static => {
                let predicted = predict_btfnt(block, &shape.successors, &term.edges);
                if predicted == Some(next) {
                    Gate::At(self.now + 1)
                } else {
                    self.stats.mispredictions += 1;
                    Gate::Terminator {
                        gid: term_gid,
                        penalty: self.cfg.misprediction_latency,
                    }
                }
            }
        };
        if let Gate::Terminator { gid, penalty } = self.gate {
            if self.is_done(gid) {
                self.gate = Gate::At(self.now + penalty);
            }
        }
        Ok(())
    }

    fn dispatch_mem(&mut self) {
        let limit = self.oldest_uncompleted() + self.cfg.window_size as u64;
        while let Some(&gid) = self.mem_queue.front() {
            if gid >= limit {
                break;
            }
            if self.mao.is_full() {
                self.stats.mao_full_cycles += 1;
                break;
            }
            let inst = self.inst(gid).expect("queued memory op is live");
            let (addr, size, write) = inst.mem.expect("memory op has a record");
            let ready = inst.addr_src.is_none();
            let kind = if write { MemKind::Store } else { MemKind::Load };
            self.mao.insert(gid, kind, addr, size).expect("room checked");
            if ready {
                self.mao.resolve(gid);
            }
            self.mem_queue.pop_front();
            self.busy = true;
        }
        self.stats.mao_peak = self.stats.mao_peak.max(self.mao.len());
    }

    fn issue(&mut self, port: &mut Port) {
        let limit = self.oldest_uncompleted() + self.cfg.window_size as u64;
        let width = self.cfg.issue_width as usize;
        let candidates: Vec<u64> = self.ready.range(..limit).copied().collect();
        let mut issued = 0;
        for gid in candidates {
            if issued == width {
                break;
            }
            if self.try_issue(gid, port) {
                issued += 1;
            }
        }
        if issued > 0 {
            self.busy = true;
        }
    }

    fn try_issue(&mut self, gid: u64, port: &mut Port) -> bool {
        let inst = self.inst(gid).expect("ready instance is live");
        let (op, node, peer, mem) = (inst.opclass, inst.node, inst.peer, inst.mem);
        let role = self.roles[node as usize];
        if let Some(n) = self.cfg.fu_count(op) {
            if self.fu_busy[op.index()] >= n {
                self.stats.fu_stalls += 1;
                return false;
            }
        }
        if op.is_memory() {
            if !self.mao.contains(gid) {
                return false;
            }
            // A decoupled store only parks its address here; the ordering
            // check happens when it writes.
            if role != Role::DeferredStore && self.mao.check(gid, self.cfg.alias_speculation) == Check::Stall {
                self.stats.mao_stalls += 1;
                return false;
            }
        }
        if matches!(op, OpClass::Send | OpClass::Recv) {
            let key = (peer, op == OpClass::Send);
            if self.comm_order.get(&key).and_then(|q| q.front()) != Some(&gid) {
                return false;
            }
            if op == OpClass::Send && !port.channels.has_room(self.id, peer) {
                port.channels.mark_blocked(self.id, peer);
                return false;
            }
            self.comm_order.get_mut(&key).expect("checked").pop_front();
        }

        let now = self.now;
        let now_fs = now * self.period_fs;
        self.ready.remove(&gid);
        if self.cfg.fu_count(op).is_some() {
            self.fu_busy[op.index()] += 1;
        }
        let inst = self.inst_mut(gid).expect("live");
        inst.state = State::Issued;
        inst.issue_cycle = now;
        let accel = inst.accel.take();
        self.log(port, format_args!("ev=issue gid={} node={} op={}", gid, node, op));

        match op {
            OpClass::Load | OpClass::Store => {
                let (addr, _, is_write) = mem.expect("memory op has a record");
                if is_write {
                    self.stats.stores += 1;
                } else {
                    self.stats.loads += 1;
                }
                if self.reorders.is_some() {
                    self.record_reorders(gid);
                }
                match role {
                    Role::DeferredStore => {
                        self.early_mem.insert(gid, role);
                        self.completions.push(Reverse((now + 1, gid)));
                        let info = self.ddg.node(node);
                        let ValueSrc::Node(o) = info.operands[1] else {
                            unreachable!("deferred store data comes from a local RECV")
                        };
                        let recv = self.dbb(self.inst(gid).expect("live").dbb).base + o as u64;
                        match self.value_ready_fs.remove(&recv) {
                            Some(at) => self.submit_store(gid, addr, node, at, port),
                            None => self.deferred.entry(recv).or_default().push((gid, addr, node)),
                        }
                    }
                    _ => {
                        if role == Role::TerminalLoad {
                            self.early_mem.insert(gid, role);
                            self.completions.push(Reverse((now + 1, gid)));
                        }
                        port.mem.push(MemRequest {
                            tile: self.id,
                            gid,
                            node,
                            addr,
                            is_write,
                            time_fs: now_fs,
                        });
                    }
                }
            }
            OpClass::Send => {
                let lat = port.channels.latency().max(1);
                if role == Role::LoadSend {
                    let info = self.ddg.node(node);
                    let ValueSrc::Node(o) = info.operands[1] else {
                        unreachable!("load send data comes from a local LOAD")
                    };
                    let load = self.dbb(self.inst(gid).expect("live").dbb).base + o as u64;
                    let id = port.channels.send(self.id, peer, now_fs, true).expect("room checked");
                    match self.load_done_fs.remove(&load) {
                        Some(t) => port.channels.resolve(id, t),
                        None => {
                            self.load_msg.insert(load, id);
                        }
                    }
                } else {
                    port.channels.send(self.id, peer, now_fs, false).expect("room checked");
                }
                self.completions.push(Reverse((now + lat, gid)));
            }
            OpClass::Recv => {
                let got = port.channels.recv(self.id, peer, gid, now_fs);
                if role == Role::ValueRecv {
                    self.completions.push(Reverse((now + 1, gid)));
                    if let Some(avail) = got {
                        self.value_ready(gid, avail, port);
                    }
                } else if let Some(avail) = got {
                    let at = (now + 1).max(ceil_div(avail, self.period_fs));
                    self.completions.push(Reverse((at, gid)));
                }
            }
            OpClass::AccelInvoke => {
                let invocation = *accel.expect("accel op has a record");
                port.accel.push(AccelJob {
                    tile: self.id,
                    gid,
                    invocation,
                    time_fs: now_fs,
                });
            }
            _ => {
                let lat = self.costs[op.index()].0;
                self.completions.push(Reverse((now + lat, gid)));
            }
        }
        true
    }

    fn record_reorders(&mut self, gid: u64) {
        let me = *self.mao.get(gid).expect("issuing op is in the MAO");
        // Only entries that have not issued yet are overtaken.
        let pairs: Vec<ReorderPair> = self
            .mao
            .overtaken(gid)
            .into_iter()
            .filter(|&o| self.inst(o).is_some_and(|i| matches!(i.state, State::Waiting | State::Ready)))
            .map(|o| {
                let e = self.mao.get(o).expect("overtaken entry");
                ReorderPair {
                    older_gid: o,
                    older_addr: e.addr,
                    older_size: e.size,
                    older_is_store: e.kind == MemKind::Store,
                    younger_gid: gid,
                    younger_addr: me.addr,
                    younger_size: me.size,
                    younger_is_store: me.kind == MemKind::Store,
                }
            })
            .collect();
        self.reorders.as_mut().expect("logging on").extend(pairs);
    }

    fn check_leftovers(&self) -> Result<(), SimError> {
        let left = [
            ("memory", self.trace.mem.len() - self.mem_pos),
            ("communication", self.trace.comm.len() - self.comm_pos),
            ("accelerator", self.trace.accel.len() - self.accel_pos),
        ];
        for (what, extra) in left {
            if extra > 0 {
                return Err(SimError::TraceLeftover {
                    tile: self.id,
                    what,
                    extra,
                });
            }
        }
        Ok(())
    }

    /// Why this tile cannot make progress, for deadlock reports.
    pub fn describe_stall(&self) -> String {
        match self.insts.front() {
            Some(i) => format!(
                "tile {}: oldest instruction gid={} node={} ({}) is {}",
                self.id,
                self.base_gid,
                i.node,
                i.opclass,
                match i.state {
                    State::Waiting => "waiting on operands",
                    State::Ready => "ready but blocked",
                    State::Issued => "issued and never completed",
                    State::Done => "done",
                }
            ),
            None if self.next_ctrl < self.trace.ctrl.len() => {
                format!("tile {}: block {} never launched", self.id, self.trace.ctrl[self.next_ctrl])
            }
            None => format!("tile {}: waiting on {} memory accesses", self.id, self.mao.len()),
        }
    }
}

/// Backward-taken, forward-not-taken: the first backward edge if there is
/// one, otherwise the fall-through (last) edge.
fn predict_btfnt(from: BlockId, successors: &[BlockId], edges: &[(BlockId, Vec<ValueSrc>)]) -> Option<BlockId> {
    if successors.is_empty() {
        return None;
    }
    edges
        .iter()
        .map(|(t, _)| *t)
        .find(|&t| t <= from)
        .or_else(|| edges.last().map(|(t, _)| *t))
}
