//! Independent reference models and generators shared by the integration
//! tests. Nothing here calls into the simulator's timing code; the oracles
//! are written from the scheduling, cache and DRAM rules directly.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use tilesim::cpu::LatencyTable;
use tilesim::ir::OpClass;
use tilesim::trace::MemImage;

// ---------------------------------------------------------------------------
// Random multi-block DAG kernels and a brute-force list scheduler.

/// Where a value comes from, relative to its block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Src {
    Local(usize),
    Input(usize),
    Param,
}

#[derive(Debug, Clone)]
pub struct ONode {
    pub class: OpClass,
    pub srcs: Vec<Src>,
}

/// A static block; its last node is the terminator. `edges[k]` is a
/// successor block and the sources of its inputs.
#[derive(Debug, Clone)]
pub struct OBlock {
    pub nodes: Vec<ONode>,
    pub edges: Vec<(usize, Vec<Src>)>,
}

#[derive(Debug, Clone)]
pub struct DagCase {
    pub text: String,
    pub blocks: Vec<OBlock>,
    /// Values for `(z, n)`: z is zero, n is the loop trip count.
    pub params: Vec<u64>,
    pub latency: LatencyTable,
    pub lat: HashMap<OpClass, u64>,
}

const ARITH: &[(&str, OpClass)] = &[
    ("iadd", OpClass::IAdd),
    ("isub", OpClass::IAdd),
    ("imul", OpClass::IMul),
    ("fadd", OpClass::FAdd),
    ("fmul", OpClass::FMul),
    ("fdiv", OpClass::FDiv),
    ("cmp.lt", OpClass::Cmp),
    ("mov", OpClass::Move),
];

struct Emitter {
    text: String,
    names: Vec<String>,
    nodes: Vec<ONode>,
    inputs: Vec<String>,
}

impl Emitter {
    fn new(header: String, inputs: Vec<String>) -> Self {
        Emitter {
            text: header,
            names: Vec::new(),
            nodes: Vec::new(),
            inputs,
        }
    }

    fn name_of(&self, s: Src) -> String {
        match s {
            Src::Local(i) => self.names[i].clone(),
            Src::Input(i) => self.inputs[i].clone(),
            Src::Param => "z".into(),
        }
    }

    fn push(&mut self, name: Option<String>, mnemonic: &str, class: OpClass, srcs: Vec<Src>, tail: &str) {
        let mut parts: Vec<String> = Vec::new();
        if let Some(n) = &name {
            parts.push(format!("{} =", n));
        }
        parts.push(mnemonic.to_string());
        parts.extend(srcs.iter().map(|&s| self.name_of(s)));
        if !tail.is_empty() {
            parts.push(tail.to_string());
        }
        self.text.push_str(&format!("  {}\n", parts.join(" ")));
        self.names.push(name.unwrap_or_default());
        self.nodes.push(ONode { class, srcs });
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Src {
        let locals = self.names.iter().filter(|n| !n.is_empty()).count();
        let r = rng.gen_range(0..10);
        if r < 6 && locals > 0 {
            let valued: Vec<usize> = (0..self.names.len()).filter(|&i| !self.names[i].is_empty()).collect();
            Src::Local(*valued.choose(rng).unwrap())
        } else if r < 9 && !self.inputs.is_empty() {
            Src::Input(rng.gen_range(0..self.inputs.len()))
        } else {
            Src::Param
        }
    }
}

/// A straight-line sequence of up to four blocks, one of which may be a
/// counted self-loop, with at most 30 static nodes. Values cross blocks
/// through block inputs. Latencies are drawn per opclass from 1..=8.
pub fn random_dag(rng: &mut impl Rng) -> DagCase {
    let nblocks = rng.gen_range(1..=4usize);
    let loop_block = if nblocks >= 3 && rng.gen_bool(0.6) {
        Some(rng.gen_range(1..nblocks - 1))
    } else {
        None
    };
    let mut text = String::from("kernel rnd(z: int, n: int)\n");
    let mut blocks = Vec::new();
    let mut ninputs = vec![0usize; nblocks];
    for (b, n) in ninputs.iter_mut().enumerate().skip(1) {
        *n = rng.gen_range(0..=3) + usize::from(Some(b) == loop_block);
    }
    for b in 0..nblocks {
        let inputs: Vec<String> = (0..ninputs[b]).map(|i| format!("in{}_{}", b, i)).collect();
        let header = format!("block {}({}):\n", b, inputs.join(", "));
        let mut e = Emitter::new(header, inputs);
        let is_loop = Some(b) == loop_block;
        // Terminators and the loop counter come out of the 30-node budget.
        let max_body = ((30 - nblocks - 3) / nblocks).min(12);
        let body = rng.gen_range(1..=max_body);
        for k in 0..body {
            let name = format!("v{}_{}", b, k);
            if rng.gen_range(0..8) == 0 {
                e.push(Some(name), "const", OpClass::Const, vec![], &rng.gen_range(0..9).to_string());
                continue;
            }
            let (m, class) = *ARITH.choose(rng).unwrap();
            let arity = if m == "mov" { 1 } else { 2 };
            let srcs = (0..arity).map(|_| e.pick(rng)).collect();
            e.push(Some(name), m, class, srcs, "");
        }
        let next_inputs = if b + 1 < nblocks { ninputs[b + 1] } else { 0 };
        let edge_args = |e: &Emitter, rng: &mut dyn rand::RngCore, skip_counter: bool| -> Vec<Src> {
            let mut v = Vec::new();
            if skip_counter {
                v.push(Src::Param);
            }
            while v.len() < next_inputs {
                v.push(e.pick(rng));
            }
            v
        };
        let fwd_counter = Some(b + 1) == loop_block;
        let (edges, term_text, term_class, term_srcs) = if is_loop {
            // Input 0 is the trip counter.
            e.push(Some(format!("one{}", b)), "const", OpClass::Const, vec![], "1");
            let one = e.nodes.len() - 1;
            e.push(
                Some(format!("i{}", b)),
                "iadd",
                OpClass::IAdd,
                vec![Src::Input(0), Src::Local(one)],
                "",
            );
            let inc = e.nodes.len() - 1;
            let more_srcs = vec![Src::Local(inc)];
            let more_args: Vec<String> = vec![e.name_of(Src::Local(inc)), "n".into()];
            e.text.push_str(&format!("  more{} = cmp.lt {}\n", b, more_args.join(" ")));
            e.names.push(format!("more{}", b));
            e.nodes.push(ONode {
                class: OpClass::Cmp,
                srcs: more_srcs,
            });
            let more = e.nodes.len() - 1;
            let mut back = vec![Src::Local(inc)];
            while back.len() < ninputs[b] {
                back.push(e.pick(rng));
            }
            let out = edge_args(&e, rng, fwd_counter);
            let edges = vec![(b, back), (b + 1, out)];
            (edges, "cbr", OpClass::CondBranch, vec![Src::Local(more)])
        } else if b + 1 < nblocks {
            let out = edge_args(&e, rng, fwd_counter);
            (vec![(b + 1, out)], "br", OpClass::Branch, vec![])
        } else if rng.gen_bool(0.5) {
            let v = e.pick(rng);
            (vec![], "ret", OpClass::Return, vec![v])
        } else {
            (vec![], "ret", OpClass::Return, vec![])
        };
        let mut line = format!("  {}", term_text);
        for s in &term_srcs {
            line.push(' ');
            line.push_str(&e.name_of(*s));
        }
        for (t, args) in &edges {
            let names: Vec<String> = args.iter().map(|&s| e.name_of(s)).collect();
            line.push_str(&format!(" {}({})", t, names.join(", ")));
        }
        line.push('\n');
        e.text.push_str(&line);
        e.names.push(String::new());
        e.nodes.push(ONode {
            class: term_class,
            srcs: term_srcs,
        });
        text.push_str(&e.text);
        blocks.push(OBlock { nodes: e.nodes, edges });
    }

    let mut latency = LatencyTable::default();
    let mut lat = HashMap::new();
    for op in OpClass::ALL {
        let l = rng.gen_range(1..=8);
        latency.set(op, l, 0.0);
        lat.insert(op, l);
    }
    DagCase {
        text,
        blocks,
        params: vec![0, rng.gen_range(1..=3)],
        latency,
        lat,
    }
}

/// Resources for the list scheduler.
#[derive(Debug, Clone)]
pub struct SchedLimits {
    pub width: usize,
    pub window: u64,
    pub fu: HashMap<OpClass, usize>,
    pub live_dbb_limit: usize,
}

struct DynNode {
    class: OpClass,
    parents: Vec<u64>,
}

/// Completion cycle of every dynamic instruction, by global ID, when the
/// blocks run in `path` order without speculation.
///
/// Rules, applied each cycle in order: results due this cycle complete; the
/// next block launches once its predecessor's terminator has completed, the
/// new block's first ID falls inside the window and the static block has
/// fewer than `live_dbb_limit` unfinished instances; then ready
/// instructions issue oldest first, at most `width` of them, only inside
/// the window `[oldest uncompleted, +window)` and only while a unit of
/// their opclass is free (units are held from issue to completion).
pub fn list_schedule(blocks: &[OBlock], path: &[usize], lat: &HashMap<OpClass, u64>, lim: &SchedLimits) -> Vec<u64> {
    // Flatten the path into dynamic instructions.
    let mut nodes: Vec<DynNode> = Vec::new();
    let mut first_gid = Vec::new();
    let mut inputs: Vec<Option<u64>> = Vec::new();
    for (k, &b) in path.iter().enumerate() {
        let base = nodes.len() as u64;
        first_gid.push(base);
        let blk = &blocks[b];
        for n in &blk.nodes {
            let mut parents = Vec::new();
            for s in &n.srcs {
                let p = match *s {
                    Src::Local(i) => Some(base + i as u64),
                    Src::Input(i) => inputs[i],
                    Src::Param => None,
                };
                if let Some(p) = p {
                    if !parents.contains(&p) {
                        parents.push(p);
                    }
                }
            }
            nodes.push(DynNode { class: n.class, parents });
        }
        if let Some(&next) = path.get(k + 1) {
            let (_, args) = blk.edges.iter().find(|(t, _)| *t == next).expect("path follows an edge");
            inputs = args
                .iter()
                .map(|s| match *s {
                    Src::Local(i) => Some(base + i as u64),
                    Src::Input(i) => inputs[i],
                    Src::Param => None,
                })
                .collect();
        }
    }
    let total = nodes.len();
    let term_of = |k: usize| first_gid[k] + blocks[path[k]].nodes.len() as u64 - 1;

    let mut done_at: Vec<Option<u64>> = vec![None; total];
    let mut finish: Vec<Option<u64>> = vec![None; total];
    let mut launched = 0usize; // DBBs
    let mut next_gid = 0u64;
    let mut t = 0u64;
    let mut ndone = 0;
    while ndone < total {
        for g in 0..total {
            if done_at[g].is_none() && finish[g] == Some(t) {
                done_at[g] = Some(t);
                ndone += 1;
            }
        }
        let oldest = |next_gid: u64, done_at: &[Option<u64>]| (0..next_gid).find(|&g| done_at[g as usize].is_none()).unwrap_or(next_gid);
        // Launch.
        while launched < path.len() {
            let gate_open = launched == 0 || done_at[term_of(launched - 1) as usize].is_some();
            if !gate_open {
                break;
            }
            let b = path[launched];
            if lim.live_dbb_limit > 0 {
                let live = (0..launched)
                    .filter(|&k| path[k] == b)
                    .filter(|&k| {
                        let lo = first_gid[k];
                        let hi = lo + blocks[b].nodes.len() as u64;
                        (lo..hi).any(|g| done_at[g as usize].is_none())
                    })
                    .count();
                if live >= lim.live_dbb_limit {
                    break;
                }
            }
            if next_gid >= oldest(next_gid, &done_at) + lim.window {
                break;
            }
            next_gid += blocks[b].nodes.len() as u64;
            launched += 1;
        }
        // Issue.
        let limit = oldest(next_gid, &done_at) + lim.window;
        let mut busy: HashMap<OpClass, usize> = HashMap::new();
        for g in 0..next_gid as usize {
            if finish[g].is_some() && done_at[g].is_none() {
                *busy.entry(nodes[g].class).or_default() += 1;
            }
        }
        let mut issued = 0;
        for g in 0..next_gid.min(limit) as usize {
            if issued == lim.width {
                break;
            }
            if finish[g].is_some() {
                continue;
            }
            if !nodes[g].parents.iter().all(|&p| done_at[p as usize].is_some()) {
                continue;
            }
            let c = nodes[g].class;
            if let Some(&cap) = lim.fu.get(&c) {
                if busy.get(&c).copied().unwrap_or(0) >= cap {
                    continue;
                }
            }
            *busy.entry(c).or_default() += 1;
            finish[g] = Some(t + lat[&c]);
            issued += 1;
        }
        t += 1;
        assert!(t < 1_000_000, "list scheduler made no progress");
    }
    done_at.into_iter().map(|c| c.unwrap()).collect()
}

/// `gid -> completion cycle` from an event log of tile `tile`.
pub fn completions(log: &[String], tile: u32, period_fs: u64) -> HashMap<u64, u64> {
    let mut out = HashMap::new();
    let tile_tag = format!("tile={} ", tile);
    for line in log {
        if !line.contains("ev=complete") || !line.contains(&tile_tag) {
            continue;
        }
        let field = |k: &str| -> u64 {
            line.split_whitespace()
                .find_map(|w| w.strip_prefix(k))
                .and_then(|v| v.parse().ok())
                .expect("event field")
        };
        out.insert(field("gid="), field("t=") / period_fs);
    }
    out
}

// ---------------------------------------------------------------------------
// Cache reference: one set-associative array with LRU replacement kept as
// recency-ordered lists.

pub struct LruRef {
    sets: Vec<VecDeque<u64>>,
    assoc: usize,
}

impl LruRef {
    pub fn new(sets: usize, assoc: usize) -> Self {
        LruRef {
            sets: vec![VecDeque::new(); sets],
            assoc,
        }
    }

    /// Touch `line`; returns (hit, evicted line).
    pub fn access(&mut self, line: u64) -> (bool, Option<u64>) {
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(line % n) as usize];
        if let Some(pos) = set.iter().position(|&l| l == line) {
            set.remove(pos);
            set.push_front(line);
            return (true, None);
        }
        set.push_front(line);
        let victim = if set.len() > self.assoc { set.pop_back() } else { None };
        (false, victim)
    }
}

// ---------------------------------------------------------------------------
// SimpleDRAM hand schedule.

/// Completion cycles of `r` requests all issued at cycle 0: request `j`
/// returns at the start of the `j / budget`-th epoch at or after the one
/// holding cycle `latency`, but never before `latency`.
pub fn dram_schedule(r: u64, latency: u64, epoch: u64, budget: u64) -> Vec<u64> {
    let first = latency / epoch;
    (0..r)
        .map(|j| {
            let e = first + j / budget;
            (e * epoch).max(latency)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Accelerator pipeline: a cycle-stepped tandem of processes linked by
// double buffers.

/// Cycles for `items` items flowing through processes whose per-item
/// service times are `stage`. Process 0 reads from memory; each later
/// process takes its input from a two-slot buffer written by the previous
/// one. A finished item waits in its process until there is buffer room.
pub fn pipeline_cycles(stage: &[u64], items: u64) -> u64 {
    if items == 0 {
        return 0;
    }
    let p = stage.len();
    let mut fed = 0u64; // items process 0 has started
    let mut buf = vec![0u64; p]; // buf[i]: items waiting in front of process i (i >= 1)
    let mut busy: Vec<Option<u64>> = vec![None; p]; // remaining cycles
    let mut held = vec![false; p]; // finished item not yet passed on
    let mut out = 0u64;
    let mut t = 0u64;
    loop {
        // Work done during the cycle that just ended.
        if t > 0 {
            for s in 0..p {
                if let Some(r) = busy[s] {
                    if r <= 1 {
                        busy[s] = None;
                        held[s] = true;
                    } else {
                        busy[s] = Some(r - 1);
                    }
                }
            }
        }
        // Hand-offs and starts until nothing changes.
        loop {
            let mut changed = false;
            for s in 0..p {
                if held[s] {
                    if s + 1 == p {
                        out += 1;
                        held[s] = false;
                        changed = true;
                    } else if buf[s + 1] < 2 {
                        buf[s + 1] += 1;
                        held[s] = false;
                        changed = true;
                    }
                }
                if busy[s].is_none() && !held[s] {
                    let avail = if s == 0 { fed < items } else { buf[s] > 0 };
                    if avail {
                        if s == 0 {
                            fed += 1;
                        } else {
                            buf[s] -= 1;
                        }
                        busy[s] = Some(stage[s]);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if out == items {
            return t;
        }
        t += 1;
    }
}

// ---------------------------------------------------------------------------
// Random sliceable kernels: one counted loop over `n` elements doing gathers,
// float arithmetic and stores, optionally guarded by a condition on a loaded
// index.

#[derive(Debug, Clone)]
pub struct MemKernel {
    pub text: String,
    pub params: Vec<u64>,
    pub mem: MemImage,
}

pub fn random_mem_kernel(rng: &mut impl Rng, spmd: bool) -> MemKernel {
    let n = rng.gen_range(1..=24u64);
    let mut mem = MemImage::new();
    let fa: Vec<f64> = (0..n).map(|_| rng.gen_range(-8..8) as f64).collect();
    let fb: Vec<f64> = (0..n).map(|_| rng.gen_range(-8..8) as f64).collect();
    let ix: Vec<u64> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let fo: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
    let a = mem.alloc_f64(&fa);
    let b = mem.alloc_f64(&fb);
    let x = mem.alloc_from(&ix);
    let o = mem.alloc_f64(&fo);
    let cnt = mem.alloc(n as usize);

    // Blocks: 0 entry, 1 body, [2 guarded store], latch, exit.
    let guarded = rng.gen_bool(0.4);
    let latch = if guarded { 3 } else { 2 };
    let exit = latch + 1;
    let mut t = String::from("kernel rk(a: ptr, b: ptr, ix: ptr, out: ptr, cnt: ptr, n: int, s: float)\n");
    if spmd {
        t.push_str(&format!(
            "block 0():\n  tid = tile_id\n  nt = num_tiles\n  t0 = imul n tid\n  lo = idiv t0 nt\n  one = const 1\n  \
             tid1 = iadd tid one\n  t1 = imul n tid1\n  hi = idiv t1 nt\n  go = cmp.lt lo hi\n  cbr go 1(lo, hi) {exit}()\n"
        ));
    } else {
        t.push_str(&format!("block 0():\n  lo = const 0\n  go = cmp.lt lo n\n  cbr go 1(lo, n) {exit}()\n"));
    }
    t.push_str("block 1(i, hi):\n  eight = const 8\n  oi = imul i eight\n");
    // Values available to arithmetic (floats) and to addressing (ints).
    let mut fvals: Vec<String> = vec!["s".into()];
    let mut ivals: Vec<String> = vec!["i".into()];
    let mut k = 0;
    let mut fresh = |p: &str| {
        k += 1;
        format!("{}{}", p, k)
    };
    let steps = rng.gen_range(2..=9);
    for _ in 0..steps {
        match rng.gen_range(0..9) {
            0..=2 => {
                let arr = if rng.gen_bool(0.5) { "a" } else { "b" };
                let p = fresh("p");
                let v = fresh("f");
                t.push_str(&format!("  {p} = iadd {arr} oi\n  {v} = load {p}\n"));
                fvals.push(v);
            }
            3 | 4 => {
                // Gather through ix.
                let (px, j, oj, pg, v) = (fresh("p"), fresh("j"), fresh("o"), fresh("p"), fresh("f"));
                let arr = if rng.gen_bool(0.5) { "a" } else { "b" };
                t.push_str(&format!(
                    "  {px} = iadd ix oi\n  {j} = load {px}\n  {oj} = imul {j} eight\n  {pg} = iadd {arr} {oj}\n  {v} = load {pg}\n"
                ));
                ivals.push(j);
                fvals.push(v);
            }
            5 | 6 => {
                let m = ["fadd", "fmul", "fsub"].choose(rng).unwrap();
                let l = fvals.choose(rng).unwrap().clone();
                let r = fvals.choose(rng).unwrap().clone();
                let v = fresh("f");
                t.push_str(&format!("  {v} = {m} {l} {r}\n"));
                fvals.push(v);
            }
            7 => {
                // Read-modify-write of out at an index. Under SPMD only the
                // tile's own element, so tiles never race.
                let idx = if spmd { "i".to_string() } else { ivals.choose(rng).unwrap().clone() };
                let (oo, po, old, new) = (fresh("o"), fresh("p"), fresh("f"), fresh("f"));
                let add = fvals.choose(rng).unwrap().clone();
                t.push_str(&format!(
                    "  {oo} = imul {idx} eight\n  {po} = iadd out {oo}\n  {old} = load {po}\n  {new} = fadd {old} {add}\n  store {po} {new}\n"
                ));
                fvals.push(new);
            }
            _ => {
                // Integer counter bump at an index.
                let idx = if spmd { "i".to_string() } else { ivals.choose(rng).unwrap().clone() };
                let (oo, pc, c, one, c2) = (fresh("o"), fresh("p"), fresh("c"), fresh("k"), fresh("c"));
                t.push_str(&format!(
                    "  {oo} = imul {idx} eight\n  {pc} = iadd cnt {oo}\n  {c} = load {pc}\n  {one} = const 1\n  {c2} = iadd {c} {one}\n  store {pc} {c2}\n"
                ));
            }
        }
    }
    // Finish with a store of some computed value, possibly guarded by a
    // condition on an index.
    let v = fvals.choose(rng).unwrap().clone();
    if guarded {
        let g = ivals.choose(rng).unwrap().clone();
        let lim = rng.gen_range(0..=n);
        t.push_str(&format!("  lim = const {lim}\n  take = cmp.lt {g} lim\n"));
        t.push_str(&format!("  cbr take 2(i, hi, oi, {v}) {latch}(i, hi)\n"));
        t.push_str(&format!("block 2(i, hi, oi, val):\n  pfin = iadd out oi\n  store pfin val\n  br {latch}(i, hi)\n"));
    } else {
        t.push_str(&format!("  pfin = iadd out oi\n  store pfin {v}\n  br {latch}(i, hi)\n"));
    }
    t.push_str(&format!(
        "block {latch}(i, hi):\n  one = const 1\n  i2 = iadd i one\n  more = cmp.lt i2 hi\n  cbr more 1(i2, hi) {exit}()\n"
    ));
    t.push_str(&format!("block {exit}():\n  ret\n"));
    let s = (rng.gen_range(-3..4) as f64).to_bits();
    MemKernel {
        text: t,
        params: vec![a, b, x, o, cnt, n, s],
        mem,
    }
}
