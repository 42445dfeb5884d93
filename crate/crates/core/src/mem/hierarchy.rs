//! Event-driven cache hierarchy: write-back, write-allocate, inclusive caches
//! with MSHRs and optional stride prefetchers, backed by SimpleDRAM.
//!
//! The hierarchy has its own clock. Requests arrive with a global timestamp,
//! are converted to hierarchy cycles, and responses leave with a global
//! timestamp that the owning tile converts back to its own cycles.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::cache::CacheArray;
use super::dram::{DramStats, SimpleDram};
use super::prefetch::StridePrefetcher;
use super::{CacheConfig, HierarchyConfig, MemRequest, Sharing};
use crate::ir::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Waiter {
    Demand { tile: u32, gid: u64, write: bool },
    Child(usize),
    Prefetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Access {
        cache: usize,
        line: u64,
        who: Waiter,
        node: NodeId,
        addr: u64,
        trained: bool,
    },
    Fill { cache: usize, line: u64 },
    Writeback { cache: usize, line: u64 },
    DramRead { token: DramToken },
    DramWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DramToken {
    Fill { cache: usize, line: u64 },
    Direct { tile: u32, gid: u64 },
    Writeback,
}

/// Completion of a demand request, at a global time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemResponse {
    pub tile: u32,
    pub gid: u64,
    pub time_fs: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub coalesced: u64,
    pub mshr_retries: u64,
    pub writebacks: u64,
    pub invalidations: u64,
    pub prefetch_issued: u64,
    pub prefetch_useful: u64,
    pub prefetch_dropped: u64,
}

impl CacheStats {
    pub fn add(&mut self, o: &CacheStats) {
        self.accesses += o.accesses;
        self.hits += o.hits;
        self.misses += o.misses;
        self.coalesced += o.coalesced;
        self.mshr_retries += o.mshr_retries;
        self.writebacks += o.writebacks;
        self.invalidations += o.invalidations;
        self.prefetch_issued += o.prefetch_issued;
        self.prefetch_useful += o.prefetch_useful;
        self.prefetch_dropped += o.prefetch_dropped;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HierarchyStats {
    /// Per level, summed over that level's instances.
    pub levels: Vec<(String, CacheStats)>,
    /// Per core tile, the stats of each private instance it owns.
    pub per_tile: Vec<(u32, Vec<(String, CacheStats)>)>,
    pub dram: DramStats,
    pub energy: f64,
}

#[derive(Debug, Clone)]
struct MshrEntry {
    waiters: Vec<Waiter>,
    demand_seen: bool,
}

#[derive(Debug)]
struct Instance {
    level: usize,
    owner: Option<u32>,
    array: CacheArray,
    line_shift: u32,
    latency: u64,
    mshr_cap: usize,
    mshr: HashMap<u64, MshrEntry>,
    parent: Option<usize>,
    children: Vec<usize>,
    prefetcher: Option<StridePrefetcher>,
    energy: f64,
    stats: CacheStats,
}

#[derive(Debug)]
pub struct Hierarchy {
    levels: Vec<CacheConfig>,
    period_fs: u64,
    instances: Vec<Instance>,
    entry: HashMap<u32, usize>,
    dram: SimpleDram<DramToken>,
    dram_energy: f64,
    dram_line_shift: u32,
    events: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    now: u64,
    responses: Vec<MemResponse>,
    check_inclusion: bool,
}

impl Hierarchy {
    /// Build the hierarchy for the given core tiles. Private levels get one
    /// instance per core, shared levels one instance in total.
    pub fn new(cfg: &HierarchyConfig, cores: &[u32]) -> Self {
        let period_fs = crate::interleave::period_fs(cfg.freq_hz);
        let mut instances: Vec<Instance> = Vec::new();
        // level_of[l][k]: instance serving core k at level l.
        let mut level_of: Vec<Vec<usize>> = Vec::new();
        for (l, c) in cfg.levels.iter().enumerate() {
            c.validate().expect("cache config validated at load time");
            let make = |owner: Option<u32>| Instance {
                level: l,
                owner,
                array: CacheArray::new(c.sets(), c.assoc),
                line_shift: c.line_size.trailing_zeros(),
                latency: c.latency,
                mshr_cap: c.mshr_entries,
                mshr: HashMap::new(),
                parent: None,
                children: Vec::new(),
                prefetcher: c.prefetch.enabled.then(|| StridePrefetcher::new(c.prefetch, c.line_size)),
                energy: 0.0,
                stats: CacheStats::default(),
            };
            let mut row = Vec::new();
            match c.sharing {
                Sharing::Private => {
                    for &t in cores {
                        instances.push(make(Some(t)));
                        row.push(instances.len() - 1);
                    }
                }
                Sharing::Shared => {
                    instances.push(make(None));
                    row = vec![instances.len() - 1; cores.len()];
                }
            }
            level_of.push(row);
        }
        for l in 1..level_of.len() {
            for k in 0..cores.len() {
                let (child, parent) = (level_of[l - 1][k], level_of[l][k]);
                instances[child].parent = Some(parent);
                if !instances[parent].children.contains(&child) {
                    instances[parent].children.push(child);
                }
            }
        }
        let entry = match level_of.first() {
            Some(row) => cores.iter().zip(row).map(|(&t, &i)| (t, i)).collect(),
            None => HashMap::new(),
        };
        let dram_line_shift = cfg.levels.last().map(|c| c.line_size.trailing_zeros()).unwrap_or(6);
        Hierarchy {
            levels: cfg.levels.clone(),
            period_fs,
            instances,
            entry,
            dram: SimpleDram::new(cfg.dram),
            dram_energy: cfg.dram.energy,
            dram_line_shift,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0,
            responses: Vec::new(),
            check_inclusion: false,
        }
    }

    /// Verify inclusion after every processed cycle (panics on violation).
    pub fn set_inclusion_checks(&mut self, on: bool) {
        self.check_inclusion = on;
    }

    pub fn period_fs(&self) -> u64 {
        self.period_fs
    }

    fn schedule(&mut self, cycle: u64, ev: Event) {
        self.events.push(Reverse((cycle, self.seq, ev)));
        self.seq += 1;
    }

    /// Hand a demand request to the hierarchy.
    pub fn submit(&mut self, req: MemRequest) {
        let cycle = req.time_fs.div_ceil(self.period_fs).max(self.now);
        match self.entry.get(&req.tile) {
            Some(&cache) => {
                let line = req.addr >> self.instances[cache].line_shift;
                self.schedule(
                    cycle,
                    Event::Access {
                        cache,
                        line,
                        who: Waiter::Demand {
                            tile: req.tile,
                            gid: req.gid,
                            write: req.is_write,
                        },
                        node: req.node,
                        addr: req.addr,
                        trained: false,
                    },
                );
            }
            None => {
                let token = DramToken::Direct {
                    tile: req.tile,
                    gid: req.gid,
                };
                self.schedule(cycle, Event::DramRead { token });
            }
        }
    }

    /// Next hierarchy cycle with work, as a global time.
    pub fn next_event_fs(&self) -> Option<u64> {
        let ev = self.events.peek().map(|Reverse((c, _, _))| *c);
        let dr = self.dram.next_event(self.now);
        let c = match (ev, dr) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b)?,
        };
        Some(c * self.period_fs)
    }

    pub fn is_idle(&self) -> bool {
        self.events.is_empty() && self.dram.pending() == 0
    }

    pub fn take_responses(&mut self) -> Vec<MemResponse> {
        std::mem::take(&mut self.responses)
    }

    /// Process everything due at global time `time_fs`, which must be a
    /// multiple of the hierarchy period.
    pub fn tick(&mut self, time_fs: u64) {
        let cycle = time_fs / self.period_fs;
        debug_assert!(cycle >= self.now);
        self.now = cycle;
        for token in self.dram.advance(cycle) {
            match token {
                DramToken::Fill { cache, line } => self.schedule(cycle, Event::Fill { cache, line }),
                DramToken::Direct { tile, gid } => self.respond(tile, gid, cycle),
                DramToken::Writeback => {}
            }
        }
        while let Some(Reverse((c, _, _))) = self.events.peek() {
            if *c > cycle {
                break;
            }
            let Reverse((_, _, ev)) = self.events.pop().expect("peeked");
            self.process(cycle, ev);
        }
        if self.check_inclusion {
            if let Err(e) = self.verify_inclusion() {
                panic!("inclusion violated at cycle {}: {}", cycle, e);
            }
        }
    }

    fn respond(&mut self, tile: u32, gid: u64, cycle: u64) {
        self.responses.push(MemResponse {
            tile,
            gid,
            time_fs: cycle * self.period_fs,
        });
    }

    fn deliver(&mut self, who: Waiter, line: u64, at: u64) {
        match who {
            Waiter::Demand { tile, gid, .. } => self.respond(tile, gid, at),
            Waiter::Child(c) => self.schedule(at, Event::Fill { cache: c, line }),
            Waiter::Prefetch => {}
        }
    }

    fn forward_miss(&mut self, cache: usize, line: u64, at: u64) {
        match self.instances[cache].parent {
            Some(p) => self.schedule(
                at,
                Event::Access {
                    cache: p,
                    line,
                    who: Waiter::Child(cache),
                    node: 0,
                    addr: line << self.instances[cache].line_shift,
                    trained: true,
                },
            ),
            None => self.schedule(
                at,
                Event::DramRead {
                    token: DramToken::Fill { cache, line },
                },
            ),
        }
    }

    fn write_back(&mut self, cache: usize, line: u64, at: u64) {
        self.instances[cache].stats.writebacks += 1;
        match self.instances[cache].parent {
            Some(p) => self.schedule(at, Event::Writeback { cache: p, line }),
            None => self.schedule(at, Event::DramWrite),
        }
    }

    fn process(&mut self, t: u64, ev: Event) {
        match ev {
            Event::Access {
                cache,
                line,
                who,
                node,
                addr,
                trained,
            } => self.access(t, cache, line, who, node, addr, trained),
            Event::Fill { cache, line } => self.fill(t, cache, line),
            Event::Writeback { cache, line } => {
                let lat = self.instances[cache].latency;
                if !self.instances[cache].array.set_dirty(line) {
                    self.write_back(cache, line, t + lat);
                }
            }
            Event::DramRead { token } => self.dram.submit(token, t, false),
            Event::DramWrite => self.dram.submit(DramToken::Writeback, t, true),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn access(&mut self, t: u64, cache: usize, line: u64, who: Waiter, node: NodeId, addr: u64, trained: bool) {
        let lat = self.instances[cache].latency;
        let demand = matches!(who, Waiter::Demand { .. });
        let write = matches!(who, Waiter::Demand { write: true, .. });

        if !trained {
            if let (Waiter::Demand { tile, .. }, Some(pf)) = (who, self.instances[cache].prefetcher.as_mut()) {
                let candidates = pf.observe((tile, node), addr);
                for l in candidates {
                    self.prefetch(t, cache, l);
                }
            }
        }

        let inst = &mut self.instances[cache];
        if inst.array.access(line, write) {
            inst.stats.accesses += 1;
            inst.stats.hits += 1;
            inst.energy += self.levels[inst.level].energy;
            if demand && inst.array.take_prefetched(line) {
                inst.stats.prefetch_useful += 1;
            }
            self.deliver(who, line, t + lat);
            return;
        }
        if let Some(entry) = inst.mshr.get_mut(&line) {
            inst.stats.accesses += 1;
            inst.stats.coalesced += 1;
            inst.energy += self.levels[inst.level].energy;
            if demand && !entry.demand_seen {
                entry.demand_seen = true;
                if entry.waiters.iter().all(|w| *w == Waiter::Prefetch) {
                    inst.stats.prefetch_useful += 1;
                }
            }
            entry.waiters.push(who);
            return;
        }
        if inst.mshr.len() >= inst.mshr_cap {
            inst.stats.mshr_retries += 1;
            self.schedule(
                t + 1,
                Event::Access {
                    cache,
                    line,
                    who,
                    node,
                    addr,
                    trained: true,
                },
            );
            return;
        }
        inst.stats.accesses += 1;
        inst.stats.misses += 1;
        inst.energy += self.levels[inst.level].energy;
        inst.mshr.insert(
            line,
            MshrEntry {
                waiters: vec![who],
                demand_seen: demand,
            },
        );
        self.forward_miss(cache, line, t + lat);
    }

    fn prefetch(&mut self, t: u64, cache: usize, line: u64) {
        let inst = &mut self.instances[cache];
        if inst.array.probe(line) || inst.mshr.contains_key(&line) {
            return;
        }
        if inst.mshr.len() >= inst.mshr_cap {
            inst.stats.prefetch_dropped += 1;
            return;
        }
        inst.stats.prefetch_issued += 1;
        inst.mshr.insert(
            line,
            MshrEntry {
                waiters: vec![Waiter::Prefetch],
                demand_seen: false,
            },
        );
        let lat = inst.latency;
        self.forward_miss(cache, line, t + lat);
    }

    /// Remove `line` from every descendant of `cache`; returns whether any
    /// removed copy was dirty.
    fn back_invalidate(&mut self, cache: usize, line: u64) -> bool {
        let mut dirty = false;
        let children = self.instances[cache].children.clone();
        for c in children {
            dirty |= self.back_invalidate(c, line);
            if let Some(d) = self.instances[c].array.invalidate(line) {
                self.instances[c].stats.invalidations += 1;
                dirty |= d;
            }
        }
        dirty
    }

    fn fill(&mut self, t: u64, cache: usize, line: u64) {
        let lat = self.instances[cache].latency;
        let entry = self.instances[cache]
            .mshr
            .remove(&line)
            .unwrap_or_else(|| panic!("fill for line {:#x} without an MSHR entry", line));
        let any_write = entry.waiters.iter().any(|w| matches!(w, Waiter::Demand { write: true, .. }));
        let only_prefetch = entry.waiters.iter().all(|w| *w == Waiter::Prefetch);

        let parent_has = match self.instances[cache].parent {
            Some(p) => self.instances[p].array.probe(line),
            None => true,
        };
        if parent_has {
            if let Some(victim) = self.instances[cache].array.install(line, any_write, only_prefetch) {
                let dirty = self.back_invalidate(cache, victim.line) | victim.dirty;
                if dirty {
                    self.write_back(cache, victim.line, t + lat);
                }
            }
        } else if any_write {
            // The parent dropped the line while the fill was in flight; keep
            // inclusion by not installing, and push the written data down.
            self.write_back(cache, line, t + lat);
        }
        for w in entry.waiters {
            self.deliver(w, line, t + lat);
        }
    }

    /// Every line resident in a cache is resident in its parent.
    pub fn verify_inclusion(&self) -> Result<(), String> {
        for (i, inst) in self.instances.iter().enumerate() {
            let Some(p) = inst.parent else { continue };
            for line in inst.array.resident() {
                if !self.instances[p].array.probe(line) {
                    return Err(format!(
                        "line {:#x} in {} instance {} missing from parent",
                        line, self.levels[inst.level].name, i
                    ));
                }
            }
        }
        Ok(())
    }

    /// In-flight downstream requests per line never exceed one per cache.
    pub fn mshr_occupancy(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.mshr.len()).collect()
    }

    pub fn stats(&self) -> HierarchyStats {
        let mut levels: Vec<(String, CacheStats)> =
            self.levels.iter().map(|c| (c.name.clone(), CacheStats::default())).collect();
        let mut per_tile: Vec<(u32, Vec<(String, CacheStats)>)> = Vec::new();
        let mut energy = 0.0;
        for inst in &self.instances {
            levels[inst.level].1.add(&inst.stats);
            energy += inst.energy;
            if let Some(t) = inst.owner {
                let name = self.levels[inst.level].name.clone();
                match per_tile.iter_mut().find(|(o, _)| *o == t) {
                    Some((_, v)) => v.push((name, inst.stats)),
                    None => per_tile.push((t, vec![(name, inst.stats)])),
                }
            }
        }
        per_tile.sort_by_key(|(t, _)| *t);
        let dram = self.dram.stats();
        energy += dram.requests as f64 * self.dram_energy;
        HierarchyStats {
            levels,
            per_tile,
            dram,
            energy,
        }
    }

    /// Line size used for DRAM traffic accounting.
    pub fn dram_line_bytes(&self) -> u64 {
        1 << self.dram_line_shift
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mem::DramConfig;

    fn req(tile: u32, gid: u64, addr: u64, is_write: bool, cycle: u64, period: u64) -> MemRequest {
        MemRequest {
            tile,
            gid,
            node: 0,
            addr,
            is_write,
            time_fs: cycle * period,
        }
    }

    /// Run until idle, returning (gid, completion cycle) in completion order.
    fn drain(h: &mut Hierarchy) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        while let Some(t) = h.next_event_fs() {
            h.tick(t);
            for r in h.take_responses() {
                out.push((r.gid, r.time_fs / h.period_fs()));
            }
        }
        out
    }

    #[test]
    fn cold_load_then_hit() {
        let mut h = Hierarchy::new(&HierarchyConfig::default(), &[0]);
        h.set_inclusion_checks(true);
        let p = h.period_fs();
        h.submit(req(0, 1, 0x1000, false, 0, p));
        assert_eq!(drain(&mut h), vec![(1, 214)]);
        h.submit(req(0, 2, 0x1008, false, 300, p));
        assert_eq!(drain(&mut h), vec![(2, 301)]);
        let s = h.stats();
        assert_eq!(s.levels[0].1.misses, 1);
        assert_eq!(s.levels[0].1.hits, 1);
        assert_eq!(s.dram.reads, 1);
    }

    #[test]
    fn same_line_misses_coalesce() {
        let mut h = Hierarchy::new(&HierarchyConfig::default(), &[0]);
        let p = h.period_fs();
        h.submit(req(0, 1, 0x2000, false, 0, p));
        h.submit(req(0, 2, 0x2010, false, 3, p));
        let done = drain(&mut h);
        assert_eq!(done, vec![(1, 214), (2, 214)]);
        assert_eq!(h.stats().dram.reads, 1);
        assert_eq!(h.stats().levels[0].1.coalesced, 1);
    }

    #[test]
    fn dirty_victim_written_back() {
        // Direct-mapped single-set L1 over a 2-way L2: the second line evicts
        // the dirty first one.
        let cfg = HierarchyConfig {
            levels: vec![
                CacheConfig::new("l1", 64, 1, 1, Sharing::Private),
                CacheConfig::new("l2", 128, 2, 6, Sharing::Shared),
            ],
            ..HierarchyConfig::default()
        };
        let mut h = Hierarchy::new(&cfg, &[0]);
        h.set_inclusion_checks(true);
        let p = h.period_fs();
        h.submit(req(0, 1, 0x0, true, 0, p));
        drain(&mut h);
        h.submit(req(0, 2, 0x40, false, 1000, p));
        drain(&mut h);
        let s = h.stats();
        assert_eq!(s.levels[0].1.writebacks, 1);
        // L2 absorbed the writeback; nothing went to DRAM yet.
        assert_eq!(s.dram.writes, 0);
    }

    #[test]
    fn llc_eviction_back_invalidates() {
        let cfg = HierarchyConfig {
            levels: vec![
                CacheConfig::new("l1", 256, 4, 1, Sharing::Private),
                CacheConfig::new("l2", 64, 1, 6, Sharing::Shared),
            ],
            ..HierarchyConfig::default()
        };
        let mut h = Hierarchy::new(&cfg, &[0, 1]);
        h.set_inclusion_checks(true);
        let p = h.period_fs();
        h.submit(req(0, 1, 0x0, true, 0, p));
        drain(&mut h);
        h.submit(req(1, 2, 0x40, false, 1000, p));
        drain(&mut h);
        let s = h.stats();
        assert_eq!(s.levels[0].1.invalidations, 1);
        // The dirty copy pulled out of tile 0's L1 goes to DRAM.
        assert_eq!(s.dram.writes, 1);
        assert!(h.verify_inclusion().is_ok());
    }

    #[test]
    fn dram_epoch_budget_delays_requests() {
        let cfg = HierarchyConfig {
            dram: DramConfig {
                max_per_epoch: 1,
                ..DramConfig::default()
            },
            ..HierarchyConfig::default()
        };
        let mut h = Hierarchy::new(&cfg, &[0]);
        let p = h.period_fs();
        h.submit(req(0, 1, 0x0, false, 0, p));
        h.submit(req(0, 2, 0x1000, false, 0, p));
        let done = drain(&mut h);
        assert_eq!(done[0], (1, 214));
        // Second DRAM return waits for the next 100-cycle epoch (300).
        assert_eq!(done[1], (2, 307));
    }
}
