//! Multi-tile interleaving on a femtosecond global clock.
//!
//! Every tile and the memory hierarchy has its own period. The interleaver
//! repeatedly jumps to the earliest instant at which something has work,
//! steps the tiles due at that instant in ascending tile ID, then the
//! hierarchy, and routes whatever they produced: memory requests, responses,
//! messages and accelerator calls.

pub mod channel;

use std::sync::Arc;

use crate::accel::{accel_estimate, AccelLibrary};
use crate::cpu::{AccelJob, CoreConfig, CoreStats, CoreTile, External, LatencyTable, Port, ReorderPair};
use crate::ddg::StaticDdg;
use crate::error::SimError;
use crate::mem::{Hierarchy, HierarchyConfig, HierarchyStats};
use crate::trace::DynamicTrace;
use channel::{ChannelStats, Channels};

/// Clock period in femtoseconds for a frequency in Hz.
pub fn period_fs(freq_hz: f64) -> u64 {
    (1e15 / freq_hz).round() as u64
}

#[derive(Debug, Clone)]
pub struct CoreSpec {
    pub cfg: CoreConfig,
    pub ddg: Arc<StaticDdg>,
    pub trace: DynamicTrace,
    /// Run as the access half of a decoupled pair.
    pub decoupled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelTileConfig {
    pub name: String,
    pub freq_hz: f64,
}

#[derive(Debug, Clone)]
pub enum TileSpec {
    Core(CoreSpec),
    Accel(AccelTileConfig),
}

#[derive(Debug, Clone)]
pub struct System {
    pub tiles: Vec<TileSpec>,
    pub latency: LatencyTable,
    pub hierarchy: HierarchyConfig,
    pub msg_capacity: usize,
    pub msg_latency: u64,
    pub accel_models: AccelLibrary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub event_log: bool,
    pub check_inclusion: bool,
    pub log_reorders: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccelTileStats {
    pub invocations: u64,
    pub bandwidth_limited: u64,
    pub busy_fs: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileStats {
    pub id: u32,
    pub kind: &'static str,
    pub name: String,
    pub freq_hz: f64,
    pub cycles: u64,
    pub instructions: u64,
    pub ipc: f64,
    pub energy: f64,
    pub time_s: f64,
    pub core: Option<CoreStats>,
    pub accel: Option<AccelTileStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub tiles: Vec<TileStats>,
    pub hierarchy: HierarchyStats,
    pub channels: ChannelStats,
    /// Global time at which the last tile finished.
    pub time_fs: u64,
    pub energy: f64,
}

impl SimStats {
    pub fn time_s(&self) -> f64 {
        self.time_fs as f64 * 1e-15
    }

    /// Cycles of the tile that finished last (lowest ID on ties).
    pub fn wall_cycles(&self) -> u64 {
        let mut best: Option<&TileStats> = None;
        for t in &self.tiles {
            if best.map_or(true, |b| t.time_s > b.time_s) {
                best = Some(t);
            }
        }
        best.map_or(0, |t| t.cycles)
    }

    pub fn edp(&self) -> f64 {
        self.energy * self.time_s()
    }

    pub fn instructions(&self) -> u64 {
        self.tiles.iter().map(|t| t.instructions).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub stats: SimStats,
    pub event_log: Vec<String>,
    pub reorders: Vec<(u32, Vec<ReorderPair>)>,
}

struct AccelServer {
    id: u32,
    cfg: AccelTileConfig,
    busy_until: u64,
    energy: f64,
    last_done: u64,
    stats: AccelTileStats,
}

enum Slot {
    Core(Box<CoreTile>),
    Accel(AccelServer),
}

/// Simulate the system until every trace is exhausted and every request
/// and message has drained.
pub fn run(system: System, opts: RunOptions) -> Result<RunOutput, SimError> {
    let mut slots: Vec<Slot> = Vec::with_capacity(system.tiles.len());
    let mut periods = Vec::new();
    let mut core_ids = Vec::new();
    for (i, spec) in system.tiles.into_iter().enumerate() {
        let id = i as u32;
        match spec {
            TileSpec::Core(c) => {
                let mut cfg = c.cfg;
                if c.decoupled {
                    cfg.lsq_size = cfg.lsq_size.max(system.msg_capacity as u32);
                }
                let mut tile = CoreTile::new(id, cfg, &system.latency, c.ddg, c.trace, c.decoupled)?;
                if opts.log_reorders {
                    tile.log_reorders();
                }
                periods.push(tile.period_fs());
                core_ids.push(id);
                slots.push(Slot::Core(Box::new(tile)));
            }
            TileSpec::Accel(cfg) => {
                if !(cfg.freq_hz > 0.0) {
                    return Err(SimError::Setup(format!("accel tile {}: freq must be positive", cfg.name)));
                }
                periods.push(period_fs(cfg.freq_hz));
                slots.push(Slot::Accel(AccelServer {
                    id,
                    cfg,
                    busy_until: 0,
                    energy: 0.0,
                    last_done: 0,
                    stats: AccelTileStats::default(),
                }));
            }
        }
    }
    let accel_tile = slots.iter().position(|s| matches!(s, Slot::Accel(_)));
    let mut hier = Hierarchy::new(&system.hierarchy, &core_ids);
    hier.set_inclusion_checks(opts.check_inclusion);
    let hp = hier.period_fs();
    let mut channels = Channels::new(system.msg_capacity, system.msg_latency, periods);
    let mut log: Vec<String> = Vec::new();
    let mut mem_out = Vec::new();
    let mut accel_out: Vec<AccelJob> = Vec::new();
    let mut now: u64 = 0;

    loop {
        let mut next: Option<u64> = None;
        for s in &slots {
            if let Slot::Core(c) = s {
                if let Some(t) = c.next_event_fs() {
                    next = Some(next.map_or(t, |n| n.min(t)));
                }
            }
        }
        let hier_next = |h: &Hierarchy, now: u64| h.next_event_fs().map(|t| t.max(now.div_ceil(hp) * hp));
        if let Some(t) = hier_next(&hier, now) {
            next = Some(next.map_or(t, |n| n.min(t)));
        }
        let Some(t) = next else { break };
        now = t;

        for i in 0..slots.len() {
            let Slot::Core(core) = &mut slots[i] else { continue };
            if core.next_event_fs() != Some(now) {
                continue;
            }
            let mut port = Port {
                mem: &mut mem_out,
                channels: &mut channels,
                accel: &mut accel_out,
                log: opts.event_log.then_some(&mut log),
            };
            core.tick(now, &mut port)?;
            for req in mem_out.drain(..) {
                if opts.event_log {
                    log.push(format!(
                        "t={} tile={} ev=mem_req gid={} addr={:#x} write={}",
                        req.time_fs, req.tile, req.gid, req.addr, req.is_write as u8
                    ));
                }
                hier.submit(req);
            }
            for job in std::mem::take(&mut accel_out) {
                let done = serve_accel(&mut slots, accel_tile, &system.accel_models, &job, &mut log, opts.event_log)?;
                deliver(&mut slots, job.tile, done, External::AccelDone { gid: job.gid });
            }
            route_channels(&mut slots, &mut channels);
        }

        if hier_next(&hier, now) == Some(now) {
            hier.tick(now);
            for r in hier.take_responses() {
                if opts.event_log {
                    log.push(format!("t={} tile={} ev=mem_done gid={}", r.time_fs, r.tile, r.gid));
                }
                deliver(&mut slots, r.tile, r.time_fs, External::MemDone { gid: r.gid });
            }
        }
    }

    let stuck: Vec<String> = slots
        .iter()
        .filter_map(|s| match s {
            Slot::Core(c) if !c.is_finished() => Some(c.describe_stall()),
            _ => None,
        })
        .collect();
    if !stuck.is_empty() || !hier.is_idle() {
        let mut msg = stuck.join("\n");
        for ((src, dst), n) in channels.occupancy() {
            msg.push_str(&format!("\nchannel {}->{}: {} undelivered messages", src, dst, n));
        }
        return Err(SimError::Deadlock(msg));
    }

    let hstats = hier.stats();
    let mut tiles = Vec::new();
    let mut energy = hstats.energy;
    let mut reorders = Vec::new();
    let mut end_fs = 0;
    for s in &slots {
        match s {
            Slot::Core(c) => {
                let st = c.stats().clone();
                let cfg = c.config();
                let time_s = st.cycles as f64 / cfg.freq_hz;
                end_fs = end_fs.max(st.cycles * c.period_fs());
                energy += st.energy;
                if opts.log_reorders {
                    reorders.push((c.id(), c.reorders().to_vec()));
                }
                tiles.push(TileStats {
                    id: c.id(),
                    kind: "core",
                    name: cfg.name.clone(),
                    freq_hz: cfg.freq_hz,
                    cycles: st.cycles,
                    instructions: st.instructions,
                    ipc: if st.cycles == 0 { 0.0 } else { st.instructions as f64 / st.cycles as f64 },
                    energy: st.energy,
                    time_s,
                    core: Some(st),
                    accel: None,
                });
            }
            Slot::Accel(a) => {
                let p = period_fs(a.cfg.freq_hz);
                let cycles = a.last_done.div_ceil(p);
                end_fs = end_fs.max(a.last_done);
                energy += a.energy;
                tiles.push(TileStats {
                    id: a.id,
                    kind: "accel",
                    name: a.cfg.name.clone(),
                    freq_hz: a.cfg.freq_hz,
                    cycles,
                    instructions: 0,
                    ipc: 0.0,
                    energy: a.energy,
                    time_s: cycles as f64 / a.cfg.freq_hz,
                    core: None,
                    accel: Some(a.stats.clone()),
                });
            }
        }
    }
    Ok(RunOutput {
        stats: SimStats {
            tiles,
            hierarchy: hstats,
            channels: channels.stats(),
            time_fs: end_fs,
            energy,
        },
        event_log: log,
        reorders,
    })
}

fn deliver(slots: &mut [Slot], tile: u32, time_fs: u64, ev: External) {
    if let Some(Slot::Core(c)) = slots.get_mut(tile as usize) {
        c.deliver(time_fs, ev);
    }
}

fn route_channels(slots: &mut [Slot], channels: &mut Channels) {
    for (tile, t, d) in channels.take_deliveries() {
        deliver(slots, tile, t, d.into());
    }
}

/// Run an accelerator call and return the global time it finishes.
fn serve_accel(
    slots: &mut [Slot],
    accel_tile: Option<usize>,
    lib: &AccelLibrary,
    job: &AccelJob,
    log: &mut Vec<String>,
    logging: bool,
) -> Result<u64, SimError> {
    let model = lib.get(&job.invocation.model_id)?;
    let est = accel_estimate(model, &job.invocation)?;
    let instances = job.invocation.num_instances as f64;
    match accel_tile.map(|i| &mut slots[i]) {
        Some(Slot::Accel(a)) => {
            let start = job.time_fs.max(a.busy_until);
            let dur = (est.time * 1e15).ceil() as u64;
            let done = start + dur;
            a.busy_until = done;
            a.last_done = a.last_done.max(done);
            a.energy += est.energy * instances;
            a.stats.invocations += 1;
            a.stats.busy_fs += dur;
            a.stats.bytes += est.bytes;
            a.stats.bandwidth_limited += est.bandwidth_limited as u64;
            if logging {
                log.push(format!(
                    "t={} tile={} ev=accel model={} from={} gid={} done={}",
                    start, a.id, model.id, job.tile, job.gid, done
                ));
            }
            Ok(done)
        }
        _ => {
            // No accelerator tile: the invoking core charges the estimate.
            let Some(Slot::Core(c)) = slots.get_mut(job.tile as usize) else {
                return Err(SimError::Setup("accelerator call from a non-core tile".into()));
            };
            let f = c.config().freq_hz;
            let cycles = (est.time * f).ceil() as u64;
            c.add_energy(est.energy * instances);
            Ok(job.time_fs + cycles.max(1) * c.period_fs())
        }
    }
}
