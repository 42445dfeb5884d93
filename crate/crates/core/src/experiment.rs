//! End-to-end runs: kernel text to statistics, and the stats writers.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::config::SystemConfig;
use crate::dae::{run_pairs, slice, SlicePair};
use crate::ddg::{build_ddg, StaticDdg};
use crate::error::{DaeError, DdgError, IrError, SimError, TraceError};
use crate::interleave::{run, CoreSpec, RunOptions, RunOutput, SimStats, System, TileSpec};
use crate::ir::{parse_kernel, KernelProgram};
use crate::trace::{generate_spmd_traces, DynamicTrace, InterpOptions, MemImage};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("parse: {0}")]
    Parse(#[from] IrError),
    #[error("dependence graph: {0}")]
    Ddg(#[from] DdgError),
    #[error("decoupling: {0}")]
    Dae(#[from] DaeError),
    #[error("trace generation: {0}")]
    Trace(#[from] TraceError),
    #[error("config: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
}

impl ExperimentError {
    pub fn is_deadlock(&self) -> bool {
        matches!(
            self,
            ExperimentError::Sim(SimError::Deadlock(_)) | ExperimentError::Trace(TraceError::Deadlock { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    /// Core tiles, or decoupled pairs with `dae`.
    pub tiles: u32,
    pub dae: bool,
    pub event_log: bool,
    pub check_inclusion: bool,
    pub log_reorders: bool,
    pub interp: InterpOptions,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            tiles: 1,
            dae: false,
            event_log: false,
            check_inclusion: false,
            log_reorders: false,
            interp: InterpOptions::default(),
        }
    }
}

impl Flags {
    pub fn tiles(n: u32) -> Self {
        Flags {
            tiles: n,
            ..Flags::default()
        }
    }

    pub fn dae(pairs: u32) -> Self {
        Flags {
            tiles: pairs,
            dae: true,
            ..Flags::default()
        }
    }
}

/// Everything produced before timing: graphs, traces and the functional
/// result.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Per core tile, in tile order.
    pub ddgs: Vec<Arc<StaticDdg>>,
    pub traces: Vec<DynamicTrace>,
    /// Access halves of decoupled pairs.
    pub decoupled: Vec<bool>,
    pub slices: Option<SlicePair>,
    pub final_mem: MemImage,
}

pub fn prepare(
    program: &KernelProgram,
    params: &[u64],
    mem: MemImage,
    flags: &Flags,
) -> Result<Prepared, ExperimentError> {
    let n = flags.tiles.max(1);
    let mut interp = flags.interp;
    interp.accel_instances = interp.accel_instances.max(1);
    if flags.dae {
        let pair = slice(program)?;
        let access = Arc::new(build_ddg(&pair.access)?);
        let execute = Arc::new(build_ddg(&pair.execute)?);
        let (traces, final_mem) = run_pairs(&pair, params, mem, n, interp)?;
        let ddgs = (0..2 * n)
            .map(|i| if i % 2 == 0 { access.clone() } else { execute.clone() })
            .collect();
        Ok(Prepared {
            ddgs,
            traces,
            decoupled: (0..2 * n).map(|i| i % 2 == 0).collect(),
            slices: Some(pair),
            final_mem,
        })
    } else {
        let ddg = Arc::new(build_ddg(program)?);
        let (traces, final_mem) = generate_spmd_traces(program, n, params, mem, interp)?;
        Ok(Prepared {
            ddgs: vec![ddg; n as usize],
            traces,
            decoupled: vec![false; n as usize],
            slices: None,
            final_mem,
        })
    }
}

/// Time prepared traces on the configured system. The core section used
/// for every core tile is the first one listed in the config's tiles.
pub fn simulate(prepared: &Prepared, cfg: &SystemConfig, flags: &Flags) -> Result<RunOutput, ExperimentError> {
    let n = prepared.traces.len() as u32;
    let cfg = cfg.clone().with_core_tiles(n);
    cfg.validate().map_err(ExperimentError::Config)?;
    let cores = cfg.core_tiles();
    let mut tiles: Vec<TileSpec> = Vec::new();
    for (i, core) in cores.into_iter().enumerate() {
        tiles.push(TileSpec::Core(CoreSpec {
            cfg: core,
            ddg: prepared.ddgs[i].clone(),
            trace: prepared.traces[i].clone(),
            decoupled: prepared.decoupled[i],
        }));
    }
    tiles.extend(cfg.accel_tiles().into_iter().map(TileSpec::Accel));
    let system = System {
        tiles,
        latency: cfg.latency.clone(),
        hierarchy: cfg.hierarchy.clone(),
        msg_capacity: cfg.msg_capacity,
        msg_latency: cfg.msg_latency,
        accel_models: cfg.accel_models.clone(),
    };
    let opts = RunOptions {
        event_log: flags.event_log,
        check_inclusion: flags.check_inclusion,
        log_reorders: flags.log_reorders,
    };
    Ok(run(system, opts)?)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub prepared: Prepared,
    pub output: RunOutput,
}

impl Experiment {
    pub fn stats(&self) -> &SimStats {
        &self.output.stats
    }
}

pub fn run_experiment(
    program: &KernelProgram,
    params: &[u64],
    mem: MemImage,
    cfg: &SystemConfig,
    flags: &Flags,
) -> Result<Experiment, ExperimentError> {
    let prepared = prepare(program, params, mem, flags)?;
    let output = simulate(&prepared, cfg, flags)?;
    Ok(Experiment { prepared, output })
}

/// Parse and run kernel text.
pub fn run_source(
    source: &str,
    params: &[u64],
    mem: MemImage,
    cfg: &SystemConfig,
    flags: &Flags,
) -> Result<Experiment, ExperimentError> {
    run_experiment(&parse_kernel(source)?, params, mem, cfg, flags)
}

/// Human-readable stats: one block per tile, then system totals.
pub fn stats_text(s: &SimStats) -> String {
    let mut out = String::new();
    for t in &s.tiles {
        let _ = writeln!(out, "tile {} {} {}", t.id, t.kind, t.name);
        let _ = writeln!(out, "  freq_hz {}", t.freq_hz);
        let _ = writeln!(out, "  cycles {}", t.cycles);
        let _ = writeln!(out, "  instructions {}", t.instructions);
        let _ = writeln!(out, "  ipc {:.6}", t.ipc);
        let _ = writeln!(out, "  energy_j {:e}", t.energy);
        let _ = writeln!(out, "  time_s {:e}", t.time_s);
        if let Some(c) = &t.core {
            let _ = writeln!(out, "  loads {}", c.loads);
            let _ = writeln!(out, "  stores {}", c.stores);
            let _ = writeln!(out, "  dbbs {}", c.dbbs);
            let _ = writeln!(out, "  mispredictions {}", c.mispredictions);
            let _ = writeln!(out, "  mao_stalls {}", c.mao_stalls);
            let _ = writeln!(out, "  mao_peak {}", c.mao_peak);
            let _ = writeln!(out, "  window_stalls {}", c.window_stalls);
            let _ = writeln!(out, "  live_dbb_stalls {}", c.live_dbb_stalls);
            let _ = writeln!(out, "  fu_stalls {}", c.fu_stalls);
        }
        if let Some(a) = &t.accel {
            let _ = writeln!(out, "  invocations {}", a.invocations);
            let _ = writeln!(out, "  bandwidth_limited {}", a.bandwidth_limited);
            let _ = writeln!(out, "  bytes {}", a.bytes);
        }
        for (tile, levels) in &s.hierarchy.per_tile {
            if *tile == t.id {
                for (name, c) in levels {
                    let _ = writeln!(
                        out,
                        "  {} accesses {} hits {} misses {} coalesced {}",
                        name, c.accesses, c.hits, c.misses, c.coalesced
                    );
                }
            }
        }
    }
    let _ = writeln!(out, "system");
    let _ = writeln!(out, "  wall_cycles {}", s.wall_cycles());
    let _ = writeln!(out, "  time_s {:e}", s.time_s());
    let _ = writeln!(out, "  instructions {}", s.instructions());
    let _ = writeln!(out, "  energy_j {:e}", s.energy);
    let _ = writeln!(out, "  edp {:e}", s.edp());
    for (name, c) in &s.hierarchy.levels {
        let _ = writeln!(
            out,
            "  {} accesses {} hits {} misses {} coalesced {} writebacks {} mshr_retries {} prefetch_issued {} prefetch_useful {}",
            name,
            c.accesses,
            c.hits,
            c.misses,
            c.coalesced,
            c.writebacks,
            c.mshr_retries,
            c.prefetch_issued,
            c.prefetch_useful
        );
    }
    let d = &s.hierarchy.dram;
    let _ = writeln!(out, "  dram reads {} writes {}", d.reads, d.writes);
    let c = &s.channels;
    let _ = writeln!(
        out,
        "  messages sent {} received {} full_events {} max_occupancy {}",
        c.sent, c.received, c.full_events, c.max_occupancy
    );
    out
}

/// Column order of [`stats_csv`].
pub const CSV_HEADER: &str = "tile,kind,name,freq_hz,cycles,instructions,ipc,energy_j,time_s,edp,loads,stores,mispredictions,l1_accesses,l1_misses,llc_accesses,llc_misses,dram_reads,dram_writes,messages_sent,accel_invocations";

/// One row per tile plus a final `all` row. Per-tile rows leave shared-cache
/// and DRAM columns empty.
pub fn stats_csv(s: &SimStats) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let levels = &s.hierarchy.levels;
    for t in &s.tiles {
        let private = s
            .hierarchy
            .per_tile
            .iter()
            .find(|(id, _)| *id == t.id)
            .and_then(|(_, l)| l.first())
            .map(|(_, c)| c);
        let (loads, stores, mis) = t
            .core
            .as_ref()
            .map_or((String::new(), String::new(), String::new()), |c| {
                (c.loads.to_string(), c.stores.to_string(), c.mispredictions.to_string())
            });
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:e},{:e},{:e},{},{},{},{},{},,,,,,{}",
            t.id,
            t.kind,
            t.name,
            t.freq_hz,
            t.cycles,
            t.instructions,
            t.ipc,
            t.energy,
            t.time_s,
            t.energy * t.time_s,
            loads,
            stores,
            mis,
            private.map_or(String::new(), |c| c.accesses.to_string()),
            private.map_or(String::new(), |c| c.misses.to_string()),
            t.accel.as_ref().map_or(String::new(), |a| a.invocations.to_string()),
        );
    }
    let sum = |f: fn(&crate::cpu::CoreStats) -> u64| -> u64 { s.tiles.iter().filter_map(|t| t.core.as_ref()).map(f).sum() };
    let cycles = s.wall_cycles();
    let instructions = s.instructions();
    let l1 = levels.first().map(|(_, c)| c.clone()).unwrap_or_default();
    let llc = levels.last().map(|(_, c)| c.clone()).unwrap_or_default();
    let _ = writeln!(
        out,
        "all,system,,,{},{},{},{:e},{:e},{:e},{},{},{},{},{},{},{},{},{},{},{}",
        cycles,
        instructions,
        if cycles == 0 { 0.0 } else { instructions as f64 / cycles as f64 },
        s.energy,
        s.time_s(),
        s.edp(),
        sum(|c| c.loads),
        sum(|c| c.stores),
        sum(|c| c.mispredictions),
        l1.accesses,
        l1.misses,
        llc.accesses,
        llc.misses,
        s.hierarchy.dram.reads,
        s.hierarchy.dram.writes,
        s.channels.sent,
        s.tiles.iter().filter_map(|t| t.accel.as_ref()).map(|a| a.invocations).sum::<u64>(),
    );
    out
}
