use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tilesim::config::SystemConfig;
use tilesim::corpus::{self, Workload};
use tilesim::cpu::BranchMode;
use tilesim::dae::verify_slice_equivalence;
use tilesim::experiment::{prepare, simulate, stats_csv, stats_text, ExperimentError, Flags};
use tilesim::trace::io::save_trace;
use tilesim::trace::MemImage;
use tilesim::{parse_kernel, KernelProgram};

/// Tiled-system timing simulator.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, trace and time a kernel.
    Run(RunArgs),
    /// Generate traces only.
    Trace {
        #[command(flatten)]
        input: InputArgs,
        /// Directory for the trace files.
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Functional checks: bundled kernels against native references, and
    /// decoupled slices against the original. `all` checks the whole corpus.
    Verify {
        kernel: String,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Bundled benchmark name or path to a kernel file.
    kernel: String,
    #[arg(long, default_value_t = 1)]
    tiles: u32,
    /// Run decoupled access/execute pairs (`--tiles` counts pairs).
    #[arg(long)]
    dae: bool,
    /// Problem size for bundled benchmarks.
    #[arg(long)]
    size: Option<usize>,
    /// Input seed for bundled benchmarks (default: the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Scalar parameter for kernel files, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Array parameter for kernel files: `name=v1,v2,...` or `name=zeros:N`.
    #[arg(long = "array", value_name = "NAME=VALUES")]
    arrays: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_name = "off|perfect|static")]
    branch: Option<BranchMode>,
    /// Let loads pass older stores with unknown addresses when they do not alias.
    #[arg(long)]
    alias_spec: bool,
    #[arg(long)]
    no_prefetch: bool,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    event_log: Option<PathBuf>,
    #[arg(long)]
    dump_ddg: Option<PathBuf>,
}

struct Loaded {
    program: KernelProgram,
    params: Vec<u64>,
    mem: MemImage,
    check: Option<Workload>,
    cfg: SystemConfig,
}

fn parse_value(v: &str) -> Result<u64> {
    if let Ok(i) = v.parse::<i64>() {
        return Ok(i as u64);
    }
    if let Some(h) = v.strip_prefix("0x") {
        return u64::from_str_radix(h, 16).with_context(|| format!("bad hex value `{}`", v));
    }
    v.parse::<f64>()
        .map(f64::to_bits)
        .with_context(|| format!("bad value `{}`", v))
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let cfg = match &input.config {
        Some(p) => SystemConfig::load(p)?,
        None => SystemConfig::ooo(),
    };
    let seed = input.seed.unwrap_or(cfg.seed);
    if let Some(b) = corpus::benchmark(&input.kernel) {
        if !input.params.is_empty() || !input.arrays.is_empty() {
            bail!("--param/--array apply to kernel files, not bundled benchmarks");
        }
        let tiles = if input.dae { input.tiles } else { input.tiles.max(b.min_tiles) };
        let w = corpus::workload(b.name, input.size.unwrap_or(b.default_size), seed, tiles).map_err(anyhow::Error::msg)?;
        return Ok(Loaded {
            program: b.program(),
            params: w.params.clone(),
            mem: w.mem.clone(),
            check: Some(w),
            cfg,
        });
    }
    let path = Path::new(&input.kernel);
    let text = std::fs::read_to_string(path).with_context(|| {
        let names: Vec<_> = corpus::BENCHMARKS.iter().map(|b| b.name).collect();
        format!("`{}` is neither a kernel file nor a bundled benchmark ({})", input.kernel, names.join(", "))
    })?;
    let program = parse_kernel(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e))?;
    let mut mem = MemImage::new();
    let mut bound: Vec<Option<u64>> = vec![None; program.params.len()];
    let mut bind = |name: &str, v: u64| -> Result<()> {
        let i = program
            .param_index(name)
            .with_context(|| format!("kernel has no parameter `{}`", name))?;
        bound[i] = Some(v);
        Ok(())
    };
    for p in &input.params {
        let (k, v) = p.split_once('=').with_context(|| format!("expected NAME=VALUE, got `{}`", p))?;
        bind(k, parse_value(v)?)?;
    }
    for a in &input.arrays {
        let (k, v) = a.split_once('=').with_context(|| format!("expected NAME=VALUES, got `{}`", a))?;
        let addr = if let Some(n) = v.strip_prefix("zeros:") {
            mem.alloc(n.parse().with_context(|| format!("bad length in `{}`", a))?)
        } else {
            let words = v.split(',').map(parse_value).collect::<Result<Vec<_>>>()?;
            mem.alloc_from(&words)
        };
        bind(k, addr)?;
    }
    let params = bound
        .iter()
        .zip(&program.params)
        .map(|(b, p)| b.with_context(|| format!("parameter `{}` is not bound (use --param or --array)", p.name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Loaded {
        program,
        params,
        mem,
        check: None,
        cfg,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut l = load(&a.input)?;
    if let Some(mode) = a.branch {
        l.cfg.map_cores(|c| c.branch_mode = mode);
    }
    if a.alias_spec {
        l.cfg.map_cores(|c| c.alias_speculation = true);
    }
    if a.no_prefetch {
        l.cfg.set_prefetch(false);
    }
    let flags = Flags {
        tiles: a.input.tiles.max(1),
        dae: a.input.dae,
        event_log: a.event_log.is_some(),
        ..Flags::default()
    };
    let prepared = prepare(&l.program, &l.params, l.mem, &flags)?;
    if let Some(w) = &l.check {
        w.check(&prepared.final_mem)
            .map_err(|e| anyhow::anyhow!("functional check failed: {}", e))?;
    }
    if let Some(p) = &a.dump_ddg {
        let mut text = String::new();
        let mut seen = Vec::new();
        for d in &prepared.ddgs {
            if !seen.iter().any(|s| std::sync::Arc::ptr_eq(s, d)) {
                text.push_str(&d.dump());
                seen.push(d.clone());
            }
        }
        write(p, &text)?;
    }
    let out = simulate(&prepared, &l.cfg, &flags)?;
    let text = stats_text(&out.stats);
    match &a.stats {
        Some(p) => write(p, &text)?,
        None => print!("{}", text),
    }
    if let Some(p) = &a.csv {
        write(p, &stats_csv(&out.stats))?;
    }
    if let Some(p) = &a.event_log {
        let mut log = out.event_log.join("\n");
        log.push('\n');
        write(p, &log)?;
    }
    Ok(())
}

fn cmd_trace(input: InputArgs, out: PathBuf) -> Result<()> {
    let l = load(&input)?;
    let flags = Flags {
        tiles: input.tiles.max(1),
        dae: input.dae,
        ..Flags::default()
    };
    let prepared = prepare(&l.program, &l.params, l.mem, &flags)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for t in &prepared.traces {
        save_trace(&out, &format!("{}.tile{}", l.program.name, t.tile_id), t)?;
        println!(
            "tile {}: {} blocks, {} memory records, {} instructions",
            t.tile_id,
            t.ctrl.len(),
            t.mem.len(),
            t.instructions
        );
    }
    Ok(())
}

fn cmd_verify(kernel: &str, size: Option<usize>, seed: u64) -> Result<()> {
    let benches: Vec<_> = if kernel == "all" {
        corpus::BENCHMARKS.iter().collect()
    } else {
        vec![corpus::benchmark(kernel).with_context(|| format!("unknown benchmark `{}`", kernel))?]
    };
    let mut failed = 0;
    for b in benches {
        let program = b.program();
        let size = size.unwrap_or(b.default_size);
        let mut counts = vec![b.min_tiles, b.min_tiles.max(2)];
        counts.dedup();
        for tiles in counts {
            let w = corpus::workload(b.name, size, seed, tiles).map_err(anyhow::Error::msg)?;
            let flags = Flags::tiles(tiles);
            let r = prepare(&program, &w.params, w.mem.clone(), &flags)
                .map_err(|e| e.to_string())
                .and_then(|p| w.check(&p.final_mem));
            report(&mut failed, &format!("{} reference x{}", b.name, tiles), r);
            if b.sliceable {
                let r = verify_slice_equivalence(&program, &w.params, &w.mem, tiles).map_err(|e| e.to_string());
                report(&mut failed, &format!("{} decoupled x{}", b.name, tiles), r);
            }
        }
    }
    if failed > 0 {
        bail!("{} check(s) failed", failed);
    }
    Ok(())
}

fn report(failed: &mut usize, what: &str, r: Result<(), String>) {
    match r {
        Ok(()) => println!("ok   {}", what),
        Err(e) => {
            *failed += 1;
            println!("FAIL {}: {}", what, e);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Trace { input, out } => cmd_trace(input, out),
        Cmd::Verify { kernel, size, seed } => cmd_verify(&kernel, size, seed),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let deadlock = e.downcast_ref::<ExperimentError>().is_some_and(ExperimentError::is_deadlock);
            ExitCode::from(if deadlock { 2 } else { 1 })
        }
    }
}
