//! System configuration files: sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [core ooo]
//! issue_width = 4
//! fu.FMUL = 2
//! [latency]
//! FDIV = 12 2e-11        # cycles, then optional joules
//! [cache l1]
//! size = 32K
//! sharing = private
//! [dram]
//! min_latency = 200
//! [messages]
//! capacity = 512
//! [accel sgemm_unit]
//! freq = 1GHz
//! [system]
//! tile = core ooo 1
//! tile = accel sgemm_unit 1
//! seed = 1
//! models = accel.models
//! ```
//!
//! Cache sections list levels from the core outwards. Omitted sections and
//! keys keep their defaults.

use std::path::Path;

use crate::accel::{parse_models, AccelLibrary};
use crate::cpu::{BranchMode, CoreConfig, LatencyTable};
use crate::error::ConfigError;
use crate::interleave::AccelTileConfig;
use crate::ir::OpClass;
use crate::mem::{CacheConfig, HierarchyConfig, Sharing};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileKind {
    Core,
    Accel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileEntry {
    pub kind: TileKind,
    pub section: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub cores: Vec<CoreConfig>,
    pub accels: Vec<AccelTileConfig>,
    pub tiles: Vec<TileEntry>,
    pub latency: LatencyTable,
    pub hierarchy: HierarchyConfig,
    pub msg_capacity: usize,
    pub msg_latency: u64,
    pub accel_models: AccelLibrary,
    pub seed: u64,
}

impl SystemConfig {
    /// One core of the given kind over the default hierarchy, with the L1
    /// stride prefetcher on.
    pub fn preset(core: CoreConfig) -> Self {
        let mut hierarchy = HierarchyConfig::default();
        hierarchy.levels[0].prefetch.enabled = true;
        SystemConfig {
            tiles: vec![TileEntry {
                kind: TileKind::Core,
                section: core.name.clone(),
                count: 1,
            }],
            cores: vec![core],
            accels: Vec::new(),
            latency: LatencyTable::default(),
            hierarchy,
            msg_capacity: 512,
            msg_latency: 1,
            accel_models: AccelLibrary::builtin(),
            seed: 1,
        }
    }

    pub fn ooo() -> Self {
        SystemConfig::preset(CoreConfig::ooo())
    }

    pub fn ino() -> Self {
        SystemConfig::preset(CoreConfig::ino())
    }

    pub fn core(&self, name: &str) -> Option<&CoreConfig> {
        self.cores.iter().find(|c| c.name == name)
    }

    pub fn core_mut(&mut self, name: &str) -> Option<&mut CoreConfig> {
        self.cores.iter_mut().find(|c| c.name == name)
    }

    /// Apply `f` to every core section.
    pub fn map_cores(&mut self, mut f: impl FnMut(&mut CoreConfig)) {
        self.cores.iter_mut().for_each(&mut f);
    }

    /// Core configs in tile order, expanded by count.
    pub fn core_tiles(&self) -> Vec<CoreConfig> {
        self.expand(TileKind::Core, |s| self.core(s).cloned())
    }

    pub fn accel_tiles(&self) -> Vec<AccelTileConfig> {
        self.expand(TileKind::Accel, |s| self.accels.iter().find(|a| a.name == s).cloned())
    }

    fn expand<T>(&self, kind: TileKind, get: impl Fn(&str) -> Option<T>) -> Vec<T>
    where
        T: Clone,
    {
        let mut out = Vec::new();
        for t in self.tiles.iter().filter(|t| t.kind == kind) {
            if let Some(c) = get(&t.section) {
                out.extend(std::iter::repeat(c).take(t.count as usize));
            }
        }
        out
    }

    /// Replace the core tiles with `n` copies of the first core tile entry.
    pub fn with_core_tiles(mut self, n: u32) -> Self {
        let first = self
            .tiles
            .iter()
            .find(|t| t.kind == TileKind::Core)
            .map(|t| t.section.clone())
            .or_else(|| self.cores.first().map(|c| c.name.clone()));
        self.tiles.retain(|t| t.kind != TileKind::Core);
        if let Some(section) = first {
            self.tiles.insert(
                0,
                TileEntry {
                    kind: TileKind::Core,
                    section,
                    count: n,
                },
            );
        }
        self
    }

    /// `true` turns on the first level's prefetcher; `false` turns off all.
    pub fn set_prefetch(&mut self, on: bool) {
        if on {
            if let Some(l) = self.hierarchy.levels.first_mut() {
                l.prefetch.enabled = true;
            }
        } else {
            self.hierarchy.levels.iter_mut().for_each(|l| l.prefetch.enabled = false);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in &self.cores {
            c.validate()?;
        }
        for a in &self.accels {
            if !(a.freq_hz > 0.0 && a.freq_hz.is_finite()) {
                return Err(format!("accel {}: freq must be positive", a.name));
            }
        }
        if let Some(op) = self.latency.missing().first() {
            return Err(format!("latency table has no entry for {}", op));
        }
        if self.hierarchy.levels.is_empty() {
            return Err("at least one cache level is required".into());
        }
        for l in &self.hierarchy.levels {
            l.validate()?;
        }
        if let Some(i) = self.hierarchy.levels.iter().position(|l| l.sharing == Sharing::Shared) {
            if let Some(p) = self.hierarchy.levels[i..].iter().find(|l| l.sharing == Sharing::Private) {
                return Err(format!(
                    "cache {} is private but sits behind shared cache {}",
                    p.name, self.hierarchy.levels[i].name
                ));
            }
        }
        self.hierarchy.dram.validate()?;
        if !(self.hierarchy.freq_hz > 0.0 && self.hierarchy.freq_hz.is_finite()) {
            return Err("system: mem_freq must be positive".into());
        }
        if self.msg_capacity == 0 {
            return Err("messages: capacity must be at least 1".into());
        }
        for t in &self.tiles {
            let known = match t.kind {
                TileKind::Core => self.core(&t.section).is_some(),
                TileKind::Accel => self.accels.iter().any(|a| a.name == t.section),
            };
            if !known {
                let kind = if t.kind == TileKind::Core { "core" } else { "accel" };
                return Err(format!("tile references missing section [{} {}]", kind, t.section));
            }
        }
        if !self.tiles.iter().any(|t| t.kind == TileKind::Core && t.count > 0) {
            return Err("system has no core tiles".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            file: file.clone(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        parse_config(&text, &file, |name| {
            let p = base.join(name);
            std::fs::read_to_string(&p).map_err(|e| format!("{}: {}", p.display(), e))
        })
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::ooo()
    }
}

enum Section {
    None,
    Core(usize),
    Latency,
    Cache(usize),
    Dram,
    Messages,
    Accel(usize),
    System,
}

fn parse_u64(v: &str) -> Result<u64, String> {
    let t = v.replace('_', "");
    let t = t.strip_suffix('B').unwrap_or(&t);
    let (num, mult) = match t.as_bytes().last() {
        Some(b'K' | b'k') => (&t[..t.len() - 1], 1u64 << 10),
        Some(b'M') => (&t[..t.len() - 1], 1 << 20),
        Some(b'G') => (&t[..t.len() - 1], 1 << 30),
        _ => (t, 1),
    };
    num.parse::<u64>()
        .ok()
        .and_then(|n| n.checked_mul(mult))
        .ok_or_else(|| format!("expected an unsigned integer, got `{}`", v))
}

fn parse_u32(v: &str) -> Result<u32, String> {
    parse_u64(v)?.try_into().map_err(|_| format!("`{}` is out of range", v))
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.replace('_', "")
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got `{}`", v))
}

fn parse_freq(v: &str) -> Result<f64, String> {
    let t = v.trim();
    let lower = t.to_ascii_lowercase();
    let (num, mult) = if let Some(n) = lower.strip_suffix("ghz") {
        (n, 1e9)
    } else if let Some(n) = lower.strip_suffix("mhz") {
        (n, 1e6)
    } else if let Some(n) = lower.strip_suffix("hz") {
        (n, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    Ok(parse_f64(num.trim())? * mult)
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{}`", v)),
    }
}

/// Parse config text. `read_models` resolves the `models = FILE` key.
pub fn parse_config(
    text: &str,
    file: &str,
    read_models: impl Fn(&str) -> Result<String, String>,
) -> Result<SystemConfig, ConfigError> {
    let mut cfg = SystemConfig::ooo();
    cfg.cores.clear();
    cfg.tiles.clear();
    let mut saw_cache = false;
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let at = |msg: String| ConfigError::At {
            file: file.to_string(),
            line: line_no,
            msg,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[') {
            let head = head
                .strip_suffix(']')
                .ok_or_else(|| at("unterminated section header".into()))?;
            let mut words = head.split_whitespace();
            let kind = words.next().unwrap_or("");
            let name = words.next();
            if words.next().is_some() {
                return Err(at(format!("malformed section header `[{}]`", head)));
            }
            let need_name = |n: Option<&str>| n.map(str::to_string).ok_or_else(|| at(format!("[{}] needs a name", kind)));
            section = match kind {
                "core" => {
                    let name = need_name(name)?;
                    if cfg.core(&name).is_some() {
                        return Err(at(format!("duplicate section [core {}]", name)));
                    }
                    cfg.cores.push(CoreConfig {
                        name,
                        ..CoreConfig::ooo()
                    });
                    Section::Core(cfg.cores.len() - 1)
                }
                "cache" => {
                    let name = need_name(name)?;
                    if !saw_cache {
                        cfg.hierarchy.levels.clear();
                        saw_cache = true;
                    }
                    if cfg.hierarchy.levels.iter().any(|l| l.name == name) {
                        return Err(at(format!("duplicate section [cache {}]", name)));
                    }
                    cfg.hierarchy
                        .levels
                        .push(CacheConfig::new(&name, 32 * 1024, 8, 1, Sharing::Private));
                    Section::Cache(cfg.hierarchy.levels.len() - 1)
                }
                "accel" => {
                    let name = need_name(name)?;
                    cfg.accels.push(AccelTileConfig { name, freq_hz: 1e9 });
                    Section::Accel(cfg.accels.len() - 1)
                }
                "latency" | "dram" | "messages" | "system" if name.is_some() => {
                    return Err(at(format!("[{}] takes no name", kind)));
                }
                "latency" => Section::Latency,
                "dram" => Section::Dram,
                "messages" => Section::Messages,
                "system" => Section::System,
                other => return Err(at(format!("unknown section `{}`", other))),
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| at(format!("expected `key = value`, got `{}`", line)))?;
        let unknown = || at(format!("unknown key `{}`", key));
        let r: Result<(), String> = match &section {
            Section::None => return Err(at("key outside of any section".into())),
            Section::Core(i) => {
                let c = &mut cfg.cores[*i];
                match key {
                    "issue_width" => parse_u32(value).map(|v| c.issue_width = v),
                    "window_size" | "rob_size" => parse_u32(value).map(|v| c.window_size = v),
                    "lsq_size" => parse_u32(value).map(|v| c.lsq_size = v),
                    "live_dbb_limit" => parse_u32(value).map(|v| c.live_dbb_limit = v),
                    "freq" => parse_freq(value).map(|v| c.freq_hz = v),
                    "branch_mode" => value.parse::<BranchMode>().map(|v| c.branch_mode = v),
                    "misprediction_latency" => parse_u64(value).map(|v| c.misprediction_latency = v),
                    "alias_speculation" => parse_bool(value).map(|v| c.alias_speculation = v),
                    k => match k.strip_prefix("fu.").map(str::parse::<OpClass>) {
                        Some(Ok(op)) => {
                            if value == "inf" || value == "unlimited" {
                                c.set_fu_count(op, None);
                                Ok(())
                            } else {
                                parse_u32(value).map(|v| c.set_fu_count(op, Some(v)))
                            }
                        }
                        Some(Err(e)) => Err(e.to_string()),
                        None => return Err(unknown()),
                    },
                }
            }
            Section::Latency => {
                let mut parts = value.split_whitespace();
                let lat = parts.next().ok_or_else(|| "missing latency".to_string());
                let energy = parts.next().map(parse_f64).unwrap_or(Ok(0.0));
                match (lat.and_then(parse_u64), energy) {
                    (Ok(l), Ok(e)) if parts.next().is_none() => cfg.latency.set_named(key, l, e),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                    _ => Err("expected `cycles [joules]`".into()),
                }
            }
            Section::Cache(i) => {
                let l = &mut cfg.hierarchy.levels[*i];
                match key {
                    "size" => parse_u64(value).map(|v| l.size = v),
                    "line_size" => parse_u64(value).map(|v| l.line_size = v),
                    "assoc" => parse_u32(value).map(|v| l.assoc = v),
                    "latency" => parse_u64(value).map(|v| l.latency = v),
                    "mshr_entries" => parse_u64(value).map(|v| l.mshr_entries = v as usize),
                    "energy" => parse_f64(value).map(|v| l.energy = v),
                    "sharing" => match value {
                        "private" => Ok(l.sharing = Sharing::Private),
                        "shared" => Ok(l.sharing = Sharing::Shared),
                        _ => Err(format!("sharing must be private or shared, got `{}`", value)),
                    },
                    "prefetch" => parse_bool(value).map(|v| l.prefetch.enabled = v),
                    "prefetch_stride" => parse_u64(value).map(|v| l.prefetch.stride_words = v),
                    "prefetch_detect" => parse_u32(value).map(|v| l.prefetch.detect_length = v),
                    "prefetch_degree" => parse_u32(value).map(|v| l.prefetch.degree = v),
                    "prefetch_distance" => parse_u32(value).map(|v| l.prefetch.distance = v),
                    _ => return Err(unknown()),
                }
            }
            Section::Dram => {
                let d = &mut cfg.hierarchy.dram;
                match key {
                    "min_latency" => parse_u64(value).map(|v| d.min_latency = v),
                    "epoch_length" => parse_u64(value).map(|v| d.epoch_length = v),
                    "max_per_epoch" => parse_u32(value).map(|v| d.max_per_epoch = v),
                    "energy" => parse_f64(value).map(|v| d.energy = v),
                    _ => return Err(unknown()),
                }
            }
            Section::Messages => match key {
                "capacity" => parse_u64(value).map(|v| cfg.msg_capacity = v as usize),
                "latency" => parse_u64(value).map(|v| cfg.msg_latency = v),
                _ => return Err(unknown()),
            },
            Section::Accel(i) => match key {
                "freq" => parse_freq(value).map(|v| cfg.accels[*i].freq_hz = v),
                _ => return Err(unknown()),
            },
            Section::System => match key {
                "seed" => parse_u64(value).map(|v| cfg.seed = v),
                "mem_freq" => parse_freq(value).map(|v| cfg.hierarchy.freq_hz = v),
                "models" => read_models(value).and_then(|text| {
                    let models = parse_models(&text).map_err(|e| format!("{}: {}", value, e))?;
                    for m in models {
                        cfg.accel_models.insert(m);
                    }
                    Ok(())
                }),
                "tile" => {
                    let w: Vec<&str> = value.split_whitespace().collect();
                    let kind = match w.first() {
                        Some(&"core") => Ok(TileKind::Core),
                        Some(&"accel") => Ok(TileKind::Accel),
                        _ => Err(format!("expected `tile = core|accel NAME [COUNT]`, got `{}`", value)),
                    };
                    kind.and_then(|kind| {
                        let section = w.get(1).ok_or("tile needs a section name")?.to_string();
                        let count = w.get(2).map_or(Ok(1), |c| parse_u32(c))?;
                        if w.len() > 3 {
                            return Err(format!("trailing words in `{}`", value));
                        }
                        cfg.tiles.push(TileEntry { kind, section, count });
                        Ok(())
                    })
                }
                _ => return Err(unknown()),
            },
        };
        r.map_err(at)?;
    }
    if cfg.cores.is_empty() {
        cfg.cores.push(CoreConfig::ooo());
    }
    if cfg.tiles.is_empty() {
        cfg.tiles.push(TileEntry {
            kind: TileKind::Core,
            section: cfg.cores[0].name.clone(),
            count: 1,
        });
    }
    cfg.validate().map_err(|msg| ConfigError::Invalid {
        file: file.to_string(),
        msg,
    })?;
    Ok(cfg)
}
