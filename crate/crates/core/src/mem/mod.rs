//! Cache hierarchy and DRAM.

pub mod cache;
pub mod dram;
mod hierarchy;
pub mod prefetch;

pub use cache::CacheArray;
pub use dram::{DramConfig, DramStats, SimpleDram};
pub use hierarchy::{CacheStats, Hierarchy, HierarchyStats, MemResponse};
pub use prefetch::{PrefetchConfig, StridePrefetcher};

use crate::ir::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// One instance per core tile.
    Private,
    /// One instance for all core tiles.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheConfig {
    pub name: String,
    pub size: u64,
    pub line_size: u64,
    pub assoc: u32,
    pub latency: u64,
    pub mshr_entries: usize,
    pub sharing: Sharing,
    pub prefetch: PrefetchConfig,
    /// Joules per access.
    pub energy: f64,
}

impl CacheConfig {
    pub fn new(name: &str, size: u64, assoc: u32, latency: u64, sharing: Sharing) -> Self {
        CacheConfig {
            name: name.to_string(),
            size,
            line_size: 64,
            assoc,
            latency,
            mshr_entries: 16,
            sharing,
            prefetch: PrefetchConfig::default(),
            energy: 0.0,
        }
    }

    pub fn sets(&self) -> u64 {
        self.size / (self.line_size * self.assoc as u64)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.line_size == 0 || !self.line_size.is_power_of_two() {
            return Err(format!("cache {}: line_size {} is not a power of two", self.name, self.line_size));
        }
        if self.assoc == 0 {
            return Err(format!("cache {}: assoc must be at least 1", self.name));
        }
        let way_bytes = self.line_size * self.assoc as u64;
        if self.size == 0 || self.size % way_bytes != 0 {
            return Err(format!(
                "cache {}: size {} is not a multiple of line_size x assoc = {}",
                self.name, self.size, way_bytes
            ));
        }
        if self.latency == 0 {
            return Err(format!("cache {}: latency must be at least 1", self.name));
        }
        if self.mshr_entries == 0 {
            return Err(format!("cache {}: mshr_entries must be at least 1", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    /// Levels from the core outwards; the last one is the LLC.
    pub levels: Vec<CacheConfig>,
    pub dram: DramConfig,
    pub freq_hz: f64,
}

impl Default for HierarchyConfig {
    /// 32KB 8-way 1-cycle private L1, 2MB 8-way 6-cycle shared L2, 200-cycle
    /// DRAM, 2 GHz.
    fn default() -> Self {
        HierarchyConfig {
            levels: vec![
                CacheConfig::new("l1", 32 * 1024, 8, 1, Sharing::Private),
                CacheConfig::new("l2", 2 * 1024 * 1024, 8, 6, Sharing::Shared),
            ],
            dram: DramConfig::default(),
            freq_hz: 2e9,
        }
    }
}

/// A demand request from a core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRequest {
    pub tile: u32,
    pub gid: u64,
    pub node: NodeId,
    pub addr: u64,
    pub is_write: bool,
    /// Global time at which the request enters the hierarchy.
    pub time_fs: u64,
}
