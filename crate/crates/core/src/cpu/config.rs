use std::fmt;
use std::str::FromStr;

use crate::ir::OpClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchMode {
    /// No speculation: a successor launches when the terminator completes.
    #[default]
    Off,
    /// Oracle speculation: the successor launches the cycle after its
    /// predecessor.
    Perfect,
    /// Backward-taken / forward-not-taken prediction.
    Static,
}

impl BranchMode {
    pub fn name(self) -> &'static str {
        match self {
            BranchMode::Off => "off",
            BranchMode::Perfect => "perfect",
            BranchMode::Static => "static",
        }
    }
}

impl fmt::Display for BranchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BranchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" | "none" => Ok(BranchMode::Off),
            "perfect" => Ok(BranchMode::Perfect),
            "static" => Ok(BranchMode::Static),
            other => Err(format!("unknown branch mode `{}` (off, perfect, static)", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreConfig {
    pub name: String,
    pub issue_width: u32,
    pub window_size: u32,
    pub lsq_size: u32,
    /// Functional units per opclass; `None` means unlimited.
    pub fu_counts: [Option<u32>; OpClass::COUNT],
    /// Max concurrently live dynamic blocks per static block; 0 = unlimited.
    pub live_dbb_limit: u32,
    pub freq_hz: f64,
    pub branch_mode: BranchMode,
    pub misprediction_latency: u64,
    pub alias_speculation: bool,
}

impl CoreConfig {
    /// Out-of-order preset: 4-wide, 128-entry window and LSQ, 2 GHz.
    pub fn ooo() -> Self {
        CoreConfig {
            name: "ooo".into(),
            issue_width: 4,
            window_size: 128,
            lsq_size: 128,
            fu_counts: [None; OpClass::COUNT],
            live_dbb_limit: 0,
            freq_hz: 2e9,
            branch_mode: BranchMode::Off,
            misprediction_latency: 5,
            alias_speculation: false,
        }
    }

    /// In-order preset: single issue, window and LSQ of one, 2 GHz.
    pub fn ino() -> Self {
        CoreConfig {
            name: "ino".into(),
            issue_width: 1,
            window_size: 1,
            lsq_size: 1,
            ..CoreConfig::ooo()
        }
    }

    pub fn fu_count(&self, op: OpClass) -> Option<u32> {
        self.fu_counts[op.index()]
    }

    pub fn set_fu_count(&mut self, op: OpClass, n: Option<u32>) {
        self.fu_counts[op.index()] = n;
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.issue_width == 0 {
            return Err(format!("core {}: issue_width must be at least 1", self.name));
        }
        if self.window_size == 0 {
            return Err(format!("core {}: window_size must be at least 1", self.name));
        }
        if self.lsq_size == 0 {
            return Err(format!("core {}: lsq_size must be at least 1", self.name));
        }
        if !(self.freq_hz > 0.0 && self.freq_hz.is_finite()) {
            return Err(format!("core {}: freq must be positive", self.name));
        }
        if let Some(op) = OpClass::ALL.iter().find(|o| self.fu_counts[o.index()] == Some(0)) {
            return Err(format!("core {}: fu count for {} must be at least 1", self.name, op));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Fixed { latency: u64, energy: f64 },
    /// Decided by the memory hierarchy.
    Dynamic,
}

/// Per-opclass latency (cycles) and energy (joules).
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTable {
    entries: [Option<(u64, f64)>; OpClass::COUNT],
}

impl Default for LatencyTable {
    /// IADD 1, IMUL 3, IDIV 20, FADD 3, FMUL 4, FDIV 12, everything else 1;
    /// zero energy.
    fn default() -> Self {
        let mut t = LatencyTable::empty();
        for op in OpClass::ALL {
            let lat = match op {
                OpClass::IMul => 3,
                OpClass::IDiv => 20,
                OpClass::FAdd => 3,
                OpClass::FMul => 4,
                OpClass::FDiv => 12,
                _ => 1,
            };
            t.entries[op.index()] = Some((lat, 0.0));
        }
        t
    }
}

impl LatencyTable {
    pub fn empty() -> Self {
        LatencyTable {
            entries: [None; OpClass::COUNT],
        }
    }

    pub fn set(&mut self, op: OpClass, latency: u64, energy: f64) {
        self.entries[op.index()] = Some((latency, energy));
    }

    /// Set an entry by opclass name, as written in config files.
    pub fn set_named(&mut self, name: &str, latency: u64, energy: f64) -> Result<(), String> {
        let op: OpClass = name.parse().map_err(|e: crate::ir::UnknownOpClass| e.to_string())?;
        if latency == 0 && !op.is_memory() {
            return Err(format!("latency of {} must be at least 1", op));
        }
        self.set(op, latency, energy);
        Ok(())
    }

    pub fn entry(&self, op: OpClass) -> Option<(u64, f64)> {
        self.entries[op.index()]
    }

    /// `None` when the table has no entry for `op`.
    pub fn cost(&self, op: OpClass) -> Option<Cost> {
        let (latency, energy) = self.entries[op.index()]?;
        Some(if op.is_memory() {
            Cost::Dynamic
        } else {
            Cost::Fixed { latency, energy }
        })
    }

    pub fn missing(&self) -> Vec<OpClass> {
        OpClass::ALL.into_iter().filter(|o| self.entries[o.index()].is_none()).collect()
    }
}

/// Cost lookup used by the core model.
pub fn instruction_cost(op: OpClass, table: &LatencyTable) -> Option<Cost> {
    table.cost(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookup() {
        let mut t = LatencyTable::default();
        t.set(OpClass::IAdd, 1, 0.5e-12);
        assert_eq!(
            instruction_cost(OpClass::IAdd, &t),
            Some(Cost::Fixed { latency: 1, energy: 0.5e-12 })
        );
        assert_eq!(instruction_cost(OpClass::Load, &t), Some(Cost::Dynamic));
    }

    #[test]
    fn unknown_opclass_is_named() {
        let mut t = LatencyTable::default();
        let err = t.set_named("FOO", 1, 0.0).unwrap_err();
        assert!(err.contains("FOO"), "{}", err);
    }

    #[test]
    fn presets_validate() {
        assert!(CoreConfig::ooo().validate().is_ok());
        assert!(CoreConfig::ino().validate().is_ok());
        let bad = CoreConfig {
            issue_width: 0,
            ..CoreConfig::ooo()
        };
        assert!(bad.validate().is_err());
    }
}
