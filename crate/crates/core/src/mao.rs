//! Memory address orderer: the per-core load/store queue.
//!
//! Entries enter in program order and leave when their memory access
//! completes. A store may go once no older incomplete access has a matching
//! or unknown address; a load only has to wait for older stores.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemKind {
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaoEntry {
    pub gid: u64,
    pub kind: MemKind,
    /// Address from the trace. Only visible to ordering checks once
    /// `resolved` is set, unless alias speculation is on.
    pub addr: u64,
    pub size: u32,
    pub resolved: bool,
    pub completed: bool,
    pub seq: u64,
}

impl MaoEntry {
    fn overlaps(&self, other: &MaoEntry) -> bool {
        self.addr < other.addr + other.size as u64 && other.addr < self.addr + self.size as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaoFull;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Allow,
    Stall,
}

#[derive(Debug, Clone)]
pub struct Mao {
    capacity: usize,
    entries: VecDeque<MaoEntry>,
    next_seq: u64,
    last_gid: Option<u64>,
    peak: usize,
}

impl Mao {
    pub fn new(capacity: usize) -> Self {
        Mao {
            capacity,
            entries: VecDeque::new(),
            next_seq: 0,
            last_gid: None,
            peak: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Highest occupancy seen so far.
    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn entries(&self) -> impl Iterator<Item = &MaoEntry> {
        self.entries.iter()
    }

    /// Append an entry. Panics if `gid` is not younger than every entry
    /// inserted before it.
    pub fn insert(&mut self, gid: u64, kind: MemKind, addr: u64, size: u32) -> Result<(), MaoFull> {
        if let Some(last) = self.last_gid {
            assert!(gid > last, "MAO insertion out of program order: {} after {}", gid, last);
        }
        if self.is_full() {
            return Err(MaoFull);
        }
        self.entries.push_back(MaoEntry {
            gid,
            kind,
            addr,
            size,
            resolved: false,
            completed: false,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        self.last_gid = Some(gid);
        self.peak = self.peak.max(self.entries.len());
        Ok(())
    }

    fn position(&self, gid: u64) -> Option<usize> {
        self.entries.binary_search_by_key(&gid, |e| e.gid).ok()
    }

    pub fn get(&self, gid: u64) -> Option<&MaoEntry> {
        self.position(gid).map(|i| &self.entries[i])
    }

    pub fn contains(&self, gid: u64) -> bool {
        self.position(gid).is_some()
    }

    pub fn resolve(&mut self, gid: u64) {
        if let Some(i) = self.position(gid) {
            self.entries[i].resolved = true;
        }
    }

    /// Older incomplete entries that `gid` has to respect (stores for a
    /// load, everything for a store).
    fn older_relevant(&self, gid: u64) -> impl Iterator<Item = &MaoEntry> {
        let i = self.position(gid).expect("checked entry is in the MAO");
        let me = self.entries[i];
        self.entries
            .range(..i)
            .filter(move |e| !e.completed && (me.kind == MemKind::Store || e.kind == MemKind::Store))
    }

    pub fn check(&self, gid: u64, alias_speculation: bool) -> Check {
        let me = *self.get(gid).expect("checked entry is in the MAO");
        let blocked = self.older_relevant(gid).any(|e| {
            if !e.resolved && !alias_speculation {
                true
            } else {
                e.overlaps(&me)
            }
        });
        if blocked {
            Check::Stall
        } else {
            Check::Allow
        }
    }

    /// GIDs of older incomplete entries that `gid` would overtake if it
    /// issued now.
    pub fn overtaken(&self, gid: u64) -> Vec<u64> {
        self.older_relevant(gid).map(|e| e.gid).collect()
    }

    pub fn complete(&mut self, gid: u64) {
        let i = self.position(gid).expect("completed entry is in the MAO");
        assert!(!self.entries[i].completed, "MAO entry {} completed twice", gid);
        self.entries[i].completed = true;
        self.entries[i].resolved = true;
    }

    /// Remove a completed entry and free its slot.
    pub fn retire(&mut self, gid: u64) {
        let i = self.position(gid).expect("retired entry is in the MAO");
        assert!(self.entries[i].completed, "retiring incomplete MAO entry {}", gid);
        self.entries.remove(i);
    }
}
