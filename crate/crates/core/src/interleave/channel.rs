//! Bounded point-to-point message FIFOs between tiles.
//!
//! Only timing lives here; values were already exchanged when the traces
//! were generated. A message becomes visible to its receiver `latency`
//! receiver cycles after it was sent. A message sent on behalf of a load
//! whose data has not returned yet stays pending until [`Channels::resolve`].

use std::collections::{HashMap, VecDeque};

pub type MsgId = u64;

/// Notification for a tile, to be placed in its inbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// A receive matched a message; its data is there at `avail_fs`.
    Recv { gid: u64, avail_fs: u64 },
    /// A channel this tile was blocked on has room again.
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelFull;

#[derive(Debug, Clone, Copy)]
struct Msg {
    dst: u32,
    send_fs: u64,
    avail_fs: Option<u64>,
    claimant: Option<(u32, u64)>,
}

#[derive(Debug, Default)]
struct Chan {
    queue: VecDeque<MsgId>,
    waiters: VecDeque<u64>,
    sender_blocked: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub received: u64,
    pub full_events: u64,
    pub max_occupancy: usize,
}

#[derive(Debug)]
pub struct Channels {
    capacity: usize,
    latency: u64,
    periods: Vec<u64>,
    chans: HashMap<(u32, u32), Chan>,
    msgs: HashMap<MsgId, Msg>,
    next_id: MsgId,
    out: Vec<(u32, u64, Delivery)>,
    stats: ChannelStats,
}

impl Channels {
    /// `periods[t]` is tile `t`'s clock period in femtoseconds.
    pub fn new(capacity: usize, latency: u64, periods: Vec<u64>) -> Self {
        Channels {
            capacity: capacity.max(1),
            latency,
            periods,
            chans: HashMap::new(),
            msgs: HashMap::new(),
            next_id: 0,
            out: Vec::new(),
            stats: ChannelStats::default(),
        }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    fn arrival(&self, dst: u32, from_fs: u64) -> u64 {
        from_fs + self.latency * self.periods[dst as usize]
    }

    pub fn has_room(&self, src: u32, dst: u32) -> bool {
        self.chans.get(&(src, dst)).map_or(true, |c| c.queue.len() < self.capacity)
    }

    /// Note that `src` wants to send to `dst` but found no room; it gets a
    /// [`Delivery::Space`] once a message is taken.
    pub fn mark_blocked(&mut self, src: u32, dst: u32) {
        if let Some(chan) = self.chans.get_mut(&(src, dst)) {
            if !chan.sender_blocked {
                chan.sender_blocked = true;
                self.stats.full_events += 1;
            }
        }
    }

    /// Enqueue a message. With `pending`, its arrival time is fixed later by
    /// [`Channels::resolve`].
    pub fn send(&mut self, src: u32, dst: u32, now_fs: u64, pending: bool) -> Result<MsgId, ChannelFull> {
        let capacity = self.capacity;
        let chan = self.chans.entry((src, dst)).or_default();
        if chan.waiters.is_empty() && chan.queue.len() >= capacity {
            chan.sender_blocked = true;
            self.stats.full_events += 1;
            return Err(ChannelFull);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.stats.sent += 1;
        let avail_fs = (!pending).then(|| self.arrival(dst, now_fs));
        let mut msg = Msg {
            dst,
            send_fs: now_fs,
            avail_fs,
            claimant: None,
        };
        let chan = self.chans.get_mut(&(src, dst)).expect("just inserted");
        if let Some(gid) = chan.waiters.pop_front() {
            self.stats.received += 1;
            match avail_fs {
                Some(a) => self.out.push((dst, now_fs, Delivery::Recv { gid, avail_fs: a })),
                None => {
                    msg.claimant = Some((dst, gid));
                    self.msgs.insert(id, msg);
                }
            }
        } else {
            chan.queue.push_back(id);
            self.stats.max_occupancy = self.stats.max_occupancy.max(chan.queue.len());
            self.msgs.insert(id, msg);
        }
        Ok(id)
    }

    /// Fix the arrival time of a pending message once its data is ready.
    pub fn resolve(&mut self, id: MsgId, ready_fs: u64) {
        let Some(msg) = self.msgs.get_mut(&id) else { return };
        let Msg { dst, send_fs, claimant, .. } = *msg;
        let avail_fs = send_fs.max(ready_fs) + self.latency * self.periods[dst as usize];
        match claimant {
            Some((dst, gid)) => {
                self.msgs.remove(&id);
                self.out.push((dst, ready_fs, Delivery::Recv { gid, avail_fs }));
            }
            None => msg.avail_fs = Some(avail_fs),
        }
    }

    /// Take the oldest message from `src` to `dst`. Returns its arrival time
    /// when already known; otherwise a [`Delivery::Recv`] for `gid` follows.
    pub fn recv(&mut self, dst: u32, src: u32, gid: u64, now_fs: u64) -> Option<u64> {
        let chan = self.chans.entry((src, dst)).or_default();
        let Some(id) = chan.queue.pop_front() else {
            chan.waiters.push_back(gid);
            return None;
        };
        if std::mem::take(&mut chan.sender_blocked) {
            self.out.push((src, now_fs, Delivery::Space));
        }
        self.stats.received += 1;
        let msg = self.msgs.get_mut(&id).expect("queued message exists");
        match msg.avail_fs {
            Some(a) => {
                self.msgs.remove(&id);
                Some(a)
            }
            None => {
                msg.claimant = Some((dst, gid));
                None
            }
        }
    }

    pub fn take_deliveries(&mut self) -> Vec<(u32, u64, Delivery)> {
        std::mem::take(&mut self.out)
    }

    /// Messages sent but not yet received, per (src, dst).
    pub fn occupancy(&self) -> Vec<((u32, u32), usize)> {
        let mut v: Vec<_> = self
            .chans
            .iter()
            .filter(|(_, c)| !c.queue.is_empty())
            .map(|(k, c)| (*k, c.queue.len()))
            .collect();
        v.sort();
        v
    }

    pub fn waiting_receivers(&self) -> usize {
        self.chans.values().map(|c| c.waiters.len()).sum()
    }
}
