//! Single-port SRAM banks behind a read FIFO and a write FIFO.
//!
//! A bank services one request per cycle. When both FIFOs hold work it
//! alternates between them, writes first. A read-with-intent sets the
//! entry's bit in the RW protection register; any read that reaches the head
//! of the read FIFO while its entry is protected stalls until the write to
//! that entry retires and clears the bit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum BankId {
    Acc = 0,
    Neuron = 1,
    Weight = 2,
    SpikeAddr = 3,
}

impl BankId {
    pub const ALL: [BankId; 4] = [BankId::Acc, BankId::Neuron, BankId::Weight, BankId::SpikeAddr];

    pub fn name(self) -> &'static str {
        match self {
            BankId::Acc => "accumulated",
            BankId::Neuron => "neurons",
            BankId::Weight => "weights",
            BankId::SpikeAddr => "spike_addr",
        }
    }
}

/// Geometry of one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankGeometry {
    pub bytes: usize,
    /// Bytes reserved per entry.
    pub slot: usize,
    /// Bytes moved (and counted) per access.
    pub width: usize,
    pub protected: bool,
}

impl BankGeometry {
    pub fn entries(&self) -> usize {
        self.bytes / self.slot
    }
}

/// What the access is on behalf of, for byte accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    Spike,
    Eot,
    Lookup,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    ReadIntent,
    Write(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub entry: usize,
    pub access: Access,
    pub class: Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    pub entry: usize,
    pub value: u32,
    pub class: Class,
}

/// What a bank did in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Serviced {
    Idle,
    /// A read was waiting on a protected entry and nothing else was ready.
    Stalled,
    Read(Class, usize),
    Write(Class, usize),
}

#[derive(Debug, Clone)]
pub struct Bank {
    pub id: BankId,
    pub geometry: BankGeometry,
    data: Vec<u8>,
    protect: [u64; 4],
    protection_enabled: bool,
    reads: VecDeque<Request>,
    writes: VecDeque<Request>,
    responses: VecDeque<(u64, Response)>,
    depth: usize,
    latency: u64,
    last_was_write: bool,
    running: bool,
}

impl Bank {
    pub fn new(id: BankId, geometry: BankGeometry, depth: usize, latency: u64) -> Self {
        assert!(!geometry.protected || geometry.entries() <= 256, "protection register covers 256 entries");
        assert!(geometry.width <= 4 && geometry.width <= geometry.slot);
        Self {
            id,
            geometry,
            data: vec![0; geometry.bytes],
            protect: [0; 4],
            protection_enabled: geometry.protected,
            reads: VecDeque::with_capacity(depth),
            writes: VecDeque::with_capacity(depth),
            responses: VecDeque::new(),
            depth,
            latency,
            last_was_write: false,
            running: false,
        }
    }

    /// Turns RAW protection off. Only useful to demonstrate the hazard it
    /// prevents.
    pub fn set_protection(&mut self, on: bool) {
        self.protection_enabled = on && self.geometry.protected;
    }

    /// Leaves programming mode; from now on only the core may write, and the
    /// weight bank becomes read-only.
    pub fn start(&mut self) {
        self.running = true;
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    /// Programming-time byte write through the memory interface.
    pub fn program_byte(&mut self, addr: usize, value: u8) -> Result<()> {
        if self.running {
            return Err(Error::SimFault(format!("programming write to {} bank after commit", self.id.name())));
        }
        let slot = self.data.get_mut(addr).ok_or_else(|| {
            Error::SimFault(format!("programming address {addr} outside {} bank", self.id.name()))
        })?;
        *slot = value;
        Ok(())
    }

    /// Replaces the contents wholesale (inference reset).
    pub fn restore(&mut self, image: &[u8]) {
        self.data.copy_from_slice(image);
        self.protect = [0; 4];
    }

    pub fn peek(&self, entry: usize) -> u32 {
        let off = entry * self.geometry.slot;
        let mut b = [0u8; 4];
        let n = self.geometry.slot.min(4);
        b[..n].copy_from_slice(&self.data[off..off + n]);
        u32::from_le_bytes(b)
    }

    fn store(&mut self, entry: usize, value: u32) {
        let off = entry * self.geometry.slot;
        let n = self.geometry.slot.min(4);
        self.data[off..off + n].copy_from_slice(&value.to_le_bytes()[..n]);
    }

    pub fn is_protected(&self, entry: usize) -> bool {
        self.protection_enabled && entry < 256 && self.protect[entry / 64] >> (entry % 64) & 1 == 1
    }

    fn set_bit(&mut self, entry: usize, on: bool) {
        if !self.protection_enabled || entry >= 256 {
            return;
        }
        let mask = 1u64 << (entry % 64);
        if on {
            self.protect[entry / 64] |= mask;
        } else {
            self.protect[entry / 64] &= !mask;
        }
    }

    pub fn can_read(&self) -> bool {
        self.reads.len() < self.depth
    }

    pub fn can_write(&self) -> bool {
        self.writes.len() < self.depth
    }

    /// Queues a request. Fails only on a structural fault; a full FIFO is the
    /// caller's backpressure to check with `can_read`/`can_write` first.
    pub fn push(&mut self, req: Request) -> Result<()> {
        if req.entry >= self.geometry.entries() {
            return Err(Error::SimFault(format!(
                "entry {} outside {} bank ({} entries)",
                req.entry,
                self.id.name(),
                self.geometry.entries()
            )));
        }
        match req.access {
            Access::Write(_) => {
                if self.id == BankId::Weight && self.running {
                    return Err(Error::SimFault("write to the weight bank outside programming mode".into()));
                }
                assert!(self.can_write(), "write FIFO overflow");
                self.writes.push_back(req);
            }
            _ => {
                assert!(self.can_read(), "read FIFO overflow");
                self.reads.push_back(req);
            }
        }
        Ok(())
    }

    /// Services at most one request.
    pub fn step(&mut self, now: u64) -> Serviced {
        let read_ready = self.reads.front().map(|r| !self.is_protected(r.entry));
        let write_ready = !self.writes.is_empty();
        let take_write = write_ready && (read_ready != Some(true) || !self.last_was_write);
        if take_write {
            let req = self.writes.pop_front().unwrap();
            let Access::Write(v) = req.access else { unreachable!() };
            self.store(req.entry, v);
            self.set_bit(req.entry, false);
            self.last_was_write = true;
            return Serviced::Write(req.class, self.geometry.width);
        }
        match read_ready {
            Some(true) => {
                let req = self.reads.pop_front().unwrap();
                if req.access == Access::ReadIntent {
                    self.set_bit(req.entry, true);
                }
                let value = self.peek(req.entry);
                self.responses.push_back((
                    now + self.latency,
                    Response {
                        entry: req.entry,
                        value,
                        class: req.class,
                    },
                ));
                self.last_was_write = false;
                Serviced::Read(req.class, self.geometry.width)
            }
            Some(false) => Serviced::Stalled,
            None => Serviced::Idle,
        }
    }

    /// Head response, if its latency has elapsed by `now`.
    pub fn response(&self, now: u64) -> Option<&Response> {
        match self.responses.front() {
            Some((ready, r)) if *ready <= now => Some(r),
            _ => None,
        }
    }

    pub fn pop_response(&mut self) -> Response {
        self.responses.pop_front().expect("pop_response after response()").1
    }

    pub fn is_idle(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty() && self.responses.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc() -> Bank {
        Bank::new(
            BankId::Acc,
            BankGeometry { bytes: 1024, slot: 4, width: 2, protected: true },
            16,
            1,
        )
    }

    fn read(entry: usize, intent: bool) -> Request {
        Request {
            entry,
            access: if intent { Access::ReadIntent } else { Access::Read },
            class: Class::Other,
        }
    }

    fn write(entry: usize, v: u32) -> Request {
        Request { entry, access: Access::Write(v), class: Class::Other }
    }

    fn drain(b: &mut Bank, now: &mut u64) -> Vec<Serviced> {
        let mut log = Vec::new();
        while !b.reads.is_empty() || !b.writes.is_empty() {
            log.push(b.step(*now));
            *now += 1;
        }
        log
    }

    #[test]
    fn read_after_intent_waits_for_the_write() {
        let mut b = acc();
        b.store(5, 3);
        let mut now = 0;
        b.push(read(5, true)).unwrap();
        b.push(read(5, false)).unwrap();
        assert!(matches!(b.step(now), Serviced::Read(..)));
        now += 1;
        assert_eq!(b.step(now), Serviced::Stalled);
        now += 1;
        let old = b.response(now).unwrap().value;
        b.pop_response();
        assert_eq!(old, 3);
        b.push(write(5, 9)).unwrap();
        drain(&mut b, &mut now);
        assert_eq!(b.pop_response().value, 9);
    }

    #[test]
    fn plain_reads_do_not_stall() {
        let mut b = acc();
        b.store(5, 4);
        let mut now = 0;
        b.push(read(5, false)).unwrap();
        b.push(read(5, false)).unwrap();
        assert!(drain(&mut b, &mut now).iter().all(|s| matches!(s, Serviced::Read(..))));
        assert_eq!(b.pop_response().value, 4);
        assert_eq!(b.pop_response().value, 4);
    }

    #[test]
    fn alternates_writes_first() {
        let mut b = acc();
        let mut now = 0;
        b.push(read(1, false)).unwrap();
        b.push(read(2, false)).unwrap();
        b.push(write(3, 0)).unwrap();
        b.push(write(4, 0)).unwrap();
        let kinds: Vec<char> = drain(&mut b, &mut now)
            .iter()
            .map(|s| match s {
                Serviced::Write(..) => 'W',
                Serviced::Read(..) => 'R',
                _ => '-',
            })
            .collect();
        assert_eq!(kinds, vec!['W', 'R', 'W', 'R']);
    }

    #[test]
    fn weight_bank_is_read_only_at_run_time() {
        let mut w = Bank::new(
            BankId::Weight,
            BankGeometry { bytes: 40960, slot: 1, width: 1, protected: false },
            16,
            1,
        );
        w.program_byte(100, 7).unwrap();
        w.start();
        assert!(w.push(write(100, 1)).is_err());
        assert!(w.program_byte(100, 1).is_err());
        assert_eq!(w.peek(100), 7);
    }
}
