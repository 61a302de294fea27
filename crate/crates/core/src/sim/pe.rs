//! One processing element: router interface, register file, memory
//! interface (four banks) and a decoupled load/compute/store core.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::counters::PeCounters;
use super::noc::{Noc, SourceId};
use super::packet::{Coord, Packet, Payload, ProgTarget, SpikeType};
use super::sram::{Access, Bank, BankId, Class, Request};
use super::HwConfig;
use crate::error::{Error, Result};

/// `a + b`, clamped to the 16-bit range.
pub fn saturating_add(a: i16, b: i16) -> i16 {
    a.saturating_add(b)
}

/// Byte layout of the register file written by `ProgWrite` packets.
pub mod reg {
    pub const P: usize = 0;
    pub const M: usize = 2;
    pub const NEURONS: usize = 4;
    pub const THETA: usize = 6;
    pub const OUT_DEST: usize = 8;
    pub const FWD_DEST: usize = 9;
    pub const FLAGS: usize = 10;
    pub const EXPECTED_EOTS: usize = 11;
    pub const SIZE: usize = 16;

    pub const FLAG_OUT: u8 = 1;
    pub const FLAG_FWD: u8 = 2;
    pub const FLAG_SOFTMAX: u8 = 4;
}

/// Decoded register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Registers {
    pub p: u16,
    pub m: u16,
    pub neurons: u16,
    pub theta: i16,
    pub out_dest: Option<Coord>,
    pub fwd_dest: Option<Coord>,
    pub softmax: bool,
    pub expected_eots: u8,
}

impl Registers {
    pub fn to_bytes(&self) -> [u8; reg::SIZE] {
        let mut b = [0u8; reg::SIZE];
        b[reg::P..reg::P + 2].copy_from_slice(&self.p.to_le_bytes());
        b[reg::M..reg::M + 2].copy_from_slice(&self.m.to_le_bytes());
        b[reg::NEURONS..reg::NEURONS + 2].copy_from_slice(&self.neurons.to_le_bytes());
        b[reg::THETA..reg::THETA + 2].copy_from_slice(&self.theta.to_le_bytes());
        b[reg::OUT_DEST] = self.out_dest.map_or(0, Coord::to_byte);
        b[reg::FWD_DEST] = self.fwd_dest.map_or(0, Coord::to_byte);
        b[reg::FLAGS] = (self.out_dest.is_some() as u8 * reg::FLAG_OUT)
            | (self.fwd_dest.is_some() as u8 * reg::FLAG_FWD)
            | (self.softmax as u8 * reg::FLAG_SOFTMAX);
        b[reg::EXPECTED_EOTS] = self.expected_eots;
        b
    }

    pub fn from_bytes(b: &[u8; reg::SIZE]) -> Self {
        let u16_at = |o: usize| u16::from_le_bytes([b[o], b[o + 1]]);
        let flags = b[reg::FLAGS];
        Self {
            p: u16_at(reg::P),
            m: u16_at(reg::M),
            neurons: u16_at(reg::NEURONS),
            theta: u16_at(reg::THETA) as i16,
            out_dest: (flags & reg::FLAG_OUT != 0).then(|| Coord::from_byte(b[reg::OUT_DEST])),
            fwd_dest: (flags & reg::FLAG_FWD != 0).then(|| Coord::from_byte(b[reg::FWD_DEST])),
            softmax: flags & reg::FLAG_SOFTMAX != 0,
            expected_eots: b[reg::EXPECTED_EOTS],
        }
    }
}

/// Neuron bank slot: potential in bytes 0..2, spiked flag in byte 2.
pub fn pack_neuron(v: i16, spiked: bool) -> u32 {
    v as u16 as u32 | (spiked as u32) << 16
}

pub fn unpack_neuron(word: u32) -> (i16, bool) {
    (word as u16 as i16, word >> 16 & 1 == 1)
}

#[derive(Debug, Clone, Copy)]
enum LoadJob {
    Spike { base: usize, k: usize },
    Eot { k: usize, last: bool },
}

#[derive(Debug, Clone, Copy)]
enum ComputeOp {
    Spike { k: usize },
    Eot { k: usize },
    EotEnd { last: bool },
}

#[derive(Debug, Clone, Copy)]
enum StoreOp {
    Acc { k: usize, value: i16 },
    Neuron { k: usize, value: i16, spiked: bool, fire: bool },
    EotEnd { last: bool, pick: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct Pe {
    pub index: SourceId,
    pub coord: Coord,
    pub banks: [Bank; 4],
    regs_raw: [u8; reg::SIZE],
    pub regs: Registers,
    softmax_range: (u8, u8),
    running: bool,
    inbox: VecDeque<Payload>,
    load: Option<LoadJob>,
    eots_seen: u8,
    compute: VecDeque<ComputeOp>,
    store: VecDeque<StoreOp>,
    /// Lookups issued to the spike-address bank and not yet answered.
    lookups: usize,
    best: Option<(usize, i16)>,
    pub counters: PeCounters,
    /// Spikes emitted since the last `take_emitted`.
    emitted: Vec<usize>,
}

impl Pe {
    pub fn new(index: SourceId, coord: Coord, hw: &HwConfig) -> Self {
        let bank = |id: BankId| Bank::new(id, hw.geometry(id), hw.fifo_depth, hw.access_latency);
        Self {
            index,
            coord,
            banks: BankId::ALL.map(bank),
            regs_raw: [0; reg::SIZE],
            regs: Registers::default(),
            softmax_range: (0, 0),
            running: false,
            inbox: VecDeque::new(),
            load: None,
            eots_seen: 0,
            compute: VecDeque::new(),
            store: VecDeque::new(),
            lookups: 0,
            best: None,
            counters: PeCounters::default(),
            emitted: Vec::new(),
        }
    }

    pub fn bank(&self, id: BankId) -> &Bank {
        &self.banks[id as usize]
    }

    pub fn bank_mut(&mut self, id: BankId) -> &mut Bank {
        &mut self.banks[id as usize]
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn softmax_range(&self) -> (u8, u8) {
        self.softmax_range
    }

    /// Router interface: accepts a packet addressed to this PE. Spikes and
    /// EOTs are relayed to the forwarding destination on arrival.
    pub fn receive(&mut self, now: u64, payload: Payload, noc: &mut Noc) -> Result<()> {
        match payload.kind {
            SpikeType::DataSpike | SpikeType::Eot => {
                if !self.running {
                    return Err(Error::SimFault(format!(
                        "{:?} delivered to unprogrammed PE {}",
                        payload.kind, self.coord
                    )));
                }
                if let Some(fwd) = self.regs.fwd_dest {
                    noc.send(now, self.coord, self.index, Packet { dest: fwd, payload });
                    self.counters.forwarded += 1;
                }
                self.inbox.push_back(payload);
            }
            SpikeType::ProgWrite => {
                if self.running {
                    return Err(Error::SimFault(format!("programming write to PE {} after commit", self.coord)));
                }
                let (target, addr, data) = payload.prog_fields()?;
                match target {
                    ProgTarget::Bank(id) => self.bank_mut(id).program_byte(addr, data)?,
                    ProgTarget::Registers => {
                        let slot = self.regs_raw.get_mut(addr).ok_or_else(|| {
                            Error::SimFault(format!("register address {addr} out of range"))
                        })?;
                        *slot = data;
                    }
                }
                self.counters.program_write_bytes += 1;
            }
            SpikeType::SoftmaxFirst | SpikeType::SoftmaxLast => {
                if self.running {
                    return Err(Error::SimFault(format!("softmax marker to PE {} after commit", self.coord)));
                }
                if payload.kind == SpikeType::SoftmaxFirst {
                    self.softmax_range.0 = payload.neuron_addr;
                } else {
                    self.softmax_range.1 = payload.neuron_addr;
                }
            }
            SpikeType::ProgCommit => {
                if self.running {
                    return Err(Error::SimFault(format!("second commit to PE {}", self.coord)));
                }
                self.regs = Registers::from_bytes(&self.regs_raw);
                self.validate_registers()?;
                self.running = true;
                for b in &mut self.banks {
                    b.start();
                }
            }
        }
        Ok(())
    }

    fn validate_registers(&self) -> Result<()> {
        let r = &self.regs;
        let lim = |id: BankId| self.bank(id).geometry.entries();
        if r.p as usize > lim(BankId::Acc) || r.neurons as usize > lim(BankId::Neuron).min(lim(BankId::SpikeAddr)) {
            return Err(Error::SimFault(format!("PE {}: P or neuron count exceeds the banks", self.coord)));
        }
        if r.softmax && (self.softmax_range.0 > self.softmax_range.1 || self.softmax_range.1 as u16 >= r.neurons.max(1)) {
            return Err(Error::SimFault(format!("PE {}: softmax range outside the mapped neurons", self.coord)));
        }
        Ok(())
    }

    pub fn is_idle(&self) -> bool {
        self.inbox.is_empty()
            && self.load.is_none()
            && self.compute.is_empty()
            && self.store.is_empty()
            && self.lookups == 0
            && self.banks.iter().all(Bank::is_idle)
    }

    pub fn take_emitted(&mut self) -> std::vec::Drain<'_, usize> {
        self.emitted.drain(..)
    }

    /// Advances one cycle. Returns whether anything moved.
    pub fn step(&mut self, now: u64, noc: &mut Noc) -> Result<bool> {
        let mut progress = self.step_emit(now, noc);
        progress |= self.step_store(now, noc)?;
        progress |= self.step_compute(now);
        for i in 0..4 {
            let s = self.banks[i].step(now);
            progress |= self.counters.record(BankId::ALL[i], s);
        }
        progress |= self.step_load()?;
        Ok(progress)
    }

    /// Spike-address responses leave as packets; an EOT follows once every
    /// lookup of the timestep has been answered.
    fn step_emit(&mut self, now: u64, noc: &mut Noc) -> bool {
        let mut progress = false;
        if self.bank(BankId::SpikeAddr).response(now).is_some() {
            let r = self.bank_mut(BankId::SpikeAddr).pop_response();
            self.lookups -= 1;
            let payload = Payload::decode(r.value).unwrap_or(Payload::data_spike(0));
            if let Some(dest) = self.regs.out_dest {
                noc.send(now, self.coord, self.index, Packet { dest, payload });
            }
            self.counters.spikes_emitted += 1;
            self.emitted.push(r.entry);
            progress = true;
        }
        progress
    }

    fn step_store(&mut self, now: u64, noc: &mut Noc) -> Result<bool> {
        let Some(&op) = self.store.front() else { return Ok(false) };
        match op {
            StoreOp::Acc { k, value } => {
                if !self.bank(BankId::Acc).can_write() {
                    self.counters.backpressure_stalls += 1;
                    return Ok(false);
                }
                self.bank_mut(BankId::Acc).push(Request {
                    entry: k,
                    access: Access::Write(value as u16 as u32),
                    class: Class::Spike,
                })?;
            }
            StoreOp::Neuron { k, value, spiked, fire } => {
                if !self.bank(BankId::Neuron).can_write() || (fire && !self.bank(BankId::SpikeAddr).can_read()) {
                    self.counters.backpressure_stalls += 1;
                    return Ok(false);
                }
                self.bank_mut(BankId::Neuron).push(Request {
                    entry: k,
                    access: Access::Write(pack_neuron(value, spiked)),
                    class: Class::Eot,
                })?;
                if fire {
                    self.lookup(k)?;
                }
            }
            StoreOp::EotEnd { last, pick } => {
                if let Some(k) = pick {
                    if !self.bank(BankId::SpikeAddr).can_read() {
                        return Ok(false);
                    }
                    self.lookup(k)?;
                    self.store.pop_front();
                    self.store.push_front(StoreOp::EotEnd { last, pick: None });
                    return Ok(true);
                }
                if self.lookups > 0 {
                    return Ok(false);
                }
                if let Some(dest) = self.regs.out_dest {
                    noc.send(now, self.coord, self.index, Packet { dest, payload: Payload::eot(last) });
                }
                self.counters.eots_emitted += 1;
            }
        }
        self.store.pop_front();
        Ok(true)
    }

    fn lookup(&mut self, k: usize) -> Result<()> {
        self.lookups += 1;
        self.bank_mut(BankId::SpikeAddr).push(Request {
            entry: k,
            access: Access::Read,
            class: Class::Lookup,
        })
    }

    fn step_compute(&mut self, now: u64) -> bool {
        let Some(&op) = self.compute.front() else { return false };
        if self.store.len() >= 2 * self.banks[0].geometry.entries() {
            return false;
        }
        match op {
            ComputeOp::Spike { k } => {
                if self.bank(BankId::Weight).response(now).is_none() || self.bank(BankId::Acc).response(now).is_none() {
                    return false;
                }
                let w = self.bank_mut(BankId::Weight).pop_response().value as u8 as i8 as i16;
                let a = self.bank_mut(BankId::Acc).pop_response().value as u16 as i16;
                let (value, clipped) = match a.checked_add(w) {
                    Some(v) => (v, false),
                    None => (saturating_add(a, w), true),
                };
                self.counters.saturations += clipped as u64;
                self.store.push_back(StoreOp::Acc { k, value });
            }
            ComputeOp::Eot { k } => {
                if self.bank(BankId::Acc).response(now).is_none() || self.bank(BankId::Neuron).response(now).is_none() {
                    return false;
                }
                let a = self.bank_mut(BankId::Acc).pop_response().value as u16 as i16;
                let (v, spiked) = unpack_neuron(self.bank_mut(BankId::Neuron).pop_response().value);
                let (value, clipped) = match v.checked_add(a) {
                    Some(x) => (x, false),
                    None => (saturating_add(v, a), true),
                };
                self.counters.saturations += clipped as u64;
                let fire = !self.regs.softmax && !spiked && value >= self.regs.theta;
                if self.regs.softmax {
                    let (lo, hi) = self.softmax_range;
                    if (lo as usize..=hi as usize).contains(&k) && self.best.map_or(true, |(_, b)| value > b) {
                        self.best = Some((k, value));
                    }
                }
                self.store.push_back(StoreOp::Neuron {
                    k,
                    value,
                    spiked: spiked || fire,
                    fire,
                });
            }
            ComputeOp::EotEnd { last } => {
                let best = self.best.take();
                let pick = if self.regs.softmax && last { best.map(|b| b.0) } else { None };
                self.store.push_back(StoreOp::EotEnd { last, pick });
            }
        }
        self.compute.pop_front();
        true
    }

    /// Load module: one access pair per cycle while active; picks up the next
    /// inbox packet when idle.
    fn step_load(&mut self) -> Result<bool> {
        let Some(job) = self.load else {
            let Some(p) = self.inbox.pop_front() else { return Ok(false) };
            match p.kind {
                SpikeType::DataSpike => {
                    let base = if p.base_addr != 0 {
                        p.base_addr as usize
                    } else {
                        p.source_index() * self.regs.p as usize * self.regs.m as usize
                    };
                    self.counters.spikes_processed += 1;
                    if self.regs.p > 0 {
                        self.load = Some(LoadJob::Spike { base, k: 0 });
                    }
                }
                SpikeType::Eot => {
                    self.eots_seen += 1;
                    if self.eots_seen >= self.regs.expected_eots.max(1) {
                        self.eots_seen = 0;
                        self.counters.eots_processed += 1;
                        self.load = Some(LoadJob::Eot { k: 0, last: p.is_final_eot() });
                    }
                }
                _ => unreachable!("only spikes and EOTs reach the inbox"),
            }
            return Ok(true);
        };
        match job {
            LoadJob::Spike { base, k } => {
                if !self.bank(BankId::Weight).can_read() || !self.bank(BankId::Acc).can_read() {
                    self.counters.backpressure_stalls += 1;
                    return Ok(false);
                }
                let addr = base + k * self.regs.m as usize;
                self.bank_mut(BankId::Weight).push(Request { entry: addr, access: Access::Read, class: Class::Spike })?;
                self.bank_mut(BankId::Acc).push(Request { entry: k, access: Access::ReadIntent, class: Class::Spike })?;
                self.compute.push_back(ComputeOp::Spike { k });
                self.load = (k + 1 < self.regs.p as usize).then_some(LoadJob::Spike { base, k: k + 1 });
            }
            LoadJob::Eot { k, last } => {
                if k >= self.regs.neurons as usize {
                    self.compute.push_back(ComputeOp::EotEnd { last });
                    self.load = None;
                    return Ok(true);
                }
                if !self.bank(BankId::Acc).can_read() || !self.bank(BankId::Neuron).can_read() {
                    self.counters.backpressure_stalls += 1;
                    return Ok(false);
                }
                self.bank_mut(BankId::Acc).push(Request { entry: k, access: Access::Read, class: Class::Eot })?;
                self.bank_mut(BankId::Neuron).push(Request { entry: k, access: Access::ReadIntent, class: Class::Eot })?;
                self.compute.push_back(ComputeOp::Eot { k });
                self.load = Some(LoadJob::Eot { k: k + 1, last });
            }
        }
        Ok(true)
    }
}
