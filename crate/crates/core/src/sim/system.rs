//! The whole accelerator: PE grid, NoC and host port.

use super::counters::{AccessCounters, PeCounters};
use super::mapping::{pe_coord, ProgramImage};
use super::noc::{Noc, HOST_SOURCE};
use super::packet::{Coord, Packet, Payload, ProgTarget, SpikeType};
use super::pe::{unpack_neuron, Pe};
use super::sram::BankId;
use super::HwConfig;
use crate::error::{Error, Result};
use crate::spike::SpikeTickVector;

/// Result of one inference on the accelerator.
#[derive(Debug, Clone, PartialEq)]
pub struct HwRun {
    pub layer_spikes: Vec<SpikeTickVector>,
    pub final_potentials: Vec<i16>,
    pub ticks: u32,
    pub counters: AccessCounters,
}

impl HwRun {
    pub fn output_times(&self) -> &SpikeTickVector {
        self.layer_spikes.last().expect("at least one layer")
    }
}

pub struct System {
    hw: HwConfig,
    pes: Vec<Pe>,
    /// Grid slot of every coordinate, `None` for the host and unused slots.
    slot: [Option<usize>; 256],
    noc: Noc,
    image: Option<ProgramImage>,
    now: u64,
}

impl System {
    /// An unprogrammed grid.
    pub fn new(hw: HwConfig) -> Result<Self> {
        if hw.grid_w == 0 || hw.grid_h == 0 || hw.grid_w > 15 || hw.grid_h > 15 {
            return Err(Error::Mapping(format!(
                "grid {}x{} does not fit 4-bit coordinates with the host port reserved",
                hw.grid_w, hw.grid_h
            )));
        }
        let n = hw.grid_w as usize * hw.grid_h as usize;
        let mut slot = [None; 256];
        let pes = (0..n)
            .map(|i| {
                let c = pe_coord(i, hw.grid_w);
                slot[c.to_byte() as usize] = Some(i);
                Pe::new(i as u16, c, &hw)
            })
            .collect();
        Ok(Self {
            noc: Noc::new(hw.hop_latency),
            hw,
            pes,
            slot,
            image: None,
            now: 0,
        })
    }

    pub fn hw(&self) -> &HwConfig {
        &self.hw
    }

    pub fn pe(&self, c: Coord) -> Option<&Pe> {
        self.slot[c.to_byte() as usize].map(|i| &self.pes[i])
    }

    pub fn pe_mut(&mut self, c: Coord) -> Option<&mut Pe> {
        self.slot[c.to_byte() as usize].map(move |i| &mut self.pes[i])
    }

    /// Streams the image in as programming packets from the host and commits
    /// every placed PE. Returns `(packets, hops)` spent.
    pub fn program(&mut self, image: &ProgramImage) -> Result<(u64, u64)> {
        let pl = &image.placement;
        if pl.grid_w != self.hw.grid_w || pl.grid_h != self.hw.grid_h {
            return Err(Error::Mapping(format!(
                "placement targets a {}x{} grid, system is {}x{}",
                pl.grid_w, pl.grid_h, self.hw.grid_w, self.hw.grid_h
            )));
        }
        self.noc = Noc::new(self.hw.hop_latency);
        let mut t = 0;
        for (pe, banks) in pl.pes.iter().zip(&image.banks) {
            let target = self.pe(pe.coord).ok_or_else(|| Error::Mapping(format!("no PE at {}", pe.coord)))?;
            for id in BankId::ALL {
                let want = target.bank(id).geometry.bytes;
                if banks[id as usize].len() != want {
                    return Err(Error::Mapping(format!(
                        "{} image for PE {} is {} bytes, bank holds {want}",
                        id.name(),
                        pe.coord,
                        banks[id as usize].len()
                    )));
                }
            }
            let mut send = |payload: Payload| {
                self.noc.send(t, Coord::HOST, HOST_SOURCE, Packet { dest: pe.coord, payload });
            };
            for id in BankId::ALL {
                for (addr, &b) in banks[id as usize].iter().enumerate() {
                    if b != 0 {
                        send(Payload::prog_write(ProgTarget::Bank(id), addr, b));
                    }
                }
            }
            for (addr, &b) in pe.regs.to_bytes().iter().enumerate() {
                send(Payload::prog_write(ProgTarget::Registers, addr, b));
            }
            if pe.regs.softmax {
                send(Payload::softmax_marker(SpikeType::SoftmaxFirst, pe.softmax_range.0));
                send(Payload::softmax_marker(SpikeType::SoftmaxLast, pe.softmax_range.1));
            }
            send(Payload::prog_commit());
            t += 1;
        }
        while let Some(at) = self.noc.next_arrival() {
            while let Some(p) = self.noc.pop_due(at) {
                let i = self.slot[p.dest.to_byte() as usize].expect("programming targets placed PEs");
                self.pes[i].receive(at, p.payload, &mut self.noc)?;
            }
        }
        let spent = (self.noc.packets, self.noc.hops);
        self.image = Some(image.clone());
        Ok(spent)
    }

    /// Restores the accumulated and potential banks to their programmed
    /// contents and clears per-inference state.
    pub fn reset_state(&mut self) {
        let Some(img) = &self.image else { return };
        for (pe, banks) in img.placement.pes.iter().zip(&img.banks) {
            let i = self.slot[pe.coord.to_byte() as usize].unwrap();
            let target = &mut self.pes[i];
            target.bank_mut(BankId::Acc).restore(&banks[BankId::Acc as usize]);
            target.bank_mut(BankId::Neuron).restore(&banks[BankId::Neuron as usize]);
            target.counters = PeCounters::default();
        }
        self.noc = Noc::new(self.hw.hop_latency);
        self.now = 0;
    }

    /// Toggles RAW protection on every bank (for hazard demonstrations).
    pub fn set_protection(&mut self, on: bool) {
        for pe in &mut self.pes {
            for b in &mut pe.banks {
                b.set_protection(on);
            }
        }
    }

    /// Runs one inference. Each tick the host injects that tick's input
    /// spikes (ascending index, one per cycle) and an EOT, and the grid runs
    /// until it is quiescent before the next tick starts.
    pub fn run_inference(&mut self, input: &SpikeTickVector, t_total: u32, early_stop: bool) -> Result<HwRun> {
        let img = self.image.clone().ok_or_else(|| Error::SimFault("system is not programmed".into()))?;
        let pl = &img.placement;
        if input.len() != pl.input_len() {
            return Err(Error::Dimension(format!(
                "placement expects {} inputs, got {}",
                pl.input_len(),
                input.len()
            )));
        }
        self.reset_state();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); t_total as usize];
        for (i, t) in input.spikes() {
            if t < t_total {
                buckets[t as usize].push(i);
            }
        }
        let placed: Vec<usize> = pl.pes.iter().map(|p| self.slot[p.coord.to_byte() as usize].unwrap()).collect();
        let mut owner = vec![None; self.pes.len()];
        for (q, &i) in placed.iter().enumerate() {
            owner[i] = Some(q);
        }
        let mut layer_spikes: Vec<SpikeTickVector> =
            pl.layers.iter().map(|l| SpikeTickVector::silent(l.fan_out)).collect();
        let head = pl.head(0);
        let mut active = vec![false; self.pes.len()];
        let mut ticks = 0;
        for tick in 0..t_total {
            ticks = tick + 1;
            let mut t = self.now;
            for &i in &buckets[tick as usize] {
                self.noc.send(t, Coord::HOST, HOST_SOURCE, Packet { dest: head, payload: Payload::data_spike(i) });
                t += 1;
            }
            self.noc.send(t, Coord::HOST, HOST_SOURCE, Packet { dest: head, payload: Payload::eot(tick + 1 == t_total) });
            let mut output_fired = false;
            let mut idle_for = 0u64;
            loop {
                while let Some(p) = self.noc.pop_due(self.now) {
                    if p.dest.is_host() {
                        output_fired |= p.payload.kind == SpikeType::DataSpike;
                        continue;
                    }
                    let i = self.slot[p.dest.to_byte() as usize]
                        .ok_or_else(|| Error::SimFault(format!("packet to unpopulated coordinate {}", p.dest)))?;
                    self.pes[i].receive(self.now, p.payload, &mut self.noc)?;
                    active[i] = true;
                }
                let mut progress = false;
                let mut busy = false;
                for i in 0..self.pes.len() {
                    if !active[i] {
                        continue;
                    }
                    progress |= self.pes[i].step(self.now, &mut self.noc)?;
                    if let Some(q) = owner[i] {
                        let pe = &pl.pes[q];
                        for k in self.pes[i].take_emitted() {
                            layer_spikes[pe.layer].record(pe.first_neuron + k, tick);
                        }
                    }
                    active[i] = !self.pes[i].is_idle();
                    busy |= active[i];
                }
                if !busy {
                    match self.noc.next_arrival() {
                        Some(at) => self.now = at.max(self.now + 1),
                        None => {
                            self.now += 1;
                            break;
                        }
                    }
                    idle_for = 0;
                    continue;
                }
                idle_for = if progress { 0 } else { idle_for + 1 };
                if idle_for > self.hw.deadlock_cycles {
                    return Err(Error::SimFault(format!("no progress for {idle_for} cycles at tick {tick}")));
                }
                self.now += 1;
            }
            if early_stop && output_fired {
                break;
            }
        }
        let out = pl.layers.last().unwrap();
        let mut final_potentials = vec![0i16; out.fan_out];
        for &q in &out.pes {
            let pe = &pl.pes[q];
            let bank = self.pes[placed[q]].bank(BankId::Neuron);
            for (k, n) in pe.neurons().enumerate() {
                final_potentials[n] = unpack_neuron(bank.peek(k)).0;
            }
        }
        let counters = AccessCounters {
            pes: placed.iter().map(|&i| self.pes[i].counters).collect(),
            total_packets: self.noc.packets,
            total_hops: self.noc.hops,
            program_packets: 0,
            program_hops: 0,
            cycles: self.now,
            ticks: ticks as u64,
        };
        Ok(HwRun {
            layer_spikes,
            final_potentials,
            ticks,
            counters,
        })
    }
}
