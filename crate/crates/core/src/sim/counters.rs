//! Byte-accurate SRAM access accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sram::{BankId, Class, Serviced};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PeCounters {
    /// Indexed by `BankId`.
    pub bank_read_bytes: [u64; 4],
    pub bank_write_bytes: [u64; 4],
    pub spike_read_bytes: u64,
    pub spike_write_bytes: u64,
    pub eot_read_bytes: u64,
    pub eot_write_bytes: u64,
    /// Spike-address reads made while emitting spikes.
    pub lookup_read_bytes: u64,
    pub program_write_bytes: u64,
    pub spikes_processed: u64,
    pub eots_processed: u64,
    pub spikes_emitted: u64,
    pub eots_emitted: u64,
    pub forwarded: u64,
    pub raw_stalls: u64,
    pub backpressure_stalls: u64,
    pub saturations: u64,
}

impl PeCounters {
    /// Accounts one bank cycle; returns whether the bank did work.
    pub fn record(&mut self, bank: BankId, s: Serviced) -> bool {
        match s {
            Serviced::Idle => false,
            Serviced::Stalled => {
                self.raw_stalls += 1;
                false
            }
            Serviced::Read(class, n) => {
                let n = n as u64;
                self.bank_read_bytes[bank as usize] += n;
                match class {
                    Class::Spike => self.spike_read_bytes += n,
                    Class::Eot => self.eot_read_bytes += n,
                    Class::Lookup => self.lookup_read_bytes += n,
                    Class::Other => {}
                }
                true
            }
            Serviced::Write(class, n) => {
                let n = n as u64;
                self.bank_write_bytes[bank as usize] += n;
                match class {
                    Class::Spike => self.spike_write_bytes += n,
                    Class::Eot => self.eot_write_bytes += n,
                    Class::Lookup | Class::Other => {}
                }
                true
            }
        }
    }

    pub fn add(&mut self, o: &PeCounters) {
        for i in 0..4 {
            self.bank_read_bytes[i] += o.bank_read_bytes[i];
            self.bank_write_bytes[i] += o.bank_write_bytes[i];
        }
        self.spike_read_bytes += o.spike_read_bytes;
        self.spike_write_bytes += o.spike_write_bytes;
        self.eot_read_bytes += o.eot_read_bytes;
        self.eot_write_bytes += o.eot_write_bytes;
        self.lookup_read_bytes += o.lookup_read_bytes;
        self.program_write_bytes += o.program_write_bytes;
        self.spikes_processed += o.spikes_processed;
        self.eots_processed += o.eots_processed;
        self.spikes_emitted += o.spikes_emitted;
        self.eots_emitted += o.eots_emitted;
        self.forwarded += o.forwarded;
        self.raw_stalls += o.raw_stalls;
        self.backpressure_stalls += o.backpressure_stalls;
        self.saturations += o.saturations;
    }

    pub fn per_spike(&self) -> (f64, f64) {
        ratio(self.spike_read_bytes, self.spike_write_bytes, self.spikes_processed)
    }

    pub fn per_eot(&self) -> (f64, f64) {
        ratio(self.eot_read_bytes, self.eot_write_bytes, self.eots_processed)
    }
}

fn ratio(r: u64, w: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        (0.0, 0.0)
    } else {
        (r as f64 / n as f64, w as f64 / n as f64)
    }
}

/// Counters of a whole run: one entry per PE plus the NoC totals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccessCounters {
    pub pes: Vec<PeCounters>,
    pub total_packets: u64,
    pub total_hops: u64,
    pub program_packets: u64,
    pub program_hops: u64,
    pub cycles: u64,
    pub ticks: u64,
}

impl AccessCounters {
    pub fn total(&self) -> PeCounters {
        let mut t = PeCounters::default();
        for p in &self.pes {
            t.add(p);
        }
        t
    }

    /// Adds another run's counters (same PE layout).
    pub fn accumulate(&mut self, o: &AccessCounters) {
        if self.pes.is_empty() {
            self.pes = vec![PeCounters::default(); o.pes.len()];
        }
        for (a, b) in self.pes.iter_mut().zip(&o.pes) {
            a.add(b);
        }
        self.total_packets += o.total_packets;
        self.total_hops += o.total_hops;
        self.program_packets += o.program_packets;
        self.program_hops += o.program_hops;
        self.cycles += o.cycles;
        self.ticks += o.ticks;
    }

    pub fn report(&self, p_per_pe: &[u16], energy: Option<&EnergyCosts>) -> CounterReport {
        let t = self.total();
        let (sr, sw) = t.per_spike();
        let (er, ew) = t.per_eot();
        let banks = BankId::ALL
            .iter()
            .map(|&b| {
                (
                    b.name().to_string(),
                    BankTotals {
                        read_bytes: t.bank_read_bytes[b as usize],
                        write_bytes: t.bank_write_bytes[b as usize],
                    },
                )
            })
            .collect();
        let pes = self
            .pes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (sr, sw) = c.per_spike();
                let (er, ew) = c.per_eot();
                PeReport {
                    pe: i,
                    p: p_per_pe.get(i).copied().unwrap_or(0),
                    spikes_processed: c.spikes_processed,
                    eots_processed: c.eots_processed,
                    per_spike_read_bytes: sr,
                    per_spike_write_bytes: sw,
                    per_eot_read_bytes: er,
                    per_eot_write_bytes: ew,
                }
            })
            .collect();
        let energy_uj = energy.map(|e| e.estimate_uj(self, &t));
        CounterReport {
            per_spike_read_bytes: sr,
            per_spike_write_bytes: sw,
            per_eot_read_bytes: er,
            per_eot_write_bytes: ew,
            total_packets: self.total_packets,
            total_hops: self.total_hops,
            banks,
            spike_addr_lookup_read_bytes: t.lookup_read_bytes,
            spikes_processed: t.spikes_processed,
            eots_processed: t.eots_processed,
            raw_stalls: t.raw_stalls,
            backpressure_stalls: t.backpressure_stalls,
            saturations: t.saturations,
            cycles: self.cycles,
            ticks: self.ticks,
            pes,
            energy_model: energy.map(|_| "estimate from user-supplied per-event costs; not a measured figure".into()),
            energy_uj,
        }
    }
}

/// Per-event energy costs for the optional estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCosts {
    pub read_pj_per_byte: f64,
    pub write_pj_per_byte: f64,
    pub hop_pj: f64,
    pub packet_pj: f64,
}

impl EnergyCosts {
    fn estimate_uj(&self, c: &AccessCounters, t: &PeCounters) -> f64 {
        let reads: u64 = t.bank_read_bytes.iter().sum();
        let writes: u64 = t.bank_write_bytes.iter().sum();
        (reads as f64 * self.read_pj_per_byte
            + writes as f64 * self.write_pj_per_byte
            + c.total_hops as f64 * self.hop_pj
            + c.total_packets as f64 * self.packet_pj)
            * 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankTotals {
    pub read_bytes: u64,
    pub write_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub pe: usize,
    pub p: u16,
    pub spikes_processed: u64,
    pub eots_processed: u64,
    pub per_spike_read_bytes: f64,
    pub per_spike_write_bytes: f64,
    pub per_eot_read_bytes: f64,
    pub per_eot_write_bytes: f64,
}

/// JSON counter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterReport {
    pub per_spike_read_bytes: f64,
    pub per_spike_write_bytes: f64,
    pub per_eot_read_bytes: f64,
    pub per_eot_write_bytes: f64,
    pub total_packets: u64,
    pub total_hops: u64,
    pub banks: BTreeMap<String, BankTotals>,
    pub spike_addr_lookup_read_bytes: u64,
    pub spikes_processed: u64,
    pub eots_processed: u64,
    pub raw_stalls: u64,
    pub backpressure_stalls: u64,
    pub saturations: u64,
    pub cycles: u64,
    pub ticks: u64,
    pub pes: Vec<PeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_uj: Option<f64>,
}
