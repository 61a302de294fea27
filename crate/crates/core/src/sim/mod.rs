//! Functional model of the YOSO accelerator.
//!
//! A grid of processing elements talks over a contention-free x-y mesh.
//! Each PE owns four single-port SRAM banks (accumulated weights, neuron
//! potentials, weights, spike addresses) and a load/compute/store core that
//! turns incoming spikes into `P` weight/accumulator accesses and incoming
//! end-of-timestep packets into potential updates and outgoing spikes.
//! Every bank access is counted to the byte.

mod counters;
pub mod hazard;
mod mapping;
mod noc;
mod packet;
mod pe;
mod sram;
mod system;

pub use counters::{AccessCounters, BankTotals, CounterReport, EnergyCosts, PeCounters, PeReport};
pub use mapping::{map_network, pe_coord, pes_for_layer, LayerPlacement, PePlacement, Placement, ProgramImage};
pub use noc::{hop_count, route, Noc, SourceId, HOST_SOURCE};
pub use packet::{Coord, Packet, Payload, ProgTarget, SpikeType, EOT_FINAL};
pub use pe::{pack_neuron, reg, saturating_add, unpack_neuron, Pe, Registers};
pub use sram::{Access, Bank, BankGeometry, BankId, Class, Request, Response, Serviced};
pub use system::{HwRun, System};

use serde::{Deserialize, Serialize};

/// Bytes moved per access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessWidths {
    pub weight: usize,
    pub accumulated: usize,
    pub potential: usize,
    pub spike_word: usize,
}

impl Default for AccessWidths {
    fn default() -> Self {
        Self {
            weight: 1,
            accumulated: 2,
            potential: 2,
            spike_word: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwConfig {
    pub grid_w: u8,
    pub grid_h: u8,
    pub acc_bytes: usize,
    pub neuron_bytes: usize,
    pub weight_bytes: usize,
    pub spike_addr_bytes: usize,
    pub widths: AccessWidths,
    pub fifo_depth: usize,
    pub hop_latency: u64,
    pub access_latency: u64,
    /// Cycles without progress before a run is declared deadlocked.
    pub deadlock_cycles: u64,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self {
            grid_w: 6,
            grid_h: 7,
            acc_bytes: 1024,
            neuron_bytes: 1024,
            weight_bytes: 40 * 1024,
            spike_addr_bytes: 2048,
            widths: AccessWidths::default(),
            fifo_depth: 16,
            hop_latency: 1,
            access_latency: 1,
            deadlock_cycles: 100_000,
        }
    }
}

impl HwConfig {
    pub fn geometry(&self, id: BankId) -> BankGeometry {
        match id {
            BankId::Acc => BankGeometry { bytes: self.acc_bytes, slot: 4, width: self.widths.accumulated, protected: true },
            BankId::Neuron => BankGeometry { bytes: self.neuron_bytes, slot: 4, width: self.widths.potential, protected: true },
            BankId::Weight => BankGeometry { bytes: self.weight_bytes, slot: 1, width: self.widths.weight, protected: false },
            BankId::SpikeAddr => BankGeometry { bytes: self.spike_addr_bytes, slot: 8, width: self.widths.spike_word, protected: true },
        }
    }

    /// Neurons one PE can hold: limited by the smallest per-neuron bank.
    pub fn max_neurons(&self) -> usize {
        [BankId::Acc, BankId::Neuron, BankId::SpikeAddr]
            .iter()
            .map(|&b| self.geometry(b).entries())
            .min()
            .unwrap()
    }
}
