//! 40-bit NoC packets: 8 bits of destination coordinates followed by a
//! 32-bit payload `{type: 4, neuron_addr: 8, base_addr: 12, aux: 8}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid coordinate, 4 bits per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: u8,
    pub y: u8,
}

impl Coord {
    /// Reserved address of the host port, attached to router (0, 0).
    pub const HOST: Coord = Coord { x: 15, y: 15 };

    pub fn new(x: u8, y: u8) -> Self {
        assert!(x < 16 && y < 16, "coordinates are 4 bits wide");
        Self { x, y }
    }

    pub fn is_host(self) -> bool {
        self == Self::HOST
    }

    pub fn to_byte(self) -> u8 {
        (self.x << 4) | self.y
    }

    pub fn from_byte(b: u8) -> Self {
        Self { x: b >> 4, y: b & 0xF }
    }
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_host() {
            write!(f, "host")
        } else {
            write!(f, "({},{})", self.x, self.y)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SpikeType {
    DataSpike = 0,
    Eot = 1,
    ProgWrite = 2,
    ProgCommit = 3,
    SoftmaxFirst = 4,
    SoftmaxLast = 5,
}

impl SpikeType {
    pub fn from_bits(b: u8) -> Result<Self> {
        Ok(match b {
            0 => Self::DataSpike,
            1 => Self::Eot,
            2 => Self::ProgWrite,
            3 => Self::ProgCommit,
            4 => Self::SoftmaxFirst,
            5 => Self::SoftmaxLast,
            _ => return Err(Error::Format(format!("undefined spike type {b}"))),
        })
    }
}

/// `aux` bit marking the last timestep of an inference on EOT packets.
pub const EOT_FINAL: u8 = 1;

/// Target field of a `ProgWrite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgTarget {
    Bank(super::BankId),
    Registers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload {
    pub kind: SpikeType,
    pub neuron_addr: u8,
    /// 12 bits.
    pub base_addr: u16,
    pub aux: u8,
}

impl Payload {
    /// A spike from neuron `index` of the sending layer. The low byte goes in
    /// `neuron_addr`, the high byte in `aux`.
    pub fn data_spike(index: usize) -> Self {
        assert!(index < 1 << 16, "source index {index} does not fit 16 bits");
        Self {
            kind: SpikeType::DataSpike,
            neuron_addr: index as u8,
            base_addr: 0,
            aux: (index >> 8) as u8,
        }
    }

    pub fn eot(last: bool) -> Self {
        Self {
            kind: SpikeType::Eot,
            neuron_addr: 0,
            base_addr: 0,
            aux: if last { EOT_FINAL } else { 0 },
        }
    }

    /// Programming write: 3-bit target, 17-bit address, 8-bit data packed
    /// into the `neuron_addr`/`base_addr`/`aux` fields.
    pub fn prog_write(target: ProgTarget, addr: usize, data: u8) -> Self {
        assert!(addr < 1 << 17, "programming address {addr} does not fit 17 bits");
        let t = match target {
            ProgTarget::Bank(b) => b as u8,
            ProgTarget::Registers => 4,
        };
        Self {
            kind: SpikeType::ProgWrite,
            neuron_addr: (t << 5) | (addr >> 12) as u8,
            base_addr: (addr & 0xFFF) as u16,
            aux: data,
        }
    }

    pub fn prog_commit() -> Self {
        Self {
            kind: SpikeType::ProgCommit,
            neuron_addr: 0,
            base_addr: 0,
            aux: 0,
        }
    }

    pub fn softmax_marker(kind: SpikeType, local: u8) -> Self {
        debug_assert!(matches!(kind, SpikeType::SoftmaxFirst | SpikeType::SoftmaxLast));
        Self {
            kind,
            neuron_addr: local,
            base_addr: 0,
            aux: 0,
        }
    }

    pub fn source_index(&self) -> usize {
        ((self.aux as usize) << 8) | self.neuron_addr as usize
    }

    pub fn is_final_eot(&self) -> bool {
        self.aux & EOT_FINAL != 0
    }

    pub fn prog_fields(&self) -> Result<(ProgTarget, usize, u8)> {
        let target = match self.neuron_addr >> 5 {
            0 => ProgTarget::Bank(super::BankId::Acc),
            1 => ProgTarget::Bank(super::BankId::Neuron),
            2 => ProgTarget::Bank(super::BankId::Weight),
            3 => ProgTarget::Bank(super::BankId::SpikeAddr),
            4 => ProgTarget::Registers,
            t => return Err(Error::Format(format!("undefined programming target {t}"))),
        };
        let addr = (((self.neuron_addr & 0x1F) as usize) << 12) | self.base_addr as usize;
        Ok((target, addr, self.aux))
    }

    pub fn encode(&self) -> u32 {
        ((self.kind as u32) << 28)
            | ((self.neuron_addr as u32) << 20)
            | (((self.base_addr & 0xFFF) as u32) << 8)
            | self.aux as u32
    }

    pub fn decode(word: u32) -> Result<Self> {
        Ok(Self {
            kind: SpikeType::from_bits((word >> 28) as u8)?,
            neuron_addr: (word >> 20) as u8,
            base_addr: ((word >> 8) & 0xFFF) as u16,
            aux: word as u8,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packet {
    pub dest: Coord,
    pub payload: Payload,
}

impl Packet {
    pub const BITS: u32 = 40;

    pub fn encode(&self) -> u64 {
        ((self.dest.to_byte() as u64) << 32) | self.payload.encode() as u64
    }

    pub fn decode(raw: u64) -> Result<Self> {
        if raw >> Self::BITS != 0 {
            return Err(Error::Format(format!("packet {raw:#x} is wider than 40 bits")));
        }
        Ok(Self {
            dest: Coord::from_byte((raw >> 32) as u8),
            payload: Payload::decode(raw as u32)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::BankId;

    #[test]
    fn roundtrip_all_kinds() {
        let payloads = [
            Payload::data_spike(783),
            Payload::eot(true),
            Payload::eot(false),
            Payload::prog_write(ProgTarget::Bank(BankId::Weight), 40959, 0xAB),
            Payload::prog_write(ProgTarget::Registers, 7, 3),
            Payload::prog_commit(),
            Payload::softmax_marker(SpikeType::SoftmaxLast, 9),
        ];
        for p in payloads {
            let pkt = Packet { dest: Coord::new(5, 6), payload: p };
            let raw = pkt.encode();
            assert!(raw < 1 << 40);
            assert_eq!(Packet::decode(raw).unwrap(), pkt);
        }
    }

    #[test]
    fn spike_source_index_spans_two_fields() {
        let p = Payload::data_spike(0x1234);
        assert_eq!(p.neuron_addr, 0x34);
        assert_eq!(p.aux, 0x12);
        assert_eq!(p.source_index(), 0x1234);
    }

    #[test]
    fn prog_fields_roundtrip() {
        let p = Payload::prog_write(ProgTarget::Bank(BankId::SpikeAddr), 0x1_2345, 0x7F);
        assert_eq!(p.prog_fields().unwrap(), (ProgTarget::Bank(BankId::SpikeAddr), 0x1_2345, 0x7F));
    }

    #[test]
    fn undefined_type_is_rejected() {
        assert!(Payload::decode(0xF000_0000).is_err());
        assert!(Packet::decode(1 << 41).is_err());
    }
}
