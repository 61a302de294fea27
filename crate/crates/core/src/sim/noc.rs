//! Contention-free x-y mesh. Every hop costs a fixed latency, so delivery
//! order is fully determined by `(arrival cycle, destination, source, sequence)`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::packet::{Coord, Packet};

/// Routers visited after leaving `src`, x first then y. Empty for `src == dest`.
pub fn route(src: Coord, dest: Coord) -> Vec<Coord> {
    let mut hops = Vec::new();
    let (mut x, mut y) = (src.x, src.y);
    while x != dest.x {
        x = if dest.x > x { x + 1 } else { x - 1 };
        hops.push(Coord { x, y });
    }
    while y != dest.y {
        y = if dest.y > y { y + 1 } else { y - 1 };
        hops.push(Coord { x, y });
    }
    hops
}

pub fn hop_count(src: Coord, dest: Coord) -> u32 {
    (src.x.abs_diff(dest.x) + src.y.abs_diff(dest.y)) as u32
}

/// Sending endpoint, used for tie-breaking. The host sorts after every PE.
pub type SourceId = u16;
pub const HOST_SOURCE: SourceId = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct InFlight {
    arrival: u64,
    dest: u8,
    source: SourceId,
    seq: u64,
    raw: u64,
}

#[derive(Debug, Default)]
pub struct Noc {
    queue: BinaryHeap<Reverse<InFlight>>,
    seq: u64,
    hop_latency: u64,
    pub packets: u64,
    pub hops: u64,
}

impl Noc {
    pub fn new(hop_latency: u64) -> Self {
        Self {
            hop_latency,
            ..Self::default()
        }
    }

    /// Injects `packet` at cycle `now` from `from`. The host port sits on
    /// router (0, 0) and its link adds one cycle.
    pub fn send(&mut self, now: u64, from: Coord, source: SourceId, packet: Packet) {
        let origin = if from.is_host() { Coord { x: 0, y: 0 } } else { from };
        let target = if packet.dest.is_host() { Coord { x: 0, y: 0 } } else { packet.dest };
        let hops = hop_count(origin, target) as u64;
        let link = from.is_host() as u64 + packet.dest.is_host() as u64;
        let latency = (hops * self.hop_latency + link).max(1);
        self.packets += 1;
        self.hops += hops;
        self.seq += 1;
        self.queue.push(Reverse(InFlight {
            arrival: now + latency,
            dest: packet.dest.to_byte(),
            source,
            seq: self.seq,
            raw: packet.encode(),
        }));
    }

    pub fn next_arrival(&self) -> Option<u64> {
        self.queue.peek().map(|r| r.0.arrival)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Pops the next packet arriving at or before `now`.
    pub fn pop_due(&mut self, now: u64) -> Option<Packet> {
        match self.queue.peek() {
            Some(r) if r.0.arrival <= now => {
                let f = self.queue.pop().unwrap().0;
                Some(Packet::decode(f.raw).expect("packets are encoded by send"))
            }
            _ => None,
        }
    }

    pub fn clear(&mut self) {
        self.queue.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::packet::Payload;

    fn c(x: u8, y: u8) -> Coord {
        Coord::new(x, y)
    }

    #[test]
    fn xy_routes() {
        assert_eq!(route(c(1, 1), c(3, 2)), vec![c(2, 1), c(3, 1), c(3, 2)]);
        assert!(route(c(2, 5), c(2, 5)).is_empty());
        assert_eq!(route(c(3, 0), c(0, 0)), vec![c(2, 0), c(1, 0), c(0, 0)]);
        assert_eq!(route(c(0, 3), c(0, 1)), vec![c(0, 2), c(0, 1)]);
    }

    #[test]
    fn delivery_order_is_deterministic() {
        let mut noc = Noc::new(1);
        let p = |x, y| Packet { dest: c(x, y), payload: Payload::eot(false) };
        noc.send(0, c(0, 0), 1, p(2, 0));
        noc.send(0, c(1, 0), 0, p(2, 0));
        noc.send(0, c(0, 0), 0, p(1, 0));
        assert_eq!(noc.hops, 4);
        assert_eq!(noc.pop_due(0), None);
        assert_eq!(noc.pop_due(1).unwrap().dest, c(1, 0));
        assert_eq!(noc.pop_due(1).unwrap().dest, c(2, 0));
        assert_eq!(noc.pop_due(1), None);
        assert_eq!(noc.pop_due(2).unwrap().dest, c(2, 0));
        assert!(noc.is_empty());
    }
}
