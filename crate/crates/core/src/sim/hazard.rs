//! Read-after-write checking of a bank against a shadow memory.
//!
//! A stream is a program-ordered list of plain reads and read-modify-write
//! transactions. The driver issues them the way the core does: the write of
//! a transaction goes out only after its read-with-intent has answered,
//! possibly several cycles later. The shadow memory treats each transaction
//! as taking effect where its read-with-intent sits in program order, so
//! every read must return the shadow value current at its issue.

use std::collections::VecDeque;

use rand::Rng;

use super::sram::{Access, Bank, BankGeometry, BankId, Class, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamOp {
    Read { entry: usize },
    Rmw { entry: usize, delta: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub op: usize,
    pub entry: usize,
    pub expected: u32,
    pub got: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamStats {
    pub reads: u64,
    pub cycles: u64,
    pub stalls: u64,
}

/// Random stream over a handful of entries so that transactions collide.
pub fn random_stream<R: Rng>(rng: &mut R, len: usize, entries: usize) -> Vec<StreamOp> {
    (0..len)
        .map(|_| {
            let entry = rng.gen_range(0..entries);
            if rng.gen_bool(0.5) {
                StreamOp::Read { entry }
            } else {
                StreamOp::Rmw { entry, delta: rng.gen_range(1..1000) }
            }
        })
        .collect()
}

fn accumulator_bank(depth: usize) -> Bank {
    Bank::new(BankId::Acc, BankGeometry { bytes: 1024, slot: 4, width: 2, protected: true }, depth, 1)
}

/// Runs `ops` against a fresh accumulator bank. `write_delay` picks how many
/// cycles each write waits after its read answers.
pub fn run_stream(
    ops: &[StreamOp],
    protection: bool,
    depth: usize,
    mut write_delay: impl FnMut() -> u64,
) -> Result<StreamStats, Violation> {
    let mut bank = accumulator_bank(depth);
    bank.set_protection(protection);
    let mut shadow = vec![0u32; 256];
    // (op index, expected value, write-back delta for transactions)
    let mut outstanding: VecDeque<(usize, u32, Option<u16>)> = VecDeque::new();
    let mut writes: VecDeque<(u64, usize, u32)> = VecDeque::new();
    let mut next = 0;
    let mut stats = StreamStats::default();
    let mut now = 0u64;
    while next < ops.len() || !outstanding.is_empty() || !writes.is_empty() || !bank.is_idle() {
        if let Some(r) = bank.response(now).copied() {
            bank.pop_response();
            let (op, expected, delta) = outstanding.pop_front().expect("response without a request");
            stats.reads += 1;
            if r.value != expected {
                return Err(Violation { op, entry: r.entry, expected, got: r.value });
            }
            if let Some(d) = delta {
                writes.push_back((now + write_delay(), r.entry, (r.value as u16).wrapping_add(d) as u32));
            }
        }
        if let Some(&(due, entry, v)) = writes.front() {
            if due <= now && bank.can_write() {
                writes.pop_front();
                bank.push(Request { entry, access: Access::Write(v), class: Class::Other }).unwrap();
            }
        }
        if next < ops.len() && bank.can_read() {
            let (entry, access, delta) = match ops[next] {
                StreamOp::Read { entry } => (entry, Access::Read, None),
                StreamOp::Rmw { entry, delta } => (entry, Access::ReadIntent, Some(delta)),
            };
            let expected = shadow[entry];
            if let Some(d) = delta {
                shadow[entry] = (expected as u16).wrapping_add(d) as u32;
            }
            bank.push(Request { entry, access, class: Class::Other }).unwrap();
            outstanding.push_back((next, expected, delta));
            next += 1;
        }
        if bank.step(now) == super::sram::Serviced::Stalled {
            stats.stalls += 1;
        }
        now += 1;
        assert!(now < 1_000_000, "hazard stream did not drain");
    }
    stats.cycles = now;
    Ok(stats)
}

/// The stream `read_intent(5), read(5), write(5, old + 7)`: with protection
/// the plain read returns the written value, without it the stale one.
pub fn directed_stale_read(protection: bool) -> Result<StreamStats, Violation> {
    let ops = [StreamOp::Rmw { entry: 5, delta: 7 }, StreamOp::Read { entry: 5 }];
    run_stream(&ops, protection, 16, || 2)
}
