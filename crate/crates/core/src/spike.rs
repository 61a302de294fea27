//! First-spike time vectors shared by every simulator.

use serde::{Deserialize, Serialize};

/// One optional first-spike time per neuron.
///
/// `None` means the neuron never fired during the inference. A neuron can
/// hold at most one time, which is the whole point of TTFS coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTimes<T> {
    times: Vec<Option<T>>,
}

/// Continuous-time spike vector.
pub type SpikeTimeVector = SpikeTimes<f64>;
/// Discrete-tick spike vector.
pub type SpikeTickVector = SpikeTimes<u32>;

impl<T: Copy> SpikeTimes<T> {
    pub fn silent(len: usize) -> Self {
        Self {
            times: vec![None; len],
        }
    }

    pub fn from_vec(times: Vec<Option<T>>) -> Self {
        Self { times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<T> {
        self.times[idx]
    }

    /// Records a spike. Returns `false` (and leaves the vector unchanged) if
    /// the neuron already fired.
    pub fn record(&mut self, idx: usize, t: T) -> bool {
        if self.times[idx].is_some() {
            return false;
        }
        self.times[idx] = Some(t);
        true
    }

    pub fn as_slice(&self) -> &[Option<T>] {
        &self.times
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().filter(|t| t.is_some()).count()
    }

    /// `(neuron, time)` pairs of the neurons that fired, in index order.
    pub fn spikes(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.times
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
    }
}

impl SpikeTimes<f64> {
    /// Spikes sorted by ascending time, ties by ascending index.
    pub fn sorted_events(&self) -> Vec<(usize, f64)> {
        let mut ev: Vec<(usize, f64)> = self.spikes().collect();
        ev.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        ev
    }
}

impl SpikeTimes<u32> {
    /// Converts ticks to continuous time given the tick rate.
    pub fn to_time(&self, ticks_per_unit: f64) -> SpikeTimeVector {
        SpikeTimes::from_vec(
            self.times
                .iter()
                .map(|t| t.map(|t| t as f64 / ticks_per_unit))
                .collect(),
        )
    }
}
