use crate::error::{Error, Result};
use crate::spike::{SpikeTimeVector, SpikeTimes};

/// Rate assigned to a spike at `t = 0`, where `1/t` is undefined.
pub const DEFAULT_RATE_CAP: f64 = 1e6;

/// `1/t` per neuron; silent neurons get rate 0, and rates are capped.
pub fn instantaneous_rates(times: &SpikeTimeVector, cap: f64) -> Vec<f64> {
    times
        .as_slice()
        .iter()
        .map(|t| match *t {
            None => 0.0,
            Some(t) if t <= 0.0 => cap,
            Some(t) => (1.0 / t).min(cap),
        })
        .collect()
}

/// Class of the earliest output spike; ties go to the lowest index.
pub fn decode_first_spike<T: Copy + PartialOrd>(out: &SpikeTimes<T>) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, t) in out.spikes() {
        match best {
            Some((_, bt)) if !(t < bt) => {}
            _ => best = Some((i, t)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoDecision)
}

/// Argmax of the output potentials (softmax is monotone, so the argmax of the
/// potentials is the argmax of the softmax). Ties go to the lowest index.
pub fn decode_softmax_membrane<T: Copy + PartialOrd>(potentials: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in potentials.iter().enumerate().skip(1) {
        if *v > potentials[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::SpikeTickVector;

    #[test]
    fn rates() {
        let t = SpikeTimeVector::from_vec(vec![Some(0.5), None, Some(0.0)]);
        assert_eq!(instantaneous_rates(&t, DEFAULT_RATE_CAP), vec![2.0, 0.0, 1e6]);
    }

    #[test]
    fn first_spike_decoding() {
        let t = SpikeTickVector::from_vec(vec![None, Some(3), Some(7)]);
        assert_eq!(decode_first_spike(&t).unwrap(), 1);
        let t = SpikeTickVector::from_vec(vec![Some(2), Some(2), Some(5)]);
        assert_eq!(decode_first_spike(&t).unwrap(), 0);
        let t = SpikeTickVector::silent(3);
        assert!(matches!(decode_first_spike(&t), Err(Error::NoDecision)));
    }

    #[test]
    fn membrane_decoding() {
        assert_eq!(decode_softmax_membrane(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(decode_softmax_membrane(&[-0.5, -0.1]), 1);
        assert_eq!(decode_softmax_membrane(&[0.4, 0.4]), 0);
        assert_eq!(decode_softmax_membrane(&[-5i16, 40, 12]), 1);
    }
}
