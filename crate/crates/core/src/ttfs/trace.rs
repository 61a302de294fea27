use std::io::Write;

use crate::error::Result;
use crate::spike::{SpikeTickVector, SpikeTimeVector};

/// Writes `layer,neuron,tick` rows; silent neurons are omitted.
pub fn write_tick_trace<W: Write>(w: &mut W, layers: &[&SpikeTickVector]) -> Result<()> {
    writeln!(w, "layer,neuron,tick")?;
    for (l, spikes) in layers.iter().enumerate() {
        for (n, t) in spikes.spikes() {
            writeln!(w, "{l},{n},{t}")?;
        }
    }
    Ok(())
}

/// Writes `layer,neuron,time` rows; silent neurons are omitted.
pub fn write_time_trace<W: Write>(w: &mut W, layers: &[&SpikeTimeVector]) -> Result<()> {
    writeln!(w, "layer,neuron,time")?;
    for (l, spikes) in layers.iter().enumerate() {
        for (n, t) in spikes.spikes() {
            writeln!(w, "{l},{n},{t:.17e}")?;
        }
    }
    Ok(())
}
