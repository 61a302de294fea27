use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::{SpikeTickVector, SpikeTimeVector};

/// Input window configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Continuous input window: a pixel of intensity `x` spikes at `(1-x)·t_max`.
    pub t_max: f64,
    /// Ticks spanned by the discrete input window.
    pub t_in: u32,
    /// Total ticks simulated per inference. Output spikes of a converted
    /// three-layer net land several input windows after the input ends.
    pub t_total: u32,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            t_in: 256,
            t_total: 2560,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::InputDomain(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.t_in < 2 {
            return Err(Error::InputDomain("t_in must be at least 2 ticks".into()));
        }
        if self.t_in > self.t_total {
            return Err(Error::InputDomain(format!(
                "t_in ({}) exceeds t_total ({})",
                self.t_in, self.t_total
            )));
        }
        Ok(())
    }

    /// Ticks per unit of continuous time: tick `t_in - 1` is time `t_max`.
    pub fn ticks_per_unit(&self) -> f64 {
        (self.t_in - 1) as f64 / self.t_max
    }

    /// Continuous time at which the discrete window closes.
    pub fn window_end(&self) -> f64 {
        self.t_total as f64 / self.ticks_per_unit()
    }
}

fn check_pixels(image: &[f64]) -> Result<()> {
    match image.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(i) => Err(Error::InputDomain(format!(
            "pixel {i} has intensity {} outside [0, 1]",
            image[i]
        ))),
        None => Ok(()),
    }
}

/// Intensity-to-latency encoding in continuous time. Zero pixels stay silent.
pub fn itl_encode_continuous(image: &[f64], cfg: &EncodingConfig) -> Result<SpikeTimeVector> {
    check_pixels(image)?;
    Ok(SpikeTimeVector::from_vec(
        image
            .iter()
            .map(|&x| (x > 0.0).then(|| (1.0 - x) * cfg.t_max))
            .collect(),
    ))
}

/// Intensity-to-latency encoding onto ticks `0..t_in`.
pub fn itl_encode_discrete(image: &[f64], cfg: &EncodingConfig) -> Result<SpikeTickVector> {
    check_pixels(image)?;
    let span = (cfg.t_in - 1) as f64;
    Ok(SpikeTickVector::from_vec(
        image
            .iter()
            .map(|&x| (x > 0.0).then(|| ((1.0 - x) * span).round() as u32))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg100() -> EncodingConfig {
        EncodingConfig {
            t_max: 1.0,
            t_in: 100,
            t_total: 200,
        }
    }

    #[test]
    fn brightest_pixel_spikes_first() {
        let t = itl_encode_discrete(&[1.0], &cfg100()).unwrap();
        assert_eq!(t.get(0), Some(0));
        let t = itl_encode_continuous(&[1.0], &cfg100()).unwrap();
        assert_eq!(t.get(0), Some(0.0));
    }

    #[test]
    fn dark_pixel_is_silent() {
        assert_eq!(itl_encode_discrete(&[0.0], &cfg100()).unwrap().get(0), None);
        assert_eq!(itl_encode_continuous(&[0.0], &cfg100()).unwrap().get(0), None);
    }

    #[test]
    fn half_intensity_rounds_to_tick_50() {
        // round(0.5 * 99) = round(49.5) = 50
        assert_eq!(itl_encode_discrete(&[0.5], &cfg100()).unwrap().get(0), Some(50));
    }

    #[test]
    fn out_of_range_intensity_rejected() {
        assert!(matches!(
            itl_encode_discrete(&[0.2, 1.5], &cfg100()),
            Err(Error::InputDomain(_))
        ));
        assert!(itl_encode_continuous(&[-0.1], &cfg100()).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(EncodingConfig::default().validate().is_ok());
        let bad = EncodingConfig {
            t_in: 3000,
            ..EncodingConfig::default()
        };
        assert!(bad.validate().is_err());
        let d = EncodingConfig::default();
        assert_eq!(d.ticks_per_unit(), 255.0);
    }
}
