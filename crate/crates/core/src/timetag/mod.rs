//! Detector model and time tags.

pub mod coincidence;
pub mod io;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{poisson_times, Domain, PS_PER_S};

pub use coincidence::{
    count_coincidences, merge_streams, threefold_herald_counts, CoincidenceCounter,
    CoincidenceResult,
};

/// One detection: channel id and integer picoseconds since acquisition start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    pub t_ps: u64,
}

impl TimeTag {
    pub fn new(channel: u8, t_ps: u64) -> Self {
        Self { channel, t_ps }
    }
}

/// Converts a simulated time to an integer tag, clamping at the start.
pub fn to_tag_time(t_ps: f64) -> u64 {
    if t_ps <= 0.0 {
        0
    } else {
        t_ps.round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub jitter_sigma_ps: f64,
    pub dead_time_ps: f64,
    /// Dark counts, counts/s.
    pub dark_rate: f64,
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            jitter_sigma_ps: 0.0,
            dead_time_ps: 0.0,
            dark_rate: 0.0,
        }
    }

    /// Checks ranges; `path` prefixes field names in messages.
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config(format!(
                "{path}.efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("jitter_sigma_ps", self.jitter_sigma_ps),
            ("dead_time_ps", self.dead_time_ps),
            ("dark_rate", self.dark_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{path}.{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Coincidence window: all tags of a group within `width_ps` of each other
/// (span ≤ width), one tag from each channel in `channels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceWindow {
    pub width_ps: u64,
    pub channels: Vec<u8>,
}

impl CoincidenceWindow {
    pub fn new(width_ps: u64, channels: &[u8]) -> Result<Self> {
        if width_ps == 0 {
            return Err(Error::Config(
                "coincidence window width must be positive".into(),
            ));
        }
        if channels.len() < 2 || channels.len() > 8 {
            return Err(Error::Config(
                "coincidence fold must be between 2 and 8".into(),
            ));
        }
        let mut sorted = channels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != channels.len() {
            return Err(Error::Config(
                "coincidence channels must be distinct".into(),
            ));
        }
        Ok(Self {
            width_ps,
            channels: sorted,
        })
    }

    pub fn fold(&self) -> usize {
        self.channels.len()
    }
}

/// Detector response to photon arrival times (sorted) on `channel` over
/// `[0, duration_s)`: efficiency thinning, Gaussian jitter, dark counts,
/// then dead time.
pub fn detect<R: Rng + ?Sized>(
    arrivals_ps: &[f64],
    channel: u8,
    cfg: &DetectorConfig,
    duration_s: f64,
    rng: &mut R,
) -> Result<Vec<TimeTag>> {
    if arrivals_ps.windows(2).any(|w| w[1] < w[0]) {
        let index = arrivals_ps
            .windows(2)
            .position(|w| w[1] < w[0])
            .unwrap_or(0)
            + 1;
        return Err(Error::UnsortedStream { channel, index });
    }
    let mut times: Vec<f64> =
        Vec::with_capacity((arrivals_ps.len() as f64 * cfg.efficiency) as usize + 16);
    for &t in arrivals_ps {
        if cfg.efficiency >= 1.0 || rng.gen::<f64>() < cfg.efficiency {
            let j: f64 = if cfg.jitter_sigma_ps > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                n * cfg.jitter_sigma_ps
            } else {
                0.0
            };
            times.push(t + j);
        }
    }
    poisson_times(
        cfg.dark_rate / PS_PER_S,
        &Domain::span(0.0, duration_s * PS_PER_S),
        rng,
        |t| times.push(t),
    );
    times.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<f64> = None;
    for t in times {
        if let Some(l) = last {
            if cfg.dead_time_ps > 0.0 && t - l < cfg.dead_time_ps {
                continue;
            }
        }
        last = Some(t);
        out.push(TimeTag::new(channel, to_tag_time(t)));
    }
    Ok(out)
}

/// `V = (C_far − C_dip)/C_far` with Poisson errors on both counts.
pub fn estimate_visibility(dip_counts: f64, far_counts: f64) -> Result<(f64, f64)> {
    estimate_visibility_averaged(dip_counts, far_counts, 1)
}

/// As [`estimate_visibility`] when `far_counts` is a mean over `n_far`
/// independent far-delay points.
pub fn estimate_visibility_averaged(
    dip_counts: f64,
    far_counts: f64,
    n_far: usize,
) -> Result<(f64, f64)> {
    if !(far_counts > 0.0) || n_far == 0 {
        return Err(Error::UndefinedVisibility);
    }
    let v = (far_counts - dip_counts) / far_counts;
    let var = dip_counts / (far_counts * far_counts)
        + dip_counts * dip_counts / (n_far as f64 * far_counts.powi(3));
    Ok((v, var.sqrt()))
}
