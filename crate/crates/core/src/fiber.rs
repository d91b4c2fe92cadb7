//! Deployed fiber: loss, birefringence drift, WDM crosstalk background and
//! polarization compensation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{is_unitary, reunitarize, su2_rotation, Mat2, PolarizationState};
use crate::process::{poisson_times, Domain, PS_PER_S};
use crate::source::{random_pure_state, Photon, PhotonState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub length_km: f64,
    pub atten_db_per_km: f64,
    /// Connectors, multiplexers and patch panels, dB.
    pub excess_loss_db: f64,
    /// Random-walk scale of the birefringence, rad/√s.
    pub drift_rate: f64,
}

impl FiberConfig {
    pub fn total_loss_db(&self) -> f64 {
        self.length_km * self.atten_db_per_km + self.excess_loss_db
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fiber.length_km", self.length_km),
            ("fiber.atten_db_per_km", self.atten_db_per_km),
            ("fiber.excess_loss_db", self.excess_loss_db),
            ("fiber.drift_rate", self.drift_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Power transmission `10^(−loss/10)`.
pub fn transmission(cfg: &FiberConfig) -> f64 {
    10f64.powf(-cfg.total_loss_db() / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkConfig {
    /// Unfiltered background reaching the signal detector, counts/s.
    pub background_rate_ch3: f64,
    pub bandpass_suppression_db: f64,
}

impl CrosstalkConfig {
    pub fn none() -> Self {
        Self {
            background_rate_ch3: 0.0,
            bandpass_suppression_db: 0.0,
        }
    }

    /// Background rate after the bandpass filter.
    pub fn effective_rate(&self) -> f64 {
        self.background_rate_ch3 * 10f64.powf(-self.bandpass_suppression_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_rate_ch3 >= 0.0) || !self.background_rate_ch3.is_finite() {
            return Err(Error::Config(
                "crosstalk.background_rate_ch3 must be non-negative".into(),
            ));
        }
        if !(self.bandpass_suppression_db >= 0.0) {
            return Err(Error::Config(
                "crosstalk.bandpass_suppression_db must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Current fiber unitary and elapsed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftState {
    pub unitary: Mat2,
    pub elapsed_s: f64,
}

impl DriftState {
    pub fn new(unitary: Mat2) -> Self {
        Self {
            unitary,
            elapsed_s: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat2::identity())
    }

    /// Haar-distributed starting unitary.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let a = random_pure_state(rng);
        let b = random_pure_state(rng);
        // Axis from one Haar state, angle with the Haar density from another.
        let s = a.stokes();
        let angle = 2.0 * (b.stokes().z.clamp(-1.0, 1.0) * 0.5 + 0.5).sqrt().acos();
        Self::new(su2_rotation([s.x * angle, s.y * angle, s.z * angle]))
    }
}

/// Composes an isotropic random rotation with `θ_k ~ N(0, rate²·dt)` per axis.
pub fn evolve_drift<R: Rng + ?Sized>(
    state: &DriftState,
    drift_rate: f64,
    dt_s: f64,
    rng: &mut R,
) -> DriftState {
    if dt_s <= 0.0 || drift_rate == 0.0 {
        return DriftState {
            unitary: state.unitary,
            elapsed_s: state.elapsed_s + dt_s.max(0.0),
        };
    }
    let s = drift_rate * dt_s.sqrt();
    let theta: [f64; 3] = std::array::from_fn(|_| {
        let n: f64 = StandardNormal.sample(rng);
        n * s
    });
    let mut u = su2_rotation(theta) * state.unitary;
    if !is_unitary(&u, 1e-13) {
        u = reunitarize(&u);
    }
    DriftState {
        unitary: u,
        elapsed_s: state.elapsed_s + dt_s,
    }
}

/// Independent survival with probability `transmission`; survivors are
/// rotated by the drift unitary.
pub fn apply_channel<R: Rng + ?Sized>(
    events: &[Photon],
    drift: &DriftState,
    transmission: f64,
    rng: &mut R,
) -> Vec<Photon> {
    events
        .iter()
        .filter(|_| transmission >= 1.0 || rng.gen::<f64>() < transmission)
        .map(|p| Photon {
            t_ps: p.t_ps,
            state: p.state.rotated(&drift.unitary),
        })
        .collect()
}

/// Adds randomly polarized Poisson background at the filtered crosstalk rate.
pub fn inject_background<R: Rng + ?Sized>(
    events: &[Photon],
    cfg: &CrosstalkConfig,
    duration_s: f64,
    rng: &mut R,
) -> Vec<Photon> {
    let mut out = events.to_vec();
    let mut extra = Vec::new();
    poisson_times(
        cfg.effective_rate() / PS_PER_S,
        &Domain::span(0.0, duration_s * PS_PER_S),
        rng,
        |t| extra.push(t),
    );
    for t in extra {
        out.push(Photon {
            t_ps: t,
            state: PhotonState::Pure(random_pure_state(rng)),
        });
    }
    out.sort_by(|a, b| a.t_ps.total_cmp(&b.t_ps));
    out
}

/// Source of reference-state fidelities through the channel.
pub trait PolarizationProbe {
    /// Fidelity of `reference` after the channel and then `correction`.
    fn reference_fidelity(&self, correction: &Mat2, reference: &PolarizationState) -> f64;
}

/// Noiseless probe of a known channel unitary.
impl PolarizationProbe for Mat2 {
    fn reference_fidelity(&self, correction: &Mat2, reference: &PolarizationState) -> f64 {
        reference
            .transformed(&(correction * self))
            .overlap(reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensation {
    pub unitary: Mat2,
    pub iterations: usize,
    pub fidelities: [f64; 2],
}

pub const COMPENSATION_THRESHOLD: f64 = 0.995;

/// Coordinate descent over three rotation generators, minimizing the summed
/// infidelity of two non-orthogonal references.
pub fn compensate_polarization(
    channel: &dyn PolarizationProbe,
    references: [PolarizationState; 2],
    max_iters: usize,
) -> Result<Compensation> {
    if references[0].overlap(&references[1]) < 1e-9
        || references[0].overlap(&references[1]) > 1.0 - 1e-9
    {
        return Err(Error::Domain(
            "compensation references must be non-orthogonal and distinct".into(),
        ));
    }
    let cost = |u: &Mat2| -> f64 {
        references
            .iter()
            .map(|r| 1.0 - channel.reference_fidelity(u, r))
            .sum()
    };
    let mut u = Mat2::identity();
    let mut best = cost(&u);
    let mut step = 0.5;
    let mut iterations = 0;
    while iterations < max_iters && best > 1e-12 && step > 1e-10 {
        iterations += 1;
        let mut improved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut theta = [0.0; 3];
                theta[axis] = sign * step;
                let trial = su2_rotation(theta) * u;
                let c = cost(&trial);
                if c < best {
                    best = c;
                    u = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let u = reunitarize(&u);
    let fidelities = [
        channel.reference_fidelity(&u, &references[0]),
        channel.reference_fidelity(&u, &references[1]),
    ];
    if fidelities.iter().any(|&f| f < COMPENSATION_THRESHOLD) {
        return Err(Error::Compensation {
            best_infidelity: 1.0 - fidelities[0].min(fidelities[1]),
        });
    }
    Ok(Compensation {
        unitary: u,
        iterations,
        fidelities,
    })
}

/// When the compensation loop runs during an acquisition sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CompensationMode {
    /// No correction at all.
    Off,
    /// Calibrated once before the first acquisition.
    InitialOnly,
    /// Recalibrated every `interval_s` seconds.
    Periodic { interval_s: f64 },
}

/// Fiber unitary sampled once per drift step over a run timeline, with the
/// compensation loop applied. `channel_at(t)` is the net unitary (correction
/// times fiber) at run time `t_s`.
#[derive(Debug, Clone)]
pub struct ChannelTimeline {
    step_s: f64,
    net: Vec<Mat2>,
    pub recalibrations: usize,
}

impl ChannelTimeline {
    pub fn build<R: Rng + ?Sized>(
        cfg: &FiberConfig,
        mode: CompensationMode,
        total_s: f64,
        step_s: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let steps = (total_s / step_s).ceil().max(1.0) as usize;
        let mut drift = DriftState::random(rng);
        let refs = [PolarizationState::h(), PolarizationState::d()];
        let mut correction = match mode {
            CompensationMode::Off => Mat2::identity(),
            _ => compensate_polarization(&drift.unitary, refs, 10_000)?.unitary,
        };
        let mut recalibrations = usize::from(mode != CompensationMode::Off);
        let mut next_cal = match mode {
            CompensationMode::Periodic { interval_s } => interval_s,
            _ => f64::INFINITY,
        };
        let mut net = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = k as f64 * step_s;
            if t >= next_cal {
                correction = compensate_polarization(&drift.unitary, refs, 10_000)?.unitary;
                recalibrations += 1;
                if let CompensationMode::Periodic { interval_s } = mode {
                    next_cal += interval_s;
                }
            }
            net.push(correction * drift.unitary);
            drift = evolve_drift(&drift, cfg.drift_rate, step_s, rng);
        }
        Ok(Self {
            step_s,
            net,
            recalibrations,
        })
    }

    pub fn channel_at(&self, t_s: f64) -> &Mat2 {
        let i = ((t_s / self.step_s).max(0.0) as usize).min(self.net.len() - 1);
        &self.net[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn transmission_arithmetic() {
        let f = FiberConfig {
            length_km: 30.0,
            atten_db_per_km: 0.34,
            excess_loss_db: 0.0,
            drift_rate: 0.0,
        };
        assert!((transmission(&f) - 0.09550).abs() < 1e-4);
        let f = FiberConfig {
            length_km: 0.0,
            atten_db_per_km: 0.34,
            excess_loss_db: 18.0,
            drift_rate: 0.0,
        };
        assert!((transmission(&f) - 0.01585).abs() < 1e-5);
        let f = FiberConfig {
            length_km: 0.0,
            atten_db_per_km: 0.0,
            excess_loss_db: 0.0,
            drift_rate: 0.0,
        };
        assert_eq!(transmission(&f), 1.0);
    }

    #[test]
    fn zero_drift_is_identity() {
        let mut rng = substream(1, "d");
        let s = DriftState::new(su2_rotation([0.1, 0.2, 0.3]));
        assert_eq!(evolve_drift(&s, 0.0, 10.0, &mut rng).unitary, s.unitary);
        assert_eq!(evolve_drift(&s, 0.1, 0.0, &mut rng).unitary, s.unitary);
    }

    #[test]
    fn unitarity_survives_long_composition() {
        let mut rng = substream(2, "d");
        let mut s = DriftState::identity();
        for _ in 0..1_000_000 {
            s = evolve_drift(&s, 0.01, 1.0, &mut rng);
        }
        assert!(is_unitary(&s.unitary, 1e-10));
    }

    #[test]
    fn identity_needs_no_compensation() {
        let c = compensate_polarization(
            &Mat2::identity(),
            [PolarizationState::h(), PolarizationState::d()],
            100,
        )
        .unwrap();
        assert_eq!(c.iterations, 0);
        assert!(c.fidelities.iter().all(|&f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn compensation_inverts_random_drift() {
        let mut rng = substream(3, "comp");
        for _ in 0..50 {
            let d = DriftState::random(&mut rng);
            let c = compensate_polarization(
                &d.unitary,
                [PolarizationState::h(), PolarizationState::d()],
                10_000,
            )
            .unwrap();
            assert!(
                c.fidelities.iter().all(|&f| f > 0.999),
                "{:?}",
                c.fidelities
            );
            // A third state is fixed as well.
            let r = PolarizationState::r();
            assert!(r.transformed(&(c.unitary * d.unitary)).overlap(&r) > 0.999);
        }
    }

    #[test]
    fn compensation_reports_non_convergence() {
        let u = su2_rotation([0.0, 2.5, 0.0]);
        match compensate_polarization(&u, [PolarizationState::h(), PolarizationState::d()], 1) {
            Err(Error::Compensation { best_infidelity }) => assert!(best_infidelity > 0.005),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn background_rate_after_filter() {
        let mut rng = substream(4, "bg");
        let cfg = CrosstalkConfig {
            background_rate_ch3: 51e3,
            bandpass_suppression_db: 10.0,
        };
        let n = inject_background(&[], &cfg, 1.0, &mut rng).len() as f64;
        assert!((n - 5100.0).abs() < 3.0 * 5100f64.sqrt());
        assert!(inject_background(&[], &CrosstalkConfig::none(), 1.0, &mut rng).is_empty());
    }
}
