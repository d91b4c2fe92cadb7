//! Photon sources: an attenuated CW laser (weak coherent state) and a
//! bichromatic polarization-entangled pair source.
//!
//! The pair source is modeled as a Poisson pair process with a Werner-state
//! polarization and independent per-arm survival. By Poisson colouring, a
//! thinned pair process splits into three independent processes: pairs
//! with both partners detected, idler-only and signal-only. Rates are
//! specified as detected rates, so the split follows directly from the
//! configured singles and coincidence rates.

use nalgebra::Matrix4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bsm::OverlapModel;
use crate::error::{Error, Result};
use crate::polarization::{DensityMatrix, Mat2, PolarizationState, C64};
use crate::process::{poisson_times, Domain, PS_PER_S};

pub type Mat4 = Matrix4<C64>;

/// State carried by a simulated photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhotonState {
    Pure(PolarizationState),
    Mixed(DensityMatrix),
    /// Half of pair `pair`; `local` accumulates unitaries applied to this half.
    Entangled {
        pair: u32,
        local: Mat2,
    },
}

impl PhotonState {
    pub fn unpolarized() -> Self {
        PhotonState::Mixed(DensityMatrix::maximally_mixed())
    }

    pub fn rotated(&self, u: &Mat2) -> Self {
        match self {
            PhotonState::Pure(s) => PhotonState::Pure(s.transformed(u)),
            PhotonState::Mixed(r) => PhotonState::Mixed(r.transformed(u)),
            PhotonState::Entangled { pair, local } => PhotonState::Entangled {
                pair: *pair,
                local: u * local,
            },
        }
    }

    /// Reduced density matrix; entangled halves of a Werner pair are I/2.
    pub fn reduced(&self) -> DensityMatrix {
        match self {
            PhotonState::Pure(s) => s.projector(),
            PhotonState::Mixed(r) => *r,
            PhotonState::Entangled { .. } => DensityMatrix::maximally_mixed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photon {
    pub t_ps: f64,
    pub state: PhotonState,
}

/// Weak coherent state at the BSM detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcsConfig {
    /// Detected rate summed over both BSM channels, counts/s, for an input
    /// that splits evenly between the two monitored ports.
    pub detected_rate: f64,
    /// Share of `detected_rate` on channel 1.
    pub ch1_fraction: f64,
    #[serde(skip, default = "PolarizationState::h")]
    pub polarization: PolarizationState,
}

impl WcsConfig {
    /// Mean detected photon number in a window of `window_ps`.
    pub fn mean_photon_per_window(&self, window_ps: f64) -> f64 {
        self.detected_rate * window_ps / PS_PER_S
    }

    /// Reference per-channel detected rates (even port split).
    pub fn reference_rates(&self) -> [f64; 2] {
        [
            self.detected_rate * self.ch1_fraction,
            self.detected_rate * (1.0 - self.ch1_fraction),
        ]
    }

    /// Detected rates for the configured polarization when channel `k`
    /// transmits `ports[k]`: `R_k = R_k,ref · 2|⟨port_k|ψ⟩|²`.
    pub fn port_rates(&self, ports: [PolarizationState; 2]) -> [f64; 2] {
        let r = self.reference_rates();
        [
            r[0] * 2.0 * ports[0].overlap(&self.polarization),
            r[1] * 2.0 * ports[1].overlap(&self.polarization),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detected_rate >= 0.0) || !self.detected_rate.is_finite() {
            return Err(Error::Config(
                "wcs.detected_rate must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ch1_fraction) {
            return Err(Error::Config("wcs.ch1_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Probability of two or more photons when the mean is `mean`.
pub fn multi_photon_probability(mean: f64) -> f64 {
    // 1 − e^{−μ}(1 + μ), written to stay accurate for tiny μ.
    let em1 = (-mean).exp_m1(); // e^{−μ} − 1
    -em1 - mean * (1.0 + em1)
}

/// Homogeneous Poisson emission at `cfg.detected_rate` over `duration_s`.
pub fn sample_wcs_emissions<R: Rng + ?Sized>(
    cfg: &WcsConfig,
    duration_s: f64,
    rng: &mut R,
) -> Result<Vec<Photon>> {
    if !(duration_s > 0.0) {
        return Err(Error::Domain("duration must be positive".into()));
    }
    let mut out = Vec::new();
    poisson_times(
        cfg.detected_rate / PS_PER_S,
        &Domain::span(0.0, duration_s * PS_PER_S),
        rng,
        |t| {
            out.push(Photon {
                t_ps: t,
                state: PhotonState::Pure(cfg.polarization),
            })
        },
    );
    Ok(out)
}

/// `ρ = p|Φ⁺⟩⟨Φ⁺| + (1−p) I/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WernerState {
    pub p: f64,
}

impl WernerState {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "Werner parameter {p} outside [0, 1]"
            )));
        }
        Ok(Self { p })
    }

    /// `⟨Φ⁺|ρ|Φ⁺⟩ = (3p + 1)/4`
    pub fn fidelity(&self) -> f64 {
        (3.0 * self.p + 1.0) / 4.0
    }

    /// Two-qubit density matrix in the basis `|HH⟩, |HV⟩, |VH⟩, |VV⟩`.
    pub fn density_matrix(&self) -> Mat4 {
        let mut m = Mat4::identity() * C64::from((1.0 - self.p) / 4.0);
        let half = C64::from(self.p / 2.0);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] += half;
        }
        m
    }
}

pub fn werner_from_fidelity(f: f64) -> Result<WernerState> {
    if !(0.25..=1.0).contains(&f) {
        return Err(Error::Domain(format!(
            "pair fidelity {f} cannot be represented by a Werner state"
        )));
    }
    WernerState::new((4.0 * f - 1.0) / 3.0)
}

/// Entangled pair source, specified by detected rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSourceConfig {
    /// Detected idler(ch2)–signal(ch3) coincidence rate, counts/s.
    pub pair_coincidence_rate: f64,
    /// Fidelity of the emitted pair state to |Φ⁺⟩.
    pub pair_fidelity: f64,
    /// Detected idler singles on BSM channels 1 and 2, counts/s.
    pub idler_rate_ch: [f64; 2],
    /// Detected signal singles on channel 3, counts/s.
    pub signal_rate: f64,
    /// Overlap lost per count/s of idler brightness.
    pub brightness_visibility_slope: f64,
    /// Overlap extrapolated to zero brightness.
    pub overlap_at_zero_brightness: f64,
}

/// Independent Poisson components of the thinned pair process, counts/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairComponents {
    /// Both partners detected, idler on channel 1 or 2.
    pub coincidence: [f64; 2],
    pub idler_only: [f64; 2],
    pub signal_only: f64,
}

impl PairSourceConfig {
    /// Coincidence rates per BSM channel; channel 1 scales with its idler
    /// singles relative to channel 2 since both see the same pairs.
    pub fn coincidence_rates(&self) -> [f64; 2] {
        let ratio = if self.idler_rate_ch[1] > 0.0 {
            self.idler_rate_ch[0] / self.idler_rate_ch[1]
        } else {
            0.0
        };
        [
            self.pair_coincidence_rate * ratio,
            self.pair_coincidence_rate,
        ]
    }

    pub fn components(&self) -> Result<PairComponents> {
        self.validate()?;
        let c = self.coincidence_rates();
        Ok(PairComponents {
            coincidence: c,
            idler_only: [self.idler_rate_ch[0] - c[0], self.idler_rate_ch[1] - c[1]],
            signal_only: self.signal_rate - c[0] - c[1],
        })
    }

    pub fn werner(&self) -> Result<WernerState> {
        werner_from_fidelity(self.pair_fidelity)
    }

    /// Idler brightness used to set the interference overlap.
    pub fn brightness(&self) -> f64 {
        self.idler_rate_ch[0] + self.idler_rate_ch[1]
    }

    /// Mode overlap at this brightness; non-increasing in brightness.
    pub fn overlap(&self) -> OverlapModel {
        OverlapModel::clamped(
            self.overlap_at_zero_brightness - self.brightness_visibility_slope * self.brightness(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.pair_coincidence_rate,
            self.idler_rate_ch[0],
            self.idler_rate_ch[1],
            self.signal_rate,
        ];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config(
                "pair source rates must be non-negative".into(),
            ));
        }
        if !(0.25..=1.0).contains(&self.pair_fidelity) {
            return Err(Error::Config("pair_fidelity must lie in [0.25, 1]".into()));
        }
        if self.brightness_visibility_slope < 0.0 {
            return Err(Error::Config(
                "brightness_visibility_slope must be non-negative".into(),
            ));
        }
        let c = self.coincidence_rates();
        if c[0] > self.idler_rate_ch[0] || c[1] > self.idler_rate_ch[1] {
            return Err(Error::Config(
                "pair coincidence rate exceeds idler singles".into(),
            ));
        }
        if c[0] + c[1] > self.signal_rate {
            return Err(Error::Config(
                "pair coincidence rate exceeds signal singles".into(),
            ));
        }
        Ok(())
    }
}

/// Joint polarization of one emitted pair, as a Werner-state realization:
/// `|Φ⁺⟩` with probability `p`, otherwise two independent Haar-random
/// pure states (which average to I/4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointPolarization {
    Bell,
    Product(PolarizationState, PolarizationState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    pub t_ps: f64,
    /// BSM channel (1 or 2) that detected the idler.
    pub idler_channel: u8,
    pub joint: JointPolarization,
}

/// Output of [`sample_pair_emissions`]. Idler streams are indexed by
/// channel − 1; each stream is time-sorted.
#[derive(Debug, Clone, Default)]
pub struct PairEmissions {
    pub pairs: Vec<PairRecord>,
    pub idler: [Vec<Photon>; 2],
    pub signal: Vec<Photon>,
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R) -> PolarizationState {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    PolarizationState::from_bloch(r * phi.cos(), r * phi.sin(), z)
        .unwrap_or_else(|_| PolarizationState::h())
}

pub fn sample_joint<R: Rng + ?Sized>(werner: WernerState, rng: &mut R) -> JointPolarization {
    if rng.gen::<f64>() < werner.p {
        JointPolarization::Bell
    } else {
        JointPolarization::Product(random_pure_state(rng), random_pure_state(rng))
    }
}

/// Projective measurement of both halves of a pair. Returns whether the
/// idler and signal were found along `idler_axis` and `signal_axis`, after
/// the local unitaries applied to each half.
pub fn measure_joint<R: Rng + ?Sized>(
    joint: &JointPolarization,
    idler_local: &Mat2,
    signal_local: &Mat2,
    idler_axis: &PolarizationState,
    signal_axis: &PolarizationState,
    rng: &mut R,
) -> (bool, bool) {
    match joint {
        JointPolarization::Product(a, b) => {
            let ia = rng.gen::<f64>() < a.transformed(idler_local).overlap(idler_axis);
            let sb = rng.gen::<f64>() < b.transformed(signal_local).overlap(signal_axis);
            (ia, sb)
        }
        JointPolarization::Bell => {
            // Pull both axes back through the local unitaries and measure |Φ⁺⟩.
            let ia_axis = idler_axis.transformed(&idler_local.adjoint());
            let sb_axis = signal_axis.transformed(&signal_local.adjoint());
            let idler_hit = rng.gen::<f64>() < 0.5;
            let collapsed = if idler_hit {
                ia_axis
            } else {
                ia_axis.orthogonal()
            };
            // (⟨a| ⊗ I)|Φ⁺⟩ ∝ |a*⟩.
            let (h, v) = collapsed.amplitudes();
            let partner = PolarizationState::new(h.conj(), v.conj()).expect("normalized");
            (idler_hit, rng.gen::<f64>() < partner.overlap(&sb_axis))
        }
    }
}

/// Samples the detected pair process over `duration_s`: correlated pairs,
/// idler-only and signal-only singles, each Poisson. Uncorrelated photons
/// are unpolarized.
pub fn sample_pair_emissions<R: Rng + ?Sized>(
    cfg: &PairSourceConfig,
    duration_s: f64,
    rng: &mut R,
) -> Result<PairEmissions> {
    if !(duration_s > 0.0) {
        return Err(Error::Domain("duration must be positive".into()));
    }
    let comps = cfg.components()?;
    let werner = cfg.werner()?;
    let domain = Domain::span(0.0, duration_s * PS_PER_S);
    let mut out = PairEmissions::default();

    let mut pair_times: Vec<(f64, u8)> = Vec::new();
    for ch in 0..2 {
        poisson_times(comps.coincidence[ch] / PS_PER_S, &domain, rng, |t| {
            pair_times.push((t, ch as u8 + 1))
        });
    }
    pair_times.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, ch) in pair_times {
        let id = out.pairs.len() as u32;
        out.pairs.push(PairRecord {
            t_ps: t,
            idler_channel: ch,
            joint: sample_joint(werner, rng),
        });
        let half = PhotonState::Entangled {
            pair: id,
            local: Mat2::identity(),
        };
        out.idler[(ch - 1) as usize].push(Photon {
            t_ps: t,
            state: half,
        });
        out.signal.push(Photon {
            t_ps: t,
            state: half,
        });
    }

    for ch in 0..2 {
        poisson_times(comps.idler_only[ch] / PS_PER_S, &domain, rng, |t| {
            out.idler[ch].push(Photon {
                t_ps: t,
                state: PhotonState::unpolarized(),
            })
        });
        out.idler[ch].sort_by(|a, b| a.t_ps.total_cmp(&b.t_ps));
    }
    poisson_times(comps.signal_only / PS_PER_S, &domain, rng, |t| {
        out.signal.push(Photon {
            t_ps: t,
            state: PhotonState::unpolarized(),
        })
    });
    out.signal.sort_by(|a, b| a.t_ps.total_cmp(&b.t_ps));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn local_source() -> PairSourceConfig {
        PairSourceConfig {
            pair_coincidence_rate: 1.6e3,
            pair_fidelity: 0.95,
            idler_rate_ch: [100e3, 240e3],
            signal_rate: 200e3,
            brightness_visibility_slope: 0.0,
            overlap_at_zero_brightness: 1.0,
        }
    }

    #[test]
    fn werner_inversion() {
        assert_eq!(werner_from_fidelity(1.0).unwrap().p, 1.0);
        assert_eq!(werner_from_fidelity(0.25).unwrap().p, 0.0);
        let w = werner_from_fidelity(0.95).unwrap();
        assert!((w.p - 2.8 / 3.0).abs() < 1e-12);
        assert!((w.fidelity() - 0.95).abs() < 1e-12);
        assert!(werner_from_fidelity(0.2).is_err());
        assert!(werner_from_fidelity(1.01).is_err());
    }

    #[test]
    fn werner_matrix_fidelity_matches_closed_form() {
        let w = WernerState::new(0.6).unwrap();
        let m = w.density_matrix();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi =
            nalgebra::Vector4::new(C64::from(s), C64::from(0.0), C64::from(0.0), C64::from(s));
        let f = (phi.adjoint() * m * phi)[(0, 0)].re;
        assert!((f - w.fidelity()).abs() < 1e-12);
        assert!((m.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_photon_tail_matches_leading_order() {
        let mu = 1e6 * 64.0 / PS_PER_S;
        let p = multi_photon_probability(mu);
        assert!((p - 2.048e-9).abs() / 2.048e-9 < 1e-4, "{p}");
        // Exact tail for a moderate mean.
        let mu = 0.3_f64;
        let exact = 1.0 - (-mu).exp() * (1.0 + mu);
        assert!((multi_photon_probability(mu) - exact).abs() < 1e-15);
    }

    #[test]
    fn multi_photon_occupancy_monte_carlo() {
        // Poisson window occupancy from the sampled stream.
        let cfg = WcsConfig {
            detected_rate: 5e8,
            ch1_fraction: 0.5,
            polarization: PolarizationState::d(),
        };
        let mut rng = substream(3, "wcs-mc");
        let photons = sample_wcs_emissions(&cfg, 1e-3, &mut rng).unwrap();
        let window = 200.0;
        let windows = (1e-3 * PS_PER_S / window) as usize;
        let mut occupancy = vec![0u32; windows];
        for p in &photons {
            let i = (p.t_ps / window) as usize;
            if i < windows {
                occupancy[i] += 1;
            }
        }
        let multi = occupancy.iter().filter(|&&n| n >= 2).count() as f64 / windows as f64;
        let expected = multi_photon_probability(cfg.mean_photon_per_window(window));
        let sigma = (expected / windows as f64).sqrt();
        assert!(
            (multi - expected).abs() < 5.0 * sigma,
            "{multi} vs {expected}"
        );
    }

    #[test]
    fn wcs_zero_rate_is_empty() {
        let cfg = WcsConfig {
            detected_rate: 0.0,
            ch1_fraction: 0.5,
            polarization: PolarizationState::h(),
        };
        assert!(sample_wcs_emissions(&cfg, 1.0, &mut substream(1, "x"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn wcs_count_within_five_sigma() {
        let cfg = WcsConfig {
            detected_rate: 2.6e6,
            ch1_fraction: 0.5,
            polarization: PolarizationState::d(),
        };
        for seed in 0..5 {
            let n = sample_wcs_emissions(&cfg, 1.0, &mut substream(seed, "wcs"))
                .unwrap()
                .len() as f64;
            assert!((n - 2.6e6).abs() < 5.0 * 2.6e6_f64.sqrt());
        }
    }

    #[test]
    fn pair_rates_match_configuration() {
        let cfg = local_source();
        let duration = 10.0;
        let em = sample_pair_emissions(&cfg, duration, &mut substream(11, "pairs")).unwrap();
        let check = |n: usize, rate: f64| {
            let expected = rate * duration;
            assert!(
                (n as f64 - expected).abs() < 3.0 * expected.sqrt() + 1.0,
                "{n} vs {expected}"
            );
        };
        check(em.idler[1].len(), 240e3);
        check(em.idler[0].len(), 100e3);
        check(em.signal.len(), 200e3);
        check(
            em.pairs.iter().filter(|p| p.idler_channel == 2).count(),
            1.6e3,
        );
    }

    #[test]
    fn pair_rate_above_singles_is_rejected() {
        let mut cfg = local_source();
        cfg.pair_coincidence_rate = 300e3;
        assert!(matches!(
            sample_pair_emissions(&cfg, 1.0, &mut substream(1, "p")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bell_pairs_are_perfectly_correlated_in_hv() {
        let mut rng = substream(5, "bell");
        let id = Mat2::identity();
        for _ in 0..2000 {
            let (a, b) = measure_joint(
                &JointPolarization::Bell,
                &id,
                &id,
                &PolarizationState::h(),
                &PolarizationState::h(),
                &mut rng,
            );
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fully_mixed_pairs_are_uniform() {
        let mut rng = substream(6, "mixed");
        let w = WernerState::new(0.0).unwrap();
        let id = Mat2::identity();
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            let j = sample_joint(w, &mut rng);
            let (a, b) = measure_joint(
                &j,
                &id,
                &id,
                &PolarizationState::h(),
                &PolarizationState::h(),
                &mut rng,
            );
            counts[(a as usize) * 2 + b as usize] += 1;
        }
        for c in counts {
            let expected = n as f64 / 4.0;
            let sigma = (n as f64 * 0.25 * 0.75).sqrt();
            assert!((c as f64 - expected).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn overlap_decreases_with_brightness() {
        let mut cfg = local_source();
        cfg.brightness_visibility_slope = 1e-7;
        cfg.overlap_at_zero_brightness = 0.95;
        let mut last = f64::INFINITY;
        for scale in [0.5, 1.0, 2.0, 4.0, 40.0] {
            let mut c = cfg;
            c.idler_rate_ch = [100e3 * scale, 240e3 * scale];
            let z = c.overlap().zeta();
            assert!(z <= last);
            last = z;
        }
        assert_eq!(last, 0.0);
    }
}
