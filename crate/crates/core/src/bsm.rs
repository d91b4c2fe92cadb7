//! Two-photon interference at the Bell-state measurement station.
//!
//! The WCS photon (mode a) and the idler (mode b) meet on a 50:50
//! beamsplitter followed by one monitored PBS port per output arm. Only
//! the Ψ⁻ signature (one H click and one V click) heralds. Partial
//! distinguishability is a convex interpolation of the herald effect
//! between the Bell projector and the classical opposite-polarization
//! pattern.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{DensityMatrix, PolarizationState, C64};
use crate::rng::SimRng;
use crate::source::{Mat4, WernerState};

/// Mode overlap ζ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapModel {
    zeta: f64,
}

impl OverlapModel {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::Domain(format!("mode overlap {zeta} outside [0, 1]")));
        }
        Ok(Self { zeta })
    }

    pub fn clamped(zeta: f64) -> Self {
        Self {
            zeta: if zeta.is_nan() {
                0.0
            } else {
                zeta.clamp(0.0, 1.0)
            },
        }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

/// Effect operator on (WCS ⊗ idler), basis |HH⟩, |HV⟩, |VH⟩, |VV⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldPovm {
    pub effect: Mat4,
}

pub fn psi_minus_herald(zeta: OverlapModel) -> HeraldPovm {
    let z = zeta.zeta();
    let mut m = Mat4::zeros();
    // ζ|Ψ⁻⟩⟨Ψ⁻| with |Ψ⁻⟩ = (|HV⟩ − |VH⟩)/√2
    m[(1, 1)] = C64::from(z / 2.0);
    m[(2, 2)] = C64::from(z / 2.0);
    m[(1, 2)] = C64::from(-z / 2.0);
    m[(2, 1)] = C64::from(-z / 2.0);
    let c = C64::from((1.0 - z) / 2.0);
    m[(1, 1)] += c;
    m[(2, 2)] += c;
    HeraldPovm { effect: m }
}

/// Signal-mode state conditioned on the Ψ⁻ herald, and the herald probability.
/// No corrective unitary is applied.
pub fn teleport_conditional_state(
    input: &PolarizationState,
    pair: WernerState,
    zeta: OverlapModel,
) -> Result<(DensityMatrix, f64)> {
    let pi = psi_minus_herald(zeta).effect;
    let rho = pair.density_matrix();
    let (h, v) = input.amplitudes();
    let psi = [h, v];
    // out[c, c'] = Σ_{a,b,a',b'} Π[ab, a'b'] ψ[a'] ψ*[a] ρ[(b'c), (bc')]
    let mut out = [[C64::from(0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for ap in 0..2 {
                for bp in 0..2 {
                    let w = pi[(2 * a + b, 2 * ap + bp)] * psi[ap] * psi[a].conj();
                    if w == C64::from(0.0) {
                        continue;
                    }
                    for c in 0..2 {
                        for cp in 0..2 {
                            out[c][cp] += w * rho[(2 * bp + c, 2 * b + cp)];
                        }
                    }
                }
            }
        }
    }
    let p = (out[0][0] + out[1][1]).re;
    if !(p > 1e-15) {
        return Err(Error::DegenerateHerald);
    }
    let m =
        crate::polarization::Mat2::new(out[0][0], out[0][1], out[1][0], out[1][1]) / C64::from(p);
    // Enforce exact Hermiticity against rounding.
    let m = (m + m.adjoint()) * C64::from(0.5);
    Ok((DensityMatrix::from_matrix_unchecked(m), p))
}

/// Expected threefold rates for the HOM measurement, counts/s. The
/// measurement uses the BSM itself: WCS in |D⟩, the signal analyzed in |D⟩,
/// coincidences between both BSM channels and the signal detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomRates {
    /// Partner idler plus a WCS photon on the other channel; these interfere.
    pub interfering: f64,
    /// Triples with no interfering pair (multi-pair, dark and accidental).
    pub background: f64,
    /// Werner parameter of the pair.
    pub werner_p: f64,
    /// Coherence time of the interfering photons, ps (Gaussian 1σ).
    pub coherence_ps: f64,
}

impl HomRates {
    /// Largest visibility reachable at ζ = 1.
    pub fn max_visibility(&self) -> f64 {
        let total = self.interfering + self.background;
        if total <= 0.0 {
            return 0.0;
        }
        self.werner_p * self.interfering / total
    }

    /// Mean threefold rate at relative delay `delay_ps`.
    pub fn rate_at(&self, zeta: OverlapModel, delay_ps: f64) -> f64 {
        let g = (-0.5 * (delay_ps / self.coherence_ps).powi(2)).exp();
        self.interfering * (1.0 - zeta.zeta() * self.werner_p * g) + self.background
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomPoint {
    pub delay_ps: f64,
    pub expected: f64,
    pub counts: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomScan {
    pub points: Vec<HomPoint>,
    pub dwell_s: f64,
}

impl HomScan {
    /// Dip is the point nearest zero delay, far level the mean over points
    /// beyond `far_ps`. Uses sampled counts if present, else expectations.
    pub fn dip_and_far(&self, far_ps: f64) -> Result<(f64, f64, usize)> {
        let value = |p: &HomPoint| {
            p.counts
                .map(|c| c as f64)
                .unwrap_or(p.expected * self.dwell_s)
        };
        let dip = self
            .points
            .iter()
            .min_by(|a, b| a.delay_ps.abs().total_cmp(&b.delay_ps.abs()))
            .ok_or_else(|| Error::Domain("empty delay grid".into()))?;
        let far: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.delay_ps.abs() >= far_ps)
            .map(value)
            .collect();
        if far.is_empty() {
            return Err(Error::Domain(format!("no delays beyond {far_ps} ps")));
        }
        Ok((
            value(dip),
            far.iter().sum::<f64>() / far.len() as f64,
            far.len(),
        ))
    }

    /// Visibility of the expected curve.
    pub fn expected_visibility(&self, far_ps: f64) -> Result<f64> {
        let e = HomScan {
            points: self
                .points
                .iter()
                .map(|p| HomPoint {
                    counts: None,
                    ..p.clone()
                })
                .collect(),
            dwell_s: self.dwell_s,
        };
        let (dip, far, _) = e.dip_and_far(far_ps)?;
        if far <= 0.0 {
            return Err(Error::UndefinedVisibility);
        }
        Ok((far - dip) / far)
    }
}

/// Coincidence rate vs delay. With `rng`, each point carries Poisson
/// counts for `dwell_s` seconds; without, only expectations.
pub fn hom_scan(
    rates: &HomRates,
    zeta: OverlapModel,
    delays_ps: &[f64],
    dwell_s: f64,
    rng: Option<&mut SimRng>,
) -> HomScan {
    let mut points: Vec<HomPoint> = delays_ps
        .iter()
        .map(|&d| HomPoint {
            delay_ps: d,
            expected: rates.rate_at(zeta, d),
            counts: None,
        })
        .collect();
    if let Some(rng) = rng {
        for p in &mut points {
            p.counts = Some(crate::process::poisson_count(p.expected * dwell_s, rng));
        }
    }
    HomScan { points, dwell_s }
}

/// ζ reproducing `v_target` on the expected HOM curve, by bisection.
pub fn visibility_to_zeta(
    v_target: f64,
    rates: &HomRates,
    delays_ps: &[f64],
    far_ps: f64,
) -> Result<OverlapModel> {
    let vis = |z: f64| {
        hom_scan(rates, OverlapModel::clamped(z), delays_ps, 1.0, None).expected_visibility(far_ps)
    };
    let v_max = vis(1.0)?;
    if v_target < 0.0 || v_target > v_max + 1e-12 {
        return Err(Error::Calibration {
            target: v_target,
            max_achievable: v_max,
        });
    }
    if v_target <= 0.0 {
        return Ok(OverlapModel::clamped(0.0));
    }
    if v_target >= v_max {
        return Ok(OverlapModel::clamped(1.0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if vis(mid)? < v_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OverlapModel::clamped(0.5 * (lo + hi)))
}
