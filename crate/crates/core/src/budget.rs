//! Closed-form rate budget for a scenario: herald and background triple
//! rates per input state, the expected fidelity they imply, and the HOM
//! rates used for the in-situ visibility scan.
//!
//! Detected rates are treated as independent Poisson processes apart from
//! the pair correlations, so accidentals are "white".

use serde::{Deserialize, Serialize};

use crate::bsm::{teleport_conditional_state, HomRates, OverlapModel};
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::polarization::{fidelity, PolarizationState};
use crate::tomography::{NamedState, TargetMap};

/// Ports monitored by BSM channels 1 and 2.
pub fn bsm_ports() -> [PolarizationState; 2] {
    [PolarizationState::v(), PolarizationState::h()]
}

/// Mean span-limited window for a correlated two-tag pair plus one
/// uniformly placed tag: `E[(2W − d)·1(d ≤ W)]`, `d = |N(0, σ_d)|`.
pub fn effective_window_ps(width_ps: f64, sigma_diff_ps: f64) -> f64 {
    if sigma_diff_ps <= 0.0 {
        return 2.0 * width_ps;
    }
    // The Gaussian tail past 12σ is below double precision.
    let upper = width_ps.min(12.0 * sigma_diff_ps);
    let n = 4000;
    let h = upper / n as f64;
    let norm = (2.0 / std::f64::consts::PI).sqrt() / sigma_diff_ps;
    let f = |d: f64| (2.0 * width_ps - d) * norm * (-0.5 * (d / sigma_diff_ps).powi(2)).exp();
    // Simpson's rule.
    let mut s = f(0.0) + f(upper);
    for i in 1..n {
        let x = i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Expected threefold rates for one input, counts/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBudget {
    pub input: NamedState,
    /// Pair partner on one BSM channel, WCS photon on the other.
    pub herald: f64,
    /// Everything else inside the window.
    pub background: f64,
    /// Fidelity of the heralded signal state alone.
    pub conditional_fidelity: f64,
    /// Fidelity with background triples mixed in as unpolarized.
    pub expected_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub effective_window_ps: f64,
    pub zeta: f64,
    pub werner_p: f64,
    pub inputs: Vec<InputBudget>,
    pub expected_average_fidelity: f64,
    pub hom: HomRates,
}

struct Rates {
    wcs_ref: [f64; 2],
    coincidence: [f64; 2],
    idler: [f64; 2],
    dark: [f64; 3],
    uncorrelated3: f64,
    l_eff: f64,
    width_s: f64,
}

impl Rates {
    fn new(cfg: &LinkConfig) -> Self {
        let d = &cfg.detectors;
        let c = cfg.pair.coincidence_rates();
        // Both pair partners jitter; the two BSM channels are averaged into one σ_d.
        let s2 = |c: &crate::timetag::DetectorConfig| c.jitter_sigma_ps.powi(2);
        let sd = ((s2(&d.ch1) + s2(&d.ch2)) / 2.0 + s2(&d.ch3)).sqrt();
        Self {
            wcs_ref: cfg.wcs.reference_rates(),
            coincidence: c,
            idler: cfg.pair.idler_rate_ch,
            dark: [d.ch1.dark_rate, d.ch2.dark_rate, d.ch3.dark_rate],
            uncorrelated3: cfg.pair.signal_rate - c[0] - c[1]
                + d.ch3.dark_rate
                + cfg.crosstalk.effective_rate(),
            l_eff: effective_window_ps(cfg.window.width_ps as f64, sd) * 1e-12,
            width_s: cfg.window.width_ps as f64 * 1e-12,
        }
    }

    /// (herald, background) triple rates for a WCS input `psi`.
    fn triples(&self, psi: &PolarizationState) -> (f64, f64) {
        let ports = bsm_ports();
        let wcs = [
            self.wcs_ref[0] * 2.0 * ports[0].overlap(psi),
            self.wcs_ref[1] * 2.0 * ports[1].overlap(psi),
        ];
        let c = self.coincidence;
        let herald = (c[0] * wcs[1] + c[1] * wcs[0]) * self.l_eff;
        let r1 = wcs[0] + self.idler[0] + self.dark[0];
        let r2 = wcs[1] + self.idler[1] + self.dark[1];
        let background = (c[0] * (self.idler[1] + self.dark[1])
            + c[1] * (self.idler[0] + self.dark[0]))
            * self.l_eff
            + 3.0 * self.width_s * self.width_s * r1 * r2 * self.uncorrelated3;
        (herald, background)
    }
}

pub fn rate_budget(cfg: &LinkConfig) -> Result<RateBudget> {
    let rates = Rates::new(cfg);
    let werner = cfg.pair.werner()?;
    let overlap = cfg.pair.overlap();
    let targets = TargetMap::paper();
    let mut inputs = Vec::new();
    for &input in &cfg.inputs {
        let target = targets
            .target(input)
            .ok_or_else(|| Error::Config(format!("inputs: no target for {input}")))?;
        let psi = input.state();
        let (herald, background) = rates.triples(&psi);
        let (rho, _) = teleport_conditional_state(&psi, werner, overlap)?;
        let fc = fidelity(&rho, &target.state());
        let total = herald + background;
        let w = if total > 0.0 { herald / total } else { 0.0 };
        inputs.push(InputBudget {
            input,
            herald,
            background,
            conditional_fidelity: fc,
            expected_fidelity: 0.5 + w * (fc - 0.5),
        });
    }
    let expected_average_fidelity =
        inputs.iter().map(|b| b.expected_fidelity).sum::<f64>() / inputs.len() as f64;
    // HOM uses a D-polarized WCS with the signal analyzed in D.
    let (interfering, background) = rates.triples(&PolarizationState::d());
    Ok(RateBudget {
        effective_window_ps: rates.l_eff * 1e12,
        zeta: overlap.zeta(),
        werner_p: werner.p,
        inputs,
        expected_average_fidelity,
        hom: HomRates {
            interfering,
            background,
            werner_p: werner.p,
            coherence_ps: cfg.simulation.coherence_ps,
        },
    })
}

/// Expected HOM visibility for the configured delay grid.
pub fn expected_visibility(cfg: &LinkConfig) -> Result<f64> {
    let b = rate_budget(cfg)?;
    crate::bsm::hom_scan(
        &b.hom,
        OverlapModel::clamped(b.zeta),
        &cfg.hom.delays_ps,
        cfg.hom.dwell_s,
        None,
    )
    .expected_visibility(cfg.hom.far_ps)
}

/// Measured values one scenario should reproduce, with 1σ errors.
#[derive(Debug, Clone)]
pub struct CalibrationTarget {
    pub config: LinkConfig,
    pub visibility: (f64, f64),
    pub fidelity: (f64, f64),
}

/// Weighted squared residuals of the overlap model `(ζ₀, slope)` against
/// every target.
pub fn calibration_chi2(zeta0: f64, slope: f64, targets: &[CalibrationTarget]) -> Result<f64> {
    let mut chi2 = 0.0;
    for t in targets {
        let mut cfg = t.config.clone();
        cfg.pair.overlap_at_zero_brightness = zeta0;
        cfg.pair.brightness_visibility_slope = slope;
        let v = expected_visibility(&cfg)?;
        let f = rate_budget(&cfg)?.expected_average_fidelity;
        chi2 += ((v - t.visibility.0) / t.visibility.1).powi(2)
            + ((f - t.fidelity.0) / t.fidelity.1).powi(2);
    }
    Ok(chi2)
}

fn golden_min(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, f(x)?))
}

/// Least-squares `(ζ₀, slope, χ²)` with `ζ₀ ∈ [0, 1]` and `slope ≥ 0`,
/// the slope bounded by `max_slope`.
pub fn fit_overlap(targets: &[CalibrationTarget], max_slope: f64) -> Result<(f64, f64, f64)> {
    let best_z = |slope: f64| golden_min(0.0, 1.0, 1e-7, |z| calibration_chi2(z, slope, targets));
    let (slope, _) = golden_min(0.0, max_slope, max_slope * 1e-6, |s| Ok(best_z(s)?.1))?;
    let (z0, chi2) = best_z(slope)?;
    // The boundary is a candidate too.
    let (z_flat, chi_flat) = best_z(0.0)?;
    Ok(if chi_flat <= chi2 {
        (z_flat, 0.0, chi_flat)
    } else {
        (z0, slope, chi2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_window_limits() {
        assert!((effective_window_ps(64.0, 0.0) - 128.0).abs() < 1e-12);
        // Tiny jitter approaches 2W.
        assert!((effective_window_ps(64.0, 1e-3) - 128.0).abs() < 1e-2);
        let l = effective_window_ps(64.0, 20.0 * 2f64.sqrt());
        assert!((l - 104.15).abs() < 0.05, "{l}");
    }

    #[test]
    fn background_lowers_expected_fidelity() {
        let cfg = LinkConfig::bundled("metro30km").unwrap();
        let quiet = rate_budget(&cfg).unwrap();
        let noisy = rate_budget(&LinkConfig::bundled("metro30km_traffic").unwrap()).unwrap();
        assert!(noisy.expected_average_fidelity < quiet.expected_average_fidelity);
        for b in &quiet.inputs {
            assert!(b.expected_fidelity < b.conditional_fidelity);
        }
    }
}
