//! Single-qubit state tomography from threefold coincidence counts.
//!
//! Six projections (H, V, D, A, R, L) give the Stokes parameters as
//! normalized count differences; the density matrix is the linear inversion
//! `ρ = ½(I + S·σ)` and the fidelity is `⟨ψ_T|ρ|ψ_T⟩`. Uncertainties come
//! from resampling every count from a Poisson distribution with the
//! observed count as mean.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{
    stokes_to_rho, DensityMatrix, PolarizationState, StokesVector, WaveplateSetting,
};
use crate::process::poisson_count;

pub const DEFAULT_MC_TRIALS: usize = 10_000;

/// Classical measure-and-prepare bound on the average fidelity.
pub const CLASSICAL_BOUND: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NamedState {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl NamedState {
    pub const ALL: [NamedState; 6] = [
        NamedState::H,
        NamedState::V,
        NamedState::D,
        NamedState::A,
        NamedState::R,
        NamedState::L,
    ];

    pub fn state(&self) -> PolarizationState {
        match self {
            NamedState::H => PolarizationState::h(),
            NamedState::V => PolarizationState::v(),
            NamedState::D => PolarizationState::d(),
            NamedState::A => PolarizationState::a(),
            NamedState::R => PolarizationState::r(),
            NamedState::L => PolarizationState::l(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "H" | "h" => NamedState::H,
            "V" | "v" => NamedState::V,
            "D" | "d" => NamedState::D,
            "A" | "a" => NamedState::A,
            "R" | "r" => NamedState::R,
            "L" | "l" => NamedState::L,
            _ => return None,
        })
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Analyzer settings (QWP, HWP) that map each state onto the transmitted
/// `|H⟩` port of the PBS.
pub fn projection_schedule() -> [(NamedState, WaveplateSetting); 6] {
    [
        (NamedState::H, WaveplateSetting::new(0.0, 0.0)),
        (NamedState::V, WaveplateSetting::new(0.0, 45.0)),
        (NamedState::D, WaveplateSetting::new(45.0, 22.5)),
        (NamedState::A, WaveplateSetting::new(45.0, 67.5)),
        (NamedState::R, WaveplateSetting::new(45.0, 0.0)),
        (NamedState::L, WaveplateSetting::new(0.0, 22.5)),
    ]
}

/// Expected teleported state for each input under the Ψ⁻ herald, with no
/// corrective unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMap {
    pub pairs: Vec<(NamedState, NamedState)>,
}

impl TargetMap {
    pub fn paper() -> Self {
        Self {
            pairs: vec![
                (NamedState::H, NamedState::V),
                (NamedState::D, NamedState::A),
                (NamedState::R, NamedState::R),
            ],
        }
    }

    pub fn target(&self, input: NamedState) -> Option<NamedState> {
        self.pairs
            .iter()
            .find(|(i, _)| *i == input)
            .map(|(_, t)| *t)
    }

    pub fn entries(&self) -> Vec<(PolarizationState, PolarizationState)> {
        self.pairs
            .iter()
            .map(|(i, t)| (i.state(), t.state()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BasisCounts {
    pub c_h: u64,
    pub c_v: u64,
    pub c_d: u64,
    pub c_a: u64,
    pub c_r: u64,
    pub c_l: u64,
}

impl BasisCounts {
    pub fn get(&self, s: NamedState) -> u64 {
        match s {
            NamedState::H => self.c_h,
            NamedState::V => self.c_v,
            NamedState::D => self.c_d,
            NamedState::A => self.c_a,
            NamedState::R => self.c_r,
            NamedState::L => self.c_l,
        }
    }

    pub fn set(&mut self, s: NamedState, value: u64) {
        *match s {
            NamedState::H => &mut self.c_h,
            NamedState::V => &mut self.c_v,
            NamedState::D => &mut self.c_d,
            NamedState::A => &mut self.c_a,
            NamedState::R => &mut self.c_r,
            NamedState::L => &mut self.c_l,
        } = value;
    }

    pub fn total(&self) -> u64 {
        NamedState::ALL.iter().map(|&s| self.get(s)).sum()
    }

    /// Counts proportional to Born probabilities, `n` per basis pair.
    pub fn born(rho: &DensityMatrix, n: f64) -> [f64; 6] {
        NamedState::ALL.map(|s| n * crate::polarization::project(rho, &s.state()))
    }
}

fn ratio(a: f64, b: f64, axis: char) -> Result<f64> {
    let s = a + b;
    if s <= 0.0 {
        return Err(Error::UndefinedAxis { axis });
    }
    Ok((a - b) / s)
}

/// Stokes parameters from real-valued counts ordered H, V, D, A, R, L.
pub fn stokes_from_values(c: &[f64; 6]) -> Result<StokesVector> {
    Ok(StokesVector::new(
        ratio(c[2], c[3], 'x')?,
        ratio(c[4], c[5], 'y')?,
        ratio(c[0], c[1], 'z')?,
    ))
}

pub fn stokes_from_counts(c: &BasisCounts) -> Result<StokesVector> {
    stokes_from_values(&NamedState::ALL.map(|s| c.get(s) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub counts: BasisCounts,
    pub stokes: StokesVector,
    /// Linear inversion; may be unphysical.
    pub rho: DensityMatrix,
    /// `|S| > 1` occurred.
    pub physicality_flag: bool,
    /// Stokes vector rescaled onto the unit ball.
    pub nearest_physical_rho: DensityMatrix,
    pub fidelity: Option<f64>,
    pub fidelity_sigma: Option<f64>,
}

pub fn reconstruct(c: &BasisCounts) -> Result<TomographyResult> {
    let stokes = stokes_from_counts(c)?;
    Ok(TomographyResult {
        counts: *c,
        stokes,
        rho: stokes_to_rho(stokes),
        physicality_flag: !stokes.is_physical(),
        nearest_physical_rho: stokes_to_rho(stokes.clamped_to_ball()),
        fidelity: None,
        fidelity_sigma: None,
    })
}

/// `⟨ψ|½(I + S·σ)|ψ⟩ = ½(1 + S·t)` with `t` the Stokes vector of `ψ`.
pub fn fidelity_from_stokes(s: &StokesVector, target: &PolarizationState) -> f64 {
    let t = target.stokes();
    0.5 * (1.0 + s.x * t.x + s.y * t.y + s.z * t.z)
}

/// Point fidelity and Monte Carlo standard deviation. Resamples in which a
/// basis pair is empty have no defined fidelity and are skipped.
pub fn fidelity_with_mc<R: Rng + ?Sized>(
    c: &BasisCounts,
    target: &PolarizationState,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Domain("Monte Carlo needs at least one trial".into()));
    }
    let f = fidelity_from_stokes(&stokes_from_counts(c)?, target);
    let means = NamedState::ALL.map(|s| c.get(s) as f64);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let draw = means.map(|m| poisson_count(m, rng) as f64);
        if let Ok(s) = stokes_from_values(&draw) {
            samples.push(fidelity_from_stokes(&s, target));
        }
    }
    Ok((f, std_dev(&samples)))
}

pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Threefold counts for one input state, per analyzer setting. `None` marks
/// an acquisition that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAcquisition {
    pub input: NamedState,
    pub counts: Vec<(NamedState, Option<u64>)>,
}

impl StateAcquisition {
    pub fn complete(input: NamedState, counts: BasisCounts) -> Self {
        Self {
            input,
            counts: NamedState::ALL
                .iter()
                .map(|&s| (s, Some(counts.get(s))))
                .collect(),
        }
    }

    fn basis_counts(&self) -> Result<BasisCounts> {
        let mut out = BasisCounts::default();
        for s in NamedState::ALL {
            let v = self
                .counts
                .iter()
                .find(|(b, _)| *b == s)
                .and_then(|(_, c)| *c)
                .ok_or_else(|| {
                    Error::IncompleteRun(format!("input {}: missing {} projection", self.input, s))
                })?;
            out.set(s, v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResult {
    pub input: NamedState,
    pub target: NamedState,
    pub tomography: TomographyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub states: Vec<StateResult>,
    pub average_fidelity: f64,
    /// Per-state σ combined as uncorrelated.
    pub average_sigma: f64,
    pub beats_classical_bound: bool,
    pub mc_trials: usize,
}

pub fn evaluate_teleport_run<R: Rng + ?Sized>(
    acquisitions: &[StateAcquisition],
    targets: &TargetMap,
    trials: usize,
    rng: &mut R,
) -> Result<RunEvaluation> {
    if acquisitions.is_empty() {
        return Err(Error::IncompleteRun("no input states acquired".into()));
    }
    let mut states = Vec::new();
    for acq in acquisitions {
        let target = targets
            .target(acq.input)
            .ok_or_else(|| Error::IncompleteRun(format!("no target for input {}", acq.input)))?;
        let counts = acq.basis_counts()?;
        let mut tomography =
            reconstruct(&counts).map_err(|e| e.context(format!("input {}", acq.input)))?;
        let (f, sigma) = fidelity_with_mc(&counts, &target.state(), trials, rng)?;
        tomography.fidelity = Some(f);
        tomography.fidelity_sigma = Some(sigma);
        states.push(StateResult {
            input: acq.input,
            target,
            tomography,
        });
    }
    let n = states.len() as f64;
    let average_fidelity = states
        .iter()
        .map(|s| s.tomography.fidelity.unwrap_or(0.0))
        .sum::<f64>()
        / n;
    let average_sigma = states
        .iter()
        .map(|s| s.tomography.fidelity_sigma.unwrap_or(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
        / n;
    Ok(RunEvaluation {
        states,
        average_fidelity,
        average_sigma,
        beats_classical_bound: average_fidelity > CLASSICAL_BOUND,
        mc_trials: trials,
    })
}
