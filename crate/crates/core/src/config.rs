//! Scenario configuration (TOML) and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{CompensationMode, CrosstalkConfig, FiberConfig};
use crate::source::{PairSourceConfig, WcsConfig};
use crate::timetag::DetectorConfig;
use crate::tomography::{NamedState, DEFAULT_MC_TRIALS};

pub const BUNDLED: &[(&str, &str)] = &[
    ("local", include_str!("../scenarios/local.toml")),
    ("metro30km", include_str!("../scenarios/metro30km.toml")),
    (
        "metro30km_traffic",
        include_str!("../scenarios/metro30km_traffic.toml"),
    ),
];

/// Factor applied to acquisition times by `--fast`.
pub const FAST_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    pub ch1: DetectorConfig,
    pub ch2: DetectorConfig,
    pub ch3: DetectorConfig,
}

impl Detectors {
    pub fn get(&self, channel: u8) -> &DetectorConfig {
        match channel {
            1 => &self.ch1,
            2 => &self.ch2,
            _ => &self.ch3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Full width: every tag of a group within this span.
    pub width_ps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Time step of the birefringence random walk, s.
    #[serde(default = "default_drift_step")]
    pub drift_step_s: f64,
    /// Length of one generation block, s.
    #[serde(default = "default_block")]
    pub block_s: f64,
    /// Gaussian coherence time of the interfering photons, ps.
    #[serde(default = "default_coherence")]
    pub coherence_ps: f64,
}

fn default_drift_step() -> f64 {
    1.0
}
fn default_block() -> f64 {
    1.0
}
fn default_coherence() -> f64 {
    300.0
}
fn default_trials() -> usize {
    DEFAULT_MC_TRIALS
}
fn default_inputs() -> Vec<NamedState> {
    vec![NamedState::H, NamedState::D, NamedState::R]
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            drift_step_s: default_drift_step(),
            block_s: default_block(),
            coherence_ps: default_coherence(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomConfig {
    pub delays_ps: Vec<f64>,
    /// Integration time per delay, s.
    pub dwell_s: f64,
    /// Delays at or beyond this magnitude form the far (no-interference) level.
    pub far_ps: f64,
}

/// Acceptance bands checked by `run --check` and `hom --check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBands {
    pub average_fidelity: [f64; 2],
    #[serde(default)]
    pub visibility: Option<[f64; 2]>,
}

impl CheckBands {
    /// Widens each band about its centre by `factor`.
    pub fn widened(&self, factor: f64) -> Self {
        let w = |b: [f64; 2]| {
            let c = 0.5 * (b[0] + b[1]);
            let h = 0.5 * (b[1] - b[0]) * factor;
            [c - h, c + h]
        };
        Self {
            average_fidelity: w(self.average_fidelity),
            visibility: self.visibility.map(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_inputs")]
    pub inputs: Vec<NamedState>,
    /// Acquisition time per analyzer setting, s.
    pub acquisition_s: f64,
    #[serde(default = "default_trials")]
    pub mc_trials: usize,
    pub wcs: WcsConfig,
    pub pair: PairSourceConfig,
    pub fiber: FiberConfig,
    #[serde(default = "CrosstalkConfig::none")]
    pub crosstalk: CrosstalkConfig,
    pub detectors: Detectors,
    pub window: WindowConfig,
    pub compensation: CompensationMode,
    #[serde(default)]
    pub simulation: SimulationConfig,
    pub hom: HomConfig,
    #[serde(default)]
    pub check: Option<CheckBands>,
}

/// One validation problem, anchored to a field path and, when it can be
/// found, a line of the source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

fn diagnostics_error(diags: &[Diagnostic]) -> Error {
    Error::Config(
        diags
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("\n"),
    )
}

/// Line (1-based) of `path` in TOML `source`: the `[section]` header is
/// found first, then the key inside it.
pub fn locate(source: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, path),
    };
    let key = key.split('[').next().unwrap_or(key);
    let mut in_section = section.is_none();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            in_section = Some(name) == section;
            continue;
        }
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl LinkConfig {
    pub fn from_toml(source: &str) -> Result<Self> {
        let cfg: LinkConfig = toml::from_str(source).map_err(|e| Error::Config(e.to_string()))?;
        let diags = cfg.diagnostics(Some(source));
        if !diags.is_empty() {
            return Err(diagnostics_error(&diags));
        }
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, src) = BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{name}` (bundled: {})",
                BUNDLED
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        Self::from_toml(src).map_err(|e| e.context(format!("bundled scenario {name}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let diags = self.diagnostics(None);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diagnostics_error(&diags))
        }
    }

    /// Every field-level and cross-field problem.
    pub fn diagnostics(&self, source: Option<&str>) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |path: &str, message: String| {
            out.push(Diagnostic {
                path: path.to_string(),
                message,
                line: source.and_then(|s| locate(s, path)),
            });
        };
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();

        if self.name.trim().is_empty() {
            push("name", "must not be empty".into());
        }
        if self.inputs.is_empty() {
            push("inputs", "at least one input state is required".into());
        }
        if !(self.acquisition_s > 0.0) || !self.acquisition_s.is_finite() {
            push(
                "acquisition_s",
                format!("must be positive, got {}", self.acquisition_s),
            );
        }
        if self.mc_trials == 0 {
            push("mc_trials", "must be at least 1".into());
        }

        if !nonneg(self.wcs.detected_rate) {
            push(
                "wcs.detected_rate",
                format!("must be non-negative, got {}", self.wcs.detected_rate),
            );
        }
        if !(0.0..=1.0).contains(&self.wcs.ch1_fraction) {
            push(
                "wcs.ch1_fraction",
                format!("must lie in [0, 1], got {}", self.wcs.ch1_fraction),
            );
        }

        let p = &self.pair;
        for (path, v) in [
            ("pair.pair_coincidence_rate", p.pair_coincidence_rate),
            ("pair.idler_rate_ch", p.idler_rate_ch[0]),
            ("pair.idler_rate_ch", p.idler_rate_ch[1]),
            ("pair.signal_rate", p.signal_rate),
            (
                "pair.brightness_visibility_slope",
                p.brightness_visibility_slope,
            ),
        ] {
            if !nonneg(v) {
                push(path, format!("must be non-negative, got {v}"));
            }
        }
        if !(0.25..=1.0).contains(&p.pair_fidelity) {
            push(
                "pair.pair_fidelity",
                format!("must lie in [0.25, 1], got {}", p.pair_fidelity),
            );
        }
        if !(0.0..=1.0).contains(&p.overlap_at_zero_brightness) {
            push(
                "pair.overlap_at_zero_brightness",
                format!("must lie in [0, 1], got {}", p.overlap_at_zero_brightness),
            );
        }
        let c = p.coincidence_rates();
        for k in 0..2 {
            // Pairs are generated before the signal analyzer, at twice the
            // detected coincidence rate, and every partner idler is detected.
            if 2.0 * c[k] > p.idler_rate_ch[k] {
                push(
                    "pair.pair_coincidence_rate",
                    format!(
                        "coincidences on channel {} exceed half the idler singles ({} > {})",
                        k + 1,
                        c[k],
                        p.idler_rate_ch[k] / 2.0
                    ),
                );
            }
        }
        if c[0] + c[1] > p.signal_rate {
            push(
                "pair.pair_coincidence_rate",
                format!(
                    "coincidences ({}) exceed the signal singles ({})",
                    c[0] + c[1],
                    p.signal_rate
                ),
            );
        }

        for (path, v) in [
            ("fiber.length_km", self.fiber.length_km),
            ("fiber.atten_db_per_km", self.fiber.atten_db_per_km),
            ("fiber.excess_loss_db", self.fiber.excess_loss_db),
            ("fiber.drift_rate", self.fiber.drift_rate),
            (
                "crosstalk.background_rate_ch3",
                self.crosstalk.background_rate_ch3,
            ),
            (
                "crosstalk.bandpass_suppression_db",
                self.crosstalk.bandpass_suppression_db,
            ),
        ] {
            if !nonneg(v) {
                push(path, format!("must be non-negative, got {v}"));
            }
        }

        for (name, d) in [
            ("ch1", &self.detectors.ch1),
            ("ch2", &self.detectors.ch2),
            ("ch3", &self.detectors.ch3),
        ] {
            if let Err(Error::Config(msg)) = d.validate(&format!("detectors.{name}")) {
                let path = msg
                    .split_whitespace()
                    .next()
                    .unwrap_or("detectors")
                    .to_string();
                let rest = msg[path.len()..].trim().to_string();
                push(&path, rest);
            }
        }
        if self.window.width_ps == 0 {
            push("window.width_ps", "must be positive".into());
        }
        if let CompensationMode::Periodic { interval_s } = self.compensation {
            if !(interval_s > 0.0) {
                push(
                    "compensation.interval_s",
                    format!("must be positive, got {interval_s}"),
                );
            }
        }
        let s = &self.simulation;
        for (path, v) in [
            ("simulation.drift_step_s", s.drift_step_s),
            ("simulation.block_s", s.block_s),
            ("simulation.coherence_ps", s.coherence_ps),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                push(path, format!("must be positive, got {v}"));
            }
        }
        if self.hom.delays_ps.is_empty() {
            push("hom.delays_ps", "must not be empty".into());
        } else {
            if !self
                .hom
                .delays_ps
                .iter()
                .any(|d| d.abs() >= self.hom.far_ps)
            {
                push("hom.far_ps", "no delay reaches the far level".into());
            }
            if !self.hom.delays_ps.iter().any(|d| d.abs() < self.hom.far_ps) {
                push("hom.delays_ps", "no delay near zero for the dip".into());
            }
        }
        if !(self.hom.dwell_s > 0.0) {
            push(
                "hom.dwell_s",
                format!("must be positive, got {}", self.hom.dwell_s),
            );
        }
        if let Some(check) = &self.check {
            if check.average_fidelity[0] > check.average_fidelity[1] {
                push(
                    "check.average_fidelity",
                    "lower bound exceeds upper bound".into(),
                );
            }
            if let Some(v) = check.visibility {
                if v[0] > v[1] {
                    push("check.visibility", "lower bound exceeds upper bound".into());
                }
            }
        }
        out
    }

    /// Shortened acquisitions for quick runs; bands widen by √factor.
    pub fn fast(&self) -> Self {
        let mut c = self.clone();
        c.acquisition_s /= FAST_FACTOR;
        c.hom.dwell_s /= FAST_FACTOR;
        c.check = c.check.map(|b| b.widened(FAST_FACTOR.sqrt()));
        c
    }

    /// Total length of the acquisition sequence, s.
    pub fn run_duration_s(&self) -> f64 {
        self.inputs.len() as f64 * 6.0 * self.acquisition_s
    }
}
