//! Scenario execution: the full tomography sequence, the in-situ HOM scan,
//! reports and figure data.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{hom_scan, HomRates, HomScan, OverlapModel};
use crate::budget::{rate_budget, RateBudget};
use crate::config::{CheckBands, LinkConfig};
use crate::engine::{acquire, AcquisitionCounts, AcquisitionPlan, LinkModel};
use crate::error::{Error, Result};
use crate::fiber::{transmission, ChannelTimeline, CompensationMode};
use crate::rng::substream;
use crate::timetag::io::{write_binary, TagFile};
use crate::timetag::{estimate_visibility_averaged, TimeTag};
use crate::tomography::{
    evaluate_teleport_run, projection_schedule, BasisCounts, NamedState, RunEvaluation,
    StateAcquisition, TargetMap,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSummary {
    pub input: NamedState,
    pub basis: NamedState,
    pub start_s: f64,
    pub duration_s: f64,
    pub counts: AcquisitionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomReport {
    pub zeta: f64,
    pub rates: HomRates,
    pub scan: HomScan,
    pub far_ps: f64,
    pub visibility: f64,
    pub visibility_sigma: f64,
    pub expected_visibility: f64,
}

/// Measured rates over the whole run, and what they imply at the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostics {
    pub singles_rate: [f64; 3],
    /// Channel-3 coincidence rates with channels 1 and 2.
    pub twofold_rate: [f64; 2],
    pub triple_rate: f64,
    pub heralded_fraction: f64,
    pub fiber_loss_db: f64,
    pub fiber_transmission: f64,
    /// Channel 2–3 coincidences corrected for detector efficiency and fiber
    /// transmission.
    pub source_pair_rate: f64,
    pub recalibrations: usize,
    pub budget: RateBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub value: f64,
    pub band: [f64; 2],
    pub passed: bool,
}

impl BandCheck {
    fn new(value: f64, band: [f64; 2]) -> Self {
        Self {
            value,
            band,
            passed: value >= band[0] && value <= band[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub average_fidelity: BandCheck,
    pub visibility: Option<BandCheck>,
    pub passed: bool,
}

impl CheckOutcome {
    /// Quantities passed as `None` were not measured and are not checked.
    fn evaluate(bands: &CheckBands, fidelity: Option<f64>, visibility: Option<f64>) -> Self {
        let average_fidelity = BandCheck::new(fidelity.unwrap_or(f64::NAN), bands.average_fidelity);
        let visibility_check = bands
            .visibility
            .map(|b| BandCheck::new(visibility.unwrap_or(f64::NAN), b));
        let passed = (fidelity.is_none() || average_fidelity.passed)
            && (visibility.is_none() || visibility_check.as_ref().map_or(true, |v| v.passed));
        Self {
            average_fidelity,
            visibility: visibility_check,
            passed,
        }
    }
}

/// Wall-clock details; everything else in a report is a function of the
/// configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub created_unix_s: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportReport {
    pub scenario: String,
    pub seed: u64,
    pub config: LinkConfig,
    pub acquisitions: Vec<AcquisitionSummary>,
    pub evaluation: RunEvaluation,
    pub hom: HomReport,
    pub diagnostics: RateDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RunMetadata>,
}

impl TeleportReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON without the wall-clock metadata, byte-identical for a fixed
    /// configuration and seed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.metadata = None;
        r.to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Report schema, written next to every report.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Tags of one acquisition, for dumping.
#[derive(Debug, Clone)]
pub struct AcquisitionTags {
    pub input: NamedState,
    pub basis: NamedState,
    pub tags: Vec<TimeTag>,
}

pub fn acquisition_plans(cfg: &LinkConfig) -> Vec<AcquisitionPlan> {
    let mut plans = Vec::new();
    for &input in &cfg.inputs {
        for (basis, _) in projection_schedule() {
            let start_s = plans.len() as f64 * cfg.acquisition_s;
            plans.push(AcquisitionPlan {
                input,
                basis,
                start_s,
                duration_s: cfg.acquisition_s,
            });
        }
    }
    plans
}

pub fn build_timeline(cfg: &LinkConfig) -> Result<ChannelTimeline> {
    ChannelTimeline::build(
        &cfg.fiber,
        cfg.compensation,
        cfg.run_duration_s(),
        cfg.simulation.drift_step_s,
        &mut substream(cfg.seed, "fiber"),
    )
}

/// HOM scan with Poisson counts at each delay, using the in-situ rates.
pub fn run_hom(cfg: &LinkConfig) -> Result<HomReport> {
    cfg.validate()?;
    let budget = rate_budget(cfg)?;
    let zeta = OverlapModel::clamped(budget.zeta);
    let mut rng = substream(cfg.seed, "hom");
    let scan = hom_scan(
        &budget.hom,
        zeta,
        &cfg.hom.delays_ps,
        cfg.hom.dwell_s,
        Some(&mut rng),
    );
    let (dip, far, n_far) = scan.dip_and_far(cfg.hom.far_ps)?;
    let (visibility, visibility_sigma) = estimate_visibility_averaged(dip, far, n_far)?;
    let expected_visibility = scan.expected_visibility(cfg.hom.far_ps)?;
    Ok(HomReport {
        zeta: budget.zeta,
        rates: budget.hom,
        scan,
        far_ps: cfg.hom.far_ps,
        visibility,
        visibility_sigma,
        expected_visibility,
    })
}

/// Tomography counts for every input and basis, plus per-acquisition tags
/// when `keep_tags` is set.
pub fn run_acquisitions(
    cfg: &LinkConfig,
    keep_tags: bool,
) -> Result<(
    Vec<AcquisitionSummary>,
    Vec<AcquisitionTags>,
    ChannelTimeline,
)> {
    let model = LinkModel::new(cfg)?;
    let timeline = build_timeline(cfg)?;
    let plans = acquisition_plans(cfg);
    let results: Vec<(AcquisitionCounts, Option<Vec<TimeTag>>)> = plans
        .par_iter()
        .map(|p| {
            acquire(&model, &timeline, p, cfg.seed, keep_tags).map_err(|e| e.context(p.label()))
        })
        .collect::<Result<_>>()?;
    let mut summaries = Vec::with_capacity(plans.len());
    let mut tags = Vec::new();
    for (plan, (counts, t)) in plans.iter().zip(results) {
        summaries.push(AcquisitionSummary {
            input: plan.input,
            basis: plan.basis,
            start_s: plan.start_s,
            duration_s: plan.duration_s,
            counts,
        });
        if let Some(t) = t {
            tags.push(AcquisitionTags {
                input: plan.input,
                basis: plan.basis,
                tags: t,
            });
        }
    }
    Ok((summaries, tags, timeline))
}

fn state_acquisitions(cfg: &LinkConfig, summaries: &[AcquisitionSummary]) -> Vec<StateAcquisition> {
    cfg.inputs
        .iter()
        .map(|&input| {
            let mut c = BasisCounts::default();
            for s in summaries.iter().filter(|s| s.input == input) {
                c.set(s.basis, s.counts.triples);
            }
            StateAcquisition::complete(input, c)
        })
        .collect()
}

/// Average teleportation fidelity from freshly simulated counts.
pub fn evaluate(cfg: &LinkConfig, summaries: &[AcquisitionSummary]) -> Result<RunEvaluation> {
    let mut rng = substream(cfg.seed, "tomography");
    evaluate_teleport_run(
        &state_acquisitions(cfg, summaries),
        &TargetMap::paper(),
        cfg.mc_trials,
        &mut rng,
    )
}

fn diagnostics(
    cfg: &LinkConfig,
    summaries: &[AcquisitionSummary],
    timeline: &ChannelTimeline,
) -> Result<RateDiagnostics> {
    let total_s: f64 = summaries.iter().map(|s| s.duration_s).sum();
    let sum = |f: &dyn Fn(&AcquisitionCounts) -> u64| {
        summaries.iter().map(|s| f(&s.counts)).sum::<u64>() as f64
    };
    let triples = sum(&|c| c.triples);
    let heralded = sum(&|c| c.heralded_triples);
    let twofold_rate = [
        sum(&|c| c.twofold[0]) / total_s,
        sum(&|c| c.twofold[1]) / total_s,
    ];
    let t = transmission(&cfg.fiber);
    let eta = cfg.detectors.ch2.efficiency * cfg.detectors.ch3.efficiency * t;
    Ok(RateDiagnostics {
        singles_rate: [
            sum(&|c| c.singles[0]) / total_s,
            sum(&|c| c.singles[1]) / total_s,
            sum(&|c| c.singles[2]) / total_s,
        ],
        twofold_rate,
        triple_rate: triples / total_s,
        heralded_fraction: if triples > 0.0 {
            heralded / triples
        } else {
            0.0
        },
        fiber_loss_db: cfg.fiber.total_loss_db(),
        fiber_transmission: t,
        source_pair_rate: if eta > 0.0 {
            twofold_rate[1] / eta
        } else {
            0.0
        },
        recalibrations: timeline.recalibrations,
        budget: rate_budget(cfg)?,
    })
}

/// Runs the full scenario: 6 analyzer settings per input, tomography with
/// Monte Carlo errors, the HOM scan and the optional band check.
pub fn run_scenario(
    cfg: &LinkConfig,
    keep_tags: bool,
) -> Result<(TeleportReport, Vec<AcquisitionTags>)> {
    let started = Instant::now();
    cfg.validate()?;
    let (summaries, tags, timeline) = run_acquisitions(cfg, keep_tags)?;
    let evaluation = evaluate(cfg, &summaries)?;
    let hom = run_hom(cfg)?;
    let check = cfg.check.as_ref().map(|b| {
        CheckOutcome::evaluate(b, Some(evaluation.average_fidelity), Some(hom.visibility))
    });
    let diagnostics = diagnostics(cfg, &summaries, &timeline)?;
    let report = TeleportReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        acquisitions: summaries,
        evaluation,
        hom,
        diagnostics,
        check,
        metadata: Some(RunMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_s: started.elapsed().as_secs_f64(),
        }),
    };
    Ok((report, tags))
}

/// Band check for a standalone HOM run.
pub fn check_hom(cfg: &LinkConfig, hom: &HomReport) -> Option<CheckOutcome> {
    cfg.check
        .as_ref()
        .map(|b| CheckOutcome::evaluate(b, None, Some(hom.visibility)))
}

/// Average fidelity with the configured drift against the same run with a
/// frozen fiber. Both share every random stream, including the initial
/// fiber state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationStudy {
    pub frozen_fidelity: f64,
    pub drifting_fidelity: f64,
    /// `(F_frozen − F_drifting) / F_frozen`.
    pub degradation: f64,
}

pub fn compensation_study(cfg: &LinkConfig, mode: CompensationMode) -> Result<CompensationStudy> {
    let mut frozen = cfg.clone();
    frozen.fiber.drift_rate = 0.0;
    let mut drifting = cfg.clone();
    drifting.compensation = mode;
    let f0 = evaluate(&frozen, &run_acquisitions(&frozen, false)?.0)?.average_fidelity;
    let f1 = evaluate(&drifting, &run_acquisitions(&drifting, false)?.0)?.average_fidelity;
    Ok(CompensationStudy {
        frozen_fidelity: f0,
        drifting_fidelity: f1,
        degradation: (f0 - f1) / f0,
    })
}

/// CSV tables behind the fidelity and HOM figures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FigureData {
    /// One row per received state plus the average, one `F, σ` column
    /// pair per report, and the classical bound.
    pub fidelity_csv: String,
    /// Long format: one row per report and delay.
    pub hom_csv: String,
}

pub fn export_figure_data(reports: &[TeleportReport]) -> Result<FigureData> {
    if reports.is_empty() {
        return Err(Error::Domain("no reports to export".into()));
    }
    // Column labels stay unique when a scenario appears with several seeds.
    let labels: Vec<String> = reports
        .iter()
        .map(|r| {
            if reports.iter().filter(|o| o.scenario == r.scenario).count() > 1 {
                format!("{}_seed{}", r.scenario, r.seed)
            } else {
                r.scenario.clone()
            }
        })
        .collect();
    let mut rows: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.evaluation.states {
            let key = s.target.to_string();
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
    }
    let mut fidelity_csv = String::from("state");
    for l in &labels {
        fidelity_csv.push_str(&format!(",{l},{l}_sigma"));
    }
    fidelity_csv.push_str(",classical_bound\n");
    let cell = |v: Option<f64>, s: Option<f64>| match (v, s) {
        (Some(v), Some(s)) => format!(",{v:.6},{s:.6}"),
        (Some(v), None) => format!(",{v:.6},"),
        _ => ",,".to_string(),
    };
    for key in &rows {
        fidelity_csv.push_str(key);
        for r in reports {
            let s = r
                .evaluation
                .states
                .iter()
                .find(|s| &s.target.to_string() == key);
            fidelity_csv.push_str(&cell(
                s.and_then(|s| s.tomography.fidelity),
                s.and_then(|s| s.tomography.fidelity_sigma),
            ));
        }
        fidelity_csv.push_str(&format!(",{:.6}\n", 2.0 / 3.0));
    }
    fidelity_csv.push_str("average");
    for r in reports {
        fidelity_csv.push_str(&cell(
            Some(r.evaluation.average_fidelity),
            Some(r.evaluation.average_sigma),
        ));
    }
    fidelity_csv.push_str(&format!(",{:.6}\n", 2.0 / 3.0));

    let mut hom_csv = String::from("scenario,seed,delay_ps,expected_rate,counts\n");
    for r in reports {
        for p in &r.hom.scan.points {
            let counts = p.counts.map(|c| c.to_string()).unwrap_or_default();
            hom_csv.push_str(&format!(
                "{},{},{},{:.6},{}\n",
                r.scenario, r.seed, p.delay_ps, p.expected, counts
            ));
        }
    }
    Ok(FigureData {
        fidelity_csv,
        hom_csv,
    })
}

/// Writes one binary tag file per acquisition into `dir`.
pub fn write_tag_dumps(
    dir: &Path,
    report: &TeleportReport,
    tags: &[AcquisitionTags],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for a in tags {
        let path = dir.join(format!("tags_{}_{}.ttag", a.input, a.basis));
        let file = TagFile {
            channels: vec![
                (1, "bsm-v".into()),
                (2, "bsm-h".into()),
                (3, "signal".into()),
            ],
            metadata: serde_json::json!({
                "scenario": report.scenario,
                "seed": report.seed,
                "input": a.input,
                "basis": a.basis,
                "window_ps": report.config.window.width_ps,
                "pruned": true,
            }),
            tags: a.tags.clone(),
        };
        let f = std::fs::File::create(&path)
            .map_err(|e| Error::from(e).context(path.display().to_string()))?;
        write_binary(std::io::BufWriter::new(f), &file)?;
        out.push(path);
    }
    Ok(out)
}
