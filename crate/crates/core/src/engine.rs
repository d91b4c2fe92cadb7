//! Event-level acquisition of one analyzer setting.
//!
//! Rates in the configuration are detector-referred, so photons are
//! generated directly at their detected rates and efficiencies are not
//! applied again. Each pair event (at twice the detected coincidence rate,
//! before the signal analyzer) yields a tagged partner idler on BSM channel
//! 1 or 2 and a signal photon. The signal carries the teleported state if a
//! WCS tag on the other BSM channel falls within the window of its partner,
//! and is maximally mixed otherwise. It then passes the fiber and the
//! analyzer with the Born probability.
//!
//! BSM channels run at Mcps, so their uncorrelated tags are only sampled
//! near channel-3 events: around every pair signal, and around those
//! uncorrelated channel-3 events that have a BSM tag within reach. Tags that
//! cannot form a coincidence only add to the singles counts, which are drawn
//! in aggregate. Tags in no possible coincidence are pruned before counting,
//! which leaves the greedy counter's result unchanged.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bsm::{teleport_conditional_state, OverlapModel};
use crate::budget::bsm_ports;
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::fiber::ChannelTimeline;
use crate::polarization::{analyzer_state, project, DensityMatrix, PolarizationState};
use crate::process::{poisson_count, poisson_times, poisson_vec, Domain, PS_PER_S};
use crate::rng::{substream, SimRng};
use crate::source::WernerState;
use crate::timetag::{
    merge_streams, to_tag_time, CoincidenceCounter, CoincidenceWindow, DetectorConfig, TimeTag,
};
use crate::tomography::{projection_schedule, NamedState};

/// Tags later than `block end − CARRY_PS` wait for the next block, so that
/// jitter across the boundary cannot reorder the stream.
const CARRY_PS: f64 = 5_000.0;

/// Detected rates and detector parameters of one scenario.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub width_ps: u64,
    pub wcs_ref: [f64; 2],
    pub coincidence: [f64; 2],
    /// Idler singles not partnered with a generated pair event, plus darks.
    pub idler_uncorrelated: [f64; 2],
    pub signal_uncorrelated: f64,
    pub dark3: f64,
    pub background3: f64,
    pub detectors: [DetectorConfig; 3],
    pub werner: WernerState,
    pub overlap: OverlapModel,
    pub block_s: f64,
}

impl LinkModel {
    pub fn new(cfg: &LinkConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.pair.coincidence_rates();
        let d = &cfg.detectors;
        Ok(Self {
            width_ps: cfg.window.width_ps,
            wcs_ref: cfg.wcs.reference_rates(),
            coincidence: c,
            idler_uncorrelated: [
                cfg.pair.idler_rate_ch[0] - 2.0 * c[0] + d.ch1.dark_rate,
                cfg.pair.idler_rate_ch[1] - 2.0 * c[1] + d.ch2.dark_rate,
            ],
            signal_uncorrelated: cfg.pair.signal_rate - c[0] - c[1],
            dark3: d.ch3.dark_rate,
            background3: cfg.crosstalk.effective_rate(),
            detectors: [d.ch1, d.ch2, d.ch3],
            werner: cfg.pair.werner()?,
            overlap: cfg.pair.overlap(),
            block_s: cfg.simulation.block_s,
        })
    }

    /// Detected WCS rates on channels 1 and 2 for input `psi`.
    pub fn wcs_rates(&self, psi: &PolarizationState) -> [f64; 2] {
        let p = bsm_ports();
        [
            self.wcs_ref[0] * 2.0 * p[0].overlap(psi),
            self.wcs_ref[1] * 2.0 * p[1].overlap(psi),
        ]
    }

    fn guard_ps(&self) -> f64 {
        let s = self
            .detectors
            .iter()
            .map(|d| d.jitter_sigma_ps)
            .fold(0.0, f64::max);
        self.width_ps as f64 + 20.0 * s + 1.0
    }
}

/// One analyzer setting for one input state, placed on the run timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionPlan {
    pub input: NamedState,
    pub basis: NamedState,
    pub start_s: f64,
    pub duration_s: f64,
}

impl AcquisitionPlan {
    pub fn label(&self) -> String {
        format!("{}/{}", self.input, self.basis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AcquisitionCounts {
    pub triples: u64,
    /// Triples whose signal tag carried a teleported state.
    pub heralded_triples: u64,
    /// Channel-3 coincidences with channel 1 and with channel 2.
    pub twofold: [u64; 2],
    pub singles: [u64; 3],
    pub pair_events: u64,
    pub heralds: u64,
}

#[derive(Debug, Clone, Copy)]
struct PairEvent {
    channel: usize,
    t0: f64,
    idler: f64,
    signal: f64,
}

fn gauss(rng: &mut SimRng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let n: f64 = StandardNormal.sample(rng);
        n * sigma
    } else {
        0.0
    }
}

fn merge_sorted<T: Copy + PartialOrd>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// For each of the sorted `tags`, whether some element of the sorted
/// `others` lies within `w`.
fn flag_near(tags: &[u64], others: &[u64], w: u64) -> Vec<bool> {
    let mut j = 0;
    tags.iter()
        .map(|&t| {
            let lo = t.saturating_sub(w);
            while j < others.len() && others[j] < lo {
                j += 1;
            }
            j < others.len() && others[j] <= t.saturating_add(w)
        })
        .collect()
}

fn apply_dead_time(tags: &mut Vec<u64>, dead_ps: f64) {
    if dead_ps <= 0.0 {
        return;
    }
    let dead = dead_ps.round() as u64;
    let mut last: Option<u64> = None;
    tags.retain(|&t| match last {
        Some(l) if t - l < dead => false,
        _ => {
            last = Some(t);
            true
        }
    });
}

/// Uncorrelated BSM tags near channel-3 events. Marks 0–3 are WCS on
/// channel 1, other on channel 1, WCS on channel 2, other on channel 2.
struct Neighbourhood {
    marks: [f64; 4],
    total: f64,
    reach: f64,
    /// Mean number of BSM tags within `reach` of a point.
    lambda: f64,
}

impl Neighbourhood {
    fn new(marks: [f64; 4], reach_ps: f64) -> Self {
        let total: f64 = marks.iter().sum();
        Self {
            marks,
            total,
            reach: reach_ps,
            lambda: total * 2.0 * reach_ps / PS_PER_S,
        }
    }

    fn pick(&self, rng: &mut SimRng) -> usize {
        let mut x = rng.gen::<f64>() * self.total;
        let mut m = 0;
        while m < 3 && x >= self.marks[m] {
            x -= self.marks[m];
            m += 1;
        }
        m
    }

    /// Marked Poisson process on `domain`, in time order.
    fn sample_domain(&self, domain: &Domain, rng: &mut SimRng) -> Vec<(f64, usize)> {
        let mut times = Vec::new();
        poisson_times(self.total / PS_PER_S, domain, rng, |t| times.push(t));
        times.into_iter().map(|t| (t, self.pick(rng))).collect()
    }

    /// Channel-3 events of `rate_per_ps` on `[lo, hi)`, keeping only those
    /// that can meet a BSM tag, with their BSM neighbours. Inside `exact`
    /// every event is kept and neighbours are drawn on the union of
    /// neighbourhoods; elsewhere the events with at least one neighbour are
    /// a binomial thinning and each neighbourhood is drawn on its own,
    /// which ignores overlaps between neighbourhoods (probability of order
    /// `rate × reach`). Returns the total number of events.
    #[allow(clippy::too_many_arguments)]
    fn sample_uncorrelated(
        &self,
        rate_per_ps: f64,
        (lo, hi): (f64, f64),
        exact: &Domain,
        points: &mut SimRng,
        gates: &mut SimRng,
        ch3: &mut Vec<f64>,
        bsm: &mut [Vec<f64>; 2],
    ) -> u64 {
        if !(rate_per_ps > 0.0) {
            return 0;
        }
        let inside = poisson_vec(rate_per_ps, exact, points);
        let extra = Domain::around(inside.iter().copied(), self.reach, lo, hi).minus(exact);
        for (t, m) in self.sample_domain(&extra, gates) {
            bsm[m / 2].push(t);
        }
        let n_out = poisson_count(rate_per_ps * (hi - lo - exact.measure()), points);
        let p_near = -(-self.lambda).exp_m1();
        let n_near = if n_out > 0 && p_near > 0.0 {
            Binomial::new(n_out, p_near.min(1.0))
                .map(|b| b.sample(points))
                .unwrap_or(0)
        } else {
            0
        };
        for _ in 0..n_near {
            let t = loop {
                let t = lo + (hi - lo) * points.gen::<f64>();
                if !exact.contains(t) {
                    break t;
                }
            };
            ch3.push(t);
            for _ in 0..zero_truncated_poisson(self.lambda, gates) {
                let y = t + self.reach * (2.0 * gates.gen::<f64>() - 1.0);
                bsm[self.pick(gates) / 2].push(y);
            }
        }
        ch3.extend_from_slice(&inside);
        inside.len() as u64 + n_out
    }
}

/// Poisson(λ) conditioned on at least one event, by inversion.
fn zero_truncated_poisson(lambda: f64, rng: &mut SimRng) -> u64 {
    let u: f64 = rng.gen();
    let norm = -(-lambda).exp_m1();
    let mut p = (-lambda).exp() * lambda / norm;
    let mut cdf = p;
    let mut k = 1;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p < 1e-300 {
            break;
        }
    }
    k
}

struct Streams {
    pairs: SimRng,
    uncorrelated: SimRng,
    background: SimRng,
    gated: SimRng,
    gated_background: SimRng,
    analyzer: SimRng,
    singles: SimRng,
}

impl Streams {
    fn new(seed: u64, label: &str) -> Self {
        let s = |kind: &str| substream(seed, &format!("{kind}/{label}"));
        Self {
            pairs: s("pairs"),
            uncorrelated: s("signal"),
            background: s("background"),
            gated: s("bsm"),
            gated_background: s("bsm-background"),
            analyzer: s("analyzer"),
            singles: s("singles"),
        }
    }
}

/// Simulates one acquisition. With `keep_tags`, the pruned tag stream
/// (every tag that can take part in a 2- or 3-fold coincidence) is returned.
pub fn acquire(
    model: &LinkModel,
    timeline: &ChannelTimeline,
    plan: &AcquisitionPlan,
    seed: u64,
    keep_tags: bool,
) -> Result<(AcquisitionCounts, Option<Vec<TimeTag>>)> {
    if !(plan.duration_s > 0.0) {
        return Err(Error::Domain(format!(
            "acquisition {}: duration must be positive",
            plan.label()
        )));
    }
    let setting = projection_schedule()
        .iter()
        .find(|(s, _)| *s == plan.basis)
        .map(|(_, w)| *w)
        .ok_or_else(|| Error::Domain(format!("no analyzer setting for {}", plan.basis)))?;
    let analyzer = analyzer_state(setting);
    let psi = plan.input.state();
    let wcs = model.wcs_rates(&psi);
    let w = model.width_ps;
    let wf = w as f64;
    let guard = model.guard_ps();
    let heralded_state = teleport_conditional_state(&psi, model.werner, model.overlap)?.0;
    let mixed = DensityMatrix::maximally_mixed();
    let jitter = [
        model.detectors[0].jitter_sigma_ps,
        model.detectors[1].jitter_sigma_ps,
    ];
    let jitter3 = model.detectors[2].jitter_sigma_ps;

    let mut rng = Streams::new(seed, &plan.label());
    let window3 = CoincidenceWindow::new(w, &[1, 2, 3])?;
    let mut triple = CoincidenceCounter::new(&window3, true);
    let mut two = [
        CoincidenceCounter::new(&CoincidenceWindow::new(w, &[1, 3])?, false),
        CoincidenceCounter::new(&CoincidenceWindow::new(w, &[2, 3])?, false),
    ];
    let mut counts = AcquisitionCounts::default();
    let mut heralded_signals: HashSet<u64> = HashSet::new();
    let mut pending: [Vec<u64>; 3] = Default::default();
    let mut dump = keep_tags.then(Vec::new);

    let total_ps = plan.duration_s * PS_PER_S;
    let block_ps = model.block_s * PS_PER_S;
    let n_blocks = (total_ps / block_ps).ceil().max(1.0) as usize;
    let hood = Neighbourhood::new(
        [
            wcs[0],
            model.idler_uncorrelated[0],
            wcs[1],
            model.idler_uncorrelated[1],
        ],
        wf + 1.0,
    );
    for blk in 0..n_blocks {
        let b0 = blk as f64 * block_ps;
        let b1 = ((blk + 1) as f64 * block_ps).min(total_ps);
        let last = blk + 1 == n_blocks;
        let span = Domain::span(b0, b1);

        let mut pairs: Vec<PairEvent> = Vec::new();
        for k in 0..2 {
            poisson_times(
                2.0 * model.coincidence[k] / PS_PER_S,
                &span,
                &mut rng.pairs,
                |t| {
                    pairs.push(PairEvent {
                        channel: k,
                        t0: t,
                        idler: t,
                        signal: t,
                    })
                },
            );
        }
        pairs.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        for p in &mut pairs {
            p.idler = p.t0 + gauss(&mut rng.pairs, jitter[p.channel]);
            p.signal = p.t0 + gauss(&mut rng.pairs, jitter3);
        }
        counts.pair_events += pairs.len() as u64;

        // Uncorrelated BSM tags around the pair signals, and the WCS among
        // them that can herald.
        let mut pair_signals: Vec<f64> = pairs.iter().map(|p| p.signal).collect();
        pair_signals.sort_by(f64::total_cmp);
        let pair_gate = Domain::around(pair_signals.iter().copied(), guard, b0, b1);
        let mut bsm_f: [Vec<f64>; 2] = Default::default();
        let mut pair_wcs: [Vec<f64>; 2] = Default::default();
        for (t, m) in hood.sample_domain(&pair_gate, &mut rng.gated) {
            bsm_f[m / 2].push(t);
            if m % 2 == 0 {
                pair_wcs[m / 2].push(t);
            }
        }

        // Dark counts and unpaired signal photons are indistinguishable
        // uncorrelated events on channel 3; background light is kept on
        // its own streams.
        let mut ch3_f: Vec<f64> = Vec::new();
        counts.singles[2] += hood.sample_uncorrelated(
            (model.signal_uncorrelated + model.dark3) / PS_PER_S,
            (b0, b1),
            &pair_gate,
            &mut rng.uncorrelated,
            &mut rng.gated,
            &mut ch3_f,
            &mut bsm_f,
        );
        counts.singles[2] += hood.sample_uncorrelated(
            model.background3 / PS_PER_S,
            (b0, b1),
            &pair_gate,
            &mut rng.background,
            &mut rng.gated_background,
            &mut ch3_f,
            &mut bsm_f,
        );
        ch3_f.sort_by(f64::total_cmp);
        for k in 0..2 {
            let rate = wcs[k] + model.idler_uncorrelated[k];
            counts.singles[k] += poisson_count(rate * (b1 - b0) / PS_PER_S, &mut rng.singles);
        }

        // Heralding compares tag times, exactly as the coincidence counter does.
        let pair_wcs: [Vec<u64>; 2] = pair_wcs.map(|v| v.iter().map(|&t| to_tag_time(t)).collect());
        let mut passed: Vec<u64> = Vec::new();
        let mut idlers: [Vec<u64>; 2] = Default::default();
        for p in &pairs {
            let partner = &pair_wcs[1 - p.channel];
            let idler = to_tag_time(p.idler);
            let i = partner.partition_point(|&x| x < idler.saturating_sub(w));
            let heralded = i < partner.len() && partner[i] <= idler + w;
            // One uniform per pair event, whatever its state, so runs that
            // differ only in background share their analyzer outcomes.
            let u: f64 = rng.analyzer.gen();
            let pass = if heralded {
                counts.heralds += 1;
                let u_fiber = timeline.channel_at(plan.start_s + p.t0 / PS_PER_S);
                u < project(&heralded_state.transformed(u_fiber), &analyzer)
            } else {
                u < project(&mixed, &analyzer)
            };
            idlers[p.channel].push(idler);
            if pass {
                let t = to_tag_time(p.signal);
                passed.push(t);
                if heralded {
                    heralded_signals.insert(t);
                }
            }
        }
        passed.sort_unstable();
        counts.singles[2] += passed.len() as u64;
        let uncorrelated: Vec<u64> = ch3_f.iter().map(|&t| to_tag_time(t)).collect();
        let mut ch3 = merge_sorted(&passed, &uncorrelated);
        apply_dead_time(&mut ch3, model.detectors[2].dead_time_ps);
        let mut bsm: [Vec<u64>; 2] = Default::default();
        for k in 0..2 {
            counts.singles[k] += idlers[k].len() as u64;
            bsm[k] = std::mem::take(&mut idlers[k]);
            bsm[k].extend(bsm_f[k].iter().map(|&t| to_tag_time(t)));
            bsm[k].sort_unstable();
            apply_dead_time(&mut bsm[k], model.detectors[k].dead_time_ps);
        }

        // Join the tags carried over from the previous block.
        let mut raw = [
            std::mem::take(&mut bsm[0]),
            std::mem::take(&mut bsm[1]),
            ch3,
        ];
        for c in 0..3 {
            if !pending[c].is_empty() {
                raw[c] = merge_sorted(&pending[c], &raw[c]);
            }
        }
        let cut = if last {
            u64::MAX
        } else {
            to_tag_time(b1 - CARRY_PS)
        };
        let near1 = flag_near(&raw[2], &raw[0], w);
        let near2 = flag_near(&raw[2], &raw[1], w);
        let kept3: Vec<u64> = raw[2]
            .iter()
            .zip(near1.iter().zip(&near2))
            .filter(|(_, (a, b))| **a || **b)
            .map(|(t, _)| *t)
            .collect();
        let mut streams: [Vec<TimeTag>; 3] = Default::default();
        for c in 0..2 {
            let near = flag_near(&raw[c], &kept3, w);
            streams[c] = raw[c]
                .iter()
                .zip(near)
                .filter(|(&t, n)| *n && t < cut)
                .map(|(&t, _)| TimeTag::new(c as u8 + 1, t))
                .collect();
        }
        streams[2] = kept3
            .iter()
            .filter(|&&t| t < cut)
            .map(|&t| TimeTag::new(3, t))
            .collect();
        for c in 0..3 {
            let split = raw[c].partition_point(|&t| t < cut);
            pending[c] = raw[c][split..].to_vec();
        }
        let merged = merge_streams(&[&streams[0], &streams[1], &streams[2]])?;
        triple.feed(&merged)?;
        two[0].feed(&merged)?;
        two[1].feed(&merged)?;
        if let Some(d) = dump.as_mut() {
            d.extend_from_slice(&merged);
        }
    }

    counts.twofold = [two[0].count(), two[1].count()];
    let result = triple.finish();
    counts.triples = result.count;
    counts.heralded_triples = result
        .groups
        .iter()
        .filter(|g| heralded_signals.contains(&g[2].t_ps))
        .count() as u64;
    Ok((counts, dump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::CompensationMode;

    fn quiet_timeline(cfg: &LinkConfig) -> ChannelTimeline {
        let mut f = cfg.fiber;
        f.drift_rate = 0.0;
        ChannelTimeline::build(
            &f,
            CompensationMode::InitialOnly,
            10.0,
            1.0,
            &mut substream(1, "fiber"),
        )
        .unwrap()
    }

    fn split(tags: &[TimeTag], channel: u8) -> Vec<TimeTag> {
        tags.iter()
            .filter(|t| t.channel == channel)
            .copied()
            .collect()
    }

    #[test]
    fn dumped_tags_reproduce_counts() {
        let cfg = LinkConfig::bundled("local").unwrap();
        let model = LinkModel::new(&cfg).unwrap();
        let tl = quiet_timeline(&cfg);
        let plan = AcquisitionPlan {
            input: NamedState::D,
            basis: NamedState::A,
            start_s: 0.0,
            duration_s: 10.0,
        };
        let (a, tags) = acquire(&model, &tl, &plan, 3, true).unwrap();
        let tags = tags.unwrap();
        let (c1, c2, c3) = (split(&tags, 1), split(&tags, 2), split(&tags, 3));
        assert!(a.triples > 0);
        let w3 = CoincidenceWindow::new(64, &[1, 2, 3]).unwrap();
        let w13 = CoincidenceWindow::new(64, &[1, 3]).unwrap();
        assert_eq!(
            a.triples,
            crate::timetag::count_coincidences(&[&c1, &c2, &c3], &w3)
                .unwrap()
                .count
        );
        assert_eq!(
            a.twofold[0],
            crate::timetag::count_coincidences(&[&c1, &c3], &w13)
                .unwrap()
                .count
        );
    }

    #[test]
    fn block_length_leaves_rates_unchanged() {
        let mut cfg = LinkConfig::bundled("local").unwrap();
        let tl = quiet_timeline(&cfg);
        let plan = AcquisitionPlan {
            input: NamedState::H,
            basis: NamedState::V,
            start_s: 0.0,
            duration_s: 4.0,
        };
        let a = acquire(&LinkModel::new(&cfg).unwrap(), &tl, &plan, 5, false)
            .unwrap()
            .0;
        cfg.simulation.block_s = 0.3;
        let b = acquire(&LinkModel::new(&cfg).unwrap(), &tl, &plan, 5, false)
            .unwrap()
            .0;
        for k in 0..3 {
            let (x, y) = (a.singles[k] as f64, b.singles[k] as f64);
            assert!(
                (x - y).abs() < 5.0 * (x + y).sqrt(),
                "channel {}: {x} vs {y}",
                k + 1
            );
        }
        let (x, y) = (a.twofold[1] as f64, b.twofold[1] as f64);
        assert!((x - y).abs() < 5.0 * (x + y).sqrt());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = LinkConfig::bundled("local").unwrap();
        let model = LinkModel::new(&cfg).unwrap();
        let tl = quiet_timeline(&cfg);
        let plan = AcquisitionPlan {
            input: NamedState::H,
            basis: NamedState::V,
            start_s: 0.0,
            duration_s: 1.0,
        };
        let a = acquire(&model, &tl, &plan, 11, false).unwrap().0;
        let b = acquire(&model, &tl, &plan, 11, false).unwrap().0;
        assert_eq!(a, b);
        let c = acquire(&model, &tl, &plan, 12, false).unwrap().0;
        assert_ne!(a, c);
    }
}
