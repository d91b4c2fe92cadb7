//! Poisson point processes on the real line and on unions of intervals.
//!
//! Times are `f64` picoseconds from the start of one acquisition. A
//! [`Domain`] restricts a process to a union of disjoint intervals; the
//! restriction of a homogeneous Poisson process to a set is again Poisson
//! with the same rate, which the gated acquisition relies on.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

pub const PS_PER_S: f64 = 1e12;

/// Sorted, disjoint half-open intervals `[start, end)` in ps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Domain {
    intervals: Vec<(f64, f64)>,
}

impl Domain {
    pub fn span(start: f64, end: f64) -> Self {
        let mut d = Self::default();
        d.push(start, end);
        d
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Appends an interval; it must not start before the last one.
    /// Overlaps with the previous interval are merged.
    pub fn push(&mut self, start: f64, end: f64) {
        if end <= start {
            return;
        }
        if let Some(last) = self.intervals.last_mut() {
            debug_assert!(start >= last.0, "domain intervals must be pushed in order");
            if start <= last.1 {
                last.1 = last.1.max(end);
                return;
            }
        }
        self.intervals.push((start, end));
    }

    /// Union of `[t − guard, t + guard)` around sorted `centers`, clipped to `[lo, hi)`.
    pub fn around(centers: impl IntoIterator<Item = f64>, guard: f64, lo: f64, hi: f64) -> Self {
        let mut d = Self::default();
        for t in centers {
            d.push((t - guard).max(lo), (t + guard).min(hi));
        }
        d
    }

    /// `self \ other`; both sorted.
    pub fn minus(&self, other: &Domain) -> Domain {
        let mut out = Domain::default();
        let mut j = 0;
        for &(a, b) in &self.intervals {
            let mut start = a;
            while j < other.intervals.len() && other.intervals[j].1 <= start {
                j += 1;
            }
            let mut k = j;
            while k < other.intervals.len() && other.intervals[k].0 < b {
                let (oa, ob) = other.intervals[k];
                if oa > start {
                    out.push(start, oa);
                }
                start = start.max(ob);
                if start >= b {
                    break;
                }
                k += 1;
            }
            if start < b {
                out.push(start, b);
            }
        }
        out
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|&(_, b)| b <= t);
        i < self.intervals.len() && self.intervals[i].0 <= t
    }
}

/// Calls `emit` with the sorted event times of a Poisson process of
/// `rate_per_ps` restricted to `domain`.
pub fn poisson_times<R: Rng + ?Sized>(
    rate_per_ps: f64,
    domain: &Domain,
    rng: &mut R,
    mut emit: impl FnMut(f64),
) {
    if !(rate_per_ps > 0.0) {
        return;
    }
    let scale = 1.0 / rate_per_ps;
    let mut gap = sample_exp(rng) * scale;
    for &(a, b) in domain.intervals() {
        let mut pos = a;
        loop {
            if gap < b - pos {
                pos += gap;
                emit(pos);
                gap = sample_exp(rng) * scale;
            } else {
                gap -= b - pos;
                break;
            }
        }
    }
}

#[inline]
fn sample_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Distribution::<f64>::sample(&Exp1, rng)
}

pub fn poisson_vec<R: Rng + ?Sized>(rate_per_ps: f64, domain: &Domain, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity((rate_per_ps * domain.measure() * 1.05) as usize + 8);
    poisson_times(rate_per_ps, domain, rng, |t| out.push(t));
    out
}

/// Poisson-distributed count with the given mean.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    rand_distr::Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}
