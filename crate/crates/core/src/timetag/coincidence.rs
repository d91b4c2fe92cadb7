//! Streaming n-fold coincidence counting.
//!
//! Tags are consumed in merged time order (ties broken by channel id). A
//! tag either closes a group, together with the earliest unused queued tag
//! of every other required channel, or is queued. Queued tags older than
//! `t − width` are dropped. Each tag joins at most one group, and the result
//! does not depend on how the stream is split into chunks.

use std::collections::VecDeque;

use super::{CoincidenceWindow, TimeTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoincidenceResult {
    pub count: u64,
    /// Matched groups, each ordered by channel as in the window.
    pub groups: Vec<Vec<TimeTag>>,
}

#[derive(Debug, Clone)]
pub struct CoincidenceCounter {
    width: u64,
    channels: Vec<u8>,
    /// Slot for each channel id, `u8::MAX` when not required.
    slot: [u8; 256],
    queues: Vec<VecDeque<u64>>,
    last: Option<(u64, u8)>,
    fed: u64,
    per_channel_fed: Vec<u64>,
    count: u64,
    record: bool,
    groups: Vec<Vec<TimeTag>>,
}

impl CoincidenceCounter {
    pub fn new(window: &CoincidenceWindow, record_groups: bool) -> Self {
        let mut slot = [u8::MAX; 256];
        for (i, &c) in window.channels.iter().enumerate() {
            slot[c as usize] = i as u8;
        }
        let n = window.channels.len();
        Self {
            width: window.width_ps,
            channels: window.channels.clone(),
            slot,
            queues: vec![VecDeque::new(); n],
            last: None,
            fed: 0,
            per_channel_fed: vec![0; n],
            count: 0,
            record: record_groups,
            groups: Vec::new(),
        }
    }

    /// Consumes the next chunk of the merged stream.
    pub fn feed(&mut self, tags: &[TimeTag]) -> Result<()> {
        for &tag in tags {
            self.push(tag)?;
        }
        Ok(())
    }

    #[inline]
    pub fn push(&mut self, tag: TimeTag) -> Result<()> {
        let key = (tag.t_ps, tag.channel);
        if let Some(last) = self.last {
            if key < last {
                return Err(Error::UnsortedStream {
                    channel: tag.channel,
                    index: self.fed as usize,
                });
            }
        }
        self.last = Some(key);
        self.fed += 1;
        let s = self.slot[tag.channel as usize];
        if s == u8::MAX {
            return Ok(());
        }
        let s = s as usize;
        self.per_channel_fed[s] += 1;
        let t = tag.t_ps;
        let horizon = t.saturating_sub(self.width);
        let mut complete = true;
        for (i, q) in self.queues.iter_mut().enumerate() {
            while let Some(&front) = q.front() {
                if front < horizon {
                    q.pop_front();
                } else {
                    break;
                }
            }
            if i != s && q.is_empty() {
                complete = false;
            }
        }
        if !complete {
            self.queues[s].push_back(t);
            return Ok(());
        }
        self.count += 1;
        if self.record {
            let mut group = Vec::with_capacity(self.channels.len());
            for (i, q) in self.queues.iter_mut().enumerate() {
                let ti = if i == s {
                    t
                } else {
                    q.pop_front().expect("non-empty")
                };
                group.push(TimeTag::new(self.channels[i], ti));
            }
            self.groups.push(group);
        } else {
            for (i, q) in self.queues.iter_mut().enumerate() {
                if i != s {
                    q.pop_front();
                }
            }
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(self) -> CoincidenceResult {
        CoincidenceResult {
            count: self.count,
            groups: self.groups,
        }
    }
}

/// Merges per-channel streams by `(t, channel)`, checking each is sorted.
pub fn merge_streams(streams: &[&[TimeTag]]) -> Result<Vec<TimeTag>> {
    for s in streams {
        if let Some(i) = s.windows(2).position(|w| w[1].t_ps < w[0].t_ps) {
            return Err(Error::UnsortedStream {
                channel: s[i + 1].channel,
                index: i + 1,
            });
        }
    }
    let total = streams.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut heads = vec![0usize; streams.len()];
    loop {
        let mut best: Option<(usize, (u64, u8))> = None;
        for (k, s) in streams.iter().enumerate() {
            if let Some(tag) = s.get(heads[k]) {
                let key = (tag.t_ps, tag.channel);
                if best.map_or(true, |(_, b)| key < b) {
                    best = Some((k, key));
                }
            }
        }
        match best {
            Some((k, _)) => {
                out.push(streams[k][heads[k]]);
                heads[k] += 1;
            }
            None => break,
        }
    }
    Ok(out)
}

/// Counts n-fold coincidences over per-channel sorted streams.
pub fn count_coincidences(
    streams: &[&[TimeTag]],
    window: &CoincidenceWindow,
) -> Result<CoincidenceResult> {
    let merged = merge_streams(streams)?;
    let mut counter = CoincidenceCounter::new(window, true);
    counter.feed(&merged)?;
    Ok(counter.finish())
}

/// Signal-channel tags of (1, 2, 3) triples.
pub fn threefold_herald_counts(
    ch1: &[TimeTag],
    ch2: &[TimeTag],
    ch3: &[TimeTag],
    width_ps: u64,
) -> Result<Vec<TimeTag>> {
    let window = CoincidenceWindow::new(width_ps, &[1, 2, 3])?;
    let result = count_coincidences(&[ch1, ch2, ch3], &window)?;
    Ok(result.groups.into_iter().map(|g| g[2]).collect())
}
