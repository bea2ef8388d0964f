use rayon::prelude::*;

use super::CorrelatorError;

/// Inputs smaller than this are never split into shards.
const SHARD_MIN_EVENTS: usize = 200_000;
const SHARD_TARGET_EVENTS: usize = 100_000;

/// Number of `fold`-element choices of distinct channels, one event from
/// each, given per-channel event multiplicities: the elementary symmetric
/// polynomial e_fold(mult).
fn tuples_in_window(mult: &[u64], fold: usize) -> u128 {
    let mut e = [0u128; 17];
    e[0] = 1;
    for &m in mult {
        if m == 0 {
            continue;
        }
        for j in (1..=fold).rev() {
            e[j] += e[j - 1] * m as u128;
        }
    }
    e[fold]
}

fn count_range(series: &[&[i64]], lo: &[usize], hi: &[usize], gate: i64, fold: usize) -> u128 {
    let k = series.len();
    let mut heads = lo.to_vec();
    let mut mult = vec![0u64; k];
    let mut total = 0u128;
    loop {
        let mut t0 = i64::MAX;
        let mut live = false;
        for c in 0..k {
            if heads[c] < hi[c] {
                live = true;
                t0 = t0.min(series[c][heads[c]]);
            }
        }
        if !live {
            break;
        }
        let end = t0.saturating_add(gate);
        let mut present = 0;
        for c in 0..k {
            let s = series[c];
            let start = heads[c];
            let mut h = start;
            while h < hi[c] && s[h] <= end {
                h += 1;
            }
            heads[c] = h;
            mult[c] = (h - start) as u64;
            present += (h > start) as usize;
        }
        if present >= fold {
            total += tuples_in_window(&mult, fold);
        }
    }
    total
}

/// First index in each channel at or after a cut time `t` such that no
/// window anchored before `t` can reach an event at or after it. Returns
/// `None` when no such cut exists at or after `t`.
fn find_cut(series: &[&[i64]], mut t: i64, gate: i64) -> Option<Vec<usize>> {
    loop {
        let idx: Vec<usize> = series.iter().map(|s| s.partition_point(|&v| v < t)).collect();
        let prev = series.iter().zip(&idx).filter(|(_, &i)| i > 0).map(|(s, &i)| s[i - 1]).max();
        let next = series.iter().zip(&idx).filter(|(s, &i)| i < s.len()).map(|(s, &i)| s[i]).min()?;
        match prev {
            Some(p) if next.saturating_sub(p) <= gate => t = next.checked_add(1)?,
            _ => return Some(idx),
        }
    }
}

fn shard_cuts(series: &[&[i64]], gate: i64) -> Vec<Vec<usize>> {
    let total: usize = series.iter().map(|s| s.len()).sum();
    let start: Vec<usize> = vec![0; series.len()];
    let end: Vec<usize> = series.iter().map(|s| s.len()).collect();
    let mut cuts = vec![start];
    if total >= SHARD_MIN_EVENTS {
        let t_min = series.iter().filter_map(|s| s.first()).min().copied().unwrap_or(0);
        let t_max = series.iter().filter_map(|s| s.last()).max().copied().unwrap_or(0);
        let shards = total.div_ceil(SHARD_TARGET_EVENTS) as i64;
        let span = (t_max as i128 - t_min as i128) / shards as i128;
        for s in 1..shards {
            let t = (t_min as i128 + span * s as i128) as i64;
            if let Some(idx) = find_cut(series, t, gate) {
                let last = cuts.last().unwrap();
                if idx.iter().zip(last).all(|(a, b)| a >= b) && idx != *last && idx != end {
                    cuts.push(idx);
                }
            }
        }
    }
    cuts.push(end);
    cuts
}

/// Counts n-fold coincidences among sorted per-channel arrival times.
///
/// The merged timeline is scanned in event-anchored windows: the earliest
/// unconsumed event opens `[t0, t0 + gate]`, every event inside is
/// consumed, and the window contributes one coincidence for each choice of
/// `fold` distinct channels and one event from each of them. Windows never
/// overlap, so no event is reused.
pub fn count_coincidences(series: &[&[i64]], gate_ps: i64, fold: usize) -> Result<u64, CorrelatorError> {
    if fold < 2 || fold > series.len() || fold > 16 {
        return Err(CorrelatorError::FoldOutOfRange { fold, channels: series.len() });
    }
    if gate_ps < 0 {
        return Err(CorrelatorError::InvalidParams("gate width must be >= 0".into()));
    }
    if let Some(c) = series.iter().position(|s| s.windows(2).any(|w| w[0] >= w[1])) {
        return Err(CorrelatorError::UnsortedSeries(c));
    }
    let cuts = shard_cuts(series, gate_ps);
    let total: u128 = if cuts.len() > 2 && rayon::current_num_threads() > 1 {
        cuts.par_windows(2).map(|w| count_range(series, &w[0], &w[1], gate_ps, fold)).sum()
    } else {
        cuts.windows(2).map(|w| count_range(series, &w[0], &w[1], gate_ps, fold)).sum()
    };
    Ok(total.min(u64::MAX as u128) as u64)
}

/// Precomputed view of a set of channels for counting many subsets.
///
/// Consecutive events of the merged timeline more than a gate apart can
/// never share a window, whichever channels are counted, so the timeline
/// is cut at those gaps once. Chains touching a single channel hold no
/// coincidences and are dropped; each subset then replays the window rule
/// inside the chains holding at least `fold` of its channels.
#[derive(Debug, Clone)]
pub struct CoincidenceIndex {
    gate: i64,
    channels: usize,
    /// Merged (time, channel) of the kept chains, back to back.
    events: Vec<(i64, u8)>,
    /// Per kept chain: start into `events` and the mask of channels present.
    chains: Vec<(u32, u64)>,
}

impl CoincidenceIndex {
    /// At most 64 channels.
    pub fn new(series: &[&[i64]], gate_ps: i64) -> Result<Self, CorrelatorError> {
        if series.len() > 64 {
            return Err(CorrelatorError::InvalidParams("at most 64 channels can be indexed".into()));
        }
        if gate_ps < 0 {
            return Err(CorrelatorError::InvalidParams("gate width must be >= 0".into()));
        }
        if let Some(c) = series.iter().position(|s| s.windows(2).any(|w| w[0] >= w[1])) {
            return Err(CorrelatorError::UnsortedSeries(c));
        }
        let mut merged: Vec<(i64, u8)> =
            series.iter().enumerate().flat_map(|(c, s)| s.iter().map(move |&t| (t, c as u8))).collect();
        merged.sort_unstable();
        let mut events = Vec::new();
        let mut chains = Vec::new();
        let mut i = 0;
        while i < merged.len() {
            let mut j = i + 1;
            let mut mask = 1u64 << merged[i].1;
            while j < merged.len() && merged[j].0.saturating_sub(merged[j - 1].0) <= gate_ps {
                mask |= 1 << merged[j].1;
                j += 1;
            }
            if mask.count_ones() >= 2 {
                chains.push((events.len() as u32, mask));
                events.extend_from_slice(&merged[i..j]);
            }
            i = j;
        }
        chains.push((events.len() as u32, 0));
        Ok(Self { gate: gate_ps, channels: series.len(), events, chains })
    }

    /// Same count as [`count_coincidences`] over the channels in `subset`.
    pub fn count(&self, subset: &[usize], fold: usize) -> Result<u64, CorrelatorError> {
        if fold < 2 || fold > subset.len() || fold > 16 {
            return Err(CorrelatorError::FoldOutOfRange { fold, channels: subset.len() });
        }
        let mut want = 0u64;
        for &c in subset {
            if c >= self.channels || want & (1 << c) != 0 {
                return Err(CorrelatorError::InvalidParams(format!("bad channel {c} in subset")));
            }
            want |= 1 << c;
        }
        let mut total = 0u128;
        let mut mult = [0u64; 64];
        let mut present = Vec::with_capacity(fold);
        for w in self.chains.windows(2) {
            let (start, mask) = w[0];
            if (mask & want).count_ones() < fold as u32 {
                continue;
            }
            let chain = &self.events[start as usize..w[1].0 as usize];
            let mut i = 0;
            while i < chain.len() {
                if want & (1 << chain[i].1) == 0 {
                    i += 1;
                    continue;
                }
                let end = chain[i].0.saturating_add(self.gate);
                present.clear();
                while i < chain.len() && chain[i].0 <= end {
                    let c = chain[i].1 as usize;
                    if want & (1 << c) != 0 {
                        if mult[c] == 0 {
                            present.push(c);
                        }
                        mult[c] += 1;
                    }
                    i += 1;
                }
                if present.len() >= fold {
                    let m: Vec<u64> = present.iter().map(|&c| mult[c]).collect();
                    total += tuples_in_window(&m, fold);
                }
                for &c in &present {
                    mult[c] = 0;
                }
            }
        }
        Ok(total.min(u64::MAX as u128) as u64)
    }
}
