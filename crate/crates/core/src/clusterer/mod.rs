//! Reconstruction of single-photon events from intensifier flashes.
//!
//! A photon hitting the intensifier lights up a small blob of pixels within
//! a few nanoseconds. [`cluster_hits`] groups those pixels back together,
//! [`centroid`] collapses each group to one [`PhotonEvent`], and the
//! [`TimeWalkTable`] removes the ToT-dependent ToA bias before the event
//! time is taken.

mod timewalk;

pub use timewalk::{
    apply_time_walk, calibrate_time_walk, pulse_reference_samples, TimeWalkTable, WalkSample, MIN_BIN_SAMPLES,
};

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventstream::RawHit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("no ToT bin holds at least {MIN_BIN_SAMPLES} calibration samples")]
    InsufficientData,
    #[error("invalid time-walk table: {0}")]
    InvalidTable(String),
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
}

pub const DEFAULT_SPATIAL_RADIUS: u16 = 2;
pub const DEFAULT_TEMPORAL_WINDOW_NS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Chebyshev distance, in pixels, that links two hits.
    pub spatial_radius: u16,
    /// Every member lies within this many ticks of the cluster's first hit.
    pub temporal_window: u64,
}

impl ClusterParams {
    pub fn new(spatial_radius: u16, temporal_window: u64) -> Self {
        Self { spatial_radius, temporal_window }
    }

    pub fn from_ns(spatial_radius: u16, window_ns: f64, tick_ps: u32) -> Self {
        let ticks = (window_ns * 1000.0 / tick_ps as f64).round().max(0.0) as u64;
        Self { spatial_radius, temporal_window: ticks }
    }

    pub fn defaults_for_tick(tick_ps: u32) -> Self {
        Self::from_ns(DEFAULT_SPATIAL_RADIUS, DEFAULT_TEMPORAL_WINDOW_NS, tick_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Members in canonical (time, y, x, tot) order.
    pub hits: Vec<RawHit>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn first_toa(&self) -> u64 {
        self.hits[0].toa_ticks
    }
}

/// One reconstructed photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub cx: f64,
    pub cy: f64,
    /// Walk-corrected arrival time of the timing member.
    pub toa_ps: i64,
    pub total_tot: u32,
    pub size: u32,
    /// False when every member had zero ToT and the plain mean was used.
    pub weighted: bool,
}

struct Active {
    start: u64,
    order: usize,
    min_x: u16,
    max_x: u16,
    min_y: u16,
    max_y: u16,
    hits: Vec<RawHit>,
}

impl Active {
    /// `hits` already holds `h`.
    fn new(order: usize, h: RawHit, hits: Vec<RawHit>) -> Self {
        Self { start: h.toa_ticks, order, min_x: h.x, max_x: h.x, min_y: h.y, max_y: h.y, hits }
    }

    #[inline]
    fn touches(&self, h: &RawHit, r: u16) -> bool {
        if h.x.saturating_add(r) < self.min_x
            || h.x > self.max_x.saturating_add(r)
            || h.y.saturating_add(r) < self.min_y
            || h.y > self.max_y.saturating_add(r)
        {
            return false;
        }
        self.hits.iter().any(|m| m.x.abs_diff(h.x) <= r && m.y.abs_diff(h.y) <= r)
    }

    fn push(&mut self, h: RawHit) {
        self.min_x = self.min_x.min(h.x);
        self.max_x = self.max_x.max(h.x);
        self.min_y = self.min_y.min(h.y);
        self.max_y = self.max_y.max(h.y);
        self.hits.push(h);
    }

    fn absorb(&mut self, mut other: Active, pool: &mut Vec<Vec<RawHit>>) {
        self.start = self.start.min(other.start);
        self.order = self.order.min(other.order);
        self.min_x = self.min_x.min(other.min_x);
        self.max_x = self.max_x.max(other.max_x);
        self.min_y = self.min_y.min(other.min_y);
        self.max_y = self.max_y.max(other.max_y);
        self.hits.append(&mut other.hits);
        pool.push(other.hits);
    }
}

fn sorted_hits(hits: &[RawHit]) -> Cow<'_, [RawHit]> {
    if hits.windows(2).all(|w| w[0].canonical_key() <= w[1].canonical_key()) {
        Cow::Borrowed(hits)
    } else {
        let mut v = hits.to_vec();
        v.sort_unstable_by_key(RawHit::canonical_key);
        Cow::Owned(v)
    }
}

/// Clusters a canonically sorted slice on the current thread, handing
/// each finished cluster to `emit` with the input index of its first hit.
/// Members arrive in canonical order; the buffer is recycled afterwards.
fn cluster_sorted_with(hits: &[RawHit], params: ClusterParams, mut emit: impl FnMut(usize, &mut Vec<RawHit>)) {
    let r = params.spatial_radius;
    let window = params.temporal_window;
    let mut active: Vec<Active> = Vec::new();
    let mut pool: Vec<Vec<RawHit>> = Vec::new();
    let mut touching: Vec<usize> = Vec::new();
    let mut finish = |mut a: Active, pool: &mut Vec<Vec<RawHit>>| {
        a.hits.sort_unstable_by_key(RawHit::canonical_key);
        emit(a.order, &mut a.hits);
        a.hits.clear();
        pool.push(a.hits);
    };

    for (i, &h) in hits.iter().enumerate() {
        let t = h.toa_ticks;
        let mut k = 0;
        while k < active.len() {
            if active[k].start.saturating_add(window) < t {
                let a = active.swap_remove(k);
                finish(a, &mut pool);
            } else {
                k += 1;
            }
        }

        touching.clear();
        touching.extend((0..active.len()).filter(|&k| active[k].touches(&h, r)));
        match touching.len() {
            0 => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.push(h);
                active.push(Active::new(i, h, buf));
            }
            1 => active[touching[0]].push(h),
            _ => {
                // Descending removal keeps the pending indices valid.
                touching.sort_unstable_by(|a, b| b.cmp(a));
                let mut taken: Vec<Active> = touching.iter().map(|&k| active.swap_remove(k)).collect();
                taken.sort_unstable_by_key(|a| a.order);
                let mut merged = taken.remove(0);
                for other in taken {
                    merged.absorb(other, &mut pool);
                }
                merged.push(h);
                active.push(merged);
            }
        }
    }
    active.sort_unstable_by_key(|a| a.order);
    for a in active {
        finish(a, &mut pool);
    }
}

fn cluster_sorted(hits: &[RawHit], params: ClusterParams) -> Vec<Cluster> {
    let mut done: Vec<(usize, Vec<RawHit>)> = Vec::with_capacity(hits.len() / 2 + 1);
    cluster_sorted_with(hits, params, |order, members| done.push((order, members.clone())));
    // Clusters finish roughly in order of their first hit; the stable sort
    // takes advantage of the long runs.
    done.sort_by_key(|(order, _)| *order);
    done.into_iter().map(|(_, hits)| Cluster { hits }).collect()
}

/// Cut points where consecutive hits are further apart than the window; no
/// cluster can straddle such a gap, so shards split there cluster
/// independently.
fn shard_bounds(hits: &[RawHit], window: u64, target: usize) -> Vec<usize> {
    let mut bounds = vec![0];
    if target > 1 {
        let step = hits.len().div_ceil(target);
        let mut next = step;
        let mut i = step.max(1);
        while i < hits.len() {
            if i >= next && hits[i].toa_ticks - hits[i - 1].toa_ticks > window {
                bounds.push(i);
                next = i + step;
                i = next;
                continue;
            }
            i += 1;
        }
    }
    bounds.push(hits.len());
    bounds
}

/// Groups hits into clusters: 8-neighbourhood chains (Chebyshev distance
/// ≤ `spatial_radius`) whose members all fall within `temporal_window` ticks
/// of the cluster's earliest hit.
///
/// Output is ordered by each cluster's earliest member and does not depend
/// on input order or on the rayon thread count.
pub fn cluster_hits(hits: &[RawHit], params: ClusterParams) -> Vec<Cluster> {
    let sorted = sorted_hits(hits);
    let threads = rayon::current_num_threads();
    // Shard count is a function of input size only, never of the pool.
    let shards = (sorted.len() / 65_536).clamp(1, 256);
    let bounds = shard_bounds(&sorted, params.temporal_window, shards);
    if threads == 1 || bounds.len() <= 2 {
        return bounds.windows(2).flat_map(|b| cluster_sorted(&sorted[b[0]..b[1]], params)).collect();
    }
    let parts: Vec<Vec<Cluster>> = bounds.par_windows(2).map(|b| cluster_sorted(&sorted[b[0]..b[1]], params)).collect();
    parts.into_iter().flatten().collect()
}

/// Member whose ToA times the event: highest ToT, ties to lowest (y, x),
/// then earliest ToA.
pub fn timing_member(cluster: &Cluster) -> &RawHit {
    timing_of(&cluster.hits)
}

fn timing_of(members: &[RawHit]) -> &RawHit {
    members.iter().min_by_key(|h| (std::cmp::Reverse(h.tot), h.y, h.x, h.toa_ticks)).expect("cluster is non-empty")
}

/// ToT-weighted centroid with walk-corrected timing.
pub fn centroid(cluster: &Cluster, tick_ps: u32, walk: &TimeWalkTable) -> PhotonEvent {
    assert!(!cluster.is_empty(), "centroid of an empty cluster");
    centroid_of(&cluster.hits, tick_ps, walk)
}

/// `members` must be non-empty and in canonical order, which fixes the
/// floating-point summation order.
fn centroid_of(members: &[RawHit], tick_ps: u32, walk: &TimeWalkTable) -> PhotonEvent {
    let total_tot: u64 = members.iter().map(|h| h.tot as u64).sum();
    let (cx, cy, weighted) = if total_tot == 0 {
        let n = members.len() as f64;
        let sx: f64 = members.iter().map(|h| h.x as f64).sum();
        let sy: f64 = members.iter().map(|h| h.y as f64).sum();
        (sx / n, sy / n, false)
    } else {
        let (mut sx, mut sy) = (0.0, 0.0);
        for h in members {
            sx += h.tot as f64 * h.x as f64;
            sy += h.tot as f64 * h.y as f64;
        }
        (sx / total_tot as f64, sy / total_tot as f64, true)
    };
    PhotonEvent {
        cx,
        cy,
        toa_ps: apply_time_walk(timing_of(members), tick_ps, walk).round() as i64,
        total_tot: total_tot.min(u32::MAX as u64) as u32,
        size: members.len() as u32,
        weighted,
    }
}

/// Cluster + centroid in one pass. Events come back sorted by `toa_ps`,
/// ties broken by the remaining fields, and equal
/// `cluster_hits(..).map(centroid)` up to that order.
pub fn reconstruct_events(
    hits: &[RawHit],
    tick_ps: u32,
    params: ClusterParams,
    walk: &TimeWalkTable,
) -> Vec<PhotonEvent> {
    let sorted = sorted_hits(hits);
    let shards = (sorted.len() / 65_536).clamp(1, 256);
    let bounds = shard_bounds(&sorted, params.temporal_window, shards);
    let shard = |b: &[usize]| {
        let mut out = Vec::with_capacity((b[1] - b[0]) / 2 + 1);
        cluster_sorted_with(&sorted[b[0]..b[1]], params, |_, members| out.push(centroid_of(members, tick_ps, walk)));
        out
    };
    let mut events: Vec<PhotonEvent> = if rayon::current_num_threads() > 1 && bounds.len() > 2 {
        bounds.par_windows(2).flat_map_iter(shard).collect()
    } else {
        bounds.windows(2).flat_map(shard).collect()
    };
    // Nearly sorted already; the stable sort exploits the runs.
    events.sort_by(|a, b| {
        a.toa_ps
            .cmp(&b.toa_ps)
            .then(a.cy.total_cmp(&b.cy))
            .then(a.cx.total_cmp(&b.cx))
            .then(a.size.cmp(&b.size))
            .then(a.total_tot.cmp(&b.total_tot))
            .then(a.weighted.cmp(&b.weighted))
    });
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> ClusterParams {
        ClusterParams::new(2, 64)
    }

    fn sizes(c: &[Cluster]) -> Vec<usize> {
        c.iter().map(Cluster::len).collect()
    }

    #[test]
    fn empty_and_single() {
        assert!(cluster_hits(&[], p()).is_empty());
        let c = cluster_hits(&[RawHit::new(3, 3, 10, 5)], p());
        assert_eq!(sizes(&c), vec![1]);
    }

    #[test]
    fn neighbours_merge_only_inside_window() {
        let a = RawHit::new(10, 10, 100, 5);
        let near = RawHit::new(11, 11, 150, 5);
        let late = RawHit::new(11, 11, 165, 5);
        assert_eq!(sizes(&cluster_hits(&[a, near], p())), vec![2]);
        assert_eq!(sizes(&cluster_hits(&[a, late], p())), vec![1, 1]);
    }

    #[test]
    fn distant_pixels_stay_apart() {
        let hits = [RawHit::new(0, 0, 0, 1), RawHit::new(3, 0, 0, 1)];
        assert_eq!(cluster_hits(&hits, p()).len(), 2);
        // A hit between them bridges the chain.
        let hits = [RawHit::new(0, 0, 0, 1), RawHit::new(3, 0, 0, 1), RawHit::new(2, 0, 1, 1)];
        assert_eq!(sizes(&cluster_hits(&hits, p())), vec![3]);
    }

    #[test]
    fn members_stay_within_window_of_first_hit() {
        // A chain of hits 40 ticks apart: the third is 80 ticks from the
        // first and must start a new cluster even though it touches the
        // second.
        let hits = [RawHit::new(0, 0, 0, 1), RawHit::new(1, 0, 40, 1), RawHit::new(2, 0, 80, 1)];
        assert_eq!(sizes(&cluster_hits(&hits, p())), vec![2, 1]);
    }

    #[test]
    fn centroid_examples() {
        let z = TimeWalkTable::zero();
        let e = centroid(&Cluster { hits: vec![RawHit::new(5, 7, 3, 9)] }, 1000, &z);
        assert_eq!((e.cx, e.cy, e.toa_ps, e.size), (5.0, 7.0, 3000, 1));

        let e = centroid(&Cluster { hits: vec![RawHit::new(0, 0, 0, 1), RawHit::new(1, 0, 0, 3)] }, 1, &z);
        assert_eq!(e.cx, 0.75);
        assert_eq!(e.cy, 0.0);

        let mut blob = Vec::new();
        for y in 9..=11 {
            for x in 9..=11 {
                blob.push(RawHit::new(x, y, 50, 4));
            }
        }
        let e = centroid(&Cluster { hits: blob }, 1, &z);
        assert_eq!((e.cx, e.cy), (10.0, 10.0));
        assert_eq!(e.total_tot, 36);
    }

    #[test]
    fn zero_tot_falls_back_to_plain_mean() {
        let c = Cluster { hits: vec![RawHit::new(0, 0, 0, 0), RawHit::new(2, 4, 0, 0)] };
        let e = centroid(&c, 1, &TimeWalkTable::zero());
        assert_eq!((e.cx, e.cy, e.weighted), (1.0, 2.0, false));
    }

    #[test]
    fn timing_member_tie_break() {
        let c = Cluster {
            hits: vec![
                RawHit::new(4, 2, 10, 7),
                RawHit::new(3, 2, 12, 7),
                RawHit::new(0, 5, 8, 7),
                RawHit::new(9, 9, 1, 2),
            ],
        };
        assert_eq!(*timing_member(&c), RawHit::new(3, 2, 12, 7));
    }

    fn arb_hits() -> impl Strategy<Value = Vec<RawHit>> {
        prop::collection::vec(
            (0u16..24, 0u16..24, 0u64..4000, 0u16..50).prop_map(|(x, y, t, tot)| RawHit::new(x, y, t, tot)),
            0..400,
        )
    }

    proptest! {
        #[test]
        fn partition_and_order_independence(hits in arb_hits(), rot in 0usize..400) {
            let a = cluster_hits(&hits, p());
            prop_assert_eq!(a.iter().map(Cluster::len).sum::<usize>(), hits.len());
            let mut shuffled = hits.clone();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            prop_assert_eq!(&a, &cluster_hits(&shuffled, p()));
            for c in &a {
                let t0 = c.first_toa();
                prop_assert!(c.hits.iter().all(|h| h.toa_ticks - t0 <= p().temporal_window));
            }
        }

        #[test]
        fn centroid_stays_inside_member_box(hits in arb_hits()) {
            for c in cluster_hits(&hits, p()) {
                let e = centroid(&c, 1, &TimeWalkTable::zero());
                let min_x = c.hits.iter().map(|h| h.x).min().unwrap() as f64;
                let max_x = c.hits.iter().map(|h| h.x).max().unwrap() as f64;
                let min_y = c.hits.iter().map(|h| h.y).min().unwrap() as f64;
                let max_y = c.hits.iter().map(|h| h.y).max().unwrap() as f64;
                prop_assert!(e.cx >= min_x - 1e-9 && e.cx <= max_x + 1e-9);
                prop_assert!(e.cy >= min_y - 1e-9 && e.cy <= max_y + 1e-9);
            }
        }

        #[test]
        fn sharded_matches_single_shard(hits in prop::collection::vec(
            (0u16..8, 0u16..8, 0u64..2_000_000, 1u16..50).prop_map(|(x, y, t, tot)| RawHit::new(x, y, t, tot)),
            0..3000,
        )) {
            let mut sorted = hits.clone();
            sorted.sort_unstable_by_key(RawHit::canonical_key);
            let serial = cluster_sorted(&sorted, p());
            let bounds = shard_bounds(&sorted, p().temporal_window, 7);
            let sharded: Vec<Cluster> =
                bounds.windows(2).flat_map(|b| cluster_sorted(&sorted[b[0]..b[1]], p())).collect();
            prop_assert_eq!(serial, sharded);
        }

        #[test]
        fn reconstruct_matches_cluster_then_centroid(hits in arb_hits()) {
            let walk = TimeWalkTable::new(10, vec![300.0, 120.0, 40.0, 0.0, -5.0]).unwrap();
            let mut want: Vec<PhotonEvent> = cluster_hits(&hits, p()).iter().map(|c| centroid(c, 1562, &walk)).collect();
            want.sort_unstable_by(|a, b| {
                (a.toa_ps, a.cy, a.cx, a.size, a.total_tot, a.weighted)
                    .partial_cmp(&(b.toa_ps, b.cy, b.cx, b.size, b.total_tot, b.weighted))
                    .unwrap()
            });
            prop_assert_eq!(reconstruct_events(&hits, 1562, p(), &walk), want);
        }
    }
}
