use photostat_core::correlator::{
    count_coincidences, enumerate_folds, g_n, CoincidenceIndex, CorrelatorError, RunParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Literal reading of the rule: walk the merged timeline, open a window at
/// the earliest unconsumed event, consume everything inside it, and count
/// every set of `fold` window events that sit on pairwise distinct
/// channels.
fn brute_force(series: &[Vec<i64>], gate: i64, fold: usize) -> u64 {
    let mut merged: Vec<(i64, usize)> =
        series.iter().enumerate().flat_map(|(c, s)| s.iter().map(move |&t| (t, c))).collect();
    merged.sort();
    let mut consumed = vec![false; merged.len()];
    let mut total = 0u64;
    for i in 0..merged.len() {
        if consumed[i] {
            continue;
        }
        let t0 = merged[i].0;
        let mut window = Vec::new();
        for j in i..merged.len() {
            if !consumed[j] && merged[j].0 <= t0 + gate {
                consumed[j] = true;
                window.push(merged[j].1);
            }
        }
        total += distinct_channel_sets(&window, fold, 0, &mut Vec::new());
    }
    total
}

fn distinct_channel_sets(window: &[usize], fold: usize, from: usize, picked: &mut Vec<usize>) -> u64 {
    if picked.len() == fold {
        return 1;
    }
    let mut n = 0;
    for k in from..window.len() {
        if !picked.contains(&window[k]) {
            picked.push(window[k]);
            n += distinct_channel_sets(window, fold, k + 1, picked);
            picked.pop();
        }
    }
    n
}

fn refs(series: &[Vec<i64>]) -> Vec<&[i64]> {
    series.iter().map(Vec::as_slice).collect()
}

/// Pulsed arrivals: bursts `period` apart, each channel firing up to three
/// times (each with probability `p`) within `spread` of the burst start.
fn bursts(rng: &mut ChaCha8Rng, channels: usize, pulses: usize, period: i64, spread: i64, p: f64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new(); channels];
    for k in 0..pulses as i64 {
        for s in out.iter_mut() {
            let mut hits = Vec::new();
            for _ in 0..3 {
                if rng.random_bool(p) {
                    hits.push(k * period + rng.random_range(0..=spread));
                }
            }
            hits.sort();
            hits.dedup();
            s.extend(hits);
        }
    }
    out
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let channels = rng.random_range(2..=7usize);
        let fold = rng.random_range(2..=channels.min(5));
        let gate = rng.random_range(1_000..=1_000_000i64);
        let events = rng.random_range(10..=10_000usize);
        // Mean spacing between merged events of one to ten gate widths.
        let span = (events as f64 * gate as f64 * rng.random_range(0.1..1.0)) as i64 + 1;
        let mut series = vec![Vec::new(); channels];
        for _ in 0..events {
            series[rng.random_range(0..channels)].push(rng.random_range(0..span));
        }
        for s in &mut series {
            s.sort();
            s.dedup();
        }
        let got = count_coincidences(&refs(&series), gate, fold).unwrap();
        assert_eq!(got, brute_force(&series, gate, fold), "case {case}");
    }
}

#[test]
fn greedy_rule_can_lose_counts_at_wider_gates_on_dense_input() {
    // With events closer than the gate the anchor can move: at gate 3 the
    // pair (A@8, B@10) is found, at gate 9 the window from A@0 swallows A@8.
    let a = vec![0, 8];
    let b = vec![10, 28, 30];
    let s = [a.as_slice(), b.as_slice()];
    assert_eq!(count_coincidences(&s, 3, 2).unwrap(), 1);
    assert_eq!(count_coincidences(&s, 9, 2).unwrap(), 0);
}

#[test]
fn thread_count_and_channel_order_do_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let series = bursts(&mut rng, 4, 150_000, 35_000_000, 8_000, 0.2);
    let counts = |threads: usize, s: &[Vec<i64>]| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (2..=4).map(|f| count_coincidences(&refs(s), 25_000, f).unwrap()).collect::<Vec<_>>())
    };
    let base = counts(1, &series);
    assert!(base.iter().all(|&c| c > 0));
    assert_eq!(counts(2, &series), base);
    assert_eq!(counts(8, &series), base);
    let mut reversed = series.clone();
    reversed.reverse();
    assert_eq!(counts(3, &reversed), base);
}

#[test]
fn thinning_leaves_g_unchanged() {
    // Binomial thinning of every channel leaves g unchanged within the
    // combined uncertainty.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pulses = 400_000usize;
    let period = 35_000_000i64;
    let full = bursts(&mut rng, 3, pulses, period, 5_000, 0.15);
    let eta = 0.5;
    let thinned: Vec<Vec<i64>> =
        full.iter().map(|s| s.iter().copied().filter(|_| rng.random_bool(eta)).collect()).collect();
    let params = RunParams {
        repetition_rate_hz: 1e12 / period as f64,
        duration_s: pulses as f64 * period as f64 * 1e-12,
        gate_ns: 25.0,
        background_rate: 0.0,
    };
    for fold in [2, 3] {
        let g = |s: &[Vec<i64>]| {
            let c = count_coincidences(&refs(&s[..fold]), params.gate_ps(), fold).unwrap();
            let singles: Vec<f64> = s[..fold].iter().map(|v| v.len() as f64).collect();
            g_n(c, &singles, &params).unwrap()
        };
        let (g_full, s_full) = g(&full);
        let (g_thin, s_thin) = g(&thinned);
        assert!((g_full - g_thin).abs() <= 3.0 * s_full.hypot(s_thin), "fold {fold}: {g_full} vs {g_thin}");
    }
}

#[test]
fn empty_and_single_event_channels() {
    let a: Vec<i64> = vec![];
    let b = vec![5];
    assert_eq!(count_coincidences(&[&a, &b], 10, 2), Ok(0));
    assert!(matches!(count_coincidences(&[&b], 10, 2), Err(CorrelatorError::FoldOutOfRange { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotone_in_gate_for_pulsed_arrivals(
        seed in any::<u64>(),
        channels in 2usize..6,
        spread in 0i64..20_000,
        extra in 0i64..200_000,
    ) {
        // Gates at least as wide as a pulse's spread and far below the
        // pulse period.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = bursts(&mut rng, channels, 500, 35_000_000, spread, 0.4);
        let g1 = spread;
        let g2 = spread + extra;
        for fold in 2..=channels {
            let c1 = count_coincidences(&refs(&series), g1, fold).unwrap();
            let c2 = count_coincidences(&refs(&series), g2, fold).unwrap();
            prop_assert!(c2 >= c1);
        }
    }

    #[test]
    fn agrees_with_brute_force_on_small_dense_inputs(
        raw in prop::collection::vec(prop::collection::vec(0i64..200, 0..12), 2..5),
        gate in 0i64..60,
        fold_pick in 0usize..4,
    ) {
        let series: Vec<Vec<i64>> = raw.into_iter().map(|mut s| { s.sort(); s.dedup(); s }).collect();
        let fold = 2 + fold_pick % (series.len() - 1);
        prop_assert_eq!(count_coincidences(&refs(&series), gate, fold).unwrap(), brute_force(&series, gate, fold));
    }

    #[test]
    fn index_agrees_with_brute_force_for_every_subset(
        raw in prop::collection::vec(prop::collection::vec(0i64..300, 0..15), 2..6),
        gate in 0i64..60,
    ) {
        let series: Vec<Vec<i64>> = raw.into_iter().map(|mut s| { s.sort(); s.dedup(); s }).collect();
        let index = CoincidenceIndex::new(&refs(&series), gate).unwrap();
        for subset in enumerate_folds(series.len(), 2, series.len()) {
            let picked: Vec<Vec<i64>> = subset.iter().map(|&i| series[i].clone()).collect();
            for fold in 2..=subset.len() {
                prop_assert_eq!(index.count(&subset, fold).unwrap(), brute_force(&picked, gate, fold));
            }
        }
    }
}
