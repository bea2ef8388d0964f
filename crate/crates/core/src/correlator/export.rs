use std::collections::BTreeMap;

use super::{CorrelationResult, PairRecord};

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// One row per subset: `subset,fold,C,g,sigma`. Subset ids are joined
/// with `-`.
pub fn results_csv(results: &[CorrelationResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subset", "fold", "C", "g", "sigma"]).unwrap();
    for r in results {
        w.write_record([
            r.subset.join("-"),
            r.fold.to_string(),
            r.coincidences.to_string(),
            r.g.to_string(),
            r.sigma.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

/// Wide layout, one column of g values per fold (`g2,g3,…`), shorter
/// columns padded with empty cells.
pub fn fig2_csv(results: &[CorrelationResult]) -> String {
    let mut by_fold: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_fold.entry(r.fold).or_default().push(r.g);
    }
    let rows = by_fold.values().map(Vec::len).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(by_fold.keys().map(|f| format!("g{f}"))).unwrap();
    for i in 0..rows {
        w.write_record(by_fold.values().map(|v| v.get(i).map(f64::to_string).unwrap_or_default())).unwrap();
    }
    finish(w)
}

/// Two-channel count table with computed g2 and its uncertainty.
pub fn pair_records_csv(records: &[PairRecord], repetition_rate_hz: f64) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["set", "integration_time_s", "singles_1", "singles_2", "coincidences", "g2", "sigma"]).unwrap();
    for r in records {
        let (g, s) = r.g2(repetition_rate_hz).map_or((f64::NAN, f64::NAN), |v| v);
        w.write_record([
            r.label.clone(),
            r.duration_s.to_string(),
            r.singles_1.to_string(),
            r.singles_2.to_string(),
            r.coincidences.to_string(),
            format!("{g:.4}"),
            format!("{s:.4}"),
        ])
        .unwrap();
    }
    finish(w)
}
