use serde::{Deserialize, Serialize};

use super::distributions::poisson_pmf;
use super::{PhotonNumberHistogram, PhotonNumberStats};

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// `n,count,P(n)` for every n up to the largest observed.
pub fn histogram_csv(hist: &PhotonNumberHistogram) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "count", "P(n)"]).unwrap();
    for (n, (&c, p)) in hist.counts.iter().zip(hist.probabilities()).enumerate() {
        w.write_record([n.to_string(), c.to_string(), p.to_string()]).unwrap();
    }
    finish(w)
}

/// `n,P(n),poisson_fit(n)`, the fit using the sample mean.
pub fn fig3_csv(hist: &PhotonNumberHistogram) -> String {
    let mean = hist.mean();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "P(n)", "poisson_fit(n)"]).unwrap();
    for (n, p) in hist.probabilities().into_iter().enumerate() {
        w.write_record([n.to_string(), p.to_string(), poisson_pmf(n as u64, mean).to_string()]).unwrap();
    }
    finish(w)
}

/// One labelled run for the tabular reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub sample: String,
    pub stats: PhotonNumberStats,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// Columns `sample,mean,variance,g2,Q,E,stdev,g2_uncertainty`, two decimals.
pub fn stats_table_csv(rows: &[StatsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample", "mean", "variance", "g2", "Q", "E", "stdev", "g2_uncertainty"]).unwrap();
    for r in rows {
        let s = &r.stats;
        w.write_record([
            r.sample.clone(),
            format!("{:.2}", s.mean),
            format!("{:.2}", s.variance),
            format!("{:.2}", s.g2),
            format!("{:.2}", s.q),
            format!("{:.2}", s.e),
            format!("{:.2}", s.stdev),
            opt(s.g2_uncertainty),
        ])
        .unwrap();
    }
    finish(w)
}

/// `sample,g2,g2_uncertainty,E` at full precision, one row per run.
pub fn fig3c_csv(rows: &[StatsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample", "g2", "g2_uncertainty", "E"]).unwrap();
    for r in rows {
        let s = &r.stats;
        w.write_record([
            r.sample.clone(),
            s.g2.to_string(),
            s.g2_uncertainty.map(|v| v.to_string()).unwrap_or_default(),
            s.e.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}
