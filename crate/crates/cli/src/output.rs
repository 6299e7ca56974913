//! CSV and JSON serializers. Numbers use the shortest representation that
//! parses back to the same `f64`, so identical runs give identical bytes.

use std::path::{Path, PathBuf};

use capbench_core::ndt::HistBin;
use serde::Serialize;

use crate::experiment::BoundRow;
use crate::CliError;

/// Shortest round-trip decimal form of `v`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// One line of `results.csv`; `estimate` is `None` for a failed trial.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub channel: String,
    pub snr_db: String,
    pub estimator: String,
    pub trial: usize,
    pub estimate: Option<f64>,
    pub converged_iter: Option<usize>,
}

pub fn results_csv(rows: &[ResultRow]) -> Vec<u8> {
    csv_bytes(
        &["channel", "snr_db", "estimator", "trial", "estimate_nats", "converged_iter"],
        rows.iter().map(|r| {
            vec![
                r.channel.clone(),
                r.snr_db.clone(),
                r.estimator.clone(),
                r.trial.to_string(),
                opt_num(r.estimate),
                r.converged_iter.map(|i| i.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn hist_csv(bins: &[HistBin]) -> Vec<u8> {
    csv_bytes(
        &["bin_left", "bin_right", "count"],
        bins.iter().map(|b| vec![num(b.left), num(b.right), b.count.to_string()]),
    )
}

/// `(channel, param, row)` triples; error rows have an empty value.
pub fn bounds_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a BoundRow)>) -> Vec<u8> {
    csv_bytes(
        &["channel", "param", "kind", "value_nats", "source"],
        rows.into_iter().map(|(channel, param, r)| {
            let source = if r.source.is_empty() {
                r.name.clone()
            } else {
                format!("{}: {}", r.name, r.source)
            };
            vec![channel.to_string(), param.to_string(), r.kind.to_string(), opt_num(r.value), source]
        }),
    )
}

/// `(region, r1, r2)` rows.
pub fn region_csv<'a>(rows: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Vec<u8> {
    csv_bytes(
        &["region", "r1", "r2"],
        rows.into_iter().map(|(name, r1, r2)| vec![name.to_string(), num(r1), num(r2)]),
    )
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("summary types serialize");
    v.push(b'\n');
    v
}

#[derive(Debug, Serialize)]
pub struct TrialError {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct BoundSummary {
    pub name: String,
    pub kind: String,
    pub value_nats: Option<f64>,
    pub source: String,
    /// `value − mean`; positive when the bound lies above the estimate.
    pub gap: Option<f64>,
}

impl BoundSummary {
    pub fn new(row: &BoundRow, estimate: f64) -> Self {
        Self {
            name: row.name.clone(),
            kind: row.kind.to_string(),
            value_nats: row.value,
            source: row.source.clone(),
            gap: row.value.map(|v| v - estimate),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PointSummary {
    pub snr_db: Vec<f64>,
    pub param: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub trials: usize,
    pub failed: usize,
    pub trial_errors: Vec<TrialError>,
    /// Critic outputs clipped before exponentiation, summed over trials.
    pub clamped: usize,
    pub converged_iters: Vec<Option<usize>>,
    /// Atoms of the returned discrete source, when one was used.
    pub chosen_m: Option<usize>,
    /// `(m, mean)` for every support size tried by the discrete search.
    pub m_history: Vec<(usize, f64)>,
    pub histogram_file: String,
    pub histogram_trial: usize,
    pub bounds: Vec<BoundSummary>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub channel: String,
    pub estimator: String,
    pub final_rule: String,
    pub discrete_search: bool,
    pub points: Vec<PointSummary>,
}

#[derive(Debug, Serialize)]
pub struct MacTrialSummary {
    pub trial: usize,
    pub i_sum: f64,
    pub i1: f64,
    pub i2: f64,
    pub i_y1: f64,
    pub i_y2: f64,
}

#[derive(Debug, Serialize)]
pub struct RegionSummary {
    pub region: String,
    pub r1_max: f64,
    pub r2_max: f64,
    pub sum_rate: f64,
    pub vertices: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct MacSummary {
    pub channel: String,
    pub estimator: String,
    pub final_rule: String,
    pub snr_db: Vec<f64>,
    pub param: String,
    pub trials: usize,
    pub failed: usize,
    pub trial_errors: Vec<TrialError>,
    /// Rates built from the trial means.
    pub i_sum: f64,
    pub i1: f64,
    pub i2: f64,
    pub i_y1: f64,
    pub i_y2: f64,
    pub std_sum: Option<f64>,
    pub per_trial: Vec<MacTrialSummary>,
    pub estimated: RegionSummary,
    pub analytic: Vec<RegionSummary>,
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    /// Text for standard output.
    pub stdout: String,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Creates `dir` and writes every file into it.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.3075748799, 1e-300, -0.0, 123456789.125] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(2.0), "2");
    }

    #[test]
    fn empty_value_for_errors() {
        let row = BoundRow {
            name: "reference".into(),
            kind: "error",
            value: None,
            source: "no tabulated reference value".into(),
        };
        let text = String::from_utf8(bounds_csv([("oi", "E=1", &row)])).unwrap();
        assert_eq!(
            text,
            "channel,param,kind,value_nats,source\noi,E=1,error,,reference: no tabulated reference value\n"
        );
    }
}
