//! CSV result files. Floats are written with 17 significant digits so they
//! parse back to the same value; lines end in `\n`.

use std::fs::{self, File};
use std::path::Path;

use csv::{Terminator, Writer, WriterBuilder};
use pricelab_core::harness::{RegretTrace, RunSummary};

use crate::CliError;

pub const SUMMARY_HEADER: [&str; 12] = [
    "policy",
    "n",
    "gamma",
    "reps",
    "mean_regret",
    "std_regret",
    "p50",
    "p95",
    "p98",
    "mean_oracle_reward",
    "capped_rounds",
    "wall_clock_s",
];

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn create(path: &Path) -> Result<Writer<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    Ok(WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn summary_fields(s: &RunSummary) -> Vec<String> {
    vec![
        s.policy.to_string(),
        s.n.to_string(),
        s.gamma.map(float).unwrap_or_default(),
        s.reps.to_string(),
        float(s.mean_regret),
        float(s.std_regret),
        float(s.p50),
        float(s.p95),
        float(s.p98),
        float(s.mean_oracle_reward),
        s.capped_rounds.to_string(),
        float(s.wall_clock_s),
    ]
}

pub fn write_summary(path: &Path, rows: &[RunSummary]) -> Result<(), CliError> {
    write_rows(path, &SUMMARY_HEADER, rows.iter().map(summary_fields))
}

/// One sweep row: the swept parameter's value and the summary it produced.
pub struct SweepRow<'a> {
    pub parameter: &'a str,
    pub value: String,
    pub summary: &'a RunSummary,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow<'_>]) -> Result<(), CliError> {
    let mut header = vec!["parameter", "value"];
    header.extend_from_slice(&SUMMARY_HEADER);
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            let mut f = vec![r.parameter.to_string(), r.value.clone()];
            f.extend(summary_fields(r.summary));
            f
        }),
    )
}

pub fn write_trace(path: &Path, trace: &RegretTrace) -> Result<(), CliError> {
    let header = [
        "t",
        "price",
        "sale",
        "oracle_price",
        "oracle_sale",
        "oracle_cumulative",
        "policy_cumulative",
        "regret",
    ];
    write_rows(
        path,
        &header,
        trace.steps.iter().enumerate().map(|(t, s)| {
            vec![
                (t + 1).to_string(),
                float(s.price),
                u8::from(s.sale).to_string(),
                float(s.oracle_price),
                u8::from(s.oracle_sale).to_string(),
                float(s.oracle_cumulative),
                float(s.policy_cumulative),
                float(s.regret()),
            ]
        }),
    )
}

/// A row of `bound.csv`.
pub struct BoundRow {
    pub n: usize,
    pub d: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma: f64,
    pub bound: f64,
}

pub fn write_bound(path: &Path, rows: &[BoundRow]) -> Result<(), CliError> {
    let header = ["n", "d", "alpha1", "alpha2", "kappa1", "kappa2", "gamma", "bound"];
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.d.to_string(),
                float(r.alpha1),
                float(r.alpha2),
                float(r.kappa1),
                float(r.kappa2),
                float(r.gamma),
                float(r.bound),
            ]
        }),
    )
}

/// Wall-clock time per policy and horizon; kept apart from `summary.csv` so
/// the summary stays reproducible.
pub struct TimingRow {
    pub policy: &'static str,
    pub n: usize,
    pub reps: u64,
    pub threads: usize,
    pub seconds: f64,
}

pub fn write_timing(path: &Path, rows: &[TimingRow]) -> Result<(), CliError> {
    write_rows(
        path,
        &["policy", "n", "reps", "threads", "wall_clock_s"],
        rows.iter().map(|r| {
            vec![
                r.policy.to_string(),
                r.n.to_string(),
                r.reps.to_string(),
                r.threads.to_string(),
                format!("{:.3}", r.seconds),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, 1.0 / 3.0, 4122.0621, -1e-300, f64::MAX, 2.2] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(float(2.2), "2.2000000000000002e0");
    }

    #[test]
    fn summary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = RunSummary {
            policy: "deep-c",
            n: 100,
            gamma: None,
            reps: 2,
            mean_regret: 1.5,
            std_regret: 0.5,
            p50: 1.0,
            p95: 2.0,
            p98: 2.0,
            mean_oracle_reward: 20.0,
            capped_rounds: 0,
            wall_clock_s: 0.0,
        };
        write_summary(&path, &[s]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SUMMARY_HEADER.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 12);
        assert_eq!(row[2], "");
        assert!(!text.contains('\r'));
    }
}
