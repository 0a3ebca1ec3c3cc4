//! Per-iteration run records and their CSV/JSON persistence.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::hyfdca::ledger::{LedgerCounts, PrivacyAudit};
use crate::hyfdca::schedule::Schedule;
use crate::metrics::timing::TimingModel;
use crate::partition::PartitionSummary;

pub const CSV_HEADER: [&str; 9] = ["t", "P", "D", "gap", "acc", "compute_s", "enc_s", "latency_s", "cum_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub primal: f64,
    pub dual: Option<f64>,
    pub gap: Option<f64>,
    pub accuracy: f64,
    pub compute_s: f64,
    pub enc_s: f64,
    pub latency_s: f64,
    pub cum_s: f64,
    pub active: usize,
    pub counts: LedgerCounts,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub algorithm: String,
    pub seed: u64,
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub lambda: f64,
    pub partition: Option<PartitionSummary>,
    pub schedule: Schedule,
    pub params: serde_json::Value,
    pub timing: TimingModel,
    pub ledger_totals: LedgerCounts,
    pub audit: Option<PrivacyAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub meta: RunMetadata,
    pub rows: Vec<IterationRecord>,
    /// Final server-side primal weights.
    pub final_w: Vec<f64>,
}

impl RunHistory {
    pub fn primal_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.primal).collect()
    }

    /// Dual values, or `None` when the algorithm has no dual iterate.
    pub fn dual_series(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.dual).collect()
    }

    pub fn accuracy_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.accuracy).collect()
    }

    pub fn cumulative_time(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cum_s).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_s)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    /// Writes `<stem>.csv` and `<stem>.json` (metadata sidecar) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
        let mut meta = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
        serde_json::to_writer_pretty(&mut meta, &self.meta)?;
        meta.write_all(b"\n")?;
        meta.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_rows<W: Write>(rows: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.primal.to_string(),
            opt(r.dual),
            opt(r.gap),
            r.accuracy.to_string(),
            r.compute_s.to_string(),
            r.enc_s.to_string(),
            r.latency_s.to_string(),
            r.cum_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_rows`]. Fields that the CSV does not carry
/// (active count, ledger counts) come back as defaults.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(config(format!("unexpected history header: {header:?}")));
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>().map_err(|e| crate::Error::Parse { line, msg: format!("{s:?}: {e}") })
    };
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let maybe = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, line).map(Some)
            }
        };
        rows.push(IterationRecord {
            t: rec[0].parse().map_err(|e| crate::Error::Parse { line, msg: format!("{e}") })?,
            primal: num(&rec[1], line)?,
            dual: maybe(&rec[2])?,
            gap: maybe(&rec[3])?,
            accuracy: num(&rec[4], line)?,
            compute_s: num(&rec[5], line)?,
            enc_s: num(&rec[6], line)?,
            latency_s: num(&rec[7], line)?,
            cum_s: num(&rec[8], line)?,
            active: 0,
            counts: LedgerCounts::default(),
            skipped: false,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, dual: Option<f64>) -> IterationRecord {
        IterationRecord {
            t,
            primal: 0.1 + t as f64 / 3.0,
            dual,
            gap: dual.map(|d| 0.1 + t as f64 / 3.0 - d),
            accuracy: 0.75,
            compute_s: 1e-7,
            enc_s: 0.3,
            latency_s: 1.15875,
            cum_s: t as f64 * 1.4588,
            active: 0,
            counts: LedgerCounts::default(),
            skipped: false,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![row(1, Some(0.05)), row(2, None)];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,P,D,gap,acc,compute_s,enc_s,latency_s,cum_s\n"));
        assert!(text.lines().nth(2).unwrap().starts_with("2,0.7666666666666666,,,"));
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }
}
