use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One aggregated (scheme, SNR, K) point. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: String,
    pub w: usize,
    pub snr_db: f64,
    pub n_ue: usize,
    pub bler: f64,
    pub bler_ci95: f64,
    pub avg_attempts_per_ue: f64,
    pub collision_rate: f64,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub n_drops: usize,
}

impl MetricsRow {
    pub fn trials(&self) -> usize {
        self.n_ue * self.n_drops
    }

    /// Fewer than 20 block errors behind the BLER estimate.
    pub fn low_confidence(&self) -> bool {
        (self.bler * self.trials() as f64).round() < 20.0
    }
}

pub const CSV_HEADER: &str =
    "scheme,w,snr_db,n_ue,bler,bler_ci95,avg_attempts_per_ue,collision_rate,miss_rate,false_alarm_rate,n_drops";

/// Writes rows to any writer; floats use shortest round-trip formatting.
pub fn write_rows<W: std::io::Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_results(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_rows(rows, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_results(path: &Path) -> Result<Vec<MetricsRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<csv::Result<_>>().map_err(csv_err)
}
