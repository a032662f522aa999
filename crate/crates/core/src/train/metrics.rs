use std::io::Write;

use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: &str = "step,episodes,success_rate,mean_return,mean_kl,mean_entropy,wall_clock_s";
pub const TRANSFER_HEADER: &str = "step,episodes,success_rate,mean_return,mean_kl,mean_entropy,wall_clock_s,mean_bonus,distinct_states";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferColumns {
    pub mean_bonus: f64,
    pub distinct_states: u64,
}

/// One metrics interval. Rates and means cover the episodes finished since
/// the previous row; `step` and `episodes` are cumulative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episodes: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_kl: f64,
    pub mean_entropy: f64,
    pub wall_clock_s: f64,
    pub transfer: Option<TransferColumns>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.step, self.episodes, self.success_rate, self.mean_return, self.mean_kl, self.mean_entropy, self.wall_clock_s
        );
        if let Some(t) = self.transfer {
            s.push_str(&format!(",{},{}", t.mean_bonus, t.distinct_states));
        }
        s
    }
}

/// Streams rows to a CSV sink, flushing after each one so partial runs
/// leave readable files.
pub struct MetricsWriter {
    out: Box<dyn Write + Send>,
}

impl MetricsWriter {
    pub fn new(mut out: Box<dyn Write + Send>, transfer: bool) -> std::io::Result<Self> {
        writeln!(out, "{}", if transfer { TRANSFER_HEADER } else { METRICS_HEADER })?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> std::io::Result<()> {
        writeln!(self.out, "{}", row.to_csv())?;
        self.out.flush()
    }
}

impl std::fmt::Debug for MetricsWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MetricsWriter")
    }
}
