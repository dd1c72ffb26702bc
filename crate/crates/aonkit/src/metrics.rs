//! Experiment metric records and CSV rendering.
//!
//! One record per `(run, epoch)`; the column set is fixed and decimal
//! values are rendered with six significant digits, so CSV output is
//! bit-reproducible for a fixed seed apart from the wall-time column.

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub run_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub mean_orth_dev: f64,
    pub mean_sigma: f64,
    pub epoch_wall_seconds: f64,
}

pub const CSV_HEADER: &str =
    "run_id,seed,epoch,train_loss,train_acc,val_loss,val_acc,mean_orth_dev,mean_sigma,epoch_wall_seconds";

/// Renders `x` with six significant digits: positional in the exponent
/// range `[-4, 6)`, scientific outside it.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

impl MetricRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.epoch,
            format_sig6(self.train_loss),
            format_sig6(self.train_acc),
            format_sig6(self.val_loss),
            format_sig6(self.val_acc),
            format_sig6(self.mean_orth_dev),
            format_sig6(self.mean_sigma),
            format_sig6(self.epoch_wall_seconds),
        )
    }
}

/// Header plus one row per record, trailing newline included.
pub fn records_to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Drops the wall-time column from a metrics CSV (for reproducibility
/// comparisons; wall time is the one non-deterministic column).
pub fn strip_wall_column(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() == CSV_HEADER.split(',').count() {
                fields.pop();
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
