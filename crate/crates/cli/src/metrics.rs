//! Per-iteration metrics rows and their CSV rendering.

use std::io;
use std::path::Path;

pub const METRICS_HEADER: &str =
    "method,outer_iter,wall_time_s,dual_obj,test_accuracy,ws_size,time_inference_s,time_learning_s,time_comm_s";

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub method: &'static str,
    pub outer_iter: usize,
    /// cumulative seconds since the run started
    pub wall_time_s: f64,
    /// NaN for methods without a dual objective
    pub dual_obj: f64,
    /// NaN when no test set was given
    pub test_accuracy: f64,
    pub ws_size: usize,
    pub time_inference_s: f64,
    pub time_learning_s: f64,
    pub time_comm_s: f64,
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.outer_iter,
            r.wall_time_s,
            r.dual_obj,
            r.test_accuracy,
            r.ws_size,
            r.time_inference_s,
            r.time_learning_s,
            r.time_comm_s
        ));
    }
    out
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> io::Result<()> {
    std::fs::write(path, to_csv(rows))
}
