//! Summary statistics, empirical CDFs and report writers.

use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, HarnessResult};

/// Quantile levels `0, 0.001, ..., 1` used for every serialized CDF.
pub const CDF_POINTS: usize = 1001;

pub fn quantile_levels() -> Vec<f64> {
    (0..CDF_POINTS).map(|i| i as f64 / (CDF_POINTS - 1) as f64).collect()
}

fn sorted(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Inverse empirical CDF `Q(q) = min { x : F(x) >= q }` at the fixed levels.
/// Values are non-decreasing; `Q(0)` is the minimum and `Q(1)` the maximum.
pub fn quantile_grid(data: &[f64]) -> Vec<f64> {
    if data.is_empty() {
        return vec![f64::NAN; CDF_POINTS];
    }
    let s = sorted(data);
    let n = s.len();
    (0..CDF_POINTS)
        .map(|i| {
            let rank = (i * n).div_ceil(CDF_POINTS - 1);
            s[rank.max(1) - 1]
        })
        .collect()
}

/// Mean of the distribution whose quantile function is the grid, read as a
/// right-continuous step function. Differs from the sample mean by at most
/// the sample range divided by `CDF_POINTS - 1`.
pub fn grid_mean(grid: &[f64]) -> f64 {
    let bins = grid.len() - 1;
    grid[1..].iter().sum::<f64>() / bins as f64
}

/// `integral x dF_n(x)` computed from the empirical CDF of the sorted sample.
pub fn ecdf_mean(data: &[f64]) -> f64 {
    let s = sorted(data);
    let n = s.len() as f64;
    // sum over the jumps of F_n, each of height 1/n
    s.iter().map(|x| x / n).sum()
}

pub fn median(data: &[f64]) -> f64 {
    let s = sorted(data);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStat {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over `sqrt(n)`).
    pub std_error: f64,
}

pub fn mean_stat(data: &[f64]) -> MeanStat {
    let n = data.len() as f64;
    if data.is_empty() {
        return MeanStat { mean: f64::NAN, std_error: f64::NAN };
    }
    let mean = data.iter().sum::<f64>() / n;
    let std_error = if data.len() > 1 {
        (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    MeanStat { mean, std_error }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::report(path, e))?;
    text.push('\n');
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| HarnessError::report(path, e))
}

fn ensure_parent(path: &Path) -> HarnessResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::report(dir, e))?;
    }
    Ok(())
}

/// Writes a CSV table with a header row; floats use the shortest
/// representation that round-trips.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> HarnessResult<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::report(path, e))?;
    w.write_record(header).map_err(|e| HarnessError::report(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| HarnessError::report(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::report(path, e))
}

/// Column-per-series CDF table: `quantile, <name>...`.
pub fn write_cdf_csv(path: &Path, series: &[(String, Vec<f64>)]) -> HarnessResult<()> {
    let mut header = vec!["quantile".to_owned()];
    header.extend(series.iter().map(|(n, _)| n.clone()));
    let rows: Vec<Vec<String>> = quantile_levels()
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut row = vec![q.to_string()];
            row.extend(series.iter().map(|(_, v)| v[i].to_string()));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}
