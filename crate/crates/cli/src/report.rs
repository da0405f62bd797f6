use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWindow {
    pub label: String,
    pub j_min: i32,
    pub j_max: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub mesh_depth: u32,
    pub grid_windows: Vec<GridWindow>,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig, mesh_depth: u32, grid_windows: Vec<GridWindow>) -> Self {
        let versions = [("dyadlab", dyadlab::VERSION), ("dyadlab-cli", env!("CARGO_PKG_VERSION"))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Metadata {
            experiment: cfg.experiment.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            versions,
            mesh_depth,
            grid_windows,
        }
    }
}

/// A table with fixed headers, a JSON summary, and optional extra files.
#[derive(Debug, Clone)]
pub struct Report {
    pub metadata: Metadata,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: serde_json::Value,
    /// extra files written next to the report: (file name, contents)
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# experiment: {}\n", self.metadata.experiment));
        s.push_str(&format!("# config_hash: {}\n", self.metadata.config_hash));
        s.push_str(&format!("# mesh_depth: {}\n", self.metadata.mesh_depth));
        for w in &self.metadata.grid_windows {
            s.push_str(&format!("# grid_window {}: [{}, {}]\n", w.label, w.j_min, w.j_max));
        }
        for (k, v) in &self.metadata.versions {
            s.push_str(&format!("# version {k}: {v}\n"));
        }
        s.push_str(&self.headers.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "metadata": self.metadata,
            "summary": self.summary,
            "csv": self.csv(),
        })
    }

    /// Writes `<experiment>.csv` / `<experiment>.json` and the artifacts into `dir`.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<String>, CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let stem = &self.metadata.experiment;
        let mut written = Vec::new();
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            fs::write(dir.join(format!("{stem}.csv")), self.csv()).map_err(io)?;
            written.push(format!("{stem}.csv"));
        }
        if matches!(format, OutputFormat::Json | OutputFormat::Both) {
            let text = serde_json::to_string_pretty(&self.json()).expect("serializable");
            fs::write(dir.join(format!("{stem}.json")), text).map_err(io)?;
            written.push(format!("{stem}.json"));
        }
        for (name, bytes) in &self.artifacts {
            fs::write(dir.join(name), bytes).map_err(io)?;
            written.push(name.clone());
        }
        Ok(written)
    }
}

/// Least squares `y = slope·x + intercept` with a 95% Student-t band on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (stderr, half) = if n > 2 {
        let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let se = (sse / (n - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("positive dof").inverse_cdf(0.975);
        (se, t * se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr: stderr,
        slope_low: slope - half,
        slope_high: slope + half,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub a2: f64,
    pub norm: f64,
    pub ratio: f64,
    pub aux: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub operator: String,
    /// sorted by `a2`
    pub rows: Vec<SweepRow>,
    /// fit of `log norm` against `log a2`
    pub fit: Option<LineFit>,
}

impl SweepReport {
    pub fn new(operator: &str, mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.a2.partial_cmp(&b.a2).expect("finite characteristics"));
        let fit = Self::fit_of(&rows, |r| r.norm);
        SweepReport { operator: operator.into(), rows, fit }
    }

    /// Log-log fit of any column against `a2`, skipping non-positive values.
    pub fn fit_of(rows: &[SweepRow], col: impl Fn(&SweepRow) -> f64) -> Option<LineFit> {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.a2 > 0.0 && col(r) > 0.0).map(|r| (r.a2.ln(), col(r).ln())).unzip();
        fit_line(&x, &y)
    }

    pub fn a2_decades(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => (b.a2 / a.a2).log10(),
            _ => 0.0,
        }
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| vec![fmt(r.param), fmt(r.a2), fmt(r.norm), fmt(r.ratio)]).collect()
    }
}

/// Shortest round-trip representation.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_and_band() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!(f.slope_stderr.abs() < 1e-12);
        let noisy = [0.1, 0.9, 2.2, 2.8];
        let g = fit_line(&x, &noisy).unwrap();
        assert!(g.slope_low < g.slope && g.slope < g.slope_high);
        assert!(fit_line(&[1.0], &[1.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[0.0, 2.0]).is_none());
    }

    #[test]
    fn sweep_rows_sorted() {
        let row = |a2: f64| SweepRow { param: 0.0, a2, norm: a2, ratio: 1.0, aux: BTreeMap::new() };
        let s = SweepReport::new("id", vec![row(10.0), row(1.0), row(100.0)]);
        assert_eq!(s.rows.iter().map(|r| r.a2).collect::<Vec<_>>(), vec![1.0, 10.0, 100.0]);
        assert!((s.fit.unwrap().slope - 1.0).abs() < 1e-12);
        assert!((s.a2_decades() - 2.0).abs() < 1e-12);
    }
}
