//! Experiment reports: `report.json` and `metrics.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// How a metric was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Fit,
    Optimizer,
    Cover,
    BoxCount,
    Identity,
}

impl Source {
    fn name(self) -> &'static str {
        match self {
            Source::ClosedForm => "closed_form",
            Source::Quadrature => "quadrature",
            Source::MonteCarlo => "monte_carlo",
            Source::Fit => "fit",
            Source::Optimizer => "optimizer",
            Source::Cover => "cover",
            Source::BoxCount => "box_count",
            Source::Identity => "identity",
        }
    }
}

/// One numeric result. Either `interval` is set or `exact` is true.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub d: Option<usize>,
    /// Time coordinate, for per-time metrics.
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub estimate: f64,
    pub interval: Option<(f64, f64)>,
    pub exact: bool,
    pub theory: Option<f64>,
    pub source: Source,
}

impl Metric {
    /// A deterministic value, exact up to the stated numerical tolerance.
    pub fn exact(name: impl Into<String>, estimate: f64, source: Source) -> Self {
        Self {
            name: name.into(),
            d: None,
            t: None,
            eps: None,
            estimate,
            interval: None,
            exact: true,
            theory: None,
            source,
        }
    }

    /// A statistical estimate with its 95% interval.
    pub fn interval(name: impl Into<String>, estimate: f64, interval: (f64, f64), source: Source) -> Self {
        Self {
            name: name.into(),
            d: None,
            t: None,
            eps: None,
            estimate,
            interval: Some(interval),
            exact: false,
            theory: None,
            source,
        }
    }

    pub fn d(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    pub fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn theory(mut self, t: f64) -> Self {
        self.theory = Some(t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    AcceptanceFailed,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub seed_generated: bool,
    /// Canonical configuration text; feeding it back reproduces the run.
    pub config_text: String,
    pub config: BTreeMap<String, String>,
    pub started: String,
    pub finished: String,
    pub status: Status,
    /// Outcome of the assertion-grade check, when the command has one.
    pub passed: Option<bool>,
    pub metrics: Vec<Metric>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub details: serde_json::Value,
}

pub const CSV_HEADER: &str = "name,d,t,eps,estimate,ci_lo,ci_hi,exact,theory,source";

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for m in &self.metrics {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            let (lo, hi) = m.interval.map(|(a, b)| (Some(a), Some(b))).unwrap_or((None, None));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.name,
                m.d.map(|d| d.to_string()).unwrap_or_default(),
                opt(m.t),
                opt(m.eps),
                num(m.estimate),
                opt(lo),
                opt(hi),
                m.exact,
                opt(m.theory),
                m.source.name()
            );
        }
        out
    }

    /// Write the requested files into `dir`; returns their paths.
    pub fn write(&self, dir: &Path, json: bool, csv: bool) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = vec![];
        if json {
            let p = dir.join("report.json");
            std::fs::write(&p, self.to_json())?;
            written.push(p);
        }
        if csv {
            let p = dir.join("metrics.csv");
            std::fs::write(&p, self.to_csv())?;
            written.push(p);
        }
        Ok(written)
    }
}
