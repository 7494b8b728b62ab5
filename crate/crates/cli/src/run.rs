//! Dispatch of a validated configuration to the experiment drivers.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use chrono::Utc;
use hitlab_core::gaussian_oracle::{check_c1_c2, covariance, increment_moment, two_point_density, variance};
use hitlab_core::hitting_lab::{
    ball_exponent_fit, bound_sandwich, mc_hit_probability, polarity_scan, range_dimension_refinement,
    CriticalExponents, DimensionRelation, HitEstimate, PolarityVerdict,
};
use hitlab_core::kernels::{invariant_suite, KAlphaConfig};
use hitlab_core::potential_theory::{capacity, hausdorff_upper, CompactTarget};
use hitlab_core::rng::SeedPath;
use hitlab_core::spde_solver::{
    holder_exponents, run, run_map, steps_for_times, HolderWindow, SchemeMoments, SolverConfig,
};
use hitlab_core::spectral_noise::{sample_noise_increment, write_record, DumpHeader};
use hitlab_core::stats::{Moments, Z95};
use serde_json::json;
use thiserror::Error;

use crate::config::{Command, ExperimentConfig};
use crate::report::{ExperimentReport, Metric, Source, Status};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] hitlab_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Missing(String),
}

/// Exit code for a completed run whose acceptance check failed.
pub const EXIT_ACCEPTANCE: i32 = 2;
/// Exit code for operational errors.
pub const EXIT_ERROR: i32 = 1;

/// Results of one dispatched command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: Vec<Metric>,
    pub warnings: Vec<String>,
    pub passed: Option<bool>,
    pub details: serde_json::Value,
    /// Extra files written next to the report.
    pub files: Vec<PathBuf>,
}

fn missing(what: &str) -> RunError {
    RunError::Missing(format!("configuration lacks {what}"))
}

fn stamp() -> String {
    Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Run the command and assemble its report. Never panics on experiment
/// errors: they land in the report with status `error`.
pub fn execute(cfg: &ExperimentConfig, seed_generated: bool) -> ExperimentReport {
    let started = stamp();
    let result = dispatch(cfg);
    let finished = stamp();
    let config = cfg.values().iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
    let mut report = ExperimentReport {
        command: cfg.command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        seed_generated,
        config_text: cfg.to_text(),
        config,
        started,
        finished,
        status: Status::Ok,
        passed: None,
        metrics: vec![],
        warnings: vec![],
        error: None,
        details: serde_json::Value::Null,
    };
    match result {
        Ok(out) => {
            report.passed = out.passed;
            if out.passed == Some(false) {
                report.status = Status::AcceptanceFailed;
            }
            report.metrics = out.metrics;
            report.warnings = out.warnings;
            report.details = out.details;
        }
        Err(e) => {
            report.status = Status::Error;
            report.error = Some(e.to_string());
        }
    }
    report
}

pub fn exit_code(report: &ExperimentReport) -> i32 {
    match report.status {
        Status::Ok => 0,
        Status::AcceptanceFailed => EXIT_ACCEPTANCE,
        Status::Error => EXIT_ERROR,
    }
}

pub fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.command {
        Command::Oracle => oracle(cfg),
        Command::Simulate => simulate(cfg),
        Command::Holder => holder(cfg),
        Command::Capacity => capacity_cmd(cfg),
        Command::Hausdorff => hausdorff(cfg),
        Command::Hit => hit(cfg),
        Command::BallExponent => ball_exponent(cfg),
        Command::Polarity => polarity(cfg),
        Command::RangeDim => range_dim(cfg),
        Command::Sandwich => sandwich(cfg),
        Command::ValidateKernels => validate_kernels(),
    }
}

fn oracle(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let params = cfg.params().ok_or_else(|| missing("model parameters"))?;
    let p = cfg.oracle_p.as_ref().ok_or_else(|| missing("oracle.p_time"))?;
    let mut out = Outcome::default();
    out.metrics.push(Metric::exact("variance_p", variance(p, &params)?, Source::ClosedForm));
    if let Some(q) = &cfg.oracle_q {
        out.metrics.push(Metric::exact("variance_q", variance(q, &params)?, Source::ClosedForm));
        out.metrics.push(Metric::exact("covariance", covariance(p, q, &params)?, Source::Quadrature));
        out.metrics.push(Metric::exact("increment_moment", increment_moment(p, q, &params)?, Source::Quadrature));
        let zeros = vec![0.0; params.d];
        match two_point_density(p, q, &zeros, &zeros, &params) {
            Ok(v) => out.metrics.push(Metric::exact("peak_density", v, Source::ClosedForm)),
            Err(e) => out.warnings.push(format!("two-point density: {e}")),
        }
    }
    if let Some(rect) = &cfg.rect {
        let rep = check_c1_c2(rect, &params, cfg.pair_mesh)?;
        let e = params.time_exponent();
        let ratio = rep.c_upper / rep.c_lower;
        out.metrics.push(Metric::exact("band_lower", rep.c_lower, Source::Quadrature));
        out.metrics.push(Metric::exact("band_upper", rep.c_upper, Source::Quadrature));
        out.metrics.push(Metric::exact("band_ratio", ratio, Source::Quadrature));
        out.metrics
            .push(Metric::interval("time_slope", rep.time_fit.slope, rep.time_fit.slope_ci, Source::Fit).theory(e));
        out.metrics.push(
            Metric::interval("space_slope", rep.space_fit.slope, rep.space_fit.slope_ci, Source::Fit).theory(2.0 * e),
        );
        let within = |v: f64, t: f64| ((v - t) / t).abs() <= 0.03;
        out.passed = Some(ratio < 20.0 && within(rep.time_fit.slope, e) && within(rep.space_fit.slope, 2.0 * e));
        out.details = json!({ "conditions": rep });
    }
    Ok(out)
}

fn solver_config(cfg: &ExperimentConfig, record_times: &[f64]) -> Result<SolverConfig, RunError> {
    let model = cfg.model.clone().ok_or_else(|| missing("a model"))?;
    let grid = cfg.grid.ok_or_else(|| missing("a grid"))?;
    let n_steps = (model.horizon / grid.dt).round() as u64;
    let sc = SolverConfig {
        model,
        grid,
        n_steps,
        record_steps: steps_for_times(record_times, grid.dt)?,
        record_sites: None,
        master_seed: cfg.master_seed,
        replicas: cfg.replicas,
        scheme: cfg.scheme,
    };
    sc.validate()?;
    Ok(sc)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sc = solver_config(cfg, &cfg.record_times)?;
    let params = sc.model.params;
    let n_times = sc.record_steps.len();
    // Per replica: mean of u² over sites and channels, per recorded time.
    let per_replica = run_map(&sc, |f| {
        f.data.iter().map(|row| row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64).collect::<Vec<f64>>()
    })?;
    let scalar = sc.model.sigma.as_scalar().filter(|_| sc.spectral_eligible());
    let moments = match scalar {
        Some(s) => Some(SchemeMoments::new(sc.grid, params, s)?),
        None => None,
    };
    let mut out = Outcome::default();
    for (i, &step) in sc.record_steps.iter().enumerate() {
        let t = step as f64 * sc.grid.dt;
        let m: Moments = per_replica.iter().map(|v| v[i]).collect();
        let half = Z95 * m.std_error();
        let mut metric = Metric::interval("variance", m.mean, (m.mean - half, m.mean + half), Source::MonteCarlo).t(t);
        if let Some(s) = scalar {
            let p = hitlab_core::gaussian_oracle::SpaceTimePoint::new(t, vec![0.0; params.k]);
            metric = metric.theory(s * s * variance(&p, &params)?);
        }
        out.metrics.push(metric);
        if let Some(sm) = &moments {
            out.metrics.push(Metric::exact("scheme_variance", sm.variance(step), Source::ClosedForm).t(t));
        }
    }
    if n_times == 0 {
        out.warnings.push("no recorded times".into());
    }
    if !cfg.dump_noise_steps.is_empty() {
        let path = cfg.output_dir.join("noise.bin");
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut w = BufWriter::new(File::create(&path)?);
        for &step in &cfg.dump_noise_steps {
            let slice = sample_noise_increment(&sc.grid, &params, SeedPath::new(cfg.master_seed, 0, step))?;
            write_record(&mut w, &DumpHeader::for_slice(&slice), &slice.values)?;
        }
        out.files.push(path);
    }
    if cfg.dump_fields {
        let path = cfg.output_dir.join("fields.bin");
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut w = BufWriter::new(File::create(&path)?);
        let one = SolverConfig { replicas: 1, ..sc.clone() };
        let field = run(&one)?.remove(0);
        for (row, &step) in field.data.iter().zip(&field.steps) {
            let header = DumpHeader {
                k: sc.grid.k as u32,
                d: params.d as u32,
                points: sc.grid.points as u64,
                length: sc.grid.length,
                dt: sc.grid.dt,
                seed: cfg.master_seed,
                replica: 0,
                step,
            };
            write_record(&mut w, &header, row)?;
        }
        out.files.push(path);
    }
    out.details = json!({
        "record_steps": sc.record_steps,
        "scheme": format!("{:?}", sc.resolved_scheme()),
        "dumps": out.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn holder(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let spec = cfg.holder.as_ref().ok_or_else(|| missing("holder settings"))?;
    let mut times: Vec<f64> = spec.time_lags.iter().map(|h| spec.time - h).collect();
    times.push(spec.time);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sc = solver_config(cfg, &times)?;
    let fields = run(&sc)?;
    let window = HolderWindow {
        time: spec.time,
        time_lags: spec.time_lags.clone(),
        space_lags: spec.space_lags.clone(),
        sites: (0..sc.grid.len()).collect(),
    };
    let est = holder_exponents(&fields, &window)?;
    let e = sc.model.params.time_exponent();
    let ci = |v: f64, se: f64| (v - Z95 * se, v + Z95 * se);
    let mut out = Outcome::default();
    out.metrics.push(
        Metric::interval("temporal_exponent", est.temporal, ci(est.temporal, est.temporal_se), Source::Fit)
            .t(spec.time)
            .theory(e / 2.0),
    );
    out.metrics.push(
        Metric::interval("spatial_exponent", est.spatial, ci(est.spatial, est.spatial_se), Source::Fit)
            .t(spec.time)
            .theory(e),
    );
    if let Some(tol) = cfg.tolerance {
        let ok = |v: f64, t: f64| ((v - t) / t).abs() <= tol;
        out.passed = Some(ok(est.temporal, e / 2.0) && ok(est.spatial, e));
    }
    out.details = json!({ "holder": est });
    Ok(out)
}

fn diameter(target: &CompactTarget) -> f64 {
    match target {
        CompactTarget::Point { .. } => 0.0,
        CompactTarget::Ball { radius, .. } => 2.0 * radius,
        CompactTarget::Cloud { points, cell_radius } => {
            let d = points.first().map(|p| p.len()).unwrap_or(0);
            let span: f64 = (0..d)
                .map(|a| {
                    let (lo, hi) =
                        points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[a]), h.max(p[a])));
                    (hi - lo).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            span + 2.0 * cell_radius
        }
    }
}

fn kernel_config(cfg: &ExperimentConfig, target: &CompactTarget) -> Result<KAlphaConfig, RunError> {
    Ok(match cfg.n0 {
        Some(n0) => KAlphaConfig::new(n0)?,
        None => KAlphaConfig::for_diameter(diameter(target).max(1.0)),
    })
}

fn capacity_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let target = cfg.target.as_ref().ok_or_else(|| missing("a target"))?;
    let alpha = cfg.alpha.ok_or_else(|| missing("experiment.alpha"))?;
    let kcfg = kernel_config(cfg, target)?;
    let res = capacity(target, alpha, &kcfg, &cfg.capacity)?;
    let mut out = Outcome::default();
    out.metrics.push(Metric::exact("capacity", res.capacity, Source::Optimizer));
    out.metrics.push(Metric::exact("min_energy", res.min_energy, Source::Optimizer));
    out.metrics.push(Metric::exact("duality_gap", res.duality_gap, Source::Optimizer));
    out.passed = Some(res.converged && res.duality_gap < 1e-8);
    if !res.converged {
        out.warnings
            .push(format!("Frank–Wolfe stopped after {} iterations with gap {:e}", res.iterations, res.duality_gap));
    }
    out.details = json!({ "n0": kcfg.n0, "capacity": res });
    Ok(out)
}

fn hausdorff(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let target = cfg.target.as_ref().ok_or_else(|| missing("a target"))?;
    let alpha = cfg.alpha.ok_or_else(|| missing("experiment.alpha"))?;
    let mut scales = cfg.cover_scales.clone();
    scales.sort_by(|a, b| b.total_cmp(a));
    let mut out = Outcome::default();
    for eps in scales {
        let h = hausdorff_upper(target, alpha, eps)?;
        out.metrics.push(Metric::exact("hausdorff_upper", h, Source::Cover).eps(eps));
    }
    Ok(out)
}

fn hit_metric(p: &HitEstimate, d: usize) -> Metric {
    Metric::interval("hit_probability", p.estimate, p.interval, Source::MonteCarlo).d(d).eps(p.eps)
}

fn experiment(cfg: &ExperimentConfig) -> Result<hitlab_core::hitting_lab::Experiment, RunError> {
    cfg.experiment().ok_or_else(|| missing("a hitting experiment (model, grid, rect)"))
}

fn center(cfg: &ExperimentConfig, d: usize) -> Vec<f64> {
    cfg.center.clone().unwrap_or_else(|| vec![0.0; d])
}

fn hit(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let exp = experiment(cfg)?;
    let target = cfg.target.as_ref().ok_or_else(|| missing("a target"))?;
    let rep = mc_hit_probability(&exp, target, cfg.inflation)?;
    let d = exp.params().d;
    let mut out = Outcome::default();
    out.metrics.push(hit_metric(&rep.estimate, d));
    out.metrics.push(Metric::exact("inflation", rep.inflation.value, Source::Fit));
    out.details = json!({ "hit": rep });
    Ok(out)
}

fn ball_exponent(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let exp = experiment(cfg)?;
    let d = exp.params().d;
    let rep = ball_exponent_fit(&exp, &center(cfg, d), &cfg.eps, cfg.inflation)?;
    let mut out = Outcome::default();
    for p in &rep.points {
        out.metrics.push(hit_metric(p, d));
    }
    out.metrics
        .push(Metric::interval("decay_exponent", rep.fit.exponent, rep.fit.ci, Source::Fit).d(d).theory(rep.theory));
    if let Some(f) = rep.uninflated_fit {
        out.metrics.push(Metric::interval("decay_exponent_uninflated", f.exponent, f.ci, Source::Fit).d(d));
    }
    out.metrics.push(Metric::exact("inflation", rep.inflation.value, Source::Fit));
    if let Some(floor) = cfg.min_exponent {
        out.passed = Some(rep.fit.exponent >= floor);
    }
    out.warnings = rep.warnings.clone();
    out.details = json!({ "ball_exponent": rep });
    Ok(out)
}

fn polarity(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let exp = experiment(cfg)?;
    let d_max = cfg.dims.iter().copied().max().unwrap_or(exp.params().d);
    let rows = polarity_scan(&exp, &cfg.dims, &center(cfg, d_max), &cfg.eps, cfg.inflation)?;
    let mut out = Outcome::default();
    let mut consistent = true;
    for row in &rows {
        for p in &row.points {
            out.metrics.push(hit_metric(p, row.d));
        }
        if let Some(f) = row.decay {
            out.metrics.push(
                Metric::interval("decay_exponent", f.exponent, f.ci, Source::Fit).d(row.d).theory(row.d as f64 - row.q),
            );
        }
        let expected = match row.relation {
            DimensionRelation::Below => Some(PolarityVerdict::NotPolar),
            DimensionRelation::Above => Some(PolarityVerdict::Polar),
            DimensionRelation::Critical => None,
        };
        if let Some(v) = expected {
            if row.verdict != v {
                consistent = false;
                out.warnings.push(format!("d = {}: verdict {:?}, expected {:?}", row.d, row.verdict, v));
            }
        }
    }
    out.passed = Some(consistent);
    out.details = json!({ "rows": rows });
    Ok(out)
}

fn range_dim(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let exp = experiment(cfg)?;
    let (coarse, fine) = range_dimension_refinement(&exp, &cfg.scales, cfg.time_thin, cfg.space_thin)?;
    let d = exp.params().d;
    let mut out = Outcome::default();
    out.metrics.push(
        Metric::interval("range_dimension", fine.estimate.dimension, fine.estimate.ci, Source::BoxCount)
            .d(d)
            .theory(fine.q),
    );
    out.metrics.push(
        Metric::interval("range_dimension_coarse", coarse.estimate.dimension, coarse.estimate.ci, Source::BoxCount)
            .d(d)
            .theory(coarse.q),
    );
    let approach = (fine.estimate.dimension - fine.q).abs() <= (coarse.estimate.dimension - coarse.q).abs();
    if !approach {
        out.warnings.push("refinement moved the estimate away from Q".into());
    }
    if let Some(tol) = cfg.tolerance {
        out.passed = Some(approach && fine.relative_error.abs() <= tol);
    }
    out.warnings.extend(fine.estimate.warnings.iter().cloned());
    out.warnings.push(fine.note.clone());
    out.details = json!({ "fine": fine, "coarse": coarse });
    Ok(out)
}

fn sandwich(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let exp = experiment(cfg)?;
    let target = cfg.target.as_ref().ok_or_else(|| missing("a target"))?;
    let kcfg = kernel_config(cfg, target)?;
    let rep = bound_sandwich(&exp, target, &cfg.eps, &cfg.cover_scales, &kcfg, &cfg.capacity, cfg.inflation)?;
    let d = exp.params().d;
    let crit = CriticalExponents::new(exp.params())?;
    let mut out = Outcome::default();
    out.metrics.push(Metric::exact("capacity", rep.capacity.capacity, Source::Optimizer).d(d));
    for &(eps, h) in &rep.hausdorff {
        out.metrics.push(Metric::exact("hausdorff_upper", h, Source::Cover).d(d).eps(eps));
    }
    for p in &rep.hits {
        out.metrics.push(hit_metric(p, d));
    }
    if let Some(c) = rep.lower_constant {
        out.metrics.push(Metric::exact("lower_constant", c, Source::Fit).d(d));
    }
    if let Some(c) = rep.upper_constant {
        out.metrics.push(Metric::exact("upper_constant", c, Source::Fit).d(d));
    }
    out.passed = Some(rep.consistent());
    if crit.relation() == DimensionRelation::Critical {
        out.warnings.push("d equals Q; the bounds are reported only".into());
    }
    out.details = json!({ "sandwich": rep });
    Ok(out)
}

fn validate_kernels() -> Result<Outcome, RunError> {
    let checks = invariant_suite()?;
    let mut out = Outcome::default();
    for c in &checks {
        out.metrics.push(Metric::exact(c.name.clone(), c.computed, Source::Identity).theory(c.reference));
        if !c.passed {
            out.warnings.push(format!("{} failed: error {:e} > {:e}", c.name, c.error, c.tolerance));
        }
    }
    out.passed = Some(checks.iter().all(|c| c.passed));
    out.details = json!({ "checks": checks });
    Ok(out)
}
