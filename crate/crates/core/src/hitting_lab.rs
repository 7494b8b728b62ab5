//! Hitting experiments: anisotropic coverings of a rectangle, Monte Carlo hit
//! probabilities of the lattice range against compact targets, ball-decay
//! exponents, polarity scans across ambient dimensions, and box-counting
//! dimension of the range.
//!
//! Every experiment scans each replica once: the minimal distance from the
//! recorded range to each target is kept, together with a sample of mesh
//! neighbour gaps. Hit indicators for any `ε` and inflation are thresholds on
//! those distances, so estimates at different `ε` share seeds exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
pub use crate::geometry::Rectangle;
use crate::kernels::{KAlphaConfig, NoiseParams};
use crate::potential_theory::{
    capacity, hausdorff_upper, BoxCounter, BoxDimension, CapacityOptions, CapacityResult, CompactTarget,
};
use crate::spde_solver::{run_map, simulate_replica, LatticeField, ModelSpec, Scheme, SolverConfig};
use crate::spectral_noise::TorusGrid;
use crate::stats::{log_space, wilson_interval, Z95};

/// Slack `δ` subtracted from the Hölder exponents of the inflation modulus.
pub const HOLDER_SLACK: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.1;

/// Dimension bookkeeping around the critical dimension `Q = (4 + 2k) / (2 − β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponents {
    pub k: usize,
    pub d: usize,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
}

impl CriticalExponents {
    /// Defaults: `η = 0.1`, `γ = 0.9 (2 − β)`.
    pub fn new(params: &NoiseParams) -> Result<Self> {
        Self::with(params, DEFAULT_ETA, 0.9 * (2.0 - params.beta))
    }

    pub fn with(params: &NoiseParams, eta: f64, gamma: f64) -> Result<Self> {
        params.validate()?;
        if !(eta > 0.0 && eta.is_finite()) {
            return domain(format!("eta must be positive, got {eta}"));
        }
        if !(gamma > 0.0 && gamma < 2.0 - params.beta) {
            return domain(format!("gamma = {gamma} must lie in (0, 2 - beta) = (0, {})", 2.0 - params.beta));
        }
        Ok(Self { k: params.k, d: params.d, beta: params.beta, eta, gamma })
    }

    pub fn q(&self) -> f64 {
        (4.0 + 2.0 * self.k as f64) / (2.0 - self.beta)
    }

    /// `d − Q`: ball-decay exponent of the Gaussian case.
    pub fn ball_exponent(&self) -> f64 {
        self.d as f64 - self.q()
    }

    /// Index of the lower (capacity) bound, `d − Q + η`.
    pub fn capacity_index(&self) -> f64 {
        self.ball_exponent() + self.eta
    }

    /// Index of the upper (Hausdorff) bound, `d − Q − η`.
    pub fn hausdorff_index(&self) -> f64 {
        self.ball_exponent() - self.eta
    }

    pub fn relation(&self) -> DimensionRelation {
        let gap = self.d as f64 - self.q();
        if gap.abs() < 1e-9 {
            DimensionRelation::Critical
        } else if gap < 0.0 {
            DimensionRelation::Below
        } else {
            DimensionRelation::Above
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRelation {
    Below,
    Critical,
    Above,
}

/// Dyadic space-time cells `[t_i, t_{i+1}] × ∏[x_j, x_j + Δx]` with
/// `Δt = 2^{−4n/γ}` and `Δx = 2^{−2n/γ}`, restricted to those meeting `rect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicGrid {
    pub rect: Rectangle,
    pub n: u32,
    pub gamma: f64,
    pub time_spacing: f64,
    pub space_spacing: f64,
    /// Half-open range of time cell indices.
    pub time_cells: (i64, i64),
    /// Half-open range of cell indices per spatial axis.
    pub space_cells: Vec<(i64, i64)>,
}

pub fn build_grid(rect: &Rectangle, n: u32, gamma: f64, params: &NoiseParams) -> Result<AnisotropicGrid> {
    rect.validate()?;
    params.validate()?;
    if rect.k() != params.k {
        return Err(Error::Shape(format!("rectangle has {} axes but k = {}", rect.k(), params.k)));
    }
    if !(gamma > 0.0 && gamma < 2.0 - params.beta) {
        return domain(format!("gamma = {gamma} must lie in (0, 2 - beta) = (0, {})", 2.0 - params.beta));
    }
    if n == 0 {
        return domain("refinement level n must be at least 1");
    }
    let time_spacing = 2f64.powf(-4.0 * n as f64 / gamma);
    let space_spacing = 2f64.powf(-2.0 * n as f64 / gamma);
    if time_spacing == 0.0 || space_spacing == 0.0 {
        return domain("grid spacing underflows");
    }
    let span =
        |lo: f64, hi: f64, h: f64| ((lo / h).floor() as i64, ((hi / h).ceil() as i64).max((lo / h).floor() as i64 + 1));
    Ok(AnisotropicGrid {
        time_cells: span(rect.time.0, rect.time.1, time_spacing),
        space_cells: rect.space.iter().map(|&(a, b)| span(a, b, space_spacing)).collect(),
        rect: rect.clone(),
        n,
        gamma,
        time_spacing,
        space_spacing,
    })
}

impl AnisotropicGrid {
    pub fn time_cell_count(&self) -> u64 {
        (self.time_cells.1 - self.time_cells.0) as u64
    }

    pub fn space_cell_count(&self, axis: usize) -> u64 {
        let (a, b) = self.space_cells[axis];
        (b - a) as u64
    }

    pub fn total_cells(&self) -> f64 {
        (0..self.space_cells.len()).fold(self.time_cell_count() as f64, |acc, a| acc * self.space_cell_count(a) as f64)
    }

    /// `2^{n(4 + 2k)/γ}`, the count for a unit rectangle.
    pub fn nominal_cells(&self) -> f64 {
        2f64.powf(self.n as f64 * (4.0 + 2.0 * self.space_cells.len() as f64) / self.gamma)
    }

    /// Cell containing `(t, x)`, as `(i, j)` indices.
    pub fn locate(&self, t: f64, x: &[f64]) -> Option<(i64, Vec<i64>)> {
        if !self.rect.contains(t, x) {
            return None;
        }
        let clamp = |v: f64, h: f64, (a, b): (i64, i64)| ((v / h).floor() as i64).clamp(a, b - 1);
        Some((
            clamp(t, self.time_spacing, self.time_cells),
            x.iter().zip(&self.space_cells).map(|(&v, &r)| clamp(v, self.space_spacing, r)).collect(),
        ))
    }

    /// Bounds of cell `(i, j)` clipped to the rectangle.
    pub fn cell(&self, i: i64, j: &[i64]) -> Option<((f64, f64), Vec<(f64, f64)>)> {
        if !(self.time_cells.0..self.time_cells.1).contains(&i) || j.len() != self.space_cells.len() {
            return None;
        }
        let clip = |idx: i64, h: f64, (lo, hi): (f64, f64)| ((idx as f64 * h).max(lo), ((idx + 1) as f64 * h).min(hi));
        let time = clip(i, self.time_spacing, self.rect.time);
        let mut space = Vec::with_capacity(j.len());
        for (a, &ja) in j.iter().enumerate() {
            if !(self.space_cells[a].0..self.space_cells[a].1).contains(&ja) {
                return None;
            }
            space.push(clip(ja, self.space_spacing, self.rect.space[a]));
        }
        Some((time, space))
    }
}

/// A Monte Carlo hitting experiment: model, lattice, observation rectangle
/// and recording mesh (every `time_stride` steps, every `space_stride` sites).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: ModelSpec,
    pub grid: TorusGrid,
    pub rect: Rectangle,
    pub time_stride: u64,
    pub space_stride: usize,
    pub master_seed: u64,
    pub replicas: u64,
    pub scheme: Scheme,
}

impl Experiment {
    pub fn params(&self) -> &NoiseParams {
        &self.model.params
    }

    /// Copy with `d` channels; channels are seeded individually, so the first
    /// `min(d, d')` channels agree between the two experiments.
    pub fn with_d(&self, d: usize) -> Self {
        let mut e = self.clone();
        e.model.params = e.model.params.with_d(d);
        e
    }

    /// Recording mesh `(Δt, Δx)`.
    pub fn mesh(&self) -> (f64, f64) {
        (self.grid.dt * self.time_stride as f64, self.grid.spacing() * self.space_stride as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        self.rect.validate()?;
        if self.rect.k() != self.model.params.k {
            return Err(Error::Shape(format!("rectangle has {} axes but k = {}", self.rect.k(), self.model.params.k)));
        }
        if self.rect.time.1 > self.model.horizon * (1.0 + 1e-12) {
            return domain(format!("rectangle ends at {} after the horizon {}", self.rect.time.1, self.model.horizon));
        }
        if self.rect.space.iter().any(|&(a, b)| a < 0.0 || b > self.grid.length) {
            return domain(format!("spatial box must lie in [0, {}]^k", self.grid.length));
        }
        if self.time_stride == 0 || self.space_stride == 0 {
            return domain("recording strides must be positive");
        }
        if self.replicas == 0 {
            return domain("replicas must be positive");
        }
        Ok(())
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        self.validate()?;
        let dt = self.grid.dt;
        let n_steps = (self.model.horizon / dt).round() as u64;
        let unit = dt * self.time_stride as f64;
        let tol = 1e-9;
        let first = (self.rect.time.0 / unit - tol).ceil() as u64;
        let last = (self.rect.time.1 / unit + tol).floor() as u64;
        let record_steps: Vec<u64> = (first..=last).map(|i| i * self.time_stride).filter(|&s| s <= n_steps).collect();
        if record_steps.is_empty() {
            return domain("no recording time falls inside the rectangle");
        }
        let h = self.grid.spacing();
        let axes: Vec<Vec<usize>> = self
            .rect
            .space
            .iter()
            .map(|&(a, b)| {
                (0..self.grid.points)
                    .step_by(self.space_stride)
                    .filter(|&i| {
                        let x = i as f64 * h;
                        x >= a - tol * h && x <= b + tol * h
                    })
                    .collect()
            })
            .collect();
        if axes.iter().any(|v| v.is_empty()) {
            return domain("no lattice site falls inside the spatial box");
        }
        let mut sites = vec![];
        let mut idx = vec![0usize; axes.len()];
        loop {
            let multi: Vec<usize> = idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect();
            sites.push(self.grid.flatten(&multi));
            let mut a = axes.len();
            while a > 0 {
                a -= 1;
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    break;
                }
                idx[a] = 0;
                if a == 0 {
                    a = usize::MAX;
                    break;
                }
            }
            if a == usize::MAX {
                break;
            }
        }
        sites.sort_unstable();
        let cfg = SolverConfig {
            model: self.model.clone(),
            grid: self.grid,
            n_steps,
            record_steps,
            record_sites: Some(sites),
            master_seed: self.master_seed,
            replicas: self.replicas,
            scheme: self.scheme,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How the recorded range is thickened before testing for hits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InflationRule {
    /// `ĉ (Δt^{(2−β)/4−δ} + Δx^{(2−β)/2−δ})` with `ĉ` chosen so that hit
    /// frequencies on the recording mesh and on the same mesh thinned by
    /// `(4, 2)` in (time, space) agree.
    Fitted,
    /// Same modulus with `ĉ` half the median ratio of neighbour gap to modulus.
    HalfGap,
    Fixed {
        value: f64,
    },
}

/// Inflation actually applied, with the pieces of the fitted modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inflation {
    pub rule: InflationRule,
    pub value: f64,
    /// Constant `ĉ` in front of the modulus.
    pub c_hat: f64,
    /// Half the median ratio of neighbour gap to modulus.
    pub c_half_gap: f64,
    pub time_exponent: f64,
    pub space_exponent: f64,
    pub mesh_dt: f64,
    pub mesh_dx: f64,
    pub median_time_gap: f64,
    pub median_space_gap: f64,
}

/// Per-target results of scanning every replica's range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    /// Distance from each replica's recorded range to the target, in replica order.
    pub distances: Vec<f64>,
    pub inflation: Inflation,
    pub recorded_points: usize,
}

impl RangeScan {
    /// Hits of the `ε`-neighbourhood of the target.
    pub fn hits(&self, eps: f64) -> u64 {
        let r = eps + self.inflation.value;
        self.distances.iter().filter(|&&d| d <= r).count() as u64
    }

    pub fn hits_uninflated(&self, eps: f64) -> u64 {
        self.distances.iter().filter(|&&d| d <= eps).count() as u64
    }
}

struct ReplicaScan {
    distances: Vec<f64>,
    thinned: Vec<f64>,
    time_gaps: Vec<Vec<f64>>,
    space_gaps: Vec<Vec<f64>>,
}

/// Neighbour gaps sampled per replica and per kind.
const GAP_SAMPLES: usize = 512;
/// Thinning of the recording mesh used to calibrate the inflation.
const TIME_THIN: usize = 4;
const SPACE_THIN: usize = 2;
/// Below this many replicas the refinement calibration falls back to the half-gap rule.
const MIN_CALIBRATION_REPLICAS: usize = 50;

/// Scan the range of every replica against each target. Target `i` is
/// compared with the first `dim(target_i)` channels.
pub fn scan_ranges(exp: &Experiment, targets: &[CompactTarget], rule: InflationRule) -> Result<Vec<RangeScan>> {
    let cfg = exp.solver_config()?;
    let d = exp.model.params.d;
    for t in targets {
        t.validate()?;
        if t.dimension() > d {
            return Err(Error::Shape(format!("target lives in R^{} but the field has {d} channels", t.dimension())));
        }
    }
    if let InflationRule::Fixed { value } = rule {
        if !(value >= 0.0 && value.is_finite()) {
            return domain("inflation must be finite and nonnegative");
        }
    }
    let sites = cfg.record_sites.clone().expect("experiment records a site list");
    let neighbour = space_neighbours(&exp.grid, &sites, exp.space_stride);
    let origin = exp.grid.unflatten(sites[0]);
    let keep: Vec<bool> = sites
        .iter()
        .map(|&s| {
            exp.grid
                .unflatten(s)
                .iter()
                .zip(&origin)
                .all(|(i, o)| ((i - o) / exp.space_stride).is_multiple_of(SPACE_THIN))
        })
        .collect();
    let n_times = cfg.record_steps.len();
    let points = n_times * sites.len();
    let scans = run_map(&cfg, |f| scan_field(&f, targets, &neighbour, &keep))?;
    let (mesh_dt, mesh_dx) = exp.mesh();
    let beta = exp.model.params.beta;
    let a = (2.0 - beta) / 4.0 - HOLDER_SLACK;
    let b = (2.0 - beta) / 2.0 - HOLDER_SLACK;
    Ok((0..targets.len())
        .map(|i| {
            let distances: Vec<f64> = scans.iter().map(|s| s.distances[i]).collect();
            let thinned: Vec<f64> = scans.iter().map(|s| s.thinned[i]).collect();
            let mut tg: Vec<f64> = scans.iter().flat_map(|s| s.time_gaps[i].iter().copied()).collect();
            let mut sg: Vec<f64> = scans.iter().flat_map(|s| s.space_gaps[i].iter().copied()).collect();
            let mut ratios: Vec<f64> =
                tg.iter().map(|g| g / mesh_dt.powf(a)).chain(sg.iter().map(|g| g / mesh_dx.powf(b))).collect();
            let c_half_gap = median(&mut ratios) / 2.0;
            let modulus = mesh_dt.powf(a) + mesh_dx.powf(b);
            let thinned_modulus = (mesh_dt * TIME_THIN as f64).powf(a) + (mesh_dx * SPACE_THIN as f64).powf(b);
            let c_hat = match rule {
                InflationRule::Fitted if distances.len() >= MIN_CALIBRATION_REPLICAS => {
                    calibrate(&distances, &thinned, modulus, thinned_modulus, 2.0 * c_half_gap)
                }
                InflationRule::Fitted | InflationRule::HalfGap => c_half_gap,
                InflationRule::Fixed { value } => value / modulus,
            };
            let value = match rule {
                InflationRule::Fixed { value } => value,
                _ => c_hat * modulus,
            };
            RangeScan {
                distances,
                inflation: Inflation {
                    rule,
                    value,
                    c_hat,
                    c_half_gap,
                    time_exponent: a,
                    space_exponent: b,
                    mesh_dt,
                    mesh_dx,
                    median_time_gap: median(&mut tg),
                    median_space_gap: median(&mut sg),
                },
                recorded_points: points,
            }
        })
        .collect())
}

/// `ĉ ∈ [0, c_max]` minimizing the weighted squared difference between the
/// empirical distance distributions of the fine and thinned meshes, each
/// shifted by its own inflation, at fixed quantiles of the fine distances.
fn calibrate(fine: &[f64], thinned: &[f64], m_fine: f64, m_thin: f64, c_max: f64) -> f64 {
    let mut f = fine.to_vec();
    let mut t = thinned.to_vec();
    f.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    let n = f.len() as f64;
    let cdf = |v: &[f64], r: f64| v.partition_point(|&x| x <= r) as f64 / n;
    let radii: Vec<f64> =
        [0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5].iter().map(|q| f[((q * n) as usize).min(f.len() - 1)]).collect();
    let steps = 400;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=steps {
        let c = c_max * i as f64 / steps as f64;
        let loss: f64 = radii
            .iter()
            .map(|&r| {
                let pf = cdf(&f, r + c * m_fine);
                let pt = cdf(&t, r + c * m_thin);
                (pf - pt).powi(2) / (pf * (1.0 - pf) + 1.0 / n)
            })
            .sum();
        if loss < best.0 {
            best = (loss, c);
        }
    }
    best.1
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each recorded site, the recorded site one stride further along the
/// last axis, if it exists without wrapping.
fn space_neighbours(grid: &TorusGrid, sites: &[usize], stride: usize) -> Vec<Option<usize>> {
    let mut lag = vec![0i64; grid.k];
    lag[grid.k - 1] = stride as i64;
    sites
        .iter()
        .map(|&s| {
            let next = grid.shifted(s, &lag);
            let forward = grid.unflatten(next)[grid.k - 1] > grid.unflatten(s)[grid.k - 1];
            if forward {
                sites.binary_search(&next).ok()
            } else {
                None
            }
        })
        .collect()
}

fn scan_field(f: &LatticeField, targets: &[CompactTarget], neighbour: &[Option<usize>], keep: &[bool]) -> ReplicaScan {
    let ns = f.sites.len();
    let nt = f.times.len();
    let d = f.d;
    let every = (nt * ns / GAP_SAMPLES).max(1) | 1;
    let mut best = vec![f64::INFINITY; targets.len()];
    let mut best_thin = vec![f64::INFINITY; targets.len()];
    let mut time_gaps = vec![Vec::with_capacity(GAP_SAMPLES + 1); targets.len()];
    let mut space_gaps = vec![Vec::with_capacity(GAP_SAMPLES + 1); targets.len()];
    let mut u = vec![0.0; d];
    let gather = |ti: usize, s: usize, out: &mut [f64]| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = f.data[ti][c * ns + s];
        }
    };
    let mut v = vec![0.0; d];
    for ti in 0..nt {
        for s in 0..ns {
            gather(ti, s, &mut u);
            let thin = ti % TIME_THIN == 0 && keep[s];
            for (i, t) in targets.iter().enumerate() {
                let dist = t.distance(&u[..t.dimension()]);
                best[i] = best[i].min(dist);
                if thin {
                    best_thin[i] = best_thin[i].min(dist);
                }
            }
            if (ti * ns + s).is_multiple_of(every) {
                if ti + 1 < nt {
                    gather(ti + 1, s, &mut v);
                    push_gaps(&u, &v, targets, &mut time_gaps);
                }
                if let Some(n) = neighbour[s] {
                    gather(ti, n, &mut v);
                    push_gaps(&u, &v, targets, &mut space_gaps);
                }
            }
        }
    }
    ReplicaScan { distances: best, thinned: best_thin, time_gaps, space_gaps }
}

fn push_gaps(u: &[f64], v: &[f64], targets: &[CompactTarget], out: &mut [Vec<f64>]) {
    for (i, t) in targets.iter().enumerate() {
        let m = t.dimension();
        out[i].push(u[..m].iter().zip(&v[..m]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitEstimate {
    pub eps: f64,
    pub hits: u64,
    pub replicas: u64,
    pub estimate: f64,
    /// 95% Wilson score interval.
    pub interval: (f64, f64),
    /// Estimate without inflation, a lower bracket of the lattice estimate.
    pub uninflated: f64,
}

impl HitEstimate {
    fn from_scan(scan: &RangeScan, eps: f64) -> Self {
        let n = scan.distances.len() as u64;
        let hits = scan.hits(eps);
        Self {
            eps,
            hits,
            replicas: n,
            estimate: hits as f64 / n as f64,
            interval: wilson_interval(hits, n, Z95),
            uninflated: scan.hits_uninflated(eps) as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub estimate: HitEstimate,
    pub inflation: Inflation,
    pub recorded_points: usize,
}

/// Fraction of replicas whose inflated recorded range meets `target`.
pub fn mc_hit_probability(exp: &Experiment, target: &CompactTarget, rule: InflationRule) -> Result<HitReport> {
    let scan = scan_ranges(exp, std::slice::from_ref(target), rule)?.remove(0);
    Ok(HitReport {
        estimate: HitEstimate::from_scan(&scan, 0.0),
        inflation: scan.inflation,
        recorded_points: scan.recorded_points,
    })
}

/// Slope of `log P̂` against `log ε` with binomial (delta-method) weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub points: usize,
}

/// Weighted fit of `log p` on `log ε`; `var(log p̂) ≈ (1 − p) / (n p)`.
pub fn decay_fit(points: &[HitEstimate]) -> Result<DecayFit> {
    let usable: Vec<&HitEstimate> = points.iter().filter(|p| p.hits > 0).collect();
    if usable.len() < 2 {
        return domain("a decay fit needs at least two radii with hits");
    }
    let x: Vec<f64> = usable.iter().map(|p| p.eps.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.estimate.ln()).collect();
    let w: Vec<f64> = usable
        .iter()
        .map(|p| {
            let var = (1.0 - p.estimate).max(0.5 / p.replicas as f64) / (p.replicas as f64 * p.estimate);
            1.0 / var
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return domain("decay fit needs distinct radii");
    }
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let slope = sxy / sxx;
    let se = (1.0 / sxx).sqrt();
    Ok(DecayFit { exponent: slope, se, ci: (slope - Z95 * se, slope + Z95 * se), points: usable.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallExponentReport {
    pub center: Vec<f64>,
    pub critical: CriticalExponents,
    pub points: Vec<HitEstimate>,
    pub fit: DecayFit,
    /// Same fit without inflation.
    pub uninflated_fit: Option<DecayFit>,
    /// `d − Q`.
    pub theory: f64,
    pub inflation: Inflation,
    pub warnings: Vec<String>,
}

/// Decay exponent of `ε ↦ P{range ∩ B(z, ε) ≠ ∅}`.
pub fn ball_exponent_fit(
    exp: &Experiment,
    z: &[f64],
    eps_list: &[f64],
    rule: InflationRule,
) -> Result<BallExponentReport> {
    let critical = CriticalExponents::new(exp.params())?;
    if z.len() != exp.params().d {
        return Err(Error::Shape(format!("center has {} coordinates, expected d = {}", z.len(), exp.params().d)));
    }
    let mut warnings = check_eps_list(eps_list)?;
    if critical.relation() != DimensionRelation::Above {
        warnings.push(format!("d = {} is not above Q = {:.4}; no decay is predicted", critical.d, critical.q()));
    }
    let target = CompactTarget::Point { at: z.to_vec() };
    let scan = scan_ranges(exp, std::slice::from_ref(&target), rule)?.remove(0);
    let mut points: Vec<HitEstimate> = eps_list.iter().map(|&e| HitEstimate::from_scan(&scan, e)).collect();
    points.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let kept: Vec<HitEstimate> = points.iter().filter(|p| p.hits > 0).cloned().collect();
    if kept.len() < points.len() {
        let dropped: Vec<String> = points.iter().filter(|p| p.hits == 0).map(|p| p.eps.to_string()).collect();
        warnings.push(format!("no hits at eps = {}; dropped from the fit", dropped.join(", ")));
    }
    let fit = decay_fit(&kept)?;
    let raw: Vec<HitEstimate> = points
        .iter()
        .map(|p| {
            let hits = scan.hits_uninflated(p.eps);
            HitEstimate { hits, estimate: p.uninflated, ..p.clone() }
        })
        .collect();
    Ok(BallExponentReport {
        center: z.to_vec(),
        critical,
        points,
        fit,
        uninflated_fit: decay_fit(&raw).ok(),
        theory: critical.ball_exponent(),
        inflation: scan.inflation,
        warnings,
    })
}

fn check_eps_list(eps_list: &[f64]) -> Result<Vec<String>> {
    if eps_list.len() < 2 || eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return domain("need at least two positive radii");
    }
    let (lo, hi) = eps_list.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    let mut w = vec![];
    if (hi / lo).log10() < 1.5 {
        w.push(format!("radii span {:.2} decades, less than 1.5", (hi / lo).log10()));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityVerdict {
    /// Hit probability bounded away from 0 over the tested radii.
    NotPolar,
    /// Positive decay exponent over the tested radii.
    Polar,
    /// `d = Q`: reported only.
    Open,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityRow {
    pub d: usize,
    pub q: f64,
    pub relation: DimensionRelation,
    pub points: Vec<HitEstimate>,
    pub decay: Option<DecayFit>,
    pub verdict: PolarityVerdict,
    pub inflation: Inflation,
}

/// Hit estimates for `B(z, ε)` across ambient dimensions. One simulation with
/// `max(dims)` channels serves all rows; row `d` uses its first `d` channels
/// and coordinates of `z`.
pub fn polarity_scan(
    exp: &Experiment,
    dims: &[usize],
    z: &[f64],
    eps_list: &[f64],
    rule: InflationRule,
) -> Result<Vec<PolarityRow>> {
    let &d_max = dims.iter().max().ok_or_else(|| Error::Domain("no dimensions to scan".into()))?;
    if dims.contains(&0) {
        return domain("dimensions must be positive");
    }
    if z.len() < d_max {
        return Err(Error::Shape(format!("center has {} coordinates, need {d_max}", z.len())));
    }
    check_eps_list(eps_list)?;
    let full = exp.with_d(d_max);
    let targets: Vec<CompactTarget> = dims.iter().map(|&d| CompactTarget::Point { at: z[..d].to_vec() }).collect();
    let scans = scan_ranges(&full, &targets, rule)?;
    let mut radii = eps_list.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    dims.iter()
        .zip(scans)
        .map(|(&d, scan)| {
            let crit = CriticalExponents::new(&exp.params().with_d(d))?;
            let points: Vec<HitEstimate> = radii.iter().map(|&e| HitEstimate::from_scan(&scan, e)).collect();
            let decay = decay_fit(&points).ok();
            let verdict = match crit.relation() {
                DimensionRelation::Critical => PolarityVerdict::Open,
                DimensionRelation::Below if points.iter().all(|p| p.interval.0 > 0.0) => PolarityVerdict::NotPolar,
                DimensionRelation::Above if decay.is_some_and(|f| f.ci.0 > 0.0) => PolarityVerdict::Polar,
                _ => PolarityVerdict::Inconclusive,
            };
            Ok(PolarityRow {
                d,
                q: crit.q(),
                relation: crit.relation(),
                points,
                decay,
                verdict,
                inflation: scan.inflation,
            })
        })
        .collect()
}

pub const BOX_SURROGATE_NOTE: &str =
    "box-counting dimension of the lattice range stands in for the Hausdorff dimension of the continuum range";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDimensionReport {
    pub q: f64,
    pub estimate: BoxDimension,
    pub relative_error: f64,
    pub points: usize,
    pub mesh_dt: f64,
    pub mesh_dx: f64,
    pub note: String,
}

/// Range points pooled over replicas, and the same points thinned to every
/// `time_thin`-th recorded time and every `space_thin`-th site per axis.
pub fn range_points(exp: &Experiment, time_thin: usize, space_thin: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = exp.solver_config()?;
    let parts = run_map(&cfg, |f| split_range(exp, &f, time_thin, space_thin))?;
    let mut fine = vec![];
    let mut coarse = vec![];
    for (f, c) in parts {
        fine.extend(f);
        coarse.extend(c);
    }
    Ok((fine, coarse))
}

fn split_range(exp: &Experiment, f: &LatticeField, time_thin: usize, space_thin: usize) -> (Vec<f64>, Vec<f64>) {
    let mut fine = vec![];
    let mut coarse = vec![];
    for_each_range_slice(exp, f, time_thin, space_thin, |a, b| {
        fine.extend_from_slice(a);
        coarse.extend_from_slice(b);
    });
    (fine, coarse)
}

/// Visit each recorded time as flat point buffers: all sites, and the
/// thinned sites (empty off the thinned times).
fn for_each_range_slice<F>(exp: &Experiment, f: &LatticeField, time_thin: usize, space_thin: usize, mut visit: F)
where
    F: FnMut(&[f64], &[f64]),
{
    let d = f.d;
    let ns = f.sites.len();
    let stride = exp.space_stride;
    let origin = exp.grid.unflatten(f.sites[0]);
    let keep_site: Vec<bool> = f
        .sites
        .iter()
        .map(|&s| exp.grid.unflatten(s).iter().zip(&origin).all(|(i, o)| ((i - o) / stride).is_multiple_of(space_thin)))
        .collect();
    let mut fine = Vec::with_capacity(ns * d);
    let mut coarse = Vec::with_capacity(ns * d);
    for (ti, row) in f.data.iter().enumerate() {
        fine.clear();
        coarse.clear();
        let thin_time = ti % time_thin == 0;
        for s in 0..ns {
            for c in 0..d {
                let v = row[c * ns + s];
                fine.push(v);
                if thin_time && keep_site[s] {
                    coarse.push(v);
                }
            }
        }
        visit(&fine, &coarse);
    }
}

/// Box-counting dimension of the pooled recorded range, compared with `Q`.
pub fn range_dimension(exp: &Experiment, scales: &[f64]) -> Result<RangeDimensionReport> {
    Ok(range_dimension_refinement(exp, scales, 1, 1)?.1)
}

/// Range dimension on the recording mesh and on the mesh thinned by
/// `(time_thin, space_thin)`, with the same replicas and scales.
/// Returns `(coarse, fine)`. Replicas are counted in batches, so memory is
/// bounded by the occupied boxes rather than the pooled points.
pub fn range_dimension_refinement(
    exp: &Experiment,
    scales: &[f64],
    time_thin: usize,
    space_thin: usize,
) -> Result<(RangeDimensionReport, RangeDimensionReport)> {
    let crit = CriticalExponents::new(exp.params())?;
    if crit.relation() != DimensionRelation::Above {
        return domain(format!("range dimension needs d > Q = {:.4}, got d = {}", crit.q(), crit.d));
    }
    if time_thin == 0 || space_thin == 0 {
        return domain("thinning factors must be positive");
    }
    let d = crit.d;
    let cfg = exp.solver_config()?;
    cfg.validate()?;
    let mut fine = BoxCounter::new(d, scales)?;
    let mut coarse = BoxCounter::new(d, scales)?;
    let batch = rayon::current_num_threads().max(1) as u64;
    let mut next = 0;
    while next < cfg.replicas {
        let end = (next + batch).min(cfg.replicas);
        let parts: Vec<(BoxCounter, BoxCounter)> = (next..end)
            .into_par_iter()
            .map(|r| {
                let field = simulate_replica(&cfg, r)?;
                let mut fc = BoxCounter::new(d, scales)?;
                let mut cc = BoxCounter::new(d, scales)?;
                let mut status = Ok(());
                for_each_range_slice(exp, &field, time_thin, space_thin, |a, b| {
                    if status.is_ok() {
                        status = fc.extend_flat(a).and_then(|_| cc.extend_flat(b));
                    }
                });
                status.map(|_| (fc, cc))
            })
            .collect::<Result<_>>()?;
        for (f, c) in parts {
            fine.merge(f)?;
            coarse.merge(c)?;
        }
        next = end;
    }
    let (dt, dx) = exp.mesh();
    let report = |counter: &BoxCounter, mdt: f64, mdx: f64| -> Result<RangeDimensionReport> {
        let estimate = counter.finish()?;
        Ok(RangeDimensionReport {
            q: crit.q(),
            relative_error: (estimate.dimension - crit.q()) / crit.q(),
            estimate,
            points: counter.points() as usize,
            mesh_dt: mdt,
            mesh_dx: mdx,
            note: BOX_SURROGATE_NOTE.into(),
        })
    };
    Ok((report(&coarse, dt * time_thin as f64, dx * space_thin as f64)?, report(&fine, dt, dx)?))
}

/// Log-spaced box sizes from `lo` over `decades`.
pub fn default_scales(lo: f64, decades: f64, count: usize) -> Vec<f64> {
    log_space(lo, lo * 10f64.powf(decades), count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub critical: CriticalExponents,
    pub capacity_index: f64,
    pub hausdorff_index: f64,
    pub capacity: CapacityResult,
    /// `(ε, H^ε upper estimate)` over the cover scales.
    pub hausdorff: Vec<(f64, f64)>,
    /// Hit estimates for `ε`-neighbourhoods of the target, largest `ε` first.
    pub hits: Vec<HitEstimate>,
    pub inflation: Inflation,
    /// `P̂ / Cap`, when the capacity is positive.
    pub lower_constant: Option<f64>,
    /// `P̂ / H`, when the finest Hausdorff estimate is positive.
    pub upper_constant: Option<f64>,
    pub capacity_implies_hits: Option<bool>,
    pub vanishing_measure_implies_decay: Option<bool>,
    pub n0: f64,
}

impl SandwichReport {
    /// Both implications hold wherever their premise holds.
    pub fn consistent(&self) -> bool {
        self.capacity_implies_hits != Some(false) && self.vanishing_measure_implies_decay != Some(false)
    }
}

/// Hausdorff estimates below this fraction of the coarsest one count as vanishing.
const VANISHING: f64 = 1e-2;

/// Monte Carlo hits next to the capacity lower bound and the Hausdorff upper bound.
pub fn bound_sandwich(
    exp: &Experiment,
    target: &CompactTarget,
    eps_list: &[f64],
    cover_scales: &[f64],
    kcfg: &KAlphaConfig,
    opt: &CapacityOptions,
    rule: InflationRule,
) -> Result<SandwichReport> {
    let critical = CriticalExponents::new(exp.params())?;
    if target.dimension() != critical.d {
        return Err(Error::Shape(format!("target lives in R^{} but d = {}", target.dimension(), critical.d)));
    }
    check_eps_list(eps_list)?;
    if cover_scales.len() < 2 {
        return domain("need at least two cover scales");
    }
    let cap = capacity(target, critical.capacity_index(), kcfg, opt)?;
    let mut covers = cover_scales.to_vec();
    covers.sort_by(|a, b| b.total_cmp(a));
    let hausdorff: Vec<(f64, f64)> = covers
        .iter()
        .map(|&e| Ok((e, hausdorff_upper(target, critical.hausdorff_index(), e)?)))
        .collect::<Result<_>>()?;
    let scan = scan_ranges(exp, std::slice::from_ref(target), rule)?.remove(0);
    let mut radii = eps_list.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    let hits: Vec<HitEstimate> = radii.iter().map(|&e| HitEstimate::from_scan(&scan, e)).collect();
    let finest_hit = hits.last().expect("nonempty");
    let finest_h = hausdorff.last().expect("nonempty").1;
    let coarsest_h = hausdorff[0].1;
    let capacity_implies_hits = (cap.capacity > 0.0).then_some(finest_hit.hits > 0);
    let vanishing = finest_h.is_finite() && (finest_h == 0.0 || finest_h < VANISHING * coarsest_h);
    let vanishing_measure_implies_decay = vanishing.then(|| {
        let first = &hits[0];
        finest_hit.estimate < first.estimate && finest_hit.interval.1 < first.interval.0.max(first.estimate)
    });
    Ok(SandwichReport {
        critical,
        capacity_index: critical.capacity_index(),
        hausdorff_index: critical.hausdorff_index(),
        lower_constant: (cap.capacity > 0.0).then(|| finest_hit.estimate / cap.capacity),
        upper_constant: (finest_h > 0.0 && finest_h.is_finite()).then(|| finest_hit.estimate / finest_h),
        capacity: cap,
        hausdorff,
        hits,
        inflation: scan.inflation,
        capacity_implies_hits,
        vanishing_measure_implies_decay,
        n0: kcfg.n0,
    })
}
