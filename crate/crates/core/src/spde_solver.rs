//! Exponential-Euler solver for `∂u/∂t = ½Δu + σ(u) Ḟ + b(u)`, `u(0) = 0`, on
//! the torus:
//!
//! ```text
//! u_{n+1} = S_dt ∗ (u_n + dt b(u_n) + σ(u_n) √dt W_n)
//! ```
//!
//! where `S_dt` multiplies mode `ξ` by `e^{−2π² dt ‖ξ‖²}` and `W_n` is a unit
//! noise slice. Three execution paths produce this recursion:
//!
//! * `Stepped`: physical-space coefficients, any registered `σ` and `b`.
//! * `Spectral`: constant scalar `σ` with affine drift, evolved mode by mode.
//!   Draws the same normals as `Stepped`, so paths agree to rounding.
//! * `Aggregated`: same eligibility as `Spectral`, but jumps between recording
//!   steps in one draw per mode using the exact law of the composed recursion.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fft::LatticeFft;
use crate::kernels::NoiseParams;
use crate::rng::SeedPath;
use crate::spectral_noise::{NoiseSampler, NoiseSlice, SpectralPlan, TorusGrid};
use crate::stats::{weighted_fit, LinearFit, Moments};

const TWO_PI_SQ: f64 = 2.0 * PI * PI;
/// Stream offset separating aggregated-path draws from per-step draws.
const AGGREGATE_STREAM: u64 = 1 << 46;

/// Diffusion coefficient registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sigma {
    Zero,
    Identity,
    ScaledIdentity {
        scale: f64,
    },
    /// `σ(u) = s (I + m P diag(tanh u))` with `P` the cyclic shift of channels.
    /// Strongly elliptic with `ρ = s (1 − |m|)` for `|m| < 1`.
    TanhMixing {
        scale: f64,
        mix: f64,
    },
}

impl Sigma {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Sigma::ScaledIdentity { scale } if !scale.is_finite() => domain("sigma scale must be finite"),
            Sigma::TanhMixing { scale, mix } if !(scale.is_finite() && scale > 0.0 && mix.abs() < 1.0) => {
                domain("tanh mixing needs scale > 0 and |mix| < 1")
            }
            _ => Ok(()),
        }
    }

    /// Constant scalar multiple of the identity, if `σ` is one.
    pub fn as_scalar(&self) -> Option<f64> {
        match *self {
            Sigma::Zero => Some(0.0),
            Sigma::Identity => Some(1.0),
            Sigma::ScaledIdentity { scale } => Some(scale),
            Sigma::TanhMixing { .. } => None,
        }
    }

    /// Global Lipschitz constant (entrywise sup of the derivative).
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Sigma::TanhMixing { scale, mix } => scale * mix.abs(),
            _ => 0.0,
        }
    }

    /// Ellipticity constant `ρ` with `‖σ(x) ξ‖ ≥ ρ` on the unit sphere, if any.
    pub fn ellipticity(&self) -> Option<f64> {
        match *self {
            Sigma::Zero => None,
            Sigma::Identity => Some(1.0),
            Sigma::ScaledIdentity { scale } => (scale != 0.0).then_some(scale.abs()),
            Sigma::TanhMixing { scale, mix } => Some(scale * (1.0 - mix.abs())),
        }
    }

    /// `out = σ(u) ξ` for one site.
    pub fn apply(&self, u: &[f64], xi: &[f64], out: &mut [f64]) {
        match *self {
            Sigma::TanhMixing { scale, mix } => {
                let d = u.len();
                for i in 0..d {
                    let j = (i + 1) % d;
                    out[i] = scale * (xi[i] + mix * u[j].tanh() * xi[j]);
                }
            }
            _ => {
                let s = self.as_scalar().unwrap_or(0.0);
                for (o, x) in out.iter_mut().zip(xi) {
                    *o = s * x;
                }
            }
        }
    }
}

/// Drift registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `b(u) = −rate u`.
    Linear {
        rate: f64,
    },
    /// `b(u)_i = amplitude sin(u_i)`.
    BoundedSmooth {
        amplitude: f64,
    },
}

impl Drift {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Drift::Constant { value } if value.len() != d => {
                domain(format!("constant drift has {} components, expected d = {d}", value.len()))
            }
            Drift::Constant { value } if value.iter().any(|v| !v.is_finite()) => domain("drift must be finite"),
            Drift::Linear { rate } if !rate.is_finite() => domain("drift rate must be finite"),
            Drift::BoundedSmooth { amplitude } if !amplitude.is_finite() => domain("drift amplitude must be finite"),
            _ => Ok(()),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Drift::Zero | Drift::Constant { .. } => 0.0,
            Drift::Linear { rate } => rate.abs(),
            Drift::BoundedSmooth { amplitude } => amplitude.abs(),
        }
    }

    /// `out = b(u)` for one site.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Constant { value } => out.copy_from_slice(value),
            Drift::Linear { rate } => out.iter_mut().zip(u).for_each(|(o, x)| *o = -rate * x),
            Drift::BoundedSmooth { amplitude } => out.iter_mut().zip(u).for_each(|(o, x)| *o = amplitude * x.sin()),
        }
    }

    /// `(rate, constant)` when `b(u) = constant − rate u`.
    fn affine(&self, d: usize) -> Option<(f64, Vec<f64>)> {
        match self {
            Drift::Zero => Some((0.0, vec![0.0; d])),
            Drift::Constant { value } => Some((0.0, value.clone())),
            Drift::Linear { rate } => Some((*rate, vec![0.0; d])),
            Drift::BoundedSmooth { .. } => None,
        }
    }
}

/// The SPDE system: noise parameters, coefficients and horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: NoiseParams,
    pub sigma: Sigma,
    pub drift: Drift,
    pub horizon: f64,
}

impl ModelSpec {
    pub fn linear(params: NoiseParams, horizon: f64) -> Self {
        Self { params, sigma: Sigma::Identity, drift: Drift::Zero, horizon }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.sigma.validate()?;
        self.drift.validate(self.params.d)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {}", self.horizon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `Aggregated` when eligible, otherwise `Stepped`.
    Auto,
    Stepped,
    Spectral,
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: ModelSpec,
    pub grid: TorusGrid,
    pub n_steps: u64,
    /// Sorted, distinct step indices at which the field is recorded.
    pub record_steps: Vec<u64>,
    /// Flat lattice indices to record; `None` records the whole lattice.
    pub record_sites: Option<Vec<usize>>,
    pub master_seed: u64,
    pub replicas: u64,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        if self.grid.k != self.model.params.k {
            return Err(Error::Shape(format!("grid k = {} but model k = {}", self.grid.k, self.model.params.k)));
        }
        if self.n_steps == 0 {
            return domain("n_steps must be positive");
        }
        let implied = self.grid.dt * self.n_steps as f64;
        if ((implied - self.model.horizon) / self.model.horizon).abs() > 1e-9 {
            return domain(format!("dt * n_steps = {implied} differs from horizon {}", self.model.horizon));
        }
        if self.record_steps.is_empty() {
            return domain("at least one recording step is required");
        }
        if self.record_steps.windows(2).any(|w| w[0] >= w[1]) {
            return domain("record steps must be strictly increasing");
        }
        if *self.record_steps.last().unwrap() > self.n_steps {
            return domain("record step beyond n_steps");
        }
        if let Some(sites) = &self.record_sites {
            if sites.is_empty() || sites.windows(2).any(|w| w[0] >= w[1]) {
                return domain("record sites must be nonempty and strictly increasing");
            }
            if *sites.last().unwrap() >= self.grid.len() {
                return domain("record site outside the lattice");
            }
        }
        if self.replicas == 0 {
            return domain("replicas must be positive");
        }
        if matches!(self.scheme, Scheme::Spectral | Scheme::Aggregated) && !self.spectral_eligible() {
            return domain("spectral schemes need constant scalar sigma and affine drift");
        }
        Ok(())
    }

    pub fn spectral_eligible(&self) -> bool {
        self.model.sigma.as_scalar().is_some() && self.model.drift.affine(self.model.params.d).is_some()
    }

    pub fn resolved_scheme(&self) -> Scheme {
        match self.scheme {
            Scheme::Auto if self.spectral_eligible() => Scheme::Aggregated,
            Scheme::Auto => Scheme::Stepped,
            s => s,
        }
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|&n| n as f64 * self.grid.dt).collect()
    }
}

/// Step indices for recording times that are multiples of `dt`.
pub fn steps_for_times(times: &[f64], dt: f64) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = times
        .iter()
        .map(|&t| {
            let n = (t / dt).round();
            if t < 0.0 || (n * dt - t).abs() > 1e-9 * t.max(dt) {
                domain(format!("recording time {t} is not a multiple of dt = {dt}"))
            } else {
                Ok(n as u64)
            }
        })
        .collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Recorded snapshots of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub grid: TorusGrid,
    pub d: usize,
    pub replica: u64,
    pub steps: Vec<u64>,
    pub times: Vec<f64>,
    /// Recorded flat indices, sorted.
    pub sites: Vec<usize>,
    /// One entry per recorded time, channel-major over `sites`.
    pub data: Vec<Vec<f64>>,
}

impl LatticeField {
    pub fn value(&self, time_idx: usize, channel: usize, site_pos: usize) -> f64 {
        self.data[time_idx][channel * self.sites.len() + site_pos]
    }

    /// Position of a flat lattice index among the recorded sites.
    pub fn site_position(&self, flat: usize) -> Option<usize> {
        self.sites.binary_search(&flat).ok()
    }

    /// Index of the recorded time closest to `t`, if within `tol`.
    pub fn time_index(&self, t: f64, tol: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|(_, e)| *e <= tol)
            .map(|(i, _)| i)
    }

    /// `R^d` value at one recorded time and site.
    pub fn point(&self, time_idx: usize, site_pos: usize) -> Vec<f64> {
        (0..self.d).map(|c| self.value(time_idx, c, site_pos)).collect()
    }
}

/// Per-replica workspace for the stepped path.
pub struct Stepper {
    model: ModelSpec,
    grid: TorusGrid,
    semigroup: Vec<f64>,
    fft: LatticeFft,
    buf: Vec<Complex64>,
    site_u: Vec<f64>,
    site_xi: Vec<f64>,
    site_out: Vec<f64>,
}

impl Stepper {
    pub fn new(model: &ModelSpec, grid: &TorusGrid) -> Result<Self> {
        model.validate()?;
        let plan = SpectralPlan::new(*grid, model.params)?;
        let d = model.params.d;
        Ok(Self {
            semigroup: plan.freq_sq.iter().map(|f| (-TWO_PI_SQ * grid.dt * f).exp()).collect(),
            fft: LatticeFft::new(grid.k, grid.points),
            buf: vec![Complex64::default(); grid.len()],
            site_u: vec![0.0; d],
            site_xi: vec![0.0; d],
            site_out: vec![0.0; d],
            model: model.clone(),
            grid: *grid,
        })
    }

    /// Advance the channel-major state `u` by one step with noise `slice`.
    pub fn step(&mut self, u: &mut [f64], slice: &NoiseSlice, step_index: u64) -> Result<()> {
        let n = self.grid.len();
        let d = self.model.params.d;
        if u.len() != d * n || slice.values.len() != d * n {
            return Err(Error::Shape(format!(
                "state has {} values and slice {}, expected {}",
                u.len(),
                slice.values.len(),
                d * n
            )));
        }
        let dt = self.grid.dt;
        let sqdt = dt.sqrt();
        // Pointwise coefficients in physical space; results overwrite u.
        for site in 0..n {
            for c in 0..d {
                self.site_u[c] = u[c * n + site];
                self.site_xi[c] = slice.values[c * n + site];
            }
            self.model.sigma.apply(&self.site_u, &self.site_xi, &mut self.site_out);
            let noise = self.site_out.clone();
            self.model.drift.apply(&self.site_u, &mut self.site_out);
            for c in 0..d {
                u[c * n + site] = self.site_u[c] + dt * self.site_out[c] + sqdt * noise[c];
            }
        }
        let scale = 1.0 / n as f64;
        for c in 0..d {
            let chan = &mut u[c * n..(c + 1) * n];
            for (b, v) in self.buf.iter_mut().zip(chan.iter()) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fft.forward(&mut self.buf);
            for (b, g) in self.buf.iter_mut().zip(&self.semigroup) {
                *b *= g * scale;
            }
            self.fft.inverse(&mut self.buf);
            for (v, b) in chan.iter_mut().zip(&self.buf) {
                *v = b.re;
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step_index as usize });
        }
        Ok(())
    }
}

/// One step of the recursion from a fresh workspace.
pub fn step(state: &[f64], slice: &NoiseSlice, model: &ModelSpec, step_index: u64) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(model, &slice.grid)?;
    let mut u = state.to_vec();
    stepper.step(&mut u, slice, step_index)?;
    Ok(u)
}

struct Recorder<'a> {
    cfg: &'a SolverConfig,
    sites: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a SolverConfig) -> Self {
        let sites = cfg.record_sites.clone().unwrap_or_else(|| (0..cfg.grid.len()).collect());
        Self { cfg, sites, data: Vec::with_capacity(cfg.record_steps.len()) }
    }

    fn record(&mut self, u: &[f64]) {
        let n = self.cfg.grid.len();
        let d = self.cfg.model.params.d;
        let mut snap = Vec::with_capacity(d * self.sites.len());
        for c in 0..d {
            snap.extend(self.sites.iter().map(|&s| u[c * n + s]));
        }
        self.data.push(snap);
    }

    fn finish(self, replica: u64) -> LatticeField {
        LatticeField {
            grid: self.cfg.grid,
            d: self.cfg.model.params.d,
            replica,
            steps: self.cfg.record_steps.clone(),
            times: self.cfg.record_times(),
            sites: self.sites,
            data: self.data,
        }
    }
}

/// Simulate one replica.
pub fn simulate_replica(cfg: &SolverConfig, replica: u64) -> Result<LatticeField> {
    cfg.validate()?;
    match cfg.resolved_scheme() {
        Scheme::Stepped | Scheme::Auto => run_stepped(cfg, replica),
        Scheme::Spectral => run_spectral(cfg, replica, false),
        Scheme::Aggregated => run_spectral(cfg, replica, true),
    }
}

fn run_stepped(cfg: &SolverConfig, replica: u64) -> Result<LatticeField> {
    let d = cfg.model.params.d;
    let n = cfg.grid.len();
    let mut sampler = NoiseSampler::new(cfg.grid, cfg.model.params)?;
    let mut stepper = Stepper::new(&cfg.model, &cfg.grid)?;
    let mut rec = Recorder::new(cfg);
    let mut u = vec![0.0; d * n];
    let mut next = 0;
    for step in 0..=cfg.n_steps {
        if next < cfg.record_steps.len() && cfg.record_steps[next] == step {
            rec.record(&u);
            next += 1;
            if next == cfg.record_steps.len() {
                break;
            }
        }
        let slice = sampler.sample(SeedPath::new(cfg.master_seed, replica, step));
        stepper.step(&mut u, &slice, step)?;
    }
    Ok(rec.finish(replica))
}

fn run_spectral(cfg: &SolverConfig, replica: u64, aggregate: bool) -> Result<LatticeField> {
    let d = cfg.model.params.d;
    let n = cfg.grid.len();
    let dt = cfg.grid.dt;
    let sigma = cfg.model.sigma.as_scalar().expect("validated");
    let (rate, constant) = cfg.model.drift.affine(d).expect("validated");
    let plan = SpectralPlan::new(cfg.grid, cfg.model.params)?;
    let mut fft = LatticeFft::new(cfg.grid.k, cfg.grid.points);
    let semigroup: Vec<f64> = plan.freq_sq.iter().map(|f| (-TWO_PI_SQ * dt * f).exp()).collect();
    // One step: V ← a (g V + σ √dt C), plus dt·constant on the zero mode.
    let g = 1.0 - dt * rate;
    let gain: Vec<f64> = semigroup.iter().map(|a| a * g).collect();
    let mut v = vec![Complex64::default(); d * n];
    let mut draw = vec![Complex64::default(); n];
    let mut phys = vec![Complex64::default(); n];
    let mut u = vec![0.0; d * n];
    let mut rec = Recorder::new(cfg);
    let mut current = 0u64;

    for (interval, &target) in cfg.record_steps.iter().enumerate() {
        let jumps = target - current;
        if aggregate && jumps > 0 {
            let j = jumps as f64;
            let noise_sd: Vec<f64> = gain
                .iter()
                .zip(&semigroup)
                .map(|(&gm, &a)| sigma * dt.sqrt() * a * geometric_sum_sq(gm, j).sqrt())
                .collect();
            let drift0 = dt * geometric_sum(g, j);
            let carry: Vec<f64> = gain.iter().map(|gm| gm.powf(j)).collect();
            for c in 0..d {
                let mut rng =
                    SeedPath::new(cfg.master_seed, replica, AGGREGATE_STREAM + interval as u64).channel_rng(c);
                plan.draw_coefficients(&mut rng, &mut draw, |m| noise_sd[m]);
                let vc = &mut v[c * n..(c + 1) * n];
                for m in 0..n {
                    vc[m] = vc[m] * carry[m] + draw[m];
                }
                vc[0] += drift0 * constant[c];
            }
        } else {
            for step in current..target {
                let path = SeedPath::new(cfg.master_seed, replica, step);
                for c in 0..d {
                    let mut rng = path.channel_rng(c);
                    plan.draw_coefficients(&mut rng, &mut draw, |_| 1.0);
                    let vc = &mut v[c * n..(c + 1) * n];
                    let kick = sigma * dt.sqrt();
                    for m in 0..n {
                        vc[m] = gain[m] * vc[m] + semigroup[m] * kick * draw[m];
                    }
                    vc[0] += dt * constant[c];
                }
            }
        }
        current = target;
        for c in 0..d {
            phys.copy_from_slice(&v[c * n..(c + 1) * n]);
            fft.inverse(&mut phys);
            for (dst, z) in u[c * n..(c + 1) * n].iter_mut().zip(&phys) {
                *dst = z.re;
            }
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: target as usize });
        }
        rec.record(&u);
    }
    Ok(rec.finish(replica))
}

/// `Σ_{i<j} G^i`.
fn geometric_sum(g: f64, j: f64) -> f64 {
    if (g - 1.0).abs() < 1e-15 {
        j
    } else {
        (1.0 - g.powf(j)) / (1.0 - g)
    }
}

/// `Σ_{i<j} G^{2i}`, stable for `G` near 1.
fn geometric_sum_sq(g: f64, j: f64) -> f64 {
    let l = 2.0 * g.abs().ln();
    if l == 0.0 {
        j
    } else {
        (j * l).exp_m1() / l.exp_m1()
    }
}

/// Simulate all replicas, mapping each field through `f` as soon as it is
/// produced. Results are returned in replica order, so any reduction over them
/// is independent of scheduling.
pub fn run_map<T, F>(cfg: &SolverConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(LatticeField) -> T + Sync,
{
    cfg.validate()?;
    (0..cfg.replicas).into_par_iter().map(|r| simulate_replica(cfg, r).map(&f)).collect()
}

/// Simulate all replicas and keep every recording.
pub fn run(cfg: &SolverConfig) -> Result<Vec<LatticeField>> {
    run_map(cfg, |f| f)
}

/// Exact second moments of the linear recursion (`σ ≡ s I`, `b ≡ 0`, zero start).
///
/// Mode `m` after `n` steps has variance `s² dt a² (1 − a^{2n}) / (1 − a²)` times
/// its coefficient variance, and the lag-`j` autocovariance carries `a^j`.
pub struct SchemeMoments {
    plan: SpectralPlan,
    scale: f64,
}

impl SchemeMoments {
    pub fn new(grid: TorusGrid, params: NoiseParams, sigma_scale: f64) -> Result<Self> {
        Ok(Self { plan: SpectralPlan::new(grid, params)?, scale: sigma_scale })
    }

    /// `E[u(n₁ dt, x) u(n₂ dt, x + lag)]` with `n₁ ≤ n₂`, lag in cells.
    pub fn covariance(&self, n1: u64, n2: u64, lag: &[i64]) -> f64 {
        let (n1, n2) = (n1.min(n2), n1.max(n2));
        let grid = &self.plan.grid;
        let dt = grid.dt;
        let mpts = grid.points as f64;
        (0..grid.len())
            .map(|flat| {
                let a = (-TWO_PI_SQ * dt * self.plan.freq_sq[flat]).exp();
                let var =
                    self.scale.powi(2) * dt * a * a * geometric_sum_sq(a, n1 as f64) * self.plan.coef_sd[flat].powi(2);
                let phase: f64 =
                    grid.unflatten(flat).iter().zip(lag).map(|(&j, &l)| grid.signed_mode(j) as f64 * l as f64).sum();
                var * a.powf((n2 - n1) as f64) * (2.0 * PI * phase / mpts).cos()
            })
            .sum()
    }

    pub fn variance(&self, n: u64) -> f64 {
        self.covariance(n, n, &vec![0; self.plan.grid.k])
    }
}

/// Lags used to estimate Hölder exponents from an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderWindow {
    /// Time at which increments end.
    pub time: f64,
    /// Temporal lags `h`; both `time` and `time − h` must be recorded.
    pub time_lags: Vec<f64>,
    /// Spatial lags in cells along the first axis.
    pub space_lags: Vec<usize>,
    /// Base sites (flat indices); shifted sites must be recorded too.
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Slope of `log E|Δu|²` against `log h`, halved.
    pub temporal: f64,
    pub temporal_se: f64,
    pub spatial: f64,
    pub spatial_se: f64,
    pub temporal_fit: LinearFit,
    pub spatial_fit: LinearFit,
    /// `(lag, mean squared increment, standard error)` per lag.
    pub temporal_moments: Vec<(f64, f64, f64)>,
    pub spatial_moments: Vec<(f64, f64, f64)>,
}

/// Hölder exponents from log-log regression of mean squared increments.
/// Each lag's mean is weighted by the inverse variance of its logarithm,
/// estimated from per-replica averages.
pub fn holder_exponents(fields: &[LatticeField], window: &HolderWindow) -> Result<HolderEstimate> {
    if window.time_lags.len() < 4 || window.space_lags.len() < 4 {
        return domain("Hölder fits need at least 4 temporal and 4 spatial lags");
    }
    let first = fields.first().ok_or_else(|| Error::Domain("empty ensemble".into()))?;
    let tol = 1e-6 * first.grid.dt;
    let t_idx = first
        .time_index(window.time, tol)
        .ok_or_else(|| Error::Domain(format!("time {} is not recorded", window.time)))?;
    let base_pos: Vec<usize> = window
        .sites
        .iter()
        .map(|&s| first.site_position(s).ok_or_else(|| Error::Domain(format!("site {s} is not recorded"))))
        .collect::<Result<_>>()?;

    let mut temporal = vec![];
    for &h in &window.time_lags {
        let i0 = first
            .time_index(window.time - h, tol)
            .ok_or_else(|| Error::Domain(format!("time {} is not recorded", window.time - h)))?;
        let m: Moments =
            fields.iter().map(|f| mean_sq(f, &base_pos, |c, p| f.value(t_idx, c, p) - f.value(i0, c, p))).collect();
        temporal.push((h, m));
    }
    let mut spatial = vec![];
    for &lag in &window.space_lags {
        let mut shift = vec![0i64; first.grid.k];
        shift[0] = lag as i64;
        let pairs: Vec<(usize, usize)> = window
            .sites
            .iter()
            .zip(&base_pos)
            .map(|(&s, &p)| {
                let q = first.grid.shifted(s, &shift);
                first
                    .site_position(q)
                    .map(|qp| (p, qp))
                    .ok_or_else(|| Error::Domain(format!("shifted site {q} is not recorded")))
            })
            .collect::<Result<_>>()?;
        let m: Moments = fields
            .iter()
            .map(|f| {
                let mut acc = 0.0;
                for c in 0..f.d {
                    for &(p, q) in &pairs {
                        acc += (f.value(t_idx, c, q) - f.value(t_idx, c, p)).powi(2);
                    }
                }
                acc / (f.d * pairs.len()) as f64
            })
            .collect();
        spatial.push((lag as f64 * first.grid.spacing(), m));
    }
    let (temporal_fit, temporal_moments) = fit_moments(&temporal)?;
    let (spatial_fit, spatial_moments) = fit_moments(&spatial)?;
    Ok(HolderEstimate {
        temporal: temporal_fit.slope / 2.0,
        temporal_se: temporal_fit.slope_se / 2.0,
        spatial: spatial_fit.slope / 2.0,
        spatial_se: spatial_fit.slope_se / 2.0,
        temporal_fit,
        spatial_fit,
        temporal_moments,
        spatial_moments,
    })
}

fn mean_sq<F: Fn(usize, usize) -> f64>(f: &LatticeField, pos: &[usize], diff: F) -> f64 {
    let mut acc = 0.0;
    for c in 0..f.d {
        for &p in pos {
            acc += diff(c, p).powi(2);
        }
    }
    acc / (f.d * pos.len()) as f64
}

fn fit_moments(points: &[(f64, Moments)]) -> Result<(LinearFit, Vec<(f64, f64, f64)>)> {
    let mut x = vec![];
    let mut y = vec![];
    let mut w = vec![];
    let mut table = vec![];
    for (lag, m) in points {
        if !(m.mean > 0.0) {
            return domain("mean squared increment is zero; the field is degenerate");
        }
        let se = m.std_error();
        table.push((*lag, m.mean, se));
        x.push(lag.ln());
        y.push(m.mean.ln());
        let rel = se / m.mean;
        w.push(if rel > 0.0 && rel.is_finite() { 1.0 / (rel * rel) } else { 1.0 });
    }
    Ok((weighted_fit(&x, &y, &w)?, table))
}
