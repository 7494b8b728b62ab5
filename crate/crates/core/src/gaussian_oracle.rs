//! Second-order theory of the linear solution `v` (`σ ≡ Id`, `b ≡ 0`).
//!
//! With `c` the Riesz Fourier constant, `C` the window constant and
//! `e = (2−β)/2`, the variance is `c C t^e`. For `s ≤ t = s + h` and
//! `x = y + z` the increment second moment is `c (I_1 + I_2)` with
//! `I_1 = C h^e` and
//!
//! ```text
//! I_2 = ω_{k−1} ∫_0^∞ ρ^{β−1} G_s(ρ) (1 − a(ρ))² dρ
//!     + ω_{k−1} Γ(β/2) ∫_0^s p(τ)^{−β/2} [1 − M(β/2; k/2; −π²‖z‖²/p(τ))] dτ,
//! ```
//!
//! where `a = e^{−2π²hρ²}`, `G_s = (1 − e^{−4π²sρ²}) / (4π²ρ²)`,
//! `p(τ) = 4π²τ + 2π²h` and `M` is Kummer's function. The second line comes
//! from integrating the angular and radial parts of the cross term in closed
//! form, which avoids oscillatory quadrature. A slower route that integrates
//! the cross term over radius and polar angle directly is kept in
//! [`increment_moment_by_angles`] for cross-checking.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::Rectangle;
use crate::kernels::{radial_integral, riesz_fourier_constant, window_constant, NoiseParams};
use crate::quadrature::{gauss_legendre, integrate_with_breaks, QuadOptions};
use crate::special::{gamma, one_minus_kummer_m_neg, sphere_area};
use crate::stats::{linear_fit, log_space, LinearFit};

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;
const TWO_PI_SQ: f64 = 2.0 * PI * PI;
const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    fn check(&self, params: &NoiseParams) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return domain(format!("time must be positive, got {}", self.t));
        }
        if self.x.len() != params.k {
            return domain(format!("point has {} coordinates, expected k = {}", self.x.len(), params.k));
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// `E[v_1(t, x)²] = c C t^{(2−β)/2}`.
pub fn variance(p: &SpaceTimePoint, params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    p.check(params)?;
    Ok(riesz_fourier_constant(params) * window_constant(params) * p.t.powf(params.time_exponent()))
}

/// `E[|v_1(q) − v_1(p)|²]`.
pub fn increment_moment(p: &SpaceTimePoint, q: &SpaceTimePoint, params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    p.check(params)?;
    q.check(params)?;
    let (early, late) = if p.t <= q.t { (p, q) } else { (q, p) };
    let s = early.t;
    let h = late.t - early.t;
    let z = distance(&early.x, &late.x);
    if h == 0.0 && z == 0.0 {
        return Ok(0.0);
    }
    let i1 = window_constant(params) * h.powf(params.time_exponent());
    let i2 = sphere_area(params.k) * (time_term(s, h, params.beta)? + space_term(s, h, z, params)?);
    Ok(riesz_fourier_constant(params) * (i1 + i2))
}

/// `∫_0^∞ ρ^{β−1} G_s(ρ) (1 − e^{−2π²hρ²})² dρ`, after the scaling `ρ = u / √h`.
fn time_term(s: f64, h: f64, beta: f64) -> Result<f64> {
    if h == 0.0 {
        return Ok(0.0);
    }
    let ratio = s / h;
    // Both exponentials are below e^{-40} beyond u_max; the rest is a power tail.
    let u_max = (40.0 / TWO_PI_SQ).sqrt().max((40.0 / (FOUR_PI_SQ * ratio)).sqrt());
    let f = |u: f64| {
        let u2 = u * u;
        let g = if u2 == 0.0 { ratio } else { -(-FOUR_PI_SQ * ratio * u2).exp_m1() / (FOUR_PI_SQ * u2) };
        g * (-TWO_PI_SQ * u2).exp_m1().powi(2)
    };
    let body = radial_integral(beta, u_max, f, REL_TOL)?;
    let tail = u_max.powf(beta - 2.0) / ((2.0 - beta) * FOUR_PI_SQ);
    Ok(h.powf(1.0 - beta / 2.0) * (body + tail))
}

/// `Γ(β/2) ∫_0^s p(τ)^{−β/2} [1 − M(β/2; k/2; −π²‖z‖²/p(τ))] dτ` through
/// `τ = s w^q`, `q = 1/(1 − β/2)`, which absorbs the endpoint singularity at `h = 0`.
fn space_term(s: f64, h: f64, z: f64, params: &NoiseParams) -> Result<f64> {
    if z == 0.0 {
        return Ok(0.0);
    }
    let a = params.beta / 2.0;
    let b = params.k as f64 / 2.0;
    let q = 1.0 / (1.0 - a);
    let z2 = PI * PI * z * z;
    let f = |w: f64| {
        if w == 0.0 {
            return if h == 0.0 { s * q * (FOUR_PI_SQ * s).powf(-a) } else { 0.0 };
        }
        let tau = s * w.powf(q);
        let p = FOUR_PI_SQ * tau + TWO_PI_SQ * h;
        let jac = s * q * w.powf(q - 1.0);
        jac * p.powf(-a) * one_minus_kummer_m_neg(a, b, z2 / p)
    };
    // The integrand changes regime where τ ~ ‖z‖²; seed breakpoints around it.
    let w_star = ((z * z / 4.0) / s).powf(1.0 / q);
    let breaks: Vec<f64> =
        [1e-3, 1e-2, 1e-1, 1.0, 10.0].iter().map(|m| m * w_star).filter(|w| *w > 0.0 && *w < 1.0).collect();
    let est = integrate_with_breaks(f, 0.0, 1.0, &breaks, QuadOptions::rel(REL_TOL).with_max_intervals(20000))?;
    Ok(gamma(a) * est.value)
}

/// Increment second moment by direct quadrature of the cross term over radius
/// and polar angle. Much slower than [`increment_moment`]; for `h = 0` it needs
/// a long oscillatory radial range and is only practical for `k = 1`.
pub fn increment_moment_by_angles(p: &SpaceTimePoint, q: &SpaceTimePoint, params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    p.check(params)?;
    q.check(params)?;
    let (early, late) = if p.t <= q.t { (p, q) } else { (q, p) };
    let s = early.t;
    let h = late.t - early.t;
    let z = distance(&early.x, &late.x);
    if h == 0.0 && z == 0.0 {
        return Ok(0.0);
    }
    let k = params.k;
    let beta = params.beta;
    let g_s = |rho: f64| {
        let r2 = rho * rho;
        if r2 == 0.0 {
            s
        } else {
            -(-FOUR_PI_SQ * s * r2).exp_m1() / (FOUR_PI_SQ * r2)
        }
    };
    // Radial integrand after the angular integral, with 1 − cos written as 2 sin².
    let (gx, gw) = gauss_legendre(16);
    let angular = |rho: f64, a: f64| -> f64 {
        let base = (1.0 - a).powi(2);
        if k == 1 {
            return 2.0 * (base + 4.0 * a * (PI * rho * z).sin().powi(2));
        }
        let panels = 4 + (2.0 * rho * z).ceil() as usize;
        let width = PI / panels as f64;
        let mut sum = 0.0;
        for pnl in 0..panels {
            let c = (pnl as f64 + 0.5) * width;
            for (x, w) in gx.iter().zip(&gw) {
                let th = c + 0.5 * width * x;
                let sn = th.sin().powi(k as i32 - 2);
                sum += 0.5 * width * w * sn * (base + 4.0 * a * (PI * rho * z * th.cos()).sin().powi(2));
            }
        }
        sphere_area(k - 1) * sum
    };
    let integrand = |rho: f64| {
        let a = (-TWO_PI_SQ * h * rho * rho).exp();
        rho.powf(beta - 1.0) * g_s(rho) * angular(rho, a)
    };
    // Cutoff: the heat factor is negligible past r_h when h > 0; for h = 0 the
    // oscillatory remainder beyond 2000 periods is below 1e-10 relative.
    let r_h = if h > 0.0 { (45.0 / (TWO_PI_SQ * h)).sqrt() } else { 0.0 };
    let r_z = if z > 0.0 { 2000.0 / z } else { 0.0 };
    let r_max = if h > 0.0 { r_h } else { r_z }.max((45.0 / (FOUR_PI_SQ * s)).sqrt());
    let period = if z > 0.0 { 1.0 / z } else { r_max };
    let mut breaks = vec![];
    let mut b = period.min(r_max);
    while b < r_max {
        breaks.push(b);
        b += period;
    }
    let lower = breaks.first().copied().unwrap_or(r_max);
    let head = radial_integral(beta, lower, |rho| rho.powf(1.0 - beta) * integrand(rho), 1e-11)?;
    let body =
        integrate_with_breaks(integrand, lower, r_max, &breaks, QuadOptions::rel(1e-11).with_max_intervals(200_000))?
            .value;
    // Past r_max the factor a is negligible (h > 0) or averages sin² to 1/2 (h = 0).
    let tail_weight = if h > 0.0 { 1.0 } else { 2.0 };
    let tail = sphere_area(k) * tail_weight * r_max.powf(beta - 2.0) / ((2.0 - beta) * FOUR_PI_SQ);
    let i1 = window_constant(params) * h.powf(params.time_exponent());
    Ok(riesz_fourier_constant(params) * (i1 + head + body + tail))
}

/// `E[v_1(p) v_1(q)]` by polarization.
pub fn covariance(p: &SpaceTimePoint, q: &SpaceTimePoint, params: &NoiseParams) -> Result<f64> {
    let vp = variance(p, params)?;
    let vq = variance(q, params)?;
    let inc = increment_moment(p, q, params)?;
    Ok(0.5 * (vp + vq - inc))
}

/// Law of `(v(p), v(q)) ∈ R^{2d}`: centered, with covariance
/// `[[var p, cov], [cov, var q]] ⊗ I_d` ordered as `(v(p)_1..d, v(q)_1..d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPairLaw {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub var_p: f64,
    pub var_q: f64,
    pub increment: f64,
}

impl GaussianPairLaw {
    pub fn new(p: &SpaceTimePoint, q: &SpaceTimePoint, params: &NoiseParams) -> Result<Self> {
        let var_p = variance(p, params)?;
        let var_q = variance(q, params)?;
        let increment = increment_moment(p, q, params)?;
        let c = 0.5 * (var_p + var_q - increment);
        let d = params.d;
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            cov[(i, i)] = var_p;
            cov[(d + i, d + i)] = var_q;
            cov[(i, d + i)] = c;
            cov[(d + i, i)] = c;
        }
        Ok(Self { mean: vec![0.0; 2 * d], cov, var_p, var_q, increment })
    }

    pub fn scalar_covariance(&self) -> f64 {
        0.5 * (self.var_p + self.var_q - self.increment)
    }

    /// Determinant of the per-channel 2×2 covariance, written as
    /// `(I − (√vp − √vq)²)((√vp + √vq)² − I) / 4` to avoid cancellation.
    pub fn channel_determinant(&self) -> f64 {
        let (a, b) = (self.var_p.sqrt(), self.var_q.sqrt());
        (self.increment - (a - b).powi(2)) * ((a + b).powi(2) - self.increment) / 4.0
    }
}

/// Density of `(v(p), v(q))` at `(z1, z2)`.
pub fn two_point_density(
    p: &SpaceTimePoint,
    q: &SpaceTimePoint,
    z1: &[f64],
    z2: &[f64],
    params: &NoiseParams,
) -> Result<f64> {
    if z1.len() != params.d || z2.len() != params.d {
        return domain(format!("density arguments must have d = {} components", params.d));
    }
    let law = GaussianPairLaw::new(p, q, params)?;
    let det = law.channel_determinant();
    if !(det > 0.0) {
        return domain("pair covariance is singular (p = q or numerically degenerate)");
    }
    let c = law.scalar_covariance();
    let mut quad = 0.0;
    for (a, b) in z1.iter().zip(z2) {
        quad += (law.var_q * a * a - 2.0 * c * a * b + law.var_p * b * b) / det;
    }
    let norm = (2.0 * PI * det.sqrt()).powi(params.d as i32);
    Ok((-0.5 * quad).exp() / norm)
}

/// Parabolic distance `|t − s|^{(2−β)/2} + ‖x − y‖^{2−β}`.
pub fn parabolic_gauge(p: &SpaceTimePoint, q: &SpaceTimePoint, params: &NoiseParams) -> f64 {
    (p.t - q.t).abs().powf(params.time_exponent()) + distance(&p.x, &q.x).powf(2.0 - params.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    TimeLike,
    SpaceLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub separation: f64,
    /// `sup_z density`, attained at the origin.
    pub peak_density: f64,
    /// `peak_density · gauge^{d/2}`.
    pub scaled: f64,
}

/// Peak two-point density times `gauge^{d/2}` along a dyadic approach `q → p`.
pub fn density_scaling_audit(
    p: &SpaceTimePoint,
    approach: Approach,
    first_separation: f64,
    steps: usize,
    params: &NoiseParams,
) -> Result<Vec<AuditPoint>> {
    let zeros = vec![0.0; params.d];
    (0..steps)
        .map(|j| {
            let sep = first_separation * 0.5f64.powi(j as i32);
            let q = match approach {
                Approach::TimeLike => SpaceTimePoint::new(p.t + sep, p.x.clone()),
                Approach::SpaceLike => {
                    let mut x = p.x.clone();
                    x[0] += sep;
                    SpaceTimePoint::new(p.t, x)
                }
            };
            let peak = two_point_density(p, &q, &zeros, &zeros, params)?;
            let gauge = parabolic_gauge(p, &q, params);
            Ok(AuditPoint { separation: sep, peak_density: peak, scaled: peak * gauge.powf(params.d as f64 / 2.0) })
        })
        .collect()
}

/// Mesh of point pairs for the two-sided increment bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMesh {
    /// Log-spaced separations per coordinate (time and space), zero excluded.
    pub levels: usize,
    /// Span of the separations in decades.
    pub decades: f64,
    /// Largest separation of the exponent fits, as a fraction of the
    /// rectangle extent. The leading power only dominates at small scales.
    pub fit_reach: f64,
}

impl Default for PairMesh {
    fn default() -> Self {
        Self { levels: 12, decades: 3.0, fit_reach: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pairs: usize,
    /// Smallest and largest ratio `increment / gauge` on the mesh.
    pub c_lower: f64,
    pub c_upper: f64,
    pub pure_time_band: (f64, f64),
    pub pure_space_band: (f64, f64),
    /// Fit of `log increment` on `log h` for `z = 0` over the fit window;
    /// theory slope `(2−β)/2`.
    pub time_fit: LinearFit,
    /// Fit of `log increment` on `log ‖z‖` for `h = 0` over the fit window;
    /// theory slope `2−β`.
    pub space_fit: LinearFit,
    /// Hölder exponents `slope / 2`.
    pub holder_time: f64,
    pub holder_space: f64,
}

/// Ratio band of `increment_moment / gauge` on a deterministic mesh in `rect`.
///
/// Pairs are `(t − h, y)` and `(t, y + z u)` with `t` the right end of `I`, `y`
/// the lower corner of `J` and `u` the unit diagonal; `h` and `‖z‖` range over
/// `{0} ∪` log-spaced values reaching the extent of the rectangle. The
/// exponent fits use separate pure-time and pure-space sequences of the same
/// span ending at `fit_reach` times the extent.
pub fn check_c1_c2(rect: &Rectangle, params: &NoiseParams, mesh: PairMesh) -> Result<ConditionReport> {
    params.validate()?;
    rect.validate()?;
    if rect.k() != params.k {
        return domain(format!("rectangle has {} axes, expected k = {}", rect.k(), params.k));
    }
    if mesh.levels < 4 || !(mesh.decades > 0.0) || !(mesh.fit_reach > 0.0 && mesh.fit_reach <= 1.0) {
        return domain("pair mesh needs at least 4 levels, a positive span and a reach in (0, 1]");
    }
    let h_max = rect.time_length();
    let z_max = rect.min_side() * (params.k as f64).sqrt();
    let factor = 10f64.powf(-mesh.decades);
    let hs: Vec<f64> = std::iter::once(0.0).chain(log_space(h_max * factor, h_max, mesh.levels)).collect();
    let zs: Vec<f64> = std::iter::once(0.0).chain(log_space(z_max * factor, z_max, mesh.levels)).collect();
    let dir = 1.0 / (params.k as f64).sqrt();
    let t = rect.time.1;
    let y: Vec<f64> = rect.space.iter().map(|(a, _)| *a).collect();

    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut time_band = vec![];
    let mut space_band = vec![];
    let mut pairs = 0;
    for &h in &hs {
        for &z in &zs {
            if h == 0.0 && z == 0.0 {
                continue;
            }
            let p = SpaceTimePoint::new(t - h, y.clone());
            let q = SpaceTimePoint::new(t, y.iter().map(|v| v + z * dir).collect());
            let inc = increment_moment(&p, &q, params)?;
            let ratio = inc / parabolic_gauge(&p, &q, params);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            pairs += 1;
            if z == 0.0 {
                time_band.push(ratio);
            } else if h == 0.0 {
                space_band.push(ratio);
            }
        }
    }
    let reach = mesh.fit_reach;
    let time_pts = log_space(h_max * reach * factor, h_max * reach, mesh.levels)
        .into_iter()
        .map(|h| {
            let p = SpaceTimePoint::new(t - h, y.clone());
            let q = SpaceTimePoint::new(t, y.clone());
            Ok((h, increment_moment(&p, &q, params)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let space_pts = log_space(z_max * reach * factor, z_max * reach, mesh.levels)
        .into_iter()
        .map(|z| {
            let p = SpaceTimePoint::new(t, y.clone());
            let q = SpaceTimePoint::new(t, y.iter().map(|v| v + z * dir).collect());
            Ok((z, increment_moment(&p, &q, params)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = |pts: &[(f64, f64)]| {
        let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        linear_fit(&x, &y)
    };
    let band = |r: &[f64]| r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let time_fit = fit(&time_pts)?;
    let space_fit = fit(&space_pts)?;
    Ok(ConditionReport {
        pairs,
        c_lower: lo,
        c_upper: hi,
        pure_time_band: band(&time_band),
        pure_space_band: band(&space_band),
        holder_time: time_fit.slope / 2.0,
        holder_space: space_fit.slope / 2.0,
        time_fit,
        space_fit,
    })
}
