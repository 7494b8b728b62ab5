//! Independent numerical oracles for the integration tests. Nothing here
//! calls into the library's quadrature or closed forms.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gl_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let j = j as f64;
                let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre over `[a, b]` split at `breaks`, `panels` per piece.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], panels: usize, rule: &[(f64, f64)]) -> f64 {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(b);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * h;
            for &(x, wt) in rule {
                total += wt * h / 2.0 * f(lo + (x + 1.0) * h / 2.0);
            }
        }
    }
    total
}

/// Surface area of the unit sphere in `R^k` for `k ≤ 3`.
pub fn omega(k: usize) -> f64 {
    match k {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("omega only tabulated for k <= 3"),
    }
}

/// `∫_{s−ε}^s dr ∫_{R^k} ‖ξ‖^{β−k} e^{−4π²(t−r)‖ξ‖²} dξ` as a tensor-product
/// quadrature in `(u, ρ)` with `u = t − r` graded toward `t − s` and the
/// radius scaled to the decay length `1/(2π√u)`.
pub fn window_by_tensor_quadrature(s: f64, t: f64, eps: f64, k: usize, beta: f64) -> f64 {
    let rule = gl_rule(20);
    let (a, b) = (t - s, t - s + eps);
    let v_max = 3.0;
    let mut total = 0.0;
    let outer = 40;
    let inner = 30;
    for po in 0..outer {
        let h = 1.0 / outer as f64;
        for &(xo, wo) in &rule {
            let y = (po as f64 + (xo + 1.0) / 2.0) * h;
            let u = a + (b - a) * y.powi(4);
            let du = 4.0 * (b - a) * y.powi(3) * wo * h / 2.0;
            if u <= 0.0 {
                continue;
            }
            let scale = 1.0 / (2.0 * PI * u.sqrt());
            for pi in 0..inner {
                let hv = v_max / inner as f64;
                for &(xi, wi) in &rule {
                    let v = (pi as f64 + (xi + 1.0) / 2.0) * hv;
                    // ρ = scale · v², dρ = 2 scale v dv.
                    let rho = scale * v * v;
                    let drho = 2.0 * scale * v * wi * hv / 2.0;
                    let f = omega(k) * rho.powf(beta - 1.0) * (-4.0 * PI * PI * u * rho * rho).exp();
                    total += du * drho * f;
                }
            }
        }
    }
    total
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `E|m + σZ|^{−β}` for standard normal `Z`, `0 < β < 1`. The singular point
/// `z₀ = −m/σ` is removed by `|z − z₀| = v^p`, `p = 1/(1 − β)`.
pub fn riesz_gauss_moment_1d(m: f64, sigma: f64, beta: f64) -> f64 {
    let rule = gl_rule(12);
    let p = 1.0 / (1.0 - beta);
    let z0 = -m.abs() / sigma;
    let far = z0.abs();
    // φ(z₀ + v^p) peaks at v* = |z₀|^{1/p}.
    let toward = {
        let v_star = far.powf(1.0 / p);
        let width = if v_star > 0.0 { 1.0 / (p * v_star.powf(p - 1.0)) } else { 1.0 };
        let v_max = (far + 12.0).powf(1.0 / p);
        let breaks: Vec<f64> = [-8.0, -2.0, 0.0, 2.0, 8.0].iter().map(|c| v_star + c * width).collect();
        composite(|v| phi(z0 + v.powf(p)), 0.0, v_max, &breaks, 24, &rule)
    };
    let away = composite(|v| phi(far + v.powf(p)), 0.0, 12f64.powf(1.0 / p), &[1.0], 24, &rule);
    sigma.powf(-beta) * p * (toward + away)
}

/// Real-space covariance of the linear solution for `k = 1`:
/// `∫_0^{s∧t} E|x − y + √(t + s − 2r) Z|^{−β} dr`.
pub fn covariance_real_space(t: f64, x: f64, s: f64, y: f64, beta: f64) -> f64 {
    let rule = gl_rule(16);
    let lo = t.min(s);
    let gap = (t - s).abs();
    let m = x - y;
    // r = lo − lo·w^q with q(1 − β/2) = 1 keeps the integrand bounded at w = 0.
    let q = 1.0 / (1.0 - beta / 2.0);
    composite(
        |w| {
            let tail = lo * w.powf(q);
            let dr = lo * q * w.powf(q - 1.0);
            let sigma = (gap + 2.0 * tail).sqrt();
            if sigma == 0.0 {
                return 0.0;
            }
            riesz_gauss_moment_1d(m, sigma, beta) * dr
        },
        0.0,
        1.0,
        &[1e-3, 1e-2, 0.1],
        16,
        &rule,
    )
}

/// `E‖Z‖^{−β}` for `Z ~ N(0, I_k)`, through the chi density with
/// `ρ = v^{3/(k−β)}`, which makes the integrand smooth.
pub fn inverse_norm_moment(k: usize, beta: f64) -> f64 {
    let rule = gl_rule(16);
    let norm = match k {
        1 => (PI / 2.0).sqrt(),
        2 => 1.0,
        3 => (PI / 2.0).sqrt(),
        _ => panic!("k <= 3"),
    };
    let p = 3.0 / (k as f64 - beta);
    let v_max = 60f64.powf(1.0 / (2.0 * p)).max(1.0) * 2.0;
    composite(|v| p * v * v * (-0.5 * v.powf(2.0 * p)).exp(), 0.0, v_max, &[], 200, &rule) / norm
}

/// `E[u(t, x)²]` for any `k ≤ 3`: `∫_0^t E‖√(2(t − r)) Z‖^{−β} dr`, with the
/// time integral by quadrature after `t − r = t w^q`.
pub fn variance_real_space(t: f64, k: usize, beta: f64) -> f64 {
    let rule = gl_rule(16);
    let moment = inverse_norm_moment(k, beta);
    let q = 1.0 / (1.0 - beta / 2.0);
    composite(
        |w| {
            if w == 0.0 {
                return 0.0;
            }
            let tail = t * w.powf(q);
            let dr = t * q * w.powf(q - 1.0);
            (2.0 * tail).powf(-beta / 2.0) * moment * dr
        },
        0.0,
        1.0,
        &[],
        64,
        &rule,
    )
}

/// Ordinary least-squares slope.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
