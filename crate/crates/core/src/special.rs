//! Special functions used by the radial reductions.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere `S^{k-1}` in `R^k`, i.e. `2 π^{k/2} / Γ(k/2)`.
/// For `k = 1` this is the two-point "sphere" {−1, +1}, of counting measure 2.
pub fn sphere_area(k: usize) -> f64 {
    let kf = k as f64;
    2.0 * PI.powf(kf / 2.0) / gamma(kf / 2.0)
}

/// Kummer's function `M(a; b; -x)` for `x >= 0` and `b > a > 0`.
pub fn kummer_m_neg(a: f64, b: f64, x: f64) -> f64 {
    if x < 1.0 {
        1.0 - one_minus_small(a, b, x)
    } else if x <= 40.0 {
        transformed_series(a, b, x)
    } else {
        asymptotic(a, b, x)
    }
}

/// `1 - M(a; b; -x)` for `x >= 0` and `b > a > 0`, accurate for small `x`.
pub fn one_minus_kummer_m_neg(a: f64, b: f64, x: f64) -> f64 {
    if x < 1.0 {
        one_minus_small(a, b, x)
    } else {
        1.0 - kummer_m_neg(a, b, x)
    }
}

fn one_minus_small(a: f64, b: f64, x: f64) -> f64 {
    // 1 - M = -sum_{n>=1} (a)_n / (b)_n (-x)^n / n!
    let mut term = -a / b * x;
    let mut sum = term;
    let mut n = 1.0;
    while term.abs() > 1e-18 * sum.abs() && n < 200.0 {
        term *= (a + n) / (b + n) * (-x) / (n + 1.0);
        sum += term;
        n += 1.0;
    }
    -sum
}

fn transformed_series(a: f64, b: f64, x: f64) -> f64 {
    // M(a; b; -x) = e^{-x} M(b - a; b; x), a series of positive terms.
    let c = b - a;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        term *= (c + n) / (b + n) * x / (n + 1.0);
        sum += term;
        n += 1.0;
        if term < 1e-17 * sum || n > 2000.0 {
            break;
        }
    }
    (-x).exp() * sum
}

fn asymptotic(a: f64, b: f64, x: f64) -> f64 {
    let lead = (ln_gamma(b) - ln_gamma(b - a)).exp() * x.powf(-a);
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut s = 0.0;
    loop {
        let next = term * (a + s) * (a - b + 1.0 + s) / ((s + 1.0) * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
        s += 1.0;
    }
    lead * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadOptions;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn kummer_matches_closed_form_for_b_equal_a() {
        // M(a; a; -x) is not covered (b > a), but M(1; 2; -x) = (1 - e^{-x}) / x.
        for &x in &[0.01f64, 0.5, 0.99, 1.0, 3.0, 20.0, 39.9, 45.0, 100.0] {
            let exact = -(-x).exp_m1() / x;
            assert_relative_eq!(kummer_m_neg(1.0, 2.0, x), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn kummer_matches_gaussian_cosine_transform() {
        // 2 ∫_0^∞ ρ^{β-1} e^{-pρ²} cos(cρ) dρ = Γ(β/2) p^{-β/2} M(β/2; 1/2; -c²/(4p))
        let beta: f64 = 0.5;
        for &(p, c) in &[(1.0, 0.5), (0.3, 2.0), (0.05, 3.0), (2.0, 25.0)] {
            let f = |r: f64| r.powf(beta - 1.0) * (-p * r * r).exp() * (c * r).cos();
            let upper = (60.0 / p).sqrt();
            let lhs = 2.0
                * crate::quadrature::integrate_with_breaks(
                    f,
                    0.0,
                    upper,
                    &[1e-8, 1e-4, 1e-2],
                    QuadOptions::rel(1e-12).with_max_intervals(20000),
                )
                .unwrap()
                .value;
            let x = c * c / (4.0 * p);
            let rhs = gamma(beta / 2.0) * p.powf(-beta / 2.0) * kummer_m_neg(beta / 2.0, 0.5, x);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_minus_is_continuous_across_branches() {
        for &(a, b) in &[(0.25, 0.5), (0.5, 1.0), (0.75, 1.5)] {
            for &x in &[1.0, 40.0] {
                let lo = one_minus_kummer_m_neg(a, b, x * (1.0 - 1e-12));
                let hi = one_minus_kummer_m_neg(a, b, x * (1.0 + 1e-12));
                assert!((lo - hi).abs() < 1e-11, "{a} {b} {x}: {lo} {hi}");
            }
        }
    }
}
