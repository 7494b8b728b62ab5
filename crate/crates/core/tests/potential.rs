use hitlab_core::kernels::KAlphaConfig;
use hitlab_core::potential_theory::{
    box_dimension, box_dimension_flat, capacity, energy, hausdorff_upper, interval_cloud, BoxCounter, CapacityOptions,
    CompactTarget, DiscreteMeasure,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kcfg() -> KAlphaConfig {
    KAlphaConfig::new(10.0).unwrap()
}

fn scaled_cloud(t: &CompactTarget, lambda: f64) -> CompactTarget {
    match t {
        CompactTarget::Cloud { points, cell_radius } => CompactTarget::Cloud {
            points: points.iter().map(|p| p.iter().map(|v| v * lambda).collect()).collect(),
            cell_radius: cell_radius * lambda,
        },
        _ => unreachable!(),
    }
}

/// `Cap_α([0, 1])` for the kernel `r^{−α}`, `0 < α < 1`: the equilibrium
/// density on `[−1, 1]` is `c (1 − x²)^{(α−1)/2}` with constant potential
/// `c π / cos(πα/2)`; halving the interval multiplies the energy by `2^α`.
fn interval_capacity_exact(gamma_1_plus_half_alpha: f64, gamma_half_1_plus_alpha: f64, alpha: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let c = gamma_1_plus_half_alpha / (pi.sqrt() * gamma_half_1_plus_alpha);
    let energy = 2f64.powf(alpha) * c * pi / (pi * alpha / 2.0).cos();
    1.0 / energy
}

#[test]
fn interval_capacity_extrapolates_to_the_continuum_value() {
    let alpha = 0.5;
    // Γ(1.25) and Γ(0.75).
    let exact = interval_capacity_exact(0.906_402_477_055_477, 1.225_416_702_465_178, alpha);
    let opt = CapacityOptions::default();
    let caps: Vec<f64> = [128usize, 256, 512]
        .iter()
        .map(|&n| {
            let r = capacity(&interval_cloud(0.0, 1.0, n), alpha, &kcfg(), &opt).unwrap();
            assert!(r.converged && r.duality_gap < 1e-8, "n={n}: gap {}", r.duality_gap);
            r.capacity
        })
        .collect();
    // Error of the half-cell self-interaction decays like n^{α−1}.
    let f = 2f64.powf(1.0 - alpha);
    let rich: Vec<f64> = caps.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
    let raw_err = ((caps[2] - exact) / exact).abs();
    let rich_err = ((rich[1] - exact) / exact).abs();
    assert!(rich_err < 0.01, "extrapolated {} vs {exact}", rich[1]);
    assert!(rich_err < raw_err, "extrapolation did not help: {rich_err} vs {raw_err}");
    assert!((rich[1] - rich[0]).abs() < (caps[2] - caps[1]).abs());
}

#[test]
fn capacity_scales_with_the_set() {
    let opt = CapacityOptions::default();
    for alpha in [0.3, 0.5, 0.8] {
        let base = interval_cloud(0.0, 1.0, 96);
        let c1 = capacity(&base, alpha, &kcfg(), &opt).unwrap();
        for lambda in [0.25, 2.0, 3.0] {
            let c = capacity(&scaled_cloud(&base, lambda), alpha, &kcfg(), &opt).unwrap();
            assert!(c.converged && c.duality_gap < 1e-8);
            let expected = lambda.powf(alpha) * c1.capacity;
            assert!(((c.capacity - expected) / expected).abs() < 1e-6, "alpha={alpha} lambda={lambda}");
        }
    }
}

#[test]
fn capacity_is_monotone_under_inclusion() {
    let opt = CapacityOptions::default();
    let small = interval_cloud(0.0, 0.5, 64);
    let big = interval_cloud(0.0, 1.0, 128);
    let a = capacity(&small, 0.5, &kcfg(), &opt).unwrap().capacity;
    let b = capacity(&big, 0.5, &kcfg(), &opt).unwrap().capacity;
    assert!(a < b);
}

#[test]
fn singleton_capacity_and_hausdorff() {
    let p = CompactTarget::Point { at: vec![0.2, -0.4] };
    let opt = CapacityOptions::default();
    assert_eq!(capacity(&p, 0.5, &kcfg(), &opt).unwrap().capacity, 0.0);
    assert_eq!(capacity(&p, 0.0, &kcfg(), &opt).unwrap().capacity, 0.0);
    assert_eq!(capacity(&p, -0.5, &kcfg(), &opt).unwrap().capacity, 1.0);
    let mut last = f64::INFINITY;
    for j in 0..12 {
        let h = hausdorff_upper(&p, 0.7, 0.5f64.powi(j)).unwrap();
        assert!(h <= last);
        last = h;
    }
    assert!(last < 1e-2);
}

#[test]
fn hausdorff_upper_of_a_segment_at_its_dimension_stays_bounded() {
    let seg = interval_cloud(0.0, 1.0, 4096);
    for j in 2..8 {
        let eps = 0.5f64.powi(j);
        let h1 = hausdorff_upper(&seg, 1.0, eps).unwrap();
        assert!(h1 > 0.5 && h1 < 4.0, "eps={eps}: {h1}");
        // Above the dimension the premeasure vanishes with ε.
        assert!(hausdorff_upper(&seg, 1.5, eps).unwrap() < 3.0 * eps.sqrt() * 2f64.sqrt());
    }
}

fn scales() -> Vec<f64> {
    vec![0.004, 0.008, 0.016, 0.032, 0.064, 0.128]
}

#[test]
fn box_dimension_of_synthetic_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dyadic: Vec<f64> = (0..6).map(|j| 0.5f64.powi(j)).collect();
    let square: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.gen(), rng.gen(), 0.25]).collect();
    let sq = box_dimension(&square, &dyadic).unwrap();
    assert!((sq.dimension - 2.0).abs() < 0.1, "square {}", sq.dimension);
    for d in [2usize, 4, 6] {
        let dir: Vec<f64> = (0..d).map(|a| 1.0 / (a + 1) as f64).collect();
        let seg: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let s: f64 = rng.gen();
                dir.iter().map(|v| 0.1 + s * v).collect()
            })
            .collect();
        let sg = box_dimension(&seg, &dyadic).unwrap();
        assert!((sg.dimension - 1.0).abs() < 0.1, "segment in R^{d}: {}", sg.dimension);
    }
    let same = vec![vec![0.3, 0.3]; 2000];
    let b = box_dimension(&same, &dyadic).unwrap();
    assert_eq!(b.dimension, 0.0);
    assert!(!b.warnings.is_empty());
}

#[test]
fn box_dimension_of_a_cantor_set() {
    // Middle-thirds Cantor set at depth 10; dimension ln 2 / ln 3.
    let mut pts = vec![0.0f64];
    let mut len = 1.0;
    for _ in 0..10 {
        len /= 3.0;
        pts = pts.iter().flat_map(|&a| [a, a + 2.0 * len]).collect();
    }
    let flat: Vec<f64> = pts.iter().map(|a| a + len / 2.0).collect();
    let sc: Vec<f64> = (2..8).map(|j| 3f64.powi(-j) * 1.0001).collect();
    let b = box_dimension_flat(&flat, 1, &sc).unwrap();
    let theory = 2f64.ln() / 3f64.ln();
    assert!((b.dimension - theory).abs() < 0.05, "{} vs {theory}", b.dimension);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_is_homogeneous(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..30),
        lambda in 0.1f64..10.0,
        alpha in 0.1f64..1.9,
    ) {
        let support: Vec<Vec<f64>> = pts.iter().enumerate().map(|(i, (x, y))| vec![*x, *y + 1e-3 * i as f64]).collect();
        let mu = DiscreteMeasure::uniform(support, 0.01).unwrap();
        let e = energy(&mu, alpha, &kcfg()).unwrap();
        let es = energy(&mu.scaled(lambda), alpha, &kcfg()).unwrap();
        prop_assert!(((es - lambda.powf(-alpha) * e) / es).abs() < 1e-10);
    }

    #[test]
    fn merged_counters_equal_one_pass(
        seed in any::<u64>(),
        n in 1000usize..4000,
        split in 0.0f64..1.0,
        dim in 1usize..7,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cut = ((n as f64 * split) as usize) * dim;
        let sc = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
        let mut whole = BoxCounter::new(dim, &sc).unwrap();
        whole.extend_flat(&coords).unwrap();
        let mut a = BoxCounter::new(dim, &sc).unwrap();
        let mut b = BoxCounter::new(dim, &sc).unwrap();
        a.extend_flat(&coords[..cut]).unwrap();
        b.extend_flat(&coords[cut..]).unwrap();
        a.merge(b).unwrap();
        prop_assert_eq!(a.points(), whole.points());
        prop_assert_eq!(a.finish().unwrap().counts, whole.finish().unwrap().counts);
    }

    #[test]
    fn box_counts_shrink_with_scale(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen(), rng.gen::<f64>().powi(3)]).collect();
        let b = box_dimension(&pts, &scales()).unwrap();
        for w in b.counts.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }
}
