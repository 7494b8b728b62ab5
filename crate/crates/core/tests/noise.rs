mod common;

use common::mean_se;
use hitlab_core::kernels::NoiseParams;
use hitlab_core::rng::SeedPath;
use hitlab_core::spectral_noise::{read_records, write_record, DumpHeader, NoiseSampler, SpectralPlan, TorusGrid};
use proptest::prelude::*;

fn plan(k: usize, m: usize, beta: f64) -> SpectralPlan {
    SpectralPlan::new(TorusGrid::new(k, 4.0, m, 1e-3).unwrap(), NoiseParams::new(k, beta, 1).unwrap()).unwrap()
}

#[test]
fn lattice_covariance_approximates_the_riesz_kernel_at_moderate_lags() {
    // Away from the origin and the torus scale the band-limited covariance
    // follows ‖x‖^{-β}.
    let p = plan(1, 1024, 0.5);
    let h = 4.0 / 1024.0;
    for lag in [16i64, 32, 64] {
        let r = lag as f64 * h;
        let c = p.lattice_covariance(&[lag]);
        assert!(((c - r.powf(-0.5)) / r.powf(-0.5)).abs() < 0.1, "lag {lag}: {c} vs {}", r.powf(-0.5));
    }
}

#[test]
fn sampled_pairs_match_covariance_in_two_dimensions() {
    let grid = TorusGrid::new(2, 4.0, 32, 1e-3).unwrap();
    let params = NoiseParams::new(2, 1.0, 1).unwrap();
    let mut s = NoiseSampler::new(grid, params).unwrap();
    let lags: [[i64; 2]; 4] = [[0, 0], [1, 0], [0, 3], [2, 2]];
    let mut stats = vec![vec![]; lags.len()];
    for step in 0..1500 {
        let slice = s.sample(SeedPath::new(5, 0, step));
        let w = slice.channel(0);
        for (i, lag) in lags.iter().enumerate() {
            let mut acc = 0.0;
            for flat in 0..grid.len() {
                acc += w[flat] * w[grid.shifted(flat, lag)];
            }
            stats[i].push(acc / grid.len() as f64);
        }
    }
    for (i, lag) in lags.iter().enumerate() {
        let (m, se) = mean_se(&stats[i]);
        let exact = s.plan().lattice_covariance(lag);
        assert!((m - exact).abs() < 5.0 * se, "lag {lag:?}: {m} ± {se} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lattice_covariance_is_even_periodic_and_maximal_at_zero(lag in -100i64..100, beta in 0.1f64..0.95) {
        let p = plan(1, 64, beta);
        let c = p.lattice_covariance(&[lag]);
        prop_assert!((c - p.lattice_covariance(&[-lag])).abs() <= 1e-10 * c.abs().max(1.0));
        prop_assert!((c - p.lattice_covariance(&[lag + 64])).abs() <= 1e-10 * c.abs().max(1.0));
        prop_assert!(c <= p.lattice_covariance(&[0]) * (1.0 + 1e-12));
    }

    #[test]
    fn slices_are_reproducible_and_real(master in any::<u64>(), replica in 0u64..1000, step in 0u64..1000) {
        let grid = TorusGrid::new(1, 2.0, 64, 1e-3).unwrap();
        let params = NoiseParams::new(1, 0.5, 3).unwrap();
        let mut s = NoiseSampler::new(grid, params).unwrap();
        let a = s.sample(SeedPath::new(master, replica, step));
        let b = s.sample(SeedPath::new(master, replica, step));
        let c = s.sample(SeedPath::new(master, replica, step + 1));
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_ne!(&a.values, &c.values);
        prop_assert!(a.imag_residue < 1e-12);
        prop_assert_ne!(a.channel(0), a.channel(1));
    }

    #[test]
    fn dumps_round_trip(master in any::<u64>(), steps in 1usize..4) {
        let grid = TorusGrid::new(1, 2.0, 32, 1e-3).unwrap();
        let params = NoiseParams::new(1, 0.5, 2).unwrap();
        let mut s = NoiseSampler::new(grid, params).unwrap();
        let mut buf = vec![];
        let mut written = vec![];
        for step in 0..steps as u64 {
            let slice = s.sample(SeedPath::new(master, 0, step));
            let h = DumpHeader::for_slice(&slice);
            write_record(&mut buf, &h, &slice.values).unwrap();
            written.push((h, slice.values));
        }
        let back = read_records(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, written);
    }
}
