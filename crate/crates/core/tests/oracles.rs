mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwofdm::config::default_80211_config;
use uwofdm::linops::{identity_defect, CMatrix, StructuralMatrices};
use uwofdm::precoder::{build_target_d, design_prp_generator, residual, solve_procrustes, solve_unconstrained};
use uwofdm::reduction::papr_db;
use uwofdm::txchain::{precode_and_map, Ofdm};

fn complex(d: &DMatrix<f64>) -> CMatrix {
    d.map(|v| Complex64::new(v, 0.0))
}

fn procrustes_beats_random(z: &CMatrix, d: &DMatrix<f64>, rng: &mut ChaCha8Rng, trials: usize) {
    let sol = solve_procrustes(z, d).unwrap();
    let sv_sum: f64 = sol.singular_values.iter().sum();
    assert!((sol.trace_value - sv_sum).abs() <= 1e-8, "trace {} vs {}", sol.trace_value, sv_sum);
    let best = residual(z, &sol.c_opt, d);
    for _ in 0..trials {
        let c = haar(z.ncols(), rng);
        assert!(best <= residual(z, &c, d) + 1e-12);
    }
}

#[test]
fn procrustes_square_default_layout() {
    let cfg = default_80211_config();
    let sm = StructuralMatrices::build(&cfg).unwrap();
    let d = build_target_d(sm.z.nrows(), sm.z.ncols()).unwrap();
    procrustes_beats_random(&sm.z, &d, &mut ChaCha8Rng::seed_from_u64(100), 10_000);
}

#[test]
fn procrustes_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let k = rng.random_range(2..6);
        let m = rng.random_range(k..9);
        let z = gaussian_matrix(m, k, &mut rng);
        let d = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
        procrustes_beats_random(&z, &d, &mut rng, 10_000);
    }
}

#[test]
fn procrustes_residual_identity() {
    // ‖ZC − D‖² = ‖Z‖² + ‖D‖² − 2 Re tr(D^H Z C) for unitary C
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let z = gaussian_matrix(7, 5, &mut rng);
    let d = build_target_d(7, 5).unwrap();
    let sol = solve_procrustes(&z, &d).unwrap();
    let expected = frob_sq(&z) + 5.0 - 2.0 * sol.trace_value;
    assert!((sol.residual - expected).abs() < 1e-10);
}

#[test]
fn unconstrained_matches_column_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let z = gaussian_matrix(9, 4, &mut rng);
    let d = build_target_d(9, 4).unwrap();
    let c = solve_unconstrained(&z, &d).unwrap();
    let normal = z.adjoint() * &z;
    let lu = normal.lu();
    for j in 0..4 {
        let rhs = z.adjoint() * complex(&d).column(j);
        let col = lu.solve(&rhs).unwrap();
        assert!((c.column(j) - col).norm() < 1e-10);
    }
    // the unconstrained optimum can only be better than the orthonormal one
    let sol = solve_procrustes(&z, &d).unwrap();
    assert!(residual(&z, &c, &d) <= sol.residual + 1e-12);
}

#[test]
fn null_space_matches_projector() {
    for cfg in [default_80211_config(), small_config(16, 4, 4, 2)] {
        let sm = StructuralMatrices::build(&cfg).unwrap();
        let (q, y) = (&sm.q, &sm.y);
        assert_eq!(y.ncols(), q.ncols() - q.nrows());
        assert!(identity_defect(&(y.adjoint() * y)) < 1e-10);
        assert!((q * y).norm() < 1e-10);
        // Y Y^H = I − Q^H (Q Q^H)^{-1} Q
        let qqh_inv = (q * q.adjoint()).try_inverse().unwrap();
        let proj = CMatrix::identity(q.ncols(), q.ncols()) - q.adjoint() * qqh_inv * q;
        assert!((y * y.adjoint() - proj).norm() < 1e-9);
    }
}

#[test]
fn small_system_full_pipeline() {
    let cfg = small_config(16, 4, 4, 2);
    let dims = cfg.dims().unwrap();
    assert_eq!((dims.n_d, dims.n_dr), (10, 14));
    let sm = StructuralMatrices::build(&cfg).unwrap();
    let g = design_prp_generator(&sm, &cfg).unwrap();
    let ofdm = Ofdm::new(16, 4, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..20 {
        let d = DVector::from_fn(10, |_, _| {
            Complex64::new(if rng.random() { 1.0 } else { -1.0 }, if rng.random() { 1.0 } else { -1.0 })
                / 2f64.sqrt()
        });
        let spectrum = precode_and_map(&d, &g, &sm);
        let x = naive_idft(&spectrum);
        let tail: f64 = x[12..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(tail < 1e-9 * d.norm());
        let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert!((energy - d.norm_squared()).abs() < 1e-9);
        let fast = ofdm.to_time_domain(&spectrum);
        for (a, b) in fast.samples.iter().zip(&x) {
            assert!((a - b).norm() < 1e-10);
        }
        // 4x oversampled waveform by zero padding at the middle of the spectrum
        let mut padded = vec![Complex64::new(0.0, 0.0); 64];
        padded[..8].copy_from_slice(&spectrum[..8]);
        padded[56..].copy_from_slice(&spectrum[8..]);
        let over: Vec<Complex64> = naive_idft(&padded).iter().map(|v| v * 2.0).collect();
        let peak = over.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let mean = over.iter().map(|v| v.norm_sqr()).sum::<f64>() / 64.0;
        let expected = 10.0 * (peak / mean).log10();
        assert!((papr_db(&ofdm.oversample(&spectrum).samples).unwrap() - expected).abs() < 1e-9);
    }
}
