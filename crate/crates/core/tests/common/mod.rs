#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use uwofdm::config::{centered_guard_indices, default_80211_config, ChannelConfig, SystemConfig};
use uwofdm::linops::CMatrix;

pub fn small_config(n: usize, n_u: usize, n_r: usize, n_z: usize) -> SystemConfig {
    SystemConfig {
        n_total: n,
        n_uw: n_u,
        n_red: n_r,
        n_zero: n_z,
        zero_subcarrier_indices: centered_guard_indices(n, n_z),
        uw_samples: vec![Complex64::new(0.0, 0.0); n_u],
        channel: ChannelConfig {
            n_taps: n_u.max(1),
            ..Default::default()
        },
        ..default_80211_config()
    }
}

/// Inverse DFT by direct summation, `x_t = Σ_k X_k e^{j2πkt/n} / √n`.
pub fn naive_idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len();
    (0..n)
        .map(|t| {
            spectrum
                .iter()
                .enumerate()
                .map(|(k, x)| x * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64))
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect()
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Matrix with orthonormal columns by modified Gram-Schmidt.
pub fn gram_schmidt(mut m: CMatrix) -> CMatrix {
    for j in 0..m.ncols() {
        for i in 0..j {
            let proj = m.column(i).dotc(&m.column(j));
            let qi = m.column(i).into_owned();
            let mut cj = m.column_mut(j);
            cj -= qi * proj;
        }
        let norm = m.column(j).norm();
        m.column_mut(j).unscale_mut(norm);
    }
    m
}

/// Haar-distributed unitary via Gram-Schmidt of a Gaussian matrix (the
/// column-wise normalization already fixes the phase ambiguity).
pub fn haar<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    gram_schmidt(gaussian_matrix(n, n, rng))
}

pub fn frob_sq(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum()
}
