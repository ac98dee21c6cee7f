//! Frequency-domain receiver with BLUE data detection.
//!
//! After the DFT and down-selection to the modulated subcarriers the
//! received block is `ỹ = H_dr G d + n` with white noise `n`. The BLUE
//! estimate is `(Φ^H Φ)^{-1} Φ^H ỹ` with `Φ = H_dr G`; the channel is assumed
//! known.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::config::Constellation;
use crate::error::{Error, Result};
use crate::impairments::ChannelRealization;
use crate::linops::CMatrix;
use crate::precoder::GeneratorMatrix;
use crate::txchain::{demap_symbol, Ofdm};

const MAX_CONDITION: f64 = 1e12;
const RIDGE: f64 = 1e-12;

/// Channel on the modulated subcarriers together with the generator.
#[derive(Debug, Clone)]
pub struct DetectionContext<'a> {
    /// Diagonal of `B^H H B`.
    pub h_dr: Vec<Complex64>,
    pub g: &'a GeneratorMatrix,
    pub noise_var: f64,
}

impl<'a> DetectionContext<'a> {
    pub fn new(ch: &ChannelRealization, active: &[usize], g: &'a GeneratorMatrix, noise_var: f64) -> Self {
        Self {
            h_dr: active.iter().map(|&k| ch.freq_response[k]).collect(),
            g,
            noise_var,
        }
    }

    /// `Φ = diag(h_dr) G`.
    pub fn effective_matrix(&self) -> CMatrix {
        let mut phi = self.g.g.clone();
        for (mut row, h) in phi.row_iter_mut().zip(&self.h_dr) {
            row *= *h;
        }
        phi
    }

    /// Eigenvalues of `G^H B^H H^H H B G`, ascending.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let phi = self.effective_matrix();
        let gram = phi.adjoint() * &phi;
        let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Ratio of the largest to the smallest eigenvalue of the Gram matrix.
    pub fn eigen_spread(&self) -> f64 {
        let ev = self.gram_eigenvalues();
        ev[ev.len() - 1] / ev[0]
    }
}

/// DFT, down-selection to the modulated subcarriers and removal of the
/// known unique-word contribution.
pub fn fd_receive(
    y_td: &[Complex64],
    uw: &[Complex64],
    ch: &ChannelRealization,
    ofdm: &Ofdm,
    active: &[usize],
) -> Vec<Complex64> {
    let y = ofdm.to_frequency_domain(y_td);
    let mut out: Vec<Complex64> = active.iter().map(|&k| y[k]).collect();
    if uw.iter().any(|u| u.norm() > 0.0) {
        let n = ofdm.n();
        let mut block = vec![Complex64::new(0.0, 0.0); n];
        block[n - uw.len()..].copy_from_slice(uw);
        let uf = ofdm.to_frequency_domain(&block);
        for (o, &k) in out.iter_mut().zip(active) {
            *o -= ch.freq_response[k] * uf[k];
        }
    }
    out
}

/// Factored BLUE detector for one channel realization. The factorization
/// does not depend on the noise level and is reused across SNR points.
#[derive(Debug, Clone)]
pub struct BlueDetector {
    phi_h: CMatrix,
    chol: nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>,
    /// Estimated condition number of `Φ^H Φ`.
    pub condition: f64,
    /// Set when the normal matrix had to be regularized.
    pub regularized: bool,
}

impl BlueDetector {
    pub fn new(ctx: &DetectionContext<'_>) -> Result<Self> {
        let phi = ctx.effective_matrix();
        let phi_h = phi.adjoint();
        let normal = &phi_h * &phi;
        let n = normal.nrows();
        let condition = hermitian_condition(&normal);
        let cholesky = if condition > MAX_CONDITION {
            None
        } else {
            normal.clone().cholesky()
        };
        let (chol, regularized) = match cholesky {
            Some(chol) => (chol, false),
            None => (ridge(normal, n)?, true),
        };
        if regularized {
            log::debug!("BLUE normal matrix ill-conditioned ({condition:.3e}); ridge applied");
        }
        Ok(Self {
            phi_h,
            chol,
            condition,
            regularized,
        })
    }

    pub fn detect(&self, y: &[Complex64]) -> DVector<Complex64> {
        let rhs = &self.phi_h * DVector::from_column_slice(y);
        self.chol.solve(&rhs)
    }
}

fn ridge(
    mut normal: CMatrix,
    n: usize,
) -> Result<nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>> {
    let scale = (0..n).map(|i| normal[(i, i)].re).sum::<f64>() / n.max(1) as f64;
    let eps = RIDGE * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        normal[(i, i)] += Complex64::new(eps, 0.0);
    }
    normal.cholesky().ok_or(Error::Singular(f64::INFINITY))
}

/// Spectral condition number of a Hermitian positive semidefinite matrix.
fn hermitian_condition(m: &CMatrix) -> f64 {
    let ev = m.symmetric_eigenvalues();
    let max = ev.iter().copied().fold(0.0, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// One-shot BLUE estimate `d̂ = (Φ^H Φ)^{-1} Φ^H ỹ`.
pub fn blue_detect(y: &[Complex64], ctx: &DetectionContext<'_>) -> Result<DVector<Complex64>> {
    if y.len() != ctx.h_dr.len() {
        return Err(Error::Dimension(format!(
            "received block has {} entries, channel has {}",
            y.len(),
            ctx.h_dr.len()
        )));
    }
    Ok(BlueDetector::new(ctx)?.detect(y))
}

/// Removes a known data-domain rotation from an estimate.
pub fn derotate(estimate: &mut DVector<Complex64>, rotation: &[Complex64]) {
    estimate.iter_mut().zip(rotation).for_each(|(e, r)| *e *= r.conj());
}

/// Hard-decides `estimate` and counts bit errors against `reference_bits`.
pub fn demap_and_count(
    estimate: &[Complex64],
    reference_bits: &[u8],
    constellation: Constellation,
) -> (u64, u64) {
    let mut bits = Vec::with_capacity(reference_bits.len());
    for &s in estimate {
        demap_symbol(s, constellation, &mut bits);
    }
    let errors = bits.iter().zip(reference_bits).filter(|(a, b)| a != b).count();
    (errors as u64, reference_bits.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_80211_config;
    use crate::impairments::{apply_channel_and_noise, sample_channel};
    use crate::linops::StructuralMatrices;
    use crate::precoder::design_prp_generator;
    use crate::txchain::{insert_uw, map_bits, precode_and_map, random_block};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        sm: StructuralMatrices,
        g: GeneratorMatrix,
        ofdm: Ofdm,
    }

    fn fixture() -> Fixture {
        let cfg = default_80211_config();
        let sm = StructuralMatrices::build(&cfg).unwrap();
        let g = design_prp_generator(&sm, &cfg).unwrap();
        Fixture {
            sm,
            g,
            ofdm: Ofdm::new(64, 16, 1).unwrap(),
        }
    }

    #[test]
    fn identity_channel_recovers_gd_and_d() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_block(&mut rng, Constellation::Qpsk, 36);
        let tx = f.ofdm.to_time_domain(&precode_and_map(&d.symbols, &f.g, &f.sm));
        let ch = ChannelRealization::identity(64);
        let y = fd_receive(&tx.samples, &[Complex64::new(0.0, 0.0); 16], &ch, &f.ofdm, &f.sm.active);
        let gd = &f.g.g * &d.symbols;
        for (a, b) in y.iter().zip(gd.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
        let ctx = DetectionContext::new(&ch, &f.sm.active, &f.g, 0.0);
        let est = blue_detect(&y, &ctx).unwrap();
        assert!((est - &d.symbols).norm() < 1e-9);
    }

    #[test]
    fn faded_channel_noise_free_is_exact() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let d = random_block(&mut rng, Constellation::Qpsk, 36);
            let tx = f.ofdm.to_time_domain(&precode_and_map(&d.symbols, &f.g, &f.sm));
            let ch = sample_channel(16, 0.1, 64, &mut rng).unwrap();
            let rx = apply_channel_and_noise(&tx.samples, 16, &ch, 0.0, &mut rng).unwrap();
            let y = fd_receive(&rx, &[Complex64::new(0.0, 0.0); 16], &ch, &f.ofdm, &f.sm.active);
            let est = blue_detect(&y, &DetectionContext::new(&ch, &f.sm.active, &f.g, 0.0)).unwrap();
            assert!((est - &d.symbols).norm() < 1e-8);
        }
    }

    #[test]
    fn nonzero_uw_is_cancelled() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_block(&mut rng, Constellation::Qpsk, 36);
        let tx = f.ofdm.to_time_domain(&precode_and_map(&d.symbols, &f.g, &f.sm));
        let uw: Vec<_> = (0..16).map(|k| Complex64::from_polar(0.5, k as f64)).collect();
        let with_uw = insert_uw(&tx, &uw).unwrap();
        let ch = sample_channel(16, 0.1, 64, &mut rng).unwrap();
        let zero_uw = [Complex64::new(0.0, 0.0); 16];
        let rx0 = apply_channel_and_noise(&tx.samples, 16, &ch, 0.0, &mut rng).unwrap();
        let rx1 = apply_channel_and_noise(&with_uw.samples, 16, &ch, 0.0, &mut rng).unwrap();
        let y0 = fd_receive(&rx0, &zero_uw, &ch, &f.ofdm, &f.sm.active);
        let y1 = fd_receive(&rx1, &uw, &ch, &f.ofdm, &f.sm.active);
        for (a, b) in y0.iter().zip(&y1) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn demap_counts() {
        let bits = [0u8, 1, 1, 0, 0, 0];
        let d = map_bits(&bits, Constellation::Qpsk, 3).unwrap();
        let s: Vec<_> = d.symbols.iter().copied().collect();
        assert_eq!(demap_and_count(&s, &bits, Constellation::Qpsk), (0, 6));
        let neg: Vec<_> = s.iter().map(|v| -v).collect();
        assert_eq!(demap_and_count(&neg, &bits, Constellation::Qpsk), (6, 6));
        let mut pushed = s.clone();
        pushed[1] = Complex64::new(0.1, pushed[1].im);
        assert_eq!(demap_and_count(&pushed, &bits, Constellation::Qpsk), (1, 6));
    }

    #[test]
    fn derotation_inverts_rotation() {
        let mut est = DVector::from_vec(vec![Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)]);
        derotate(&mut est, &[Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)]);
        assert_eq!(est[0], Complex64::new(1.0, 0.0));
        assert_eq!(est[1], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn eigenvalues_identity_channel() {
        let f = fixture();
        let ctx = DetectionContext::new(&ChannelRealization::identity(64), &f.sm.active, &f.g, 0.0);
        let ev = ctx.gram_eigenvalues();
        assert!(ev.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!((ctx.eigen_spread() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deep_fade_is_regularized() {
        let f = fixture();
        let mut ch = ChannelRealization::identity(64);
        for k in 1..27 {
            ch.freq_response[k] = Complex64::new(0.0, 0.0);
        }
        let ctx = DetectionContext::new(&ch, &f.sm.active, &f.g, 0.0);
        let det = BlueDetector::new(&ctx).unwrap();
        assert!(det.regularized);
        let est = det.detect(&vec![Complex64::new(1.0, 0.0); 52]);
        assert!(est.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }
}
