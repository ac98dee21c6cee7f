//! Rapp solid-state amplifier and block-fading Rayleigh channel.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RappParams {
    /// Knee (smoothness) factor p.
    pub knee: f64,
    /// Saturation power above `mean_power`, in dB.
    pub backoff_db: f64,
    /// Mean input power the backoff refers to.
    pub mean_power: f64,
}

impl RappParams {
    pub fn new(knee: f64, backoff_db: f64, mean_power: f64) -> Result<Self> {
        if !(knee > 0.0) || !(mean_power > 0.0) {
            return Err(Error::Config(format!(
                "Rapp model needs knee > 0 and mean power > 0 (got {knee}, {mean_power})"
            )));
        }
        Ok(Self {
            knee,
            backoff_db,
            mean_power,
        })
    }

    /// Saturation amplitude `A_sat = sqrt(mean_power · 10^(backoff/10))`.
    pub fn saturation_amplitude(&self) -> f64 {
        (self.mean_power * 10f64.powf(self.backoff_db / 10.0)).sqrt()
    }

    /// AM/AM gain `|y| / |x|` at input amplitude `r`.
    pub fn gain(&self, r: f64) -> f64 {
        let two_p = 2.0 * self.knee;
        let ratio = r / self.saturation_amplitude();
        // ratio^(2p) overflows long before the gain stops being 1/ratio
        if ratio > 1e12 {
            return 1.0 / ratio;
        }
        (1.0 + ratio.powf(two_p)).powf(-1.0 / two_p)
    }
}

/// Memoryless AM/AM distortion; the phase of every sample is kept.
pub fn rapp_amplify(x: &[Complex64], params: &RappParams) -> Vec<Complex64> {
    x.iter().map(|&s| s * params.gain(s.norm())).collect()
}

/// One block-fading channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    /// Unnormalized N-point DFT of the zero-padded taps (the diagonal of H).
    pub freq_response: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<Complex64>, n: usize) -> Self {
        let freq_response = (0..n)
            .map(|k| {
                taps.iter()
                    .enumerate()
                    .map(|(l, h)| {
                        let idx = (k * l) % n;
                        h * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * idx as f64 / n as f64)
                    })
                    .sum()
            })
            .collect();
        Self {
            taps,
            freq_response,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_taps(vec![Complex64::new(1.0, 0.0)], n)
    }
}

/// Normalized exponential power-delay profile `p_l ∝ exp(−decay·l)`.
pub fn power_delay_profile(l_c: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..l_c).map(|l| (-decay * l as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Draws Rayleigh taps with an exponential profile and unit expected energy.
pub fn sample_channel<R: Rng + ?Sized>(l_c: usize, decay: f64, n: usize, rng: &mut R) -> Result<ChannelRealization> {
    if l_c == 0 || l_c > n {
        return Err(Error::Dimension(format!("channel length {l_c} must lie in [1, {n}]")));
    }
    let taps = power_delay_profile(l_c, decay)
        .into_iter()
        .map(|p| complex_gaussian(rng, p))
        .collect();
    Ok(ChannelRealization::from_taps(taps, n))
}

/// Circular convolution with the channel plus white Gaussian noise.
///
/// A unique word of length `n_uw >= L_c − 1` in front of every block turns
/// the linear channel into a circular one over the DFT window, so the
/// received block only depends on the current block.
pub fn apply_channel_and_noise<R: Rng + ?Sized>(
    x: &[Complex64],
    n_uw: usize,
    ch: &ChannelRealization,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if ch.taps.len().saturating_sub(1) > n_uw {
        return Err(Error::GuardViolation {
            taps: ch.taps.len(),
            n_uw,
        });
    }
    let n = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (k, out) in y.iter_mut().enumerate() {
        for (l, h) in ch.taps.iter().enumerate() {
            *out += h * x[(k + n - l % n) % n];
        }
    }
    if noise_var > 0.0 {
        y.iter_mut().for_each(|v| *v += complex_gaussian(rng, noise_var));
    }
    Ok(y)
}
