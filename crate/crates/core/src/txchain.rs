//! Transmit chain: bits → symbols → `B G d` → time domain → unique word.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::config::Constellation;
use crate::error::{Error, Result};
use crate::linops::StructuralMatrices;
use crate::precoder::GeneratorMatrix;

const QAM16_SCALE: f64 = 0.316_227_766_016_837_94; // 1/sqrt(10)

/// One vector `d` of data symbols together with the bits it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub bits: Vec<u8>,
    pub symbols: DVector<Complex64>,
}

/// A time-domain block, critically sampled (`oversampling == 1`) or not.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainSymbol {
    pub samples: Vec<Complex64>,
    pub uw_len: usize,
    pub oversampling: usize,
}

impl TimeDomainSymbol {
    pub fn is_oversampled(&self) -> bool {
        self.oversampling > 1
    }

    /// Samples that make up the data part `x_d`.
    pub fn data_part(&self) -> &[Complex64] {
        let end = self.samples.len() - self.uw_len * self.oversampling;
        &self.samples[..end]
    }

    /// Samples in the unique-word interval.
    pub fn tail(&self) -> &[Complex64] {
        let start = self.samples.len() - self.uw_len * self.oversampling;
        &self.samples[start..]
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

fn qam16_level(sign_bit: u8, inner_bit: u8) -> f64 {
    let sign = if sign_bit == 0 { 1.0 } else { -1.0 };
    let mag = if inner_bit == 0 { 3.0 } else { 1.0 };
    sign * mag
}

/// Gray-maps `bits` onto `n_d` unit-energy symbols.
pub fn map_bits(bits: &[u8], constellation: Constellation, n_d: usize) -> Result<DataBlock> {
    let bps = constellation.bits_per_symbol();
    if bits.len() != n_d * bps {
        return Err(Error::Dimension(format!(
            "{} bits cannot fill {n_d} symbols of {bps} bits",
            bits.len()
        )));
    }
    let symbols = DVector::from_iterator(
        n_d,
        bits.chunks_exact(bps).map(|b| match constellation {
            Constellation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(
                    if b[0] == 0 { s } else { -s },
                    if b[1] == 0 { s } else { -s },
                )
            }
            Constellation::Qam16 => Complex64::new(
                qam16_level(b[0], b[1]) * QAM16_SCALE,
                qam16_level(b[2], b[3]) * QAM16_SCALE,
            ),
        }),
    );
    Ok(DataBlock {
        bits: bits.to_vec(),
        symbols,
    })
}

/// Hard minimum-distance decision, inverse of [`map_bits`].
pub fn demap_symbol(sym: Complex64, constellation: Constellation, out: &mut Vec<u8>) {
    match constellation {
        Constellation::Qpsk => {
            out.push((sym.re < 0.0) as u8);
            out.push((sym.im < 0.0) as u8);
        }
        Constellation::Qam16 => {
            for v in [sym.re / QAM16_SCALE, sym.im / QAM16_SCALE] {
                out.push((v < 0.0) as u8);
                out.push((v.abs() < 2.0) as u8);
            }
        }
    }
}

pub fn random_block<R: Rng + ?Sized>(rng: &mut R, constellation: Constellation, n_d: usize) -> DataBlock {
    let bits: Vec<u8> = (0..n_d * constellation.bits_per_symbol())
        .map(|_| rng.random_range(0..2u8))
        .collect();
    map_bits(&bits, constellation, n_d).expect("bit count matches by construction")
}

/// Frequency-domain vector `x̃ = B G d` (length N).
pub fn precode_and_map(
    d: &DVector<Complex64>,
    g: &GeneratorMatrix,
    sm: &StructuralMatrices,
) -> Vec<Complex64> {
    let mapped = &g.g * d;
    let mut x = vec![Complex64::new(0.0, 0.0); sm.n_total()];
    for (&k, v) in sm.active.iter().zip(mapped.iter()) {
        x[k] = *v;
    }
    x
}

/// Cached FFT plans for one DFT size and oversampling factor.
///
/// All transforms use unitary scaling, so the inverse transform is
/// `F_N^H` and energy is preserved.
#[derive(Clone)]
pub struct Ofdm {
    n: usize,
    n_uw: usize,
    oversampling: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    inv_over: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Ofdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ofdm")
            .field("n", &self.n)
            .field("n_uw", &self.n_uw)
            .field("oversampling", &self.oversampling)
            .finish()
    }
}

impl Ofdm {
    pub fn new(n: usize, n_uw: usize, oversampling: usize) -> Result<Self> {
        if n == 0 || oversampling == 0 || n_uw >= n {
            return Err(Error::Dimension(format!(
                "invalid OFDM sizes N = {n}, N_u = {n_uw}, L = {oversampling}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            n_uw,
            oversampling,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            inv_over: planner.plan_fft_inverse(n * oversampling),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    /// `x' = F_N^H x̃`.
    pub fn to_time_domain(&self, spectrum: &[Complex64]) -> TimeDomainSymbol {
        assert_eq!(spectrum.len(), self.n, "spectrum length must equal N");
        let mut buf = spectrum.to_vec();
        self.inv.process(&mut buf);
        let scale = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        TimeDomainSymbol {
            samples: buf,
            uw_len: self.n_uw,
            oversampling: 1,
        }
    }

    /// `F_N y` with unitary scaling.
    pub fn to_frequency_domain(&self, samples: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n, "block length must equal N");
        let mut buf = samples.to_vec();
        self.fwd.process(&mut buf);
        let scale = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Band-limited interpolation by `L`: zeros are inserted at the spectral
    /// midpoint and a length-`LN` IDFT is taken, scaled by √L so that every
    /// L-th sample coincides with the critically sampled block.
    pub fn oversample(&self, spectrum: &[Complex64]) -> TimeDomainSymbol {
        assert_eq!(spectrum.len(), self.n, "spectrum length must equal N");
        let l = self.oversampling;
        let len = self.n * l;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        // indices below ceil(N/2) are non-negative frequencies
        let split = self.n.div_ceil(2);
        buf[..split].copy_from_slice(&spectrum[..split]);
        buf[len - (self.n - split)..].copy_from_slice(&spectrum[split..]);
        self.inv_over.process(&mut buf);
        let scale = (l as f64).sqrt() / (len as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        TimeDomainSymbol {
            samples: buf,
            uw_len: self.n_uw,
            oversampling: l,
        }
    }
}

/// `x' = F_N^H x̃`.
pub fn to_time_domain(spectrum: &[Complex64], n_uw: usize) -> Result<TimeDomainSymbol> {
    Ok(Ofdm::new(spectrum.len(), n_uw, 1)?.to_time_domain(spectrum))
}

/// Oversampled waveform of `spectrum` by factor `l`.
pub fn oversample(spectrum: &[Complex64], l: usize, n_uw: usize) -> Result<TimeDomainSymbol> {
    Ok(Ofdm::new(spectrum.len(), n_uw, l)?.oversample(spectrum))
}

/// Adds the unique word onto the zero tail of a critically sampled block.
pub fn insert_uw(x: &TimeDomainSymbol, uw: &[Complex64]) -> Result<TimeDomainSymbol> {
    if x.is_oversampled() || uw.len() != x.uw_len {
        return Err(Error::Dimension(format!(
            "unique word of length {} does not fit a block with a tail of {} (oversampling {})",
            uw.len(),
            x.uw_len,
            x.oversampling
        )));
    }
    let scale = x.energy().sqrt().max(1.0);
    let worst = x.tail().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if worst > 1e-9 * scale {
        return Err(Error::ZeroTail(worst));
    }
    let mut out = x.clone();
    let start = out.samples.len() - uw.len();
    for (dst, u) in out.samples[start..].iter_mut().zip(uw) {
        *dst += *u;
    }
    Ok(out)
}
