//! PAPR metric and candidate-selection schemes (SLM, PTS and their PRP
//! combinations).
//!
//! Rotations never touch individual subcarriers of `B G d`: per-subcarrier
//! phases would leave the null space of `Q`. SLM rotates the data symbols
//! before `G`; PTS rotates partial sequences that each come from a
//! contiguous block of data symbols, which amounts to a block-constant data
//! rotation. Either way the transmitted block is `B G (r ⊙ d)` for a known
//! unit-modulus vector `r`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::config::{PaprWindow, Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::linops::StructuralMatrices;
use crate::precoder::GeneratorMatrix;
use crate::txchain::{precode_and_map, Ofdm, TimeDomainSymbol};

const MAX_PTS_CANDIDATES: u128 = 1_000_000;

/// Peak-to-average power ratio of `samples` in dB.
pub fn papr_db(samples: &[Complex64]) -> Result<f64> {
    let mut peak: f64 = 0.0;
    let mut total = 0.0;
    for s in samples {
        let p = s.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    if samples.is_empty() || total == 0.0 {
        return Err(Error::DegenerateInput("PAPR of an all-zero waveform".into()));
    }
    Ok(10.0 * (peak * samples.len() as f64 / total).log10())
}

/// PAPR of a symbol over the configured window.
pub fn symbol_papr_db(x: &TimeDomainSymbol, window: PaprWindow) -> Result<f64> {
    match window {
        PaprWindow::Full => papr_db(&x.samples),
        PaprWindow::DataOnly => papr_db(x.data_part()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SideInfo {
    None,
    /// Index of the selected SLM candidate (0 is the unrotated one).
    Slm { index: usize },
    /// Phase factor applied to each PTS sub-block.
    Pts { phases: Vec<Complex64> },
}

/// The block chosen for transmission.
#[derive(Debug, Clone)]
pub struct TransmitCandidate {
    /// Oversampled waveform the PAPR was measured on (unique word included).
    pub waveform: TimeDomainSymbol,
    pub papr_db: f64,
    pub side_info: SideInfo,
    /// Per-symbol unit-modulus rotation `r`; the block carries `G (r ⊙ d)`.
    pub rotation: Vec<Complex64>,
    /// Frequency-domain block `B G (r ⊙ d)` without the unique word.
    pub spectrum: Vec<Complex64>,
}

/// Everything the transmitter needs that does not change per symbol.
#[derive(Debug, Clone)]
pub struct TxContext {
    pub cfg: SystemConfig,
    pub sm: StructuralMatrices,
    pub ofdm: Ofdm,
    /// Oversampled unique-word waveform, `None` for the all-zero word.
    uw_oversampled: Option<Vec<Complex64>>,
}

impl TxContext {
    pub fn new(cfg: &SystemConfig, sm: StructuralMatrices) -> Result<Self> {
        let ofdm = Ofdm::new(cfg.n_total, cfg.n_uw, cfg.oversampling)?;
        let uw_oversampled = if cfg.uw_samples.iter().all(|u| u.norm() == 0.0) {
            None
        } else {
            let mut block = vec![Complex64::new(0.0, 0.0); cfg.n_total];
            block[cfg.n_total - cfg.n_uw..].copy_from_slice(&cfg.uw_samples);
            Some(ofdm.oversample(&ofdm.to_frequency_domain(&block)).samples)
        };
        Ok(Self {
            cfg: cfg.clone(),
            sm,
            ofdm,
            uw_oversampled,
        })
    }

    fn window_len(&self) -> usize {
        let l = self.cfg.oversampling;
        match self.cfg.papr_window {
            PaprWindow::Full => l * self.cfg.n_total,
            PaprWindow::DataOnly => l * (self.cfg.n_total - self.cfg.n_uw),
        }
    }

    /// Oversampled transmit waveform for a frequency-domain data block.
    pub fn waveform(&self, spectrum: &[Complex64]) -> TimeDomainSymbol {
        let mut w = self.ofdm.oversample(spectrum);
        if let Some(uw) = &self.uw_oversampled {
            w.samples.iter_mut().zip(uw).for_each(|(s, u)| *s += *u);
        }
        w
    }

    pub fn papr(&self, w: &TimeDomainSymbol) -> Result<f64> {
        symbol_papr_db(w, self.cfg.papr_window)
    }

    fn candidate(
        &self,
        d: &DVector<Complex64>,
        g: &GeneratorMatrix,
        rotation: Vec<Complex64>,
        side_info: SideInfo,
    ) -> Result<TransmitCandidate> {
        let rotated = DVector::from_iterator(d.len(), d.iter().zip(&rotation).map(|(a, r)| a * r));
        let spectrum = precode_and_map(&rotated, g, &self.sm);
        let waveform = self.waveform(&spectrum);
        Ok(TransmitCandidate {
            papr_db: self.papr(&waveform)?,
            waveform,
            side_info,
            rotation,
            spectrum,
        })
    }
}

/// Plain transmission without any candidate search.
pub fn direct(d: &DVector<Complex64>, g: &GeneratorMatrix, ctx: &TxContext) -> Result<TransmitCandidate> {
    ctx.candidate(d, g, vec![Complex64::new(1.0, 0.0); d.len()], SideInfo::None)
}

/// Selective mapping over `u` candidates. Candidate 0 is the unrotated
/// block; the others rotate each data symbol by an entry of `phase_set`
/// drawn from `rng`.
pub fn slm_select<R: Rng + ?Sized>(
    d: &DVector<Complex64>,
    g: &GeneratorMatrix,
    u: usize,
    phase_set: &[Complex64],
    rng: &mut R,
    ctx: &TxContext,
) -> Result<TransmitCandidate> {
    if u == 0 || phase_set.is_empty() {
        return Err(Error::Dimension("SLM needs at least one candidate and one phase".into()));
    }
    let mut best = direct(d, g, ctx)?;
    for index in 1..u {
        let rotation: Vec<_> = (0..d.len())
            .map(|_| phase_set[rng.random_range(0..phase_set.len())])
            .collect();
        let cand = ctx.candidate(d, g, rotation, SideInfo::Slm { index })?;
        if cand.papr_db < best.papr_db {
            best = cand;
        }
    }
    if best.side_info == SideInfo::None {
        best.side_info = SideInfo::Slm { index: 0 };
    }
    Ok(best)
}

/// Index ranges of `v` contiguous sub-blocks over `n_d` symbols; the last
/// block absorbs the remainder when `v` does not divide `n_d`.
pub fn pts_ranges(n_d: usize, v: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if v == 0 || v > n_d {
        return Err(Error::Dimension(format!(
            "cannot split {n_d} data symbols into {v} sub-blocks"
        )));
    }
    let size = n_d / v;
    Ok((0..v)
        .map(|i| {
            let end = if i + 1 == v { n_d } else { (i + 1) * size };
            i * size..end
        })
        .collect())
}

/// Splits `d` into `v` sparse vectors that sum to `d`.
pub fn pts_partition(d: &DVector<Complex64>, v: usize) -> Result<Vec<DVector<Complex64>>> {
    Ok(pts_ranges(d.len(), v)?
        .into_iter()
        .map(|r| {
            let mut part = DVector::zeros(d.len());
            part.rows_mut(r.start, r.len()).copy_from(&d.rows(r.start, r.len()));
            part
        })
        .collect())
}

/// Partial transmit sequences: exhaustive search over all `W^V` phase
/// combinations of the sub-block waveforms.
pub fn pts_select(
    d: &DVector<Complex64>,
    g: &GeneratorMatrix,
    v: usize,
    phase_set: &[Complex64],
    ctx: &TxContext,
) -> Result<TransmitCandidate> {
    let w = phase_set.len();
    if w == 0 {
        return Err(Error::Dimension("PTS needs a non-empty phase set".into()));
    }
    let space = (w as u128).checked_pow(v as u32).unwrap_or(u128::MAX);
    if space > MAX_PTS_CANDIDATES {
        return Err(Error::SearchSpace(space));
    }
    let ranges = pts_ranges(d.len(), v)?;
    let win = ctx.window_len();
    // the waveform is linear in d, so each sub-block is transformed once
    let partials: Vec<Vec<Complex64>> = pts_partition(d, v)?
        .iter()
        .map(|part| {
            let mut s = ctx.ofdm.oversample(&precode_and_map(part, g, &ctx.sm)).samples;
            s.truncate(win);
            s
        })
        .collect();
    let uw: Option<&[Complex64]> = ctx.uw_oversampled.as_deref().map(|u| &u[..win]);

    let mut digits = vec![0usize; v];
    let mut buf = vec![Complex64::new(0.0, 0.0); win];
    let mut best_ratio = f64::INFINITY;
    let mut best_digits = digits.clone();
    for _ in 0..space {
        match uw {
            Some(u) => buf.copy_from_slice(u),
            None => buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0)),
        }
        for (part, &digit) in partials.iter().zip(&digits) {
            let ph = phase_set[digit];
            buf.iter_mut().zip(part).for_each(|(b, p)| *b += ph * p);
        }
        let (mut peak, mut total) = (0.0f64, 0.0);
        for s in &buf {
            let p = s.norm_sqr();
            peak = peak.max(p);
            total += p;
        }
        let ratio = peak / total;
        if ratio < best_ratio {
            best_ratio = ratio;
            best_digits.copy_from_slice(&digits);
        }
        // mixed-radix increment, last sub-block fastest
        for digit in digits.iter_mut().rev() {
            *digit += 1;
            if *digit < w {
                break;
            }
            *digit = 0;
        }
    }
    if !best_ratio.is_finite() {
        return Err(Error::DegenerateInput("PAPR of an all-zero waveform".into()));
    }

    let phases: Vec<Complex64> = best_digits.iter().map(|&i| phase_set[i]).collect();
    let mut rotation = vec![Complex64::new(0.0, 0.0); d.len()];
    for (r, ph) in ranges.iter().zip(&phases) {
        rotation[r.clone()].iter_mut().for_each(|x| *x = *ph);
    }
    ctx.candidate(d, g, rotation, SideInfo::Pts { phases })
}

/// Generators shared by all symbols of a run, computed once per config.
#[derive(Debug, Clone)]
pub struct Generators {
    pub baseline: GeneratorMatrix,
    pub prp: GeneratorMatrix,
}

impl Generators {
    pub fn for_scheme(&self, scheme: Scheme) -> &GeneratorMatrix {
        if scheme.uses_prp() {
            &self.prp
        } else {
            &self.baseline
        }
    }
}

/// Runs `scheme` on one data block.
pub fn reduce<R: Rng + ?Sized>(
    d: &DVector<Complex64>,
    scheme: Scheme,
    generators: &Generators,
    ctx: &TxContext,
    rng: &mut R,
) -> Result<TransmitCandidate> {
    let g = generators.for_scheme(scheme);
    let cfg = &ctx.cfg;
    match scheme {
        Scheme::None | Scheme::Prp => direct(d, g, ctx),
        Scheme::Slm | Scheme::PrpSlm => slm_select(d, g, cfg.slm_candidates, &cfg.phase_set, rng, ctx),
        Scheme::Pts | Scheme::PrpPts => pts_select(d, g, cfg.pts_subblocks, &cfg.phase_set, ctx),
    }
}
