//! Experiment orchestration: deterministic seeding, parallel Monte Carlo
//! over symbols and CSV emission.
//!
//! Every random draw of symbol `i` comes from its own ChaCha stream keyed by
//! the master seed and a purpose tag, so results never depend on how symbols
//! are distributed over worker threads. Accumulators are merged in symbol
//! order after each parallel chunk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::impairments::{
    apply_channel_and_noise, complex_gaussian, rapp_amplify, sample_channel, ChannelRealization,
    RappParams,
};
use crate::linops::{CMatrix, StructuralMatrices};
use crate::metrics::{
    default_thresholds, oobr_db, CcdfAccumulator, CurveKind, CurveResult, WelchAccumulator, Window,
};
use crate::precoder::{
    build_target_d, design_baseline_generator, design_prp_generator, solve_procrustes,
    GeneratorKind, GeneratorMatrix,
};
use crate::receiver::{demap_and_count, derotate, fd_receive, BlueDetector, DetectionContext};
use crate::reduction::{reduce, Generators, TransmitCandidate, TxContext};
use crate::txchain::{insert_uw, random_block, DataBlock};

/// Independent random streams per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Selection = 2,
    Channel = 3,
    Noise = 4,
    Design = 5,
    Diagnostic = 6,
}

/// Counter-based generator for draw `index` of `stream`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Symbols per parallel work unit. Fixed so that early stopping decisions
/// happen at the same symbol counts for any worker count.
pub const CHUNK: usize = 128;

/// Offsets from the band edge, in subcarrier spacings, at which OOBR is
/// summarized.
pub const OOBR_OFFSETS: [f64; 3] = [4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Design,
    Papr,
    Ber,
    Psd,
}

impl Experiment {
    pub fn default_symbols(self) -> usize {
        match self {
            Experiment::Design => 1,
            Experiment::Papr => 100_000,
            Experiment::Ber => 20_000,
            Experiment::Psd => 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpaMode {
    Off,
    On,
    Both,
}

impl HpaMode {
    pub fn variants(self) -> &'static [bool] {
        match self {
            HpaMode::Off => &[false],
            HpaMode::On => &[true],
            HpaMode::Both => &[false, true],
        }
    }
}

impl FromStr for HpaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(HpaMode::Off),
            "on" => Ok(HpaMode::On),
            "both" => Ok(HpaMode::Both),
            _ => Err(Error::Config(format!("hpa mode must be on, off or both, got {s:?}"))),
        }
    }
}

/// Parameter sweep over configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sweep {
    /// Number of redundant subcarriers, with the modulated set held fixed.
    Redundancy(Vec<usize>),
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep must look like nr=16,20, got {s:?}")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("bad sweep value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match name.trim() {
            "nr" => Ok(Sweep::Redundancy(values)),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// Parses `a:b:step` into the inclusive grid `a, a+step, …, ≤ b`.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad SNR grid {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else {
        return Err(Error::Config(format!("SNR grid must be a:b:step, got {s:?}")));
    };
    if !(step > 0.0) || b < a {
        return Err(Error::Config(format!("SNR grid {s:?} is empty")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + step * i as f64).collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub config: SystemConfig,
    pub schemes: Vec<Scheme>,
    pub sweep: Option<Sweep>,
    pub n_symbols: usize,
    pub output_dir: PathBuf,
    pub snr_db: Vec<f64>,
    pub hpa: HpaMode,
    pub workers: usize,
    /// Stop an SNR point once this many bit errors are counted; 0 disables.
    pub min_errors: u64,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, config: SystemConfig) -> Self {
        Self {
            experiment,
            schemes: vec![config.scheme],
            config,
            sweep: None,
            n_symbols: experiment.default_symbols(),
            output_dir: PathBuf::from("out"),
            snr_db: (0..=10).map(|i| 3.0 * i as f64).collect(),
            hpa: HpaMode::Off,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            min_errors: 200,
        }
    }

    /// Configurations to run, each tagged with a variant label when swept.
    pub fn configs(&self) -> Result<Vec<(Option<String>, SystemConfig)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.config.clone().validate()?)]),
            Some(Sweep::Redundancy(values)) => values
                .iter()
                .map(|&nr| Ok((Some(format!("nr{nr}")), self.config.with_redundancy(nr).validate()?)))
                .collect(),
        }
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }

    fn check(&self, expected: Experiment) -> Result<()> {
        if self.experiment != expected {
            return Err(Error::Config(format!(
                "spec is for {:?}, not {expected:?}",
                self.experiment
            )));
        }
        if self.n_symbols == 0 {
            return Err(Error::Config("at least one symbol is required".into()));
        }
        Ok(())
    }
}

/// A validated configuration with its structural matrices and generators,
/// built once and shared by every symbol.
pub struct System {
    pub cfg: SystemConfig,
    pub ctx: TxContext,
    pub generators: Generators,
    pub hash: String,
}

impl System {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let cfg = cfg.clone().validate()?;
        let sm = StructuralMatrices::build(&cfg)?;
        let prp = design_prp_generator(&sm, &cfg)?;
        let baseline = design_baseline_generator(
            &sm,
            &cfg,
            GeneratorKind::BaselineIdentity,
            &mut stream_rng(cfg.seed, Stream::Design, 0),
        )?;
        Ok(Self {
            hash: cfg.hash_hex(),
            ctx: TxContext::new(&cfg, sm)?,
            generators: Generators { baseline, prp },
            cfg,
        })
    }

    pub fn haar_generator(&self) -> Result<GeneratorMatrix> {
        design_baseline_generator(
            &self.ctx.sm,
            &self.cfg,
            GeneratorKind::BaselineHaar,
            &mut stream_rng(self.cfg.seed, Stream::Design, 1),
        )
    }

    /// Data block and selected transmit candidate of symbol `index`.
    pub fn transmit(&self, scheme: Scheme, index: u64) -> Result<(DataBlock, TransmitCandidate)> {
        let seed = self.cfg.seed;
        let n_d = self.cfg.dims_unchecked().n_d;
        let block = random_block(&mut stream_rng(seed, Stream::Data, index), self.cfg.constellation, n_d);
        let mut sel = stream_rng(seed, Stream::Selection, index);
        let cand = reduce(&block.symbols, scheme, &self.generators, &self.ctx, &mut sel)?;
        Ok((block, cand))
    }

    pub fn channel(&self, index: u64) -> Result<ChannelRealization> {
        let ch = &self.cfg.channel;
        if ch.enabled {
            sample_channel(
                ch.n_taps,
                ch.decay,
                self.cfg.n_total,
                &mut stream_rng(self.cfg.seed, Stream::Channel, index),
            )
        } else {
            Ok(ChannelRealization::identity(self.cfg.n_total))
        }
    }

    /// Amplifier referenced to the mean power of the data part,
    /// `N_d / (N − N_u)` for a unit-energy constellation.
    pub fn hpa_params(&self) -> Result<RappParams> {
        let dims = self.cfg.dims_unchecked();
        RappParams::new(
            self.cfg.hpa.knee,
            self.cfg.hpa.backoff_db,
            dims.n_d as f64 / (dims.n - dims.n_u) as f64,
        )
    }

    /// Nominal transmit energy per block: data energy plus unique word.
    pub fn block_energy(&self) -> f64 {
        self.cfg.dims_unchecked().n_d as f64
            + self.cfg.uw_samples.iter().map(|u| u.norm_sqr()).sum::<f64>()
    }

    pub fn bits_per_block(&self) -> usize {
        self.cfg.dims_unchecked().n_d * self.cfg.constellation.bits_per_symbol()
    }

    /// Per-sample noise variance for `Eb/N0 = snr_db`, with
    /// `Eb = block energy / bits per block`.
    pub fn noise_var(&self, snr_db: f64) -> f64 {
        self.block_energy() / (self.bits_per_block() as f64 * 10f64.powf(snr_db / 10.0))
    }

    fn base_meta(&self, curve: CurveResult, scheme: Scheme) -> CurveResult {
        let dims = self.cfg.dims_unchecked();
        curve
            .with_meta("scheme", scheme.name())
            .with_meta("seed", self.cfg.seed)
            .with_meta("config_hash", &self.hash)
            .with_meta("n_r", dims.n_r)
            .with_meta("n_d", dims.n_d)
            .with_meta("baseline_generator", GeneratorKind::BaselineIdentity.name())
            .with_meta("pts_partition", "contiguous")
    }
}

/// Oversampled PAPR (dB) of `n_symbols` symbols under `scheme`.
pub fn papr_samples(
    sys: &System,
    scheme: Scheme,
    n_symbols: usize,
    pool: &rayon::ThreadPool,
) -> Result<Vec<f64>> {
    pool.install(|| {
        (0..n_symbols as u64)
            .into_par_iter()
            .map(|i| sys.transmit(scheme, i).map(|(_, c)| c.papr_db))
            .collect()
    })
}

pub fn run_papr_experiment(spec: &ExperimentSpec) -> Result<Vec<CurveResult>> {
    spec.check(Experiment::Papr)?;
    let pool = spec.pool()?;
    let mut curves = Vec::new();
    for (variant, cfg) in spec.configs()? {
        let sys = System::new(&cfg)?;
        for &scheme in &spec.schemes {
            let samples = papr_samples(&sys, scheme, spec.n_symbols, &pool)?;
            let mut acc = CcdfAccumulator::new(default_thresholds());
            samples.iter().for_each(|&s| acc.push(s));
            let mut curve = sys
                .base_meta(acc.finish()?, scheme)
                .with_meta("oversampling", cfg.oversampling)
                .with_meta("papr_window", format!("{:?}", cfg.papr_window).to_lowercase());
            if let Some(v) = &variant {
                curve = curve.with_meta("variant", v);
            }
            log::info!("papr {} {:?}: {} symbols", scheme, variant, spec.n_symbols);
            curves.push(curve);
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub errors: u64,
    pub bits: u64,
    pub symbols: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub scheme: Scheme,
    pub hpa: bool,
    pub points: Vec<BerPoint>,
    /// Symbols whose normal matrix needed regularization.
    pub regularized: u64,
}

impl BerCurve {
    pub fn ber(&self) -> Vec<f64> {
        self.points.iter().map(BerPoint::ber).collect()
    }

    /// Error floor: BER at the highest SNR exceeds half the BER 5 dB below
    /// it. `None` when the grid has no point 5 dB below the top.
    pub fn has_error_floor(&self) -> Option<bool> {
        let top = self.points.last()?;
        let below = self
            .points
            .iter()
            .find(|p| (p.snr_db - (top.snr_db - 5.0)).abs() < 1e-9)?;
        Some(top.ber() > 0.5 * below.ber())
    }
}

/// Per-symbol error counts, indexed `[variant][snr]`; `None` for points
/// that were already finished.
type SymbolErrors = Vec<Vec<Option<u64>>>;

fn ber_symbol(
    sys: &System,
    scheme: Scheme,
    index: u64,
    variants: &[bool],
    active: &[Vec<bool>],
    noise_vars: &[f64],
    hpa: &RappParams,
) -> Result<SymbolErrors> {
    let cfg = &sys.cfg;
    let (block, cand) = sys.transmit(scheme, index)?;
    let x = insert_uw(&sys.ctx.ofdm.to_time_domain(&cand.spectrum), &cfg.uw_samples)?;
    let ch = sys.channel(index)?;
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise, index);
    let noise: Vec<Complex64> = (0..cfg.n_total)
        .map(|_| complex_gaussian(&mut noise_rng, 1.0))
        .collect();
    let g = sys.generators.for_scheme(scheme);
    let det = BlueDetector::new(&DetectionContext::new(&ch, &sys.ctx.sm.active, g, 0.0))?;

    let mut out = Vec::with_capacity(variants.len());
    for (&amplified, mask) in variants.iter().zip(active) {
        let tx = if amplified {
            rapp_amplify(&x.samples, hpa)
        } else {
            x.samples.clone()
        };
        let clean = apply_channel_and_noise(&tx, cfg.n_uw, &ch, 0.0, &mut noise_rng)?;
        let mut row = Vec::with_capacity(noise_vars.len());
        for (&nv, &on) in noise_vars.iter().zip(mask) {
            if !on {
                row.push(None);
                continue;
            }
            let s = nv.sqrt();
            let y: Vec<Complex64> = clean.iter().zip(&noise).map(|(c, w)| c + w * s).collect();
            let r = fd_receive(&y, &cfg.uw_samples, &ch, &sys.ctx.ofdm, &sys.ctx.sm.active);
            let mut est: DVector<Complex64> = det.detect(&r);
            derotate(&mut est, &cand.rotation);
            row.push(Some(demap_and_count(est.as_slice(), &block.bits, cfg.constellation).0));
        }
        out.push(row);
    }
    Ok(out)
}

/// Bit errors of symbol `index` at each SNR point, for paired comparisons
/// across schemes.
pub fn symbol_bit_errors(
    sys: &System,
    scheme: Scheme,
    index: u64,
    snr_db: &[f64],
    hpa: bool,
) -> Result<Vec<u64>> {
    let noise_vars: Vec<f64> = snr_db.iter().map(|&s| sys.noise_var(s)).collect();
    let active = vec![vec![true; snr_db.len()]];
    let rows = ber_symbol(sys, scheme, index, &[hpa], &active, &noise_vars, &sys.hpa_params()?)?;
    Ok(rows[0].iter().map(|e| e.unwrap_or(0)).collect())
}

/// BER curves of one scheme, one per amplifier variant. Data, channel and
/// noise draws are shared across schemes, variants and SNR points.
pub fn ber_curves(
    sys: &System,
    scheme: Scheme,
    snr_db: &[f64],
    variants: &[bool],
    n_symbols: usize,
    min_errors: u64,
    pool: &rayon::ThreadPool,
) -> Result<Vec<BerCurve>> {
    let hpa = sys.hpa_params()?;
    let noise_vars: Vec<f64> = snr_db.iter().map(|&s| sys.noise_var(s)).collect();
    let bits_per_block = sys.bits_per_block() as u64;
    let mut active = vec![vec![true; snr_db.len()]; variants.len()];
    let mut curves: Vec<BerCurve> = variants
        .iter()
        .map(|&hpa| BerCurve {
            scheme,
            hpa,
            points: snr_db
                .iter()
                .map(|&snr_db| BerPoint {
                    snr_db,
                    errors: 0,
                    bits: 0,
                    symbols: 0,
                })
                .collect(),
            regularized: 0,
        })
        .collect();

    let mut start = 0;
    while start < n_symbols && active.iter().flatten().any(|&a| a) {
        let end = (start + CHUNK).min(n_symbols);
        let chunk: Vec<SymbolErrors> = pool.install(|| {
            (start as u64..end as u64)
                .into_par_iter()
                .map(|i| ber_symbol(sys, scheme, i, variants, &active, &noise_vars, &hpa))
                .collect::<Result<_>>()
        })?;
        for symbol in &chunk {
            for (curve, row) in curves.iter_mut().zip(symbol) {
                for (p, e) in curve.points.iter_mut().zip(row) {
                    if let Some(e) = e {
                        p.errors += e;
                        p.bits += bits_per_block;
                        p.symbols += 1;
                    }
                }
            }
        }
        for (curve, mask) in curves.iter().zip(active.iter_mut()) {
            for (p, on) in curve.points.iter().zip(mask.iter_mut()) {
                if min_errors > 0 && p.errors >= min_errors {
                    *on = false;
                }
            }
        }
        start = end;
    }

    let regularized = pool.install(|| {
        let g = sys.generators.for_scheme(scheme);
        let max_symbols = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.symbols))
            .max()
            .unwrap_or(0);
        (0..max_symbols)
            .into_par_iter()
            .map(|i| -> Result<u64> {
                let ch = sys.channel(i)?;
                let det = BlueDetector::new(&DetectionContext::new(&ch, &sys.ctx.sm.active, g, 0.0))?;
                Ok(det.regularized as u64)
            })
            .sum::<Result<u64>>()
    })?;
    curves.iter_mut().for_each(|c| c.regularized = regularized);
    Ok(curves)
}

fn ber_curve_result(sys: &System, curve: &BerCurve) -> CurveResult {
    let join = |f: &dyn Fn(&BerPoint) -> String| {
        curve.points.iter().map(f).collect::<Vec<_>>().join(";")
    };
    sys.base_meta(
        CurveResult::new(
            CurveKind::Ber,
            curve.points.iter().map(|p| p.snr_db).collect(),
            curve.ber(),
        ),
        curve.scheme,
    )
    .with_meta("variant", if curve.hpa { "hpa-on" } else { "hpa-off" })
    .with_meta("errors", join(&|p| p.errors.to_string()))
    .with_meta("bits", join(&|p| p.bits.to_string()))
    .with_meta("symbols", join(&|p| p.symbols.to_string()))
    .with_meta("regularized_symbols", curve.regularized)
    .with_meta("snr", "Eb/N0 with Eb = (N_d + |uw|^2) / bits per block")
    .with_meta("noise_var_at_0db", sys.noise_var(0.0))
    .with_meta("hpa", format!("rapp p={} backoff={} dB on critically sampled stream", sys.cfg.hpa.knee, sys.cfg.hpa.backoff_db))
    .with_meta("channel", if sys.cfg.channel.enabled {
        format!("rayleigh taps={} decay={} per sample", sys.cfg.channel.n_taps, sys.cfg.channel.decay)
    } else {
        "none".to_string()
    })
    .with_meta("side_info", "genie")
}

pub fn run_ber_experiment(spec: &ExperimentSpec) -> Result<Vec<CurveResult>> {
    spec.check(Experiment::Ber)?;
    if spec.snr_db.is_empty() {
        return Err(Error::Config("BER runs need an SNR grid".into()));
    }
    let pool = spec.pool()?;
    let mut out = Vec::new();
    for (variant, cfg) in spec.configs()? {
        let sys = System::new(&cfg)?;
        for &scheme in &spec.schemes {
            for curve in ber_curves(
                &sys,
                scheme,
                &spec.snr_db,
                spec.hpa.variants(),
                spec.n_symbols,
                spec.min_errors,
                &pool,
            )? {
                let mut c = ber_curve_result(&sys, &curve);
                if let Some(v) = &variant {
                    let tag = format!("{}-{v}", c.meta["variant"]);
                    c.meta.insert("variant".into(), tag);
                }
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Pre- and post-amplifier spectra of one scheme with OOBR summaries.
#[derive(Debug, Clone)]
pub struct PsdResult {
    pub scheme: Scheme,
    pub pre: CurveResult,
    pub post: CurveResult,
    /// `(offset in subcarrier spacings, OOBR dB)` before the amplifier.
    pub oobr_pre: Vec<(f64, f64)>,
    pub oobr_post: Vec<(f64, f64)>,
}

impl PsdResult {
    pub fn oobr_at(&self, offset: f64, post: bool) -> Option<f64> {
        let list = if post { &self.oobr_post } else { &self.oobr_pre };
        list.iter().find(|(o, _)| (o - offset).abs() < 1e-12).map(|(_, v)| *v)
    }
}

/// Signed frequency bins (in subcarrier spacings) of the modulated subcarriers.
fn signed_bins(cfg: &SystemConfig) -> Vec<i64> {
    let n = cfg.n_total as i64;
    let split = cfg.n_total.div_ceil(2) as i64;
    cfg.active_subcarriers()
        .iter()
        .map(|&k| if (k as i64) < split { k as i64 } else { k as i64 - n })
        .collect()
}

/// Mean OOBR of the upper and lower band edges at `offset` spacings out.
fn oobr_both_edges(psd: &CurveResult, cfg: &SystemConfig, offset: f64) -> Result<f64> {
    let bins = signed_bins(cfg);
    let spacing = 1.0 / (cfg.oversampling * cfg.n_total) as f64;
    let upper = *bins.iter().max().expect("active set is non-empty") as f64 * spacing;
    let lower = *bins.iter().min().expect("active set is non-empty") as f64 * spacing;
    let hi = oobr_db(psd, upper, offset * spacing)?;
    let lo = oobr_db(psd, lower, -offset * spacing)?;
    Ok(10.0 * ((10f64.powf(hi / 10.0) + 10f64.powf(lo / 10.0)) / 2.0).log10())
}

pub fn psd_for_scheme(
    sys: &System,
    scheme: Scheme,
    n_symbols: usize,
    pool: &rayon::ThreadPool,
) -> Result<PsdResult> {
    let cfg = &sys.cfg;
    let seg = cfg.oversampling * cfg.n_total;
    let waveforms: Vec<Vec<Complex64>> = pool.install(|| {
        (0..n_symbols as u64)
            .into_par_iter()
            .map(|i| sys.transmit(scheme, i).map(|(_, c)| c.waveform.samples))
            .collect::<Result<_>>()
    })?;
    let stream: Vec<Complex64> = waveforms.concat();
    let amplified = rapp_amplify(&stream, &sys.hpa_params()?);

    let band: std::collections::HashSet<i64> = signed_bins(cfg).into_iter().collect();
    let in_band = |f: f64| band.contains(&((f * seg as f64).round() as i64));
    let estimate = |s: &[Complex64], label: &str| -> Result<(CurveResult, Vec<(f64, f64)>)> {
        let mut acc = WelchAccumulator::new(seg, Window::Hann)?;
        acc.push_stream(s, 0.5)?;
        let mut curve = sys
            .base_meta(acc.finish(in_band)?, scheme)
            .with_meta("variant", label)
            .with_meta("symbols", n_symbols)
            .with_meta("window", "hann")
            .with_meta("overlap", 0.5)
            .with_meta("segment_len", seg)
            .with_meta("hpa", format!("rapp p={} backoff={} dB on oversampled stream", cfg.hpa.knee, cfg.hpa.backoff_db));
        let mut oobr = Vec::new();
        for &off in &OOBR_OFFSETS {
            let v = oobr_both_edges(&curve, cfg, off)?;
            curve.meta.insert(format!("oobr_db_at_{off}"), v.to_string());
            oobr.push((off, v));
        }
        Ok((curve, oobr))
    };
    let (pre, oobr_pre) = estimate(&stream, "pre-hpa")?;
    let (post, oobr_post) = estimate(&amplified, "post-hpa")?;
    Ok(PsdResult {
        scheme,
        pre,
        post,
        oobr_pre,
        oobr_post,
    })
}

pub fn run_psd_experiment(spec: &ExperimentSpec) -> Result<Vec<CurveResult>> {
    spec.check(Experiment::Psd)?;
    let pool = spec.pool()?;
    let mut out = Vec::new();
    for (variant, cfg) in spec.configs()? {
        let sys = System::new(&cfg)?;
        for &scheme in &spec.schemes {
            let r = psd_for_scheme(&sys, scheme, spec.n_symbols, &pool)?;
            for mut c in [r.pre, r.post] {
                if let Some(v) = &variant {
                    let tag = format!("{}-{v}", c.meta["variant"]);
                    c.meta.insert("variant".into(), tag);
                }
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Mean max/min eigenvalue ratio of `G^H B^H H^H H B G` over `draws`
/// channel realizations.
pub fn mean_eigen_spread(sys: &System, g: &GeneratorMatrix, draws: usize) -> Result<f64> {
    let ch_cfg = &sys.cfg.channel;
    let mut total = 0.0;
    for i in 0..draws as u64 {
        let ch = sample_channel(
            ch_cfg.n_taps,
            ch_cfg.decay,
            sys.cfg.n_total,
            &mut stream_rng(sys.cfg.seed, Stream::Diagnostic, i),
        )?;
        total += DetectionContext::new(&ch, &sys.ctx.sm.active, g, 0.0).eigen_spread();
    }
    Ok(total / draws as f64)
}

pub const EIGEN_DRAWS: usize = 1000;

#[derive(Debug, Clone)]
pub struct DesignReport {
    pub text: String,
    pub passed: bool,
    pub config_hash: String,
    /// PRP generator, absent if it could not be built.
    pub prp: Option<GeneratorMatrix>,
    pub residual_per_symbol: f64,
}

/// Builds every generator for `cfg` without validating it first, runs the
/// invariant suite and summarizes the design.
pub fn run_design_report(cfg: &SystemConfig) -> Result<DesignReport> {
    let dims = cfg.dims_unchecked();
    let hash = cfg.hash_hex();
    let mut text = String::new();
    let mut passed = true;
    let _ = writeln!(text, "config {hash}");
    let _ = writeln!(
        text,
        "N={} N_u={} N_r={} N_z={} N_d={} N_dr={}",
        dims.n, dims.n_u, dims.n_r, dims.n_z, dims.n_d, dims.n_dr
    );
    if let Err(e) = cfg.dims() {
        passed = false;
        let _ = writeln!(text, "FAIL config validation: {e}");
    }
    let sm = StructuralMatrices::build(cfg)?;
    let qy = (&sm.q * &sm.y).norm();
    let qy_ok = qy <= 1e-9;
    passed &= qy_ok;
    let _ = writeln!(text, "{} |QY|_F = {qy:.3e} (tol 1e-9)", verdict(qy_ok));

    let mut residual_per_symbol = f64::NAN;
    let prp = match build_target_d(dims.n - dims.n_u, dims.n_d).and_then(|d| solve_procrustes(&sm.z, &d)) {
        Ok(sol) => {
            let sv = &sol.singular_values;
            residual_per_symbol = sol.residual / dims.n_d as f64;
            let _ = writeln!(
                text,
                "procrustes: residual {:.6} ({:.6} per data symbol), trace {:.6}, singular values min {:.3e} max {:.6} sum {:.6}",
                sol.residual,
                residual_per_symbol,
                sol.trace_value,
                sv.last().copied().unwrap_or(f64::NAN),
                sv.first().copied().unwrap_or(f64::NAN),
                sv.iter().sum::<f64>()
            );
            Some(design_prp_generator(&sm, cfg)?)
        }
        Err(e) => {
            passed = false;
            let _ = writeln!(text, "FAIL prp: {e}");
            None
        }
    };

    let mut rng = stream_rng(cfg.seed, Stream::Design, 0);
    let identity = design_baseline_generator(&sm, cfg, GeneratorKind::BaselineIdentity, &mut rng);
    let haar = design_baseline_generator(
        &sm,
        cfg,
        GeneratorKind::BaselineHaar,
        &mut stream_rng(cfg.seed, Stream::Design, 1),
    );
    let all: [(GeneratorKind, Result<GeneratorMatrix>); 3] = [
        (GeneratorKind::Prp, prp.clone().ok_or(Error::Config("not built".into()))),
        (GeneratorKind::BaselineIdentity, identity),
        (GeneratorKind::BaselineHaar, haar),
    ];
    for (kind, g) in &all {
        match g {
            Ok(g) => {
                for check in g.check_invariants(&sm) {
                    passed &= check.passed();
                    let _ = writeln!(
                        text,
                        "{} {}: {} = {:.3e} (tol {:.0e})",
                        verdict(check.passed()),
                        kind.name(),
                        check.name,
                        check.value,
                        check.tolerance
                    );
                }
            }
            Err(e) => {
                passed = false;
                let _ = writeln!(text, "FAIL {}: construction failed: {e}", kind.name());
            }
        }
    }

    if let (Ok(sys), true) = (System::new(cfg), passed) {
        if sys.cfg.channel.enabled {
            let prp_spread = mean_eigen_spread(&sys, &sys.generators.prp, EIGEN_DRAWS)?;
            let haar_spread = mean_eigen_spread(&sys, &sys.haar_generator()?, EIGEN_DRAWS)?;
            let _ = writeln!(
                text,
                "mean eigenvalue spread over {EIGEN_DRAWS} channels: prp {prp_spread:.3} baseline-haar {haar_spread:.3}"
            );
        }
    }
    let _ = writeln!(text, "{}", if passed { "all invariants passed" } else { "invariant failure" });
    Ok(DesignReport {
        text,
        passed,
        config_hash: hash,
        prp,
        residual_per_symbol,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Writes a complex matrix as `row,col,re,im` CSV.
pub fn write_matrix_csv(path: &Path, m: &CMatrix, meta: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str("row,col,re,im\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            let _ = writeln!(s, "{r},{c},{:?},{:?}", v.re, v.im);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_curves(curves: &[CurveResult], dir: &Path) -> Result<Vec<PathBuf>> {
    curves.iter().map(|c| c.save(dir)).collect()
}
