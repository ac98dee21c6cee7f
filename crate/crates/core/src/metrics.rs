//! CCDF and Welch PSD estimators, OOBR summary and CSV output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Ccdf,
    Ber,
    Psd,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Ccdf => "ccdf",
            CurveKind::Ber => "ber",
            CurveKind::Psd => "psd",
        }
    }
}

/// A named (x, y) series plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub kind: CurveKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl CurveResult {
    pub fn new(kind: CurveKind, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            kind,
            x,
            y,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    /// Linear interpolation of the x value at which the curve crosses
    /// `level` (used to read a PAPR at a given CCDF probability, or an SNR at
    /// a given BER). Returns `None` if the curve never reaches `level`.
    pub fn x_at(&self, level: f64) -> Option<f64> {
        for i in 1..self.y.len() {
            let (y0, y1) = (self.y[i - 1], self.y[i]);
            if (y0 - level) * (y1 - level) <= 0.0 && y0 != y1 {
                let t = (level - y0) / (y1 - y0);
                return Some(self.x[i - 1] + t * (self.x[i] - self.x[i - 1]));
            }
        }
        None
    }

    /// Writes the curve as CSV: `# key=value` header lines, then `x,y` rows.
    /// Floats use Rust's shortest round-trip formatting, so equal curves
    /// give identical bytes.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# kind={}", self.kind.name())?;
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "x,y")?;
        for (x, y) in self.x.iter().zip(&self.y) {
            writeln!(out, "{x:?},{y:?}")?;
        }
        Ok(())
    }

    /// `<kind>_<scheme>_<confighash>.csv`; an optional `variant` meta entry
    /// is appended to the scheme part.
    pub fn file_name(&self) -> String {
        let scheme = self.meta.get("scheme").map(String::as_str).unwrap_or("all");
        let hash = self.meta.get("config_hash").map(String::as_str).unwrap_or("nohash");
        match self.meta.get("variant") {
            Some(v) => format!("{}_{}-{}_{}.csv", self.kind.name(), scheme, v, hash),
            None => format!("{}_{}_{}.csv", self.kind.name(), scheme, hash),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(&path, buf)?;
        Ok(path)
    }
}

/// Default CCDF threshold grid: 4 dB to 13 dB in 0.1 dB steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=90).map(|i| 4.0 + 0.1 * i as f64).collect()
}

/// Empirical CCDF `P(PAPR > x)` at each threshold.
pub fn ccdf(samples: &[f64], thresholds: &[f64]) -> Result<CurveResult> {
    let mut acc = CcdfAccumulator::new(thresholds.to_vec());
    samples.iter().for_each(|&s| acc.push(s));
    acc.finish()
}

/// Exceedance counts on a fixed grid; partial accumulators merge by
/// addition so parallel workers can be combined in any grouping.
#[derive(Debug, Clone)]
pub struct CcdfAccumulator {
    thresholds: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

impl CcdfAccumulator {
    pub fn new(thresholds: Vec<f64>) -> Self {
        let counts = vec![0; thresholds.len()];
        Self {
            thresholds,
            counts,
            total: 0,
        }
    }

    pub fn push(&mut self, sample: f64) {
        self.total += 1;
        for (c, &t) in self.counts.iter_mut().zip(&self.thresholds) {
            if sample > t {
                *c += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CcdfAccumulator) {
        assert_eq!(self.thresholds, other.thresholds, "CCDF grids differ");
        self.total += other.total;
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn finish(&self) -> Result<CurveResult> {
        if self.total == 0 {
            return Err(Error::DegenerateInput("CCDF of an empty sample set".into()));
        }
        let y = self.counts.iter().map(|&c| c as f64 / self.total as f64).collect();
        Ok(CurveResult::new(CurveKind::Ccdf, self.thresholds.clone(), y)
            .with_meta("samples", self.total))
    }
}

/// Empirical quantile: smallest sample `s` such that the fraction of
/// samples strictly greater than `s` is at most `prob`.
pub fn exceedance_level(samples: &[f64], prob: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let allowed = (prob * n as f64).floor() as usize;
    sorted[n - 1 - allowed.min(n - 1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rect,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            // periodic Hann
            Window::Hann => (0..len)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()
                })
                .collect(),
        }
    }
}

/// Welch periodogram accumulator. Segments are windowed, transformed and
/// their squared magnitudes summed; sums merge associatively.
#[derive(Clone)]
pub struct WelchAccumulator {
    segment_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    sum: Vec<f64>,
    segments: u64,
}

impl WelchAccumulator {
    pub fn new(segment_len: usize, window: Window) -> Result<Self> {
        if segment_len == 0 {
            return Err(Error::Dimension("segment length must be positive".into()));
        }
        Ok(Self {
            segment_len,
            window: window.coefficients(segment_len),
            fft: FftPlanner::new().plan_fft_forward(segment_len),
            sum: vec![0.0; segment_len],
            segments: 0,
        })
    }

    /// Adds every full segment of `stream` with hop `segment_len − overlap_len`.
    pub fn push_stream(&mut self, stream: &[Complex64], overlap: f64) -> Result<()> {
        if stream.len() < self.segment_len {
            return Err(Error::Dimension(format!(
                "stream of {} samples is shorter than one segment ({})",
                stream.len(),
                self.segment_len
            )));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::Dimension(format!("overlap {overlap} must lie in [0, 1)")));
        }
        let hop = ((1.0 - overlap) * self.segment_len as f64).round().max(1.0) as usize;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.segment_len];
        let mut start = 0;
        while start + self.segment_len <= stream.len() {
            for (b, (s, w)) in buf
                .iter_mut()
                .zip(stream[start..start + self.segment_len].iter().zip(&self.window))
            {
                *b = s * w;
            }
            self.fft.process(&mut buf);
            self.sum.iter_mut().zip(&buf).for_each(|(a, b)| *a += b.norm_sqr());
            self.segments += 1;
            start += hop;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &WelchAccumulator) {
        assert_eq!(self.segment_len, other.segment_len, "segment lengths differ");
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.segments += other.segments;
    }

    pub fn segments(&self) -> u64 {
        self.segments
    }

    /// FFT-shifted PSD in dB over normalized frequency `[−0.5, 0.5)`,
    /// referenced to the mean linear level of the bins where `in_band`
    /// holds (all bins if none does).
    pub fn finish(&self, in_band: impl Fn(f64) -> bool) -> Result<CurveResult> {
        if self.segments == 0 {
            return Err(Error::DegenerateInput("no Welch segments accumulated".into()));
        }
        let n = self.segment_len;
        let half = n / 2;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 - half as f64) / n as f64).collect();
        let lin: Vec<f64> = (0..n)
            .map(|i| self.sum[(i + n - half) % n] / self.segments as f64)
            .collect();
        let band: Vec<f64> = x
            .iter()
            .zip(&lin)
            .filter(|(f, _)| in_band(**f))
            .map(|(_, p)| *p)
            .collect();
        let reference = if band.is_empty() {
            lin.iter().sum::<f64>() / n as f64
        } else {
            band.iter().sum::<f64>() / band.len() as f64
        };
        if !(reference > 0.0) {
            return Err(Error::DegenerateInput("PSD reference level is zero".into()));
        }
        let y = lin
            .iter()
            .map(|p| 10.0 * (p.max(f64::MIN_POSITIVE) / reference).log10())
            .collect();
        Ok(CurveResult::new(CurveKind::Psd, x, y).with_meta("segments", self.segments))
    }
}

/// Welch PSD of one stream.
pub fn welch_psd(
    stream: &[Complex64],
    segment_len: usize,
    overlap: f64,
    window: Window,
    in_band: impl Fn(f64) -> bool,
) -> Result<CurveResult> {
    let mut acc = WelchAccumulator::new(segment_len, window)?;
    acc.push_stream(stream, overlap)?;
    let mut curve = acc.finish(in_band)?;
    curve.meta.insert("overlap".into(), overlap.to_string());
    curve
        .meta
        .insert("window".into(), format!("{window:?}").to_lowercase());
    Ok(curve)
}

/// Bins on each side of the query frequency averaged by [`oobr_db`].
pub const OOBR_HALF_WIDTH: usize = 2;

/// Mean PSD level (dB, linear average) in a small window centred at
/// `band_edge + offset`.
pub fn oobr_db(psd: &CurveResult, band_edge: f64, offset: f64) -> Result<f64> {
    let f = band_edge + offset;
    if !(-0.5..0.5).contains(&f) || psd.x.is_empty() {
        return Err(Error::Dimension(format!(
            "query frequency {f} lies outside the Nyquist range"
        )));
    }
    let centre = psd
        .x
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let lo = centre.saturating_sub(OOBR_HALF_WIDTH);
    let hi = (centre + OOBR_HALF_WIDTH).min(psd.x.len() - 1);
    let lin: f64 = psd.y[lo..=hi].iter().map(|db| 10f64.powf(db / 10.0)).sum::<f64>()
        / (hi - lo + 1) as f64;
    Ok(10.0 * lin.log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ccdf_counts() {
        let c = ccdf(&[1.0, 2.0, 3.0], &[0.0, 2.5, 5.0]).unwrap();
        assert_eq!(c.y, vec![1.0, 1.0 / 3.0, 0.0]);
        assert!(matches!(ccdf(&[], &[1.0]), Err(Error::DegenerateInput(_))));
        let grid = default_thresholds();
        assert_eq!(grid.len(), 91);
        assert!((grid[90] - 13.0).abs() < 1e-12);
    }

    #[test]
    fn ccdf_accumulators_merge() {
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 5.0 + 8.0).collect();
        let grid = default_thresholds();
        let whole = ccdf(&samples, &grid).unwrap();
        let mut a = CcdfAccumulator::new(grid.clone());
        let mut b = CcdfAccumulator::new(grid.clone());
        samples[..37].iter().for_each(|&s| a.push(s));
        samples[37..].iter().for_each(|&s| b.push(s));
        a.merge(&b);
        assert_eq!(a.finish().unwrap(), whole);
    }

    #[test]
    fn crossing_interpolation() {
        let c = CurveResult::new(CurveKind::Ccdf, vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]);
        assert_eq!(c.x_at(0.25), Some(1.5));
        assert_eq!(c.x_at(2.0), None);
    }

    #[test]
    fn exceedance_level_matches_definition() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(exceedance_level(&s, 0.01), 99.0);
        assert_eq!(exceedance_level(&s, 0.0), 100.0);
    }

    #[test]
    fn tone_is_detected() {
        let n = 256;
        let bin = 40;
        let stream: Vec<_> = (0..n * 33)
            .map(|t| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (bin * t) as f64 / n as f64))
            .collect();
        let psd = welch_psd(&stream, n, 0.5, Window::Hann, |_| true).unwrap();
        assert!(psd.meta["segments"].parse::<u64>().unwrap() >= 32);
        let peak = psd
            .y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((psd.x[peak] - bin as f64 / n as f64).abs() < 1e-12);
        let mut sorted = psd.y.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[n / 2];
        assert!(psd.y[peak] - median >= 40.0);
        let far = oobr_db(&psd, bin as f64 / n as f64, 0.25).unwrap();
        assert!(far <= psd.y[peak] - 40.0);
    }

    #[test]
    fn white_noise_is_flat_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 64;
        let stream: Vec<_> = (0..n * 1025).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let half = welch_psd(&stream[..n * 513], n, 0.5, Window::Hann, |_| true).unwrap();
        let full = welch_psd(&stream, n, 0.5, Window::Hann, |_| true).unwrap();
        assert!(full.y.iter().all(|v| v.abs() <= 1.0), "{:?}", full.y);
        for (a, b) in half.y.iter().zip(&full.y) {
            assert!((a - b).abs() < 0.5);
        }
        let again = welch_psd(&stream, n, 0.5, Window::Hann, |_| true).unwrap();
        assert_eq!(again, full);
    }

    #[test]
    fn in_band_normalization() {
        let n = 64;
        let stream: Vec<_> = (0..n * 10)
            .map(|t| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (3 * t) as f64 / n as f64))
            .collect();
        let psd = welch_psd(&stream, n, 0.0, Window::Rect, |f| (f - 3.0 / 64.0).abs() < 1e-9).unwrap();
        let at = oobr_db(&psd, 3.0 / 64.0, 0.0).unwrap();
        assert!(psd.y[32 + 3].abs() < 1e-9);
        assert!(at < 0.0);
        assert!(welch_psd(&stream[..10], n, 0.5, Window::Hann, |_| true).is_err());
        assert!(oobr_db(&psd, 0.45, 0.1).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = CurveResult::new(CurveKind::Ber, vec![0.0, 5.0], vec![0.1, 0.01])
            .with_meta("scheme", "prp")
            .with_meta("config_hash", "abcd1234");
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# kind=ber\n# config_hash=abcd1234\n# scheme=prp\nx,y\n0.0,0.1\n5.0,0.01\n"
        );
        assert_eq!(c.file_name(), "ber_prp_abcd1234.csv");
    }
}
