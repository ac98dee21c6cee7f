//! System parameters for a UW-OFDM link and its experiments.
//!
//! A [`SystemConfig`] is plain data. [`SystemConfig::validate`] checks every
//! structural constraint once; everything downstream assumes a validated
//! config and shares it read-only.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data symbol alphabet. Both have unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Constellation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }
}

/// Transmit-side PAPR handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    None,
    Prp,
    Pts,
    Slm,
    PrpPts,
    PrpSlm,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::None,
        Scheme::Prp,
        Scheme::Pts,
        Scheme::Slm,
        Scheme::PrpPts,
        Scheme::PrpSlm,
    ];

    /// Whether the scheme transmits with the PAPR-reducing generator.
    pub fn uses_prp(self) -> bool {
        matches!(self, Scheme::Prp | Scheme::PrpPts | Scheme::PrpSlm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Prp => "prp",
            Scheme::Pts => "pts",
            Scheme::Slm => "slm",
            Scheme::PrpPts => "prp-pts",
            Scheme::PrpSlm => "prp-slm",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Which samples of a time-domain symbol enter the PAPR statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaprWindow {
    /// All `L·N` samples including the unique-word interval.
    Full,
    /// Only the first `L·(N − N_u)` samples.
    DataOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HpaConfig {
    /// Rapp knee (smoothness) factor p.
    pub knee: f64,
    /// Saturation power above the mean input power, in dB.
    pub backoff_db: f64,
    pub enabled: bool,
}

impl Default for HpaConfig {
    fn default() -> Self {
        Self {
            knee: 2.0,
            backoff_db: 5.0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_taps: usize,
    /// Exponential power-delay-profile decay per tap index.
    pub decay: f64,
    pub enabled: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_taps: 16,
            decay: 0.1,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// DFT size N.
    pub n_total: usize,
    /// Unique-word length N_u.
    pub n_uw: usize,
    /// Redundant subcarrier count N_r.
    pub n_red: usize,
    /// Guard (zero) subcarrier count N_z.
    pub n_zero: usize,
    pub zero_subcarrier_indices: Vec<usize>,
    /// Unique word, stored as `[re, im]` pairs in config files.
    pub uw_samples: Vec<Complex64>,
    pub constellation: Constellation,
    /// PAPR oversampling factor L.
    pub oversampling: usize,
    pub papr_window: PaprWindow,
    pub scheme: Scheme,
    /// PTS sub-block count V.
    pub pts_subblocks: usize,
    /// SLM candidate count U.
    pub slm_candidates: usize,
    /// Phase rotation alphabet (W entries) shared by PTS and SLM.
    pub phase_set: Vec<Complex64>,
    pub hpa: HpaConfig,
    pub channel: ChannelConfig,
    pub seed: u64,
}

/// Derived sizes of a validated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub n_u: usize,
    pub n_r: usize,
    pub n_z: usize,
    /// N_d = N − N_r − N_z.
    pub n_d: usize,
    /// N_dr = N − N_z.
    pub n_dr: usize,
}

impl Dims {
    /// Dimension of the null space of Q, i.e. the row count of C.
    pub fn n_free(&self) -> usize {
        self.n_dr - self.n_u
    }

    /// Length of the data part of a critically sampled symbol.
    pub fn n_data_samples(&self) -> usize {
        self.n - self.n_u
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        default_80211_config()
    }
}

/// 802.11a-like UW-OFDM parameters: N = 64, N_u = N_r = 16, N_z = 12 with
/// the DC carrier and band-edge carriers 27..=37 switched off.
pub fn default_80211_config() -> SystemConfig {
    let zero_subcarrier_indices = std::iter::once(0).chain(27..=37).collect();
    SystemConfig {
        n_total: 64,
        n_uw: 16,
        n_red: 16,
        n_zero: 12,
        zero_subcarrier_indices,
        uw_samples: vec![Complex64::new(0.0, 0.0); 16],
        constellation: Constellation::Qpsk,
        oversampling: 4,
        papr_window: PaprWindow::Full,
        scheme: Scheme::Prp,
        pts_subblocks: 4,
        slm_candidates: 4,
        phase_set: vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ],
        hpa: HpaConfig::default(),
        channel: ChannelConfig::default(),
        seed: 0x5eed_0fd3,
    }
}

/// Guard placement used when only the counts change: DC plus a contiguous
/// band-edge block centred on the Nyquist carrier.
pub fn centered_guard_indices(n_total: usize, n_zero: usize) -> Vec<usize> {
    if n_zero == 0 {
        return Vec::new();
    }
    let edge = n_zero - 1;
    let start = n_total / 2 - edge / 2;
    std::iter::once(0).chain(start..start + edge).collect()
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Sizes implied by the config, without checking the other invariants.
    pub fn dims_unchecked(&self) -> Dims {
        let n_d = self
            .n_total
            .saturating_sub(self.n_red)
            .saturating_sub(self.n_zero);
        Dims {
            n: self.n_total,
            n_u: self.n_uw,
            n_r: self.n_red,
            n_z: self.n_zero,
            n_d,
            n_dr: self.n_total.saturating_sub(self.n_zero),
        }
    }

    /// Checks all structural invariants and returns the config unchanged.
    pub fn validate(self) -> Result<Self> {
        self.dims()?;
        Ok(self)
    }

    /// Derived dimensions; fails with the first violated constraint.
    pub fn dims(&self) -> Result<Dims> {
        let dim_err = |msg: String| Err(Error::Dimension(msg));
        if self.n_total == 0 {
            return dim_err("N must be positive".into());
        }
        if self.n_uw >= self.n_total {
            return dim_err(format!("N_u = {} must be below N = {}", self.n_uw, self.n_total));
        }
        if self.n_red < self.n_uw {
            return dim_err(format!(
                "N_r >= N_u violated (N_r = {}, N_u = {})",
                self.n_red, self.n_uw
            ));
        }
        if self.n_red + self.n_zero >= self.n_total {
            return dim_err(format!(
                "N_d = N - N_r - N_z must be positive (N = {}, N_r = {}, N_z = {})",
                self.n_total, self.n_red, self.n_zero
            ));
        }
        if self.zero_subcarrier_indices.len() != self.n_zero {
            return dim_err(format!(
                "expected {} zero subcarrier indices, got {}",
                self.n_zero,
                self.zero_subcarrier_indices.len()
            ));
        }
        let distinct: BTreeSet<_> = self.zero_subcarrier_indices.iter().copied().collect();
        if distinct.len() != self.zero_subcarrier_indices.len() {
            return dim_err("zero subcarrier indices must be distinct".into());
        }
        if let Some(bad) = distinct.iter().find(|&&k| k >= self.n_total) {
            return dim_err(format!("zero subcarrier index {bad} outside [0, {})", self.n_total));
        }
        if self.uw_samples.len() != self.n_uw {
            return dim_err(format!(
                "unique word has {} samples, N_u = {}",
                self.uw_samples.len(),
                self.n_uw
            ));
        }
        if self.oversampling == 0 {
            return dim_err("oversampling factor must be >= 1".into());
        }
        if self.pts_subblocks == 0 || self.slm_candidates == 0 {
            return dim_err("PTS sub-block and SLM candidate counts must be >= 1".into());
        }
        if self.phase_set.is_empty() {
            return dim_err("phase set must not be empty".into());
        }
        if let Some(p) = self.phase_set.iter().find(|p| (p.norm() - 1.0).abs() > 1e-12) {
            return dim_err(format!("phase set entry {p} does not have unit magnitude"));
        }
        if self.channel.n_taps == 0 || self.channel.n_taps - 1 > self.n_uw {
            return dim_err(format!(
                "channel memory L_c - 1 = {} must not exceed N_u = {}",
                self.channel.n_taps as isize - 1,
                self.n_uw
            ));
        }
        if !(self.hpa.knee > 0.0) {
            return dim_err("HPA knee factor must be positive".into());
        }
        Ok(self.dims_unchecked())
    }

    /// Same layout with a different redundancy, keeping N_dr fixed.
    pub fn with_redundancy(&self, n_red: usize) -> Self {
        Self {
            n_red,
            ..self.clone()
        }
    }

    /// Short stable identifier of the config, used in output file names.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }

    /// Subcarrier indices that carry energy, in increasing order.
    pub fn active_subcarriers(&self) -> Vec<usize> {
        let zeros: BTreeSet<_> = self.zero_subcarrier_indices.iter().copied().collect();
        (0..self.n_total).filter(|k| !zeros.contains(k)).collect()
    }
}
