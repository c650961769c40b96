//! System and algorithm configuration.
//!
//! Lengths are stored in meters and power quantities in linear units. The JSON
//! file format accepts explicit unit tags (`{"lambda": 0.5}`, `{"db": -30}`,
//! `{"deg": 60}`) which are resolved once, at load time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// How an SNR figure is turned into a noise power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    /// `sigma2 = P_T / snr`.
    Transmit,
    /// `sigma2 = P_T * c^2 / snr`, where `c^2` is the average large-scale
    /// channel power gain. The SNR is then the average received SNR.
    #[default]
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    /// Unit-energy M-PSK.
    #[default]
    Psk,
    /// Square QAM normalized to unit average energy.
    Qam,
}

/// Physical link parameters, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of transmit antennas `T`.
    pub tx_antennas: usize,
    /// Number of receive antennas `R`.
    pub rx_antennas: usize,
    /// Constellation order `M`.
    pub order: usize,
    pub constellation: Constellation,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Minimum inter-antenna spacing `D` (m).
    pub min_spacing: f64,
    /// Transmit movement region `[0, A_t]` (m).
    pub tx_region: f64,
    /// Receive movement region `[0, A_r]` (m).
    pub rx_region: f64,
    /// Transmit power budget `P_T` (W).
    pub power: f64,
    /// Noise power `sigma^2` (W).
    pub noise_power: f64,
    /// Link distance (m).
    pub distance: f64,
    /// Channel power gain at 1 m (linear).
    pub ref_gain: f64,
    /// Path-loss exponent.
    pub pathloss_exponent: f64,
    /// Number of propagation paths at each end.
    pub paths: usize,
    pub snr_reference: SnrReference,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let wavelength = 0.05;
        let mut cfg = SystemConfig {
            tx_antennas: 4,
            rx_antennas: 4,
            order: 4,
            constellation: Constellation::Psk,
            wavelength,
            min_spacing: wavelength / 2.0,
            tx_region: 8.0 * wavelength,
            rx_region: 8.0 * wavelength,
            power: 1.0,
            noise_power: 1.0,
            distance: 40.0,
            ref_gain: 1e-3,
            pathloss_exponent: 2.5,
            paths: 8,
            snr_reference: SnrReference::Receive,
        };
        cfg.noise_power = cfg.noise_for_snr(10.0);
        cfg
    }
}

fn is_pow2(n: usize) -> bool {
    n >= 1 && n.is_power_of_two()
}

impl SystemConfig {
    /// Average large-scale channel power gain `c^2 = C0 * d^(-alpha)`.
    pub fn path_gain(&self) -> f64 {
        self.ref_gain * self.distance.powf(-self.pathloss_exponent)
    }

    /// Noise power for a given SNR in dB under this config's SNR reference.
    pub fn noise_for_snr(&self, snr_db: f64) -> f64 {
        let snr = 10f64.powf(snr_db / 10.0);
        match self.snr_reference {
            SnrReference::Transmit => self.power / snr,
            SnrReference::Receive => self.power * self.path_gain() / snr,
        }
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.noise_power = self.noise_for_snr(snr_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::invalid(format!("{field}: {why}")));
        if !is_pow2(self.tx_antennas) {
            return bad("tx_antennas", "must be a power of two");
        }
        if !is_pow2(self.rx_antennas) {
            return bad("rx_antennas", "must be a power of two");
        }
        if !is_pow2(self.order) {
            return bad("order", "must be a power of two");
        }
        if self.constellation == Constellation::Qam && !self.order.trailing_zeros().is_multiple_of(2) {
            return bad("order", "QAM needs a square order (4, 16, 64, ...)");
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength", "must be positive");
        }
        if !(self.min_spacing > 0.0) {
            return bad("min_spacing", "must be positive");
        }
        let need = |n: usize| (n as f64 - 1.0) * self.min_spacing * (1.0 - 1e-12);
        if !(self.tx_region >= need(self.tx_antennas)) {
            return bad("tx_region", "too small to hold tx_antennas at min_spacing");
        }
        if !(self.rx_region >= need(self.rx_antennas)) {
            return bad("rx_region", "too small to hold rx_antennas at min_spacing");
        }
        if !(self.power > 0.0) {
            return bad("power", "must be positive");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise_power", "must be positive");
        }
        if self.paths < 1 {
            return bad("paths", "must be at least 1");
        }
        if !(self.distance > 0.0 && self.ref_gain > 0.0 && self.pathloss_exponent.is_finite()) {
            return bad("distance/ref_gain/pathloss_exponent", "must be positive and finite");
        }
        Ok(())
    }
}

/// Knobs of the alternating optimization and its sub-solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Relative AO convergence threshold.
    pub kappa: f64,
    pub max_iter: usize,
    /// Relative stopping threshold of the precoder SCA loop.
    pub sca_tol: f64,
    pub sca_max_iter: usize,
    /// Inner precoder solve accuracy, relative to the subproblem scale.
    pub inner_tol: f64,
    pub inner_max_newton: usize,
    /// Pairs whose value exceeds this multiple of the current minimum are
    /// left out of the inner solve and re-checked afterwards.
    pub prune_factor: f64,
    /// Number of AO starts; the first is the fixed-position layout.
    pub starts: usize,
    /// Candidate port spacing of greedy antenna selection (m).
    pub gas_grid_step: Option<f64>,
    /// Update positions against the precoder from the start of the iteration.
    pub strict_paper_ordering: bool,
    /// Seed for random multi-start layouts.
    pub start_seed: u64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            kappa: 1e-3,
            max_iter: 50,
            sca_tol: 1e-4,
            sca_max_iter: 100,
            inner_tol: 1e-8,
            inner_max_newton: 500,
            prune_factor: 10.0,
            starts: 1,
            gas_grid_step: None,
            strict_paper_ordering: false,
            start_seed: 0,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::invalid(format!("algorithm.{field}: {why}")));
        if !(self.kappa > 0.0) {
            return bad("kappa", "must be positive");
        }
        if self.max_iter == 0 || self.sca_max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        if !(self.sca_tol > 0.0 && self.inner_tol > 0.0) {
            return bad("sca_tol/inner_tol", "must be positive");
        }
        if !(self.prune_factor >= 1.0) {
            return bad("prune_factor", "must be >= 1");
        }
        if self.starts == 0 {
            return bad("starts", "must be at least 1");
        }
        Ok(())
    }
}

/// Monte Carlo stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSettings {
    pub min_bits: u64,
    pub max_bits: u64,
    pub target_errors: u64,
}

impl Default for BerSettings {
    fn default() -> Self {
        BerSettings {
            min_bits: 100_000,
            max_bits: 1_000_000,
            target_errors: 100,
        }
    }
}

/// Sweep grids used by the experiment commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub paths: Vec<usize>,
    pub converge_paths: Vec<usize>,
    pub converge_orders: Vec<usize>,
    pub schemes: Vec<String>,
    pub paths_snr_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_db: (0..=7).map(|i| 2.0 * i as f64).collect(),
            paths: vec![2, 4, 8, 12],
            converge_paths: vec![4, 8, 12],
            converge_orders: vec![2, 4, 8],
            schemes: ["ma", "fpa", "gas", "ma-tx", "ma-rx"].map(String::from).to_vec(),
            paths_snr_db: 12.0,
        }
    }
}

/// A length given in meters, or as a multiple of the wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Meters(f64),
    Tagged(LengthTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum LengthTag {
    #[serde(rename = "m")]
    Meters(f64),
    #[serde(rename = "lambda")]
    Wavelengths(f64),
}

impl Length {
    pub fn meters(self, wavelength: f64) -> f64 {
        match self {
            Length::Meters(m) | Length::Tagged(LengthTag::Meters(m)) => m,
            Length::Tagged(LengthTag::Wavelengths(k)) => k * wavelength,
        }
    }
}

/// A power or gain, linear by default or tagged in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Linear(f64),
    Tagged(LevelTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum LevelTag {
    #[serde(rename = "linear")]
    Linear(f64),
    #[serde(rename = "db")]
    Db(f64),
}

impl Level {
    pub fn linear(self) -> f64 {
        match self {
            Level::Linear(x) | Level::Tagged(LevelTag::Linear(x)) => x,
            Level::Tagged(LevelTag::Db(db)) => 10f64.powf(db / 10.0),
        }
    }
}

/// An angle. Units are mandatory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum Angle {
    #[serde(rename = "deg")]
    Degrees(f64),
    #[serde(rename = "rad")]
    Radians(f64),
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Degrees(d) => d.to_radians(),
            Angle::Radians(r) => r,
        }
    }
}

/// On-disk form of [`SystemConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemFile {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub order: usize,
    pub constellation: Constellation,
    pub wavelength: f64,
    pub min_spacing: Length,
    pub tx_region: Length,
    pub rx_region: Length,
    pub power: Level,
    pub distance: f64,
    pub ref_gain: Level,
    pub pathloss_exponent: f64,
    pub paths: usize,
    /// SNR used to set the noise power when no explicit value is given.
    pub snr_db: f64,
    pub noise_power: Option<Level>,
    pub snr_reference: SnrReference,
}

impl Default for SystemFile {
    fn default() -> Self {
        SystemFile {
            tx_antennas: 4,
            rx_antennas: 4,
            order: 4,
            constellation: Constellation::Psk,
            wavelength: 0.05,
            min_spacing: Length::Tagged(LengthTag::Wavelengths(0.5)),
            tx_region: Length::Tagged(LengthTag::Wavelengths(8.0)),
            rx_region: Length::Tagged(LengthTag::Wavelengths(8.0)),
            power: Level::Linear(1.0),
            distance: 40.0,
            ref_gain: Level::Tagged(LevelTag::Db(-30.0)),
            pathloss_exponent: 2.5,
            paths: 8,
            snr_db: 10.0,
            noise_power: None,
            snr_reference: SnrReference::Receive,
        }
    }
}

impl SystemFile {
    pub fn resolve(&self) -> SystemConfig {
        let lambda = self.wavelength;
        let mut cfg = SystemConfig {
            tx_antennas: self.tx_antennas,
            rx_antennas: self.rx_antennas,
            order: self.order,
            constellation: self.constellation,
            wavelength: lambda,
            min_spacing: self.min_spacing.meters(lambda),
            tx_region: self.tx_region.meters(lambda),
            rx_region: self.rx_region.meters(lambda),
            power: self.power.linear(),
            noise_power: 1.0,
            distance: self.distance,
            ref_gain: self.ref_gain.linear(),
            pathloss_exponent: self.pathloss_exponent,
            paths: self.paths,
            snr_reference: self.snr_reference,
        };
        cfg.noise_power = match self.noise_power {
            Some(level) => level.linear(),
            None => cfg.noise_for_snr(self.snr_db),
        };
        cfg
    }
}

/// A user-supplied channel realization, angles with explicit units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub aod: Vec<Angle>,
    pub aoa: Vec<Angle>,
    /// Path gains as `[re, im]`; a list gives a diagonal matrix, a list of
    /// rows gives the full `L_r x L_t` matrix.
    pub gains: GainsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsFile {
    Diagonal(Vec<[f64; 2]>),
    Full(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemFile,
    pub algorithm: AlgorithmConfig,
    pub ber: BerSettings,
    pub sweep: SweepConfig,
    pub channel: Option<ChannelFile>,
}

/// Resolved configuration of an experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub algorithm: AlgorithmConfig,
    pub ber: BerSettings,
    pub sweep: SweepConfig,
    #[serde(skip)]
    pub channel: Option<ChannelFile>,
    /// SNR the noise power was derived from.
    pub snr_db: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ConfigFile::default().resolve().expect("defaults are valid")
    }
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let system = self.system.resolve();
        system.validate().map_err(|e| Error::Config(format!("system.{}", strip(e))))?;
        self.algorithm.validate().map_err(|e| Error::Config(strip(e)))?;
        if let Some(step) = self.algorithm.gas_grid_step {
            if step < system.min_spacing * (1.0 - 1e-12) {
                return Err(Error::Config(
                    "algorithm.gas_grid_step: must be at least min_spacing".into(),
                ));
            }
        }
        if self.ber.min_bits == 0 || self.ber.max_bits < self.ber.min_bits {
            return Err(Error::Config("ber: need 0 < min_bits <= max_bits".into()));
        }
        Ok(ExperimentConfig {
            system,
            algorithm: self.algorithm.clone(),
            ber: self.ber,
            sweep: self.sweep.clone(),
            channel: self.channel.clone(),
            snr_db: self.system.snr_db,
        })
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidParameter(s) | Error::Config(s) => s,
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        file.resolve()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 over the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        if let Some(ch) = &self.channel {
            hasher.update(serde_json::to_string(ch).expect("channel serializes").as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn gas_grid_step(&self) -> f64 {
        self.algorithm
            .gas_grid_step
            .unwrap_or(self.system.wavelength / 2.0)
    }
}
