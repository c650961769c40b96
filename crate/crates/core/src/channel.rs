//! Far-field field-response channel between two linear movable arrays.
//!
//! Each antenna position `p` along the array axis sees path `l` with phase
//! `2 pi / lambda * p * cos(angle_l)`. Stacking those phasors gives the
//! field-response matrices `G(u)` (transmit) and `F(v)` (receive), and the
//! channel is `H = F(v)^H * Sigma * G(u)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ChannelFile, GainsFile, SystemConfig};
use crate::{CMat, CVec, Complex64, Error, Result};

/// Relative slack used when checking spacing and region constraints, so that
/// positions computed as `k * D` in floating point still count as feasible.
pub const LAYOUT_SLACK: f64 = 1e-12;

/// Angles and path gains of one coherence block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Departure angles (rad), one per transmit path.
    pub aod: Vec<f64>,
    /// Arrival angles (rad), one per receive path.
    pub aoa: Vec<f64>,
    /// Path response matrix, `L_r x L_t`.
    pub prm: CMat,
}

impl ChannelRealization {
    pub fn new(aod: Vec<f64>, aoa: Vec<f64>, prm: CMat) -> Result<Self> {
        let ch = ChannelRealization { aod, aoa, prm };
        ch.check()?;
        Ok(ch)
    }

    /// Equal path counts at both ends with a diagonal response matrix.
    pub fn diagonal(aod: Vec<f64>, aoa: Vec<f64>, gains: &[Complex64]) -> Result<Self> {
        if gains.len() != aod.len() || gains.len() != aoa.len() {
            return Err(Error::invalid(format!(
                "diagonal channel needs equal path counts, got {} gains, {} AoDs, {} AoAs",
                gains.len(),
                aod.len(),
                aoa.len()
            )));
        }
        let prm = CMat::from_diagonal(&CVec::from_column_slice(gains));
        Self::new(aod, aoa, prm)
    }

    pub fn tx_paths(&self) -> usize {
        self.aod.len()
    }

    pub fn rx_paths(&self) -> usize {
        self.aoa.len()
    }

    fn check(&self) -> Result<()> {
        if self.aod.is_empty() || self.aoa.is_empty() {
            return Err(Error::invalid("channel needs at least one path per side"));
        }
        if self.prm.nrows() != self.aoa.len() || self.prm.ncols() != self.aod.len() {
            return Err(Error::invalid(format!(
                "path response matrix is {}x{}, expected {}x{}",
                self.prm.nrows(),
                self.prm.ncols(),
                self.aoa.len(),
                self.aod.len()
            )));
        }
        let in_range = |a: &f64| (0.0..=PI).contains(a);
        if !self.aod.iter().chain(&self.aoa).all(in_range) {
            return Err(Error::invalid("angles must lie in [0, pi]"));
        }
        Ok(())
    }

    pub fn from_file(file: &ChannelFile) -> Result<Self> {
        let aod: Vec<f64> = file.aod.iter().map(|a| a.radians()).collect();
        let aoa: Vec<f64> = file.aoa.iter().map(|a| a.radians()).collect();
        let c = |p: &[f64; 2]| Complex64::new(p[0], p[1]);
        match &file.gains {
            GainsFile::Diagonal(g) => {
                let g: Vec<Complex64> = g.iter().map(c).collect();
                Self::diagonal(aod, aoa, &g)
            }
            GainsFile::Full(rows) => {
                let nr = rows.len();
                let nc = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != nc) {
                    return Err(Error::invalid("ragged path response matrix"));
                }
                let prm = CMat::from_fn(nr, nc, |i, j| c(&rows[i][j]));
                Self::new(aod, aoa, prm)
            }
        }
    }
}

/// Transmit and receive antenna positions (m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl AntennaLayout {
    /// Uniform grid starting at the origin.
    pub fn uniform(tx: usize, rx: usize, step: f64) -> Self {
        AntennaLayout {
            u: (0..tx).map(|i| i as f64 * step).collect(),
            v: (0..rx).map(|i| i as f64 * step).collect(),
        }
    }

    /// Checks region and spacing constraints on both sides.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.u.len() != cfg.tx_antennas || self.v.len() != cfg.rx_antennas {
            return Err(Error::invalid(format!(
                "layout has {}/{} antennas, config expects {}/{}",
                self.u.len(),
                self.v.len(),
                cfg.tx_antennas,
                cfg.rx_antennas
            )));
        }
        check_side("u", &self.u, cfg.tx_region, cfg.min_spacing)?;
        check_side("v", &self.v, cfg.rx_region, cfg.min_spacing)
    }

    pub fn is_feasible(&self, cfg: &SystemConfig) -> bool {
        self.validate(cfg).is_ok()
    }
}

/// Region and spacing check for one side of the link.
pub fn check_side(name: &str, pos: &[f64], region: f64, spacing: f64) -> Result<()> {
    let eps = LAYOUT_SLACK * region.max(spacing);
    for (i, &p) in pos.iter().enumerate() {
        if !(p >= -eps && p <= region + eps) {
            return Err(Error::invalid(format!(
                "{name}[{i}] = {p} outside [0, {region}]"
            )));
        }
        for (j, &q) in pos.iter().enumerate().skip(i + 1) {
            if (p - q).abs() < spacing * (1.0 - LAYOUT_SLACK) {
                return Err(Error::invalid(format!(
                    "{name}[{i}] and {name}[{j}] closer than {spacing}"
                )));
            }
        }
    }
    Ok(())
}

/// `2 pi / lambda`, erroring on a non-positive wavelength.
fn wavenumber(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("wavelength must be positive, got {lambda}")));
    }
    Ok(2.0 * PI / lambda)
}

fn frv(pos: f64, angles: &[f64], k: f64) -> CVec {
    CVec::from_iterator(
        angles.len(),
        angles
            .iter()
            .map(|a| Complex64::from_polar(1.0, k * pos * a.cos())),
    )
}

fn frm(pos: &[f64], angles: &[f64], k: f64) -> CMat {
    CMat::from_fn(angles.len(), pos.len(), |l, t| {
        Complex64::from_polar(1.0, k * pos[t] * angles[l].cos())
    })
}

/// Transmit field-response vector `g(u_t)`, one unit phasor per path.
pub fn transmit_frv(u_t: f64, aod: &[f64], lambda: f64) -> Result<CVec> {
    Ok(frv(u_t, aod, wavenumber(lambda)?))
}

/// Transmit field-response matrix `G(u)`, `L_t x T`.
pub fn transmit_frm(u: &[f64], aod: &[f64], lambda: f64) -> Result<CMat> {
    let k = wavenumber(lambda)?;
    if u.is_empty() {
        return Err(Error::invalid("transmit position list is empty"));
    }
    Ok(frm(u, aod, k))
}

/// Receive field-response vector `f(v_r)`.
pub fn receive_frv(v_r: f64, aoa: &[f64], lambda: f64) -> Result<CVec> {
    Ok(frv(v_r, aoa, wavenumber(lambda)?))
}

/// Receive field-response matrix `F(v)`, `L_r x R`.
pub fn receive_frm(v: &[f64], aoa: &[f64], lambda: f64) -> Result<CMat> {
    let k = wavenumber(lambda)?;
    if v.is_empty() {
        return Err(Error::invalid("receive position list is empty"));
    }
    Ok(frm(v, aoa, k))
}

/// End-to-end channel `H = F(v)^H Sigma G(u)`, `R x T`.
pub fn assemble_channel(
    layout: &AntennaLayout,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<CMat> {
    ch.check()?;
    let g = transmit_frm(&layout.u, &ch.aod, cfg.wavelength)?;
    let f = receive_frm(&layout.v, &ch.aoa, cfg.wavelength)?;
    Ok(f.adjoint() * &ch.prm * g)
}

/// Draws AoDs/AoAs uniformly on `[0, pi]` and a diagonal path response with
/// i.i.d. `CN(0, c^2 / L)` entries.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let l = cfg.paths;
    let aod: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * PI).collect();
    let aoa: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * PI).collect();
    let std = (cfg.path_gain() / l as f64 / 2.0).sqrt();
    let gains: Vec<Complex64> = (0..l)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * std, im * std)
        })
        .collect();
    ChannelRealization::diagonal(aod, aoa, &gains).expect("sampled channel is well formed")
}

/// Magnitudes of a complex matrix; handy for invariance checks.
pub fn magnitudes(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.norm())
}
