//! Minimum pairwise receive distance and the union error bound built on it.

use serde::{Deserialize, Serialize};

use crate::codebook::SmCodebook;
use crate::{CMat, CVec, Complex64, Error, Result};

/// Slack allowed on the power constraint `||w||^2 <= P_T`.
pub const POWER_SLACK: f64 = 1e-9;

/// Diagonal precoder weights `w`, `W = diag(w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precoder {
    pub w: CVec,
}

impl Precoder {
    pub fn new(w: CVec) -> Self {
        Precoder { w }
    }

    /// `sqrt(P_T / T)` on every antenna, so `||w||^2 = P_T`.
    pub fn uniform(tx: usize, power: f64) -> Self {
        let a = (power / tx as f64).sqrt();
        Precoder {
            w: CVec::from_element(tx, Complex64::new(a, 0.0)),
        }
    }

    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    pub fn is_feasible(&self, power: f64) -> bool {
        self.w.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && self.power() <= power + POWER_SLACK
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Minimum squared distance.
    pub d_min: f64,
    /// Codebook indices `(i, j)` of the closest pair.
    pub argmin_pair: (usize, usize),
    /// Position of that pair in [`SmCodebook::pairs`].
    pub pair_index: usize,
    pub all_distances: Option<Vec<f64>>,
}

/// Noise-free received points `H W x_s` for every codebook symbol.
pub fn received_points(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Vec<CVec> {
    cb.symbols()
        .iter()
        .map(|s| h.column(s.antenna) * (w.w[s.antenna] * s.point))
        .collect()
}

fn check_dims(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Result<()> {
    if cb.pairs().is_empty() {
        return Err(Error::invalid("codebook has no symbol pairs"));
    }
    if h.ncols() != cb.tx() || w.len() != cb.tx() {
        return Err(Error::invalid(format!(
            "channel has {} columns and precoder {} entries, codebook expects {}",
            h.ncols(),
            w.len(),
            cb.tx()
        )));
    }
    Ok(())
}

/// Squared distances `||H W (x_i - x_j)||^2` in codebook pair order.
pub fn pair_distances(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Result<Vec<f64>> {
    check_dims(h, w, cb)?;
    let pts = received_points(h, w, cb);
    Ok(cb
        .pairs()
        .iter()
        .map(|p| {
            pts[p.i]
                .iter()
                .zip(pts[p.j].iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        })
        .collect())
}

fn argmin(d: &[f64]) -> (usize, f64) {
    // Strict comparison keeps the lowest index on ties.
    d.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
}

/// Minimum squared receive distance over all unordered symbol pairs.
pub fn min_distance(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Result<DistanceReport> {
    let d = pair_distances(h, w, cb)?;
    let (k, d_min) = argmin(&d);
    let p = &cb.pairs()[k];
    Ok(DistanceReport {
        d_min,
        argmin_pair: (p.i, p.j),
        pair_index: k,
        all_distances: Some(d),
    })
}

/// Just the minimum distance value.
pub fn d_min(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Result<f64> {
    Ok(argmin(&pair_distances(h, w, cb)?).1)
}

/// Gaussian tail `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Union bound `iota * Q(sqrt(d_min / (2 sigma^2)))`. Not clamped to 1.
pub fn pep_upper_bound(d_min: f64, sigma2: f64, iota: usize) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("noise power must be positive, got {sigma2}")));
    }
    if d_min < 0.0 {
        return Err(Error::invalid("d_min must be non-negative"));
    }
    if iota < 1 {
        return Err(Error::invalid("pair count must be at least 1"));
    }
    Ok(iota as f64 * q_function((d_min / (2.0 * sigma2)).sqrt()))
}
