//! Maximum-likelihood detection and Monte Carlo bit error rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::SmCodebook;
use crate::config::{BerSettings, SystemConfig};
use crate::metrics::{self, Precoder};
use crate::{CMat, CVec, Complex64, Error, Result};

/// Exhaustive ML detector over precomputed noiseless receive points.
#[derive(Debug, Clone)]
pub struct Detector {
    points: Vec<CVec>,
}

impl Detector {
    pub fn new(h: &CMat, w: &Precoder, cb: &SmCodebook) -> Self {
        Detector {
            points: metrics::received_points(h, w, cb),
        }
    }

    /// Index of the closest receive point; the lowest index wins ties.
    pub fn detect(&self, y: &CVec) -> usize {
        let mut best = (0, f64::INFINITY);
        for (s, p) in self.points.iter().enumerate() {
            let d: f64 = y.iter().zip(p.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d < best.1 {
                best = (s, d);
            }
        }
        best.0
    }

    pub fn point(&self, s: usize) -> &CVec {
        &self.points[s]
    }
}

/// `argmin_s ||y - H diag(w) x_s||^2`.
pub fn ml_detect(y: &CVec, h: &CMat, w: &Precoder, cb: &SmCodebook) -> usize {
    Detector::new(h, w, cb).detect(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    /// Set when the noise power was derived from an SNR.
    pub snr_db: Option<f64>,
    pub sigma2: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub symbol_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    pub ser: f64,
    pub seed: u64,
}

impl BerResult {
    /// Binomial standard error of `ber`.
    pub fn std_error(&self) -> f64 {
        if self.total_bits == 0 {
            return 0.0;
        }
        (self.ber * (1.0 - self.ber) / self.total_bits as f64).sqrt()
    }
}

/// Monte Carlo BER at a given noise power.
///
/// Runs until `max_bits` bits, or until at least `min_bits` bits and
/// `target_errors` bit errors have been seen.
pub fn simulate_ber_sigma2(
    h: &CMat,
    w: &Precoder,
    cb: &SmCodebook,
    sigma2: f64,
    settings: &BerSettings,
    seed: u64,
) -> Result<BerResult> {
    let bps = cb.bits_per_symbol() as u64;
    if settings.min_bits < bps {
        return Err(Error::invalid(format!(
            "min_bits {} below bits per symbol {bps}",
            settings.min_bits
        )));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("noise power must be finite and >= 0, got {sigma2}")));
    }
    let det = Detector::new(h, w, cb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (sigma2 / 2.0).sqrt();
    let rows = h.nrows();
    let mut y = CVec::zeros(rows);
    let (mut trials, mut bit_errors, mut symbol_errors, mut bits) = (0u64, 0u64, 0u64, 0u64);
    while bits < settings.max_bits && (bits < settings.min_bits || bit_errors < settings.target_errors) {
        let s = rng.random_range(0..cb.len());
        let p = det.point(s);
        for r in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            y[r] = p[r] + Complex64::new(re * scale, im * scale);
        }
        let d = det.detect(&y);
        if d != s {
            symbol_errors += 1;
            bit_errors += cb.bit_distance(s, d) as u64;
        }
        trials += 1;
        bits += bps;
    }
    Ok(BerResult {
        snr_db: None,
        sigma2,
        trials,
        bit_errors,
        symbol_errors,
        total_bits: bits,
        ber: bit_errors as f64 / bits as f64,
        ser: symbol_errors as f64 / trials as f64,
        seed,
    })
}

/// Monte Carlo BER at `snr_db`, with the noise power taken from `cfg`.
pub fn simulate_ber(
    h: &CMat,
    w: &Precoder,
    cb: &SmCodebook,
    cfg: &SystemConfig,
    snr_db: f64,
    settings: &BerSettings,
    seed: u64,
) -> Result<BerResult> {
    let mut r = simulate_ber_sigma2(h, w, cb, cfg.noise_for_snr(snr_db), settings, seed)?;
    r.snr_db = Some(snr_db);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, sample_channel, AntennaLayout};
    use crate::config::SnrReference;

    fn random_h(rng: &mut ChaCha8Rng, r: usize, t: usize) -> CMat {
        CMat::from_fn(r, t, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn settings(bits: u64) -> BerSettings {
        BerSettings {
            min_bits: bits,
            max_bits: bits,
            target_errors: 100,
        }
    }

    #[test]
    fn noiseless_detection_is_exact() {
        let cb = SmCodebook::build(4, 4).unwrap();
        let w = Precoder::uniform(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let h = random_h(&mut rng, 4, 4);
            let det = Detector::new(&h, &w, &cb);
            for s in 0..cb.len() {
                assert_eq!(det.detect(det.point(s)), s);
            }
        }
    }

    #[test]
    fn zero_channel_picks_first_symbol() {
        let cb = SmCodebook::build(4, 4).unwrap();
        let w = Precoder::uniform(4, 1.0);
        let y = CVec::from_element(4, Complex64::new(0.3, -1.0));
        assert_eq!(ml_detect(&y, &CMat::zeros(4, 4), &w, &cb), 0);
    }

    #[test]
    fn matches_naive_loop() {
        let cb = SmCodebook::build(4, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_h(&mut rng, 4, 4);
        let w = Precoder::new(CVec::from_fn(4, |_, _| Complex64::new(rng.random(), rng.random())));
        for _ in 0..200 {
            let y = CVec::from_fn(4, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (s, sym) in cb.symbols().iter().enumerate() {
                let mut d = 0.0;
                for r in 0..4 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..4 {
                        acc += h[(r, t)] * w.w[t] * sym.vector[t];
                    }
                    d += (y[r] - acc).norm_sqr();
                }
                if d < best_d {
                    best_d = d;
                    best = s;
                }
            }
            assert_eq!(ml_detect(&y, &h, &w, &cb), best);
        }
    }

    #[test]
    fn high_snr_is_error_free() {
        let cb = SmCodebook::build(4, 4).unwrap();
        let w = Precoder::uniform(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_h(&mut rng, 4, 4);
        let r = simulate_ber_sigma2(&h, &w, &cb, 1e-12, &settings(10_000), 9).unwrap();
        assert_eq!(r.bit_errors, 0);
        assert!(r.total_bits >= 10_000);
    }

    #[test]
    fn zero_channel_is_coin_flip() {
        let cb = SmCodebook::build(4, 4).unwrap();
        let w = Precoder::uniform(4, 1.0);
        let r = simulate_ber_sigma2(&CMat::zeros(4, 4), &w, &cb, 1.0, &settings(20_000), 4).unwrap();
        assert!((r.ber - 0.5).abs() <= 0.02, "{}", r.ber);
        assert_eq!(r.ber, r.bit_errors as f64 / r.total_bits as f64);
    }

    #[test]
    fn deterministic_under_seed() {
        let cb = SmCodebook::build(2, 4).unwrap();
        let w = Precoder::uniform(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_h(&mut rng, 4, 2);
        let a = simulate_ber_sigma2(&h, &w, &cb, 0.5, &settings(5_000), 77).unwrap();
        let b = simulate_ber_sigma2(&h, &w, &cb, 0.5, &settings(5_000), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stop_and_minimum() {
        let cb = SmCodebook::build(4, 4).unwrap();
        let w = Precoder::uniform(4, 1.0);
        let s = BerSettings {
            min_bits: 1_000,
            max_bits: 1_000_000,
            target_errors: 50,
        };
        let r = simulate_ber_sigma2(&CMat::zeros(4, 4), &w, &cb, 1.0, &s, 1).unwrap();
        assert_eq!(r.total_bits, 1_000);
        assert!(simulate_ber_sigma2(&CMat::zeros(4, 4), &w, &cb, 1.0, &BerSettings { min_bits: 2, ..s }, 1).is_err());
    }

    #[test]
    fn ber_decreases_with_snr() {
        let cfg = SystemConfig {
            snr_reference: SnrReference::Receive,
            ..SystemConfig::default()
        };
        let cb = SmCodebook::for_config(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = sample_channel(&cfg, &mut rng);
        let h = assemble_channel(&AntennaLayout::uniform(4, 4, 0.025), &ch, &cfg).unwrap();
        let w = Precoder::uniform(4, cfg.power);
        let st = settings(100_000);
        let res: Vec<BerResult> = [0.0, 4.0, 8.0, 12.0, 16.0]
            .iter()
            .map(|&snr| simulate_ber(&h, &w, &cb, &cfg, snr, &st, 11).unwrap())
            .collect();
        for p in res.windows(2) {
            let se = (p[0].std_error().powi(2) + p[1].std_error().powi(2)).sqrt();
            assert!(p[1].ber <= p[0].ber + 3.0 * se, "{:?}", res);
        }
    }
}
