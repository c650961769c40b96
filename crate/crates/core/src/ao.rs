//! Alternating optimization of precoder and antenna positions.
//!
//! Each outer iteration runs SCA on the precoder, then moves every transmit
//! antenna and every receive antenna once (block coordinate ascent with the
//! freshest values). Every block keeps its iterate unless the true minimum
//! distance does not drop, so the recorded objective is monotone.

use web_time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::{sca_beamforming, ScaOptions};
use crate::channel::{assemble_channel, AntennaLayout, ChannelRealization};
use crate::codebook::SmCodebook;
use crate::config::{AlgorithmConfig, SystemConfig};
use crate::metrics::{self, Precoder};
use crate::position::{update_antenna, Side};
use crate::{CVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitStrategy {
    /// Both arrays on the half-wavelength grid starting at 0.
    Fpa,
    /// Uniform draws repaired to the spacing constraint.
    Random { seed: u64 },
}

fn random_side(rng: &mut ChaCha8Rng, n: usize, region: f64, spacing: f64) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * region).collect();
    p.sort_by(f64::total_cmp);
    for i in 1..n {
        p[i] = p[i].max(p[i - 1] + spacing);
    }
    if let Some(last) = p.last_mut() {
        *last = last.min(region);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        p[i] = p[i].min(p[i + 1] - spacing);
    }
    for x in &mut p {
        *x = x.clamp(0.0, region);
    }
    p
}

/// Starting point of one solve. The precoder is always uniform full power.
pub fn initialize(cfg: &SystemConfig, strategy: InitStrategy) -> Result<(Precoder, AntennaLayout)> {
    cfg.validate()?;
    let w = Precoder::uniform(cfg.tx_antennas, cfg.power);
    let layout = match strategy {
        InitStrategy::Fpa => {
            AntennaLayout::uniform(cfg.tx_antennas, cfg.rx_antennas, cfg.wavelength / 2.0)
        }
        InitStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            AntennaLayout {
                u: random_side(&mut rng, cfg.tx_antennas, cfg.tx_region, cfg.min_spacing),
                v: random_side(&mut rng, cfg.rx_antennas, cfg.rx_region, cfg.min_spacing),
            }
        }
    };
    layout.validate(cfg)?;
    Ok((w, layout))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoOptions {
    pub kappa: f64,
    pub max_iter: usize,
    pub sca: ScaOptions,
    /// Position blocks use the precoder from the start of the iteration.
    pub strict_paper_ordering: bool,
    pub move_tx: bool,
    pub move_rx: bool,
    /// Keep `w`, `u`, `v` after every iteration.
    pub record_iterates: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions::from(&AlgorithmConfig::default())
    }
}

impl From<&AlgorithmConfig> for AoOptions {
    fn from(a: &AlgorithmConfig) -> Self {
        AoOptions {
            kappa: a.kappa,
            max_iter: a.max_iter,
            sca: ScaOptions::from(a),
            strict_paper_ordering: a.strict_paper_ordering,
            move_tx: true,
            move_rx: true,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    SolverFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "block", content = "index")]
pub enum Block {
    Precoder,
    Tx(usize),
    Rx(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEta {
    pub iteration: usize,
    #[serde(flatten)]
    pub block: Block,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFailure {
    pub iteration: usize,
    #[serde(flatten)]
    pub block: Block,
    pub message: String,
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub n: usize,
    pub eta: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    /// Completed outer iterations.
    pub iterations: usize,
    /// `eta_history[0]` is the initial objective, then one value per iteration.
    pub eta_history: Vec<f64>,
    pub block_eta: Vec<BlockEta>,
    /// Milliseconds spent in each iteration.
    pub wall_ms: Vec<f64>,
    pub w_history: Vec<CVec>,
    pub u_history: Vec<Vec<f64>>,
    pub v_history: Vec<Vec<f64>>,
    pub termination: Termination,
    pub failures: Vec<BlockFailure>,
}

impl SolveRecord {
    pub fn final_eta(&self) -> f64 {
        *self.eta_history.last().expect("history starts with the initial value")
    }

    pub fn log(&self) -> Vec<IterationLog> {
        self.eta_history
            .iter()
            .enumerate()
            .map(|(n, &eta)| IterationLog {
                n,
                eta,
                wall_ms: if n == 0 { 0.0 } else { self.wall_ms[n - 1] },
            })
            .collect()
    }

    /// One JSON object per line: `{"n":..,"eta":..,"wall_ms":..}`.
    pub fn to_json_lines(&self) -> String {
        self.log()
            .iter()
            .map(|l| serde_json::to_string(l).expect("plain struct") + "\n")
            .collect()
    }

    /// Objective values in update order: initial, then one per block.
    pub fn block_trace(&self) -> Vec<f64> {
        std::iter::once(self.eta_history[0])
            .chain(self.block_eta.iter().map(|b| b.eta))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: Precoder,
    pub layout: AntennaLayout,
    pub eta: f64,
    pub record: SolveRecord,
}

fn eta_of(layout: &AntennaLayout, w: &Precoder, ch: &ChannelRealization, cb: &SmCodebook, cfg: &SystemConfig) -> Result<f64> {
    metrics::d_min(&assemble_channel(layout, ch, cfg)?, w, cb)
}

/// Runs the alternating loop from a feasible starting point.
///
/// Inner solver failures are recorded and the block keeps its last feasible
/// value; the loop then goes on with the remaining blocks.
pub fn optimize(
    cfg: &SystemConfig,
    ch: &ChannelRealization,
    cb: &SmCodebook,
    init: (Precoder, AntennaLayout),
    opts: &AoOptions,
) -> Result<Solution> {
    let (mut w, mut layout) = init;
    layout.validate(cfg)?;
    if !w.is_feasible(cfg.power) {
        return Err(Error::invalid("initial precoder exceeds the power budget"));
    }
    let mut eta = eta_of(&layout, &w, ch, cb, cfg)?;
    let mut rec = SolveRecord {
        iterations: 0,
        eta_history: vec![eta],
        block_eta: Vec::new(),
        wall_ms: Vec::new(),
        w_history: Vec::new(),
        u_history: Vec::new(),
        v_history: Vec::new(),
        termination: Termination::MaxIterations,
        failures: Vec::new(),
    };
    if opts.record_iterates {
        rec.w_history.push(w.w.clone());
        rec.u_history.push(layout.u.clone());
        rec.v_history.push(layout.v.clone());
    }

    for n in 1..=opts.max_iter {
        let start = Instant::now();
        let w_start = w.clone();
        let prev = eta;

        let h = assemble_channel(&layout, ch, cfg)?;
        match sca_beamforming(&h, cb, &w, cfg.power, &opts.sca) {
            Ok(r) => {
                w = r.w;
                eta = *r.eta_history.last().unwrap_or(&eta);
            }
            Err(Error::SolverFailure { message, best_w, .. }) => {
                let cand = Precoder::new(best_w);
                let cand_eta = metrics::d_min(&h, &cand, cb)?;
                if cand.is_feasible(cfg.power) && cand_eta >= eta {
                    w = cand;
                    eta = cand_eta;
                }
                rec.failures.push(BlockFailure { iteration: n, block: Block::Precoder, message });
            }
            Err(e) => return Err(e),
        }
        rec.block_eta.push(BlockEta { iteration: n, block: Block::Precoder, eta });

        let w_pos = if opts.strict_paper_ordering { w_start } else { w.clone() };
        let blocks = (0..cfg.tx_antennas)
            .filter(|_| opts.move_tx)
            .map(|k| (Side::Tx, k))
            .chain((0..cfg.rx_antennas).filter(|_| opts.move_rx).map(|r| (Side::Rx, r)));
        for (side, k) in blocks {
            let block = match side {
                Side::Tx => Block::Tx(k),
                Side::Rx => Block::Rx(k),
            };
            match update_antenna(side, k, ch, &mut layout, &w_pos, cb, cfg) {
                Ok(_) => {}
                Err(e @ Error::InvalidParameter(_)) => return Err(e),
                Err(e) => rec.failures.push(BlockFailure { iteration: n, block, message: e.to_string() }),
            }
            eta = eta_of(&layout, &w, ch, cb, cfg)?;
            rec.block_eta.push(BlockEta { iteration: n, block, eta });
        }

        rec.iterations = n;
        rec.eta_history.push(eta);
        rec.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if opts.record_iterates {
            rec.w_history.push(w.w.clone());
            rec.u_history.push(layout.u.clone());
            rec.v_history.push(layout.v.clone());
        }
        if (eta - prev).abs() / prev.max(1e-15) < opts.kappa {
            rec.termination = Termination::Converged;
            break;
        }
    }
    if !rec.failures.is_empty() && rec.termination != Termination::Converged {
        rec.termination = Termination::SolverFailure;
    }
    Ok(Solution { w, layout, eta, record: rec })
}

/// Seed of the `s`-th random start (`s >= 1`).
pub fn start_seed(base: u64, s: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64)
}

/// Start 0 is the half-wavelength grid; further starts are random layouts.
/// Returns the solution with the largest final objective (earliest on ties).
pub fn optimize_multistart(
    cfg: &SystemConfig,
    ch: &ChannelRealization,
    cb: &SmCodebook,
    algo: &AlgorithmConfig,
    opts: &AoOptions,
) -> Result<Solution> {
    let mut best: Option<Solution> = None;
    for s in 0..algo.starts.max(1) {
        let strategy = if s == 0 {
            InitStrategy::Fpa
        } else {
            InitStrategy::Random { seed: start_seed(algo.start_seed, s) }
        };
        let sol = optimize(cfg, ch, cb, initialize(cfg, strategy)?, opts)?;
        if best.as_ref().is_none_or(|b| sol.eta > b.eta) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use proptest::prelude::*;

    fn setup(seed: u64) -> (SystemConfig, ChannelRealization, SmCodebook) {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = sample_channel(&cfg, &mut rng);
        let cb = SmCodebook::for_config(&cfg).unwrap();
        (cfg, ch, cb)
    }

    #[test]
    fn fpa_init_is_half_wavelength_grid() {
        let cfg = SystemConfig::default();
        let (w, l) = initialize(&cfg, InitStrategy::Fpa).unwrap();
        for (a, b) in l.u.iter().zip([0.0, 0.025, 0.05, 0.075]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w.power() - cfg.power).abs() < 1e-15);
    }

    #[test]
    fn random_init_deterministic_and_feasible() {
        let cfg = SystemConfig::default();
        for s in 0..1000 {
            let a = initialize(&cfg, InitStrategy::Random { seed: s }).unwrap();
            let b = initialize(&cfg, InitStrategy::Random { seed: s }).unwrap();
            assert_eq!(a.1, b.1);
            a.1.validate(&cfg).unwrap();
        }
    }

    #[test]
    fn random_init_tight_region() {
        let cfg = SystemConfig {
            tx_region: 3.0 * 0.025,
            rx_region: 3.0 * 0.025,
            ..SystemConfig::default()
        };
        for s in 0..100 {
            let (_, l) = initialize(&cfg, InitStrategy::Random { seed: s }).unwrap();
            l.validate(&cfg).unwrap();
        }
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let cfg = SystemConfig {
            tx_region: 0.05,
            ..SystemConfig::default()
        };
        assert!(initialize(&cfg, InitStrategy::Fpa).is_err());
    }

    #[test]
    fn ao_is_monotone_and_feasible() {
        let (cfg, ch, cb) = setup(21);
        let opts = AoOptions {
            record_iterates: true,
            ..AoOptions::default()
        };
        let init = initialize(&cfg, InitStrategy::Fpa).unwrap();
        let eta0 = eta_of(&init.1, &init.0, &ch, &cb, &cfg).unwrap();
        let sol = optimize(&cfg, &ch, &cb, init, &opts).unwrap();
        let trace = sol.record.block_trace();
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(sol.eta >= eta0 - 1e-9);
        for (u, v) in sol.record.u_history.iter().zip(&sol.record.v_history) {
            AntennaLayout { u: u.clone(), v: v.clone() }.validate(&cfg).unwrap();
        }
        for w in &sol.record.w_history {
            assert!(w.norm_squared() <= cfg.power * (1.0 + 1e-9));
        }
        assert_eq!(sol.record.log().len(), sol.record.iterations + 1);
        assert_eq!(sol.record.to_json_lines().lines().count(), sol.record.iterations + 1);
    }

    #[test]
    fn ao_is_deterministic() {
        let (cfg, ch, cb) = setup(22);
        let run = || {
            let init = initialize(&cfg, InitStrategy::Fpa).unwrap();
            optimize(&cfg, &ch, &cb, init, &AoOptions::default()).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.record.eta_history, b.record.eta_history);
        assert_eq!(a.layout, b.layout);
    }

    #[test]
    fn frozen_side_never_moves() {
        let (cfg, ch, cb) = setup(23);
        let opts = AoOptions {
            move_rx: false,
            record_iterates: true,
            ..AoOptions::default()
        };
        let init = initialize(&cfg, InitStrategy::Fpa).unwrap();
        let v0 = init.1.v.clone();
        let sol = optimize(&cfg, &ch, &cb, init, &opts).unwrap();
        assert!(sol.record.v_history.iter().all(|v| *v == v0));
    }

    #[test]
    fn multistart_not_worse_than_single() {
        let (cfg, ch, cb) = setup(24);
        let mut algo = AlgorithmConfig::default();
        let opts = AoOptions::from(&algo);
        let one = optimize_multistart(&cfg, &ch, &cb, &algo, &opts).unwrap();
        algo.starts = 3;
        let three = optimize_multistart(&cfg, &ch, &cb, &algo, &opts).unwrap();
        assert!(three.eta >= one.eta);
    }

    #[test]
    fn strict_ordering_runs() {
        let (cfg, ch, cb) = setup(25);
        let opts = AoOptions {
            strict_paper_ordering: true,
            max_iter: 5,
            ..AoOptions::default()
        };
        let init = initialize(&cfg, InitStrategy::Fpa).unwrap();
        let sol = optimize(&cfg, &ch, &cb, init, &opts).unwrap();
        sol.layout.validate(&cfg).unwrap();
        assert!(sol.record.iterations <= 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_repair_feasible(seed in any::<u64>(), n in 1usize..=8, extra in 0.0f64..0.3) {
            let d = 0.025;
            let region = (n as f64 - 1.0) * d + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_side(&mut rng, n, region, d);
            for w in p.windows(2) {
                prop_assert!(w[1] - w[0] >= d * (1.0 - 1e-12));
            }
            prop_assert!(p.iter().all(|&x| (0.0..=region).contains(&x)));
        }
    }
}
