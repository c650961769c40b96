//! Single-antenna position update.
//!
//! With the precoder and all other antennas fixed, the received distance of a
//! symbol pair is a trigonometric polynomial in the moving antenna's
//! coordinate:
//!
//! ```text
//! y(x) = constant + sum_n amp_n * cos(freq_n * x + phase_n)
//! ```
//!
//! For a transmit antenna `k` the terms come from `|c_k|^2 g^H B^H B g`
//! (path pairs `i < j`) and from the cross term with the interference
//! `Lambda = sum_{t != k} c_t B g(u_t)` (receive row `r`, path `i`), where
//! `B = F(v)^H Sigma` and `c = W (x_i - x_j)`. For a receive antenna `r` only
//! row `r` of `F(v)^H q`, `q = Sigma G(u) W (x_i - x_j)`, depends on `v_r`.
//!
//! `|y''| <= sum amp * freq^2 =: eps`, so
//! `y(x0) + y'(x0) (x - x0) - eps/2 (x - x0)^2` is a concave global lower bound
//! that is tight at `x0`. The update maximizes the minimum of those bounds
//! over the feasible part of the region by golden-section search.

use std::f64::consts::PI;

use crate::channel::{assemble_channel, AntennaLayout, ChannelRealization, LAYOUT_SLACK};
use crate::codebook::{DiffPair, SmCodebook};
use crate::config::SystemConfig;
use crate::metrics::{self, Precoder};
use crate::{CMat, CVec, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigSeries {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn value(&self, x: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.amp * (t.freq * x + t.phase).cos())
                .sum::<f64>()
    }

    pub fn grad(&self, x: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| t.amp * t.freq * (t.freq * x + t.phase).sin())
            .sum::<f64>()
    }

    pub fn hess(&self, x: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| t.amp * t.freq * t.freq * (t.freq * x + t.phase).cos())
            .sum::<f64>()
    }

    /// `sum amp * freq^2`, an upper bound on `|hess|` everywhere.
    pub fn curvature_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amp * t.freq * t.freq).sum()
    }

    fn push(&mut self, amp: f64, freq: f64, phase: f64) {
        if amp > 0.0 {
            self.terms.push(TrigTerm { amp, freq, phase });
        }
    }
}

/// Common access to the trigonometric form of one pair's distance.
pub trait PositionExpansion {
    fn series(&self) -> &TrigSeries;

    fn value(&self, x: f64) -> f64 {
        self.series().value(x)
    }

    fn grad(&self, x: f64) -> f64 {
        self.series().grad(x)
    }

    fn hess(&self, x: f64) -> f64 {
        self.series().hess(x)
    }

    fn epsilon(&self) -> f64 {
        self.series().curvature_bound()
    }

    fn surrogate(&self, center: f64) -> ScalarSurrogate {
        ScalarSurrogate::from_series(self.series(), center)
    }
}

pub fn y_value(x: f64, e: &impl PositionExpansion) -> f64 {
    e.value(x)
}

pub fn y_grad(x: f64, e: &impl PositionExpansion) -> f64 {
    e.grad(x)
}

pub fn y_hess(x: f64, e: &impl PositionExpansion) -> f64 {
    e.hess(x)
}

pub fn epsilon_bound(e: &impl PositionExpansion) -> f64 {
    e.epsilon()
}

/// Expansion of one pair's distance in a transmit antenna position.
#[derive(Debug, Clone, PartialEq)]
pub struct TxExpansion {
    pub antenna: usize,
    pub pair: (usize, usize),
    /// `c_k`, the moving antenna's weight in `W (x_i - x_j)`.
    pub c_k: Complex64,
    /// `Lambda`, contribution of the other antennas, length `R`.
    pub interference: CVec,
    pub series: TrigSeries,
}

impl PositionExpansion for TxExpansion {
    fn series(&self) -> &TrigSeries {
        &self.series
    }
}

/// Expansion of one pair's distance in a receive antenna position.
#[derive(Debug, Clone, PartialEq)]
pub struct RxExpansion {
    pub antenna: usize,
    pub pair: (usize, usize),
    /// `Sigma G(u) W (x_i - x_j)`, length `L_r`.
    pub q: CVec,
    pub series: TrigSeries,
}

impl PositionExpansion for RxExpansion {
    fn series(&self) -> &TrigSeries {
        &self.series
    }
}

fn wavenumber(lambda: f64) -> f64 {
    2.0 * PI / lambda
}

/// Quantities shared by every transmit expansion at one layout.
#[derive(Debug, Clone)]
pub struct TxContext {
    /// `B = F(v)^H Sigma`, `R x L_t`.
    pub b: CMat,
    /// `B^H B`.
    pub bhb: CMat,
    /// Columns `B g(u_t)`.
    bg: CMat,
    cos_aod: Vec<f64>,
    kappa: f64,
    w: CVec,
}

impl TxContext {
    pub fn new(
        ch: &ChannelRealization,
        layout: &AntennaLayout,
        w: &Precoder,
        lambda: f64,
    ) -> Result<Self> {
        let f = crate::channel::receive_frm(&layout.v, &ch.aoa, lambda)?;
        let g = crate::channel::transmit_frm(&layout.u, &ch.aod, lambda)?;
        let b = f.adjoint() * &ch.prm;
        let bhb = b.adjoint() * &b;
        let bhb = (&bhb + bhb.adjoint()) * Complex64::new(0.5, 0.0);
        let bg = &b * g;
        Ok(TxContext {
            b,
            bhb,
            bg,
            cos_aod: ch.aod.iter().map(|a| a.cos()).collect(),
            kappa: wavenumber(lambda),
            w: w.w.clone(),
        })
    }

    /// `c = W (x_i - x_j)`.
    pub fn pair_weights(&self, pair: &DiffPair) -> CVec {
        self.w.component_mul(&pair.diff)
    }

    pub fn expansion(&self, k: usize, pair: &DiffPair) -> TxExpansion {
        let c = self.pair_weights(pair);
        let c_k = c[k];
        let rows = self.b.nrows();
        let paths = self.b.ncols();
        let mut lambda = CVec::zeros(rows);
        for t in (0..c.len()).filter(|&t| t != k) {
            lambda.axpy(c[t], &self.bg.column(t), Complex64::new(1.0, 0.0));
        }

        let ck2 = c_k.norm_sqr();
        let mut series = TrigSeries {
            constant: ck2 * (0..paths).map(|i| self.bhb[(i, i)].re).sum::<f64>()
                + lambda.norm_squared(),
            terms: Vec::new(),
        };
        if ck2 > 0.0 {
            for i in 0..paths {
                for j in i + 1..paths {
                    let q = self.bhb[(i, j)];
                    series.push(
                        2.0 * ck2 * q.norm(),
                        self.kappa * (self.cos_aod[j] - self.cos_aod[i]),
                        q.arg(),
                    );
                }
            }
            let ck_abs = c_k.norm();
            let ck_arg = c_k.arg();
            for r in 0..rows {
                let lam = lambda[r];
                for i in 0..paths {
                    let bri = self.b[(r, i)];
                    series.push(
                        2.0 * ck_abs * bri.norm() * lam.norm(),
                        -self.kappa * self.cos_aod[i],
                        -bri.arg() - ck_arg + lam.arg(),
                    );
                }
            }
        }
        TxExpansion {
            antenna: k,
            pair: (pair.i, pair.j),
            c_k,
            interference: lambda,
            series,
        }
    }
}

/// Free-function form of [`TxContext::expansion`].
pub fn build_tx_expansion(
    k: usize,
    pair: &DiffPair,
    ch: &ChannelRealization,
    layout: &AntennaLayout,
    w: &Precoder,
    lambda: f64,
) -> Result<TxExpansion> {
    if k >= layout.u.len() {
        return Err(Error::invalid(format!("transmit antenna {k} out of range")));
    }
    Ok(TxContext::new(ch, layout, w, lambda)?.expansion(k, pair))
}

/// Quantities shared by every receive expansion at one layout.
#[derive(Debug, Clone)]
pub struct RxContext {
    /// `Sigma G(u) W`, `L_r x T`.
    sgw: CMat,
    /// `F(v)`, `L_r x R`.
    f: CMat,
    cos_aoa: Vec<f64>,
    kappa: f64,
}

impl RxContext {
    pub fn new(
        ch: &ChannelRealization,
        layout: &AntennaLayout,
        w: &Precoder,
        lambda: f64,
    ) -> Result<Self> {
        let f = crate::channel::receive_frm(&layout.v, &ch.aoa, lambda)?;
        let g = crate::channel::transmit_frm(&layout.u, &ch.aod, lambda)?;
        let sgw = &ch.prm * g * CMat::from_diagonal(&w.w);
        Ok(RxContext {
            sgw,
            f,
            cos_aoa: ch.aoa.iter().map(|a| a.cos()).collect(),
            kappa: wavenumber(lambda),
        })
    }

    pub fn expansion(&self, r: usize, pair: &DiffPair) -> RxExpansion {
        let q = &self.sgw * &pair.diff;
        let paths = q.len();
        let others: f64 = (0..self.f.ncols())
            .filter(|&s| s != r)
            .map(|s| self.f.column(s).dotc(&q).norm_sqr())
            .sum();
        let mut series = TrigSeries {
            constant: q.norm_squared() + others,
            terms: Vec::new(),
        };
        for i in 0..paths {
            for j in i + 1..paths {
                let qij = q[i] * q[j].conj();
                series.push(
                    2.0 * qij.norm(),
                    self.kappa * (self.cos_aoa[j] - self.cos_aoa[i]),
                    qij.arg(),
                );
            }
        }
        RxExpansion {
            antenna: r,
            pair: (pair.i, pair.j),
            q,
            series,
        }
    }
}

/// Free-function form of [`RxContext::expansion`].
pub fn build_rx_expansion(
    r: usize,
    pair: &DiffPair,
    ch: &ChannelRealization,
    layout: &AntennaLayout,
    w: &Precoder,
    lambda: f64,
) -> Result<RxExpansion> {
    if r >= layout.v.len() {
        return Err(Error::invalid(format!("receive antenna {r} out of range")));
    }
    Ok(RxContext::new(ch, layout, w, lambda)?.expansion(r, pair))
}

/// Concave quadratic lower bound `value + slope (x - c) - curvature/2 (x - c)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSurrogate {
    pub center: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl ScalarSurrogate {
    pub fn from_series(series: &TrigSeries, center: f64) -> Self {
        ScalarSurrogate {
            center,
            value: series.value(center),
            slope: series.grad(center),
            curvature: series.curvature_bound(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        self.value + self.slope * d - 0.5 * self.curvature * d * d
    }
}

pub fn surrogate_lb(x: f64, s: &ScalarSurrogate) -> f64 {
    s.eval(x)
}

/// `[0, region]` minus the open `spacing`-balls around the other antennas.
///
/// Endpoints are nudged outward by ulps so that any point of a returned
/// interval is at least `spacing` from every other antenna in floating point.
/// The current position is always covered: if it only satisfies the spacing
/// within [`LAYOUT_SLACK`], it is returned as a degenerate interval.
pub fn feasible_intervals(k: usize, positions: &[f64], region: f64, spacing: f64) -> Vec<(f64, f64)> {
    let mut intervals = vec![(0.0, region)];
    for (c, &pc) in positions.iter().enumerate() {
        if c == k {
            continue;
        }
        let mut lo = pc - spacing;
        while pc - lo < spacing {
            lo = lo.next_down();
        }
        let mut hi = pc + spacing;
        while hi - pc < spacing {
            hi = hi.next_up();
        }
        let mut next = Vec::with_capacity(intervals.len() + 1);
        for (a, b) in intervals {
            if a <= lo {
                next.push((a, b.min(lo)));
            }
            if hi <= b {
                next.push((a.max(hi), b));
            }
        }
        intervals = next;
    }
    if let Some(&cur) = positions.get(k) {
        let covered = intervals.iter().any(|&(a, b)| a <= cur && cur <= b);
        let slack_ok = positions
            .iter()
            .enumerate()
            .all(|(c, &p)| c == k || (p - cur).abs() >= spacing * (1.0 - LAYOUT_SLACK));
        if !covered && slack_ok && (0.0..=region).contains(&cur) {
            intervals.push((cur, cur));
        }
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    intervals
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

fn min_surrogate(surrogates: &[ScalarSurrogate], x: f64) -> f64 {
    surrogates
        .iter()
        .map(|s| s.eval(x))
        .fold(f64::INFINITY, f64::min)
}

/// Maximizes `min_p surrogate_p(x)` over the union of `intervals`.
///
/// The objective is concave on each interval, so golden-section search per
/// interval finds its maximum to within `tol`. The expansion point is kept
/// unless a strictly better point is found.
pub fn solve_position_subproblem(
    surrogates: &[ScalarSurrogate],
    intervals: &[(f64, f64)],
    tol: f64,
) -> Result<(f64, f64)> {
    if surrogates.is_empty() {
        return Err(Error::invalid("position subproblem needs at least one surrogate"));
    }
    if intervals.is_empty() {
        return Err(Error::invalid("position subproblem has no feasible interval"));
    }
    let g = |x: f64| min_surrogate(surrogates, x);
    let center = surrogates[0].center;
    let mut best = if intervals.iter().any(|&(a, b)| a <= center && center <= b) {
        (center, g(center))
    } else {
        (intervals[0].0, g(intervals[0].0))
    };
    for &(a, b) in intervals {
        let mut cands = vec![a, b];
        if b - a > tol {
            cands.push(golden_section_max(g, a, b, tol));
        }
        for x in cands {
            let v = g(x);
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    Ok(best)
}

/// Outcome of one single-antenna update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionUpdate {
    pub position: f64,
    pub eta_before: f64,
    pub eta_after: f64,
    pub moved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

/// Moves one antenna to the maximizer of its surrogate subproblem, keeping the
/// move only if the true minimum distance does not drop.
pub fn update_antenna(
    side: Side,
    k: usize,
    ch: &ChannelRealization,
    layout: &mut AntennaLayout,
    w: &Precoder,
    cb: &SmCodebook,
    cfg: &SystemConfig,
) -> Result<PositionUpdate> {
    let h = assemble_channel(layout, ch, cfg)?;
    let eta_before = metrics::d_min(&h, w, cb)?;
    let (positions, region) = match side {
        Side::Tx => (&layout.u, cfg.tx_region),
        Side::Rx => (&layout.v, cfg.rx_region),
    };
    if k >= positions.len() {
        return Err(Error::invalid(format!("antenna index {k} out of range")));
    }
    let current = positions[k];
    let surrogates: Vec<ScalarSurrogate> = match side {
        Side::Tx => {
            let ctx = TxContext::new(ch, layout, w, cfg.wavelength)?;
            cb.pairs()
                .iter()
                .map(|p| ctx.expansion(k, p))
                // c_k = 0: constant in u_k, cannot constrain the move.
                .filter(|e| e.c_k.norm_sqr() > 0.0)
                .map(|e| e.surrogate(current))
                .collect()
        }
        Side::Rx => {
            let ctx = RxContext::new(ch, layout, w, cfg.wavelength)?;
            cb.pairs()
                .iter()
                .map(|p| ctx.expansion(k, p))
                .filter(|e| !e.series.terms.is_empty())
                .map(|e| e.surrogate(current))
                .collect()
        }
    };
    let unchanged = PositionUpdate {
        position: current,
        eta_before,
        eta_after: eta_before,
        moved: false,
    };
    if surrogates.is_empty() {
        return Ok(unchanged);
    }
    let intervals = feasible_intervals(k, positions, region, cfg.min_spacing);
    let (x, _) = solve_position_subproblem(&surrogates, &intervals, 1e-9 * region)?;
    if x == current {
        return Ok(unchanged);
    }

    let mut trial = layout.clone();
    match side {
        Side::Tx => trial.u[k] = x,
        Side::Rx => trial.v[k] = x,
    }
    let eta_after = metrics::d_min(&assemble_channel(&trial, ch, cfg)?, w, cb)?;
    if eta_after >= eta_before {
        *layout = trial;
        Ok(PositionUpdate {
            position: x,
            eta_before,
            eta_after,
            moved: true,
        })
    } else {
        Ok(unchanged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Instance {
        cfg: SystemConfig,
        ch: ChannelRealization,
        layout: AntennaLayout,
        w: Precoder,
        cb: SmCodebook,
    }

    fn instance(seed: u64, paths: usize) -> Instance {
        let cfg = SystemConfig {
            paths,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = sample_channel(&cfg, &mut rng);
        let layout = AntennaLayout {
            u: vec![0.0, 0.1, 0.2, 0.3],
            v: vec![0.05, 0.15, 0.25, 0.35],
        };
        let w = Precoder::new(CVec::from_fn(4, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }));
        Instance {
            cfg,
            ch,
            layout,
            w,
            cb: SmCodebook::build(4, 4).unwrap(),
        }
    }

    fn direct_tx(inst: &Instance, k: usize, x: f64, pair: &DiffPair) -> f64 {
        let mut l = inst.layout.clone();
        l.u[k] = x;
        let h = assemble_channel(&l, &inst.ch, &inst.cfg).unwrap();
        (h * inst.w.w.component_mul(&pair.diff)).norm_squared()
    }

    fn direct_rx(inst: &Instance, r: usize, x: f64, pair: &DiffPair) -> f64 {
        let mut l = inst.layout.clone();
        l.v[r] = x;
        let h = assemble_channel(&l, &inst.ch, &inst.cfg).unwrap();
        (h * inst.w.w.component_mul(&pair.diff)).norm_squared()
    }

    #[test]
    fn tx_expansion_matches_direct_norm() {
        let inst = instance(1, 6);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in inst.cb.pairs().iter().step_by(7) {
            for k in 0..4 {
                let e = ctx.expansion(k, p);
                for _ in 0..10 {
                    let x = rng.random::<f64>() * 0.4;
                    let direct = direct_tx(&inst, k, x, p);
                    assert!((e.value(x) - direct).abs() <= 1e-10 * direct.max(1e-300));
                }
            }
        }
    }

    #[test]
    fn pair_not_on_antenna_is_constant() {
        let inst = instance(3, 5);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        // Symbols 4 and 5 both live on antenna 1, so c_0 = 0.
        let p = inst.cb.pairs().iter().find(|p| p.i == 4 && p.j == 5).unwrap();
        let e = ctx.expansion(0, p);
        assert_eq!(e.c_k, Complex64::new(0.0, 0.0));
        assert!(e.series.terms.is_empty());
        let expect = e.interference.norm_squared();
        for x in [0.0, 0.13, 0.4] {
            assert!((e.value(x) - expect).abs() <= 1e-15 * expect);
            assert_eq!(e.grad(x), 0.0);
            assert_eq!(e.hess(x), 0.0);
        }
        assert_eq!(e.epsilon(), 0.0);
    }

    #[test]
    fn single_path_has_no_alpha_terms() {
        let inst = instance(4, 1);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let p = &inst.cb.pairs()[0];
        let e = ctx.expansion(0, p);
        // Only cross terms: one per receive row.
        assert!(e.series.terms.len() <= 4);
        let ck2 = e.c_k.norm_sqr();
        let expect_const = ck2 * ctx.bhb[(0, 0)].re + e.interference.norm_squared();
        assert!((e.series.constant - expect_const).abs() <= 1e-15 * expect_const);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let inst = instance(5, 8);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let rctx = RxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-7 * inst.cfg.wavelength;
        for p in inst.cb.pairs().iter().step_by(11) {
            let k = rng.random_range(0..4);
            let x = rng.random::<f64>() * 0.4;
            let e = ctx.expansion(k, p);
            let fd = (e.value(x + h) - e.value(x - h)) / (2.0 * h);
            let scale = e.epsilon() * inst.cfg.wavelength;
            assert!((e.grad(x) - fd).abs() <= 1e-6 * scale.max(e.grad(x).abs()));
            let r = rng.random_range(0..4);
            let e = rctx.expansion(r, p);
            let fd = (e.value(x + h) - e.value(x - h)) / (2.0 * h);
            let scale = e.epsilon() * inst.cfg.wavelength;
            assert!((e.grad(x) - fd).abs() <= 1e-6 * scale.max(e.grad(x).abs()));
        }
    }

    #[test]
    fn epsilon_dominates_hessian_on_grid() {
        let inst = instance(7, 8);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        for p in inst.cb.pairs().iter().step_by(13) {
            let e = ctx.expansion(1, p);
            let eps = e.epsilon();
            for i in 0..10_000 {
                let x = 0.4 * i as f64 / 9_999.0;
                assert!(eps - e.hess(x).abs() >= -1e-12 * eps.max(1e-300));
            }
        }
    }

    #[test]
    fn epsilon_scales_with_weight() {
        let inst = instance(8, 6);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let p = inst.cb.pairs().iter().find(|p| p.i == 0 && p.j == 4).unwrap();
        let e = ctx.expansion(0, p);
        // 15 path-pair terms for L = 6, followed by the cross terms.
        assert_eq!(e.series.terms.len(), 15 + 24);
        let first: f64 = e.series.terms[..15].iter().map(|t| t.amp * t.freq * t.freq).sum();
        let second: f64 = e.series.terms[15..].iter().map(|t| t.amp * t.freq * t.freq).sum();

        let mut w2 = inst.w.clone();
        w2.w[0] *= Complex64::new(2.0, 0.0);
        let ctx2 = TxContext::new(&inst.ch, &inst.layout, &w2, inst.cfg.wavelength).unwrap();
        let e2 = ctx2.expansion(0, p);
        let first2: f64 = e2.series.terms[..15].iter().map(|t| t.amp * t.freq * t.freq).sum();
        let second2: f64 = e2.series.terms[15..].iter().map(|t| t.amp * t.freq * t.freq).sum();
        assert!((first2 - 4.0 * first).abs() <= 1e-12 * first2);
        assert!((second2 - 2.0 * second).abs() <= 1e-12 * second2);
    }

    #[test]
    fn rx_expansion_matches_direct_norm() {
        let inst = instance(9, 7);
        let ctx = RxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for p in inst.cb.pairs().iter().step_by(9) {
            for r in 0..4 {
                let e = ctx.expansion(r, p);
                let x = rng.random::<f64>() * 0.4;
                let direct = direct_rx(&inst, r, x, p);
                assert!((e.value(x) - direct).abs() <= 1e-10 * direct.max(1e-300));
            }
        }
    }

    #[test]
    fn rx_single_path_is_constant() {
        let inst = instance(11, 1);
        let ctx = RxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        let e = ctx.expansion(2, &inst.cb.pairs()[3]);
        assert!(e.series.terms.is_empty());
        let d0 = direct_rx(&inst, 2, 0.0, &inst.cb.pairs()[3]);
        let d1 = direct_rx(&inst, 2, 0.3, &inst.cb.pairs()[3]);
        assert!((d0 - d1).abs() <= 1e-12 * d0);
    }

    #[test]
    fn surrogate_tight_and_below() {
        let inst = instance(12, 8);
        let ctx = TxContext::new(&inst.ch, &inst.layout, &inst.w, inst.cfg.wavelength).unwrap();
        for p in inst.cb.pairs().iter().step_by(5) {
            let e = ctx.expansion(2, p);
            let x0 = inst.layout.u[2];
            let s = e.surrogate(x0);
            assert_eq!(surrogate_lb(x0, &s), e.value(x0));
            for i in 0..1000 {
                let x = 0.4 * i as f64 / 999.0;
                assert!(s.eval(x) <= e.value(x) + 1e-12 * e.series.constant);
            }
        }
    }

    #[test]
    fn linear_surrogate_with_zero_curvature() {
        let s = ScalarSurrogate {
            center: 0.1,
            value: 2.0,
            slope: 3.0,
            curvature: 0.0,
        };
        for x in [0.0, 0.1, 0.3] {
            assert!((s.eval(x) - (2.0 + 3.0 * (x - 0.1))).abs() < 1e-15);
        }
    }

    #[test]
    fn intervals_examples() {
        let iv = feasible_intervals(0, &[0.3, 0.1], 0.4, 0.025);
        assert_eq!(iv.len(), 2);
        assert!(iv[0].0 == 0.0 && (iv[0].1 - 0.075).abs() < 1e-15);
        assert!((iv[1].0 - 0.125).abs() < 1e-15 && iv[1].1 == 0.4);
        assert!(0.1 - iv[0].1 >= 0.025 && iv[1].0 - 0.1 >= 0.025);

        assert_eq!(feasible_intervals(0, &[0.2], 0.4, 0.025), vec![(0.0, 0.4)]);
    }

    #[test]
    fn intervals_cover_grid_layout_positions() {
        let d = 0.025;
        let u: Vec<f64> = (0..4).map(|i| i as f64 * d).collect();
        for k in 0..4 {
            let iv = feasible_intervals(k, &u, 0.4, d);
            assert!(iv.iter().any(|&(a, b)| a <= u[k] && u[k] <= b), "k={k} {iv:?}");
            for w in iv.windows(2) {
                assert!(w[0].1 < w[1].0);
            }
        }
    }

    #[test]
    fn one_surrogate_vertex_inside() {
        let s = ScalarSurrogate {
            center: 0.1,
            value: 1.0,
            slope: 2.0,
            curvature: 40.0,
        };
        let (x, _) = solve_position_subproblem(&[s], &[(0.0, 0.4)], 1e-9 * 0.4).unwrap();
        assert!((x - (0.1 + 2.0 / 40.0)).abs() < 1e-8);
    }

    #[test]
    fn one_surrogate_vertex_outside() {
        let s = ScalarSurrogate {
            center: 0.1,
            value: 1.0,
            slope: 2.0,
            curvature: 1.0,
        };
        let (x, _) =
            solve_position_subproblem(&[s], &[(0.0, 0.075), (0.125, 0.3)], 1e-9 * 0.4).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(solve_position_subproblem(&[], &[(0.0, 1.0)], 1e-9).is_err());
    }

    #[test]
    fn update_keeps_layout_feasible_and_monotone() {
        let mut inst = instance(13, 8);
        inst.layout = AntennaLayout::uniform(4, 4, inst.cfg.min_spacing);
        let mut eta = metrics::d_min(
            &assemble_channel(&inst.layout, &inst.ch, &inst.cfg).unwrap(),
            &inst.w,
            &inst.cb,
        )
        .unwrap();
        for round in 0..3 {
            for (side, k) in (0..4).map(|k| (Side::Tx, k)).chain((0..4).map(|k| (Side::Rx, k))) {
                let up = update_antenna(side, k, &inst.ch, &mut inst.layout, &inst.w, &inst.cb, &inst.cfg)
                    .unwrap();
                assert!(up.eta_after >= eta - 1e-9, "round {round}");
                assert!((up.eta_before - eta).abs() <= 1e-12 * eta);
                eta = up.eta_after;
                inst.layout.validate(&inst.cfg).unwrap();
            }
        }
    }
}
