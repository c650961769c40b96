//! Precoder update with antenna positions held fixed.
//!
//! Each pair distance is a convex quadratic `f_p(w) = w^H A_p w`. Around the
//! current point `w_n` it is replaced by the affine under-estimator
//! `2 Re{w_n^H A_p w} - w_n^H A_p w_n`, and the resulting max-min-affine
//! problem over the power ball is solved by a log-barrier Newton method on the
//! real `2T`-dimensional form. Every inner solve ends with a dual certificate:
//! for any simplex weights `lambda`, `sqrt(P_T) * ||sum lambda_p a_p|| +
//! sum lambda_p b_p` bounds the subproblem optimum from above.

use nalgebra::{DMatrix, DVector};

use crate::codebook::SmCodebook;
use crate::metrics::{self, Precoder};
use crate::{CMat, CVec, Complex64, Error, Result};

/// `A = X^H H^H H X` with `X = diag(x_i - x_j)` for one symbol pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairQuadratic {
    pub a: CMat,
    pub pair: (usize, usize),
}

impl PairQuadratic {
    /// `w^H A w`.
    pub fn value(&self, w: &CVec) -> f64 {
        w.dotc(&(&self.a * w)).re
    }
}

/// Affine surrogate `Re{a^H w} + b` with `a = 2 A w_n`, `b = -w_n^H A w_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedConstraint {
    pub a: CVec,
    pub b: f64,
}

impl LinearizedConstraint {
    pub fn value(&self, w: &CVec) -> f64 {
        self.a.dotc(w).re + self.b
    }
}

pub fn build_pair_matrices(h: &CMat, cb: &SmCodebook) -> Vec<PairQuadratic> {
    let gram = h.adjoint() * h;
    let t = gram.nrows();
    cb.pairs()
        .iter()
        .map(|p| {
            let d = &p.diff;
            let raw = CMat::from_fn(t, t, |s, u| d[s].conj() * gram[(s, u)] * d[u]);
            let a = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
            PairQuadratic { a, pair: (p.i, p.j) }
        })
        .collect()
}

pub fn linearize(pq: &PairQuadratic, w_n: &Precoder) -> LinearizedConstraint {
    let aw = &pq.a * &w_n.w;
    LinearizedConstraint {
        b: -w_n.w.dotc(&aw).re,
        a: aw * Complex64::new(2.0, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub w: CVec,
    /// `min_p` surrogate value at `w`.
    pub eta: f64,
    /// Certified upper bound on the subproblem optimum.
    pub upper_bound: f64,
    pub newton_steps: usize,
}

/// Maximizes `min_p (Re{a_p^H w} + b_p)` over `||w||^2 <= power`.
///
/// `tol` is absolute, in the units of the constraint values. On success
/// `upper_bound - eta <= tol`. Running out of Newton steps yields
/// [`Error::SolverFailure`] with the best feasible point found.
pub fn solve_w_subproblem(
    constraints: &[LinearizedConstraint],
    power: f64,
    tol: f64,
    max_newton: usize,
) -> Result<SubproblemSolution> {
    if constraints.is_empty() {
        return Err(Error::invalid("subproblem needs at least one constraint"));
    }
    if !(power > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    let t = constraints[0].a.len();
    if constraints.iter().any(|c| c.a.len() != t) {
        return Err(Error::invalid("constraint dimensions differ"));
    }
    let radius = power.sqrt();
    let scale = constraints
        .iter()
        .map(|c| radius * c.a.norm() + c.b.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(SubproblemSolution {
            w: CVec::zeros(t),
            eta: 0.0,
            upper_bound: 0.0,
            newton_steps: 0,
        });
    }

    // Real form: Re{a^H w} = [Re a; Im a] . [Re w; Im w], with w = radius * z.
    let n = 2 * t;
    let rows = DMatrix::from_fn(constraints.len(), n, |p, i| {
        let a = constraints[p].a[i % t];
        let x = if i < t { a.re } else { a.im };
        x * radius / scale
    });
    let offsets = DVector::from_iterator(constraints.len(), constraints.iter().map(|c| c.b / scale));
    let problem = BallMaxMin {
        rows: &rows,
        offsets: &offsets,
    };

    let to_complex =
        |z: &DVector<f64>| CVec::from_fn(t, |i, _| Complex64::new(z[i], z[t + i]) * radius);
    match problem.solve(tol / scale, max_newton) {
        Ok(sol) => Ok(SubproblemSolution {
            w: to_complex(&sol.z),
            eta: sol.primal * scale,
            upper_bound: sol.dual * scale,
            newton_steps: sol.steps,
        }),
        Err(best) => Err(Error::SolverFailure {
            message: format!(
                "inner solve stopped after {} Newton steps with gap {:e}",
                best.steps,
                (best.dual - best.primal) * scale
            ),
            best_w: to_complex(&best.z),
            best_eta: best.primal * scale,
        }),
    }
}

/// `max_{||z|| <= 1} min_p (m_p . z + c_p)` in normalized real form.
struct BallMaxMin<'a> {
    rows: &'a DMatrix<f64>,
    offsets: &'a DVector<f64>,
}

struct BallSolution {
    z: DVector<f64>,
    primal: f64,
    dual: f64,
    steps: usize,
}

impl BallMaxMin<'_> {
    fn values(&self, z: &DVector<f64>) -> DVector<f64> {
        self.rows * z + self.offsets
    }

    fn primal(&self, z: &DVector<f64>) -> f64 {
        self.values(z).min()
    }

    /// Upper bound from simplex weights proportional to `weights`, and the
    /// boundary point maximizing the weighted Lagrangian.
    fn dual(&self, weights: &DVector<f64>) -> (f64, Option<DVector<f64>>) {
        let lambda = weights / weights.sum();
        let mix = self.rows.transpose() * &lambda;
        let norm = mix.norm();
        let point = (norm > 0.0).then(|| mix / norm);
        (norm + lambda.dot(self.offsets), point)
    }

    /// Change of the barrier objective along a step, computed from slack
    /// ratios so it stays accurate when the objective itself is large.
    /// `None` if the step leaves the interior.
    fn barrier_change(
        &self,
        z: &DVector<f64>,
        slack: &DVector<f64>,
        dz: &DVector<f64>,
        dt: f64,
        alpha: f64,
        tau: f64,
    ) -> Option<f64> {
        let q0 = z.norm_squared();
        let zc = z + dz * alpha;
        let q1 = zc.norm_squared();
        if q1 >= 1.0 {
            return None;
        }
        // ln((1 - q1) / (1 - q0)) with q1 - q0 = 2 a z.dz + a^2 |dz|^2.
        let dq = alpha * (2.0 * z.dot(dz) + alpha * dz.norm_squared());
        let mut change = -tau * alpha * dt - (-dq / (1.0 - q0)).ln_1p();
        let ds = (self.rows * dz).add_scalar(-dt) * alpha;
        for (s, d) in slack.iter().zip(ds.iter()) {
            let ratio = d / s;
            if ratio <= -1.0 || s + d <= 0.0 {
                return None;
            }
            change -= ratio.ln_1p();
        }
        Some(change)
    }

    fn solve(&self, tol: f64, max_newton: usize) -> std::result::Result<BallSolution, BallSolution> {
        let n = self.rows.ncols();
        let count = self.rows.nrows();
        let mut z = DVector::<f64>::zeros(n);
        let mut t = self.primal(&z) - 1.0;
        // Central-path gap is (count + 1) / tau.
        let mut tau = (count + 1) as f64;
        let mut steps = 0;
        let mut best = BallSolution {
            primal: self.primal(&z),
            dual: f64::INFINITY,
            z: z.clone(),
            steps: 0,
        };

        loop {
            loop {
                if steps >= max_newton {
                    best.steps = steps;
                    return Err(best);
                }
                steps += 1;
                let q = z.norm_squared();
                let inv = 1.0 / (1.0 - q);
                let slack = self.values(&z).add_scalar(-t);
                let g = slack.map(|s| 1.0 / s);
                let g2 = g.component_mul(&g);

                let mut grad = DVector::<f64>::zeros(n + 1);
                let gz = &z * (2.0 * inv) - self.rows.transpose() * &g;
                grad.rows_mut(0, n).copy_from(&gz);
                grad[n] = -tau + g.sum();

                let mut hess = DMatrix::<f64>::zeros(n + 1, n + 1);
                let mut weighted = self.rows.clone();
                for (mut row, w) in weighted.row_iter_mut().zip(g2.iter()) {
                    row *= *w;
                }
                let hzz = self.rows.transpose() * &weighted
                    + DMatrix::<f64>::identity(n, n) * (2.0 * inv)
                    + &z * z.transpose() * (4.0 * inv * inv);
                hess.view_mut((0, 0), (n, n)).copy_from(&hzz);
                let hzt = -(self.rows.transpose() * &g2);
                hess.view_mut((0, n), (n, 1)).copy_from(&hzt);
                hess.view_mut((n, 0), (1, n)).copy_from(&hzt.transpose());
                hess[(n, n)] = g2.sum();

                let step = match hess.clone().cholesky() {
                    Some(ch) => ch.solve(&-&grad),
                    None => {
                        let bump = 1e-12 * hess.trace().max(1e-300);
                        let reg = hess + DMatrix::identity(n + 1, n + 1) * bump;
                        match reg.cholesky() {
                            Some(ch) => ch.solve(&-&grad),
                            None => break,
                        }
                    }
                };
                let decrement = -grad.dot(&step);
                if !(decrement > 2e-12) {
                    break;
                }

                let dz = step.rows(0, n).into_owned();
                let dt = step[n];
                let mut alpha = 1.0;
                let mut moved = false;
                while alpha > 1e-20 {
                    if let Some(df) = self.barrier_change(&z, &slack, &dz, dt, alpha, tau) {
                        if df <= -0.25 * alpha * decrement {
                            z += &dz * alpha;
                            t += dt * alpha;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }

            let slack = self.values(&z).add_scalar(-t);
            let weights = slack.map(|s| 1.0 / s);
            let (dual, recovered) = self.dual(&weights);
            for cand in std::iter::once(z.clone()).chain(recovered) {
                let primal = self.primal(&cand);
                if primal > best.primal {
                    best.primal = primal;
                    best.z = cand;
                }
            }
            best.dual = best.dual.min(dual);
            if best.dual - best.primal <= tol {
                best.steps = steps;
                return Ok(best);
            }
            tau *= 10.0;
        }
    }
}

/// Knobs of [`sca_beamforming`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop when the relative improvement of `d_min` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Inner accuracy relative to the subproblem scale.
    pub inner_tol: f64,
    pub inner_max_newton: usize,
    pub prune_factor: f64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            tol: 1e-4,
            max_iter: 100,
            inner_tol: 1e-8,
            inner_max_newton: 500,
            prune_factor: 10.0,
        }
    }
}

impl From<&crate::config::AlgorithmConfig> for ScaOptions {
    fn from(a: &crate::config::AlgorithmConfig) -> Self {
        ScaOptions {
            tol: a.sca_tol,
            max_iter: a.sca_max_iter,
            inner_tol: a.inner_tol,
            inner_max_newton: a.inner_max_newton,
            prune_factor: a.prune_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaResult {
    pub w: Precoder,
    /// True `d_min` at the start and after every accepted iterate.
    pub eta_history: Vec<f64>,
    /// Subproblem objective of every accepted iterate.
    pub surrogate_history: Vec<f64>,
    pub iterations: usize,
    pub newton_steps: usize,
}

/// Successive convex approximation of the precoder subproblem.
///
/// A candidate is kept only if it does not lower the true minimum distance,
/// so `eta_history` is nondecreasing. An inner failure returns
/// [`Error::SolverFailure`] carrying the last accepted precoder.
pub fn sca_beamforming(
    h: &CMat,
    cb: &SmCodebook,
    w_init: &Precoder,
    power: f64,
    opts: &ScaOptions,
) -> Result<ScaResult> {
    if !w_init.is_feasible(power) {
        return Err(Error::invalid(format!(
            "initial precoder power {} exceeds budget {power}",
            w_init.power()
        )));
    }
    if w_init.len() != cb.tx() || h.ncols() != cb.tx() {
        return Err(Error::invalid("precoder/channel size does not match codebook"));
    }
    let quads = build_pair_matrices(h, cb);
    let mut w = w_init.clone();
    let mut eta = metrics::d_min(h, &w, cb)?;
    let mut res = ScaResult {
        w: w.clone(),
        eta_history: vec![eta],
        surrogate_history: Vec::new(),
        iterations: 0,
        newton_steps: 0,
    };

    for iter in 1..=opts.max_iter {
        res.iterations = iter;
        let values: Vec<f64> = quads.iter().map(|q| q.value(&w.w)).collect();
        let cutoff = if eta > 0.0 { opts.prune_factor * eta } else { f64::INFINITY };
        let lin: Vec<LinearizedConstraint> = quads.iter().map(|q| linearize(q, &w)).collect();
        let active: Vec<usize> = (0..quads.len()).filter(|&p| values[p] <= cutoff).collect();

        let solve = |idx: &[usize]| {
            let subset: Vec<LinearizedConstraint> = idx.iter().map(|&p| lin[p].clone()).collect();
            let scale = subset
                .iter()
                .map(|c| power.sqrt() * c.a.norm() + c.b.abs())
                .fold(0.0, f64::max);
            solve_w_subproblem(&subset, power, opts.inner_tol * scale, opts.inner_max_newton)
        };

        let fail = |e: Error, w: &Precoder, eta: f64| match e {
            Error::SolverFailure { message, .. } => Error::SolverFailure {
                message,
                best_w: w.w.clone(),
                best_eta: eta,
            },
            other => other,
        };

        let mut sol = solve(&active).map_err(|e| fail(e, &w, eta))?;
        res.newton_steps += sol.newton_steps;
        if active.len() < quads.len() {
            let violated = lin.iter().any(|c| c.value(&sol.w) < sol.eta);
            if violated {
                let all: Vec<usize> = (0..quads.len()).collect();
                sol = solve(&all).map_err(|e| fail(e, &w, eta))?;
                res.newton_steps += sol.newton_steps;
            }
        }

        // Every pair distance is homogeneous of degree two in w, so moving to
        // the power boundary never lowers it.
        let mut cand = sol.w.clone();
        let norm = cand.norm();
        if norm > 0.0 {
            cand *= Complex64::new(power.sqrt() / norm, 0.0);
        }
        let cand = Precoder::new(cand);
        let cand_eta = metrics::d_min(h, &cand, cb)?;
        if !(cand_eta >= eta) {
            break;
        }
        let rel = (cand_eta - eta) / eta.max(1e-300);
        w = cand;
        eta = cand_eta;
        res.eta_history.push(eta);
        res.surrogate_history.push(sol.eta);
        if rel < opts.tol {
            break;
        }
    }
    res.w = w;
    Ok(res)
}
