//! Alternating channel optimizer shared by the rate computations.
//!
//! A problem is a source over "rows" (flat source tuples) together with a set
//! of information terms `I(row; U | side_j)` and distortion terms whose
//! decoders see `U` and a side letter. The channel `P(u | row)` may be tied
//! across rows that share a parameter index, which is how `U` is restricted
//! to depend on only part of the source.
//!
//! For fixed decoders the problem is convex in the channel, so each outer
//! round runs a few mirror-descent steps on a smoothed max (log-sum-exp)
//! plus an augmented Lagrangian for the budgets, then refreshes the decoders
//! and the multipliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{DecoderRule, DistortionMeasure};

/// Tuning knobs for the channel optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Number of starting points (deterministic ones included).
    pub restarts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Mirror-descent steps per outer round.
    pub inner_iters: usize,
    /// Stop once the exact objective moves less than this between rounds.
    pub tol: f64,
    /// Slack allowed on each distortion budget.
    pub feasibility_tol: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Rounds over which the smoothing temperature decays geometrically.
    pub anneal_rounds: usize,
    pub rho_start: f64,
    pub rho_max: f64,
    /// Largest auxiliary alphabet used by the decoder-indexed start.
    /// Zero disables that start.
    pub lifted_cap: usize,
    /// Largest number of decoder assignments tried exhaustively when the
    /// auxiliary alphabet is too small for the reduced solution.
    pub assignment_cap: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            restarts: 32,
            seed: 0,
            max_rounds: 500,
            inner_iters: 50,
            tol: 1e-7,
            feasibility_tol: 1e-6,
            tau_start: 1.0,
            tau_end: 1e-3,
            anneal_rounds: 100,
            rho_start: 10.0,
            rho_max: 1e6,
            lifted_cap: 1024,
            assignment_cap: 1000,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.feasibility_tol, self.tau_start, self.tau_end, self.rho_start, self.rho_max];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams("optimizer tolerances and penalties must be positive".into()));
        }
        if self.max_rounds == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidParams("optimizer needs at least one round and one step".into()));
        }
        Ok(())
    }
}

/// Temperature, multipliers and penalty weight of the smoothed objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing {
    pub tau: f64,
    pub mu: Vec<f64>,
    pub rho: f64,
}

pub(crate) struct SideMap {
    pub of_row: Vec<usize>,
    pub size: usize,
}

pub(crate) struct DistTerm {
    pub side: SideMap,
    pub target: Vec<usize>,
    pub measure: DistortionMeasure,
    pub budget: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    /// Channel indexed by parameter, `u_size` entries per parameter.
    pub w: Vec<f64>,
    pub decoders: Vec<DecoderRule>,
    pub info: Vec<f64>,
    pub rate: f64,
    pub dist: Vec<f64>,
}

pub(crate) struct Outcome {
    pub best: Candidate,
    /// Best feasible exact rate reached from each start, in start order.
    pub start_rates: Vec<Option<f64>>,
    /// Rate found with the decoder-indexed alphabet, before reduction.
    pub lifted_rate: Option<f64>,
}

struct RunResult {
    best: Option<Candidate>,
    mu: Vec<f64>,
}

#[derive(Clone)]
struct Atom {
    alpha: f64,
    q: Vec<f64>,
    g: Vec<f64>,
    d: Vec<f64>,
    sig: Vec<usize>,
}

pub(crate) struct Engine {
    prob: Vec<f64>,
    param: Vec<usize>,
    n_params: usize,
    param_mass: Vec<f64>,
    param_rows: Vec<Vec<usize>>,
    info: Vec<SideMap>,
    info_mass: Vec<Vec<f64>>,
    dist: Vec<DistTerm>,
}

fn softmax(v: &[f64], tau: f64) -> (f64, Vec<f64>) {
    if v.is_empty() {
        return (0.0, Vec::new());
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| ((x - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + tau * s.ln(), e.iter().map(|x| x / s).collect())
}

fn penalty_term(c: f64, mu: f64, rho: f64) -> f64 {
    let a = (mu + rho * c).max(0.0);
    (a * a - mu * mu) / (2.0 * rho)
}

fn max_or_zero(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl Engine {
    pub fn new(prob: Vec<f64>, param: Vec<usize>, n_params: usize, info: Vec<SideMap>, dist: Vec<DistTerm>) -> Self {
        let mut param_mass = vec![0.0; n_params];
        let mut param_rows = vec![Vec::new(); n_params];
        for (r, &p) in param.iter().enumerate() {
            param_mass[p] += prob[r];
            param_rows[p].push(r);
        }
        let info_mass = info
            .iter()
            .map(|side| {
                let mut m = vec![0.0; side.size];
                for (r, &s) in side.of_row.iter().enumerate() {
                    m[s] += prob[r];
                }
                m
            })
            .collect();
        Engine { prob, param, n_params, param_mass, param_rows, info, info_mass, dist }
    }

    /// `P(u | side letter)` for information term `j`, laid out `[s * us + u]`.
    fn conditional(&self, w: &[f64], us: usize, j: usize) -> Vec<f64> {
        let side = &self.info[j];
        let mut acc = vec![0.0; side.size * us];
        for (r, &p) in self.prob.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = side.of_row[r];
            let wp = &w[self.param[r] * us..(self.param[r] + 1) * us];
            for (a, x) in acc[s * us..(s + 1) * us].iter_mut().zip(wp) {
                *a += p * x;
            }
        }
        for (s, &m) in self.info_mass[j].iter().enumerate() {
            if m > 0.0 {
                acc[s * us..(s + 1) * us].iter_mut().for_each(|a| *a /= m);
            }
        }
        acc
    }

    fn info_raw(&self, w: &[f64], us: usize) -> Vec<f64> {
        (0..self.info.len())
            .map(|j| {
                let cond = self.conditional(w, us, j);
                let side = &self.info[j];
                let mut total = 0.0;
                for (r, &p) in self.prob.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let s = side.of_row[r];
                    let wp = &w[self.param[r] * us..(self.param[r] + 1) * us];
                    for (u, &x) in wp.iter().enumerate() {
                        if x > 0.0 {
                            total += p * x * (x / cond[s * us + u]).ln();
                        }
                    }
                }
                total
            })
            .collect()
    }

    pub fn info_values(&self, w: &[f64], us: usize) -> Vec<f64> {
        self.info_raw(w, us).into_iter().map(|v| v.max(0.0)).collect()
    }

    pub fn dist_values(&self, w: &[f64], us: usize, decoders: &[DecoderRule]) -> Vec<f64> {
        self.dist
            .iter()
            .zip(decoders)
            .map(|(t, dec)| {
                let mut total = 0.0;
                for (r, &p) in self.prob.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let s = t.side.of_row[r];
                    let x = t.target[r];
                    let wp = &w[self.param[r] * us..(self.param[r] + 1) * us];
                    for (u, &v) in wp.iter().enumerate() {
                        if v != 0.0 {
                            total += p * v * t.measure.get(x, dec.get(u, s));
                        }
                    }
                }
                total
            })
            .collect()
    }

    pub fn optimal_decoders(&self, w: &[f64], us: usize) -> Vec<DecoderRule> {
        self.dist
            .iter()
            .map(|t| {
                let xs = t.measure.source_size();
                let mut weights = vec![0.0; us * t.side.size * xs];
                for (r, &p) in self.prob.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let s = t.side.of_row[r];
                    let wp = &w[self.param[r] * us..(self.param[r] + 1) * us];
                    for (u, &v) in wp.iter().enumerate() {
                        weights[(u * t.side.size + s) * xs + t.target[r]] += p * v;
                    }
                }
                let mut rule = DecoderRule::constant(us, t.side.size, 0);
                for u in 0..us {
                    for s in 0..t.side.size {
                        let i = u * t.side.size + s;
                        rule.set(u, s, t.measure.best_reconstruction(&weights[i * xs..(i + 1) * xs]));
                    }
                }
                rule
            })
            .collect()
    }

    pub fn smoothed(&self, w: &[f64], us: usize, decoders: &[DecoderRule], sm: &Smoothing) -> f64 {
        let (lse, _) = softmax(&self.info_raw(w, us), sm.tau);
        let dist = self.dist_values(w, us, decoders);
        lse + self
            .dist
            .iter()
            .zip(&dist)
            .zip(&sm.mu)
            .map(|((t, d), &mu)| penalty_term(d - t.budget, mu, sm.rho))
            .sum::<f64>()
    }

    fn weights(&self, w: &[f64], us: usize, decoders: &[DecoderRule], sm: &Smoothing) -> (Vec<f64>, Vec<f64>) {
        let (_, lambda) = softmax(&self.info_raw(w, us), sm.tau);
        let dist = self.dist_values(w, us, decoders);
        let mu_eff = self
            .dist
            .iter()
            .zip(&dist)
            .zip(&sm.mu)
            .map(|((t, d), &mu)| (mu + sm.rho * (d - t.budget)).max(0.0))
            .collect();
        (lambda, mu_eff)
    }

    /// Derivative of the smoothed objective with respect to each channel
    /// entry, treating entries as free (unnormalized) variables.
    pub fn gradient(&self, w: &[f64], us: usize, decoders: &[DecoderRule], sm: &Smoothing) -> Vec<f64> {
        let (lambda, mu_eff) = self.weights(w, us, decoders, sm);
        let conds: Vec<Vec<f64>> = (0..self.info.len()).map(|j| self.conditional(w, us, j)).collect();
        let mut g = vec![0.0; self.n_params * us];
        for (r, &p) in self.prob.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let base = self.param[r] * us;
            for u in 0..us {
                let x = w[base + u];
                let mut a = 0.0;
                for (j, side) in self.info.iter().enumerate() {
                    a += lambda[j] * (x / conds[j][side.of_row[r] * us + u]).ln();
                }
                for (k, t) in self.dist.iter().enumerate() {
                    a += mu_eff[k] * t.measure.get(t.target[r], decoders[k].get(u, t.side.of_row[r]));
                }
                g[base + u] += p * a;
            }
        }
        g
    }

    fn log_target(&self, w: &[f64], us: usize, decoders: &[DecoderRule], sm: &Smoothing) -> Vec<f64> {
        let (lambda, mu_eff) = self.weights(w, us, decoders, sm);
        let conds: Vec<Vec<f64>> = (0..self.info.len()).map(|j| self.conditional(w, us, j)).collect();
        let mut out = vec![0.0; self.n_params * us];
        for p in 0..self.n_params {
            let m = self.param_mass[p];
            if m <= 0.0 {
                continue;
            }
            for &r in &self.param_rows[p] {
                let pr = self.prob[r];
                if pr == 0.0 {
                    continue;
                }
                let wr = pr / m;
                for u in 0..us {
                    let mut a = 0.0;
                    for (j, side) in self.info.iter().enumerate() {
                        if lambda[j] > 0.0 {
                            a += lambda[j] * conds[j][side.of_row[r] * us + u].ln();
                        }
                    }
                    for (k, t) in self.dist.iter().enumerate() {
                        if mu_eff[k] > 0.0 {
                            a -= mu_eff[k] * t.measure.get(t.target[r], decoders[k].get(u, t.side.of_row[r]));
                        }
                    }
                    out[p * us + u] += wr * a;
                }
            }
        }
        out
    }

    fn mix(&self, w: &[f64], log_t: &[f64], us: usize, eta: f64) -> Vec<f64> {
        let mut out = w.to_vec();
        let mut l = vec![0.0; us];
        for p in 0..self.n_params {
            if self.param_mass[p] <= 0.0 {
                continue;
            }
            let row = &w[p * us..(p + 1) * us];
            let lt = &log_t[p * us..(p + 1) * us];
            for u in 0..us {
                l[u] = if eta >= 1.0 {
                    lt[u]
                } else if row[u] <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (1.0 - eta) * row[u].ln() + eta * lt[u]
                };
            }
            let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                continue;
            }
            let dst = &mut out[p * us..(p + 1) * us];
            let mut s = 0.0;
            for u in 0..us {
                dst[u] = (l[u] - m).exp();
                s += dst[u];
            }
            dst.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    fn descend(&self, mut w: Vec<f64>, us: usize, decoders: &[DecoderRule], sm: &Smoothing, iters: usize) -> Vec<f64> {
        let mut f = self.smoothed(&w, us, decoders, sm);
        let mut eta = 1.0;
        for _ in 0..iters {
            let log_t = self.log_target(&w, us, decoders, sm);
            let mut moved = false;
            while eta >= 1e-6 {
                let cand = self.mix(&w, &log_t, us, eta);
                let fc = self.smoothed(&cand, us, decoders, sm);
                if fc <= f {
                    let gain = f - fc;
                    w = cand;
                    f = fc;
                    moved = gain > 1e-13 * (1.0 + f.abs());
                    eta = (eta * 2.0).min(1.0);
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        w
    }

    pub fn assess(&self, w: &[f64], us: usize) -> Candidate {
        let decoders = self.optimal_decoders(w, us);
        let info = self.info_values(w, us);
        let dist = self.dist_values(w, us, &decoders);
        Candidate { w: w.to_vec(), rate: max_or_zero(&info), decoders, info, dist }
    }

    pub fn is_feasible(&self, c: &Candidate, tol: f64) -> bool {
        self.dist.iter().zip(&c.dist).all(|(t, d)| *d <= t.budget + tol)
    }

    fn consider(&self, best: &mut Option<Candidate>, c: Candidate, tol: f64) {
        if !self.is_feasible(&c, tol) {
            return;
        }
        if best.as_ref().is_none_or(|b| c.rate < b.rate) {
            *best = Some(c);
        }
    }

    fn smooth_towards_uniform(w: &[f64], us: usize, eps: f64) -> Vec<f64> {
        w.iter().map(|v| (1.0 - eps) * v + eps / us as f64).collect()
    }

    /// One descent from `start`. Decoders stay at `fixed` for the first
    /// `free_after` rounds (forever when `free_after` is `usize::MAX`), after
    /// which they follow the channel and the multipliers restart.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        us: usize,
        start: &[f64],
        eps: f64,
        fixed: Option<&[DecoderRule]>,
        free_after: usize,
        mu0: Option<Vec<f64>>,
        opts: &OptimizerOptions,
    ) -> RunResult {
        let tol = opts.feasibility_tol;
        let mut best = None;
        self.consider(&mut best, self.assess(start, us), tol);
        let mut w = if eps > 0.0 { Self::smooth_towards_uniform(start, us, eps) } else { start.to_vec() };
        let mut mu = mu0.unwrap_or_else(|| vec![0.0; self.dist.len()]);
        let mut rho = opts.rho_start;
        let mut prev_viol = f64::INFINITY;
        let mut prev_obj = f64::INFINITY;
        let mut least_viol = f64::INFINITY;
        let mut stall = 0;
        let mut current = fixed;
        let mut phase_start = 0;
        let ratio = opts.tau_end / opts.tau_start;
        for round in 0..opts.max_rounds {
            if current.is_some() && fixed.is_some() && free_after != usize::MAX && round >= free_after {
                current = None;
                mu.iter_mut().for_each(|m| *m = 0.0);
                rho = opts.rho_start;
                prev_viol = f64::INFINITY;
                least_viol = f64::INFINITY;
                stall = 0;
                phase_start = round;
            }
            let frac = if opts.anneal_rounds == 0 {
                1.0
            } else {
                round.min(opts.anneal_rounds) as f64 / opts.anneal_rounds as f64
            };
            let decoders = match current {
                Some(d) => d.to_vec(),
                None => self.optimal_decoders(&w, us),
            };
            let sm = Smoothing { tau: opts.tau_start * ratio.powf(frac), mu: mu.clone(), rho };
            w = self.descend(w, us, &decoders, &sm, opts.inner_iters);
            let dist = self.dist_values(&w, us, &decoders);
            let mut viol: f64 = 0.0;
            for (k, t) in self.dist.iter().enumerate() {
                let c = dist[k] - t.budget;
                viol = viol.max(c);
                mu[k] = (mu[k] + rho * c).max(0.0);
            }
            if viol > tol && viol > 0.25 * prev_viol {
                rho = (rho * 2.0).min(opts.rho_max);
            }
            prev_viol = viol.max(0.0);
            let cand = self.assess(&w, us);
            let obj = cand.rate;
            self.consider(&mut best, cand, tol);
            if round + 1 >= opts.anneal_rounds && (obj - prev_obj).abs() < opts.tol && viol <= tol {
                if current.is_some() && fixed.is_some() && free_after != usize::MAX {
                    current = None;
                    continue;
                }
                break;
            }
            prev_obj = obj;
            // Give up on a phase whose budgets stop improving at full penalty.
            if viol > tol && rho >= opts.rho_max {
                if viol < least_viol * (1.0 - 1e-3) {
                    least_viol = viol;
                    stall = 0;
                } else {
                    stall += 1;
                }
                if stall >= 25 && round >= phase_start + 25 {
                    if current.is_some() && free_after != usize::MAX {
                        current = None;
                        mu.iter_mut().for_each(|m| *m = 0.0);
                        rho = opts.rho_start;
                        prev_viol = f64::INFINITY;
                        least_viol = f64::INFINITY;
                        stall = 0;
                        phase_start = round;
                        continue;
                    }
                    break;
                }
            }
        }
        RunResult { best, mu }
    }

    /// Decoder tables for the alphabet whose letters enumerate every tuple
    /// of decoder functions, or `None` when that alphabet exceeds `cap`.
    fn lifted_decoders(&self, cap: usize) -> Option<(usize, Vec<DecoderRule>)> {
        let mut counts = Vec::with_capacity(self.dist.len());
        let mut total: usize = 1;
        for t in &self.dist {
            let c = t.measure.recon_size().checked_pow(u32::try_from(t.side.size).ok()?)?;
            total = total.checked_mul(c)?;
            if total > cap {
                return None;
            }
            counts.push(c);
        }
        if self.dist.is_empty() || total < 2 {
            return None;
        }
        let mut rules: Vec<DecoderRule> =
            self.dist.iter().map(|t| DecoderRule::constant(total, t.side.size, 0)).collect();
        for letter in 0..total {
            let mut rem = letter;
            for (k, t) in self.dist.iter().enumerate() {
                let mut code = rem % counts[k];
                rem /= counts[k];
                let base = t.measure.recon_size();
                for s in 0..t.side.size {
                    rules[k].set(letter, s, code % base);
                    code /= base;
                }
            }
        }
        Some((total, rules))
    }

    fn make_atom(&self, alpha: f64, q: Vec<f64>) -> Atom {
        let qr: Vec<f64> = (0..self.prob.len())
            .map(|r| {
                let p = self.param[r];
                if self.param_mass[p] > 0.0 {
                    q[p] * self.prob[r] / self.param_mass[p]
                } else {
                    0.0
                }
            })
            .collect();
        let g = self
            .info
            .iter()
            .enumerate()
            .map(|(j, side)| {
                let mut qs = vec![0.0; side.size];
                for (r, &v) in qr.iter().enumerate() {
                    qs[side.of_row[r]] += v;
                }
                let mut total = 0.0;
                for (r, &v) in qr.iter().enumerate() {
                    if v > 0.0 {
                        let s = side.of_row[r];
                        total += v * (v * self.info_mass[j][s] / (self.prob[r] * qs[s])).ln();
                    }
                }
                total
            })
            .collect();
        let mut d = Vec::with_capacity(self.dist.len());
        let mut sig = Vec::new();
        for t in &self.dist {
            let xs = t.measure.source_size();
            let mut weights = vec![0.0; t.side.size * xs];
            for (r, &v) in qr.iter().enumerate() {
                weights[t.side.of_row[r] * xs + t.target[r]] += v;
            }
            let mut cost = 0.0;
            for s in 0..t.side.size {
                let wts = &weights[s * xs..(s + 1) * xs];
                let best = t.measure.best_reconstruction(wts);
                sig.push(best);
                cost += wts.iter().enumerate().map(|(x, v)| v * t.measure.get(x, best)).sum::<f64>();
            }
            d.push(cost);
        }
        Atom { alpha, q, g, d, sig }
    }

    fn atoms_of(&self, w: &[f64], us: usize) -> Vec<Atom> {
        let mut atoms = Vec::new();
        for u in 0..us {
            let q: Vec<f64> = (0..self.n_params).map(|p| self.param_mass[p] * w[p * us + u]).collect();
            let alpha: f64 = q.iter().sum();
            if alpha > 1e-13 {
                atoms.push(self.make_atom(alpha, q.iter().map(|v| v / alpha).collect()));
            }
        }
        atoms
    }

    fn merge_atoms(&self, a: &Atom, b: &Atom) -> Atom {
        let alpha = a.alpha + b.alpha;
        let q = a.q.iter().zip(&b.q).map(|(x, y)| (a.alpha * x + b.alpha * y) / alpha).collect();
        self.make_atom(alpha, q)
    }

    fn channel_of(&self, atoms: &[Atom], us: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.n_params * us];
        for p in 0..self.n_params {
            let row = &mut w[p * us..(p + 1) * us];
            for (slot, a) in atoms.iter().enumerate() {
                row[slot] = a.alpha * a.q[p];
            }
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            } else {
                row[0] = 1.0;
            }
        }
        w
    }

    fn totals(&self, atoms: &[Atom]) -> (Vec<f64>, Vec<f64>) {
        let info = (0..self.info.len()).map(|j| atoms.iter().map(|a| a.alpha * a.g[j]).sum()).collect();
        let dist = (0..self.dist.len()).map(|k| atoms.iter().map(|a| a.alpha * a.d[k]).sum()).collect();
        (info, dist)
    }

    /// Moves mass along null directions of the marginal and tight
    /// constraints until atoms vanish, never increasing any information
    /// term past the current maximum nor any distortion past its budget.
    fn caratheodory(&self, atoms: &mut Vec<Atom>, target: usize) {
        const TIGHT: f64 = 1e-10;
        let mut guard = 0;
        while atoms.len() > target && guard < 10_000 {
            guard += 1;
            let n = atoms.len();
            let (info, dist) = self.totals(atoms);
            let rate = max_or_zero(&info);
            let mut eq: Vec<Vec<f64>> = (0..self.n_params).map(|p| atoms.iter().map(|a| a.q[p]).collect()).collect();
            let mut loose: Vec<(Vec<f64>, f64)> = Vec::new();
            for (j, v) in info.iter().enumerate() {
                let coeffs: Vec<f64> = atoms.iter().map(|a| a.g[j]).collect();
                let slack = rate - v;
                if slack <= TIGHT {
                    eq.push(coeffs)
                } else {
                    loose.push((coeffs, slack))
                }
            }
            for (k, v) in dist.iter().enumerate() {
                let coeffs: Vec<f64> = atoms.iter().map(|a| a.d[k]).collect();
                let slack = self.dist[k].budget - v;
                if slack <= TIGHT {
                    eq.push(coeffs)
                } else {
                    loose.push((coeffs, slack))
                }
            }
            let Some(beta) = null_vector(eq, n) else { break };
            let mut choice: Option<(f64, f64, Option<usize>)> = None;
            for sigma in [1.0, -1.0] {
                let mut t_atom = f64::INFINITY;
                let mut hit = None;
                for (i, a) in atoms.iter().enumerate() {
                    let step = sigma * beta[i];
                    if step < 0.0 && a.alpha / -step < t_atom {
                        t_atom = a.alpha / -step;
                        hit = Some(i);
                    }
                }
                let mut t_func = f64::INFINITY;
                for (coeffs, slack) in &loose {
                    let rate_of_change: f64 = sigma * coeffs.iter().zip(&beta).map(|(c, b)| c * b).sum::<f64>();
                    if rate_of_change > 1e-15 {
                        t_func = t_func.min(slack / rate_of_change);
                    }
                }
                let (t, removes) = if t_atom <= t_func { (t_atom, hit) } else { (t_func, None) };
                let better = match &choice {
                    None => true,
                    Some((bt, _, brem)) => {
                        (removes.is_some() && brem.is_none()) || (removes.is_some() == brem.is_some() && t > *bt)
                    }
                };
                if better && t.is_finite() {
                    choice = Some((t, sigma, removes));
                }
            }
            let Some((t, sigma, removes)) = choice else { break };
            let scale = atoms.iter().map(|a| a.alpha).fold(0.0, f64::max);
            for (a, b) in atoms.iter_mut().zip(&beta) {
                a.alpha += t * sigma * b;
            }
            if let Some(i) = removes {
                atoms[i].alpha = 0.0;
            }
            atoms.retain(|a| a.alpha > 1e-14 * scale);
        }
    }

    /// Folds atoms sharing the same optimal decoder letters; this can only
    /// lower the information terms and leaves distortions unchanged.
    fn merge_same_decoders(&self, atoms: Vec<Atom>) -> Vec<Atom> {
        let mut out: Vec<Atom> = Vec::new();
        for a in atoms {
            match out.iter().position(|b| b.sig == a.sig) {
                Some(i) => out[i] = self.merge_atoms(&out[i], &a),
                None => out.push(a),
            }
        }
        out
    }

    fn merge_down(&self, atoms: &mut Vec<Atom>, target: usize, tol: f64) {
        while atoms.len() > target {
            let (info, dist) = self.totals(atoms);
            let mut best: Option<((bool, f64), usize, usize, Atom)> = None;
            for i in 0..atoms.len() {
                for j in i + 1..atoms.len() {
                    let m = self.merge_atoms(&atoms[i], &atoms[j]);
                    let rate = max_or_zero(
                        &(0..info.len())
                            .map(|k| {
                                info[k] - atoms[i].alpha * atoms[i].g[k] - atoms[j].alpha * atoms[j].g[k]
                                    + m.alpha * m.g[k]
                            })
                            .collect::<Vec<_>>(),
                    );
                    let viol = (0..dist.len())
                        .map(|k| {
                            dist[k] - atoms[i].alpha * atoms[i].d[k] - atoms[j].alpha * atoms[j].d[k] + m.alpha * m.d[k]
                                - self.dist[k].budget
                        })
                        .fold(0.0, f64::max);
                    let key = if viol > tol { (true, viol) } else { (false, rate) };
                    if best.as_ref().is_none_or(|(bk, ..)| key < *bk) {
                        best = Some((key, i, j, m));
                    }
                }
            }
            let Some((_, i, j, m)) = best else { break };
            atoms[i] = m;
            atoms.remove(j);
        }
    }

    /// Support of `w` after folding equal decoders and Carathéodory steps.
    fn reduced_atoms(&self, w: &[f64], from: usize, to: usize) -> Vec<Atom> {
        let mut atoms = self.merge_same_decoders(self.atoms_of(w, from));
        self.caratheodory(&mut atoms, to);
        self.merge_same_decoders(atoms)
    }

    fn restricted_rules(rules: &[DecoderRule], letters: &[usize]) -> Vec<DecoderRule> {
        rules
            .iter()
            .map(|r| {
                let mut out = DecoderRule::constant(letters.len(), r.side_size(), 0);
                for (slot, &l) in letters.iter().enumerate() {
                    for s in 0..r.side_size() {
                        out.set(slot, s, r.get(l, s));
                    }
                }
                out
            })
            .collect()
    }

    /// Solves over the decoder-indexed alphabet (convex, since decoders are
    /// fixed per letter) and brings the solution down to `us` letters.
    fn lifted(&self, us: usize, opts: &OptimizerOptions) -> Option<(f64, Vec<Candidate>)> {
        let (l, rules) = self.lifted_decoders(opts.lifted_cap)?;
        let uniform = vec![1.0 / l as f64; self.n_params * l];
        let first = self.run(l, &uniform, 0.0, Some(&rules), usize::MAX, None, opts);
        let found = first.best?;
        let mut atoms = self.reduced_atoms(&found.w, l, us);
        let mut out = Vec::new();
        if atoms.len() > us {
            if let Some(sets) = multisets(l, us, opts.assignment_cap) {
                let runs: Vec<Option<Candidate>> = sets
                    .par_iter()
                    .map(|letters| {
                        let fixed = Self::restricted_rules(&rules, letters);
                        let start = vec![1.0 / us as f64; self.n_params * us];
                        self.run(us, &start, 0.0, Some(&fixed), usize::MAX, None, opts).best
                    })
                    .collect();
                out.extend(runs.into_iter().flatten());
            }
            self.merge_down(&mut atoms, us, opts.feasibility_tol);
        }
        let reduced = self.channel_of(&atoms, us);
        out.extend(self.run(us, &reduced, 1e-4, None, 0, Some(first.mu), opts).best);
        Some((found.rate, out))
    }

    fn random_decoders(&self, us: usize, rng: &mut ChaCha8Rng) -> Vec<DecoderRule> {
        self.dist
            .iter()
            .map(|t| {
                let mut rule = DecoderRule::constant(us, t.side.size, 0);
                for u in 0..us {
                    for s in 0..t.side.size {
                        rule.set(u, s, rng.random_range(0..t.measure.recon_size()));
                    }
                }
                rule
            })
            .collect()
    }

    fn random_start(&self, us: usize, seed: u64, stream: u64) -> (Vec<f64>, Vec<DecoderRule>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut w = vec![0.0; self.n_params * us];
        for row in w.chunks_mut(us) {
            for v in row.iter_mut() {
                *v = Exp1.sample(&mut rng);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let rules = self.random_decoders(us, &mut rng);
        (w, rules)
    }

    fn deterministic_start(&self, us: usize, index: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.n_params * us];
        for p in 0..self.n_params {
            let u = if index == 0 { p % us } else { 0 };
            w[p * us + u] = 1.0;
        }
        w
    }

    /// Multi-start minimization over channels with `us` auxiliary letters.
    ///
    /// Starts: the one-hot channel, the constant channel, random channels
    /// paired with random decoders that are held fixed while the temperature
    /// anneals, and (when small enough) the decoder-indexed convex problem.
    pub fn solve(&self, us: usize, opts: &OptimizerOptions) -> Result<Outcome> {
        opts.validate()?;
        if us == 0 {
            return Err(Error::InvalidParams("auxiliary alphabet must be nonempty".into()));
        }
        let n = opts.restarts.max(1);
        let starts: Vec<Option<Candidate>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if i < 2 {
                    let start = self.deterministic_start(us, i);
                    self.run(us, &start, 1e-3, None, 0, None, opts).best
                } else {
                    let (start, rules) = self.random_start(us, opts.seed, i as u64);
                    self.run(us, &start, 0.0, Some(&rules), opts.anneal_rounds, None, opts).best
                }
            })
            .collect();
        let lifted = if opts.lifted_cap > 0 { self.lifted(us, opts) } else { None };
        let start_rates = starts.iter().map(|c| c.as_ref().map(|c| c.rate)).collect();
        let mut best: Option<Candidate> = None;
        let (lifted_rate, extra) = match lifted {
            Some((r, c)) => (Some(r), c),
            None => (None, Vec::new()),
        };
        for c in starts.into_iter().flatten().chain(extra) {
            if best.as_ref().is_none_or(|b| c.rate < b.rate) {
                best = Some(c);
            }
        }
        match best {
            Some(best) => Ok(Outcome { best, start_rates, lifted_rate }),
            None => Err(Error::NonConvergence { restarts: n }),
        }
    }
}

/// Every multiset of `k` letters out of `l`, as sorted index lists, or
/// `None` when there are more than `cap` of them.
fn multisets(l: usize, k: usize, cap: usize) -> Option<Vec<Vec<usize>>> {
    let mut count: u128 = 1;
    for i in 0..k as u128 {
        count = count * (l as u128 + i) / (i + 1);
        if count > cap as u128 {
            return None;
        }
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0usize; k];
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] + 1 < l) else { break };
        let v = cur[i] + 1;
        cur[i..].iter_mut().for_each(|c| *c = v);
    }
    Some(out)
}

/// A nonzero vector in the null space of `rows` (each of length `n`), or
/// `None` when the rows have full column rank.
fn null_vector(mut rows: Vec<Vec<f64>>, n: usize) -> Option<Vec<f64>> {
    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale;
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == rows.len() {
            break;
        }
        let (best, mag) =
            (r..rows.len()).map(|i| (i, rows[i][col].abs())).fold((r, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if mag < tol {
            continue;
        }
        rows.swap(r, best);
        let piv = rows[r][col];
        rows[r].iter_mut().for_each(|v| *v /= piv);
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            let f = row[col];
            if i != r && f != 0.0 {
                row.iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
        pivots.push(col);
        r += 1;
    }
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut beta = vec![0.0; n];
    beta[free] = 1.0;
    for (i, &pc) in pivots.iter().enumerate() {
        beta[pc] = -rows[i][free];
    }
    let m = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Some(beta.into_iter().map(|v| v / m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_spans_kernel() {
        let rows = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let b = null_vector(rows.clone(), 3).unwrap();
        for r in &rows {
            let dot: f64 = r.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!(dot.abs() < 1e-12);
        }
        assert!(null_vector(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 2).is_none());
    }

    #[test]
    fn softmax_bounds_max() {
        let (lse, lam) = softmax(&[0.3, 0.5], 1e-3);
        assert!(lse >= 0.5 && lse <= 0.5 + 1e-3 * 2f64.ln());
        assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
