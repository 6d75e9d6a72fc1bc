//! Two-source complementary delivery: evaluation and minimization of
//! `max{I(X;U|Y), I(Y;U|X)}` under decoder distortion budgets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::AuxiliaryChannel;
use crate::error::{Error, Result};
use crate::prob::{DecoderRule, DistortionBudget, DistortionMeasure, JointSource};
use crate::solver::{Candidate, DistTerm, Engine, OptimizerOptions, SideMap, Smoothing};

/// Brute-force enumeration budget (channel evaluations).
pub const BRUTE_FORCE_LIMIT: u128 = 100_000_000;

/// A validated two-source problem: `P_XY`, one distortion measure per
/// source and the budget pair `(D_X, D_Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdProblem {
    source: JointSource,
    dist_x: DistortionMeasure,
    dist_y: DistortionMeasure,
    budget_x: f64,
    budget_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdSolution {
    /// `max{I(X;U|Y), I(Y;U|X)}` in nats.
    pub rate: f64,
    /// `(I(X;U|Y), I(Y;U|X))`.
    pub information: (f64, f64),
    pub channel: AuxiliaryChannel,
    /// Decoder of `X` from `(U, Y)` and decoder of `Y` from `(U, X)`.
    pub decoders: (DecoderRule, DecoderRule),
    pub achieved_distortions: (f64, f64),
    pub feasible: bool,
    pub restarts_used: usize,
    /// Best feasible rate reached from each start (`None` if none).
    pub start_rates: Vec<Option<f64>>,
    /// Rate reached over the decoder-indexed alphabet before reduction.
    pub lifted_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub u_small: usize,
    pub u_large: usize,
    pub rate_small: f64,
    pub rate_large: f64,
    pub difference: f64,
}

fn check_pair(source: &JointSource, dist_x: &DistortionMeasure, dist_y: &DistortionMeasure) -> Result<()> {
    if source.dims() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
    }
    let s = source.sizes();
    if dist_x.source_size() != s[0] || dist_y.source_size() != s[1] {
        return Err(Error::ShapeMismatch(format!(
            "distortion measures cover {}x{} letters, source is {}x{}",
            dist_x.source_size(),
            dist_y.source_size(),
            s[0],
            s[1]
        )));
    }
    Ok(())
}

fn check_channel(source: &JointSource, ch: &AuxiliaryChannel) -> Result<()> {
    if ch.rows() != source.len() {
        return Err(Error::ShapeMismatch(format!(
            "channel has {} rows, source has {} tuples",
            ch.rows(),
            source.len()
        )));
    }
    Ok(())
}

fn build_engine(source: &JointSource, dx: &DistortionMeasure, dy: &DistortionMeasure, bx: f64, by: f64) -> Engine {
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    let rows = nx * ny;
    let xs: Vec<usize> = (0..rows).map(|r| r / ny).collect();
    let ys: Vec<usize> = (0..rows).map(|r| r % ny).collect();
    let info = vec![SideMap { of_row: ys.clone(), size: ny }, SideMap { of_row: xs.clone(), size: nx }];
    let dist = vec![
        DistTerm {
            side: SideMap { of_row: ys.clone(), size: ny },
            target: xs.clone(),
            measure: dx.clone(),
            budget: bx,
        },
        DistTerm { side: SideMap { of_row: xs, size: nx }, target: ys, measure: dy.clone(), budget: by },
    ];
    Engine::new(source.pmf().to_vec(), (0..rows).collect(), rows, info, dist)
}

/// Posterior-optimal decoders for a fixed channel. Ties and zero-mass
/// `(u, side)` pairs take reconstruction index 0 (the lowest minimizer).
pub fn optimal_decoders(
    source: &JointSource,
    ch: &AuxiliaryChannel,
    dms: (&DistortionMeasure, &DistortionMeasure),
) -> Result<(DecoderRule, DecoderRule)> {
    check_pair(source, dms.0, dms.1)?;
    check_channel(source, ch)?;
    let mut rules = build_engine(source, dms.0, dms.1, 0.0, 0.0).optimal_decoders(ch.as_flat(), ch.u_size());
    let second = rules.pop().expect("two rules");
    let first = rules.pop().expect("two rules");
    Ok((first, second))
}

/// `(I(X;U|Y), I(Y;U|X))` for the joint `P_XY P_{U|XY}`.
pub fn cd_information_terms(source: &JointSource, ch: &AuxiliaryChannel) -> Result<(f64, f64)> {
    if source.dims() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
    }
    check_channel(source, ch)?;
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    let dx = DistortionMeasure::hamming(nx);
    let dy = DistortionMeasure::hamming(ny);
    let v = build_engine(source, &dx, &dy, 0.0, 0.0).info_values(ch.as_flat(), ch.u_size());
    Ok((v[0], v[1]))
}

/// `max{I(X;U|Y), I(Y;U|X)}`.
pub fn cd_objective(source: &JointSource, ch: &AuxiliaryChannel) -> Result<f64> {
    let (a, b) = cd_information_terms(source, ch)?;
    Ok(a.max(b))
}

pub fn achieved_distortions(
    source: &JointSource,
    ch: &AuxiliaryChannel,
    decoders: (&DecoderRule, &DecoderRule),
    dms: (&DistortionMeasure, &DistortionMeasure),
) -> Result<(f64, f64)> {
    check_pair(source, dms.0, dms.1)?;
    check_channel(source, ch)?;
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    let us = ch.u_size();
    for (rule, side, dm) in [(decoders.0, ny, dms.0), (decoders.1, nx, dms.1)] {
        if rule.u_size() != us || rule.side_size() != side {
            return Err(Error::ShapeMismatch(format!(
                "decoder is {}x{}, expected {}x{}",
                rule.u_size(),
                rule.side_size(),
                us,
                side
            )));
        }
        if rule.table().iter().any(|&r| r >= dm.recon_size()) {
            return Err(Error::ShapeMismatch("decoder emits letters outside the reconstruction alphabet".into()));
        }
    }
    let v = build_engine(source, dms.0, dms.1, 0.0, 0.0).dist_values(
        ch.as_flat(),
        us,
        &[decoders.0.clone(), decoders.1.clone()],
    );
    Ok((v[0], v[1]))
}

/// Minimizes the complementary-delivery rate for the given budgets.
pub fn optimize_cd_rate(
    source: &JointSource,
    dms: (&DistortionMeasure, &DistortionMeasure),
    budgets: &DistortionBudget,
    u_size: Option<usize>,
    opts: &OptimizerOptions,
) -> Result<CdSolution> {
    let b = budgets.values();
    if b.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected two budgets, got {}", b.len())));
    }
    CdProblem::new(source.clone(), dms.0.clone(), dms.1.clone(), b[0], b[1])?.optimize(u_size, opts)
}

impl CdProblem {
    pub fn new(
        source: JointSource,
        dist_x: DistortionMeasure,
        dist_y: DistortionMeasure,
        budget_x: f64,
        budget_y: f64,
    ) -> Result<Self> {
        check_pair(&source, &dist_x, &dist_y)?;
        DistortionBudget::new(vec![budget_x, budget_y])?;
        Ok(CdProblem { source, dist_x, dist_y, budget_x, budget_y })
    }

    /// Hamming distortion on both sources.
    pub fn hamming(source: JointSource, budget_x: f64, budget_y: f64) -> Result<Self> {
        if source.dims() != 2 {
            return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
        }
        let dx = DistortionMeasure::hamming(source.sizes()[0]);
        let dy = DistortionMeasure::hamming(source.sizes()[1]);
        Self::new(source, dx, dy, budget_x, budget_y)
    }

    pub fn source(&self) -> &JointSource {
        &self.source
    }

    pub fn dist_x(&self) -> &DistortionMeasure {
        &self.dist_x
    }

    pub fn dist_y(&self) -> &DistortionMeasure {
        &self.dist_y
    }

    pub fn budgets(&self) -> (f64, f64) {
        (self.budget_x, self.budget_y)
    }

    pub fn with_budgets(&self, budget_x: f64, budget_y: f64) -> Result<Self> {
        Self::new(self.source.clone(), self.dist_x.clone(), self.dist_y.clone(), budget_x, budget_y)
    }

    /// The same problem with the roles of `X` and `Y` exchanged.
    pub fn transposed(&self) -> Self {
        let (nx, ny) = (self.source.sizes()[0], self.source.sizes()[1]);
        let mut pmf = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                pmf[y * nx + x] = self.source.pmf()[x * ny + y];
            }
        }
        CdProblem {
            source: JointSource::new(pmf, vec![ny, nx]).expect("transpose of a valid pmf"),
            dist_x: self.dist_y.clone(),
            dist_y: self.dist_x.clone(),
            budget_x: self.budget_y,
            budget_y: self.budget_x,
        }
    }

    /// `|X||Y| + 2`.
    pub fn default_u_size(&self) -> usize {
        self.source.len() + 2
    }

    /// Smallest distortions reachable at any rate (decoder knows its target).
    pub fn min_distortions(&self) -> (f64, f64) {
        let px = self.source.marginal(&[0]).expect("coordinate 0");
        let py = self.source.marginal(&[1]).expect("coordinate 1");
        (self.dist_x.min_distortion(&px), self.dist_y.min_distortion(&py))
    }

    /// Distortions of the best decoders that use side information only.
    pub fn side_only_distortions(&self) -> (f64, f64) {
        let ch = AuxiliaryChannel::constant(self.source.len(), 1);
        let e = self.engine();
        let d = e.dist_values(ch.as_flat(), 1, &e.optimal_decoders(ch.as_flat(), 1));
        (d[0], d[1])
    }

    pub(crate) fn engine(&self) -> Engine {
        build_engine(&self.source, &self.dist_x, &self.dist_y, self.budget_x, self.budget_y)
    }

    fn check_reachable(&self, tol: f64) -> Result<()> {
        let (mx, my) = self.min_distortions();
        if mx > self.budget_x + tol || my > self.budget_y + tol {
            return Err(Error::Infeasible(format!(
                "budgets ({}, {}) lie below the smallest reachable distortions ({mx}, {my})",
                self.budget_x, self.budget_y
            )));
        }
        Ok(())
    }

    fn solution_from(&self, c: Candidate, us: usize, restarts: usize, tol: f64) -> CdSolution {
        let feasible = self.engine().is_feasible(&c, tol);
        let mut decoders = c.decoders.into_iter();
        let first = decoders.next().expect("two rules");
        let second = decoders.next().expect("two rules");
        CdSolution {
            rate: c.rate,
            information: (c.info[0], c.info[1]),
            channel: AuxiliaryChannel::from_raw(us, self.source.len(), c.w),
            decoders: (first, second),
            achieved_distortions: (c.dist[0], c.dist[1]),
            feasible,
            restarts_used: restarts,
            start_rates: Vec::new(),
            lifted_rate: None,
        }
    }

    /// Best feasible channel found by the multi-start optimizer. The result
    /// is an upper bound on the true minimum.
    pub fn optimize(&self, u_size: Option<usize>, opts: &OptimizerOptions) -> Result<CdSolution> {
        opts.validate()?;
        self.check_reachable(opts.feasibility_tol)?;
        let us = u_size.unwrap_or_else(|| self.default_u_size());
        let out = self.engine().solve(us, opts)?;
        let mut sol = self.solution_from(out.best, us, opts.restarts.max(1), opts.feasibility_tol);
        sol.start_rates = out.start_rates;
        sol.lifted_rate = out.lifted_rate;
        Ok(sol)
    }

    /// Exhaustive search over channels whose rows lie on the simplex grid
    /// with denominator `grid_q`, each scored with its optimal decoders.
    /// Returns `f64::INFINITY` when no grid point meets the budgets.
    pub fn brute_force(&self, u_size: usize, grid_q: usize) -> Result<f64> {
        if u_size == 0 || grid_q == 0 {
            return Err(Error::InvalidParams("u_size and grid_q must be positive".into()));
        }
        let points = simplex_grid(u_size, grid_q);
        let rows = self.source.len();
        let total = (points.len() as u128).checked_pow(rows as u32).unwrap_or(u128::MAX);
        if total > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge(format!(
                "{total} channel evaluations exceed the limit of {BRUTE_FORCE_LIMIT}"
            )));
        }
        let engine = self.engine();
        let tol = OptimizerOptions::default().feasibility_tol;
        let best = (0..points.len())
            .into_par_iter()
            .map(|first| {
                let mut idx = vec![0usize; rows];
                idx[0] = first;
                let mut w = vec![0.0; rows * u_size];
                let mut best = f64::INFINITY;
                loop {
                    for (r, &i) in idx.iter().enumerate() {
                        w[r * u_size..(r + 1) * u_size].copy_from_slice(&points[i]);
                    }
                    let c = engine.assess(&w, u_size);
                    if engine.is_feasible(&c, tol) && c.rate < best {
                        best = c.rate;
                    }
                    let mut r = 1;
                    while r < rows {
                        idx[r] += 1;
                        if idx[r] < points.len() {
                            break;
                        }
                        idx[r] = 0;
                        r += 1;
                    }
                    if r == rows {
                        break;
                    }
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min);
        Ok(best)
    }

    /// Optimizes with `|X||Y|+2` and `|X||Y|+6` auxiliary letters using the
    /// same options and seeds.
    pub fn saturation_check(&self, opts: &OptimizerOptions) -> Result<SaturationReport> {
        let u_small = self.source.len() + 2;
        let u_large = self.source.len() + 6;
        let rate_small = self.optimize(Some(u_small), opts)?.rate;
        let rate_large = self.optimize(Some(u_large), opts)?.rate;
        Ok(SaturationReport { u_small, u_large, rate_small, rate_large, difference: rate_small - rate_large })
    }

    fn smoothing_inputs(
        &self,
        ch: &AuxiliaryChannel,
        decoders: (&DecoderRule, &DecoderRule),
        sm: &Smoothing,
    ) -> Result<Vec<DecoderRule>> {
        if ch.rows() != self.source.len() || ch.as_flat().len() != ch.rows() * ch.u_size() {
            return Err(Error::ShapeMismatch("channel does not match the source".into()));
        }
        if sm.mu.len() != 2 {
            return Err(Error::ShapeMismatch(format!("expected two multipliers, got {}", sm.mu.len())));
        }
        achieved_distortions(&self.source, ch, decoders, (&self.dist_x, &self.dist_y))?;
        Ok(vec![decoders.0.clone(), decoders.1.clone()])
    }

    /// Smoothed objective minimized for fixed decoders:
    /// `tau * ln(e^{I_1/tau} + e^{I_2/tau})` plus the augmented-Lagrangian
    /// budget penalty.
    pub fn smoothed_objective(
        &self,
        ch: &AuxiliaryChannel,
        decoders: (&DecoderRule, &DecoderRule),
        sm: &Smoothing,
    ) -> Result<f64> {
        let rules = self.smoothing_inputs(ch, decoders, sm)?;
        Ok(self.engine().smoothed(ch.as_flat(), ch.u_size(), &rules, sm))
    }

    /// Gradient of [`smoothed_objective`](Self::smoothed_objective) with
    /// respect to each channel entry (flat, row-major).
    pub fn smoothed_gradient(
        &self,
        ch: &AuxiliaryChannel,
        decoders: (&DecoderRule, &DecoderRule),
        sm: &Smoothing,
    ) -> Result<Vec<f64>> {
        let rules = self.smoothing_inputs(ch, decoders, sm)?;
        Ok(self.engine().gradient(ch.as_flat(), ch.u_size(), &rules, sm))
    }
}

/// All pmfs on `k` letters with entries in `{0, 1/q, ..., 1}`.
pub(crate) fn simplex_grid(k: usize, q: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, q: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / q as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k - 1, left - c, q, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, q, q, &mut Vec::new(), &mut out);
    out
}

pub fn brute_force_cd_rate(
    source: &JointSource,
    dms: (&DistortionMeasure, &DistortionMeasure),
    budgets: &DistortionBudget,
    u_size: usize,
    grid_q: usize,
) -> Result<f64> {
    let b = budgets.values();
    if b.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected two budgets, got {}", b.len())));
    }
    CdProblem::new(source.clone(), dms.0.clone(), dms.1.clone(), b[0], b[1])?.brute_force(u_size, grid_q)
}

pub fn cardinality_saturation_check(
    source: &JointSource,
    dms: (&DistortionMeasure, &DistortionMeasure),
    budgets: &DistortionBudget,
    opts: &OptimizerOptions,
) -> Result<SaturationReport> {
    let b = budgets.values();
    if b.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected two budgets, got {}", b.len())));
    }
    CdProblem::new(source.clone(), dms.0.clone(), dms.1.clone(), b[0], b[1])?.saturation_check(opts)
}
