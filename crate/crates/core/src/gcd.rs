//! N-source generalization: decoder `j` knows the sources outside its target
//! set `S_j` and reproduces every source in `S_j`. The rate is
//! `max_j I(X^(S_j); U | X^(S_j^c))`.

use serde::{Deserialize, Serialize};

use crate::cd::CdProblem;
use crate::channel::AuxiliaryChannel;
use crate::error::{Error, Result};
use crate::prob::{check_distinct, DecoderRule, DistortionMeasure, JointSource};
use crate::solver::{DistTerm, Engine, OptimizerOptions, SideMap};

/// Largest product alphabet accepted by the optimizer.
pub const MAX_PRODUCT_ALPHABET: usize = 64;

/// One decoder: the coordinates it reproduces, with a distortion measure
/// and budget per target (in the order of `targets`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub targets: Vec<usize>,
    pub measures: Vec<DistortionMeasure>,
    pub budgets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcdProblem {
    source: JointSource,
    decoders: Vec<DecoderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcdSolution {
    pub rate: f64,
    /// `I(X^(S_j); U | X^(S_j^c))` per decoder.
    pub information: Vec<f64>,
    pub channel: AuxiliaryChannel,
    /// Decoder rules indexed `[decoder][target]`; each maps
    /// `(u, side tuple)` to a reconstruction letter.
    pub decoders: Vec<Vec<DecoderRule>>,
    pub achieved_distortions: Vec<Vec<f64>>,
    pub feasible: bool,
    pub restarts_used: usize,
    pub lifted_rate: Option<f64>,
}

impl DecoderSpec {
    pub fn new(targets: Vec<usize>, measures: Vec<DistortionMeasure>, budgets: Vec<f64>) -> Self {
        DecoderSpec { targets, measures, budgets }
    }

    /// Hamming distortion on every target.
    pub fn hamming(source: &JointSource, targets: Vec<usize>, budgets: Vec<f64>) -> Self {
        let measures = targets.iter().map(|&t| DistortionMeasure::hamming(source.sizes()[t])).collect();
        DecoderSpec { targets, measures, budgets }
    }
}

impl GcdProblem {
    pub fn new(source: JointSource, decoders: Vec<DecoderSpec>) -> Result<Self> {
        if decoders.is_empty() {
            return Err(Error::InvalidParams("at least one decoder is required".into()));
        }
        let dims = source.dims();
        for spec in &decoders {
            if spec.targets.is_empty() {
                return Err(Error::InvalidParams("every decoder needs a nonempty target set".into()));
            }
            if let Some(&c) = spec.targets.iter().find(|&&c| c >= dims) {
                return Err(Error::CoordOutOfRange { coord: c, dims });
            }
            check_distinct(&[&spec.targets])?;
            if spec.measures.len() != spec.targets.len() || spec.budgets.len() != spec.targets.len() {
                return Err(Error::ShapeMismatch(format!(
                    "decoder with {} targets has {} measures and {} budgets",
                    spec.targets.len(),
                    spec.measures.len(),
                    spec.budgets.len()
                )));
            }
            for (&t, dm) in spec.targets.iter().zip(&spec.measures) {
                if dm.source_size() != source.sizes()[t] {
                    return Err(Error::ShapeMismatch(format!(
                        "distortion measure for coordinate {t} covers {} letters, source has {}",
                        dm.source_size(),
                        source.sizes()[t]
                    )));
                }
            }
            if let Some(&b) = spec.budgets.iter().find(|b| b.is_nan() || **b < 0.0) {
                return Err(Error::BudgetNegative(b));
            }
        }
        Ok(GcdProblem { source, decoders })
    }

    /// The two-source problem with `S_1 = {X}`, `S_2 = {Y}`.
    pub fn from_cd(problem: &CdProblem) -> Self {
        let (bx, by) = problem.budgets();
        GcdProblem {
            source: problem.source().clone(),
            decoders: vec![
                DecoderSpec::new(vec![0], vec![problem.dist_x().clone()], vec![bx]),
                DecoderSpec::new(vec![1], vec![problem.dist_y().clone()], vec![by]),
            ],
        }
    }

    /// Three sources where each decoder knows one source and reproduces the
    /// other two. `budgets[j]` lists the budgets of decoder `j` (which knows
    /// coordinate `j`) for its targets in increasing coordinate order.
    pub fn three_source(source: JointSource, measures: [DistortionMeasure; 3], budgets: [[f64; 2]; 3]) -> Result<Self> {
        if source.dims() != 3 {
            return Err(Error::ShapeMismatch(format!("expected three coordinates, got {}", source.dims())));
        }
        let decoders = (0..3)
            .map(|j| {
                let targets: Vec<usize> = (0..3).filter(|&c| c != j).collect();
                let ms = targets.iter().map(|&t| measures[t].clone()).collect();
                DecoderSpec::new(targets, ms, budgets[j].to_vec())
            })
            .collect();
        Self::new(source, decoders)
    }

    pub fn source(&self) -> &JointSource {
        &self.source
    }

    pub fn decoders(&self) -> &[DecoderSpec] {
        &self.decoders
    }

    /// Coordinates known to decoder `j` (the complement of its targets).
    pub fn side_of(&self, j: usize) -> Vec<usize> {
        (0..self.source.dims()).filter(|c| !self.decoders[j].targets.contains(c)).collect()
    }

    /// `|X^(I_N)| + sum_j |S_j|`.
    pub fn default_u_size(&self) -> usize {
        self.source.len() + self.decoders.iter().map(|d| d.targets.len()).sum::<usize>()
    }

    /// True for two sources with decoders `{X}` then `{Y}`.
    pub fn is_canonical_pair(&self) -> bool {
        self.source.dims() == 2
            && self.decoders.len() == 2
            && self.decoders[0].targets == [0]
            && self.decoders[1].targets == [1]
    }

    /// The equivalent two-source problem for canonical pairs.
    pub fn to_cd(&self) -> Option<CdProblem> {
        if !self.is_canonical_pair() {
            return None;
        }
        CdProblem::new(
            self.source.clone(),
            self.decoders[0].measures[0].clone(),
            self.decoders[1].measures[0].clone(),
            self.decoders[0].budgets[0],
            self.decoders[1].budgets[0],
        )
        .ok()
    }

    fn side_map(&self, j: usize) -> SideMap {
        let side = self.side_of(j);
        if side.is_empty() {
            SideMap { of_row: vec![0; self.source.len()], size: 1 }
        } else {
            SideMap { of_row: self.source.projection(&side), size: self.source.sub_size(&side) }
        }
    }

    pub(crate) fn engine(&self) -> Engine {
        let n = self.source.len();
        let info = (0..self.decoders.len()).map(|j| self.side_map(j)).collect();
        let mut dist = Vec::new();
        for (j, spec) in self.decoders.iter().enumerate() {
            for ((&t, dm), &b) in spec.targets.iter().zip(&spec.measures).zip(&spec.budgets) {
                let target = (0..n).map(|i| self.source.tuple_of(i)[t]).collect();
                dist.push(DistTerm { side: self.side_map(j), target, measure: dm.clone(), budget: b });
            }
        }
        Engine::new(self.source.pmf().to_vec(), (0..n).collect(), n, info, dist)
    }

    fn check_channel(&self, ch: &AuxiliaryChannel) -> Result<()> {
        if ch.rows() != self.source.len() {
            return Err(Error::ShapeMismatch(format!(
                "channel has {} rows, source has {} tuples",
                ch.rows(),
                self.source.len()
            )));
        }
        Ok(())
    }

    fn nest<T: Clone>(&self, flat: &[T]) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.decoders.len());
        let mut k = 0;
        for spec in &self.decoders {
            out.push(flat[k..k + spec.targets.len()].to_vec());
            k += spec.targets.len();
        }
        out
    }

    pub fn information_terms(&self, ch: &AuxiliaryChannel) -> Result<Vec<f64>> {
        self.check_channel(ch)?;
        Ok(self.engine().info_values(ch.as_flat(), ch.u_size()))
    }

    /// `max_j I(X^(S_j); U | X^(S_j^c))`.
    pub fn objective(&self, ch: &AuxiliaryChannel) -> Result<f64> {
        Ok(self.information_terms(ch)?.into_iter().fold(0.0, f64::max))
    }

    /// Posterior-optimal rule for every (decoder, target) pair.
    pub fn optimal_decoders(&self, ch: &AuxiliaryChannel) -> Result<Vec<Vec<DecoderRule>>> {
        self.check_channel(ch)?;
        Ok(self.nest(&self.engine().optimal_decoders(ch.as_flat(), ch.u_size())))
    }

    pub fn achieved_distortions(&self, ch: &AuxiliaryChannel, rules: &[Vec<DecoderRule>]) -> Result<Vec<Vec<f64>>> {
        self.check_channel(ch)?;
        let flat: Vec<DecoderRule> = rules.iter().flatten().cloned().collect();
        let engine = self.engine();
        let expected: Vec<(usize, usize, usize)> = self
            .decoders
            .iter()
            .enumerate()
            .flat_map(|(j, spec)| {
                let side = self.side_map(j).size;
                spec.measures.iter().map(move |m| (ch.u_size(), side, m.recon_size()))
            })
            .collect();
        if flat.len() != expected.len() {
            return Err(Error::ShapeMismatch(format!("expected {} decoder rules, got {}", expected.len(), flat.len())));
        }
        for (rule, &(us, side, recon)) in flat.iter().zip(&expected) {
            if rule.u_size() != us || rule.side_size() != side || rule.table().iter().any(|&r| r >= recon) {
                return Err(Error::ShapeMismatch("decoder rule does not match its decoder".into()));
            }
        }
        Ok(self.nest(&engine.dist_values(ch.as_flat(), ch.u_size(), &flat)))
    }

    fn check_reachable(&self, tol: f64) -> Result<()> {
        for spec in &self.decoders {
            for ((&t, dm), &b) in spec.targets.iter().zip(&spec.measures).zip(&spec.budgets) {
                let p = self.source.marginal(&[t])?;
                let m = dm.min_distortion(&p);
                if m > b + tol {
                    return Err(Error::Infeasible(format!(
                        "budget {b} for coordinate {t} lies below the smallest reachable distortion {m}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn optimize(&self, u_size: Option<usize>, opts: &OptimizerOptions) -> Result<GcdSolution> {
        opts.validate()?;
        if self.source.len() > MAX_PRODUCT_ALPHABET {
            return Err(Error::TooLarge(format!(
                "product alphabet of {} letters exceeds {MAX_PRODUCT_ALPHABET}",
                self.source.len()
            )));
        }
        self.check_reachable(opts.feasibility_tol)?;
        let us = u_size.unwrap_or_else(|| self.default_u_size());
        let engine = self.engine();
        let out = engine.solve(us, opts)?;
        let c = out.best;
        let feasible = engine.is_feasible(&c, opts.feasibility_tol);
        Ok(GcdSolution {
            rate: c.rate,
            information: c.info.clone(),
            channel: AuxiliaryChannel::from_raw(us, self.source.len(), c.w),
            decoders: self.nest(&c.decoders),
            achieved_distortions: self.nest(&c.dist),
            feasible,
            restarts_used: opts.restarts.max(1),
            lifted_rate: out.lifted_rate,
        })
    }
}

pub fn gcd_objective(problem: &GcdProblem, ch: &AuxiliaryChannel) -> Result<f64> {
    problem.objective(ch)
}

pub fn optimize_gcd_rate(problem: &GcdProblem, u_size: Option<usize>, opts: &OptimizerOptions) -> Result<GcdSolution> {
    problem.optimize(u_size, opts)
}

/// Optimizes the three-source problem where each decoder knows one source
/// and reproduces the other two.
pub fn three_source_example(
    source: JointSource,
    measures: [DistortionMeasure; 3],
    budgets: [[f64; 2]; 3],
    opts: &OptimizerOptions,
) -> Result<GcdSolution> {
    GcdProblem::three_source(source, measures, budgets)?.optimize(None, opts)
}
