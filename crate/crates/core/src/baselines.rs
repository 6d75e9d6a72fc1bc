//! Reference rates: lossless complementary delivery, the conditional
//! rate-distortion function and the Wyner-Ziv function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cd::CdProblem;
use crate::error::{Error, Result};
use crate::prob::{conditional_entropy, DistortionMeasure, JointSource};
use crate::solver::{DistTerm, Engine, OptimizerOptions, SideMap};

/// Number of slopes in the conditional rate-distortion sweep.
pub const SLOPE_POINTS: usize = 64;
pub const SLOPE_MIN: f64 = 1e-4;
pub const SLOPE_MAX: f64 = 1e4;
/// Number of distortion grid points for the Wyner-Ziv envelope.
pub const WZ_GRID_POINTS: usize = 33;
/// Sandwich violations smaller than this are not flagged.
pub const SANDWICH_TOL: f64 = 2e-3;

const BA_TOL: f64 = 1e-9;
const BA_MAX_ITERS: usize = 2000;

/// `max{H(X|Y), H(Y|X)}`.
pub fn lossless_cd_rate(source: &JointSource) -> Result<f64> {
    if source.dims() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
    }
    Ok(conditional_entropy(source, &[0], &[1])?.max(conditional_entropy(source, &[1], &[0])?))
}

fn check_target(source: &JointSource, dm: &DistortionMeasure, which: usize, d: f64) -> Result<()> {
    if source.dims() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
    }
    if which > 1 {
        return Err(Error::CoordOutOfRange { coord: which, dims: 2 });
    }
    if dm.source_size() != source.sizes()[which] {
        return Err(Error::ShapeMismatch(format!(
            "distortion measure covers {} letters, target has {}",
            dm.source_size(),
            source.sizes()[which]
        )));
    }
    if d.is_nan() || d < 0.0 {
        return Err(Error::BudgetNegative(d));
    }
    Ok(())
}

/// `P(target, side)` laid out `[side][target]`, with side marginal.
fn split(source: &JointSource, which: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sizes = source.sizes();
    let (nt, ns) = (sizes[which], sizes[1 - which]);
    let mut joint = vec![vec![0.0; nt]; ns];
    for (i, &p) in source.pmf().iter().enumerate() {
        let t = source.tuple_of(i);
        joint[t[1 - which]][t[which]] += p;
    }
    let side = joint.iter().map(|r| r.iter().sum()).collect();
    (joint, side)
}

/// Smallest and side-only distortions for reproducing coordinate `which`.
fn distortion_range(joint: &[Vec<f64>], dm: &DistortionMeasure) -> (f64, f64) {
    let mut dmin = 0.0;
    let mut dside = 0.0;
    for row in joint {
        dmin += dm.min_distortion(row);
        let r = dm.best_reconstruction(row);
        dside += row.iter().enumerate().map(|(x, p)| p * dm.get(x, r)).sum::<f64>();
    }
    (dmin, dside)
}

/// Blahut-Arimoto at slope `beta` for one side letter; returns
/// `(rate, distortion)` of the final test channel, both unnormalized by the
/// side-letter mass (`joint_row` carries it).
fn ba_side(joint_row: &[f64], dm: &DistortionMeasure, beta: f64) -> (f64, f64) {
    let mass: f64 = joint_row.iter().sum();
    if mass <= 0.0 {
        return (0.0, 0.0);
    }
    let px: Vec<f64> = joint_row.iter().map(|p| p / mass).collect();
    let nr = dm.recon_size();
    let mut q = vec![1.0 / nr as f64; nr];
    let mut w = vec![vec![0.0; nr]; px.len()];
    let mut last = f64::INFINITY;
    let mut result = (0.0, 0.0);
    for _ in 0..BA_MAX_ITERS {
        for (x, row) in w.iter_mut().enumerate() {
            // Shift exponents by the row minimum so large slopes stay finite.
            let m = (0..nr).filter(|&r| q[r] > 0.0).map(|r| dm.get(x, r)).fold(f64::INFINITY, f64::min);
            let mut s = 0.0;
            for r in 0..nr {
                row[r] = if q[r] > 0.0 { q[r] * (-beta * (dm.get(x, r) - m)).exp() } else { 0.0 };
                s += row[r];
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let mut out = vec![0.0; nr];
        for (x, row) in w.iter().enumerate() {
            for r in 0..nr {
                out[r] += px[x] * row[r];
            }
        }
        let mut rate = 0.0;
        let mut dist = 0.0;
        for (x, row) in w.iter().enumerate() {
            for r in 0..nr {
                if row[r] > 0.0 && px[x] > 0.0 {
                    rate += px[x] * row[r] * (row[r] / out[r]).ln();
                    dist += px[x] * row[r] * dm.get(x, r);
                }
            }
        }
        result = (mass * rate.max(0.0), mass * dist);
        q = out;
        if (last - rate).abs() < BA_TOL {
            break;
        }
        last = rate;
    }
    result
}

/// `(distortion, rate)` of the conditional problem at slope `beta`.
fn ba_point(joint: &[Vec<f64>], dm: &DistortionMeasure, beta: f64) -> (f64, f64) {
    joint.iter().fold((0.0, 0.0), |(d, r), row| {
        let (ri, di) = ba_side(row, dm, beta);
        (d + di, r + ri)
    })
}

/// Value at `d` of the lower convex envelope of `points` (distortion, rate).
/// Points must cover `d` from both sides.
pub fn lower_convex_envelope_at(points: &[(f64, f64)], d: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &(d1, r1) in points {
        if (d1 - d).abs() <= 1e-15 {
            best = best.min(r1);
        }
        for &(d2, r2) in points {
            if d1 < d && d < d2 {
                let t = (d - d1) / (d2 - d1);
                best = best.min((1.0 - t) * r1 + t * r2);
            }
        }
    }
    best
}

/// `R_C(target | side, D)` for target coordinate `which` (the other
/// coordinate is the side information), in nats.
///
/// Runs Blahut-Arimoto per side letter with a shared slope over a
/// logarithmic slope grid, takes the lower convex envelope at `d`, then
/// bisects the slope between the bracketing grid points.
pub fn conditional_rd(source: &JointSource, dm: &DistortionMeasure, d: f64, which: usize) -> Result<f64> {
    check_target(source, dm, which, d)?;
    let (joint, _) = split(source, which);
    let (dmin, dside) = distortion_range(&joint, dm);
    if d >= dside {
        return Ok(0.0);
    }
    if d < dmin - 1e-12 {
        return Err(Error::Infeasible(format!("distortion {d} is below the smallest reachable value {dmin}")));
    }
    let slopes: Vec<f64> = (0..SLOPE_POINTS)
        .map(|i| SLOPE_MIN * (SLOPE_MAX / SLOPE_MIN).powf(i as f64 / (SLOPE_POINTS - 1) as f64))
        .collect();
    let mut pts: Vec<(f64, f64, f64)> = slopes
        .par_iter()
        .map(|&b| {
            let (pd, pr) = ba_point(&joint, dm, b);
            (b, pd, pr)
        })
        .collect();
    pts.push((0.0, dside, 0.0));
    let envelope: Vec<(f64, f64)> = pts.iter().map(|p| (p.1, p.2)).collect();
    let mut value = lower_convex_envelope_at(&envelope, d);
    // Refine on the slope axis: distortion decreases as the slope grows.
    let hi = pts.iter().filter(|p| p.1 <= d && p.0 > 0.0).min_by(|a, b| a.0.total_cmp(&b.0)).copied();
    let lo = pts.iter().filter(|p| p.1 > d).max_by(|a, b| a.0.total_cmp(&b.0)).copied();
    if let (Some(mut hi), Some(mut lo)) = (hi, lo) {
        for _ in 0..100 {
            if hi.0 - lo.0 <= 1e-12 * hi.0 {
                break;
            }
            let mid = if lo.0 > 0.0 { (lo.0 * hi.0).sqrt() } else { hi.0 / 2.0 };
            let (pd, pr) = ba_point(&joint, dm, mid);
            if pd <= d {
                hi = (mid, pd, pr);
            } else {
                lo = (mid, pd, pr);
            }
            if (pd - d).abs() < 1e-12 {
                break;
            }
        }
        let chord = if (lo.1 - hi.1).abs() > 0.0 {
            let t = (lo.1 - d) / (lo.1 - hi.1);
            (1.0 - t) * lo.2 + t * hi.2
        } else {
            hi.2
        };
        value = value.min(chord);
    }
    Ok(value.max(0.0))
}

fn wz_engine(source: &JointSource, dm: &DistortionMeasure, d: f64, which: usize) -> Engine {
    let sizes = source.sizes();
    let n = source.len();
    let mut target = Vec::with_capacity(n);
    let mut side = Vec::with_capacity(n);
    for i in 0..n {
        let t = source.tuple_of(i);
        target.push(t[which]);
        side.push(t[1 - which]);
    }
    let ns = sizes[1 - which];
    let info = vec![SideMap { of_row: side.clone(), size: ns }];
    let dist = vec![DistTerm {
        side: SideMap { of_row: side, size: ns },
        target: target.clone(),
        measure: dm.clone(),
        budget: d,
    }];
    Engine::new(source.pmf().to_vec(), target, sizes[which], info, dist)
}

/// Wyner-Ziv rate at `d` without time-sharing correction: the best
/// `I(X;U|Y)` found over `P_{U|X}` with `|X|+1` letters.
pub fn wyner_ziv_raw(
    source: &JointSource,
    dm: &DistortionMeasure,
    d: f64,
    which: usize,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_target(source, dm, which, d)?;
    let (joint, _) = split(source, which);
    let (dmin, dside) = distortion_range(&joint, dm);
    if d >= dside {
        return Ok(0.0);
    }
    if d < dmin - opts.feasibility_tol {
        return Err(Error::Infeasible(format!("distortion {d} is below the smallest reachable value {dmin}")));
    }
    let us = source.sizes()[which] + 1;
    Ok(wz_engine(source, dm, d, which).solve(us, opts)?.best.rate)
}

/// Raw Wyner-Ziv values on the evenly spaced grid from the smallest
/// reachable distortion to the side-only distortion, plus `extra` points.
pub fn wyner_ziv_curve(
    source: &JointSource,
    dm: &DistortionMeasure,
    which: usize,
    extra: &[f64],
    opts: &OptimizerOptions,
) -> Result<Vec<(f64, f64)>> {
    check_target(source, dm, which, 0.0)?;
    let (joint, _) = split(source, which);
    let (dmin, dside) = distortion_range(&joint, dm);
    let mut grid: Vec<f64> = (0..WZ_GRID_POINTS)
        .map(|i| dmin + (dside - dmin) * i as f64 / (WZ_GRID_POINTS - 1) as f64)
        .chain(extra.iter().copied().filter(|&d| d >= dmin && d <= dside))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.into_par_iter().map(|d| Ok((d, wyner_ziv_raw(source, dm, d, which, opts)?))).collect()
}

/// `R_WZ(target | side, D)`: the lower convex envelope of the raw values
/// over the distortion grid, evaluated at `d`.
pub fn wyner_ziv(
    source: &JointSource,
    dm: &DistortionMeasure,
    d: f64,
    which: usize,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_target(source, dm, which, d)?;
    let (joint, _) = split(source, which);
    let (dmin, dside) = distortion_range(&joint, dm);
    if d >= dside {
        return Ok(0.0);
    }
    if d < dmin - opts.feasibility_tol {
        return Err(Error::Infeasible(format!("distortion {d} is below the smallest reachable value {dmin}")));
    }
    let curve = wyner_ziv_curve(source, dm, which, &[d.max(dmin)], opts)?;
    Ok(lower_convex_envelope_at(&curve, d.max(dmin)).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub rate: f64,
    /// `(R_C(X|Y, D_X), R_C(Y|X, D_Y))`.
    pub conditional: (f64, f64),
    /// `(R_WZ(X|Y, D_X), R_WZ(Y|X, D_Y))`.
    pub wyner_ziv: (f64, f64),
    pub lower: f64,
    pub upper: f64,
    /// `rate - lower`; negative beyond tolerance means a violation.
    pub lower_slack: f64,
    /// `upper - rate`.
    pub upper_slack: f64,
    pub violated: bool,
}

/// Computes the complementary-delivery rate and both reference bounds.
pub fn sandwich_check(problem: &CdProblem, opts: &OptimizerOptions) -> Result<SandwichReport> {
    let (bx, by) = problem.budgets();
    let src = problem.source();
    let rate = problem.optimize(None, opts)?.rate;
    let conditional = (conditional_rd(src, problem.dist_x(), bx, 0)?, conditional_rd(src, problem.dist_y(), by, 1)?);
    let wyner_ziv = (wyner_ziv(src, problem.dist_x(), bx, 0, opts)?, wyner_ziv(src, problem.dist_y(), by, 1, opts)?);
    let lower = conditional.0.max(conditional.1);
    let upper = wyner_ziv.0.max(wyner_ziv.1);
    let lower_slack = rate - lower;
    let upper_slack = upper - rate;
    Ok(SandwichReport {
        rate,
        conditional,
        wyner_ziv,
        lower,
        upper,
        lower_slack,
        upper_slack,
        violated: lower_slack < -SANDWICH_TOL || upper_slack < -SANDWICH_TOL,
    })
}
