mod common;

use comdel::{
    conditional_rd, lossless_cd_rate, wyner_ziv, CdProblem, DistortionMeasure, Error, JointSource, OptimizerOptions,
};

use common::*;

fn quick() -> OptimizerOptions {
    OptimizerOptions { restarts: 8, ..OptimizerOptions::default() }
}

/// All pmfs on two letters with denominator `q`.
fn binary_grid(q: usize) -> Vec<[f64; 2]> {
    (0..=q).map(|i| [i as f64 / q as f64, 1.0 - i as f64 / q as f64]).collect()
}

/// Conditional rate-distortion of `X` given `Y` for a binary pair under
/// Hamming distortion, minimized over test channels `P(xhat | x, y)` whose
/// rows lie on a grid. Sits above the true value by the grid resolution.
fn grid_conditional_rd(pmf: &[f64], d: f64, q: usize) -> f64 {
    let grid = binary_grid(q);
    let mut best = f64::INFINITY;
    for a in &grid {
        for b in &grid {
            for c in &grid {
                for e in &grid {
                    let rows = [a, b, c, e];
                    let mut dist = 0.0;
                    let mut info = 0.0;
                    for y in 0..2 {
                        let py: f64 = pmf[y] + pmf[2 + y];
                        if py == 0.0 {
                            continue;
                        }
                        #[allow(clippy::needless_range_loop)]
                        for xh in 0..2 {
                            let q_xh: f64 = (0..2).map(|x| pmf[x * 2 + y] * rows[x * 2 + y][xh]).sum::<f64>() / py;
                            for x in 0..2 {
                                let pj = pmf[x * 2 + y] * rows[x * 2 + y][xh];
                                if pj > 0.0 {
                                    info += pj * (rows[x * 2 + y][xh] / q_xh).ln();
                                }
                                if x != xh {
                                    dist += pj;
                                }
                            }
                        }
                    }
                    if dist <= d + 1e-12 && info < best {
                        best = info;
                    }
                }
            }
        }
    }
    best
}

/// Wyner-Ziv function of DSBS(p) under Hamming distortion: the lower convex
/// envelope of `h(p * D) - h(D)` on `[0, p]` together with `(p, 0)`, where
/// `p * D = p(1 - D) + D(1 - p)`.
fn dsbs_wyner_ziv(p: f64, d: f64) -> f64 {
    let g = |t: f64| binary_entropy(p * (1.0 - t) + t * (1.0 - p)) - binary_entropy(t);
    if d >= p {
        return 0.0;
    }
    let n = 200_000;
    let mut best = g(d);
    for i in 0..n {
        let t = d * i as f64 / n as f64;
        // Chord from (t, g(t)) to (p, 0), evaluated at d.
        let v = g(t) * (p - d) / (p - t);
        best = best.min(v);
    }
    best
}

#[test]
fn lossless_rate_matches_direct_sum() {
    let mut rng = rng(11);
    for _ in 0..10 {
        let src = random_binary_pair(&mut rng);
        let (a, b) = plain_conditional_entropies(src.pmf(), 2, 2);
        assert!((lossless_cd_rate(&src).unwrap() - a.max(b)).abs() < 1e-12);
    }
}

#[test]
fn conditional_rd_against_grid_oracle() {
    let mut rng = rng(12);
    for _ in 0..4 {
        let src = random_binary_pair(&mut rng);
        let base = CdProblem::hamming(src.clone(), 0.0, 0.0).unwrap();
        let (lo, hi) = (base.min_distortions().0, base.side_only_distortions().0);
        for frac in [0.25, 0.6] {
            let d = lo + frac * (hi - lo);
            let got = conditional_rd(&src, &DistortionMeasure::hamming(2), d, 0).unwrap();
            let oracle = grid_conditional_rd(src.pmf(), d, 16);
            assert!(got <= oracle + 1e-6, "R_C {got} above grid value {oracle}");
            assert!(oracle - got <= 0.03, "grid value {oracle} far above R_C {got}");
        }
    }
}

#[test]
fn conditional_rd_closed_form_on_dsbs() {
    for (p, d) in [(0.1, 0.02), (0.2, 0.1), (0.3, 0.15)] {
        let got = conditional_rd(&JointSource::dsbs(p), &DistortionMeasure::hamming(2), d, 1).unwrap();
        let want = binary_entropy(p) - binary_entropy(d);
        assert!((got - want).abs() < 1e-6, "p {p} d {d}: {got} vs {want}");
    }
}

#[test]
fn wyner_ziv_closed_form_on_dsbs() {
    let src = JointSource::dsbs(0.1);
    for d in [0.02, 0.05, 0.08] {
        let got = wyner_ziv(&src, &DistortionMeasure::hamming(2), d, 0, &quick()).unwrap();
        let want = dsbs_wyner_ziv(0.1, d);
        assert!((got - want).abs() < 1e-3, "D {d}: {got} vs {want}");
    }
}

#[test]
fn budgets_below_reach_are_infeasible() {
    let src = JointSource::new(vec![0.4, 0.1, 0.2, 0.3], vec![2, 2]).unwrap();
    let d = DistortionMeasure::new(vec![vec![0.1, 1.0], vec![1.0, 0.2]]).unwrap();
    assert!(matches!(conditional_rd(&src, &d, 0.05, 0), Err(Error::Infeasible(_))));
    let p = CdProblem::new(src, d.clone(), d, 0.05, 0.5).unwrap();
    assert!(matches!(p.optimize(None, &quick()), Err(Error::Infeasible(_))));
}

#[test]
fn swapping_sources_keeps_the_rate() {
    let mut rng = rng(13);
    for _ in 0..3 {
        let p = random_problem(&mut rng);
        let a = p.optimize(None, &quick()).unwrap().rate;
        let b = p.transposed().optimize(None, &quick()).unwrap().rate;
        assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
    }
}

#[test]
fn rate_is_nonincreasing_in_budgets() {
    let mut rng = rng(14);
    let src = random_binary_pair(&mut rng);
    let mut last = f64::INFINITY;
    for frac in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let r = at_fractions(src.clone(), frac, frac).optimize(None, &quick()).unwrap().rate;
        assert!(r <= last + 1e-3, "rate rose to {r} from {last} at {frac}");
        last = r;
    }
    assert!(last.abs() < 1e-9);
}

#[test]
fn solution_is_self_consistent() {
    let mut rng = rng(15);
    let p = random_problem(&mut rng);
    let sol = p.optimize(None, &quick()).unwrap();
    let (a, b) = comdel::cd_information_terms(p.source(), &sol.channel).unwrap();
    assert!((sol.rate - a.max(b)).abs() < 1e-12);
    let (bx, by) = p.budgets();
    assert!(sol.feasible);
    assert!(sol.achieved_distortions.0 <= bx + 1e-6 && sol.achieved_distortions.1 <= by + 1e-6);
    let grid = p.brute_force(2, 16).unwrap();
    let restricted = p.optimize(Some(2), &quick()).unwrap().rate;
    assert!(sol.rate <= restricted + 1e-6);
    assert!(restricted <= grid + 1e-3);
}

#[test]
fn oversized_brute_force_is_refused() {
    let p = CdProblem::hamming(JointSource::dsbs(0.1), 0.1, 0.1).unwrap();
    assert!(matches!(p.brute_force(6, 40), Err(Error::TooLarge(_))));
}
