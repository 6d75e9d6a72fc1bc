//! Acceptance suite. Each test prints one `[acceptance]` line with its
//! verdict before asserting.

mod common;

use std::time::{Duration, Instant};

use comdel::{
    conditional_rd, mutual_information, optimal_decoders, sandwich_check, simulate, success_distortion_bound,
    three_source_example, AuxiliaryChannel, CdProblem, DistortionMeasure, GcdProblem, JointSource, OptimizerOptions,
    SimConfig, Smoothing,
};
use rand::Rng;

use common::*;

fn default_opts() -> OptimizerOptions {
    OptimizerOptions::default()
}

#[test]
fn criterion_1_lossless_corner() {
    let opts = default_opts();
    assert_eq!(opts.restarts, 32);
    let mut pass = true;
    let mut lines = Vec::new();
    let mut cases: Vec<(String, JointSource, f64)> =
        [0.05, 0.1, 0.2].iter().map(|&p| (format!("DSBS({p})"), JointSource::dsbs(p), 1e-3)).collect();
    cases.push(("2x3".into(), JointSource::new(vec![0.3, 0.1, 0.05, 0.05, 0.2, 0.3], vec![2, 3]).unwrap(), 2e-3));
    for (name, src, tol) in cases {
        let (nx, ny) = (src.sizes()[0], src.sizes()[1]);
        let (hxy, hyx) = plain_conditional_entropies(src.pmf(), nx, ny);
        let want = hxy.max(hyx);
        let t = Instant::now();
        let got = CdProblem::hamming(src, 0.0, 0.0).unwrap().optimize(None, &opts).unwrap().rate;
        let el = t.elapsed();
        let ok = (got - want).abs() <= tol && el <= Duration::from_secs(60);
        pass &= ok;
        lines.push(format!("{name}: {got:.6} vs {want:.6} ({:.1}s)", el.as_secs_f64()));
    }
    report(1, "lossless corner", pass, &lines.join("; "));
    assert!(pass, "{lines:?}");
}

#[test]
fn criterion_2_conditional_rd_corner() {
    let opts = default_opts();
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let src = random_binary_pair(&mut rng);
        for frac in [0.2, 0.5, 0.8] {
            let p = at_fractions(src.clone(), 0.5, frac);
            let dy = p.budgets().1;
            let p = p.with_budgets(p.dist_x().dmax(), dy).unwrap();
            let rate = p.optimize(None, &opts).unwrap().rate;
            let rc = conditional_rd(&src, p.dist_y(), dy, 1).unwrap();
            worst = worst.max((rate - rc).abs());
        }
    }
    let pass = worst <= 2e-3;
    report(2, "conditional-RD corner", pass, &format!("15 cases, max |R - R_C(Y|X)| = {worst:.2e} nats"));
    assert!(pass);
}

#[test]
fn criterion_3_sandwich() {
    let opts = default_opts();
    let mut rng = rng(3);
    let mut min_lower: f64 = f64::INFINITY;
    let mut min_upper: f64 = f64::INFINITY;
    for _ in 0..20 {
        let p = random_problem(&mut rng);
        let rep = sandwich_check(&p, &opts).unwrap();
        min_lower = min_lower.min(rep.lower_slack);
        min_upper = min_upper.min(rep.upper_slack);
    }
    let pass = min_lower >= -1e-3 && min_upper >= -1e-3;
    report(
        3,
        "sandwich",
        pass,
        &format!("20 cases, min(R - max R_C) = {min_lower:.2e}, min(max R_WZ - R) = {min_upper:.2e} nats"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_cardinality_saturation() {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        for seed in 0..5 {
            let rep = p.saturation_check(&OptimizerOptions { seed, ..default_opts() }).unwrap();
            assert_eq!((rep.u_small, rep.u_large), (6, 10));
            worst = worst.max(rep.difference.abs());
        }
    }
    let pass = worst <= 2e-3;
    report(4, "cardinality saturation", pass, &format!("50 runs, max |R(6) - R(10)| = {worst:.2e} nats"));
    assert!(pass);
}

#[test]
fn criterion_5_gcd_reduction() {
    let opts = default_opts();
    let mut rng = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        let cd = p.optimize(None, &opts).unwrap().rate;
        let gcd = GcdProblem::from_cd(&p).optimize(None, &opts).unwrap().rate;
        worst = worst.max((cd - gcd).abs());
    }
    let uniform = JointSource::new(vec![0.125; 8], vec![2, 2, 2]).unwrap();
    let h = DistortionMeasure::hamming(2);
    let three = three_source_example(uniform, [h.clone(), h.clone(), h], [[0.0; 2]; 3], &opts).unwrap().rate;
    let want = 2.0 * 2f64.ln();
    let pass = worst <= 1e-3 && (three - want).abs() <= 2e-3;
    report(
        5,
        "GCD reduction",
        pass,
        &format!("10 pairs, max |GCD - CD| = {worst:.2e}; three sources {three:.6} vs 2 ln 2 = {want:.6} nats"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_oracle_agreement() {
    let opts = default_opts();
    let mut rng = rng(6);
    let mut pass = true;
    let mut lines = Vec::new();
    for i in 0..3 {
        let p = random_problem(&mut rng);
        for (us, q) in [(2usize, 32usize), (3, 8)] {
            let t = Instant::now();
            let bf = p.brute_force(us, q).unwrap();
            let el = t.elapsed();
            let opt = p.optimize(Some(us), &opts).unwrap().rate;
            let ok = opt <= bf + 1e-3 && el <= Duration::from_secs(600);
            pass &= ok;
            // The grid gap is reported only: the grid optimum sits above the
            // true optimum by an amount that depends on its resolution.
            lines.push(format!(
                "inst {i} |U|={us} q={q}: opt {opt:.6}, grid {bf:.6}, gap {:.2e} ({:.1}s)",
                bf - opt,
                el.as_secs_f64()
            ));
        }
    }
    report(6, "oracle agreement", pass, &lines.join("; "));
    assert!(pass, "{lines:?}");
}

#[test]
fn criterion_7_simulator_achievability() {
    let start = Instant::now();
    let p = CdProblem::hamming(JointSource::dsbs(0.1), 0.05, 0.05).unwrap();
    let sol = p.optimize(None, &default_opts()).unwrap();
    let cfg = SimConfig { block_lengths: vec![8, 12, 16], trials: 2000, gamma: 0.15, ..SimConfig::default() };
    let dms = (p.dist_x(), p.dist_y());
    let rep = simulate(p.source(), &sol.channel, (&sol.decoders.0, &sol.decoders.1), dms, &cfg).unwrap();
    let product = sol.channel.u_size() * 4;
    let bound = success_distortion_bound(0.05, &rep.typicality, 1.0, product);
    let mut pass = true;
    let mut lines = Vec::new();
    for w in rep.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let t = a.trials as f64;
        let sigma = (a.p_error * (1.0 - a.p_error) / t + b.p_error * (1.0 - b.p_error) / t).sqrt();
        pass &= b.p_error <= a.p_error + 2.0 * sigma;
    }
    for r in &rep.records {
        let dx = r.success_dist_x.unwrap_or(0.0);
        let dy = r.success_dist_y.unwrap_or(0.0);
        pass &= dx <= bound && dy <= bound;
        lines.push(format!("n={} P_e={:.4} D_succ=({dx:.4}, {dy:.4})", r.n, r.p_error));
    }
    let el = start.elapsed();
    pass &= el <= Duration::from_secs(900);
    lines.push(format!("bound {bound:.3}, {:.1}s", el.as_secs_f64()));
    report(7, "simulator achievability", pass, &lines.join("; "));
    assert!(pass, "{lines:?}");
}

fn random_channel(rng: &mut impl Rng, rows: usize, us: usize) -> AuxiliaryChannel {
    let w = (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..us).map(|_| rng.random_range(0.2..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    AuxiliaryChannel::new(us, w).unwrap()
}

/// Largest chain-rule residual `|I(XY;U) - I(Y;U) - I(X;U|Y)|` over random
/// channels, with `I(X;U|Y)` taken as `H(XY) + H(UY) - H(Y) - H(UXY)`.
fn chain_rule_residual(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let src = random_binary_pair(rng);
        let ch = random_channel(rng, 4, 3);
        let joint = JointSource::new(ch.joint_with(src.pmf()), vec![3, 2, 2]).unwrap();
        let whole = mutual_information(&joint, &[1, 2], &[0]).unwrap();
        let i_yu = mutual_information(&joint, &[2], &[0]).unwrap();
        let h = |c: &[usize]| plain_entropy(&joint.marginal(c).unwrap());
        let cond = h(&[1, 2]) + h(&[0, 2]) - h(&[2]) - h(&[0, 1, 2]);
        worst = worst.max((whole - i_yu - cond).abs());
    }
    worst
}

/// Relative error between the analytic gradient and central differences
/// along directions that move mass between two letters of one row.
fn gradient_rel_error(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p = random_problem(rng);
        let us = 4;
        let ch = random_channel(rng, 4, us);
        let (a, b) = optimal_decoders(p.source(), &ch, (p.dist_x(), p.dist_y())).unwrap();
        let sm = Smoothing { tau: 0.05, mu: vec![0.7, 0.4], rho: 10.0 };
        let g = p.smoothed_gradient(&ch, (&a, &b), &sm).unwrap();
        let f = |w: &[f64]| {
            let c = AuxiliaryChannel::new(us, w.chunks(us).map(<[f64]>::to_vec).collect()).unwrap();
            p.smoothed_objective(&c, (&a, &b), &sm).unwrap()
        };
        let base = ch.as_flat().to_vec();
        let h = 1e-5;
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for r in 0..4 {
            for u in 1..us {
                let (i, j) = (r * us + u, r * us);
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[i] += h;
                plus[j] -= h;
                minus[i] -= h;
                minus[j] += h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = g[i] - g[j];
                num += (fd - an).powi(2);
                den += an.powi(2);
            }
        }
        worst = worst.max(num.sqrt() / den.sqrt());
    }
    worst
}

#[test]
fn criterion_8_numerical_hygiene() {
    let mut rng = rng(8);
    let chain = chain_rule_residual(&mut rng);
    let grad = gradient_rel_error(&mut rng);

    let opts = OptimizerOptions { restarts: 8, ..default_opts() };
    let p = random_problem(&mut rng);
    let s1 = p.optimize(None, &opts).unwrap();
    let s2 = p.optimize(None, &opts).unwrap();
    let g = GcdProblem::from_cd(&p);
    let g1 = g.optimize(None, &opts).unwrap();
    let g2 = g.optimize(None, &opts).unwrap();
    let cfg = SimConfig { block_lengths: vec![8, 10], trials: 300, seed: 17, ..SimConfig::default() };
    let run = || simulate(p.source(), &s1.channel, (&s1.decoders.0, &s1.decoders.1), (p.dist_x(), p.dist_y()), &cfg);
    let identical = s1 == s2 && s1.rate.to_bits() == s2.rate.to_bits() && g1 == g2 && run().unwrap() == run().unwrap();

    let pass = chain <= 1e-9 && grad <= 1e-5 && identical;
    report(
        8,
        "numerical hygiene",
        pass,
        &format!("chain-rule residual {chain:.1e}, gradient rel-err {grad:.1e}, reruns identical: {identical}"),
    );
    assert!(pass);
}
