//! Quick invariant suite over small built-in instances.

use comdel::{
    conditional_entropy, conditional_mutual_information, conditional_rd, mutual_information, optimal_decoders,
    sandwich_check, simulate, AuxiliaryChannel, CdProblem, DistortionMeasure, GcdProblem, JointSource,
    OptimizerOptions, SimConfig,
};

use crate::CliError;

type Check = fn() -> Result<(bool, String), comdel::Error>;

fn h2(p: f64) -> f64 {
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

fn opts() -> OptimizerOptions {
    OptimizerOptions { restarts: 8, ..OptimizerOptions::default() }
}

fn lossless_corner() -> Result<(bool, String), comdel::Error> {
    let src = JointSource::dsbs(0.1);
    let want = conditional_entropy(&src, &[0], &[1])?;
    let got = CdProblem::hamming(src, 0.0, 0.0)?.optimize(None, &opts())?.rate;
    Ok(((got - want).abs() <= 1e-3, format!("rate {got:.6} vs H(X|Y) {want:.6} nats")))
}

fn slack_budgets() -> Result<(bool, String), comdel::Error> {
    let got = CdProblem::hamming(JointSource::dsbs(0.2), 1.0, 1.0)?.optimize(None, &opts())?.rate;
    Ok((got.abs() <= 1e-9, format!("rate {got:.3e} nats at budgets (1, 1)")))
}

fn chain_rule() -> Result<(bool, String), comdel::Error> {
    let ch = AuxiliaryChannel::new(
        3,
        vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4], vec![0.05, 0.15, 0.8]],
    )?;
    let src = JointSource::new(vec![0.4, 0.1, 0.2, 0.3], vec![2, 2])?;
    let joint = JointSource::new(ch.joint_with(src.pmf()), vec![3, 2, 2])?;
    let whole = mutual_information(&joint, &[1, 2], &[0])?;
    let split = mutual_information(&joint, &[2], &[0])? + conditional_mutual_information(&joint, &[1], &[0], &[2])?;
    let err = (whole - split).abs();
    Ok((err <= 1e-9, format!("|I(XY;U) - I(Y;U) - I(X;U|Y)| = {err:.2e}")))
}

fn conditional_closed_form() -> Result<(bool, String), comdel::Error> {
    let src = JointSource::dsbs(0.1);
    let got = conditional_rd(&src, &DistortionMeasure::hamming(2), 0.05, 0)?;
    let want = h2(0.1) - h2(0.05);
    Ok(((got - want).abs() <= 1e-6, format!("R_C {got:.7} vs h(0.1) - h(0.05) {want:.7} nats")))
}

fn gcd_reduction() -> Result<(bool, String), comdel::Error> {
    let cd = CdProblem::hamming(JointSource::dsbs(0.1), 0.05, 0.05)?;
    let a = cd.optimize(None, &opts())?.rate;
    let b = GcdProblem::from_cd(&cd).optimize(None, &opts())?.rate;
    Ok(((a - b).abs() <= 1e-3, format!("GCD {b:.6} vs CD {a:.6} nats")))
}

fn sandwich() -> Result<(bool, String), comdel::Error> {
    let rep = sandwich_check(&CdProblem::hamming(JointSource::dsbs(0.1), 0.05, 0.05)?, &opts())?;
    Ok((!rep.violated, format!("{:.6} <= {:.6} <= {:.6} nats", rep.lower, rep.rate, rep.upper)))
}

fn simulator_determinism() -> Result<(bool, String), comdel::Error> {
    let src = JointSource::dsbs(0.1);
    let d = DistortionMeasure::hamming(2);
    let ch = AuxiliaryChannel::new(2, vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.1, 0.9]])?;
    let (a, b) = optimal_decoders(&src, &ch, (&d, &d))?;
    let cfg = SimConfig { block_lengths: vec![8], trials: 200, seed: 5, ..SimConfig::default() };
    let r1 = simulate(&src, &ch, (&a, &b), (&d, &d), &cfg)?;
    let r2 = simulate(&src, &ch, (&a, &b), (&d, &d), &cfg)?;
    Ok((r1 == r2, "two runs with seed 5".to_string()))
}

pub fn run() -> Result<(), CliError> {
    let checks: [(&str, Check); 7] = [
        ("lossless_corner", lossless_corner),
        ("slack_budgets_give_zero_rate", slack_budgets),
        ("chain_rule", chain_rule),
        ("conditional_rd_closed_form", conditional_closed_form),
        ("gcd_two_source_reduction", gcd_reduction),
        ("sandwich_bounds", sandwich),
        ("simulator_determinism", simulator_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok((true, detail)) => println!("PASS {name}: {detail}"),
            Ok((false, detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::SelfCheck(failed));
    }
    Ok(())
}
