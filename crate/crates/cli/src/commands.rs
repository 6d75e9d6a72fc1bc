use std::io::Write;
use std::path::{Path, PathBuf};

use comdel::{
    lossless_cd_rate, sandwich_check, simulate, success_distortion_bound, CdProblem, CdSolution, OptimizerOptions,
    SimConfig, TypicalityParams,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::problem::{ProblemFile, SolutionFile};
use crate::{selfcheck, Cli, CliError, Command, Format, GlobalOpts};

/// Rates are nonincreasing in each budget; larger jumps are flagged.
const MONOTONE_TOL: f64 = 1e-3;

fn bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Rate { problem } => cmd_rate(g, &load(g, problem)?),
        Command::Curve { problem, dx, dy } => cmd_curve(g, &load(g, problem)?, dx, dy.as_deref()),
        Command::Baselines { problem } => cmd_baselines(g, &load(g, problem)?),
        Command::Simulate { problem, solution, block_lengths, trials, gamma, out } => {
            let overrides = SimOverrides { block_lengths: block_lengths.clone(), trials: *trials, gamma: *gamma };
            cmd_simulate(g, &load(g, problem)?, solution.as_deref(), &overrides, out.as_deref())
        }
        Command::Gcd { problem } => cmd_gcd(g, &load(g, problem)?),
        Command::Selfcheck => selfcheck::run(),
    }
}

fn load(g: &GlobalOpts, path: &Path) -> Result<ProblemFile, CliError> {
    let file = ProblemFile::load(path)?;
    if let Some(dest) = &g.dump_problem {
        let text = file.to_json();
        if dest.as_os_str() == "-" {
            writeln!(std::io::stdout().lock(), "{text}")?;
        } else {
            std::fs::write(dest, text + "\n")?;
        }
    }
    Ok(file)
}

fn options(g: &GlobalOpts, file: &ProblemFile) -> Result<OptimizerOptions, CliError> {
    let mut opts = file.optimizer();
    if let Some(s) = g.seed {
        opts.seed = s;
    }
    if let Some(r) = g.restarts {
        opts.restarts = r;
    }
    opts.validate()?;
    Ok(opts)
}

fn u_size(g: &GlobalOpts, file: &ProblemFile) -> Option<usize> {
    g.u_size.or(file.u_size)
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn solve(g: &GlobalOpts, file: &ProblemFile, problem: &CdProblem) -> Result<(CdSolution, OptimizerOptions), CliError> {
    let opts = options(g, file)?;
    let sol = problem.optimize(u_size(g, file), &opts)?;
    if let Some(path) = &g.dump_solution {
        let text = serde_json::to_string_pretty(&SolutionFile::from_solution(&sol, opts.seed))
            .map_err(|e| CliError::Output(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    Ok((sol, opts))
}

#[derive(Serialize)]
struct RateRow {
    rate_nats: f64,
    rate_bits: f64,
    budget_x: f64,
    budget_y: f64,
    dist_x: f64,
    dist_y: f64,
    feasible: bool,
    u_size: usize,
    seed: u64,
}

fn cmd_rate(g: &GlobalOpts, file: &ProblemFile) -> Result<(), CliError> {
    let problem = file.cd_problem()?;
    let (sol, opts) = solve(g, file, &problem)?;
    let (bx, by) = problem.budgets();
    if g.format == Some(Format::Csv) {
        let row = RateRow {
            rate_nats: sol.rate,
            rate_bits: bits(sol.rate),
            budget_x: bx,
            budget_y: by,
            dist_x: sol.achieved_distortions.0,
            dist_y: sol.achieved_distortions.1,
            feasible: sol.feasible,
            u_size: sol.channel.u_size(),
            seed: opts.seed,
        };
        return write_csv(std::io::stdout().lock(), &[row]);
    }
    let feasible_starts = sol.start_rates.iter().filter(|r| r.is_some()).count();
    print_json(&json!({
        "command": "rate",
        "units": "nats",
        "seed": opts.seed,
        "rate_nats": sol.rate,
        "rate_bits": bits(sol.rate),
        "information_nats": [sol.information.0, sol.information.1],
        "budgets": [bx, by],
        "achieved_distortions": [sol.achieved_distortions.0, sol.achieved_distortions.1],
        "feasible": sol.feasible,
        "u_size": sol.channel.u_size(),
        "restarts": opts.restarts,
        "restarts_used": sol.restarts_used,
        "feasible_starts": feasible_starts,
        "lifted_rate_nats": sol.lifted_rate,
    }))
}

#[derive(Debug, Serialize)]
struct CurveRow {
    index: usize,
    d_x: f64,
    d_y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_nats: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_bits: Option<f64>,
    status: String,
}

/// Pairs `(i, j)` with budgets of `j` at least those of `i` in both
/// coordinates but a rate larger by more than the tolerance.
fn monotonicity_violations(points: &[(f64, f64, Option<f64>)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, &(xi, yi, ri)) in points.iter().enumerate() {
        for (j, &(xj, yj, rj)) in points.iter().enumerate() {
            if let (Some(ri), Some(rj)) = (ri, rj) {
                if i != j && xi <= xj && yi <= yj && rj > ri + MONOTONE_TOL {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

fn cmd_curve(g: &GlobalOpts, file: &ProblemFile, dx: &[f64], dy: Option<&[f64]>) -> Result<(), CliError> {
    let base = file.cd_problem()?;
    let opts = options(g, file)?;
    let grid: Vec<(f64, f64)> = match dy {
        None => dx.iter().map(|&d| (d, d)).collect(),
        Some(dy) => dx.iter().flat_map(|&a| dy.iter().map(move |&b| (a, b))).collect(),
    };
    if grid.is_empty() {
        return Err(CliError::Input("empty budget grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut statuses = Vec::with_capacity(grid.len());
    for &(a, b) in &grid {
        let res = base.with_budgets(a, b).and_then(|p| p.optimize(u_size(g, file), &opts));
        match res {
            Ok(sol) => {
                points.push((a, b, Some(sol.rate)));
                statuses.push("ok".to_string());
            }
            Err(e) => {
                points.push((a, b, None));
                statuses.push(CliError::from(e).to_string());
            }
        }
    }
    let violations = monotonicity_violations(&points);
    let rows: Vec<CurveRow> = points
        .iter()
        .zip(statuses)
        .enumerate()
        .map(|(index, (&(d_x, d_y, r), status))| CurveRow {
            index,
            d_x,
            d_y,
            rate_nats: r.filter(|_| !g.bits),
            rate_bits: r.filter(|_| g.bits).map(bits),
            status,
        })
        .collect();
    if g.format == Some(Format::Json) {
        return print_json(&json!({
            "command": "curve",
            "units": if g.bits { "bits" } else { "nats" },
            "seed": opts.seed,
            "points": rows,
            "monotone": violations.is_empty(),
            "monotonicity_violations": violations,
            "monotonicity_tolerance_nats": MONOTONE_TOL,
        }));
    }
    let mut out = std::io::stdout().lock();
    let unit = if g.bits { "rate_bits" } else { "rate_nats" };
    writeln!(out, "index,d_x,d_y,{unit},status")?;
    for r in &rows {
        let rate = r.rate_nats.or(r.rate_bits).map(|v| v.to_string()).unwrap_or_default();
        let status = r.status.replace(['"', ','], ";");
        writeln!(out, "{},{},{},{},{}", r.index, r.d_x, r.d_y, rate, status)?;
    }
    writeln!(
        out,
        "# monotonicity: {} ({} violations, tolerance {MONOTONE_TOL} nats, seed {})",
        if violations.is_empty() { "ok" } else { "VIOLATED" },
        violations.len(),
        opts.seed
    )?;
    Ok(())
}

fn cmd_baselines(g: &GlobalOpts, file: &ProblemFile) -> Result<(), CliError> {
    let problem = file.cd_problem()?;
    let opts = options(g, file)?;
    let lossless = lossless_cd_rate(problem.source())?;
    let rep = sandwich_check(&problem, &opts)?;
    if g.format == Some(Format::Csv) {
        #[derive(Serialize)]
        struct Row {
            quantity: &'static str,
            nats: f64,
            bits: f64,
        }
        let rows: Vec<Row> = [
            ("lossless_cd_rate", lossless),
            ("rate", rep.rate),
            ("conditional_rd_x", rep.conditional.0),
            ("conditional_rd_y", rep.conditional.1),
            ("wyner_ziv_x", rep.wyner_ziv.0),
            ("wyner_ziv_y", rep.wyner_ziv.1),
            ("lower_slack", rep.lower_slack),
            ("upper_slack", rep.upper_slack),
        ]
        .into_iter()
        .map(|(quantity, nats)| Row { quantity, nats, bits: bits(nats) })
        .collect();
        return write_csv(std::io::stdout().lock(), &rows);
    }
    let (bx, by) = problem.budgets();
    print_json(&json!({
        "command": "baselines",
        "units": "nats",
        "seed": opts.seed,
        "budgets": [bx, by],
        "lossless_cd_rate_nats": lossless,
        "rate_nats": rep.rate,
        "conditional_rd_nats": [rep.conditional.0, rep.conditional.1],
        "wyner_ziv_nats": [rep.wyner_ziv.0, rep.wyner_ziv.1],
        "lower_bound_nats": rep.lower,
        "upper_bound_nats": rep.upper,
        "lower_slack_nats": rep.lower_slack,
        "upper_slack_nats": rep.upper_slack,
        "sandwich_violated": rep.violated,
        "rate_bits": bits(rep.rate),
    }))
}

pub struct SimOverrides {
    block_lengths: Option<Vec<usize>>,
    trials: Option<usize>,
    gamma: Option<f64>,
}

fn cmd_simulate(
    g: &GlobalOpts,
    file: &ProblemFile,
    solution: Option<&Path>,
    ov: &SimOverrides,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let problem = file.cd_problem()?;
    let src = problem.source();
    let (nx, ny) = (src.sizes()[0], src.sizes()[1]);
    let sol = match solution {
        Some(path) => SolutionFile::load(path)?,
        None => SolutionFile::from_solution(&solve(g, file, &problem)?.0, options(g, file)?.seed),
    };
    let (ch, a, b) = sol.parts(nx, ny)?;
    let mut cfg = file.simulation.clone().unwrap_or_default();
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(v) = &ov.block_lengths {
        cfg.block_lengths = v.clone();
    }
    if let Some(t) = ov.trials {
        cfg.trials = t;
    }
    if let Some(v) = ov.gamma {
        cfg.gamma = v;
    }
    let report = simulate(src, &ch, (&a, &b), (problem.dist_x(), problem.dist_y()), &cfg)?;
    let (bx, by) = problem.budgets();
    let product = ch.u_size() * nx * ny;
    let bounds = [
        success_distortion_bound(bx, &report.typicality, problem.dist_x().dmax(), product),
        success_distortion_bound(by, &report.typicality, problem.dist_y().dmax(), product),
    ];
    let doc = json!({
        "command": "simulate",
        "units": "nats",
        "seed": cfg.seed,
        "single_letter_rate_nats": sol.rate_nats,
        "budgets": [bx, by],
        "success_distortion_bounds": bounds,
        "config": sim_config_json(&cfg, &report.typicality),
        "report": report,
    });
    let rows = report.csv_rows();
    match out {
        Some(prefix) => {
            let json_path = with_suffix(prefix, "json");
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Output(e.to_string()))?;
            std::fs::write(&json_path, text + "\n")?;
            write_csv(std::fs::File::create(with_suffix(prefix, "csv"))?, &rows)
        }
        None if g.format == Some(Format::Csv) => write_csv(std::io::stdout().lock(), &rows),
        None => print_json(&doc),
    }
}

fn sim_config_json(cfg: &SimConfig, params: &TypicalityParams) -> Value {
    json!({
        "block_lengths": cfg.block_lengths,
        "trials": cfg.trials,
        "gamma": cfg.gamma,
        "m1": cfg.m1,
        "l1": cfg.l1,
        "l2": cfg.l2,
        "typicality": params,
    })
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_gcd(g: &GlobalOpts, file: &ProblemFile) -> Result<(), CliError> {
    let problem = file.gcd_problem()?;
    let opts = options(g, file)?;
    let us = u_size(g, file);
    let sol = problem.optimize(us, &opts)?;
    let cd = match problem.to_cd() {
        Some(cd) if problem.is_canonical_pair() => Some(cd.optimize(us, &opts)?.rate),
        _ => None,
    };
    if g.format == Some(Format::Csv) {
        #[derive(Serialize)]
        struct Row {
            rate_nats: f64,
            rate_bits: f64,
            feasible: bool,
            cd_rate_nats: Option<f64>,
            delta_nats: Option<f64>,
            seed: u64,
        }
        let row = Row {
            rate_nats: sol.rate,
            rate_bits: bits(sol.rate),
            feasible: sol.feasible,
            cd_rate_nats: cd,
            delta_nats: cd.map(|r| sol.rate - r),
            seed: opts.seed,
        };
        return write_csv(std::io::stdout().lock(), &[row]);
    }
    print_json(&json!({
        "command": "gcd",
        "units": "nats",
        "seed": opts.seed,
        "rate_nats": sol.rate,
        "rate_bits": bits(sol.rate),
        "information_nats": sol.information,
        "achieved_distortions": sol.achieved_distortions,
        "feasible": sol.feasible,
        "u_size": sol.channel.u_size(),
        "restarts_used": sol.restarts_used,
        "cd_rate_nats": cd,
        "cd_delta_nats": cd.map(|r| sol.rate - r),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonicity_flags_increase() {
        let pts = [(0.0, 0.0, Some(0.3)), (0.1, 0.1, Some(0.2)), (0.2, 0.2, Some(0.25))];
        assert_eq!(monotonicity_violations(&pts), vec![(1, 2)]);
        let ok = [(0.0, 0.0, Some(0.3)), (0.1, 0.0, None), (0.1, 0.1, Some(0.3))];
        assert!(monotonicity_violations(&ok).is_empty());
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("/tmp/run.a"), "csv"), PathBuf::from("/tmp/run.a.csv"));
    }
}
