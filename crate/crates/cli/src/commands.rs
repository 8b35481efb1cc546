use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;

use cfverify::ensemble::{sweep as run_sweep, write_sweep_csv};
use cfverify::model_io::{load_problem, LoadedProblem};
use cfverify::oracle;
use cfverify::par::{is_parallel, with_threads};
use cfverify::propagation::write_trace_csv;
use cfverify::verification::{output_scalar_cf, quantile as solve_quantile, PolytopeResult};
use cfverify::{
    propagate_network, verify_halfspace, verify_polytope, Direction, Error, Numerics, Verdict,
    VerificationResult,
};

use crate::{Common, PropagateArgs, QuantileArgs, SweepArgs};

pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub code: u8,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = if error.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG };
        Self { error, code }
    }
}

fn io_failure(path: &str, source: io::Error) -> Failure {
    Error::Io {
        path: path.into(),
        source,
    }
    .into()
}

type Outcome = Result<ExitCode, Failure>;

/// Effective settings after overrides, echoed in every JSON result.
#[derive(Debug, Serialize)]
struct ParamsEcho {
    config: String,
    numerics: Numerics,
    risk: f64,
    seed: u64,
    samples: usize,
    threads: usize,
    parallel: bool,
}

fn load(c: &Common) -> Result<(LoadedProblem, ParamsEcho), Failure> {
    let mut loaded = load_problem(&c.config)?;
    let n = &mut loaded.problem.numerics;
    if let Some(v) = c.ht_step {
        n.ht_step = v;
    }
    if let Some(v) = c.ht_terms {
        n.ht_terms = v;
    }
    if let Some(v) = c.grid_points {
        n.n_grid = v;
    }
    if let Some(v) = c.cutoff {
        n.t_max = v;
    }
    if let Some(v) = c.risk {
        loaded.problem.risk = v;
    }
    if let Some(v) = c.seed {
        loaded.seed = v;
    }
    if let Some(v) = c.samples {
        if v == 0 {
            return Err(Error::Range {
                field: "samples",
                value: 0.0,
                expected: ">= 1",
            }
            .into());
        }
        loaded.mc_samples = v;
    }
    // overrides can break what the loader checked
    loaded.problem.validate().map_err(|error| Failure {
        error,
        code: EXIT_CONFIG,
    })?;
    let echo = ParamsEcho {
        config: c.config.display().to_string(),
        numerics: loaded.problem.numerics,
        risk: loaded.problem.risk,
        seed: loaded.seed,
        samples: loaded.mc_samples,
        threads: c.threads,
        parallel: is_parallel(),
    };
    Ok((loaded, echo))
}

fn emit_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_failure("<stdout>", e.into()))?;
    writeln!(out).map_err(|e| io_failure("<stdout>", e))
}

fn with_echo<T: Serialize>(result: &T, echo: &ParamsEcho) -> serde_json::Value {
    let mut v = serde_json::to_value(result).expect("plain data serializes");
    v["params_echo"] = serde_json::to_value(echo).expect("plain data serializes");
    v
}

fn verdict_code(v: Verdict) -> ExitCode {
    match v {
        Verdict::Pass => ExitCode::SUCCESS,
        Verdict::Fail => ExitCode::from(1),
    }
}

fn summarize_halfspace(r: &VerificationResult, risk: f64) {
    eprintln!(
        "p_hat = {:.4} vs 1 - p = {:.4}: {}",
        r.p_hat,
        1.0 - risk,
        if r.verdict == Verdict::Pass { "PASS" } else { "FAIL" }
    );
}

pub fn verify(c: &Common) -> Outcome {
    let (loaded, echo) = load(c)?;
    let problem = &loaded.problem;
    with_threads(c.threads, || {
        if problem.constraints.len() == 1 {
            let r = verify_halfspace(problem)?;
            summarize_halfspace(&r, problem.risk);
            emit_json(&with_echo(&r, &echo))?;
            Ok(verdict_code(r.verdict))
        } else {
            let r: PolytopeResult = verify_polytope(problem)?;
            eprintln!(
                "union bound {:.4} over {} constraints vs 1 - p = {:.4}: {}",
                r.lower_bound,
                r.constraints.len(),
                1.0 - problem.risk,
                if r.verdict == Verdict::Pass { "PASS" } else { "FAIL" }
            );
            emit_json(&with_echo(&r, &echo))?;
            Ok(verdict_code(r.verdict))
        }
    })
}

pub fn propagate(a: &PropagateArgs) -> Outcome {
    let (loaded, echo) = load(&a.common)?;
    if a.x_points < 2 || a.x_max.partial_cmp(&a.x_min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter("x-range needs x-max > x-min and at least 2 points".into()).into());
    }
    let problem = &loaded.problem;
    let numerics = problem.numerics;
    let grid = numerics.grid()?;
    let params = numerics.hilbert()?;
    let xs: Vec<f64> = (0..a.x_points)
        .map(|i| a.x_min + (a.x_max - a.x_min) * i as f64 / (a.x_points - 1) as f64)
        .collect();
    let rows = with_threads(a.common.threads, || -> Result<_, Failure> {
        let run = propagate_network(&problem.network, &problem.input_marginals()?, grid, params, true)?;
        let trace = run.trace.expect("trace requested");
        Ok(trace.cdf_rows(&xs, a.components.as_deref(), params))
    })?;
    match &a.trace {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_failure(&path.display().to_string(), e))?;
            write_trace_csv(&rows, BufWriter::new(file))?;
            emit_json(&json!({
                "trace": path.display().to_string(),
                "rows": rows.len(),
                "params_echo": echo,
            }))?;
        }
        None => write_trace_csv(&rows, io::stdout().lock())?,
    }
    eprintln!("{} CDF rows over {} layers", rows.len(), problem.network.layers().len());
    Ok(ExitCode::SUCCESS)
}

pub fn quantile(a: &QuantileArgs) -> Outcome {
    let (loaded, echo) = load(&a.common)?;
    let problem = &loaded.problem;
    let constraint = &problem.constraints[0];
    let p = a.p.unwrap_or(problem.risk);
    let direction = a.direction.unwrap_or(constraint.direction);
    let r = with_threads(a.common.threads, || -> Result<f64, Failure> {
        let outputs = problem.propagate()?;
        let phi = output_scalar_cf(&outputs, &constraint.c, problem.numerics.grid()?)?;
        Ok(solve_quantile(&phi, p, direction, problem.numerics.hilbert()?)?)
    })?;
    let meaning = match direction {
        Direction::Ge => "P(c^T y > r) = 1 - p",
        Direction::Le => "P(c^T y <= r) = 1 - p",
    };
    eprintln!("r = {r:.4} ({meaning}, p = {p})");
    emit_json(&json!({
        "r": r,
        "p": p,
        "direction": direction,
        "c": constraint.c,
        "params_echo": echo,
    }))?;
    Ok(ExitCode::SUCCESS)
}

pub fn compare(c: &Common) -> Outcome {
    let (loaded, echo) = load(c)?;
    let report = with_threads(c.threads, || -> Result<_, Failure> {
        let cf = verify_halfspace(&loaded.problem)?;
        Ok(oracle::compare(&loaded.problem, &cf, loaded.mc_samples, loaded.seed)?)
    })?;
    eprintln!(
        "CF {:.4} vs Monte-Carlo {:.4} ({} samples): dD = {:+.4}",
        report.p_hat_cf, report.p_hat_mc, report.n_samples, report.delta_delta
    );
    emit_json(&with_echo(&report, &echo))?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(a: &SweepArgs) -> Outcome {
    let (loaded, _) = load(&a.common)?;
    let rows = with_threads(a.common.threads, || {
        run_sweep(&loaded.problem, &a.points, a.trials, loaded.seed, loaded.mc_samples)
    })?;
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_failure(&path.display().to_string(), e))?;
            write_sweep_csv(&rows, BufWriter::new(file))?;
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    for r in &rows {
        eprintln!(
            "h={} N={} M={}: mean |dD| = {:.4}, mean CF time {:.3}s",
            r.h, r.n_grid, r.terms, r.mean_abs_delta_delta, r.mean_time_seconds
        );
    }
    Ok(ExitCode::SUCCESS)
}
