//! Seeded random-network ensembles: accuracy and runtime of the CF pipeline
//! against Monte-Carlo over a grid of `(h, N, M)` settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_io::random_network;
use crate::oracle::{compare, ComparisonReport};
use crate::verification::{verify_halfspace, Numerics, VerificationProblem};

/// One numerics setting: HT step `h`, grid size `N`, HT terms `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub h: f64,
    pub n_grid: usize,
    pub terms: usize,
}

impl SweepPoint {
    pub fn new(h: f64, n_grid: usize, terms: usize) -> Self {
        Self { h, n_grid, terms }
    }

    pub fn numerics(&self, t_max: f64) -> Numerics {
        Numerics {
            t_max,
            n_grid: self.n_grid,
            ht_step: self.h,
            ht_terms: self.terms,
        }
    }
}

impl std::str::FromStr for SweepPoint {
    type Err = Error;

    /// `h,N,M`, e.g. `0.5,10001,5000`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::invalid(format!("expected `h,N,M`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let h = parts[0].parse().map_err(|_| bad())?;
        let n = parts[1].parse::<f64>().map_err(|_| bad())?;
        let m = parts[2].parse::<f64>().map_err(|_| bad())?;
        if n < 0.0 || m < 0.0 || n.fract() != 0.0 || m.fract() != 0.0 {
            return Err(bad());
        }
        Ok(Self::new(h, n as usize, m as usize))
    }
}

impl std::fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.h, self.n_grid, self.terms)
    }
}

/// CSV row: `h,N,M,mean_abs_delta_delta,mean_time_seconds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub h: f64,
    #[serde(rename = "N")]
    pub n_grid: usize,
    #[serde(rename = "M")]
    pub terms: usize,
    pub mean_abs_delta_delta: f64,
    pub mean_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub network_seed: u64,
    pub report: ComparisonReport,
}

/// Trial `k` uses network seed `seed + k` and the same value as its
/// Monte-Carlo seed. The template supplies inputs, constraint, risk, `t_max`
/// and the layer widths.
pub fn run_trials(
    template: &VerificationProblem,
    point: SweepPoint,
    trials: usize,
    seed: u64,
    mc_samples: usize,
) -> Result<Vec<TrialOutcome>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let widths = template.network.widths();
    let numerics = point.numerics(template.numerics.t_max);
    (0..trials as u64)
        .map(|k| {
            let network_seed = seed.wrapping_add(k);
            let problem = VerificationProblem {
                network: random_network(&widths, network_seed)?,
                numerics,
                ..template.clone()
            };
            let cf = verify_halfspace(&problem)?;
            let report = compare(&problem, &cf, mc_samples, network_seed)?;
            Ok(TrialOutcome { network_seed, report })
        })
        .collect()
}

pub fn summarize(point: SweepPoint, outcomes: &[TrialOutcome]) -> SweepRow {
    let n = outcomes.len() as f64;
    SweepRow {
        h: point.h,
        n_grid: point.n_grid,
        terms: point.terms,
        mean_abs_delta_delta: outcomes.iter().map(|o| o.report.delta_delta.abs()).sum::<f64>() / n,
        mean_time_seconds: outcomes.iter().map(|o| o.report.cf_seconds).sum::<f64>() / n,
    }
}

/// One row per point, in order.
pub fn sweep(
    template: &VerificationProblem,
    points: &[SweepPoint],
    trials: usize,
    seed: u64,
    mc_samples: usize,
) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|&p| Ok(summarize(p, &run_trials(template, p, trials, seed, mc_samples)?)))
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
