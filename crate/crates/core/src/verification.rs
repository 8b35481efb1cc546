//! Half-space chance-constraint verification, quantiles and the
//! scenario-optimization baseline.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cf::{sample_on_grid, AnalyticCf, CharFn, FrequencyGrid, MarginalSet, SampledCf};
use crate::error::{Error, Result};
use crate::hilbert::{gil_pelaez_cdf, HilbertParams};
use crate::oracle;
use crate::propagation::{propagate_network, Network};

/// Which side of `c^T y = d` is safe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `c^T y <= d`
    Le,
    /// `c^T y >= d`
    Ge,
}

/// Safety set `{y : c^T y <= d}` or `{y : c^T y >= d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub c: Vec<f64>,
    pub d: f64,
    pub direction: Direction,
}

impl HalfSpace {
    pub fn new(c: Vec<f64>, d: f64, direction: Direction) -> Result<Self> {
        let hs = Self { c, d, direction };
        hs.validate()?;
        Ok(hs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateConstraint);
        }
        if !self.c.iter().all(|v| v.is_finite()) || !self.d.is_finite() {
            return Err(Error::invalid("half-space coefficients must be finite"));
        }
        Ok(())
    }

    pub fn project(&self, y: &[f64]) -> f64 {
        self.c.iter().zip(y).map(|(c, y)| c * y).sum()
    }

    /// Whether a scalar `c^T y` lies in the set. Ties count as inside.
    pub fn contains(&self, projected: f64) -> bool {
        match self.direction {
            Direction::Le => projected <= self.d,
            Direction::Ge => projected >= self.d,
        }
    }

    /// Probability of the set given `Phi(d)`.
    pub fn probability_from_cdf(&self, cdf_at_d: f64) -> f64 {
        match self.direction {
            Direction::Le => cdf_at_d,
            Direction::Ge => 1.0 - cdf_at_d,
        }
    }
}

/// Grid and sinc-expansion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "defaults::t_max")]
    pub t_max: f64,
    #[serde(default = "defaults::n_grid")]
    pub n_grid: usize,
    #[serde(default = "defaults::ht_step")]
    pub ht_step: f64,
    #[serde(default = "defaults::ht_terms")]
    pub ht_terms: usize,
}

pub(crate) mod defaults {
    pub fn t_max() -> f64 {
        50.0
    }
    pub fn n_grid() -> usize {
        10_001
    }
    pub fn ht_step() -> f64 {
        0.05
    }
    pub fn ht_terms() -> usize {
        5000
    }
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            t_max: defaults::t_max(),
            n_grid: defaults::n_grid(),
            ht_step: defaults::ht_step(),
            ht_terms: defaults::ht_terms(),
        }
    }
}

impl Numerics {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.t_max, self.n_grid)
    }

    pub fn hilbert(&self) -> Result<HilbertParams> {
        HilbertParams::new(self.ht_step, self.ht_terms)
    }
}

/// Network, input laws, safety constraints, risk level and numerics.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationProblem {
    pub network: Network,
    pub inputs: Vec<AnalyticCf>,
    pub constraints: Vec<HalfSpace>,
    /// Allowed probability of leaving the safe set, in `(0, 1]`.
    pub risk: f64,
    pub numerics: Numerics,
}

impl VerificationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.risk > 0.0 && self.risk <= 1.0) {
            return Err(Error::Range {
                field: "risk",
                value: self.risk,
                expected: "0 < p <= 1",
            });
        }
        if self.inputs.len() != self.network.input_width() {
            return Err(Error::DimensionMismatch {
                context: "number of input distributions",
                expected: self.network.input_width(),
                found: self.inputs.len(),
            });
        }
        for cf in &self.inputs {
            cf.validate()?;
        }
        if self.constraints.is_empty() {
            return Err(Error::Schema("at least one safety constraint is required".into()));
        }
        for hs in &self.constraints {
            if hs.c.len() != self.network.output_width() {
                return Err(Error::DimensionMismatch {
                    context: "constraint vector length",
                    expected: self.network.output_width(),
                    found: hs.c.len(),
                });
            }
            hs.validate()?;
        }
        self.numerics.grid()?;
        self.numerics.hilbert()?;
        Ok(())
    }

    /// Input marginals sampled on the problem grid.
    pub fn input_marginals(&self) -> Result<MarginalSet> {
        let grid = self.numerics.grid()?;
        Ok(MarginalSet::from(
            self.inputs.iter().map(|cf| sample_on_grid(cf, grid)).collect::<Vec<_>>(),
        ))
    }

    /// Output-layer marginals.
    pub fn propagate(&self) -> Result<Vec<SampledCf>> {
        self.validate()?;
        let run = propagate_network(
            &self.network,
            &self.input_marginals()?,
            self.numerics.grid()?,
            self.numerics.hilbert()?,
            false,
        )?;
        Ok(run.outputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_probability(p_hat: f64, risk: f64) -> Self {
        if p_hat >= 1.0 - risk {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationResult {
    pub p_hat: f64,
    pub verdict: Verdict,
    /// `p_hat - (1 - p)`
    pub delta: f64,
    /// Real part of the unclamped Gil-Pelaez value at `d`.
    pub raw_cdf_value: f64,
    pub timing_seconds: f64,
}

impl VerificationResult {
    fn new(p_hat: f64, risk: f64, raw_cdf_value: f64, timing_seconds: f64) -> Self {
        Self {
            p_hat,
            verdict: Verdict::from_probability(p_hat, risk),
            delta: p_hat - (1.0 - risk),
            raw_cdf_value,
            timing_seconds,
        }
    }
}

/// CF of `c^T x` for independent output marginals:
/// `phi_y(t) = prod_j phi_j(c_j t)`, zero coefficients skipped.
pub fn output_scalar_cf(outputs: &[SampledCf], c: &[f64], grid: FrequencyGrid) -> Result<SampledCf> {
    if c.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            context: "constraint vector length",
            expected: outputs.len(),
            found: c.len(),
        });
    }
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateConstraint);
    }
    Ok(SampledCf::from_fn_mirrored(grid, |t| {
        c.iter()
            .zip(outputs)
            .filter(|(&cj, _)| cj != 0.0)
            .fold(Complex64::new(1.0, 0.0), |acc, (&cj, phi)| acc * phi.eval(cj * t))
    }))
}

/// Checks one half-space against already propagated outputs.
pub fn check_halfspace(
    outputs: &[SampledCf],
    constraint: &HalfSpace,
    risk: f64,
    numerics: &Numerics,
) -> Result<VerificationResult> {
    let start = Instant::now();
    let phi_y = output_scalar_cf(outputs, &constraint.c, numerics.grid()?)?;
    let cdf = gil_pelaez_cdf(&phi_y, constraint.d, numerics.hilbert()?);
    let p_hat = constraint.probability_from_cdf(cdf.probability);
    Ok(VerificationResult::new(
        p_hat,
        risk,
        cdf.raw.re,
        start.elapsed().as_secs_f64(),
    ))
}

/// Verifies the first constraint of `problem`.
pub fn verify_halfspace(problem: &VerificationProblem) -> Result<VerificationResult> {
    let start = Instant::now();
    let outputs = problem.propagate()?;
    let mut result = check_halfspace(&outputs, &problem.constraints[0], problem.risk, &problem.numerics)?;
    result.timing_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopeResult {
    pub constraints: Vec<VerificationResult>,
    /// `max(0, 1 - sum_i (1 - p_hat_i))`
    pub lower_bound: f64,
    pub verdict: Verdict,
    pub timing_seconds: f64,
}

/// Union-bound lower estimate of the probability of all constraints holding.
pub fn union_bound(p_hats: &[f64]) -> f64 {
    (1.0 - p_hats.iter().map(|p| 1.0 - p).sum::<f64>()).max(0.0)
}

/// Checks every constraint after one shared propagation and combines them
/// with the union bound.
pub fn verify_polytope(problem: &VerificationProblem) -> Result<PolytopeResult> {
    let start = Instant::now();
    let outputs = problem.propagate()?;
    let results = crate::par::try_map_indices(problem.constraints.len(), |i| {
        check_halfspace(&outputs, &problem.constraints[i], problem.risk, &problem.numerics)
    })?;
    let p_hats: Vec<f64> = results.iter().map(|r| r.p_hat).collect();
    let lower_bound = union_bound(&p_hats);
    Ok(PolytopeResult {
        constraints: results,
        lower_bound,
        verdict: Verdict::from_probability(lower_bound, problem.risk),
        timing_seconds: start.elapsed().as_secs_f64(),
    })
}

const MAX_DOUBLINGS: usize = 60;
const QUANTILE_TOL: f64 = 1e-3;
// 2^22 nodes per side is about 1 s per CDF probe
const MAX_QUANTILE_TERMS: usize = 1 << 22;

/// Threshold `r` with `P(y > r) = 1 - p` (direction `Ge`, the maximal safe
/// set `{y > r}`) or `P(y <= r) = 1 - p` (direction `Le`).
///
/// The bracket starts at `+-4 s` around the origin, where `s` is a scale read
/// off the CF (`|phi(t)|` halves at `t ~ ln 2 / s`), and doubles outward
/// until the target is bracketed. Bisection then runs to `1e-3` in `x`.
///
/// The sinc CDF is antiperiodic with period `pi / h`: the value at `x` picks
/// up the mass of `y` beyond `x +- pi / h`. Whenever the bracket leaves
/// `|x| < pi / (4h)` the step is halved and the term count doubled, which
/// keeps the sampled reach `M h` while widening the window. The search gives
/// up after 60 doublings or once the term count passes `2^22`.
pub fn quantile<C: CharFn + ?Sized>(
    phi: &C,
    p: f64,
    direction: Direction,
    params: HilbertParams,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Range {
            field: "p",
            value: p,
            expected: "0 < p < 1",
        });
    }
    let target = match direction {
        Direction::Ge => p,
        Direction::Le => 1.0 - p,
    };
    let cdf = |x: f64, params: HilbertParams| gil_pelaez_cdf(phi, x, params).probability;
    let limit = |params: HilbertParams| 0.25 * std::f64::consts::PI / params.step();

    let mut params = params;
    let scale = cf_scale(phi).min(0.2 * limit(params));
    let (mut lo, mut hi) = (-4.0 * scale, 4.0 * scale);
    let (mut down, mut up) = (4.0 * scale, 4.0 * scale);
    let mut expansions = 0;
    loop {
        if lo.abs().max(hi.abs()) >= limit(params) {
            let terms = params.terms() * 2;
            if terms > MAX_QUANTILE_TERMS {
                return Err(Error::UnboundedQuantile(expansions));
            }
            params = HilbertParams::new(0.5 * params.step(), terms)?;
            continue;
        }
        if cdf(lo, params) > target {
            down *= 2.0;
            lo -= down;
        } else if cdf(hi, params) < target {
            up *= 2.0;
            hi += up;
        } else {
            break;
        }
        expansions += 1;
        if expansions > MAX_DOUBLINGS {
            return Err(Error::UnboundedQuantile(expansions));
        }
    }
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if cdf(mid, params) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// Rough dispersion from the decay of |phi|: for Cauchy(x0, g) this is g.
fn cf_scale<C: CharFn + ?Sized>(phi: &C) -> f64 {
    let mut t = 1e-3;
    while t < 1e4 {
        if phi.eval(t).norm() <= 0.5 {
            return (std::f64::consts::LN_2 / t).max(1e-3);
        }
        t *= 1.25;
    }
    1.0
}

/// `ceil((2/eps) (ln(1/delta) + 1))`.
pub fn scenario_sample_count(epsilon: f64, delta: f64) -> Result<usize> {
    for (name, v) in [("epsilon", epsilon), ("delta", delta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Range {
                field: if name == "epsilon" { "epsilon" } else { "delta" },
                value: v,
                expected: "0 < v < 1",
            });
        }
    }
    let exact = 2.0 / epsilon * ((1.0 / delta).ln() + 1.0);
    // absorb rounding noise when the bound is an integer
    Ok((exact - 1e-9).ceil() as usize)
}

/// Largest `r` with every sample above it, i.e. the sample minimum.
pub fn scenario_threshold(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::min)
}

/// Scenario-optimization estimate of the maximal safe threshold `r` for the
/// scalar output `c^T y`.
pub fn scenario_quantile(
    net: &Network,
    inputs: &[AnalyticCf],
    c: &[f64],
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    let n = scenario_sample_count(epsilon, delta)?;
    let batch = oracle::sample_inputs(inputs, n, seed)?;
    let values = oracle::projected_outputs(net, &batch, c)?;
    Ok(scenario_threshold(&values).expect("sample count is positive"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::AffineLayer;

    fn identity_problem(risk: f64, direction: Direction) -> VerificationProblem {
        VerificationProblem {
            network: Network::new(vec![AffineLayer::new(vec![vec![1.0]], vec![0.0]).unwrap()]).unwrap(),
            inputs: vec![AnalyticCf::cauchy(0.0, 1.0).unwrap()],
            constraints: vec![HalfSpace::new(vec![1.0], 0.0, direction).unwrap()],
            risk,
            numerics: Numerics::default(),
        }
    }

    #[test]
    fn identity_cauchy_verdicts() {
        let r = verify_halfspace(&identity_problem(0.6, Direction::Le)).unwrap();
        assert!((r.p_hat - 0.5).abs() < 1e-3);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!((r.delta - (r.p_hat - 0.4)).abs() < 1e-15);

        let r = verify_halfspace(&identity_problem(0.4, Direction::Le)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn verdict_is_threshold_test() {
        assert_eq!(Verdict::from_probability(0.95, 0.05), Verdict::Pass);
        assert_eq!(Verdict::from_probability(0.9499, 0.05), Verdict::Fail);
    }

    #[test]
    fn problem_validation() {
        let mut p = identity_problem(1.5, Direction::Le);
        assert!(matches!(p.validate(), Err(Error::Range { field: "risk", .. })));
        p.risk = 0.0;
        assert!(p.validate().is_err());
        p.risk = 1.0;
        p.validate().unwrap();
        p.inputs.push(AnalyticCf::gaussian(0.0, 1.0).unwrap());
        assert!(matches!(p.validate(), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            HalfSpace::new(vec![0.0, 0.0], 1.0, Direction::Le),
            Err(Error::DegenerateConstraint)
        ));
    }

    #[test]
    fn output_cf_selection_and_scaling() {
        let grid = FrequencyGrid::new(50.0, 10_001).unwrap();
        let a = sample_on_grid(&AnalyticCf::cauchy(0.0, 1.0).unwrap(), grid);
        let b = sample_on_grid(&AnalyticCf::gaussian(1.0, 2.0).unwrap(), grid);
        let outs = vec![a.clone(), b.clone()];

        let first = output_scalar_cf(&outs, &[1.0, 0.0], grid).unwrap();
        assert_eq!(first, a);

        let scaled = output_scalar_cf(&outs, &[0.5, 0.0], grid).unwrap();
        for (idx, t) in grid.nodes().enumerate().step_by(97) {
            assert!((scaled.samples()[idx] - a.eval(0.5 * t)).norm() < 1e-15);
        }

        let two = vec![a.clone(), a.clone()];
        let sum = output_scalar_cf(&two, &[1.0, 1.0], grid).unwrap();
        let expected = sample_on_grid(&AnalyticCf::cauchy(0.0, 2.0).unwrap(), grid);
        for (x, y) in sum.samples().iter().zip(expected.samples()) {
            assert!((x - y).norm() < 1e-3);
        }

        assert!(matches!(
            output_scalar_cf(&outs, &[0.0, 0.0], grid),
            Err(Error::DegenerateConstraint)
        ));
    }

    #[test]
    fn union_bound_arithmetic() {
        assert!((union_bound(&[0.98, 0.97]) - 0.95).abs() < 1e-12);
        assert_eq!(union_bound(&[0.2, 0.3]), 0.0);
        assert_eq!(union_bound(&[0.7]), 0.7);
    }

    #[test]
    fn single_constraint_polytope_matches_halfspace() {
        let p = identity_problem(0.6, Direction::Le);
        let a = verify_halfspace(&p).unwrap();
        let b = verify_polytope(&p).unwrap();
        assert_eq!(b.constraints.len(), 1);
        assert_eq!(b.constraints[0].p_hat, a.p_hat);
        assert_eq!(b.lower_bound, a.p_hat);
        assert_eq!(b.verdict, a.verdict);
    }

    #[test]
    fn cauchy_quantiles() {
        // the 5% point sits where the density is ~0.008, so the CDF error
        // of the default h = 0.05 (~8e-4) would move it by ~0.1
        let params = HilbertParams::new(0.01, 50_000).unwrap();
        let c = AnalyticCf::cauchy(0.0, 1.0).unwrap();
        let median = quantile(&c, 0.5, Direction::Ge, params).unwrap();
        assert!(median.abs() < 1e-2);
        let r = quantile(&c, 0.05, Direction::Ge, params).unwrap();
        let expected = (std::f64::consts::PI * (0.05 - 0.5)).tan();
        assert!((r - expected).abs() < 1e-2, "{r} vs {expected}");
        let r = quantile(&c, 0.05, Direction::Le, params).unwrap();
        assert!((r + expected).abs() < 1e-2);
        assert!(quantile(&c, 1.0, Direction::Ge, params).is_err());
        // N(0, 100^2) has its 5% point at -164.5, outside pi/(4h) = 15.7 for
        // h = 0.05, so the step gets refined
        let coarse = HilbertParams::new(0.05, 5000).unwrap();
        let wide = AnalyticCf::gaussian(0.0, 1e4).unwrap();
        let r = quantile(&wide, 0.05, Direction::Ge, coarse).unwrap();
        assert!((r + 164.485).abs() < 1e-2, "{r}");
        assert!(matches!(
            quantile(&c, 1e-9, Direction::Ge, coarse),
            Err(Error::UnboundedQuantile(_))
        ));
    }

    #[test]
    fn scenario_counts() {
        assert_eq!(scenario_sample_count(0.05, 1e-5).unwrap(), 501);
        assert_eq!(scenario_sample_count(0.5, (-1.0f64).exp()).unwrap(), 8);
        assert_eq!(scenario_sample_count(0.1, 1e-3).unwrap(), 159);
        assert!(scenario_sample_count(1.0, 0.5).is_err());
        assert!(scenario_sample_count(0.5, 0.0).is_err());
    }

    #[test]
    fn scenario_threshold_is_minimum() {
        assert_eq!(scenario_threshold(&[3.0, 1.0, 2.0]), Some(1.0));
        assert_eq!(scenario_threshold(&[]), None);
    }

    #[test]
    fn scenario_on_constant_network() {
        let net = Network::new(vec![AffineLayer::new(vec![vec![0.0, 0.0]], vec![5.0]).unwrap()]).unwrap();
        let inputs = [AnalyticCf::cauchy(1.0, 1.0).unwrap(), AnalyticCf::cauchy(-1.0, 1.0).unwrap()];
        let r = scenario_quantile(&net, &inputs, &[1.0], 0.05, 1e-5, 3).unwrap();
        assert_eq!(r, 5.0);
    }
}
