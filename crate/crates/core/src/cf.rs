//! Characteristic functions of scalar random variables.
//!
//! Two representations are used: [`AnalyticCf`] for the closed-form input
//! distributions and [`SampledCf`] for everything computed by propagation,
//! stored as complex samples on a symmetric [`FrequencyGrid`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::par;

/// Tolerance on `|phi(0) - 1|` for CFs produced by propagation.
pub const TOL_UNIT_PROPAGATED: f64 = 1e-2;
/// Tolerance on `|phi(0) - 1|` for analytic CFs sampled onto a grid.
pub const TOL_UNIT_ANALYTIC: f64 = 1e-6;
/// Allowed excess of `|phi(t)|` over 1.
pub const TOL_MAGNITUDE: f64 = 5e-3;

/// Anything that can be evaluated as a characteristic function.
pub trait CharFn: Sync {
    fn eval(&self, t: f64) -> Complex64;
}

/// Uniform grid on `[-t_max, t_max]` with an odd number of points, so that
/// `t = 0` is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    t_max: f64,
    n_points: usize,
}

impl FrequencyGrid {
    /// An even `n_points` is rounded up to the next odd number.
    pub fn new(t_max: f64, n_points: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid(format!("grid cutoff must be positive, got {t_max}")));
        }
        if n_points < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 points, got {n_points}")));
        }
        let n_points = if n_points.is_multiple_of(2) { n_points + 1 } else { n_points };
        Ok(Self { t_max, n_points })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of strictly positive nodes; also the index of `t = 0`.
    pub fn half(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn spacing(&self) -> f64 {
        self.t_max / self.half() as f64
    }

    /// Node `j`, counting from `-t_max`. Nodes `half + k` and `half - k`
    /// are exact negatives of each other.
    pub fn node(&self, j: usize) -> f64 {
        (j as f64 - self.half() as f64) * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|j| self.node(j))
    }
}

/// Closed-form characteristic functions of the supported input laws.
///
/// Serialized as `{"kind": "cauchy", "location": 1.0, "scale": 1.0}` and the
/// analogous `gaussian` (`mean`, `variance`), `uniform` (`low`, `high`) and
/// `degenerate` (`point`) records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnalyticCf {
    Cauchy { location: f64, scale: f64 },
    Gaussian { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
    Degenerate { point: f64 },
}

impl AnalyticCf {
    pub fn cauchy(location: f64, scale: f64) -> Result<Self> {
        let cf = AnalyticCf::Cauchy { location, scale };
        cf.validate()?;
        Ok(cf)
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        let cf = AnalyticCf::Gaussian { mean, variance };
        cf.validate()?;
        Ok(cf)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        let cf = AnalyticCf::Uniform { low, high };
        cf.validate()?;
        Ok(cf)
    }

    pub fn degenerate(point: f64) -> Result<Self> {
        let cf = AnalyticCf::Degenerate { point };
        cf.validate()?;
        Ok(cf)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite, got {v}")))
            }
        };
        match *self {
            AnalyticCf::Cauchy { location, scale } => {
                finite("location", location)?;
                finite("scale", scale)?;
                if scale <= 0.0 {
                    return Err(Error::invalid(format!("Cauchy scale must be positive, got {scale}")));
                }
            }
            AnalyticCf::Gaussian { mean, variance } => {
                finite("mean", mean)?;
                finite("variance", variance)?;
                if variance <= 0.0 {
                    return Err(Error::invalid(format!(
                        "Gaussian variance must be positive, got {variance}"
                    )));
                }
            }
            AnalyticCf::Uniform { low, high } => {
                finite("low", low)?;
                finite("high", high)?;
                if low >= high {
                    return Err(Error::invalid(format!(
                        "uniform bounds need low < high, got [{low}, {high}]"
                    )));
                }
            }
            AnalyticCf::Degenerate { point } => finite("point", point)?,
        }
        Ok(())
    }

    /// Exact CDF, used by tests and diagnostics.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            AnalyticCf::Cauchy { location, scale } => 0.5 + ((x - location) / scale).atan() / PI,
            AnalyticCf::Gaussian { mean, variance } => {
                0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
            }
            AnalyticCf::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            AnalyticCf::Degenerate { point } => {
                if x >= point {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl CharFn for AnalyticCf {
    fn eval(&self, t: f64) -> Complex64 {
        match *self {
            AnalyticCf::Cauchy { location, scale } => {
                Complex64::from_polar((-scale * t.abs()).exp(), location * t)
            }
            AnalyticCf::Gaussian { mean, variance } => {
                Complex64::from_polar((-0.5 * variance * t * t).exp(), mean * t)
            }
            AnalyticCf::Uniform { low, high } => {
                let half_width = 0.5 * (high - low) * t;
                let modulus = if half_width.abs() < 1e-8 {
                    1.0 - half_width * half_width / 6.0
                } else {
                    half_width.sin() / half_width
                };
                Complex64::from_polar(1.0, 0.5 * (low + high) * t) * modulus
            }
            AnalyticCf::Degenerate { point } => Complex64::from_polar(1.0, point * t),
        }
    }
}

/// A characteristic function stored as samples on a [`FrequencyGrid`].
///
/// Samples are Hermitian by construction: only `t >= 0` is ever computed and
/// the negative half is filled with conjugates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCf {
    grid: FrequencyGrid,
    samples: Vec<Complex64>,
}

/// Summary of how far a sampled CF is from the exact CF properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    /// `|phi(0) - 1|`
    pub unit_error: f64,
    /// `max_j |phi(t_j)|`
    pub max_magnitude: f64,
    /// `max_j |phi(-t_j) - conj(phi(t_j))|`
    pub hermitian_error: f64,
}

impl InvariantReport {
    pub fn holds(&self, tol_unit: f64, tol_mag: f64) -> bool {
        self.unit_error <= tol_unit && self.max_magnitude <= 1.0 + tol_mag
    }
}

impl SampledCf {
    /// Samples `f` on the nonnegative half of the grid and mirrors it.
    /// The value at `t = 0` is forced real.
    pub fn from_fn_mirrored<F>(grid: FrequencyGrid, f: F) -> Self
    where
        F: Fn(f64) -> Complex64 + Sync + Send,
    {
        let half = grid.half();
        let spacing = grid.spacing();
        let positive = par::map_indices(half + 1, |k| f(k as f64 * spacing));
        Self::from_nonnegative(grid, &positive)
    }

    /// Builds a CF from its values at `t = 0, s, 2s, ...` (`half + 1` values).
    pub(crate) fn from_nonnegative(grid: FrequencyGrid, positive: &[Complex64]) -> Self {
        let half = grid.half();
        debug_assert_eq!(positive.len(), half + 1);
        let mut samples = vec![Complex64::new(0.0, 0.0); grid.len()];
        samples[half] = Complex64::new(positive[0].re, 0.0);
        for k in 1..=half {
            samples[half + k] = positive[k];
            samples[half - k] = positive[k].conj();
        }
        Self { grid, samples }
    }

    /// Builds a CF from raw samples without enforcing any symmetry.
    pub fn from_samples(grid: FrequencyGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "sampled CF",
                expected: grid.len(),
                found: samples.len(),
            });
        }
        Ok(Self { grid, samples })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Sample at `t = k * spacing` for `k` in `0..=half`.
    pub fn at_nonnegative(&self, k: usize) -> Complex64 {
        self.samples[self.grid.half() + k]
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn invariants(&self) -> InvariantReport {
        let half = self.grid.half();
        let unit_error = (self.samples[half] - 1.0).norm();
        let max_magnitude = self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let hermitian_error = (1..=half)
            .map(|k| (self.samples[half - k] - self.samples[half + k].conj()).norm())
            .fold(0.0, f64::max);
        InvariantReport {
            unit_error,
            max_magnitude,
            hermitian_error,
        }
    }

    /// Moment estimate using the grid spacing as the stencil width.
    pub fn moment(&self, order: u32) -> Result<MomentEstimate> {
        moment_from_cf(self, order, self.grid.spacing())
    }
}

impl CharFn for SampledCf {
    /// Linear interpolation between nodes, constant extrapolation with the
    /// boundary sample beyond `t_max`.
    fn eval(&self, t: f64) -> Complex64 {
        let n = self.samples.len();
        let t_max = self.grid.t_max;
        if t >= t_max {
            return self.samples[n - 1];
        }
        if t <= -t_max {
            return self.samples[0];
        }
        let pos = t / self.grid.spacing() + self.grid.half() as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.samples[nearest as usize];
        }
        let j = (pos.floor() as usize).min(n - 2);
        let frac = pos - j as f64;
        let a = self.samples[j];
        let b = self.samples[j + 1];
        a + (b - a) * frac
    }
}

/// Samples any CF on `grid`, computing `t >= 0` and mirroring.
pub fn sample_on_grid<C: CharFn + ?Sized>(cf: &C, grid: FrequencyGrid) -> SampledCf {
    SampledCf::from_fn_mirrored(grid, |t| cf.eval(t))
}

/// One per-component CF at some layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Analytic(AnalyticCf),
    Sampled(SampledCf),
}

impl CharFn for Marginal {
    fn eval(&self, t: f64) -> Complex64 {
        match self {
            Marginal::Analytic(cf) => cf.eval(t),
            Marginal::Sampled(cf) => cf.eval(t),
        }
    }
}

impl From<AnalyticCf> for Marginal {
    fn from(cf: AnalyticCf) -> Self {
        Marginal::Analytic(cf)
    }
}

impl From<SampledCf> for Marginal {
    fn from(cf: SampledCf) -> Self {
        Marginal::Sampled(cf)
    }
}

/// The marginal CFs of every component of one layer, in component order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarginalSet(Vec<Marginal>);

impl MarginalSet {
    pub fn new(marginals: Vec<Marginal>) -> Self {
        Self(marginals)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, j: usize) -> Option<&Marginal> {
        self.0.get(j)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Marginal> {
        self.0.iter()
    }

    /// Samples every component onto `grid`.
    pub fn sampled(&self, grid: FrequencyGrid) -> Vec<SampledCf> {
        self.0
            .iter()
            .map(|m| match m {
                Marginal::Sampled(cf) if *cf.grid() == grid => cf.clone(),
                other => sample_on_grid(other, grid),
            })
            .collect()
    }
}

impl FromIterator<Marginal> for MarginalSet {
    fn from_iter<I: IntoIterator<Item = Marginal>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl From<Vec<SampledCf>> for MarginalSet {
    fn from(cfs: Vec<SampledCf>) -> Self {
        cfs.into_iter().map(Marginal::Sampled).collect()
    }
}

impl From<&[AnalyticCf]> for MarginalSet {
    fn from(cfs: &[AnalyticCf]) -> Self {
        cfs.iter().copied().map(Marginal::Analytic).collect()
    }
}

/// A raw moment recovered from derivatives of the CF at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    /// Set when the finite-difference estimate does not settle as the
    /// stencil shrinks, which is what happens when the moment does not exist.
    pub unstable: bool,
}

/// `E[x^k] = i^{-k} phi^{(k)}(0)` for `k` in {1, 2}, by 5-point central
/// differences with spacing `step`.
///
/// The estimate at `step` is compared with the estimate at `2 * step`; a
/// relative change above 10% raises the flag. For `k = 1` the flag is also
/// raised when `Re phi` has a corner at the origin, i.e. when the one-sided
/// slope `(1 - Re phi(s)) / s` does not shrink with `s`. A symmetric law
/// with no mean (Cauchy at 0) gives a perfectly stable central difference of
/// 0, so the corner test is the one that catches it.
pub fn moment_from_cf<C: CharFn + ?Sized>(cf: &C, order: u32, step: f64) -> Result<MomentEstimate> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("stencil step must be positive, got {step}")));
    }
    let estimate = |s: f64| -> f64 {
        let p1 = cf.eval(s);
        let m1 = cf.eval(-s);
        let p2 = cf.eval(2.0 * s);
        let m2 = cf.eval(-2.0 * s);
        match order {
            // i^{-1} phi'(0) = -i phi'(0) -> real part is Im phi'(0)
            1 => ((m2 - m1 * 8.0 + p1 * 8.0 - p2) / (12.0 * s)).im,
            // i^{-2} phi''(0) = -phi''(0)
            _ => {
                let c0 = cf.eval(0.0);
                -((-p2 + p1 * 16.0 - c0 * 30.0 + m1 * 16.0 - m2) / (12.0 * s * s)).re
            }
        }
    };
    if order == 0 || order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    let fine = estimate(step);
    let coarse = estimate(2.0 * step);
    let scale = fine.abs().max(coarse.abs()).max(1e-12);
    let mut unstable = (fine - coarse).abs() > 0.1 * scale && (fine - coarse).abs() > 1e-9;

    if order == 1 {
        let slope = |s: f64| (1.0 - cf.eval(s).re) / s;
        let near = slope(step);
        let far = slope(2.0 * step);
        if near > 1e-6 && near > 0.9 * far {
            unstable = true;
        }
    }
    Ok(MomentEstimate {
        value: fine,
        unstable,
    })
}
