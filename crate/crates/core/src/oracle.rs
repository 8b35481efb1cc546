//! Monte-Carlo ground truth: seeded input sampling, exact forward passes,
//! empirical CDFs and the CF-vs-sampling comparison report.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use serde::Serialize;

use crate::cf::AnalyticCf;
use crate::error::{Error, Result};
use crate::par;
use crate::propagation::Network;
use crate::verification::{HalfSpace, VerificationProblem, VerificationResult};

/// Samples per RNG stream. Each block gets its own ChaCha stream, so a batch
/// is the same whatever the thread count.
const BLOCK: usize = 4096;

/// `n` input vectors stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub inputs: Vec<AnalyticCf>,
    width: usize,
    data: Vec<f64>,
}

impl SampleBatch {
    /// Wraps precomputed rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::invalid("sample batch needs at least one nonempty row"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                context: "sample row length",
                expected: width,
                found: bad.len(),
            });
        }
        Ok(Self {
            seed: 0,
            inputs: Vec::new(),
            width,
            data: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width)
    }

    /// Values of one coordinate across the batch.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

fn draw(cf: &AnalyticCf, rng: &mut ChaCha8Rng) -> f64 {
    match *cf {
        AnalyticCf::Cauchy { location, scale } => {
            let u: f64 = rng.sample(Open01);
            location + scale * (std::f64::consts::PI * (u - 0.5)).tan()
        }
        AnalyticCf::Gaussian { mean, variance } => Normal::new(mean, variance.sqrt())
            .expect("validated variance")
            .sample(rng),
        AnalyticCf::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
        AnalyticCf::Degenerate { point } => point,
    }
}

/// Independent draws of every input component.
pub fn sample_inputs(inputs: &[AnalyticCf], n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("no input distributions"));
    }
    for cf in inputs {
        cf.validate()?;
    }
    let width = inputs.len();
    let blocks = n.div_ceil(BLOCK);
    let chunks = par::map_indices(blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let rows = BLOCK.min(n - b * BLOCK);
        let mut out = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            out.extend(inputs.iter().map(|cf| draw(cf, &mut rng)));
        }
        out
    });
    Ok(SampleBatch {
        seed,
        inputs: inputs.to_vec(),
        width,
        data: chunks.concat(),
    })
}

fn apply_layer(weights: &[Vec<f64>], bias: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
    weights
        .iter()
        .zip(bias)
        .map(|(row, b)| {
            let v = row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b;
            if relu {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect()
}

/// Exact evaluation: ReLU after every layer except the last.
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "forward input length",
            expected: net.input_width(),
            found: x.len(),
        });
    }
    let last = net.layers().len() - 1;
    let mut act = x.to_vec();
    for (k, layer) in net.layers().iter().enumerate() {
        act = apply_layer(layer.weights(), layer.bias(), &act, k != last);
    }
    Ok(act)
}

/// Forward pass of every row.
pub fn forward_batch(net: &Network, batch: &SampleBatch) -> Result<Vec<Vec<f64>>> {
    if batch.width() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "forward input length",
            expected: net.input_width(),
            found: batch.width(),
        });
    }
    par::try_map_indices(batch.len(), |i| forward(net, batch.row(i)))
}

/// `c^T forward(x)` for every row.
pub fn projected_outputs(net: &Network, batch: &SampleBatch, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != net.output_width() {
        return Err(Error::DimensionMismatch {
            context: "constraint vector length",
            expected: net.output_width(),
            found: c.len(),
        });
    }
    let outs = forward_batch(net, batch)?;
    Ok(outs
        .iter()
        .map(|y| c.iter().zip(y).map(|(c, y)| c * y).sum())
        .collect())
}

/// Per-layer activations of a batch: `pre[k][i]` is the pre-activation
/// vector of sample `i` at layer `k`, `post[k]` the ReLU output (absent for
/// the last layer).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSamples {
    pub pre: Vec<Vec<f64>>,
    pub post: Option<Vec<Vec<f64>>>,
}

impl LayerSamples {
    pub fn pre_component(&self, j: usize) -> Vec<f64> {
        self.pre.iter().map(|v| v[j]).collect()
    }

    pub fn post_component(&self, j: usize) -> Option<Vec<f64>> {
        self.post.as_ref().map(|p| p.iter().map(|v| v[j]).collect())
    }
}

/// Runs the batch through the network keeping every intermediate value.
pub fn layer_samples(net: &Network, batch: &SampleBatch) -> Result<Vec<LayerSamples>> {
    if batch.width() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "forward input length",
            expected: net.input_width(),
            found: batch.width(),
        });
    }
    let last = net.layers().len() - 1;
    let mut current: Vec<Vec<f64>> = batch.rows().map(<[f64]>::to_vec).collect();
    let mut out = Vec::with_capacity(net.layers().len());
    for (k, layer) in net.layers().iter().enumerate() {
        let pre = par::map_indices(current.len(), |i| {
            apply_layer(layer.weights(), layer.bias(), &current[i], false)
        });
        if k == last {
            out.push(LayerSamples { pre, post: None });
            break;
        }
        let post: Vec<Vec<f64>> = pre
            .iter()
            .map(|v| v.iter().map(|x| x.max(0.0)).collect())
            .collect();
        current = post.clone();
        out.push(LayerSamples { pre, post: Some(post) });
    }
    Ok(out)
}

/// Like [`layer_samples`], but every neuron's column is independently
/// permuted before it feeds the next layer. The marginals keep their laws
/// while cross-neuron dependence is destroyed, so this samples exactly the
/// per-layer laws the independence product computes. Comparing it with
/// [`layer_samples`] isolates the independence error from numerical error.
pub fn decorrelated_layer_samples(
    net: &Network,
    batch: &SampleBatch,
    seed: u64,
) -> Result<Vec<LayerSamples>> {
    if batch.width() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "forward input length",
            expected: net.input_width(),
            found: batch.width(),
        });
    }
    let n = batch.len();
    let last = net.layers().len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = (0..batch.width()).map(|j| batch.column(j)).collect();
    let mut out = Vec::with_capacity(net.layers().len());
    for (k, layer) in net.layers().iter().enumerate() {
        for col in &mut columns {
            col.shuffle(&mut rng);
        }
        let pre = par::map_indices(n, |i| {
            let x: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            apply_layer(layer.weights(), layer.bias(), &x, false)
        });
        if k == last {
            out.push(LayerSamples { pre, post: None });
            break;
        }
        let post: Vec<Vec<f64>> = pre
            .iter()
            .map(|v| v.iter().map(|x| x.max(0.0)).collect())
            .collect();
        columns = (0..layer.outputs())
            .map(|j| post.iter().map(|v| v[j]).collect())
            .collect();
        out.push(LayerSamples { pre, post: Some(post) });
    }
    Ok(out)
}

/// Fraction of `values` that are `<= x`.
pub fn empirical_cdf(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

/// Sorted sample for repeated CDF queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empirical CDF of an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("empirical CDF of a sample containing NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample value `v` with `F(v) >= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// `max |cdf(x) - F_n(x)|` over the points `xs`.
pub fn kolmogorov_distance(
    empirical: &EmpiricalCdf,
    xs: &[f64],
    cdf: impl Fn(f64) -> f64,
) -> f64 {
    xs.iter()
        .map(|&x| (cdf(x) - empirical.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Fraction of projected values inside the half-space, ties inside.
pub fn empirical_probability(projected: &[f64], constraint: &HalfSpace) -> f64 {
    projected.iter().filter(|&&v| constraint.contains(v)).count() as f64 / projected.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub p_hat_cf: f64,
    pub p_hat_mc: f64,
    pub delta_cf: f64,
    pub delta_mc: f64,
    /// `delta_cf - delta_mc`
    pub delta_delta: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub cf_seconds: f64,
    pub mc_seconds: f64,
}

/// Monte-Carlo estimate of the first constraint, set against `cf_result`.
pub fn compare(
    problem: &VerificationProblem,
    cf_result: &VerificationResult,
    n: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    problem.validate()?;
    let start = Instant::now();
    let constraint = &problem.constraints[0];
    let batch = sample_inputs(&problem.inputs, n, seed)?;
    let projected = projected_outputs(&problem.network, &batch, &constraint.c)?;
    let p_hat_mc = empirical_probability(&projected, constraint);
    let mc_seconds = start.elapsed().as_secs_f64();
    let delta_mc = p_hat_mc - (1.0 - problem.risk);
    Ok(ComparisonReport {
        p_hat_cf: cf_result.p_hat,
        p_hat_mc,
        delta_cf: cf_result.delta,
        delta_mc,
        delta_delta: cf_result.delta - delta_mc,
        n_samples: n,
        seed,
        cf_seconds: cf_result.timing_seconds,
        mc_seconds,
    })
}
