//! Layer-by-layer propagation of per-neuron characteristic functions.
//!
//! Affine step, per output neuron `j`:
//! `phi_j(t) = e^{i t b_j} prod_i phi_i(W_ji t)`, i.e. the affine rule with
//! the inputs of the layer treated as independent.
//!
//! ReLU step, per neuron:
//! `phi_+(t) = (1 + phi(t))/2 + (i/2) [H(phi)(t) - H(phi)(0)]`.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::cf::{CharFn, FrequencyGrid, Marginal, MarginalSet, SampledCf};
use crate::error::{Error, Phase, Result};
use crate::hilbert::{gil_pelaez_cdf, HilbertParams, SincNodes};
use crate::par;

/// `x -> W x + b` with dense row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let rows = weights.len();
        if rows == 0 {
            return Err(Error::invalid("layer has no rows"));
        }
        let cols = weights[0].len();
        if cols == 0 {
            return Err(Error::invalid("layer has no columns"));
        }
        if let Some(bad) = weights.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                context: "weight row length",
                expected: cols,
                found: bad.len(),
            });
        }
        if bias.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "bias length",
                expected: rows,
                found: bias.len(),
            });
        }
        if !weights.iter().flatten().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::invalid("layer contains non-finite entries"));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights[0].len()
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// Affine layers with a ReLU after every layer but the last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    layers: Vec<AffineLayer>,
}

impl Network {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::DimensionChain {
                    layer: k + 1,
                    expected: pair[0].outputs(),
                    found: pair[1].inputs(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths `h_0, ..., h_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(AffineLayer::outputs))
            .collect()
    }
}

/// Output marginals of an affine layer on `grid`.
pub fn affine_marginals(
    layer: &AffineLayer,
    input: &MarginalSet,
    grid: FrequencyGrid,
) -> Result<Vec<SampledCf>> {
    if input.width() != layer.inputs() {
        return Err(Error::DimensionMismatch {
            context: "affine layer input width",
            expected: layer.inputs(),
            found: input.width(),
        });
    }
    let marginals: Vec<&Marginal> = input.iter().collect();
    Ok(par::map_indices(layer.outputs(), |j| {
        let row = layer.row(j);
        let bias = layer.bias()[j];
        SampledCf::from_fn_mirrored(grid, |t| {
            let mut acc = Complex64::from_polar(1.0, t * bias);
            for (&w, m) in row.iter().zip(&marginals) {
                if w != 0.0 {
                    acc *= m.eval(w * t);
                }
            }
            acc
        })
    }))
}

/// CF of `max(0, x)` given the CF of `x`.
///
/// `H(phi)(0)` is computed once and the sinc-node samples are shared by all
/// grid points. The series is extended past `M h` with the held end value,
/// see [`SincNodes::with_held_tail`].
pub fn relu_marginal(phi: &SampledCf, params: HilbertParams) -> SampledCf {
    let grid = *phi.grid();
    let nodes = SincNodes::sample(|t| phi.eval(t), params).with_held_tail();
    let at_zero = nodes.transform(0.0);
    let spacing = grid.spacing();
    let half_i = Complex64::new(0.0, 0.5);
    let positive = par::map_indices(grid.half() + 1, |k| {
        let value = phi.at_nonnegative(k);
        (value + 1.0) * 0.5 + half_i * (nodes.transform(k as f64 * spacing) - at_zero)
    });
    SampledCf::from_nonnegative(grid, &positive)
}

/// Marginals of one layer before and after its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub pre: Vec<SampledCf>,
    /// `None` for the final, purely affine layer.
    pub post: Option<Vec<SampledCf>>,
}

/// Every intermediate marginal of a propagation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrace {
    pub layers: Vec<LayerRecord>,
}

/// One point of a CDF curve in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub layer: usize,
    pub phase: Phase,
    pub component: usize,
    pub x: f64,
    #[serde(serialize_with = "plain_f64")]
    pub cdf: f64,
}

fn plain_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(*v)
}

impl LayerTrace {
    /// Gil-Pelaez CDF curves at `xs` for the selected components (all when
    /// `components` is `None`).
    pub fn cdf_rows(
        &self,
        xs: &[f64],
        components: Option<&[usize]>,
        params: HilbertParams,
    ) -> Vec<TraceRow> {
        let mut jobs = Vec::new();
        for (layer, record) in self.layers.iter().enumerate() {
            let phases = std::iter::once((Phase::Pre, &record.pre))
                .chain(record.post.as_ref().map(|p| (Phase::Post, p)));
            for (phase, cfs) in phases {
                for (component, cf) in cfs.iter().enumerate() {
                    if components.is_none_or(|sel| sel.contains(&component)) {
                        jobs.push((layer, phase, component, cf));
                    }
                }
            }
        }
        par::map_indices(jobs.len(), |i| {
            let (layer, phase, component, cf) = jobs[i];
            xs.iter()
                .map(|&x| TraceRow {
                    layer,
                    phase,
                    component,
                    x,
                    cdf: gil_pelaez_cdf(cf, x, params).probability,
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

/// Writes trace rows as CSV with header `layer,phase,component,x,cdf`.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: "<trace>".into(),
        source,
    })?;
    Ok(())
}

/// Result of [`propagate_network`].
#[derive(Debug, Clone)]
pub struct Propagation {
    pub outputs: Vec<SampledCf>,
    pub trace: Option<LayerTrace>,
}

fn ensure_finite(cfs: &[SampledCf], layer: usize, phase: Phase) -> Result<()> {
    match cfs.iter().position(|cf| !cf.is_finite()) {
        Some(component) => Err(Error::NumericFailure {
            layer,
            component,
            phase,
        }),
        None => Ok(()),
    }
}

/// Runs the affine/ReLU alternation through the whole network. Inputs may be
/// analytic or sampled; every later marginal lives on `grid`.
pub fn propagate_network(
    net: &Network,
    inputs: &MarginalSet,
    grid: FrequencyGrid,
    params: HilbertParams,
    trace: bool,
) -> Result<Propagation> {
    if inputs.width() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "network input width",
            expected: net.input_width(),
            found: inputs.width(),
        });
    }
    let last = net.layers().len() - 1;
    let mut records = Vec::new();
    let mut current = inputs.clone();
    let mut outputs = Vec::new();

    for (k, layer) in net.layers().iter().enumerate() {
        let pre = affine_marginals(layer, &current, grid)?;
        ensure_finite(&pre, k, Phase::Pre)?;
        if k == last {
            if trace {
                records.push(LayerRecord {
                    pre: pre.clone(),
                    post: None,
                });
            }
            outputs = pre;
            break;
        }
        let post = par::map_indices(pre.len(), |j| relu_marginal(&pre[j], params));
        ensure_finite(&post, k, Phase::Post)?;
        if trace {
            records.push(LayerRecord {
                pre,
                post: Some(post.clone()),
            });
        }
        current = MarginalSet::from(post);
    }

    Ok(Propagation {
        outputs,
        trace: trace.then_some(LayerTrace { layers: records }),
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|2 e^{it max(0,x)} - (1 + e^{itx} + e^{itx} sgn(x) - sgn(x))|`, with
/// `sgn(0) = 0`. Zero up to rounding for every `(x, t)`.
pub fn relu_identity_check(x: f64, t: f64) -> f64 {
    let lhs = Complex64::from_polar(2.0, t * x.max(0.0));
    let e = Complex64::from_polar(1.0, t * x);
    let s = sgn(x);
    let rhs = e + e * s + (1.0 - s);
    (lhs - rhs).norm()
}
