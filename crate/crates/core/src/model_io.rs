//! JSON network and problem files, and seeded random networks.
//!
//! Network file:
//!
//! ```json
//! {"layers": [{"weights": [[w00, w01], [w10, w11]], "bias": [b0, b1]}]}
//! ```
//!
//! `weights[j][i]` maps input `i` to output `j`. Problem file:
//!
//! ```json
//! {
//!   "network": {"layers": [...]} | "net.json" | {"random": {"widths": [2, 10, 1], "seed": 0}},
//!   "inputs": [{"kind": "cauchy", "location": 1, "scale": 1}, ...],
//!   "safety": [{"c": [1], "d": 0, "direction": "ge"}],
//!   "risk": 0.05,
//!   "numerics": {"t_max": 50, "n_grid": 10001, "ht_step": 0.05, "ht_terms": 5000},
//!   "seed": 0,
//!   "mc_samples": 10000
//! }
//! ```
//!
//! `numerics`, `seed` and `mc_samples` are optional. A relative network path
//! resolves against the directory of the problem file.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cf::AnalyticCf;
use crate::error::{Error, Result};
use crate::propagation::{AffineLayer, Network};
use crate::verification::{HalfSpace, Numerics, VerificationProblem};

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub layers: Vec<LayerFile>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network> {
        if self.layers.is_empty() {
            return Err(Error::Schema("network has no layers".into()));
        }
        let layers = self
            .layers
            .into_iter()
            .map(|l| AffineLayer::new(l.weights, l.bias))
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights().to_vec(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn schema(e: serde_json::Error) -> Error {
    Error::Schema(e.to_string())
}

/// Parses and validates a network document.
pub fn parse_network(text: &str) -> Result<Network> {
    serde_json::from_str::<NetworkFile>(text)
        .map_err(schema)?
        .into_network()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    parse_network(&read(path.as_ref())?)
}

/// Pretty-printed JSON with a trailing newline. Parsing this back and
/// printing again gives the same bytes.
pub fn network_to_json(net: &Network) -> String {
    let mut s = serde_json::to_string_pretty(&NetworkFile::from(net)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, network_to_json(net)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Dense layers with every weight and bias drawn from `U[-1, 1]`.
pub fn random_network(widths: &[usize], seed: u64) -> Result<Network> {
    if widths.len() < 2 {
        return Err(Error::invalid("random network needs at least two widths"));
    }
    if widths.contains(&0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            let bias = (0..w[1]).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            AffineLayer::new(weights, bias)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// Where a problem's network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    Path(PathBuf),
    Random { random: RandomSpec },
    Inline(NetworkFile),
}

impl NetworkSource {
    pub fn resolve(self, base: Option<&Path>) -> Result<Network> {
        match self {
            NetworkSource::Inline(file) => file.into_network(),
            NetworkSource::Random { random } => random_network(&random.widths, random.seed),
            NetworkSource::Path(p) => {
                let full = match base {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                };
                load_network(full)
            }
        }
    }
}

/// Problem file as written; required fields are checked in [`ProblemConfig::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub network: Option<NetworkSource>,
    pub inputs: Option<Vec<AnalyticCf>>,
    pub safety: Option<Vec<HalfSpace>>,
    pub risk: Option<f64>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::Schema(format!("missing field `{field}`")))
}

/// A validated problem plus the sampling settings that ride along with it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProblem {
    pub problem: VerificationProblem,
    pub seed: u64,
    pub mc_samples: usize,
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(schema)
    }

    pub fn build(self, base: Option<&Path>) -> Result<LoadedProblem> {
        let risk = required(self.risk, "risk")?;
        let inputs = required(self.inputs, "inputs")?;
        let constraints = required(self.safety, "safety")?;
        let network = required(self.network, "network")?.resolve(base)?;
        if self.mc_samples == 0 {
            return Err(Error::Range {
                field: "mc_samples",
                value: 0.0,
                expected: ">= 1",
            });
        }
        let problem = VerificationProblem {
            network,
            inputs,
            constraints,
            risk,
            numerics: self.numerics,
        };
        problem.validate()?;
        Ok(LoadedProblem {
            problem,
            seed: self.seed,
            mc_samples: self.mc_samples,
        })
    }
}

pub fn parse_problem(text: &str, base: Option<&Path>) -> Result<LoadedProblem> {
    ProblemConfig::parse(text)?.build(base)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<LoadedProblem> {
    let path = path.as_ref();
    parse_problem(&read(path)?, path.parent())
}
