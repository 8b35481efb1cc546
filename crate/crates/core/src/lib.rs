//! Probabilistic safety verification of ReLU feedforward networks.
//!
//! Input distributions are carried through the network as characteristic
//! functions (one per neuron), pushed through affine layers with the
//! independence product and through ReLU layers with a Hilbert-transform
//! rule, and finally inverted to a CDF with the Gil-Pelaez formula to check
//! half-space chance constraints `P(c^T y <= d) >= 1 - p`.
//!
//! A Monte-Carlo oracle ([`oracle`]) provides ground truth and the
//! scenario-optimization baseline lives in [`verification`].

pub mod cf;
pub mod ensemble;
pub mod error;
pub mod hilbert;
pub mod model_io;
pub mod oracle;
pub mod par;
pub mod propagation;
pub mod verification;

pub use cf::{AnalyticCf, CharFn, FrequencyGrid, Marginal, MarginalSet, SampledCf};
pub use error::{Error, Phase, Result};
pub use hilbert::{gil_pelaez_cdf, hilbert_sinc, j_operator, CdfValue, HilbertParams};
pub use propagation::{propagate_network, AffineLayer, LayerTrace, Network, Propagation};
pub use verification::{
    verify_halfspace, verify_polytope, Direction, HalfSpace, Numerics, Verdict, VerificationProblem,
    VerificationResult,
};
