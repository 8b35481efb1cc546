//! Sinc-expansion Hilbert transform, the `J_a` operator and Gil-Pelaez
//! inversion.
//!
//! The transform uses the convention `H(f)(t) = (1/pi) p.v. int f(tau) / (t - tau) dtau`.
//! A function is replaced by its cardinal series on the nodes `m h`,
//! `|m| <= M`, and each basis function is transformed exactly:
//!
//! ```text
//! H(sinc(. / h - m))(t) = (1 - cos(pi (t/h - m))) / (pi (t/h - m))
//! ```
//!
//! Writing `u = t/h` and `1 - cos(pi x) = 2 sin^2(pi x / 2)`, the numerator
//! is `2 sin^2(pi u / 2)` for even `m` and `2 cos^2(pi u / 2)` for odd `m`.
//! The sum then splits into two parity classes with a shared weight each,
//!
//! ```text
//! H(f)(t) ~ (2/pi) [ sin^2(pi u/2) sum_{m even} f_m / (u - m)
//!                  + cos^2(pi u/2) sum_{m odd}  f_m / (u - m) ]
//! ```
//!
//! which has no cancellation when `u` sits next to a node. The node with
//! `m = u` contributes exactly zero and is skipped.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use statrs::function::gamma::digamma;

use crate::cf::CharFn;
use crate::error::{Error, Result};

/// Resolution `h` and half-width `M` of the sinc expansion (`2M + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertParams {
    step: f64,
    terms: usize,
}

impl HilbertParams {
    pub fn new(step: f64, terms: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(format!("HT step must be positive, got {step}")));
        }
        if terms == 0 {
            return Err(Error::invalid("HT terms must be at least 1"));
        }
        Ok(Self { step, terms })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn node_count(&self) -> usize {
        2 * self.terms + 1
    }
}

/// Samples of one parity class (`m` even or odd), split into planes so the
/// inner loop vectorizes.
#[derive(Debug, Clone, Default)]
struct ParityPlane {
    m: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ParityPlane {
    fn push(&mut self, m: i64, v: Complex64) {
        self.m.push(m as f64);
        self.re.push(v.re);
        self.im.push(v.im);
    }

    fn index_of(&self, m: i64) -> usize {
        ((m as f64 - self.m[0]) / 2.0) as usize
    }

    /// `sum f_m / (u - m)`, skipping index `skip`.
    fn kernel_sum(&self, u: f64, skip: Option<usize>) -> Complex64 {
        match skip {
            None => lane_sum(u, &self.m, &self.re, &self.im),
            Some(k) => {
                lane_sum(u, &self.m[..k], &self.re[..k], &self.im[..k])
                    + lane_sum(u, &self.m[k + 1..], &self.re[k + 1..], &self.im[k + 1..])
            }
        }
    }
}

const LANES: usize = 4;

// Fixed four-lane accumulation: deterministic, and shaped so LLVM emits
// packed divisions.
fn lane_sum(u: f64, m: &[f64], re: &[f64], im: &[f64]) -> Complex64 {
    let mut acc_re = [0.0; LANES];
    let mut acc_im = [0.0; LANES];
    let chunks = m.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        let mc = &m[base..base + LANES];
        let rc = &re[base..base + LANES];
        let ic = &im[base..base + LANES];
        for l in 0..LANES {
            let inv = 1.0 / (u - mc[l]);
            acc_re[l] += rc[l] * inv;
            acc_im[l] += ic[l] * inv;
        }
    }
    let mut sum_re = (acc_re[0] + acc_re[1]) + (acc_re[2] + acc_re[3]);
    let mut sum_im = (acc_im[0] + acc_im[1]) + (acc_im[2] + acc_im[3]);
    for i in chunks * LANES..m.len() {
        let inv = 1.0 / (u - m[i]);
        sum_re += re[i] * inv;
        sum_im += im[i] * inv;
    }
    Complex64::new(sum_re, sum_im)
}

/// A function sampled once on the sinc nodes `m h`, ready to be transformed
/// at any number of points.
#[derive(Debug, Clone)]
pub struct SincNodes {
    step: f64,
    terms: i64,
    even: ParityPlane,
    odd: ParityPlane,
    /// `f(-Mh)` and `f(Mh)`.
    ends: (Complex64, Complex64),
    tail: f64,
}

impl SincNodes {
    pub fn sample<F>(f: F, params: HilbertParams) -> Self
    where
        F: Fn(f64) -> Complex64,
    {
        let terms = params.terms as i64;
        let mut even = ParityPlane::default();
        let mut odd = ParityPlane::default();
        for m in -terms..=terms {
            let v = f(m as f64 * params.step);
            if m % 2 == 0 {
                even.push(m, v);
            } else {
                odd.push(m, v);
            }
        }
        Self {
            step: params.step,
            terms,
            even,
            odd,
            ends: (f(-(terms as f64) * params.step), f(terms as f64 * params.step)),
            tail: 0.0,
        }
    }

    /// Extends the series past `|m| = M` with `f` held at the real even part
    /// of its end values, `e = Re(f(Mh) + f(-Mh)) / 2`, instead of zero.
    /// This matches how a [`crate::cf::SampledCf`] extrapolates, and removes
    /// the truncation error `~ e t / (pi M h)` for CFs that tend to an atom
    /// mass at the origin. A constant odd or imaginary tail has a divergent
    /// transform and is left out.
    pub fn with_held_tail(mut self) -> Self {
        self.tail = 0.5 * (self.ends.0 + self.ends.1).re;
        self
    }

    /// `sum_{|m| > M} e (1 - cos(pi (u - m))) / (pi (u - m))` in closed form.
    fn tail_sum(&self, u: f64) -> f64 {
        let big = self.terms as f64 + 1.0;
        if self.tail == 0.0 || u.abs() >= big - 1.0 {
            return 0.0;
        }
        // sum_{m > M} [1/(u - m) + 1/(u + m)]
        let plain = digamma(big - u) - digamma(big + u);
        // same with (-1)^m, via beta(a) = sum_j (-1)^j / (j + a)
        let beta = |a: f64| 0.5 * (digamma(0.5 * (a + 1.0)) - digamma(0.5 * a));
        let sign = if self.terms % 2 == 0 { -1.0 } else { 1.0 };
        let alternating = sign * (beta(big + u) - beta(big - u));
        self.tail / PI * (plain - (PI * u).cos() * alternating)
    }

    /// Truncated sinc-series approximation of `H(f)(t)`.
    pub fn transform(&self, t: f64) -> Complex64 {
        let u = t / self.step;
        let (s, c) = (0.5 * PI * u).sin_cos();
        let (w_even, w_odd) = (s * s, c * c);

        let mut skip_even = None;
        let mut skip_odd = None;
        if u.fract() == 0.0 && u.abs() <= self.terms as f64 {
            let m = u as i64;
            if m % 2 == 0 {
                skip_even = Some(self.even.index_of(m));
            } else {
                skip_odd = Some(self.odd.index_of(m));
            }
        }

        let even = self.even.kernel_sum(u, skip_even);
        let odd = self.odd.kernel_sum(u, skip_odd);
        (even * w_even + odd * w_odd) * FRAC_2_PI + self.tail_sum(u)
    }
}

/// Sinc-expansion Hilbert transform of `f` at `t`.
pub fn hilbert_sinc<F>(f: F, t: f64, params: HilbertParams) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    SincNodes::sample(f, params).transform(t)
}

/// `J_a(phi)(t) = (1 / 2 pi i) int e^{-i a eta} phi(t + eta) deta / eta`,
/// computed as `(i/2) H(tau -> e^{-i a (tau - t)} phi(tau))(t)`.
///
/// For `a = 0` this is exactly `(i/2) H(phi)(t)`.
pub fn j_operator<C: CharFn + ?Sized>(phi: &C, a: f64, t: f64, params: HilbertParams) -> Complex64 {
    let half_i = Complex64::new(0.0, 0.5);
    if a == 0.0 {
        return half_i * hilbert_sinc(|tau| phi.eval(tau), t, params);
    }
    half_i * hilbert_sinc(|tau| Complex64::from_polar(1.0, -a * (tau - t)) * phi.eval(tau), t, params)
}

/// A CDF value recovered by Gil-Pelaez inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfValue {
    /// Clamped to `[0, 1]`.
    pub probability: f64,
    /// `1/2 - (i/2) H(...)(0)` before clamping. The imaginary part should
    /// vanish for a Hermitian CF.
    pub raw: Complex64,
    /// Set by the caller when `x` is a known atom of the law; the value is
    /// then the midpoint of the jump rather than the CDF.
    pub at_discontinuity: bool,
}

impl CdfValue {
    pub fn flag_discontinuity(mut self, flag: bool) -> Self {
        self.at_discontinuity = flag;
        self
    }
}

/// `Phi(x) = 1/2 - (i/2) H(t -> e^{-itx} phi(t))(0)`.
///
/// At `t = 0` the even-node weight vanishes, so only odd nodes are read:
/// `H(g)(0) = -(2/pi) sum_{m odd} g(mh) / m`.
pub fn gil_pelaez_cdf<C: CharFn + ?Sized>(phi: &C, x: f64, params: HilbertParams) -> CdfValue {
    let h = params.step();
    let terms = params.terms() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut m = 1;
    while m <= terms {
        let t = m as f64 * h;
        let plus = Complex64::from_polar(1.0, -t * x) * phi.eval(t);
        let minus = Complex64::from_polar(1.0, t * x) * phi.eval(-t);
        acc += (plus - minus) / m as f64;
        m += 2;
    }
    let h_at_zero = -acc * FRAC_2_PI;
    let raw = Complex64::new(0.5, 0.0) - Complex64::new(0.0, 0.5) * h_at_zero;
    CdfValue {
        probability: raw.re.clamp(0.0, 1.0),
        raw,
        at_discontinuity: false,
    }
}
