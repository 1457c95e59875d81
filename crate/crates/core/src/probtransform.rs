//! Maps from logits to the probability simplex.
//!
//! Softmax is dense; sparsemax is the Euclidean projection onto the simplex
//! and zeroes every coordinate below its soft threshold `tau`. Both expose a
//! vector-Jacobian product so losses can be pulled back to the logits.

use std::cmp::Ordering;

use crate::error::{AdsError, Result};

/// Tolerance used when checking that a vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Raw network scores for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(AdsError::InvalidInput(format!(
                "logits need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AdsError::InvalidInput(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Logits(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A point on the probability simplex together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDistribution {
    probs: Vec<f64>,
    support: Vec<usize>,
}

impl ProbDistribution {
    /// Validates `probs` and records its support.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(AdsError::InvalidInput("empty distribution".into()));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(AdsError::InvalidInput(format!(
                "probability {i} is negative or not finite ({})",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(AdsError::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self::from_probs(probs))
    }

    /// Builds a distribution from values already known to be on the simplex.
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        let support = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
            .collect();
        ProbDistribution { probs, support }
    }

    pub fn uniform(k: usize) -> Self {
        Self::from_probs(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[class] = 1.0;
        Self::from_probs(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn in_support(&self, i: usize) -> bool {
        self.probs[i] > 0.0
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// The two largest coordinates `(p_(1), p_(2))`.
    pub fn top_two(&self) -> (f64, f64) {
        let mut first = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &p in &self.probs {
            if p > first {
                second = first;
                first = p;
            } else if p > second {
                second = p;
            }
        }
        (first, second)
    }

    pub fn is_one_hot(&self) -> bool {
        self.support.len() == 1
    }

    /// Every coordinate carries the same mass (`1/K` up to rounding).
    pub fn is_uniform(&self) -> bool {
        self.probs.iter().all(|&p| p == self.probs[0])
    }

    /// Equal mass on every support coordinate.
    pub fn is_flat_on_support(&self) -> bool {
        let first = self.probs[self.support[0]];
        self.support.iter().all(|&i| self.probs[i] == first)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Which map from logits to the simplex is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Softmax,
    Sparsemax,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Softmax => "softmax",
            Transform::Sparsemax => "sparsemax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax" => Some(Transform::Softmax),
            "sparsemax" => Some(Transform::Sparsemax),
            _ => None,
        }
    }
}

/// Dense exponential normalization, stabilized by subtracting `max(z)`.
pub fn softmax(z: &Logits) -> ProbDistribution {
    let z = z.as_slice();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbDistribution::from_probs(exps.into_iter().map(|e| e / sum).collect())
}

/// Output of [`sparsemax`]: the projected distribution and its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsemaxSolution {
    pub dist: ProbDistribution,
    pub tau: f64,
    pub k_support: usize,
}

/// Sort order used by sparsemax: descending value, ties by ascending index.
pub(crate) fn descending_order(z: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Euclidean projection of `z` onto the simplex.
///
/// The support size is the largest `k` with `1 + k z_(k) > sum_{j<=k} z_(j)`
/// and the threshold is `tau = (sum_{j<=k} z_(j) - 1) / k`.
pub fn sparsemax(z: &Logits) -> SparsemaxSolution {
    let z = z.as_slice();
    let order = descending_order(z);

    let mut cumsum = 0.0;
    let mut k = 1;
    let mut k_cumsum = z[order[0]];
    for (j, &idx) in order.iter().enumerate() {
        cumsum += z[idx];
        let rank = (j + 1) as f64;
        if 1.0 + rank * z[idx] > cumsum {
            k = j + 1;
            k_cumsum = cumsum;
        }
    }

    let mut tau = (k_cumsum - 1.0) / k as f64;
    // Rounding can leave the last kept coordinate at or below tau; shrink the
    // support until every kept coordinate is strictly positive.
    while k > 1 && z[order[k - 1]] - tau <= 0.0 {
        k_cumsum -= z[order[k - 1]];
        k -= 1;
        tau = (k_cumsum - 1.0) / k as f64;
    }

    let mut probs = vec![0.0; z.len()];
    for &idx in &order[..k] {
        probs[idx] = z[idx] - tau;
    }
    SparsemaxSolution {
        dist: ProbDistribution::from_probs(probs),
        tau,
        k_support: k,
    }
}

/// Dense Jacobian of sparsemax at a solution:
/// `J_ij = [i in S] (delta_ij - [j in S] / |S|)`.
pub fn sparsemax_jacobian(sol: &SparsemaxSolution) -> Vec<Vec<f64>> {
    let k = sol.dist.num_classes();
    let inv = 1.0 / sol.dist.support().len() as f64;
    let mut jac = vec![vec![0.0; k]; k];
    for &i in sol.dist.support() {
        for &j in sol.dist.support() {
            jac[i][j] = if i == j { 1.0 - inv } else { -inv };
        }
    }
    jac
}

/// `J^T g` for sparsemax; `J` is symmetric so this also serves as `J g`.
pub fn sparsemax_vjp(dist: &ProbDistribution, upstream: &[f64]) -> Vec<f64> {
    let support = dist.support();
    let mean = support.iter().map(|&i| upstream[i]).sum::<f64>() / support.len() as f64;
    let mut out = vec![0.0; upstream.len()];
    for &i in support {
        out[i] = upstream[i] - mean;
    }
    out
}

/// `J^T g` for softmax, `J = diag(p) - p p^T`.
pub fn softmax_vjp(dist: &ProbDistribution, upstream: &[f64]) -> Vec<f64> {
    let p = dist.probs();
    let dot: f64 = p.iter().zip(upstream).map(|(a, b)| a * b).sum();
    p.iter().zip(upstream).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// A transformed prediction that remembers how to pull gradients back to
/// the logits it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dist: ProbDistribution,
    pub transform: Transform,
}

impl Prediction {
    pub fn from_logits(z: &Logits, transform: Transform) -> Self {
        let dist = match transform {
            Transform::Softmax => softmax(z),
            Transform::Sparsemax => sparsemax(z).dist,
        };
        Prediction { dist, transform }
    }

    pub fn probs(&self) -> &[f64] {
        self.dist.probs()
    }

    /// Chains `dL/dp` into `dL/dz`.
    pub fn pullback(&self, grad_probs: &[f64]) -> Vec<f64> {
        match self.transform {
            Transform::Softmax => softmax_vjp(&self.dist, grad_probs),
            Transform::Sparsemax => sparsemax_vjp(&self.dist, grad_probs),
        }
    }
}

/// Temperature sharpening `p_i^(1/lambda) / sum_j p_j^(1/lambda)`.
///
/// Zero coordinates stay zero. Powers are taken relative to the largest
/// coordinate so small temperatures do not underflow the whole vector.
pub fn sharpen(p: &ProbDistribution, lambda: f64) -> Result<ProbDistribution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(AdsError::InvalidParameter(format!(
            "sharpening temperature must be positive, got {lambda}"
        )));
    }
    if lambda == 1.0 {
        return Ok(p.clone());
    }
    Ok(power_normalize(p, 1.0 / lambda))
}

/// `p_i^power / sum_j p_j^power` over the support of `p`.
pub(crate) fn power_normalize(p: &ProbDistribution, power: f64) -> ProbDistribution {
    let (max, _) = p.top_two();
    let raised: Vec<f64> = p
        .probs()
        .iter()
        .map(|&v| if v > 0.0 { (v / max).powf(power) } else { 0.0 })
        .collect();
    let sum: f64 = raised.iter().sum();
    ProbDistribution::from_probs(raised.into_iter().map(|v| v / sum).collect())
}

/// First coordinate of `sparsemax((u, 0))` written as a function of
/// `s = softmax_1((u, 0))`.
pub fn binary_sparsemax_of_softmax(s: f64) -> f64 {
    let e = std::f64::consts::E;
    if s > e / (e + 1.0) {
        1.0
    } else if s < 1.0 / (e + 1.0) {
        0.0
    } else {
        ((s / (1.0 - s)).ln() + 1.0) / 2.0
    }
}
