//! Prediction distillation strategies for unlabeled examples.
//!
//! Every strategy is split into two phases. [`build_target`] computes the
//! stop-gradient part (target distribution, selection flag) from the current
//! prediction; [`loss_with_target`] evaluates the loss and its gradient with
//! respect to the logits while holding that target fixed. Gradient checks
//! freeze the first phase and differentiate the second.

use std::f64::consts::E;

use crate::error::{AdsError, Result};
use crate::probtransform::{
    descending_order, power_normalize, sharpen, sparsemax, Logits, Prediction, ProbDistribution, Transform,
};

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-8;

/// Floor applied to the argument of the negative-sampling logarithm.
pub const NS_SATURATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Minimum entropy.
    Me,
    /// Temperature sharpening.
    Sh,
    /// Thresholded pseudo-labeling.
    Pl,
    /// Negative sampling.
    Ns,
    /// Adaptive sharpening on the sparsemax output.
    Ads,
    None,
    /// Keep the top `m` probabilities, then power-sharpen.
    FixedTopM,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Me => "me",
            StrategyKind::Sh => "sh",
            StrategyKind::Pl => "pl",
            StrategyKind::Ns => "ns",
            StrategyKind::Ads => "ads",
            StrategyKind::None => "none",
            StrategyKind::FixedTopM => "topm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "me" => StrategyKind::Me,
            "sh" => StrategyKind::Sh,
            "pl" => StrategyKind::Pl,
            "ns" => StrategyKind::Ns,
            "ads" => StrategyKind::Ads,
            "none" => StrategyKind::None,
            "topm" | "fixed_top_m" => StrategyKind::FixedTopM,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Power used to build ADS and top-m targets.
    pub r: f64,
    /// Sharpening temperature.
    pub lambda: f64,
    pub tau_pl: f64,
    /// `None` means `1/K`, resolved per example.
    pub tau_ns: Option<f64>,
    pub m_fixed: usize,
    /// Transform the baseline strategies read from. ADS always uses sparsemax.
    pub transform: Transform,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Ads,
            r: 2.0,
            lambda: 0.5,
            tau_pl: 0.95,
            tau_ns: None,
            m_fixed: 2,
            transform: Transform::Softmax,
        }
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(AdsError::InvalidParameter(format!("r must be > 0, got {}", self.r)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(AdsError::InvalidParameter(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !open_unit(self.tau_pl) {
            return Err(AdsError::InvalidParameter(format!(
                "tau_pl must lie in (0, 1), got {}",
                self.tau_pl
            )));
        }
        if let Some(t) = self.tau_ns {
            if !open_unit(t) {
                return Err(AdsError::InvalidParameter(format!(
                    "tau_ns must lie in (0, 1), got {t}"
                )));
            }
        }
        if self.m_fixed == 0 {
            return Err(AdsError::InvalidParameter("m_fixed must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tau_ns_for(&self, k: usize) -> f64 {
        self.tau_ns.unwrap_or(1.0 / k as f64)
    }

    /// Transform actually fed to the strategy.
    pub fn effective_transform(&self) -> Transform {
        match self.kind {
            StrategyKind::Ads => Transform::Sparsemax,
            _ => self.transform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskReason {
    None,
    Determinate,
    Negligible,
    Ambiguous,
    BelowPlThreshold,
    NoNegatives,
}

/// Stop-gradient side of a distillation loss.
///
/// For negative sampling `q` is uniform over the classes that are *not*
/// negatives, so its support encodes the accepted set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillTarget {
    pub q: ProbDistribution,
    pub selected: bool,
    pub masked_reason: MaskReason,
}

impl DistillTarget {
    fn active(q: ProbDistribution) -> Self {
        DistillTarget {
            q,
            selected: true,
            masked_reason: MaskReason::None,
        }
    }

    fn masked(q: ProbDistribution, reason: MaskReason) -> Self {
        DistillTarget {
            q,
            selected: false,
            masked_reason: reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillResult {
    pub loss: f64,
    /// Cross-entropy part `-sum q_i log p_i`, the only term carrying gradient
    /// for target-based strategies. Equals `loss` for ME and NS.
    pub reduced_loss: f64,
    pub grad_logits: Vec<f64>,
    pub target: DistillTarget,
    /// Set when the negative-sampling mass hit the log floor.
    pub saturated: bool,
}

impl DistillResult {
    fn zero(k: usize, target: DistillTarget) -> Self {
        DistillResult {
            loss: 0.0,
            reduced_loss: 0.0,
            grad_logits: vec![0.0; k],
            target,
            saturated: false,
        }
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// `d/dp_i` of `-sum q_i log max(p_i, floor)`.
fn cross_entropy_grad(q: &ProbDistribution, p: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.len()];
    for &i in q.support() {
        if p[i] > LOG_FLOOR {
            g[i] = -q.probs()[i] / p[i];
        }
    }
    g
}

fn cross_entropy(q: &ProbDistribution, p: &[f64]) -> f64 {
    -q.support()
        .iter()
        .map(|&i| q.probs()[i] * clamped_ln(p[i]))
        .sum::<f64>()
}

fn kl_divergence(q: &ProbDistribution, p: &[f64]) -> f64 {
    q.support()
        .iter()
        .map(|&i| {
            let v = q.probs()[i];
            v * (v.ln() - clamped_ln(p[i]))
        })
        .sum()
}

/// Power-`r` target on a sparse prediction.
///
/// One-hot inputs are masked as determinate and a uniform input is returned
/// unchanged and marked ambiguous; both give zero loss.
pub fn ads_target(p_sparse: &ProbDistribution, r: f64) -> DistillTarget {
    if p_sparse.is_one_hot() {
        return DistillTarget::masked(p_sparse.clone(), MaskReason::Determinate);
    }
    if p_sparse.is_uniform() {
        return DistillTarget::masked(p_sparse.clone(), MaskReason::Ambiguous);
    }
    DistillTarget::active(power_normalize(p_sparse, r))
}

/// Keeps the `m` largest probabilities (ties to the lower index),
/// renormalizes and applies the power-`r` target.
pub fn fixed_topm_target(p: &ProbDistribution, m: usize, r: f64) -> Result<DistillTarget> {
    let k = p.num_classes();
    if m == 0 || m > k {
        return Err(AdsError::InvalidParameter(format!(
            "top-m needs 1 <= m <= K, got m={m}, K={k}"
        )));
    }
    let order = descending_order(p.probs());
    let mut kept = vec![0.0; k];
    let mass: f64 = order[..m].iter().map(|&i| p.probs()[i]).sum();
    for &i in &order[..m] {
        kept[i] = p.probs()[i] / mass;
    }
    let truncated = ProbDistribution::from_probs(kept);
    if truncated.is_one_hot() {
        return Ok(DistillTarget::masked(truncated, MaskReason::Determinate));
    }
    Ok(DistillTarget::active(power_normalize(&truncated, r)))
}

/// Builds the stop-gradient target for `cfg.kind` from a prediction.
pub fn build_target(pred: &Prediction, cfg: &StrategyConfig) -> Result<DistillTarget> {
    let p = &pred.dist;
    let k = p.num_classes();
    Ok(match cfg.kind {
        StrategyKind::None => DistillTarget::masked(p.clone(), MaskReason::None),
        StrategyKind::Me => DistillTarget::active(p.clone()),
        StrategyKind::Sh => DistillTarget::active(sharpen(p, cfg.lambda)?),
        StrategyKind::Pl => {
            let top = p.argmax();
            let q = ProbDistribution::one_hot(k, top);
            if p.probs()[top] < cfg.tau_pl {
                DistillTarget::masked(q, MaskReason::BelowPlThreshold)
            } else {
                DistillTarget::active(q)
            }
        }
        StrategyKind::Ns => {
            let tau = cfg.tau_ns_for(k);
            let accepted: Vec<bool> = p.probs().iter().map(|&v| !(v < tau)).collect();
            let n_accepted = accepted.iter().filter(|a| **a).count();
            if n_accepted == k {
                DistillTarget::masked(p.clone(), MaskReason::NoNegatives)
            } else {
                let w = 1.0 / n_accepted as f64;
                let q = accepted.iter().map(|&a| if a { w } else { 0.0 }).collect();
                DistillTarget::active(ProbDistribution::from_probs(q))
            }
        }
        StrategyKind::Ads => ads_target(p, cfg.r),
        StrategyKind::FixedTopM => fixed_topm_target(p, cfg.m_fixed, cfg.r)?,
    })
}

/// Loss and logit gradient for a prediction under a frozen target.
pub fn loss_with_target(pred: &Prediction, target: &DistillTarget, cfg: &StrategyConfig) -> DistillResult {
    let k = pred.dist.num_classes();
    if !target.selected {
        return DistillResult::zero(k, target.clone());
    }
    let p = pred.probs();
    match cfg.kind {
        StrategyKind::None => DistillResult::zero(k, target.clone()),
        StrategyKind::Me => {
            let mut loss = 0.0;
            let mut g = vec![0.0; k];
            for &i in pred.dist.support() {
                let lp = clamped_ln(p[i]);
                loss -= p[i] * lp;
                g[i] = if p[i] > LOG_FLOOR { -(lp + 1.0) } else { -lp };
            }
            DistillResult {
                loss,
                reduced_loss: loss,
                grad_logits: pred.pullback(&g),
                target: target.clone(),
                saturated: false,
            }
        }
        StrategyKind::Sh | StrategyKind::Pl => {
            let loss = cross_entropy(&target.q, p);
            DistillResult {
                loss,
                reduced_loss: loss,
                grad_logits: pred.pullback(&cross_entropy_grad(&target.q, p)),
                target: target.clone(),
                saturated: false,
            }
        }
        StrategyKind::Ns => {
            let negatives: Vec<usize> = (0..k).filter(|&i| !target.q.in_support(i)).collect();
            let neg_mass: f64 = negatives.iter().map(|&i| p[i]).sum();
            let arg = 1.0 - neg_mass;
            let saturated = arg < NS_SATURATION_FLOOR;
            if saturated {
                log::warn!("negative-sampling mass {neg_mass} saturates the log; clamping");
            }
            let loss = -arg.max(NS_SATURATION_FLOOR).ln();
            let mut g = vec![0.0; k];
            if !saturated {
                for &i in &negatives {
                    g[i] = 1.0 / arg;
                }
            }
            DistillResult {
                loss,
                reduced_loss: loss,
                grad_logits: pred.pullback(&g),
                target: target.clone(),
                saturated,
            }
        }
        StrategyKind::Ads | StrategyKind::FixedTopM => {
            let reduced = cross_entropy(&target.q, p);
            DistillResult {
                loss: kl_divergence(&target.q, p).max(0.0),
                reduced_loss: reduced,
                grad_logits: pred.pullback(&cross_entropy_grad(&target.q, p)),
                target: target.clone(),
                saturated: false,
            }
        }
    }
}

/// Runs both phases for the strategy in `cfg` starting from logits.
pub fn distill(z: &Logits, cfg: &StrategyConfig) -> Result<DistillResult> {
    let pred = Prediction::from_logits(z, cfg.effective_transform());
    let target = build_target(&pred, cfg)?;
    Ok(loss_with_target(&pred, &target, cfg))
}

fn require_softmax(pred: &Prediction, what: &str) -> Result<()> {
    if pred.transform != Transform::Softmax {
        return Err(AdsError::InvalidInput(format!(
            "{what} expects a softmax prediction; compose sparse inputs through `distill`"
        )));
    }
    Ok(())
}

/// Entropy `-sum p_i log p_i`, differentiated through the prediction.
pub fn me_loss(pred: &Prediction) -> Result<DistillResult> {
    require_softmax(pred, "me_loss")?;
    let cfg = StrategyConfig::new(StrategyKind::Me);
    let target = build_target(pred, &cfg)?;
    Ok(loss_with_target(pred, &target, &cfg))
}

/// Cross-entropy against the sharpened, stop-gradient prediction.
pub fn sh_loss(pred: &Prediction, cfg: &StrategyConfig) -> Result<DistillResult> {
    let cfg = StrategyConfig {
        kind: StrategyKind::Sh,
        ..cfg.clone()
    };
    let target = build_target(pred, &cfg)?;
    Ok(loss_with_target(pred, &target, &cfg))
}

/// `-log p_argmax` when `max p >= tau_pl`, otherwise masked.
pub fn pl_loss(pred: &Prediction, cfg: &StrategyConfig) -> Result<DistillResult> {
    let cfg = StrategyConfig {
        kind: StrategyKind::Pl,
        ..cfg.clone()
    };
    let target = build_target(pred, &cfg)?;
    Ok(loss_with_target(pred, &target, &cfg))
}

/// `-log(1 - sum of probabilities below tau_ns)`.
pub fn ns_loss(pred: &Prediction, cfg: &StrategyConfig) -> Result<DistillResult> {
    let cfg = StrategyConfig {
        kind: StrategyKind::Ns,
        ..cfg.clone()
    };
    let target = build_target(pred, &cfg)?;
    Ok(loss_with_target(pred, &target, &cfg))
}

/// `KL(q || sparsemax(z))` with `q` the power-`r` target of the sparse
/// prediction.
pub fn ads_loss(z: &Logits, cfg: &StrategyConfig) -> DistillResult {
    let cfg = StrategyConfig {
        kind: StrategyKind::Ads,
        ..cfg.clone()
    };
    let pred = Prediction {
        dist: sparsemax(z).dist,
        transform: Transform::Sparsemax,
    };
    let target = ads_target(&pred.dist, cfg.r);
    loss_with_target(&pred, &target, &cfg)
}

/// Interval a single probability falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionClass {
    Negligible,
    Ambiguous,
    Informed,
    Determinate,
}

/// Labels every coordinate of `p` as negligible (`< theta1`), ambiguous
/// (exactly `1/K`), determinate (`> theta2`) or informed.
pub fn classify_prediction(p: &ProbDistribution, theta1: f64, theta2: f64) -> Result<Vec<PredictionClass>> {
    if !(theta1 > 0.0 && theta2 < 1.0 && theta1 < theta2) {
        return Err(AdsError::InvalidParameter(format!(
            "need 0 < theta1 < theta2 < 1, got theta1={theta1}, theta2={theta2}"
        )));
    }
    let ambiguous = 1.0 / p.num_classes() as f64;
    Ok(p.probs()
        .iter()
        .map(|&v| {
            if v == ambiguous {
                PredictionClass::Ambiguous
            } else if v < theta1 {
                PredictionClass::Negligible
            } else if v > theta2 {
                PredictionClass::Determinate
            } else {
                PredictionClass::Informed
            }
        })
        .collect())
}

/// `p_(1) >= e * p_(2)`: the softmax prediction is already confident enough
/// that sparsemax of the same logits is one-hot.
pub fn theorem1_predicate(p_softmax: &ProbDistribution) -> bool {
    let (first, second) = p_softmax.top_two();
    first >= E * second
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingBounds {
    pub theta1_lo: f64,
    pub theta1_hi: f64,
    pub theta2_lo: f64,
    pub theta2_hi: f64,
}

/// Range of the sample-dependent softmax thresholds beyond which ADS masks a
/// prediction, for `K` classes and `rho` nonzero sparsemax coordinates.
pub fn corollary1_bounds(k: usize, rho: usize) -> Result<MaskingBounds> {
    if k < 2 {
        return Err(AdsError::InvalidParameter(format!("K must be >= 2, got {k}")));
    }
    if rho == 0 || rho >= k {
        return Err(AdsError::InvalidParameter(format!(
            "rho must satisfy 1 <= rho < K, got rho={rho}, K={k}"
        )));
    }
    let kf = k as f64;
    let rf = rho as f64;
    let er = E.powi(rho as i32);
    let theta1_hi = E / (E + 1.0);
    let theta2_hi = er / (rf + er);
    // the two ends coincide for K = 2 (resp. rho = K - 1) up to rounding
    Ok(MaskingBounds {
        theta1_lo: (E / (E + kf - 1.0)).min(theta1_hi),
        theta1_hi,
        theta2_lo: (er / (rf + er * (kf - rf))).min(theta2_hi),
        theta2_hi,
    })
}

/// Softmax max-probability at which this sample's own ADS mask switches on.
///
/// Keeping the ratios `p_(j) / p_(2)` for `j >= 2` fixed, the sample becomes
/// one-hot under sparsemax exactly when `p_(1) = e p_(2)`, which gives
/// `e / (e + sum_{j>=2} p_(j) / p_(2))`.
pub fn sample_masking_threshold(p_softmax: &ProbDistribution) -> f64 {
    let order = descending_order(p_softmax.probs());
    let second = p_softmax.probs()[order[1]];
    let ratio_sum: f64 = order[1..].iter().map(|&i| p_softmax.probs()[i] / second).sum();
    E / (E + ratio_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probtransform::softmax;

    fn dist(v: &[f64]) -> ProbDistribution {
        ProbDistribution::new(v.to_vec()).unwrap()
    }

    fn soft(v: &[f64]) -> Prediction {
        Prediction {
            dist: dist(v),
            transform: Transform::Softmax,
        }
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn me_examples() {
        let r = me_loss(&soft(&[0.1; 10])).unwrap();
        close(r.loss, 10f64.ln(), 1e-12);
        assert!(r.grad_logits.iter().all(|g| g.abs() < 1e-15));
        let r = me_loss(&soft(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(r.loss, 0.0);
        close(me_loss(&soft(&[0.7, 0.3])).unwrap().loss, 0.6108643020548935, 1e-12);
    }

    #[test]
    fn me_rejects_sparse_predictions() {
        let pred = Prediction {
            dist: dist(&[0.75, 0.25, 0.0]),
            transform: Transform::Sparsemax,
        };
        assert!(me_loss(&pred).is_err());
        let cfg = StrategyConfig {
            kind: StrategyKind::Me,
            transform: Transform::Sparsemax,
            ..Default::default()
        };
        let r = distill(&Logits::new(vec![0.5, 0.0, -1.0]).unwrap(), &cfg).unwrap();
        close(r.loss, -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()), 1e-12);
    }

    #[test]
    fn sh_examples() {
        let cfg = StrategyConfig::default();
        let r = sh_loss(&soft(&[0.25; 4]), &cfg).unwrap();
        assert_eq!(r.target.q.probs(), &[0.25; 4]);
        assert!(r.grad_logits.iter().all(|g| g.abs() < 1e-15));

        let r = sh_loss(&soft(&[0.5, 0.25, 0.25]), &cfg).unwrap();
        let q = r.target.q.probs();
        close(q[0], 2.0 / 3.0, 1e-15);
        close(q[1], 1.0 / 6.0, 1e-15);
        close(r.loss, 0.9241962407465937, 1e-12);

        let bad = StrategyConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(sh_loss(&soft(&[0.5, 0.5]), &bad).is_err());
    }

    #[test]
    fn pl_examples() {
        let cfg = StrategyConfig::default();
        let r = pl_loss(&soft(&[0.97, 0.02, 0.01]), &cfg).unwrap();
        assert_eq!(r.target.q.probs(), &[1.0, 0.0, 0.0]);
        close(r.loss, 0.030459207484708574, 1e-12);

        let r = pl_loss(&soft(&[0.7, 0.3]), &cfg).unwrap();
        assert!(!r.target.selected);
        assert_eq!(r.target.masked_reason, MaskReason::BelowPlThreshold);
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.grad_logits, vec![0.0, 0.0]);

        let r = pl_loss(&soft(&[0.0, 1.0]), &cfg).unwrap();
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn pl_ties_pick_lowest_index() {
        let cfg = StrategyConfig {
            tau_pl: 0.4,
            ..Default::default()
        };
        let r = pl_loss(&soft(&[0.1, 0.45, 0.45]), &cfg).unwrap();
        assert_eq!(r.target.q.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn ns_examples() {
        let cfg = StrategyConfig {
            tau_ns: Some(0.15),
            ..Default::default()
        };
        let r = ns_loss(&soft(&[0.7, 0.2, 0.1]), &cfg).unwrap();
        close(r.loss, 0.10536051565782628, 1e-12);
        assert_eq!(r.target.q.support(), &[0, 1]);

        let r = ns_loss(&soft(&[0.4, 0.3, 0.3]), &cfg).unwrap();
        assert!(!r.target.selected);
        assert_eq!(r.target.masked_reason, MaskReason::NoNegatives);
        assert_eq!(r.loss, 0.0);

        // default threshold 1/K leaves a uniform prediction untouched
        let r = ns_loss(&soft(&[0.25; 4]), &StrategyConfig::default()).unwrap();
        assert!(!r.target.selected);
    }

    #[test]
    fn ns_saturation_is_clamped() {
        let pred = soft(&[1e-14, 0.5, 0.5 - 1e-14]);
        let target = DistillTarget::active(ProbDistribution::one_hot(3, 0));
        let cfg = StrategyConfig::new(StrategyKind::Ns);
        let r = loss_with_target(&pred, &target, &cfg);
        assert!(r.saturated);
        close(r.loss, -(1e-12f64).ln(), 1e-9);
        assert!(r.grad_logits.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn ads_target_examples() {
        let t = ads_target(&dist(&[0.75, 0.25, 0.0]), 2.0);
        close(t.q.probs()[0], 0.9, 1e-15);
        close(t.q.probs()[1], 0.1, 1e-15);
        assert_eq!(t.q.probs()[2], 0.0);
        assert!(t.selected);

        let t = ads_target(&dist(&[1.0, 0.0, 0.0]), 2.0);
        assert_eq!(t.q.probs(), &[1.0, 0.0, 0.0]);
        assert!(!t.selected);
        assert_eq!(t.masked_reason, MaskReason::Determinate);

        let u = ProbDistribution::uniform(5);
        assert_eq!(ads_target(&u, 2.0).q, u);
    }

    #[test]
    fn ads_loss_examples() {
        let z = Logits::new(vec![0.5, 0.0, -1.0]).unwrap();
        let r = ads_loss(&z, &StrategyConfig::default());
        let expected = 0.9 * (0.9f64 / 0.75).ln() + 0.1 * (0.1f64 / 0.25).ln();
        close(r.loss, expected, 1e-12);
        close(r.loss, 0.07246032792714363, 1e-12);

        // p = (0.8, 0.2) under softmax: 0.8 >= e * 0.2
        let z = Logits::new(vec![4f64.ln(), 0.0]).unwrap();
        assert!(theorem1_predicate(&softmax(&z)));
        let r = ads_loss(&z, &StrategyConfig::default());
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.grad_logits, vec![0.0, 0.0]);
    }

    #[test]
    fn ads_zero_at_ratio_e() {
        let z = Logits::new(vec![1.0, 0.0, -1.0, -0.5]).unwrap();
        let p = softmax(&z);
        assert!(theorem1_predicate(&p));
        assert_eq!(ads_loss(&z, &StrategyConfig::default()).loss, 0.0);
    }

    #[test]
    fn classify_examples() {
        use PredictionClass::*;
        assert_eq!(
            classify_prediction(&dist(&[0.5, 0.5]), 0.1, 0.9).unwrap(),
            vec![Ambiguous, Ambiguous]
        );
        assert_eq!(
            classify_prediction(&dist(&[0.95, 0.05]), 0.1, 0.9).unwrap(),
            vec![Determinate, Negligible]
        );
        assert_eq!(
            classify_prediction(&dist(&[0.6, 0.4]), 0.1, 0.9).unwrap(),
            vec![Informed, Informed]
        );
        assert!(classify_prediction(&dist(&[0.6, 0.4]), 0.9, 0.1).is_err());
        assert!(classify_prediction(&dist(&[0.6, 0.4]), 0.5, 0.5).is_err());
    }

    #[test]
    fn theorem1_predicate_examples() {
        assert!(theorem1_predicate(&dist(&[0.8, 0.2])));
        assert!(!theorem1_predicate(&dist(&[0.6, 0.4])));
        let u = ProbDistribution::uniform(4);
        assert!(!theorem1_predicate(&u));
        let z = Logits::new(vec![0.3; 4]).unwrap();
        assert_eq!(ads_loss(&z, &StrategyConfig::default()).loss, 0.0);
    }

    #[test]
    fn masking_bound_examples() {
        let b = corollary1_bounds(2, 1).unwrap();
        close(b.theta1_lo, b.theta1_hi, 1e-12);
        close(b.theta1_lo, 0.7310585786300049, 1e-15);
        close(corollary1_bounds(10, 1).unwrap().theta1_lo, 0.23196931668407395, 1e-15);
        close(corollary1_bounds(3, 2).unwrap().theta2_hi, 0.7869860421615985, 1e-15);
        assert!(corollary1_bounds(3, 3).is_err());
        assert!(corollary1_bounds(3, 0).is_err());
        for k in 2..12 {
            for rho in 1..k {
                let b = corollary1_bounds(k, rho).unwrap();
                assert!(b.theta1_lo <= b.theta1_hi && b.theta2_lo <= b.theta2_hi);
            }
        }
    }

    #[test]
    fn topm_examples() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let t = fixed_topm_target(&p, 2, 2.0).unwrap();
        close(t.q.probs()[0], 25.0 / 34.0, 1e-15);
        close(t.q.probs()[1], 9.0 / 34.0, 1e-15);
        assert_eq!(t.q.probs()[2], 0.0);

        let full = fixed_topm_target(&p, 3, 2.0).unwrap();
        assert_eq!(full.q, ads_target(&p, 2.0).q);

        let one = fixed_topm_target(&p, 1, 2.0).unwrap();
        assert_eq!(one.q.probs(), &[1.0, 0.0, 0.0]);
        assert!(fixed_topm_target(&p, 4, 2.0).is_err());
    }

    #[test]
    fn masked_targets_have_zero_gradient() {
        let z = Logits::new(vec![3.0, 0.2, -1.0]).unwrap();
        for kind in [
            StrategyKind::None,
            StrategyKind::Pl,
            StrategyKind::Ns,
            StrategyKind::Ads,
            StrategyKind::FixedTopM,
        ] {
            let cfg = StrategyConfig {
                kind,
                tau_pl: 0.99,
                tau_ns: Some(0.001),
                m_fixed: 1,
                ..Default::default()
            };
            let r = distill(&z, &cfg).unwrap();
            assert!(!r.target.selected, "{kind:?}");
            assert_eq!(r.loss, 0.0);
            assert!(r.grad_logits.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn config_validation() {
        assert!(StrategyConfig::default().validate().is_ok());
        for bad in [
            StrategyConfig {
                r: 0.0,
                ..Default::default()
            },
            StrategyConfig {
                lambda: -1.0,
                ..Default::default()
            },
            StrategyConfig {
                tau_pl: 1.0,
                ..Default::default()
            },
            StrategyConfig {
                tau_ns: Some(0.0),
                ..Default::default()
            },
            StrategyConfig {
                m_fixed: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
