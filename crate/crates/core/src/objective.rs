//! Total semi-supervised objective `J = J_S + alpha J_C + beta J_D`.
//!
//! Each training step first freezes everything that is treated as a constant
//! during differentiation (consistency anchors, perturbations, distillation
//! targets) and then evaluates losses and backpropagates with those frozen.
//! Gradient audits reuse the second half directly.

use rand::Rng;

use crate::data::{augment, random_unit_vector, AugmentKind};
use crate::distill::{build_target, loss_with_target, DistillTarget, StrategyConfig, StrategyKind, LOG_FLOOR};
use crate::error::{AdsError, Result};
use crate::net::{Gradients, Net};
use crate::probtransform::{softmax, sparsemax, Logits, Prediction, ProbDistribution, Transform};

/// Probe scale for the single VAT power iteration.
pub const VAT_XI: f64 = 1e-6;

/// Below this norm the VAT gradient is treated as zero.
pub const VAT_MIN_GRAD_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Kl,
    L2,
}

impl Distance {
    pub fn name(self) -> &'static str {
        match self {
            Distance::Kl => "kl",
            Distance::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kl" => Some(Distance::Kl),
            "l2" => Some(Distance::L2),
            _ => None,
        }
    }
}

/// Source of the perturbed counterpart in the consistency term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    Vat,
    Jitter,
    Shift,
}

impl Perturbation {
    pub fn name(self) -> &'static str {
        match self {
            Perturbation::Vat => "vat",
            Perturbation::Jitter => "jitter",
            Perturbation::Shift => "shift",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vat" => Some(Perturbation::Vat),
            "jitter" => Some(Perturbation::Jitter),
            "shift" => Some(Perturbation::Shift),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub consistency_dist: Distance,
    /// Perturbation scale; also the augmentation magnitude for jitter/shift.
    pub epsilon_vat: f64,
    pub consistency_transform: Transform,
    /// Softmax gives cross-entropy, sparsemax gives the sparsemax loss.
    pub supervised_transform: Transform,
    pub perturbation: Perturbation,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 1.0,
            beta: 1.0,
            consistency_dist: Distance::Kl,
            epsilon_vat: 0.5,
            consistency_transform: Transform::Softmax,
            supervised_transform: Transform::Softmax,
            perturbation: Perturbation::Vat,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(AdsError::InvalidParameter(format!(
                "loss weights must be non-negative, got alpha={}, beta={}",
                self.alpha, self.beta
            )));
        }
        if self.alpha > 0.0 && !(self.epsilon_vat > 0.0 && self.epsilon_vat.is_finite()) {
            return Err(AdsError::InvalidParameter(format!(
                "perturbation scale must be > 0 when consistency is on, got {}",
                self.epsilon_vat
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub j_s: f64,
    pub j_c: f64,
    pub j_d: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(j_s: f64, j_c: f64, j_d: f64, cfg: &ObjectiveConfig) -> Self {
        LossBreakdown {
            j_s,
            j_c,
            j_d,
            total: j_s + cfg.alpha * j_c + cfg.beta * j_d,
        }
    }
}

fn one_hot_label(y: &[f64]) -> Result<usize> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    let zeros = y.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != y.len() {
        return Err(AdsError::InvalidInput(format!("label vector {y:?} is not one-hot")));
    }
    Ok(y.iter().position(|&v| v == 1.0).expect("one entry is 1"))
}

/// `1/2 (||y - z||^2 - ||sparsemax(z) - z||^2)` with gradient
/// `sparsemax(z) - y`.
pub fn supervised_sparsemax_loss(z: &Logits, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y.len() != z.len() {
        return Err(AdsError::InvalidInput(format!(
            "label has {} classes, logits have {}",
            y.len(),
            z.len()
        )));
    }
    one_hot_label(y)?;
    let p = sparsemax(z).dist;
    let zs = z.as_slice();
    let sq = |a: &[f64]| a.iter().zip(zs).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    let loss = 0.5 * (sq(y) - sq(p.probs()));
    let grad = p.probs().iter().zip(y).map(|(pi, yi)| pi - yi).collect();
    Ok((loss.max(0.0), grad))
}

/// `-log softmax_y(z)` with gradient `softmax(z) - e_y`.
pub fn cross_entropy_loss(z: &Logits, label: usize) -> (f64, Vec<f64>) {
    let p = softmax(z);
    let loss = -p.probs()[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = p.into_vec();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Supervised term for one labeled example.
pub fn supervised_loss(z: &Logits, label: usize, transform: Transform) -> Result<(f64, Vec<f64>)> {
    if label >= z.len() {
        return Err(AdsError::InvalidInput(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    match transform {
        Transform::Softmax => Ok(cross_entropy_loss(z, label)),
        Transform::Sparsemax => {
            let mut y = vec![0.0; z.len()];
            y[label] = 1.0;
            supervised_sparsemax_loss(z, &y)
        }
    }
}

/// Consistency between a frozen anchor distribution and the prediction for
/// `z_prime`; the gradient is with respect to `z_prime`.
pub fn consistency_against_anchor(
    anchor: &ProbDistribution,
    z_prime: &Logits,
    cfg: &ObjectiveConfig,
) -> (f64, Vec<f64>) {
    let pred = Prediction::from_logits(z_prime, cfg.consistency_transform);
    let q = pred.probs();
    let a = anchor.probs();
    let (loss, grad_probs) = match cfg.consistency_dist {
        Distance::Kl => {
            let mut loss = 0.0;
            let mut g = vec![0.0; q.len()];
            for &i in anchor.support() {
                loss += a[i] * (a[i].ln() - q[i].max(LOG_FLOOR).ln());
                if q[i] > LOG_FLOOR {
                    g[i] = -a[i] / q[i];
                }
            }
            (loss.max(0.0), g)
        }
        Distance::L2 => {
            let diff: Vec<f64> = q.iter().zip(a).map(|(x, y)| x - y).collect();
            (0.5 * diff.iter().map(|d| d * d).sum::<f64>(), diff)
        }
    };
    (loss, pred.pullback(&grad_probs))
}

/// `Dist(T(z), T(z'))` with `z` as the stop-gradient anchor.
pub fn consistency_loss(z: &Logits, z_prime: &Logits, cfg: &ObjectiveConfig) -> Result<(f64, Vec<f64>)> {
    if z.len() != z_prime.len() {
        return Err(AdsError::InvalidInput(
            "consistency pair has mismatched class counts".into(),
        ));
    }
    let anchor = Prediction::from_logits(z, cfg.consistency_transform).dist;
    Ok(consistency_against_anchor(&anchor, z_prime, cfg))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Adversarial direction `epsilon g / ||g||` where `g` is the input gradient
/// of the consistency distance at a random probe `x + xi d`.
pub fn vat_perturbation<R: Rng + ?Sized>(x: &[f64], net: &Net, cfg: &ObjectiveConfig, rng: &mut R) -> Result<Vec<f64>> {
    let anchor = Prediction::from_logits(&net.forward(x)?, cfg.consistency_transform).dist;
    vat_from_anchor(x, &anchor, net, cfg, rng)
}

fn vat_from_anchor<R: Rng + ?Sized>(
    x: &[f64],
    anchor: &ProbDistribution,
    net: &Net,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = random_unit_vector(x.len(), rng);
    let probe: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + VAT_XI * b).collect();
    let trace = net.forward_trace(&probe)?;
    let z_probe = Logits::new(trace.logits().to_vec())?;
    let (_, grad_z) = consistency_against_anchor(anchor, &z_probe, cfg);
    let (_, g) = net.backward(&trace, &grad_z)?;
    let g_norm = norm(&g);
    let eps = cfg.epsilon_vat;
    if g_norm < VAT_MIN_GRAD_NORM {
        return Ok(d.into_iter().map(|v| eps * v).collect());
    }
    Ok(g.into_iter().map(|v| eps * v / g_norm).collect())
}

/// One step's worth of examples.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub labeled: &'a [(&'a [f64], usize)],
    pub unlabeled: &'a [&'a [f64]],
}

/// Stop-gradient quantities of one step, aligned with `Batch::unlabeled`.
/// Consistency fields are empty when `alpha = 0`; targets are empty when
/// distillation is off.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStep {
    pub anchors: Vec<ProbDistribution>,
    pub perturbed: Vec<Vec<f64>>,
    pub targets: Vec<DistillTarget>,
}

fn distillation_active(strategy: &StrategyConfig, cfg: &ObjectiveConfig) -> bool {
    cfg.beta > 0.0 && strategy.kind != StrategyKind::None
}

fn check_batch(batch: &Batch<'_>) -> Result<()> {
    if batch.labeled.is_empty() {
        return Err(AdsError::Config("labeled batch is empty".into()));
    }
    Ok(())
}

/// Computes anchors, perturbations and distillation targets at the current
/// parameters.
pub fn freeze_step<R: Rng + ?Sized>(
    batch: &Batch<'_>,
    strategy: &StrategyConfig,
    cfg: &ObjectiveConfig,
    net: &Net,
    rng: &mut R,
) -> Result<FrozenStep> {
    check_batch(batch)?;
    let mut frozen = FrozenStep {
        anchors: Vec::new(),
        perturbed: Vec::new(),
        targets: Vec::new(),
    };
    let consistency = cfg.alpha > 0.0;
    let distill = distillation_active(strategy, cfg);
    if !consistency && !distill {
        return Ok(frozen);
    }
    for &x in batch.unlabeled {
        let z = net.forward(x)?;
        if consistency {
            let anchor = Prediction::from_logits(&z, cfg.consistency_transform).dist;
            let perturbed = match cfg.perturbation {
                Perturbation::Vat => {
                    let r = vat_from_anchor(x, &anchor, net, cfg, rng)?;
                    x.iter().zip(r).map(|(a, b)| a + b).collect()
                }
                Perturbation::Jitter => augment(x, AugmentKind::GaussianJitter, cfg.epsilon_vat, rng),
                Perturbation::Shift => augment(x, AugmentKind::FeatureShift, cfg.epsilon_vat, rng),
            };
            frozen.anchors.push(anchor);
            frozen.perturbed.push(perturbed);
        }
        if distill {
            let pred = Prediction::from_logits(&z, strategy.effective_transform());
            frozen.targets.push(build_target(&pred, strategy)?);
        }
    }
    Ok(frozen)
}

/// Batch-averaged losses and parameter gradients with every stop-gradient
/// quantity taken from `frozen`.
pub fn objective_with_frozen(
    batch: &Batch<'_>,
    strategy: &StrategyConfig,
    cfg: &ObjectiveConfig,
    net: &Net,
    frozen: &FrozenStep,
) -> Result<(LossBreakdown, Gradients)> {
    check_batch(batch)?;
    let mut grads = Gradients::zeros_like(net);

    let n_l = batch.labeled.len() as f64;
    let mut j_s = 0.0;
    for &(x, y) in batch.labeled {
        let trace = net.forward_trace(x)?;
        let z = Logits::new(trace.logits().to_vec())?;
        let (loss, g) = supervised_loss(&z, y, cfg.supervised_transform)?;
        j_s += loss;
        let (pg, _) = net.backward(&trace, &g)?;
        grads.add_scaled(&pg, 1.0 / n_l);
    }
    j_s /= n_l;

    let consistency = cfg.alpha > 0.0;
    let distill = distillation_active(strategy, cfg);
    let mut j_c = 0.0;
    let mut j_d = 0.0;
    if !batch.unlabeled.is_empty() && (consistency || distill) {
        let n_u = batch.unlabeled.len() as f64;
        if (consistency && frozen.anchors.len() != batch.unlabeled.len())
            || (distill && frozen.targets.len() != batch.unlabeled.len())
        {
            return Err(AdsError::State("frozen step does not match the batch".into()));
        }
        for (i, &x) in batch.unlabeled.iter().enumerate() {
            if distill {
                let trace = net.forward_trace(x)?;
                let z = Logits::new(trace.logits().to_vec())?;
                let pred = Prediction::from_logits(&z, strategy.effective_transform());
                let r = loss_with_target(&pred, &frozen.targets[i], strategy);
                j_d += r.loss;
                if r.target.selected {
                    let (pg, _) = net.backward(&trace, &r.grad_logits)?;
                    grads.add_scaled(&pg, cfg.beta / n_u);
                }
            }
            if consistency {
                let trace = net.forward_trace(&frozen.perturbed[i])?;
                let z = Logits::new(trace.logits().to_vec())?;
                let (loss, g) = consistency_against_anchor(&frozen.anchors[i], &z, cfg);
                j_c += loss;
                let (pg, _) = net.backward(&trace, &g)?;
                grads.add_scaled(&pg, cfg.alpha / n_u);
            }
        }
        j_c /= n_u;
        j_d /= n_u;
    }
    Ok((LossBreakdown::new(j_s, j_c, j_d, cfg), grads))
}

/// Full objective for one step: freezes the stop-gradient quantities, then
/// evaluates and backpropagates.
pub fn total_objective<R: Rng + ?Sized>(
    batch: &Batch<'_>,
    strategy: &StrategyConfig,
    cfg: &ObjectiveConfig,
    net: &Net,
    rng: &mut R,
) -> Result<(LossBreakdown, Gradients)> {
    let frozen = freeze_step(batch, strategy, cfg, net, rng)?;
    objective_with_frozen(batch, strategy, cfg, net, &frozen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init, Activation, InitScheme, NetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logits(v: &[f64]) -> Logits {
        Logits::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sparsemax_loss_examples() {
        let (loss, grad) = supervised_sparsemax_loss(&logits(&[1.0, 0.0]), &[1.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0]);

        let (loss, grad) = supervised_sparsemax_loss(&logits(&[0.0, 0.0]), &[1.0, 0.0]).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);

        assert!(supervised_sparsemax_loss(&logits(&[0.0, 0.0]), &[0.5, 0.5]).is_err());
        assert!(supervised_sparsemax_loss(&logits(&[0.0, 0.0]), &[1.0, 1.0]).is_err());
        assert!(supervised_sparsemax_loss(&logits(&[0.0, 0.0]), &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn consistency_examples() {
        let cfg = ObjectiveConfig {
            consistency_dist: Distance::L2,
            consistency_transform: Transform::Sparsemax,
            ..Default::default()
        };
        let z = logits(&[0.5, 0.0, -1.0]);
        let (loss, grad) = consistency_loss(&z, &z, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));

        let (loss, grad) = consistency_loss(&z, &logits(&[0.0, 0.5, -1.0]), &cfg).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
        // class 2 is zero under both predictions and receives no gradient
        assert_eq!(grad[2], 0.0);

        let kl = ObjectiveConfig {
            consistency_dist: Distance::Kl,
            consistency_transform: Transform::Sparsemax,
            ..Default::default()
        };
        let (loss, _) = consistency_loss(&z, &z, &kl).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn shared_zero_class_contributes_nothing() {
        for dist in [Distance::Kl, Distance::L2] {
            let cfg = ObjectiveConfig {
                consistency_dist: dist,
                consistency_transform: Transform::Sparsemax,
                ..Default::default()
            };
            let a = [0.9, 0.3, -4.0];
            let b = [0.2, 0.7, -3.0];
            let (with, g) = consistency_loss(&logits(&a), &logits(&b), &cfg).unwrap();
            let (moved, _) = consistency_loss(&logits(&a), &logits(&[0.2, 0.7, -9.0]), &cfg).unwrap();
            assert_eq!(with, moved);
            assert_eq!(g[2], 0.0);
        }
    }

    fn net(dims: &[usize], init_scheme: InitScheme, seed: u64) -> Net {
        init(
            &NetSpec {
                dims: dims.to_vec(),
                activation: Activation::Tanh,
                init: init_scheme,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn vat_falls_back_on_flat_model() {
        let model = net(&[3, 4, 2], InitScheme::Zero, 0);
        let cfg = ObjectiveConfig {
            epsilon_vat: 0.3,
            ..Default::default()
        };
        let r = vat_perturbation(&[0.1, 0.2, 0.3], &model, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let d = random_unit_vector(3, &mut ChaCha8Rng::seed_from_u64(4));
        for (a, b) in r.iter().zip(d) {
            assert!((a - 0.3 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn vat_has_requested_norm() {
        let model = net(&[4, 8, 3], InitScheme::Normal, 2);
        let cfg = ObjectiveConfig {
            epsilon_vat: 0.7,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let r = vat_perturbation(&[0.5, -1.0, 0.2, 0.9], &model, &cfg, &mut rng).unwrap();
            assert!((norm(&r) - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn vat_aligns_with_weight_difference_on_linear_model() {
        let mut model = net(&[3, 2], InitScheme::Zero, 0);
        model.layers[0].weights = vec![1.0, -0.5, 2.0, 0.2, 0.4, -1.0];
        model.layers[0].bias = vec![0.1, -0.3];
        let diff = [0.8, -0.9, 3.0];
        let cfg = ObjectiveConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let r = vat_perturbation(&[0.3, 0.1, -0.2], &model, &cfg, &mut rng).unwrap();
            let cos = r.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() / (norm(&r) * norm(&diff));
            assert!(cos.abs() >= 0.99, "cos {cos}");
        }
    }

    fn toy_batch() -> (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>) {
        let lx = vec![vec![0.2, 0.8], vec![-0.6, 0.1], vec![0.9, -0.4]];
        let ly = vec![0, 1, 1];
        let ux = vec![vec![0.1, 0.3], vec![-0.2, -0.7], vec![0.5, 0.5], vec![1.1, -0.2]];
        (lx, ly, ux)
    }

    #[test]
    fn degenerate_weights_reduce_to_supervised() {
        let model = net(&[2, 8, 2], InitScheme::Normal, 3);
        let (lx, ly, ux) = toy_batch();
        let labeled: Vec<(&[f64], usize)> = lx.iter().map(|x| x.as_slice()).zip(ly).collect();
        let unlabeled: Vec<&[f64]> = ux.iter().map(|x| x.as_slice()).collect();
        let batch = Batch {
            labeled: &labeled,
            unlabeled: &unlabeled,
        };
        let cfg = ObjectiveConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (lb, _) = total_objective(&batch, &StrategyConfig::default(), &cfg, &model, &mut rng).unwrap();
        assert_eq!(lb.total, lb.j_s);
        assert_eq!(lb.j_c, 0.0);

        let cfg = ObjectiveConfig::default();
        let none = StrategyConfig::new(StrategyKind::None);
        let (lb, _) = total_objective(&batch, &none, &cfg, &model, &mut rng).unwrap();
        assert_eq!(lb.j_d, 0.0);
        assert!((lb.total - (lb.j_s + cfg.alpha * lb.j_c + cfg.beta * lb.j_d)).abs() < 1e-10);
    }

    #[test]
    fn empty_labeled_batch_is_rejected() {
        let model = net(&[2, 3, 2], InitScheme::Normal, 3);
        let unlabeled: Vec<&[f64]> = vec![&[0.0, 1.0]];
        let batch = Batch {
            labeled: &[],
            unlabeled: &unlabeled,
        };
        let err = total_objective(
            &batch,
            &StrategyConfig::default(),
            &ObjectiveConfig::default(),
            &model,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(matches!(err, AdsError::Config(_)));
    }

    #[test]
    fn objective_is_deterministic() {
        let model = net(&[2, 8, 2], InitScheme::Normal, 3);
        let (lx, ly, ux) = toy_batch();
        let labeled: Vec<(&[f64], usize)> = lx.iter().map(|x| x.as_slice()).zip(ly).collect();
        let unlabeled: Vec<&[f64]> = ux.iter().map(|x| x.as_slice()).collect();
        let batch = Batch {
            labeled: &labeled,
            unlabeled: &unlabeled,
        };
        let run = || {
            total_objective(
                &batch,
                &StrategyConfig::default(),
                &ObjectiveConfig::default(),
                &model,
                &mut ChaCha8Rng::seed_from_u64(5),
            )
            .unwrap()
        };
        let (a, ga) = run();
        let (b, gb) = run();
        assert_eq!(a.total.to_bits(), b.total.to_bits());
        assert_eq!(ga, gb);
    }
}
