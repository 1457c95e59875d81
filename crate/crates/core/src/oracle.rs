//! Brute-force reference implementations and the property suite behind
//! `ads verify`.
//!
//! The references here (projection, softmax, binary closed forms, grid
//! search) are written from scratch and do not call into the code they check.

use std::f64::consts::E;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::distill::{
    ads_loss, build_target, corollary1_bounds, loss_with_target, MaskReason, StrategyConfig, StrategyKind,
};
use crate::error::Result;
use crate::net::{init, Activation, InitScheme, NetSpec};
use crate::objective::{
    consistency_loss, freeze_step, objective_with_frozen, supervised_sparsemax_loss, Batch, Distance, ObjectiveConfig,
};
use crate::probtransform::{sparsemax, Logits, Prediction, ProbDistribution, Transform};

pub const TOL_EXACT: f64 = 1e-9;
pub const TOL_FD: f64 = 1e-5;
pub const TOL_FD_NET: f64 = 1e-4;
pub const TOL_GRID: f64 = 2e-3;
pub const TOL_BINARY_CLOSED_FORM: f64 = 1e-10;
pub const TOL_PL_NS: f64 = 1e-12;

/// Central-difference step used by the gradient audits.
pub const FD_STEP: f64 = 1e-6;

/// Denominator floor of [`relative_error`]. Below it the comparison is
/// effectively absolute, so central-difference roundoff (around 1e-10 with
/// `FD_STEP`) on a vanishing gradient does not read as a relative error.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// Outcome of one verified property.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub name: String,
    pub samples: usize,
    pub max_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Failing inputs, verbatim, capped at a handful.
    pub counterexamples: Vec<String>,
}

const MAX_COUNTEREXAMPLES: usize = 10;

impl VerifyReport {
    fn from_errors(name: &str, samples: usize, max_err: f64, tolerance: f64) -> Self {
        VerifyReport {
            name: name.to_string(),
            samples,
            max_err,
            tolerance,
            pass: max_err <= tolerance,
            counterexamples: Vec::new(),
        }
    }

    fn from_counterexamples(name: &str, samples: usize, counterexamples: Vec<String>, total_bad: usize) -> Self {
        VerifyReport {
            name: name.to_string(),
            samples,
            max_err: total_bad as f64,
            tolerance: 0.0,
            pass: total_bad == 0,
            counterexamples,
        }
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<32} samples={:<7} max_err={:<12.3e} tol={:<9.1e} {}",
            self.name,
            self.samples,
            self.max_err,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Euclidean projection onto the simplex by water-filling: sort descending,
/// then scan for the last level the running threshold stays below.
pub fn project_simplex_reference(z: &[f64]) -> ProbDistribution {
    let mut u = z.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = u[0] - 1.0;
    for (j, &v) in u.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    let p: Vec<f64> = z.iter().map(|&v| (v - theta).max(0.0)).collect();
    ProbDistribution::new(p).expect("projection lies on the simplex")
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||, REL_ERR_FLOOR)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&diff) / n(a).max(n(b)).max(REL_ERR_FLOOR)
}

fn ref_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.into_iter().map(|v| v / s).collect()
}

fn top_two(p: &[f64]) -> (f64, f64) {
    let mut v = p.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    (v[0], v[1])
}

/// Binary closed forms with `r = 2` as functions of `s = softmax_1(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryClosedForm {
    pub s_prime: f64,
    pub t: f64,
    pub loss: f64,
    pub grad: f64,
}

pub fn binary_closed_form(s: f64) -> BinaryClosedForm {
    let lo = 1.0 / (E + 1.0);
    let hi = E / (E + 1.0);
    if s < lo {
        return BinaryClosedForm {
            s_prime: 0.0,
            t: 0.0,
            loss: 0.0,
            grad: 0.0,
        };
    }
    if s > hi {
        return BinaryClosedForm {
            s_prime: 1.0,
            t: 1.0,
            loss: 0.0,
            grad: 0.0,
        };
    }
    let s_star = ((s / (1.0 - s)).ln() + 1.0) / 2.0;
    let t = s_star * s_star / (s_star * s_star + (1.0 - s_star) * (1.0 - s_star));
    let loss = -t * s_star.ln() - (1.0 - t) * (1.0 - s_star).ln();
    let grad = 0.5 * (-t / s_star + (1.0 - t) / (1.0 - s_star)) * (1.0 / s + 1.0 / (1.0 - s));
    BinaryClosedForm {
        s_prime: s_star,
        t,
        loss,
        grad,
    }
}

/// Exhaustive search over the 2-simplex grid with spacing `step` for the
/// maximizer of `<z, p> + 1/2 sum p_i (1 - p_i)`.
pub fn gini_grid_search(z: &[f64; 3], step: f64) -> ProbDistribution {
    let n = (1.0 / step).round() as usize;
    let nf = n as f64;
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let p = [i as f64 / nf, j as f64 / nf, (n - i - j) as f64 / nf];
            let score: f64 = (0..3).map(|c| z[c] * p[c] + 0.5 * p[c] * (1.0 - p[c])).sum();
            if score > best.0 {
                best = (score, p);
            }
        }
    }
    ProbDistribution::new(best.1.to_vec()).expect("grid point lies on the simplex")
}

fn random_logits<R: Rng + ?Sized>(k: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    (0..k).map(|_| normal.sample(rng)).collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sparsemax_projection_check(n: usize, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    for _ in 0..n {
        let k = rng.random_range(2..=10);
        let scale = rng.random_range(0.1..3.0);
        let z = random_logits(k, scale, &mut rng);
        let ours = sparsemax(&Logits::new(z.clone()).expect("finite logits")).dist;
        let reference = project_simplex_reference(&z);
        max_err = max_err.max(linf(ours.probs(), reference.probs()));
    }
    VerifyReport::from_errors("sparsemax_projection", n, max_err, TOL_EXACT)
}

/// Random fuzz of `ads_loss = 0  <=>  p_(1) >= e p_(2) or p uniform`.
pub fn ads_zero_loss_fuzz(n_samples: usize, k_range: std::ops::RangeInclusive<usize>, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StrategyConfig::new(StrategyKind::Ads);
    let mut bad = Vec::new();
    let mut total_bad = 0;
    for _ in 0..n_samples {
        let k = rng.random_range(k_range.clone());
        let scale = rng.random_range(0.1..3.0);
        let z = random_logits(k, scale, &mut rng);
        let p = ref_softmax(&z);
        let (p1, p2) = top_two(&p);
        let uniform = p.iter().all(|&v| v == p[0]);
        let predicate = p1 >= E * p2 || uniform;
        let loss = ads_loss(&Logits::new(z.clone()).expect("finite logits"), &cfg).loss;
        if (loss == 0.0) != predicate {
            total_bad += 1;
            if bad.len() < MAX_COUNTEREXAMPLES {
                bad.push(format!("z={z:?} p1={p1} p2={p2} loss={loss}"));
            }
        }
    }
    VerifyReport::from_counterexamples("ads_zero_loss_fuzz", n_samples, bad, total_bad)
}

/// Logits whose top two differ by exactly 1, so `p_(1) = e p_(2)` in exact
/// arithmetic, plus constant logits; all must give zero loss.
pub fn ads_zero_loss_boundary(n_samples: usize, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StrategyConfig::new(StrategyKind::Ads);
    let mut bad = Vec::new();
    let mut total_bad = 0;
    for i in 0..n_samples {
        let k = rng.random_range(2..=10);
        let z = if i % 4 == 3 {
            vec![rng.random_range(-3.0..3.0); k]
        } else {
            let base = rng.random_range(-4.0..4.0_f64).round();
            let mut z: Vec<f64> = (0..k).map(|_| base - rng.random_range(1.0..6.0)).collect();
            let top = rng.random_range(0..k);
            let second = (top + 1 + rng.random_range(0..k - 1)) % k;
            z[top] = base;
            z[second] = base - 1.0;
            z
        };
        let loss = ads_loss(&Logits::new(z.clone()).expect("finite logits"), &cfg).loss;
        if loss != 0.0 {
            total_bad += 1;
            if bad.len() < MAX_COUNTEREXAMPLES {
                bad.push(format!("z={z:?} loss={loss}"));
            }
        }
    }
    VerifyReport::from_counterexamples("ads_zero_loss_boundary", n_samples, bad, total_bad)
}

/// Masking-threshold check over random softmax predictions.
///
/// For every sample the max-probability at which its own ADS mask switches
/// on, `e / (e + sum_{j>=2} p_(j) / p_(2))`, must lie in
/// `[e/(e+K-1), e/(e+1)]`, and the sample must be masked exactly when its
/// max-probability reaches that threshold. The error is the largest
/// violation of either condition.
pub fn masking_threshold_check(n_per_k: usize, ks: &[usize], seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StrategyConfig::new(StrategyKind::Ads);
    let mut max_err: f64 = 0.0;
    let mut wrong_side = 0usize;
    for &k in ks {
        let b = corollary1_bounds(k, 1)?;
        let lo = E / (E + k as f64 - 1.0);
        let hi = E / (E + 1.0);
        max_err = max_err.max((b.theta1_lo - lo).abs()).max((b.theta1_hi - hi).abs());
        for _ in 0..n_per_k {
            let scale = rng.random_range(0.1..4.0);
            let z = random_logits(k, scale, &mut rng);
            let p = ref_softmax(&z);
            let mut sorted = p.clone();
            sorted.sort_unstable_by(|a, b| b.total_cmp(a));
            let tail: f64 = sorted[1..].iter().map(|v| v / sorted[1]).sum();
            let threshold = E / (E + tail);
            max_err = max_err.max(lo - threshold).max(threshold - hi);
            let masked = ads_loss(&Logits::new(z).expect("finite logits"), &cfg)
                .target
                .masked_reason
                == MaskReason::Determinate;
            let margin = sorted[0] - threshold;
            if masked != (margin >= 0.0) {
                max_err = max_err.max(margin.abs());
                if margin.abs() > TOL_EXACT {
                    wrong_side += 1;
                }
            }
        }
    }
    let mut report = VerifyReport::from_errors("masking_threshold_bounds", n_per_k * ks.len(), max_err, TOL_EXACT);
    report.pass &= wrong_side == 0;
    Ok(report)
}

/// Width of the K = 2 masking interval and its distance from e/(e+1).
pub fn binary_masking_collapse() -> Result<VerifyReport> {
    let b = corollary1_bounds(2, 1)?;
    let target = E / (E + 1.0);
    let err = (b.theta1_hi - b.theta1_lo).abs().max((b.theta1_lo - target).abs());
    Ok(VerifyReport::from_errors("binary_masking_collapse", 1, err, 1e-12))
}

/// Binary ADS through the general pipeline against the closed forms, over
/// an interior grid of the informed interval.
pub fn binary_closed_form_check(n: usize) -> VerifyReport {
    let cfg = StrategyConfig::new(StrategyKind::Ads);
    let lo = 1.0 / (E + 1.0);
    let hi = E / (E + 1.0);
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        let s = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        let reference = binary_closed_form(s);
        let z = Logits::new(vec![(s / (1.0 - s)).ln(), 0.0]).expect("finite logits");
        let r = ads_loss(&z, &cfg);
        let s_prime = sparsemax(&z).dist.probs()[0];
        let t = r.target.q.probs()[0];
        let grad_s = r.grad_logits[0] * (1.0 / s + 1.0 / (1.0 - s));
        for err in [
            s_prime - reference.s_prime,
            t - reference.t,
            r.reduced_loss - reference.loss,
            grad_s - reference.grad,
        ] {
            max_err = max_err.max(err.abs());
        }
    }
    let mid = binary_closed_form(0.5);
    if mid.t != 0.5 || mid.s_prime != 0.5 || mid.grad != 0.0 {
        max_err = f64::INFINITY;
    }
    VerifyReport::from_errors("binary_closed_form", n, max_err, TOL_BINARY_CLOSED_FORM)
}

pub fn gini_check(n: usize, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    for _ in 0..n {
        let v = random_logits(3, 1.0, &mut rng);
        let z = [v[0], v[1], v[2]];
        let grid = gini_grid_search(&z, 1e-3);
        let ours = sparsemax(&Logits::new(v).expect("finite logits")).dist;
        max_err = max_err.max(linf(grid.probs(), ours.probs()));
    }
    VerifyReport::from_errors("gini_grid_equivalence", n, max_err, TOL_GRID)
}

/// PL with `tau_pl` against NS with `tau_ns = 1 - tau_pl` on binary logits.
pub fn pl_ns_binary_check(n: usize, tau_pl: f64) -> VerifyReport {
    let pl = StrategyConfig {
        tau_pl,
        ..StrategyConfig::new(StrategyKind::Pl)
    };
    let ns = StrategyConfig {
        tau_ns: Some(1.0 - tau_pl),
        ..StrategyConfig::new(StrategyKind::Ns)
    };
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        let u = -12.0 + 24.0 * (i as f64 + 0.5) / n as f64;
        let pred = Prediction::from_logits(&Logits::new(vec![u, 0.0]).expect("finite logits"), Transform::Softmax);
        let a = loss_with_target(&pred, &build_target(&pred, &pl).expect("valid config"), &pl);
        let b = loss_with_target(&pred, &build_target(&pred, &ns).expect("valid config"), &ns);
        max_err = max_err
            .max((a.loss - b.loss).abs())
            .max(linf(&a.grad_logits, &b.grad_logits));
    }
    VerifyReport::from_errors("pl_ns_binary_consistency", n, max_err, TOL_PL_NS)
}

fn same_shape(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

/// Strategy gradient against central differences with the target frozen,
/// at points where neither the target's support nor the prediction's
/// support changes within one step.
pub fn strategy_gradient_audit(kind: StrategyKind, n: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StrategyConfig {
        tau_pl: 0.6,
        ..StrategyConfig::new(kind)
    };
    let transform = cfg.effective_transform();
    let mut max_err: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let k = rng.random_range(2..=6);
        let z = random_logits(k, 1.5, &mut rng);
        let pred = Prediction::from_logits(&Logits::new(z.clone())?, transform);
        let target = build_target(&pred, &cfg)?;
        if !target.selected {
            continue;
        }
        let mut stable = true;
        let f = |x: &[f64]| {
            let pr = Prediction::from_logits(&Logits::new(x.to_vec()).expect("finite logits"), transform);
            let t = build_target(&pr, &cfg).expect("valid config");
            if t.selected != target.selected
                || !same_shape(t.q.probs(), target.q.probs())
                || !same_shape(pr.probs(), pred.probs())
            {
                stable = false;
            }
            loss_with_target(&pr, &target, &cfg).loss
        };
        let numeric = finite_diff_grad(f, &z, FD_STEP);
        if !stable {
            continue;
        }
        let analytic = loss_with_target(&pred, &target, &cfg).grad_logits;
        max_err = max_err.max(relative_error(&analytic, &numeric));
        done += 1;
    }
    Ok(VerifyReport::from_errors(
        &format!("grad_{}", kind.name()),
        n,
        max_err,
        TOL_FD,
    ))
}

pub fn supervised_sparsemax_audit(n: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let k = rng.random_range(2..=6);
        let z = random_logits(k, 1.5, &mut rng);
        let mut y = vec![0.0; k];
        y[rng.random_range(0..k)] = 1.0;
        let center = sparsemax(&Logits::new(z.clone())?).dist;
        let mut stable = true;
        let numeric = finite_diff_grad(
            |x| {
                let lz = Logits::new(x.to_vec()).expect("finite logits");
                stable &= same_shape(sparsemax(&lz).dist.probs(), center.probs());
                supervised_sparsemax_loss(&lz, &y).expect("one-hot label").0
            },
            &z,
            FD_STEP,
        );
        if !stable {
            continue;
        }
        let (_, analytic) = supervised_sparsemax_loss(&Logits::new(z)?, &y)?;
        max_err = max_err.max(relative_error(&analytic, &numeric));
        done += 1;
    }
    Ok(VerifyReport::from_errors(
        "grad_supervised_sparsemax",
        n,
        max_err,
        TOL_FD,
    ))
}

pub fn consistency_audit(n: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let cfg = ObjectiveConfig {
            consistency_dist: if done % 2 == 0 { Distance::Kl } else { Distance::L2 },
            consistency_transform: if (done / 2) % 2 == 0 {
                Transform::Sparsemax
            } else {
                Transform::Softmax
            },
            ..Default::default()
        };
        let k = rng.random_range(2..=6);
        let z = Logits::new(random_logits(k, 1.5, &mut rng))?;
        let zp: Vec<f64> = z.as_slice().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let center = Prediction::from_logits(&Logits::new(zp.clone())?, cfg.consistency_transform).dist;
        let anchor = Prediction::from_logits(&z, cfg.consistency_transform).dist;
        // KL needs the perturbed prediction to cover the anchor's support
        if cfg.consistency_dist == Distance::Kl && anchor.support().iter().any(|&i| center.probs()[i] == 0.0) {
            continue;
        }
        let mut stable = true;
        let numeric = finite_diff_grad(
            |x| {
                let lz = Logits::new(x.to_vec()).expect("finite logits");
                let pr = Prediction::from_logits(&lz, cfg.consistency_transform).dist;
                stable &= same_shape(pr.probs(), center.probs());
                consistency_loss(&z, &lz, &cfg).expect("matching sizes").0
            },
            &zp,
            FD_STEP,
        );
        if !stable {
            continue;
        }
        let (_, analytic) = consistency_loss(&z, &Logits::new(zp)?, &cfg)?;
        max_err = max_err.max(relative_error(&analytic, &numeric));
        done += 1;
    }
    Ok(VerifyReport::from_errors("grad_consistency", n, max_err, TOL_FD))
}

/// All-parameter audit of the full objective on small tanh nets, with the
/// stop-gradient quantities frozen at the starting parameters.
pub fn total_objective_audit(n_nets: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    let configs = [
        (
            StrategyKind::Ads,
            ObjectiveConfig {
                alpha: 0.7,
                beta: 1.3,
                consistency_transform: Transform::Sparsemax,
                supervised_transform: Transform::Sparsemax,
                ..Default::default()
            },
        ),
        (
            StrategyKind::Sh,
            ObjectiveConfig {
                alpha: 1.0,
                beta: 0.5,
                consistency_dist: Distance::L2,
                ..Default::default()
            },
        ),
        (
            StrategyKind::Me,
            ObjectiveConfig {
                alpha: 0.3,
                beta: 1.0,
                ..Default::default()
            },
        ),
    ];
    for i in 0..n_nets {
        let (kind, cfg) = &configs[i % configs.len()];
        let strategy = StrategyConfig::new(*kind);
        let spec = NetSpec {
            dims: vec![2, 8, 2],
            activation: Activation::Tanh,
            init: InitScheme::Normal,
        };
        let mut net = init(&spec, rng.random())?;
        let xs: Vec<Vec<f64>> = (0..6).map(|_| random_logits(2, 1.0, &mut rng)).collect();
        let labeled: Vec<(&[f64], usize)> = xs[..2].iter().map(|x| x.as_slice()).zip([0, 1]).collect();
        let unlabeled: Vec<&[f64]> = xs[2..].iter().map(|x| x.as_slice()).collect();
        let batch = Batch {
            labeled: &labeled,
            unlabeled: &unlabeled,
        };
        let frozen = freeze_step(&batch, &strategy, cfg, &net, &mut rng)?;
        let (_, grads) = objective_with_frozen(&batch, &strategy, cfg, &net, &frozen)?;
        let theta = net.params_flat();
        let numeric = finite_diff_grad(
            |p| {
                net.set_params_flat(p).expect("same parameter count");
                objective_with_frozen(&batch, &strategy, cfg, &net, &frozen)
                    .expect("frozen step matches")
                    .0
                    .total
            },
            &theta,
            FD_STEP,
        );
        max_err = max_err.max(relative_error(&grads.flatten(), &numeric));
    }
    Ok(VerifyReport::from_errors(
        "grad_total_objective",
        n_nets,
        max_err,
        TOL_FD_NET,
    ))
}

/// Every property, in a fixed order with fixed seeds.
pub fn run_all() -> Result<Vec<VerifyReport>> {
    let mut reports = vec![
        sparsemax_projection_check(1000, 1),
        ads_zero_loss_fuzz(10_000, 3..=10, 2),
        ads_zero_loss_boundary(1000, 3),
        masking_threshold_check(100_000, &[2, 5, 10], 4)?,
        binary_masking_collapse()?,
        binary_closed_form_check(10_000),
    ];
    for (i, kind) in [
        StrategyKind::Me,
        StrategyKind::Sh,
        StrategyKind::Pl,
        StrategyKind::Ns,
        StrategyKind::Ads,
    ]
    .into_iter()
    .enumerate()
    {
        reports.push(strategy_gradient_audit(kind, 200, 10 + i as u64)?);
    }
    reports.push(supervised_sparsemax_audit(200, 20)?);
    reports.push(consistency_audit(200, 21)?);
    reports.push(total_objective_audit(6, 22)?);
    reports.push(gini_check(100, 30));
    reports.push(pl_ns_binary_check(10_000, 0.95));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let p = project_simplex_reference(&[0.5, 0.0, -1.0]);
        assert!(linf(p.probs(), &[0.75, 0.25, 0.0]) < 1e-15);
        let on = [0.2, 0.3, 0.5];
        assert!(linf(project_simplex_reference(&on).probs(), &on) < 1e-15);
    }

    #[test]
    fn finite_diff_examples() {
        let x = [0.3, -1.2, 2.0];
        let g = finite_diff_grad(|v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(), &x, 1e-4);
        assert!(linf(&g, &x) < 1e-8);
        let g = finite_diff_grad(|v| v.iter().sum(), &x, 1e-4);
        assert!(linf(&g, &[1.0; 3]) < 1e-10);
    }

    #[test]
    fn binary_closed_form_examples() {
        let mid = binary_closed_form(0.5);
        assert_eq!((mid.s_prime, mid.t, mid.grad), (0.5, 0.5, 0.0));
        let above = binary_closed_form(0.9);
        assert_eq!((above.s_prime, above.loss), (1.0, 0.0));
    }

    #[test]
    fn gini_examples() {
        let p = gini_grid_search(&[0.5, 0.0, -1.0], 1e-3);
        assert!(linf(p.probs(), &[0.75, 0.25, 0.0]) <= 2e-3);
        let u = gini_grid_search(&[0.4, 0.4, 0.4], 1e-3);
        assert!(linf(u.probs(), &[1.0 / 3.0; 3]) <= 2e-3);
    }

    #[test]
    fn reports_pass_iff_within_tolerance() {
        assert!(VerifyReport::from_errors("a", 1, 1e-10, 1e-9).pass);
        assert!(!VerifyReport::from_errors("a", 1, 1e-8, 1e-9).pass);
        assert!(!VerifyReport::from_errors("a", 1, f64::NAN, 1e-9).pass);
    }

    #[test]
    fn quick_suite() {
        for r in [
            sparsemax_projection_check(200, 5),
            ads_zero_loss_fuzz(500, 3..=10, 6),
            ads_zero_loss_boundary(200, 7),
            binary_closed_form_check(500),
            pl_ns_binary_check(500, 0.9),
        ] {
            assert!(r.pass, "{r} {:?}", r.counterexamples);
        }
        for kind in [
            StrategyKind::Me,
            StrategyKind::Sh,
            StrategyKind::Pl,
            StrategyKind::Ns,
            StrategyKind::Ads,
        ] {
            let r = strategy_gradient_audit(kind, 30, 8).unwrap();
            assert!(r.pass, "{r}");
        }
    }
}
