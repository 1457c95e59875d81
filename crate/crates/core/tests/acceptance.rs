//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use ads::distill::StrategyKind;
use ads::harness::{run_experiment, ExperimentConfig, RunHistory};
use ads::oracle::{self, VerifyReport};
type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

/// Two-moons, 6 labels / 1000 unlabeled / 200 test, 2-16-16-2 net.
const MOONS: &str = "
dataset = two_moons
n = 1206
noise = 0.1
labels_per_class = 3
test_fraction = 0.16583747927031509
hidden = 16,16
activation = relu
init = normal
epochs = 200
batch_unlabeled = 64
lr = 0.02
momentum = 0.9
alpha = 30
beta = 0.1
epsilon_vat = 0.2
perturbation = vat
";

const MOONS_ADS: &str = "
strategy = ads
supervised_transform = sparsemax
consistency_transform = sparsemax
consistency_dist = l2
";

const MOONS_SOFTMAX: &str = "
supervised_transform = softmax
consistency_transform = softmax
consistency_dist = kl
";

const MOONS_NONE: &str = "
strategy = none
alpha = 0
beta = 0
supervised_transform = softmax
";

/// Ten well-separated Gaussian blobs, zero-initialized output layer.
const BLOBS: &str = "
dataset = blobs
n = 1000
classes = 10
dim = 2
spread = 0.5
radius = 5
labels_per_class = 5
test_fraction = 0.2
hidden = 16,16
activation = relu
init = zero_output
strategy = ads
alpha = 3
beta = 1
epsilon_vat = 0.2
supervised_transform = sparsemax
consistency_transform = sparsemax
consistency_dist = l2
epochs = 100
lr = 0.02
momentum = 0.9
seed = 0
";

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(parts: &[&str], dir: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::parse(&parts.concat(), Path::new("acceptance"))?;
    cfg.output_dir = Some(dir.to_path_buf());
    Ok(cfg)
}

fn from_reports(reports: &[VerifyReport]) -> Outcome {
    let detail = reports
        .iter()
        .map(|r| format!("{}={:.2e}/{:.0e}", r.name, r.max_err, r.tolerance))
        .collect::<Vec<_>>()
        .join(" ");
    for r in reports.iter().filter(|r| !r.pass) {
        for c in &r.counterexamples {
            eprintln!("  {}: {c}", r.name);
        }
    }
    Outcome {
        pass: reports.iter().all(|r| r.pass),
        detail,
    }
}

fn c1() -> Result<Outcome> {
    Ok(from_reports(&[oracle::sparsemax_projection_check(1000, 1)]))
}

fn c2() -> Result<Outcome> {
    Ok(from_reports(&[
        oracle::ads_zero_loss_fuzz(10_000, 2..=10, 2),
        oracle::ads_zero_loss_boundary(1000, 3),
    ]))
}

fn c3() -> Result<Outcome> {
    Ok(from_reports(&[
        oracle::masking_threshold_check(100_000, &[2, 5, 10], 4)?,
        oracle::binary_masking_collapse()?,
    ]))
}

fn c4() -> Result<Outcome> {
    Ok(from_reports(&[oracle::binary_closed_form_check(10_000)]))
}

fn c5() -> Result<Outcome> {
    let mut reports = Vec::new();
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
        reports.push(oracle::strategy_gradient_audit(kind, 200, 10 + i as u64)?);
    }
    reports.push(oracle::supervised_sparsemax_audit(200, 20)?);
    reports.push(oracle::consistency_audit(200, 21)?);
    reports.push(oracle::total_objective_audit(6, 22)?);
    Ok(from_reports(&reports))
}

fn c6() -> Result<Outcome> {
    Ok(from_reports(&[oracle::gini_check(100, 30)]))
}

fn c7() -> Result<Outcome> {
    Ok(from_reports(&[oracle::pl_ns_binary_check(10_000, 0.95)]))
}

fn mean_over_seeds(parts: &[&str], root: &Path, tag: &str) -> Result<(f64, f64)> {
    let (mut err, mut p1) = (0.0, 0.0);
    for seed in SEEDS {
        let mut cfg = config(parts, &root.join(format!("{tag}_{seed}")))?;
        cfg.seed = seed;
        let history = run_experiment(&cfg)?;
        err += history.last().test_error;
        p1 += history.last().p_bar_1;
    }
    let n = SEEDS.len() as f64;
    Ok((err / n, p1 / n))
}

fn c8() -> Result<Outcome> {
    let root = tempfile::tempdir()?;
    let (ads_err, ads_p1) = mean_over_seeds(&[MOONS, MOONS_ADS], root.path(), "ads")?;
    let (none_err, _) = mean_over_seeds(&[MOONS, MOONS_NONE], root.path(), "none")?;
    let mut detail = format!("ads err={ads_err:.4} p1={ads_p1:.4} none err={none_err:.4}");
    let mut pass = ads_err < none_err;
    for name in ["me", "sh", "pl"] {
        let strategy = format!("strategy = {name}\n");
        let (err, p1) = mean_over_seeds(&[MOONS, MOONS_SOFTMAX, &strategy], root.path(), name)?;
        detail.push_str(&format!(" {name} err={err:.4} p1={p1:.4}"));
        pass &= ads_p1 < p1;
    }
    Ok(Outcome { pass, detail })
}

fn c9() -> Result<Outcome> {
    let root = tempfile::tempdir()?;
    let history: RunHistory = run_experiment(&config(&[BLOBS], root.path())?)?;
    let first = &history.epochs[0].histogram;
    let last = &history.last().histogram;
    let total: u64 = first.iter().sum();
    let all_in_second = total > 0 && first[1] == total;
    let pass = all_in_second && last[0] > first[0] && last[9] > first[9];
    Ok(Outcome {
        pass,
        detail: format!(
            "epoch0 bin1={}/{total} first {}->{} last {}->{} test_error={}",
            first[1],
            first[0],
            last[0],
            first[9],
            last[9],
            history.last().test_error
        ),
    })
}

fn c10() -> Result<Outcome> {
    let root = tempfile::tempdir()?;
    let short = "epochs = 20\n";
    let mut pass = true;
    let mut compared = 0;
    for (tag, parts) in [("moons", vec![MOONS, MOONS_ADS, short]), ("blobs", vec![BLOBS, short])] {
        let a = root.path().join(format!("{tag}_a"));
        let b = root.path().join(format!("{tag}_b"));
        run_experiment(&config(&parts, &a)?)?;
        run_experiment(&config(&parts, &b)?)?;
        for file in ["metrics.csv", "histogram.csv", "checkpoint.bin"] {
            pass &= std::fs::read(a.join(file))? == std::fs::read(b.join(file))?;
            compared += 1;
        }
    }
    Ok(Outcome {
        pass,
        detail: format!("{compared} file pairs compared"),
    })
}

type Criterion = fn() -> Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion, Option<Duration>); 10] = [
        ("sparsemax-projection", c1, Some(Duration::from_secs(1))),
        ("ads-zero-loss-biconditional", c2, Some(Duration::from_secs(5))),
        ("masking-threshold-bounds", c3, None),
        ("binary-closed-form", c4, None),
        ("gradient-audits", c5, Some(Duration::from_secs(30))),
        ("gini-equivalence", c6, Some(Duration::from_secs(60))),
        ("pl-ns-binary", c7, None),
        ("moons-overconfidence", c8, Some(Duration::from_secs(180))),
        ("blobs-histogram-migration", c9, Some(Duration::from_secs(60))),
        ("determinism", c10, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" limit={}s", l.as_secs()));
        println!(
            "{} criterion {:>2} {name}: {} time={:.2}s{budget}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
