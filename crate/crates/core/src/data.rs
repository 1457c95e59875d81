//! Synthetic datasets, CSV ingestion and labeled/unlabeled/test splits.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{AdsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(AdsError::InvalidInput(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(AdsError::InvalidInput("need at least 2 classes".into()));
        }
        if let Some(i) = labels.iter().position(|&y| y >= num_classes) {
            return Err(AdsError::InvalidInput(format!(
                "label {} of row {i} is outside [0, {num_classes})",
                labels[i]
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(AdsError::InvalidInput(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AdsError::InvalidInput(format!("row {i} has a non-finite feature")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Two interleaving half circles of radius 1. Class 0 is the upper arc
/// centred at the origin, class 1 the lower arc centred at `(1, 0.5)`.
/// Angles are evenly spaced; Gaussian noise is added per coordinate.
pub fn make_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(AdsError::InvalidParameter(format!("two moons needs n >= 2, got {n}")));
    }
    if !(noise_std >= 0.0) {
        return Err(AdsError::InvalidParameter(format!(
            "noise must be >= 0, got {noise_std}"
        )));
    }
    let n_upper = n.div_ceil(2);
    let n_lower = n - n_upper;
    let angle = |i: usize, count: usize| {
        if count > 1 {
            PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_upper {
        let t = angle(i, n_upper);
        features.push(vec![t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_lower {
        let t = angle(i, n_lower);
        features.push(vec![1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("finite std");
        for row in &mut features {
            for v in row.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Dataset::new(features, labels, 2, "two_moons")
}

/// Isotropic Gaussian clusters; example `i` belongs to class `i % K`.
pub fn make_blobs(n: usize, centers: &[Vec<f64>], spread: f64, seed: u64) -> Result<Dataset> {
    let k = centers.len();
    if k < 2 {
        return Err(AdsError::InvalidParameter("blobs need at least 2 centers".into()));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(AdsError::InvalidParameter(
            "centers must share a positive dimension".into(),
        ));
    }
    for a in 0..k {
        for b in a + 1..k {
            if centers[a] == centers[b] {
                return Err(AdsError::InvalidParameter(format!("centers {a} and {b} coincide")));
            }
        }
    }
    if !(spread >= 0.0) {
        return Err(AdsError::InvalidParameter(format!("spread must be >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let row = centers[c]
            .iter()
            .map(|&m| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                m + spread * eps
            })
            .collect();
        features.push(row);
        labels.push(c);
    }
    Dataset::new(features, labels, k, "blobs")
}

/// `K` centers evenly spaced on a circle of the given radius in the first two
/// coordinates of a `dim`-dimensional space.
pub fn circle_centers(k: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let t = 2.0 * PI * c as f64 / k as f64;
            let mut v = vec![0.0; dim.max(2)];
            v[0] = radius * t.cos();
            v[1] = radius * t.sin();
            v
        })
        .collect()
}

/// Reads `label,feat1,...,featD` rows; no header line is allowed.
pub fn load_csv(path: &Path, num_classes: usize) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| AdsError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => AdsError::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let label_field = record.get(0).unwrap_or_default();
        let label: usize = label_field
            .parse()
            .map_err(|_| parse_err(line_no, format!("label `{label_field}` is not a class id")))?;
        if label >= num_classes {
            return Err(parse_err(line_no, format!("label {label} outside [0, {num_classes})")));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("feature `{f}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None if row.is_empty() => {
                return Err(parse_err(line_no, "row has no features".into()));
            }
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse_err(
                    line_no,
                    format!("row has {} features, expected {d}", row.len()),
                ));
            }
            _ => {}
        }
        features.push(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_err(1, "file contains no rows".into()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(features, labels, num_classes, name)
}

/// Writes the dataset in the format [`load_csv`] reads. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn save_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = String::new();
    for (row, y) in ds.features.iter().zip(&ds.labels) {
        let _ = write!(out, "{y}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| AdsError::io(path, e))
}

/// How many labels to reveal per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelBudget {
    PerClass(usize),
    /// Every training example is labeled.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiSplit {
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub labeled_per_class: Vec<usize>,
}

impl SemiSplit {
    /// Panics if the three pools overlap or reference rows outside `n`.
    pub fn assert_disjoint(&self, n: usize) {
        let mut seen = vec![false; n];
        for &i in self.labeled_idx.iter().chain(&self.unlabeled_idx).chain(&self.test_idx) {
            assert!(i < n, "index {i} out of bounds");
            assert!(!seen[i], "index {i} appears in two pools");
            seen[i] = true;
        }
    }
}

/// Shuffles the rows, holds out `round(test_fraction * N)` for testing and
/// reveals a class-stratified labeled pool from the rest.
pub fn split_semi(ds: &Dataset, budget: LabelBudget, test_fraction: f64, seed: u64) -> Result<SemiSplit> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(AdsError::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if let LabelBudget::PerClass(per) = budget {
        if per == 0 {
            return Err(AdsError::Config("labels per class must be >= 1".into()));
        }
        if (per * ds.num_classes) as f64 > (1.0 - test_fraction) * n as f64 {
            return Err(AdsError::Config(format!(
                "{per} labels x {} classes exceed the {} training rows",
                ds.num_classes,
                n - n_test
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (test, train) = order.split_at(n_test);

    let mut labeled_per_class = vec![0; ds.num_classes];
    let mut labeled_idx = Vec::new();
    let mut unlabeled_idx = Vec::new();
    for &i in train {
        let y = ds.labels[i];
        let take = match budget {
            LabelBudget::All => true,
            LabelBudget::PerClass(per) => labeled_per_class[y] < per,
        };
        if take {
            labeled_per_class[y] += 1;
            labeled_idx.push(i);
        } else {
            unlabeled_idx.push(i);
        }
    }
    if let LabelBudget::PerClass(per) = budget {
        if let Some(c) = labeled_per_class.iter().position(|&count| count < per) {
            return Err(AdsError::Config(format!(
                "class {c} has only {} training rows, {per} labels requested",
                labeled_per_class[c]
            )));
        }
    }
    let split = SemiSplit {
        labeled_idx,
        unlabeled_idx,
        test_idx: test.to_vec(),
        labeled_per_class,
    };
    split.assert_disjoint(n);
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    /// Adds `N(0, magnitude^2)` noise to every feature.
    GaussianJitter,
    /// Moves the point by `magnitude` along a random unit direction.
    FeatureShift,
}

pub fn augment<R: Rng + ?Sized>(x: &[f64], kind: AugmentKind, magnitude: f64, rng: &mut R) -> Vec<f64> {
    if magnitude == 0.0 {
        return x.to_vec();
    }
    match kind {
        AugmentKind::GaussianJitter => x
            .iter()
            .map(|v| {
                let eps: f64 = StandardNormal.sample(rng);
                v + magnitude * eps
            })
            .collect(),
        AugmentKind::FeatureShift => {
            let dir = random_unit_vector(x.len(), rng);
            x.iter().zip(dir).map(|(v, d)| v + magnitude * d).collect()
        }
    }
}

/// Uniformly distributed direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `E||N(0, I_d)|| = sqrt(2) Gamma((d+1)/2) / Gamma(d/2)`, using
    /// `r(1) = 1/sqrt(pi)`, `r(2) = sqrt(pi)/2`, `r(d+2) = r(d) (d+1)/d`.
    fn chi_mean(d: usize) -> f64 {
        let (mut r, mut k) = if d % 2 == 1 {
            (1.0 / PI.sqrt(), 1)
        } else {
            (PI.sqrt() / 2.0, 2)
        };
        while k < d {
            r *= (k + 1) as f64 / k as f64;
            k += 2;
        }
        std::f64::consts::SQRT_2 * r
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let ds = make_two_moons(101, 0.0, 3).unwrap();
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            let (cx, cy) = if y == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if y == 0 {
                assert!(x[1] >= -1e-12);
            } else {
                assert!(x[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_are_balanced_and_seeded() {
        let ds = make_two_moons(1000, 0.1, 7).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&y| y == 0).count(), 500);
        assert_eq!(ds, make_two_moons(1000, 0.1, 7).unwrap());
        assert_ne!(ds, make_two_moons(1000, 0.1, 8).unwrap());
        assert!(make_two_moons(1, 0.1, 0).is_err());
    }

    #[test]
    fn blobs_collapse_to_centers() {
        let centers = vec![vec![0.0, 1.0], vec![3.0, -2.0], vec![5.0, 5.0]];
        let ds = make_blobs(30, &centers, 0.0, 1).unwrap();
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            assert_eq!(x, &centers[y]);
        }
        assert_eq!(
            make_blobs(30, &centers, 0.4, 9).unwrap(),
            make_blobs(30, &centers, 0.4, 9).unwrap()
        );
        assert!(make_blobs(30, &[vec![1.0], vec![1.0]], 0.4, 9).is_err());
    }

    #[test]
    fn well_separated_blobs_have_no_bayes_error() {
        // nearest-center rule is Bayes optimal for equal isotropic clusters
        let centers = circle_centers(4, 2, 10.0);
        let ds = make_blobs(4000, &centers, 0.5, 2).unwrap();
        let errors = ds
            .features
            .iter()
            .zip(&ds.labels)
            .filter(|(x, &y)| {
                let d = |c: &Vec<f64>| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                let nearest = (0..4)
                    .min_by(|&a, &b| d(&centers[a]).total_cmp(&d(&centers[b])))
                    .unwrap();
                nearest != y
            })
            .count();
        assert_eq!(errors, 0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("moons.csv");
        let ds = make_two_moons(50, 0.2, 4).unwrap();
        save_csv(&path, &ds).unwrap();
        let back = load_csv(&path, 2).unwrap();
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.features.iter().flatten().zip(ds.features.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    fn parse_error_line(content: &str, k: usize) -> usize {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, content).unwrap();
        match load_csv(&path, k) {
            Err(AdsError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_errors_name_the_line() {
        assert_eq!(parse_error_line("", 2), 1);
        assert_eq!(parse_error_line("label,x,y\n0,1,2\n", 2), 1);
        assert_eq!(parse_error_line("0,1,2\n1,3\n", 2), 2);
        assert_eq!(parse_error_line("0,1,2\n1,3,abc\n", 2), 2);
        assert_eq!(parse_error_line("0,1,2\n1,3,4\n2,0,0\n", 2), 3);
    }

    #[test]
    fn missing_csv_is_io_error() {
        let err = load_csv(Path::new("/definitely/not/here.csv"), 2).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.csv"));
    }

    #[test]
    fn split_examples() {
        let ds = make_two_moons(100, 0.1, 0).unwrap();
        let s = split_semi(&ds, LabelBudget::PerClass(3), 0.2, 5).unwrap();
        assert_eq!(s.labeled_idx.len(), 6);
        assert_eq!(s.labeled_per_class, vec![3, 3]);
        assert_eq!(s.test_idx.len(), 20);
        assert_eq!(s.unlabeled_idx.len(), 74);

        let s = split_semi(&ds, LabelBudget::All, 0.2, 5).unwrap();
        assert!(s.unlabeled_idx.is_empty());
        assert_eq!(s.labeled_idx.len(), 80);

        assert!(matches!(
            split_semi(&ds, LabelBudget::PerClass(45), 0.2, 5),
            Err(AdsError::Config(_))
        ));
    }

    #[test]
    fn split_pools_are_disjoint_across_seeds() {
        let ds = make_blobs(300, &circle_centers(3, 2, 5.0), 1.0, 0).unwrap();
        for seed in 0..100 {
            let s = split_semi(&ds, LabelBudget::PerClass(4), 0.25, seed).unwrap();
            s.assert_disjoint(ds.len());
            assert_eq!(s.labeled_idx.len() + s.unlabeled_idx.len() + s.test_idx.len(), ds.len());
            for &i in &s.labeled_idx {
                assert!(!s.test_idx.contains(&i));
            }
        }
    }

    #[test]
    fn augment_identity_and_determinism() {
        let x = [1.0, -2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&x, AugmentKind::GaussianJitter, 0.0, &mut rng), x.to_vec());
        assert_eq!(augment(&x, AugmentKind::FeatureShift, 0.0, &mut rng), x.to_vec());
        let a = augment(&x, AugmentKind::GaussianJitter, 0.3, &mut ChaCha8Rng::seed_from_u64(2));
        let b = augment(&x, AugmentKind::GaussianJitter, 0.3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        let s = augment(&x, AugmentKind::FeatureShift, 0.7, &mut rng);
        let dist = s.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!((dist - 0.7).abs() < 1e-12);
    }

    #[test]
    fn jitter_norm_follows_chi_distribution() {
        let d = 5;
        let magnitude = 0.4;
        let x = vec![0.0; d];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| {
                augment(&x, AugmentKind::GaussianJitter, magnitude, &mut rng)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / n as f64;
        let expected = magnitude * chi_mean(d);
        // chi mean sits just below sqrt(d)
        assert!(expected < magnitude * (d as f64).sqrt());
        assert!((mean - expected).abs() < 0.01 * expected, "{mean} vs {expected}");
    }
}
