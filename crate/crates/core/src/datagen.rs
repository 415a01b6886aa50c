//! Synthetic long-tailed datasets, vector augmentations and the dataset
//! file format.
//!
//! Class `k` (zero-based) of the labeled pool holds
//! `round(N1 · γ_l^(-k/(K-1)))` samples and the unlabeled pool follows the
//! same profile with `M1` and `γ_u`. A `γ_u` below one produces a reversed
//! (tail-heavy) unlabeled pool. The test split is class-balanced.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const MAX_CLASS_COUNT: f64 = 1e8;
const HEADER_TAG: &str = "semiforge-dataset v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub k: usize,
    pub n1: usize,
    pub m1: usize,
    pub gamma_l: f64,
    pub gamma_u: f64,
}

impl ClassProfile {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidProfile(format!(
                "need at least 2 classes, got {}",
                self.k
            )));
        }
        if self.n1 == 0 || self.m1 == 0 {
            return Err(Error::InvalidProfile("head counts N1 and M1 must be >= 1".into()));
        }
        for (name, g) in [("gamma_l", self.gamma_l), ("gamma_u", self.gamma_u)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidProfile(format!("{name} must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Labeled and unlabeled per-class counts for a profile.
pub fn class_counts(profile: &ClassProfile) -> Result<(Vec<usize>, Vec<usize>)> {
    profile.validate()?;
    let labeled = profile_counts(profile.k, profile.n1, profile.gamma_l)?;
    let unlabeled = profile_counts(profile.k, profile.m1, profile.gamma_u)?;
    Ok((labeled, unlabeled))
}

fn profile_counts(k: usize, head: usize, gamma: f64) -> Result<Vec<usize>> {
    let mut counts = Vec::with_capacity(k);
    counts.push(head);
    for class in 1..k {
        let exponent = -(class as f64) / (k - 1) as f64;
        let raw = (head as f64 * gamma.powf(exponent)).round();
        if !raw.is_finite() || raw > MAX_CLASS_COUNT {
            return Err(Error::InvalidProfile(format!(
                "class {class} count {raw} overflows the {MAX_CLASS_COUNT} limit"
            )));
        }
        counts.push((raw as usize).max(1));
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// An unlabeled sample. `hidden_label` is ground truth kept for evaluation
/// metrics only; training code reads `features` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSample {
    pub features: Vec<f64>,
    pub hidden_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<UnlabeledSample>,
    pub test: Vec<Sample>,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn labeled_counts(&self) -> Vec<usize> {
        histogram(self.labeled.iter().map(|s| s.label), self.k)
    }

    pub fn unlabeled_counts(&self) -> Vec<usize> {
        histogram(self.unlabeled.iter().map(|s| s.hidden_label), self.k)
    }

    pub fn test_counts(&self) -> Vec<usize> {
        histogram(self.test.iter().map(|s| s.label), self.k)
    }

    /// Per-feature standard deviation over the training pools (labeled and
    /// unlabeled). Used to scale augmentation noise.
    pub fn feature_std(&self) -> Vec<f64> {
        let rows = self
            .labeled
            .iter()
            .map(|s| &s.features)
            .chain(self.unlabeled.iter().map(|s| &s.features));
        let mut n = 0usize;
        let mut mean = vec![0.0; self.d];
        let mut m2 = vec![0.0; self.d];
        for x in rows {
            n += 1;
            for j in 0..self.d {
                let delta = x[j] - mean[j];
                mean[j] += delta / n as f64;
                m2[j] += delta * (x[j] - mean[j]);
            }
        }
        if n < 2 {
            return vec![1.0; self.d];
        }
        m2.into_iter().map(|v| (v / (n - 1) as f64).sqrt()).collect()
    }

    fn validate(&self) -> Result<()> {
        let check = |f: &[f64], label: usize| -> Result<()> {
            if f.len() != self.d {
                return Err(Error::invalid(format!(
                    "feature vector of length {} in a d={} dataset",
                    f.len(),
                    self.d
                )));
            }
            if label >= self.k {
                return Err(Error::invalid(format!("label {label} out of range for K={}", self.k)));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite feature value"));
            }
            Ok(())
        };
        for s in self.labeled.iter().chain(&self.test) {
            check(&s.features, s.label)?;
        }
        for s in &self.unlabeled {
            check(&s.features, s.hidden_label)?;
        }
        Ok(())
    }
}

fn histogram(labels: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for l in labels {
        h[l] += 1;
    }
    h
}

/// Places `k` centers on a sphere around the origin, scaled so the minimum
/// pairwise distance equals `class_sep`. With `k <= d` the directions are
/// orthonormal (all pairwise distances equal).
pub fn class_centers(k: usize, d: usize, class_sep: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let random_dir = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    };

    let dirs = if k <= d {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        while basis.len() < k {
            let mut v = random_dir(rng);
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                basis.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        basis
    } else {
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for _ in 0..64 {
            let cand: Vec<Vec<f64>> = (0..k).map(|_| random_dir(rng)).collect();
            let sep = min_pairwise(&cand);
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, cand));
            }
        }
        best.map(|(_, c)| c).unwrap_or_default()
    };

    let unit_sep = min_pairwise(&dirs);
    let radius = class_sep / unit_sep;
    dirs.into_iter()
        .map(|v| v.into_iter().map(|x| x * radius).collect())
        .collect()
}

fn min_pairwise(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(crate::numcore::sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    best
}

/// Draws a Gaussian-mixture dataset with unit-covariance clusters.
pub fn synth_dataset(
    profile: &ClassProfile,
    d: usize,
    class_sep: f64,
    test_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::invalid(format!("feature dimension must be >= 2, got {d}")));
    }
    if !(class_sep > 0.0 && class_sep.is_finite()) {
        return Err(Error::invalid(format!("class separation must be positive, got {class_sep}")));
    }
    let (n_counts, m_counts) = class_counts(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = class_centers(profile.k, d, class_sep, &mut rng);

    let draw = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        centers[c]
            .iter()
            .map(|mu| mu + rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut labeled = Vec::new();
    for (c, &n) in n_counts.iter().enumerate() {
        for _ in 0..n {
            labeled.push(Sample { features: draw(c, &mut rng), label: c });
        }
    }
    let mut unlabeled = Vec::new();
    for (c, &m) in m_counts.iter().enumerate() {
        for _ in 0..m {
            unlabeled.push(UnlabeledSample { features: draw(c, &mut rng), hidden_label: c });
        }
    }
    let mut test = Vec::new();
    for c in 0..profile.k {
        for _ in 0..test_per_class {
            test.push(Sample { features: draw(c, &mut rng), label: c });
        }
    }
    Ok(Dataset { labeled, unlabeled, test, d, k: profile.k, seed })
}

/// Noise levels for weak and strong views, as fractions of the per-feature
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    pub drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { sigma_weak: 0.05, sigma_strong: 0.25, drop_prob: 0.3 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_weak >= 0.0 && self.sigma_weak < self.sigma_strong) {
            return Err(Error::Config(format!(
                "augmentation needs 0 <= sigma_weak < sigma_strong, got {} and {}",
                self.sigma_weak, self.sigma_strong
            )));
        }
        if !(self.drop_prob >= 0.0 && self.drop_prob < 1.0) {
            return Err(Error::Config(format!(
                "drop_prob must lie in [0, 1), got {}",
                self.drop_prob
            )));
        }
        Ok(())
    }
}

fn add_noise(x: &[f64], sigma: f64, scale: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .zip(scale)
        .map(|(v, s)| v + sigma * s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `x` plus Gaussian noise with per-feature std `sigma_weak · scale`.
pub fn augment_weak(x: &[f64], cfg: &AugmentConfig, scale: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    add_noise(x, cfg.sigma_weak, scale, rng)
}

/// Noise at `sigma_strong`, then each coordinate zeroed with probability
/// `drop_prob`.
pub fn augment_strong(x: &[f64], cfg: &AugmentConfig, scale: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut out = add_noise(x, cfg.sigma_strong, scale, rng);
    if cfg.drop_prob > 0.0 {
        for v in &mut out {
            if rng.random::<f64>() < cfg.drop_prob {
                *v = 0.0;
            }
        }
    }
    out
}

pub fn dataset_to_string(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER_TAG} K={} d={} seed={}", ds.k, ds.d, ds.seed);
    let mut record = |split: &str, label: usize, f: &[f64]| {
        out.push_str(split);
        let _ = write!(out, ",{label}");
        for v in f {
            // `{}` on f64 prints the shortest representation that round-trips.
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    for s in &ds.labeled {
        record("labeled", s.label, &s.features);
    }
    for s in &ds.unlabeled {
        record("unlabeled", s.hidden_label, &s.features);
    }
    for s in &ds.test {
        record("test", s.label, &s.features);
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse_line(1, "empty file"))?;
    let rest = header
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| Error::parse_line(1, format!("expected header starting with `{HEADER_TAG}`")))?;
    let (mut k, mut d, mut seed) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse_line(1, format!("malformed header field `{field}`")))?;
        let bad = |_| Error::parse_line(1, format!("bad value in header field `{field}`"));
        match key {
            "K" => k = Some(value.parse::<usize>().map_err(bad)?),
            "d" => d = Some(value.parse::<usize>().map_err(bad)?),
            "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
            _ => return Err(Error::parse_line(1, format!("unknown header field `{key}`"))),
        }
    }
    let (k, d, seed) = match (k, d, seed) {
        (Some(k), Some(d), Some(s)) => (k, d, s),
        _ => return Err(Error::parse_line(1, "header must define K, d and seed")),
    };

    let mut ds = Dataset { labeled: Vec::new(), unlabeled: Vec::new(), test: Vec::new(), d, k, seed };
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let split = parts.next().unwrap_or_default();
        let label: usize = parts
            .next()
            .ok_or_else(|| Error::parse_line(lineno, "missing label"))?
            .trim()
            .parse()
            .map_err(|_| Error::parse_line(lineno, "label is not a non-negative integer"))?;
        if label >= k {
            return Err(Error::parse_line(lineno, format!("label {label} out of range for K={k}")));
        }
        let features = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse_line(lineno, "feature is not a real number"))?;
        if features.len() != d {
            return Err(Error::parse_line(
                lineno,
                format!("expected {d} features, found {}", features.len()),
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse_line(lineno, "non-finite feature value"));
        }
        match split {
            "labeled" => ds.labeled.push(Sample { features, label }),
            "unlabeled" => ds.unlabeled.push(UnlabeledSample { features, hidden_label: label }),
            "test" => ds.test.push(Sample { features, label }),
            other => return Err(Error::parse_line(lineno, format!("unknown split `{other}`"))),
        }
    }
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    ds.validate()?;
    let path = path.as_ref();
    fs::write(path, dataset_to_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}
