//! Semantic pseudo-labels from prototypes, dynamic label mixing, and the
//! running class-distribution trackers.

use crate::error::{Error, Result};
use crate::numcore::{softmax_raw, sq_dist, ProbVec};
use crate::semi::bank::Prototypes;

/// Softmax over classes of `-dist(e, c_k) / t_p`; classes without a
/// prototype get probability zero.
pub fn semantic_label(embedding: &[f64], protos: &Prototypes, t_p: f64) -> Result<ProbVec> {
    if !protos.any_valid() {
        return Err(Error::Unavailable);
    }
    let valid_idx: Vec<usize> = (0..protos.valid.len()).filter(|&k| protos.valid[k]).collect();
    let mut scores = Vec::with_capacity(valid_idx.len());
    for &k in &valid_idx {
        let c = &protos.centers[k];
        if c.len() != embedding.len() {
            return Err(Error::invalid(format!(
                "embedding of length {} against prototype of length {}",
                embedding.len(),
                c.len()
            )));
        }
        scores.push(-sq_dist(embedding, c).sqrt());
    }
    let p = softmax_raw(&scores, t_p);
    let mut out = vec![0.0; protos.valid.len()];
    for (&k, v) in valid_idx.iter().zip(p) {
        out[k] = v;
    }
    Ok(ProbVec::from_normalized(out))
}

/// `(1 − λ)·q + λ·q̂` with `λ = gamma · w_k` clamped into `[0, 1]`.
pub fn mix_labels(q: &ProbVec, q_hat: &ProbVec, gamma: f64, w_k: f64) -> Result<ProbVec> {
    if q.len() != q_hat.len() {
        return Err(Error::invalid("mixing labels of different lengths"));
    }
    let raw = gamma * w_k;
    let lambda = raw.clamp(0.0, 1.0);
    if lambda != raw {
        log::warn!("mixing coefficient {raw} clamped to {lambda}");
    }
    let mixed: Vec<f64> = q
        .as_slice()
        .iter()
        .zip(q_hat.as_slice())
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect();
    Ok(ProbVec::from_normalized(mixed))
}

/// Linear ramp `alpha · current / total`.
pub fn mix_schedule(epoch_current: usize, epoch_total: usize, alpha: f64) -> f64 {
    if epoch_total == 0 {
        return 0.0;
    }
    alpha * epoch_current.min(epoch_total) as f64 / epoch_total as f64
}

/// Running estimates of the pseudo-label class distribution (`m_tilde`,
/// an EMA) and of the label distribution over labeled data plus accepted
/// pseudo-labels (`pi`, cumulative). Both are smoothed so no entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistTracker {
    m_tilde: Vec<f64>,
    pi: Vec<f64>,
    counts: Vec<f64>,
    rho: f64,
    eps: f64,
}

impl ClassDistTracker {
    pub fn new(k: usize, rho: f64, eps: f64) -> Self {
        ClassDistTracker {
            m_tilde: vec![1.0 / k as f64; k],
            pi: vec![1.0 / k as f64; k],
            counts: vec![0.0; k],
            rho,
            eps,
        }
    }

    pub fn m_tilde(&self) -> ProbVec {
        ProbVec::from_normalized(self.m_tilde.clone())
    }

    pub fn pi(&self) -> ProbVec {
        ProbVec::from_normalized(self.pi.clone())
    }

    pub fn pi_slice(&self) -> &[f64] {
        &self.pi
    }

    fn smooth(&self, hist: &[f64]) -> Vec<f64> {
        let total: f64 = hist.iter().sum();
        let k = hist.len() as f64;
        hist.iter()
            .map(|h| (h / total + self.eps) / (1.0 + k * self.eps))
            .collect()
    }

    /// Folds one step's labeled labels and masked pseudo-label classes into
    /// the trackers.
    pub fn update(&mut self, labeled: &[usize], pseudo: &[usize]) {
        let k = self.m_tilde.len();
        if !pseudo.is_empty() {
            let mut hist = vec![0.0; k];
            for &c in pseudo {
                hist[c] += 1.0;
            }
            let target = self.smooth(&hist);
            for (m, t) in self.m_tilde.iter_mut().zip(target) {
                *m = (1.0 - self.rho) * *m + self.rho * t;
            }
        }
        if labeled.is_empty() && pseudo.is_empty() {
            return;
        }
        for &c in labeled.iter().chain(pseudo) {
            self.counts[c] += 1.0;
        }
        self.pi = self.smooth(&self.counts);
    }
}

/// `m̃_k / max_j m̃_j`
pub fn class_weight(tracker: &ClassDistTracker, k: usize) -> f64 {
    let max = tracker.m_tilde.iter().copied().fold(0.0, f64::max);
    tracker.m_tilde[k] / max
}
