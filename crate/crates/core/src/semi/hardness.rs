use crate::numcore::{entropy, ProbVec};

/// Confidence at or above which a prediction counts as easy.
pub const EASY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hardness {
    Easy,
    Hard,
    UltraHard,
}

/// Easy when `max p >= 0.95`; ultra-hard when `max p <= tau` (the same
/// samples the standard mask rejects); hard otherwise.
pub fn hardness_class(p: &ProbVec, tau: f64) -> Hardness {
    let conf = p.max();
    if conf >= EASY_THRESHOLD {
        Hardness::Easy
    } else if conf > tau {
        Hardness::Hard
    } else {
        Hardness::UltraHard
    }
}

/// `1(max p > tau)`
pub fn mask_std(p: &ProbVec, tau: f64) -> bool {
    p.max() > tau
}

/// Normalized-entropy weight `H(p)/ln K · s + (1 - s)`.
pub fn hardness_weight(p: &ProbVec, s: f64) -> f64 {
    let k = p.len() as f64;
    let normalized = (entropy(p) / k.ln()).clamp(0.0, 1.0);
    normalized * s + (1.0 - s)
}

/// Balanced-head mask `1(max p̃ − t_b · ln π_k > tau)` with `k = argmax p̃`.
pub fn mask_bal(p_bal: &ProbVec, pi: &ProbVec, t_b: f64, tau: f64) -> bool {
    let k = p_bal.argmax();
    p_bal.max() - t_b * pi[k].ln() > tau
}
