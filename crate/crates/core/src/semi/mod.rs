//! Hard-example reweighting, the confidence-decay memory bank, semantic
//! pseudo-labels with dynamic mixing, class-distribution trackers and the
//! loss terms of the standard and balanced branches.

pub mod bank;
pub mod hardness;
pub mod labels;
pub mod losses;

pub use bank::{BankEntry, BankPolicy, MemoryBank, Prototypes};
pub use hardness::{hardness_class, hardness_weight, mask_bal, mask_std, Hardness, EASY_THRESHOLD};
pub use labels::{class_weight, mix_labels, mix_schedule, semantic_label, ClassDistTracker};
pub use losses::{
    loss_balanced_sup, loss_balanced_unsup, loss_embed_align, loss_supervised, loss_total,
    loss_unlabeled, LossOut, LossTerms, PseudoRecord,
};

use crate::error::{Error, Result};

/// Hyperparameters of the method. Field defaults are listed on
/// [`SemiHyper::default`].
#[derive(Debug, Clone, PartialEq)]
pub struct SemiHyper {
    /// Confidence threshold for the standard mask.
    pub tau: f64,
    /// Entropy scale; weights land in `[1 - s, 1]`.
    pub s: f64,
    /// Embedding-alignment temperature (the weak target uses `5 · t_e`).
    pub t_e: f64,
    /// Prototype-distance temperature.
    pub t_p: f64,
    /// Scale of the `ln π` term in the balanced mask.
    pub t_b: f64,
    /// Peak of the mixing ramp.
    pub alpha: f64,
    /// Confidence decay factor.
    pub beta: f64,
    /// Steps between confidence decays.
    pub decay_interval: usize,
    /// Per-class memory-bank capacity.
    pub bank_capacity: usize,
    /// EMA rate of the pseudo-label class distribution.
    pub rho: f64,
    /// Additive smoothing of the class-distribution trackers.
    pub pi_smoothing: f64,
    /// Also add `t_b · ln π` to the balanced logits inside the balanced
    /// cross-entropies (logit-adjusted training).
    pub bal_logit_adjust: bool,
}

impl Default for SemiHyper {
    fn default() -> Self {
        SemiHyper {
            tau: 0.7,
            s: 0.5,
            t_e: 0.1,
            t_p: 1.0,
            t_b: 0.5,
            alpha: 1.0,
            beta: 0.999,
            decay_interval: 50,
            bank_capacity: 64,
            rho: 0.05,
            pi_smoothing: 1e-3,
            bal_logit_adjust: false,
        }
    }
}

impl SemiHyper {
    pub fn xi(&self) -> f64 {
        1.0 - self.s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return fail(format!("s must lie in (0, 1], got {}", self.s));
        }
        for (name, t) in [("t_e", self.t_e), ("t_p", self.t_p)] {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("{name} must be positive, got {t}"));
            }
        }
        if !(self.t_b >= 0.0 && self.t_b.is_finite()) {
            return fail(format!("t_b must be non-negative, got {}", self.t_b));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.decay_interval == 0 || self.bank_capacity == 0 {
            return fail("decay_interval and bank_capacity must be >= 1".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return fail(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if !(self.pi_smoothing > 0.0 && self.pi_smoothing.is_finite()) {
            return fail(format!("pi_smoothing must be positive, got {}", self.pi_smoothing));
        }
        Ok(())
    }
}
