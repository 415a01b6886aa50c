//! The five loss terms. Every function returns the batch-mean value and the
//! gradient of that value with respect to each sample's input to the loss
//! (logits, or strong-view embeddings for the alignment term).

use crate::error::{Error, Result};
use crate::numcore::{log_softmax_raw, softmax_raw, ProbVec};

/// Per-unlabeled-sample state built from the weak view.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRecord {
    /// One-hot argmax of the weak-view standard-head prediction.
    pub q: ProbVec,
    /// Semantic label from prototypes; equals `q` when unavailable.
    pub q_hat: ProbVec,
    /// Mixed label used as the training target.
    pub q_prime: ProbVec,
    /// Max weak-view standard-head probability.
    pub conf: f64,
    pub mask_std: bool,
    pub mask_bal: bool,
    /// Hardness weight, in `[1 − s, 1]`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOut {
    pub value: f64,
    /// One gradient row per sample.
    pub grads: Vec<Vec<f64>>,
}

impl LossOut {
    fn zero(n: usize, dim: usize) -> Self {
        LossOut { value: 0.0, grads: vec![vec![0.0; dim]; n] }
    }
}

/// Soft-target cross-entropy of `softmax(logits / t)` against `target`,
/// with its gradient w.r.t. `logits` scaled by `coef`.
fn soft_ce(logits: &[f64], target: &[f64], t: f64, coef: f64) -> (f64, Vec<f64>) {
    let logp = log_softmax_raw(logits, t);
    let value: f64 = target
        .iter()
        .zip(&logp)
        .filter(|(q, _)| **q != 0.0)
        .map(|(q, lp)| -q * lp)
        .sum();
    let p = softmax_raw(logits, t);
    let mass: f64 = target.iter().sum();
    let grad = p
        .iter()
        .zip(target)
        .map(|(pi, qi)| coef * (mass * pi - qi) / t)
        .collect();
    (value, grad)
}

fn shifted(logits: &[f64], adjust: Option<&[f64]>) -> Vec<f64> {
    match adjust {
        Some(a) => logits.iter().zip(a).map(|(z, b)| z + b).collect(),
        None => logits.to_vec(),
    }
}

fn check_batch<T>(name: &str, records: usize, rows: &[T]) -> Result<()> {
    if records != rows.len() {
        return Err(Error::Inconsistent(format!(
            "{name}: {records} records but {} prediction rows",
            rows.len()
        )));
    }
    Ok(())
}

fn supervised(logits: &[Vec<f64>], labels: &[usize], adjust: Option<&[f64]>) -> Result<LossOut> {
    if logits.is_empty() {
        return Err(Error::invalid("supervised loss on an empty batch"));
    }
    if logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let n = logits.len() as f64;
    let mut out = LossOut::zero(0, 0);
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let target = ProbVec::one_hot(y, z.len());
        let (v, g) = soft_ce(&shifted(z, adjust), target.as_slice(), 1.0, 1.0 / n);
        out.value += v / n;
        out.grads.push(g);
    }
    Ok(out)
}

/// Mean cross-entropy of the standard head against the labels.
pub fn loss_supervised(logits: &[Vec<f64>], labels: &[usize]) -> Result<LossOut> {
    supervised(logits, labels, None)
}

/// `(1/B_u) Σ M(x) w(x) H(q′, softmax(f(A_s(x))))`
pub fn loss_unlabeled(records: &[PseudoRecord], strong_logits: &[Vec<f64>]) -> Result<LossOut> {
    check_batch("unlabeled loss", records.len(), strong_logits)?;
    let n = records.len().max(1) as f64;
    let dim = strong_logits.first().map_or(0, Vec::len);
    let mut out = LossOut::zero(0, dim);
    for (r, z) in records.iter().zip(strong_logits) {
        if !r.mask_std {
            out.grads.push(vec![0.0; z.len()]);
            continue;
        }
        let (v, g) = soft_ce(z, r.q_prime.as_slice(), 1.0, r.weight / n);
        out.value += r.weight * v / n;
        out.grads.push(g);
    }
    Ok(out)
}

/// `(1/B_u) Σ (1 − M(x)) H(softmax(e_w / 5T_e), softmax(e_s / T_e))`.
/// The weak-view target is a constant; gradients flow to `e_strong` only.
pub fn loss_embed_align(
    records: &[PseudoRecord],
    e_weak: &[Vec<f64>],
    e_strong: &[Vec<f64>],
    t_e: f64,
) -> Result<LossOut> {
    check_batch("alignment loss (weak)", records.len(), e_weak)?;
    check_batch("alignment loss (strong)", records.len(), e_strong)?;
    let n = records.len().max(1) as f64;
    let mut out = LossOut::zero(0, 0);
    for ((r, ew), es) in records.iter().zip(e_weak).zip(e_strong) {
        if r.mask_std {
            out.grads.push(vec![0.0; es.len()]);
            continue;
        }
        if ew.len() != es.len() {
            return Err(Error::Inconsistent("weak and strong embeddings differ in length".into()));
        }
        let target = softmax_raw(ew, 5.0 * t_e);
        let (v, g) = soft_ce(es, &target, t_e, 1.0 / n);
        out.value += v / n;
        out.grads.push(g);
    }
    Ok(out)
}

/// Mean cross-entropy of the balanced head against the labels. `adjust`,
/// when given, is added to the logits first (logit-adjusted training).
pub fn loss_balanced_sup(logits: &[Vec<f64>], labels: &[usize], adjust: Option<&[f64]>) -> Result<LossOut> {
    supervised(logits, labels, adjust)
}

/// `(1/B_u) Σ M̃(x) H(q′, softmax(f̃(A_s(x))))`; no hardness weight.
pub fn loss_balanced_unsup(
    records: &[PseudoRecord],
    strong_logits: &[Vec<f64>],
    adjust: Option<&[f64]>,
) -> Result<LossOut> {
    check_batch("balanced unlabeled loss", records.len(), strong_logits)?;
    let n = records.len().max(1) as f64;
    let mut out = LossOut::zero(0, 0);
    for (r, z) in records.iter().zip(strong_logits) {
        if !r.mask_bal {
            out.grads.push(vec![0.0; z.len()]);
            continue;
        }
        let (v, g) = soft_ce(&shifted(z, adjust), r.q_prime.as_slice(), 1.0, 1.0 / n);
        out.value += v / n;
        out.grads.push(g);
    }
    Ok(out)
}

/// Values of the five terms for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub s: f64,
    pub u: f64,
    pub ea: f64,
    pub bs: f64,
    pub bu: f64,
}

/// Unweighted sum of the five terms.
pub fn loss_total(terms: &LossTerms) -> Result<f64> {
    let parts = [terms.s, terms.u, terms.ea, terms.bs, terms.bu];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            epoch: 0,
            step: 0,
            detail: format!("non-finite loss term in {terms:?}"),
        });
    }
    Ok(parts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;

    fn record(q_prime: ProbVec, mask: bool, weight: f64) -> PseudoRecord {
        PseudoRecord {
            q: q_prime.clone(),
            q_hat: q_prime.clone(),
            q_prime,
            conf: 1.0,
            mask_std: mask,
            mask_bal: mask,
            weight,
        }
    }

    #[test]
    fn supervised_examples() {
        let big = 800.0;
        let perfect = loss_supervised(&[vec![big, 0.0, 0.0], vec![0.0, big, 0.0]], &[0, 1]).unwrap();
        assert!(perfect.value < 1e-300);
        let uniform = loss_supervised(&vec![vec![0.0; 10]; 3], &[0, 4, 9]).unwrap();
        assert!((uniform.value - 10f64.ln()).abs() < 1e-12);
        let half = loss_supervised(&[vec![0.0, 0.0]], &[1]).unwrap();
        assert!((half.value - 2f64.ln()).abs() < 1e-15);
        assert!(loss_supervised(&[], &[]).is_err());
        assert!(loss_supervised(&[vec![0.0, 0.0]], &[2]).is_err());
    }

    #[test]
    fn unlabeled_examples() {
        let recs = vec![record(ProbVec::one_hot(0, 2), false, 1.0); 3];
        assert_eq!(loss_unlabeled(&recs, &vec![vec![1.0, 2.0]; 3]).unwrap().value, 0.0);

        let one = [record(ProbVec::one_hot(1, 2), true, 1.0)];
        let l = loss_unlabeled(&one, &[vec![0.3, 0.3]]).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-15);

        let recs: Vec<_> = (0..4).map(|i| record(ProbVec::one_hot(i % 3, 3), i != 2, 0.6)).collect();
        let doubled: Vec<_> = recs.iter().map(|r| PseudoRecord { weight: 1.2, ..r.clone() }).collect();
        let z: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, -0.2, 0.4]).collect();
        let a = loss_unlabeled(&recs, &z).unwrap().value;
        let b = loss_unlabeled(&doubled, &z).unwrap().value;
        assert!((b - 2.0 * a).abs() < 1e-15);

        assert!(matches!(loss_unlabeled(&recs, &z[..3]), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn embed_align_examples() {
        let masked = vec![record(ProbVec::one_hot(0, 2), true, 1.0); 2];
        let e = vec![vec![0.4; 16]; 2];
        assert_eq!(loss_embed_align(&masked, &e, &e, 0.1).unwrap().value, 0.0);

        let unmasked = vec![record(ProbVec::one_hot(0, 2), false, 1.0); 2];
        let zeros = vec![vec![0.0; 16]; 2];
        let l = loss_embed_align(&unmasked, &zeros, &zeros, 0.1).unwrap();
        assert!((l.value - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn embed_align_decreases_toward_weak_direction() {
        // Fixed weak embedding; the strong view moves along c · e_w. The
        // weak target has temperature 5 T_e, so the minimizing scale is
        // c = 1/5, and the loss falls as c approaches it from above.
        let ew = vec![vec![0.9, -0.3, 0.1, 0.5]];
        let rec = [record(ProbVec::one_hot(0, 2), false, 1.0)];
        let loss_at = |c: f64| {
            let es = vec![ew[0].iter().map(|v| c * v).collect::<Vec<f64>>()];
            loss_embed_align(&rec, &ew, &es, 0.1).unwrap().value
        };
        let cs = [3.0, 2.0, 1.0, 0.5, 0.25];
        for w in cs.windows(2) {
            assert!(loss_at(w[1]) < loss_at(w[0]));
        }
        assert!(loss_at(-1.0) > loss_at(0.0));
    }

    #[test]
    fn balanced_examples() {
        let recs = vec![PseudoRecord { mask_bal: false, ..record(ProbVec::one_hot(0, 3), true, 1.0) }; 2];
        assert_eq!(loss_balanced_unsup(&recs, &vec![vec![0.0; 3]; 2], None).unwrap().value, 0.0);

        let perfect = loss_balanced_sup(&[vec![900.0, 0.0]], &[0], None).unwrap();
        assert!(perfect.value < 1e-300);

        let one = [PseudoRecord { mask_std: false, ..record(ProbVec::one_hot(2, 4), true, 0.5) }];
        let l = loss_balanced_unsup(&one, &[vec![0.0; 4]], None).unwrap();
        assert!((l.value - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logit_adjustment_shifts_logits() {
        let adjust = [0.5f64.ln(), 0.5f64.ln()];
        let a = loss_balanced_sup(&[vec![0.2, 0.1]], &[1], Some(&adjust)).unwrap();
        let b = loss_balanced_sup(&[vec![0.2, 0.1]], &[1], None).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
        let skew = [0.9f64.ln(), 0.1f64.ln()];
        let c = loss_balanced_sup(&[vec![0.0, 0.0]], &[1], Some(&skew)).unwrap();
        assert!((c.value + 0.1f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        assert_eq!(loss_total(&LossTerms::default()).unwrap(), 0.0);
        let t = LossTerms { s: 1.0, u: 2.0, ea: 3.0, bs: 4.0, bu: 5.0 };
        assert_eq!(loss_total(&t).unwrap(), 15.0);
        let bad = LossTerms { ea: f64::NAN, ..t };
        assert!(matches!(loss_total(&bad), Err(Error::Diverged { .. })));
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let recs = vec![
            PseudoRecord {
                q_prime: ProbVec::new(vec![0.7, 0.2, 0.1]).unwrap(),
                ..record(ProbVec::one_hot(0, 3), true, 0.8)
            },
            record(ProbVec::one_hot(2, 3), false, 0.6),
            record(ProbVec::one_hot(1, 3), true, 0.9),
        ];
        let z0 = vec![0.3, -0.8, 0.5, 1.1, 0.2, -0.4, 0.0, 0.7, -1.3];
        let rows = |z: &[f64]| z.chunks(3).map(|c| c.to_vec()).collect::<Vec<_>>();
        let adjust = [0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()];

        let cases: Vec<Box<dyn Fn(&[Vec<f64>]) -> LossOut>> = vec![
            Box::new(|z| loss_supervised(z, &[0, 2, 1]).unwrap()),
            Box::new(|z| loss_unlabeled(&recs, z).unwrap()),
            Box::new(|z| loss_balanced_sup(z, &[1, 1, 0], Some(&adjust)).unwrap()),
            Box::new(|z| loss_balanced_unsup(&recs, z, Some(&adjust)).unwrap()),
            Box::new(|z| loss_embed_align(&recs, &rows(&[0.2, 0.9, -0.4, 0.1, 0.3, 0.3, -0.6, 0.0, 0.5]), z, 0.1).unwrap()),
        ];
        for f in &cases {
            let analytic: Vec<f64> = f(&rows(&z0)).grads.concat();
            let err = grad_check(|z| f(&rows(z)).value, &z0, &analytic, 1e-5).unwrap();
            assert!(err < 1e-6, "relative error {err}");
        }
    }
}
