//! Training loop: batch assembly, the per-step pipeline, warmup and mixing
//! schedules, evaluation and per-epoch metrics.
//!
//! One step runs, in order: augment the unlabeled batch into weak and strong
//! views; forward both; build pseudo-label records from the weak view;
//! semantic labels and mixing (after warmup, when enabled); the active loss
//! terms; backward and an SGD update; memory-bank inserts for masked samples
//! plus the decay tick; tracker update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{augment_strong, augment_weak, AugmentConfig, Dataset};
use crate::error::{Error, Result};
use crate::model::{backward, forward, sgd_step, ForwardTrace, ModelParams, ModelShape, OptState, OutputGrads};
use crate::numcore::{argmax, softmax, ProbVec};
use crate::semi::{
    class_weight, hardness_weight, loss_balanced_sup, loss_balanced_unsup, loss_embed_align,
    loss_supervised, loss_total, loss_unlabeled, mask_bal, mask_std, mix_labels, mix_schedule,
    semantic_label, BankPolicy, ClassDistTracker, LossTerms, MemoryBank, PseudoRecord, SemiHyper,
};

/// Any single loss above this is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Component switches. All on is the full method; all off is FixMatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    /// Confidence-decay bank; off falls back to a per-class FIFO queue.
    pub use_bank: bool,
    /// Entropy reweighting and the lowered threshold; off uses `warmup_tau`
    /// and unit weights throughout.
    pub use_oheml: bool,
    pub use_ea: bool,
    /// Semantic-label mixing; off keeps `q′ = q`.
    pub use_plce: bool,
    /// Balanced head losses; off also makes the standard head the headline.
    pub use_balanced: bool,
}

impl Ablation {
    pub const FULL: Ablation =
        Ablation { use_bank: true, use_oheml: true, use_ea: true, use_plce: true, use_balanced: true };
    pub const BASELINE: Ablation = Ablation {
        use_bank: false,
        use_oheml: false,
        use_ea: false,
        use_plce: false,
        use_balanced: false,
    };
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_total: usize,
    pub steps_per_epoch: usize,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub warmup_epochs: usize,
    pub warmup_tau: f64,
    pub hyper: SemiHyper,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub embed: usize,
    pub seed: u64,
    pub flags: Ablation,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_total: 40,
            steps_per_epoch: 50,
            batch_labeled: 32,
            batch_unlabeled: 64,
            warmup_epochs: 5,
            warmup_tau: 0.95,
            hyper: SemiHyper::default(),
            lr: 0.03,
            momentum: 0.9,
            weight_decay: 5e-4,
            hidden: 64,
            embed: 16,
            seed: 0,
            flags: Ablation::FULL,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        self.hyper.validate()?;
        self.augment.validate()?;
        if self.epochs_total > 0 && self.warmup_epochs >= self.epochs_total {
            return fail(format!(
                "warmup_epochs ({}) must be smaller than epochs_total ({})",
                self.warmup_epochs, self.epochs_total
            ));
        }
        if self.epochs_total == 0 && self.warmup_epochs > 0 {
            return fail("warmup_epochs must be 0 when epochs_total is 0".into());
        }
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 || self.steps_per_epoch == 0 {
            return fail("batch sizes and steps_per_epoch must be >= 1".into());
        }
        if self.hidden == 0 || self.embed == 0 {
            return fail("hidden and embed widths must be >= 1".into());
        }
        if !(self.warmup_tau > 0.0 && self.warmup_tau < 1.0) {
            return fail(format!("warmup_tau must lie in (0, 1), got {}", self.warmup_tau));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }

    pub fn shape(&self, d: usize, k: usize) -> ModelShape {
        ModelShape { d, hidden: self.hidden, embed: self.embed, k }
    }

    fn in_warmup(&self, epoch: usize) -> bool {
        epoch < self.warmup_epochs
    }

    /// Threshold in force at `epoch`.
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if self.in_warmup(epoch) || !self.flags.use_oheml {
            self.warmup_tau
        } else {
            self.hyper.tau
        }
    }
}

/// Inputs of one step, already augmented. `hidden` holds the unlabeled
/// samples' true classes and is read only for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    pub labeled: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub weak: Vec<Vec<f64>>,
    pub strong: Vec<Vec<f64>>,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub terms: LossTerms,
    pub total: f64,
    pub records: Vec<PseudoRecord>,
    /// Masked samples whose `q′` argmax equals the hidden class.
    pub used_correct: usize,
}

impl StepOutcome {
    pub fn masked(&self) -> usize {
        self.records.iter().filter(|r| r.mask_std).count()
    }
}

/// Mutable training state: parameters, optimizer, bank, trackers and the
/// sampling RNG.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub opt: OptState,
    pub bank: MemoryBank,
    pub tracker: ClassDistTracker,
    rng: ChaCha8Rng,
    scale: Vec<f64>,
    step: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.labeled.is_empty() || dataset.unlabeled.is_empty() {
            return Err(Error::invalid("training needs labeled and unlabeled samples"));
        }
        let shape = config.shape(dataset.d, dataset.k);
        let h = &config.hyper;
        let policy = if config.flags.use_bank { BankPolicy::ConfidenceDecay } else { BankPolicy::Fifo };
        Ok(TrainState {
            config: config.clone(),
            params: ModelParams::init(shape, config.seed),
            opt: OptState::new(shape, config.lr, config.momentum, config.weight_decay),
            bank: MemoryBank::with_policy(dataset.k, h.bank_capacity, h.beta, h.decay_interval, policy),
            tracker: ClassDistTracker::new(dataset.k, h.rho, h.pi_smoothing),
            // Separate stream from the weight init, which uses `seed` directly.
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_BA7C_0000_0001),
            scale: dataset.feature_std(),
            step: 0,
        })
    }

    /// Global step counter.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Uniform-with-replacement draw of both batches, then augmentation.
    /// Labeled inputs get the weak view.
    pub fn draw_batch(&mut self, dataset: &Dataset) -> StepBatch {
        let cfg = &self.config;
        let rng = &mut self.rng;
        let li: Vec<usize> =
            (0..cfg.batch_labeled).map(|_| rng.random_range(0..dataset.labeled.len())).collect();
        let ui: Vec<usize> =
            (0..cfg.batch_unlabeled).map(|_| rng.random_range(0..dataset.unlabeled.len())).collect();
        let aug = &cfg.augment;
        let labeled =
            li.iter().map(|&i| augment_weak(&dataset.labeled[i].features, aug, &self.scale, rng)).collect();
        let labels = li.iter().map(|&i| dataset.labeled[i].label).collect();
        let mut weak = Vec::with_capacity(ui.len());
        let mut strong = Vec::with_capacity(ui.len());
        for &i in &ui {
            let x = &dataset.unlabeled[i].features;
            weak.push(augment_weak(x, aug, &self.scale, rng));
            strong.push(augment_strong(x, aug, &self.scale, rng));
        }
        let hidden = ui.iter().map(|&i| dataset.unlabeled[i].hidden_label).collect();
        StepBatch { labeled, labels, weak, strong, hidden }
    }

    /// Draws a batch and runs one step on it.
    pub fn train_step(&mut self, dataset: &Dataset, epoch: usize) -> Result<StepOutcome> {
        let batch = self.draw_batch(dataset);
        self.step_on_views(&batch, epoch)
    }

    /// Runs the step pipeline on pre-augmented views.
    pub fn step_on_views(&mut self, batch: &StepBatch, epoch: usize) -> Result<StepOutcome> {
        let cfg = self.config.clone();
        let h = &cfg.hyper;
        let flags = cfg.flags;
        let k = self.params.shape.k;
        let warm = cfg.in_warmup(epoch);
        let tau = cfg.tau_at(epoch);
        let mixing = !warm && flags.use_plce;
        let balanced = !warm && flags.use_balanced;
        let n_l = batch.labeled.len();
        let n_u = batch.weak.len();
        if batch.labels.len() != n_l || batch.strong.len() != n_u || batch.hidden.len() != n_u {
            return Err(Error::Inconsistent("step batch parts differ in length".into()));
        }

        let lab: Vec<ForwardTrace> =
            batch.labeled.iter().map(|x| forward(&self.params, x)).collect::<Result<_>>()?;
        let weak: Vec<ForwardTrace> =
            batch.weak.iter().map(|x| forward(&self.params, x)).collect::<Result<_>>()?;
        let strong: Vec<ForwardTrace> =
            batch.strong.iter().map(|x| forward(&self.params, x)).collect::<Result<_>>()?;

        let pi = self.tracker.pi();
        let protos = if mixing { Some(self.bank.prototypes()) } else { None };
        let gamma = mix_schedule(
            epoch.saturating_sub(cfg.warmup_epochs),
            cfg.epochs_total.saturating_sub(cfg.warmup_epochs),
            h.alpha,
        );
        let mut records = Vec::with_capacity(n_u);
        for (w, s) in weak.iter().zip(&strong) {
            let p = softmax(&w.logits_std, 1.0)?;
            let q = ProbVec::one_hot(p.argmax(), k);
            let weight = if !warm && flags.use_oheml {
                hardness_weight(&softmax(&s.logits_std, 1.0)?, h.s)
            } else {
                1.0
            };
            let m_bal = balanced && mask_bal(&softmax(&w.logits_bal, 1.0)?, &pi, h.t_b, tau);
            let (q_hat, q_prime) = match &protos {
                Some(pr) => match semantic_label(&s.embedding, pr, h.t_p) {
                    Ok(q_hat) => {
                        let mixed = mix_labels(&q, &q_hat, gamma, class_weight(&self.tracker, p.argmax()))?;
                        (q_hat, mixed)
                    }
                    Err(Error::Unavailable) => (q.clone(), q.clone()),
                    Err(e) => return Err(e),
                },
                None => (q.clone(), q.clone()),
            };
            records.push(PseudoRecord {
                q,
                q_hat,
                q_prime,
                conf: p.max(),
                mask_std: mask_std(&p, tau),
                mask_bal: m_bal,
                weight,
            });
        }

        let std_lab: Vec<Vec<f64>> = lab.iter().map(|t| t.logits_std.clone()).collect();
        let std_strong: Vec<Vec<f64>> = strong.iter().map(|t| t.logits_std.clone()).collect();
        let l_s = loss_supervised(&std_lab, &batch.labels)?;
        let l_u = loss_unlabeled(&records, &std_strong)?;
        let l_ea = if !warm && flags.use_ea {
            let ew: Vec<Vec<f64>> = weak.iter().map(|t| t.embedding.clone()).collect();
            let es: Vec<Vec<f64>> = strong.iter().map(|t| t.embedding.clone()).collect();
            Some(loss_embed_align(&records, &ew, &es, h.t_e)?)
        } else {
            None
        };
        let (l_bs, l_bu) = if balanced {
            let adjust: Option<Vec<f64>> = h
                .bal_logit_adjust
                .then(|| pi.as_slice().iter().map(|p| h.t_b * p.ln()).collect());
            let bal_lab: Vec<Vec<f64>> = lab.iter().map(|t| t.logits_bal.clone()).collect();
            let bal_strong: Vec<Vec<f64>> = strong.iter().map(|t| t.logits_bal.clone()).collect();
            (
                Some(loss_balanced_sup(&bal_lab, &batch.labels, adjust.as_deref())?),
                Some(loss_balanced_unsup(&records, &bal_strong, adjust.as_deref())?),
            )
        } else {
            (None, None)
        };

        let value = |l: &Option<crate::semi::LossOut>| l.as_ref().map_or(0.0, |l| l.value);
        let terms = LossTerms { s: l_s.value, u: l_u.value, ea: value(&l_ea), bs: value(&l_bs), bu: value(&l_bu) };
        let total = loss_total(&terms).map_err(|e| self.diverged(epoch, e.to_string()))?;
        if [terms.s, terms.u, terms.ea, terms.bs, terms.bu].iter().any(|v| *v > DIVERGENCE_LIMIT) {
            return Err(self.diverged(epoch, format!("loss term above {DIVERGENCE_LIMIT}: {terms:?}")));
        }

        let mut outs = Vec::with_capacity(n_l + n_u);
        for i in 0..n_l {
            let mut g = OutputGrads::default();
            g.add_logits_std(&l_s.grads[i]);
            if let Some(l) = &l_bs {
                g.add_logits_bal(&l.grads[i]);
            }
            outs.push(g);
        }
        for i in 0..n_u {
            let mut g = OutputGrads::default();
            g.add_logits_std(&l_u.grads[i]);
            if let Some(l) = &l_ea {
                g.add_embedding(&l.grads[i]);
            }
            if let Some(l) = &l_bu {
                g.add_logits_bal(&l.grads[i]);
            }
            outs.push(g);
        }
        let traces: Vec<ForwardTrace> = lab.into_iter().chain(strong.iter().cloned()).collect();
        let grads = backward(&self.params, &traces, &outs)?;
        sgd_step(&mut self.params, &grads, &mut self.opt)?;
        if !self.params.all_finite() {
            return Err(self.diverged(epoch, "non-finite parameters after update".into()));
        }

        let mut pseudo = Vec::new();
        let mut used_correct = 0;
        for ((r, s), &y) in records.iter().zip(&strong).zip(&batch.hidden) {
            if !r.mask_std {
                continue;
            }
            let c = r.q_prime.argmax();
            self.bank.insert(c, &s.embedding, r.q_prime.max())?;
            pseudo.push(c);
            if c == y {
                used_correct += 1;
            }
        }
        self.bank.tick();
        self.tracker.update(&batch.labels, &pseudo);
        self.step += 1;

        Ok(StepOutcome { terms, total, records, used_correct })
    }

    fn diverged(&self, epoch: usize, detail: String) -> Error {
        Error::Diverged { epoch, step: self.step, detail }
    }
}

/// Top-1 accuracy of both heads on a labeled split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub acc_std: f64,
    pub acc_bal: f64,
    pub per_class_std: Vec<f64>,
    pub per_class_bal: Vec<f64>,
    /// `confusion[true][predicted]` counts.
    pub confusion_std: Vec<Vec<usize>>,
    pub confusion_bal: Vec<Vec<usize>>,
}

/// Evaluates both heads on `(features, label)` pairs.
pub fn evaluate(params: &ModelParams, samples: &[(&[f64], usize)]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation on an empty split"));
    }
    let k = params.shape.k;
    let mut conf_std = vec![vec![0usize; k]; k];
    let mut conf_bal = vec![vec![0usize; k]; k];
    for &(x, y) in samples {
        if y >= k {
            return Err(Error::invalid(format!("label {y} out of range for {k} classes")));
        }
        let t = forward(params, x)?;
        conf_std[y][argmax(&t.logits_std)] += 1;
        conf_bal[y][argmax(&t.logits_bal)] += 1;
    }
    let summarize = |c: &Vec<Vec<usize>>| {
        let correct: usize = (0..k).map(|i| c[i][i]).sum();
        let per: Vec<f64> = (0..k)
            .map(|i| {
                let n: usize = c[i].iter().sum();
                if n == 0 {
                    0.0
                } else {
                    c[i][i] as f64 / n as f64
                }
            })
            .collect();
        (correct as f64 / samples.len() as f64, per)
    };
    let (acc_std, per_class_std) = summarize(&conf_std);
    let (acc_bal, per_class_bal) = summarize(&conf_bal);
    Ok(Evaluation { acc_std, acc_bal, per_class_std, per_class_bal, confusion_std: conf_std, confusion_bal: conf_bal })
}

/// Evaluates on the dataset's test split.
pub fn evaluate_test(params: &ModelParams, dataset: &Dataset) -> Result<Evaluation> {
    let samples: Vec<(&[f64], usize)> =
        dataset.test.iter().map(|s| (s.features.as_slice(), s.label)).collect();
    evaluate(params, &samples)
}

/// Fraction of `inputs` whose standard-head confidence exceeds `tau`.
pub fn probe_mask(params: &ModelParams, inputs: &[Vec<f64>], tau: f64) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::invalid("mask probe on no inputs"));
    }
    let mut hits = 0usize;
    for x in inputs {
        let t = forward(params, x)?;
        if mask_std(&softmax(&t.logits_std, 1.0)?, tau) {
            hits += 1;
        }
    }
    Ok(hits as f64 / inputs.len() as f64)
}

/// One record of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub acc_std: f64,
    pub acc_bal: f64,
    /// Per-class accuracy of the headline head.
    pub acc_per_class: Vec<f64>,
    pub mask_prob: f64,
    pub used_acc: f64,
    pub mean_weight: f64,
    pub gamma_u_est: f64,
    pub loss_s: f64,
    pub loss_u: f64,
    pub loss_ea: f64,
    pub loss_bs: f64,
    pub loss_bu: f64,
    /// Accuracy of the headline head: balanced when that branch is
    /// trained, standard otherwise.
    pub acc_headline: f64,
    /// Confusion matrix of the headline head, `[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Running sums over one epoch's steps.
#[derive(Debug, Default)]
struct EpochTally {
    steps: usize,
    draws: usize,
    masked: usize,
    used_correct: usize,
    weight_sum: f64,
    pseudo_counts: Vec<usize>,
    terms: LossTerms,
}

impl EpochTally {
    fn new(k: usize) -> Self {
        EpochTally { pseudo_counts: vec![0; k], ..Default::default() }
    }

    fn add(&mut self, out: &StepOutcome) {
        self.steps += 1;
        self.draws += out.records.len();
        self.masked += out.masked();
        self.used_correct += out.used_correct;
        for r in &out.records {
            self.weight_sum += r.weight;
            self.pseudo_counts[r.q.argmax()] += 1;
        }
        let t = &mut self.terms;
        t.s += out.terms.s;
        t.u += out.terms.u;
        t.ea += out.terms.ea;
        t.bs += out.terms.bs;
        t.bu += out.terms.bu;
    }

    fn finish(&self, epoch: usize, eval: &Evaluation, balanced_headline: bool) -> EpochMetrics {
        let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
        let max = *self.pseudo_counts.iter().max().unwrap_or(&0) as f64;
        let min = (*self.pseudo_counts.iter().min().unwrap_or(&0)).max(1) as f64;
        let (acc_headline, acc_per_class, confusion) = if balanced_headline {
            (eval.acc_bal, eval.per_class_bal.clone(), eval.confusion_bal.clone())
        } else {
            (eval.acc_std, eval.per_class_std.clone(), eval.confusion_std.clone())
        };
        let n = self.steps.max(1) as f64;
        EpochMetrics {
            epoch,
            acc_std: eval.acc_std,
            acc_bal: eval.acc_bal,
            acc_per_class,
            mask_prob: ratio(self.masked as f64, self.draws),
            used_acc: ratio(self.used_correct as f64, self.masked),
            mean_weight: ratio(self.weight_sum, self.draws),
            gamma_u_est: max / min,
            loss_s: self.terms.s / n,
            loss_u: self.terms.u / n,
            loss_ea: self.terms.ea / n,
            loss_bs: self.terms.bs / n,
            loss_bu: self.terms.bu / n,
            acc_headline,
            confusion,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Vec<EpochMetrics>,
    /// Index into `metrics` of the best headline accuracy (first on ties).
    pub best: Option<usize>,
    pub final_params: ModelParams,
    pub best_params: ModelParams,
}

impl RunResult {
    pub fn best_metrics(&self) -> Option<&EpochMetrics> {
        self.best.map(|i| &self.metrics[i])
    }
}

/// Full training run. `observer` sees every epoch's metrics together with
/// the parameters they were measured on.
pub fn run_experiment<F>(config: &TrainConfig, dataset: &Dataset, mut observer: F) -> Result<RunResult>
where
    F: FnMut(&EpochMetrics, &ModelParams),
{
    let mut state = TrainState::new(config, dataset)?;
    if dataset.test.is_empty() {
        return Err(Error::invalid("dataset has no test split"));
    }
    let balanced_headline = config.flags.use_balanced;
    let mut metrics: Vec<EpochMetrics> = Vec::with_capacity(config.epochs_total);
    let mut best: Option<usize> = None;
    let mut best_params = state.params.clone();
    for epoch in 0..config.epochs_total {
        let mut tally = EpochTally::new(dataset.k);
        for _ in 0..config.steps_per_epoch {
            let out = state.train_step(dataset, epoch)?;
            tally.add(&out);
        }
        let eval = evaluate_test(&state.params, dataset)?;
        let m = tally.finish(epoch, &eval, balanced_headline);
        log::info!(
            "epoch {epoch}: acc_std={:.4} acc_bal={:.4} mask_prob={:.3} used_acc={:.3}",
            m.acc_std, m.acc_bal, m.mask_prob, m.used_acc
        );
        observer(&m, &state.params);
        if best.is_none_or(|b| m.acc_headline > metrics[b].acc_headline) {
            best = Some(metrics.len());
            best_params = state.params.clone();
        }
        metrics.push(m);
    }
    Ok(RunResult { metrics, best, final_params: state.params, best_params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_dataset, ClassProfile};

    fn small_dataset() -> Dataset {
        let profile = ClassProfile { k: 3, n1: 30, m1: 60, gamma_l: 3.0, gamma_u: 3.0 };
        synth_dataset(&profile, 4, 4.0, 20, 7).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs_total: 4,
            steps_per_epoch: 10,
            batch_labeled: 8,
            batch_unlabeled: 16,
            warmup_epochs: 1,
            hidden: 8,
            embed: 4,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small_config().validate().is_ok());
        let bad = TrainConfig { warmup_epochs: 4, ..small_config() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { batch_labeled: 0, ..small_config() };
        assert!(bad.validate().is_err());
        let empty = TrainConfig { epochs_total: 0, warmup_epochs: 0, ..small_config() };
        assert!(empty.validate().is_ok());
    }

    #[test]
    fn threshold_schedule() {
        let c = small_config();
        assert_eq!(c.tau_at(0), 0.95);
        assert_eq!(c.tau_at(1), 0.7);
        let c = TrainConfig { flags: Ablation { use_oheml: false, ..Ablation::FULL }, ..c };
        assert_eq!(c.tau_at(3), 0.95);
    }

    #[test]
    fn warmup_leaves_balanced_head_untouched() {
        let ds = small_dataset();
        let cfg = TrainConfig { weight_decay: 0.0, ..small_config() };
        let mut st = TrainState::new(&cfg, &ds).unwrap();
        let before = st.params.head_bal.clone();
        for _ in 0..10 {
            let out = st.train_step(&ds, 0).unwrap();
            assert_eq!((out.terms.ea, out.terms.bs, out.terms.bu), (0.0, 0.0, 0.0));
            assert!(out.records.iter().all(|r| r.weight == 1.0 && r.q_prime == r.q));
        }
        assert_eq!(st.params.head_bal, before);
    }

    #[test]
    fn evaluate_constant_model_scores_one_over_k() {
        let ds = small_dataset();
        let params = ModelParams::zeros(ModelShape { d: 4, hidden: 3, embed: 2, k: 3 });
        let ev = evaluate_test(&params, &ds).unwrap();
        assert!((ev.acc_std - 1.0 / 3.0).abs() < 1e-12);
        assert!((ev.acc_bal - 1.0 / 3.0).abs() < 1e-12);
        let mean: f64 = ev.per_class_std.iter().sum::<f64>() / 3.0;
        assert!((mean - ev.acc_std).abs() < 1e-12);
        for (row, n) in ev.confusion_std.iter().zip(ds.test_counts()) {
            assert_eq!(row.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn evaluate_rejects_empty() {
        let params = ModelParams::zeros(ModelShape { d: 4, hidden: 3, embed: 2, k: 3 });
        assert!(matches!(evaluate(&params, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_epochs_gives_initial_params() {
        let ds = small_dataset();
        let cfg = TrainConfig { epochs_total: 0, warmup_epochs: 0, ..small_config() };
        let run = run_experiment(&cfg, &ds, |_, _| {}).unwrap();
        assert!(run.metrics.is_empty());
        assert!(run.best.is_none());
        assert_eq!(run.final_params, ModelParams::init(cfg.shape(4, 3), cfg.seed));
    }

    #[test]
    fn mask_prob_is_mean_of_mask_bits() {
        let ds = small_dataset();
        let cfg = small_config();
        let mut st = TrainState::new(&cfg, &ds).unwrap();
        let mut tally = EpochTally::new(3);
        let mut bits = Vec::new();
        for _ in 0..cfg.steps_per_epoch {
            let out = st.train_step(&ds, 2).unwrap();
            bits.extend(out.records.iter().map(|r| r.mask_std as u8 as f64));
            tally.add(&out);
        }
        let ev = evaluate_test(&st.params, &ds).unwrap();
        let m = tally.finish(2, &ev, true);
        let recount = bits.iter().sum::<f64>() / bits.len() as f64;
        assert_eq!(m.mask_prob, recount);
    }

    #[test]
    fn seeded_runs_repeat() {
        let ds = small_dataset();
        let a = run_experiment(&small_config(), &ds, |_, _| {}).unwrap();
        let b = run_experiment(&small_config(), &ds, |_, _| {}).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn learns_separable_data() {
        let ds = small_dataset();
        let cfg = TrainConfig { epochs_total: 10, steps_per_epoch: 30, ..small_config() };
        let run = run_experiment(&cfg, &ds, |_, _| {}).unwrap();
        let best = run.best_metrics().unwrap();
        assert!(best.acc_headline > 0.9, "{best:?}");
    }
}
