//! `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys and repeated keys are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Every addressable key, in the order `config_to_string` writes them.
pub const KEYS: &[&str] = &[
    "epochs_total",
    "steps_per_epoch",
    "batch_labeled",
    "batch_unlabeled",
    "warmup_epochs",
    "warmup_tau",
    "tau",
    "s",
    "t_e",
    "t_p",
    "t_b",
    "alpha",
    "beta",
    "decay_interval",
    "bank_capacity",
    "rho",
    "pi_smoothing",
    "bal_logit_adjust",
    "lr",
    "momentum",
    "weight_decay",
    "hidden",
    "embed",
    "seed",
    "use_bank",
    "use_oheml",
    "use_ea",
    "use_plce",
    "use_balanced",
    "sigma_weak",
    "sigma_strong",
    "drop_prob",
];

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse_line(line, format!("bad value {raw:?} for {key}")))
}

/// Sets one field by name.
pub fn set_key(cfg: &mut TrainConfig, line: usize, key: &str, raw: &str) -> Result<()> {
    let h = &mut cfg.hyper;
    let f = &mut cfg.flags;
    let a = &mut cfg.augment;
    match key {
        "epochs_total" => cfg.epochs_total = parse_value(line, key, raw)?,
        "steps_per_epoch" => cfg.steps_per_epoch = parse_value(line, key, raw)?,
        "batch_labeled" => cfg.batch_labeled = parse_value(line, key, raw)?,
        "batch_unlabeled" => cfg.batch_unlabeled = parse_value(line, key, raw)?,
        "warmup_epochs" => cfg.warmup_epochs = parse_value(line, key, raw)?,
        "warmup_tau" => cfg.warmup_tau = parse_value(line, key, raw)?,
        "tau" => h.tau = parse_value(line, key, raw)?,
        "s" => h.s = parse_value(line, key, raw)?,
        "t_e" => h.t_e = parse_value(line, key, raw)?,
        "t_p" => h.t_p = parse_value(line, key, raw)?,
        "t_b" => h.t_b = parse_value(line, key, raw)?,
        "alpha" => h.alpha = parse_value(line, key, raw)?,
        "beta" => h.beta = parse_value(line, key, raw)?,
        "decay_interval" => h.decay_interval = parse_value(line, key, raw)?,
        "bank_capacity" => h.bank_capacity = parse_value(line, key, raw)?,
        "rho" => h.rho = parse_value(line, key, raw)?,
        "pi_smoothing" => h.pi_smoothing = parse_value(line, key, raw)?,
        "bal_logit_adjust" => h.bal_logit_adjust = parse_value(line, key, raw)?,
        "lr" => cfg.lr = parse_value(line, key, raw)?,
        "momentum" => cfg.momentum = parse_value(line, key, raw)?,
        "weight_decay" => cfg.weight_decay = parse_value(line, key, raw)?,
        "hidden" => cfg.hidden = parse_value(line, key, raw)?,
        "embed" => cfg.embed = parse_value(line, key, raw)?,
        "seed" => cfg.seed = parse_value(line, key, raw)?,
        "use_bank" => f.use_bank = parse_value(line, key, raw)?,
        "use_oheml" => f.use_oheml = parse_value(line, key, raw)?,
        "use_ea" => f.use_ea = parse_value(line, key, raw)?,
        "use_plce" => f.use_plce = parse_value(line, key, raw)?,
        "use_balanced" => f.use_balanced = parse_value(line, key, raw)?,
        "sigma_weak" => a.sigma_weak = parse_value(line, key, raw)?,
        "sigma_strong" => a.sigma_strong = parse_value(line, key, raw)?,
        "drop_prob" => a.drop_prob = parse_value(line, key, raw)?,
        _ => return Err(Error::parse_line(line, format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Parses on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse_line(line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(Error::parse_line(line_no, format!("duplicate key {key:?}")));
        }
        set_key(&mut cfg, line_no, key, value)?;
        seen.push(key.to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Writes every key; `parse_config` of the output reproduces `cfg`.
pub fn config_to_string(cfg: &TrainConfig) -> String {
    let h = &cfg.hyper;
    let f = &cfg.flags;
    let a = &cfg.augment;
    let values: Vec<String> = vec![
        cfg.epochs_total.to_string(),
        cfg.steps_per_epoch.to_string(),
        cfg.batch_labeled.to_string(),
        cfg.batch_unlabeled.to_string(),
        cfg.warmup_epochs.to_string(),
        cfg.warmup_tau.to_string(),
        h.tau.to_string(),
        h.s.to_string(),
        h.t_e.to_string(),
        h.t_p.to_string(),
        h.t_b.to_string(),
        h.alpha.to_string(),
        h.beta.to_string(),
        h.decay_interval.to_string(),
        h.bank_capacity.to_string(),
        h.rho.to_string(),
        h.pi_smoothing.to_string(),
        h.bal_logit_adjust.to_string(),
        cfg.lr.to_string(),
        cfg.momentum.to_string(),
        cfg.weight_decay.to_string(),
        cfg.hidden.to_string(),
        cfg.embed.to_string(),
        cfg.seed.to_string(),
        f.use_bank.to_string(),
        f.use_oheml.to_string(),
        f.use_ea.to_string(),
        f.use_plce.to_string(),
        f.use_balanced.to_string(),
        a.sigma_weak.to_string(),
        a.sigma_strong.to_string(),
        a.drop_prob.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
