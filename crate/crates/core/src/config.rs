//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key of
//! [`PipelineConfig`] is settable; unknown keys are rejected. `preset`
//! (`default` or `benchmark`) is applied first and `rounds` before
//! `theta_schedule`, regardless of their position in the file.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::{linear_theta, PipelineConfig};

/// Settable keys, in the order the resolved dump lists them.
pub const KEYS: &[&str] = &[
    "seed",
    "encoder_widths",
    "head_hidden",
    "num_classes",
    "ema_momentum",
    "tau_student",
    "tau_teacher",
    "loss_space",
    "lr",
    "batch_size",
    "eval_batch",
    "step1_epochs",
    "rounds",
    "epochs_per_round",
    "theta_schedule",
    "lambda_nc",
    "sd_step1",
    "sd_step2",
    "self_training",
    "refinement",
    "epsilon_mode",
    "epsilon",
    "target_degree",
    "gcn_hidden",
    "gcn_epochs",
    "gcn_lr",
    "mask_frac",
    "jitter_sigma",
    "jitter_clip",
    "scale_low",
    "scale_high",
    "elastic_grid",
    "elastic_mag",
    "removal",
    "removal_low",
    "removal_high",
];

/// `(key, value, line number)` triples in file order.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {lineno}: expected key = value")));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {lineno}: empty key")));
        }
        if let Some((_, _, first)) = out.iter().find(|(key, _, _)| key == k) {
            return Err(Error::Config(format!("line {lineno}: key {k:?} already set on line {first}")));
        }
        out.push((k.to_string(), v.to_string(), lineno));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let enc = &mut self.encoder;
        match key {
            "preset" => {
                let seed = self.seed;
                *self = match v {
                    "default" => PipelineConfig::default(),
                    "benchmark" => PipelineConfig::benchmark(),
                    _ => return Err(Error::Config(format!("preset must be default|benchmark, got {v:?}"))),
                };
                self.seed = seed;
            }
            "seed" => self.seed = parse(key, v)?,
            "encoder_widths" => {
                let w: Vec<usize> = parse_list(key, v)?;
                let Some(&d) = w.last() else {
                    return Err(Error::Config("encoder_widths needs at least one width".into()));
                };
                enc.point_mlp_widths = std::iter::once(3).chain(w).collect();
                enc.head_widths[0] = d;
            }
            "head_hidden" => {
                let h: Vec<usize> = parse_list(key, v)?;
                let (d, k) = (enc.descriptor_dim(), enc.num_classes());
                enc.head_widths = std::iter::once(d).chain(h).chain(std::iter::once(k)).collect();
            }
            "num_classes" => *enc.head_widths.last_mut().expect("head has an output layer") = parse(key, v)?,
            "ema_momentum" => self.ema_momentum = parse(key, v)?,
            "tau_student" => self.distill.tau_student = parse(key, v)?,
            "tau_teacher" => self.distill.tau_teacher = parse(key, v)?,
            "loss_space" => self.distill.loss_space = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "eval_batch" => self.eval_batch = parse(key, v)?,
            "step1_epochs" => self.schedule.step1_epochs = parse(key, v)?,
            "rounds" => {
                self.schedule.rounds = parse(key, v)?;
                self.schedule.theta = linear_theta(0.2, 1.0, self.schedule.rounds);
            }
            "epochs_per_round" => self.schedule.epochs_per_round = parse(key, v)?,
            "theta_schedule" => self.schedule.theta = parse_list(key, v)?,
            "lambda_nc" => self.schedule.lambda_nc = parse(key, v)?,
            "sd_step1" => self.toggles.sd_step1 = parse_bool(key, v)?,
            "sd_step2" => self.toggles.sd_step2 = parse_bool(key, v)?,
            "self_training" => self.toggles.self_training = parse_bool(key, v)?,
            "refinement" => self.toggles.refinement = parse_bool(key, v)?,
            "epsilon_mode" => self.epsilon_mode = v.parse()?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "target_degree" => self.target_degree = parse(key, v)?,
            "gcn_hidden" => {
                let h: Vec<usize> = parse_list(key, v)?;
                self.gcn.hidden = h
                    .try_into()
                    .map_err(|_| Error::Config("gcn_hidden takes exactly two widths".into()))?;
            }
            "gcn_epochs" => self.gcn.epochs = parse(key, v)?,
            "gcn_lr" => self.gcn.lr = parse(key, v)?,
            "mask_frac" => self.gcn.mask_frac = parse(key, v)?,
            "jitter_sigma" => self.augment.jitter_sigma = parse(key, v)?,
            "jitter_clip" => self.augment.jitter_clip = parse(key, v)?,
            "scale_low" => self.augment.scale_low = parse(key, v)?,
            "scale_high" => self.augment.scale_high = parse(key, v)?,
            "elastic_grid" => self.augment.elastic_grid = parse(key, v)?,
            "elastic_mag" => self.augment.elastic_mag = parse(key, v)?,
            "removal" => self.augment.enable_removal = parse_bool(key, v)?,
            "removal_low" => self.augment.removal_frac_low = parse(key, v)?,
            "removal_high" => self.augment.removal_frac_high = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `entries` in precedence order (`preset`, then `rounds`, then
    /// the rest as given).
    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, entries: &[(K, V)]) -> Result<()> {
        let rank = |k: &str| match k {
            "preset" => 0,
            "rounds" => 1,
            _ => 2,
        };
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&i| rank(entries[i].0.as_ref()));
        for i in order {
            self.set(entries[i].0.as_ref(), entries[i].1.as_ref())?;
        }
        Ok(())
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let entries: Vec<(String, String)> = parse_entries(text)?.into_iter().map(|(k, v, _)| (k, v)).collect();
        let mut cfg = PipelineConfig::default();
        cfg.apply(&entries)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let enc = &self.encoder;
        let head_hidden = &enc.head_widths[1..enc.head_widths.len() - 1];
        let a = &self.augment;
        let values = [
            self.seed.to_string(),
            join(&enc.point_mlp_widths[1..]),
            join(head_hidden),
            enc.num_classes().to_string(),
            self.ema_momentum.to_string(),
            self.distill.tau_student.to_string(),
            self.distill.tau_teacher.to_string(),
            self.distill.loss_space.to_string(),
            self.lr.to_string(),
            self.batch_size.to_string(),
            self.eval_batch.to_string(),
            self.schedule.step1_epochs.to_string(),
            self.schedule.rounds.to_string(),
            self.schedule.epochs_per_round.to_string(),
            join(&self.schedule.theta),
            self.schedule.lambda_nc.to_string(),
            self.toggles.sd_step1.to_string(),
            self.toggles.sd_step2.to_string(),
            self.toggles.self_training.to_string(),
            self.toggles.refinement.to_string(),
            self.epsilon_mode.to_string(),
            self.epsilon.to_string(),
            self.target_degree.to_string(),
            join(&self.gcn.hidden),
            self.gcn.epochs.to_string(),
            self.gcn.lr.to_string(),
            self.gcn.mask_frac.to_string(),
            a.jitter_sigma.to_string(),
            a.jitter_clip.to_string(),
            a.scale_low.to_string(),
            a.scale_high.to_string(),
            a.elastic_grid.to_string(),
            a.elastic_mag.to_string(),
            a.enable_removal.to_string(),
            a.removal_frac_low.to_string(),
            a.removal_frac_high.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_config_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
