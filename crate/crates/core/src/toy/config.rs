//! Flat `key = value` training configuration.
//!
//! List-valued keys (`stage`, `steps`, `lr`, ...) take comma-separated
//! values, one per stage; a single value applies to every stage. `#`
//! starts a comment.
//!
//! ```text
//! stage = 1,2,3
//! steps = 300,150,150
//! lr = 0.5,0.05,0.01
//! batch_size = 16
//! lambda_sem = 1.0
//! k_base = 1
//! seed = 0
//! bands = 4
//! taper = 0.04
//! noise_mode = cutoff
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use super::model::ModelConfig;
use crate::error::{Error, Result};
use crate::modulator::{NoiseMode, NoisePolicy};
use crate::objectives::{DEFAULT_K_BASE, DEFAULT_LAMBDA_SEM};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: u8,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda_sem: f64,
    pub k_base: usize,
    pub seed: u64,
    pub noise: NoisePolicy,
}

impl TrainConfig {
    /// Stage 1 trains only the modulator and decoder; stages 2 and 3 also
    /// update the encoder.
    pub fn encoder_frozen(&self) -> bool {
        self.stage == 1
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        if !(1..=3).contains(&self.stage) {
            return Err(Error::arg(format!("stage {} outside 1..=3", self.stage)));
        }
        if self.noise.mode != NoiseMode::Off && self.stage != 3 {
            return Err(Error::arg(format!(
                "noise injection is only allowed in stage 3 (stage {} requested it)",
                self.stage
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::arg("learning rate must be positive and finite"));
        }
        if !(self.lambda_sem >= 0.0) {
            return Err(Error::arg("lambda_sem must be >= 0"));
        }
        if self.k_base == 0 || self.k_base > bands {
            return Err(Error::arg(format!("k_base {} outside 1..={bands}", self.k_base)));
        }
        self.noise.validate()
    }
}

/// Everything a `train-toy` or `gradcheck` run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub stages: Vec<TrainConfig>,
    pub images: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.stages.is_empty() {
            return Err(Error::arg("schedule has no stages"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate(self.model.bands)?;
            if i > 0 && s.stage <= self.stages[i - 1].stage {
                return Err(Error::arg("stages must be listed in ascending order"));
            }
        }
        if self.images == 0 {
            return Err(Error::arg("images must be >= 1"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        const KNOWN: [&str; 16] = [
            "stage", "steps", "lr", "batch_size", "lambda_sem", "k_base", "seed", "bands", "taper",
            "noise_mode", "images", "image_size", "patch", "channels", "kernel", "sigma_max",
        ];
        if let Some(unknown) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::arg(format!("unknown config key `{unknown}`")));
        }
        let defaults = ModelConfig::default();
        let scalar = |key: &str| kv.get(key).map(String::as_str);
        let stages: Vec<u8> = list(scalar("stage").unwrap_or("1,2,3"), "stage")?;
        let n = stages.len();
        let per_stage = |key: &str, default: &dyn Fn(u8) -> String| -> Result<Vec<String>> {
            let Some(given) = scalar(key) else {
                return Ok(stages.iter().map(|&s| default(s)).collect());
            };
            let raw: Vec<String> = given.split(',').map(|s| s.trim().to_string()).collect();
            match raw.len() {
                1 => Ok(vec![raw[0].clone(); n]),
                m if m == n => Ok(raw),
                m => Err(Error::arg(format!("`{key}` has {m} values for {n} stages"))),
            }
        };
        let steps: Vec<usize> = parse_all(&per_stage("steps", &|s| default_steps(s).to_string())?, "steps")?;
        let lr: Vec<f64> = parse_all(&per_stage("lr", &|s| default_lr(s).to_string())?, "lr")?;
        let batch: Vec<usize> = parse_all(&per_stage("batch_size", &|_| "16".into())?, "batch_size")?;
        let lambda: Vec<f64> = parse_all(
            &per_stage("lambda_sem", &|_| DEFAULT_LAMBDA_SEM.to_string())?,
            "lambda_sem",
        )?;
        let k_base: Vec<usize> = parse_all(&per_stage("k_base", &|_| DEFAULT_K_BASE.to_string())?, "k_base")?;
        let seed: u64 = one(scalar("seed").unwrap_or("0"), "seed")?;
        let noise_mode: NoiseMode = scalar("noise_mode").unwrap_or("cutoff").parse()?;
        let sigma_max: f64 = one(scalar("sigma_max").unwrap_or("1.0"), "sigma_max")?;
        let image_size: usize = one(scalar("image_size").unwrap_or(&defaults.image_h.to_string()), "image_size")?;

        let model = ModelConfig {
            patch: one(scalar("patch").unwrap_or(&defaults.patch.to_string()), "patch")?,
            channels: one(scalar("channels").unwrap_or(&defaults.channels.to_string()), "channels")?,
            bands: one(scalar("bands").unwrap_or(&defaults.bands.to_string()), "bands")?,
            taper: one(scalar("taper").unwrap_or(&defaults.taper.to_string()), "taper")?,
            kernel: one(scalar("kernel").unwrap_or(&defaults.kernel.to_string()), "kernel")?,
            image_h: image_size,
            image_w: image_size,
        };
        let stages = stages
            .iter()
            .enumerate()
            .map(|(i, &stage)| TrainConfig {
                stage,
                steps: steps[i],
                learning_rate: lr[i],
                batch_size: batch[i],
                lambda_sem: lambda[i],
                k_base: k_base[i],
                seed,
                noise: if stage == 3 {
                    NoisePolicy {
                        mode: noise_mode,
                        sigma_lo: 0.0,
                        sigma_hi: sigma_max,
                    }
                } else {
                    NoisePolicy::OFF
                },
            })
            .collect();
        let cfg = Self {
            model,
            stages,
            images: one(scalar("images").unwrap_or("64"), "images")?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn default_steps(stage: u8) -> usize {
    if stage == 1 {
        300
    } else {
        150
    }
}

/// Stage 1 only moves the decoder side and tolerates a large step; the
/// encoder has much higher curvature, and stage 3 trains on noisy bands.
pub fn default_lr(stage: u8) -> f64 {
    match stage {
        1 => 0.5,
        2 => 0.05,
        _ => 0.01,
    }
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("line {}: expected key = value", lineno + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::arg(format!("line {}: duplicate key `{}`", lineno + 1, k.trim())));
        }
    }
    Ok(out)
}

fn one<T: FromStr>(s: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| Error::arg(format!("`{key}`: cannot parse `{s}`: {e}")))
}

fn list<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|v| one(v, key)).collect()
}

fn parse_all<T: FromStr>(raw: &[String], key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.iter().map(|v| one(v, key)).collect()
}
