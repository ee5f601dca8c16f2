use std::fmt::Write as _;

use crate::analysis::synthetic::{sinusoid_images, CONTENT_RADIUS};
use crate::error::{Error, Result};
use crate::modulator::NoiseSample;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::config::{RunConfig, TrainConfig};
use super::forward::{backward, forward_with_noise, LossWeights};
use super::model::{is_encoder_param, ToyModel, PARAM_NAMES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub stage: u8,
    pub l_pix: f64,
    pub l_sem: f64,
    pub total: f64,
    pub corrupted_bands: usize,
}

/// Noise-free losses over the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub l_pix: f64,
    pub l_sem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: u8,
    pub start: Evaluation,
    pub end: Evaluation,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub log: Vec<LogRow>,
    pub stages: Vec<StageSummary>,
}

pub const LOG_HEADER: &str = "step,stage,l_pix,l_sem,total,corrupted_bands";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{}",
            r.step, r.stage, r.l_pix, r.l_sem, r.total, r.corrupted_bands
        );
    }
    out
}

/// Band-limited training images with no texture.
pub fn synthetic_dataset(n: usize, size: usize, seed: u64) -> Result<Tensor> {
    sinusoid_images(&mut SeededRng::new(seed), n, size, CONTENT_RADIUS, 0.0)
}

pub fn evaluate(model: &ToyModel, dataset: &Tensor, k_base: usize) -> Result<Evaluation> {
    let (rows, gh, gw) = (dataset.shape()[0], model.config.grid().0, model.config.grid().1);
    let noise = NoiseSample::identity(&[rows, model.config.channels, gh, gw], model.config.bands)?;
    let w = LossWeights { lambda_sem: 0.0, k_base };
    let loss = forward_with_noise(model, dataset, &noise, w)?.loss;
    Ok(Evaluation {
        l_pix: loss.l_pix,
        l_sem: loss.l_sem,
    })
}

fn gather(dataset: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let items = idx
        .iter()
        .map(|&i| dataset.index_axis0(i))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&items)
}

/// A blown-up latent shows up first as FFT asymmetry.
fn diverged_on_asymmetry<T>(r: Result<T>, stage: u8, step: usize) -> Result<T> {
    match r {
        Err(Error::Symmetry { .. }) => Err(Error::Divergence { stage, step }),
        other => other,
    }
}

/// Runs the schedule with plain gradient descent. Batches are drawn
/// without replacement from a fresh permutation per epoch; both the batch
/// order and the corruption stream derive from each stage's seed.
pub fn train(model: ToyModel, dataset: &Tensor, schedule: &[TrainConfig]) -> Result<TrainOutcome> {
    let mut model = model;
    let n = dataset.shape()[0];
    let (gh, gw) = model.config.grid();
    let mut log = Vec::new();
    let mut stages = Vec::with_capacity(schedule.len());
    let mut step = 0;
    for (i, cfg) in schedule.iter().enumerate() {
        cfg.validate(model.config.bands)?;
        if i > 0 && cfg.stage <= schedule[i - 1].stage {
            return Err(Error::arg("stages must be listed in ascending order"));
        }
        let batch = cfg.batch_size.min(n);
        let weights = LossWeights {
            lambda_sem: cfg.lambda_sem,
            k_base: cfg.k_base,
        };
        let start = evaluate(&model, dataset, cfg.k_base)?;
        let mut order_rng = SeededRng::derived(cfg.seed, u64::from(cfg.stage));
        let mut noise_rng = SeededRng::derived(cfg.seed, 16 + u64::from(cfg.stage));
        let mut perm = order_rng.permutation(n);
        let mut cursor = 0;
        for _ in 0..cfg.steps {
            if cursor + batch > n {
                perm = order_rng.permutation(n);
                cursor = 0;
            }
            let images = gather(dataset, &perm[cursor..cursor + batch])?;
            cursor += batch;
            let shape = [batch, model.config.channels, gh, gw];
            let noise = NoiseSample::draw(&shape, model.config.bands, &cfg.noise, &mut noise_rng)?;
            let cache = diverged_on_asymmetry(forward_with_noise(&model, &images, &noise, weights), cfg.stage, step)?;
            if !cache.loss.is_finite() {
                return Err(Error::Divergence { stage: cfg.stage, step });
            }
            log.push(LogRow {
                step,
                stage: cfg.stage,
                l_pix: cache.loss.l_pix,
                l_sem: cache.loss.l_sem,
                total: cache.loss.total,
                corrupted_bands: noise.corrupted_count(),
            });
            let grads = diverged_on_asymmetry(backward(&model, &cache), cfg.stage, step)?;
            for (name, g) in PARAM_NAMES.iter().zip(grads) {
                if cfg.encoder_frozen() && is_encoder_param(name) {
                    continue;
                }
                let p = model.param(name);
                let updated = p.zip_with(&g, |v, d| v - cfg.learning_rate * d)?;
                *model.param_mut(name) = updated;
            }
            if !model.all_finite() {
                return Err(Error::Divergence { stage: cfg.stage, step });
            }
            step += 1;
        }
        let end = diverged_on_asymmetry(evaluate(&model, dataset, cfg.k_base), cfg.stage, step)?;
        if !(end.l_pix.is_finite() && end.l_sem.is_finite()) {
            return Err(Error::Divergence { stage: cfg.stage, step });
        }
        stages.push(StageSummary {
            stage: cfg.stage,
            start,
            end,
        });
    }
    Ok(TrainOutcome { model, log, stages })
}

/// Builds the model and dataset described by `cfg` and trains it.
pub fn run(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = ToyModel::new(cfg.model, cfg.seed)?;
    let dataset = synthetic_dataset(cfg.images, cfg.model.image_h, cfg.seed.wrapping_add(1))?;
    train(model, &dataset, &cfg.stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulator::NoisePolicy;

    fn quick(stages: &str, steps: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "stage = {stages}\nsteps = {steps}\nimages = 8\nimage_size = 16\nbatch_size = 4\n"
        ))
        .unwrap()
    }

    #[test]
    fn stage_one_leaves_encoder_untouched() {
        let cfg = quick("1", "5");
        let before = ToyModel::new(cfg.model, cfg.seed).unwrap();
        let out = run(&cfg).unwrap();
        assert_eq!(out.model.enc_w, before.enc_w);
        assert_eq!(out.model.enc_b, before.enc_b);
        assert_ne!(out.model.dec_w, before.dec_w);
        assert_eq!(out.log.len(), 5);
        assert!(out.log.iter().all(|r| r.l_sem == 0.0));
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let cfg = quick("1,2,3", "3");
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(log_csv(&a.log), log_csv(&b.log));
    }

    #[test]
    fn stage_three_logs_corruption() {
        let out = run(&quick("3", "6")).unwrap();
        assert!(out.log.iter().all(|r| r.total.is_finite()));
        assert!(out.log.iter().map(|r| r.corrupted_bands).sum::<usize>() > 0);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let mut cfg = quick("1", "200");
        cfg.stages[0].learning_rate = 1e6;
        match run(&cfg) {
            Err(Error::Divergence { stage: 1, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_signal_gives_zero_gradients() {
        let cfg = quick("1", "1");
        let mut model = ToyModel::new(cfg.model, 0).unwrap();
        let images = synthetic_dataset(2, 16, 3).unwrap();
        let noise = NoiseSample::identity(&[2, cfg.model.channels, 4, 4], cfg.model.bands).unwrap();
        let w = LossWeights { lambda_sem: 1.0, k_base: 1 };
        model.dec_b = model.dec_b.map(|v| v + 0.1);
        let mut cache = forward_with_noise(&model, &images, &noise, w).unwrap();
        cache.images = cache.recon.clone();
        let grads = backward(&model, &cache).unwrap();
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn noise_policy_is_stage_three_only() {
        let mut cfg = quick("2", "1");
        cfg.stages[0].noise = NoisePolicy::CUTOFF;
        assert!(run(&cfg).is_err());
    }
}
