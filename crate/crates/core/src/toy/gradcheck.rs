//! Finite-difference check of [`backward`].

use crate::error::Result;
use crate::modulator::NoiseSample;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::forward::{backward, forward_with_noise, LossWeights};
use super::model::{ToyModel, PARAM_NAMES};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `|a - n| / max(|a|, |n|)` over the whole tensor.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.relative_error < self.tolerance)
    }
}

/// Central differences on every parameter of `model` at a fixed batch and
/// corruption. Checks at most `max_entries` entries per tensor (spread
/// evenly); the analytic gradient is restricted to the same entries.
pub fn gradcheck(
    model: &ToyModel,
    images: &Tensor,
    noise: &NoiseSample,
    weights: LossWeights,
    step: f64,
    tolerance: f64,
    max_entries: usize,
) -> Result<GradCheckReport> {
    let cache = forward_with_noise(model, images, noise, weights)?;
    let analytic = backward(model, &cache)?;
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(PARAM_NAMES.len());
    for (name, grad) in PARAM_NAMES.iter().zip(&analytic) {
        let len = grad.len();
        let stride = len.div_ceil(max_entries.max(1)).max(1);
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for idx in (0..len).step_by(stride) {
            let orig = probe.param(name).data()[idx];
            let set = |probe: &mut ToyModel, v: f64| {
                let mut data = probe.param(name).data().to_vec();
                data[idx] = v;
                let t = probe.param(name).with_data(data);
                *probe.param_mut(name) = t;
            };
            set(&mut probe, orig + step);
            let plus = forward_with_noise(&probe, images, noise, weights)?.loss.total;
            set(&mut probe, orig - step);
            let minus = forward_with_noise(&probe, images, noise, weights)?.loss.total;
            set(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.data()[idx];
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
        }
        let (diff, na, nn) = (diff.sqrt(), na.sqrt(), nn.sqrt());
        let scale = na.max(nn);
        tensors.push(TensorCheck {
            name,
            analytic_norm: na,
            numeric_norm: nn,
            relative_error: if scale > 1e-300 { diff / scale } else { 0.0 },
        });
    }
    Ok(GradCheckReport { tensors, tolerance })
}

/// Moves a fresh model off its special initial point so that every
/// gradient path is exercised: nonzero second convolution, student encoder
/// away from the teacher.
pub fn perturb_for_check(model: &mut ToyModel, seed: u64) {
    let mut rng = SeededRng::new(seed);
    for name in ["conv2_w", "conv2_b", "enc_w", "enc_b", "conv1_b", "dec_b"] {
        let t = model.param(name);
        let scale = if name == "conv2_w" { 0.2 } else { 0.05 };
        let data = t.data().iter().map(|v| v + rng.gaussian(0.0, scale)).collect();
        let t = t.with_data(data);
        *model.param_mut(name) = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::synthetic::sinusoid_images;
    use crate::toy::model::ModelConfig;

    fn small() -> (ToyModel, Tensor) {
        let cfg = ModelConfig {
            patch: 4,
            channels: 3,
            bands: 3,
            taper: 0.04,
            kernel: 3,
            image_h: 16,
            image_w: 16,
        };
        let mut m = ToyModel::new(cfg, 4).unwrap();
        perturb_for_check(&mut m, 5);
        let imgs = sinusoid_images(&mut SeededRng::new(6), 2, 16, 0.25, 0.05).unwrap();
        (m, imgs)
    }

    #[test]
    fn clean_pass_gradients_agree() {
        let (m, imgs) = small();
        let noise = NoiseSample::identity(&[2, 3, 4, 4], 3).unwrap();
        let w = LossWeights { lambda_sem: 0.7, k_base: 2 };
        let r = gradcheck(&m, &imgs, &noise, w, DEFAULT_STEP, DEFAULT_TOLERANCE, usize::MAX).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert!(r.tensors.iter().all(|t| t.analytic_norm > 0.0), "{r:#?}");
    }

    #[test]
    fn corrupted_pass_gradients_agree() {
        let (m, imgs) = small();
        let noise = NoiseSample::with_draws(&[2, 3, 4, 4], 3, vec![1, 2], vec![0.4, 0.9], 77).unwrap();
        let w = LossWeights { lambda_sem: 1.0, k_base: 1 };
        let r = gradcheck(&m, &imgs, &noise, w, DEFAULT_STEP, DEFAULT_TOLERANCE, usize::MAX).unwrap();
        assert!(r.passed(), "{r:#?}");
    }
}
