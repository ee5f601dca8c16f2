use crate::error::{Error, Result};
use crate::modulator::{spectral_transform_backward, spectral_transform_traced, NoiseSample, TransformTrace};
use crate::objectives::{pixel_loss, pixel_loss_grad, semantic_loss, semantic_loss_grad, LossReport};
use crate::split::{iterative_split, split_adjoint, BandStack};
use crate::tensor::Tensor;

use super::model::{patchify, unpatchify, ToyModel, PARAM_NAMES};

/// Loss weights for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_sem: f64,
    pub k_base: usize,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub images: Tensor,
    pub rows: Vec<f64>,
    pub grid: (usize, usize),
    pub student: BandStack,
    pub teacher: BandStack,
    pub noise: NoiseSample,
    pub trace: TransformTrace,
    pub recon: Tensor,
    pub loss: LossReport,
    pub weights: LossWeights,
}

/// `rows [N, d] @ w [d, c] + b`, laid out as a `[B, c, gh, gw]` grid.
fn encode(rows: &[f64], w: &Tensor, b: &Tensor, batch: usize, gh: usize, gw: usize) -> Result<Tensor> {
    let (d, c) = (w.shape()[0], w.shape()[1]);
    let g = gh * gw;
    let wd = w.data();
    let mut out = vec![0.0; batch * c * g];
    for n in 0..batch {
        for p in 0..g {
            let row = &rows[(n * g + p) * d..][..d];
            for ch in 0..c {
                let mut acc = b.data()[ch];
                for (i, &x) in row.iter().enumerate() {
                    acc += x * wd[i * c + ch];
                }
                out[(n * c + ch) * g + p] = acc;
            }
        }
    }
    Tensor::from_f64(vec![batch, c, gh, gw], out)
}

/// `[B, c, gh, gw]` latent to patch rows through `w [c, d] + b`.
fn decode(q: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (batch, c, gh, gw) = (q.shape()[0], q.shape()[1], q.shape()[2], q.shape()[3]);
    let d = w.shape()[1];
    let g = gh * gw;
    let mut rows = vec![0.0; batch * g * d];
    for n in 0..batch {
        for p in 0..g {
            let row = &mut rows[(n * g + p) * d..][..d];
            row.copy_from_slice(b.data());
            for ch in 0..c {
                let v = q.data()[(n * c + ch) * g + p];
                for (r, wv) in row.iter_mut().zip(&w.data()[ch * d..(ch + 1) * d]) {
                    *r += v * wv;
                }
            }
        }
    }
    rows
}

/// Full forward pass with an explicit corruption.
pub fn forward_with_noise(
    model: &ToyModel,
    images: &Tensor,
    noise: &NoiseSample,
    weights: LossWeights,
) -> Result<ForwardCache> {
    let cfg = &model.config;
    images.expect_shape(&[images.shape()[0], 3, cfg.image_h, cfg.image_w])?;
    let batch = images.shape()[0];
    let (rows, gh, gw) = patchify(images, cfg.patch)?;
    let z = encode(&rows, &model.enc_w, &model.enc_b, batch, gh, gw)?;
    let zt = encode(&rows, &model.teacher_w, &model.teacher_b, batch, gh, gw)?;
    let student = iterative_split(&z, model.mask_set.clone())?;
    let teacher = iterative_split(&zt, model.mask_set.clone())?;
    let corrupted = noise.apply(&student)?;
    let trace = spectral_transform_traced(&corrupted, &model.modulator)?;
    let out_rows = decode(&trace.q, &model.dec_w, &model.dec_b);
    let recon = unpatchify(&out_rows, batch, gh, gw, cfg.patch)?;
    let l_pix = pixel_loss(&recon, images)?;
    let l_sem = semantic_loss(&student, &teacher, weights.k_base)?;
    let loss = LossReport::new(l_pix, l_sem, weights.lambda_sem, weights.k_base);
    Ok(ForwardCache {
        images: images.clone(),
        rows,
        grid: (gh, gw),
        student,
        teacher,
        noise: noise.clone(),
        trace,
        recon,
        loss,
        weights,
    })
}

/// Gradients of `loss.total` for every tensor in [`PARAM_NAMES`], in that
/// order.
pub fn backward(model: &ToyModel, cache: &ForwardCache) -> Result<Vec<Tensor>> {
    let cfg = &model.config;
    let batch = cache.images.shape()[0];
    let (gh, gw) = cache.grid;
    let g = gh * gw;
    let (c, d) = (cfg.channels, cfg.patch_dim());
    if cache.trace.q.shape() != [batch, c, gh, gw]
        || cache.rows.len() != batch * g * d
        || cache.student.band_count() != cfg.bands
    {
        return Err(Error::arg("forward cache does not match the model"));
    }

    let grad_recon = pixel_loss_grad(&cache.recon, &cache.images)?;
    let (grad_rows, _, _) = patchify(&grad_recon, cfg.patch)?;
    let q = cache.trace.q.data();

    let mut g_dec_w = vec![0.0; c * d];
    let mut g_dec_b = vec![0.0; d];
    let mut g_q = vec![0.0; batch * c * g];
    for n in 0..batch {
        for p in 0..g {
            let gr = &grad_rows[(n * g + p) * d..][..d];
            for (acc, v) in g_dec_b.iter_mut().zip(gr) {
                *acc += v;
            }
            for ch in 0..c {
                let qi = (n * c + ch) * g + p;
                let wrow = &model.dec_w.data()[ch * d..(ch + 1) * d];
                let mut s = 0.0;
                for i in 0..d {
                    g_dec_w[ch * d + i] += q[qi] * gr[i];
                    s += wrow[i] * gr[i];
                }
                g_q[qi] = s;
            }
        }
    }
    let grad_q = Tensor::from_f64(vec![batch, c, gh, gw], g_q)?;
    let mg = spectral_transform_backward(&cache.trace, &model.modulator, &grad_q)?;

    // Replaced bands carry no gradient back to the encoder.
    let per_item = c * g;
    let sem = semantic_loss_grad(&cache.student, &cache.teacher, cache.weights.k_base)?;
    let band_grads: Vec<Tensor> = mg
        .bands
        .iter()
        .zip(&sem)
        .enumerate()
        .map(|(k, (gb, gs))| {
            let mut data = gb.data().to_vec();
            for item in 0..batch {
                if !cache.noise.kept(item, k) {
                    data[item * per_item..(item + 1) * per_item].fill(0.0);
                }
            }
            for (v, s) in data.iter_mut().zip(gs.data()) {
                *v += cache.weights.lambda_sem * s;
            }
            gb.with_data(data)
        })
        .collect();
    let residual_grad = cache.student.final_residual.map(|_| 0.0);
    let grad_z = split_adjoint(&band_grads, &residual_grad, &model.mask_set)?;

    let mut g_enc_w = vec![0.0; d * c];
    let mut g_enc_b = vec![0.0; c];
    let gz = grad_z.data();
    for n in 0..batch {
        for p in 0..g {
            let row = &cache.rows[(n * g + p) * d..][..d];
            for ch in 0..c {
                let v = gz[(n * c + ch) * g + p];
                g_enc_b[ch] += v;
                for (i, x) in row.iter().enumerate() {
                    g_enc_w[i * c + ch] += x * v;
                }
            }
        }
    }

    let grads = vec![
        Tensor::from_f64(vec![d, c], g_enc_w)?,
        Tensor::from_f64(vec![c], g_enc_b)?,
        mg.conv1_w,
        mg.conv1_b,
        mg.conv2_w,
        mg.conv2_b,
        Tensor::from_f64(vec![c, d], g_dec_w)?,
        Tensor::from_f64(vec![d], g_dec_b)?,
    ];
    for (name, gt) in PARAM_NAMES.iter().zip(&grads) {
        if gt.shape() != model.param(name).shape() {
            return Err(Error::arg(format!("gradient shape mismatch for {name}")));
        }
    }
    Ok(grads)
}
