//! Seeded stand-ins for real images and encoders.
//!
//! Images are smooth sinusoid mixtures (the shared low-frequency content)
//! plus optional white-noise texture. The synthetic encoder low-passes an
//! image at [`SEMANTIC_CUTOFF`], projects it with a fixed random matrix and
//! L2-normalizes, which mimics an encoder whose semantics live in the low
//! band. Text embeddings are the same map applied to the unfiltered image,
//! perturbed so their cosine with the image embedding is about
//! [`TEXT_COSINE`].

use super::filter::{filter_channels, filter_image, FilterMode};
use super::retrieval::EmbeddingSource;
use crate::error::{Error, Result};
use crate::masks::DEFAULT_TAPER;
use crate::rng::{gaussian_tensor, SeededRng};
use crate::tensor::{DType, Tensor};

pub const SEMANTIC_CUTOFF: f64 = 0.3;
pub const EMBED_DIM: usize = 64;
pub const TEXT_COSINE: f64 = 0.9;
pub const CORPUS_SIZE: usize = 32;
/// Highest normalized radius of the sinusoid components.
pub const CONTENT_RADIUS: f64 = 0.25;
pub const TEXTURE_AMPLITUDE: f64 = 0.1;
/// Expected norm of the encoder's constant offset; an empty image embeds
/// to this direction instead of to zero.
pub const ENCODER_BIAS: f64 = 0.05;

/// `n` RGB images of shape `[3, size, size]` with values in `[0, 1]`.
///
/// Each image is `0.5 + sum_m a_m cos(2 pi (fu x + fv y) + phase_m)` with
/// four components on integer frequency bins inside `max_radius`,
/// amplitudes summing to 0.3 and a per-channel gain in `[0.6, 1]`, plus
/// uniform texture noise in `[-texture, texture]`.
pub fn sinusoid_images(
    rng: &mut SeededRng,
    n: usize,
    size: usize,
    max_radius: f64,
    texture: f64,
) -> Result<Tensor> {
    if size < 2 || n == 0 {
        return Err(Error::arg("need at least one image of size >= 2"));
    }
    if !(0.0..=0.2).contains(&texture) {
        return Err(Error::arg("texture amplitude must lie in [0, 0.2]"));
    }
    let s = size as f64;
    let r_max = 0.5f64.sqrt();
    let half = (size / 2) as i64;
    let bins: Vec<(i64, i64)> = (-half..=half)
        .flat_map(|u| (0..=half).map(move |v| (u, v)))
        .filter(|&(u, v)| {
            let r = ((u * u + v * v) as f64).sqrt() / s / r_max;
            (u, v) != (0, 0) && r <= max_radius
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::arg("no frequency bins inside the content radius"));
    }
    let plane = size * size;
    let mut data = vec![0.0; n * 3 * plane];
    for img in data.chunks_mut(3 * plane) {
        let mut base = vec![0.0; plane];
        let amps: Vec<f64> = (0..4).map(|_| rng.uniform_range(0.2, 1.0)).collect();
        let total: f64 = amps.iter().sum();
        for a in amps {
            let (fu, fv) = bins[rng.int_inclusive(0, bins.len() as u64 - 1) as usize];
            let phase = rng.uniform_range(0.0, 2.0 * std::f64::consts::PI);
            let amp = 0.3 * a / total;
            for y in 0..size {
                for x in 0..size {
                    let arg = 2.0 * std::f64::consts::PI * (fu as f64 * y as f64 + fv as f64 * x as f64) / s;
                    base[y * size + x] += amp * (arg + phase).cos();
                }
            }
        }
        for ch in img.chunks_mut(plane) {
            let gain = rng.uniform_range(0.6, 1.0);
            for (v, b) in ch.iter_mut().zip(&base) {
                *v = 0.5 + gain * b;
            }
            if texture > 0.0 {
                for v in ch.iter_mut() {
                    *v += rng.uniform_range(-texture, texture);
                }
            }
        }
    }
    Tensor::new(vec![n, 3, size, size], data, DType::F64)
}

/// Gaussian white-noise feature maps ("pixel-like": flat spectrum).
pub fn white_noise_features(rng: &mut SeededRng, shape: &[usize]) -> Result<Tensor> {
    gaussian_tensor(rng, shape, 0.0, 1.0, DType::F64)
}

/// White noise low-passed at `rho` ("semantic-like": low-band dominated).
pub fn low_pass_features(rng: &mut SeededRng, shape: &[usize], rho: f64, taper: f64) -> Result<Tensor> {
    filter_channels(&white_noise_features(rng, shape)?, FilterMode::Lp, rho, taper)
}

pub struct SyntheticEncoder {
    images: Tensor,
    projection: Vec<f64>,
    bias: Vec<f64>,
    text: Tensor,
    taper: f64,
}

impl SyntheticEncoder {
    /// Builds a corpus of `n` textured images, the projection, and the
    /// paired text embeddings, all from `seed`.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let images = sinusoid_images(&mut rng, n, CORPUS_SIZE, CONTENT_RADIUS, TEXTURE_AMPLITUDE)?;
        Self::with_images(images, &mut rng)
    }

    pub fn with_images(images: Tensor, rng: &mut SeededRng) -> Result<Self> {
        let features: usize = images.shape()[1..].iter().product();
        let projection = gaussian_tensor(rng, &[EMBED_DIM, features], 0.0, 1.0 / (features as f64).sqrt(), DType::F64)?
            .into_data();
        let bias = gaussian_tensor(rng, &[EMBED_DIM], 0.0, ENCODER_BIAS / (EMBED_DIM as f64).sqrt(), DType::F64)?
            .into_data();
        let mut enc = Self {
            images,
            projection,
            bias,
            text: Tensor::zeros(&[1, 1], DType::F64)?,
            taper: DEFAULT_TAPER,
        };
        let clean = enc.embed(&enc.images)?;
        let spread = TEXT_COSINE.acos().tan() / (EMBED_DIM as f64).sqrt();
        let noise = gaussian_tensor(rng, clean.shape(), 0.0, spread, DType::F64)?;
        enc.text = normalize_rows(&clean.add(&noise)?);
        Ok(enc)
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    /// Embeds `[N, 3, H, W]` images: low-pass at the semantic cutoff,
    /// flatten, project, add the bias, normalize.
    pub fn embed(&self, images: &Tensor) -> Result<Tensor> {
        let n = images.shape()[0];
        let features = images.len() / n;
        if features * EMBED_DIM != self.projection.len() {
            return Err(Error::arg("image size does not match the encoder projection"));
        }
        let low = filter_channels(images, FilterMode::Lp, SEMANTIC_CUTOFF, self.taper)?;
        let mut out = vec![0.0; n * EMBED_DIM];
        for (img, row) in low.data().chunks(features).zip(out.chunks_mut(EMBED_DIM)) {
            for ((r, w), b) in row.iter_mut().zip(self.projection.chunks(features)).zip(&self.bias) {
                *r = b + w.iter().zip(img).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(normalize_rows(&Tensor::from_f64(vec![n, EMBED_DIM], out)?))
    }
}

fn normalize_rows(t: &Tensor) -> Tensor {
    let d = t.shape()[1];
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    t.with_data(data)
}

impl EmbeddingSource for SyntheticEncoder {
    fn text_embeddings(&self) -> &Tensor {
        &self.text
    }

    fn image_embeddings(&mut self, mode: FilterMode, cutoff: f64) -> Result<Tensor> {
        let filtered = filter_image(&self.images, mode, cutoff, self.taper)?;
        self.embed(&filtered)
    }
}
