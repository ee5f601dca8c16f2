//! Band-selective noise injection and the spectral-transform fusion.
//!
//! During training a per-item prefix of low bands is kept and every later
//! band is replaced by Gaussian noise. The fusion concatenates the bands
//! along channels, predicts a residual `delta` with a two-layer 3x3
//! convolution block (SiLU in between) and returns `q = delta + sum(bands)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pzt::{load_tensor, save_tensor};
use crate::rng::SeededRng;
use crate::split::BandStack;
use crate::tensor::{DType, Tensor};

pub const DEFAULT_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Off,
    /// Keep a uniformly drawn prefix of bands; noise the rest.
    Cutoff,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(NoiseMode::Off),
            "cutoff" => Ok(NoiseMode::Cutoff),
            other => Err(Error::arg(format!("unknown noise mode `{other}` (off|cutoff)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePolicy {
    pub mode: NoiseMode,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl NoisePolicy {
    pub const OFF: NoisePolicy = NoisePolicy {
        mode: NoiseMode::Off,
        sigma_lo: 0.0,
        sigma_hi: 1.0,
    };

    pub const CUTOFF: NoisePolicy = NoisePolicy {
        mode: NoiseMode::Cutoff,
        sigma_lo: 0.0,
        sigma_hi: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_lo >= 0.0 && self.sigma_lo <= self.sigma_hi) {
            return Err(Error::arg(format!(
                "sigma range [{}, {}] is invalid",
                self.sigma_lo, self.sigma_hi
            )));
        }
        Ok(())
    }
}

/// One realization of the corruption: per item a kept prefix length
/// `kappa` in `1..=K` and a noise scale, plus the noise itself for every
/// replaced band (zeros where a band is kept).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub kappa: Vec<usize>,
    pub sigma: Vec<f64>,
    pub noise: Vec<Tensor>,
}

impl NoiseSample {
    /// Every band kept.
    pub fn identity(shape: &[usize], k: usize) -> Result<Self> {
        let b = shape[0];
        Ok(Self {
            kappa: vec![k; b],
            sigma: vec![0.0; b],
            noise: (0..k).map(|_| Tensor::zeros(shape, DType::F64)).collect::<Result<_>>()?,
        })
    }

    pub fn draw(shape: &[usize], k: usize, policy: &NoisePolicy, rng: &mut SeededRng) -> Result<Self> {
        policy.validate()?;
        if policy.mode == NoiseMode::Off {
            return Self::identity(shape, k);
        }
        let base = rng.next_u64();
        let mut kappa = Vec::with_capacity(shape[0]);
        let mut sigma = Vec::with_capacity(shape[0]);
        for item in 0..shape[0] {
            let mut r = SeededRng::derived(base, item as u64);
            kappa.push(r.int_inclusive(1, k as u64) as usize);
            sigma.push(r.uniform_range(policy.sigma_lo, policy.sigma_hi));
        }
        Self::with_draws(shape, k, kappa, sigma, base)
    }

    /// Builds a sample from explicit prefix lengths and scales. Noise for
    /// item `i` comes from the stream derived from `(base, i)`, after the
    /// two draws that [`NoiseSample::draw`] spends on `kappa` and `sigma`.
    pub fn with_draws(shape: &[usize], k: usize, kappa: Vec<usize>, sigma: Vec<f64>, base: u64) -> Result<Self> {
        if shape.len() < 3 {
            return Err(Error::arg(format!("band shape {shape:?} lacks a batch axis")));
        }
        let b = shape[0];
        if kappa.len() != b || sigma.len() != b {
            return Err(Error::arg("kappa/sigma length must equal the batch size"));
        }
        if kappa.iter().any(|&kp| kp == 0 || kp > k) {
            return Err(Error::arg(format!("kappa must lie in 1..={k}; band 0 is always kept")));
        }
        if sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::arg("sigma must be >= 0"));
        }
        let per_item: usize = shape[1..].iter().product();
        let mut noise = vec![vec![0.0; b * per_item]; k];
        for item in 0..b {
            let mut r = SeededRng::derived(base, item as u64);
            r.next_u64();
            r.next_u64();
            for band in noise.iter_mut().skip(kappa[item]) {
                for v in &mut band[item * per_item..(item + 1) * per_item] {
                    *v = r.gaussian(0.0, sigma[item]);
                }
            }
        }
        Ok(Self {
            kappa,
            sigma,
            noise: noise
                .into_iter()
                .map(|d| Tensor::from_f64(shape.to_vec(), d))
                .collect::<Result<_>>()?,
        })
    }

    pub fn band_count(&self) -> usize {
        self.noise.len()
    }

    pub fn kept(&self, item: usize, band: usize) -> bool {
        band < self.kappa[item]
    }

    /// Binary keep matrix `m`, shape `[B, K]`.
    pub fn keep_matrix(&self) -> Vec<Vec<bool>> {
        self.kappa
            .iter()
            .map(|&kp| (0..self.band_count()).map(|k| k < kp).collect())
            .collect()
    }

    pub fn corrupted_count(&self) -> usize {
        self.kappa.iter().map(|&kp| self.band_count() - kp).sum()
    }

    pub fn apply(&self, stack: &BandStack) -> Result<BandStack> {
        let k = stack.band_count();
        if k != self.band_count() {
            return Err(Error::arg(format!(
                "noise sample has {} bands, stack has {k}",
                self.band_count()
            )));
        }
        let shape = stack.shape();
        if shape[0] != self.kappa.len() {
            return Err(Error::arg("noise sample batch size does not match stack"));
        }
        let per_item = stack.bands[0].len() / shape[0];
        let bands = stack
            .bands
            .iter()
            .enumerate()
            .map(|(band, t)| {
                let mut data = t.data().to_vec();
                for item in 0..shape[0] {
                    if !self.kept(item, band) {
                        let range = item * per_item..(item + 1) * per_item;
                        data[range.clone()].copy_from_slice(&self.noise[band].data()[range]);
                    }
                }
                t.with_data(data)
            })
            .collect();
        Ok(BandStack {
            bands,
            final_residual: stack.final_residual.clone(),
            mask_set: stack.mask_set.clone(),
        })
    }
}

/// Draws a corruption and applies it. Returns the corrupted stack and the
/// sample, whose `keep_matrix` and `sigma` are the condition `m` and the
/// per-item noise scales.
pub fn inject_noise(stack: &BandStack, policy: &NoisePolicy, rng: &mut SeededRng) -> Result<(BandStack, NoiseSample)> {
    let sample = NoiseSample::draw(stack.shape(), stack.band_count(), policy, rng)?;
    Ok((sample.apply(stack)?, sample))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorParams {
    pub bands: usize,
    pub channels: usize,
    pub kernel: usize,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
}

impl ModulatorParams {
    /// `conv1` gets `N(0, 1/fan_in)` weights; `conv2` starts at exactly zero
    /// so the block initially outputs the plain band sum.
    pub fn init(bands: usize, channels: usize, kernel: usize, rng: &mut SeededRng) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::arg(format!("kernel size {kernel} must be odd")));
        }
        let fan_in = (bands * channels * kernel * kernel) as f64;
        let conv1_w = crate::rng::gaussian_tensor(
            rng,
            &[channels, bands * channels, kernel, kernel],
            0.0,
            1.0 / fan_in.sqrt(),
            DType::F64,
        )?;
        Ok(Self {
            bands,
            channels,
            kernel,
            conv1_w,
            conv1_b: Tensor::zeros(&[channels], DType::F64)?,
            conv2_w: Tensor::zeros(&[channels, channels, kernel, kernel], DType::F64)?,
            conv2_b: Tensor::zeros(&[channels], DType::F64)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (k, c, ks) = (self.bands, self.channels, self.kernel);
        self.conv1_w.expect_shape(&[c, k * c, ks, ks])?;
        self.conv1_b.expect_shape(&[c])?;
        self.conv2_w.expect_shape(&[c, c, ks, ks])?;
        self.conv2_b.expect_shape(&[c])?;
        Ok(())
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("conv1_w", &self.conv1_w),
            ("conv1_b", &self.conv1_b),
            ("conv2_w", &self.conv2_w),
            ("conv2_b", &self.conv2_b),
        ]
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        for (name, t) in self.tensors() {
            save_tensor(t, dir.join(format!("{name}.pzt")))?;
        }
        let manifest = format!(
            "bands={}\nchannels={}\nkernel={}\n",
            self.bands, self.channels, self.kernel
        );
        let path = dir.join("modulator.txt");
        fs::write(&path, manifest).map_err(|e| Error::storage(path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("modulator.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::storage(&path, e))?;
        let field = |key: &'static str| -> Result<usize> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .ok_or_else(|| Error::Format {
                    field: key,
                    detail: "missing from modulator manifest".into(),
                })?
                .1
                .trim()
                .parse()
                .map_err(|e| Error::Format {
                    field: key,
                    detail: format!("{e}"),
                })
        };
        let params = Self {
            bands: field("bands")?,
            channels: field("channels")?,
            kernel: field("kernel")?,
            conv1_w: load_tensor(dir.join("conv1_w.pzt"))?,
            conv1_b: load_tensor(dir.join("conv1_b.pzt"))?,
            conv2_w: load_tensor(dir.join("conv2_w.pzt"))?,
            conv2_b: load_tensor(dir.join("conv2_b.pzt"))?,
        };
        params.validate()?;
        Ok(params)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Stride-1, zero-padded ("same") 2D convolution.
/// `x: [B, Ci, H, W]`, `w: [Co, Ci, k, k]`, `b: [Co]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (bs, ci, h, wd) = dims4(x)?;
    let (co, wci, k, k2) = dims4(w)?;
    if wci != ci || k != k2 || k % 2 == 0 {
        return Err(Error::arg(format!(
            "conv weight {:?} incompatible with input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    b.expect_shape(&[co])?;
    let pad = k / 2;
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; bs * co * h * wd];
    for n in 0..bs {
        for o in 0..co {
            let plane = &mut out[(n * co + o) * h * wd..(n * co + o + 1) * h * wd];
            plane.fill(b.data()[o]);
            for i in 0..ci {
                let src = &xd[(n * ci + i) * h * wd..(n * ci + i + 1) * h * wd];
                for dy in 0..k {
                    for dx in 0..k {
                        let wv = wdat[((o * ci + i) * k + dy) * k + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ylo, yhi) = valid_range(dy, pad, h);
                        let (xlo, xhi) = valid_range(dx, pad, wd);
                        for y in ylo..yhi {
                            let sy = y + dy - pad;
                            let row = &mut plane[y * wd + xlo..y * wd + xhi];
                            let srow = &src[sy * wd + xlo + dx - pad..sy * wd + xhi + dx - pad];
                            for (r, s) in row.iter_mut().zip(srow) {
                                *r += wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![bs, co, h, wd], out, x.dtype())
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (bs, ci, h, wd) = dims4(x)?;
    let (co, _, k, _) = dims4(w)?;
    grad_out.expect_shape(&[bs, co, h, wd])?;
    let pad = k / 2;
    let (xd, wdat, gd) = (x.data(), w.data(), grad_out.data());
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; co];
    for n in 0..bs {
        for o in 0..co {
            let g = &gd[(n * co + o) * h * wd..(n * co + o + 1) * h * wd];
            gb[o] += g.iter().sum::<f64>();
            for i in 0..ci {
                let src = &xd[(n * ci + i) * h * wd..(n * ci + i + 1) * h * wd];
                let gsrc = &mut gx[(n * ci + i) * h * wd..(n * ci + i + 1) * h * wd];
                for dy in 0..k {
                    for dx in 0..k {
                        let widx = ((o * ci + i) * k + dy) * k + dx;
                        let wv = wdat[widx];
                        let (ylo, yhi) = valid_range(dy, pad, h);
                        let (xlo, xhi) = valid_range(dx, pad, wd);
                        let mut acc = 0.0;
                        for y in ylo..yhi {
                            let sy = y + dy - pad;
                            let grow = &g[y * wd + xlo..y * wd + xhi];
                            let span = sy * wd + xlo + dx - pad..sy * wd + xhi + dx - pad;
                            for ((gv, s), gs) in grow.iter().zip(&src[span.clone()]).zip(&mut gsrc[span]) {
                                acc += gv * s;
                                *gs += wv * gv;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        x.with_data(gx),
        w.with_data(gw),
        Tensor::from_f64(vec![co], gb)?,
    ))
}

/// Output rows `y` for which `y + d - pad` stays inside `0..n`.
#[inline]
fn valid_range(d: usize, pad: usize, n: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(d);
    let hi = (n + pad).saturating_sub(d).min(n);
    (lo, hi.max(lo))
}

fn dims4(t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(Error::arg(format!("expected a 4-axis tensor, got {:?}", t.shape()))),
    }
}

/// Channel concatenation `[B, K*C, H, W]`; channel `k*C + c` is channel
/// `c` of band `k`.
pub fn concat_bands(bands: &[Tensor]) -> Result<Tensor> {
    let (b, c, h, w) = dims4(&bands[0])?;
    let k = bands.len();
    let plane = c * h * w;
    let mut data = vec![0.0; b * k * plane];
    for (band, t) in bands.iter().enumerate() {
        t.expect_shape(&[b, c, h, w])?;
        for item in 0..b {
            let dst = (item * k + band) * plane;
            data[dst..dst + plane].copy_from_slice(&t.data()[item * plane..(item + 1) * plane]);
        }
    }
    Tensor::new(vec![b, k * c, h, w], data, bands[0].dtype())
}

/// Inverse of [`concat_bands`].
pub fn split_channels(s: &Tensor, k: usize) -> Result<Vec<Tensor>> {
    let (b, kc, h, w) = dims4(s)?;
    if kc % k != 0 {
        return Err(Error::arg(format!("{kc} channels do not split into {k} bands")));
    }
    let c = kc / k;
    let plane = c * h * w;
    Ok((0..k)
        .map(|band| {
            let mut data = Vec::with_capacity(b * plane);
            for item in 0..b {
                let src = (item * k + band) * plane;
                data.extend_from_slice(&s.data()[src..src + plane]);
            }
            Tensor::new(vec![b, c, h, w], data, s.dtype()).expect("consistent shape")
        })
        .collect())
}

/// Intermediates of one fusion pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct TransformTrace {
    pub concat: Tensor,
    pub pre_act: Tensor,
    pub hidden: Tensor,
    pub delta: Tensor,
    pub q: Tensor,
}

pub fn spectral_transform_traced(stack: &BandStack, params: &ModulatorParams) -> Result<TransformTrace> {
    params.validate()?;
    if stack.band_count() != params.bands {
        return Err(Error::arg(format!(
            "stack has {} bands, modulator expects {}",
            stack.band_count(),
            params.bands
        )));
    }
    let (_, c, _, _) = dims4(&stack.bands[0])?;
    if c != params.channels {
        return Err(Error::arg(format!(
            "latent has {c} channels, modulator expects {}",
            params.channels
        )));
    }
    let concat = concat_bands(&stack.bands)?;
    let pre_act = conv2d(&concat, &params.conv1_w, &params.conv1_b)?;
    let hidden = pre_act.map(silu);
    let delta = conv2d(&hidden, &params.conv2_w, &params.conv2_b)?;
    let band_sum = stack.band_sum();
    // delta first, then the band sum accumulated in band order.
    let q = delta.zip_with(&band_sum, |d, s| d + s)?;
    Ok(TransformTrace {
        concat,
        pre_act,
        hidden,
        delta,
        q,
    })
}

pub fn spectral_transform(stack: &BandStack, params: &ModulatorParams) -> Result<Tensor> {
    Ok(spectral_transform_traced(stack, params)?.q)
}

#[derive(Debug, Clone)]
pub struct ModulatorGrads {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    /// Gradient with respect to each (post-noise) band.
    pub bands: Vec<Tensor>,
}

pub fn spectral_transform_backward(
    trace: &TransformTrace,
    params: &ModulatorParams,
    grad_q: &Tensor,
) -> Result<ModulatorGrads> {
    let (gh, g2w, g2b) = conv2d_backward(&trace.hidden, &params.conv2_w, grad_q)?;
    let g_pre = trace
        .pre_act
        .zip_with(&gh, |a, g| g * silu_grad(a))?;
    let (gs, g1w, g1b) = conv2d_backward(&trace.concat, &params.conv1_w, &g_pre)?;
    let bands = split_channels(&gs, params.bands)?
        .into_iter()
        .map(|g| g.add(grad_q))
        .collect::<Result<_>>()?;
    Ok(ModulatorGrads {
        conv1_w: g1w,
        conv1_b: g1b,
        conv2_w: g2w,
        conv2_b: g2b,
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::ring_masks;
    use crate::rng::gaussian_tensor;
    use crate::split::iterative_split;
    use std::sync::Arc;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        gaussian_tensor(&mut SeededRng::new(seed), shape, 0.0, 1.0, DType::F64).unwrap()
    }

    fn stack(shape: [usize; 4], k: usize, seed: u64) -> BandStack {
        let set = Arc::new(ring_masks(shape[2], shape[3], k, 0.04, true).unwrap());
        iterative_split(&random(&shape, seed), set).unwrap()
    }

    /// Direct summation over the zero-padded neighbourhood.
    fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (bs, ci, h, wd) = dims4(x).unwrap();
        let (co, _, k, _) = dims4(w).unwrap();
        let p = k as isize / 2;
        let mut out = vec![0.0; bs * co * h * wd];
        for n in 0..bs {
            for o in 0..co {
                for y in 0..h as isize {
                    for xx in 0..wd as isize {
                        let mut acc = b.data()[o];
                        for i in 0..ci {
                            for dy in 0..k as isize {
                                for dx in 0..k as isize {
                                    let (sy, sx) = (y + dy - p, xx + dx - p);
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += w.data()[((o * ci + i) * k + dy as usize) * k + dx as usize]
                                        * x.data()[((n * ci + i) * h + sy as usize) * wd + sx as usize];
                                }
                            }
                        }
                        out[((n * co + o) * h + y as usize) * wd + xx as usize] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_oracle() {
        let x = random(&[2, 3, 5, 6], 1);
        let w = random(&[4, 3, 3, 3], 2);
        let b = random(&[4], 3);
        let got = conv2d(&x, &w, &b).unwrap();
        for (g, e) in got.data().iter().zip(conv_oracle(&x, &w, &b)) {
            assert!((g - e).abs() < 1e-10);
        }
        let w5 = random(&[2, 3, 5, 5], 4);
        let b2 = random(&[2], 5);
        let got5 = conv2d(&x, &w5, &b2).unwrap();
        for (g, e) in got5.data().iter().zip(conv_oracle(&x, &w5, &b2)) {
            assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn impulse_response() {
        let mut x = Tensor::zeros(&[1, 2, 7, 7], DType::F64).unwrap().into_data();
        x[3 * 7 + 3] = 1.0;
        let x = Tensor::from_f64(vec![1, 2, 7, 7], x).unwrap();
        let w = random(&[3, 2, 3, 3], 6);
        let b = random(&[3], 7);
        let got = conv2d(&x, &w, &b).unwrap();
        for (g, e) in got.data().iter().zip(conv_oracle(&x, &w, &b)) {
            assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn fresh_params_return_band_sum_exactly() {
        let st = stack([2, 3, 8, 8], 4, 8);
        let params = ModulatorParams::init(4, 3, 3, &mut SeededRng::new(1)).unwrap();
        let q = spectral_transform(&st, &params).unwrap();
        assert_eq!(q, st.band_sum());
        let z = crate::split::recompose(&st);
        assert!(q.sub(&z).unwrap().norm() / z.norm() < 1e-3);
    }

    #[test]
    fn zero_bands_zero_bias_give_zero() {
        let mut st = stack([1, 2, 6, 6], 3, 9);
        for b in st.bands.iter_mut() {
            *b = Tensor::zeros(b.shape(), DType::F64).unwrap();
        }
        let mut params = ModulatorParams::init(3, 2, 3, &mut SeededRng::new(2)).unwrap();
        params.conv2_w = random(&[2, 2, 3, 3], 10);
        let q = spectral_transform(&st, &params).unwrap();
        assert!(q.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let st = stack([1, 2, 6, 6], 3, 11);
        let params = ModulatorParams::init(4, 2, 3, &mut SeededRng::new(3)).unwrap();
        assert!(matches!(spectral_transform(&st, &params), Err(Error::Argument(_))));
        let params = ModulatorParams::init(3, 5, 3, &mut SeededRng::new(3)).unwrap();
        assert!(spectral_transform(&st, &params).is_err());
    }

    #[test]
    fn q_shape_matches_latent_for_every_k() {
        for k in 1..=6 {
            let st = stack([2, 3, 8, 8], k, 12);
            let params = ModulatorParams::init(k, 3, 3, &mut SeededRng::new(4)).unwrap();
            assert_eq!(spectral_transform(&st, &params).unwrap().shape(), &[2, 3, 8, 8]);
        }
    }

    #[test]
    fn noise_off_is_identity() {
        let st = stack([3, 2, 8, 8], 4, 13);
        let (out, sample) = inject_noise(&st, &NoisePolicy::OFF, &mut SeededRng::new(5)).unwrap();
        assert_eq!(out, st);
        assert!(sample.keep_matrix().iter().flatten().all(|&m| m));
    }

    #[test]
    fn all_kept_is_identity() {
        let st = stack([3, 2, 8, 8], 4, 14);
        let sample = NoiseSample::with_draws(st.shape(), 4, vec![4; 3], vec![0.7; 3], 1).unwrap();
        assert_eq!(sample.apply(&st).unwrap(), st);
    }

    #[test]
    fn zero_sigma_kappa_one_zeroes_high_bands() {
        let st = stack([2, 2, 8, 8], 4, 15);
        let sample = NoiseSample::with_draws(st.shape(), 4, vec![1; 2], vec![0.0; 2], 2).unwrap();
        let out = sample.apply(&st).unwrap();
        assert_eq!(out.bands[0], st.bands[0]);
        for b in &out.bands[1..] {
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(out.final_residual, st.final_residual);
    }

    #[test]
    fn noise_is_deterministic_and_prefix_shaped() {
        let st = stack([6, 2, 8, 8], 5, 16);
        let (a, sa) = inject_noise(&st, &NoisePolicy::CUTOFF, &mut SeededRng::new(9)).unwrap();
        let (b, sb) = inject_noise(&st, &NoisePolicy::CUTOFF, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        for row in sa.keep_matrix() {
            assert!(row[0]);
            let first_drop = row.iter().position(|&m| !m).unwrap_or(row.len());
            assert!(row[first_drop..].iter().all(|&m| !m));
        }
    }

    #[test]
    fn kappa_zero_rejected() {
        assert!(NoiseSample::with_draws(&[1, 1, 4, 4], 3, vec![0], vec![0.5], 0).is_err());
    }

    #[test]
    fn params_roundtrip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ModulatorParams::init(3, 2, 3, &mut SeededRng::new(6)).unwrap();
        params.conv2_b = random(&[2], 17);
        params.save_dir(dir.path()).unwrap();
        assert_eq!(ModulatorParams::load_dir(dir.path()).unwrap(), params);
    }

    #[test]
    fn silu_grad_matches_central_difference() {
        for &x in &[-4.0, -1.0, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
