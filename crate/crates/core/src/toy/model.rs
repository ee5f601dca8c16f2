use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::masks::{ring_masks, BandMaskSet, DEFAULT_TAPER};
use crate::modulator::{ModulatorParams, DEFAULT_KERNEL};
use crate::pzt::{load_tensor, save_tensor};
use crate::rng::{gaussian_tensor, SeededRng};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub patch: usize,
    pub channels: usize,
    pub bands: usize,
    pub taper: f64,
    pub kernel: usize,
    pub image_h: usize,
    pub image_w: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            channels: 8,
            bands: 4,
            taper: DEFAULT_TAPER,
            kernel: DEFAULT_KERNEL,
            image_h: 32,
            image_w: 32,
        }
    }
}

impl ModelConfig {
    pub fn patch_dim(&self) -> usize {
        3 * self.patch * self.patch
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.image_h / self.patch, self.image_w / self.patch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || !self.image_h.is_multiple_of(self.patch) || !self.image_w.is_multiple_of(self.patch) {
            return Err(Error::arg(format!(
                "image {}x{} is not divisible into {}x{} patches",
                self.image_h, self.image_w, self.patch, self.patch
            )));
        }
        if self.channels == 0 || self.bands == 0 {
            return Err(Error::arg("channels and bands must be >= 1"));
        }
        Ok(())
    }
}

/// Linear patch autoencoder around the band split and modulator, with a
/// frozen teacher copy of the initial encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub mask_set: Arc<BandMaskSet>,
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    pub teacher_w: Tensor,
    pub teacher_b: Tensor,
    pub modulator: ModulatorParams,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
}

/// Names of the trainable tensors, in gradient order.
pub const PARAM_NAMES: [&str; 8] = [
    "enc_w", "enc_b", "conv1_w", "conv1_b", "conv2_w", "conv2_b", "dec_w", "dec_b",
];

pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc_")
}

impl ToyModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (gh, gw) = config.grid();
        let mask_set = Arc::new(ring_masks(gh, gw, config.bands, config.taper, true)?);
        // One stream per parameter group, so changing the band count or
        // kernel does not reshuffle the encoder and decoder draws.
        let d = config.patch_dim();
        let c = config.channels;
        let mut enc_rng = SeededRng::derived(seed, 0);
        let mut mod_rng = SeededRng::derived(seed, 1);
        let mut dec_rng = SeededRng::derived(seed, 2);
        let enc_w = gaussian_tensor(&mut enc_rng, &[d, c], 0.0, 1.0 / (d as f64).sqrt(), DType::F64)?;
        let enc_b = Tensor::zeros(&[c], DType::F64)?;
        let modulator = ModulatorParams::init(config.bands, c, config.kernel, &mut mod_rng)?;
        let dec_w = gaussian_tensor(&mut dec_rng, &[c, d], 0.0, 1.0 / (c as f64).sqrt(), DType::F64)?;
        let dec_b = Tensor::zeros(&[d], DType::F64)?;
        Ok(Self {
            config,
            mask_set,
            teacher_w: enc_w.clone(),
            teacher_b: enc_b.clone(),
            enc_w,
            enc_b,
            modulator,
            dec_w,
            dec_b,
        })
    }

    pub fn param(&self, name: &str) -> &Tensor {
        match name {
            "enc_w" => &self.enc_w,
            "enc_b" => &self.enc_b,
            "conv1_w" => &self.modulator.conv1_w,
            "conv1_b" => &self.modulator.conv1_b,
            "conv2_w" => &self.modulator.conv2_w,
            "conv2_b" => &self.modulator.conv2_b,
            "dec_w" => &self.dec_w,
            "dec_b" => &self.dec_b,
            other => panic!("unknown parameter {other}"),
        }
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Tensor {
        match name {
            "enc_w" => &mut self.enc_w,
            "enc_b" => &mut self.enc_b,
            "conv1_w" => &mut self.modulator.conv1_w,
            "conv1_b" => &mut self.modulator.conv1_b,
            "conv2_w" => &mut self.modulator.conv2_w,
            "conv2_b" => &mut self.modulator.conv2_b,
            "dec_w" => &mut self.dec_w,
            "dec_b" => &mut self.dec_b,
            other => panic!("unknown parameter {other}"),
        }
    }

    pub fn all_finite(&self) -> bool {
        PARAM_NAMES
            .iter()
            .all(|n| self.param(n).data().iter().all(|v| v.is_finite()))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        for (name, t) in [
            ("enc_w", &self.enc_w),
            ("enc_b", &self.enc_b),
            ("teacher_w", &self.teacher_w),
            ("teacher_b", &self.teacher_b),
            ("dec_w", &self.dec_w),
            ("dec_b", &self.dec_b),
        ] {
            save_tensor(t, dir.join(format!("{name}.pzt")))?;
        }
        self.modulator.save_dir(dir.join("modulator"))?;
        let c = &self.config;
        let manifest = format!(
            "patch={}\nchannels={}\nbands={}\ntaper={}\nkernel={}\nimage_h={}\nimage_w={}\n",
            c.patch, c.channels, c.bands, c.taper, c.kernel, c.image_h, c.image_w
        );
        let path = dir.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| Error::storage(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::storage(&path, e))?;
        let kv = super::config::parse_key_values(&text)?;
        let get = |key: &'static str| -> Result<&str> {
            kv.get(key).map(String::as_str).ok_or(Error::Format {
                field: key,
                detail: "missing from checkpoint manifest".into(),
            })
        };
        let num = |key: &'static str| -> Result<usize> {
            get(key)?.parse().map_err(|e| Error::Format {
                field: key,
                detail: format!("{e}"),
            })
        };
        let config = ModelConfig {
            patch: num("patch")?,
            channels: num("channels")?,
            bands: num("bands")?,
            taper: get("taper")?.parse().map_err(|e| Error::Format {
                field: "taper",
                detail: format!("{e}"),
            })?,
            kernel: num("kernel")?,
            image_h: num("image_h")?,
            image_w: num("image_w")?,
        };
        config.validate()?;
        let (gh, gw) = config.grid();
        let model = Self {
            config,
            mask_set: Arc::new(ring_masks(gh, gw, config.bands, config.taper, true)?),
            enc_w: load_tensor(dir.join("enc_w.pzt"))?,
            enc_b: load_tensor(dir.join("enc_b.pzt"))?,
            teacher_w: load_tensor(dir.join("teacher_w.pzt"))?,
            teacher_b: load_tensor(dir.join("teacher_b.pzt"))?,
            modulator: ModulatorParams::load_dir(dir.join("modulator"))?,
            dec_w: load_tensor(dir.join("dec_w.pzt"))?,
            dec_b: load_tensor(dir.join("dec_b.pzt"))?,
        };
        let (d, c) = (config.patch_dim(), config.channels);
        model.enc_w.expect_shape(&[d, c])?;
        model.teacher_w.expect_shape(&[d, c])?;
        model.dec_w.expect_shape(&[c, d])?;
        model.dec_b.expect_shape(&[d])?;
        Ok(model)
    }
}

/// `[B, 3, H, W]` images to `[B, G, 3 p^2]` patch rows, with patches in
/// raster order and each row laid out channel, then row, then column.
pub fn patchify(images: &Tensor, p: usize) -> Result<(Vec<f64>, usize, usize)> {
    let (b, h, w) = match *images.shape() {
        [b, 3, h, w] => (b, h, w),
        _ => {
            return Err(Error::arg(format!(
                "images must be [B, 3, H, W], got {:?}",
                images.shape()
            )))
        }
    };
    if h % p != 0 || w % p != 0 {
        return Err(Error::arg(format!("image {h}x{w} not divisible by patch {p}")));
    }
    let (gh, gw) = (h / p, w / p);
    let d = 3 * p * p;
    let x = images.data();
    let mut out = vec![0.0; b * gh * gw * d];
    for n in 0..b {
        for gy in 0..gh {
            for gx in 0..gw {
                let row = &mut out[((n * gh + gy) * gw + gx) * d..][..d];
                for ch in 0..3 {
                    for dy in 0..p {
                        for dx in 0..p {
                            row[(ch * p + dy) * p + dx] =
                                x[((n * 3 + ch) * h + gy * p + dy) * w + gx * p + dx];
                        }
                    }
                }
            }
        }
    }
    Ok((out, gh, gw))
}

/// Inverse of [`patchify`].
pub fn unpatchify(rows: &[f64], b: usize, gh: usize, gw: usize, p: usize) -> Result<Tensor> {
    let (h, w) = (gh * p, gw * p);
    let d = 3 * p * p;
    let mut out = vec![0.0; b * 3 * h * w];
    for n in 0..b {
        for gy in 0..gh {
            for gx in 0..gw {
                let row = &rows[((n * gh + gy) * gw + gx) * d..][..d];
                for ch in 0..3 {
                    for dy in 0..p {
                        for dx in 0..p {
                            out[((n * 3 + ch) * h + gy * p + dy) * w + gx * p + dx] =
                                row[(ch * p + dy) * p + dx];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_f64(vec![b, 3, h, w], out)
}
