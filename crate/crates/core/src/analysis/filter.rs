use crate::error::{Error, Result};
use crate::masks::cutoff_masks;
use crate::spectral::Fft2;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Lp,
    Hp,
}

impl FilterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::Lp => "lp",
            FilterMode::Hp => "hp",
        }
    }
}

impl std::str::FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(FilterMode::Lp),
            "hp" => Ok(FilterMode::Hp),
            other => Err(Error::arg(format!("unknown filter mode `{other}` (lp|hp)"))),
        }
    }
}

impl std::fmt::Display for FilterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Radial low- or high-pass filtering of every `H x W` slice, without
/// clamping.
pub fn filter_channels(x: &Tensor, mode: FilterMode, rho: f64, taper: f64) -> Result<Tensor> {
    let (slices, h, w) = x.grid_dims()?;
    let pair = cutoff_masks(h, w, rho, taper)?;
    let mask = match mode {
        FilterMode::Lp => &pair.lp,
        FilterMode::Hp => &pair.hp,
    };
    let plan = Fft2::new(h, w);
    let n = h * w;
    let mut out = vec![0.0; x.len()];
    for s in 0..slices {
        plan.filter_real(&x.data()[s * n..(s + 1) * n], mask, &mut out[s * n..(s + 1) * n]);
    }
    Ok(x.with_data(out))
}

/// Filters an image with pixel values in `[0, 1]`, clamping to `[0, 1]`
/// after the inverse transform.
pub fn filter_image(img: &Tensor, mode: FilterMode, rho: f64, taper: f64) -> Result<Tensor> {
    Ok(filter_channels(img, mode, rho, taper)?.map(|v| v.clamp(0.0, 1.0)))
}

/// Circular Gaussian blur of every `H x W` slice, by direct spatial
/// convolution with a kernel truncated at three standard deviations.
pub fn gaussian_blur(x: &Tensor, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("blur sigma must be > 0, got {sigma}")));
    }
    let (slices, h, w) = x.grid_dims()?;
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let n = h * w;
    let mut out = x.data().to_vec();
    let mut tmp = vec![0.0; n];
    for s in 0..slices {
        let plane = &mut out[s * n..(s + 1) * n];
        for y in 0..h {
            for xx in 0..w {
                tmp[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let sx = (xx as isize + i as isize - radius).rem_euclid(w as isize) as usize;
                        k * plane[y * w + sx]
                    })
                    .sum();
            }
        }
        for y in 0..h {
            for xx in 0..w {
                plane[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let sy = (y as isize + i as isize - radius).rem_euclid(h as isize) as usize;
                        k * tmp[sy * w + xx]
                    })
                    .sum();
            }
        }
    }
    Ok(x.with_data(out))
}
