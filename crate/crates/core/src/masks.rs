//! Smooth radial frequency masks.
//!
//! Radii are normalized by the spectral corner `sqrt(0.5^2 + 0.5^2)`, so
//! 1.0 is the highest representable frequency and the axis Nyquist sits at
//! about 0.707. All masks are laid out unshifted to match [`crate::spectral`].

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const DEFAULT_TAPER: f64 = 0.04;

/// Signed frequency of bin `i` on an axis of length `n`, in cycles/sample.
#[inline]
fn signed_freq(i: usize, n: usize) -> f64 {
    if 2 * i <= n {
        i as f64 / n as f64
    } else {
        (i as f64 - n as f64) / n as f64
    }
}

pub fn radius_grid(h: usize, w: usize) -> Vec<f64> {
    let r_max = (0.25f64 + 0.25).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        let fu = signed_freq(u, h);
        for v in 0..w {
            let fv = signed_freq(v, w);
            out.push(((fu * fu + fv * fv).sqrt() / r_max).min(1.0));
        }
    }
    out
}

pub fn normalized_radius(h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::arg("grid dimensions must be >= 1"));
    }
    Tensor::from_f64(vec![h, w], radius_grid(h, w))
}

/// Raised-cosine rise from 0 to 1 across `[edge - taper, edge + taper]`.
/// With zero taper this is a hard step that is 1 from `edge` upward.
#[inline]
pub fn cosine_rise(r: f64, edge: f64, taper: f64) -> f64 {
    if taper <= 0.0 {
        return if r >= edge { 1.0 } else { 0.0 };
    }
    let lo = edge - taper;
    let t = ((r - lo) / (2.0 * taper)).clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * t).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMaskSet {
    h: usize,
    w: usize,
    masks: Vec<Vec<f64>>,
    edges: Vec<f64>,
    taper: f64,
    normalized: bool,
    projectors: Vec<Vec<f64>>,
}

impl BandMaskSet {
    /// Wraps arbitrary real masks in `[0, 1]`. Each must be symmetric under
    /// `(u, v) -> (-u, -v)` for band outputs to stay real.
    pub fn from_masks(h: usize, w: usize, masks: Vec<Vec<f64>>, edges: Vec<f64>, taper: f64) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::arg("mask set needs at least one mask"));
        }
        if edges.len() != masks.len() + 1 {
            return Err(Error::arg(format!(
                "{} masks need {} edges, got {}",
                masks.len(),
                masks.len() + 1,
                edges.len()
            )));
        }
        for (k, m) in masks.iter().enumerate() {
            if m.len() != h * w {
                return Err(Error::arg(format!("mask {k} has {} bins, expected {}", m.len(), h * w)));
            }
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::arg(format!("mask {k} has values outside [0, 1]")));
            }
        }
        let normalized = is_partition_of_unity(&masks, 1e-6);
        let projectors = split_projectors(&masks);
        Ok(Self {
            h,
            w,
            masks,
            edges,
            taper,
            normalized,
            projectors,
        })
    }

    pub fn band_count(&self) -> usize {
        self.masks.len()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn mask(&self, k: usize) -> &[f64] {
        &self.masks[k]
    }

    pub fn masks(&self) -> &[Vec<f64>] {
        &self.masks
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn taper(&self) -> f64 {
        self.taper
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Mask applied to the running residual at split step `k`.
    ///
    /// Band `k` must receive `masks[k]` of the original spectrum, but the
    /// residual entering step `k` holds only the fraction left over by the
    /// earlier steps. The projector is the mask divided by that remaining
    /// fraction, capped at 1. Where masks do not overlap it equals the mask.
    pub fn projector(&self, k: usize) -> &[f64] {
        &self.projectors[k]
    }

    /// Masks as a `[K, H, W]` tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let data = self.masks.iter().flatten().copied().collect();
        Tensor::new(vec![self.band_count(), self.h, self.w], data, DType::F64)
    }
}

fn is_partition_of_unity(masks: &[Vec<f64>], tol: f64) -> bool {
    let n = masks[0].len();
    (0..n).all(|i| (masks.iter().map(|m| m[i]).sum::<f64>() - 1.0).abs() <= tol)
}

fn split_projectors(masks: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = masks[0].len();
    let mut remaining = vec![1.0f64; n];
    masks
        .iter()
        .map(|m| {
            let p: Vec<f64> = m
                .iter()
                .zip(&remaining)
                .map(|(&mk, &rem)| if rem > 1e-12 { (mk / rem).min(1.0) } else { 0.0 })
                .collect();
            for (rem, &pk) in remaining.iter_mut().zip(&p) {
                *rem *= 1.0 - pk;
            }
            p
        })
        .collect()
}

/// `K` concentric rings with linearly spaced edges and raised-cosine
/// transitions of half-width `taper`.
pub fn ring_masks(h: usize, w: usize, k: usize, taper: f64, normalized: bool) -> Result<BandMaskSet> {
    if h == 0 || w == 0 {
        return Err(Error::arg("grid dimensions must be >= 1"));
    }
    if k == 0 {
        return Err(Error::arg("band count must be >= 1"));
    }
    let width = 1.0 / k as f64;
    if !(taper >= 0.0) || taper >= width / 2.0 {
        return Err(Error::arg(format!(
            "taper {taper} must lie in [0, {}) for {k} bands",
            width / 2.0
        )));
    }
    let edges: Vec<f64> = (0..=k).map(|i| i as f64 * width).collect();
    let radius = radius_grid(h, w);
    let mut masks: Vec<Vec<f64>> = (0..k)
        .map(|band| {
            radius
                .iter()
                .map(|&r| {
                    let lower = if band == 0 { 1.0 } else { cosine_rise(r, edges[band], taper) };
                    let upper = if band + 1 == k {
                        1.0
                    } else {
                        1.0 - cosine_rise(r, edges[band + 1], taper)
                    };
                    lower * upper
                })
                .collect()
        })
        .collect();
    if normalized {
        for i in 0..h * w {
            let total: f64 = masks.iter().map(|m| m[i]).sum();
            for m in masks.iter_mut() {
                m[i] /= total;
            }
        }
    }
    let mut set = BandMaskSet::from_masks(h, w, masks, edges, taper)?;
    set.normalized = normalized;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffMaskPair {
    pub lp: Vec<f64>,
    pub hp: Vec<f64>,
    pub cutoff: f64,
    pub taper: f64,
}

/// Complementary low/high-pass pair. The low-pass passes every radius up
/// to `rho` untouched and rolls off to zero over `(rho, rho + taper)`.
pub fn cutoff_masks(h: usize, w: usize, rho: f64, taper: f64) -> Result<CutoffMaskPair> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::arg(format!("cutoff {rho} outside (0, 1]")));
    }
    if !(taper >= 0.0) {
        return Err(Error::arg(format!("taper {taper} must be >= 0")));
    }
    if h == 0 || w == 0 {
        return Err(Error::arg("grid dimensions must be >= 1"));
    }
    let lp: Vec<f64> = radius_grid(h, w)
        .into_iter()
        .map(|r| low_pass_response(r, rho, taper))
        .collect();
    let hp = lp.iter().map(|v| 1.0 - v).collect();
    Ok(CutoffMaskPair {
        lp,
        hp,
        cutoff: rho,
        taper,
    })
}

#[inline]
fn low_pass_response(r: f64, rho: f64, taper: f64) -> f64 {
    if r <= rho {
        1.0
    } else if taper <= 0.0 || r >= rho + taper {
        0.0
    } else {
        0.5 + 0.5 * (std::f64::consts::PI * (r - rho) / taper).cos()
    }
}
