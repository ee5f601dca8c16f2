//! Training losses.

use crate::error::{Error, Result};
use crate::split::BandStack;
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA_SEM: f64 = 1.0;
pub const DEFAULT_K_BASE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_sem: f64,
    pub l_pix: f64,
    pub total: f64,
    pub lambda_sem: f64,
    pub k_base: usize,
}

impl LossReport {
    pub fn new(l_pix: f64, l_sem: f64, lambda_sem: f64, k_base: usize) -> Self {
        Self {
            l_sem,
            l_pix,
            total: l_pix + lambda_sem * l_sem,
            lambda_sem,
            k_base,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_sem.is_finite() && self.l_pix.is_finite() && self.total.is_finite()
    }
}

fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_shape(b.shape())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Mean over the first `k_base` bands of the elementwise mean squared
/// difference between student and teacher. Higher bands are ignored.
pub fn semantic_loss(student: &BandStack, teacher: &BandStack, k_base: usize) -> Result<f64> {
    let k = student.band_count();
    if teacher.band_count() != k {
        return Err(Error::arg(format!(
            "student has {k} bands, teacher has {}",
            teacher.band_count()
        )));
    }
    if k_base == 0 || k_base > k {
        return Err(Error::arg(format!("k_base {k_base} outside 1..={k}")));
    }
    let mut acc = 0.0;
    for (s, t) in student.bands.iter().zip(&teacher.bands).take(k_base) {
        acc += mse(s, t)?;
    }
    Ok(acc / k_base as f64)
}

/// Gradient of [`semantic_loss`] with respect to each student band.
pub fn semantic_loss_grad(student: &BandStack, teacher: &BandStack, k_base: usize) -> Result<Vec<Tensor>> {
    semantic_loss(student, teacher, k_base)?;
    Ok(student
        .bands
        .iter()
        .zip(&teacher.bands)
        .enumerate()
        .map(|(k, (s, t))| {
            if k < k_base {
                let scale = 2.0 / (k_base as f64 * s.len() as f64);
                s.zip_with(t, |a, b| scale * (a - b)).expect("shapes checked")
            } else {
                s.map(|_| 0.0)
            }
        })
        .collect())
}

pub fn pixel_loss(recon: &Tensor, target: &Tensor) -> Result<f64> {
    mse(recon, target)
}

pub fn pixel_loss_grad(recon: &Tensor, target: &Tensor) -> Result<Tensor> {
    recon.expect_shape(target.shape())?;
    let scale = 2.0 / recon.len() as f64;
    recon.zip_with(target, |a, b| scale * (a - b))
}
