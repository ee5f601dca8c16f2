//! Residual band split of latent grids.
//!
//! Starting from `r0 = z`, step `k` extracts `band_k = P_k(r_k)` and leaves
//! `r_{k+1} = r_k - band_k`. `P_k` is a Fourier-domain projector built from
//! the ring masks (see [`BandMaskSet::projector`]). The bands and the final
//! residual sum back to `z` by telescoping, whatever the masks are.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::masks::BandMaskSet;
use crate::spectral::Fft2;
use crate::tensor::Tensor;

/// Largest imaginary residue tolerated when a band is brought back to the
/// spatial domain.
pub const SYMMETRY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    pub bands: Vec<Tensor>,
    pub final_residual: Tensor,
    pub mask_set: Arc<BandMaskSet>,
}

impl BandStack {
    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn shape(&self) -> &[usize] {
        self.final_residual.shape()
    }

    /// Sum of the bands only, accumulated in band order.
    pub fn band_sum(&self) -> Tensor {
        let mut acc = self.bands[0].data().to_vec();
        for b in &self.bands[1..] {
            for (a, v) in acc.iter_mut().zip(b.data()) {
                *a += v;
            }
        }
        self.bands[0].with_data(acc)
    }
}

fn check_grid(x: &Tensor, h: usize, w: usize) -> Result<usize> {
    let (slices, xh, xw) = x.grid_dims()?;
    if (xh, xw) != (h, w) {
        return Err(Error::arg(format!(
            "mask grid {h}x{w} does not match tensor grid {xh}x{xw}"
        )));
    }
    Ok(slices)
}

fn project_with(plan: &Fft2, x: &Tensor, mask: &[f64]) -> Result<Tensor> {
    let (h, w) = plan.dims();
    let slices = check_grid(x, h, w)?;
    let n = h * w;
    let mut out = vec![0.0; x.len()];
    let mut residue = 0.0f64;
    for s in 0..slices {
        let r = plan.filter_real(&x.data()[s * n..(s + 1) * n], mask, &mut out[s * n..(s + 1) * n]);
        residue = residue.max(r);
    }
    if residue > SYMMETRY_TOL {
        return Err(Error::Symmetry {
            residue,
            tolerance: SYMMETRY_TOL,
        });
    }
    Ok(x.with_data(out))
}

/// `idft2(mask * dft2(slice))` on every `H x W` slice of `x`.
pub fn project_band(x: &Tensor, mask: &[f64]) -> Result<Tensor> {
    let (_, h, w) = x.grid_dims()?;
    if mask.len() != h * w {
        return Err(Error::arg(format!(
            "mask has {} bins, tensor grid is {h}x{w}",
            mask.len()
        )));
    }
    project_with(&Fft2::new(h, w), x, mask)
}

pub fn iterative_split(z: &Tensor, mask_set: Arc<BandMaskSet>) -> Result<BandStack> {
    let (h, w) = mask_set.grid();
    check_grid(z, h, w)?;
    let plan = Fft2::new(h, w);
    let mut residual = z.clone();
    let mut bands = Vec::with_capacity(mask_set.band_count());
    for k in 0..mask_set.band_count() {
        let band = project_with(&plan, &residual, mask_set.projector(k))?;
        residual = residual.sub(&band)?;
        bands.push(band);
    }
    Ok(BandStack {
        bands,
        final_residual: residual,
        mask_set,
    })
}

pub fn recompose(stack: &BandStack) -> Tensor {
    stack
        .band_sum()
        .add(&stack.final_residual)
        .expect("stack tensors share a shape")
}

/// Adjoint of [`iterative_split`]: maps gradients with respect to each band
/// and the final residual back to a gradient with respect to the input.
///
/// Every projector is a real, symmetric Fourier multiplier and therefore
/// self-adjoint, so the reverse telescope is
/// `g_k = g_{k+1} + P_k(band_grad_k - g_{k+1})`, starting from the
/// residual gradient.
pub fn split_adjoint(
    band_grads: &[Tensor],
    residual_grad: &Tensor,
    mask_set: &BandMaskSet,
) -> Result<Tensor> {
    if band_grads.len() != mask_set.band_count() {
        return Err(Error::arg(format!(
            "{} band gradients for {} bands",
            band_grads.len(),
            mask_set.band_count()
        )));
    }
    let (h, w) = mask_set.grid();
    let plan = Fft2::new(h, w);
    let mut g = residual_grad.clone();
    for k in (0..mask_set.band_count()).rev() {
        let diff = band_grads[k].sub(&g)?;
        g = g.add(&project_with(&plan, &diff, mask_set.projector(k))?)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::ring_masks;
    use crate::rng::{gaussian_tensor, SeededRng};
    use crate::spectral::{dft2, spectral_energy};
    use crate::tensor::DType;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        gaussian_tensor(&mut SeededRng::new(seed), shape, 0.0, 1.0, DType::F64).unwrap()
    }

    #[test]
    fn all_pass_and_all_stop() {
        let x = random(&[2, 3, 8, 8], 1);
        let ones = vec![1.0; 64];
        assert!(project_band(&x, &ones).unwrap().max_abs_diff(&x).unwrap() < 1e-10);
        let zeros = vec![0.0; 64];
        assert!(project_band(&x, &zeros).unwrap().data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn binary_mask_projection_is_idempotent() {
        let x = random(&[8, 8], 2);
        let set = ring_masks(8, 8, 3, 0.0, false).unwrap();
        let m = set.mask(1);
        assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));
        let once = project_band(&x, m).unwrap();
        let twice = project_band(&once, m).unwrap();
        assert!(twice.max_abs_diff(&once).unwrap() < 1e-9);
    }

    #[test]
    fn asymmetric_mask_is_rejected() {
        let x = random(&[4, 4], 3);
        let mut m = vec![0.0; 16];
        m[1] = 1.0;
        assert!(matches!(project_band(&x, &m), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn single_all_pass_band() {
        let z = random(&[1, 2, 5, 7], 4);
        let set = Arc::new(ring_masks(5, 7, 1, 0.0, true).unwrap());
        let stack = iterative_split(&z, set).unwrap();
        assert!(stack.bands[0].max_abs_diff(&z).unwrap() < 1e-12);
        assert!(stack.final_residual.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn grid_mismatch_is_argument_error() {
        let z = random(&[1, 1, 6, 6], 5);
        let set = Arc::new(ring_masks(8, 8, 2, 0.04, true).unwrap());
        assert!(matches!(iterative_split(&z, set), Err(Error::Argument(_))));
    }

    #[test]
    fn constant_input_lives_in_band_zero() {
        let z = Tensor::full(&[1, 1, 16, 16], 0.7, DType::F64).unwrap();
        let set = Arc::new(ring_masks(16, 16, 4, 0.04, true).unwrap());
        let stack = iterative_split(&z, set).unwrap();
        let energies: Vec<f64> = stack
            .bands
            .iter()
            .map(|b| spectral_energy(&dft2(b).unwrap()))
            .collect();
        let total: f64 = energies.iter().sum();
        assert!(energies[0] / total >= 0.999);
    }

    #[test]
    fn dropping_residual_of_normalized_split_is_negligible() {
        let z = random(&[2, 3, 16, 16], 6);
        let set = Arc::new(ring_masks(16, 16, 4, 0.04, true).unwrap());
        let stack = iterative_split(&z, set).unwrap();
        let ratio = stack.final_residual.norm() / z.norm();
        assert!(ratio < 1e-4, "ratio {ratio}");
        let no_res = stack.band_sum();
        assert!(no_res.sub(&z).unwrap().norm() / z.norm() < 1e-3);
    }

    #[test]
    fn adjoint_matches_inner_products() {
        // <split(z), g> == <z, adjoint(g)> for random z and gradients.
        let shape = [1, 2, 8, 8];
        let set = Arc::new(ring_masks(8, 8, 3, 0.05, false).unwrap());
        let z = random(&shape, 7);
        let stack = iterative_split(&z, set.clone()).unwrap();
        let grads: Vec<Tensor> = (0..3).map(|k| random(&shape, 20 + k)).collect();
        let rg = random(&shape, 30);
        let lhs: f64 = stack
            .bands
            .iter()
            .zip(&grads)
            .map(|(b, g)| b.data().iter().zip(g.data()).map(|(a, c)| a * c).sum::<f64>())
            .sum::<f64>()
            + stack.final_residual.data().iter().zip(rg.data()).map(|(a, c)| a * c).sum::<f64>();
        let adj = split_adjoint(&grads, &rg, &set).unwrap();
        let rhs: f64 = z.data().iter().zip(adj.data()).map(|(a, c)| a * c).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
