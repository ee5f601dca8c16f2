//! Orthonormal 2D discrete Fourier transform over the last two axes.
//!
//! Forward and inverse each carry a factor `1/sqrt(H*W)`, so Parseval holds
//! with no constants. Spectra are stored unshifted: the DC coefficient sits
//! at index `(0, 0)`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Row and column plans for one `H x W` grid.
pub struct Fft2 {
    h: usize,
    w: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            Self {
                h,
                w,
                rows: p.plan_fft_forward(w),
                cols: p.plan_fft_forward(h),
                rows_inv: p.plan_fft_inverse(w),
                cols_inv: p.plan_fft_inverse(h),
                scale: 1.0 / ((h * w) as f64).sqrt(),
            }
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.rows, &self.cols);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.rows_inv, &self.cols_inv);
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.h, self.w);
        assert_eq!(buf.len(), h * w);
        rows.process(buf);
        let mut col = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            cols.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y] * self.scale;
            }
        }
    }

    /// `idft2(mask * dft2(slice))` for one real slice. Returns the real
    /// part and the largest imaginary magnitude discarded.
    pub fn filter_real(&self, slice: &[f64], mask: &[f64], out: &mut [f64]) -> f64 {
        let mut buf: Vec<Complex64> = slice.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (c, &m) in buf.iter_mut().zip(mask) {
            *c *= m;
        }
        self.inverse(&mut buf);
        let mut residue = 0.0f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
            residue = residue.max(c.im.abs());
        }
        residue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
    /// Precision of the spatial tensor this spectrum inverts to.
    dtype: DType,
}

impl Spectrum {
    pub fn new(shape: Vec<usize>, re: Vec<f64>, im: Vec<f64>, dtype: DType) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::arg(format!("invalid spectrum shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::arg(format!(
                "spectrum shape {shape:?} needs {n} coefficients, got re {} / im {}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self {
            shape,
            re,
            im,
            dtype,
        })
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n], vec![0.0; n], dtype)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        let n = self.shape.len();
        (self.shape[n - 2], self.shape[n - 1])
    }

    /// Multiplies every `H x W` slice by a real mask.
    pub fn apply_mask(&mut self, mask: &[f64]) -> Result<()> {
        let (h, w) = self.grid_dims();
        if mask.len() != h * w {
            return Err(Error::arg(format!(
                "mask has {} bins, spectrum grid is {h}x{w}",
                mask.len()
            )));
        }
        for (chunk_re, chunk_im) in self.re.chunks_mut(h * w).zip(self.im.chunks_mut(h * w)) {
            for i in 0..h * w {
                chunk_re[i] *= mask[i];
                chunk_im[i] *= mask[i];
            }
        }
        Ok(())
    }

    /// Per-bin power `|X|^2`.
    pub fn power(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .collect()
    }
}

/// Real part of an inverse transform, with the discarded imaginary residue.
#[derive(Debug, Clone)]
pub struct Inverse {
    pub tensor: Tensor,
    pub max_imag: f64,
}

pub fn dft2(x: &Tensor) -> Result<Spectrum> {
    let (slices, h, w) = x.grid_dims()?;
    let plan = Fft2::new(h, w);
    let n = h * w;
    let mut re = Vec::with_capacity(x.len());
    let mut im = Vec::with_capacity(x.len());
    let mut buf = vec![Complex64::default(); n];
    for s in 0..slices {
        for (b, &v) in buf.iter_mut().zip(&x.data()[s * n..(s + 1) * n]) {
            *b = Complex64::new(v, 0.0);
        }
        plan.forward(&mut buf);
        re.extend(buf.iter().map(|c| c.re));
        im.extend(buf.iter().map(|c| c.im));
    }
    Spectrum::new(x.shape().to_vec(), re, im, x.dtype())
}

pub fn idft2(s: &Spectrum) -> Result<Inverse> {
    let (h, w) = s.grid_dims();
    let n = h * w;
    let plan = Fft2::new(h, w);
    let mut data = Vec::with_capacity(s.re.len());
    let mut max_imag = 0.0f64;
    let mut buf = vec![Complex64::default(); n];
    for (re, im) in s.re.chunks(n).zip(s.im.chunks(n)) {
        for ((b, &r), &i) in buf.iter_mut().zip(re).zip(im) {
            *b = Complex64::new(r, i);
        }
        plan.inverse(&mut buf);
        for c in &buf {
            data.push(c.re);
            max_imag = max_imag.max(c.im.abs());
        }
    }
    Ok(Inverse {
        tensor: Tensor::new(s.shape.clone(), data, s.dtype)?,
        max_imag,
    })
}

/// Inverse transform that fails when the imaginary residue exceeds `tol`,
/// signalling a non-Hermitian spectrum.
pub fn idft2_checked(s: &Spectrum, tol: f64) -> Result<Tensor> {
    let inv = idft2(s)?;
    if inv.max_imag > tol {
        return Err(Error::Symmetry {
            residue: inv.max_imag,
            tolerance: tol,
        });
    }
    Ok(inv.tensor)
}

pub fn total_energy(x: &Tensor) -> f64 {
    x.sum_sq()
}

pub fn spectral_energy(s: &Spectrum) -> f64 {
    s.power().iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_tensor, SeededRng};

    /// Direct-summation orthonormal DFT of one real grid.
    fn naive_dft(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
        let mut re = vec![0.0; h * w];
        let mut im = vec![0.0; h * w];
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for u in 0..h {
            for v in 0..w {
                let (mut sr, mut si) = (0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                        sr += x[y * w + xx] * phase.cos();
                        si += x[y * w + xx] * phase.sin();
                    }
                }
                re[u * w + v] = sr * scale;
                im[u * w + v] = si * scale;
            }
        }
        (re, im)
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        gaussian_tensor(&mut SeededRng::new(seed), shape, 0.0, 1.0, DType::F64).unwrap()
    }

    #[test]
    fn constant_grid_is_dc_only() {
        let c = 1.75;
        let x = Tensor::full(&[4, 4], c, DType::F64).unwrap();
        let s = dft2(&x).unwrap();
        assert!((s.re()[0] - 4.0 * c).abs() < 1e-12);
        assert!(s.im()[0].abs() < 1e-12);
        for i in 1..16 {
            assert!(s.re()[i].abs() < 1e-12 && s.im()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_on_7x12() {
        let x = random(&[7, 12], 1);
        let s = dft2(&x).unwrap();
        let (re, im) = naive_dft(x.data(), 7, 12);
        for i in 0..84 {
            assert!((s.re()[i] - re[i]).abs() < 1e-10);
            assert!((s.im()[i] - im[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn roundtrip_16x16_and_leading_axes() {
        let x = random(&[2, 3, 16, 16], 2);
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        assert!(back.tensor.max_abs_diff(&x).unwrap() < 1e-12);
        assert!(back.max_imag < 1e-12);
    }

    #[test]
    fn roundtrip_224() {
        let x = random(&[224, 224], 3);
        let back = idft2(&dft2(&x).unwrap()).unwrap().tensor;
        assert!(back.max_abs_diff(&x).unwrap() < 1e-9);
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = Spectrum::zeros(&[5, 6], DType::F64).unwrap();
        let t = idft2(&s).unwrap().tensor;
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hermitian_symmetry_of_real_input() {
        let (h, w) = (6, 9);
        let s = dft2(&random(&[h, w], 4)).unwrap();
        for u in 0..h {
            for v in 0..w {
                let (cu, cv) = ((h - u) % h, (w - v) % w);
                assert!((s.re()[u * w + v] - s.re()[cu * w + cv]).abs() < 1e-12);
                assert!((s.im()[u * w + v] + s.im()[cu * w + cv]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let mut re = vec![0.0; 16];
        re[1] = 1.0;
        let s = Spectrum::new(vec![4, 4], re, vec![0.0; 16], DType::F64).unwrap();
        assert!(matches!(idft2_checked(&s, 1e-6), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn parseval() {
        let x = random(&[8, 8], 5);
        let e = total_energy(&x);
        assert!((e - spectral_energy(&dft2(&x).unwrap())).abs() <= 1e-12 * e);
        let z = Tensor::zeros(&[8, 8], DType::F64).unwrap();
        assert_eq!(total_energy(&z), 0.0);
    }

    #[test]
    fn f32_roundtrip_tolerance() {
        let x = random(&[33, 17], 6).cast(DType::F32);
        let back = idft2(&dft2(&x).unwrap()).unwrap().tensor;
        assert_eq!(back.dtype(), DType::F32);
        assert!(back.max_abs_diff(&x).unwrap() < 1e-4);
    }
}
