use crate::error::{Error, Result};
use crate::masks::BandMaskSet;
use crate::spectral::dft2;
use crate::tensor::Tensor;

/// Fraction of spectral power per radial band, averaged over every
/// `H x W` slice of a feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub fractions: Vec<f64>,
    pub band_edges: Vec<f64>,
}

impl EnergyProfile {
    pub fn band_count(&self) -> usize {
        self.fractions.len()
    }
}

/// Power is `|X|^2` so the profile partitions Parseval energy. The mask
/// set must be a partition of unity.
pub fn energy_profile(features: &Tensor, mask_set: &BandMaskSet) -> Result<EnergyProfile> {
    if !mask_set.is_normalized() {
        return Err(Error::arg(
            "energy profiles need a normalized (partition of unity) mask set",
        ));
    }
    let (slices, h, w) = features.grid_dims()?;
    if mask_set.grid() != (h, w) {
        return Err(Error::arg(format!(
            "mask grid {:?} does not match feature grid {h}x{w}",
            mask_set.grid()
        )));
    }
    let power = dft2(features)?.power();
    let n = h * w;
    let mut acc = vec![0.0; mask_set.band_count()];
    for s in 0..slices {
        let p = &power[s * n..(s + 1) * n];
        for (k, a) in acc.iter_mut().enumerate() {
            *a += mask_set
                .mask(k)
                .iter()
                .zip(p)
                .map(|(m, v)| m * v)
                .sum::<f64>();
        }
    }
    let total: f64 = acc.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Input("features carry no spectral energy".into()));
    }
    Ok(EnergyProfile {
        fractions: acc.iter().map(|a| a / total).collect(),
        band_edges: mask_set.edges().to_vec(),
    })
}
