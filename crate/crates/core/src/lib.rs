//! Frequency-band factorization of latent grids.
//!
//! A latent grid is split into concentric radial frequency bands by a
//! residual FFT projection, optionally corrupted band-by-band, and fused
//! back into one tensor by a small convolutional block. The crate also
//! carries the spectral analysis tools used to probe how encoders spread
//! energy across bands, and a desk-scale autoencoder that trains the whole
//! pipeline with hand-written backpropagation.

pub mod analysis;
pub mod error;
pub mod masks;
pub mod modulator;
pub mod objectives;
pub mod pzt;
pub mod rng;
pub mod spectral;
pub mod split;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
pub use masks::{cutoff_masks, ring_masks, BandMaskSet, CutoffMaskPair};
pub use rng::SeededRng;
pub use split::{iterative_split, project_band, recompose, BandStack};
pub use tensor::{DType, Tensor};
