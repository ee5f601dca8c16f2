//! Spectral probes of feature maps and retrieval under frequency filtering.

mod energy;
mod filter;
pub mod ppm;
mod retrieval;
pub mod synthetic;

pub use energy::{energy_profile, EnergyProfile};
pub use filter::{filter_channels, filter_image, gaussian_blur, FilterMode};
pub use retrieval::{
    cosine_ranks, retrieval_recall, retrieval_sweep, EmbeddingSource, FileEmbeddings, RetrievalCurve,
};
