use std::path::{Path, PathBuf};

use super::filter::FilterMode;
use crate::error::{Error, Result};
use crate::pzt::load_tensor;
use crate::tensor::Tensor;

fn unit_rows(t: &Tensor, what: &str) -> Result<(usize, usize, Vec<f64>)> {
    let (n, d) = match *t.shape() {
        [n, d] => (n, d),
        _ => {
            return Err(Error::arg(format!(
                "{what} embeddings must be [N, D], got {:?}",
                t.shape()
            )))
        }
    };
    let mut out = t.data().to_vec();
    for (i, row) in out.chunks_mut(d).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::arg(format!("{what} row {i} has zero or non-finite norm")));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok((n, d, out))
}

/// Zero-based rank of the true match for each query row: the number of
/// candidates scoring strictly higher, plus equal-scoring candidates with
/// a lower index.
pub fn cosine_ranks(queries: &Tensor, candidates: &Tensor) -> Result<Vec<usize>> {
    let (n, d, q) = unit_rows(queries, "text")?;
    let (m, dc, c) = unit_rows(candidates, "image")?;
    if n != m || d != dc {
        return Err(Error::arg(format!(
            "text {:?} and image {:?} embeddings disagree",
            queries.shape(),
            candidates.shape()
        )));
    }
    let dot = |i: usize, j: usize| -> f64 {
        q[i * d..(i + 1) * d]
            .iter()
            .zip(&c[j * d..(j + 1) * d])
            .map(|(a, b)| a * b)
            .sum()
    };
    Ok((0..n)
        .map(|i| {
            let own = dot(i, i);
            (0..n)
                .filter(|&j| {
                    let s = dot(i, j);
                    s > own || (s == own && j < i)
                })
                .count()
        })
        .collect())
}

/// Recall@k of text-to-image retrieval where row `i` of both matrices
/// describes the same item.
pub fn retrieval_recall(text: &Tensor, image: &Tensor, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("k must be >= 1"));
    }
    let ranks = cosine_ranks(text, image)?;
    Ok(ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64)
}

/// Supplies text embeddings and per-cutoff image embeddings.
pub trait EmbeddingSource {
    fn text_embeddings(&self) -> &Tensor;
    fn image_embeddings(&mut self, mode: FilterMode, cutoff: f64) -> Result<Tensor>;
}

/// Embeddings exported to disk: one `[N, D]` PZT per cutoff, named
/// `image_{mode}_{cutoff:.3}.pzt` inside a directory.
pub struct FileEmbeddings {
    text: Tensor,
    dir: PathBuf,
}

impl FileEmbeddings {
    pub fn open(text_path: impl AsRef<Path>, dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self {
            text: load_tensor(text_path)?,
            dir: dir.into(),
        })
    }

    pub fn file_name(mode: FilterMode, cutoff: f64) -> String {
        format!("image_{mode}_{cutoff:.3}.pzt")
    }
}

impl EmbeddingSource for FileEmbeddings {
    fn text_embeddings(&self) -> &Tensor {
        &self.text
    }

    fn image_embeddings(&mut self, mode: FilterMode, cutoff: f64) -> Result<Tensor> {
        let path = self.dir.join(Self::file_name(mode, cutoff));
        if !path.is_file() {
            return Err(Error::Input(format!(
                "no image embeddings for cutoff {cutoff} ({mode}): {} missing",
                path.display()
            )));
        }
        load_tensor(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalCurve {
    pub mode: FilterMode,
    pub k: usize,
    pub cutoffs: Vec<f64>,
    pub recall: Vec<f64>,
}

impl RetrievalCurve {
    /// Adjacent cutoff pairs that break the expected trend: recall should
    /// not fall as a low-pass cutoff opens, nor rise as a high-pass cutoff
    /// closes. Returns the size of each violation.
    pub fn violations(&self) -> Vec<f64> {
        self.recall
            .windows(2)
            .filter_map(|w| {
                let drop = match self.mode {
                    FilterMode::Lp => w[0] - w[1],
                    FilterMode::Hp => w[1] - w[0],
                };
                (drop > 0.0).then_some(drop)
            })
            .collect()
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.recall.len() < 2 {
            return 0.0;
        }
        self.violations().len() as f64 / (self.recall.len() - 1) as f64
    }
}

pub fn retrieval_sweep(
    source: &mut dyn EmbeddingSource,
    cutoffs: &[f64],
    mode: FilterMode,
    k: usize,
) -> Result<RetrievalCurve> {
    let mut recall = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let images = source.image_embeddings(mode, c)?;
        recall.push(retrieval_recall(source.text_embeddings(), &images, k)?);
    }
    Ok(RetrievalCurve {
        mode,
        k,
        cutoffs: cutoffs.to_vec(),
        recall,
    })
}
