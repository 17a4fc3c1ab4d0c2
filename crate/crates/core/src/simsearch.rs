//! Video-level similarity: frame pooling, cosine similarity and exact
//! k-nearest-neighbor search over a [`SourceCorpus`].

use std::cmp::Ordering;

use crate::corpus::{FeatureVector, SourceCorpus, VideoId};
use crate::error::{Error, Result};

/// One retrieved neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Position of the video in corpus order.
    pub index: usize,
    pub id: VideoId,
    pub similarity: f64,
}

/// Neighbors sorted by descending similarity, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub entries: Vec<Neighbor>,
    pub k: usize,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Component-wise mean of a list of frame features.
pub fn average_pool_frames(frames: &[FeatureVector]) -> Result<FeatureVector> {
    let first = frames.first().ok_or(Error::EmptyInput("frame list"))?;
    let dim = first.dim();
    let mut sum = vec![0.0; dim];
    for frame in frames {
        if frame.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: frame.dim(),
            });
        }
        for (s, v) in sum.iter_mut().zip(frame.iter()) {
            *s += v;
        }
    }
    let n = frames.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    FeatureVector::new(sum)
}

/// Dot product with four interleaved partial sums. The reduction order is
/// fixed, so results are bitwise reproducible.
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; 4];
    let xs = x.chunks_exact(4);
    let ys = y.chunks_exact(4);
    let (xr, yr) = (xs.remainder(), ys.remainder());
    for (a, b) in xs.zip(ys) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut tail = 0.0;
    for (a, b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Zero-norm vectors have similarity 0 with everything.
fn cosine_from_parts(dot: f64, norm_x: f64, norm_y: f64) -> f64 {
    if norm_x == 0.0 || norm_y == 0.0 {
        return 0.0;
    }
    let c = (dot / (norm_x * norm_y)).clamp(-1.0, 1.0);
    // normalise -0.0 so total-order comparisons treat it as 0
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(cosine_from_parts(dot(x, y), norm(x), norm(y)))
}

fn check_dim(corpus: &SourceCorpus, query: &[f64]) -> Result<()> {
    if query.len() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            found: query.len(),
        });
    }
    Ok(())
}

/// Similarity of `query` to every corpus video, in corpus order.
pub(crate) fn similarities(corpus: &SourceCorpus, query: &[f64]) -> Result<Vec<f64>> {
    check_dim(corpus, query)?;
    let qn = norm(query);
    Ok((0..corpus.len())
        .map(|i| cosine_from_parts(dot(query, corpus.feature(i)), qn, corpus.norm(i)))
        .collect())
}

/// Similarities of corpus video `i` to every corpus video.
pub(crate) fn self_similarities(corpus: &SourceCorpus, i: usize) -> Vec<f64> {
    let q = corpus.feature(i);
    let qn = corpus.norm(i);
    (0..corpus.len())
        .map(|j| cosine_from_parts(dot(q, corpus.feature(j)), qn, corpus.norm(j)))
        .collect()
}

pub fn all_similarities(corpus: &SourceCorpus, query: &[f64]) -> Result<Vec<(VideoId, f64)>> {
    let sims = similarities(corpus, query)?;
    Ok(corpus.ids().iter().cloned().zip(sims).collect())
}

/// Top-`k` corpus positions by similarity, excluding `exclude`. Returns
/// `(index, similarity)` pairs in rank order.
pub(crate) fn top_k(corpus: &SourceCorpus, sims: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
    // Adding 0.0 maps -0.0 to 0.0 so that signed zeros tie.
    let rank_order = |&a: &usize, &b: &usize| -> Ordering {
        (sims[b] + 0.0)
            .total_cmp(&(sims[a] + 0.0))
            .then_with(|| corpus.id_rank(a).cmp(&corpus.id_rank(b)))
    };
    let mut candidates: Vec<usize> = (0..sims.len()).filter(|&i| Some(i) != exclude).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    candidates.into_iter().map(|i| (i, sims[i])).collect()
}

/// Exact k-nearest-neighbor search by cosine similarity.
pub fn knn(corpus: &SourceCorpus, query: &[f64], k: usize, exclude: Option<&VideoId>) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let sims = similarities(corpus, query)?;
    let exclude = exclude.and_then(|id| corpus.index_of(id.as_str()));
    let entries = top_k(corpus, &sims, k, exclude)
        .into_iter()
        .map(|(index, similarity)| Neighbor {
            index,
            id: corpus.id(index).clone(),
            similarity,
        })
        .collect();
    Ok(NeighborList { entries, k })
}
