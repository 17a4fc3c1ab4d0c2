//! Content-based tag propagation.
//!
//! A query video receives a tag vector by aggregating the tag relevance of
//! its `k` visual nearest neighbors in the source corpus, minus a prior term
//! accumulated over the whole corpus:
//!
//! ```text
//! b(v, i) = 1/k · Σ_{j ≤ k} w(v, n_j) · r(n_j, t_i)  −  1/N · Σ_{j ≤ N} w(v, s_j) · r(s_j, t_i)
//! ```
//!
//! Three variants choose the neighbor weight `w` and the relevance `r`:
//!
//! | variant  | `w`                        | `r`                         |
//! |----------|----------------------------|-----------------------------|
//! | `hard`   | 1 inside the top-k, else 0 | binary labels               |
//! | `soft`   | cosine similarity          | binary labels               |
//! | `refine` | cosine similarity          | [`refine_source`] matrix    |
//!
//! Summation order is fixed (rank order for the neighbor term, corpus order
//! for the prior) so results are bitwise reproducible, including under
//! [`propagate_batch`]'s parallel execution.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureVector, SourceCorpus, VideoId};
use crate::error::{Error, Result};
use crate::simsearch;

/// Default for both `k` and `k_r`.
pub const DEFAULT_NEIGHBORS: usize = 500;

/// Queries processed together by the dense prior kernel.
const QUERY_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hard,
    Soft,
    Refine,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Hard, Variant::Soft, Variant::Refine];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hard => "hard",
            Variant::Soft => "soft",
            Variant::Refine => "refine",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Variant::Hard),
            "soft" => Ok(Variant::Soft),
            "refine" => Ok(Variant::Refine),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

/// How the prior term weights corpus videos under the hard variant.
///
/// `Literal` reuses the rank weight, so only the top-k neighbors enter the
/// prior. `FullSet` weights every corpus video by 1, making the prior the
/// plain corpus tag frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardPriorMode {
    #[default]
    Literal,
    FullSet,
}

impl FromStr for HardPriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(HardPriorMode::Literal),
            "full_set" => Ok(HardPriorMode::FullSet),
            _ => Err(Error::InvalidArgument(format!("unknown hard prior mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub k: usize,
    pub k_r: usize,
    pub variant: Variant,
    pub hard_prior_mode: HardPriorMode,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            k: DEFAULT_NEIGHBORS,
            k_r: DEFAULT_NEIGHBORS,
            variant: Variant::Soft,
            hard_prior_mode: HardPriorMode::Literal,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_r == 0 {
            return Err(Error::InvalidArgument("k and k_r must be positive".into()));
        }
        Ok(())
    }
}

/// A video's (or an event's) representation in tag space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TagVector(Vec<f64>);

impl TagVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tag vector"));
        }
        Ok(TagVector(values))
    }

    pub fn zeros(m: usize) -> Self {
        TagVector(vec![0.0; m])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for TagVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for TagVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        TagVector::new(values)
    }
}

impl From<TagVector> for Vec<f64> {
    fn from(value: TagVector) -> Self {
        value.0
    }
}

/// Refined relevance `r(v_s, t)` of every vocabulary tag for every source
/// video, stored row-major (one row per video).
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl RelevanceMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RelevanceMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                found: (values.len() / cols.max(1), cols),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("relevance matrix"));
        }
        Ok(RelevanceMatrix { rows, cols, values })
    }

    /// Binary labels of a corpus as a dense matrix.
    pub fn from_labels(corpus: &SourceCorpus) -> Self {
        let mut r = RelevanceMatrix::zeros(corpus.len(), corpus.vocabulary().len());
        for v in 0..corpus.len() {
            for &t in corpus.labels(v) {
                r.values[v * r.cols + t as usize] = 1.0;
            }
        }
        r
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, video: usize, tag: usize) -> f64 {
        self.values[video * self.cols + tag]
    }

    pub fn row(&self, video: usize) -> &[f64] {
        &self.values[video * self.cols..(video + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The matrix with every entry rounded through `f32`, i.e. exactly what
    /// a save/load cycle of the binary format yields.
    pub fn to_f32_precision(&self) -> Self {
        RelevanceMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Contribution of a neighbor at 1-based `rank` with the given similarity.
/// Hard assignment is binary within the top-k; soft and refine use the
/// similarity itself.
pub fn neighbor_weight(variant: Variant, rank: usize, similarity: f64, k: usize) -> f64 {
    if rank > k {
        return 0.0;
    }
    match variant {
        Variant::Hard => 1.0,
        Variant::Soft | Variant::Refine => similarity,
    }
}

fn clamp_neighbors(requested: usize, available: usize, name: &str) -> usize {
    if requested > available {
        log::warn!("{name}={requested} exceeds the {available} available neighbors; clamping");
        available
    } else {
        requested
    }
}

/// Source-set refinement: neighbor voting of every source video against the
/// rest of the corpus, with the corpus-wide prior subtracted.
///
/// The `k_r` neighbors of a video exclude the video itself; the prior sum
/// runs over all `N` videos including it. `k_r` is clamped to `N - 1`.
pub fn refine_source(corpus: &SourceCorpus, config: &PropagationConfig) -> RelevanceMatrix {
    let n = corpus.len();
    let m = corpus.vocabulary().len();
    let k_r = clamp_neighbors(config.k_r.max(1), n - 1, "k_r");

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sims = simsearch::self_similarities(corpus, i);
            let neighbors = simsearch::top_k(corpus, &sims, k_r, Some(i));
            let mut vote = vec![0.0; m];
            for &(j, s) in &neighbors {
                for &t in corpus.labels(j) {
                    vote[t as usize] += s;
                }
            }
            let mut prior = vec![0.0; m];
            for (j, &s) in sims.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for &t in corpus.labels(j) {
                    prior[t as usize] += s;
                }
            }
            vote.iter()
                .zip(&prior)
                .map(|(&v, &p)| {
                    let head = if k_r == 0 { 0.0 } else { v / k_r as f64 };
                    head - p / n as f64
                })
                .collect()
        })
        .collect();

    RelevanceMatrix {
        rows: n,
        cols: m,
        values: rows.concat(),
    }
}

#[derive(Clone, Copy)]
enum Relevance<'a> {
    Labels,
    Dense(&'a RelevanceMatrix),
}

/// Everything the kernels need for one query.
struct QueryWeights {
    /// `(corpus index, neighbor weight)` in rank order.
    neighbors: Vec<(usize, f64)>,
    /// Prior weight of every corpus video, in corpus order.
    prior: Vec<f64>,
}

struct Engine<'a> {
    corpus: &'a SourceCorpus,
    relevance: Relevance<'a>,
    variant: Variant,
    hard_prior_mode: HardPriorMode,
    k: usize,
}

impl<'a> Engine<'a> {
    fn new(
        corpus: &'a SourceCorpus,
        config: &PropagationConfig,
        relevance: Option<&'a RelevanceMatrix>,
    ) -> Result<Self> {
        config.validate()?;
        let relevance = match (relevance, config.variant) {
            (Some(r), _) => Relevance::Dense(r),
            (None, Variant::Refine) => Relevance::Dense(corpus.refined().ok_or(Error::MissingRefinement)?),
            (None, _) => Relevance::Labels,
        };
        if let Relevance::Dense(r) = relevance {
            let expected = (corpus.len(), corpus.vocabulary().len());
            if r.shape() != expected {
                return Err(Error::ShapeMismatch {
                    expected,
                    found: r.shape(),
                });
            }
        }
        Ok(Engine {
            corpus,
            relevance,
            variant: config.variant,
            hard_prior_mode: config.hard_prior_mode,
            k: clamp_neighbors(config.k, corpus.len(), "k"),
        })
    }

    fn m(&self) -> usize {
        self.corpus.vocabulary().len()
    }

    fn weights(&self, query: &[f64]) -> Result<QueryWeights> {
        let sims = simsearch::similarities(self.corpus, query)?;
        let top = simsearch::top_k(self.corpus, &sims, self.k, None);
        let neighbors = top
            .iter()
            .enumerate()
            .map(|(rank, &(j, s))| (j, neighbor_weight(self.variant, rank + 1, s, self.k)))
            .collect();
        let prior = match (self.variant, self.hard_prior_mode) {
            (Variant::Hard, HardPriorMode::Literal) => {
                let mut w = vec![0.0; sims.len()];
                for &(j, _) in &top {
                    w[j] = 1.0;
                }
                w
            }
            (Variant::Hard, HardPriorMode::FullSet) => vec![1.0; sims.len()],
            _ => sims,
        };
        Ok(QueryWeights { neighbors, prior })
    }

    /// Σ over `terms` of weight · r(video, ·), in the given order.
    fn accumulate(&self, terms: impl Iterator<Item = (usize, f64)>, acc: &mut [f64]) {
        match self.relevance {
            Relevance::Labels => {
                for (j, w) in terms {
                    if w == 0.0 {
                        continue;
                    }
                    for &t in self.corpus.labels(j) {
                        acc[t as usize] += w;
                    }
                }
            }
            Relevance::Dense(r) => {
                for (j, w) in terms {
                    if w == 0.0 {
                        continue;
                    }
                    axpy(acc, w, r.row(j));
                }
            }
        }
    }

    /// Prior sums for a block of queries. For dense relevance each matrix row
    /// is applied to every query of the block before moving on, so a row is
    /// read once per block; per output entry the order is still corpus order.
    fn prior_block(&self, block: &[QueryWeights]) -> Vec<Vec<f64>> {
        let m = self.m();
        let mut acc = vec![vec![0.0; m]; block.len()];
        match self.relevance {
            Relevance::Labels => {
                for (q, weights) in block.iter().enumerate() {
                    self.accumulate(weights.prior.iter().copied().enumerate(), &mut acc[q]);
                }
            }
            Relevance::Dense(r) => {
                for j in 0..self.corpus.len() {
                    let row = r.row(j);
                    for (q, weights) in block.iter().enumerate() {
                        let w = weights.prior[j];
                        if w != 0.0 {
                            axpy(&mut acc[q], w, row);
                        }
                    }
                }
            }
        }
        acc
    }

    fn finish(&self, weights: &QueryWeights, prior: &[f64]) -> TagVector {
        let mut head = vec![0.0; self.m()];
        self.accumulate(weights.neighbors.iter().copied(), &mut head);
        let k = self.k as f64;
        let n = self.corpus.len() as f64;
        let values = head.iter().zip(prior).map(|(&h, &p)| h / k - p / n).collect();
        TagVector(values)
    }

    fn run_block(&self, queries: &[&[f64]]) -> Result<Vec<TagVector>> {
        let weights = queries.iter().map(|q| self.weights(q)).collect::<Result<Vec<_>>>()?;
        let priors = self.prior_block(&weights);
        Ok(weights.iter().zip(&priors).map(|(w, p)| self.finish(w, p)).collect())
    }
}

fn axpy(acc: &mut [f64], w: f64, row: &[f64]) {
    for (a, &x) in acc.iter_mut().zip(row) {
        *a += w * x;
    }
}

/// Tag vector of one query video.
pub fn propagate(corpus: &SourceCorpus, query: &[f64], config: &PropagationConfig) -> Result<TagVector> {
    let engine = Engine::new(corpus, config, None)?;
    Ok(engine.run_block(&[query])?.pop().expect("one query in, one vector out"))
}

/// Like [`propagate`], with an explicit relevance matrix in place of the
/// variant's own `r`. The variant still selects the neighbor weighting.
pub fn propagate_with_relevance(
    corpus: &SourceCorpus,
    query: &[f64],
    config: &PropagationConfig,
    relevance: &RelevanceMatrix,
) -> Result<TagVector> {
    let engine = Engine::new(corpus, config, Some(relevance))?;
    Ok(engine.run_block(&[query])?.pop().expect("one query in, one vector out"))
}

/// Tag vectors for many queries, in input order. Blocks of queries run in
/// parallel on the current rayon pool; the output does not depend on the
/// number of threads. Fails on the first query (in input order) that errors.
pub fn propagate_batch(
    corpus: &SourceCorpus,
    queries: &[(VideoId, FeatureVector)],
    config: &PropagationConfig,
) -> Result<Vec<(VideoId, TagVector)>> {
    let engine = Engine::new(corpus, config, None)?;
    for (id, q) in queries {
        if q.dim() != corpus.dim() {
            return Err(Error::Query {
                id: id.to_string(),
                source: Box::new(Error::DimensionMismatch {
                    expected: corpus.dim(),
                    found: q.dim(),
                }),
            });
        }
    }
    let blocks: Vec<Vec<TagVector>> = queries
        .par_chunks(QUERY_BLOCK)
        .map(|chunk| {
            let slices: Vec<&[f64]> = chunk.iter().map(|(_, q)| &q[..]).collect();
            engine.run_block(&slices)
        })
        .collect::<Result<_>>()?;
    Ok(queries
        .iter()
        .map(|(id, _)| id.clone())
        .zip(blocks.into_iter().flatten())
        .collect())
}
