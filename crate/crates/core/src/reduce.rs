//! Dimensionality reduction of tag vectors: keeping only the most frequent
//! source tags, or projecting onto principal components.
//!
//! Frequent-tag selection needs no labeled data and therefore also applies to
//! zero-example detection. PCA is usually fit per event on its training tag
//! vectors, but [`pca_fit`] accepts any collection.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{sort_by_frequency, SourceCorpus, TagVocabulary};
use crate::error::{Error, Result};
use crate::persist;
use crate::tagprop::TagVector;

/// Recommended frequent-tag size for few-example detection.
pub const RECOMMENDED_SIZE: usize = 2000;
/// Recommended frequent-tag size for one-example detection.
pub const RECOMMENDED_SIZE_ONE_EXAMPLE: usize = 2500;

/// A subset of a parent vocabulary, kept in parent order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedVocabulary {
    selected: Vec<usize>,
    parent_len: usize,
}

impl ReducedVocabulary {
    pub fn new(mut selected: Vec<usize>, parent_len: usize) -> Result<Self> {
        selected.sort_unstable();
        if selected.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate tag index in selection".into()));
        }
        if let Some(&last) = selected.last() {
            if last >= parent_len {
                return Err(Error::InvalidArgument(format!(
                    "tag index {last} outside vocabulary of size {parent_len}"
                )));
            }
        }
        Ok(ReducedVocabulary { selected, parent_len })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }

    /// The selected tags as a vocabulary of their own.
    pub fn vocabulary(&self, parent: &TagVocabulary) -> Result<TagVocabulary> {
        TagVocabulary::new(self.selected.iter().map(|&i| parent.tag(i).to_string()).collect())
    }
}

/// The `size` tags carried by the most source videos (ties by ascending
/// tag), returned in parent-vocabulary order.
pub fn select_frequent(corpus: &SourceCorpus, size: usize) -> Result<ReducedVocabulary> {
    let vocab = corpus.vocabulary();
    if size > vocab.len() {
        return Err(Error::SizeTooLarge {
            requested: size,
            max: vocab.len(),
        });
    }
    if size == 0 {
        return Err(Error::InvalidArgument("reduced size must be positive".into()));
    }
    let df = corpus.document_frequencies();
    let mut entries: Vec<(&str, usize)> = vocab.tags().iter().map(String::as_str).zip(df).collect();
    sort_by_frequency(&mut entries);
    let selected = entries[..size]
        .iter()
        .map(|(tag, _)| vocab.index_of(tag).expect("tag from this vocabulary"))
        .collect();
    ReducedVocabulary::new(selected, vocab.len())
}

/// Copy the selected coordinates of a full-vocabulary vector.
pub fn project_vocabulary(vector: &[f64], reduced: &ReducedVocabulary) -> Result<TagVector> {
    if vector.len() != reduced.parent_len {
        return Err(Error::DimensionMismatch {
            expected: reduced.parent_len,
            found: vector.len(),
        });
    }
    TagVector::new(reduced.selected.iter().map(|&i| vector[i]).collect())
}

#[derive(Serialize, Deserialize)]
struct ReducedFile {
    parent_vocab_hash: String,
    tags: Vec<String>,
}

pub fn save_reduced(reduced: &ReducedVocabulary, parent: &TagVocabulary, path: &Path) -> Result<()> {
    let file = ReducedFile {
        parent_vocab_hash: parent.content_hash(),
        tags: reduced.selected.iter().map(|&i| parent.tag(i).to_string()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    persist::write_atomic(path, text.as_bytes())
}

pub fn load_reduced(path: &Path, parent: &TagVocabulary) -> Result<ReducedVocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ReducedFile = serde_json::from_str(&text)?;
    if file.parent_vocab_hash != parent.content_hash() {
        return Err(Error::corrupt(path, "reduced vocabulary belongs to a different parent"));
    }
    let selected = file
        .tags
        .iter()
        .map(|t| parent.index_of(t).ok_or_else(|| Error::UnknownTag(t.clone())))
        .collect::<Result<Vec<_>>>()?;
    ReducedVocabulary::new(selected, parent.len())
}

/// Principal axes of a set of tag vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `output_dim × input_dim`, row-major; rows are orthonormal axes.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, components: Vec<f64>, explained_variance: Vec<f64>) -> Result<Self> {
        let m = mean.len();
        if components.len() != explained_variance.len() * m {
            return Err(Error::ShapeMismatch {
                expected: (explained_variance.len(), m),
                found: (components.len() / m.max(1), m),
            });
        }
        if mean
            .iter()
            .chain(&components)
            .chain(&explained_variance)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("pca model"));
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let m = self.input_dim();
        &self.components[i * m..(i + 1) * m]
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save_pca(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load_pca(path)
    }
}

/// Fit `size` principal axes of the mean-centered data.
///
/// Explained variances use the unbiased `1/(n-1)` covariance. Each axis is
/// oriented so its entry of largest magnitude is positive.
pub fn pca_fit(vectors: &[TagVector], size: usize) -> Result<PcaModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "pca needs at least 2 vectors, got {n}"
        )));
    }
    let m = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: v.len(),
        });
    }
    if size > m {
        return Err(Error::SizeTooLarge {
            requested: size,
            max: m,
        });
    }
    if size > n - 1 {
        return Err(Error::InsufficientData(format!(
            "{size} components need at least {} vectors, got {n}",
            size + 1
        )));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("pca size must be positive".into()));
    }

    let mut mean = vec![0.0; m];
    for v in vectors {
        for (a, x) in mean.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);

    let centered = DMatrix::from_fn(n, m, |i, j| vectors[i][j] - mean[j]);
    let mut components = Vec::with_capacity(size * m);
    let mut explained_variance = Vec::with_capacity(size);
    for (scatter, mut row) in principal_axes(&centered, size) {
        let pivot = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > row[best].abs() { j } else { best });
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend(row);
        explained_variance.push(scatter / (n - 1) as f64);
    }
    PcaModel::from_parts(mean, components, explained_variance)
}

/// The `size` leading principal axes of centered data (`n × m`) with their
/// scatter eigenvalues, in descending order.
///
/// Eigen-decomposes whichever of `XᵀX` (m × m) and `XXᵀ` (n × n) is smaller;
/// in the latter case an axis is `Xᵀu / √λ`. (An SVD of `X` itself is
/// avoided: nalgebra's SVD can return wrong factors when a singular value is
/// exactly zero, which centered data always has once n ≤ m.) Axes are then
/// re-orthonormalized, and axes without variance are completed to an
/// orthonormal set.
fn principal_axes(centered: &DMatrix<f64>, size: usize) -> Vec<(f64, Vec<f64>)> {
    let (n, m) = centered.shape();
    let wide = n < m;
    let scatter = if wide {
        centered * centered.transpose()
    } else {
        centered.transpose() * centered
    };
    let eigen = scatter.symmetric_eigen();
    let values = &eigen.eigenvalues;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let floor = values[order[0]].max(0.0) * 1e-12;

    let mut axes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(size);
    for &i in order.iter().take(size) {
        let lambda = values[i].max(0.0);
        let u = eigen.eigenvectors.column(i);
        let candidate: Vec<f64> = if !wide {
            u.iter().copied().collect()
        } else if lambda > floor {
            (centered.transpose() * u).iter().map(|v| v / lambda.sqrt()).collect()
        } else {
            vec![0.0; m]
        };
        let axis = orthonormal_against(candidate, &axes)
            .or_else(|| (0..m).find_map(|j| orthonormal_against(unit_vector(m, j), &axes)))
            .expect("size <= m leaves room for another axis");
        axes.push((if lambda > floor { lambda } else { 0.0 }, axis));
    }
    axes
}

fn unit_vector(m: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; m];
    e[j] = 1.0;
    e
}

/// Two rounds of Gram–Schmidt against `basis`, then normalization. `None`
/// when too little of `v` remains.
fn orthonormal_against(mut v: Vec<f64>, basis: &[(f64, Vec<f64>)]) -> Option<Vec<f64>> {
    for _ in 0..2 {
        for (_, b) in basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.5).then(|| v.iter().map(|x| x / norm).collect())
}

/// `components · (vector − mean)`.
pub fn pca_project(vector: &[f64], model: &PcaModel) -> Result<TagVector> {
    let m = model.input_dim();
    if vector.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: vector.len(),
        });
    }
    let centered: Vec<f64> = vector.iter().zip(&model.mean).map(|(x, mu)| x - mu).collect();
    TagVector::new(
        (0..model.output_dim())
            .map(|i| model.component(i).iter().zip(&centered).map(|(c, x)| c * x).sum())
            .collect(),
    )
}

/// Map projected coordinates back to tag space: `mean + componentsᵀ · y`.
pub fn pca_reconstruct(projected: &[f64], model: &PcaModel) -> Result<Vec<f64>> {
    if projected.len() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            found: projected.len(),
        });
    }
    let mut out = model.mean.clone();
    for (i, &y) in projected.iter().enumerate() {
        for (o, c) in out.iter_mut().zip(model.component(i)) {
            *o += y * c;
        }
    }
    Ok(out)
}
