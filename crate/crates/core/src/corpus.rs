//! Source corpus ingestion: caption tokenization, vocabulary construction and
//! the immutable [`SourceCorpus`] that every downstream stage reads from.
//!
//! A corpus is built once from a feature file and an annotation file (both
//! JSON Lines, see [`read_features`] and [`read_annotations`]) and never
//! mutated afterwards. The only exception is [`SourceCorpus::with_refinement`],
//! which consumes the corpus and returns a new one carrying the refined
//! relevance matrix.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::persist;
use crate::simsearch;
use crate::tagprop::RelevanceMatrix;

/// Lowercase tokens removed during tokenization.
pub type Stoplist = HashSet<String>;

/// Identifier of a video, unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VideoId(String);

impl VideoId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidArgument("video id must not be empty".into()));
        }
        Ok(VideoId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for VideoId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        VideoId::new(value)
    }
}

impl From<VideoId> for String {
    fn from(value: VideoId) -> Self {
        value.0
    }
}

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for VideoId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Dense visual feature of a video (or of a single frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(value: FeatureVector) -> Self {
        value.0
    }
}

/// Ordered set of distinct tags spanning the tag space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagVocabulary {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagVocabulary {
    pub fn new(tags: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            if tag.is_empty() {
                return Err(Error::InvalidVocabulary("empty tag".into()));
            }
            if tag.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!("tag {tag:?} contains whitespace")));
            }
            if tag.to_lowercase() != *tag {
                return Err(Error::InvalidVocabulary(format!("tag {tag:?} is not lowercase")));
            }
            if index.insert(tag.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate tag {tag:?}")));
            }
        }
        Ok(TagVocabulary { tags, index })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, i: usize) -> &str {
        &self.tags[i]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    /// SHA-256 over the newline-joined tag list, hex encoded. Used to tie
    /// persisted artifacts to the vocabulary they were computed against.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tag in &self.tags {
            hasher.update(tag.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Tags attached to one source video after tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub video: VideoId,
    pub tags: Vec<String>,
}

/// Split a caption into lowercase alphanumeric tokens.
///
/// Tokens keep the order of their first occurrence; duplicates, stoplisted
/// tokens and tokens shorter than two characters are dropped.
pub fn tokenize_caption(text: &str, stoplist: &Stoplist) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for token in lowered.split(|c: char| !c.is_alphanumeric()) {
        if token.chars().count() < 2 || stoplist.contains(token) {
            continue;
        }
        if seen.insert(token) {
            out.push(token.to_string());
        }
    }
    out
}

/// Document frequency per tag over a set of annotations.
fn document_frequencies<'a>(annotations: impl IntoIterator<Item = &'a [String]>) -> HashMap<&'a str, usize> {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for tags in annotations {
        let distinct: HashSet<&str> = tags.iter().map(String::as_str).collect();
        for tag in distinct {
            *df.entry(tag).or_default() += 1;
        }
    }
    df
}

/// Order `(tag, df)` pairs by descending frequency, then ascending tag.
pub(crate) fn sort_by_frequency<T: AsRef<str>>(entries: &mut [(T, usize)]) {
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.as_ref().cmp(b.0.as_ref())));
}

/// Build the vocabulary of all tags carried by at least `min_df` videos,
/// ordered by descending document frequency with lexicographic tie-break.
pub fn build_vocabulary(annotations: &[Annotation], min_df: usize) -> Result<TagVocabulary> {
    if annotations.is_empty() {
        return Err(Error::EmptyInput("annotations"));
    }
    if min_df == 0 {
        return Err(Error::InvalidArgument("min_df must be positive".into()));
    }
    let df = document_frequencies(annotations.iter().map(|a| a.tags.as_slice()));
    let mut entries: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df).collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    sort_by_frequency(&mut entries);
    TagVocabulary::new(entries.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Read a stoplist file: one token per line, blank lines ignored.
pub fn read_stoplist(path: &Path) -> Result<Stoplist> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FeatureLine {
    Header { dim: usize },
    Video { id: String, feature: Vec<f64> },
    Frames { id: String, frames: Vec<Vec<f64>> },
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, line)| (i + 1, line.map_err(|e| Error::io(path, e))))
        .filter(|(_, line)| !matches!(line, Ok(l) if l.trim().is_empty())))
}

/// Read a JSON Lines feature file.
///
/// Each record is either `{"id", "feature"}` or frame-level `{"id", "frames"}`;
/// frame-level rows are average-pooled on load. An optional first-line header
/// `{"dim": d}` fixes the dimension, otherwise the first record does.
pub fn read_features(path: &Path) -> Result<Vec<(VideoId, FeatureVector)>> {
    let mut dim: Option<usize> = None;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut first = true;
    for (line_no, line) in open_lines(path)? {
        let line = line?;
        let parsed: FeatureLine =
            serde_json::from_str(&line).map_err(|e| Error::format(path, line_no, e.to_string()))?;
        let (id, feature) = match parsed {
            FeatureLine::Header { dim: d } => {
                if !first {
                    return Err(Error::format(path, line_no, "header must be the first line"));
                }
                if d == 0 {
                    return Err(Error::format(path, line_no, "dimension must be positive"));
                }
                first = false;
                dim = Some(d);
                continue;
            }
            FeatureLine::Video { id, feature } => {
                let fv = FeatureVector::new(feature).map_err(|e| Error::format(path, line_no, e.to_string()))?;
                (id, fv)
            }
            FeatureLine::Frames { id, frames } => {
                let frames = frames
                    .into_iter()
                    .map(FeatureVector::new)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::format(path, line_no, e.to_string()))?;
                let pooled = simsearch::average_pool_frames(&frames).map_err(|e| match e {
                    Error::DimensionMismatch { .. } => e,
                    other => Error::format(path, line_no, other.to_string()),
                })?;
                (id, pooled)
            }
        };
        first = false;
        let id = VideoId::new(id).map_err(|e| Error::format(path, line_no, e.to_string()))?;
        let expected = *dim.get_or_insert(feature.dim());
        if feature.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: feature.dim(),
            });
        }
        if expected == 0 {
            return Err(Error::format(path, line_no, "empty feature vector"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id.0));
        }
        out.push((id, feature));
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationLine {
    Caption { id: String, caption: String },
    Tags { id: String, tags: Vec<String> },
}

/// Read a JSON Lines annotation file of `{"id", "caption"}` or
/// `{"id", "tags"}` records. Captions go through [`tokenize_caption`];
/// pre-tokenized tags are only lowercased and stoplist-filtered.
pub fn read_annotations(path: &Path, stoplist: &Stoplist) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line?;
        let parsed: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| Error::format(path, line_no, e.to_string()))?;
        let (id, tags) = match parsed {
            AnnotationLine::Caption { id, caption } => (id, tokenize_caption(&caption, stoplist)),
            AnnotationLine::Tags { id, tags } => {
                let mut kept = Vec::with_capacity(tags.len());
                let mut dedup = HashSet::new();
                for tag in tags {
                    let tag = tag.trim().to_lowercase();
                    if tag.is_empty() || stoplist.contains(&tag) {
                        continue;
                    }
                    if tag.chars().any(char::is_whitespace) {
                        return Err(Error::format(path, line_no, format!("tag {tag:?} contains whitespace")));
                    }
                    if dedup.insert(tag.clone()) {
                        kept.push(tag);
                    }
                }
                (id, kept)
            }
        };
        let video = VideoId::new(id).map_err(|e| Error::format(path, line_no, e.to_string()))?;
        if !seen.insert(video.clone()) {
            return Err(Error::DuplicateId(video.0));
        }
        out.push(Annotation { video, tags });
    }
    Ok(out)
}

/// Load a corpus from a feature file and an annotation file.
pub fn load_corpus(
    feature_file: &Path,
    annotation_file: &Path,
    stoplist_file: Option<&Path>,
    min_df: usize,
) -> Result<SourceCorpus> {
    let stoplist = match stoplist_file {
        Some(p) => read_stoplist(p)?,
        None => Stoplist::new(),
    };
    let features = read_features(feature_file)?;
    let annotations = read_annotations(annotation_file, &stoplist)?;
    SourceCorpus::from_parts(features, annotations, min_df)
}

/// The socially tagged source set: features, binary tag labels and an
/// optional refined relevance matrix. Immutable once built.
#[derive(Debug, Clone)]
pub struct SourceCorpus {
    dim: usize,
    ids: Vec<VideoId>,
    id_index: HashMap<VideoId, usize>,
    /// Position of each video in ascending id order, used for tie-breaks.
    id_rank: Vec<u32>,
    features: Vec<f64>,
    norms: Vec<f64>,
    labels: Vec<Vec<u32>>,
    vocabulary: TagVocabulary,
    refined: Option<RelevanceMatrix>,
}

impl PartialEq for SourceCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.features == other.features
            && self.labels == other.labels
            && self.vocabulary == other.vocabulary
            && self.refined == other.refined
    }
}

impl SourceCorpus {
    /// Assemble a corpus. Feature order defines corpus order; videos without
    /// an annotation (or whose tags were all filtered) keep an empty label set.
    pub fn from_parts(
        features: Vec<(VideoId, FeatureVector)>,
        annotations: Vec<Annotation>,
        min_df: usize,
    ) -> Result<Self> {
        let vocabulary = build_vocabulary(&annotations, min_df)?;
        Self::with_vocabulary(features, annotations, vocabulary)
    }

    /// Assemble a corpus over a fixed vocabulary; annotation tags outside it
    /// are ignored.
    pub fn with_vocabulary(
        features: Vec<(VideoId, FeatureVector)>,
        annotations: Vec<Annotation>,
        vocabulary: TagVocabulary,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput("feature vectors"));
        }
        let dim = features[0].1.dim();
        if dim == 0 {
            return Err(Error::EmptyInput("feature dimension"));
        }
        let mut ids = Vec::with_capacity(features.len());
        let mut id_index = HashMap::with_capacity(features.len());
        let mut flat = Vec::with_capacity(features.len() * dim);
        for (id, fv) in features {
            if fv.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: fv.dim(),
                });
            }
            if id_index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateId(id.0));
            }
            ids.push(id);
            flat.extend_from_slice(&fv);
        }

        let mut labels = vec![Vec::new(); ids.len()];
        let mut annotated = vec![false; ids.len()];
        for ann in annotations {
            let Some(&i) = id_index.get(&ann.video) else {
                return Err(Error::MissingFeature(ann.video.0));
            };
            if std::mem::replace(&mut annotated[i], true) {
                return Err(Error::DuplicateId(ann.video.0));
            }
            let mut row: Vec<u32> = ann
                .tags
                .iter()
                .filter_map(|t| vocabulary.index_of(t))
                .map(|t| t as u32)
                .collect();
            row.sort_unstable();
            row.dedup();
            labels[i] = row;
        }

        let norms = flat.chunks_exact(dim).map(simsearch::norm).collect();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        let mut id_rank = vec![0u32; ids.len()];
        for (rank, &i) in order.iter().enumerate() {
            id_rank[i] = rank as u32;
        }

        Ok(SourceCorpus {
            dim,
            ids,
            id_index,
            id_rank,
            features: flat,
            norms,
            labels,
            vocabulary,
            refined: None,
        })
    }

    /// Attach a refined relevance matrix, freezing the corpus.
    pub fn with_refinement(mut self, refined: RelevanceMatrix) -> Result<Self> {
        let expected = (self.len(), self.vocabulary.len());
        if refined.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: refined.shape(),
            });
        }
        self.refined = Some(refined);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &TagVocabulary {
        &self.vocabulary
    }

    pub fn ids(&self) -> &[VideoId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &VideoId {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub(crate) fn id_rank(&self, i: usize) -> u32 {
        self.id_rank[i]
    }

    /// Sorted vocabulary indices of the tags carried by video `i`.
    pub fn labels(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    pub fn refined(&self) -> Option<&RelevanceMatrix> {
        self.refined.as_ref()
    }

    /// Number of videos carrying each vocabulary tag.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.vocabulary.len()];
        for row in &self.labels {
            for &t in row {
                df[t as usize] += 1;
            }
        }
        df
    }

    pub fn annotation(&self, i: usize) -> Annotation {
        Annotation {
            video: self.ids[i].clone(),
            tags: self.labels[i]
                .iter()
                .map(|&t| self.vocabulary.tag(t as usize).to_string())
                .collect(),
        }
    }

    /// Write the corpus as a directory: `features.jsonl`, `annotations.jsonl`
    /// and a `corpus.json` manifest. A refined matrix, when present, is
    /// written next to them as `relevance.tbrm` plus its sidecar.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut features = serde_json::to_string(&serde_json::json!({ "dim": self.dim }))?;
        features.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            let line = serde_json::json!({ "id": id, "feature": self.feature(i) });
            features.push_str(&serde_json::to_string(&line)?);
            features.push('\n');
        }
        persist::write_atomic(&dir.join(FEATURES_FILE), features.as_bytes())?;

        let mut annotations = String::new();
        for i in 0..self.len() {
            let ann = self.annotation(i);
            let line = serde_json::json!({ "id": ann.video, "tags": ann.tags });
            annotations.push_str(&serde_json::to_string(&line)?);
            annotations.push('\n');
        }
        persist::write_atomic(&dir.join(ANNOTATIONS_FILE), annotations.as_bytes())?;

        let manifest = CorpusManifest {
            format: MANIFEST_FORMAT.to_string(),
            version: 1,
            videos: self.len(),
            dim: self.dim,
            vocab_hash: self.vocabulary.content_hash(),
            tags: self.vocabulary.tags.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        persist::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;

        if let Some(r) = &self.refined {
            persist::save_relevance(r, self, &dir.join(RELEVANCE_FILE))?;
        }
        Ok(())
    }

    /// Load a corpus directory written by [`SourceCorpus::save`]. The refined
    /// matrix is attached when `relevance.tbrm` is present.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != 1 {
            return Err(Error::corrupt(&manifest_path, "unsupported corpus manifest"));
        }
        let vocabulary = TagVocabulary::new(manifest.tags)?;
        if vocabulary.content_hash() != manifest.vocab_hash {
            return Err(Error::corrupt(&manifest_path, "vocabulary hash mismatch"));
        }
        let features = read_features(&dir.join(FEATURES_FILE))?;
        let annotations = read_annotations(&dir.join(ANNOTATIONS_FILE), &Stoplist::new())?;
        let corpus = SourceCorpus::with_vocabulary(features, annotations, vocabulary)?;
        if corpus.len() != manifest.videos || corpus.dim != manifest.dim {
            return Err(Error::corrupt(&manifest_path, "manifest does not match corpus files"));
        }
        let relevance = dir.join(RELEVANCE_FILE);
        if relevance.exists() {
            let r = persist::load_relevance(&relevance, &corpus)?;
            return corpus.with_refinement(r);
        }
        Ok(corpus)
    }
}

pub const FEATURES_FILE: &str = "features.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MANIFEST_FILE: &str = "corpus.json";
pub const RELEVANCE_FILE: &str = "relevance.tbrm";
const MANIFEST_FORMAT: &str = "tagbook-corpus";

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    format: String,
    version: u32,
    videos: usize,
    dim: usize,
    vocab_hash: String,
    tags: Vec<String>,
}

/// 1 if `video` carries `tag`, else 0.
pub fn binary_label(corpus: &SourceCorpus, video: &str, tag: &str) -> Result<u8> {
    let v = corpus
        .index_of(video)
        .ok_or_else(|| Error::UnknownVideo(video.to_string()))?;
    let t = corpus
        .vocabulary
        .index_of(tag)
        .ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
    Ok(u8::from(corpus.labels[v].binary_search(&(t as u32)).is_ok()))
}

/// Path of the relevance sidecar for a matrix file.
pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}
