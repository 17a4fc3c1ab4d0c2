//! Event models and video ranking.
//!
//! An event is represented in the same tag space as videos. Zero-example
//! events come from a textual description (binary bag of tags); few-example
//! events come from a linear SVM trained on labeled tag vectors, whose
//! primal weight vector is the event's tag vector. Videos are ranked by the
//! cosine between their tag vector and the event's.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_caption, Stoplist, TagVocabulary, VideoId};
use crate::error::{Error, Result};
use crate::persist;
use crate::simsearch::cosine_similarity;
use crate::tagprop::TagVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventMode {
    Zero,
    Few,
}

/// Hyperparameters of the few-example SVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    /// L2 regularization strength λ.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Scale every training vector to unit length before training.
    pub normalize_inputs: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 100,
            seed: 0,
            normalize_inputs: false,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument("svm lambda must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("svm epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub normalize_inputs: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventModel {
    pub event_id: String,
    pub vector: TagVector,
    pub mode: EventMode,
    pub training_meta: Option<TrainingMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be 1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub video: VideoId,
    pub vector: TagVector,
    pub label: Label,
}

/// Labeled training videos for one event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub samples: Vec<LabeledSample>,
}

impl LabeledSet {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        LabeledSet { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == Label::Positive).count()
    }
}

/// Binary event vector: 1 for every vocabulary tag that occurs in the
/// tokenized description.
pub fn zero_example_model(
    event_id: &str,
    description: &str,
    vocabulary: &TagVocabulary,
    stoplist: &Stoplist,
) -> Result<EventModel> {
    let mut vector = vec![0.0; vocabulary.len()];
    let mut hits = 0;
    for token in tokenize_caption(description, stoplist) {
        if let Some(i) = vocabulary.index_of(&token) {
            vector[i] = 1.0;
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::EmptyModel(event_id.to_string()));
    }
    Ok(EventModel {
        event_id: event_id.to_string(),
        vector: TagVector::new(vector)?,
        mode: EventMode::Zero,
        training_meta: None,
    })
}

/// Result of [`train_linear_svm`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Regularized hinge objective of the iterate at the end of each epoch.
    pub epoch_objectives: Vec<f64>,
}

/// `λ/2 ‖w‖² + 1/p Σ max(0, 1 − y_i ⟨w, x_i⟩)`.
pub fn hinge_objective(weights: &[f64], samples: &[(&[f64], f64)], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 = samples.iter().map(|(x, y)| (1.0 - y * dot(weights, x)).max(0.0)).sum();
    reg + loss / samples.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear SVM without bias by stochastic subgradient descent (Pegasos).
///
/// Step `t` draws one sample uniformly, uses step size `1/(λt)` and projects
/// onto the ball of radius `1/√λ`. An epoch is `p` steps.
pub fn train_linear_svm(samples: &[(&[f64], f64)], params: &SvmParams) -> SvmFit {
    let p = samples.len();
    let m = samples.first().map_or(0, |(x, _)| x.len());
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w = vec![0.0; m];
    let mut epoch_objectives = Vec::with_capacity(params.epochs);
    let mut t = 0usize;

    for _ in 0..params.epochs {
        for _ in 0..p {
            t += 1;
            let (x, y) = samples[rng.random_range(0..p)];
            let eta = 1.0 / (lambda * t as f64);
            let violated = y * dot(&w, x) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                for (wi, xi) in w.iter_mut().zip(x.iter()) {
                    *wi += eta * y * xi;
                }
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
        epoch_objectives.push(hinge_objective(&w, samples, lambda));
    }

    SvmFit {
        weights: w,
        iterations: t,
        epoch_objectives,
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Training inputs as `(vector, ±1)` pairs, after the optional
/// normalization in `params`.
pub fn svm_inputs(data: &LabeledSet, params: &SvmParams) -> Result<Vec<(Vec<f64>, f64)>> {
    let m = data
        .samples
        .first()
        .map(|s| s.vector.len())
        .ok_or(Error::DegenerateData)?;
    let positives = data.positives();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateData);
    }
    data.samples
        .iter()
        .map(|s| {
            if s.vector.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: s.vector.len(),
                });
            }
            let x = if params.normalize_inputs {
                unit(&s.vector)
            } else {
                s.vector.to_vec()
            };
            Ok((x, s.label.sign()))
        })
        .collect()
}

/// Few-example event model: the SVM weight vector over the labeled tag
/// vectors, i.e. a signed weighted combination of the training samples.
pub fn train_few_example(event_id: &str, data: &LabeledSet, params: &SvmParams) -> Result<EventModel> {
    params.validate()?;
    let inputs = svm_inputs(data, params)?;
    let samples: Vec<(&[f64], f64)> = inputs.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
    let fit = train_linear_svm(&samples, params);
    Ok(EventModel {
        event_id: event_id.to_string(),
        vector: TagVector::new(fit.weights)?,
        mode: EventMode::Few,
        training_meta: Some(TrainingMeta {
            lambda: params.lambda,
            epochs: params.epochs,
            seed: params.seed,
            normalize_inputs: params.normalize_inputs,
            iterations: fit.iterations,
        }),
    })
}

/// Relevance of a video to an event: cosine of their tag vectors.
pub fn score(video_vector: &[f64], model: &EventModel) -> Result<f64> {
    cosine_similarity(video_vector, &model.vector)
}

/// Videos sorted by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub entries: Vec<(VideoId, f64)>,
}

impl RankedList {
    /// Sort arbitrary `(id, score)` pairs into ranking order.
    pub fn from_scores(mut entries: Vec<(VideoId, f64)>) -> Self {
        // Adding 0.0 maps -0.0 to 0.0 so that signed zeros tie.
        entries.sort_by(|a, b| match (b.1 + 0.0).total_cmp(&(a.1 + 0.0)) {
            Ordering::Equal => a.0.cmp(&b.0),
            other => other,
        });
        RankedList { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &VideoId> {
        self.entries.iter().map(|(id, _)| id)
    }
}

pub fn rank_videos(test: &[(VideoId, TagVector)], model: &EventModel) -> Result<RankedList> {
    let scored = test
        .iter()
        .map(|(id, v)| Ok((id.clone(), score(v, model)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedList::from_scores(scored))
}

/// One line of an event definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDefinition {
    pub event_id: String,
    pub name: String,
    pub description: String,
}

/// One line of a judgment file; label 0 marks an unjudged video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub event_id: String,
    pub video_id: String,
    pub label: i8,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e.to_string())))
        .collect()
}

pub fn read_event_definitions(path: &Path) -> Result<Vec<EventDefinition>> {
    read_jsonl(path)
}

pub fn read_judgments(path: &Path) -> Result<Vec<Judgment>> {
    let judgments: Vec<Judgment> = read_jsonl(path)?;
    for (i, j) in judgments.iter().enumerate() {
        if !matches!(j.label, -1..=1) {
            return Err(Error::format(
                path,
                i + 1,
                format!("label must be 1, -1 or 0, got {}", j.label),
            ));
        }
    }
    Ok(judgments)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    event_id: String,
    mode: EventMode,
    vector: TagVector,
    training_meta: Option<TrainingMeta>,
    vocab_hash: String,
}

pub fn save_model(model: &EventModel, vocabulary: &TagVocabulary, path: &Path) -> Result<()> {
    let file = ModelFile {
        event_id: model.event_id.clone(),
        mode: model.mode,
        vector: model.vector.clone(),
        training_meta: model.training_meta.clone(),
        vocab_hash: vocabulary.content_hash(),
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    persist::write_atomic(path, text.as_bytes())
}

/// Load a persisted model, checking it was built over `vocabulary`.
pub fn load_model(path: &Path, vocabulary: &TagVocabulary) -> Result<EventModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.vocab_hash != vocabulary.content_hash() {
        return Err(Error::corrupt(path, "model was built over a different vocabulary"));
    }
    Ok(EventModel {
        event_id: file.event_id,
        vector: file.vector,
        mode: file.mode,
        training_meta: file.training_meta,
    })
}
