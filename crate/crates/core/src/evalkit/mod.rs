//! Evaluation harness: ranking metrics, top-κ descriptions with ROUGE-1
//! recall, a synthetic benchmark generator, and an in-process detection
//! pipeline tying them together.

pub mod describe;
pub mod metrics;
pub mod synth;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use describe::{describe_video, rouge1_recall, rouge_curve, Description};
pub use metrics::{average_precision, mean_average_precision, EvalReport, GroundTruth};
pub use synth::{synth_corpus, SynthDataset, SynthSpec};

use crate::corpus::{SourceCorpus, Stoplist, VideoId};
use crate::error::{Error, Result};
use crate::events::{
    rank_videos, train_few_example, zero_example_model, EventDefinition, EventModel, Judgment, Label, LabeledSample,
    LabeledSet, RankedList, SvmParams,
};
use crate::tagprop::{propagate_batch, refine_source, PropagationConfig, TagVector, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    Zero,
    Few,
}

/// Labeled training set for one event from judgments over tag vectors.
/// Unjudged (label 0) entries and videos without a tag vector are skipped.
pub fn labeled_set(event_id: &str, judgments: &[Judgment], vectors: &HashMap<&str, &TagVector>) -> LabeledSet {
    let samples = judgments
        .iter()
        .filter(|j| j.event_id == event_id && j.label != 0)
        .filter_map(|j| {
            let vector = vectors.get(j.video_id.as_str())?;
            Some(LabeledSample {
                video: VideoId::new(j.video_id.clone()).ok()?,
                vector: (*vector).clone(),
                label: if j.label > 0 { Label::Positive } else { Label::Negative },
            })
        })
        .collect();
    LabeledSet::new(samples)
}

/// Training judgments with the tag vectors of the judged videos.
pub type TrainingData<'a> = (&'a [Judgment], &'a [(VideoId, TagVector)]);

/// Build one event model per definition.
pub fn build_models(
    events: &[EventDefinition],
    mode: DetectionMode,
    corpus: &SourceCorpus,
    stoplist: &Stoplist,
    train: Option<TrainingData<'_>>,
    svm: &SvmParams,
) -> Result<Vec<EventModel>> {
    match mode {
        DetectionMode::Zero => events
            .iter()
            .map(|ev| zero_example_model(&ev.event_id, &ev.description, corpus.vocabulary(), stoplist))
            .collect(),
        DetectionMode::Few => {
            let (judgments, vectors) =
                train.ok_or_else(|| Error::InvalidArgument("few-example mode needs training judgments".into()))?;
            let lookup: HashMap<&str, &TagVector> = vectors.iter().map(|(id, v)| (id.as_str(), v)).collect();
            events
                .iter()
                .map(|ev| train_few_example(&ev.event_id, &labeled_set(&ev.event_id, judgments, &lookup), svm))
                .collect()
        }
    }
}

/// Rank the test vectors for every model, keyed by event id.
pub fn rank_all(models: &[EventModel], test: &[(VideoId, TagVector)]) -> Result<BTreeMap<String, RankedList>> {
    models
        .iter()
        .map(|m| Ok((m.event_id.clone(), rank_videos(test, m)?)))
        .collect()
}

/// AP per event for every ranking that has ground truth.
pub fn evaluate(rankings: &BTreeMap<String, RankedList>, truth: &[GroundTruth]) -> Result<EvalReport> {
    let mut per_event = BTreeMap::new();
    for t in truth {
        if let Some(ranked) = rankings.get(&t.event_id) {
            per_event.insert(t.event_id.clone(), average_precision(ranked, t)?);
        }
    }
    EvalReport::new(per_event)
}

/// Full synthetic benchmark run for one variant and mode: propagate, model,
/// rank and score. `corpus` must already carry refinement for the refine
/// variant.
pub fn run_detection(
    dataset: &SynthDataset,
    corpus: &SourceCorpus,
    config: &PropagationConfig,
    mode: DetectionMode,
    svm: &SvmParams,
) -> Result<EvalReport> {
    let test = propagate_batch(corpus, &dataset.test, config)?;
    let train = match mode {
        DetectionMode::Zero => None,
        DetectionMode::Few => Some(propagate_batch(corpus, &dataset.train, config)?),
    };
    let models = build_models(
        &dataset.events,
        mode,
        corpus,
        &Stoplist::new(),
        train.as_deref().map(|t| (dataset.train_judgments.as_slice(), t)),
        svm,
    )?;
    evaluate(&rank_all(&models, &test)?, &dataset.truth)
}

/// MAP of every (variant, mode) pair on one dataset. Refinement is computed
/// once and shared by the refine runs.
pub fn benchmark(
    dataset: &SynthDataset,
    config: &PropagationConfig,
    svm: &SvmParams,
) -> Result<BTreeMap<(Variant, DetectionMode), f64>> {
    let refined = dataset
        .corpus
        .clone()
        .with_refinement(refine_source(&dataset.corpus, config))?;
    let mut out = BTreeMap::new();
    for variant in Variant::ALL {
        let cfg = PropagationConfig { variant, ..*config };
        for mode in [DetectionMode::Zero, DetectionMode::Few] {
            let report = run_detection(dataset, &refined, &cfg, mode, svm)?;
            out.insert((variant, mode), report.map);
        }
    }
    Ok(out)
}
