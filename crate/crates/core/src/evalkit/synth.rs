//! Synthetic planted-event benchmark.
//!
//! Every event gets a random cluster center in feature space and a signature
//! tag set. Source, test and training videos of an event are drawn around
//! its center with Gaussian feature noise; background videos point in random
//! directions. Source annotations keep each signature tag with probability
//! `1 - tag_noise` and add uniformly drawn distractor tags. An event's
//! textual description is its signature tags.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, FeatureVector, SourceCorpus, VideoId};
use crate::error::{Error, Result};
use crate::evalkit::metrics::GroundTruth;
use crate::events::{EventDefinition, Judgment};
use crate::persist::write_atomic;

/// Maps `feature_noise` onto the per-dimension noise standard deviation, in
/// units of the per-dimension center spread. At the moderate setting (0.5)
/// neighborhoods mix event and background videos, which is where the
/// propagation variants separate; at lower gains every variant saturates.
pub const NOISE_GAIN: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_events: usize,
    /// Source videos per event.
    pub videos_per_event: usize,
    /// Source videos belonging to no event.
    pub n_background: usize,
    pub d: usize,
    /// Size of the tag pool.
    pub m: usize,
    pub tag_noise: f64,
    pub feature_noise: f64,
    pub seed: u64,
    pub signature_size: usize,
    pub distractors_per_video: usize,
    pub test_per_event: usize,
    pub n_test_background: usize,
    pub train_per_event: usize,
    pub n_train_background: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_events: 10,
            videos_per_event: 30,
            n_background: 2000,
            d: 64,
            m: 400,
            tag_noise: 0.3,
            feature_noise: 0.5,
            seed: 0,
            signature_size: 5,
            distractors_per_video: 12,
            test_per_event: 20,
            n_test_background: 300,
            train_per_event: 10,
            n_train_background: 100,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_events", self.n_events),
            ("videos_per_event", self.videos_per_event),
            ("d", self.d),
            ("m", self.m),
            ("signature_size", self.signature_size),
            ("test_per_event", self.test_per_event),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.tag_noise) {
            return Err(Error::InvalidArgument("tag_noise must lie in [0, 1]".into()));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::InvalidArgument("feature_noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// A generated benchmark instance.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub corpus: SourceCorpus,
    /// Source annotations as generated (before vocabulary construction).
    pub annotations: Vec<Annotation>,
    pub test: Vec<(VideoId, FeatureVector)>,
    pub train: Vec<(VideoId, FeatureVector)>,
    pub events: Vec<EventDefinition>,
    /// Relevance of the test videos, one entry per event.
    pub truth: Vec<GroundTruth>,
    /// Training labels: an event's own training videos are positives, the
    /// background training videos negatives.
    pub train_judgments: Vec<Judgment>,
}

/// Deterministic pronounceable tag for pool index `i`.
fn pseudo_word(mut i: usize) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..3 {
        let s = i % base;
        i /= base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    while i > 0 {
        out.push(char::from_digit((i % 10) as u32, 10).unwrap());
        i /= 10;
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

struct Generator {
    rng: ChaCha8Rng,
    spec: SynthSpec,
    centers: Vec<Vec<f64>>,
}

impl Generator {
    fn event_feature(&mut self, event: usize) -> FeatureVector {
        let d = self.spec.d;
        let sigma = self.spec.feature_noise * NOISE_GAIN / (d as f64).sqrt();
        let noise = gaussian(&mut self.rng, d, sigma);
        let values = self.centers[event].iter().zip(noise).map(|(c, z)| c + z).collect();
        FeatureVector::new(values).expect("finite gaussian sample")
    }

    fn background_feature(&mut self) -> FeatureVector {
        let d = self.spec.d;
        FeatureVector::new(gaussian(&mut self.rng, d, 1.0 / (d as f64).sqrt())).expect("finite gaussian sample")
    }

    fn distractors(&mut self, words: &[String], into: &mut Vec<String>) {
        for _ in 0..self.spec.distractors_per_video {
            let w = &words[self.rng.random_range(0..words.len())];
            if !into.contains(w) {
                into.push(w.clone());
            }
        }
    }
}

fn vid(s: String) -> VideoId {
    VideoId::new(s).expect("generated ids are non-empty")
}

/// Generate a benchmark instance. Deterministic given the spec (including
/// its seed).
pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words: Vec<String> = (0..spec.m).map(pseudo_word).collect();
    let mut pool: Vec<usize> = (0..spec.m).collect();
    pool.shuffle(&mut rng);
    let signatures: Vec<Vec<String>> = (0..spec.n_events)
        .map(|e| {
            (0..spec.signature_size)
                .map(|i| words[pool[(e * spec.signature_size + i) % spec.m]].clone())
                .collect()
        })
        .collect();
    let centers = (0..spec.n_events)
        .map(|_| gaussian(&mut rng, spec.d, 1.0 / (spec.d as f64).sqrt()))
        .collect();
    let mut gen = Generator {
        rng,
        spec: spec.clone(),
        centers,
    };

    let mut features = Vec::new();
    let mut annotations = Vec::new();
    for (e, signature) in signatures.iter().enumerate() {
        for i in 0..spec.videos_per_event {
            let id = vid(format!("src-e{:02}-{i:04}", e + 1));
            features.push((id.clone(), gen.event_feature(e)));
            let mut tags: Vec<String> = signature
                .iter()
                .filter(|_| gen.rng.random::<f64>() >= spec.tag_noise)
                .cloned()
                .collect();
            gen.distractors(&words, &mut tags);
            annotations.push(Annotation { video: id, tags });
        }
    }
    for i in 0..spec.n_background {
        let id = vid(format!("src-bg-{i:05}"));
        features.push((id.clone(), gen.background_feature()));
        let mut tags = Vec::new();
        gen.distractors(&words, &mut tags);
        annotations.push(Annotation { video: id, tags });
    }

    let mut test = Vec::new();
    let mut truth = Vec::new();
    for e in 0..spec.n_events {
        let mut positives = BTreeSet::new();
        for i in 0..spec.test_per_event {
            let id = vid(format!("test-e{:02}-{i:04}", e + 1));
            positives.insert(id.clone());
            test.push((id, gen.event_feature(e)));
        }
        truth.push(positives);
    }
    for i in 0..spec.n_test_background {
        test.push((vid(format!("test-bg-{i:05}")), gen.background_feature()));
    }
    let judged: BTreeSet<VideoId> = test.iter().map(|(id, _)| id.clone()).collect();

    let mut train = Vec::new();
    for e in 0..spec.n_events {
        for i in 0..spec.train_per_event {
            train.push((vid(format!("train-e{:02}-{i:04}", e + 1)), gen.event_feature(e)));
        }
    }
    for i in 0..spec.n_train_background {
        train.push((vid(format!("train-bg-{i:05}")), gen.background_feature()));
    }

    let events: Vec<EventDefinition> = signatures
        .iter()
        .enumerate()
        .map(|(e, sig)| EventDefinition {
            event_id: format!("E{:02}", e + 1),
            name: format!("synthetic event {}", e + 1),
            description: sig.join(" "),
        })
        .collect();
    let truth = events
        .iter()
        .zip(truth)
        .map(|(ev, positives)| GroundTruth {
            event_id: ev.event_id.clone(),
            positives,
            judged: judged.clone(),
        })
        .collect();

    let mut train_judgments = Vec::new();
    for (e, ev) in events.iter().enumerate() {
        let own = format!("train-e{:02}-", e + 1);
        for (id, _) in &train {
            let label = if id.as_str().starts_with(&own) {
                1
            } else if id.as_str().starts_with("train-bg-") {
                -1
            } else {
                continue;
            };
            train_judgments.push(Judgment {
                event_id: ev.event_id.clone(),
                video_id: id.to_string(),
                label,
            });
        }
    }

    let corpus = SourceCorpus::from_parts(features, annotations.clone(), 1)?;
    Ok(SynthDataset {
        corpus,
        annotations,
        test,
        train,
        events,
        truth,
        train_judgments,
    })
}

pub const SYNTH_FILES: [&str; 8] = [
    "features.jsonl",
    "annotations.jsonl",
    "test_features.jsonl",
    "train_features.jsonl",
    "events.jsonl",
    "judgments.jsonl",
    "train_judgments.jsonl",
    "references.jsonl",
];

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

fn feature_rows(rows: &[(VideoId, FeatureVector)]) -> Result<String> {
    jsonl(
        rows.iter()
            .map(|(id, f)| serde_json::json!({ "id": id, "feature": &f[..] })),
    )
}

impl SynthDataset {
    /// Write the dataset in the pipeline's input formats: source features and
    /// annotations, test and training features, event definitions, test
    /// judgments, training judgments, and reference texts for every positive
    /// test video.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let source: Vec<(VideoId, FeatureVector)> = (0..self.corpus.len())
            .map(|i| {
                let f = FeatureVector::new(self.corpus.feature(i).to_vec()).expect("corpus features are finite");
                (self.corpus.id(i).clone(), f)
            })
            .collect();
        let test_judgments = self.truth.iter().flat_map(|t| {
            self.test.iter().map(move |(id, _)| Judgment {
                event_id: t.event_id.clone(),
                video_id: id.to_string(),
                label: if t.positives.contains(id) { 1 } else { -1 },
            })
        });
        let references = self.truth.iter().zip(&self.events).flat_map(|(t, ev)| {
            t.positives
                .iter()
                .map(move |id| serde_json::json!({ "id": id, "text": ev.description }))
        });
        let contents = [
            feature_rows(&source)?,
            jsonl(
                self.annotations
                    .iter()
                    .map(|a| serde_json::json!({ "id": a.video, "tags": a.tags })),
            )?,
            feature_rows(&self.test)?,
            feature_rows(&self.train)?,
            jsonl(&self.events)?,
            jsonl(test_judgments)?,
            jsonl(&self.train_judgments)?,
            jsonl(references)?,
        ];
        for (name, text) in SYNTH_FILES.iter().zip(contents) {
            write_atomic(&dir.join(name), text.as_bytes())?;
        }
        Ok(())
    }
}
