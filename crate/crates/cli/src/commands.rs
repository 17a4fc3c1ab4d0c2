//! Subcommand implementations. Each reads its inputs, calls into the
//! library, and writes its outputs atomically.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use tagbook::corpus::{load_corpus, read_features, read_stoplist, Stoplist, RELEVANCE_FILE};
use tagbook::evalkit::describe::{describe_video, rouge_curve_tsv};
use tagbook::evalkit::{
    build_models, evaluate, rank_all, rouge_curve, synth_corpus, DetectionMode, EvalReport, GroundTruth, SynthSpec,
};
use tagbook::events::{read_event_definitions, read_judgments, EventModel, Judgment};
use tagbook::persist::{save_relevance, write_atomic};
use tagbook::reduce::{pca_fit, pca_project, project_vocabulary, save_reduced, select_frequent};
use tagbook::tagprop::{propagate_batch, refine_source};
use tagbook::{SourceCorpus, TagVector, VideoId};

use crate::config::{PipelineConfig, ReductionMethod};
use crate::formats::{read_rankings, read_references, read_tagbooks, write_rankings, write_tagbooks, TagbookHeader};

pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TSV_FILE: &str = "report.tsv";
pub const REDUCED_VOCAB_FILE: &str = "reduced_vocabulary.json";
pub const PCA_FILE: &str = "pca.tbpc";
pub const DESCRIPTIONS_FILE: &str = "descriptions.jsonl";
pub const ROUGE_FILE: &str = "rouge.tsv";

/// Tag vectors keyed by video, in file order.
type TagBooks = Vec<(VideoId, TagVector)>;

fn stoplist(config: &PipelineConfig) -> Result<Stoplist> {
    Ok(match &config.stoplist {
        Some(path) => read_stoplist(path)?,
        None => Stoplist::new(),
    })
}

fn load_corpus_dir(dir: &Path) -> Result<SourceCorpus> {
    SourceCorpus::load(dir).with_context(|| format!("loading corpus {}", dir.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Tag books from `path`, checked against the corpus vocabulary.
fn tagbooks_for(corpus: &SourceCorpus, path: &Path) -> Result<Vec<(VideoId, TagVector)>> {
    let (header, rows) = read_tagbooks(path)?;
    if header.vocab_hash != corpus.vocabulary().content_hash() {
        bail!(
            "{}: tag books were computed over a different vocabulary",
            path.display()
        );
    }
    Ok(rows)
}

fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomic(&out.join(REPORT_FILE), json.as_bytes())?;
    write_atomic(&out.join(REPORT_TSV_FILE), report.to_tsv().as_bytes())?;
    info!("MAP {:.4} over {} events", report.map, report.per_event.len());
    Ok(())
}

pub fn build(config: &PipelineConfig, features: &Path, annotations: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(features, annotations, config.stoplist.as_deref(), config.min_df)?;
    create_dir(out)?;
    corpus.save(out)?;
    info!(
        "built corpus: {} videos, dimension {}, {} tags",
        corpus.len(),
        corpus.dim(),
        corpus.vocabulary().len()
    );
    Ok(())
}

pub fn refine(config: &PipelineConfig, dir: &Path) -> Result<()> {
    let corpus = load_corpus_dir(dir)?;
    let refined = refine_source(&corpus, &config.propagation);
    save_relevance(&refined, &corpus, &dir.join(RELEVANCE_FILE))?;
    info!("refined {} videos with k_r = {}", corpus.len(), config.propagation.k_r);
    Ok(())
}

pub fn tagbook(config: &PipelineConfig, dir: &Path, features: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus_dir(dir)?;
    let queries = read_features(features)?;
    let rows = propagate_batch(&corpus, &queries, &config.propagation)?;
    let header = TagbookHeader {
        format: crate::formats::TAGBOOK_FORMAT.into(),
        vocab_hash: corpus.vocabulary().content_hash(),
        dim: corpus.vocabulary().len(),
        variant: config.propagation.variant.to_string(),
        k: config.propagation.k,
    };
    write_tagbooks(out, &header, &rows)?;
    info!("wrote {} {} tag books", rows.len(), config.propagation.variant);
    Ok(())
}

pub struct DetectInputs<'a> {
    pub corpus: &'a Path,
    pub tagbooks: &'a Path,
    pub events: &'a Path,
    pub mode: DetectionMode,
    pub judgments: Option<&'a Path>,
    pub train_tagbooks: Option<&'a Path>,
    pub truth: Option<&'a Path>,
}

/// Maps full tag vectors into the reduced space.
type Projection = Box<dyn Fn(&TagVector) -> tagbook::Result<TagVector>>;

enum Reducer {
    Identity,
    Apply(Projection),
}

impl Reducer {
    fn apply_all(&self, rows: TagBooks) -> Result<TagBooks> {
        match self {
            Reducer::Identity => Ok(rows),
            Reducer::Apply(f) => rows.into_iter().map(|(id, v)| Ok((id, f(&v)?))).collect(),
        }
    }

    fn apply_model(&self, mut model: EventModel) -> Result<EventModel> {
        if let Reducer::Apply(f) = self {
            model.vector = f(&model.vector)?;
        }
        Ok(model)
    }
}

fn reducer(
    config: &PipelineConfig,
    corpus: &SourceCorpus,
    train: Option<&[(VideoId, TagVector)]>,
    out: &Path,
) -> Result<Reducer> {
    let size = config.reduction.size;
    match config.reduction.method {
        ReductionMethod::None => Ok(Reducer::Identity),
        ReductionMethod::Frequent => {
            let reduced = select_frequent(corpus, size)?;
            save_reduced(&reduced, corpus.vocabulary(), &out.join(REDUCED_VOCAB_FILE))?;
            Ok(Reducer::Apply(Box::new(move |v| project_vocabulary(v, &reduced))))
        }
        ReductionMethod::Pca => {
            let train =
                train.ok_or_else(|| anyhow!("pca reduction is fit on training tag books (few-example mode)"))?;
            let vectors: Vec<TagVector> = train.iter().map(|(_, v)| v.clone()).collect();
            let model = pca_fit(&vectors, size)?;
            model.save(&out.join(PCA_FILE))?;
            Ok(Reducer::Apply(Box::new(move |v| pca_project(v, &model))))
        }
    }
}

pub fn detect(config: &PipelineConfig, inputs: &DetectInputs, out: &Path) -> Result<()> {
    let corpus = load_corpus_dir(inputs.corpus)?;
    let test = tagbooks_for(&corpus, inputs.tagbooks)?;
    let events = read_event_definitions(inputs.events)?;
    let stoplist = stoplist(config)?;

    let train: Option<(Vec<Judgment>, TagBooks)> = match inputs.mode {
        DetectionMode::Zero => {
            if inputs.judgments.is_some() || inputs.train_tagbooks.is_some() {
                warn!("zero-example mode ignores training judgments and tag books");
            }
            None
        }
        DetectionMode::Few => {
            let judgments = inputs
                .judgments
                .ok_or_else(|| anyhow!("few-example mode needs --judgments"))?;
            let vectors = inputs
                .train_tagbooks
                .ok_or_else(|| anyhow!("few-example mode needs --train-tagbooks"))?;
            Some((read_judgments(judgments)?, tagbooks_for(&corpus, vectors)?))
        }
    };

    create_dir(out)?;
    let reducer = reducer(config, &corpus, train.as_ref().map(|(_, v)| v.as_slice()), out)?;
    let test = reducer.apply_all(test)?;
    let train = match train {
        Some((judgments, vectors)) => Some((judgments, reducer.apply_all(vectors)?)),
        None => None,
    };
    let models = build_models(
        &events,
        inputs.mode,
        &corpus,
        &stoplist,
        train.as_ref().map(|(j, v)| (j.as_slice(), v.as_slice())),
        &config.svm_params(),
    )?;
    // Zero-example models live in the full tag space; few-example models
    // were trained on already reduced vectors.
    let models = match inputs.mode {
        DetectionMode::Zero => models
            .into_iter()
            .map(|m| reducer.apply_model(m))
            .collect::<Result<Vec<_>>>()?,
        DetectionMode::Few => models,
    };
    let rankings = rank_all(&models, &test)?;
    write_rankings(&out.join(RANKINGS_FILE), &rankings)?;
    info!("ranked {} videos for {} events", test.len(), models.len());

    if let Some(truth) = inputs.truth {
        let truth = GroundTruth::from_judgments(&read_judgments(truth)?)?;
        write_report(&evaluate(&rankings, &truth)?, out)?;
    }
    Ok(())
}

pub fn eval(rankings: &Path, judgments: &Path, out: &Path) -> Result<()> {
    let rankings = read_rankings(rankings)?;
    let truth = GroundTruth::from_judgments(&read_judgments(judgments)?)?;
    let missing: Vec<&str> = truth
        .iter()
        .map(|t| t.event_id.as_str())
        .filter(|e| !rankings.contains_key(*e))
        .collect();
    if !missing.is_empty() {
        warn!("no ranking for judged events: {}", missing.join(", "));
    }
    create_dir(out)?;
    write_report(&evaluate(&rankings, &truth)?, out)
}

pub fn describe(
    config: &PipelineConfig,
    dir: &Path,
    tagbooks: &Path,
    references: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let corpus = load_corpus_dir(dir)?;
    let rows = tagbooks_for(&corpus, tagbooks)?;
    let vocabulary = corpus.vocabulary();
    create_dir(out)?;

    let mut text = String::new();
    for (id, vector) in &rows {
        let d = describe_video(id, vector, vocabulary, config.kappa)?;
        text.push_str(&serde_json::to_string(
            &serde_json::json!({ "id": d.video, "tags": d.tags }),
        )?);
        text.push('\n');
    }
    write_atomic(&out.join(DESCRIPTIONS_FILE), text.as_bytes())?;
    info!("described {} videos with {} tags each", rows.len(), config.kappa);

    if let Some(path) = references {
        let references = read_references(path)?;
        let items: Vec<(VideoId, &[f64], &str)> = rows
            .iter()
            .filter_map(|(id, v)| references.get(id).map(|r| (id.clone(), &v[..], r.as_str())))
            .collect();
        if items.len() < references.len() {
            warn!("{} referenced videos have no tag book", references.len() - items.len());
        }
        let curve = rouge_curve(&items, vocabulary, &stoplist(config)?, config.kappa)?;
        write_atomic(&out.join(ROUGE_FILE), rouge_curve_tsv(&curve).as_bytes())?;
        info!("ROUGE-1 curve over {} videos", items.len());
    }
    Ok(())
}

pub fn synth(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: SynthSpec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let dataset = synth_corpus(&spec)?;
    dataset.write_to_dir(out)?;
    info!(
        "generated {} events: {} source, {} test, {} training videos",
        dataset.events.len(),
        dataset.corpus.len(),
        dataset.test.len(),
        dataset.train.len()
    );
    Ok(())
}
