//! Top-κ tag descriptions of videos and their ROUGE-1 recall against
//! reference text.

use std::collections::HashSet;

use crate::corpus::{tokenize_caption, Stoplist, TagVocabulary, VideoId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub video: VideoId,
    pub tags: Vec<String>,
}

/// Tag indices sorted by descending score, ties by ascending tag string.
pub fn rank_tags(vector: &[f64], vocabulary: &TagVocabulary) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vector.len().min(vocabulary.len())).collect();
    // Numeric equality, so that 0.0 and -0.0 tie.
    order.sort_by(|&a, &b| {
        if vector[a] == vector[b] {
            vocabulary.tag(a).cmp(vocabulary.tag(b))
        } else {
            vector[b].total_cmp(&vector[a])
        }
    });
    order
}

/// The `kappa` highest-scoring tags of a tag vector.
pub fn describe_video(
    video: &VideoId,
    vector: &[f64],
    vocabulary: &TagVocabulary,
    kappa: usize,
) -> Result<Description> {
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be positive".into()));
    }
    if vector.len() != vocabulary.len() {
        return Err(Error::DimensionMismatch {
            expected: vocabulary.len(),
            found: vector.len(),
        });
    }
    let tags = rank_tags(vector, vocabulary)
        .into_iter()
        .take(kappa)
        .map(|i| vocabulary.tag(i).to_string())
        .collect();
    Ok(Description {
        video: video.clone(),
        tags,
    })
}

/// Fraction of distinct reference tokens present among the generated tags.
pub fn rouge1_recall(generated: &Description, reference_text: &str, stoplist: &Stoplist) -> Result<f64> {
    let reference = tokenize_caption(reference_text, stoplist);
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let generated: HashSet<&str> = generated.tags.iter().map(String::as_str).collect();
    let hit = reference.iter().filter(|t| generated.contains(t.as_str())).count();
    Ok(hit as f64 / reference.len() as f64)
}

/// Mean ROUGE-1 recall for κ = 1..=max_kappa over `(video, vector,
/// reference)` triples.
pub fn rouge_curve(
    items: &[(VideoId, &[f64], &str)],
    vocabulary: &TagVocabulary,
    stoplist: &Stoplist,
    max_kappa: usize,
) -> Result<Vec<(usize, f64)>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("description items"));
    }
    if max_kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be positive".into()));
    }
    let mut sums = vec![0.0; max_kappa];
    for (video, vector, reference) in items {
        let full = describe_video(video, vector, vocabulary, max_kappa)?;
        for (kappa, sum) in (1..=max_kappa).zip(sums.iter_mut()) {
            let prefix = Description {
                video: video.clone(),
                tags: full.tags.iter().take(kappa).cloned().collect(),
            };
            *sum += rouge1_recall(&prefix, reference, stoplist)?;
        }
    }
    let n = items.len() as f64;
    Ok(sums.into_iter().enumerate().map(|(i, s)| (i + 1, s / n)).collect())
}

/// `kappa<TAB>mean_recall` lines with a header row.
pub fn rouge_curve_tsv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("kappa\tmean_rouge1_recall\n");
    for (kappa, recall) in curve {
        out.push_str(&format!("{kappa}\t{recall}\n"));
    }
    out
}
