//! Reference implementations and random fixtures shared by the integration
//! and acceptance tests. Every oracle here is a direct transcription of the
//! definition it checks: plain loops, no neighbor lists, no blocking.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tagbook::corpus::{Annotation, FeatureVector, TagVocabulary};
use tagbook::evalkit::GroundTruth;
use tagbook::events::RankedList;
use tagbook::tagprop::{HardPriorMode, RelevanceMatrix};
use tagbook::{PropagationConfig, SourceCorpus, Variant, VideoId};

pub fn vid(s: &str) -> VideoId {
    VideoId::new(s).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random corpus with `n` videos, dimension `d` and vocabulary `t000..t{m-1}`.
/// Each video carries each tag with probability `density`; some tags may end
/// up unused. Ids are shuffled so corpus order differs from id order.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize, density: f64) -> SourceCorpus {
    random_corpus_with(rng, n, d, m, density, false)
}

/// As [`random_corpus`]; with `nonnegative` every feature entry is made
/// non-negative, so all similarities are too.
pub fn random_corpus_with(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    m: usize,
    density: f64,
    nonnegative: bool,
) -> SourceCorpus {
    let tags: Vec<String> = (0..m).map(|t| format!("t{t:03}")).collect();
    let vocabulary = TagVocabulary::new(tags.clone()).unwrap();
    let mut names: Vec<usize> = (0..n).collect();
    names.shuffle(rng);
    let mut features = Vec::with_capacity(n);
    let mut annotations = Vec::with_capacity(n);
    for &name in &names {
        let id = vid(&format!("v{name:04}"));
        let mut f = gaussian_vec(rng, d);
        if nonnegative {
            f.iter_mut().for_each(|x| *x = x.abs());
        }
        features.push((id.clone(), FeatureVector::new(f).unwrap()));
        let video_tags = tags.iter().filter(|_| rng.random::<f64>() < density).cloned().collect();
        annotations.push(Annotation {
            video: id,
            tags: video_tags,
        });
    }
    SourceCorpus::with_vocabulary(features, annotations, vocabulary).unwrap()
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Binary label matrix as dense rows.
pub fn label_rows(corpus: &SourceCorpus) -> Vec<Vec<f64>> {
    let m = corpus.vocabulary().len();
    (0..corpus.len())
        .map(|i| {
            let mut row = vec![0.0; m];
            for &t in corpus.labels(i) {
                row[t as usize] = 1.0;
            }
            row
        })
        .collect()
}

/// Corpus positions sorted by descending similarity, ties by ascending id.
pub fn naive_ranking(corpus: &SourceCorpus, sims: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap()
            .then_with(|| corpus.id(a).cmp(corpus.id(b)))
    });
    order
}

/// Propagated tag vector straight from the definition, together with the
/// magnitude of its two terms (the scale for relative comparisons).
pub fn naive_propagate(
    corpus: &SourceCorpus,
    query: &[f64],
    config: &PropagationConfig,
    refined: Option<&[Vec<f64>]>,
) -> (Vec<f64>, Vec<f64>) {
    let n = corpus.len();
    let m = corpus.vocabulary().len();
    let labels = label_rows(corpus);
    let r: &[Vec<f64>] = match config.variant {
        Variant::Refine => refined.expect("refine needs a relevance matrix"),
        _ => &labels,
    };
    let sims: Vec<f64> = (0..n).map(|j| naive_cosine(query, corpus.feature(j))).collect();
    let k = config.k.min(n);
    let order = naive_ranking(corpus, &sims);
    let mut rank_of = vec![0usize; n];
    for (rank, &j) in order.iter().enumerate() {
        rank_of[j] = rank + 1;
    }
    let top_weight = |j: usize| match config.variant {
        Variant::Hard => 1.0,
        _ => sims[j],
    };
    let prior_weight = |j: usize| match (config.variant, config.hard_prior_mode) {
        (Variant::Hard, HardPriorMode::Literal) => {
            if rank_of[j] <= k {
                1.0
            } else {
                0.0
            }
        }
        (Variant::Hard, HardPriorMode::FullSet) => 1.0,
        _ => sims[j],
    };
    let mut b = vec![0.0; m];
    let mut scale = vec![0.0; m];
    for t in 0..m {
        let mut top = 0.0;
        let mut top_abs = 0.0;
        for &j in &order[..k] {
            top += top_weight(j) * r[j][t];
            top_abs += (top_weight(j) * r[j][t]).abs();
        }
        let mut prior = 0.0;
        let mut prior_abs = 0.0;
        for j in 0..n {
            prior += prior_weight(j) * r[j][t];
            prior_abs += (prior_weight(j) * r[j][t]).abs();
        }
        b[t] = top / k as f64 - prior / n as f64;
        scale[t] = top_abs / k as f64 + prior_abs / n as f64;
    }
    (b, scale)
}

/// Refined relevance rows from the definition: the k_r nearest neighbors
/// exclude the video itself, the prior over all N includes it.
pub fn naive_refine(corpus: &SourceCorpus, k_r: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = corpus.len();
    let m = corpus.vocabulary().len();
    let labels = label_rows(corpus);
    let k = k_r.min(n - 1);
    let mut rows = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for s in 0..n {
        let sims: Vec<f64> = (0..n)
            .map(|j| naive_cosine(corpus.feature(s), corpus.feature(j)))
            .collect();
        let neighbors: Vec<usize> = naive_ranking(corpus, &sims)
            .into_iter()
            .filter(|&j| j != s)
            .take(k)
            .collect();
        let mut row = vec![0.0; m];
        let mut scale = vec![0.0; m];
        for t in 0..m {
            let mut top = 0.0;
            let mut top_abs = 0.0;
            for &j in &neighbors {
                top += sims[j] * labels[j][t];
                top_abs += (sims[j] * labels[j][t]).abs();
            }
            let mut prior = 0.0;
            let mut prior_abs = 0.0;
            for j in 0..n {
                prior += sims[j] * labels[j][t];
                prior_abs += (sims[j] * labels[j][t]).abs();
            }
            row[t] = if k == 0 { 0.0 } else { top / k as f64 } - prior / n as f64;
            scale[t] = if k == 0 { 0.0 } else { top_abs / k as f64 } + prior_abs / n as f64;
        }
        rows.push(row);
        scales.push(scale);
    }
    (rows, scales)
}

pub fn matrix_rows(r: &RelevanceMatrix) -> Vec<Vec<f64>> {
    (0..r.shape().0).map(|i| r.row(i).to_vec()).collect()
}

/// `|a - b| <= tol * scale`, with the scale floored so that exact zeros
/// compare exactly.
pub fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(a.abs()).max(b.abs()) || a == b
}

/// Average precision from its textbook definition: precision at every
/// relevant rank, summed, over the number of relevant items.
pub fn brute_force_ap(ranking: &[usize], positives: &[bool]) -> f64 {
    let total = positives.iter().filter(|&&p| p).count();
    let mut sum = 0.0;
    for (i, &item) in ranking.iter().enumerate() {
        if positives[item] {
            let relevant_so_far = ranking[..=i].iter().filter(|&&x| positives[x]).count();
            sum += relevant_so_far as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

pub fn ranked_list(ranking: &[usize]) -> RankedList {
    // Strictly decreasing scores reproduce the given order exactly.
    let n = ranking.len();
    RankedList::from_scores(
        ranking
            .iter()
            .enumerate()
            .map(|(pos, &item)| (vid(&format!("i{item}")), (n - pos) as f64))
            .collect(),
    )
}

pub fn truth_of(event: &str, positives: &[bool]) -> GroundTruth {
    GroundTruth {
        event_id: event.to_string(),
        positives: positives
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| vid(&format!("i{i}")))
            .collect(),
        judged: (0..positives.len()).map(|i| vid(&format!("i{i}"))).collect(),
    }
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        heap(k - 1, items, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
            heap(k - 1, items, out);
        }
    }
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut items, &mut out);
    out
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching unit eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].partial_cmp(&a[x][x]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divisor n-1) of row vectors.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let m = rows[0].len();
    let mean: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut c = vec![vec![0.0; m]; m];
    for r in rows {
        for i in 0..m {
            for j in 0..m {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for x in row.iter_mut() {
            *x /= (n - 1) as f64;
        }
    }
    c
}
