//! File formats owned by the command-line pipeline.
//!
//! Tag-book files are JSON Lines: a header object naming the vocabulary the
//! vectors live in, then one `{"id", "vector"}` object per video. Ranking
//! files hold one `{"event_id", "ranking": [[id, score], …]}` object per
//! event. Reference files hold `{"id", "text"}` objects.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tagbook::events::RankedList;
use tagbook::persist::write_atomic;
use tagbook::{TagVector, VideoId};

pub const TAGBOOK_FORMAT: &str = "tagbook";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagbookHeader {
    pub format: String,
    pub vocab_hash: String,
    pub dim: usize,
    pub variant: String,
    pub k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagbookRow {
    id: VideoId,
    vector: TagVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankingRow {
    event_id: String,
    ranking: Vec<(VideoId, f64)>,
}

#[derive(Deserialize)]
struct ReferenceRow {
    id: VideoId,
    text: String,
}

fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).with_context(|| format!("{}:{line}: malformed record", path.display()))
}

fn push_json<T: Serialize>(out: &mut String, value: &T) -> Result<()> {
    out.push_str(&serde_json::to_string(value)?);
    out.push('\n');
    Ok(())
}

pub fn write_tagbooks(path: &Path, header: &TagbookHeader, rows: &[(VideoId, TagVector)]) -> Result<()> {
    let mut out = String::new();
    push_json(&mut out, header)?;
    for (id, vector) in rows {
        push_json(
            &mut out,
            &TagbookRow {
                id: id.clone(),
                vector: vector.clone(),
            },
        )?;
    }
    Ok(write_atomic(path, out.as_bytes())?)
}

pub fn read_tagbooks(path: &Path) -> Result<(TagbookHeader, Vec<(VideoId, TagVector)>)> {
    let mut lines = jsonl_lines(path)?.into_iter();
    let Some((n, first)) = lines.next() else {
        bail!("{}: empty tag-book file", path.display());
    };
    let header: TagbookHeader = parse_line(path, n, &first)?;
    if header.format != TAGBOOK_FORMAT {
        bail!("{}:{n}: not a tag-book file", path.display());
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let row: TagbookRow = parse_line(path, n, &line)?;
        if row.vector.len() != header.dim {
            bail!(
                "{}:{n}: vector has {} entries, header says {}",
                path.display(),
                row.vector.len(),
                header.dim
            );
        }
        rows.push((row.id, row.vector));
    }
    Ok((header, rows))
}

pub fn write_rankings(path: &Path, rankings: &BTreeMap<String, RankedList>) -> Result<()> {
    let mut out = String::new();
    for (event_id, ranked) in rankings {
        push_json(
            &mut out,
            &RankingRow {
                event_id: event_id.clone(),
                ranking: ranked.entries.clone(),
            },
        )?;
    }
    Ok(write_atomic(path, out.as_bytes())?)
}

pub fn read_rankings(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let mut out = BTreeMap::new();
    for (n, line) in jsonl_lines(path)? {
        let row: RankingRow = parse_line(path, n, &line)?;
        if out
            .insert(row.event_id.clone(), RankedList::from_scores(row.ranking))
            .is_some()
        {
            bail!("{}:{n}: duplicate event {}", path.display(), row.event_id);
        }
    }
    Ok(out)
}

/// Reference texts by video id.
pub fn read_references(path: &Path) -> Result<BTreeMap<VideoId, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in jsonl_lines(path)? {
        let row: ReferenceRow = parse_line(path, n, &line)?;
        if out.insert(row.id.clone(), row.text).is_some() {
            bail!("{}:{n}: duplicate reference for {}", path.display(), row.id);
        }
    }
    Ok(out)
}
