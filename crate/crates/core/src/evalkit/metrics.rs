//! Ranking metrics: non-interpolated average precision and its mean.

use std::collections::{BTreeMap, BTreeSet};

use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::corpus::VideoId;
use crate::error::{Error, Result};
use crate::events::{Judgment, RankedList};

/// Relevance labels of one event.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub event_id: String,
    pub positives: BTreeSet<VideoId>,
    /// Videos with an explicit judgment. When non-empty, anything outside it
    /// counts as a negative.
    pub judged: BTreeSet<VideoId>,
}

impl GroundTruth {
    /// Group judgments by event. Label 0 (unjudged) entries are skipped.
    pub fn from_judgments(judgments: &[Judgment]) -> Result<Vec<GroundTruth>> {
        let mut by_event: BTreeMap<&str, GroundTruth> = BTreeMap::new();
        for j in judgments {
            let truth = by_event.entry(&j.event_id).or_insert_with(|| GroundTruth {
                event_id: j.event_id.clone(),
                ..GroundTruth::default()
            });
            let id = VideoId::new(j.video_id.clone())?;
            match j.label {
                1 => {
                    truth.positives.insert(id.clone());
                    truth.judged.insert(id);
                }
                -1 => {
                    truth.judged.insert(id);
                }
                _ => {}
            }
        }
        Ok(by_event.into_values().collect())
    }
}

/// Non-interpolated average precision: the mean, over all positives, of the
/// precision at the rank where each positive is retrieved. Positives missing
/// from the ranking contribute zero.
pub fn average_precision(ranked: &RankedList, truth: &GroundTruth) -> Result<f64> {
    let relevant = truth.positives.len();
    if relevant == 0 {
        return Err(Error::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in ranked.ids().enumerate() {
        let judged_ok = truth.judged.is_empty() || truth.judged.contains(id);
        if judged_ok && truth.positives.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / relevant as f64)
}

pub fn mean_average_precision(per_event: &[f64]) -> Result<f64> {
    if per_event.is_empty() {
        return Err(Error::EmptyInput("average precision list"));
    }
    Ok(per_event.iter().sum::<f64>() / per_event.len() as f64)
}

/// Per-event AP plus MAP. Serializes as
/// `{"<event_id>": {"ap": …}, …, "map": …}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_event: BTreeMap<String, f64>,
    pub map: f64,
}

impl EvalReport {
    pub fn new(per_event: BTreeMap<String, f64>) -> Result<Self> {
        if per_event.contains_key("map") {
            return Err(Error::InvalidArgument("event id \"map\" is reserved in reports".into()));
        }
        let aps: Vec<f64> = per_event.values().copied().collect();
        let map = mean_average_precision(&aps)?;
        Ok(EvalReport { per_event, map })
    }

    /// Tab-separated `event_id<TAB>ap` table with a trailing MAP row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("event_id\tap\n");
        for (event, ap) in &self.per_event {
            out.push_str(&format!("{event}\t{ap}\n"));
        }
        out.push_str(&format!("MAP\t{}\n", self.map));
        out
    }
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(serde::Serialize)]
        struct Ap {
            ap: f64,
        }
        let mut map = serializer.serialize_map(Some(self.per_event.len() + 1))?;
        for (event, &ap) in &self.per_event {
            map.serialize_entry(event, &Ap { ap })?;
        }
        map.serialize_entry("map", &self.map)?;
        map.end()
    }
}
