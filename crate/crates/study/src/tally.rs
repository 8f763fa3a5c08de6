use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};
use crate::manifest::StudyManifest;
use crate::votes::{Choice, VoteRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub method_1: u64,
    pub method_2: u64,
    pub both: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.method_1 + self.method_2 + self.both
    }

    pub fn frequencies(&self) -> Frequencies {
        let n = self.total() as f64;
        Frequencies {
            votes: self.total(),
            method_1: self.method_1 as f64 / n,
            method_2: self.method_2 as f64 / n,
            both: self.both as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequencies {
    pub votes: u64,
    pub method_1: f64,
    pub method_2: f64,
    pub both: f64,
}

/// Unblinded relative frequencies; `method_1`/`method_2` follow `methods`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyResult {
    pub study_id: String,
    pub methods: [String; 2],
    pub per_rater: BTreeMap<String, Frequencies>,
    pub overall: Frequencies,
}

pub fn tally(manifest: &StudyManifest, votes: &[VoteRecord]) -> Result<TallyResult> {
    if votes.is_empty() {
        return Err(StudyError::NoVotes);
    }
    let mut per_rater: BTreeMap<String, OutcomeCounts> = BTreeMap::new();
    let mut overall = OutcomeCounts::default();
    for vote in votes {
        let item = manifest
            .item(&vote.item_id)
            .ok_or_else(|| StudyError::UnknownItem(vote.item_id.clone()))?;
        let method = match vote.choice {
            Choice::A => Some(item.hidden_assignment),
            Choice::B => Some(1 - item.hidden_assignment),
            Choice::Both => None,
        };
        for counts in [per_rater.entry(vote.rater_id.clone()).or_default(), &mut overall] {
            match method {
                Some(0) => counts.method_1 += 1,
                Some(_) => counts.method_2 += 1,
                None => counts.both += 1,
            }
        }
    }
    Ok(TallyResult {
        study_id: manifest.study_id.clone(),
        methods: manifest.methods.clone(),
        per_rater: per_rater.into_iter().map(|(r, c)| (r, c.frequencies())).collect(),
        overall: overall.frequencies(),
    })
}
