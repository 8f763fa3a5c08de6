//! Append-only JSON-lines vote log.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};

pub const VOTE_LOG_FILE: &str = "votes.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "both")]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub study_id: String,
    pub session_id: String,
    pub rater_id: String,
    pub item_id: String,
    pub choice: Choice,
    /// Milliseconds since the Unix epoch, as reported by the server.
    pub timestamp: u64,
}

#[derive(Debug)]
pub struct VoteLog {
    path: PathBuf,
    file: File,
    votes: Vec<VoteRecord>,
    seen: HashSet<(String, String)>,
}

impl VoteLog {
    /// Opens or creates the log at `path`, replaying any existing votes.
    pub fn open(path: &Path) -> Result<Self> {
        let mut votes = Vec::new();
        let mut seen = HashSet::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| StudyError::io(path, e))?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| StudyError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let bad = |message: String| StudyError::Log {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message,
                };
                let vote: VoteRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                if !seen.insert((vote.rater_id.clone(), vote.item_id.clone())) {
                    return Err(bad(format!("duplicate vote by `{}` on `{}`", vote.rater_id, vote.item_id)));
                }
                votes.push(vote);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StudyError::io(path, e))?;
        Ok(VoteLog {
            path: path.to_path_buf(),
            file,
            votes,
            seen,
        })
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn has_voted(&self, rater: &str, item: &str) -> bool {
        self.seen.contains(&(rater.to_string(), item.to_string()))
    }

    /// Appends `vote` and syncs it to disk before returning.
    pub fn append(&mut self, vote: VoteRecord) -> Result<()> {
        let key = (vote.rater_id.clone(), vote.item_id.clone());
        if self.seen.contains(&key) {
            return Err(StudyError::DuplicateVote {
                rater: key.0,
                item: key.1,
            });
        }
        let mut line = serde_json::to_vec(&vote).expect("vote serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.sync_data())
            .map_err(|e| StudyError::io(&self.path, e))?;
        self.seen.insert(key);
        self.votes.push(vote);
        Ok(())
    }
}
