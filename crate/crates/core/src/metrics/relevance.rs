use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a retrieved volume must share with the query to count as relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceTask {
    /// Same tumor status (present / absent).
    Flagging,
    /// Same stage; two tumor-free volumes match as well.
    Staging,
}

impl RelevanceTask {
    pub const ALL: [RelevanceTask; 2] = [RelevanceTask::Flagging, RelevanceTask::Staging];

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceTask::Flagging => "flagging",
            RelevanceTask::Staging => "staging",
        }
    }
}

impl fmt::Display for RelevanceTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flagging" => Ok(RelevanceTask::Flagging),
            "staging" => Ok(RelevanceTask::Staging),
            other => Err(Error::Input(format!("unknown relevance task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub task: RelevanceTask,
    pub query_stage: u8,
    pub retrieved_stage: u8,
    pub relevant: bool,
}

pub fn is_relevant(task: RelevanceTask, query_stage: u8, retrieved_stage: u8) -> bool {
    match task {
        RelevanceTask::Flagging => (query_stage > 0) == (retrieved_stage > 0),
        RelevanceTask::Staging => query_stage == retrieved_stage,
    }
}

pub fn judge(task: RelevanceTask, query_stage: u8, retrieved_stage: u8) -> RelevanceJudgment {
    RelevanceJudgment {
        task,
        query_stage,
        retrieved_stage,
        relevant: is_relevant(task, query_stage, retrieved_stage),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flagging_matches_status() {
        assert!(is_relevant(RelevanceTask::Flagging, 3, 1));
        assert!(is_relevant(RelevanceTask::Flagging, 0, 0));
        assert!(!is_relevant(RelevanceTask::Flagging, 0, 2));
        assert!(!is_relevant(RelevanceTask::Flagging, 4, 0));
    }

    #[test]
    fn staging_matches_stage() {
        assert!(is_relevant(RelevanceTask::Staging, 2, 2));
        assert!(is_relevant(RelevanceTask::Staging, 0, 0));
        assert!(!is_relevant(RelevanceTask::Staging, 2, 3));
    }

    #[test]
    fn staging_implies_flagging() {
        for q in 0..=4 {
            for r in 0..=4 {
                if is_relevant(RelevanceTask::Staging, q, r) {
                    assert!(is_relevant(RelevanceTask::Flagging, q, r));
                }
                assert_eq!(judge(RelevanceTask::Staging, q, r).relevant, q == r);
            }
        }
    }
}
