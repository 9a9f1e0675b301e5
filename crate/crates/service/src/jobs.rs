use rebuild_core::agents::EpisodeRecord;
use serde::Serialize;

use crate::error::ServiceError;
use crate::ops::TrainSummary;

const REWARD_TAIL: usize = 20;

/// Ordered so that a status can only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub cycle: u32,
    pub episodes_total: usize,
    status: JobStatus,
    history: Vec<EpisodeRecord>,
    result: Option<TrainSummary>,
    error: Option<ServiceError>,
}

impl Job {
    pub fn new(id: u64, cycle: u32, episodes_total: usize) -> Self {
        Job {
            id,
            cycle,
            episodes_total,
            status: JobStatus::Queued,
            history: Vec::new(),
            result: None,
            error: None,
        }
    }

    pub fn status(&self) -> JobStatus {
        self.status
    }

    pub fn history(&self) -> &[EpisodeRecord] {
        &self.history
    }

    /// Moves forward only; a finished job never changes status again.
    pub fn advance(&mut self, next: JobStatus) -> bool {
        if self.status.is_finished() || next <= self.status {
            return false;
        }
        self.status = next;
        true
    }

    pub fn record(&mut self, episode: &EpisodeRecord) {
        self.history.push(episode.clone());
    }

    pub fn finish(&mut self, outcome: Result<TrainSummary, ServiceError>) {
        match outcome {
            Ok(summary) => {
                if self.advance(JobStatus::Done) {
                    self.result = Some(summary);
                }
            }
            Err(e) => {
                if self.advance(JobStatus::Failed) {
                    self.error = Some(e);
                }
            }
        }
    }

    pub fn view(&self) -> JobView {
        let start = self.history.len().saturating_sub(REWARD_TAIL);
        JobView {
            id: self.id,
            status: self.status,
            cycle: self.cycle,
            episodes_done: self.history.len(),
            episodes_total: self.episodes_total,
            reward_tail: self.history[start..].iter().map(|r| r.reward).collect(),
            result: self.result.clone(),
            error: self.error.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: u64,
    pub status: JobStatus,
    pub cycle: u32,
    pub episodes_done: usize,
    pub episodes_total: usize,
    pub reward_tail: Vec<f64>,
    pub result: Option<TrainSummary>,
    pub error: Option<ServiceError>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_never_regresses() {
        let mut job = Job::new(1, 1, 10);
        assert!(job.advance(JobStatus::Running));
        assert!(!job.advance(JobStatus::Queued));
        job.finish(Err(ServiceError::internal("boom")));
        assert_eq!(job.status(), JobStatus::Failed);
        assert!(!job.advance(JobStatus::Done));
        assert!(!job.advance(JobStatus::Running));
        assert_eq!(job.view().error.unwrap().message, "boom");
    }

    #[test]
    fn reward_tail_is_bounded() {
        let mut job = Job::new(1, 1, 50);
        for e in 1..=50 {
            job.record(&EpisodeRecord {
                episode: e,
                reward: e as f64,
                epsilon: 1.0,
                loss: None,
                steps: 1,
            });
        }
        let view = job.view();
        assert_eq!(view.episodes_done, 50);
        assert_eq!(view.reward_tail.len(), REWARD_TAIL);
        assert_eq!(view.reward_tail[0], 31.0);
    }
}
