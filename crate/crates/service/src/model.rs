//! JSON documents exchanged over the API and kept in the store.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use terrastyle_core::nst::{LossBreakdown, TransferParams};
use terrastyle_core::procgen::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed | JobState::Cancelled)
    }

    /// Allowed transitions: queued to running or cancelled; running to any terminal state.
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Cancelled) | (Running, Succeeded) | (Running, Failed) | (Running, Cancelled)
        )
    }
}

fn default_blend_weight() -> f64 {
    0.5
}

/// Body of `POST /api/jobs`. Exactly one of `noise_config` and `content_artifact`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_config: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_artifact: Option<String>,
    pub style_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_artifact: Option<String>,
    #[serde(default = "default_blend_weight")]
    pub blend_weight: f64,
    #[serde(default)]
    pub transfer_params: TransferParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: usize,
    pub total_iterations: usize,
    pub loss: Option<LossBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub request: JobRequest,
    pub progress: Progress,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub result_ref: Option<String>,
    pub error: Option<String>,
}

/// Entry of `GET /api/jobs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: String,
    pub state: JobState,
    pub progress: Progress,
    pub created_at: DateTime<Utc>,
    pub result_ref: Option<String>,
}

impl From<&Job> for JobSummary {
    fn from(j: &Job) -> Self {
        Self {
            id: j.id.clone(),
            state: j.state,
            progress: j.progress.clone(),
            created_at: j.created_at,
            result_ref: j.result_ref.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEntry {
    pub id: String,
    pub name: String,
    pub terrain_class: String,
    /// Artifact holding the height map as a 16-bit PNG.
    pub heightmap_ref: String,
    pub width: usize,
    pub height: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Style,
    Custom,
    Content,
    Result,
    Preview,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub width: usize,
    pub height: usize,
    pub created_at: DateTime<Utc>,
}

/// One server-sent event. Progress events carry a loss breakdown; the stream ends
/// with a state event for a terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum JobEvent {
    Progress {
        seq: u64,
        #[serde(flatten)]
        loss: LossBreakdown,
        total_iterations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preview: Option<String>,
    },
    State {
        seq: u64,
        state: JobState,
        /// Latest reported iteration, so iterations stay monotone across event types.
        iteration: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result_ref: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl JobEvent {
    pub fn seq(&self) -> u64 {
        match self {
            JobEvent::Progress { seq, .. } | JobEvent::State { seq, .. } => *seq,
        }
    }

    pub fn iteration(&self) -> usize {
        match self {
            JobEvent::Progress { loss, .. } => loss.iteration,
            JobEvent::State { iteration, .. } => *iteration,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, JobEvent::State { state, .. } if state.is_terminal())
    }

    pub fn name(&self) -> &'static str {
        match self {
            JobEvent::Progress { .. } => "progress",
            JobEvent::State { .. } => "state",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_machine() {
        use JobState::*;
        let all = [Queued, Running, Succeeded, Failed, Cancelled];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_become(b))
            .collect();
        assert_eq!(
            allowed,
            vec![
                (Queued, Running),
                (Queued, Cancelled),
                (Running, Succeeded),
                (Running, Failed),
                (Running, Cancelled)
            ]
        );
        assert!(all.iter().filter(|s| s.is_terminal()).count() == 3);
    }

    #[test]
    fn request_defaults_and_round_trip() {
        let r: JobRequest = serde_json::from_str(r#"{"noise_config": {"method": "perlin", "seed": 1}, "style_id": "s"}"#).unwrap();
        assert_eq!(r.blend_weight, 0.5);
        assert_eq!(r.transfer_params, TransferParams::default());
        let back: JobRequest = serde_json::from_value(serde_json::to_value(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn progress_event_flattens_the_breakdown() {
        let e = JobEvent::Progress {
            seq: 3,
            loss: LossBreakdown {
                iteration: 25,
                content: 1.0,
                style: 2.0,
                tv: 3.0,
                total: 4.0,
            },
            total_iterations: 100,
            preview: None,
        };
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["type"], "progress");
        assert_eq!(v["iteration"], 25);
        assert_eq!(v["style"], 2.0);
        assert_eq!(serde_json::from_value::<JobEvent>(v).unwrap(), e);
    }
}
