use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use oprl::elicitation::QueryPair;
use oprl::envs::EnvId;
use oprl::harness::{Anchors, ElicitationRun, ExperimentConfig, MetricsPoint, MetricsSeries, SeedSeries, Strategy};
use oprl::rng::derive_seed;
use oprl::Trajectory;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingLabel,
    Refitting,
    Idle,
    Done,
}

/// Whether the query with this ordinal is shown with its trajectories
/// swapped, so that side A is the internal second trajectory.
pub fn display_swapped(seed: u64, ordinal: u64) -> bool {
    derive_seed(seed, "display-swap", ordinal) & 1 == 1
}

/// What is written to disk after every label. Replaying the labels through a
/// fresh run with the same config and seed rebuilds the session exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Labels in internal orientation (1 = first trajectory preferred).
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepView {
    pub t: usize,
    pub state: usize,
    pub display: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_display: Option<Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub side: String,
    pub steps: Vec<StepView>,
}

/// Payload of `GET /sessions/{id}/query`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryView {
    pub session_id: String,
    pub ordinal: u64,
    pub env: EnvId,
    pub strategy: Strategy,
    pub a: TrajectoryView,
    pub b: TrajectoryView,
}

/// Payload of `GET /sessions/{id}/status`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatusView {
    pub session_id: String,
    pub status: Status,
    pub env: EnvId,
    pub strategy: Strategy,
    pub seed: u64,
    pub n_prefs: usize,
    pub budget: usize,
    pub batch_size: usize,
    pub anchors: Anchors,
    /// Policy quality before any feedback.
    pub initial: MetricsPoint,
    /// One point per completed batch.
    pub progress: Vec<MetricsPoint>,
    /// Same curve, initial point included, in harness form.
    pub metrics: MetricsSeries,
}

/// Body of `POST /sessions/{id}/label`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub ordinal: u64,
    /// 1 when the trajectory shown as A is preferred.
    pub label: u8,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelResponse {
    pub n_prefs: usize,
    pub status: Status,
    /// Present when this label closed a batch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit: Option<MetricsPoint>,
}

fn render(env: EnvId, traj: &Trajectory, side: &str) -> TrajectoryView {
    let steps = traj
        .states
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let action = traj.actions.get(t).copied();
            StepView {
                t,
                state: s,
                display: env.annotate_state(s),
                action,
                action_display: action.map(|a| env.annotate_action(a)),
            }
        })
        .collect();
    TrajectoryView { side: side.into(), steps }
}

pub(crate) fn render_query(session_id: &str, run: &ElicitationRun, pair: &QueryPair) -> QueryView {
    let cfg = run.config();
    let ordinal = run.n_prefs() as u64;
    let (first, second) = if display_swapped(run.seed(), ordinal) {
        (&pair.traj_b, &pair.traj_a)
    } else {
        (&pair.traj_a, &pair.traj_b)
    };
    QueryView {
        session_id: session_id.into(),
        ordinal,
        env: cfg.env,
        strategy: cfg.strategy,
        a: render(cfg.env, first, "A"),
        b: render(cfg.env, second, "B"),
    }
}

pub(crate) fn status_view(session_id: &str, run: &ElicitationRun, env_anchors: Anchors) -> StatusView {
    let cfg = run.config();
    let points = run.points();
    StatusView {
        session_id: session_id.into(),
        status: if run.is_done() { Status::Done } else { Status::AwaitingLabel },
        env: cfg.env,
        strategy: cfg.strategy,
        seed: run.seed(),
        n_prefs: run.n_prefs(),
        budget: cfg.budget,
        batch_size: cfg.batch_size,
        anchors: run.anchors(),
        initial: points[0],
        progress: points[1..].to_vec(),
        metrics: MetricsSeries {
            anchors: env_anchors,
            anchor_mode: cfg.anchor_mode,
            target_gap: cfg.target_gap,
            seeds: vec![SeedSeries { seed: run.seed(), anchors: run.anchors(), points: points.to_vec() }],
        },
    }
}

/// One labeling session: the elicitation loop plus the bookkeeping that
/// lets readers see progress while a refit holds the run.
pub struct Session {
    pub id: String,
    pub(crate) run: Arc<tokio::sync::Mutex<ElicitationRun>>,
    pub(crate) labels: std::sync::Mutex<Vec<u8>>,
    pub(crate) refitting: AtomicBool,
    pub(crate) env_anchors: Anchors,
    pub(crate) last_status: std::sync::Mutex<StatusView>,
}

impl Session {
    /// Starts a run and computes its first query.
    pub fn create(id: String, cfg: &ExperimentConfig, seed: u64) -> oprl::Result<Self> {
        Self::replay(id, cfg, seed, &[])
    }

    pub fn restore(snapshot: &Snapshot) -> oprl::Result<Self> {
        Self::replay(snapshot.session_id.clone(), &snapshot.config, snapshot.seed, &snapshot.labels)
    }

    fn replay(id: String, cfg: &ExperimentConfig, seed: u64, labels: &[u8]) -> oprl::Result<Self> {
        let mut run = ElicitationRun::start(cfg, seed)?;
        for &label in labels {
            run.next_query()?;
            run.submit_label(label)?;
        }
        if !run.is_done() {
            run.next_query()?;
        }
        let env_anchors = Anchors::for_env(run.env())?;
        let status = status_view(&id, &run, env_anchors);
        Ok(Self {
            id,
            run: Arc::new(tokio::sync::Mutex::new(run)),
            labels: std::sync::Mutex::new(labels.to_vec()),
            refitting: AtomicBool::new(false),
            env_anchors,
            last_status: std::sync::Mutex::new(status),
        })
    }

    /// Latest status without waiting for a running refit.
    pub fn status(&self) -> StatusView {
        let mut view = self.last_status.lock().expect("status lock").clone();
        if self.refitting.load(Ordering::SeqCst) {
            view.status = Status::Refitting;
        }
        view
    }

    pub fn snapshot(&self, run: &ElicitationRun) -> Snapshot {
        Snapshot {
            session_id: self.id.clone(),
            seed: run.seed(),
            config: run.config().clone(),
            labels: self.labels.lock().expect("labels lock").clone(),
        }
    }
}
