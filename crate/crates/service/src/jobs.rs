//! Job registry, style library, and the bounded worker pool.
//!
//! Request handlers only touch snapshots under the registry lock. Transfers run on
//! `workers` OS threads fed from a FIFO queue; each job's events are numbered by a
//! per-job sequence and fanned out over a broadcast channel.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex, MutexGuard, OnceLock};
use std::thread;

use chrono::Utc;
use terrastyle_core::heightfield::decode_heightmap;
use terrastyle_core::nst::{
    load_weights, run_transfer, FeatureExtractor, LossBreakdown, TransferObserver, DEFAULT_WEIGHT_SEED,
};
use terrastyle_core::procgen::blend_custom_feature;
use terrastyle_core::{Error as CoreError, HeightMap};
use tokio::sync::broadcast;

use crate::error::{ServiceError, ServiceResult};
use crate::model::{Artifact, ArtifactKind, Job, JobEvent, JobRequest, JobState, Progress, StyleEntry};
use crate::store::{new_id, Store};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Worker threads, i.e. the most jobs running at once. Zero accepts jobs but never runs them.
    pub workers: usize,
    /// Pretrained weight archive; `None` uses the seeded stand-in extractor.
    pub weights: Option<PathBuf>,
    /// Iteration stride of preview artifacts.
    pub preview_every: usize,
    pub preview_max_side: usize,
    /// Register the bundled styles when the library is empty.
    pub seed_styles: bool,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: 1,
            weights: None,
            preview_every: 100,
            preview_max_side: 256,
            seed_styles: true,
        }
    }
}

const EVENT_BUFFER: usize = 256;

struct JobEntry {
    job: Job,
    cancel: Arc<AtomicBool>,
    tx: broadcast::Sender<JobEvent>,
    last: JobEvent,
    seq: u64,
}

impl JobEntry {
    fn new(job: Job) -> Self {
        let last = JobEvent::State {
            seq: 0,
            state: job.state,
            iteration: job.progress.iteration,
            result_ref: job.result_ref.clone(),
            error: job.error.clone(),
        };
        Self {
            job,
            cancel: Arc::new(AtomicBool::new(false)),
            tx: broadcast::channel(EVENT_BUFFER).0,
            last,
            seq: 0,
        }
    }

    fn publish(&mut self, make: impl FnOnce(u64) -> JobEvent) {
        self.seq += 1;
        let event = make(self.seq);
        self.last = event.clone();
        // No receivers is fine: late subscribers replay `last`.
        let _ = self.tx.send(event);
    }

    fn publish_state(&mut self) {
        let (state, iteration) = (self.job.state, self.job.progress.iteration);
        let (result_ref, error) = (self.job.result_ref.clone(), self.job.error.clone());
        self.publish(|seq| JobEvent::State {
            seq,
            state,
            iteration,
            result_ref,
            error,
        });
    }
}

/// Event replay point plus live feed for one job.
pub struct Subscription {
    pub last: JobEvent,
    pub rx: broadcast::Receiver<JobEvent>,
}

pub struct JobService {
    config: ServiceConfig,
    store: Store,
    jobs: Mutex<HashMap<String, JobEntry>>,
    styles: Mutex<Vec<StyleEntry>>,
    queue: Mutex<Option<mpsc::Sender<String>>>,
    extractor: OnceLock<Result<Arc<FeatureExtractor>, String>>,
    running: AtomicUsize,
    peak_running: AtomicUsize,
}

impl JobService {
    /// Opens the store, audits jobs left over from a previous process, and starts
    /// the worker pool.
    ///
    /// Jobs found `running` are marked failed with an "interrupted" error; `queued`
    /// jobs are queued again in creation order.
    pub fn start(config: ServiceConfig) -> ServiceResult<Arc<Self>> {
        let store = Store::open(&config.data_dir)?;
        let mut jobs = HashMap::new();
        let mut requeue = Vec::new();
        for mut job in store.load_jobs()? {
            match job.state {
                JobState::Running => {
                    job.state = JobState::Failed;
                    job.error = Some("interrupted".into());
                    job.finished_at = Some(Utc::now());
                    store.put_job(&job)?;
                    tracing::warn!(job = %job.id, "marked interrupted job as failed");
                }
                JobState::Queued => requeue.push(job.id.clone()),
                _ => {}
            }
            jobs.insert(job.id.clone(), JobEntry::new(job));
        }

        let mut styles = store.load_styles()?;
        if styles.is_empty() && config.seed_styles {
            for b in terrastyle_core::styles::BUNDLED {
                let map = b.load()?;
                let artifact = store.put_map(ArtifactKind::Style, &map)?;
                let entry = StyleEntry {
                    id: b.name.to_string(),
                    name: b.name.to_string(),
                    terrain_class: b.terrain_class.to_string(),
                    heightmap_ref: artifact.id,
                    width: map.width(),
                    height: map.height(),
                    created_at: Utc::now(),
                };
                store.put_style(&entry)?;
                styles.push(entry);
            }
        }

        let (tx, rx) = mpsc::channel();
        for id in requeue {
            tx.send(id).expect("receiver alive");
        }
        let service = Arc::new(Self {
            config,
            store,
            jobs: Mutex::new(jobs),
            styles: Mutex::new(styles),
            queue: Mutex::new(Some(tx)),
            extractor: OnceLock::new(),
            running: AtomicUsize::new(0),
            peak_running: AtomicUsize::new(0),
        });
        let rx = Arc::new(Mutex::new(rx));
        for i in 0..service.config.workers {
            let (svc, rx) = (Arc::downgrade(&service), Arc::clone(&rx));
            thread::Builder::new()
                .name(format!("transfer-worker-{i}"))
                .spawn(move || worker_loop(svc, rx))
                .map_err(|e| ServiceError::io(&service.config.data_dir, e))?;
        }
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Stops accepting work; idle workers exit once the queue drains.
    pub fn shutdown(&self) {
        lock(&self.queue).take();
    }

    /// Highest number of simultaneously running jobs seen so far.
    pub fn peak_running(&self) -> usize {
        self.peak_running.load(Ordering::SeqCst)
    }

    // ---- styles and artifacts ----

    pub fn styles(&self) -> Vec<StyleEntry> {
        lock(&self.styles).clone()
    }

    fn style(&self, id: &str) -> ServiceResult<StyleEntry> {
        lock(&self.styles)
            .iter()
            .find(|s| s.id == id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("style {id:?} not found")))
    }

    /// Validates an uploaded height map and stores it as a 16-bit PNG.
    pub fn upload_map(&self, kind: ArtifactKind, bytes: &[u8]) -> ServiceResult<(Artifact, HeightMap)> {
        let map = decode_heightmap(bytes).map_err(|e| ServiceError::invalid("file", e.to_string()))?;
        Ok((self.store.put_map(kind, &map)?, map))
    }

    pub fn add_style(&self, name: &str, terrain_class: &str, bytes: &[u8]) -> ServiceResult<StyleEntry> {
        if name.trim().is_empty() {
            return Err(ServiceError::invalid("name", "must not be empty"));
        }
        if terrain_class.trim().is_empty() {
            return Err(ServiceError::invalid("terrain_class", "must not be empty"));
        }
        let (artifact, map) = self.upload_map(ArtifactKind::Style, bytes)?;
        let entry = StyleEntry {
            id: new_id(),
            name: name.to_string(),
            terrain_class: terrain_class.to_string(),
            heightmap_ref: artifact.id,
            width: map.width(),
            height: map.height(),
            created_at: Utc::now(),
        };
        self.store.put_style(&entry)?;
        lock(&self.styles).push(entry.clone());
        Ok(entry)
    }

    fn artifact_dims(&self, field: &str, id: &str) -> ServiceResult<(usize, usize)> {
        self.store
            .artifact(id)
            .map(|a| (a.width, a.height))
            .ok_or_else(|| ServiceError::NotFound(format!("{field} {id:?} not found")))
    }

    /// Deletes artifacts no style or job refers to. Previews survive while any job is active.
    pub fn purge_artifacts(&self) -> ServiceResult<Vec<String>> {
        let jobs = lock(&self.jobs);
        let mut keep: HashSet<String> = lock(&self.styles).iter().map(|s| s.heightmap_ref.clone()).collect();
        let mut active = false;
        for e in jobs.values() {
            let j = &e.job;
            active |= !j.state.is_terminal();
            keep.extend(j.request.content_artifact.iter().cloned());
            keep.extend(j.request.custom_artifact.iter().cloned());
            keep.extend(j.result_ref.iter().cloned());
        }
        let mut removed = Vec::new();
        for a in self.store.artifacts()? {
            if keep.contains(&a.id) || (active && a.kind == ArtifactKind::Preview) {
                continue;
            }
            self.store.delete_artifact(&a.id)?;
            removed.push(a.id);
        }
        Ok(removed)
    }

    // ---- jobs ----

    /// Validates `request`, persists it as a queued job, and hands it to the pool.
    pub fn create_job(&self, request: JobRequest) -> ServiceResult<Job> {
        let content_dims = match (&request.noise_config, &request.content_artifact) {
            (Some(cfg), None) => {
                cfg.validate().map_err(|e| invalid_from_core("noise_config", e))?;
                cfg.dims()
            }
            (None, Some(id)) => self.artifact_dims("content_artifact", id)?,
            _ => {
                return Err(ServiceError::invalid(
                    "noise_config",
                    "exactly one of noise_config and content_artifact is required",
                ))
            }
        };
        self.style(&request.style_id)?;
        if let Some(id) = &request.custom_artifact {
            let dims = self.artifact_dims("custom_artifact", id)?;
            if dims != content_dims {
                return Err(ServiceError::invalid(
                    "custom_artifact",
                    format!(
                        "custom map is {}x{} but content is {}x{}",
                        dims.0, dims.1, content_dims.0, content_dims.1
                    ),
                ));
            }
        }
        if !(0.0..=1.0).contains(&request.blend_weight) {
            return Err(ServiceError::invalid("blend_weight", "must lie in [0, 1]"));
        }
        request
            .transfer_params
            .validate()
            .map_err(|e| invalid_from_core("transfer_params", e))?;

        let job = Job {
            id: new_id(),
            state: JobState::Queued,
            progress: Progress {
                iteration: 0,
                total_iterations: request.transfer_params.iterations,
                loss: None,
            },
            request,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
            result_ref: None,
            error: None,
        };
        self.store.put_job(&job)?;
        lock(&self.jobs).insert(job.id.clone(), JobEntry::new(job.clone()));
        if let Some(tx) = lock(&self.queue).as_ref() {
            let _ = tx.send(job.id.clone());
        }
        tracing::info!(job = %job.id, "job queued");
        Ok(job)
    }

    pub fn job(&self, id: &str) -> ServiceResult<Job> {
        lock(&self.jobs)
            .get(id)
            .map(|e| e.job.clone())
            .ok_or_else(|| job_not_found(id))
    }

    /// All jobs, oldest first.
    pub fn jobs(&self) -> Vec<Job> {
        let mut all: Vec<Job> = lock(&self.jobs).values().map(|e| e.job.clone()).collect();
        all.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        all
    }

    pub fn subscribe(&self, id: &str) -> ServiceResult<Subscription> {
        let jobs = lock(&self.jobs);
        let e = jobs.get(id).ok_or_else(|| job_not_found(id))?;
        Ok(Subscription {
            last: e.last.clone(),
            rx: e.tx.subscribe(),
        })
    }

    /// Moves a queued or running job to `cancelled` at once and raises its flag so a
    /// running optimization stops before its next iteration.
    pub fn cancel_job(&self, id: &str) -> ServiceResult<Job> {
        let mut jobs = lock(&self.jobs);
        let e = jobs.get_mut(id).ok_or_else(|| job_not_found(id))?;
        if e.job.state.is_terminal() {
            return Err(ServiceError::Conflict(format!(
                "job {id} is already {}",
                state_name(e.job.state)
            )));
        }
        e.cancel.store(true, Ordering::SeqCst);
        e.job.state = JobState::Cancelled;
        e.job.finished_at = Some(Utc::now());
        self.store.put_job(&e.job)?;
        e.publish_state();
        tracing::info!(job = %id, "job cancelled");
        Ok(e.job.clone())
    }

    /// Applies `f` to a job that is still in state `expect`, then persists it.
    fn update(&self, id: &str, expect: JobState, f: impl FnOnce(&mut JobEntry)) -> bool {
        let mut jobs = lock(&self.jobs);
        let Some(e) = jobs.get_mut(id).filter(|e| e.job.state == expect) else {
            return false;
        };
        f(e);
        if let Err(err) = self.store.put_job(&e.job) {
            tracing::error!(job = %id, "persisting job failed: {err}");
        }
        true
    }

    fn extractor(&self) -> Result<Arc<FeatureExtractor>, String> {
        self.extractor
            .get_or_init(|| match &self.config.weights {
                Some(path) => load_weights(path).map(Arc::new).map_err(|e| e.to_string()),
                None => Ok(Arc::new(FeatureExtractor::seeded(DEFAULT_WEIGHT_SEED))),
            })
            .clone()
    }

    fn execute(&self, id: &str) {
        let mut cancel = None;
        let started = self.update(id, JobState::Queued, |e| {
            e.job.state = JobState::Running;
            e.job.started_at = Some(Utc::now());
            e.publish_state();
            cancel = Some(Arc::clone(&e.cancel));
        });
        let Some(cancel) = cancel.filter(|_| started) else {
            return;
        };
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_running.fetch_max(now, Ordering::SeqCst);
        tracing::info!(job = %id, "job running");

        let outcome = self.run(id, cancel);
        self.running.fetch_sub(1, Ordering::SeqCst);

        match outcome {
            Ok(result) => {
                self.update(id, JobState::Running, |e| {
                    e.job.state = JobState::Succeeded;
                    e.job.result_ref = Some(result.id);
                    e.job.finished_at = Some(Utc::now());
                    e.publish_state();
                });
                tracing::info!(job = %id, "job succeeded");
            }
            Err(ServiceError::Core(CoreError::Cancelled)) => {}
            Err(err) => {
                self.update(id, JobState::Running, |e| {
                    e.job.state = JobState::Failed;
                    e.job.error = Some(err.to_string());
                    e.job.finished_at = Some(Utc::now());
                    e.publish_state();
                });
                tracing::warn!(job = %id, "job failed: {err}");
            }
        }
    }

    fn run(&self, id: &str, cancel: Arc<AtomicBool>) -> ServiceResult<Artifact> {
        let request = self.job(id)?.request;
        let content = match (&request.noise_config, &request.content_artifact) {
            (Some(cfg), _) => cfg.generate()?,
            (None, Some(a)) => self.store.load_map(a)?,
            (None, None) => unreachable!("validated at creation"),
        };
        let content = match &request.custom_artifact {
            Some(a) => blend_custom_feature(&self.store.load_map(a)?, &content, request.blend_weight)?,
            None => content,
        };
        let style = self.store.load_map(&self.style(&request.style_id)?.heightmap_ref)?;
        let extractor = self.extractor().map_err(|e| ServiceError::invalid("weights", e))?;
        let mut observer = JobObserver {
            service: self,
            id,
            cancel,
            total: request.transfer_params.iterations,
        };
        let result = run_transfer(&extractor, &content, &style, &request.transfer_params, &mut observer)?;
        self.store.put_map(ArtifactKind::Result, &result.map)
    }
}

struct JobObserver<'a> {
    service: &'a JobService,
    id: &'a str,
    cancel: Arc<AtomicBool>,
    total: usize,
}

impl TransferObserver for JobObserver<'_> {
    fn on_progress(&mut self, loss: &LossBreakdown, preview: Option<&HeightMap>) {
        let max_side = self.service.config.preview_max_side;
        let preview = preview.and_then(|map| {
            let small = if map.width().max(map.height()) > max_side {
                map.fit_long_side(max_side)
            } else {
                map.clone()
            };
            match self.service.store.put_map(ArtifactKind::Preview, &small) {
                Ok(a) => Some(a.id),
                Err(err) => {
                    tracing::warn!(job = %self.id, "preview not stored: {err}");
                    None
                }
            }
        });
        let total = self.total;
        self.service.update(self.id, JobState::Running, |e| {
            e.job.progress = Progress {
                iteration: loss.iteration,
                total_iterations: total,
                loss: Some(loss.clone()),
            };
            e.publish(|seq| JobEvent::Progress {
                seq,
                loss: loss.clone(),
                total_iterations: total,
                preview,
            });
        });
    }

    fn preview_every(&self) -> Option<usize> {
        Some(self.service.config.preview_every).filter(|&k| k > 0)
    }

    fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

fn worker_loop(service: std::sync::Weak<JobService>, rx: Arc<Mutex<mpsc::Receiver<String>>>) {
    loop {
        let next = lock(&rx).recv();
        let Ok(id) = next else { return };
        let Some(service) = service.upgrade() else { return };
        service.execute(&id);
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn job_not_found(id: &str) -> ServiceError {
    ServiceError::NotFound(format!("job {id:?} not found"))
}

fn state_name(s: JobState) -> &'static str {
    match s {
        JobState::Queued => "queued",
        JobState::Running => "running",
        JobState::Succeeded => "succeeded",
        JobState::Failed => "failed",
        JobState::Cancelled => "cancelled",
    }
}

/// Prefixes core field errors with the request member they came from.
fn invalid_from_core(prefix: &str, e: CoreError) -> ServiceError {
    match e {
        CoreError::Field { field, message } => ServiceError::invalid(format!("{prefix}.{field}"), message),
        CoreError::Argument(message) => ServiceError::invalid(prefix, message),
        other => ServiceError::invalid(prefix, other.to_string()),
    }
}
