mod common;

use std::time::Duration;

use axum::http::StatusCode;
use common::*;
use terrastyle_core::heightfield::decode_heightmap;
use terrastyle_core::nst::TransferParams;
use terrastyle_service::model::{JobEvent, JobState};

fn check_stream(events: &[JobEvent], params: &TransferParams) {
    assert!(events.windows(2).all(|w| w[0].seq() < w[1].seq()), "seq must increase");
    assert!(
        events.windows(2).all(|w| w[0].iteration() <= w[1].iteration()),
        "iterations must not decrease"
    );
    assert!(events.last().unwrap().is_terminal());
    assert_eq!(events.iter().filter(|e| e.is_terminal()).count(), 1);
    for e in events {
        if let JobEvent::Progress { loss, .. } = e {
            let sum = params.alpha * loss.content + params.beta * loss.style + params.gamma * loss.tv;
            assert!((loss.total - sum).abs() <= 1e-6 * sum.abs().max(f64::MIN_POSITIVE), "{loss:?}");
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn job_runs_to_completion_with_a_consistent_stream() {
    let h = Harness::new(1);
    let body = small_job("river", 120);
    let (s, job) = h.post_json("/api/jobs", &body).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = job["id"].as_str().unwrap().to_string();

    let events = h.events(&id).await;
    let params: TransferParams = serde_json::from_value(body["transfer_params"].clone()).unwrap();
    check_stream(&events, &params);
    let progress: Vec<_> = events.iter().filter(|e| matches!(e, JobEvent::Progress { .. })).collect();
    assert_eq!(progress.last().unwrap().iteration(), 120);
    let JobEvent::State { state: end, result_ref, .. } = events.last().unwrap() else { unreachable!() };
    assert_eq!(*end, JobState::Succeeded);

    let previews: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            JobEvent::Progress { preview: Some(p), loss, .. } => Some((loss.iteration, p.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(previews.iter().map(|p| p.0).collect::<Vec<_>>(), [100, 120]);
    for (_, p) in &previews {
        let (s, png) = h.get(&format!("/api/artifacts/{p}")).await;
        assert_eq!(s, StatusCode::OK);
        let m = decode_heightmap(&png).unwrap();
        assert!(m.width().max(m.height()) <= 256);
    }

    let (_, job) = h.get_json(&format!("/api/jobs/{id}")).await;
    assert_eq!(state(&job), JobState::Succeeded);
    assert_eq!(job["result_ref"].as_str(), result_ref.as_deref());
    assert_eq!(job["progress"]["iteration"], 120);
    assert!(job["finished_at"].is_string() && job["started_at"].is_string());

    let result = result_ref.as_ref().unwrap();
    let (s, served) = h.get(&format!("/api/artifacts/{result}")).await;
    assert_eq!(s, StatusCode::OK);
    let written = std::fs::read(h.dir.path().join("artifacts").join(format!("{result}.png"))).unwrap();
    assert_eq!(served, written);
    assert_eq!(decode_heightmap(&served).unwrap().dims(), (32, 32));

    // A late subscriber gets only the terminal replay.
    let replay = h.events(&id).await;
    assert_eq!(replay, vec![events.last().unwrap().clone()]);

    let (s, _) = h.post_empty(&format!("/api/jobs/{id}/cancel")).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn cancel_running_job_ends_the_stream() {
    let h = Harness::new(1);
    let (_, job) = h.post_json("/api/jobs", &small_job("mountain", 1_000_000)).await;
    let id = job["id"].as_str().unwrap().to_string();
    h.wait_for(&id, Duration::from_secs(60), |j| j.progress.iteration >= 10);

    let stream = {
        let h2 = Harness {
            dir: tempfile::tempdir().unwrap(),
            service: h.service.clone(),
        };
        let id = id.clone();
        tokio::spawn(async move { h2.events(&id).await })
    };
    tokio::time::sleep(Duration::from_millis(50)).await;
    let (s, v) = h.post_empty(&format!("/api/jobs/{id}/cancel")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(state(&v), JobState::Cancelled);

    let events = tokio::time::timeout(Duration::from_secs(30), stream).await.unwrap().unwrap();
    let last = events.last().unwrap();
    assert!(matches!(last, JobEvent::State { state: JobState::Cancelled, .. }), "{last:?}");
    assert!(events.windows(2).all(|w| w[0].iteration() <= w[1].iteration()));

    // The worker notices the flag, frees itself, and leaves the job cancelled.
    let (_, next) = h.post_json("/api/jobs", &small_job("mountain", 5)).await;
    let next = h.wait_terminal(next["id"].as_str().unwrap());
    assert_eq!(next.state, JobState::Succeeded);
    let job = h.service.job(&id).unwrap();
    assert_eq!(job.state, JobState::Cancelled);
    assert!(job.result_ref.is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn worker_pool_bounds_running_jobs() {
    for workers in [1, 2] {
        let h = Harness::new(workers);
        let mut ids = Vec::new();
        for _ in 0..4 {
            let (_, job) = h.post_json("/api/jobs", &small_job("coast", 40)).await;
            ids.push(job["id"].as_str().unwrap().to_string());
        }
        let mut observed_max = 0;
        while !h.service.jobs().iter().all(|j| j.state.is_terminal()) {
            let running = h.service.jobs().iter().filter(|j| j.state == JobState::Running).count();
            observed_max = observed_max.max(running);
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        assert!(observed_max <= workers);
        assert!(h.service.peak_running() <= workers);
        for id in &ids {
            assert_eq!(h.service.job(id).unwrap().state, JobState::Succeeded);
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_fails_interrupted_jobs_and_requeues_queued_ones() {
    let dir = tempfile::tempdir().unwrap();
    let (running_id, queued_id, done_id) = {
        let svc = start(dir.path(), 0);
        let req = serde_json::from_value(small_job("mountain", 5)).unwrap();
        let a = svc.create_job(serde_json::from_value(small_job("mountain", 5)).unwrap()).unwrap();
        let b = svc.create_job(req).unwrap();
        let c = svc.create_job(serde_json::from_value(small_job("mountain", 5)).unwrap()).unwrap();
        svc.cancel_job(&c.id).unwrap();
        // Simulate a crash mid-run.
        let mut crashed = a.clone();
        crashed.state = JobState::Running;
        svc.store().put_job(&crashed).unwrap();
        svc.shutdown();
        (a.id, b.id, c.id)
    };

    let svc = start(dir.path(), 0);
    let a = svc.job(&running_id).unwrap();
    assert_eq!(a.state, JobState::Failed);
    assert_eq!(a.error.as_deref(), Some("interrupted"));
    assert_eq!(svc.job(&queued_id).unwrap().state, JobState::Queued);
    assert_eq!(svc.job(&done_id).unwrap().state, JobState::Cancelled);
    assert_eq!(svc.styles().len(), 3, "styles are not seeded twice");
    svc.shutdown();
    drop(svc);

    let h = Harness {
        service: start(dir.path(), 1),
        dir,
    };
    let b = h.wait_terminal(&queued_id);
    assert_eq!(b.state, JobState::Succeeded);
    assert_eq!(h.service.job(&running_id).unwrap().state, JobState::Failed);
}

#[tokio::test(flavor = "multi_thread")]
async fn divergent_job_fails_with_the_reason() {
    let h = Harness::new(1);
    let mut body = small_job("mountain", 20);
    body["transfer_params"] = serde_json::json!({"iterations": 20, "lr0": 1e6});
    let (_, job) = h.post_json("/api/jobs", &body).await;
    let job = h.wait_terminal(job["id"].as_str().unwrap());
    assert_eq!(job.state, JobState::Failed);
    assert!(job.error.unwrap().contains("diverged"));
}
