#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use terrastyle_core::heightfield::{encode_png, BitDepth};
use terrastyle_core::HeightMap;
use terrastyle_service::model::{Job, JobEvent, JobState};
use terrastyle_service::{router, JobService, ServiceConfig};
use tower::ServiceExt;

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub service: Arc<JobService>,
}

impl Harness {
    pub fn new(workers: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let service = start(dir.path(), workers);
        Self { dir, service }
    }

    pub async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = router(Arc::clone(&self.service)).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        self.call(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn get_json(&self, uri: &str) -> (StatusCode, Value) {
        let (s, b) = self.get(uri).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    pub async fn post_json(&self, uri: &str, body: &Value) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, b) = self.call(req).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    pub async fn post_empty(&self, uri: &str) -> (StatusCode, Value) {
        let (s, b) = self.call(Request::post(uri).body(Body::empty()).unwrap()).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    pub async fn upload(&self, uri: &str, text: &[(&str, &str)], file: &[u8]) -> (StatusCode, Value) {
        let (ct, body) = multipart(text, file);
        let req = Request::post(uri).header("content-type", ct).body(Body::from(body)).unwrap();
        let (s, b) = self.call(req).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    /// Reads a job's event stream to its end.
    pub async fn events(&self, id: &str) -> Vec<JobEvent> {
        let (status, body) = self.get(&format!("/api/jobs/{id}/events")).await;
        assert_eq!(status, StatusCode::OK);
        parse_sse(std::str::from_utf8(&body).unwrap())
    }

    pub fn wait_for(&self, id: &str, limit: Duration, pred: impl Fn(&Job) -> bool) -> Job {
        let start = Instant::now();
        loop {
            let job = self.service.job(id).unwrap();
            if pred(&job) {
                return job;
            }
            assert!(start.elapsed() < limit, "job {id} stuck in {:?}", job.state);
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    pub fn wait_terminal(&self, id: &str) -> Job {
        self.wait_for(id, Duration::from_secs(120), |j| j.state.is_terminal())
    }
}

pub fn start(dir: &std::path::Path, workers: usize) -> Arc<JobService> {
    let mut cfg = ServiceConfig::new(dir);
    cfg.workers = workers;
    JobService::start(cfg).unwrap()
}

pub fn multipart(text: &[(&str, &str)], file: &[u8]) -> (String, Vec<u8>) {
    let boundary = "terrastyle-test-boundary";
    let mut body = Vec::new();
    for (k, v) in text {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n{v}\r\n").bytes());
    }
    body.extend(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"map.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .bytes(),
    );
    body.extend_from_slice(file);
    body.extend(format!("\r\n--{boundary}--\r\n").bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

pub fn parse_sse(text: &str) -> Vec<JobEvent> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut name = None;
        let mut data = None;
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                name = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("data:") {
                data = Some(v.trim().to_string());
            }
        }
        if let Some(d) = data {
            let event: JobEvent = serde_json::from_str(&d).unwrap();
            assert_eq!(name.as_deref(), Some(event.name()));
            out.push(event);
        }
    }
    out
}

pub fn gray_png(w: usize, h: usize) -> Vec<u8> {
    let map = HeightMap::from_fn(w, h, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0);
    encode_png(&map, BitDepth::Eight).unwrap()
}

pub fn rgb_png(w: u32, h: u32) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().unwrap();
    writer.write_image_data(&vec![90u8; (w * h * 3) as usize]).unwrap();
    writer.finish().unwrap();
    out
}

/// A job that finishes in a second or two: a 32x32 Perlin content map.
pub fn small_job(style: &str, iterations: usize) -> Value {
    json!({
        "noise_config": {"method": "perlin", "seed": 3, "width": 32, "height": 32, "base_freq": 0.05},
        "style_id": style,
        "transfer_params": {"iterations": iterations, "progress_every": 10, "first_step_rms": 2.55}
    })
}

pub fn state(v: &Value) -> JobState {
    serde_json::from_value(v["state"].clone()).unwrap()
}
