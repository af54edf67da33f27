//! Flat on-disk store: `jobs/<id>.json`, `styles/<id>.json`, and
//! `artifacts/<id>.png` with an `artifacts/<id>.json` descriptor.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::Serialize;
use terrastyle_core::heightfield::{decode_heightmap, encode_png, BitDepth};
use terrastyle_core::HeightMap;

use crate::error::{ServiceError, ServiceResult};
use crate::model::{Artifact, ArtifactKind, Job, StyleEntry};

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Ids reach the file system, so only the characters of generated ids pass.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> ServiceResult<Self> {
        let root = root.into();
        for dir in ["jobs", "styles", "artifacts"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(|e| ServiceError::io(&p, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, dir: &str, id: &str, ext: &str) -> Option<PathBuf> {
        valid_id(id).then(|| self.root.join(dir).join(format!("{id}.{ext}")))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> ServiceResult<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| ServiceError::io(path, e))
    }

    fn write_json<T: Serialize>(&self, dir: &str, id: &str, value: &T) -> ServiceResult<()> {
        let path = self.path(dir, id, "json").ok_or_else(|| ServiceError::BadId(id.to_string()))?;
        Self::write_atomic(&path, &serde_json::to_vec_pretty(value)?)
    }

    fn read_all<T: DeserializeOwned>(&self, dir: &str) -> ServiceResult<Vec<T>> {
        let dir = self.root.join(dir);
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| ServiceError::io(&dir, e))? {
            let path = entry.map_err(|e| ServiceError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let bytes = fs::read(&path).map_err(|e| ServiceError::io(&path, e))?;
                out.push(serde_json::from_slice(&bytes)?);
            }
        }
        Ok(out)
    }

    pub fn put_job(&self, job: &Job) -> ServiceResult<()> {
        self.write_json("jobs", &job.id, job)
    }

    /// All persisted jobs, oldest first.
    pub fn load_jobs(&self) -> ServiceResult<Vec<Job>> {
        let mut jobs: Vec<Job> = self.read_all("jobs")?;
        jobs.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(jobs)
    }

    pub fn put_style(&self, style: &StyleEntry) -> ServiceResult<()> {
        self.write_json("styles", &style.id, style)
    }

    pub fn load_styles(&self) -> ServiceResult<Vec<StyleEntry>> {
        let mut styles: Vec<StyleEntry> = self.read_all("styles")?;
        styles.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(styles)
    }

    /// Stores `map` as a 16-bit PNG artifact.
    pub fn put_map(&self, kind: ArtifactKind, map: &HeightMap) -> ServiceResult<Artifact> {
        let png = encode_png(map, BitDepth::Sixteen)?;
        self.put_png(kind, map.width(), map.height(), &png)
    }

    fn put_png(&self, kind: ArtifactKind, width: usize, height: usize, png: &[u8]) -> ServiceResult<Artifact> {
        let artifact = Artifact {
            id: new_id(),
            kind,
            width,
            height,
            created_at: Utc::now(),
        };
        let path = self.path("artifacts", &artifact.id, "png").expect("generated id");
        Self::write_atomic(&path, png)?;
        self.write_json("artifacts", &artifact.id, &artifact)?;
        Ok(artifact)
    }

    pub fn artifact(&self, id: &str) -> Option<Artifact> {
        let bytes = fs::read(self.path("artifacts", id, "json")?).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn artifact_path(&self, id: &str) -> Option<PathBuf> {
        self.path("artifacts", id, "png").filter(|p| p.is_file())
    }

    pub fn artifact_bytes(&self, id: &str) -> Option<Vec<u8>> {
        fs::read(self.artifact_path(id)?).ok()
    }

    pub fn load_map(&self, id: &str) -> ServiceResult<HeightMap> {
        let bytes = self.artifact_bytes(id).ok_or_else(|| ServiceError::MissingArtifact(id.to_string()))?;
        Ok(decode_heightmap(&bytes)?)
    }

    pub fn artifacts(&self) -> ServiceResult<Vec<Artifact>> {
        self.read_all("artifacts")
    }

    pub fn delete_artifact(&self, id: &str) -> ServiceResult<()> {
        for ext in ["png", "json"] {
            if let Some(p) = self.path("artifacts", id, ext) {
                match fs::remove_file(&p) {
                    Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(ServiceError::io(&p, e)),
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let map = HeightMap::from_fn(5, 3, |r, c| (r * 5 + c) as f64 / 14.0);
        let a = store.put_map(ArtifactKind::Result, &map).unwrap();
        assert_eq!((a.width, a.height), (5, 3));
        assert_eq!(store.artifact(&a.id).unwrap(), a);
        let back = store.load_map(&a.id).unwrap();
        assert!(back.values().iter().zip(map.values()).all(|(x, y)| (x - y).abs() <= 1.0 / 65535.0));
        assert_eq!(store.artifacts().unwrap().len(), 1);
        store.delete_artifact(&a.id).unwrap();
        assert!(store.artifact(&a.id).is_none());
    }

    #[test]
    fn hostile_ids_never_reach_the_file_system() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for id in ["../jobs/x", "", "a/b", "..", "x.png"] {
            assert!(store.artifact(id).is_none());
            assert!(store.artifact_path(id).is_none());
        }
    }
}
