#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub fn terrastyle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terrastyle"))
        .args(args)
        .env_remove("TERRASTYLE_WEIGHTS")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), stderr(&o));
    o
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Seeded stand-in archive shared by the tests of one test binary.
pub fn weights(tag: &str) -> &'static Path {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("seeded-{tag}.safetensors"));
        if !path.is_file() {
            ok(terrastyle(&["init-weights", "--out", p(&path)]));
        }
        path
    })
}
