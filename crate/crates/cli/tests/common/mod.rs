#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlicheck_core::testkit::{FixtureServer, Route};

pub const PAGES: [(&str, &str); 3] = [
    ("acme.notes", "acme_notes.html"),
    ("bolt.games", "bolt_games.html"),
    ("cedar.health", "cedar_health.html"),
];

/// Fixed so reports and metadata do not depend on the wall clock.
pub const EPOCH: &str = "1700000000";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn nlicheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlicheck"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", EPOCH)
        .env_remove("NLICHECK_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn nlicheck")
}

pub fn ok(args: &[&str]) -> String {
    let out = nlicheck(args);
    assert!(
        out.status.success(),
        "nlicheck {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Serves the three fixture policies and writes a manifest pointing at them.
pub fn serve_policies(dir: &Path) -> (FixtureServer, PathBuf) {
    let mut routes = HashMap::new();
    for (id, file) in PAGES {
        let body = std::fs::read(fixtures().join("pages").join(file)).unwrap();
        routes.insert(format!("/{id}/privacy"), Route::html(body));
    }
    let server = FixtureServer::start(routes).unwrap();
    let entries: Vec<_> = PAGES
        .iter()
        .map(|(id, _)| serde_json::json!({"app_id": id, "policy_url": server.url(&format!("/{id}/privacy"))}))
        .collect();
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    (server, manifest)
}

/// A few seconds of training on the built-in toy corpus.
pub fn toy_checkpoint(dir: &Path, seed: &str) -> PathBuf {
    let ckpt = dir.join(format!("toy-{seed}.ckpt"));
    ok(&[
        "--seed", seed, "train", "--dataset", "toy", "--limit", "120", "--epochs", "2", "--batch-size", "16", "--out",
        p(&ckpt),
    ]);
    ckpt
}
