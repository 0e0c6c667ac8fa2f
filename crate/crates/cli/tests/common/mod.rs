//! Helpers for driving the `hexembed` binary against the shipped fixture.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const CITIES: [&str; 3] = ["north", "south", "east"];

/// Files a full run leaves behind that are compared byte for byte.
pub const TERMINAL: [&str; 11] = [
    "model.json",
    "region_embeddings.csv",
    "dendrogram.csv",
    "cut.csv",
    "split_differences.csv",
    "pca.csv",
    "rgb.csv",
    "tsne.csv",
    "tsne_kl.csv",
    "clusters.geojson",
    "rgb.geojson",
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/gridville")
}

pub fn hexembed(workspace: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hexembed"))
        .arg("--workspace")
        .arg(workspace)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn input_args() -> Vec<String> {
    let dir = fixture_dir();
    CITIES
        .iter()
        .flat_map(|c| {
            [
                "--input".to_string(),
                dir.join(format!("{c}.geojson")).display().to_string(),
                "--city".to_string(),
                c.to_string(),
            ]
        })
        .collect()
}

/// `hexembed run` over the fixture with extra global flags.
pub fn run_pipeline(workspace: &Path, flags: &[&str]) -> Output {
    let inputs = input_args();
    let mut args: Vec<&str> = flags.to_vec();
    args.push("run");
    args.extend(inputs.iter().map(String::as_str));
    hexembed(workspace, &args)
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
