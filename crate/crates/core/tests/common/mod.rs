#![allow(dead_code)]

use std::path::{Path, PathBuf};

use relcoh::pipeline::RunConfig;

/// A small closed double-gyre run that finishes in about a second.
pub fn small_gyre(out: &Path) -> RunConfig {
    let text = format!(
        r#"
[flow]
kind = "double-gyre"
tau = 2.0
step = 0.05
params = {{ A = 0.25, epsilon = 0.25, omega = 6.283185307179586 }}

[domain]
rect = [0.0, 2.0, 0.0, 1.0]
cells = [12, 6]

[run]
n_points = 20000
seed = 11
max_depth = 3
out = {:?}
"#,
        out
    );
    RunConfig::from_toml(&text, Path::new(".")).unwrap()
}

/// Every file in a bundle directory, sorted by name, with its bytes.
pub fn bundle_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    out.sort();
    out
}
