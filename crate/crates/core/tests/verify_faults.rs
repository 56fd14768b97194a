//! verify_bundle on fresh and hand-corrupted bundles.

mod common;

use std::path::Path;

use relcoh::pipeline::{run_pipeline, MATRIX_FILE, TREE_FILE};
use relcoh::verify::verify_bundle;

fn fresh(dir: &Path) -> std::path::PathBuf {
    run_pipeline(&common::small_gyre(&dir.join("bundle"))).unwrap()
}

fn failing(report: &relcoh::verify::VerifyReport) -> Vec<&str> {
    report.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect()
}

#[test]
fn fresh_bundle_passes_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let report = verify_bundle(&fresh(dir.path())).unwrap();
    assert!(report.is_ok(), "{}", report.to_text());
    for name in ["dimensions", "nonnegativity", "row-sums", "nesting", "stopping", "rho", "labels"] {
        assert!(report.check(name).is_some(), "missing check {name}");
    }
}

#[test]
fn corrupted_matrix_row_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = fresh(dir.path());
    let path = out.join(MATRIX_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // First entry line of row 7.
    let k = lines.iter().position(|l| l.starts_with("7 ")).unwrap();
    let mut t: Vec<String> = lines[k].split_whitespace().map(str::to_string).collect();
    let v: f64 = t[2].parse().unwrap();
    t[2] = format!("{:?}", v + 0.25);
    lines[k] = t.join(" ");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let report = verify_bundle(&out).unwrap();
    assert!(failing(&report).contains(&"row-sums"));
    let rows = &report.check("row-sums").unwrap().failures;
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("row 7:"), "{rows:?}");
}

#[test]
fn negative_entry_fails_nonnegativity() {
    let dir = tempfile::tempdir().unwrap();
    let out = fresh(dir.path());
    let path = out.join(MATRIX_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let k = text.lines().position(|l| l.starts_with("3 ")).unwrap();
    let patched: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(n, l)| {
            if n == k {
                let t: Vec<&str> = l.split_whitespace().collect();
                format!("{} {} -0.5", t[0], t[1])
            } else {
                l.to_string()
            }
        })
        .collect();
    std::fs::write(&path, patched.join("\n") + "\n").unwrap();
    let report = verify_bundle(&out).unwrap();
    assert!(failing(&report).contains(&"nonnegativity"));
}

#[test]
fn internal_node_below_rho0_fails_stopping() {
    let dir = tempfile::tempdir().unwrap();
    let out = fresh(dir.path());
    let path = out.join(TREE_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let root = text.lines().find(|l| l.starts_with("node label=root")).unwrap();
    assert!(root.contains("status=split"), "root must be internal: {root}");
    let start = root.find("rho_star=").unwrap() + "rho_star=".len();
    let end = start + root[start..].find(' ').unwrap();
    let edited = format!("{}0.5{}", &root[..start], &root[end..]);
    std::fs::write(&path, text.replace(root, &edited)).unwrap();

    let report = verify_bundle(&out).unwrap();
    assert_eq!(failing(&report), ["stopping"], "{}", report.to_text());
}

#[test]
fn edited_rho_fails_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let out = fresh(dir.path());
    let path = out.join(TREE_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let child = text.lines().find(|l| l.starts_with("node label=1 ")).unwrap();
    let start = child.find(" rho=").unwrap() + " rho=".len();
    let end = start + child[start..].find(' ').unwrap();
    let v: f64 = child[start..end].parse().unwrap();
    let edited = format!("{}{:?}{}", &child[..start], v - 1e-9, &child[end..]);
    std::fs::write(&path, text.replace(child, &edited)).unwrap();
    let report = verify_bundle(&out).unwrap();
    assert_eq!(failing(&report), ["rho"]);
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(verify_bundle(&dir.path().join("nothing")).is_err());
}
