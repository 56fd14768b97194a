//! Consistency checks over a written bundle.

use std::fmt::Write as _;
use std::path::Path;

use crate::coherence::coherence_ratio;
use crate::error::{Error, Result};
use crate::hierarchy::{assign_labels, labels_from_text, HierarchyTree};
use crate::mesh::Partition;
use crate::pipeline::{
    read_partition, DOMAIN_MESH_FILE, IMAGE_MESH_FILE, LABELS_X_FILE, LABELS_Y_FILE, MATRIX_FILE, OUTFLOW_FILE,
    TREE_FILE,
};
use crate::transfer::TransitionMatrix;

/// Tolerance for row sums and recomputed coherence ratios.
pub const TOL: f64 = 1e-12;
/// At most this many failures are listed per check.
const MAX_DETAILS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One `PASS name` / `FAIL name` line per check, failures indented below.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            writeln!(s, "{} {}", if c.passed() { "PASS" } else { "FAIL" }, c.name).unwrap();
            for f in c.failures.iter().take(MAX_DETAILS) {
                writeln!(s, "    {f}").unwrap();
            }
            if c.failures.len() > MAX_DETAILS {
                writeln!(s, "    ... {} more", c.failures.len() - MAX_DETAILS).unwrap();
            }
        }
        s
    }
}

struct Loaded {
    domain: Partition,
    image: Partition,
    matrix: TransitionMatrix,
    tree: HierarchyTree,
    labels_x: Vec<Option<String>>,
    labels_y: Vec<Option<String>>,
}

fn load(dir: &Path) -> Result<Loaded> {
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| Error::io(dir.join(name), e));
    Ok(Loaded {
        domain: read_partition(&dir.join(DOMAIN_MESH_FILE))?,
        image: read_partition(&dir.join(IMAGE_MESH_FILE))?,
        matrix: TransitionMatrix::load(&dir.join(MATRIX_FILE), &dir.join(OUTFLOW_FILE))?,
        tree: HierarchyTree::load(&dir.join(TREE_FILE))?,
        labels_x: labels_from_text(&read(LABELS_X_FILE)?),
        labels_y: labels_from_text(&read(LABELS_Y_FILE)?),
    })
}

/// Loads the bundle in `dir` and runs every check. Only I/O and parse
/// failures are errors; violated invariants are reported as failed checks.
pub fn verify_bundle(dir: &Path) -> Result<VerifyReport> {
    let b = load(dir)?;
    let m = &b.matrix;
    let mut report = VerifyReport::default();
    let mut add = |name, failures| report.checks.push(Check { name, failures });

    let mut dims = Vec::new();
    if m.n_rows() != b.domain.len() {
        dims.push(format!("matrix has {} rows, domain has {} cells", m.n_rows(), b.domain.len()));
    }
    if m.n_cols() != b.image.len() {
        dims.push(format!("matrix has {} columns, image has {} cells", m.n_cols(), b.image.len()));
    }
    if b.labels_x.len() != m.n_rows() || b.labels_y.len() != m.n_cols() {
        dims.push(format!(
            "label files list {} and {} cells for a {}x{} matrix",
            b.labels_x.len(),
            b.labels_y.len(),
            m.n_rows(),
            m.n_cols()
        ));
    }
    let dims_ok = dims.is_empty();
    add("dimensions", dims);
    if !dims_ok {
        return Ok(report);
    }

    let mut neg = Vec::new();
    for (i, j, v) in m.entries() {
        if !(v >= 0.0 && v.is_finite()) {
            neg.push(format!("entry ({i}, {j}) = {v:?}"));
        }
    }
    for (i, &o) in m.outflow().iter().enumerate() {
        if !(o >= 0.0 && o.is_finite()) {
            neg.push(format!("row {i} outflow = {o:?}"));
        }
    }
    add("nonnegativity", neg);

    let mut sums = Vec::new();
    for i in 0..m.n_rows() {
        let s = m.row_sum(i) + m.outflow()[i];
        if m.is_occupied(i) {
            if (s - 1.0).abs() > TOL {
                sums.push(format!("row {i}: sum plus outflow = {s:?}"));
            }
        } else if s != 0.0 {
            sums.push(format!("row {i} is empty but sums to {s:?}"));
        }
    }
    add("row-sums", sums);

    add("nesting", b.tree.nesting_violations());
    add("stopping", b.tree.stopping_violations());

    let w = b.domain.weights();
    let mut rho = Vec::new();
    for n in b.tree.nodes() {
        let Some(stored) = n.rho else { continue };
        match coherence_ratio(m, w, &n.rows, &n.cols) {
            Ok(r) if (r - stored).abs() <= TOL => {}
            Ok(r) => rho.push(format!("node {}: stored {stored:?}, recomputed {r:?}", n.label)),
            Err(e) => rho.push(format!("node {}: {e}", n.label)),
        }
    }
    add("rho", rho);

    let (lx, ly) = assign_labels(&b.tree, m.n_rows(), m.n_cols());
    let mut labels = Vec::new();
    for (side, want, got) in [("x", &lx, &b.labels_x), ("y", &ly, &b.labels_y)] {
        for (k, (a, g)) in want.iter().zip(got.iter()).enumerate() {
            if a != g {
                labels.push(format!("labels_{side} cell {k}: file has {g:?}, tree gives {a:?}"));
            }
        }
    }
    add("labels", labels);
    Ok(report)
}
