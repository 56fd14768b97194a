//! The binary tree of relatively coherent pairs.
//!
//! Every node owns a row set `X` and a column set `Y` of the root matrix.
//! Splitting a node restricts the root matrix to `X × Y`, renormalizes the
//! row weights over `X`, recomputes the second singular vectors of the
//! restricted matrix and runs the threshold scan. A node whose best split
//! has `min(ρ, ρᶜ) < rho0` stays a leaf, as does one without an admissible
//! split or at `max_depth`. Labels are strings over `{1, 2}`; the root has
//! the empty label.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::coherence::optimize_split;
use crate::error::{Error, Result};
use crate::indexset::{format_ranges, parse_ranges};
use crate::spectral::{second_singular, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::transfer::{push_measure, restrict, TransitionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    /// Internal node with two children.
    Split,
    /// Best split had `rho_star < rho0`.
    BelowThreshold,
    /// No admissible split, or the spectral step failed.
    NoSplit,
    MaxDepth,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeStatus::Split => "split",
            NodeStatus::BelowThreshold => "below-threshold",
            NodeStatus::NoSplit => "no-split",
            NodeStatus::MaxDepth => "max-depth",
        })
    }
}

impl FromStr for NodeStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "split" => NodeStatus::Split,
            "below-threshold" => NodeStatus::BelowThreshold,
            "no-split" => NodeStatus::NoSplit,
            "max-depth" => NodeStatus::MaxDepth,
            other => return Err(format!("unknown node status `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyNode {
    pub label: String,
    pub depth: usize,
    /// Row (X side) and column (Y side) indices of the root matrix.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Root-measure mass of `rows`.
    pub mass: f64,
    /// Ratio of this pair within its parent; absent at the root.
    pub rho: Option<f64>,
    /// `min(ρ, ρᶜ)` of this node's best split, when one was found.
    pub rho_star: Option<f64>,
    /// Change of `ρ` under a one-step move of the row threshold.
    pub sensitivity: Option<f64>,
    pub status: NodeStatus,
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyTree {
    pub root: HierarchyNode,
    pub rho0: f64,
    pub max_depth: usize,
    pub min_mass: f64,
}

/// `parent_i / Σ_{k∈subset} parent_k` on `subset`, zero elsewhere.
pub fn relative_weights(parent: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
    let mut total = 0.0;
    for &i in subset {
        total += *parent.get(i).ok_or_else(|| Error::Dimension(format!("index {i} out of range")))?;
    }
    if !(total > 0.0) {
        return Err(Error::UndefinedMeasure);
    }
    let mut out = vec![0.0; parent.len()];
    for &i in subset {
        out[i] = parent[i] / total;
    }
    Ok(out)
}

/// Builds the tree from the root matrix `p_matrix` with row weights `p`.
pub fn build_tree(
    p_matrix: &TransitionMatrix,
    p: &[f64],
    rho0: f64,
    max_depth: usize,
    min_mass: f64,
    seed: u64,
) -> Result<HierarchyTree> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(Error::Config(format!("rho0 must lie in (0, 1), got {rho0}")));
    }
    if max_depth < 1 {
        return Err(Error::Config("max_depth must be at least 1".into()));
    }
    if !(min_mass > 0.0 && min_mass < 0.5) {
        return Err(Error::Config(format!("min_mass must lie in (0, 0.5), got {min_mass}")));
    }
    if p.len() != p_matrix.n_rows() {
        return Err(Error::Dimension(format!("{} weights for {} rows", p.len(), p_matrix.n_rows())));
    }
    let rows: Vec<usize> = (0..p_matrix.n_rows()).filter(|&i| p_matrix.is_occupied(i) && p[i] > 0.0).collect();
    let total: f64 = rows.iter().map(|&i| p[i]).sum();
    if rows.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyMatrix);
    }
    let v = push_measure(p_matrix, p)?;
    let cols: Vec<usize> = (0..p_matrix.n_cols()).filter(|&j| v[j] > 0.0).collect();
    let ctx = Context { p_matrix, p, total, rho0, max_depth, min_mass, seed };
    let root = ctx.grow(String::new(), 0, rows, cols, None);
    Ok(HierarchyTree { root, rho0, max_depth, min_mass })
}

struct Context<'a> {
    p_matrix: &'a TransitionMatrix,
    p: &'a [f64],
    total: f64,
    rho0: f64,
    max_depth: usize,
    min_mass: f64,
    seed: u64,
}

impl Context<'_> {
    fn grow(&self, label: String, depth: usize, rows: Vec<usize>, cols: Vec<usize>, rho: Option<f64>) -> HierarchyNode {
        let mass = rows.iter().map(|&i| self.p[i]).sum::<f64>() / self.total;
        let mut node = HierarchyNode {
            label,
            depth,
            rows,
            cols,
            mass,
            rho,
            rho_star: None,
            sensitivity: None,
            status: NodeStatus::MaxDepth,
            children: Vec::new(),
        };
        if depth >= self.max_depth {
            return node;
        }
        let Ok(split) = self.split(&node) else {
            node.status = NodeStatus::NoSplit;
            return node;
        };
        let (sub, split) = split;
        let rho_star = split.rho_star();
        node.rho_star = Some(rho_star);
        node.sensitivity = Some(split.sensitivity);
        if rho_star < self.rho0 {
            node.status = NodeStatus::BelowThreshold;
            return node;
        }
        node.status = NodeStatus::Split;
        let global = |local: &[usize], ids: &[usize]| local.iter().map(|&k| ids[k]).collect::<Vec<_>>();
        let (r1, c1) = (global(&split.pair.rows, sub.row_ids()), global(&split.pair.cols, sub.col_ids()));
        let (r2, c2) = (global(&split.complement.rows, sub.row_ids()), global(&split.complement.cols, sub.col_ids()));
        let (l1, l2) = (format!("{}1", node.label), format!("{}2", node.label));
        let (a, b) = rayon::join(
            || self.grow(l1, depth + 1, r1, c1, Some(split.pair.rho)),
            || self.grow(l2, depth + 1, r2, c2, Some(split.complement.rho)),
        );
        node.children = vec![a, b];
        node
    }

    fn split(&self, node: &HierarchyNode) -> Result<(TransitionMatrix, crate::coherence::Split)> {
        let sub = restrict(self.p_matrix, &node.rows, &node.cols)?;
        let local: Vec<f64> = node.rows.iter().map(|&i| self.p[i]).collect();
        let all: Vec<usize> = (0..local.len()).collect();
        let weights = relative_weights(&local, &all)?;
        let sv = second_singular(&sub, DEFAULT_TOL, DEFAULT_MAX_ITER, node_seed(self.seed, &node.label))?;
        let split = optimize_split(&sub, &weights, &sv, self.min_mass)?;
        Ok((sub, split))
    }
}

/// FNV-1a over the label, mixed with the run seed.
fn node_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in label.bytes().chain(seed.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HierarchyTree {
    /// Nodes in preorder.
    pub fn nodes(&self) -> Vec<&HierarchyNode> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn leaves(&self) -> Vec<&HierarchyNode> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    /// Deepest level reached by any node.
    pub fn depth(&self) -> usize {
        self.nodes().iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Nodes whose children overlap or escape the parent's sets.
    pub fn nesting_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in self.nodes() {
            if n.is_leaf() {
                continue;
            }
            let name = display_label(&n.label);
            if n.children.len() != 2 {
                out.push(format!("node {name} has {} children", n.children.len()));
                continue;
            }
            for (side, get) in [("rows", (|n: &HierarchyNode| &n.rows) as fn(&HierarchyNode) -> &Vec<usize>), ("cols", |n| &n.cols)] {
                let parent = get(n);
                let (a, b) = (get(&n.children[0]), get(&n.children[1]));
                if a.iter().chain(b).any(|i| parent.binary_search(i).is_err()) {
                    out.push(format!("node {name}: child {side} escape the parent"));
                }
                if a.iter().any(|i| b.binary_search(i).is_ok()) {
                    out.push(format!("node {name}: child {side} overlap"));
                }
            }
            for (k, c) in n.children.iter().enumerate() {
                if c.label != format!("{}{}", n.label, k + 1) || c.depth != n.depth + 1 {
                    out.push(format!("node {name}: child {k} is mislabeled"));
                }
            }
        }
        out
    }

    /// Internal nodes below `rho0`, leaves deeper than `max_depth`, and leaf
    /// statuses that contradict the recorded values.
    pub fn stopping_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in self.nodes() {
            let name = display_label(&n.label);
            if n.depth > self.max_depth {
                out.push(format!("node {name} at depth {} exceeds max_depth {}", n.depth, self.max_depth));
            }
            match (n.is_leaf(), n.status) {
                (false, NodeStatus::Split) => match n.rho_star {
                    Some(r) if r >= self.rho0 => {}
                    r => out.push(format!("internal node {name} has rho_star {r:?} below rho0 {}", self.rho0)),
                },
                (false, s) => out.push(format!("internal node {name} has status {s}")),
                (true, NodeStatus::Split) => out.push(format!("leaf {name} has status split")),
                (true, NodeStatus::BelowThreshold) => {
                    if !n.rho_star.is_some_and(|r| r < self.rho0) {
                        out.push(format!("leaf {name} is below-threshold with rho_star {:?}", n.rho_star));
                    }
                }
                (true, NodeStatus::MaxDepth) => {
                    if n.depth != self.max_depth {
                        out.push(format!("leaf {name} is max-depth at depth {}", n.depth));
                    }
                }
                (true, NodeStatus::NoSplit) => {}
            }
        }
        out
    }

    /// One header block then one `node key=value ...` line per node, preorder.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# relcoh tree v1\n");
        writeln!(s, "rho0 {:?}", self.rho0).unwrap();
        writeln!(s, "max_depth {}", self.max_depth).unwrap();
        writeln!(s, "min_mass {:?}", self.min_mass).unwrap();
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:?}"));
        for n in self.nodes() {
            writeln!(
                s,
                "node label={} depth={} status={} mass={:?} rho={} rho_star={} sensitivity={} rows={} cols={}",
                display_label(&n.label),
                n.depth,
                n.status,
                n.mass,
                opt(n.rho),
                opt(n.rho_star),
                opt(n.sensitivity),
                format_ranges(&n.rows),
                format_ranges(&n.cols),
            )
            .unwrap();
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |n: usize, msg: String| Error::parse(origin, n, msg);
        let mut rho0 = None;
        let mut max_depth = None;
        let mut min_mass = None;
        let mut flat: Vec<HierarchyNode> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let n = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| err(n, "expected `key value`".into()))?;
            match key {
                "rho0" => rho0 = Some(rest.trim().parse::<f64>().map_err(|e| err(n, e.to_string()))?),
                "max_depth" => max_depth = Some(rest.trim().parse::<usize>().map_err(|e| err(n, e.to_string()))?),
                "min_mass" => min_mass = Some(rest.trim().parse::<f64>().map_err(|e| err(n, e.to_string()))?),
                "node" => flat.push(parse_node(rest).map_err(|m| err(n, m))?),
                other => return Err(err(n, format!("unknown record `{other}`"))),
            }
        }
        let (Some(rho0), Some(max_depth), Some(min_mass)) = (rho0, max_depth, min_mass) else {
            return Err(err(0, "missing rho0, max_depth or min_mass".into()));
        };
        let mut iter = flat.into_iter().peekable();
        let root = iter.next().ok_or_else(|| err(0, "tree has no nodes".into()))?;
        if !root.label.is_empty() {
            return Err(err(0, "first node must be the root".into()));
        }
        let root = attach(root, &mut iter);
        if let Some(stray) = iter.next() {
            return Err(err(0, format!("node {} is not reachable from the root", display_label(&stray.label))));
        }
        Ok(HierarchyTree { root, rho0, max_depth, min_mass })
    }
}

/// Consumes the preorder successors of `node` that extend its label.
fn attach(mut node: HierarchyNode, rest: &mut std::iter::Peekable<std::vec::IntoIter<HierarchyNode>>) -> HierarchyNode {
    while let Some(next) = rest.peek() {
        let is_child = next.label.len() == node.label.len() + 1 && next.label.starts_with(&node.label);
        if !is_child {
            break;
        }
        let child = rest.next().unwrap();
        node.children.push(attach(child, rest));
    }
    node
}

fn display_label(label: &str) -> &str {
    if label.is_empty() {
        "root"
    } else {
        label
    }
}

fn parse_node(rest: &str) -> std::result::Result<HierarchyNode, String> {
    let mut fields = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad field `{tok}`"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing field `{k}`"));
    let float = |k: &str| -> std::result::Result<f64, String> { get(k)?.parse().map_err(|_| format!("bad `{k}`")) };
    let opt = |k: &str| -> std::result::Result<Option<f64>, String> {
        match get(k)? {
            "-" => Ok(None),
            v => v.parse().map(Some).map_err(|_| format!("bad `{k}`")),
        }
    };
    let label = match get("label")? {
        "root" => String::new(),
        l if l.bytes().all(|b| b == b'1' || b == b'2') => l.to_string(),
        l => return Err(format!("label `{l}` is not over {{1, 2}}")),
    };
    Ok(HierarchyNode {
        depth: get("depth")?.parse().map_err(|_| "bad `depth`".to_string())?,
        status: get("status")?.parse()?,
        mass: float("mass")?,
        rho: opt("rho")?,
        rho_star: opt("rho_star")?,
        sensitivity: opt("sensitivity")?,
        rows: parse_ranges(get("rows")?)?,
        cols: parse_ranges(get("cols")?)?,
        label,
        children: Vec::new(),
    })
}

/// Leaf label for every row (X side) and column (Y side) of the root
/// matrix; `None` where no leaf claims the cell.
pub fn assign_labels(tree: &HierarchyTree, n_rows: usize, n_cols: usize) -> (Vec<Option<String>>, Vec<Option<String>>) {
    let mut x = vec![None; n_rows];
    let mut y = vec![None; n_cols];
    for leaf in tree.leaves() {
        for &i in &leaf.rows {
            if i < n_rows {
                x[i] = Some(leaf.label.clone());
            }
        }
        for &j in &leaf.cols {
            if j < n_cols {
                y[j] = Some(leaf.label.clone());
            }
        }
    }
    (x, y)
}

/// Label file text: one line per cell, `-` for unassigned and `root` for
/// the empty label.
pub fn labels_to_text(labels: &[Option<String>]) -> String {
    let mut s = String::new();
    for l in labels {
        s.push_str(match l {
            None => "-",
            Some(l) => display_label(l),
        });
        s.push('\n');
    }
    s
}

pub fn labels_from_text(text: &str) -> Vec<Option<String>> {
    text.lines()
        .map(|l| match l.trim() {
            "-" => None,
            "root" => Some(String::new()),
            l => Some(l.to_string()),
        })
        .collect()
}
