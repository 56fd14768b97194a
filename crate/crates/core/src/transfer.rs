//! Ulam-Galerkin transition matrices estimated by counting test-point
//! transitions between cells.
//!
//! Entry `(i, j)` is the fraction of points starting in domain cell `i` that
//! end in image cell `j`. The denominator counts every point that starts in
//! `i`, including those whose image leaves the image partition; that mass is
//! kept per row as outflow, so `Σ_j P_ij + outflow_i = 1` on occupied rows.
//! Integer counts are kept alongside the values, which makes the row
//! identity checkable in exact arithmetic.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::mesh::CellMap;

const CHUNK: usize = 1 << 16;

/// Sparse row-substochastic matrix in compressed-row form.
///
/// `row_ids` and `col_ids` give the index of each local row and column in
/// the matrix this one was restricted from (identity for an assembled one).
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    counts: Vec<u64>,
    row_counts: Vec<u64>,
    outflow_counts: Vec<u64>,
    outflow: Vec<f64>,
    row_ids: Vec<usize>,
    col_ids: Vec<usize>,
}

fn data_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl TransitionMatrix {
    /// Assembles a matrix from integer transition counts.
    ///
    /// `triples` must be sorted by `(row, col)` without duplicates.
    pub fn from_counts(
        n_rows: usize,
        n_cols: usize,
        triples: &[(usize, usize, u64)],
        outflow_counts: Vec<u64>,
    ) -> Result<Self> {
        if outflow_counts.len() != n_rows {
            return Err(Error::Dimension(format!("{} outflow counts for {n_rows} rows", outflow_counts.len())));
        }
        let mut row_counts = outflow_counts.clone();
        let mut row_ptr = vec![0usize; n_rows + 1];
        for w in triples.windows(2) {
            if (w[0].0, w[0].1) >= (w[1].0, w[1].1) {
                return Err(Error::Dimension("count triples are not sorted and unique".into()));
            }
        }
        for &(i, j, c) in triples {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside {n_rows}x{n_cols}")));
            }
            row_counts[i] += c;
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = triples.iter().map(|t| t.1).collect();
        let counts: Vec<u64> = triples.iter().map(|t| t.2).collect();
        let values = triples.iter().map(|&(i, _, c)| c as f64 / row_counts[i] as f64).collect();
        let outflow = outflow_counts
            .iter()
            .zip(&row_counts)
            .map(|(&o, &n)| if n == 0 { 0.0 } else { o as f64 / n as f64 })
            .collect();
        Ok(TransitionMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            counts,
            row_counts,
            outflow_counts,
            outflow,
            row_ids: (0..n_rows).collect(),
            col_ids: (0..n_cols).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Column indices and integer counts of row `i`.
    pub fn row_entry_counts(&self, i: usize) -> (&[usize], &[u64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.counts[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// `(row, col, value)` for every stored entry, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// Points observed starting in each row.
    pub fn row_counts(&self) -> &[u64] {
        &self.row_counts
    }

    pub fn outflow_counts(&self) -> &[u64] {
        &self.outflow_counts
    }

    pub fn outflow(&self) -> &[f64] {
        &self.outflow
    }

    /// Rows with at least one observed point.
    pub fn is_occupied(&self, i: usize) -> bool {
        self.row_counts[i] > 0
    }

    /// Rows with no samples; excluded from any coherent set.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.n_rows).filter(|&i| self.row_counts[i] == 0).collect()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    /// `P x` for a vector over columns.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `Pᵀ y` for a vector over rows.
    pub fn mul_vec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
        out
    }

    /// Column-major copy of the sparsity pattern: for each column, the rows
    /// that reach it and the matching values.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n_cols];
        for (i, j, v) in self.entries() {
            cols[j].push((i, v));
        }
        cols
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.entries() {
            d[i][j] = v;
        }
        d
    }

    /// Triplet text: a header line `n_rows n_cols nnz` then `i j value` lines.
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::from("# relcoh transition-matrix v1\n");
        writeln!(s, "{} {} {}", self.n_rows, self.n_cols, self.nnz()).unwrap();
        for (i, j, v) in self.entries() {
            writeln!(s, "{i} {j} {v:?}").unwrap();
        }
        s
    }

    /// Outflow text: a header line `n_rows` then `i row_count outflow_count outflow`.
    pub fn to_outflow_text(&self) -> String {
        let mut s = String::from("# relcoh outflow v1\n");
        writeln!(s, "{}", self.n_rows).unwrap();
        for i in 0..self.n_rows {
            writeln!(s, "{i} {} {} {:?}", self.row_counts[i], self.outflow_counts[i], self.outflow[i]).unwrap();
        }
        s
    }

    pub fn save(&self, matrix_path: &Path, outflow_path: &Path) -> Result<()> {
        std::fs::write(matrix_path, self.to_triplet_text()).map_err(|e| Error::io(matrix_path, e))?;
        std::fs::write(outflow_path, self.to_outflow_text()).map_err(|e| Error::io(outflow_path, e))
    }

    pub fn load(matrix_path: &Path, outflow_path: &Path) -> Result<Self> {
        let m = std::fs::read_to_string(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
        let o = std::fs::read_to_string(outflow_path).map_err(|e| Error::io(outflow_path, e))?;
        Self::parse(&m, matrix_path, &o, outflow_path)
    }

    /// Parses the triplet and outflow files. Stored values are kept exactly
    /// as written; integer counts are reconstructed from them.
    pub fn parse(matrix: &str, matrix_origin: &Path, outflow: &str, outflow_origin: &Path) -> Result<Self> {
        let mlines = data_lines(matrix);
        let olines = data_lines(outflow);
        let merr = |n: usize, msg: String| Error::parse(matrix_origin, n, msg);
        let oerr = |n: usize, msg: String| Error::parse(outflow_origin, n, msg);

        let (hn, header) = *mlines.first().ok_or_else(|| merr(0, "empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| merr(hn, format!("bad header token `{t}`"))))
            .collect::<Result<_>>()?;
        let [n_rows, n_cols, nnz] = dims[..] else {
            return Err(merr(hn, "header must be `n_rows n_cols nnz`".into()));
        };
        if mlines.len() - 1 != nnz {
            return Err(merr(hn, format!("header says {nnz} entries, file has {}", mlines.len() - 1)));
        }

        let (on, oheader) = *olines.first().ok_or_else(|| oerr(0, "empty outflow file".into()))?;
        let orows: usize = oheader.parse().map_err(|_| oerr(on, "bad row count".into()))?;
        if orows != n_rows || olines.len() - 1 != n_rows {
            return Err(oerr(on, format!("outflow file must list {n_rows} rows")));
        }
        let mut row_counts = vec![0u64; n_rows];
        let mut outflow_counts = vec![0u64; n_rows];
        let mut outflow_vals = vec![0.0; n_rows];
        for (k, &(n, line)) in olines[1..].iter().enumerate() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 4 {
                return Err(oerr(n, "expected `i row_count outflow_count outflow`".into()));
            }
            let i: usize = t[0].parse().map_err(|_| oerr(n, "bad row index".into()))?;
            if i != k {
                return Err(oerr(n, format!("rows must be listed in order, expected {k}")));
            }
            row_counts[i] = t[1].parse().map_err(|_| oerr(n, "bad row count".into()))?;
            outflow_counts[i] = t[2].parse().map_err(|_| oerr(n, "bad outflow count".into()))?;
            outflow_vals[i] = t[3].parse().map_err(|_| oerr(n, "bad outflow value".into()))?;
        }

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut counts = Vec::with_capacity(nnz);
        let mut last: Option<(usize, usize)> = None;
        for &(n, line) in &mlines[1..] {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(merr(n, "expected `i j value`".into()));
            }
            let i: usize = t[0].parse().map_err(|_| merr(n, "bad row index".into()))?;
            let j: usize = t[1].parse().map_err(|_| merr(n, "bad column index".into()))?;
            let v: f64 = t[2].parse().map_err(|_| merr(n, "bad value".into()))?;
            if i >= n_rows || j >= n_cols {
                return Err(merr(n, format!("entry ({i}, {j}) outside {n_rows}x{n_cols}")));
            }
            if last.is_some_and(|l| l >= (i, j)) {
                return Err(merr(n, "entries must be sorted by (row, column) without duplicates".into()));
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            counts.push((v * row_counts[i] as f64).round().max(0.0) as u64);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(TransitionMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            counts,
            row_counts,
            outflow_counts,
            outflow: outflow_vals,
            row_ids: (0..n_rows).collect(),
            col_ids: (0..n_cols).collect(),
        })
    }
}

/// Counts transitions of `ensemble` from `domain` cells to `image` cells.
///
/// Points that start outside every active domain cell are ignored. Points
/// whose image is outside every active image cell, or that exited a gridded
/// field, count toward their row's outflow.
pub fn build_matrix<D: CellMap, I: CellMap>(
    ensemble: &TrajectoryEnsemble,
    domain: &D,
    image: &I,
) -> Result<TransitionMatrix> {
    if ensemble.initial.len() != ensemble.final_points.len() {
        return Err(Error::Dimension("ensemble initial/final lengths differ".into()));
    }
    let n_rows = domain.n_cells();
    let n_cols = image.n_cells();
    let stride = n_cols as u64 + 1;
    let outflow_col = n_cols as u64;

    let idx: Vec<usize> = (0..ensemble.len()).collect();
    let mut keys: Vec<u64> = idx
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            chunk.iter().filter_map(|&k| {
                let row = domain.cell_of(ensemble.initial[k])? as u64;
                let col = if ensemble.exited.get(k).copied().unwrap_or(false) {
                    outflow_col
                } else {
                    image.cell_of(ensemble.final_points[k]).map_or(outflow_col, |j| j as u64)
                };
                Some(row * stride + col)
            })
        })
        .collect();
    if keys.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    keys.par_sort_unstable();

    let mut triples = Vec::new();
    let mut outflow_counts = vec![0u64; n_rows];
    let mut k = 0;
    while k < keys.len() {
        let key = keys[k];
        let mut run = 1;
        while k + run < keys.len() && keys[k + run] == key {
            run += 1;
        }
        let (i, j) = ((key / stride) as usize, key % stride);
        if j == outflow_col {
            outflow_counts[i] = run as u64;
        } else {
            triples.push((i, j as usize, run as u64));
        }
        k += run;
    }
    TransitionMatrix::from_counts(n_rows, n_cols, &triples, outflow_counts)
}

/// Pushforward of row weights: `v_j = Σ_i p_i P_ij`.
pub fn push_measure(p_matrix: &TransitionMatrix, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != p_matrix.n_rows() {
        return Err(Error::Dimension(format!("{} weights for {} rows", p.len(), p_matrix.n_rows())));
    }
    Ok(p_matrix.mul_vec_t(p))
}

/// Submatrix over `rows × cols` (local indices, sorted ascending) with the
/// original values. Mass sent to columns outside `cols` moves to outflow.
pub fn restrict(p_matrix: &TransitionMatrix, rows: &[usize], cols: &[usize]) -> Result<TransitionMatrix> {
    if rows.is_empty() {
        return Err(Error::EmptySelection("no rows selected"));
    }
    if cols.is_empty() {
        return Err(Error::EmptySelection("no columns selected"));
    }
    if rows.iter().any(|&i| i >= p_matrix.n_rows) || cols.iter().any(|&j| j >= p_matrix.n_cols) {
        return Err(Error::Dimension("selection index out of range".into()));
    }
    if rows.windows(2).any(|w| w[0] >= w[1]) || cols.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension("selections must be strictly increasing".into()));
    }
    let mut local_col = vec![usize::MAX; p_matrix.n_cols];
    for (k, &j) in cols.iter().enumerate() {
        local_col[j] = k;
    }
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    row_ptr.push(0);
    let (mut col_idx, mut values, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    let mut row_counts = Vec::with_capacity(rows.len());
    let mut outflow_counts = Vec::with_capacity(rows.len());
    let mut outflow = Vec::with_capacity(rows.len());
    for &i in rows {
        let r = p_matrix.row_ptr[i]..p_matrix.row_ptr[i + 1];
        let mut kept_count = 0u64;
        let mut dropped = 0.0;
        for k in r {
            let lj = local_col[p_matrix.col_idx[k]];
            if lj == usize::MAX {
                dropped += p_matrix.values[k];
            } else {
                col_idx.push(lj);
                values.push(p_matrix.values[k]);
                counts.push(p_matrix.counts[k]);
                kept_count += p_matrix.counts[k];
            }
        }
        row_ptr.push(col_idx.len());
        let n = p_matrix.row_counts[i];
        row_counts.push(n);
        outflow_counts.push(n.saturating_sub(kept_count));
        outflow.push(p_matrix.outflow[i] + dropped);
    }
    Ok(TransitionMatrix {
        n_rows: rows.len(),
        n_cols: cols.len(),
        row_ptr,
        col_idx,
        values,
        counts,
        row_counts,
        outflow_counts,
        outflow,
        row_ids: rows.iter().map(|&i| p_matrix.row_ids[i]).collect(),
        col_ids: cols.iter().map(|&j| p_matrix.col_ids[j]).collect(),
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Matrix with the given dense values and `denominator` samples per row.
    pub fn from_dense(rows: &[Vec<f64>], denominator: u64) -> TransitionMatrix {
        let n_rows = rows.len();
        let n_cols = rows[0].len();
        let mut triples = Vec::new();
        let mut outflow = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let mut kept = 0;
            for (j, &v) in r.iter().enumerate() {
                let c = (v * denominator as f64).round() as u64;
                if c > 0 {
                    triples.push((i, j, c));
                    kept += c;
                }
            }
            outflow.push(if r.iter().all(|&v| v == 0.0) { 0 } else { denominator.saturating_sub(kept) });
        }
        TransitionMatrix::from_counts(n_rows, n_cols, &triples, outflow).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::from_dense;
    use super::*;
    use crate::dynamics::seed_uniform;
    use crate::mesh::{Partition, Rect, TriMesh};
    use crate::Point;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ensemble(initial: Vec<Point>, f: impl Fn(Point) -> Point) -> TrajectoryEnsemble {
        let final_points = initial.iter().map(|&p| f(p)).collect();
        let n = initial.len();
        TrajectoryEnsemble { initial, final_points, exited: vec![false; n], t0: 0.0, tau: 1.0, seed: 0 }
    }

    struct Boxes(usize);

    impl CellMap for Boxes {
        fn n_cells(&self) -> usize {
            self.0
        }
        fn cell_of(&self, p: Point) -> Option<usize> {
            (0.0..1.0).contains(&p[0]).then(|| ((p[0] * self.0 as f64) as usize).min(self.0 - 1))
        }
    }

    #[test]
    fn identity_flow_gives_identity() {
        let mesh = Arc::new(TriMesh::build_uniform(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 3, 3).unwrap());
        let part = Partition::full(mesh.clone());
        let pts = seed_uniform(mesh.rect(), 5000, 1);
        let m = build_matrix(&ensemble(pts, |p| p), &part, &part).unwrap();
        for i in 0..m.n_rows() {
            for j in 0..m.n_cols() {
                assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(m.outflow().iter().all(|&o| o == 0.0));
    }

    #[test]
    fn half_translation_swaps_two_boxes() {
        let pts = seed_uniform(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 100, 4);
        let m = build_matrix(&ensemble(pts, |p| [(p[0] + 0.5).rem_euclid(1.0), p[1]]), &Boxes(2), &Boxes(2)).unwrap();
        assert_eq!(m.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn everything_leaving_is_outflow() {
        let pts = seed_uniform(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 200, 4);
        let m = build_matrix(&ensemble(pts, |p| [p[0] + 3.0, p[1]]), &Boxes(4), &Boxes(4)).unwrap();
        assert_eq!(m.nnz(), 0);
        assert!(m.outflow().iter().all(|&o| o == 1.0));
        let v = push_measure(&m, &[0.25; 4]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        let e = ensemble(vec![[5.0, 5.0]], |p| p);
        assert!(matches!(build_matrix(&e, &Boxes(3), &Boxes(3)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn exited_points_are_outflow() {
        let mut e = ensemble(vec![[0.1, 0.0], [0.2, 0.0], [0.3, 0.0], [0.6, 0.0]], |p| p);
        e.exited[1] = true;
        let m = build_matrix(&e, &Boxes(2), &Boxes(2)).unwrap();
        assert_eq!(m.row_counts(), &[3, 1]);
        assert_eq!(m.outflow_counts(), &[1, 0]);
        assert_eq!(m.get(0, 0), 2.0 / 3.0);
    }

    #[test]
    fn push_measure_examples() {
        let id = from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 10);
        assert_eq!(push_measure(&id, &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let swap = from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]], 10);
        assert_eq!(push_measure(&swap, &[0.7, 0.3]).unwrap(), vec![0.3, 0.7]);
        assert!(push_measure(&swap, &[1.0]).is_err());
    }

    #[test]
    fn restrict_examples() {
        let p = from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]], 10);
        assert_eq!(restrict(&p, &[0, 1], &[0, 1]).unwrap().to_dense(), p.to_dense());
        let r = restrict(&p, &[0], &[0]).unwrap();
        assert_eq!(r.to_dense(), vec![vec![0.9]]);
        assert!((r.outflow()[0] - 0.1).abs() < 1e-15);
        assert_eq!(r.outflow_counts(), &[1]);
        assert!(matches!(restrict(&p, &[0], &[]), Err(Error::EmptySelection(_))));
        let r = restrict(&p, &[1], &[0, 1]).unwrap();
        assert_eq!(r.row_ids(), &[1]);
    }

    #[test]
    fn file_round_trip() {
        let p = from_dense(&[vec![0.25, 0.5, 0.0], vec![0.0, 0.0, 0.0], vec![0.1, 0.2, 0.7]], 20);
        let back = TransitionMatrix::parse(
            &p.to_triplet_text(),
            Path::new("m"),
            &p.to_outflow_text(),
            Path::new("o"),
        )
        .unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn rows_are_substochastic_and_exact(seed in 0u64..1000, shift in 0.0f64..3.0) {
            let pts = seed_uniform(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 400, seed);
            let m = build_matrix(&ensemble(pts, |p| [p[0] * 0.7 + shift * 0.2, p[1]]), &Boxes(5), &Boxes(7)).unwrap();
            for i in 0..m.n_rows() {
                let (_, c) = m.row_entry_counts(i);
                prop_assert_eq!(c.iter().sum::<u64>() + m.outflow_counts()[i], m.row_counts()[i]);
                if m.is_occupied(i) {
                    prop_assert!((m.row_sum(i) + m.outflow()[i] - 1.0).abs() <= 1e-12);
                }
            }
            // restriction keeps the row identity
            let rows: Vec<usize> = (0..m.n_rows()).filter(|&i| m.is_occupied(i)).collect();
            let r = restrict(&m, &rows, &[0, 2, 3]).unwrap();
            for i in 0..r.n_rows() {
                prop_assert!((r.row_sum(i) + r.outflow()[i] - 1.0).abs() <= 1e-12);
            }
        }
    }
}
