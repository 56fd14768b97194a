//! Leading and second singular triples of sparse transition matrices.
//!
//! The top two eigenpairs of the Gram operator (`PᵀP` or `PPᵀ`, whichever
//! side is smaller) are found with a block thick-restart Lanczos iteration
//! under full reorthogonalization. Only matrix-vector products with `P` and
//! `Pᵀ` touch the matrix. The block size of two keeps the iteration correct
//! when the top singular value is repeated, as it is for permutations and
//! for block-diagonal matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transfer::TransitionMatrix;

/// Largest residual accepted for a returned pair.
pub const RESIDUAL_BOUND: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

const BASIS: usize = 64;
const BLOCK: usize = 2;
const PAR_MIN: usize = 8192;

/// Top two singular triples of a matrix, indexed like the matrix.
///
/// Rows and columns dropped as empty carry zeros in every vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularPair {
    pub sigma1: f64,
    pub sigma2: f64,
    pub left1: Vec<f64>,
    pub right1: Vec<f64>,
    pub left2: Vec<f64>,
    pub right2: Vec<f64>,
    /// `max(‖P r2 − σ2 l2‖, ‖Pᵀ l2 − σ2 r2‖)`.
    pub residual: f64,
    /// Set when `sigma1 − sigma2 < tol`; the second vectors are then one
    /// arbitrary choice from a shared singular subspace.
    pub degenerate: bool,
    /// Gram-operator applications used.
    pub iterations: usize,
}

/// Second singular triple of `p` (plain matrix, no measure weighting).
pub fn second_singular(p: &TransitionMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<SingularPair> {
    let op = Compact::new(p, |_, _, v| v);
    solve(p, &op, tol, max_iter, seed)
}

/// Second singular triple of `diag(√w) P diag(1/√v)`, `v` the pushforward of
/// `w`, mapped back to unweighted coordinates (`x_i = l_i / √w_i`,
/// `y_j = r_j / √v_j`). Rows with zero weight are treated as empty.
/// The residual refers to the weighted operator.
pub fn second_singular_weighted(
    p: &TransitionMatrix,
    weights: &[f64],
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SingularPair> {
    let v = crate::transfer::push_measure(p, weights)?;
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Dimension("weights must be finite and nonnegative".into()));
    }
    let op = Compact::new(p, |i, j, x| if v[j] > 0.0 { x * (weights[i] / v[j]).sqrt() } else { 0.0 });
    let mut sp = solve(p, &op, tol, max_iter, seed)?;
    for (l, &w) in [&mut sp.left1, &mut sp.left2].into_iter().flat_map(|l| l.iter_mut().zip(weights)) {
        *l = if w > 0.0 { *l / w.sqrt() } else { 0.0 };
    }
    for r in [&mut sp.right1, &mut sp.right2] {
        for (x, &vj) in r.iter_mut().zip(&v) {
            *x = if vj > 0.0 { *x / vj.sqrt() } else { 0.0 };
        }
    }
    Ok(sp)
}

fn solve(p: &TransitionMatrix, op: &Compact, tol: f64, max_iter: usize, seed: u64) -> Result<SingularPair> {
    if !(tol > 0.0) {
        return Err(Error::Dimension(format!("tolerance must be positive, got {tol}")));
    }
    if op.rows.len() < 2 || op.cols.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need at least 2 nonempty rows and columns, have {} and {}",
            op.rows.len(),
            op.cols.len()
        )));
    }
    let right_side = op.cols.len() <= op.rows.len();
    let n = if right_side { op.cols.len() } else { op.rows.len() };
    let gram = |x: &[f64]| if right_side { op.mul_t(&op.mul(x)) } else { op.mul(&op.mul_t(x)) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = |theta: f64| 0.25 * tol * theta.max(0.0).sqrt();
    let (ritz, iterations) = top_eigenpairs(n, gram, target, max_iter, &mut rng);

    let mut triples = Vec::with_capacity(2);
    for y in ritz {
        let other = if right_side { op.mul(&y) } else { op.mul_t(&y) };
        let sigma = norm(&other);
        let other: Vec<f64> = if sigma > 0.0 { other.iter().map(|x| x / sigma).collect() } else { other };
        let (l, r) = if right_side { (other, y) } else { (y, other) };
        triples.push((sigma, l, r));
    }
    if triples[1].0 > triples[0].0 {
        triples.swap(0, 1);
    }
    let (sigma2, mut l2, mut r2) = triples.pop().unwrap();
    let (sigma1, mut l1, mut r1) = triples.pop().unwrap();
    if sigma2 <= 1e-12 * sigma1.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient(format!("second singular value {sigma2:e} is zero")));
    }
    orient(&mut l1, &mut r1);
    orient(&mut l2, &mut r2);

    let res_a: Vec<f64> = op.mul(&r2).iter().zip(&l2).map(|(a, b)| a - sigma2 * b).collect();
    let res_b: Vec<f64> = op.mul_t(&l2).iter().zip(&r2).map(|(a, b)| a - sigma2 * b).collect();
    let residual = norm(&res_a).max(norm(&res_b));
    if !(residual <= RESIDUAL_BOUND) {
        return Err(Error::NoConvergence { iterations, residual });
    }

    let expand = |local: &[f64], ids: &[usize], len: usize| {
        let mut out = vec![0.0; len];
        for (&g, &x) in ids.iter().zip(local) {
            out[g] = x;
        }
        out
    };
    let (nr, nc) = (p.n_rows(), p.n_cols());
    Ok(SingularPair {
        sigma1,
        sigma2,
        left1: expand(&l1, &op.rows, nr),
        right1: expand(&r1, &op.cols, nc),
        left2: expand(&l2, &op.rows, nr),
        right2: expand(&r2, &op.cols, nc),
        residual,
        degenerate: sigma1 - sigma2 < tol,
        iterations,
    })
}

/// Makes the largest-magnitude entry of `l` positive (first index on ties),
/// flipping `r` with it.
fn orient(l: &mut [f64], r: &mut [f64]) {
    let mut best = 0;
    for (i, x) in l.iter().enumerate() {
        if x.abs() > l[best].abs() {
            best = i;
        }
    }
    if l[best] < 0.0 {
        l.iter_mut().for_each(|x| *x = -*x);
        r.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Block thick-restart Lanczos for the two largest eigenpairs of a symmetric
/// positive semidefinite operator. Returns the two Ritz vectors (largest
/// first) and the number of operator applications.
fn top_eigenpairs(
    n: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    target: impl Fn(f64) -> f64,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, usize) {
    let m = n.min(BASIS);
    let b = BLOCK.min(n);
    let keep = (m / 2).max(2).min(m - b);
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut pending: Vec<Vec<f64>> = (0..b).map(|_| random_vec(n, rng)).collect();
    let mut iterations = 0;
    loop {
        while v.len() < m {
            let cand = if pending.is_empty() { w[v.len() - b].clone() } else { pending.remove(0) };
            let q = orthonormalize(cand, &v, rng);
            w.push(apply(&q));
            v.push(q);
            iterations += 1;
        }

        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&v[i], &w[j]) + dot(&v[j], &w[i])));
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
        let count = keep.max(2);
        let combine = |basis: &[Vec<f64>], k: usize| {
            let s = eig.eigenvectors.column(order[k]);
            let mut out = vec![0.0; n];
            for (col, &c) in basis.iter().zip(s.iter()) {
                axpy(c, col, &mut out);
            }
            out
        };
        let ys: Vec<Vec<f64>> = (0..count).map(|k| combine(&v, k)).collect();
        let gys: Vec<Vec<f64>> = (0..count).map(|k| combine(&w, k)).collect();
        let converged = (0..2).all(|k| {
            let theta = eig.eigenvalues[order[k]];
            let r: Vec<f64> = gys[k].iter().zip(&ys[k]).map(|(g, y)| g - theta * y).collect();
            norm(&r) <= target(theta)
        });
        if converged || iterations >= max_iter {
            return (ys.into_iter().take(2).collect(), iterations);
        }

        // Lanczos residuals of the last block continue the Krylov space.
        pending = (m - b..m)
            .map(|c| {
                let mut r = w[c].clone();
                for (i, vi) in v.iter().enumerate() {
                    axpy(-h[(i, c)], vi, &mut r);
                }
                r
            })
            .collect();
        v = ys.into_iter().take(keep).collect();
        w = gys.into_iter().take(keep).collect();
    }
}

/// Classical Gram-Schmidt applied twice; replaces a vector that vanishes
/// against the basis with a fresh random one.
fn orthonormalize(mut x: Vec<f64>, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let before = norm(&x);
        for _ in 0..2 {
            let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, &x)).collect();
            for (q, c) in basis.iter().zip(coeffs) {
                axpy(-c, q, &mut x);
            }
        }
        let after = norm(&x);
        if after > 1e-10 * before && after > 0.0 {
            x.iter_mut().for_each(|e| *e /= after);
            return x;
        }
        x = random_vec(x.len(), rng);
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Matrix with empty rows and columns removed, stored both row- and
/// column-major so both products parallelize without write conflicts.
struct Compact {
    rows: Vec<usize>,
    cols: Vec<usize>,
    csr: Sparse,
    csc: Sparse,
}

struct Sparse {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Sparse {
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.ptr.len() - 1;
        let row = |i: usize| -> f64 { (self.ptr[i]..self.ptr[i + 1]).map(|k| self.val[k] * x[self.idx[k]]).sum() };
        if n >= PAR_MIN {
            (0..n).into_par_iter().with_min_len(1024).map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }
}

impl Compact {
    fn new(p: &TransitionMatrix, scale: impl Fn(usize, usize, f64) -> f64) -> Self {
        let entries: Vec<(usize, usize, f64)> = p
            .entries()
            .map(|(i, j, v)| (i, j, scale(i, j, v)))
            .filter(|e| e.2 != 0.0)
            .collect();
        let mut row_used = vec![false; p.n_rows()];
        let mut col_used = vec![false; p.n_cols()];
        for &(i, j, _) in &entries {
            row_used[i] = true;
            col_used[j] = true;
        }
        let ids = |used: &[bool]| -> (Vec<usize>, Vec<usize>) {
            let mut local = vec![usize::MAX; used.len()];
            let mut global = Vec::new();
            for (g, &u) in used.iter().enumerate() {
                if u {
                    local[g] = global.len();
                    global.push(g);
                }
            }
            (global, local)
        };
        let (rows, row_local) = ids(&row_used);
        let (cols, col_local) = ids(&col_used);
        let local: Vec<(usize, usize, f64)> =
            entries.iter().map(|&(i, j, v)| (row_local[i], col_local[j], v)).collect();
        let csr = build_sparse(rows.len(), local.iter().map(|&(i, j, v)| (i, j, v)));
        let csc = build_sparse(cols.len(), local.iter().map(|&(i, j, v)| (j, i, v)));
        Compact { rows, cols, csr, csc }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.csr.mul(x)
    }

    fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        self.csc.mul(y)
    }
}

/// Compressed storage from `(major, minor, value)` triples; stable within a
/// major index, so minor order follows input order.
fn build_sparse(n_major: usize, triples: impl Iterator<Item = (usize, usize, f64)> + Clone) -> Sparse {
    let mut ptr = vec![0usize; n_major + 1];
    for (a, _, _) in triples.clone() {
        ptr[a + 1] += 1;
    }
    for a in 0..n_major {
        ptr[a + 1] += ptr[a];
    }
    let nnz = ptr[n_major];
    let mut idx = vec![0usize; nnz];
    let mut val = vec![0.0; nnz];
    let mut fill = ptr.clone();
    for (a, b, v) in triples {
        idx[fill[a]] = b;
        val[fill[a]] = v;
        fill[a] += 1;
    }
    Sparse { ptr, idx, val }
}
