//! Coherence ratios and the threshold-scan optimizer.
//!
//! Candidate sets are `X(b) = {i : x_i > b}` over the left singular vector
//! and `Y(c) = {j : y_j > c}` over the right one. For each candidate `b` the
//! column threshold is the one whose normalized pushforward mass is closest
//! to `μ(X(b))`. The returned split maximizes `ρ(X, Y) + ρ(Xᶜ, Yᶜ)` over
//! candidates with at least `min_mass` on both sides.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectral::SingularPair;
use crate::transfer::{push_measure, TransitionMatrix};

const EPS: f64 = 1e-12;

/// One side of a split: row set `X`, column set `Y` and its ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentPair {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub rho: f64,
    pub rho_complement: f64,
    pub b_star: f64,
    pub c_star: f64,
}

/// A scanned threshold pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub rho_complement: f64,
    /// `μ(X(b))` under the normalized row weights.
    pub mass: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub pair: CoherentPair,
    pub complement: CoherentPair,
    /// Normalized row mass of `pair.rows`.
    pub mass: f64,
    /// Largest change of `ρ` when the row threshold moves to a neighbouring
    /// candidate.
    pub sensitivity: f64,
    pub trace: Vec<Candidate>,
}

impl Split {
    /// `min(ρ, ρᶜ)`: the split is only as coherent as its weaker pair.
    pub fn rho_star(&self) -> f64 {
        self.pair.rho.min(self.complement.rho)
    }
}

/// `Σ_{i∈rows, j∈cols} p_i P_ij / Σ_{i∈rows} p_i`.
pub fn coherence_ratio(p_matrix: &TransitionMatrix, p: &[f64], rows: &[usize], cols: &[usize]) -> Result<f64> {
    if p.len() != p_matrix.n_rows() {
        return Err(Error::Dimension(format!("{} weights for {} rows", p.len(), p_matrix.n_rows())));
    }
    let mut in_cols = vec![false; p_matrix.n_cols()];
    for &j in cols {
        *in_cols
            .get_mut(j)
            .ok_or_else(|| Error::Dimension(format!("column {j} out of range")))? = true;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in rows {
        if i >= p_matrix.n_rows() {
            return Err(Error::Dimension(format!("row {i} out of range")));
        }
        den += p[i];
        let (c, v) = p_matrix.row(i);
        let kept: f64 = c.iter().zip(v).filter(|(j, _)| in_cols[**j]).map(|(_, x)| x).sum();
        num += p[i] * kept;
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    // Row sums are at most one, so anything above is rounding.
    Ok((num / den).min(1.0))
}

/// Threshold scan over the second singular vectors.
pub fn optimize_split(p_matrix: &TransitionMatrix, p: &[f64], sv: &SingularPair, min_mass: f64) -> Result<Split> {
    if !(min_mass > 0.0 && min_mass < 0.5) {
        return Err(Error::Config(format!("min_mass must lie in (0, 0.5), got {min_mass}")));
    }
    let (nr, nc) = (p_matrix.n_rows(), p_matrix.n_cols());
    if p.len() != nr || sv.left2.len() != nr || sv.right2.len() != nc {
        return Err(Error::Dimension("weights and singular vectors must match the matrix".into()));
    }
    let scan_rows: Vec<usize> = (0..nr).filter(|&i| p_matrix.is_occupied(i) && p[i] > 0.0).collect();
    let total: f64 = scan_rows.iter().map(|&i| p[i]).sum();
    if !(total > 0.0) {
        return Err(Error::NoSplit("no occupied rows with positive weight".into()));
    }
    let mut pn = vec![0.0; nr];
    for &i in &scan_rows {
        pn[i] = p[i] / total;
    }
    let v = push_measure(p_matrix, &pn)?;
    let scan_cols: Vec<usize> = (0..nc).filter(|&j| v[j] > 0.0).collect();
    let retained: f64 = scan_cols.iter().map(|&j| v[j]).sum();
    if scan_cols.len() < 2 || scan_rows.len() < 2 {
        return Err(Error::NoSplit("fewer than two rows or columns carry mass".into()));
    }

    let mut row_order = scan_rows.clone();
    row_order.sort_by(|&a, &b| sv.left2[b].total_cmp(&sv.left2[a]));
    let mut col_order = scan_cols.clone();
    col_order.sort_by(|&a, &b| sv.right2[b].total_cmp(&sv.right2[a]));

    // Group boundaries: prefix lengths k at which the value changes, so that
    // the prefix is exactly {x > x[order[k]]}.
    let boundaries = |order: &[usize], x: &[f64]| -> Vec<usize> {
        (1..order.len()).filter(|&k| x[order[k]] < x[order[k - 1]]).collect()
    };
    let row_cuts = boundaries(&row_order, &sv.left2);
    if row_cuts.is_empty() {
        return Err(Error::NoSplit("left singular vector is constant on the scanned rows".into()));
    }
    let mut col_cuts = vec![0];
    col_cuts.extend(boundaries(&col_order, &sv.right2));
    let mut col_prefix_mass = Vec::with_capacity(col_cuts.len());
    {
        let mut acc = 0.0;
        let mut k = 0;
        for &cut in &col_cuts {
            while k < cut {
                acc += v[col_order[k]];
                k += 1;
            }
            col_prefix_mass.push(acc / retained);
        }
    }

    let columns = p_matrix.columns();
    let mut in_x = vec![false; nr];
    let mut in_y = vec![false; nc];
    let mut x_len = 0;
    let mut y_len = 0;
    let mut y_cut = 0;
    let (mut mass_x, mut kept_x, mut s_xy, mut v_y) = (0.0, 0.0, 0.0, 0.0);
    let mut trace = Vec::with_capacity(row_cuts.len());
    let mut y_lens = Vec::with_capacity(row_cuts.len());
    for &cut in &row_cuts {
        while x_len < cut {
            let i = row_order[x_len];
            in_x[i] = true;
            mass_x += pn[i];
            let (c, vals) = p_matrix.row(i);
            kept_x += pn[i] * vals.iter().sum::<f64>();
            s_xy += pn[i] * c.iter().zip(vals).filter(|(j, _)| in_y[**j]).map(|(_, x)| x).sum::<f64>();
            x_len += 1;
        }
        while y_cut + 1 < col_cuts.len()
            && (col_prefix_mass[y_cut + 1] - mass_x).abs() < (col_prefix_mass[y_cut] - mass_x).abs()
        {
            y_cut += 1;
            while y_len < col_cuts[y_cut] {
                let j = col_order[y_len];
                in_y[j] = true;
                v_y += v[j];
                s_xy += columns[j].iter().filter(|(i, _)| in_x[*i]).map(|(i, x)| pn[*i] * x).sum::<f64>();
                y_len += 1;
            }
        }
        y_lens.push(y_len);
        let mass_c = 1.0 - mass_x;
        let s_cc = retained - kept_x - v_y + s_xy;
        let rho = s_xy / mass_x;
        let rho_c = if mass_c > 0.0 { s_cc / mass_c } else { 0.0 };
        trace.push(Candidate {
            b: sv.left2[row_order[cut]],
            c: sv.right2[col_order[col_cuts[y_cut]]],
            rho: rho.clamp(0.0, 1.0),
            rho_complement: rho_c.clamp(0.0, 1.0),
            mass: mass_x,
            admissible: mass_x >= min_mass && mass_c >= min_mass && y_len > 0,
        });
    }

    let better = |a: &Candidate, b: &Candidate| -> bool {
        let (sa, sb) = (a.rho + a.rho_complement, b.rho + b.rho_complement);
        if (sa - sb).abs() > EPS {
            return sa > sb;
        }
        let (ba, bb) = ((a.mass - 0.5).abs(), (b.mass - 0.5).abs());
        if (ba - bb).abs() > EPS {
            return ba < bb;
        }
        a.b < b.b
    };
    let mut best: Option<usize> = None;
    for (k, cand) in trace.iter().enumerate() {
        if cand.admissible && best.is_none_or(|b| better(cand, &trace[b])) {
            best = Some(k);
        }
    }
    let best = best.ok_or_else(|| Error::NoSplit(format!("no candidate holds mass >= {min_mass} on both sides")))?;
    let chosen = &trace[best];
    let sensitivity = [best.checked_sub(1), Some(best + 1)]
        .into_iter()
        .flatten()
        .filter_map(|k| trace.get(k))
        .map(|c| (c.rho - chosen.rho).abs())
        .fold(0.0, f64::max);

    let x: Vec<usize> = {
        let mut s = row_order[..row_cuts[best]].to_vec();
        s.sort_unstable();
        s
    };
    let xc: Vec<usize> = {
        let mut s = row_order[row_cuts[best]..].to_vec();
        s.sort_unstable();
        s
    };
    let (y, yc) = {
        let mut y = col_order[..y_lens[best]].to_vec();
        let mut yc = col_order[y_lens[best]..].to_vec();
        y.sort_unstable();
        yc.sort_unstable();
        (y, yc)
    };
    let rho = coherence_ratio(p_matrix, p, &x, &y)?;
    let rho_c = coherence_ratio(p_matrix, p, &xc, &yc)?;
    Ok(Split {
        pair: CoherentPair {
            rows: x,
            cols: y,
            rho,
            rho_complement: rho_c,
            b_star: chosen.b,
            c_star: chosen.c,
        },
        complement: CoherentPair {
            rows: xc,
            cols: yc,
            rho: rho_c,
            rho_complement: rho,
            b_star: chosen.b,
            c_star: chosen.c,
        },
        mass: chosen.mass,
        sensitivity,
        trace,
    })
}

/// Tab-separated dump of an optimizer trace.
pub fn trace_tsv(trace: &[Candidate]) -> String {
    let mut s = String::from("b\tc\trho\trho_complement\tmass\tadmissible\n");
    for c in trace {
        writeln!(s, "{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}", c.b, c.c, c.rho, c.rho_complement, c.mass, c.admissible).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{second_singular, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use crate::transfer::testing::from_dense;
    use proptest::prelude::*;

    fn manual_sv(left2: Vec<f64>, right2: Vec<f64>) -> SingularPair {
        SingularPair {
            sigma1: 1.0,
            sigma2: 1.0,
            left1: vec![0.0; left2.len()],
            right1: vec![0.0; right2.len()],
            left2,
            right2,
            residual: 0.0,
            degenerate: true,
            iterations: 0,
        }
    }

    #[test]
    fn ratio_examples() {
        let id = from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 4);
        assert_eq!(coherence_ratio(&id, &[0.5, 0.5], &[0], &[0]).unwrap(), 1.0);
        let p = from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]], 10);
        assert_eq!(coherence_ratio(&p, &[0.5, 0.5], &[0], &[0]).unwrap(), 0.9);
        assert!((coherence_ratio(&p, &[0.5, 0.5], &[0, 1], &[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(coherence_ratio(&p, &[0.0, 0.5], &[0], &[0]), Err(Error::UndefinedRatio)));
        assert!(matches!(coherence_ratio(&p, &[0.5, 0.5], &[], &[0]), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn two_state_split() {
        let p = from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]], 10);
        let sv = second_singular(&p, DEFAULT_TOL, DEFAULT_MAX_ITER, 1).unwrap();
        let s = optimize_split(&p, &[0.5, 0.5], &sv, 0.05).unwrap();
        assert_eq!((s.pair.rows.as_slice(), s.pair.cols.as_slice()), (&[0][..], &[0][..]));
        assert_eq!((s.complement.rows.as_slice(), s.complement.cols.as_slice()), (&[1][..], &[1][..]));
        assert_eq!(s.pair.rho, 0.9);
        assert_eq!(s.complement.rho, 0.9);
    }

    #[test]
    fn block_invariant_identity() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let p = from_dense(&rows, 8);
        let sv = manual_sv(vec![0.5, 0.5, -0.5, -0.5], vec![0.5, 0.5, -0.5, -0.5]);
        let s = optimize_split(&p, &[0.25; 4], &sv, 0.05).unwrap();
        assert_eq!(s.pair.rows, vec![0, 1]);
        assert_eq!(s.pair.cols, vec![0, 1]);
        assert_eq!(s.complement.rows, vec![2, 3]);
        assert_eq!((s.pair.rho, s.complement.rho), (1.0, 1.0));
    }

    #[test]
    fn min_mass_excludes_lopsided_splits() {
        let p = from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 4);
        let sv = manual_sv(vec![1.0, -1.0], vec![1.0, -1.0]);
        assert!(optimize_split(&p, &[0.97, 0.03], &sv, 0.05).is_err());
        assert!(optimize_split(&p, &[0.97, 0.03], &sv, 0.02).is_ok());
        assert!(matches!(optimize_split(&p, &[0.5, 0.5], &sv, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn ties_go_to_the_complement() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let p = from_dense(&rows, 8);
        let sv = manual_sv(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
        let s = optimize_split(&p, &[1.0 / 3.0; 3], &sv, 0.05).unwrap();
        assert_eq!(s.pair.rows, vec![0]);
        assert_eq!(s.complement.rows, vec![1, 2]);
        assert_eq!(s.pair.b_star, 0.0);
    }

    #[test]
    fn trace_dump_has_a_row_per_candidate() {
        let p = from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]], 10);
        let sv = second_singular(&p, DEFAULT_TOL, DEFAULT_MAX_ITER, 1).unwrap();
        let s = optimize_split(&p, &[0.5, 0.5], &sv, 0.05).unwrap();
        assert_eq!(trace_tsv(&s.trace).lines().count(), 1 + s.trace.len());
    }

    fn random_rows(seed: u64, n: usize) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 4.0;
                for _ in 0..3 {
                    row[rng.random_range(0..n)] += rng.random_range(0.0..1.0);
                }
                let s: f64 = row.iter().sum::<f64>() * rng.random_range(1.0..1.3);
                row.iter().map(|x| x / s).collect()
            })
            .collect()
    }

    /// Brute-force rescan: every boundary of the left vector, column prefix
    /// chosen by direct mass comparison, ratios from `coherence_ratio`.
    fn brute_force(p: &TransitionMatrix, w: &[f64], sv: &SingularPair, min_mass: f64) -> Vec<(f64, f64, bool)> {
        let n = p.n_rows();
        let total: f64 = w.iter().sum();
        let v = push_measure(p, w).unwrap();
        let retained: f64 = v.iter().sum();
        let mut xs: Vec<f64> = sv.left2.clone();
        xs.sort_by(|a, b| b.total_cmp(a));
        xs.dedup();
        let mut ys: Vec<f64> = (0..p.n_cols()).filter(|&j| v[j] > 0.0).map(|j| sv.right2[j]).collect();
        ys.sort_by(|a, b| b.total_cmp(a));
        ys.dedup();
        xs[1..]
            .iter()
            .map(|&b| {
                let x: Vec<usize> = (0..n).filter(|&i| sv.left2[i] > b).collect();
                let xc: Vec<usize> = (0..n).filter(|&i| sv.left2[i] <= b).collect();
                let mx = x.iter().map(|&i| w[i]).sum::<f64>() / total;
                let c = *ys
                    .iter()
                    .min_by(|&&c1, &&c2| {
                        let m = |c: f64| (0..p.n_cols()).filter(|&j| sv.right2[j] > c).map(|j| v[j]).sum::<f64>();
                        ((m(c1) / retained - mx).abs()).total_cmp(&(m(c2) / retained - mx).abs())
                    })
                    .unwrap();
                let y: Vec<usize> = (0..p.n_cols()).filter(|&j| v[j] > 0.0 && sv.right2[j] > c).collect();
                let yc: Vec<usize> = (0..p.n_cols()).filter(|&j| v[j] > 0.0 && sv.right2[j] <= c).collect();
                let r = coherence_ratio(p, w, &x, &y).unwrap();
                let rc = coherence_ratio(p, w, &xc, &yc).unwrap();
                (r, rc, mx >= min_mass && 1.0 - mx >= min_mass && !y.is_empty())
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scale_invariance(seed in 0u64..1000, c in 1e-3f64..1e3) {
            let p = from_dense(&random_rows(seed, 12), 1 << 16);
            let w: Vec<f64> = (0..12).map(|i| 1.0 + (i % 5) as f64).collect();
            let cw: Vec<f64> = w.iter().map(|x| x * c).collect();
            let rows = [0, 3, 4, 9];
            let cols = [0, 1, 3, 4, 5];
            let a = coherence_ratio(&p, &w, &rows, &cols).unwrap();
            let b = coherence_ratio(&p, &cw, &rows, &cols).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn optimum_dominates_rescan(seed in 0u64..1000) {
            let n = 14;
            let p = from_dense(&random_rows(seed, n), 1 << 16);
            let w = vec![1.0 / n as f64; n];
            let sv = second_singular(&p, DEFAULT_TOL, DEFAULT_MAX_ITER, seed).unwrap();
            let s = optimize_split(&p, &w, &sv, 0.05).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.pair.rho) && (0.0..=1.0).contains(&s.complement.rho));
            prop_assert!((s.pair.rho - coherence_ratio(&p, &w, &s.pair.rows, &s.pair.cols).unwrap()).abs() <= 1e-12);
            let best = s.pair.rho + s.complement.rho;
            let scans = brute_force(&p, &w, &sv, 0.05);
            prop_assert_eq!(scans.len(), s.trace.len());
            for ((r, rc, adm), cand) in scans.iter().zip(&s.trace) {
                prop_assert!((r - cand.rho).abs() <= 1e-9 && (rc - cand.rho_complement).abs() <= 1e-9);
                prop_assert_eq!(*adm, cand.admissible);
                if *adm {
                    prop_assert!(best >= r + rc - 1e-9);
                }
            }
        }
    }
}
