//! Sample-density advice from a Lipschitz bound on the velocity field.
//!
//! Two trajectories starting `ε` apart separate by at most `ε·e^{M|t−t₀|}`,
//! so choosing `ε = q·e^{−M|t−t₀|}` keeps images of neighbouring samples
//! within one box of side `q`. Spacing `ε` along each axis of a planar box
//! needs `(q/ε)²` points per box.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{advect, FlowSpec};
use crate::error::{Error, Result};
use crate::mesh::Rect;
use crate::Point;

/// Boxes are planar.
pub const DIMENSION: u32 = 2;

/// Multiplier applied to sampled Lipschitz estimates, which undershoot the
/// true maximum.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingAdvice {
    pub q: f64,
    pub m: f64,
    pub epoch: f64,
    pub epsilon: f64,
    pub points_per_axis: u64,
    pub points_per_box: u64,
    pub box_count: u64,
    pub total_points: u64,
}

/// `ε = q·e^{−M·epoch}`, `points_per_box = ⌈(q/ε)^2⌉`.
pub fn advise(q: f64, m: f64, epoch: f64, box_count: u64) -> Result<SamplingAdvice> {
    if !(q > 0.0 && q.is_finite()) || !(m >= 0.0 && m.is_finite()) || !(epoch >= 0.0 && epoch.is_finite()) {
        return Err(Error::Advice(format!("need q > 0, M >= 0, epoch >= 0; got q={q}, M={m}, epoch={epoch}")));
    }
    if box_count == 0 {
        return Err(Error::Advice("box count must be positive".into()));
    }
    let epsilon = q * (-m * epoch).exp();
    let ratio = q / epsilon;
    let too_many = || {
        Error::Advice(format!(
            "q/ε = {ratio:e} needs more points than can be counted; use a coarser grid or a shorter epoch"
        ))
    };
    let points_per_axis = snapped_ceil(ratio).ok_or_else(too_many)?;
    let points_per_box = snapped_ceil(ratio.powi(DIMENSION as i32)).ok_or_else(too_many)?;
    let total_points = points_per_box.checked_mul(box_count).ok_or_else(too_many)?;
    Ok(SamplingAdvice { q, m, epoch, epsilon, points_per_axis, points_per_box, box_count, total_points })
}

/// Ceiling that ignores rounding noise just above an integer.
fn snapped_ceil(x: f64) -> Option<u64> {
    let r = x.round();
    let c = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (c.is_finite() && c < u64::MAX as f64).then_some(c as u64)
}

impl SamplingAdvice {
    /// Readable summary followed by a `key = value` block.
    pub fn report(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "Boxes of side {} under a Lipschitz bound M = {} over an epoch of {} need sample spacing {:e}.",
            self.q, self.m, self.epoch, self.epsilon
        )
        .unwrap();
        writeln!(
            s,
            "That is {} points per axis, {} per box (d = {DIMENSION}), {} over {} boxes.",
            self.points_per_axis, self.points_per_box, self.total_points, self.box_count
        )
        .unwrap();
        s.push('\n');
        s.push_str(&self.key_values());
        s
    }

    pub fn key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "q = {:?}", self.q).unwrap();
        writeln!(s, "M = {:?}", self.m).unwrap();
        writeln!(s, "epoch = {:?}", self.epoch).unwrap();
        writeln!(s, "epsilon = {:?}", self.epsilon).unwrap();
        writeln!(s, "dimension = {DIMENSION}").unwrap();
        writeln!(s, "points_per_axis = {}", self.points_per_axis).unwrap();
        writeln!(s, "points_per_box = {}", self.points_per_box).unwrap();
        writeln!(s, "box_count = {}", self.box_count).unwrap();
        writeln!(s, "total_points = {}", self.total_points).unwrap();
        s
    }
}

/// Largest spectral norm of the velocity Jacobian over `n_samples` random
/// space-time points, by central differences with step `1e-6 · max(width, height)`.
pub fn estimate_lipschitz(spec: &FlowSpec, rect: Rect, n_samples: usize, seed: u64) -> Result<f64> {
    if !spec.is_continuous() {
        return Err(Error::FlowSpec("Lipschitz estimates need a continuous flow".into()));
    }
    if n_samples == 0 {
        return Err(Error::Advice("need at least one sample".into()));
    }
    rect.validate()?;
    let h = 1e-6 * rect.width().max(rect.height());
    let inner = Rect::new(rect.xmin + 2.0 * h, rect.xmax - 2.0 * h, rect.ymin + 2.0 * h, rect.ymax - 2.0 * h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(Point, f64)> = (0..n_samples)
        .map(|_| {
            let x = inner.xmin + rng.random::<f64>() * inner.width();
            let y = inner.ymin + rng.random::<f64>() * inner.height();
            let t = spec.t0 + rng.random::<f64>() * spec.tau;
            ([x, y], t)
        })
        .collect();
    let norms: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(index, &(p, t))| {
            let ux = spec.velocity([p[0] + h, p[1]], t)?;
            let lx = spec.velocity([p[0] - h, p[1]], t)?;
            let uy = spec.velocity([p[0], p[1] + h], t)?;
            let ly = spec.velocity([p[0], p[1] - h], t)?;
            let j = [
                [(ux[0] - lx[0]) / (2.0 * h), (uy[0] - ly[0]) / (2.0 * h)],
                [(ux[1] - lx[1]) / (2.0 * h), (uy[1] - ly[1]) / (2.0 * h)],
            ];
            let n = spectral_norm_2x2(j);
            if n.is_finite() {
                Ok(n)
            } else {
                Err(Error::Diverged { index })
            }
        })
        .collect::<Result<_>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// Largest singular value of a 2×2 matrix.
fn spectral_norm_2x2(j: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = j;
    0.5 * ((a + d).hypot(c - b) + (a - d).hypot(b + c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed final separation divided by `q`.
    pub worst_ratio: f64,
}

/// Advects `n_pairs` random point pairs less than `advice.epsilon` apart
/// through the epoch of `spec` and counts pairs that end more than
/// `advice.q` apart. Both points of a pair start inside `rect`.
pub fn gronwall_check(spec: &FlowSpec, rect: Rect, advice: &SamplingAdvice, n_pairs: usize, seed: u64) -> Result<GronwallReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n_pairs);
    let mut b = Vec::with_capacity(n_pairs);
    while a.len() < n_pairs {
        let p = [rect.xmin + rng.random::<f64>() * rect.width(), rect.ymin + rng.random::<f64>() * rect.height()];
        let r = advice.epsilon * rng.random::<f64>();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let q = [p[0] + r * phi.cos(), p[1] + r * phi.sin()];
        if rect.contains(q) {
            a.push(p);
            b.push(q);
        }
    }
    let ea = advect(spec, &a, seed)?;
    let eb = advect(spec, &b, seed)?;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (x, y) in ea.final_points.iter().zip(&eb.final_points) {
        let d = (x[0] - y[0]).hypot(x[1] - y[1]);
        worst = worst.max(d / advice.q);
        if d > advice.q {
            violations += 1;
        }
    }
    Ok(GronwallReport { pairs: n_pairs, violations, worst_ratio: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GriddedField;
    use crate::dynamics::FlowModel;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn gridded(u: impl Fn(f64, f64) -> f64, v: impl Fn(f64, f64) -> f64) -> FlowSpec {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let ys = xs.clone();
        let mut uu = Vec::new();
        let mut vv = Vec::new();
        for &y in &ys {
            for &x in &xs {
                uu.push(u(x, y));
                vv.push(v(x, y));
            }
        }
        let f = GriddedField::new(xs, ys, vec![0.0], uu, vv, "days").unwrap();
        FlowSpec { model: FlowModel::Gridded(Arc::new(f)), t0: 0.0, tau: 0.0, integrator_step: 0.1 }
    }

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn advice_examples() {
        let a = advise(0.1, 10f64.ln(), 1.0, 16).unwrap();
        assert!((a.epsilon - 0.01).abs() <= 2.0 * f64::EPSILON * 0.01, "{}", a.epsilon);
        assert_eq!(a.points_per_box, 100);
        assert_eq!(a.points_per_axis, 10);
        assert_eq!(a.total_points, 1600);

        let z = advise(0.1, 0.0, 3.0, 5).unwrap();
        assert_eq!(z.epsilon, 0.1);
        assert_eq!(z.points_per_box, 1);

        let b = advise(0.1, 10f64.ln(), 2.0, 1).unwrap();
        assert!((b.epsilon - 0.001).abs() <= 4.0 * f64::EPSILON * 0.001);
        assert_eq!(b.points_per_box, 10_000);
    }

    #[test]
    fn advice_errors() {
        assert!(matches!(advise(0.1, 50.0, 1.0, 10), Err(Error::Advice(_))));
        assert!(matches!(advise(0.1, 5.0, 1.0, u64::MAX), Err(Error::Advice(_))));
        assert!(advise(-0.1, 1.0, 1.0, 1).is_err());
        assert!(advise(0.1, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn report_lists_every_key() {
        let r = advise(0.1, 1.0, 1.0, 4).unwrap().report();
        for k in ["q =", "M =", "epoch =", "epsilon =", "dimension = 2", "points_per_box =", "total_points ="] {
            assert!(r.contains(k), "{k}");
        }
    }

    #[test]
    fn lipschitz_of_linear_and_constant_fields() {
        let c = gridded(|_, _| 1.0, |_, _| 0.0);
        assert_eq!(estimate_lipschitz(&c, unit(), 200, 1).unwrap(), 0.0);
        let l = gridded(|x, _| 2.0 * x, |_, y| -2.0 * y);
        let m = estimate_lipschitz(&l, unit(), 200, 1).unwrap();
        assert!((m - 2.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn lipschitz_needs_a_continuous_flow() {
        assert!(estimate_lipschitz(&FlowSpec::standard_map(1.2, 1), unit(), 10, 0).is_err());
    }

    #[test]
    fn double_gyre_estimate_is_stable_across_seeds() {
        let spec = FlowSpec::double_gyre(0.25, 0.25, std::f64::consts::TAU, 0.0, 10.0, 0.01).unwrap();
        let rect = Rect::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let a = estimate_lipschitz(&spec, rect, 100_000, 1).unwrap();
        let b = estimate_lipschitz(&spec, rect, 100_000, 2).unwrap();
        assert!(a > 0.0 && a.is_finite());
        let two_sig = |x: f64| {
            let e = 10f64.powf(x.log10().floor() - 1.0);
            (x / e).round() * e
        };
        assert_eq!(two_sig(a), two_sig(b), "{a} vs {b}");
    }

    #[test]
    fn spectral_norm_matches_examples() {
        assert_eq!(spectral_norm_2x2([[2.0, 0.0], [0.0, -2.0]]), 2.0);
        assert!((spectral_norm_2x2([[0.0, 3.0], [0.0, 0.0]]) - 3.0).abs() < 1e-15);
        assert!((spectral_norm_2x2([[1.0, 1.0], [1.0, 1.0]]) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn exact_and_monotone(q in 0.01f64..1.0, m in 0.0f64..3.0, e in 0.0f64..3.0, dm in 0.0f64..1.0, de in 0.0f64..1.0) {
            let a = advise(q, m, e, 10).unwrap();
            prop_assert!(((a.epsilon * (m * e).exp()) - q).abs() <= 4.0 * f64::EPSILON * q);
            let b = advise(q, m + dm, e + de, 10).unwrap();
            prop_assert!(b.epsilon <= a.epsilon);
            prop_assert!(b.points_per_box >= a.points_per_box);
        }
    }
}
