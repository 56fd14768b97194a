//! Flow maps and Lagrangian advection of test-point ensembles.
//!
//! Continuous flows are integrated with classical fixed-step RK4. The
//! standard map is iterated exactly on the unit torus `[0,1)²`, which is the
//! angle torus `[0,2π)²` scaled by `1/(2π)`.

mod gridded;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use gridded::{units_per_day, GriddedField};

use crate::error::{Error, Result};
use crate::mesh::Rect;
use crate::Point;

const TWO_PI: f64 = 2.0 * PI;

/// Points per parallel work unit. Fixed so output never depends on worker count.
const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    DoubleGyre,
    StandardMap,
    Rossby,
    Gridded,
}

impl FlowKind {
    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            FlowKind::DoubleGyre => &["A", "epsilon", "omega"],
            FlowKind::StandardMap => &["K"],
            FlowKind::Rossby => RossbyParams::NAMES,
            FlowKind::Gridded => &[],
        }
    }
}

impl FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double-gyre" => Ok(FlowKind::DoubleGyre),
            "standard-map" => Ok(FlowKind::StandardMap),
            "rossby" => Ok(FlowKind::Rossby),
            "gridded" => Ok(FlowKind::Gridded),
            other => Err(Error::FlowSpec(format!("unknown flow kind `{other}`"))),
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowKind::DoubleGyre => "double-gyre",
            FlowKind::StandardMap => "standard-map",
            FlowKind::Rossby => "rossby",
            FlowKind::Gridded => "gridded",
        })
    }
}

/// Parameters of the idealized zonal stratospheric jet stream function
///
/// `Ψ = c3·y − U0·L·tanh(y/L) + U0·L·sech²(y/L)·[A3 cos(k1 x) + A2 cos(k2 x − σ2 t) + A1 cos(k1 x − σ1 t)]`
///
/// in metres and seconds. `c2` and `k3` are carried for completeness; they
/// enter only through the reference wave speeds in [`RossbyParams::reference`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RossbyParams {
    pub u0: f64,
    pub c2: f64,
    pub c3: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub l: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl RossbyParams {
    pub const NAMES: &'static [&'static str] =
        &["U0", "c2", "c3", "A1", "A2", "A3", "L", "k1", "k2", "k3", "sigma1", "sigma2"];

    /// Documented non-published default set. Amplitudes and `c2`, `c3` follow
    /// the jet configuration used for the stratospheric example; the length
    /// scale, wavenumbers `k_n = 2n / r_earth` and wave frequencies
    /// `σ1 = k2 (c2 − c3) / 2`, `σ2 = 2 σ1` are the standard choices for this
    /// kinematic jet model. None of these is validated against published
    /// figures.
    pub fn reference() -> Self {
        let u0 = 63.66;
        let r_earth = 6.371e6;
        let (k1, k2, k3) = (2.0 / r_earth, 4.0 / r_earth, 6.0 / r_earth);
        let c2 = 0.205 * u0;
        let c3 = 0.7 * u0;
        let sigma1 = 0.5 * k2 * (c2 - c3);
        RossbyParams {
            u0,
            c2,
            c3,
            a1: 0.075,
            a2: 0.4,
            a3: 0.2,
            l: 1.77e6,
            k1,
            k2,
            k3,
            sigma1,
            sigma2: 2.0 * sigma1,
        }
    }

    pub fn to_params(&self) -> BTreeMap<String, f64> {
        let vals = [
            self.u0, self.c2, self.c3, self.a1, self.a2, self.a3, self.l, self.k1, self.k2, self.k3, self.sigma1,
            self.sigma2,
        ];
        Self::NAMES.iter().map(|n| n.to_string()).zip(vals).collect()
    }

    fn from_params(p: &BTreeMap<String, f64>) -> Self {
        let g = |k: &str| p[k];
        RossbyParams {
            u0: g("U0"),
            c2: g("c2"),
            c3: g("c3"),
            a1: g("A1"),
            a2: g("A2"),
            a3: g("A3"),
            l: g("L"),
            k1: g("k1"),
            k2: g("k2"),
            k3: g("k3"),
            sigma1: g("sigma1"),
            sigma2: g("sigma2"),
        }
    }

    /// Stream function value, used to cross-check the analytic velocity.
    pub fn stream_function(&self, p: Point, t: f64) -> f64 {
        let (x, y) = (p[0], p[1]);
        let s = (y / self.l).cosh().powi(-2);
        let waves = self.a3 * (self.k1 * x).cos()
            + self.a2 * (self.k2 * x - self.sigma2 * t).cos()
            + self.a1 * (self.k1 * x - self.sigma1 * t).cos();
        self.c3 * y - self.u0 * self.l * (y / self.l).tanh() + self.u0 * self.l * s * waves
    }

    fn velocity(&self, p: Point, t: f64) -> [f64; 2] {
        let (x, y) = (p[0], p[1]);
        let th = (y / self.l).tanh();
        let sech2 = 1.0 - th * th;
        let (ph1, ph2, ph3) = (self.k1 * x - self.sigma1 * t, self.k2 * x - self.sigma2 * t, self.k1 * x);
        let waves = self.a3 * ph3.cos() + self.a2 * ph2.cos() + self.a1 * ph1.cos();
        let waves_dx =
            -self.a3 * self.k1 * ph3.sin() - self.a2 * self.k2 * ph2.sin() - self.a1 * self.k1 * ph1.sin();
        let dpsi_dy = self.c3 - self.u0 * sech2 - 2.0 * self.u0 * sech2 * th * waves;
        let dpsi_dx = self.u0 * self.l * sech2 * waves_dx;
        [-dpsi_dy, dpsi_dx]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowModel {
    DoubleGyre { a: f64, epsilon: f64, omega: f64 },
    StandardMap { k: f64 },
    Rossby(RossbyParams),
    Gridded(Arc<GriddedField>),
}

/// A flow together with its time epoch.
///
/// For the standard map `tau` is the iteration count and `integrator_step`
/// is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub model: FlowModel,
    pub t0: f64,
    pub tau: f64,
    pub integrator_step: f64,
}

impl FlowSpec {
    /// Builds a spec from a name → value map, checking that every parameter
    /// the flow kind needs is present.
    pub fn from_params(
        kind: FlowKind,
        params: &BTreeMap<String, f64>,
        field: Option<Arc<GriddedField>>,
        t0: f64,
        tau: f64,
        integrator_step: f64,
    ) -> Result<Self> {
        let missing: Vec<&str> =
            kind.required_params().iter().copied().filter(|k| !params.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::FlowSpec(format!("{kind} is missing parameter(s) {}", missing.join(", "))));
        }
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::FlowSpec(format!("parameter {k} = {v} is not finite")));
        }
        let model = match kind {
            FlowKind::DoubleGyre => {
                FlowModel::DoubleGyre { a: params["A"], epsilon: params["epsilon"], omega: params["omega"] }
            }
            FlowKind::StandardMap => FlowModel::StandardMap { k: params["K"] },
            FlowKind::Rossby => FlowModel::Rossby(RossbyParams::from_params(params)),
            FlowKind::Gridded => FlowModel::Gridded(
                field.ok_or_else(|| Error::FlowSpec("gridded flow needs a velocity field".into()))?,
            ),
        };
        let spec = FlowSpec { model, t0, tau, integrator_step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn double_gyre(a: f64, epsilon: f64, omega: f64, t0: f64, tau: f64, integrator_step: f64) -> Result<Self> {
        let spec = FlowSpec { model: FlowModel::DoubleGyre { a, epsilon, omega }, t0, tau, integrator_step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn standard_map(k: f64, iterations: u32) -> Self {
        FlowSpec { model: FlowModel::StandardMap { k }, t0: 0.0, tau: iterations as f64, integrator_step: 1.0 }
    }

    pub fn kind(&self) -> FlowKind {
        match self.model {
            FlowModel::DoubleGyre { .. } => FlowKind::DoubleGyre,
            FlowModel::StandardMap { .. } => FlowKind::StandardMap,
            FlowModel::Rossby(_) => FlowKind::Rossby,
            FlowModel::Gridded(_) => FlowKind::Gridded,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.model, FlowModel::StandardMap { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::FlowSpec(format!("invalid epoch t0={} tau={}", self.t0, self.tau)));
        }
        if self.is_continuous() {
            if !(self.integrator_step > 0.0 && self.integrator_step.is_finite()) {
                return Err(Error::FlowSpec(format!("integrator step {} must be > 0", self.integrator_step)));
            }
        } else if self.tau.fract() != 0.0 {
            return Err(Error::FlowSpec(format!("map iteration count {} is not an integer", self.tau)));
        }
        if let FlowModel::Gridded(f) = &self.model {
            let (lo, hi) = f.time_span();
            if f.t().len() > 1 && (self.t0 < lo || self.t0 + self.tau > hi) {
                return Err(Error::FlowSpec(format!(
                    "epoch [{}, {}] is outside the field's time axis [{lo}, {hi}]",
                    self.t0,
                    self.t0 + self.tau
                )));
            }
        }
        Ok(())
    }

    /// Instantaneous velocity of a continuous flow.
    pub fn velocity(&self, p: Point, t: f64) -> Result<[f64; 2]> {
        match &self.model {
            FlowModel::DoubleGyre { a, epsilon, omega } => Ok(double_gyre_velocity(*a, *epsilon, *omega, p, t)),
            FlowModel::Rossby(r) => Ok(r.velocity(p, t)),
            FlowModel::Gridded(f) => f.velocity(p, t),
            FlowModel::StandardMap { .. } => {
                Err(Error::FlowSpec("the standard map is a discrete map and has no velocity".into()))
            }
        }
    }
}

fn double_gyre_velocity(a: f64, eps: f64, omega: f64, p: Point, t: f64) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    let s = eps * (omega * t).sin();
    let f = s * x * x + (1.0 - 2.0 * s) * x;
    let (sf, cf) = (PI * f).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    let dfdx = 2.0 * s * x + 1.0 - 2.0 * s;
    [-PI * a * sf * cy, PI * a * cf * sy * dfdx]
}

/// One step of the standard map in angle units:
/// `p' = p + K sin θ`, `θ' = θ + p'`, both modulo 2π. Returns `(θ', p')`.
pub fn standard_map_step(theta: f64, p: f64, k: f64) -> (f64, f64) {
    let p1 = (p + k * theta.sin()).rem_euclid(TWO_PI);
    let t1 = (theta + p1).rem_euclid(TWO_PI);
    (t1, p1)
}

/// Same map on the unit torus, `x = θ/2π`, `y = p/2π`. With `K = 0` the
/// momentum coordinate is preserved bit for bit.
fn standard_map_unit(x: f64, y: f64, k: f64) -> (f64, f64) {
    let y1 = if k == 0.0 { y } else { (y + k / TWO_PI * (TWO_PI * x).sin()).rem_euclid(1.0) };
    let x1 = (x + y1).rem_euclid(1.0);
    (x1, y1)
}

/// Initial and final positions of a test-point ensemble.
///
/// `exited[k]` marks points that left a gridded field's domain; they are
/// frozen at their last valid position and counted as outflow.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub initial: Vec<Point>,
    pub final_points: Vec<Point>,
    pub exited: Vec<bool>,
    pub t0: f64,
    pub tau: f64,
    pub seed: u64,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn exited_count(&self) -> usize {
        self.exited.iter().filter(|&&e| e).count()
    }
}

/// `n` i.i.d. uniform points on `rect` from a ChaCha8 stream seeded with `seed`.
pub fn seed_uniform(rect: Rect, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            [rect.xmin + u * rect.width(), rect.ymin + v * rect.height()]
        })
        .collect()
}

enum Outcome {
    Done(Point),
    Exited(Point),
}

fn rk4_step(spec: &FlowSpec, p: Point, t: f64, h: f64) -> Result<Point> {
    let add = |a: Point, k: [f64; 2], s: f64| [a[0] + s * k[0], a[1] + s * k[1]];
    let k1 = spec.velocity(p, t)?;
    let k2 = spec.velocity(add(p, k1, 0.5 * h), t + 0.5 * h)?;
    let k3 = spec.velocity(add(p, k2, 0.5 * h), t + 0.5 * h)?;
    let k4 = spec.velocity(add(p, k3, h), t + h)?;
    Ok([
        p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Step schedule from `t0` to `t0 + tau`: full steps of `h`, the last one
/// shortened so the endpoint is hit exactly.
fn schedule(t0: f64, tau: f64, h: f64) -> Vec<(f64, f64)> {
    let ratio = tau / h;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) { nearest as usize } else { ratio.ceil() as usize };
    let t_end = t0 + tau;
    (0..n)
        .map(|k| {
            let t = t0 + k as f64 * h;
            let dt = if k + 1 == n { t_end - t } else { h };
            (t, dt)
        })
        .collect()
}

fn advect_one(spec: &FlowSpec, steps: &[(f64, f64)], p0: Point, index: usize) -> Result<Outcome> {
    if let FlowModel::StandardMap { k } = spec.model {
        let (mut x, mut y) = (p0[0], p0[1]);
        for _ in 0..spec.tau as u64 {
            (x, y) = standard_map_unit(x, y, k);
        }
        return Ok(Outcome::Done([x, y]));
    }
    let gridded = matches!(spec.model, FlowModel::Gridded(_));
    let mut p = p0;
    for &(t, h) in steps {
        match rk4_step(spec, p, t, h) {
            Ok(next) => {
                if !next[0].is_finite() || !next[1].is_finite() {
                    return Err(Error::Diverged { index });
                }
                p = next;
            }
            Err(Error::OutOfRange { .. }) if gridded => return Ok(Outcome::Exited(p)),
            Err(e) => return Err(e),
        }
    }
    Ok(Outcome::Done(p))
}

/// Advects `initial` through the epoch of `spec`. Output order matches input
/// order regardless of how the work is split across threads.
pub fn advect(spec: &FlowSpec, initial: &[Point], seed: u64) -> Result<TrajectoryEnsemble> {
    spec.validate()?;
    let steps = if spec.is_continuous() { schedule(spec.t0, spec.tau, spec.integrator_step) } else { Vec::new() };
    let chunks: Vec<Result<Vec<Outcome>>> = initial
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            chunk.iter().enumerate().map(|(k, &p)| advect_one(spec, &steps, p, c * CHUNK + k)).collect()
        })
        .collect();
    let mut final_points = Vec::with_capacity(initial.len());
    let mut exited = Vec::with_capacity(initial.len());
    for chunk in chunks {
        for o in chunk? {
            match o {
                Outcome::Done(p) => {
                    final_points.push(p);
                    exited.push(false);
                }
                Outcome::Exited(p) => {
                    final_points.push(p);
                    exited.push(true);
                }
            }
        }
    }
    Ok(TrajectoryEnsemble { initial: initial.to_vec(), final_points, exited, t0: spec.t0, tau: spec.tau, seed })
}
