//! Gridded velocity data: bilinear in space, linear in time, zero on land.
//!
//! File layout (plain text, one record per line, `#` lines ignored):
//!
//! ```text
//! # relcoh gridded-velocity v1
//! dims <nx> <ny> <nt>
//! time_unit <seconds|hours|days>
//! x <nx values>
//! y <ny values>
//! t <nt values>
//! u
//! <nt * ny rows of nx values>     time-major, then y, then x
//! v
//! <nt * ny rows of nx values>
//! ```
//!
//! Numbers are written in shortest round-trip form, so save followed by load
//! reproduces every finite value bit for bit. `NaN` marks land.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField {
    x: Vec<f64>,
    y: Vec<f64>,
    t: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    time_unit: String,
    land: Vec<bool>,
}

fn strictly_increasing(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite()) && a.windows(2).all(|w| w[0] < w[1])
}

impl GriddedField {
    /// Validates shapes and axes and derives the land mask. A node is land if
    /// either component is NaN in any time slice.
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        t: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        time_unit: impl Into<String>,
    ) -> Result<Self> {
        let (nx, ny, nt) = (x.len(), y.len(), t.len());
        if nx < 2 || ny < 2 || nt < 1 {
            return Err(Error::FlowSpec(format!("gridded field needs nx, ny >= 2 and nt >= 1, got {nx}x{ny}x{nt}")));
        }
        for (name, axis) in [("x", &x), ("y", &y), ("t", &t)] {
            if !strictly_increasing(axis) {
                return Err(Error::FlowSpec(format!("{name} axis is not strictly increasing")));
            }
        }
        let len = nx * ny * nt;
        if u.len() != len || v.len() != len {
            return Err(Error::FlowSpec(format!(
                "component shape mismatch: expected {len} values, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        let time_unit = time_unit.into();
        units_per_day(&time_unit)?;
        let slice = nx * ny;
        let mut land = vec![false; slice];
        for it in 0..nt {
            let mut wet = 0usize;
            for k in 0..slice {
                let idx = it * slice + k;
                if u[idx].is_nan() || v[idx].is_nan() {
                    land[k] = true;
                } else if !u[idx].is_finite() || !v[idx].is_finite() {
                    return Err(Error::FlowSpec(format!("infinite velocity sample at index {idx}")));
                } else {
                    wet += 1;
                }
            }
            if wet == 0 {
                return Err(Error::FlowSpec(format!("time slice {it} has no wet samples")));
            }
        }
        Ok(GriddedField { x, y, t, u, v, time_unit, land })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn time_unit(&self) -> &str {
        &self.time_unit
    }

    /// Land flag for node `(ix, iy)`.
    pub fn is_land(&self, ix: usize, iy: usize) -> bool {
        self.land[iy * self.x.len() + ix]
    }

    /// Land mask, row-major over `(y, x)`.
    pub fn land_mask(&self) -> &[bool] {
        &self.land
    }

    /// Time-axis span `[t_first, t_last]`.
    pub fn time_span(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }

    fn bracket(axis: &[f64], q: f64) -> Option<(usize, f64)> {
        let n = axis.len();
        if !(q >= axis[0] && q <= axis[n - 1]) {
            return None;
        }
        let hi = axis.partition_point(|&a| a <= q).clamp(1, n - 1);
        let lo = hi - 1;
        Some((lo, (q - axis[lo]) / (axis[hi] - axis[lo])))
    }

    /// True if all four nodes around `p` are water.
    pub fn is_wet(&self, p: Point) -> bool {
        match (Self::bracket(&self.x, p[0]), Self::bracket(&self.y, p[1])) {
            (Some((ix, _)), Some((iy, _))) => {
                !(self.is_land(ix, iy)
                    || self.is_land(ix + 1, iy)
                    || self.is_land(ix, iy + 1)
                    || self.is_land(ix + 1, iy + 1))
            }
            _ => false,
        }
    }

    fn sample(&self, it: usize, ix: usize, iy: usize, fx: f64, fy: f64) -> [f64; 2] {
        let nx = self.x.len();
        let base = it * nx * self.y.len();
        let at = |c: &[f64], i: usize, j: usize| {
            let val = c[base + j * nx + i];
            if val.is_nan() {
                0.0
            } else {
                val
            }
        };
        let blend = |c: &[f64]| {
            let a = at(c, ix, iy) * (1.0 - fx) + at(c, ix + 1, iy) * fx;
            let b = at(c, ix, iy + 1) * (1.0 - fx) + at(c, ix + 1, iy + 1) * fx;
            a * (1.0 - fy) + b * fy
        };
        [blend(&self.u), blend(&self.v)]
    }

    pub fn velocity(&self, p: Point, t: f64) -> Result<[f64; 2]> {
        let out = || Error::OutOfRange { x: p[0], y: p[1], t };
        let (ix, fx) = Self::bracket(&self.x, p[0]).ok_or_else(out)?;
        let (iy, fy) = Self::bracket(&self.y, p[1]).ok_or_else(out)?;
        if self.t.len() == 1 {
            return Ok(self.sample(0, ix, iy, fx, fy));
        }
        let (it, ft) = Self::bracket(&self.t, t).ok_or_else(out)?;
        let a = self.sample(it, ix, iy, fx, fy);
        let b = self.sample(it + 1, ix, iy, fx, fy);
        Ok([a[0] * (1.0 - ft) + b[0] * ft, a[1] * (1.0 - ft) + b[1] * ft])
    }

    pub fn to_text(&self) -> String {
        let (nx, ny, nt) = (self.x.len(), self.y.len(), self.t.len());
        let mut s = String::from("# relcoh gridded-velocity v1\n");
        writeln!(s, "dims {nx} {ny} {nt}").unwrap();
        writeln!(s, "time_unit {}", self.time_unit).unwrap();
        for (name, axis) in [("x", &self.x), ("y", &self.y), ("t", &self.t)] {
            s.push_str(name);
            for v in axis.iter() {
                write!(s, " {v:?}").unwrap();
            }
            s.push('\n');
        }
        for (name, comp) in [("u", &self.u), ("v", &self.v)] {
            s.push_str(name);
            s.push('\n');
            for row in comp.chunks(nx) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
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
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: String| Error::parse(origin, line, msg);
        let keyed = |lines: &mut dyn Iterator<Item = (usize, &'_ str)>, key: &str| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected `{key}`")))?;
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some(k) if k == key => Ok((n, tok.map(str::to_string).collect())),
                other => Err(err(n, format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
            }
        };
        let floats = |n: usize, toks: &[String]| -> Result<Vec<f64>> {
            toks.iter().map(|t| t.parse::<f64>().map_err(|_| err(n, format!("bad number `{t}`")))).collect()
        };

        let (n, dims) = keyed(&mut lines, "dims")?;
        let dims: Vec<usize> = dims
            .iter()
            .map(|t| t.parse::<usize>().map_err(|_| err(n, format!("bad dimension `{t}`"))))
            .collect::<Result<_>>()?;
        let [nx, ny, nt] = dims[..] else {
            return Err(err(n, "dims needs nx ny nt".into()));
        };
        let (n, unit) = keyed(&mut lines, "time_unit")?;
        let unit = unit.first().cloned().ok_or_else(|| err(n, "missing time unit".into()))?;
        let mut axes = Vec::new();
        for (name, len) in [("x", nx), ("y", ny), ("t", nt)] {
            let (n, toks) = keyed(&mut lines, name)?;
            let vals = floats(n, &toks)?;
            if vals.len() != len {
                return Err(err(n, format!("{name} axis has {} values, dims say {len}", vals.len())));
            }
            if !strictly_increasing(&vals) {
                return Err(err(n, format!("{name} axis is not strictly increasing")));
            }
            axes.push(vals);
        }
        let mut comps = Vec::new();
        for name in ["u", "v"] {
            let (n, rest) = keyed(&mut lines, name)?;
            if !rest.is_empty() {
                return Err(err(n, format!("`{name}` header takes no values")));
            }
            let mut vals = Vec::with_capacity(nx * ny * nt);
            for _ in 0..ny * nt {
                let (n, line) = lines.next().ok_or_else(|| err(0, format!("`{name}` block is truncated")))?;
                let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if toks.len() != nx {
                    return Err(err(n, format!("row has {} values, expected {nx}", toks.len())));
                }
                vals.extend(floats(n, &toks)?);
            }
            comps.push(vals);
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing content after `v` block".into()));
        }
        let v = comps.pop().unwrap();
        let u = comps.pop().unwrap();
        let t = axes.pop().unwrap();
        let y = axes.pop().unwrap();
        let x = axes.pop().unwrap();
        GriddedField::new(x, y, t, u, v, unit).map_err(|e| err(0, e.to_string()))
    }
}

/// How many file time units make up one day.
pub fn units_per_day(unit: &str) -> Result<f64> {
    match unit {
        "seconds" | "s" => Ok(86_400.0),
        "hours" | "h" => Ok(24.0),
        "days" | "d" => Ok(1.0),
        other => Err(Error::FlowSpec(format!("unknown time unit `{other}`"))),
    }
}
