//! Structured triangulations of rectangular windows.
//!
//! Every grid cell is split along its lower-left to upper-right diagonal.
//! Cells are numbered row-major (`cell = cy * nx + cx`), and cell `c` owns
//! triangles `2c` (lower, below the diagonal) and `2c + 1` (upper). Point
//! location is cell arithmetic plus one diagonal test. A point on a shared
//! edge belongs to the lowest-indexed triangle that contains it.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::indexset::{format_ranges, parse_ranges};
use crate::Point;

/// Axis-aligned window `[xmin, xmax] × [ymin, ymax]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let r = Rect { xmin, xmax, ymin, ymax };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax].iter().all(|v| v.is_finite());
        if !finite || self.xmin >= self.xmax || self.ymin >= self.ymax {
            return Err(Error::InvalidDomain(format!(
                "[{}, {}] x [{}, {}]",
                self.xmin, self.xmax, self.ymin, self.ymax
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.xmin && p[0] <= self.xmax && p[1] >= self.ymin && p[1] <= self.ymax
    }
}

/// Triangulated cover of a [`Rect`] by `2 * nx * ny` congruent right triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    rect: Rect,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn build_uniform(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        rect.validate()?;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidDomain(format!("grid {nx}x{ny} has no cells")));
        }
        let dx = rect.width() / nx as f64;
        let dy = rect.height() / ny as f64;

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for iy in 0..=ny {
            let y = if iy == ny { rect.ymax } else { rect.ymin + iy as f64 * dy };
            for ix in 0..=nx {
                let x = if ix == nx { rect.xmax } else { rect.xmin + ix as f64 * dx };
                vertices.push([x, y]);
            }
        }

        let stride = nx + 1;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for cy in 0..ny {
            for cx in 0..nx {
                let v00 = cy * stride + cx;
                let v10 = v00 + 1;
                let v01 = v00 + stride;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        Ok(TriMesh { rect, nx, ny, dx, dy, vertices, triangles })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Area of every triangle (all triangles are congruent).
    pub fn cell_area(&self) -> f64 {
        0.5 * self.dx * self.dy
    }

    /// Cell side lengths `(dx, dy)`.
    pub fn spacing(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `i` (positive: counter-clockwise).
    pub fn signed_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, i: usize) -> Point {
        let [a, b, c] = self.triangle(i);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Index of the triangle containing `p`, or `None` outside the window.
    pub fn locate(&self, p: Point) -> Result<Option<usize>> {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::InvalidPoint(p[0], p[1]));
        }
        Ok(self.locate_finite(p))
    }

    /// [`locate`](Self::locate) for callers that have already rejected
    /// non-finite input; non-finite points land outside.
    pub fn locate_finite(&self, p: Point) -> Option<usize> {
        if !self.rect.contains(p) {
            return None;
        }
        let u = (p[0] - self.rect.xmin) / self.dx;
        let v = (p[1] - self.rect.ymin) / self.dy;
        // Lowest cell containing the point: on a grid line, prefer the cell
        // to the left / below.
        let cx = (u.ceil() as isize - 1).clamp(0, self.nx as isize - 1) as usize;
        let cy = (v.ceil() as isize - 1).clamp(0, self.ny as isize - 1) as usize;
        let lu = u - cx as f64;
        let lv = v - cy as f64;
        let cell = cy * self.nx + cx;
        Some(if lv <= lu { 2 * cell } else { 2 * cell + 1 })
    }

    /// Triangles that contain at least one of `points`, sorted.
    pub fn occupancy_mask(&self, points: &[Point]) -> Vec<usize> {
        let mut hit = vec![false; self.len()];
        for &p in points {
            if let Some(i) = self.locate_finite(p) {
                hit[i] = true;
            }
        }
        hit.iter().enumerate().filter_map(|(i, &h)| h.then_some(i)).collect()
    }
}

/// Measure-weighted partition over a mesh, with an occupancy mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    mesh: Arc<TriMesh>,
    weights: Vec<f64>,
    active: Vec<bool>,
}

impl Partition {
    /// Equal weight `1/|active|` on every active triangle.
    pub fn uniform(mesh: Arc<TriMesh>, active: &[usize]) -> Result<Self> {
        let n = mesh.len();
        let mut mask = vec![false; n];
        for &i in active {
            if i >= n {
                return Err(Error::Dimension(format!("active index {i} >= {n} triangles")));
            }
            mask[i] = true;
        }
        let count = mask.iter().filter(|&&a| a).count();
        if count == 0 {
            return Err(Error::EmptyPartition);
        }
        let w = 1.0 / count as f64;
        let weights = mask.iter().map(|&a| if a { w } else { 0.0 }).collect();
        Ok(Partition { mesh, weights, active: mask })
    }

    /// Every triangle active.
    pub fn full(mesh: Arc<TriMesh>) -> Self {
        let all: Vec<usize> = (0..mesh.len()).collect();
        Self::uniform(mesh, &all).expect("mesh has at least one triangle")
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Plain-text header: window bounds, grid dims and active index list.
    pub fn to_header(&self) -> String {
        let r = self.mesh.rect();
        let (nx, ny) = self.mesh.grid_dims();
        let active = self.active_indices();
        let mut s = String::from("# relcoh mesh v1\n");
        writeln!(s, "rect {} {} {} {}", r.xmin, r.xmax, r.ymin, r.ymax).unwrap();
        writeln!(s, "cells {nx} {ny}").unwrap();
        writeln!(s, "active {}", active.len()).unwrap();
        writeln!(s, "{}", format_ranges(&active)).unwrap();
        s
    }

    pub fn from_header(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        });
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("missing `{key}` line")))?;
            let mut tok = line.split_whitespace();
            if !key.is_empty() && tok.next() != Some(key) {
                return Err(Error::parse(origin, n + 1, format!("expected `{key}`")));
            }
            Ok((n + 1, tok.map(str::to_string).collect()))
        };
        let (ln, rect) = next("rect")?;
        let rect: Vec<f64> = rect
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, ln, e.to_string()))?;
        if rect.len() != 4 {
            return Err(Error::parse(origin, ln, "rect needs 4 values"));
        }
        let (ln, cells) = next("cells")?;
        let cells: Vec<usize> = cells
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, ln, e.to_string()))?;
        if cells.len() != 2 {
            return Err(Error::parse(origin, ln, "cells needs 2 values"));
        }
        let (ln, count) = next("active")?;
        let count: usize = count
            .first()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(origin, ln, "bad active count"))?;
        let (ln, list) = next("")?;
        let active = parse_ranges(&list.join(" ")).map_err(|e| Error::parse(origin, ln, e))?;
        if active.len() != count {
            return Err(Error::parse(origin, ln, format!("expected {count} active cells, found {}", active.len())));
        }
        let mesh = TriMesh::build_uniform(Rect::new(rect[0], rect[1], rect[2], rect[3])?, cells[0], cells[1])?;
        Partition::uniform(Arc::new(mesh), &active)
    }
}

/// Anything that assigns points to numbered cells; what the Ulam counting needs.
pub trait CellMap: Sync {
    fn n_cells(&self) -> usize;
    /// Active cell containing `p`, if any.
    fn cell_of(&self, p: Point) -> Option<usize>;
}

impl CellMap for Partition {
    fn n_cells(&self) -> usize {
        self.mesh.len()
    }

    fn cell_of(&self, p: Point) -> Option<usize> {
        self.mesh.locate_finite(p).filter(|&i| self.active[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn triangle_counts() {
        let dg = TriMesh::build_uniform(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 110, 110).unwrap();
        assert_eq!(dg.len(), 24_200);
        assert_eq!(TriMesh::build_uniform(unit(), 100, 100).unwrap().len(), 20_000);
        let one = TriMesh::build_uniform(unit(), 1, 1).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one.signed_area(0), 0.5);
        assert_eq!(one.signed_area(1), 0.5);
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(matches!(Rect::new(1.0, 1.0, 0.0, 1.0), Err(Error::InvalidDomain(_))));
        let bad = Rect { xmin: 0.0, xmax: 1.0, ymin: 2.0, ymax: 1.0 };
        assert!(TriMesh::build_uniform(bad, 2, 2).is_err());
        assert!(TriMesh::build_uniform(unit(), 0, 2).is_err());
    }

    #[test]
    fn locate_examples() {
        let m = TriMesh::build_uniform(unit(), 1, 1).unwrap();
        assert_eq!(m.locate([0.75, 0.25]).unwrap(), Some(0));
        assert_eq!(m.locate([0.25, 0.75]).unwrap(), Some(1));
        assert_eq!(m.locate([-0.5, 0.5]).unwrap(), None);
        assert_eq!(m.locate([0.5, 0.5]).unwrap(), Some(0));
        assert!(matches!(m.locate([f64::NAN, 0.5]), Err(Error::InvalidPoint(..))));
    }

    #[test]
    fn shared_edges_go_to_lower_index() {
        let m = TriMesh::build_uniform(unit(), 2, 2).unwrap();
        // vertical grid line x = 0.5 in the bottom row: lower triangle of cell 0
        assert_eq!(m.locate([0.5, 0.1]).unwrap(), Some(0));
        // horizontal grid line y = 0.5: upper triangle of cell 0
        assert_eq!(m.locate([0.2, 0.5]).unwrap(), Some(1));
        // window corner
        assert_eq!(m.locate([1.0, 1.0]).unwrap(), Some(6));
    }

    #[test]
    fn positive_areas_and_area_conservation() {
        let r = Rect::new(-3.0, 7.5, 0.25, 1.75).unwrap();
        let m = TriMesh::build_uniform(r, 37, 11).unwrap();
        let total: f64 = (0..m.len()).map(|i| m.signed_area(i)).sum();
        assert!((0..m.len()).all(|i| m.signed_area(i) > 0.0));
        assert!(((total - r.area()) / r.area()).abs() < 1e-12);
    }

    #[test]
    fn centroids_locate_to_themselves() {
        let m = TriMesh::build_uniform(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 40, 20).unwrap();
        for i in 0..m.len() {
            assert_eq!(m.locate(m.centroid(i)).unwrap(), Some(i));
        }
    }

    #[test]
    fn uniform_locations_are_equidistributed() {
        // Pearson chi-square over 32 equal-area triangles; the 1e-6 upper
        // quantile of chi2(31) is 82.0.
        let m = TriMesh::build_uniform(unit(), 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = vec![0usize; m.len()];
        for _ in 0..n {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            counts[m.locate(p).unwrap().expect("inside")] += 1;
        }
        let e = n as f64 / m.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 82.0, "chi2 = {chi2}");
    }

    #[test]
    fn uniform_partition_weights() {
        let two = Arc::new(TriMesh::build_uniform(unit(), 1, 1).unwrap());
        assert_eq!(Partition::full(two.clone()).weights(), &[0.5, 0.5]);
        let four = Arc::new(TriMesh::build_uniform(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 2, 1).unwrap());
        let p = Partition::uniform(four, &[0, 1]).unwrap();
        assert_eq!(p.weights(), &[0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(Partition::uniform(two, &[]), Err(Error::EmptyPartition)));
        let big = Arc::new(TriMesh::build_uniform(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 110, 110).unwrap());
        let p = Partition::full(big);
        assert!(p.weights().iter().all(|&w| w == 1.0 / 24_200.0));
    }

    #[test]
    fn occupancy_examples() {
        let two = TriMesh::build_uniform(unit(), 1, 1).unwrap();
        assert_eq!(two.occupancy_mask(&[[0.9, 0.1], [0.8, 0.3], [0.6, 0.05]]), vec![0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..10_000).map(|_| [rng.random(), rng.random()]).collect();
        assert_eq!(two.occupancy_mask(&pts), vec![0, 1]);

        // lower half of a 2x2 grid: only cells 0 and 1, i.e. triangles 0..4
        let m = TriMesh::build_uniform(unit(), 2, 2).unwrap();
        let low: Vec<Point> = pts.iter().map(|p| [p[0], 0.499 * p[1]]).collect();
        assert_eq!(m.occupancy_mask(&low), vec![0, 1, 2, 3]);
    }

    #[test]
    fn header_round_trip() {
        let m = Arc::new(TriMesh::build_uniform(Rect::new(-1.5, 2.25, 0.1, 0.7).unwrap(), 6, 3).unwrap());
        let p = Partition::uniform(m, &[0, 1, 2, 7, 9, 10, 11, 35]).unwrap();
        let text = p.to_header();
        let back = Partition::from_header(&text, Path::new("mesh.txt")).unwrap();
        assert_eq!(back, p);
    }
}
