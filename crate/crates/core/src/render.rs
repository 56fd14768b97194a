//! Colour maps of leaf labels over a partition.
//!
//! A cell's colour comes from its label truncated to the render depth, so
//! every cell of one depth-`d` node shares a colour. Unassigned cells are
//! drawn gray.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::Partition;

const GOLDEN: f64 = 0.618_033_988_749_895;
pub const UNASSIGNED: [u8; 3] = [128, 128, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Svg,
    Ppm,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(Format::Svg),
            "ppm" => Ok(Format::Ppm),
            other => Err(Error::Config(format!("unknown render format `{other}` (svg or ppm)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSpec {
    /// Pixels along the longer side of the domain.
    pub side: usize,
    pub depth: usize,
    pub palette_seed: u64,
    pub format: Format,
}

/// Colour of a label truncated to `depth`. The label's position in a
/// breadth-first numbering picks a hue by golden-ratio stepping.
pub fn label_color(label: Option<&str>, depth: usize, palette_seed: u64) -> [u8; 3] {
    let Some(label) = label else { return UNASSIGNED };
    let prefix = &label[..label.len().min(depth)];
    let mut index: u64 = 1;
    for ch in prefix.bytes() {
        index = (index << 1) | u64::from(ch == b'2');
    }
    let hue = ((index.wrapping_add(palette_seed)) as f64 * GOLDEN).fract();
    hsv_to_rgb(hue, 0.65, 0.92)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Renders `labels` (one per cell of `partition`) at `spec.depth`, which
/// may not exceed the tree depth.
pub fn render(partition: &Partition, labels: &[Option<String>], tree_depth: usize, spec: &RenderSpec) -> Result<Vec<u8>> {
    if spec.depth > tree_depth {
        return Err(Error::Config(format!("render depth {} exceeds tree depth {tree_depth}", spec.depth)));
    }
    if spec.side == 0 {
        return Err(Error::Config("render side must be positive".into()));
    }
    if labels.len() != partition.len() {
        return Err(Error::Dimension(format!("{} labels for {} cells", labels.len(), partition.len())));
    }
    let colors: Vec<[u8; 3]> =
        labels.iter().map(|l| label_color(l.as_deref(), spec.depth, spec.palette_seed)).collect();
    Ok(match spec.format {
        Format::Svg => svg(partition, &colors, spec.side).into_bytes(),
        Format::Ppm => ppm(partition, &colors, spec.side),
    })
}

fn canvas(partition: &Partition, side: usize) -> (usize, usize) {
    let r = partition.mesh().rect();
    let (w, h) = (r.width(), r.height());
    if w >= h {
        (side, ((side as f64 * h / w).round() as usize).max(1))
    } else {
        (((side as f64 * w / h).round() as usize).max(1), side)
    }
}

fn svg(partition: &Partition, colors: &[[u8; 3]], side: usize) -> String {
    let mesh = partition.mesh();
    let r = mesh.rect();
    let (w, h) = canvas(partition, side);
    let sx = w as f64 / r.width();
    let sy = h as f64 / r.height();
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#)
        .unwrap();
    for (i, c) in colors.iter().enumerate() {
        let pts: Vec<String> = mesh
            .triangle(i)
            .iter()
            .map(|p| format!("{:.3},{:.3}", (p[0] - r.xmin) * sx, (r.ymax - p[1]) * sy))
            .collect();
        let fill = format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]);
        writeln!(s, r#"<polygon points="{}" fill="{fill}" stroke="{fill}" stroke-width="0.5"/>"#, pts.join(" ")).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn ppm(partition: &Partition, colors: &[[u8; 3]], side: usize) -> Vec<u8> {
    let mesh = partition.mesh();
    let r = mesh.rect();
    let (w, h) = canvas(partition, side);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for row in 0..h {
        let y = r.ymax - (row as f64 + 0.5) / h as f64 * r.height();
        for col in 0..w {
            let x = r.xmin + (col as f64 + 0.5) / w as f64 * r.width();
            let c = mesh.locate_finite([x, y]).map_or(UNASSIGNED, |i| colors[i]);
            out.extend_from_slice(&c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::{Rect, TriMesh};

    fn partition() -> Partition {
        let mesh = TriMesh::build_uniform(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 2, 1).unwrap();
        Partition::full(Arc::new(mesh))
    }

    fn labels() -> Vec<Option<String>> {
        vec![Some("11".into()), Some("12".into()), Some("2".into()), None]
    }

    #[test]
    fn truncation_merges_descendants() {
        assert_eq!(label_color(Some("11"), 1, 0), label_color(Some("12"), 1, 0));
        assert_ne!(label_color(Some("11"), 2, 0), label_color(Some("12"), 2, 0));
        assert_ne!(label_color(Some("1"), 1, 0), label_color(Some("2"), 1, 0));
        assert_ne!(label_color(Some("1"), 1, 0), label_color(Some("11"), 2, 0));
        assert_eq!(label_color(None, 3, 7), UNASSIGNED);
        assert_ne!(label_color(Some("1"), 1, 0), label_color(Some("1"), 1, 1));
    }

    #[test]
    fn ppm_dimensions_and_pixels() {
        let spec = RenderSpec { side: 20, depth: 2, palette_seed: 0, format: Format::Ppm };
        let img = render(&partition(), &labels(), 2, &spec).unwrap();
        let header = b"P6\n20 10\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 3 * 200);
        // Row 0, column 10 is the top-left corner of the second cell, inside
        // its upper (unassigned) triangle; row 9, column 19 is in its lower one.
        let px = |row: usize, col: usize| &img[header.len() + 3 * (row * 20 + col)..][..3];
        assert_eq!(px(0, 10), &UNASSIGNED);
        assert_eq!(px(9, 19), &label_color(Some("2"), 2, 0));
    }

    #[test]
    fn svg_has_one_polygon_per_cell() {
        let spec = RenderSpec { side: 100, depth: 1, palette_seed: 3, format: Format::Svg };
        let img = String::from_utf8(render(&partition(), &labels(), 2, &spec).unwrap()).unwrap();
        assert_eq!(img.matches("<polygon").count(), 4);
        assert!(img.contains("#808080"));
    }

    #[test]
    fn depth_beyond_tree_is_rejected() {
        let spec = RenderSpec { side: 10, depth: 3, palette_seed: 0, format: Format::Svg };
        assert!(matches!(render(&partition(), &labels(), 2, &spec), Err(Error::Config(_))));
        assert!("png".parse::<Format>().is_err());
    }
}
