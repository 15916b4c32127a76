//! SVG drawing of a power diagram and its cell-to-site arrows.

use std::fmt::Write;

use wtot::geometry::{BBox, ConvexPolygon, Point2};

use crate::output::SolutionFile;

struct Frame {
    bb: BBox,
    scale: f64,
    pad: f64,
    height: f64,
}

impl Frame {
    fn new(bb: BBox, px: u32) -> Self {
        let pad = 0.04 * px as f64;
        let w = (bb.max.x - bb.min.x).max(f64::MIN_POSITIVE);
        let h = bb.max.y - bb.min.y;
        let scale = (px as f64 - 2.0 * pad) / w;
        Self {
            bb,
            scale,
            pad,
            height: (h * scale + 2.0 * pad).ceil(),
        }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        (
            self.pad + (p.x - self.bb.min.x) * self.scale,
            self.height - self.pad - (p.y - self.bb.min.y) * self.scale,
        )
    }

    fn path(&self, poly: &ConvexPolygon) -> String {
        let mut d = String::new();
        for (k, &p) in poly.vertices().iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if k == 0 { 'M' } else { 'L' });
        }
        d.push('Z');
        d
    }
}

fn colour(i: usize) -> String {
    // golden-angle hue walk
    format!("hsl({:.1},55%,78%)", (i as f64 * 137.507_764) % 360.0)
}

pub fn render(sol: &SolutionFile, px: u32) -> String {
    let mut bb = sol.domain.bbox();
    for &p in &sol.sites {
        bb.include(p);
    }
    let f = Frame::new(bb, px);
    let r = (px as f64 / 160.0).max(1.5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{px}" height="{h}" viewBox="0 0 {px} {h}">"#,
        h = f.height
    );
    let _ = writeln!(
        s,
        r#"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 Z" fill="black"/></marker></defs>"#
    );
    for (i, cell) in sol.cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<path class="cell" data-site="{i}" d="{}" fill="{}" stroke="white" stroke-width="1"/>"#,
            f.path(cell),
            colour(i)
        );
    }
    let _ = writeln!(
        s,
        r#"<path class="domain" d="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        f.path(&sol.domain)
    );
    for (i, cell) in sol.cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let (x1, y1) = f.map(cell.centroid());
        let (x2, y2) = f.map(sol.sites[i]);
        if (x1 - x2).hypot(y1 - y2) < 2.0 * r {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<line class="arrow" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="black" stroke-width="0.8" marker-end="url(#head)"/>"#
        );
    }
    for (i, &p) in sol.sites.iter().enumerate() {
        let (x, y) = f.map(p);
        let _ = writeln!(
            s,
            r#"<circle class="site" data-site="{i}" cx="{x:.3}" cy="{y:.3}" r="{r:.2}" fill="black"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}
