//! Areas of unions and intersections of polygon sets by vertical-slab integration.
//!
//! Every vertex abscissa and every edge-crossing abscissa becomes a slab
//! boundary. Inside a slab no two edges cross, so the covered length of a
//! vertical line is linear in `x` and the midpoint rule integrates it exactly.

use std::f64::consts::PI;

use super::{convex_hull, segments_intersect, PlanarPoint, Polyline, Segment, SimplePolygon};
use crate::error::{Error, Result};

/// Chords used per quarter circle when discretizing round caps and joins.
pub const BUFFER_CHORDS_PER_QUARTER: usize = 16;

/// Union of simple polygons (pieces). Each piece is an open ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pieces: Vec<Vec<PlanarPoint>>,
}

impl Region {
    pub fn from_pieces(pieces: Vec<SimplePolygon>) -> Region {
        Region {
            pieces: pieces.into_iter().map(|p| p.ring().to_vec()).collect(),
        }
    }

    pub fn pieces(&self) -> &[Vec<PlanarPoint>] {
        &self.pieces
    }

    pub fn area(&self) -> f64 {
        overlay_areas(self, &Region { pieces: vec![] }).0
    }

    /// Even-odd containment, true if any piece holds `p`. Points exactly on
    /// a boundary may go either way.
    pub fn contains(&self, p: PlanarPoint) -> bool {
        self.pieces.iter().any(|ring| ring_contains(ring, p))
    }

    /// True if the polyline touches the region (a vertex inside or an edge crossing).
    pub fn intersects_polyline(&self, line: &Polyline) -> bool {
        let (lx0, ly0, lx1, ly1) = points_bbox(line.points());
        self.pieces.iter().any(|ring| {
            let (rx0, ry0, rx1, ry1) = points_bbox(ring);
            if lx1 < rx0 || rx1 < lx0 || ly1 < ry0 || ry1 < ly0 {
                return false;
            }
            if line.points().iter().any(|&p| ring_contains(ring, p)) {
                return true;
            }
            let n = ring.len();
            line.segments().any(|s| {
                (0..n).any(|i| {
                    Segment::new(ring[i], ring[(i + 1) % n])
                        .map(|e| segments_intersect(s, e))
                        .unwrap_or(false)
                })
            })
        })
    }
}

impl From<&SimplePolygon> for Region {
    fn from(p: &SimplePolygon) -> Self {
        Region {
            pieces: vec![p.ring().to_vec()],
        }
    }
}

/// Round-capped buffer of a polyline: the union of one capsule per segment.
///
/// Each capsule is the convex hull of two regular polygons with
/// `4 * BUFFER_CHORDS_PER_QUARTER` vertices inscribed in the radius-`width`
/// circles about the segment's endpoints.
pub fn buffer_polyline(line: &Polyline, width: f64) -> Result<Region> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::validation("buffer width", format!("{width} is not > 0")));
    }
    let n = 4 * BUFFER_CHORDS_PER_QUARTER;
    let disk: Vec<PlanarPoint> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            PlanarPoint::new(width * t.cos(), width * t.sin())
        })
        .collect();
    let pieces = line
        .segments()
        .map(|s| {
            let mut pts: Vec<PlanarPoint> = disk.iter().map(|&d| s.a() + d).collect();
            pts.extend(disk.iter().map(|&d| s.b() + d));
            convex_hull(&pts)
        })
        .collect();
    Ok(Region { pieces })
}

/// Area of `a ∩ b` for simple polygons.
pub fn polygon_intersection_area(a: &SimplePolygon, b: &SimplePolygon) -> f64 {
    overlay_areas(&Region::from(a), &Region::from(b)).2
}

pub fn region_intersection_area(a: &Region, b: &Region) -> f64 {
    overlay_areas(a, b).2
}

/// `(area(a), area(b), area(a ∩ b))`, all integrated over one common slab set,
/// so identical inputs produce bitwise-identical areas.
pub fn overlay_areas(a: &Region, b: &Region) -> (f64, f64, f64) {
    let edges = collect_edges(a, 0).chain(collect_edges(b, 1)).collect::<Vec<_>>();
    if edges.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let xs = breakpoints(&edges);

    let (mut area_a, mut area_b, mut area_ab) = (0.0, 0.0, 0.0);
    let mut ia = Vec::new();
    let mut ib = Vec::new();
    let mut scratch = Vec::new();
    for w in xs.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let xm = 0.5 * (w[0] + w[1]);
        covered_intervals(a, xm, &mut ia, &mut scratch);
        covered_intervals(b, xm, &mut ib, &mut scratch);
        area_a += width * measure(&ia);
        area_b += width * measure(&ib);
        area_ab += width * intersection_measure(&ia, &ib);
    }
    (area_a, area_b, area_ab)
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    p: PlanarPoint,
    q: PlanarPoint,
    region: u8,
    piece: usize,
}

impl Edge {
    fn x_range(&self) -> (f64, f64) {
        (self.p.x.min(self.q.x), self.p.x.max(self.q.x))
    }

    fn y_range(&self) -> (f64, f64) {
        (self.p.y.min(self.q.y), self.p.y.max(self.q.y))
    }
}

fn collect_edges(region: &Region, tag: u8) -> impl Iterator<Item = Edge> + '_ {
    region.pieces.iter().enumerate().flat_map(move |(piece, ring)| {
        let n = ring.len();
        (0..n).map(move |i| Edge {
            p: ring[i],
            q: ring[(i + 1) % n],
            region: tag,
            piece,
        })
    })
}

/// Sorted slab boundaries: all vertex x plus the x of every proper crossing
/// between edges of different pieces.
fn breakpoints(edges: &[Edge]) -> Vec<f64> {
    let mut xs: Vec<f64> = edges.iter().map(|e| e.p.x).collect();

    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&i, &j| edges[i].x_range().0.total_cmp(&edges[j].x_range().0));
    for (k, &i) in order.iter().enumerate() {
        let ei = edges[i];
        let (_, xmax) = ei.x_range();
        let (ylo, yhi) = ei.y_range();
        for &j in &order[k + 1..] {
            let ej = edges[j];
            if ej.x_range().0 > xmax {
                break;
            }
            if ei.region == ej.region && ei.piece == ej.piece {
                continue;
            }
            let (jlo, jhi) = ej.y_range();
            if jhi < ylo || jlo > yhi {
                continue;
            }
            if let Some(x) = crossing_x(ei, ej) {
                xs.push(x);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn crossing_x(e: Edge, f: Edge) -> Option<f64> {
    let r = e.q - e.p;
    let s = f.q - f.p;
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let d = f.p - e.p;
    let t = d.cross(s) / denom;
    let u = d.cross(r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(e.p.x + t * r.x)
}

/// Union of the intervals each piece covers on the vertical line at `x`.
/// `x` must not coincide with any vertex abscissa.
fn covered_intervals(
    region: &Region,
    x: f64,
    out: &mut Vec<(f64, f64)>,
    ys: &mut Vec<f64>,
) {
    out.clear();
    for ring in &region.pieces {
        ys.clear();
        let n = ring.len();
        for i in 0..n {
            let (p, q) = (ring[i], ring[(i + 1) % n]);
            if (p.x < x) != (q.x < x) {
                let t = (x - p.x) / (q.x - p.x);
                ys.push(p.y + t * (q.y - p.y));
            }
        }
        ys.sort_by(f64::total_cmp);
        out.extend(ys.chunks_exact(2).map(|c| (c[0], c[1])));
    }
    if out.len() < 2 {
        return;
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged = 0;
    for i in 1..out.len() {
        if out[i].0 <= out[merged].1 {
            out[merged].1 = out[merged].1.max(out[i].1);
        } else {
            merged += 1;
            out[merged] = out[i];
        }
    }
    out.truncate(merged + 1);
}

fn measure(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|(lo, hi)| hi - lo).sum()
}

/// Both inputs sorted and pairwise disjoint.
fn intersection_measure(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

fn ring_contains(ring: &[PlanarPoint], p: PlanarPoint) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn points_bbox(points: &[PlanarPoint]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    fn square(x: f64, y: f64, side: f64) -> SimplePolygon {
        SimplePolygon::new(vec![
            pt(x, y),
            pt(x + side, y),
            pt(x + side, y + side),
            pt(x, y + side),
        ])
        .unwrap()
    }

    #[test]
    fn square_overlaps() {
        let unit = square(0.0, 0.0, 1.0);
        assert!((polygon_intersection_area(&unit, &unit) - 1.0).abs() < 1e-15);
        assert_eq!(polygon_intersection_area(&unit, &square(3.0, 3.0, 1.0)), 0.0);
        assert!((polygon_intersection_area(&unit, &square(0.5, 0.0, 1.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn concave_polygon_area() {
        // L shape, area 3
        let ell = SimplePolygon::new(vec![
            pt(0.0, 0.0),
            pt(2.0, 0.0),
            pt(2.0, 1.0),
            pt(1.0, 1.0),
            pt(1.0, 2.0),
            pt(0.0, 2.0),
        ])
        .unwrap();
        assert!((Region::from(&ell).area() - 3.0).abs() < 1e-12);
        let notch = square(1.0, 1.0, 1.0);
        assert_eq!(polygon_intersection_area(&ell, &notch), 0.0);
        let mid = square(0.5, 0.5, 1.0);
        assert!((polygon_intersection_area(&ell, &mid) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn capsule_area_close_to_analytic() {
        let line = Polyline::new(vec![pt(0.0, 0.0), pt(10.0, 0.0)]).unwrap();
        let area = buffer_polyline(&line, 1.0).unwrap().area();
        let analytic = 20.0 + PI;
        assert!(((area - analytic) / analytic).abs() < 0.002, "{area}");
    }

    #[test]
    fn overlapping_capsules_are_not_double_counted() {
        // a hairpin: both segments' capsules overlap almost entirely
        let line = Polyline::new(vec![pt(0.0, 0.0), pt(10.0, 0.0), pt(0.0, 0.1)]).unwrap();
        let area = buffer_polyline(&line, 1.0).unwrap().area();
        assert!(area > 20.0 && area < 24.5, "{area}");
    }

    #[test]
    fn buffer_rejects_non_positive_width() {
        let line = Polyline::new(vec![pt(0.0, 0.0), pt(1.0, 0.0)]).unwrap();
        assert!(buffer_polyline(&line, 0.0).is_err());
        assert!(buffer_polyline(&line, -1.0).is_err());
    }

    #[test]
    fn polyline_region_intersection() {
        let line = Polyline::new(vec![pt(0.0, 0.0), pt(10.0, 0.0)]).unwrap();
        let buf = buffer_polyline(&line, 10.0).unwrap();
        let near = Polyline::new(vec![pt(0.0, 5.0), pt(10.0, 5.0)]).unwrap();
        let far = Polyline::new(vec![pt(0.0, 25.0), pt(10.0, 25.0)]).unwrap();
        let through = Polyline::new(vec![pt(5.0, -30.0), pt(5.0, 30.0)]).unwrap();
        assert!(buf.intersects_polyline(&near));
        assert!(!buf.intersects_polyline(&far));
        assert!(buf.intersects_polyline(&through));
    }
}
