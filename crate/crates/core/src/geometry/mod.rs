//! Planar computational geometry: predicates, distances, hulls, buffers and overlay areas.

mod hull;
mod overlay;
mod polyline;
mod predicates;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hull::convex_hull;
pub use overlay::{
    buffer_polyline, overlay_areas, polygon_intersection_area, region_intersection_area, Region,
    BUFFER_CHORDS_PER_QUARTER,
};
pub use polyline::{polyline_min_angle, polyline_min_angle_with, polyline_min_distance, AngleMode};
pub use predicates::{
    orientation, point_in_triangle, point_to_segment_distance, segment_bearing,
    segment_distance, segments_intersect, undirected_angle,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn dot(self, other: PlanarPoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: PlanarPoint) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: PlanarPoint) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for PlanarPoint {
    fn from(v: [f64; 2]) -> Self {
        PlanarPoint::new(v[0], v[1])
    }
}

impl From<PlanarPoint> for [f64; 2] {
    fn from(p: PlanarPoint) -> Self {
        [p.x, p.y]
    }
}

impl Add for PlanarPoint {
    type Output = PlanarPoint;
    fn add(self, o: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for PlanarPoint {
    type Output = PlanarPoint;
    fn sub(self, o: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for PlanarPoint {
    type Output = PlanarPoint;
    fn mul(self, k: f64) -> PlanarPoint {
        PlanarPoint::new(self.x * k, self.y * k)
    }
}

/// A closed segment with distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[PlanarPoint; 2]", into = "[PlanarPoint; 2]")]
pub struct Segment {
    a: PlanarPoint,
    b: PlanarPoint,
}

impl Segment {
    pub fn new(a: PlanarPoint, b: PlanarPoint) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::validation("segment", "non-finite endpoint"));
        }
        if a == b {
            return Err(Error::validation("segment", "endpoints coincide"));
        }
        Ok(Segment { a, b })
    }

    pub fn a(&self) -> PlanarPoint {
        self.a
    }

    pub fn b(&self) -> PlanarPoint {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

impl TryFrom<[PlanarPoint; 2]> for Segment {
    type Error = Error;
    fn try_from(v: [PlanarPoint; 2]) -> Result<Self> {
        Segment::new(v[0], v[1])
    }
}

impl From<Segment> for [PlanarPoint; 2] {
    fn from(s: Segment) -> Self {
        [s.a, s.b]
    }
}

/// An open polyline with at least two vertices and no consecutive duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<PlanarPoint>,
}

impl Polyline {
    /// Consecutive duplicate vertices are collapsed before validation.
    pub fn new(points: Vec<PlanarPoint>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("polyline", "non-finite vertex"));
        }
        let mut deduped: Vec<PlanarPoint> = Vec::with_capacity(points.len());
        for p in points {
            if deduped.last() != Some(&p) {
                deduped.push(p);
            }
        }
        if deduped.len() < 2 {
            return Err(Error::validation("polyline", "fewer than 2 distinct vertices"));
        }
        Ok(Polyline { points: deduped })
    }

    pub fn points(&self) -> &[PlanarPoint] {
        &self.points
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points
            .windows(2)
            .map(|w| Segment { a: w[0], b: w[1] })
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|s| s.length()).sum()
    }
}

/// Counterclockwise simple polygon; the ring is stored open (first != last).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplePolygon {
    ring: Vec<PlanarPoint>,
}

impl SimplePolygon {
    /// Accepts either orientation and an optionally closed ring; stores it CCW.
    pub fn new(mut ring: Vec<PlanarPoint>) -> Result<Self> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(Error::validation("polygon", "fewer than 3 vertices"));
        }
        if ring.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("polygon", "non-finite vertex"));
        }
        let area = signed_area(&ring);
        if area == 0.0 {
            return Err(Error::validation("polygon", "zero area"));
        }
        if area < 0.0 {
            ring.reverse();
        }
        let n = ring.len();
        for i in 0..n {
            let e1 = Segment::new(ring[i], ring[(i + 1) % n])
                .map_err(|_| Error::validation("polygon", "repeated vertex"))?;
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let e2 = Segment {
                    a: ring[j],
                    b: ring[(j + 1) % n],
                };
                if segments_intersect(e1, e2) {
                    return Err(Error::validation("polygon", "ring self-intersects"));
                }
            }
        }
        Ok(SimplePolygon { ring })
    }

    pub fn ring(&self) -> &[PlanarPoint] {
        &self.ring
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.ring)
    }
}

/// Shoelace signed area; positive for counterclockwise rings.
pub fn signed_area(ring: &[PlanarPoint]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| ring[i].cross(ring[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    #[test]
    fn degenerate_segment_rejected() {
        assert!(Segment::new(pt(1.0, 1.0), pt(1.0, 1.0)).is_err());
        assert!(Segment::new(pt(f64::NAN, 1.0), pt(1.0, 1.0)).is_err());
    }

    #[test]
    fn polygon_is_stored_ccw_and_open() {
        let cw = vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0), pt(1.0, 0.0), pt(0.0, 0.0)];
        let poly = SimplePolygon::new(cw).unwrap();
        assert_eq!(poly.ring().len(), 4);
        assert!((poly.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bowtie_rejected() {
        let bowtie = vec![pt(0.0, 0.0), pt(1.0, 1.0), pt(1.0, 0.0), pt(0.0, 1.0)];
        assert!(SimplePolygon::new(bowtie).is_err());
    }

    #[test]
    fn polyline_dedupes_and_validates() {
        let line = Polyline::new(vec![pt(0.0, 0.0), pt(0.0, 0.0), pt(1.0, 0.0)]).unwrap();
        assert_eq!(line.points().len(), 2);
        assert!(Polyline::new(vec![pt(0.0, 0.0), pt(0.0, 0.0)]).is_err());
    }
}
