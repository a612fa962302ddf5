use super::{PlanarPoint, Segment};
use crate::error::{Error, Result};

/// Relative threshold below which a cross product counts as collinear.
const COLLINEAR_EPS: f64 = 1e-12;

/// Minimum |signed area| of a triangle accepted by [`point_in_triangle`].
const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Sign of the turn `p -> q -> r`: `+1` left, `-1` right, `0` collinear.
///
/// The cross product is compared against `1e-12 * scale^2`, where scale is the
/// largest coordinate magnitude of `q - p` and `r - p`.
pub fn orientation(p: PlanarPoint, q: PlanarPoint, r: PlanarPoint) -> i8 {
    let u = q - p;
    let v = r - p;
    let cross = u.cross(v);
    let scale = u.x.abs().max(u.y.abs()).max(v.x.abs()).max(v.y.abs());
    if cross.abs() < COLLINEAR_EPS * scale * scale || cross == 0.0 {
        0
    } else if cross > 0.0 {
        1
    } else {
        -1
    }
}

pub fn point_to_segment_distance(p: PlanarPoint, s: Segment) -> f64 {
    let (a, b) = (s.a(), s.b());
    let ab = b - a;
    let t = (p - a).dot(ab) / ab.dot(ab);
    if t <= 0.0 {
        return p.distance(a);
    }
    if t >= 1.0 {
        return p.distance(b);
    }
    // never report more than the nearer endpoint, even by an ulp
    p.distance(a + ab * t).min(p.distance(a)).min(p.distance(b))
}

/// Bounding-box test used once `p`, `q`, `r` are known to be collinear.
fn within_box(p: PlanarPoint, q: PlanarPoint, r: PlanarPoint) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

/// Closed-segment intersection; touching endpoints intersect.
pub fn segments_intersect(s1: Segment, s2: Segment) -> bool {
    let (p1, q1, p2, q2) = (s1.a(), s1.b(), s2.a(), s2.b());
    let o1 = orientation(p1, q1, p2);
    let o2 = orientation(p1, q1, q2);
    let o3 = orientation(p2, q2, p1);
    let o4 = orientation(p2, q2, q1);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && within_box(p1, q1, p2))
        || (o2 == 0 && within_box(p1, q1, q2))
        || (o3 == 0 && within_box(p2, q2, p1))
        || (o4 == 0 && within_box(p2, q2, q1))
}

/// Shortest distance between two closed segments.
pub fn segment_distance(s1: Segment, s2: Segment) -> f64 {
    if segments_intersect(s1, s2) {
        return 0.0;
    }
    point_to_segment_distance(s1.a(), s2)
        .min(point_to_segment_distance(s1.b(), s2))
        .min(point_to_segment_distance(s2.a(), s1))
        .min(point_to_segment_distance(s2.b(), s1))
}

/// Boundary-inclusive containment test.
pub fn point_in_triangle(p: PlanarPoint, t: [PlanarPoint; 3]) -> Result<bool> {
    let [a, b, c] = t;
    let doubled = (b - a).cross(c - a);
    if !doubled.is_finite() || (doubled / 2.0).abs() <= MIN_TRIANGLE_AREA {
        return Err(Error::validation("triangle", "degenerate (near-zero area)"));
    }
    let winding: i8 = if doubled > 0.0 { 1 } else { -1 };
    Ok([(a, b), (b, c), (c, a)]
        .iter()
        .all(|&(u, v)| orientation(u, v, p) * winding >= 0))
}

/// Direction of travel from `a` to `b`, degrees counterclockwise from +x, in `[0, 360)`.
pub fn segment_bearing(s: Segment) -> f64 {
    let d = s.b() - s.a();
    let mut deg = d.y.atan2(d.x).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    if deg >= 360.0 {
        deg -= 360.0;
    }
    deg + 0.0
}

/// Acute angle in `[0, 90]` between two undirected directions given as bearings.
pub fn undirected_angle(bearing1: f64, bearing2: f64) -> f64 {
    let d = (bearing1 - bearing2).abs() % 180.0;
    d.min(180.0 - d)
}
