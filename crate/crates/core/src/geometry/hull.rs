use super::{orientation, PlanarPoint};

/// Strictly convex hull, counterclockwise from the lexicographically smallest point.
///
/// Collinear boundary points are dropped; all-collinear input yields its two
/// extreme points and a single distinct point yields itself.
pub fn convex_hull(points: &[PlanarPoint]) -> Vec<PlanarPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }

    // Andrew's monotone chain
    let mut hull: Vec<PlanarPoint> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && orientation(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && orientation(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    #[test]
    fn square_with_interior_point() {
        let hull = convex_hull(&[
            pt(1.0, 1.0),
            pt(0.5, 0.5),
            pt(0.0, 1.0),
            pt(0.0, 0.0),
            pt(1.0, 0.0),
        ]);
        assert_eq!(hull, vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)]);
    }

    #[test]
    fn collinear_input_gives_extremes() {
        let hull = convex_hull(&[pt(1.0, 1.0), pt(0.0, 0.0), pt(2.0, 2.0)]);
        assert_eq!(hull, vec![pt(0.0, 0.0), pt(2.0, 2.0)]);
    }

    #[test]
    fn single_and_duplicate_points() {
        assert_eq!(convex_hull(&[pt(3.0, 4.0)]), vec![pt(3.0, 4.0)]);
        assert_eq!(convex_hull(&[pt(3.0, 4.0), pt(3.0, 4.0)]), vec![pt(3.0, 4.0)]);
        assert!(convex_hull(&[]).is_empty());
    }

    #[test]
    fn collinear_edge_points_excluded() {
        let hull = convex_hull(&[
            pt(0.0, 0.0),
            pt(0.5, 0.0),
            pt(1.0, 0.0),
            pt(1.0, 1.0),
            pt(0.0, 1.0),
            pt(0.0, 0.5),
        ]);
        assert_eq!(hull.len(), 4);
    }
}
