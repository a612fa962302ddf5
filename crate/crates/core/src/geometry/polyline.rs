use serde::{Deserialize, Serialize};

use super::{segment_bearing, segment_distance, undirected_angle, Polyline};

/// How the parallelism angle between two polylines is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleMode {
    /// Minimum over all segment pairs.
    #[default]
    Pairwise,
    /// Difference of the length-weighted mean orientations.
    Dominant,
}

impl std::str::FromStr for AngleMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "pairwise" => Ok(AngleMode::Pairwise),
            "dominant" => Ok(AngleMode::Dominant),
            other => Err(crate::Error::validation("angle mode", format!("unknown mode {other:?}"))),
        }
    }
}

/// Smallest acute angle, in degrees, between any segment of `u` and any segment of `v`.
pub fn polyline_min_angle(u: &Polyline, v: &Polyline) -> f64 {
    polyline_min_angle_with(u, v, AngleMode::Pairwise)
}

pub fn polyline_min_angle_with(u: &Polyline, v: &Polyline, mode: AngleMode) -> f64 {
    match mode {
        AngleMode::Pairwise => {
            let vb: Vec<f64> = v.segments().map(segment_bearing).collect();
            u.segments()
                .map(segment_bearing)
                .flat_map(|a| vb.iter().map(move |&b| undirected_angle(a, b)))
                .fold(f64::INFINITY, f64::min)
        }
        AngleMode::Dominant => undirected_angle(dominant_bearing(u), dominant_bearing(v)),
    }
}

/// Length-weighted mean of undirected segment orientations, via doubled angles.
fn dominant_bearing(line: &Polyline) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for s in line.segments() {
        let doubled = 2.0 * segment_bearing(s).to_radians();
        sx += s.length() * doubled.cos();
        sy += s.length() * doubled.sin();
    }
    sy.atan2(sx).to_degrees() / 2.0
}

/// Minimum distance between the two polylines; zero when they intersect.
pub fn polyline_min_distance(u: &Polyline, v: &Polyline) -> f64 {
    let mut best = f64::INFINITY;
    for s in u.segments() {
        for t in v.segments() {
            best = best.min(segment_distance(s, t));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}
