//! The three per-pair geometric features: parallelism angle, clearance distance and buffer overlap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_io::{bbox_center, project_local, CrsMode, LineStringFeature};
use crate::geometry::{
    buffer_polyline, overlay_areas, polyline_min_angle_with, polyline_min_distance, AngleMode,
    PlanarPoint, Polyline,
};
use crate::pairs::PairRecord;

/// Recorded in report headers so feature values can be traced to their definitions.
pub const FEATURE_DEFINITION: &str = "features-v1: min_angle=acute segment angle (pairwise min or \
dominant orientation); min_distance=min segment distance in a local equirectangular frame about the \
pair's bbox center; max_area=max(I/A1, I/A2) of round buffers (64-gon caps) of overlap_buffer_m";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    #[serde(rename = "min_angle")]
    pub min_angle_deg: f64,
    #[serde(rename = "min_distance")]
    pub min_distance_m: f64,
    pub max_area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub overlap_buffer_m: f64,
    pub angle_mode: AngleMode,
    pub crs: CrsMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            overlap_buffer_m: 2.0,
            angle_mode: AngleMode::Pairwise,
            crs: CrsMode::Geographic,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_buffer_m > 0.0) || !self.overlap_buffer_m.is_finite() {
            return Err(Error::validation(
                "feature config",
                format!("overlap_buffer_m must be > 0, got {}", self.overlap_buffer_m),
            ));
        }
        Ok(())
    }
}

/// Projects both linestrings into one planar frame (meters).
pub fn planar_pair(
    left: &LineStringFeature,
    right: &LineStringFeature,
    crs: CrsMode,
) -> Result<(Polyline, Polyline)> {
    let (l, r) = match crs {
        CrsMode::Planar => {
            let conv = |f: &LineStringFeature| -> Vec<PlanarPoint> {
                f.coords.iter().map(|c| PlanarPoint::new(c.lon, c.lat)).collect()
            };
            (conv(left), conv(right))
        }
        CrsMode::Geographic => {
            let origin = bbox_center([left.coords.as_slice(), right.coords.as_slice()]);
            (
                project_local(&left.coords, origin)?,
                project_local(&right.coords, origin)?,
            )
        }
    };
    let named = |id: &str, e: Error| match e {
        Error::Validation { reason, .. } => Error::validation(format!("feature {id}"), reason),
        other => other,
    };
    Ok((
        Polyline::new(l).map_err(|e| named(&left.id, e))?,
        Polyline::new(r).map_err(|e| named(&right.id, e))?,
    ))
}

pub fn compute_features(
    left: &LineStringFeature,
    right: &LineStringFeature,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    cfg.validate()?;
    let (u, v) = planar_pair(left, right, cfg.crs)?;
    Ok(features_planar(&u, &v, cfg))
}

/// Feature computation on polylines already in meters.
pub fn features_planar(u: &Polyline, v: &Polyline, cfg: &FeatureConfig) -> FeatureVector {
    let min_angle_deg = polyline_min_angle_with(u, v, cfg.angle_mode).clamp(0.0, 90.0);
    let min_distance_m = polyline_min_distance(u, v);
    let bu = buffer_polyline(u, cfg.overlap_buffer_m).expect("validated buffer width");
    let bv = buffer_polyline(v, cfg.overlap_buffer_m).expect("validated buffer width");
    let (au, av, shared) = overlay_areas(&bu, &bv);
    let max_area = if shared > 0.0 {
        (shared / au).max(shared / av).clamp(0.0, 1.0)
    } else {
        0.0
    };
    FeatureVector {
        min_angle_deg,
        min_distance_m,
        max_area,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub pair_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub records: Vec<PairRecord>,
    pub errors: Vec<PairError>,
}

/// Fills features on every pair that can be computed, in input order.
/// Failing pairs are reported by id and left out of `records`.
pub fn compute_features_batch(pairs: Vec<PairRecord>, cfg: &FeatureConfig) -> Result<BatchOutcome> {
    cfg.validate()?;
    let results: Vec<std::result::Result<PairRecord, PairError>> = pairs
        .into_par_iter()
        .map(|mut pair| match compute_features(&pair.left, &pair.right, cfg) {
            Ok(fv) => {
                pair.features = Some(fv);
                Ok(pair)
            }
            Err(e) => Err(PairError {
                pair_id: pair.pair_id.clone(),
                message: e.to_string(),
            }),
        })
        .collect();

    let mut outcome = BatchOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(e) => {
                log::warn!("pair {}: {}", e.pair_id, e.message);
                outcome.errors.push(e);
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_io::Coordinate;

    fn planar(id: &str, pts: &[(f64, f64)]) -> LineStringFeature {
        LineStringFeature::new(
            id,
            pts.iter().map(|&(x, y)| Coordinate::new(x, y)).collect(),
            Default::default(),
            CrsMode::Planar,
        )
        .unwrap()
    }

    fn planar_cfg(buffer: f64) -> FeatureConfig {
        FeatureConfig {
            overlap_buffer_m: buffer,
            crs: CrsMode::Planar,
            ..Default::default()
        }
    }

    #[test]
    fn identical_linestrings() {
        let a = planar("a", &[(0.0, 0.0), (10.0, 2.0), (20.0, 1.0)]);
        let fv = compute_features(&a, &a, &planar_cfg(2.0)).unwrap();
        assert_eq!(
            fv,
            FeatureVector {
                min_angle_deg: 0.0,
                min_distance_m: 0.0,
                max_area: 1.0
            }
        );
        let rev = planar("b", &[(20.0, 1.0), (10.0, 2.0), (0.0, 0.0)]);
        assert_eq!(compute_features(&a, &rev, &planar_cfg(2.0)).unwrap().max_area, 1.0);
    }

    #[test]
    fn parallel_offset_with_disjoint_buffers() {
        let a = planar("a", &[(0.0, 0.0), (30.0, 0.0)]);
        let b = planar("b", &[(0.0, 3.0), (30.0, 3.0)]);
        let fv = compute_features(&a, &b, &planar_cfg(1.0)).unwrap();
        assert_eq!(fv.min_angle_deg, 0.0);
        assert_eq!(fv.min_distance_m, 3.0);
        assert_eq!(fv.max_area, 0.0);
    }

    #[test]
    fn overlap_is_symmetric_and_bounded() {
        let a = planar("a", &[(0.0, 0.0), (30.0, 0.0)]);
        let b = planar("b", &[(10.0, 1.0), (20.0, 2.0)]);
        let cfg = planar_cfg(2.0);
        let ab = compute_features(&a, &b, &cfg).unwrap();
        let ba = compute_features(&b, &a, &cfg).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.max_area > 0.5 && ab.max_area <= 1.0, "{}", ab.max_area);
    }

    #[test]
    fn geographic_pair_is_measured_in_meters() {
        // two parallel east-west lines ~11.1 m apart near Bellevue
        let geo = |id: &str, lat: f64| {
            LineStringFeature::new(
                id,
                vec![Coordinate::new(-122.2, lat), Coordinate::new(-122.199, lat)],
                Default::default(),
                CrsMode::Geographic,
            )
            .unwrap()
        };
        let fv = compute_features(&geo("a", 47.6), &geo("b", 47.6001), &FeatureConfig::default())
            .unwrap();
        assert!((fv.min_distance_m - 11.1195).abs() < 1e-3, "{}", fv.min_distance_m);
        assert!(fv.min_angle_deg < 1e-9);
    }

    #[test]
    fn bad_config_rejected() {
        let a = planar("a", &[(0.0, 0.0), (1.0, 0.0)]);
        assert!(compute_features(&a, &a, &planar_cfg(0.0)).is_err());
    }

    #[test]
    fn batch_keeps_order_and_collects_errors() {
        assert!(compute_features_batch(vec![], &planar_cfg(2.0)).unwrap().records.is_empty());

        let a = planar("a", &[(0.0, 0.0), (10.0, 0.0)]);
        let b = planar("b", &[(0.0, 3.0), (10.0, 3.0)]);
        let pairs: Vec<PairRecord> = (0..3)
            .map(|i| PairRecord::new(format!("p{i}"), a.clone(), b.clone()))
            .collect();
        let out = compute_features_batch(pairs, &planar_cfg(2.0)).unwrap();
        let ids: Vec<_> = out.records.iter().map(|r| r.pair_id.as_str()).collect();
        assert_eq!(ids, ["p0", "p1", "p2"]);
        assert!(out.records.iter().all(|r| r.features.is_some()));

        // geographic mode: a far-flung partner breaks the local projection
        let near = LineStringFeature::new(
            "n",
            vec![Coordinate::new(10.0, 10.0), Coordinate::new(10.001, 10.0)],
            Default::default(),
            CrsMode::Geographic,
        )
        .unwrap();
        let far = LineStringFeature::new(
            "f",
            vec![Coordinate::new(14.0, 10.0), Coordinate::new(14.001, 10.0)],
            Default::default(),
            CrsMode::Geographic,
        )
        .unwrap();
        let pairs = vec![
            PairRecord::new("ok", near.clone(), near.clone()),
            PairRecord::new("bad", near, far),
        ];
        let out = compute_features_batch(pairs, &FeatureConfig::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].pair_id, "bad");
    }
}
