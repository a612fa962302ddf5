//! Candidate pair generation (buffered join, intersection union) and dataset splits.

mod index;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use index::{boxes_overlap, BBox, SpatialIndex};

use crate::error::{Error, Result};
use crate::features::planar_pair;
use crate::geo_io::{CrsMode, FeatureSet, LineStringFeature, EARTH_RADIUS_M};
use crate::geometry::{buffer_polyline, segments_intersect, Region, Segment};
pub use crate::pairs::PairRecord;

/// Road classes likely to have a sidewalk alongside.
pub const DEFAULT_ROAD_TYPES: [&str; 5] =
    ["secondary", "residential", "tertiary", "primary", "living_street"];

pub const DEFAULT_JOIN_BUFFER_M: f64 = 10.0;

pub fn default_road_types() -> BTreeSet<String> {
    DEFAULT_ROAD_TYPES.iter().map(|s| s.to_string()).collect()
}

/// Keeps roads whose `highway` property is in `allowed`; roads without it are dropped.
pub fn filter_roads(roads: &FeatureSet, allowed: &BTreeSet<String>) -> FeatureSet {
    FeatureSet {
        features: roads
            .features
            .iter()
            .filter(|f| f.property("highway").is_some_and(|h| allowed.contains(h)))
            .cloned()
            .collect(),
        crs_mode: roads.crs_mode,
    }
}

pub fn pair_id(left: &str, right: &str) -> String {
    format!("{left}|{right}")
}

/// Road buffer in the road's local planar frame, paired with the frame's road
/// so sidewalks can be projected consistently.
struct BufferedRoad<'a> {
    road: &'a LineStringFeature,
    region: Region,
}

fn buffered_road(road: &LineStringFeature, buffer_m: f64, crs: CrsMode) -> Result<BufferedRoad<'_>> {
    let (line, _) = planar_pair(road, road, crs)?;
    Ok(BufferedRoad {
        road,
        region: buffer_polyline(&line, buffer_m)?,
    })
}

impl BufferedRoad<'_> {
    /// Sidewalks are projected about the road's own bbox center.
    fn hit_by(&self, sidewalk: &LineStringFeature, crs: CrsMode) -> Result<bool> {
        let line = match crs {
            CrsMode::Planar => planar_pair(sidewalk, sidewalk, crs)?.0,
            CrsMode::Geographic => {
                let origin = crate::geo_io::bbox_center([self.road.coords.as_slice()]);
                let pts = crate::geo_io::project_local(&sidewalk.coords, origin)?;
                crate::geometry::Polyline::new(pts)?
            }
        };
        Ok(self.region.intersects_polyline(&line))
    }
}

/// Does `sidewalk` intersect the `buffer_m` buffer of `road`? Exposed so callers
/// can check index-accelerated output against all-pairs evaluation.
pub fn join_predicate(
    road: &LineStringFeature,
    sidewalk: &LineStringFeature,
    buffer_m: f64,
    crs: CrsMode,
) -> Result<bool> {
    buffered_road(road, buffer_m, crs)?.hit_by(sidewalk, crs)
}

/// Do the two linestrings share at least one point?
pub fn union_predicate(a: &LineStringFeature, b: &LineStringFeature) -> bool {
    let segs = |f: &LineStringFeature| -> Vec<Segment> {
        f.coords
            .windows(2)
            .filter_map(|w| {
                Segment::new(
                    crate::geometry::PlanarPoint::new(w[0].lon, w[0].lat),
                    crate::geometry::PlanarPoint::new(w[1].lon, w[1].lat),
                )
                .ok()
            })
            .collect()
    };
    let sb = segs(b);
    segs(a)
        .into_iter()
        .any(|s| sb.iter().any(|&t| segments_intersect(s, t)))
}

/// Query box grown by `meters` (converted to degrees in geographic mode).
fn expand(b: BBox, meters: f64, crs: CrsMode) -> BBox {
    match crs {
        CrsMode::Planar => (b.0 - meters, b.1 - meters, b.2 + meters, b.3 + meters),
        CrsMode::Geographic => {
            let dlat = 1.01 * meters / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
            let max_abs_lat = (b.1.abs().max(b.3.abs()) + dlat).min(89.0);
            let dlon = dlat / max_abs_lat.to_radians().cos();
            (b.0 - dlon, b.1 - dlat, b.2 + dlon, b.3 + dlat)
        }
    }
}

/// One unlabeled `(sidewalk, road)` record per sidewalk touching a road's buffer,
/// ordered by `(road_id, sidewalk_id)`.
pub fn join_candidates(
    roads: &FeatureSet,
    sidewalks: &FeatureSet,
    buffer_m: f64,
) -> Result<Vec<PairRecord>> {
    if !(buffer_m > 0.0) {
        return Err(Error::validation("join buffer", format!("{buffer_m} is not > 0")));
    }
    if roads.crs_mode != sidewalks.crs_mode {
        return Err(Error::validation("join inputs", "roads and sidewalks use different CRS modes"));
    }
    let crs = roads.crs_mode;
    let index = SpatialIndex::build(sidewalks.features.iter().map(|f| f.bbox()).collect());

    let mut pairs = Vec::new();
    for road in &roads.features {
        let buffered = match buffered_road(road, buffer_m, crs) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("road {} skipped: {e}", road.id);
                continue;
            }
        };
        for id in index.query(expand(road.bbox(), buffer_m, crs)) {
            let sidewalk = &sidewalks.features[id];
            match buffered.hit_by(sidewalk, crs) {
                Ok(true) => pairs.push(PairRecord::new(
                    pair_id(&sidewalk.id, &road.id),
                    sidewalk.clone(),
                    road.clone(),
                )),
                Ok(false) => {}
                Err(e) => log::warn!("sidewalk {} vs road {} skipped: {e}", sidewalk.id, road.id),
            }
        }
    }
    pairs.sort_by(|a, b| {
        (a.right_id(), a.left_id()).cmp(&(b.right_id(), b.left_id()))
    });
    Ok(pairs)
}

/// One unlabeled `(a_i, b_j)` record per intersecting pair, ordered by `(a_id, b_id)`.
pub fn union_candidates(a: &FeatureSet, b: &FeatureSet) -> Result<Vec<PairRecord>> {
    if a.crs_mode != b.crs_mode {
        return Err(Error::validation("union inputs", "datasets use different CRS modes"));
    }
    let index = SpatialIndex::build(b.features.iter().map(|f| f.bbox()).collect());
    let mut pairs = Vec::new();
    for fa in &a.features {
        for id in index.query(fa.bbox()) {
            let fb = &b.features[id];
            if union_predicate(fa, fb) {
                pairs.push(PairRecord::new(pair_id(&fa.id, &fb.id), fa.clone(), fb.clone()));
            }
        }
    }
    pairs.sort_by(|x, y| (x.left_id(), x.right_id()).cmp(&(y.left_id(), y.right_id())));
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::validation("split", "ratios must be >= 0"));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("split", "ratios must sum to 1"));
        }
        Ok(())
    }

    /// Floor each bucket, then hand out the remainder train → val → test.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let ratios = [self.train, self.val, self.test];
        let mut sizes = ratios.map(|r| (r * n as f64 + 1e-9).floor() as usize);
        let mut i = 0;
        while sizes.iter().sum::<usize>() < n {
            sizes[i % 3] += 1;
            i += 1;
        }
        while sizes.iter().sum::<usize>() > n {
            // only reachable through the 1e-9 nudge on tiny ratios
            let j = (0..3).rev().find(|&j| sizes[j] > 0).expect("sum > n > 0");
            sizes[j] -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<PairRecord>,
    pub val: Vec<PairRecord>,
    pub test: Vec<PairRecord>,
}

/// Seeded shuffle, then contiguous train/val/test partition.
pub fn split_dataset(pairs: Vec<PairRecord>, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if let Some(p) = pairs.iter().find(|p| p.label.is_none()) {
        return Err(Error::validation(format!("pair {}", p.pair_id), "unlabeled pair in split"));
    }
    let mut pairs = pairs;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pairs.shuffle(&mut rng);
    let [n_train, n_val, _] = spec.sizes(pairs.len());
    let test = pairs.split_off(n_train + n_val);
    let val = pairs.split_off(n_train);
    Ok(Split {
        train: pairs,
        val,
        test,
    })
}
