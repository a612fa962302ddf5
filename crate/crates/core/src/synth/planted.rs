//! Labeled road/sidewalk pairs whose labels follow a known heuristic rule.
//!
//! Each pair is a straight road along the local x axis and a two-segment
//! sidewalk that starts at `(x0, d)` heading away at angle `θ`, then bends
//! further away. Its features are exactly `min_angle = θ` and `min_distance = d`,
//! so labels are set by choosing `θ` and `d` on the right side of each planted
//! threshold with a relative margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureConfig, FeatureVector};
use crate::geo_io::{unproject_local, Coordinate, CrsMode, FeatureSet, LineStringFeature, EARTH_RADIUS_M};
use crate::geometry::PlanarPoint;
use crate::heuristics::{predict, HeuristicKind, HeuristicSpec};
use crate::pairs::PairRecord;

const MAX_ANGLE_DEG: f64 = 60.0;
const DISTANCE_SPAN_M: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPairConfig {
    pub n: usize,
    /// Only parallel and clearance terms can be planted.
    pub rule: HeuristicSpec,
    /// Minimum slack from each threshold, relative to the threshold.
    pub margin: f64,
    pub positive_rate: f64,
    /// Uniform jitter (meters) on interior sidewalk vertices.
    pub jitter_m: f64,
    pub seed: u64,
    pub features: FeatureConfig,
}

impl Default for PlantedPairConfig {
    fn default() -> Self {
        PlantedPairConfig {
            n: 2000,
            rule: "p:5,c:2".parse().expect("static spec"),
            margin: 0.1,
            positive_rate: 0.5,
            jitter_m: 0.0,
            seed: 0,
            features: FeatureConfig {
                crs: CrsMode::Planar,
                ..FeatureConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ranges {
    angle_ok: (f64, f64),
    angle_bad: Option<(f64, f64)>,
    dist_ok: (f64, f64),
    dist_bad: Option<(f64, f64)>,
}

impl PlantedPairConfig {
    fn ranges(&self) -> Result<Ranges> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config(format!("margin must be in (0, 1), got {}", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(Error::Config("positive_rate must be in [0, 1]".into()));
        }
        if !(self.jitter_m >= 0.0) {
            return Err(Error::Config("jitter_m must be >= 0".into()));
        }
        if self.rule.threshold(HeuristicKind::Overlap).is_some() {
            return Err(Error::Config("overlap terms cannot be planted".into()));
        }
        let mut r = Ranges {
            angle_ok: (0.0, MAX_ANGLE_DEG),
            angle_bad: None,
            dist_ok: (0.0, DISTANCE_SPAN_M + 2.0),
            dist_bad: None,
        };
        if let Some(a) = self.rule.threshold(HeuristicKind::Parallel) {
            let bad_lo = a * (1.0 + self.margin);
            if bad_lo >= MAX_ANGLE_DEG {
                return Err(Error::Config(format!(
                    "angle threshold {a} leaves no room for violating pairs below {MAX_ANGLE_DEG} degrees"
                )));
            }
            r.angle_ok = (0.0, a * (1.0 - self.margin));
            r.angle_bad = Some((bad_lo, MAX_ANGLE_DEG.min(bad_lo * 4.0)));
        }
        if let Some(c) = self.rule.threshold(HeuristicKind::Clearance) {
            let ok_lo = c * (1.0 + self.margin);
            r.dist_ok = (ok_lo, ok_lo + DISTANCE_SPAN_M);
            r.dist_bad = Some((0.0, c * (1.0 - self.margin)));
        }
        Ok(r)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Local-frame geometry for one pair: `(road, sidewalk)`.
fn draw_shape(
    rng: &mut ChaCha8Rng,
    angle: f64,
    dist: f64,
    jitter: f64,
) -> (Vec<PlanarPoint>, Vec<PlanarPoint>) {
    let road_len = rng.gen_range(30.0..80.0);
    let road = vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(road_len, 0.0)];
    let x0 = rng.gen_range(0.2..0.5) * road_len;
    let (l1, l2) = (rng.gen_range(10.0..30.0), rng.gen_range(3.0..10.0));
    let bend = angle + rng.gen_range(3.0..15.0);
    let p0 = PlanarPoint::new(x0, dist);
    let t = angle.to_radians();
    let mut p1 = p0 + PlanarPoint::new(t.cos(), t.sin()) * l1;
    if jitter > 0.0 {
        p1 = p1 + PlanarPoint::new(rng.gen_range(-jitter..=jitter), rng.gen_range(-jitter..=jitter));
    }
    let b = bend.to_radians();
    let p2 = p1 + PlanarPoint::new(b.cos(), b.sin()) * l2;
    (road, vec![p0, p1, p2])
}

fn rigid(points: &[PlanarPoint], rot: f64, shift: PlanarPoint, mirror: bool) -> Vec<PlanarPoint> {
    let (s, c) = rot.sin_cos();
    points
        .iter()
        .map(|p| {
            let y = if mirror { -p.y } else { p.y };
            PlanarPoint::new(c * p.x - s * y, s * p.x + c * y) + shift
        })
        .collect()
}

fn has_slack(fv: &FeatureVector, spec: &HeuristicSpec, margin: f64) -> bool {
    spec.terms().iter().all(|t| {
        let v = match t.kind {
            HeuristicKind::Parallel => fv.min_angle_deg,
            HeuristicKind::Clearance => fv.min_distance_m,
            HeuristicKind::Overlap => fv.max_area,
        };
        (v - t.threshold).abs() >= margin * t.threshold * 0.999
    })
}

fn to_feature(id: String, pts: &[PlanarPoint], props: &[(&str, &str)], crs: CrsMode) -> Result<LineStringFeature> {
    LineStringFeature::new(
        id,
        pts.iter().map(|p| Coordinate::new(p.x, p.y)).collect(),
        props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        crs,
    )
}

/// Planar pairs `(sidewalk s{i}, road r{i})` labeled by the rule. Features are
/// recomputed for every pair and draws whose labels or margins do not survive
/// recomputation are redrawn.
pub fn generate_planted_pairs(cfg: &PlantedPairConfig) -> Result<Vec<PairRecord>> {
    planted_local(cfg)?
        .into_iter()
        .enumerate()
        .map(|(i, (road, sidewalk, label))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed).wrapping_add(i as u64));
            let rot = rng.gen_range(0.0..std::f64::consts::TAU);
            let shift = PlanarPoint::new(rng.gen_range(-1000.0..1000.0), rng.gen_range(-1000.0..1000.0));
            let mirror = rng.gen_bool(0.5);
            let road = to_feature(format!("r{i}"), &rigid(&road, rot, shift, mirror), &[("highway", "residential")], CrsMode::Planar)?;
            let sidewalk = to_feature(format!("s{i}"), &rigid(&sidewalk, rot, shift, mirror), &[], CrsMode::Planar)?;
            let fv = compute_features(&sidewalk, &road, &cfg.features)?;
            if predict(&fv, &cfg.rule) != label {
                return Err(Error::Config(format!("pair {i} does not reproduce its label")));
            }
            let mut rec = PairRecord::new(format!("s{i}|r{i}"), sidewalk, road).with_label(label);
            rec.features = Some(fv);
            Ok(rec)
        })
        .collect()
}

/// Road, sidewalk and label of one planted pair.
type LocalShape = (Vec<PlanarPoint>, Vec<PlanarPoint>, u8);

/// Untransformed local shapes with labels; each verified in the local frame.
fn planted_local(cfg: &PlantedPairConfig) -> Result<Vec<LocalShape>> {
    let ranges = cfg.ranges()?;
    let local_cfg = FeatureConfig {
        crs: CrsMode::Planar,
        ..cfg.features
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let label = u8::from(rng.gen_bool(cfg.positive_rate));
        // which terms a negative violates: bit 0 angle, bit 1 distance
        let violate = if label == 1 {
            0
        } else {
            let options: Vec<u8> = (1u8..=3)
                .filter(|m| (m & 1 == 0 || ranges.angle_bad.is_some()) && (m & 2 == 0 || ranges.dist_bad.is_some()))
                .collect();
            options[rng.gen_range(0..options.len())]
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Config("could not draw a pair with the requested margins".into()));
            }
            let angle = uniform(&mut rng, if violate & 1 != 0 { ranges.angle_bad.unwrap() } else { ranges.angle_ok });
            let dist = uniform(&mut rng, if violate & 2 != 0 { ranges.dist_bad.unwrap() } else { ranges.dist_ok });
            let (road, sidewalk) = draw_shape(&mut rng, angle, dist, cfg.jitter_m);
            let fv = crate::features::features_planar(
                &crate::geometry::Polyline::new(sidewalk.clone())?,
                &crate::geometry::Polyline::new(road.clone())?,
                &local_cfg,
            );
            if predict(&fv, &cfg.rule) == label && has_slack(&fv, &cfg.rule, cfg.margin) {
                out.push((road, sidewalk, label));
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub left_id: String,
    pub right_id: String,
    pub label: u8,
}

/// Geographic road and sidewalk layers plus gold labels.
#[derive(Debug, Clone)]
pub struct GeographicFixture {
    pub roads: FeatureSet,
    pub sidewalks: FeatureSet,
    pub labels: Vec<LabelRecord>,
}

/// The planted pairs laid out on a grid of `spacing_m` cells around `origin`,
/// one pair per cell, so buffered joins find exactly the planted pairs.
pub fn planted_geographic_fixture(
    cfg: &PlantedPairConfig,
    origin: Coordinate,
    spacing_m: f64,
) -> Result<GeographicFixture> {
    if !(spacing_m >= 200.0) {
        return Err(Error::Config("fixture spacing must be at least 200 m".into()));
    }
    let shapes = planted_local(cfg)?;
    let cols = (shapes.len() as f64).sqrt().ceil().max(1.0) as usize;
    let deg_lat = spacing_m / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
    let deg_lon = deg_lat / origin.lat.to_radians().cos();
    let mut roads = Vec::new();
    let mut sidewalks = Vec::new();
    let mut labels = Vec::new();
    let geo_cfg = FeatureConfig {
        crs: CrsMode::Geographic,
        ..cfg.features
    };
    for (i, (road, sidewalk, label)) in shapes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed).wrapping_add(i as u64));
        let rot = rng.gen_range(0.0..std::f64::consts::TAU);
        let mirror = rng.gen_bool(0.5);
        // center the pair in its cell
        let centre = PlanarPoint::new(-40.0, -20.0);
        let cell = Coordinate::new(
            origin.lon + (i % cols) as f64 * deg_lon,
            origin.lat + (i / cols) as f64 * deg_lat,
        );
        let place = |pts: &[PlanarPoint]| {
            let shifted: Vec<PlanarPoint> = pts.iter().map(|&p| p + centre).collect();
            unproject_local(&rigid(&shifted, rot, PlanarPoint::new(0.0, 0.0), mirror), cell)
                .into_iter()
                .map(|c| Coordinate::new(round_deg(c.lon), round_deg(c.lat)))
                .collect::<Vec<_>>()
        };
        let road = LineStringFeature::new(
            format!("r{i}"),
            place(&road),
            [("highway".to_string(), "residential".to_string())].into_iter().collect(),
            CrsMode::Geographic,
        )?;
        let sidewalk = LineStringFeature::new(
            format!("s{i}"),
            place(&sidewalk),
            [("footway".to_string(), "sidewalk".to_string())].into_iter().collect(),
            CrsMode::Geographic,
        )?;
        let fv = compute_features(&sidewalk, &road, &geo_cfg)?;
        if predict(&fv, &cfg.rule) != label || !has_slack(&fv, &cfg.rule, cfg.margin * 0.5) {
            return Err(Error::Config(format!("geographic pair {i} lost its planted label")));
        }
        labels.push(LabelRecord {
            left_id: sidewalk.id.clone(),
            right_id: road.id.clone(),
            label,
        });
        roads.push(road);
        sidewalks.push(sidewalk);
    }
    Ok(GeographicFixture {
        roads: FeatureSet::new(roads, CrsMode::Geographic)?,
        sidewalks: FeatureSet::new(sidewalks, CrsMode::Geographic)?,
        labels,
    })
}

/// Nine decimals is about 0.1 mm, far inside every margin.
fn round_deg(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::evaluate;

    #[test]
    fn labels_reproduce_under_rule() {
        let cfg = PlantedPairConfig {
            n: 300,
            seed: 4,
            ..Default::default()
        };
        let pairs = generate_planted_pairs(&cfg).unwrap();
        assert_eq!(pairs.len(), 300);
        let preds: Vec<u8> = pairs.iter().map(|p| predict(p.features.as_ref().unwrap(), &cfg.rule)).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.label.unwrap()).collect();
        assert_eq!(evaluate(&preds, &labels).unwrap().accuracy, 1.0);
        let pos = labels.iter().filter(|&&l| l == 1).count();
        assert!((100..200).contains(&pos), "{pos}");
    }

    #[test]
    fn deterministic() {
        let cfg = PlantedPairConfig {
            n: 20,
            seed: 9,
            jitter_m: 0.05,
            ..Default::default()
        };
        assert_eq!(generate_planted_pairs(&cfg).unwrap(), generate_planted_pairs(&cfg).unwrap());
    }

    #[test]
    fn empty_and_infeasible() {
        let cfg = PlantedPairConfig {
            n: 0,
            ..Default::default()
        };
        assert!(generate_planted_pairs(&cfg).unwrap().is_empty());

        let overlap = PlantedPairConfig {
            rule: "o:0.3".parse().unwrap(),
            ..Default::default()
        };
        assert!(matches!(generate_planted_pairs(&overlap), Err(Error::Config(_))));
        let wide = PlantedPairConfig {
            rule: "p:70".parse().unwrap(),
            ..Default::default()
        };
        assert!(matches!(generate_planted_pairs(&wide), Err(Error::Config(_))));
        let no_margin = PlantedPairConfig {
            margin: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_planted_pairs(&no_margin), Err(Error::Config(_))));
    }

    #[test]
    fn single_term_rules() {
        for rule in ["p:10", "c:3"] {
            let cfg = PlantedPairConfig {
                n: 50,
                rule: rule.parse().unwrap(),
                ..Default::default()
            };
            let pairs = generate_planted_pairs(&cfg).unwrap();
            assert!(pairs.iter().all(|p| predict(p.features.as_ref().unwrap(), &cfg.rule) == p.label.unwrap()));
        }
    }

    #[test]
    fn geographic_fixture_keeps_labels() {
        let cfg = PlantedPairConfig {
            n: 40,
            seed: 2,
            ..Default::default()
        };
        let fx = planted_geographic_fixture(&cfg, Coordinate::new(-122.2, 47.6), 500.0).unwrap();
        assert_eq!(fx.roads.len(), 40);
        assert_eq!(fx.labels.len(), 40);
        let local: Vec<u8> = planted_local(&cfg).unwrap().iter().map(|t| t.2).collect();
        let geo: Vec<u8> = fx.labels.iter().map(|l| l.label).collect();
        assert_eq!(local, geo);
    }
}
