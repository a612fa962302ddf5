//! GeoJSON feature collections, linestring validation and the local planar frame.
//!
//! Geographic input is WGS84 `[lon, lat]`. With [`CrsMode::Planar`] the same
//! coordinate slots carry `x`/`y` in meters and no range checks apply.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Largest offset from the projection origin accepted by [`project_local`], in degrees.
pub const MAX_LOCAL_EXTENT_DEG: f64 = 1.0;

/// Projection origins beyond this latitude are rejected as polar.
const MAX_ORIGIN_LAT_DEG: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Coordinate {
    pub lon: f64,
    pub lat: f64,
}

impl Coordinate {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Coordinate { lon, lat }
    }

    fn validate(&self, crs: CrsMode) -> std::result::Result<(), String> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(format!("non-finite coordinate ({}, {})", self.lon, self.lat));
        }
        if crs == CrsMode::Geographic
            && (!(-180.0..=180.0).contains(&self.lon) || !(-90.0..=90.0).contains(&self.lat))
        {
            return Err(format!(
                "coordinate ({}, {}) outside lon [-180,180] / lat [-90,90]",
                self.lon, self.lat
            ));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Coordinate {
    fn from(v: [f64; 2]) -> Self {
        Coordinate::new(v[0], v[1])
    }
}

impl From<Coordinate> for [f64; 2] {
    fn from(c: Coordinate) -> Self {
        [c.lon, c.lat]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrsMode {
    /// WGS84 longitude/latitude in degrees.
    #[default]
    Geographic,
    /// Coordinates are already meters in a planar frame.
    Planar,
}

impl std::str::FromStr for CrsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geographic" => Ok(CrsMode::Geographic),
            "planar" => Ok(CrsMode::Planar),
            other => Err(Error::validation("crs mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineStringFeature {
    pub id: String,
    pub coords: Vec<Coordinate>,
    pub properties: BTreeMap<String, String>,
}

impl LineStringFeature {
    /// Builds a feature, collapsing consecutive duplicate vertices and
    /// rejecting anything left with fewer than two vertices.
    pub fn new(
        id: impl Into<String>,
        coords: Vec<Coordinate>,
        properties: BTreeMap<String, String>,
        crs: CrsMode,
    ) -> Result<Self> {
        let id = id.into();
        for c in &coords {
            c.validate(crs)
                .map_err(|reason| Error::validation(format!("feature {id}"), reason))?;
        }
        let mut deduped: Vec<Coordinate> = Vec::with_capacity(coords.len());
        for c in coords {
            if deduped.last() != Some(&c) {
                deduped.push(c);
            }
        }
        if deduped.len() < 2 {
            return Err(Error::validation(
                format!("feature {id}"),
                "LineString has fewer than 2 distinct vertices",
            ));
        }
        Ok(LineStringFeature {
            id,
            coords: deduped,
            properties,
        })
    }

    pub fn property(&self, key: &str) -> Option<&str> {
        self.properties.get(key).map(String::as_str)
    }

    /// `(min_lon, min_lat, max_lon, max_lat)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        coords_bbox(&self.coords)
    }

    /// GeoJSON geometry object for this linestring.
    pub fn geometry_json(&self) -> Value {
        json!({
            "type": "LineString",
            "coordinates": self.coords.iter().map(|c| [c.lon, c.lat]).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<LineStringFeature>,
    pub crs_mode: CrsMode,
}

impl FeatureSet {
    pub fn new(features: Vec<LineStringFeature>, crs_mode: CrsMode) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::validation(
                    "feature set",
                    format!("duplicate feature id {:?}", f.id),
                ));
            }
        }
        Ok(FeatureSet { features, crs_mode })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Parses a WGS84 GeoJSON FeatureCollection.
pub fn parse_geojson(bytes: &[u8]) -> Result<FeatureSet> {
    parse_geojson_with(bytes, CrsMode::Geographic)
}

/// Parses a GeoJSON FeatureCollection, keeping LineString features only.
///
/// Point and Polygon features are skipped. A feature without an `id` gets
/// `f{index}`, where index is its position in the collection.
pub fn parse_geojson_with(bytes: &[u8], crs: CrsMode) -> Result<FeatureSet> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("GeoJSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse("expected a GeoJSON FeatureCollection".into()));
    }
    let raw = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("FeatureCollection without a features array".into()))?;

    let mut features = Vec::with_capacity(raw.len());
    for (index, feature) in raw.iter().enumerate() {
        let id = match feature.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("f{index}"),
        };
        let Some(geometry) = feature.get("geometry").filter(|g| !g.is_null()) else {
            log::debug!("feature {id}: null geometry skipped");
            continue;
        };
        match geometry.get("type").and_then(Value::as_str) {
            Some("LineString") => {}
            Some(other) => {
                log::debug!("feature {id}: {other} geometry skipped");
                continue;
            }
            None => return Err(Error::Parse(format!("feature {id}: geometry without type"))),
        }
        let coords = linestring_coords(geometry, &id)?;
        let properties = feature
            .get("properties")
            .and_then(Value::as_object)
            .map(|props| {
                props
                    .iter()
                    .filter(|(_, v)| !v.is_null())
                    .map(|(k, v)| {
                        let v = match v {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        (k.clone(), v)
                    })
                    .collect()
            })
            .unwrap_or_default();
        features.push(LineStringFeature::new(id, coords, properties, crs)?);
    }
    FeatureSet::new(features, crs)
}

/// Reads the coordinates of an inline GeoJSON LineString geometry.
pub fn linestring_coords(geometry: &Value, id: &str) -> Result<Vec<Coordinate>> {
    if geometry.get("type").and_then(Value::as_str) != Some("LineString") {
        return Err(Error::Parse(format!("feature {id}: expected a LineString geometry")));
    }
    let raw = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse(format!("feature {id}: LineString without coordinates")))?;
    raw.iter()
        .map(|pos| {
            let pos = pos.as_array().filter(|p| p.len() >= 2).ok_or_else(|| {
                Error::Parse(format!("feature {id}: position is not an array of numbers"))
            })?;
            match (pos[0].as_f64(), pos[1].as_f64()) {
                (Some(lon), Some(lat)) => Ok(Coordinate::new(lon, lat)),
                _ => Err(Error::Parse(format!("feature {id}: non-numeric position"))),
            }
        })
        .collect()
}

pub fn to_geojson(set: &FeatureSet) -> Value {
    let features: Vec<Value> = set
        .features
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "id": f.id,
                "properties": f.properties,
                "geometry": f.geometry_json(),
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn serialize_geojson(set: &FeatureSet) -> Vec<u8> {
    serde_json::to_vec_pretty(&to_geojson(set)).expect("GeoJSON values always serialize")
}

pub fn coords_bbox(coords: &[Coordinate]) -> (f64, f64, f64, f64) {
    coords.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), c| (x0.min(c.lon), y0.min(c.lat), x1.max(c.lon), y1.max(c.lat)),
    )
}

/// Center of the joint bounding box of several coordinate lists.
pub fn bbox_center<'a>(parts: impl IntoIterator<Item = &'a [Coordinate]>) -> Coordinate {
    let (x0, y0, x1, y1) = parts.into_iter().map(coords_bbox).fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
    );
    Coordinate::new((x0 + x1) / 2.0, (y0 + y1) / 2.0)
}

/// Equirectangular projection about `origin`, in meters.
pub fn project_local(coords: &[Coordinate], origin: Coordinate) -> Result<Vec<PlanarPoint>> {
    if !origin.lat.is_finite() || origin.lat.abs() > MAX_ORIGIN_LAT_DEG {
        return Err(Error::Extent(format!(
            "projection origin latitude {} is outside ±{MAX_ORIGIN_LAT_DEG}°",
            origin.lat
        )));
    }
    let deg = std::f64::consts::PI / 180.0;
    let kx = EARTH_RADIUS_M * (origin.lat * deg).cos() * deg;
    let ky = EARTH_RADIUS_M * deg;
    coords
        .iter()
        .map(|c| {
            let dlon = c.lon - origin.lon;
            let dlat = c.lat - origin.lat;
            if !(dlon.abs() <= MAX_LOCAL_EXTENT_DEG && dlat.abs() <= MAX_LOCAL_EXTENT_DEG) {
                return Err(Error::Extent(format!(
                    "({}, {}) is more than {MAX_LOCAL_EXTENT_DEG}° from origin ({}, {})",
                    c.lon, c.lat, origin.lon, origin.lat
                )));
            }
            Ok(PlanarPoint::new(kx * dlon, ky * dlat))
        })
        .collect()
}

/// Inverse of [`project_local`].
pub fn unproject_local(points: &[PlanarPoint], origin: Coordinate) -> Vec<Coordinate> {
    let deg = std::f64::consts::PI / 180.0;
    let kx = EARTH_RADIUS_M * (origin.lat * deg).cos() * deg;
    let ky = EARTH_RADIUS_M * deg;
    points
        .iter()
        .map(|p| Coordinate::new(origin.lon + p.x / kx, origin.lat + p.y / ky))
        .collect()
}

/// Great-circle distance in meters.
pub fn haversine_m(a: Coordinate, b: Coordinate) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collection(coords: &str) -> String {
        format!(
            r#"{{"type":"FeatureCollection","features":[
                {{"type":"Feature","properties":{{"highway":"residential"}},
                  "geometry":{{"type":"LineString","coordinates":{coords}}}}}]}}"#
        )
    }

    #[test]
    fn parses_a_three_vertex_linestring() {
        let set = parse_geojson(collection("[[0,0],[0.001,0],[0.002,0.001]]").as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.features[0].coords.len(), 3);
        assert_eq!(set.features[0].id, "f0");
        assert_eq!(set.features[0].property("highway"), Some("residential"));
    }

    #[test]
    fn collapses_consecutive_duplicates() {
        let set = parse_geojson(collection("[[0,0],[0,0],[1,1]]").as_bytes()).unwrap();
        assert_eq!(
            set.features[0].coords,
            vec![Coordinate::new(0.0, 0.0), Coordinate::new(1.0, 1.0)]
        );
    }

    #[test]
    fn single_vertex_is_a_validation_error_naming_the_feature() {
        let err = parse_geojson(collection("[[0,0]]").as_bytes()).unwrap_err();
        match err {
            Error::Validation { what, .. } => assert_eq!(what, "feature f0"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_geojson(collection("[[0,0],[0,0]]").as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_geojson(b"{not json"), Err(Error::Parse(_))));
        assert!(matches!(parse_geojson(b"{\"type\":\"Feature\"}"), Err(Error::Parse(_))));
    }

    #[test]
    fn out_of_range_latitude_rejected_only_in_geographic_mode() {
        let doc = collection("[[0,0],[10,95]]");
        assert!(parse_geojson(doc.as_bytes()).is_err());
        assert!(parse_geojson_with(doc.as_bytes(), CrsMode::Planar).is_ok());
    }

    #[test]
    fn non_linestring_features_are_skipped_and_ids_kept() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","id":"pt","properties":{},"geometry":{"type":"Point","coordinates":[0,0]}},
            {"type":"Feature","id":7,"properties":null,"geometry":{"type":"LineString","coordinates":[[0,0],[1,0]]}},
            {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,1],[1,1]]}}]}"#;
        let set = parse_geojson(doc.as_bytes()).unwrap();
        let ids: Vec<_> = set.features.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["7", "f2"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","id":"a","geometry":{"type":"LineString","coordinates":[[0,0],[1,0]]}},
            {"type":"Feature","id":"a","geometry":{"type":"LineString","coordinates":[[0,1],[1,1]]}}]}"#;
        assert!(matches!(parse_geojson(doc.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn origin_projects_to_zero() {
        let o = Coordinate::new(-122.2, 47.6);
        let p = project_local(&[o], o).unwrap();
        assert_eq!(p[0], PlanarPoint::new(0.0, 0.0));
    }

    #[test]
    fn northward_offset_of_a_millidegree() {
        let o = Coordinate::new(-122.2, 47.6);
        let p = project_local(&[Coordinate::new(o.lon, o.lat + 1e-3)], o).unwrap();
        // R * pi / 180 * 1e-3
        assert!((p[0].y - 111.195_080_234).abs() < 1e-6, "{}", p[0].y);
        assert_eq!(p[0].x, 0.0);
    }

    #[test]
    fn extent_and_polar_errors() {
        let o = Coordinate::new(0.0, 0.0);
        assert!(matches!(
            project_local(&[Coordinate::new(1.5, 0.0)], o),
            Err(Error::Extent(_))
        ));
        assert!(matches!(
            project_local(&[Coordinate::new(179.9, 0.0)], Coordinate::new(-179.9, 0.0)),
            Err(Error::Extent(_))
        ));
        let polar = Coordinate::new(0.0, 89.0);
        assert!(matches!(project_local(&[polar], polar), Err(Error::Extent(_))));
    }

    #[test]
    fn haversine_reference_values() {
        let a = Coordinate::new(10.0, 0.0);
        assert_eq!(haversine_m(a, a), 0.0);
        let b = Coordinate::new(11.0, 0.0);
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((haversine_m(a, b) - expected).abs() < 1e-6);
        assert!((expected - 111_195.08).abs() < 0.01);
        let c = Coordinate::new(-122.1, 47.61);
        let d = Coordinate::new(-122.2, 47.58);
        assert_eq!(haversine_m(c, d), haversine_m(d, c));
    }

    #[test]
    fn serialize_then_parse_is_a_fixed_point() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"highway":"primary","lanes":2},
             "geometry":{"type":"LineString","coordinates":[[-122.2,47.6],[-122.2,47.6],[-122.19,47.61]]}}]}"#;
        let once = parse_geojson(doc.as_bytes()).unwrap();
        let twice = parse_geojson(&serialize_geojson(&once)).unwrap();
        assert_eq!(once, twice);
        assert_eq!(serialize_geojson(&once), serialize_geojson(&twice));
    }
}
