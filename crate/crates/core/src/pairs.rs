//! Candidate pair records and their JSON-lines file format.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::geo_io::{linestring_coords, CrsMode, LineStringFeature};

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair_id: String,
    pub left: LineStringFeature,
    pub right: LineStringFeature,
    pub label: Option<u8>,
    pub features: Option<FeatureVector>,
}

/// One line of a pair file. Geometries are inline GeoJSON geometry objects.
#[derive(Debug, Serialize, Deserialize)]
struct PairLine {
    pair_id: String,
    left_id: String,
    right_id: String,
    left_geom: Value,
    right_geom: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<FeatureVector>,
}

impl PairRecord {
    pub fn new(pair_id: impl Into<String>, left: LineStringFeature, right: LineStringFeature) -> Self {
        PairRecord {
            pair_id: pair_id.into(),
            left,
            right,
            label: None,
            features: None,
        }
    }

    pub fn left_id(&self) -> &str {
        &self.left.id
    }

    pub fn right_id(&self) -> &str {
        &self.right.id
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn to_json_line(&self) -> String {
        let line = PairLine {
            pair_id: self.pair_id.clone(),
            left_id: self.left.id.clone(),
            right_id: self.right.id.clone(),
            left_geom: self.left.geometry_json(),
            right_geom: self.right.geometry_json(),
            label: self.label,
            features: self.features,
        };
        serde_json::to_string(&line).expect("pair lines always serialize")
    }

    pub fn from_json_line(text: &str, crs: CrsMode) -> Result<Self> {
        let line: PairLine = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("pair record: {e}")))?;
        if let Some(label) = line.label {
            if label > 1 {
                return Err(Error::validation(
                    format!("pair {}", line.pair_id),
                    format!("label {label} is not 0 or 1"),
                ));
            }
        }
        let left = LineStringFeature::new(
            line.left_id.clone(),
            linestring_coords(&line.left_geom, &line.left_id)?,
            Default::default(),
            crs,
        )?;
        let right = LineStringFeature::new(
            line.right_id.clone(),
            linestring_coords(&line.right_geom, &line.right_id)?,
            Default::default(),
            crs,
        )?;
        Ok(PairRecord {
            pair_id: line.pair_id,
            left,
            right,
            label: line.label,
            features: line.features,
        })
    }
}

pub fn write_pairs<W: Write>(mut out: W, pairs: &[PairRecord]) -> std::io::Result<()> {
    for p in pairs {
        writeln!(out, "{}", p.to_json_line())?;
    }
    out.flush()
}

/// Reads a pair file, rejecting duplicate pair ids. Blank lines are ignored.
pub fn read_pairs<R: BufRead>(input: R, crs: CrsMode) -> Result<Vec<PairRecord>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = PairRecord::from_json_line(&line, crs).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("line {}: {msg}", n + 1)),
            other => other,
        })?;
        if !seen.insert(record.pair_id.clone()) {
            return Err(Error::validation(
                "pair file",
                format!("duplicate pair_id {:?}", record.pair_id),
            ));
        }
        pairs.push(record);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_io::Coordinate;

    fn feature(id: &str, pts: &[(f64, f64)]) -> LineStringFeature {
        LineStringFeature::new(
            id,
            pts.iter().map(|&(x, y)| Coordinate::new(x, y)).collect(),
            Default::default(),
            CrsMode::Planar,
        )
        .unwrap()
    }

    #[test]
    fn json_line_round_trip() {
        let mut rec = PairRecord::new(
            "s1|r1",
            feature("s1", &[(0.0, 0.0), (1.0, 0.5)]),
            feature("r1", &[(0.0, 3.0), (10.0, 3.0)]),
        )
        .with_label(1);
        rec.features = Some(FeatureVector {
            min_angle_deg: 1.5,
            min_distance_m: 2.0,
            max_area: 0.25,
        });
        let text = rec.to_json_line();
        assert!(text.contains("\"left_geom\":{\"coordinates\""));
        assert!(text.contains("\"min_angle\":1.5"));
        let back = PairRecord::from_json_line(&text, CrsMode::Planar).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn label_outside_range_rejected() {
        let text = r#"{"pair_id":"p","left_id":"a","right_id":"b",
            "left_geom":{"type":"LineString","coordinates":[[0,0],[1,0]]},
            "right_geom":{"type":"LineString","coordinates":[[0,1],[1,1]]},"label":2}"#;
        assert!(PairRecord::from_json_line(text, CrsMode::Planar).is_err());
    }

    #[test]
    fn duplicate_pair_ids_rejected() {
        let rec = PairRecord::new(
            "p",
            feature("a", &[(0.0, 0.0), (1.0, 0.0)]),
            feature("b", &[(0.0, 1.0), (1.0, 1.0)]),
        );
        let text = format!("{}\n\n{}\n", rec.to_json_line(), rec.to_json_line());
        assert!(read_pairs(text.as_bytes(), CrsMode::Planar).is_err());
        let single = format!("{}\n", rec.to_json_line());
        assert_eq!(read_pairs(single.as_bytes(), CrsMode::Planar).unwrap().len(), 1);
    }
}
