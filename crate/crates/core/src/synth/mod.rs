//! Seeded unit-square geometry tasks with exact truths and a grader, plus
//! planted-rule pair generation.

mod planted;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use planted::{
    generate_planted_pairs, planted_geographic_fixture, GeographicFixture, LabelRecord,
    PlantedPairConfig,
};

use crate::error::{Error, Result};
use crate::geometry::{
    convex_hull, point_in_triangle, point_to_segment_distance, segments_intersect,
    PlanarPoint, Segment,
};
use crate::report::{sig6, SCHEMA_VERSION};

/// Absolute tolerance for distance answers.
pub const P2S_TOLERANCE: f64 = 1e-3;
/// Per-coordinate tolerance when matching hull vertices.
pub const CH_COORD_TOLERANCE: f64 = 1e-9;

const MIN_TRIANGLE_AREA: f64 = 0.01;
const MIN_SEGMENT_LENGTH: f64 = 0.05;
const MIN_BOUNDARY_GAP: f64 = 1e-3;
const MIN_POINT_SPACING: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    P2s,
    Sc,
    Si,
    Ch,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::P2s, TaskKind::Sc, TaskKind::Si, TaskKind::Ch];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::P2s => "p2s",
            TaskKind::Sc => "sc",
            TaskKind::Si => "si",
            TaskKind::Ch => "ch",
        }
    }

    fn salt(self) -> u64 {
        match self {
            TaskKind::P2s => 0x9e37_79b9_0000_0001,
            TaskKind::Sc => 0x9e37_79b9_0000_0002,
            TaskKind::Si => 0x9e37_79b9_0000_0003,
            TaskKind::Ch => 0x9e37_79b9_0000_0004,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2s" => Ok(TaskKind::P2s),
            "sc" => Ok(TaskKind::Sc),
            "si" => Ok(TaskKind::Si),
            "ch" => Ok(TaskKind::Ch),
            other => Err(Error::validation("synthetic task", format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    PointSegment {
        point: PlanarPoint,
        segment: [PlanarPoint; 2],
    },
    PointTriangle {
        point: PlanarPoint,
        triangle: [PlanarPoint; 3],
    },
    TwoSegments {
        segment_a: [PlanarPoint; 2],
        segment_b: [PlanarPoint; 2],
    },
    PointSet {
        points: Vec<PlanarPoint>,
    },
}

impl Payload {
    fn kind(&self) -> TaskKind {
        match self {
            Payload::PointSegment { .. } => TaskKind::P2s,
            Payload::PointTriangle { .. } => TaskKind::Sc,
            Payload::TwoSegments { .. } => TaskKind::Si,
            Payload::PointSet { .. } => TaskKind::Ch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truth {
    Distance(f64),
    Flag(bool),
    Vertices(Vec<PlanarPoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub instance_id: String,
    pub kind: TaskKind,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
}

impl SyntheticInstance {
    pub fn validate(&self) -> Result<()> {
        if self.payload.kind() != self.kind {
            return Err(Error::validation(
                format!("instance {}", self.instance_id),
                format!("payload does not match kind {}", self.kind),
            ));
        }
        Ok(())
    }

    /// Truth recomputed from the payload with the geometry primitives.
    pub fn solve(&self) -> Result<Truth> {
        self.validate()?;
        Ok(match &self.payload {
            Payload::PointSegment { point, segment } => {
                Truth::Distance(point_to_segment_distance(*point, Segment::new(segment[0], segment[1])?))
            }
            Payload::PointTriangle { point, triangle } => {
                Truth::Flag(point_in_triangle(*point, *triangle)?)
            }
            Payload::TwoSegments {
                segment_a,
                segment_b,
            } => Truth::Flag(segments_intersect(
                Segment::new(segment_a[0], segment_a[1])?,
                Segment::new(segment_b[0], segment_b[1])?,
            )),
            Payload::PointSet { points } => Truth::Vertices(convex_hull(points)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub instance_id: String,
    pub answer: Value,
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn draw_point(rng: &mut ChaCha8Rng) -> PlanarPoint {
    PlanarPoint::new(round4(rng.gen::<f64>()), round4(rng.gen::<f64>()))
}

fn draw_segment(rng: &mut ChaCha8Rng) -> [PlanarPoint; 2] {
    loop {
        let (a, b) = (draw_point(rng), draw_point(rng));
        if a.distance(b) >= MIN_SEGMENT_LENGTH {
            return [a, b];
        }
    }
}

fn seg(s: [PlanarPoint; 2]) -> Segment {
    Segment::new(s[0], s[1]).expect("drawn segments have positive length")
}

fn triangle_area(t: [PlanarPoint; 3]) -> f64 {
    0.5 * ((t[1] - t[0]).cross(t[2] - t[0])).abs()
}

fn gen_p2s(rng: &mut ChaCha8Rng) -> Payload {
    Payload::PointSegment {
        point: draw_point(rng),
        segment: draw_segment(rng),
    }
}

/// Even indices get a point inside the triangle, odd ones outside.
fn gen_sc(rng: &mut ChaCha8Rng, inside: bool) -> Payload {
    loop {
        let triangle = [draw_point(rng), draw_point(rng), draw_point(rng)];
        if triangle_area(triangle) < MIN_TRIANGLE_AREA {
            continue;
        }
        for _ in 0..32 {
            let point = if inside {
                let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
                if u + v > 1.0 {
                    (u, v) = (1.0 - u, 1.0 - v);
                }
                let p = triangle[0] + (triangle[1] - triangle[0]) * u + (triangle[2] - triangle[0]) * v;
                PlanarPoint::new(round4(p.x), round4(p.y))
            } else {
                draw_point(rng)
            };
            let gap = (0..3)
                .map(|i| point_to_segment_distance(point, seg([triangle[i], triangle[(i + 1) % 3]])))
                .fold(f64::INFINITY, f64::min);
            if gap >= MIN_BOUNDARY_GAP
                && point_in_triangle(point, triangle).expect("area checked") == inside
            {
                return Payload::PointTriangle { point, triangle };
            }
        }
    }
}

/// Even indices get an intersecting pair, odd ones a disjoint pair.
fn gen_si(rng: &mut ChaCha8Rng, intersect: bool) -> Payload {
    loop {
        let (a, b) = (draw_segment(rng), draw_segment(rng));
        let clear = a
            .iter()
            .all(|&p| point_to_segment_distance(p, seg(b)) >= MIN_BOUNDARY_GAP)
            && b.iter()
                .all(|&p| point_to_segment_distance(p, seg(a)) >= MIN_BOUNDARY_GAP);
        if clear && segments_intersect(seg(a), seg(b)) == intersect {
            return Payload::TwoSegments {
                segment_a: a,
                segment_b: b,
            };
        }
    }
}

fn near_collinear(points: &[PlanarPoint]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let line = points[j] - points[i];
            let len = line.norm();
            for (k, &p) in points.iter().enumerate() {
                if k != i && k != j && (line.cross(p - points[i]) / len).abs() < MIN_BOUNDARY_GAP {
                    return true;
                }
            }
        }
    }
    false
}

fn gen_ch(rng: &mut ChaCha8Rng) -> Payload {
    let k = rng.gen_range(5..=10);
    'outer: loop {
        let mut points: Vec<PlanarPoint> = Vec::with_capacity(k);
        let mut tries = 0;
        while points.len() < k {
            tries += 1;
            if tries > 10_000 {
                continue 'outer;
            }
            let p = draw_point(rng);
            if points.iter().all(|q| q.distance(p) >= MIN_POINT_SPACING) {
                points.push(p);
            }
        }
        if !near_collinear(&points) {
            return Payload::PointSet { points };
        }
    }
}

/// `n` instances of one task kind; a pure function of `(kind, n, seed)`.
pub fn generate(kind: TaskKind, n: usize, seed: u64) -> Vec<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt());
    (0..n)
        .map(|i| {
            let payload = match kind {
                TaskKind::P2s => gen_p2s(&mut rng),
                TaskKind::Sc => gen_sc(&mut rng, i % 2 == 0),
                TaskKind::Si => gen_si(&mut rng, i % 2 == 0),
                TaskKind::Ch => gen_ch(&mut rng),
            };
            let mut inst = SyntheticInstance {
                instance_id: format!("{kind}-{i:04}"),
                kind,
                payload,
                truth: None,
            };
            inst.truth = Some(inst.solve().expect("generated payloads are non-degenerate"));
            inst
        })
        .collect()
}

pub fn write_jsonl<T: Serialize, W: std::io::Write>(mut out: W, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: std::io::BufRead>(input: R) -> Result<Vec<T>> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindScore {
    pub n: usize,
    pub correct: usize,
    pub missing: usize,
    pub malformed: usize,
    #[serde(serialize_with = "sig6")]
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeReport {
    pub schema_version: u32,
    pub per_kind: BTreeMap<TaskKind, KindScore>,
}

impl GradeReport {
    pub fn accuracy(&self, kind: TaskKind) -> Option<f64> {
        self.per_kind.get(&kind).map(|s| s.accuracy)
    }
}

fn parse_point(v: &Value) -> Option<PlanarPoint> {
    match v.as_array()?.as_slice() {
        [x, y] => Some(PlanarPoint::new(x.as_f64()?, y.as_f64()?)),
        _ => None,
    }
}

/// `None` for an answer of the wrong shape.
fn answer_correct(truth: &Truth, answer: &Value) -> Option<bool> {
    match truth {
        Truth::Distance(t) => {
            let a = answer.as_f64()?;
            Some(a.is_finite() && (a - t).abs() <= P2S_TOLERANCE)
        }
        Truth::Flag(t) => Some(answer.as_bool()? == *t),
        Truth::Vertices(t) => {
            let given = answer
                .as_array()?
                .iter()
                .map(parse_point)
                .collect::<Option<Vec<_>>>()?;
            let close = |a: &PlanarPoint, b: &PlanarPoint| {
                (a.x - b.x).abs() <= CH_COORD_TOLERANCE && (a.y - b.y).abs() <= CH_COORD_TOLERANCE
            };
            let mut used = vec![false; given.len()];
            for v in t {
                match (0..given.len()).find(|&i| !used[i] && close(&given[i], v)) {
                    Some(i) => used[i] = true,
                    None => return Some(false),
                }
            }
            Some(used.iter().all(|&u| u))
        }
    }
}

/// Per-kind accuracy of `answers` against the instances' truths.
/// Missing and malformed answers count as incorrect.
pub fn grade(instances: &[SyntheticInstance], answers: &[Answer]) -> Result<GradeReport> {
    let mut by_id: BTreeMap<&str, &Value> = BTreeMap::new();
    for a in answers {
        if by_id.insert(&a.instance_id, &a.answer).is_some() {
            return Err(Error::validation(
                "answers",
                format!("duplicate answer for {}", a.instance_id),
            ));
        }
    }
    let mut per_kind: BTreeMap<TaskKind, KindScore> = BTreeMap::new();
    for inst in instances {
        let truth = match &inst.truth {
            Some(t) => t.clone(),
            None => inst.solve()?,
        };
        let score = per_kind.entry(inst.kind).or_insert(KindScore {
            n: 0,
            correct: 0,
            missing: 0,
            malformed: 0,
            accuracy: 0.0,
        });
        score.n += 1;
        match by_id.get(inst.instance_id.as_str()) {
            None => score.missing += 1,
            Some(answer) => match answer_correct(&truth, answer) {
                Some(true) => score.correct += 1,
                Some(false) => {}
                None => {
                    log::warn!("malformed answer for {}: {answer}", inst.instance_id);
                    score.malformed += 1;
                }
            },
        }
    }
    for s in per_kind.values_mut() {
        s.accuracy = s.correct as f64 / s.n as f64;
    }
    Ok(GradeReport {
        schema_version: SCHEMA_VERSION,
        per_kind,
    })
}

/// The answers a perfect solver would give.
pub fn truth_answers(instances: &[SyntheticInstance]) -> Result<Vec<Answer>> {
    instances
        .iter()
        .map(|inst| {
            let truth = match &inst.truth {
                Some(t) => t.clone(),
                None => inst.solve()?,
            };
            Ok(Answer {
                instance_id: inst.instance_id.clone(),
                answer: serde_json::to_value(truth)?,
            })
        })
        .collect()
}
