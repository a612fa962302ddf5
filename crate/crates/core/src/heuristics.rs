//! Thresholded parallel / clearance / overlap rules, their conjunctions, and grid sweeps.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DEFINITION};
use crate::pairs::PairRecord;
use crate::report::{sig6, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Sidewalk ↔ road pairing.
    Join,
    /// Duplicate annotations of the same sidewalk.
    Union,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "join" => Ok(Task::Join),
            "union" => Ok(Task::Union),
            other => Err(Error::validation("task", format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Join => "join",
            Task::Union => "union",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicKind {
    Parallel,
    Clearance,
    Overlap,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 3] = [
        HeuristicKind::Parallel,
        HeuristicKind::Clearance,
        HeuristicKind::Overlap,
    ];

    pub fn abbrev(self) -> char {
        match self {
            HeuristicKind::Parallel => 'p',
            HeuristicKind::Clearance => 'c',
            HeuristicKind::Overlap => 'o',
        }
    }

    /// Union candidates always intersect, so clearance is join-only.
    pub fn valid_for(self, task: Task) -> bool {
        !(task == Task::Union && self == HeuristicKind::Clearance)
    }

    pub fn kinds_for(task: Task) -> Vec<HeuristicKind> {
        Self::ALL.into_iter().filter(|k| k.valid_for(task)).collect()
    }

    fn check_threshold(self, alpha: f64) -> Result<()> {
        let ok = match self {
            HeuristicKind::Parallel | HeuristicKind::Clearance => alpha > 0.0 && alpha.is_finite(),
            HeuristicKind::Overlap => alpha > 0.0 && alpha <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(
                "heuristic threshold",
                format!("{alpha} is out of range for {}", self.abbrev()),
            ))
        }
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "parallel" => Ok(HeuristicKind::Parallel),
            "c" | "clearance" => Ok(HeuristicKind::Clearance),
            "o" | "overlap" => Ok(HeuristicKind::Overlap),
            other => Err(Error::validation("heuristic kind", format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub kind: HeuristicKind,
    pub threshold: f64,
}

impl Term {
    pub fn holds(&self, fv: &FeatureVector) -> bool {
        match self.kind {
            HeuristicKind::Parallel => fv.min_angle_deg <= self.threshold,
            HeuristicKind::Clearance => fv.min_distance_m >= self.threshold,
            HeuristicKind::Overlap => fv.max_area >= self.threshold,
        }
    }
}

/// Conjunction of one to three thresholded rules over distinct kinds,
/// kept in `p, c, o` order. Text form: `p:5,c:2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicSpec {
    terms: Vec<Term>,
}

impl HeuristicSpec {
    pub fn new(mut terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() || terms.len() > 3 {
            return Err(Error::validation(
                "heuristic spec",
                format!("needs 1 to 3 terms, got {}", terms.len()),
            ));
        }
        terms.sort_by_key(|t| t.kind);
        if terms.windows(2).any(|w| w[0].kind == w[1].kind) {
            return Err(Error::validation("heuristic spec", "repeated heuristic kind"));
        }
        for t in &terms {
            t.kind.check_threshold(t.threshold)?;
        }
        Ok(HeuristicSpec { terms })
    }

    pub fn single(kind: HeuristicKind, threshold: f64) -> Result<Self> {
        Self::new(vec![Term { kind, threshold }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn arity(&self) -> usize {
        self.terms.len()
    }

    pub fn threshold(&self, kind: HeuristicKind) -> Option<f64> {
        self.terms.iter().find(|t| t.kind == kind).map(|t| t.threshold)
    }

    pub fn check_task(&self, task: Task) -> Result<()> {
        match self.terms.iter().find(|t| !t.kind.valid_for(task)) {
            Some(t) => Err(Error::validation(
                "heuristic spec",
                format!("{:?} is not valid for the {task} task", t.kind),
            )),
            None => Ok(()),
        }
    }

    /// Sweep tie-break order: fewer terms first, then `(kind, threshold)` lexicographically.
    fn tie_break(&self, other: &Self) -> Ordering {
        self.arity().cmp(&other.arity()).then_with(|| {
            for (a, b) in self.terms.iter().zip(&other.terms) {
                let ord = a.kind.cmp(&b.kind).then(a.threshold.total_cmp(&b.threshold));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
    }
}

impl fmt::Display for HeuristicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", t.kind.abbrev(), t.threshold)?;
        }
        Ok(())
    }
}

impl FromStr for HeuristicSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let terms = s
            .split(',')
            .map(|part| {
                let (kind, alpha) = part.trim().split_once(':').ok_or_else(|| {
                    Error::validation("heuristic spec", format!("term {part:?} is not kind:threshold"))
                })?;
                let threshold = alpha.trim().parse::<f64>().map_err(|_| {
                    Error::validation("heuristic spec", format!("bad threshold {alpha:?}"))
                })?;
                Ok(Term {
                    kind: kind.trim().parse()?,
                    threshold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HeuristicSpec::new(terms)
    }
}

impl Serialize for HeuristicSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HeuristicSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 1 iff every term holds; thresholds are inclusive.
pub fn predict(fv: &FeatureVector, spec: &HeuristicSpec) -> u8 {
    u8::from(spec.terms.iter().all(|t| t.holds(fv)))
}

/// Threshold lists per heuristic kind. An empty list leaves the kind out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrids {
    pub parallel: Vec<f64>,
    pub clearance: Vec<f64>,
    pub overlap: Vec<f64>,
}

impl ThresholdGrids {
    pub fn defaults(task: Task) -> Self {
        match task {
            Task::Join => ThresholdGrids {
                parallel: vec![1.0, 2.0, 5.0, 10.0, 20.0],
                clearance: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                overlap: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            },
            Task::Union => ThresholdGrids {
                parallel: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                clearance: vec![],
                overlap: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            },
        }
    }

    /// Builds grids from a `kind -> thresholds` map; kinds absent from the map
    /// keep their task defaults.
    pub fn from_map(task: Task, map: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut grids = Self::defaults(task);
        for (key, values) in map {
            let kind: HeuristicKind = key.parse()?;
            *grids.get_mut(kind) = values.clone();
        }
        Ok(grids)
    }

    pub fn get(&self, kind: HeuristicKind) -> &[f64] {
        match kind {
            HeuristicKind::Parallel => &self.parallel,
            HeuristicKind::Clearance => &self.clearance,
            HeuristicKind::Overlap => &self.overlap,
        }
    }

    fn get_mut(&mut self, kind: HeuristicKind) -> &mut Vec<f64> {
        match kind {
            HeuristicKind::Parallel => &mut self.parallel,
            HeuristicKind::Clearance => &mut self.clearance,
            HeuristicKind::Overlap => &mut self.overlap,
        }
    }
}

/// Every single, duo and trio spec over the task's kinds, crossing the grid thresholds.
pub fn enumerate_specs(task: Task, grids: &ThresholdGrids) -> Result<Vec<HeuristicSpec>> {
    let mut kinds = Vec::new();
    for kind in HeuristicKind::ALL {
        let grid = grids.get(kind);
        if grid.is_empty() {
            continue;
        }
        if !kind.valid_for(task) {
            return Err(Error::validation(
                "threshold grids",
                format!("{kind:?} thresholds given for the {task} task"),
            ));
        }
        for &alpha in grid {
            kind.check_threshold(alpha)?;
        }
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(Error::validation("threshold grids", "all grids are empty"));
    }

    let mut specs = Vec::new();
    for size in 1..=kinds.len() {
        for mask in 0u32..(1 << kinds.len()) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let chosen: Vec<HeuristicKind> = kinds
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &k)| k)
                .collect();
            let mut partial: Vec<Vec<Term>> = vec![vec![]];
            for kind in chosen {
                partial = partial
                    .into_iter()
                    .flat_map(|terms| {
                        grids.get(kind).iter().map(move |&threshold| {
                            let mut t = terms.clone();
                            t.push(Term { kind, threshold });
                            t
                        })
                    })
                    .collect();
            }
            for terms in partial {
                specs.push(HeuristicSpec::new(terms)?);
            }
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(serialize_with = "sig6")]
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        let n = tp + fp + tn + fn_;
        if n == 0 {
            return Err(Error::validation("evaluation", "no samples"));
        }
        Ok(EvalReport {
            n,
            tp,
            fp,
            tn,
            fn_,
            accuracy: (tp + tn) as f64 / n as f64,
        })
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }
}

pub fn evaluate(predictions: &[u8], labels: &[u8]) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::validation(
            "evaluation",
            format!(
                "{} predictions vs {} labels",
                predictions.len(),
                labels.len()
            ),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::validation("evaluation", "labels must be 0 or 1"));
        }
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    EvalReport::from_counts(tp, fp, tn, fn_)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub spec: HeuristicSpec,
    pub correct: usize,
    #[serde(serialize_with = "sig6")]
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub task: Task,
    pub feature_definition: String,
    pub n: usize,
    pub results: Vec<SpecScore>,
    pub best: SpecScore,
    pub worst: SpecScore,
    pub best_single: Option<SpecScore>,
    pub best_duo: Option<SpecScore>,
    pub best_trio: Option<SpecScore>,
}

impl SweepReport {
    pub fn best_spec(&self) -> &HeuristicSpec {
        &self.best.spec
    }

    pub fn best_accuracy(&self) -> f64 {
        self.best.accuracy
    }
}

/// Features and labels of a labeled, featured dataset.
pub fn labeled_features(pairs: &[PairRecord]) -> Result<(Vec<FeatureVector>, Vec<u8>)> {
    pairs
        .iter()
        .map(|p| match (p.features, p.label) {
            (Some(fv), Some(l)) => Ok((fv, l)),
            (None, _) => Err(Error::validation(
                format!("pair {}", p.pair_id),
                "features missing",
            )),
            (_, None) => Err(Error::validation(format!("pair {}", p.pair_id), "label missing")),
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Scores every spec. Ties on accuracy go to fewer terms, then smaller thresholds.
pub fn sweep(task: Task, pairs: &[PairRecord], specs: &[HeuristicSpec]) -> Result<SweepReport> {
    if pairs.is_empty() {
        return Err(Error::validation("sweep", "empty dataset"));
    }
    if specs.is_empty() {
        return Err(Error::validation("sweep", "no heuristic specs"));
    }
    for spec in specs {
        spec.check_task(task)?;
    }
    let (features, labels) = labeled_features(pairs)?;
    let n = labels.len();

    let results: Vec<SpecScore> = specs
        .par_iter()
        .map(|spec| {
            let correct = features
                .iter()
                .zip(&labels)
                .filter(|(fv, &l)| predict(fv, spec) == l)
                .count();
            SpecScore {
                spec: spec.clone(),
                correct,
                accuracy: correct as f64 / n as f64,
            }
        })
        .collect();

    let better = |a: &SpecScore, b: &SpecScore| {
        b.correct
            .cmp(&a.correct)
            .then_with(|| a.spec.tie_break(&b.spec))
    };
    let best_of = |arity: Option<usize>| {
        results
            .iter()
            .filter(|s| arity.is_none_or(|k| s.spec.arity() == k))
            .min_by(|a, b| better(a, b))
            .cloned()
    };
    let best = best_of(None).expect("nonempty results");
    let worst = results
        .iter()
        .min_by(|a, b| a.correct.cmp(&b.correct).then_with(|| a.spec.tie_break(&b.spec)))
        .cloned()
        .expect("nonempty results");

    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        task,
        feature_definition: FEATURE_DEFINITION.to_string(),
        n,
        best_single: best_of(Some(1)),
        best_duo: best_of(Some(2)),
        best_trio: best_of(Some(3)),
        results,
        best,
        worst,
    })
}
