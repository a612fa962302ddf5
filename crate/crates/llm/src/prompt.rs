//! Prompt templates, prompt assembly and answer parsing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use geomatch_core::features::FeatureVector;
use geomatch_core::heuristics::HeuristicKind;
use geomatch_core::pairs::PairRecord;
use geomatch_core::{Error, Result, Task};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Plain,
    Hints,
    /// Hints plus the computed feature values.
    Features,
}

impl FromStr for PromptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(PromptMode::Plain),
            "hints" => Ok(PromptMode::Hints),
            "features" => Ok(PromptMode::Features),
            other => Err(Error::validation("prompt mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shots {
    #[default]
    Zero,
    Few,
}

impl FromStr for Shots {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Shots::Zero),
            "few" => Ok(Shots::Few),
            other => Err(Error::validation("shots", format!("unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub shots: Shots,
    /// Which heuristics the hints and features text covers. Ignored in plain mode.
    pub heuristic_kinds: Vec<HeuristicKind>,
    pub task: Task,
}

impl PromptSpec {
    pub fn new(task: Task, mode: PromptMode, shots: Shots) -> Self {
        PromptSpec {
            mode,
            shots,
            heuristic_kinds: HeuristicKind::kinds_for(task),
            task,
        }
    }

    fn kinds(&self) -> Vec<HeuristicKind> {
        let mut k = self.heuristic_kinds.clone();
        k.sort();
        k.dedup();
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(Error::validation("chat message", "empty content"));
        }
        Ok(ChatMessage { role, content })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            top_p: 1.0,
            max_new_tokens: 10,
        }
    }
}

impl GenerationParams {
    pub fn review() -> Self {
        GenerationParams {
            max_new_tokens: 500,
            ..Self::default()
        }
    }

    pub fn chain_of_thought() -> Self {
        GenerationParams {
            max_new_tokens: 2000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::validation("generation params", "temperature must be >= 0"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::validation("generation params", "top_p must be in (0, 1]"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::validation("generation params", "max_new_tokens must be >= 1"));
        }
        Ok(())
    }
}

const TEMPLATE_NAMES: [&str; 10] = [
    "system",
    "task_join",
    "task_union",
    "hint_parallel",
    "hint_clearance",
    "hint_overlap",
    "query",
    "example",
    "review",
    "refine",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub system: String,
    pub task_join: String,
    pub task_union: String,
    pub hint_parallel: String,
    pub hint_clearance: String,
    pub hint_overlap: String,
    pub query: String,
    pub example: String,
    pub review: String,
    pub refine: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            system: include_str!("../templates/system.txt").into(),
            task_join: include_str!("../templates/task_join.txt").into(),
            task_union: include_str!("../templates/task_union.txt").into(),
            hint_parallel: include_str!("../templates/hint_parallel.txt").into(),
            hint_clearance: include_str!("../templates/hint_clearance.txt").into(),
            hint_overlap: include_str!("../templates/hint_overlap.txt").into(),
            query: include_str!("../templates/query.txt").into(),
            example: include_str!("../templates/example.txt").into(),
            review: include_str!("../templates/review.txt").into(),
            refine: include_str!("../templates/refine.txt").into(),
        }
    }

    /// Loads `<name>.txt` for every template; each file must exist.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut texts = Vec::with_capacity(TEMPLATE_NAMES.len());
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            texts.push(std::fs::read_to_string(&path).map_err(|e| {
                Error::Config(format!("template {}: {e}", path.display()))
            })?);
        }
        let mut it = texts.into_iter();
        let mut next = || it.next().expect("one text per name");
        Ok(TemplateSet {
            system: next(),
            task_join: next(),
            task_union: next(),
            hint_parallel: next(),
            hint_clearance: next(),
            hint_overlap: next(),
            query: next(),
            example: next(),
            review: next(),
            refine: next(),
        })
    }

    fn hint(&self, kind: HeuristicKind) -> &str {
        match kind {
            HeuristicKind::Parallel => &self.hint_parallel,
            HeuristicKind::Clearance => &self.hint_clearance,
            HeuristicKind::Overlap => &self.hint_overlap,
        }
    }

    fn task(&self, task: Task) -> &str {
        match task {
            Task::Join => &self.task_join,
            Task::Union => &self.task_union,
        }
    }
}

/// Substitutes `{name}` placeholders in one left-to-right pass; substituted text
/// is never rescanned, so braces in GeoJSON are safe. Unknown names stay as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match (after[name_len..].starts_with('}'), vars.iter().find(|(k, _)| *k == name)) {
            (true, Some((_, value))) if !name.is_empty() => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    tidy(&out)
}

/// Collapses runs of blank lines left by empty sections and trims the ends.
fn tidy(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut newlines = 0;
    for c in text.trim().chars() {
        if c == '\n' {
            newlines += 1;
            if newlines > 2 {
                continue;
            }
        } else {
            newlines = 0;
        }
        out.push(c);
    }
    out
}

fn render_features(fv: &FeatureVector, kinds: &[HeuristicKind]) -> String {
    let mut lines = vec!["Computed features:".to_string()];
    for kind in kinds {
        lines.push(match kind {
            HeuristicKind::Parallel => format!("- min_angle: {:.3} degrees", fv.min_angle_deg),
            HeuristicKind::Clearance => format!("- min_distance: {:.3} m", fv.min_distance_m),
            HeuristicKind::Overlap => {
                format!("- max_area: {:.3} (fraction of buffered area shared)", fv.max_area)
            }
        });
    }
    lines.join("\n")
}

fn geometry_text(pair: &PairRecord) -> (String, String) {
    (
        pair.left.geometry_json().to_string(),
        pair.right.geometry_json().to_string(),
    )
}

fn features_text(pair: &PairRecord, spec: &PromptSpec) -> Result<String> {
    if spec.mode != PromptMode::Features {
        return Ok(String::new());
    }
    let fv = pair.features.as_ref().ok_or_else(|| {
        Error::validation(format!("pair {}", pair.pair_id), "features mode needs computed features")
    })?;
    Ok(render_features(fv, &spec.kinds()))
}

/// One labeled positive and one labeled negative example, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplars {
    pub positive: PairRecord,
    pub negative: PairRecord,
}

impl Exemplars {
    pub fn new(positive: PairRecord, negative: PairRecord) -> Result<Self> {
        if positive.label != Some(1) || negative.label != Some(0) {
            return Err(Error::validation(
                "few-shot exemplars",
                "need one pair labeled 1 and one labeled 0",
            ));
        }
        Ok(Exemplars { positive, negative })
    }

    /// First positive and first negative by `pair_id`, or the named pairs.
    pub fn select(pool: &[PairRecord], ids: Option<(&str, &str)>) -> Result<Self> {
        let find = |id: &str| {
            pool.iter()
                .find(|p| p.pair_id == id)
                .cloned()
                .ok_or_else(|| Error::validation("few-shot exemplars", format!("no pair {id:?} in pool")))
        };
        if let Some((pos, neg)) = ids {
            return Self::new(find(pos)?, find(neg)?);
        }
        let first = |label: u8| {
            pool.iter()
                .filter(|p| p.label == Some(label))
                .min_by(|a, b| a.pair_id.cmp(&b.pair_id))
                .cloned()
                .ok_or_else(|| {
                    Error::validation("few-shot exemplars", format!("pool has no pair labeled {label}"))
                })
        };
        Self::new(first(1)?, first(0)?)
    }
}

/// System and user messages for one pair.
pub fn build_prompt(
    pair: &PairRecord,
    spec: &PromptSpec,
    exemplars: Option<&Exemplars>,
    templates: &TemplateSet,
) -> Result<Vec<ChatMessage>> {
    let hints = match spec.mode {
        PromptMode::Plain => String::new(),
        PromptMode::Hints | PromptMode::Features => {
            let kinds = spec.kinds();
            if kinds.is_empty() {
                String::new()
            } else {
                let body: Vec<&str> = kinds.iter().map(|k| templates.hint(*k).trim_end()).collect();
                format!("Useful heuristics:\n{}", body.join("\n"))
            }
        }
    };
    let examples = match (spec.shots, exemplars) {
        (Shots::Zero, _) => String::new(),
        (Shots::Few, None) => {
            return Err(Error::validation("prompt", "few-shot prompting needs exemplars"));
        }
        (Shots::Few, Some(ex)) => {
            let mut blocks = Vec::with_capacity(2);
            for (i, p) in [&ex.positive, &ex.negative].into_iter().enumerate() {
                let (l, r) = geometry_text(p);
                let label = p.label.expect("exemplar labels checked").to_string();
                let features = features_text(p, spec)?;
                blocks.push(render(
                    &templates.example,
                    &[
                        ("index", &(i + 1).to_string()),
                        ("geojson_left", &l),
                        ("geojson_right", &r),
                        ("features", &features),
                        ("label", &label),
                    ],
                ));
            }
            blocks.join("\n\n")
        }
    };
    let (left, right) = geometry_text(pair);
    let features = features_text(pair, spec)?;
    let user = render(
        &templates.query,
        &[
            ("task_description", templates.task(spec.task).trim_end()),
            ("hints", &hints),
            ("examples", &examples),
            ("geojson_left", &left),
            ("geojson_right", &right),
            ("features", &features),
        ],
    );
    Ok(vec![
        ChatMessage::new(Role::System, tidy(&templates.system))?,
        ChatMessage::new(Role::User, user)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedLabel {
    Label(u8),
    Failure,
}

impl ParsedLabel {
    pub fn label(self) -> Option<u8> {
        match self {
            ParsedLabel::Label(l) => Some(l),
            ParsedLabel::Failure => None,
        }
    }
}

impl fmt::Display for ParsedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedLabel::Label(l) => write!(f, "{l}"),
            ParsedLabel::Failure => f.write_str("parse-failure"),
        }
    }
}

/// The first standalone `0` or `1` token in the text.
pub fn parse_label(text: &str) -> ParsedLabel {
    text.split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| match tok {
            "0" => Some(ParsedLabel::Label(0)),
            "1" => Some(ParsedLabel::Label(1)),
            _ => None,
        })
        .unwrap_or(ParsedLabel::Failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geomatch_core::geo_io::{Coordinate, CrsMode, LineStringFeature};

    fn pair(id: &str, label: Option<u8>) -> PairRecord {
        let f = |fid: &str, y: f64| {
            LineStringFeature::new(
                fid,
                vec![Coordinate::new(-122.2, 47.6 + y), Coordinate::new(-122.199, 47.6 + y)],
                Default::default(),
                CrsMode::Geographic,
            )
            .unwrap()
        };
        let mut p = PairRecord::new(id, f("s", 0.00003), f("r", 0.0));
        p.label = label;
        p.features = Some(FeatureVector {
            min_angle_deg: 1.23456,
            min_distance_m: 3.3333,
            max_area: 0.5,
        });
        p
    }

    #[test]
    fn labels_parse_from_first_standalone_digit() {
        assert_eq!(parse_label("1"), ParsedLabel::Label(1));
        assert_eq!(parse_label("The answer is 0."), ParsedLabel::Label(0));
        assert_eq!(parse_label("cannot determine"), ParsedLabel::Failure);
        assert_eq!(parse_label("10 then 1"), ParsedLabel::Label(1));
        assert_eq!(parse_label("Answer: 0 (not 1)"), ParsedLabel::Label(0));
        assert_eq!(parse_label(""), ParsedLabel::Failure);
        for l in [0u8, 1] {
            assert_eq!(parse_label(&l.to_string()), ParsedLabel::Label(l));
        }
    }

    #[test]
    fn render_leaves_inserted_braces_alone() {
        let out = render("a {x} b {y} {missing} {", &[("x", "{y}"), ("y", "2")]);
        assert_eq!(out, "a {y} b 2 {missing} {");
        assert_eq!(render("a\n\n\n\n\nb\n", &[]), "a\n\nb");
    }

    #[test]
    fn plain_prompt_has_geometries_only() {
        let spec = PromptSpec::new(Task::Join, PromptMode::Plain, Shots::Zero);
        let msgs = build_prompt(&pair("q", None), &spec, None, &TemplateSet::builtin()).unwrap();
        assert_eq!(msgs.len(), 2);
        let user = &msgs[1].content;
        assert!(user.contains("\"LineString\""));
        assert_eq!(user.matches("\"coordinates\"").count(), 2);
        assert!(!user.contains("min_angle") && !user.contains("1.235"));
        assert!(!user.contains("heuristics"));
        assert!(user.ends_with("without explanation."));
    }

    #[test]
    fn features_few_shot_prompt() {
        let spec = PromptSpec::new(Task::Join, PromptMode::Features, Shots::Few);
        let ex = Exemplars::select(&[pair("b", Some(0)), pair("a", Some(1)), pair("c", Some(1))], None).unwrap();
        assert_eq!((ex.positive.pair_id.as_str(), ex.negative.pair_id.as_str()), ("a", "b"));
        let msgs = build_prompt(&pair("q", None), &spec, Some(&ex), &TemplateSet::builtin()).unwrap();
        let user = &msgs[1].content;
        assert_eq!(user.matches("Example ").count(), 2);
        assert!(user.contains("Answer: 1") && user.contains("Answer: 0"));
        let query_part = &user[user.rfind("Example 2:").unwrap()..];
        let query_part = &query_part[query_part.find("Answer: 0").unwrap()..];
        assert!(query_part.contains("min_angle: 1.235 degrees"));
        assert!(query_part.contains("min_distance: 3.333 m"));
        assert!(query_part.contains("max_area: 0.500"));
        assert_eq!(
            build_prompt(&pair("q", None), &spec, Some(&ex), &TemplateSet::builtin()).unwrap(),
            msgs
        );
    }

    #[test]
    fn prompt_errors() {
        let spec = PromptSpec::new(Task::Join, PromptMode::Features, Shots::Zero);
        let mut bare = pair("q", None);
        bare.features = None;
        assert!(build_prompt(&bare, &spec, None, &TemplateSet::builtin()).is_err());
        let few = PromptSpec::new(Task::Join, PromptMode::Plain, Shots::Few);
        assert!(build_prompt(&pair("q", None), &few, None, &TemplateSet::builtin()).is_err());
        assert!(Exemplars::select(&[pair("a", Some(1))], None).is_err());
        assert!(matches!(
            TemplateSet::from_dir(Path::new("/nonexistent/templates")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn union_prompt_omits_clearance() {
        let spec = PromptSpec::new(Task::Union, PromptMode::Features, Shots::Zero);
        let msgs = build_prompt(&pair("q", None), &spec, None, &TemplateSet::builtin()).unwrap();
        assert!(!msgs[1].content.contains("min_distance"));
        assert!(msgs[1].content.contains("same physical sidewalk"));
    }

    #[test]
    fn generation_defaults() {
        let p = GenerationParams::default();
        assert_eq!((p.temperature, p.top_p, p.max_new_tokens), (0.0, 1.0, 10));
        assert_eq!(GenerationParams::review().max_new_tokens, 500);
        assert_eq!(GenerationParams::chain_of_thought().max_new_tokens, 2000);
        assert!(GenerationParams { top_p: 0.0, ..p }.validate().is_err());
    }
}
