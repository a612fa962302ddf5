//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use geomatch_core::candidates::{filter_roads, join_candidates, split_dataset, union_candidates};
use geomatch_core::features::{compute_features_batch, PairError, FEATURE_DEFINITION};
use geomatch_core::geo_io::{serialize_geojson, Coordinate};
use geomatch_core::heuristics::{enumerate_specs, evaluate, predict, sweep, EvalReport, HeuristicSpec};
use geomatch_core::pairs::PairRecord;
use geomatch_core::report::SCHEMA_VERSION;
use geomatch_core::synth::{
    generate, generate_planted_pairs, grade, planted_geographic_fixture, Answer, LabelRecord,
    PlantedPairConfig, SyntheticInstance,
};
use geomatch_llm::backend::{ChatBackend, HttpBackend, HttpConfig, MockBackend};
use geomatch_llm::inference::{run_inference, score, write_exchanges, FailurePolicy, InferenceOptions};
use geomatch_llm::prompt::{Exemplars, PromptSpec, Shots, TemplateSet};
use geomatch_llm::refine::{make_initial, run_refine, write_records, InitialSource};
use serde::Serialize;
use serde_json::Value;

use crate::config::{BackendKind, InitialKind, RunConfig};
use crate::output::{
    read_geojson, read_jsonl_file, read_pair_file, write_jsonl_file, write_lines, write_pair_file, Reporter,
};
use crate::{
    CandidatesCmd, ClassifyArgs, Cli, Command, EvalArgs, FeaturesArgs, JoinArgs, ModelArgs, PromptArgs,
    RefineArgs, SplitArgs, SweepArgs, SynthCmd, SynthGenArgs, SynthGradeArgs, SynthPlantedArgs, UnionArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Candidates(CandidatesCmd::Join(a)) => candidates_join(cfg, a),
        Command::Candidates(CandidatesCmd::Union(a)) => candidates_union(cfg, a),
        Command::Features(a) => features(cfg, a),
        Command::Split(a) => split(cfg, a),
        Command::Sweep(a) => sweep_cmd(cfg, a),
        Command::Classify(a) => classify(cfg, a),
        Command::Prompt(a) => prompt(cfg, a),
        Command::Refine(a) => refine(cfg, a),
        Command::Synth(SynthCmd::Gen(a)) => synth_gen(a),
        Command::Synth(SynthCmd::Grade(a)) => synth_grade(cfg, a),
        Command::Synth(SynthCmd::Planted(a)) => synth_planted(cfg, a),
        Command::Eval(a) => eval(cfg, a),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn ready(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

#[derive(Serialize)]
struct CandidateSummary {
    task: &'static str,
    left_features: usize,
    right_features: usize,
    roads_kept: Option<usize>,
    buffer_m: Option<f64>,
    candidates: usize,
}

fn candidates_join(mut cfg: RunConfig, a: JoinArgs) -> Result<()> {
    set(&mut cfg.features.crs, a.crs);
    set(&mut cfg.candidates.join_buffer_m, a.buffer_m);
    set(&mut cfg.candidates.road_types, a.road_types);
    let cfg = ready(cfg)?;
    let roads = read_geojson(&a.roads, cfg.features.crs)?;
    let sidewalks = read_geojson(&a.sidewalks, cfg.features.crs)?;
    let allowed: BTreeSet<String> = cfg.candidates.road_types.iter().cloned().collect();
    let kept = filter_roads(&roads, &allowed);
    let pairs = join_candidates(&kept, &sidewalks, cfg.candidates.join_buffer_m)?;
    write_pair_file(&a.out, &pairs)?;

    let mut rep = Reporter::new("candidates join", &cfg);
    rep.input("roads", &a.roads)?.input("sidewalks", &a.sidewalks)?;
    rep.emit(
        CandidateSummary {
            task: "join",
            left_features: sidewalks.len(),
            right_features: roads.len(),
            roads_kept: Some(kept.len()),
            buffer_m: Some(cfg.candidates.join_buffer_m),
            candidates: pairs.len(),
        },
        a.common.report.as_deref(),
    )
}

fn candidates_union(mut cfg: RunConfig, a: UnionArgs) -> Result<()> {
    set(&mut cfg.features.crs, a.crs);
    let cfg = ready(cfg)?;
    let left = read_geojson(&a.left, cfg.features.crs)?;
    let right = read_geojson(&a.right, cfg.features.crs)?;
    let pairs = union_candidates(&left, &right)?;
    write_pair_file(&a.out, &pairs)?;

    let mut rep = Reporter::new("candidates union", &cfg);
    rep.input("left", &a.left)?.input("right", &a.right)?;
    rep.emit(
        CandidateSummary {
            task: "union",
            left_features: left.len(),
            right_features: right.len(),
            roads_kept: None,
            buffer_m: None,
            candidates: pairs.len(),
        },
        a.common.report.as_deref(),
    )
}

#[derive(Serialize)]
struct FeatureSummary {
    feature_definition: &'static str,
    pairs_in: usize,
    pairs_out: usize,
    labeled: usize,
    labels_unmatched: usize,
    errors: Vec<PairError>,
}

fn features(mut cfg: RunConfig, a: FeaturesArgs) -> Result<()> {
    set(&mut cfg.features.crs, a.crs);
    set(&mut cfg.features.overlap_buffer_m, a.overlap_buffer_m);
    set(&mut cfg.features.angle_mode, a.angle_mode);
    let cfg = ready(cfg)?;
    let mut pairs = read_pair_file(&a.pairs, cfg.features.crs)?;
    let n_in = pairs.len();

    let mut unmatched = 0;
    if let Some(path) = &a.labels {
        let labels: Vec<LabelRecord> = read_jsonl_file(path)?;
        let mut by_ids: HashMap<(&str, &str), u8> = HashMap::new();
        for l in &labels {
            if l.label > 1 {
                bail!("label for {}|{} must be 0 or 1, got {}", l.left_id, l.right_id, l.label);
            }
            if by_ids.insert((&l.left_id, &l.right_id), l.label).is_some() {
                bail!("duplicate label for {}|{}", l.left_id, l.right_id);
            }
        }
        let mut used = 0;
        for p in &mut pairs {
            if let Some(&label) = by_ids.get(&(p.left_id(), p.right_id())) {
                p.label = Some(label);
                used += 1;
            }
        }
        unmatched = labels.len() - used;
    }

    let outcome = compute_features_batch(pairs, &cfg.features)?;
    write_pair_file(&a.out, &outcome.records)?;

    let mut rep = Reporter::new("features", &cfg);
    rep.input("pairs", &a.pairs)?;
    if let Some(path) = &a.labels {
        rep.input("labels", path)?;
    }
    rep.emit(
        FeatureSummary {
            feature_definition: FEATURE_DEFINITION,
            pairs_in: n_in,
            pairs_out: outcome.records.len(),
            labeled: outcome.records.iter().filter(|p| p.label.is_some()).count(),
            labels_unmatched: unmatched,
            errors: outcome.errors,
        },
        a.common.report.as_deref(),
    )
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    val: usize,
    test: usize,
}

fn split(mut cfg: RunConfig, a: SplitArgs) -> Result<()> {
    set(&mut cfg.features.crs, a.crs);
    set(&mut cfg.split.seed, a.seed);
    set(&mut cfg.split.train, a.train);
    set(&mut cfg.split.val, a.val);
    set(&mut cfg.split.test, a.test);
    let cfg = ready(cfg)?;
    let pairs = read_pair_file(&a.pairs, cfg.features.crs)?;
    let s = split_dataset(pairs, &cfg.split)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, part) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        write_pair_file(&a.out_dir.join(format!("{name}.jsonl")), part)?;
    }
    let mut rep = Reporter::new("split", &cfg);
    rep.seed("split", cfg.split.seed).input("pairs", &a.pairs)?;
    rep.emit(
        SplitSummary {
            train: s.train.len(),
            val: s.val.len(),
            test: s.test.len(),
        },
        a.common.report.as_deref(),
    )
}

fn sweep_cmd(mut cfg: RunConfig, a: SweepArgs) -> Result<()> {
    set(&mut cfg.task, a.task);
    set(&mut cfg.features.crs, a.crs);
    let cfg = ready(cfg)?;
    let pairs = read_pair_file(&a.train, cfg.features.crs)?;
    let specs = enumerate_specs(cfg.task, &cfg.grids()?)?;
    let report = sweep(cfg.task, &pairs, &specs)?;
    let mut rep = Reporter::new("sweep", &cfg);
    rep.input("train", &a.train)?;
    rep.emit(report, a.common.report.as_deref())
}

/// `best.spec` or `worst.spec` of a sweep report, bare or wrapped in a report envelope.
fn spec_from_sweep(path: &Path, which: &str) -> Result<HeuristicSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let body = v.get("result").unwrap_or(&v);
    let spec = body[which]["spec"]
        .as_str()
        .ok_or_else(|| anyhow!("{}: no {which}.spec in sweep report", path.display()))?;
    Ok(spec.parse()?)
}

#[derive(Serialize)]
struct Prediction<'a> {
    pair_id: &'a str,
    label: u8,
}

#[derive(Serialize)]
struct ClassifySummary {
    spec: HeuristicSpec,
    n: usize,
    positives: usize,
    eval: Option<EvalReport>,
}

fn classify(mut cfg: RunConfig, a: ClassifyArgs) -> Result<()> {
    set(&mut cfg.task, a.task);
    set(&mut cfg.features.crs, a.crs);
    let cfg = ready(cfg)?;
    let spec: HeuristicSpec = match (&a.spec, &a.sweep) {
        (Some(s), _) => s.parse()?,
        (None, Some(p)) => spec_from_sweep(p, "best")?,
        (None, None) => bail!("one of --spec or --sweep is required"),
    };
    spec.check_task(cfg.task)?;
    let pairs = read_pair_file(&a.pairs, cfg.features.crs)?;
    let labels = pairs
        .iter()
        .map(|p| {
            p.features
                .as_ref()
                .map(|fv| predict(fv, &spec))
                .ok_or_else(|| anyhow!("pair {} has no features; run `features` first", p.pair_id))
        })
        .collect::<Result<Vec<u8>>>()?;
    if let Some(out) = &a.out {
        let rows: Vec<Prediction> = pairs
            .iter()
            .zip(&labels)
            .map(|(p, &label)| Prediction { pair_id: &p.pair_id, label })
            .collect();
        write_jsonl_file(out, &rows)?;
    }
    let eval = if pairs.iter().all(|p| p.label.is_some()) {
        let gold: Vec<u8> = pairs.iter().filter_map(|p| p.label).collect();
        Some(evaluate(&labels, &gold)?)
    } else {
        None
    };

    let mut rep = Reporter::new("classify", &cfg);
    rep.input("pairs", &a.pairs)?;
    if let Some(p) = &a.sweep {
        rep.input("sweep", p)?;
    }
    rep.emit(
        ClassifySummary {
            spec,
            n: pairs.len(),
            positives: labels.iter().filter(|&&l| l == 1).count(),
            eval,
        },
        a.common.report.as_deref(),
    )
}

fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) {
    set(&mut cfg.task, m.task);
    set(&mut cfg.features.crs, m.crs);
    set(&mut cfg.backend.kind, m.backend);
    if m.script.is_some() {
        cfg.backend.script = m.script.clone();
    }
    set(&mut cfg.prompt.mode, m.mode);
    set(&mut cfg.prompt.shots, m.shots);
    if m.template_dir.is_some() {
        cfg.prompt.template_dir = m.template_dir.clone();
    }
    set(&mut cfg.in_flight, m.in_flight);
    set(&mut cfg.failure_policy, m.policy);
}

fn build_backend(cfg: &RunConfig) -> Result<Box<dyn ChatBackend>> {
    let b = &cfg.backend;
    match b.kind {
        BackendKind::Mock => {
            let script = b
                .script
                .as_deref()
                .ok_or_else(|| anyhow!("the mock backend needs a reply script (--script)"))?;
            Ok(Box::new(MockBackend::from_file(script)?))
        }
        BackendKind::Http => {
            let mut h = HttpConfig::from_env()?;
            h.max_attempts = b.max_attempts;
            h.base_delay = b.base_delay();
            h.timeout = Duration::from_secs(b.timeout_s);
            h.min_interval = b.min_interval_ms.map(Duration::from_millis);
            Ok(Box::new(HttpBackend::new(h)?))
        }
    }
}

/// Everything a model-driven command needs besides the pairs.
struct ModelSetup {
    spec: PromptSpec,
    templates: TemplateSet,
    exemplars: Option<Exemplars>,
    backend: Box<dyn ChatBackend>,
    opts: InferenceOptions,
}

fn model_setup(cfg: &RunConfig, train: Option<&Path>) -> Result<ModelSetup> {
    let mut spec = PromptSpec::new(cfg.task, cfg.prompt.mode, cfg.prompt.shots);
    if let Some(kinds) = &cfg.prompt.heuristics {
        spec.heuristic_kinds = kinds.clone();
    }
    let templates = match &cfg.prompt.template_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let exemplars = match cfg.prompt.shots {
        Shots::Zero => None,
        Shots::Few => {
            let path = train.ok_or_else(|| anyhow!("few-shot prompting needs an exemplar pool (--train)"))?;
            let pool = read_pair_file(path, cfg.features.crs)?;
            let ids = cfg.prompt.exemplars.as_ref().map(|[p, n]| (p.as_str(), n.as_str()));
            Some(Exemplars::select(&pool, ids)?)
        }
    };
    Ok(ModelSetup {
        spec,
        templates,
        exemplars,
        backend: build_backend(cfg)?,
        opts: InferenceOptions {
            in_flight: cfg.in_flight,
            policy: cfg.failure_policy,
            params: cfg.generation,
        },
    })
}

fn model_inputs<'a>(rep: &mut Reporter<'a>, cfg: &RunConfig, pairs: &'a Path, train: Option<&'a Path>) -> Result<()> {
    rep.input("pairs", pairs)?;
    if let (Shots::Few, Some(t)) = (cfg.prompt.shots, train) {
        rep.input("train", t)?;
    }
    Ok(())
}

fn prompt(mut cfg: RunConfig, a: PromptArgs) -> Result<()> {
    apply_model_args(&mut cfg, &a.model);
    let cfg = ready(cfg)?;
    let pairs = read_pair_file(&a.pairs, cfg.features.crs)?;
    let m = model_setup(&cfg, a.model.train.as_deref())?;
    let outcome = run_inference(&pairs, &m.spec, m.exemplars.as_ref(), &m.templates, m.backend.as_ref(), &m.opts)?;
    if let Some(path) = &a.exchanges {
        write_lines(path, |w| write_exchanges(w, &outcome.exchanges))?;
    }
    let mut rep = Reporter::new("prompt", &cfg);
    model_inputs(&mut rep, &cfg, &a.pairs, a.model.train.as_deref())?;
    rep.emit(outcome.report, a.common.report.as_deref())
}

fn refine(mut cfg: RunConfig, a: RefineArgs) -> Result<()> {
    apply_model_args(&mut cfg, &a.model);
    set(&mut cfg.refine.initial, a.initial);
    set(&mut cfg.refine.seed, a.seed);
    if a.spec.is_some() {
        cfg.refine.spec = a.spec.clone();
    }
    let cfg = ready(cfg)?;
    let pairs = read_pair_file(&a.pairs, cfg.features.crs)?;
    let source = match cfg.refine.initial {
        InitialKind::Random => InitialSource::Random { seed: cfg.refine.seed },
        InitialKind::Spec => InitialSource::Heuristic {
            spec: cfg
                .refine
                .spec
                .as_deref()
                .ok_or_else(|| anyhow!("--initial spec needs --spec"))?
                .parse()?,
        },
        kind @ (InitialKind::Best | InitialKind::Worst) => {
            let which = if kind == InitialKind::Best { "best" } else { "worst" };
            let path = a.sweep.as_deref().ok_or_else(|| anyhow!("--initial {which} needs --sweep"))?;
            InitialSource::Heuristic {
                spec: spec_from_sweep(path, which)?,
            }
        }
    };
    let initial = make_initial(&pairs, &source)?;
    let m = model_setup(&cfg, a.model.train.as_deref())?;
    let outcome = run_refine(
        &pairs,
        &initial,
        &m.spec,
        m.exemplars.as_ref(),
        &m.templates,
        m.backend.as_ref(),
        &m.opts,
    )?;
    if let Some(path) = &a.records {
        write_lines(path, |w| write_records(w, &outcome.records))?;
    }
    let mut rep = Reporter::new("refine", &cfg);
    if cfg.refine.initial == InitialKind::Random {
        rep.seed("initial", cfg.refine.seed);
    }
    model_inputs(&mut rep, &cfg, &a.pairs, a.model.train.as_deref())?;
    if let Some(p) = &a.sweep {
        rep.input("sweep", p)?;
    }
    rep.emit(outcome.report, a.common.report.as_deref())
}

fn synth_gen(a: SynthGenArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be >= 1");
    }
    let mut rows = generate(a.task, a.n, a.seed);
    if a.blind {
        for r in &mut rows {
            r.truth = None;
        }
    }
    write_jsonl_file(&a.out, &rows)
}

fn synth_grade(cfg: RunConfig, a: SynthGradeArgs) -> Result<()> {
    let instances: Vec<SyntheticInstance> = read_jsonl_file(&a.instances)?;
    for inst in &instances {
        inst.validate()?;
    }
    let answers: Vec<Answer> = read_jsonl_file(&a.answers)?;
    let report = grade(&instances, &answers)?;
    let mut rep = Reporter::new("synth grade", &cfg);
    rep.input("instances", &a.instances)?.input("answers", &a.answers)?;
    rep.emit(report, a.common.report.as_deref())
}

#[derive(Serialize)]
struct PlantedSummary {
    rule: HeuristicSpec,
    n: usize,
    positives: usize,
    geojson: bool,
}

fn synth_planted(cfg: RunConfig, a: SynthPlantedArgs) -> Result<()> {
    if a.out.is_none() && a.geojson_dir.is_none() {
        bail!("nothing to write: pass --out and/or --geojson-dir");
    }
    let pc = PlantedPairConfig {
        n: a.n,
        rule: a.rule.parse()?,
        margin: a.margin,
        positive_rate: a.positive_rate,
        seed: a.seed,
        ..PlantedPairConfig::default()
    };
    let pairs = generate_planted_pairs(&pc)?;
    if let Some(out) = &a.out {
        write_pair_file(out, &pairs)?;
    }
    if let Some(dir) = &a.geojson_dir {
        let fx = planted_geographic_fixture(&pc, Coordinate::new(a.origin_lon, a.origin_lat), a.spacing_m)?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, set) in [("roads.geojson", &fx.roads), ("sidewalks.geojson", &fx.sidewalks)] {
            let path = dir.join(name);
            std::fs::write(&path, serialize_geojson(set)).with_context(|| format!("writing {}", path.display()))?;
        }
        write_jsonl_file(&dir.join("labels.jsonl"), &fx.labels)?;
    }
    let mut rep = Reporter::new("synth planted", &cfg);
    rep.seed("planted", a.seed);
    rep.emit(
        PlantedSummary {
            rule: pc.rule,
            n: pairs.len(),
            positives: pairs.iter().filter(|p| p.label == Some(1)).count(),
            geojson: a.geojson_dir.is_some(),
        },
        a.common.report.as_deref(),
    )
}

#[derive(Serialize)]
struct EvalSummary {
    schema_version: u32,
    n: usize,
    missing: usize,
    parse_failures: usize,
    policy: FailurePolicy,
    eval: Option<EvalReport>,
}

/// Label of one prediction line: `label`, else `final_label`; null means a parse failure.
fn prediction_label(v: &Value) -> Result<Option<u8>> {
    let field = v.get("label").or_else(|| v.get("final_label"));
    match field {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => Ok(n.as_u64().map(|x| x as u8)),
        Some(other) => bail!("label must be 0, 1 or null, got {other}"),
    }
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    set(&mut cfg.features.crs, a.crs);
    set(&mut cfg.failure_policy, a.policy);
    let cfg = ready(cfg)?;
    let pairs: Vec<PairRecord> = read_pair_file(&a.pairs, cfg.features.crs)?;
    let rows: Vec<Value> = read_jsonl_file(&a.predictions)?;
    let mut by_id: BTreeMap<String, Option<u8>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let id = row["pair_id"]
            .as_str()
            .ok_or_else(|| anyhow!("prediction line {}: missing pair_id", i + 1))?;
        let label = prediction_label(row).with_context(|| format!("prediction for {id}"))?;
        if by_id.insert(id.to_string(), label).is_some() {
            bail!("duplicate prediction for {id}");
        }
    }
    if pairs.iter().any(|p| p.label.is_none()) {
        bail!("{}: every pair needs a gold label", a.pairs.display());
    }
    let missing = pairs.iter().filter(|p| !by_id.contains_key(&p.pair_id)).count();
    let predicted: Vec<Option<u8>> = pairs
        .iter()
        .map(|p| by_id.get(&p.pair_id).copied().flatten())
        .collect();
    let gold: Vec<Option<u8>> = pairs.iter().map(|p| p.label).collect();
    let mut rep = Reporter::new("eval", &cfg);
    rep.input("pairs", &a.pairs)?.input("predictions", &a.predictions)?;
    rep.emit(
        EvalSummary {
            schema_version: SCHEMA_VERSION,
            n: pairs.len(),
            missing,
            parse_failures: predicted.iter().filter(|p| p.is_none()).count() - missing,
            policy: cfg.failure_policy,
            eval: score(&predicted, &gold, cfg.failure_policy)?,
        },
        a.common.report.as_deref(),
    )
}
