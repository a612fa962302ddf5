use geomatch_core::heuristics::{
    enumerate_specs, predict, sweep, HeuristicKind, ThresholdGrids,
};
use geomatch_core::synth::{generate_planted_pairs, PlantedPairConfig};
use geomatch_core::Task;

#[test]
fn planted_rule_is_the_unique_perfect_spec() {
    let cfg = PlantedPairConfig {
        n: 2000,
        seed: 1,
        ..Default::default()
    };
    let pairs = generate_planted_pairs(&cfg).unwrap();
    let specs = enumerate_specs(Task::Join, &ThresholdGrids::defaults(Task::Join)).unwrap();
    let report = sweep(Task::Join, &pairs, &specs).unwrap();

    // brute-force re-scoring of every spec
    let mut scores: Vec<(usize, String)> = specs
        .iter()
        .map(|s| {
            let correct = pairs
                .iter()
                .filter(|p| predict(p.features.as_ref().unwrap(), s) == p.label.unwrap())
                .count();
            (correct, s.to_string())
        })
        .collect();
    scores.sort_by_key(|s| std::cmp::Reverse(s.0));
    assert_eq!(report.best.correct, scores[0].0);
    assert_eq!(scores[0], (2000, "p:5,c:2".to_string()));
    assert!(scores[1].0 < 2000, "runner-up {:?} also perfect", scores[1]);

    assert_eq!(report.best_spec().threshold(HeuristicKind::Parallel), Some(5.0));
    assert_eq!(report.best_spec().threshold(HeuristicKind::Clearance), Some(2.0));
    let single = report.best_single.as_ref().unwrap().accuracy;
    let duo = report.best_duo.as_ref().unwrap().accuracy;
    let trio = report.best_trio.as_ref().unwrap().accuracy;
    assert!(duo.max(trio) >= single);
    assert!(duo > single);
}

