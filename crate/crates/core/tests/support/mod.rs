//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use tram::analysis::{CkaValue, SignificanceTest};
use tram::harness::{
    aggregate, CkaReport, DomainMetrics, DomainTag, ExperimentConfig, ResultsTable, RunResult, SharpnessReport,
    StepSummary, TableMetric,
};
use tram::optim::Algorithm;

/// A result over `train`, `corr_1`, `corr_2` and `anti_1` with the given
/// accuracies and losses derived from them.
pub fn fake_run(algorithm: Algorithm, seed: u64, accs: [f64; 4]) -> RunResult {
    let names = ["train", "corr_1", "corr_2", "anti_1"];
    let tags = [DomainTag::Train, DomainTag::Correlated, DomainTag::Correlated, DomainTag::Anticorrelated];
    let domains = (0..4)
        .map(|k| DomainMetrics {
            domain: names[k].into(),
            tag: tags[k],
            accuracy: accs[k],
            nll: 1.0 - accs[k] / 2.0,
            perplexity: (1.0 - accs[k] / 2.0).exp(),
        })
        .collect();
    let per_domain: IndexMap<String, f64> = names.iter().enumerate().map(|(k, n)| (n.to_string(), k as f64)).collect();
    RunResult {
        algorithm,
        seed,
        selected_step: 0,
        selected_val_loss: 0.5,
        domains,
        steps: StepSummary::default(),
        sharpness: SharpnessReport {
            in_domain: 0.0,
            per_domain,
        },
        cka: CkaReport {
            per_domain: names.iter().map(|n| (n.to_string(), CkaValue::Defined(0.5))).collect(),
            zero_shot_mean: Some(0.5),
            zero_shot_std: Some(0.0),
        },
        config: ExperimentConfig::default(),
        wall_clock_s: 1.0,
    }
}

/// Two single-run algorithms, the fixture behind the golden tables.
pub fn golden_fixture() -> ResultsTable {
    let runs = [
        fake_run(Algorithm::Adam, 0, [0.91, 0.87, 0.83, 0.42]),
        fake_run(Algorithm::TramX, 0, [0.9, 0.88, 0.84, 0.45]),
    ];
    aggregate(&runs, TableMetric::Accuracy, Algorithm::Adam, SignificanceTest::Wilcoxon).unwrap()
}

pub fn golden_renderings(t: &ResultsTable) -> [(&'static str, String); 3] {
    [
        ("two_runs.csv", t.to_csv().unwrap()),
        ("two_runs.md", t.to_markdown()),
        ("two_runs.json", t.to_json().unwrap()),
    ]
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn read_golden(name: &str) -> String {
    let path = golden_path(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
