use rayon::prelude::*;

use super::metrics::{run_scenario, RunResult};
use super::scenario::{ScenarioConfig, Variant};
use super::stats::{aggregate, ComparisonStats};

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSpec {
    pub scenarios: Vec<ScenarioConfig>,
    pub sizes: Vec<u64>,
    pub variants: Vec<Variant>,
    pub reps: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub size_bytes: u64,
    pub variant: String,
    pub rep: u32,
    pub result: RunResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub size_bytes: u64,
    pub variant: String,
    pub n: usize,
    pub timeouts: usize,
    /// Against the baseline cell; `None` without at least two pairs.
    pub stats: Option<ComparisonStats>,
}

impl MatrixSpec {
    pub fn full(seed: u64) -> Self {
        MatrixSpec {
            scenarios: ScenarioConfig::presets(),
            sizes: super::scenario::SIZES.to_vec(),
            variants: Variant::standard_set(),
            reps: super::scenario::REPETITIONS,
            seed,
        }
    }

    pub fn cell_config(&self, scenario: &ScenarioConfig, size: u64, variant: Variant) -> ScenarioConfig {
        scenario.clone().with_size(size).with_variant(variant).with_seed(self.seed)
    }

    /// Every run of the matrix, in (scenario, size, variant, rep) order.
    /// Runs are independent and execute in parallel; the result order does
    /// not depend on scheduling.
    pub fn run(&self) -> Vec<RunRecord> {
        let jobs: Vec<(ScenarioConfig, Variant, u32)> = self
            .scenarios
            .iter()
            .flat_map(|sc| {
                self.sizes.iter().flat_map(move |&size| {
                    self.variants
                        .iter()
                        .flat_map(move |&v| (0..self.reps).map(move |rep| (self.cell_config(sc, size, v), v, rep)))
                })
            })
            .collect();
        jobs.into_par_iter()
            .map(|(cfg, v, rep)| RunRecord {
                result: run_scenario(&cfg, rep),
                scenario: cfg.name,
                size_bytes: cfg.short_flow_bytes,
                variant: v.to_string(),
                rep,
            })
            .collect()
    }
}

/// Runs of one cell ordered by repetition.
pub fn cell<'a>(records: &'a [RunRecord], scenario: &str, size: u64, variant: &str) -> Vec<&'a RunResult> {
    let mut v: Vec<&RunRecord> =
        records.iter().filter(|r| r.scenario == scenario && r.size_bytes == size && r.variant == variant).collect();
    v.sort_by_key(|r| r.rep);
    v.into_iter().map(|r| &r.result).collect()
}

/// One row per (scenario, size, variant) present in `records`, each compared
/// with the baseline of the same scenario and size.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    for r in records {
        let k = (r.scenario.clone(), r.size_bytes, r.variant.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, size, variant)| {
            let runs: Vec<RunResult> = cell(records, &scenario, size, &variant).into_iter().cloned().collect();
            let base: Vec<RunResult> = cell(records, &scenario, size, "baseline").into_iter().cloned().collect();
            let stats = aggregate(&runs, &base).ok();
            CellSummary {
                n: runs.len(),
                timeouts: runs.iter().filter(|r| r.timeout).count(),
                scenario,
                size_bytes: size,
                variant,
                stats,
            }
        })
        .collect()
}
