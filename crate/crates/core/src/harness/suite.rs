//! Side-by-side runs of several objectives on identical data and seeds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::train::{train, train_to_dir, write_json, Summary};
use super::{Objective, RunConfig};
use crate::error::{Error, Result};

/// Seeds per arm in the multi-seed suites.
pub const SUITE_SEEDS: u64 = 3;
/// Input noise and train-label flip rate of the robustness suite.
pub const ROBUSTNESS_INPUT_NOISE: f64 = 0.4;
pub const ROBUSTNESS_FLIP_PROB: f64 = 0.3;
/// Thresholds of the collapse demonstration.
pub const COLLAPSED_MAJORITY: f64 = 0.5;
pub const ALIGNED_SUPERMAJORITY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    CollapseDemo,
    Ablate,
    Robustness,
}

impl SuiteName {
    pub fn name(self) -> &'static str {
        match self {
            SuiteName::CollapseDemo => "collapse-demo",
            SuiteName::Ablate => "ablate",
            SuiteName::Robustness => "robustness",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SuiteName::CollapseDemo,
            SuiteName::Ablate,
            SuiteName::Robustness,
        ]
        .into_iter()
        .find(|n| n.name() == s)
        .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Final metrics of one arm at one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub objective: Objective,
    pub seed: u64,
    pub data_seed: u64,
    /// Output subdirectory, relative to the suite directory.
    pub dir: String,
    pub mean_sigma1_ratio: f64,
    pub mean_pairwise_cosine: f64,
    pub mean_min_sigma: f64,
    pub frac_aligned: f64,
    pub frac_collapsed: f64,
    pub mean_u1_offdiag_similarity: f64,
    pub mean_recall_at_1: f64,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub final_sigma: Vec<f64>,
}

impl ArmResult {
    fn from_summary(s: &Summary, dir: String) -> Self {
        let r = &s.train_report;
        Self {
            objective: s.objective,
            seed: s.seed,
            data_seed: s.data_seed,
            dir,
            mean_sigma1_ratio: r.mean_sigma1_ratio,
            mean_pairwise_cosine: r.mean_pairwise_cosine,
            mean_min_sigma: r.mean_min_sigma,
            frac_aligned: r.frac_aligned,
            frac_collapsed: r.frac_collapsed,
            mean_u1_offdiag_similarity: r.mean_u1_offdiag_similarity,
            mean_recall_at_1: s.mean_recall_at_1,
            auc: s.auc,
            accuracy: s.accuracy,
            final_sigma: r.mean_sigma.clone(),
        }
    }
}

/// A declared ordering, evaluated per seed and aggregated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub name: String,
    pub description: String,
    /// `"single"`, `"majority"` or `"all"` over `per_seed`.
    pub rule: String,
    pub per_seed: Vec<bool>,
    pub holds: bool,
}

impl Ordering {
    fn new(name: &str, description: &str, rule: Rule, per_seed: Vec<bool>) -> Self {
        let hits = per_seed.iter().filter(|&&b| b).count();
        let holds = match rule {
            Rule::Single | Rule::All => hits == per_seed.len(),
            Rule::Majority => 2 * hits > per_seed.len(),
        };
        Self {
            name: name.to_string(),
            description: description.to_string(),
            rule: rule.as_str().to_string(),
            per_seed,
            holds,
        }
    }
}

#[derive(Clone, Copy)]
enum Rule {
    Single,
    Majority,
    All,
}

impl Rule {
    fn as_str(self) -> &'static str {
        match self {
            Rule::Single => "single",
            Rule::Majority => "majority",
            Rule::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub suite: SuiteName,
    pub arms: Vec<ArmResult>,
    pub orderings: Vec<Ordering>,
    pub all_hold: bool,
}

impl Comparison {
    pub fn ordering(&self, name: &str) -> Option<&Ordering> {
        self.orderings.iter().find(|o| o.name == name)
    }

    pub fn arm(&self, objective: Objective, seed: u64) -> Option<&ArmResult> {
        self.arms
            .iter()
            .find(|a| a.objective == objective && a.seed == seed)
    }
}

fn arm_config(base: &RunConfig, objective: Objective, offset: u64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.objective = objective;
    cfg.seed = base.seed + offset;
    cfg.data.seed = base.data.seed + offset;
    cfg.out_dir = None;
    cfg
}

/// Runs the arms of `name` on `base`. With `out_dir`, each arm writes its
/// own subdirectory and the comparison lands in `comparison.json`.
pub fn run_suite(name: SuiteName, base: &RunConfig, out_dir: Option<&Path>) -> Result<Comparison> {
    base.validate()?;
    let (objectives, seeds, base) = match name {
        SuiteName::CollapseDemo => (
            vec![Objective::Pmrl, Objective::VolumeOnly],
            1,
            base.clone(),
        ),
        SuiteName::Ablate => (
            vec![Objective::Pmrl, Objective::PmrlNoReg, Objective::PmrlNoIm],
            SUITE_SEEDS,
            base.clone(),
        ),
        SuiteName::Robustness => {
            let mut cfg = base.clone();
            cfg.input_noise = ROBUSTNESS_INPUT_NOISE;
            cfg.data.label_flip_prob = ROBUSTNESS_FLIP_PROB;
            cfg.data.flip_test_labels = false;
            (
                vec![Objective::Pmrl, Objective::VolumeContrastive],
                SUITE_SEEDS,
                cfg,
            )
        }
    };
    base.validate()?;

    let mut arms = Vec::new();
    for offset in 0..seeds {
        for &objective in &objectives {
            let cfg = arm_config(&base, objective, offset);
            let dir = format!("{}-seed{}", objective.name(), cfg.seed);
            let out = match out_dir {
                Some(root) => train_to_dir(&cfg, &root.join(&dir))?,
                None => train(&cfg)?,
            };
            arms.push(ArmResult::from_summary(&out.summary, dir));
        }
    }

    let seed_list: Vec<u64> = (0..seeds).map(|o| base.seed + o).collect();
    let pair =
        |a: Objective, b: Objective, f: &dyn Fn(&ArmResult, &ArmResult) -> bool| -> Vec<bool> {
            seed_list
                .iter()
                .map(|&s| {
                    let find = |o: Objective| arms.iter().find(|r| r.objective == o && r.seed == s);
                    match (find(a), find(b)) {
                        (Some(x), Some(y)) => f(x, y),
                        _ => false,
                    }
                })
                .collect()
        };

    let orderings = match name {
        SuiteName::CollapseDemo => {
            let single = |o: Objective, f: &dyn Fn(&ArmResult) -> bool| -> Vec<bool> {
                arms.iter().filter(|r| r.objective == o).map(f).collect()
            };
            vec![
                Ordering::new(
                    "pmrl_sigma1_ratio_exceeds_volume_only",
                    "pmrl mean sigma_1/sqrt(k) > volume-only mean sigma_1/sqrt(k)",
                    Rule::Single,
                    pair(Objective::Pmrl, Objective::VolumeOnly, &|p, v| {
                        p.mean_sigma1_ratio > v.mean_sigma1_ratio
                    }),
                ),
                Ordering::new(
                    "volume_only_collapsed_majority",
                    "volume-only: sigma_min < 0.05 and sigma_1/sqrt(k) < 0.95 for >= 50% of instances",
                    Rule::Single,
                    single(Objective::VolumeOnly, &|v| v.frac_collapsed >= COLLAPSED_MAJORITY),
                ),
                Ordering::new(
                    "pmrl_aligned_supermajority",
                    "pmrl: sigma_1/sqrt(k) >= 0.95 for >= 90% of instances",
                    Rule::Single,
                    single(Objective::Pmrl, &|p| p.frac_aligned >= ALIGNED_SUPERMAJORITY),
                ),
            ]
        }
        SuiteName::Ablate => vec![
            Ordering::new(
                "recall1_pmrl_ge_no_reg",
                "held-out cross-modal Recall@1: pmrl >= pmrl-no-reg",
                Rule::Majority,
                pair(Objective::Pmrl, Objective::PmrlNoReg, &|a, b| {
                    a.mean_recall_at_1 >= b.mean_recall_at_1
                }),
            ),
            Ordering::new(
                "recall1_pmrl_ge_no_im",
                "held-out cross-modal Recall@1: pmrl >= pmrl-no-im",
                Rule::Majority,
                pair(Objective::Pmrl, Objective::PmrlNoIm, &|a, b| {
                    a.mean_recall_at_1 >= b.mean_recall_at_1
                }),
            ),
            Ordering::new(
                "u1_similarity_pmrl_lt_no_reg",
                "mean off-diagonal u_1 similarity: pmrl < pmrl-no-reg",
                Rule::All,
                pair(Objective::Pmrl, Objective::PmrlNoReg, &|a, b| {
                    a.mean_u1_offdiag_similarity < b.mean_u1_offdiag_similarity
                }),
            ),
        ],
        SuiteName::Robustness => vec![Ordering::new(
            "auc_pmrl_ge_volume_contrastive",
            "held-out AUC under input noise 0.4 and train label flips 0.3: pmrl >= volume-contrastive",
            Rule::Majority,
            pair(Objective::Pmrl, Objective::VolumeContrastive, &|a, b| {
                match (a.auc, b.auc) {
                    (Some(x), Some(y)) => x >= y,
                    _ => false,
                }
            }),
        )],
    };

    let comparison = Comparison {
        suite: name,
        all_hold: orderings.iter().all(|o| o.holds),
        arms,
        orderings,
    };
    if let Some(root) = out_dir {
        std::fs::create_dir_all(root)?;
        write_json(&root.join("comparison.json"), &comparison)?;
    }
    Ok(comparison)
}
