//! Experiment plumbing: run configuration, the training loop, gradient
//! checks, and the comparison suites driven by the `pmrl` binary.

mod gradcheck;
mod probe;
mod suite;
mod train;

pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport, SuiteResult};
pub use probe::{fit_logistic_probe, LogisticProbe};
pub use suite::{run_suite, ArmResult, Comparison, Ordering, SuiteName};
pub use train::{train, train_to_dir, PairRecall, RunOutput, Summary, TrajectoryRow};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::AdamWConfig;
use crate::synth::SyntheticConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Pmrl,
    PmrlNoReg,
    PmrlNoIm,
    VolumeOnly,
    VolumeContrastive,
    InfoncePairwise,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::Pmrl,
        Objective::PmrlNoReg,
        Objective::PmrlNoIm,
        Objective::VolumeOnly,
        Objective::VolumeContrastive,
        Objective::InfoncePairwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Pmrl => "pmrl",
            Objective::PmrlNoReg => "pmrl-no-reg",
            Objective::PmrlNoIm => "pmrl-no-im",
            Objective::VolumeOnly => "volume-only",
            Objective::VolumeContrastive => "volume-contrastive",
            Objective::InfoncePairwise => "infonce-pairwise",
        }
    }

    /// Loss weights actually used by the PMRL family.
    pub fn loss_weights(self, base: &LossConfig) -> LossConfig {
        let mut cfg = base.clone();
        match self {
            Objective::PmrlNoReg => cfg.lambda1 = 0.0,
            Objective::PmrlNoIm => cfg.lambda2 = 0.0,
            _ => {}
        }
        cfg
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Objective,
    pub data: SyntheticConfig,
    /// Gaussian noise added to unit-normalized inputs; 0 leaves inputs raw.
    pub input_noise: f64,
    pub encoder_hidden: usize,
    pub embed_dim: usize,
    pub head_hidden: usize,
    pub loss: LossConfig,
    /// `total_steps` is overwritten by `steps`.
    pub optimizer: AdamWConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    /// Temperature of the volume-contrastive and InfoNCE baselines.
    pub contrastive_tau: f64,
    pub anchor_slot: usize,
    pub out_dir: Option<PathBuf>,
    /// Drives initialization, batch order and hard negatives.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Pmrl,
            data: SyntheticConfig::default(),
            input_noise: 0.0,
            encoder_hidden: 64,
            embed_dim: 32,
            head_hidden: 64,
            loss: LossConfig::default(),
            optimizer: AdamWConfig::default(),
            steps: 2000,
            batch_size: 32,
            eval_interval: 25,
            contrastive_tau: 0.1,
            anchor_slot: 0,
            out_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        self.data
            .validate()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        self.loss.validate()?;
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.batch_size > self.data.n_train() {
            return bad("batch_size exceeds the training split");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be positive");
        }
        if self.encoder_hidden == 0 || self.embed_dim == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if !(self.contrastive_tau > 0.0) {
            return bad("contrastive_tau must be positive");
        }
        if self.anchor_slot >= self.data.k {
            return bad("anchor_slot must index a modality");
        }
        if !(self.input_noise >= 0.0) {
            return bad("input_noise must be nonnegative");
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return bad("optimizer lr must be positive and betas in [0, 1)");
        }
        if !(o.eps > 0.0 && o.weight_decay >= 0.0 && o.clip_norm > 0.0) {
            return bad("optimizer eps, weight_decay and clip_norm out of range");
        }
        if !(0.0..=1.0).contains(&o.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub(crate) fn optimizer_config(&self) -> AdamWConfig {
        AdamWConfig {
            total_steps: self.steps,
            ..self.optimizer.clone()
        }
    }
}
