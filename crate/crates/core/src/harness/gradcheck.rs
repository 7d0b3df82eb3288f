//! Finite-difference verification of every analytic gradient on random
//! small problems (d ≤ 16, k ≤ 4, batch ≤ 4).
//!
//! Cases whose spectrum is degenerate (a gap between singular values, or the
//! smallest singular value, below `min_gap`) are skipped and counted, since
//! the singular vectors are not differentiable there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::train::{backprop, embed};
use crate::error::Result;
use crate::finite_diff::{central_difference, relative_error, FD_STEP};
use crate::linalg::{
    min_spectral_gap, normalize_columns, svd_sigma_backward, svd_thin, Matrix, SvdResult,
};
use crate::losses::{
    batch_svd, combined_loss, leading_direction_reg_from_svds, singular_loss_from_svds,
    volume_only_from_svds, LossConfig, LossOutput,
};
use crate::model::PmrlModel;

pub const MAX_DIM: usize = 16;
pub const MAX_MODALITIES: usize = 4;
pub const MAX_BATCH: usize = 4;
/// Volume gradients are only checked away from the stall region.
const VOLUME_MIN_SIGMA: f64 = 1e-2;
/// Smallest `|Σ_j v_j1|` for which the canonical sign of `u₁` is trusted.
const SIGN_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Non-degenerate cases required per suite.
    pub cases: usize,
    /// Draws allowed per suite before giving up on reaching `cases`.
    pub max_attempts: usize,
    pub min_gap: f64,
    /// Start every case from fully aligned columns (degenerate spectrum).
    pub aligned_init: bool,
    pub component_tol: f64,
    pub end_to_end_tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 100,
            max_attempts: 1000,
            min_gap: 1e-3,
            aligned_init: false,
            component_tol: 1e-4,
            end_to_end_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn random_z(rng: &mut ChaCha8Rng, d: usize, k: usize, aligned: bool) -> Matrix<f64> {
    let mut draw = || -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let cols: Vec<Vec<f64>> = if aligned {
        let c = draw();
        vec![c; k]
    } else {
        (0..k).map(|_| draw()).collect()
    };
    normalize_columns(&Matrix::from_columns(&cols).expect("equal column lengths"))
        .expect("gaussian columns are nonzero")
}

fn random_batch(rng: &mut ChaCha8Rng, aligned: bool) -> (Vec<Matrix<f64>>, usize, usize) {
    let k = rng.gen_range(2..=MAX_MODALITIES);
    let d = rng.gen_range(k..=MAX_DIM);
    let n = rng.gen_range(2..=MAX_BATCH);
    let batch = (0..n).map(|_| random_z(rng, d, k, aligned)).collect();
    (batch, d, k)
}

fn well_separated(sigma: &[f64], min_gap: f64) -> bool {
    min_spectral_gap(sigma) >= min_gap && sigma[sigma.len() - 1] >= min_gap
}

fn flatten(batch: &[Matrix<f64>]) -> Vec<f64> {
    batch
        .iter()
        .flat_map(|z| z.data().iter().copied())
        .collect()
}

fn unflatten(x: &[f64], d: usize, k: usize) -> Vec<Matrix<f64>> {
    x.chunks(d * k)
        .map(|c| Matrix::new(d, k, c.to_vec()).expect("chunk has d·k entries"))
        .collect()
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    skipped: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            skipped: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, analytic: &[f64], numeric: &[f64]) {
        self.cases += 1;
        let e = relative_error(analytic, numeric);
        // NaN must count as a failure
        self.worst = if e.is_nan() {
            f64::INFINITY
        } else {
            self.worst.max(e)
        };
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            cases: self.cases,
            skipped: self.skipped,
            max_rel_error: self.worst,
            tolerance: self.tolerance,
            passed: self.worst <= self.tolerance,
        }
    }
}

/// Runs a batch-level suite: `loss` maps a batch to its value and gradient,
/// `accept` decides whether a batch is far enough from degeneracy.
fn batch_suite(
    cfg: &GradcheckConfig,
    stream_id: u64,
    mut tally: Tally,
    accept: impl Fn(&[SvdResult<f64>]) -> bool,
    loss: impl Fn(&[Matrix<f64>]) -> Result<LossOutput<f64>>,
) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream_id);
    for _ in 0..cfg.max_attempts {
        if tally.cases >= cfg.cases {
            break;
        }
        let (batch, d, k) = random_batch(&mut rng, cfg.aligned_init);
        let svds = match batch_svd(&batch) {
            Ok(s) => s,
            Err(_) => {
                tally.skipped += 1;
                continue;
            }
        };
        if !accept(&svds) {
            tally.skipped += 1;
            continue;
        }
        let analytic = match loss(&batch) {
            Ok(out) => flatten(&out.grad_z),
            Err(_) => {
                tally.skipped += 1;
                continue;
            }
        };
        let numeric = central_difference(&flatten(&batch), FD_STEP, |x| {
            loss(&unflatten(x, d, k)).map_or(f64::NAN, |o| o.value)
        });
        tally.record(&analytic, &numeric);
    }
    tally.finish()
}

fn sigma_path_suite(cfg: &GradcheckConfig) -> SuiteResult {
    let mut tally = Tally::new("sigma-path", cfg.component_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    for _ in 0..cfg.max_attempts {
        if tally.cases >= cfg.cases {
            break;
        }
        let k = rng.gen_range(2..=MAX_MODALITIES);
        let d = rng.gen_range(k..=MAX_DIM);
        let z = random_z(&mut rng, d, k, cfg.aligned_init);
        let svd = match svd_thin(&z) {
            Ok(s) if well_separated(&s.sigma, cfg.min_gap) => s,
            _ => {
                tally.skipped += 1;
                continue;
            }
        };
        let w: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let analytic = match svd_sigma_backward(&svd, &w) {
            Ok(g) => g,
            Err(_) => {
                tally.skipped += 1;
                continue;
            }
        };
        let numeric = central_difference(z.data(), FD_STEP, |x| {
            let m = Matrix::new(d, k, x.to_vec()).expect("same shape");
            svd_thin(&m).map_or(f64::NAN, |s| {
                s.sigma.iter().zip(&w).map(|(a, b)| a * b).sum()
            })
        });
        tally.record(analytic.data(), &numeric);
    }
    tally.finish()
}

fn end_to_end_suite(cfg: &GradcheckConfig) -> SuiteResult {
    let mut tally = Tally::new("encoder-end-to-end", cfg.end_to_end_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(5);
    let loss_cfg = LossConfig::default();
    for _ in 0..cfg.max_attempts {
        if tally.cases >= cfg.cases {
            break;
        }
        let k = rng.gen_range(2..=MAX_MODALITIES);
        let d = rng.gen_range(k.max(4)..=8);
        let n = rng.gen_range(2..=MAX_BATCH);
        let hidden = rng.gen_range(4..=8);
        let dims: Vec<usize> = if cfg.aligned_init {
            vec![rng.gen_range(3..=8); k]
        } else {
            (0..k).map(|_| rng.gen_range(3..=8)).collect()
        };
        let mut model = match PmrlModel::<f64>::init(&dims, hidden, d, 4, &mut rng) {
            Ok(m) => m,
            Err(_) => {
                tally.skipped += 1;
                continue;
            }
        };
        let inputs: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                if cfg.aligned_init {
                    let x: Vec<f64> = (0..dims[0])
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    vec![x; k]
                } else {
                    dims.iter()
                        .map(|&m| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect())
                        .collect()
                }
            })
            .collect();
        if cfg.aligned_init {
            // identical encoders on identical inputs give identical columns
            let first = model.encoders[0].clone();
            for e in &mut model.encoders {
                *e = first.clone();
            }
        }
        let neg_seed: u64 = rng.gen();

        let evaluate = |m: &PmrlModel<f64>| -> Result<f64> {
            let z = inputs
                .iter()
                .map(|x| embed(m, x).map(|(z, _)| z))
                .collect::<Result<Vec<_>>>()?;
            Ok(combined_loss(&z, &m.head, &loss_cfg, neg_seed)?.loss.value)
        };
        let analytic = (|| -> Result<Option<Vec<f64>>> {
            let mut z = Vec::new();
            let mut caches = Vec::new();
            for x in &inputs {
                let (zi, ci) = embed(&model, x)?;
                z.push(zi);
                caches.push(ci);
            }
            let sigmas = batch_svd(&z)?;
            if !sigmas.iter().all(|s| well_separated(&s.sigma, cfg.min_gap)) {
                return Ok(None);
            }
            let out = combined_loss(&z, &model.head, &loss_cfg, neg_seed)?;
            let grads = backprop(&model, &caches, &out.loss, Some(out.head_grads))?;
            Ok(Some(grads.slices().concat()))
        })();
        let analytic = match analytic {
            Ok(Some(g)) => g,
            _ => {
                tally.skipped += 1;
                continue;
            }
        };
        let theta: Vec<f64> = model.param_slices().concat();
        let mut probe = model.clone();
        let numeric = central_difference(&theta, FD_STEP, |x| {
            let mut offset = 0;
            for p in probe.param_slices_mut() {
                p.copy_from_slice(&x[offset..offset + p.len()]);
                offset += p.len();
            }
            evaluate(&probe).unwrap_or(f64::NAN)
        });
        tally.record(&analytic, &numeric);
    }
    tally.finish()
}

/// Runs every suite and reports the worst relative error of each.
pub fn gradcheck(cfg: &GradcheckConfig) -> GradcheckReport {
    let gap = cfg.min_gap;
    let tol = cfg.component_tol;
    let all_separated = move |s: &[SvdResult<f64>]| s.iter().all(|s| well_separated(&s.sigma, gap));
    // the sign of u₁ is fixed by the sign of Σ v₁, which must stay put under
    // the finite-difference step
    let sign_stable = move |s: &[SvdResult<f64>]| {
        all_separated(s)
            && s.iter()
                .all(|s| s.v.column(0).iter().sum::<f64>().abs() >= SIGN_MARGIN)
    };
    let loss_cfg = LossConfig::default();
    let suites = vec![
        sigma_path_suite(cfg),
        batch_suite(
            cfg,
            2,
            Tally::new("singular-softmax", tol),
            all_separated,
            |b| singular_loss_from_svds(&batch_svd(b)?, loss_cfg.tau1),
        ),
        batch_suite(
            cfg,
            3,
            Tally::new("leading-direction-reg", tol),
            sign_stable,
            |b| leading_direction_reg_from_svds(&batch_svd(b)?, loss_cfg.tau2),
        ),
        batch_suite(
            cfg,
            4,
            Tally::new("volume", tol),
            move |s| {
                s.iter().all(|s| {
                    well_separated(&s.sigma, gap) && s.sigma[s.k() - 1] >= VOLUME_MIN_SIGMA
                })
            },
            |b| volume_only_from_svds(&batch_svd(b)?),
        ),
        end_to_end_suite(cfg),
    ];
    GradcheckReport {
        seed: cfg.seed,
        suites,
    }
}
