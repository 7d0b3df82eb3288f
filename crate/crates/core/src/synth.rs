//! Synthetic multimodal data from a shared Gaussian latent.
//!
//! Each instance draws `c ~ N(0, I_p)`; modality `m` observes
//! `x = A_m c + b_m + noise_scale · η` through a fixed random affine map, and
//! the label is the side of a fixed random hyperplane `w·c > 0`. With zero
//! noise every modality is an exact affine image of the same latent, so full
//! alignment is attainable by linear encoders.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAP_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;
const FLIP_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_instances: usize,
    pub k: usize,
    pub latent_dim: usize,
    pub obs_dims: Vec<usize>,
    pub noise_scale: f64,
    /// Applied to the training split at generation time.
    pub label_flip_prob: f64,
    /// Also flip test labels when `label_flip_prob > 0`.
    pub flip_test_labels: bool,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_instances: 320,
            k: 4,
            latent_dim: 8,
            obs_dims: vec![24, 30, 36, 40],
            noise_scale: 0.0,
            label_flip_prob: 0.0,
            flip_test_labels: false,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if !(2..=8).contains(&self.k) {
            return bad("k must be between 2 and 8");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if self.obs_dims.len() != self.k {
            return bad("obs_dims must have one entry per modality");
        }
        if self.obs_dims.contains(&0) {
            return bad("observation dimensions must be positive");
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.label_flip_prob) {
            return bad("label_flip_prob must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must lie in [0, 1)");
        }
        if self.n_test() >= self.n_instances || self.n_instances == 0 {
            return bad("need at least one training instance");
        }
        Ok(())
    }

    pub fn n_test(&self) -> usize {
        (self.test_fraction * self.n_instances as f64).round() as usize
    }

    pub fn n_train(&self) -> usize {
        self.n_instances - self.n_test()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub split: Split,
    pub label: u8,
    /// One observation vector per modality.
    pub modalities: Vec<Vec<f64>>,
}

/// Fixed affine observation map of one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityMap {
    pub a: Matrix<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub instances: Vec<Instance>,
    /// Generating latents, present for freshly generated data only.
    pub latents: Option<Vec<Vec<f64>>>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> Vec<&Instance> {
        self.instances.iter().filter(|i| i.split == split).collect()
    }

    pub fn label_fraction(&self) -> f64 {
        let pos = self.instances.iter().filter(|i| i.label == 1).count();
        pos as f64 / self.instances.len() as f64
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Observation maps and label hyperplane implied by `cfg.seed`.
pub fn generative_maps(cfg: &SyntheticConfig) -> Result<(Vec<ModalityMap>, Vec<f64>)> {
    cfg.validate()?;
    let p = cfg.latent_dim;
    let mut rng = stream(cfg.seed, MAP_STREAM);
    let w = normal_vec(&mut rng, p);
    let scale = 1.0 / (p as f64).sqrt();
    let maps = cfg
        .obs_dims
        .iter()
        .map(|&dim| {
            let a: Vec<f64> = normal_vec(&mut rng, dim * p)
                .into_iter()
                .map(|x| x * scale)
                .collect();
            let b = normal_vec(&mut rng, dim)
                .into_iter()
                .map(|x| 0.5 * x)
                .collect();
            Ok(ModalityMap {
                a: Matrix::new(dim, p, a)?,
                b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((maps, w))
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    let (maps, w) = generative_maps(cfg)?;
    let mut rng = stream(cfg.seed, SAMPLE_STREAM);
    let n_train = cfg.n_train();
    let mut instances = Vec::with_capacity(cfg.n_instances);
    let mut latents = Vec::with_capacity(cfg.n_instances);
    for id in 0..cfg.n_instances {
        let c = normal_vec(&mut rng, cfg.latent_dim);
        let modalities = maps
            .iter()
            .map(|map| {
                let mut x = map.a.mat_vec(&c);
                for (xi, &bi) in x.iter_mut().zip(&map.b) {
                    let eta: f64 = StandardNormal.sample(&mut rng);
                    *xi += bi + cfg.noise_scale * eta;
                }
                x
            })
            .collect();
        let score: f64 = w.iter().zip(&c).map(|(a, b)| a * b).sum();
        instances.push(Instance {
            id,
            split: if id < n_train {
                Split::Train
            } else {
                Split::Test
            },
            label: u8::from(score > 0.0),
            modalities,
        });
        latents.push(c);
    }
    let mut ds = SyntheticDataset {
        config: cfg.clone(),
        instances,
        latents: Some(latents),
    };
    if cfg.label_flip_prob > 0.0 {
        let scope = if cfg.flip_test_labels {
            None
        } else {
            Some(Split::Train)
        };
        let seed = stream(cfg.seed, FLIP_STREAM).gen();
        ds = flip_labels_in(&ds, cfg.label_flip_prob, seed, scope);
    }
    Ok(ds)
}

/// Unit-normalizes every observation, then adds `scale · η`, `η ~ N(0, I)`.
pub fn add_input_noise(ds: &SyntheticDataset, scale: f64, seed: u64) -> Result<SyntheticDataset> {
    if !(scale >= 0.0) {
        return Err(Error::BadConfig("noise scale must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for inst in &mut out.instances {
        for x in &mut inst.modalities {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in x.iter_mut() {
                if n > 0.0 {
                    *v /= n;
                }
                let eta: f64 = StandardNormal.sample(&mut rng);
                *v += scale * eta;
            }
        }
    }
    Ok(out)
}

/// Flips every label independently with probability `prob`.
pub fn flip_labels(ds: &SyntheticDataset, prob: f64, seed: u64) -> SyntheticDataset {
    flip_labels_in(ds, prob, seed, None)
}

/// Like [`flip_labels`], restricted to one split when `scope` is given.
/// One draw is consumed per instance either way.
pub fn flip_labels_in(
    ds: &SyntheticDataset,
    prob: f64,
    seed: u64,
    scope: Option<Split>,
) -> SyntheticDataset {
    let prob = prob.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for inst in &mut out.instances {
        let flip = rng.gen_bool(prob);
        if flip && scope.is_none_or(|s| s == inst.split) {
            inst.label = 1 - inst.label;
        }
    }
    out
}

/// JSON-lines dump: a header `{"config": …}` then one record per instance
/// with `id`, `split`, `label`, `mod_0` … `mod_{k-1}`.
pub fn save_jsonl(ds: &SyntheticDataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", json!({ "config": ds.config }))?;
    for inst in &ds.instances {
        let mut rec = Map::new();
        rec.insert("id".into(), json!(inst.id));
        rec.insert("split".into(), json!(inst.split));
        rec.insert("label".into(), json!(inst.label));
        for (m, x) in inst.modalities.iter().enumerate() {
            rec.insert(format!("mod_{m}"), json!(x));
        }
        writeln!(f, "{}", Value::Object(rec))?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_jsonl(path: &Path) -> Result<SyntheticDataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header: Value = serde_json::from_str(
        &lines
            .next()
            .ok_or_else(|| Error::IoFailure("empty dataset file".into()))??,
    )?;
    let config: SyntheticConfig = serde_json::from_value(
        header
            .get("config")
            .cloned()
            .ok_or_else(|| Error::IoFailure("missing config header".into()))?,
    )?;
    let mut instances = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(&line)?;
        let field = |name: &str| {
            rec.get(name)
                .cloned()
                .ok_or_else(|| Error::IoFailure(format!("record missing `{name}`")))
        };
        let modalities = (0..config.k)
            .map(|m| {
                Ok(serde_json::from_value::<Vec<f64>>(field(&format!(
                    "mod_{m}"
                ))?)?)
            })
            .collect::<Result<Vec<_>>>()?;
        for (m, x) in modalities.iter().enumerate() {
            if x.len() != config.obs_dims[m] {
                return Err(Error::IoFailure(format!("mod_{m} has wrong length")));
            }
        }
        let label: u8 = serde_json::from_value(field("label")?)?;
        if label > 1 {
            return Err(Error::IoFailure("label must be 0 or 1".into()));
        }
        instances.push(Instance {
            id: serde_json::from_value(field("id")?)?,
            split: serde_json::from_value(field("split")?)?,
            label,
            modalities,
        });
    }
    Ok(SyntheticDataset {
        config,
        instances,
        latents: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_instances: 50,
            k: 3,
            latent_dim: 4,
            obs_dims: vec![6, 7, 8],
            seed: 17,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn noiseless_observations_are_affine_images() {
        let cfg = small();
        let ds = generate(&cfg).unwrap();
        let (maps, _) = generative_maps(&cfg).unwrap();
        let lat = ds.latents.as_ref().unwrap();
        for (inst, c) in ds.instances.iter().zip(lat) {
            for (x, map) in inst.modalities.iter().zip(&maps) {
                let y = map.a.mat_vec(c);
                for i in 0..x.len() {
                    assert!((x[i] - y[i] - map.b[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig {
            seed: 18,
            ..small()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_are_balanced() {
        let ds = generate(&SyntheticConfig {
            n_instances: 1000,
            latent_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let frac = ds.label_fraction();
        assert!((0.4..=0.6).contains(&frac), "{frac}");
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let ds = generate(&SyntheticConfig::default()).unwrap();
        let train = ds.split(Split::Train);
        let test = ds.split(Split::Test);
        assert_eq!(train.len(), 256);
        assert_eq!(test.len(), 64);
        let mut ids: Vec<usize> = train.iter().chain(&test).map(|i| i.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..320).collect::<Vec<_>>());
    }

    #[test]
    fn oracle_alignment_exists_without_noise() {
        // linear encoders x ↦ (AᵀA)⁻¹Aᵀ(x − b) recover the latent exactly
        let cfg = small();
        let ds = generate(&cfg).unwrap();
        let (maps, _) = generative_maps(&cfg).unwrap();
        let pinvs: Vec<Matrix<f64>> = maps
            .iter()
            .map(|m| {
                let ata = m.a.t_matmul(&m.a).unwrap();
                let e = sym_eig(&ata).unwrap();
                let p = ata.rows();
                let mut inv = Matrix::zeros(p, p);
                for j in 0..p {
                    inv.add_outer(
                        &e.vectors.column(j),
                        &e.vectors.column(j),
                        1.0 / e.values[j],
                    );
                }
                inv.matmul(&m.a.transpose()).unwrap()
            })
            .collect();
        for inst in &ds.instances {
            let zs: Vec<Vec<f64>> = inst
                .modalities
                .iter()
                .zip(&maps)
                .zip(&pinvs)
                .map(|((x, m), pinv)| {
                    let centered: Vec<f64> = x.iter().zip(&m.b).map(|(a, b)| a - b).collect();
                    pinv.mat_vec(&centered)
                })
                .collect();
            for a in &zs {
                for b in &zs {
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((dot / (na * nb) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn input_noise_statistics() {
        let ds = generate(&SyntheticConfig::default()).unwrap();
        let clean = add_input_noise(&ds, 0.0, 5).unwrap();
        for inst in &clean.instances {
            for x in &inst.modalities {
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        let noisy = add_input_noise(&ds, 0.4, 5).unwrap();
        assert_eq!(noisy, add_input_noise(&ds, 0.4, 5).unwrap());
        assert_ne!(ds.instances[0], noisy.instances[0]);
        let dim = 24;
        let mut total = 0.0;
        for (a, b) in clean.instances.iter().zip(&noisy.instances) {
            let diff: f64 = a.modalities[0]
                .iter()
                .zip(&b.modalities[0])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            total += diff.sqrt();
        }
        let mean = total / clean.instances.len() as f64;
        let expect = 0.4 * (dim as f64).sqrt();
        assert!((mean / expect - 1.0).abs() < 0.05, "{mean} vs {expect}");
    }

    #[test]
    fn label_flipping() {
        let ds = generate(&SyntheticConfig {
            n_instances: 10000,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(flip_labels(&ds, 0.0, 1), ds);
        let all = flip_labels(&ds, 1.0, 1);
        assert!(all
            .instances
            .iter()
            .zip(&ds.instances)
            .all(|(a, b)| a.label == 1 - b.label));
        let some = flip_labels(&ds, 0.3, 1);
        let flipped = some
            .instances
            .iter()
            .zip(&ds.instances)
            .filter(|(a, b)| a.label != b.label)
            .count() as f64
            / 10000.0;
        assert!((0.27..=0.33).contains(&flipped), "{flipped}");
    }

    #[test]
    fn generation_flips_only_training_labels_by_default() {
        let base = SyntheticConfig {
            n_instances: 200,
            ..SyntheticConfig::default()
        };
        let clean = generate(&base).unwrap();
        let noisy = generate(&SyntheticConfig {
            label_flip_prob: 0.3,
            ..base
        })
        .unwrap();
        let mut train_flips = 0;
        for (a, b) in clean.instances.iter().zip(&noisy.instances) {
            if a.split == Split::Test {
                assert_eq!(a.label, b.label);
            } else if a.label != b.label {
                train_flips += 1;
            }
        }
        assert!(train_flips > 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_jsonl(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first_record: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for key in ["id", "split", "label", "mod_0", "mod_1", "mod_2"] {
            assert!(first_record.get(key).is_some(), "{key}");
        }
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back.instances, ds.instances);
        assert_eq!(back.config, ds.config);
        assert!(back.latents.is_none());
    }

    #[test]
    fn bad_config() {
        let cfg = SyntheticConfig {
            k: 1,
            obs_dims: vec![3],
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::BadConfig(_))));
        let cfg = SyntheticConfig {
            obs_dims: vec![3, 4],
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::BadConfig(_))));
    }
}
