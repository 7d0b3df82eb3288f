//! JSON checkpoint: a magic string, the run seed, and every parameter tensor
//! with its shape.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, MatchingHead, Mlp, MlpEncoder, PmrlModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &str = "PMRL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub seed: u64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &PmrlModel<T>, seed: u64) -> Self {
        let mut tensors = Vec::new();
        for (m, enc) in model.encoders.iter().enumerate() {
            push_mlp(&mut tensors, &format!("encoder.{m}"), &enc.mlp);
        }
        push_mlp(&mut tensors, "head", &model.head.mlp);
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            seed,
            tensors,
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<PmrlModel<T>> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(Error::IoFailure(format!(
                "bad checkpoint magic `{}`",
                self.magic
            )));
        }
        let mut encoders = Vec::new();
        let mut m = 0;
        loop {
            let layers = collect_layers(&self.tensors, &format!("encoder.{m}"))?;
            if layers.is_empty() {
                break;
            }
            encoders.push(MlpEncoder {
                mlp: Mlp::new(layers)?,
            });
            m += 1;
        }
        let head = MatchingHead::new(Mlp::new(collect_layers(&self.tensors, "head")?)?)?;
        Ok(PmrlModel { encoders, head })
    }
}

fn push_mlp<T: Real>(out: &mut Vec<TensorRecord>, prefix: &str, mlp: &Mlp<T>) {
    for (l, layer) in mlp.layers().iter().enumerate() {
        out.push(TensorRecord {
            name: format!("{prefix}.layer.{l}.weight"),
            shape: vec![layer.weight.rows(), layer.weight.cols()],
            data: layer.weight.data().iter().map(|x| x.as_f64()).collect(),
        });
        out.push(TensorRecord {
            name: format!("{prefix}.layer.{l}.bias"),
            shape: vec![layer.bias.len()],
            data: layer.bias.iter().map(|x| x.as_f64()).collect(),
        });
    }
}

fn collect_layers<T: Real>(tensors: &[TensorRecord], prefix: &str) -> Result<Vec<Dense<T>>> {
    let find = |name: String| tensors.iter().find(|t| t.name == name);
    let mut layers = Vec::new();
    for l in 0.. {
        let (Some(w), Some(b)) = (
            find(format!("{prefix}.layer.{l}.weight")),
            find(format!("{prefix}.layer.{l}.bias")),
        ) else {
            break;
        };
        if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != w.shape[0] {
            return Err(Error::ShapeMismatch(format!("{prefix} layer {l}")));
        }
        layers.push(Dense {
            weight: Matrix::new(
                w.shape[0],
                w.shape[1],
                w.data.iter().map(|&x| T::lit(x)).collect(),
            )?,
            bias: b.data.iter().map(|&x| T::lit(x)).collect(),
        });
    }
    Ok(layers)
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &PmrlModel<T>, seed: u64) -> Result<()> {
    let ck = Checkpoint::from_model(model, seed);
    std::fs::write(path, serde_json::to_string(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(PmrlModel<T>, u64)> {
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok((ck.to_model()?, ck.seed))
}
