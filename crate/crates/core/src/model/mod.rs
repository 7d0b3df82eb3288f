//! Toy per-modality encoders, the matching head, AdamW, and checkpoints.

mod adamw;
mod checkpoint;
mod mlp;

pub use adamw::{adamw_step, AdamWConfig, AdamWState, StepInfo};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TensorRecord, CHECKPOINT_MAGIC,
};
pub use mlp::{sigmoid, Dense, EncoderCache, MatchingHead, Mlp, MlpCache, MlpEncoder, MlpGrads};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Real;

/// Everything trained jointly: one encoder per modality plus the matching head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmrlModel<T> {
    pub encoders: Vec<MlpEncoder<T>>,
    pub head: MatchingHead<T>,
}

impl<T: Real> PmrlModel<T> {
    pub fn init<R: Rng + ?Sized>(
        input_dims: &[usize],
        hidden: usize,
        embed_dim: usize,
        head_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let encoders = input_dims
            .iter()
            .map(|&n| MlpEncoder::init(n, hidden, embed_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = MatchingHead::init(input_dims.len() * embed_dim, head_hidden, rng)?;
        Ok(Self { encoders, head })
    }

    pub fn k(&self) -> usize {
        self.encoders.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoders[0].output_dim()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for e in &mut self.encoders {
            out.extend(e.mlp.param_slices_mut());
        }
        out.extend(self.head.mlp.param_slices_mut());
        out
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for e in &self.encoders {
            out.extend(e.mlp.param_slices());
        }
        out.extend(self.head.mlp.param_slices());
        out
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    pub fn zero_grads(&self) -> ModelGrads<T> {
        ModelGrads {
            encoders: self
                .encoders
                .iter()
                .map(|e| MlpGrads::zeros_like(&e.mlp))
                .collect(),
            head: MlpGrads::zeros_like(&self.head.mlp),
        }
    }
}

/// Gradients laid out like [`PmrlModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T> {
    pub encoders: Vec<MlpGrads<T>>,
    pub head: MlpGrads<T>,
}

impl<T: Real> ModelGrads<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for e in &self.encoders {
            out.extend(e.slices());
        }
        out.extend(self.head.slices());
        out
    }
}
