use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};

/// Shape-determining sizes of the encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub time_dim: usize,
}

impl ModelDims {
    /// Width of `[src memory ; dst memory ; features ; time encoding]`.
    pub fn input_dim(&self) -> usize {
        2 * self.embed_dim + self.feature_dim + self.time_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim
    }
}

pub const PARAM_NAMES: [&str; 10] = [
    "enc1.weight",
    "enc1.bias",
    "enc2.weight",
    "enc2.bias",
    "proj.weight",
    "proj.bias",
    "dec1.weight",
    "dec1.bias",
    "dec2.weight",
    "dec2.bias",
];

/// Encoder, memory projection and decoder weights. Weights are stored
/// `in x out` and applied as `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    tensors: Vec<Tensor>,
}

fn expected_shapes(d: &ModelDims) -> [(usize, usize); 10] {
    let e = d.embed_dim;
    let h = d.hidden_dim();
    [
        (d.input_dim(), e),
        (1, e),
        (e, e),
        (1, e),
        (e, 2 * e),
        (1, 2 * e),
        (2 * e, h),
        (1, h),
        (h, 1),
        (1, 1),
    ]
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, rng: &mut Rng) -> Self {
        let tensors = expected_shapes(&dims)
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                if i % 2 == 1 {
                    Tensor::zeros(r, c)
                } else {
                    let limit = (6.0 / (r + c) as f64).sqrt();
                    rng.uniform_tensor(r, c, -limit, limit)
                }
            })
            .collect();
        ModelParams { dims, tensors }
    }

    pub fn zeros(dims: ModelDims) -> Self {
        let tensors = expected_shapes(&dims)
            .iter()
            .map(|&(r, c)| Tensor::zeros(r, c))
            .collect();
        ModelParams { dims, tensors }
    }

    pub fn from_named(dims: ModelDims, named: Vec<(String, Tensor)>) -> Result<Self> {
        let shapes = expected_shapes(&dims);
        if named.len() != PARAM_NAMES.len() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "expected {} arrays, found {}",
                PARAM_NAMES.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(named.len());
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != PARAM_NAMES[i] {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "array {i} is {name:?}, expected {:?}",
                    PARAM_NAMES[i]
                )));
            }
            if t.shape() != shapes[i] {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "{name} has shape {:?}, configuration implies {:?}",
                    t.shape(),
                    shapes[i]
                )));
            }
            tensors.push(t);
        }
        Ok(ModelParams { dims, tensors })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.iter().copied().zip(self.tensors.iter())
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor on `tape`, as trainable leaves or as constants.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let v: Vec<Var> = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        ParamVars {
            enc1_w: v[0],
            enc1_b: v[1],
            enc2_w: v[2],
            enc2_b: v[3],
            proj_w: v[4],
            proj_b: v[5],
            dec1_w: v[6],
            dec1_b: v[7],
            dec2_w: v[8],
            dec2_b: v[9],
        }
    }
}

/// Tape handles for one forward pass, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub enc1_w: Var,
    pub enc1_b: Var,
    pub enc2_w: Var,
    pub enc2_b: Var,
    pub proj_w: Var,
    pub proj_b: Var,
    pub dec1_w: Var,
    pub dec1_b: Var,
    pub dec2_w: Var,
    pub dec2_b: Var,
}

impl ParamVars {
    pub fn all(&self) -> [Var; 10] {
        [
            self.enc1_w,
            self.enc1_b,
            self.enc2_w,
            self.enc2_b,
            self.proj_w,
            self.proj_b,
            self.dec1_w,
            self.dec1_b,
            self.dec2_w,
            self.dec2_b,
        ]
    }
}
