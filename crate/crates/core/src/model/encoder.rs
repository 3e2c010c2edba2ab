//! Forward pass: pair inputs, the two-layer encoder with augmentation hooks,
//! the memory projection and the link decoder.

use std::collections::VecDeque;

use super::memory::MemoryState;
use super::params::{ModelDims, ModelParams, ParamVars};
use crate::error::{Error, Result};
use crate::numcore::{Axis, ReduceKind, Rng, Tape, Tensor, Var};
use crate::tgraph::Event;
use crate::ummu::{apply_draw_on_tape, sample_activation, AugmentDraw, HookPoint, Mode, UmmuConfig};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// `cos(w_k dt)` with `w_k` log-spaced from 1 down to 1e-4.
pub fn time_encode(delta_t: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let omega = if dim > 1 {
                10f64.powf(-(k as f64) * 4.0 / (dim - 1) as f64)
            } else {
                1.0
            };
            (omega * delta_t).cos()
        })
        .collect()
}

/// Source of the stochastic choices made during a forward pass.
pub trait NoiseSource {
    /// Inverted-dropout multiplier for a `rows x cols` activation, if any.
    fn dropout_mask(&mut self, rows: usize, cols: usize, rate: f64) -> Option<Tensor>;

    /// Augmentation to apply at a hook, if any.
    fn augmentation(&mut self, rows: usize, cols: usize, config: &UmmuConfig) -> Result<Option<AugmentDraw>>;
}

/// One recorded stochastic decision.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseRecord {
    Dropout(Option<Tensor>),
    Augment(Option<AugmentDraw>),
}

/// Draws from seeded streams; optionally records what it drew.
#[derive(Debug)]
pub struct LiveNoise {
    mode: Mode,
    augment: Rng,
    dropout: Rng,
    log: Option<Vec<NoiseRecord>>,
}

impl LiveNoise {
    pub fn new(mode: Mode, augment: Rng, dropout: Rng) -> Self {
        LiveNoise {
            mode,
            augment,
            dropout,
            log: None,
        }
    }

    pub fn recording(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn take_log(&mut self) -> Vec<NoiseRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

impl NoiseSource for LiveNoise {
    fn dropout_mask(&mut self, rows: usize, cols: usize, rate: f64) -> Option<Tensor> {
        let mask = (self.mode == Mode::Train && rate > 0.0).then(|| {
            let keep = 1.0 - rate;
            Tensor::from_fn(rows, cols, |_, _| {
                if self.dropout.bernoulli(keep) {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        if let Some(log) = &mut self.log {
            log.push(NoiseRecord::Dropout(mask.clone()));
        }
        mask
    }

    fn augmentation(&mut self, rows: usize, cols: usize, config: &UmmuConfig) -> Result<Option<AugmentDraw>> {
        let draw = sample_activation(&mut self.augment, rows, cols, config, self.mode)?;
        if let Some(log) = &mut self.log {
            log.push(NoiseRecord::Augment(draw.clone()));
        }
        Ok(draw)
    }
}

/// Replays a recorded sequence of decisions.
#[derive(Debug, Clone)]
pub struct ReplayNoise {
    records: VecDeque<NoiseRecord>,
}

impl ReplayNoise {
    pub fn new(records: Vec<NoiseRecord>) -> Self {
        ReplayNoise {
            records: records.into(),
        }
    }
}

impl NoiseSource for ReplayNoise {
    fn dropout_mask(&mut self, _rows: usize, _cols: usize, _rate: f64) -> Option<Tensor> {
        match self.records.pop_front() {
            Some(NoiseRecord::Dropout(m)) => m,
            other => panic!("replay out of sync: expected dropout, found {other:?}"),
        }
    }

    fn augmentation(&mut self, _rows: usize, _cols: usize, _config: &UmmuConfig) -> Result<Option<AugmentDraw>> {
        match self.records.pop_front() {
            Some(NoiseRecord::Augment(d)) => Ok(d),
            other => Err(Error::Contract(format!(
                "replay out of sync: expected augmentation, found {other:?}"
            ))),
        }
    }
}

/// No dropout, no augmentation, no randomness consumed.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoNoise;

impl NoiseSource for NoNoise {
    fn dropout_mask(&mut self, _rows: usize, _cols: usize, _rate: f64) -> Option<Tensor> {
        None
    }

    fn augmentation(&mut self, _rows: usize, _cols: usize, _config: &UmmuConfig) -> Result<Option<AugmentDraw>> {
        Ok(None)
    }
}

/// Encoder input rows `[m_src ; m_cand ; features ; time_encode(t - last_src)]`
/// for each `(event, candidate)` pair, read from the memory as it stands.
pub fn pair_inputs(
    memory: &MemoryState,
    dims: &ModelDims,
    events: &[Event],
    candidates: impl Fn(usize) -> usize,
    pairs_per_event: usize,
) -> Result<Tensor> {
    memory.check_ids(events)?;
    if memory.dim() != dims.embed_dim {
        return Err(Error::Dimension {
            op: "pair_inputs",
            left: (memory.n_src(), memory.dim()),
            right: (memory.n_src(), dims.embed_dim),
        });
    }
    let width = dims.input_dim();
    let rows = events.len() * pairs_per_event;
    let mut data = Vec::with_capacity(rows * width);
    for row in 0..rows {
        let e = &events[row / pairs_per_event];
        let cand = candidates(row);
        if cand >= memory.n_dst() {
            return Err(Error::Data(format!(
                "candidate destination {cand} outside memory ({})",
                memory.n_dst()
            )));
        }
        if e.features.len() != dims.feature_dim {
            return Err(Error::Data(format!(
                "event {} has {} features, model expects {}",
                e.idx,
                e.features.len(),
                dims.feature_dim
            )));
        }
        let dt = (e.t - memory.src_last_update(e.src)).max(0.0);
        data.extend_from_slice(memory.src(e.src));
        data.extend_from_slice(memory.dst(cand));
        data.extend_from_slice(&e.features);
        data.extend(time_encode(dt, dims.time_dim));
    }
    Tensor::new(rows, width, data)
}

/// Output of [`encode_pairs`].
#[derive(Debug, Clone, Copy)]
pub struct PairEmbedding {
    /// Post-layer-2 embedding, one row per pair.
    pub z: Var,
    /// Source half of the memory projection.
    pub src: Var,
    /// Candidate-destination half of the memory projection.
    pub cand: Var,
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

fn hook(
    tape: &mut Tape,
    z: Var,
    at: HookPoint,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Var> {
    if ummu.hook_layer != at {
        return Ok(z);
    }
    let (rows, cols) = tape.value(z).shape();
    match noise.augmentation(rows, cols, ummu)? {
        Some(draw) => apply_draw_on_tape(tape, z, &draw, ummu.variant, ummu.sigma_floor),
        None => Ok(z),
    }
}

/// Encoder forward pass over pre-built pair inputs:
///
/// ```text
/// h = tanh(x W1 + b1), dropout         [hook after_layer_1]
/// z = tanh(h W2 + b2)                  [hook after_layer_2]
/// p = tanh(z Wp + bp) = [src half | candidate half]
/// ```
pub fn encode_pairs(
    tape: &mut Tape,
    vars: &ParamVars,
    dims: &ModelDims,
    inputs: Tensor,
    dropout: f64,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<PairEmbedding> {
    let x = tape.constant(inputs);
    let pre1 = affine(tape, x, vars.enc1_w, vars.enc1_b)?;
    let mut h = tape.tanh(pre1)?;
    let (rows, cols) = tape.value(h).shape();
    if let Some(mask) = noise.dropout_mask(rows, cols, dropout) {
        let m = tape.constant(mask);
        h = tape.mul(h, m)?;
    }
    let h = hook(tape, h, HookPoint::AfterLayer1, ummu, noise)?;
    let pre2 = affine(tape, h, vars.enc2_w, vars.enc2_b)?;
    let z = tape.tanh(pre2)?;
    let z = hook(tape, z, HookPoint::AfterLayer2, ummu, noise)?;
    let pre_p = affine(tape, z, vars.proj_w, vars.proj_b)?;
    let p = tape.tanh(pre_p)?;
    let e = dims.embed_dim;
    let src = tape.slice_cols(p, 0, e)?;
    let cand = tape.slice_cols(p, e, 2 * e)?;
    Ok(PairEmbedding { z, src, cand })
}

/// `sigmoid(tanh([z_src ; z_cand] D1 + c1) D2 + c2)`, one probability per row.
pub fn score_links(tape: &mut Tape, vars: &ParamVars, z_src: Var, z_cand: Var) -> Result<Var> {
    let (a, b) = (tape.value(z_src).shape(), tape.value(z_cand).shape());
    if a.0 != b.0 {
        return Err(Error::Dimension {
            op: "score_links",
            left: a,
            right: b,
        });
    }
    let joined = tape.concat_cols(&[z_src, z_cand])?;
    let pre = affine(tape, joined, vars.dec1_w, vars.dec1_b)?;
    let hidden = tape.tanh(pre)?;
    let logit = affine(tape, hidden, vars.dec2_w, vars.dec2_b)?;
    tape.sigmoid(logit)
}

/// Mean binary cross-entropy over positive and negative probabilities.
pub fn bce_loss_on_tape(tape: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
    let n = (tape.value(pos).len() + tape.value(neg).len()) as f64;
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    let p = tape.clamp(pos, lo, hi)?;
    let log_p = tape.log(p)?;
    let pos_sum = tape.reduce(ReduceKind::Sum, log_p, Axis::All)?;
    let q = tape.clamp(neg, lo, hi)?;
    let neg_q = tape.scale(q, -1.0)?;
    let one = tape.constant(Tensor::scalar(1.0));
    let one_minus = tape.add(neg_q, one)?;
    let log_q = tape.log(one_minus)?;
    let neg_sum = tape.reduce(ReduceKind::Sum, log_q, Axis::All)?;
    let total = tape.add(pos_sum, neg_sum)?;
    tape.scale(total, -1.0 / n)
}

/// Plain-value version of [`bce_loss_on_tape`].
pub fn bce_loss(pos: &[f64], neg: &[f64]) -> f64 {
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let sum: f64 = pos.iter().map(|&p| clamp(p).ln()).sum::<f64>()
        + neg.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>();
    -sum / (pos.len() + neg.len()) as f64
}

/// Encoded positive pairs of one batch together with the memory after it.
#[derive(Debug, Clone)]
pub struct BatchEncoding {
    pub z_src: Tensor,
    pub z_dst: Tensor,
    pub memory: MemoryState,
}

/// Encodes each event's `(src, dst)` pair against the memory snapshot taken
/// before the batch, then writes the new source and destination embeddings
/// back in event order.
pub fn encode_batch(
    params: &ModelParams,
    memory: &MemoryState,
    events: &[Event],
    dropout: f64,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<BatchEncoding> {
    let dims = params.dims();
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let inputs = pair_inputs(memory, &dims, events, |r| events[r].dst, 1)?;
    let emb = encode_pairs(&mut tape, &vars, &dims, inputs, dropout, ummu, noise)?;
    let z_src = tape.value(emb.src).clone();
    let z_dst = tape.value(emb.cand).clone();
    let mut memory = memory.clone();
    memory.write(events, &z_src, &z_dst)?;
    Ok(BatchEncoding { z_src, z_dst, memory })
}
