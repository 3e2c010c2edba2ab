use super::adam::Adam;
use super::encoder::{bce_loss_on_tape, encode_pairs, pair_inputs, score_links, LiveNoise, NoiseSource, PairEmbedding};
use super::memory::MemoryState;
use super::params::{ModelParams, ParamVars};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::tgraph::{batches, sample_negatives, Event, EventStream, NodeUniverse};
use crate::ummu::{Mode, UmmuConfig};

/// Random streams consumed by training, kept across epochs.
#[derive(Debug)]
pub struct TrainStreams {
    pub negatives: Rng,
    pub noise: LiveNoise,
}

impl TrainStreams {
    pub fn new(seed: u64) -> Self {
        TrainStreams {
            negatives: Rng::stream(seed, "negatives"),
            noise: LiveNoise::new(Mode::Train, Rng::stream(seed, "augment"), Rng::stream(seed, "dropout")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    /// One gradient per parameter tensor, in `PARAM_NAMES` order.
    pub grads: Vec<Tensor>,
    pub src_embed: Tensor,
    pub dst_embed: Tensor,
}

struct Forward {
    tape: Tape,
    vars: ParamVars,
    loss: Var,
    positives: PairEmbedding,
}

fn one_negative_each(events: &[Event], negatives: &[usize]) -> Result<()> {
    if negatives.len() != events.len() {
        return Err(Error::Contract(format!(
            "{} negatives for {} events; training uses exactly one per positive",
            negatives.len(),
            events.len()
        )));
    }
    Ok(())
}

/// Positives and negatives pass through the encoder separately, each with
/// its own augmentation draw, positives first.
fn forward(
    params: &ModelParams,
    memory: &MemoryState,
    events: &[Event],
    negatives: &[usize],
    dropout: f64,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Forward> {
    one_negative_each(events, negatives)?;
    let dims = params.dims();
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, true);

    let pos_in = pair_inputs(memory, &dims, events, |r| events[r].dst, 1)?;
    let positives = encode_pairs(&mut tape, &vars, &dims, pos_in, dropout, ummu, noise)?;
    let neg_in = pair_inputs(memory, &dims, events, |r| negatives[r], 1)?;
    let negs = encode_pairs(&mut tape, &vars, &dims, neg_in, dropout, ummu, noise)?;

    let p_pos = score_links(&mut tape, &vars, positives.src, positives.cand)?;
    let p_neg = score_links(&mut tape, &vars, negs.src, negs.cand)?;
    let loss = bce_loss_on_tape(&mut tape, p_pos, p_neg)?;
    Ok(Forward {
        tape,
        vars,
        loss,
        positives,
    })
}

/// Training loss of one batch without gradients.
pub fn batch_loss(
    params: &ModelParams,
    memory: &MemoryState,
    events: &[Event],
    negatives: &[usize],
    dropout: f64,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<f64> {
    let f = forward(params, memory, events, negatives, dropout, ummu, noise)?;
    f.tape.value(f.loss).item()
}

/// Loss, parameter gradients and the embeddings to write into memory.
pub fn batch_step(
    params: &ModelParams,
    memory: &MemoryState,
    events: &[Event],
    negatives: &[usize],
    dropout: f64,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<StepOutput> {
    let f = forward(params, memory, events, negatives, dropout, ummu, noise)?;
    let loss = f.tape.value(f.loss).item()?;
    let grads = f.tape.backward(f.loss)?;
    Ok(StepOutput {
        loss,
        grads: f.vars.all().iter().map(|&v| grads.wrt(v)).collect(),
        src_embed: f.tape.value(f.positives.src).clone(),
        dst_embed: f.tape.value(f.positives.cand).clone(),
    })
}

/// One pass over `stream` in time order. Memory is reset first; returns the
/// mean batch loss.
pub fn train_epoch(
    params: &mut ModelParams,
    memory: &mut MemoryState,
    stream: &EventStream,
    config: &TrainConfig,
    ummu: &UmmuConfig,
    optimizer: &mut Adam,
    streams: &mut TrainStreams,
) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::Domain("training stream is empty".into()));
    }
    memory.reset();
    let universe = NodeUniverse::range(memory.n_dst());
    let mut total = 0.0;
    let all = batches(stream, config.batch_size)?;
    for (b, batch) in all.iter().enumerate() {
        let negatives: Vec<usize> = sample_negatives(&mut streams.negatives, batch, 1, &universe)?
            .into_iter()
            .map(|n| n[0])
            .collect();
        let step = batch_step(
            params,
            memory,
            batch.events,
            &negatives,
            config.dropout,
            ummu,
            &mut streams.noise,
        )?;
        if !step.loss.is_finite() {
            let t = batch.events.first().map_or(f64::NAN, |e| e.t);
            return Err(Error::Training(format!(
                "non-finite loss {} at batch {b} (first event time {t})",
                step.loss
            )));
        }
        optimizer.step(params.tensors_mut(), &step.grads)?;
        memory.write(batch.events, &step.src_embed, &step.dst_embed)?;
        total += step.loss;
    }
    Ok(total / all.len() as f64)
}

/// Scores each event's true destination and its `negatives`, then writes the
/// clean positive embeddings into `memory`. Returns `(positive, negatives)`
/// probabilities per event.
pub fn score_candidates(
    params: &ModelParams,
    memory: &mut MemoryState,
    events: &[Event],
    negatives: &[Vec<usize>],
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if negatives.len() != events.len() {
        return Err(Error::Contract(format!(
            "{} candidate lists for {} events",
            negatives.len(),
            events.len()
        )));
    }
    let k = negatives.first().map_or(0, Vec::len);
    if negatives.iter().any(|n| n.len() != k) {
        return Err(Error::Contract("candidate lists differ in length".into()));
    }
    let dims = params.dims();
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);

    let pos_in = pair_inputs(memory, &dims, events, |r| events[r].dst, 1)?;
    let pos = encode_pairs(&mut tape, &vars, &dims, pos_in, 0.0, ummu, noise)?;
    let p_pos = score_links(&mut tape, &vars, pos.src, pos.cand)?;
    let pos_scores = tape.value(p_pos).data().to_vec();

    let neg_scores = if k == 0 {
        vec![Vec::new(); events.len()]
    } else {
        let neg_in = pair_inputs(memory, &dims, events, |r| negatives[r / k][r % k], k)?;
        let neg = encode_pairs(&mut tape, &vars, &dims, neg_in, 0.0, ummu, noise)?;
        let p_neg = score_links(&mut tape, &vars, neg.src, neg.cand)?;
        tape.value(p_neg).data().chunks(k).map(<[f64]>::to_vec).collect()
    };

    let src = tape.value(pos.src).clone();
    let dst = tape.value(pos.cand).clone();
    memory.write(events, &src, &dst)?;
    Ok((pos_scores, neg_scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoder::{encode_batch, NoNoise};
    use crate::model::params::ModelDims;

    fn toy_stream(n: usize) -> EventStream {
        let mut rng = Rng::from_seed(3);
        let events = (0..n)
            .map(|i| Event {
                src: i % 5,
                dst: (i * 7 + i / 5) % 6,
                t: i as f64 / n as f64,
                features: vec![rng.normal(), (i % 5) as f64 / 5.0],
                idx: i,
            })
            .collect();
        EventStream::new(events, 5, 6, 2).unwrap()
    }

    fn config(lr: f64) -> TrainConfig {
        TrainConfig {
            embed_dim: 4,
            batch_size: 10,
            epochs: 1,
            learning_rate: lr,
            dropout: 0.0,
            seed: 1,
            time_dim: 3,
        }
    }

    fn run(cfg: &TrainConfig, ummu: &UmmuConfig, epochs: usize) -> (ModelParams, Vec<f64>) {
        let stream = toy_stream(50);
        let dims = cfg.dims(2);
        let mut params = ModelParams::init(dims, &mut Rng::stream(cfg.seed, "init"));
        let mut memory = MemoryState::new(5, 6, dims.embed_dim);
        let mut adam = Adam::new(cfg.learning_rate, params.tensors());
        let mut streams = TrainStreams::new(cfg.seed);
        let losses = (0..epochs)
            .map(|_| train_epoch(&mut params, &mut memory, &stream, cfg, ummu, &mut adam, &mut streams).unwrap())
            .collect();
        (params, losses)
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let cfg = config(0.0);
        let before = ModelParams::init(cfg.dims(2), &mut Rng::stream(cfg.seed, "init"));
        let (after, _) = run(&cfg, &UmmuConfig::default(), 1);
        assert_eq!(before, after);
    }

    #[test]
    fn overfits_tiny_stream() {
        let ummu = UmmuConfig {
            enabled: false,
            ..Default::default()
        };
        let (_, losses) = run(&config(1e-2), &ummu, 20);
        assert!(losses[19] < losses[0], "{losses:?}");
    }

    #[test]
    fn loss_trajectory_is_deterministic() {
        let cfg = config(1e-2);
        let (_, a) = run(&cfg, &UmmuConfig::default(), 3);
        let (_, b) = run(&cfg, &UmmuConfig::default(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_score_one_half() {
        let dims = ModelDims {
            embed_dim: 3,
            feature_dim: 2,
            time_dim: 2,
        };
        let params = ModelParams::zeros(dims);
        let stream = toy_stream(8);
        let memory = MemoryState::new(5, 6, 3);
        let enc = encode_batch(&params, &memory, stream.events(), 0.0, &UmmuConfig::default(), &mut NoNoise).unwrap();
        assert_eq!(enc.z_src, Tensor::zeros(8, 3));
        let mut m = memory.clone();
        let negs = vec![vec![0, 1]; 8];
        let (pos, neg) = score_candidates(&params, &mut m, stream.events(), &negs, &UmmuConfig::default(), &mut NoNoise).unwrap();
        assert!(pos.iter().chain(neg.iter().flatten()).all(|&p| p == 0.5));
    }

    #[test]
    fn memory_times_do_not_pass_batch_end() {
        let stream = toy_stream(20);
        let dims = ModelDims {
            embed_dim: 3,
            feature_dim: 2,
            time_dim: 2,
        };
        let params = ModelParams::init(dims, &mut Rng::from_seed(0));
        let mut memory = MemoryState::new(5, 6, 3);
        for batch in batches(&stream, 6).unwrap() {
            memory = encode_batch(&params, &memory, batch.events, 0.0, &UmmuConfig::default(), &mut NoNoise)
                .unwrap()
                .memory;
            let t_end = batch.events.last().unwrap().t;
            assert!(memory.last_updates().all(|t| t <= t_end));
        }
    }

    #[test]
    fn bad_node_is_a_data_error() {
        let dims = ModelDims {
            embed_dim: 2,
            feature_dim: 2,
            time_dim: 1,
        };
        let params = ModelParams::zeros(dims);
        let stream = toy_stream(4);
        let memory = MemoryState::new(2, 6, 2);
        let r = encode_batch(&params, &memory, stream.events(), 0.0, &UmmuConfig::default(), &mut NoNoise);
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
