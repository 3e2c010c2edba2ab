//! Link-prediction metrics under sampled negatives, overall and per time bucket.
//!
//! Ties are broken pessimistically everywhere: a positive tied with a negative
//! is ranked after it.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{score_candidates, MemoryState, ModelParams, NoiseSource};
use crate::numcore::Rng;
use crate::tgraph::{batches, sample_negatives, EventStream, NodeUniverse};
use crate::ummu::UmmuConfig;

/// Scores of one positive link and its sampled negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub positive: f64,
    pub negatives: Vec<f64>,
    pub t: f64,
}

impl CandidateSet {
    /// 1-based rank of the positive; tied negatives rank ahead of it.
    pub fn rank(&self) -> usize {
        1 + self.negatives.iter().filter(|&&n| n >= self.positive).count()
    }
}

/// AP over a pooled ranking. Positives tied with negatives are placed after them.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "average_precision",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::Domain("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // descending score, negatives before positives on ties
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| labels[a].cmp(&labels[b]))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// AP over every candidate of every set pooled together.
pub fn pooled_average_precision(sets: &[CandidateSet]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in sets {
        scores.push(s.positive);
        labels.push(true);
        scores.extend_from_slice(&s.negatives);
        labels.extend(std::iter::repeat_n(false, s.negatives.len()));
    }
    average_precision(&scores, &labels)
}

pub fn mrr(sets: &[CandidateSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Domain("mean reciprocal rank of zero candidate sets".into()));
    }
    Ok(sets.iter().map(|s| 1.0 / s.rank() as f64).sum::<f64>() / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k_neg: usize,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k_neg: 50,
            batch_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ap: f64,
    pub mrr: f64,
    pub sets: Vec<CandidateSet>,
}

/// Scores every event of `stream` against `k_neg` negatives drawn from `rng`,
/// advancing `memory` with the true events batch by batch.
pub fn evaluate(
    params: &ModelParams,
    memory: &mut MemoryState,
    stream: &EventStream,
    opts: &EvalOptions,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
    rng: &mut Rng,
) -> Result<Evaluation> {
    if stream.is_empty() {
        return Err(Error::Domain("evaluation stream is empty".into()));
    }
    let universe = NodeUniverse::range(memory.n_dst());
    let mut sets = Vec::with_capacity(stream.len());
    for batch in batches(stream, opts.batch_size)? {
        let negatives = sample_negatives(rng, &batch, opts.k_neg, &universe)?;
        let (pos, neg) = score_candidates(params, memory, batch.events, &negatives, ummu, noise)?;
        for ((e, p), n) in batch.events.iter().zip(pos).zip(neg) {
            sets.push(CandidateSet {
                positive: p,
                negatives: n,
                t: e.t,
            });
        }
    }
    Ok(Evaluation {
        ap: pooled_average_precision(&sets)?,
        mrr: mrr(&sets)?,
        sets,
    })
}

/// Replays a stream through the model without scoring, only to update memory.
pub fn advance_memory(
    params: &ModelParams,
    memory: &mut MemoryState,
    stream: &EventStream,
    batch_size: usize,
    ummu: &UmmuConfig,
    noise: &mut dyn NoiseSource,
) -> Result<()> {
    for batch in batches(stream, batch_size)? {
        let none = vec![Vec::new(); batch.len()];
        score_candidates(params, memory, batch.events, &none, ummu, noise)?;
    }
    Ok(())
}

/// `n + 1` uniform edges over `[t_min, t_max]`.
pub fn bucket_edges(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                t_max
            } else {
                t_min + (t_max - t_min) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Bucket of `t`: half-open intervals except the last, which is closed.
/// A zero-length span puts everything in bucket 0.
pub fn bucket_index(t: f64, t_min: f64, t_max: f64, n: usize) -> usize {
    let span = t_max - t_min;
    if span <= 0.0 || n == 0 {
        return 0;
    }
    let i = ((t - t_min) / span * n as f64).floor();
    if i < 0.0 {
        0
    } else {
        (i as usize).min(n - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub ap: Option<f64>,
    pub mrr: Option<f64>,
    pub n_events: usize,
}

/// Splits recorded candidate sets into `n_buckets` uniform time buckets.
pub fn bucket_metrics(sets: &[CandidateSet], n_buckets: usize) -> Result<Vec<BucketMetrics>> {
    if n_buckets == 0 {
        return Err(Error::Domain("n_buckets must be at least 1".into()));
    }
    let (t_min, t_max) = match (sets.first(), sets.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::Domain("no candidate sets to bucket".into())),
    };
    let edges = bucket_edges(t_min, t_max, n_buckets);
    let mut grouped: Vec<Vec<CandidateSet>> = vec![Vec::new(); n_buckets];
    for s in sets {
        grouped[bucket_index(s.t, t_min, t_max, n_buckets)].push(s.clone());
    }
    grouped
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (ap, mrr) = if g.is_empty() {
                (None, None)
            } else {
                (Some(pooled_average_precision(g)?), Some(mrr(g)?))
            };
            Ok(BucketMetrics {
                bucket: i,
                t_start: edges[i],
                t_end: edges[i + 1],
                ap,
                mrr,
                n_events: g.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub variant: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub k_neg: usize,
    pub n_events: usize,
    pub ap: f64,
    pub mrr: f64,
    pub per_bucket: Vec<BucketMetrics>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_evaluation(
        eval: &Evaluation,
        n_buckets: usize,
        k_neg: usize,
        variant: &str,
        seed: u64,
        config: serde_json::Value,
    ) -> Result<Self> {
        Ok(EvalReport {
            version: crate::VERSION.to_string(),
            variant: variant.to_string(),
            seed,
            rng_algorithm: crate::numcore::RNG_ALGORITHM.to_string(),
            k_neg,
            n_events: eval.sets.len(),
            ap: eval.ap,
            mrr: eval.mrr,
            per_bucket: bucket_metrics(&eval.sets, n_buckets)?,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per bucket plus a final `overall` row.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("bucket,t_start,t_end,ap,mrr,n_events\n");
        for b in &self.per_bucket {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                b.bucket,
                b.t_start,
                b.t_end,
                opt(b.ap),
                opt(b.mrr),
                b.n_events
            );
        }
        let (t0, t1) = match (self.per_bucket.first(), self.per_bucket.last()) {
            (Some(a), Some(b)) => (a.t_start, b.t_end),
            _ => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(out, "overall,{t0},{t1},{},{},{}", self.ap, self.mrr, self.n_events);
        out
    }

    pub fn write(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        let (j, c) = (json_path.as_ref(), csv_path.as_ref());
        std::fs::write(j, self.to_json()).map_err(|e| Error::io(j, e))?;
        std::fs::write(c, self.to_csv()).map_err(|e| Error::io(c, e))
    }

    /// Mean AP over the last `n` buckets that have events.
    pub fn tail_ap(&self, n: usize) -> Option<f64> {
        let aps: Vec<f64> = self.per_bucket.iter().rev().take(n).filter_map(|b| b.ap).collect();
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }
}
