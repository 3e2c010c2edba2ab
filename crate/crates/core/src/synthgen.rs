//! Synthetic bipartite streams with a controllable temporal shift.
//!
//! Each source belongs to a regime. A regime prefers destinations whose
//! latent angle is close to its own angle `phi_r(t) = phi_r0 + drift_rate * t`,
//! so preferences rotate as time passes. Event features carry the regime
//! prototype, a global offset growing with `drift_rate * t`, a projection of
//! the current regime angle and Gaussian noise.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::bucket_index;
use crate::numcore::Rng;
use crate::tgraph::{Event, EventStream};

/// Sharpness of the destination preference softmax.
const CONCENTRATION: f64 = 5.0;
/// Scale of the regime-angle component of the features.
const ANGLE_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_src: usize,
    pub n_dst: usize,
    pub n_events: usize,
    pub feature_dim: usize,
    pub n_regimes: usize,
    pub drift_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_src: 200,
            n_dst: 100,
            n_events: 20_000,
            feature_dim: 16,
            n_regimes: 4,
            drift_rate: 1.0,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_src", self.n_src),
            ("n_dst", self.n_dst),
            ("n_events", self.n_events),
            ("feature_dim", self.feature_dim),
            ("n_regimes", self.n_regimes),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Domain(format!("synth {name} must be at least 1")));
            }
        }
        if !(self.drift_rate.is_finite() && self.drift_rate >= 0.0) {
            return Err(Error::Domain(format!("synth drift_rate must be >= 0, got {}", self.drift_rate)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Domain(format!("synth noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = rng.normals(dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Samples an index from unnormalised log-weights.
fn sample_softmax(rng: &mut Rng, logits: &[f64], weights: &mut Vec<f64>) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    weights.clear();
    weights.extend(logits.iter().map(|l| (l - max).exp()));
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn generate(spec: &SynthSpec) -> Result<EventStream> {
    spec.validate()?;
    let mut rng = Rng::stream(spec.seed, "synth");
    let f = spec.feature_dim;

    let regime_of: Vec<usize> = (0..spec.n_src).map(|_| rng.below(spec.n_regimes)).collect();
    let base_angle: Vec<f64> = (0..spec.n_regimes)
        .map(|r| TAU * r as f64 / spec.n_regimes as f64)
        .collect();
    let dst_angle: Vec<f64> = (0..spec.n_dst).map(|_| rng.uniform_range(0.0, TAU)).collect();
    let prototypes: Vec<Vec<f64>> = (0..spec.n_regimes).map(|_| rng.normals(f)).collect();
    let drift_dir = unit_vector(&mut rng, f);
    let angle_proj = [unit_vector(&mut rng, f), unit_vector(&mut rng, f)];

    let mut times: Vec<f64> = (0..spec.n_events).map(|_| rng.uniform()).collect();
    times.sort_by(f64::total_cmp);

    let mut logits = vec![0.0; spec.n_dst];
    let mut weights = Vec::with_capacity(spec.n_dst);
    let events = times
        .into_iter()
        .enumerate()
        .map(|(idx, t)| {
            let src = rng.below(spec.n_src);
            let r = regime_of[src];
            let phi = base_angle[r] + spec.drift_rate * t;
            for (l, theta) in logits.iter_mut().zip(&dst_angle) {
                *l = CONCENTRATION * (theta - phi).cos();
            }
            let dst = sample_softmax(&mut rng, &logits, &mut weights);
            let (c, s) = (phi.cos(), phi.sin());
            let features = (0..f)
                .map(|k| {
                    prototypes[r][k]
                        + spec.drift_rate * t * drift_dir[k]
                        + ANGLE_AMPLITUDE * (c * angle_proj[0][k] + s * angle_proj[1][k])
                        + spec.noise_std * rng.normal()
                })
                .collect();
            Event {
                src,
                dst,
                t,
                features,
                idx,
            }
        })
        .collect();
    EventStream::new(events, spec.n_src, spec.n_dst, f)
}

/// L2 distance between each time bucket's mean feature vector and the first
/// bucket's. Empty buckets report NaN.
pub fn shift_magnitude(stream: &EventStream, n_buckets: usize) -> Result<Vec<f64>> {
    let (t0, t1) = stream
        .time_span()
        .ok_or_else(|| Error::Domain("shift_magnitude of an empty stream".into()))?;
    if n_buckets == 0 {
        return Err(Error::Domain("n_buckets must be at least 1".into()));
    }
    let f = stream.feature_dim();
    let mut sums = vec![vec![0.0; f]; n_buckets];
    let mut counts = vec![0usize; n_buckets];
    for e in stream.events() {
        let b = bucket_index(e.t, t0, t1, n_buckets);
        counts[b] += 1;
        for (s, x) in sums[b].iter_mut().zip(&e.features) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|x| x / n as f64).collect())
        .collect();
    Ok(means
        .iter()
        .map(|m| {
            m.iter()
                .zip(&means[0])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}
