//! Straight-line references written with plain loops over `Vec<Vec<f64>>`.
#![allow(dead_code)]

use ummu_core::numcore::{Rng, Tensor};
use ummu_core::ummu::{AugmentDraw, Variant};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn max_diff(a: &Mat, b: &Tensor) -> f64 {
    let mut m: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - b.get(r, c)).abs());
        }
    }
    m
}

pub fn random_batch(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    rng.uniform_tensor(rows, cols, lo, hi)
}

pub fn stats(z: &Mat, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    for row in z {
        let d = row.len() as f64;
        let mut m = 0.0;
        for v in row {
            m += v;
        }
        m /= d;
        let mut var = 0.0;
        for v in row {
            var += (v - m) * (v - m);
        }
        var /= d;
        mu.push(m);
        sigma.push(var.sqrt().max(floor));
    }
    (mu, sigma)
}

fn spread(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mut mean = 0.0;
    for v in values {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for v in values {
        var += (v - mean) * (v - mean);
    }
    (var / n).sqrt()
}

pub fn uncertainty(mu: &[f64], sigma: &[f64]) -> (f64, f64) {
    (spread(mu), spread(sigma))
}

/// The resampling formula exactly as written: renormalise with a shifted
/// standard deviation and add a shifted mean.
pub fn dsu(z: &Mat, floor: f64, eps_mu: &[f64], eps_sigma: &[f64]) -> Mat {
    let (mu, sigma) = stats(z, floor);
    let (s_mu, s_sigma) = uncertainty(&mu, &sigma);
    let mut out = z.clone();
    for b in 0..z.len() {
        let new_sigma = sigma[b] + eps_sigma[b] * s_sigma;
        let new_mu = mu[b] + eps_mu[b] * s_mu;
        for d in 0..z[b].len() {
            out[b][d] = new_sigma * (z[b][d] - mu[b]) / sigma[b] + new_mu;
        }
    }
    out
}

pub fn mixup(z: &Mat, mask: &Mat, perm: &[usize]) -> Mat {
    let mut out = z.clone();
    for b in 0..z.len() {
        for d in 0..z[b].len() {
            out[b][d] = mask[b][d] * z[b][d] + (1.0 - mask[b][d]) * z[perm[b]][d];
        }
    }
    out
}

pub fn overlay(z: &Mat, lambda: f64, perm: &[usize]) -> Mat {
    let mut out = z.clone();
    for b in 0..z.len() {
        for d in 0..z[b].len() {
            out[b][d] = (1.0 - lambda) * z[b][d] + lambda * z[perm[b]][d];
        }
    }
    out
}

pub fn variant(z: &Mat, draw: &AugmentDraw, v: Variant, floor: f64) -> Mat {
    let mask = to_mat(&draw.mask);
    match v {
        Variant::Full => mixup(&dsu(z, floor, &draw.eps_mu, &draw.eps_sigma), &mask, &draw.perm),
        Variant::NoMmU => dsu(z, floor, &draw.eps_mu, &draw.eps_sigma),
        Variant::NoU => mixup(z, &mask, &draw.perm),
        Variant::NoM => overlay(&dsu(z, floor, &draw.eps_mu, &draw.eps_sigma), draw.lambda, &draw.perm),
    }
}

/// Harmonic number `H_n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|r| 1.0 / r as f64).sum()
}

/// Relative error with a small absolute floor in the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub mod gradcheck {
    use ummu_core::model::{batch_loss, batch_step, LiveNoise, MemoryState, ModelDims, ModelParams, ReplayNoise};
    use ummu_core::numcore::Rng;
    use ummu_core::tgraph::Event;
    use ummu_core::ummu::{Mode, UmmuConfig};

    pub const H: f64 = 1e-5;

    pub struct Outcome {
        pub checked: usize,
        pub max_rel_err: f64,
        pub worst: (String, f64, f64),
    }

    /// Central differences of the full training loss at `n` random weight
    /// coordinates, with dropout and augmentation frozen to one recorded draw.
    pub fn full_model(seed: u64, n: usize, ummu: &UmmuConfig) -> Outcome {
        let dims = ModelDims {
            embed_dim: 4,
            feature_dim: 3,
            time_dim: 2,
        };
        let mut rng = Rng::from_seed(seed);
        let params = ModelParams::init(dims, &mut rng);
        let events: Vec<Event> = (0..6)
            .map(|i| Event {
                src: i % 3,
                dst: (i * 2 + 1) % 5,
                t: 1.0 + i as f64 * 0.1,
                features: rng.normals(3),
                idx: i,
            })
            .collect();
        let mut memory = MemoryState::new(3, 5, 4);
        memory
            .write(&events, &rng.uniform_tensor(6, 4, -1.0, 1.0), &rng.uniform_tensor(6, 4, -1.0, 1.0))
            .unwrap();
        let negatives: Vec<usize> = events.iter().map(|e| (e.dst + 2) % 5).collect();

        let mut noise =
            LiveNoise::new(Mode::Train, Rng::stream(seed, "augment"), Rng::stream(seed, "dropout")).recording();
        let step = batch_step(&params, &memory, &events, &negatives, 0.1, ummu, &mut noise).unwrap();
        let log = noise.take_log();

        let mut out = Outcome {
            checked: 0,
            max_rel_err: 0.0,
            worst: (String::new(), 0.0, 0.0),
        };
        for _ in 0..n {
            let ti = rng.below(params.tensors().len());
            let ei = rng.below(params.tensors()[ti].len());
            let loss_at = |delta: f64| {
                let mut p = params.clone();
                let t = &mut p.tensors_mut()[ti];
                let mut data = t.data().to_vec();
                data[ei] += delta;
                *t = ummu_core::numcore::Tensor::new(t.rows(), t.cols(), data).unwrap();
                batch_loss(&p, &memory, &events, &negatives, 0.1, ummu, &mut ReplayNoise::new(log.clone())).unwrap()
            };
            let fd = (loss_at(H) - loss_at(-H)) / (2.0 * H);
            let an = step.grads[ti].data()[ei];
            let err = super::rel_err(fd, an);
            out.checked += 1;
            if err > out.max_rel_err {
                out.max_rel_err = err;
                out.worst = (format!("{}[{ei}]", ummu_core::model::PARAM_NAMES[ti]), fd, an);
            }
        }
        out
    }
}
