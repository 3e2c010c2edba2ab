mod common;

use common::{max_diff, to_mat, Mat};
use ummu_core::model::{encode_batch, score_links, MemoryState, ModelDims, ModelParams, NoNoise};
use ummu_core::numcore::{Rng, Tape, Tensor};
use ummu_core::tgraph::Event;
use ummu_core::ummu::{
    apply_draw, batch_uncertainty, draw_augmentation, dsu_augment, event_stats, masked_mixup, UmmuConfig, Variant,
};

const FLOOR: f64 = 1e-5;

#[test]
fn augmentation_matches_scalar_loops() {
    let mut rng = Rng::from_seed(2024);
    let cfg = UmmuConfig::default();
    for _ in 0..100 {
        let z = common::random_batch(&mut rng, 8, 16, -2.0, 2.0);
        let draw = draw_augmentation(&mut rng, 8, 16, &cfg).unwrap();
        let zm = to_mat(&z);

        let stats = event_stats(&z, FLOOR).unwrap();
        let (mu, sigma) = common::stats(&zm, FLOOR);
        for b in 0..8 {
            assert!((stats.mu[b] - mu[b]).abs() < 1e-12);
            assert!((stats.sigma[b] - sigma[b]).abs() < 1e-12);
        }
        let unc = batch_uncertainty(&stats).unwrap();
        let (s_mu, s_sigma) = common::uncertainty(&mu, &sigma);
        assert!((unc.big_sigma_mu - s_mu).abs() < 1e-12);
        assert!((unc.big_sigma_sigma - s_sigma).abs() < 1e-12);

        let z_dsu = dsu_augment(&z, &stats, &unc, &draw.eps_mu, &draw.eps_sigma).unwrap();
        assert!(max_diff(&common::dsu(&zm, FLOOR, &draw.eps_mu, &draw.eps_sigma), &z_dsu) < 1e-10);
        let mixed = masked_mixup(&z_dsu, &draw).unwrap();
        assert!(max_diff(&common::mixup(&to_mat(&z_dsu), &to_mat(&draw.mask), &draw.perm), &mixed) < 1e-10);

        for v in Variant::ALL {
            let got = apply_draw(&z, &draw, v, FLOOR).unwrap();
            assert!(max_diff(&common::variant(&zm, &draw, v, FLOOR), &got) < 1e-10, "{v}");
        }
    }
}

fn affine_tanh(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = b.get(0, j);
        for (i, xi) in x.iter().enumerate() {
            s += xi * w.get(i, j);
        }
        *o = s.tanh();
    }
    out
}

fn oracle_score(p: &[Tensor], zs: &[f64], zc: &[f64]) -> f64 {
    let joined: Vec<f64> = zs.iter().chain(zc).copied().collect();
    let hidden = affine_tanh(&joined, &p[6], &p[7]);
    let mut logit = p[9].get(0, 0);
    for (i, h) in hidden.iter().enumerate() {
        logit += h * p[8].get(i, 0);
    }
    1.0 / (1.0 + (-logit).exp())
}

fn oracle_encode(p: &[Tensor], x: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let h = affine_tanh(x, &p[0], &p[1]);
    let z = affine_tanh(&h, &p[2], &p[3]);
    let proj = affine_tanh(&z, &p[4], &p[5]);
    (proj[..d].to_vec(), proj[d..].to_vec())
}

#[test]
fn single_event_matches_scalar_loops() {
    let dims = ModelDims {
        embed_dim: 5,
        feature_dim: 3,
        time_dim: 4,
    };
    let mut rng = Rng::from_seed(77);
    let params = ModelParams::init(dims, &mut rng);
    let p = params.tensors();

    // seed the memory with an earlier write so it is not all zeros
    let mut memory = MemoryState::new(3, 4, 5);
    let warm = Event {
        src: 1,
        dst: 2,
        t: 0.25,
        features: vec![0.0; 3],
        idx: 0,
    };
    memory
        .write(&[warm], &rng.uniform_tensor(1, 5, -1.0, 1.0), &rng.uniform_tensor(1, 5, -1.0, 1.0))
        .unwrap();

    let ev = Event {
        src: 1,
        dst: 2,
        t: 1.75,
        features: vec![0.3, -1.2, 0.8],
        idx: 1,
    };
    let enc = encode_batch(&params, &memory, std::slice::from_ref(&ev), 0.0, &UmmuConfig::default(), &mut NoNoise).unwrap();

    let dt: f64 = 1.75 - 0.25;
    let mut x: Vec<f64> = memory.src(1).to_vec();
    x.extend_from_slice(memory.dst(2));
    x.extend_from_slice(&ev.features);
    for k in 0..4 {
        let omega = 10f64.powf(-(k as f64) * 4.0 / 3.0);
        x.push((omega * dt).cos());
    }
    let (zs, zd) = oracle_encode(p, &x, 5);
    let want: Mat = vec![zs.clone()];
    assert!(max_diff(&want, &enc.z_src) < 1e-10);
    assert!(max_diff(&vec![zd.clone()], &enc.z_dst) < 1e-10);
    assert_eq!(enc.memory.src(1), enc.z_src.row(0));
    assert_eq!(enc.memory.src_last_update(1), 1.75);

    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let a = tape.constant(enc.z_src.clone());
    let b = tape.constant(enc.z_dst.clone());
    let s = score_links(&mut tape, &vars, a, b).unwrap();
    let got = tape.value(s).get(0, 0);
    assert!((got - oracle_score(p, &zs, &zd)).abs() < 1e-10);
    assert!(got > 0.0 && got < 1.0);
}

#[test]
fn score_links_rejects_mismatched_rows() {
    let dims = ModelDims {
        embed_dim: 2,
        feature_dim: 1,
        time_dim: 1,
    };
    let params = ModelParams::zeros(dims);
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let a = tape.constant(Tensor::zeros(3, 2));
    let b = tape.constant(Tensor::zeros(2, 2));
    assert!(score_links(&mut tape, &vars, a, b).is_err());
}
