//! Uncertainty masked mixup (UmmU).
//!
//! Given a batch of intermediate event embeddings `Z` (`B x D`), UmmU
//!
//! 1. computes each event's embedding mean and standard deviation over the
//!    feature axis,
//! 2. measures how much those statistics spread across the batch,
//! 3. resamples every event's statistics inside that spread (`Z_dsu`),
//! 4. replaces a Beta-sampled fraction of the entries of `Z_dsu` with the
//!    entries of a row-shuffled copy of itself (`Z_per`).
//!
//! The module owns no trainable parameters and is a no-op outside training.
//! All randomness for one application is collected in an [`AugmentDraw`] so
//! it can be replayed exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Axis, ReduceKind, Rng, Tape, Tensor, Var};

/// Encoder layer after which the augmentation is inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookPoint {
    AfterLayer1,
    AfterLayer2,
}

impl FromStr for HookPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_layer_1" => Ok(HookPoint::AfterLayer1),
            "after_layer_2" => Ok(HookPoint::AfterLayer2),
            other => Err(Error::Config(format!(
                "unknown hook layer {other:?} (expected after_layer_1 or after_layer_2)"
            ))),
        }
    }
}

impl fmt::Display for HookPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HookPoint::AfterLayer1 => "after_layer_1",
            HookPoint::AfterLayer2 => "after_layer_2",
        })
    }
}

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Uncertainty resampling followed by masked mixup.
    #[serde(rename = "full")]
    Full,
    /// Masked mixup on the raw embeddings.
    #[serde(rename = "no_U")]
    NoU,
    /// Uncertainty resampling only.
    #[serde(rename = "no_mmU")]
    NoMmU,
    /// Uncertainty resampling followed by a linear overlay instead of a mask.
    #[serde(rename = "no_m")]
    NoM,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoU, Variant::NoMmU, Variant::NoM];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoU => "no_U",
            Variant::NoMmU => "no_mmU",
            Variant::NoM => "no_m",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "UmmU",
            Variant::NoU => "w/o U",
            Variant::NoMmU => "w/o mmU",
            Variant::NoM => "w/o m",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_U" | "no_u" => Ok(Variant::NoU),
            "no_mmU" | "no_mmu" => Ok(Variant::NoMmU),
            "no_m" => Ok(Variant::NoM),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected full, no_U, no_mmU or no_m)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmmuConfig {
    pub enabled: bool,
    /// Beta(alpha, alpha) parameter for the mask ratio.
    pub alpha: f64,
    /// Probability that a training batch is augmented at all.
    pub apply_prob: f64,
    /// Lower bound on per-event standard deviations.
    pub sigma_floor: f64,
    pub hook_layer: HookPoint,
    pub variant: Variant,
}

impl Default for UmmuConfig {
    fn default() -> Self {
        UmmuConfig {
            enabled: true,
            alpha: 1.0,
            apply_prob: 1.0,
            sigma_floor: 1e-5,
            hook_layer: HookPoint::AfterLayer1,
            variant: Variant::Full,
        }
    }
}

impl UmmuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("ummu.alpha must be > 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return Err(Error::Config(format!(
                "ummu.apply_prob must lie in [0, 1], got {}",
                self.apply_prob
            )));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return Err(Error::Config(format!(
                "ummu.sigma_floor must be > 0, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

/// Per-event embedding statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsPair {
    pub mu: Vec<f64>,
    /// Standard deviations, already raised to the floor.
    pub sigma: Vec<f64>,
}

/// Spread of the per-event statistics across the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyPair {
    pub big_sigma_mu: f64,
    pub big_sigma_sigma: f64,
}

/// Every random quantity consumed by one augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub eps_mu: Vec<f64>,
    pub eps_sigma: Vec<f64>,
    pub lambda: f64,
    /// `B x D` matrix of 0/1; zeros mark entries taken from the shuffled rows.
    pub mask: Tensor,
    pub perm: Vec<usize>,
}

/// Number of masked entries for ratio `lambda` on a `rows x cols` grid.
pub fn masked_count(lambda: f64, rows: usize, cols: usize) -> usize {
    let total = rows * cols;
    ((lambda * total as f64).floor() as usize).min(total)
}

impl AugmentDraw {
    /// Draw that leaves every variant's output equal to its input.
    pub fn identity(rows: usize, cols: usize) -> Self {
        AugmentDraw {
            eps_mu: vec![0.0; rows],
            eps_sigma: vec![0.0; rows],
            lambda: 0.0,
            mask: Tensor::ones(rows, cols),
            perm: (0..rows).collect(),
        }
    }

    /// Samples everything except the mask ratio, which is given.
    pub fn with_lambda(rng: &mut Rng, rows: usize, cols: usize, lambda: f64) -> Self {
        let eps_mu = rng.normals(rows);
        let eps_sigma = rng.normals(rows);
        Self::finish(rng, rows, cols, eps_mu, eps_sigma, lambda)
    }

    fn finish(
        rng: &mut Rng,
        rows: usize,
        cols: usize,
        eps_mu: Vec<f64>,
        eps_sigma: Vec<f64>,
        lambda: f64,
    ) -> Self {
        let mut mask = vec![1.0; rows * cols];
        for i in rng.sample_distinct(rows * cols, masked_count(lambda, rows, cols)) {
            mask[i] = 0.0;
        }
        let perm = rng.permutation(rows);
        AugmentDraw {
            eps_mu,
            eps_sigma,
            lambda,
            mask: Tensor::new(rows, cols, mask).expect("mask shape"),
            perm,
        }
    }

    pub fn zero_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m == 0.0).count()
    }

    /// Checks shapes, mask values and count, and that `perm` is a bijection.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.eps_mu.len() != rows || self.eps_sigma.len() != rows {
            return Err(Error::Contract(format!(
                "eps vectors must have length {rows}, got {} and {}",
                self.eps_mu.len(),
                self.eps_sigma.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Contract(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.mask.shape() != (rows, cols) {
            return Err(Error::Contract(format!(
                "mask shape {:?}, expected {:?}",
                self.mask.shape(),
                (rows, cols)
            )));
        }
        if self.mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Contract("mask entries must be 0 or 1".into()));
        }
        let expected = masked_count(self.lambda, rows, cols);
        if self.zero_count() != expected {
            return Err(Error::Contract(format!(
                "mask has {} zeros, lambda {} on {rows}x{cols} requires {expected}",
                self.zero_count(),
                self.lambda
            )));
        }
        let mut seen = vec![false; rows];
        if self.perm.len() != rows
            || !self
                .perm
                .iter()
                .all(|&p| p < rows && !std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Contract(format!(
                "perm must be a permutation of 0..{rows}"
            )));
        }
        Ok(())
    }
}

/// Draws a complete augmentation: per-row `eps_mu`, `eps_sigma` ~ N(0, 1),
/// `lambda` ~ Beta(alpha, alpha), a mask with `floor(lambda B D)` zeros at
/// uniformly chosen positions, and a uniform row permutation.
pub fn draw_augmentation(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    config: &UmmuConfig,
) -> Result<AugmentDraw> {
    if rows == 0 || cols == 0 {
        return Err(Error::Domain(format!(
            "augmentation needs a non-empty batch, got {rows}x{cols}"
        )));
    }
    let eps_mu = rng.normals(rows);
    let eps_sigma = rng.normals(rows);
    let lambda = rng.beta(config.alpha, config.alpha)?;
    Ok(AugmentDraw::finish(rng, rows, cols, eps_mu, eps_sigma, lambda))
}

/// Decides whether this batch is augmented and draws the augmentation.
///
/// The stream is advanced by the same amount on every branch, so turning the
/// augmentation off (or evaluating) never shifts later draws.
pub fn sample_activation(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    config: &UmmuConfig,
    mode: Mode,
) -> Result<Option<AugmentDraw>> {
    let coin = rng.bernoulli(config.apply_prob);
    let draw = draw_augmentation(rng, rows, cols, config)?;
    Ok((mode == Mode::Train && config.enabled && coin).then_some(draw))
}

/// Per-event mean and floored population standard deviation over features.
pub fn event_stats(z: &Tensor, sigma_floor: f64) -> Result<StatsPair> {
    if z.cols() == 0 {
        return Err(Error::Domain("event_stats needs at least one feature column".into()));
    }
    let mu = z.reduce(ReduceKind::Mean, Axis::Cols)?.into_data();
    let sigma = z
        .reduce(ReduceKind::VarPopulation, Axis::Cols)?
        .into_data()
        .into_iter()
        .map(|v| v.max(0.0).sqrt().max(sigma_floor))
        .collect();
    Ok(StatsPair { mu, sigma })
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of the per-event statistics across the batch.
pub fn batch_uncertainty(stats: &StatsPair) -> Result<UncertaintyPair> {
    if stats.mu.is_empty() || stats.mu.len() != stats.sigma.len() {
        return Err(Error::Domain(format!(
            "batch_uncertainty needs matching non-empty statistics, got {} and {}",
            stats.mu.len(),
            stats.sigma.len()
        )));
    }
    Ok(UncertaintyPair {
        big_sigma_mu: population_std(&stats.mu),
        big_sigma_sigma: population_std(&stats.sigma),
    })
}

fn check_rows(what: &str, len: usize, rows: usize) -> Result<()> {
    if len != rows {
        return Err(Error::Contract(format!("{what} has length {len}, batch has {rows} rows")));
    }
    Ok(())
}

/// Statistic resampling on plain values.
///
/// `out = (sigma + eps_sigma S_sigma) (z - mu) / sigma + (mu + eps_mu S_mu)`,
/// evaluated as `z + (eps_sigma S_sigma / sigma)(z - mu) + eps_mu S_mu` so that
/// zero noise returns `z` bit for bit.
pub fn dsu_augment(
    z: &Tensor,
    stats: &StatsPair,
    unc: &UncertaintyPair,
    eps_mu: &[f64],
    eps_sigma: &[f64],
) -> Result<Tensor> {
    let rows = z.rows();
    check_rows("mu", stats.mu.len(), rows)?;
    check_rows("sigma", stats.sigma.len(), rows)?;
    check_rows("eps_mu", eps_mu.len(), rows)?;
    check_rows("eps_sigma", eps_sigma.len(), rows)?;
    Ok(Tensor::from_fn(rows, z.cols(), |b, d| {
        let ratio = eps_sigma[b] * unc.big_sigma_sigma / stats.sigma[b];
        z.get(b, d) + ratio * (z.get(b, d) - stats.mu[b]) + eps_mu[b] * unc.big_sigma_mu
    }))
}

/// `mask * z_dsu + (1 - mask) * z_dsu[perm]` on plain values.
pub fn masked_mixup(z_dsu: &Tensor, draw: &AugmentDraw) -> Result<Tensor> {
    let mut tape = Tape::new();
    let z = tape.constant(z_dsu.clone());
    let out = masked_mixup_on_tape(&mut tape, z, draw)?;
    Ok(tape.value(out).clone())
}

/// Resamples per-event statistics on the tape. `mu`, `sigma` and their batch
/// spreads are all differentiable functions of `z`; only the noise is constant.
pub fn dsu_augment_on_tape(
    tape: &mut Tape,
    z: Var,
    eps_mu: &[f64],
    eps_sigma: &[f64],
    sigma_floor: f64,
) -> Result<Var> {
    let (rows, cols) = tape.value(z).shape();
    if cols == 0 {
        return Err(Error::Domain("event_stats needs at least one feature column".into()));
    }
    check_rows("eps_mu", eps_mu.len(), rows)?;
    check_rows("eps_sigma", eps_sigma.len(), rows)?;

    let mu = tape.reduce(ReduceKind::Mean, z, Axis::Cols)?;
    let var = tape.reduce(ReduceKind::VarPopulation, z, Axis::Cols)?;
    let sigma = tape.sqrt_floor(var, sigma_floor)?;
    // batch spreads; a zero floor keeps B = 1 exact and gives a zero gradient there
    let mu_var = tape.reduce(ReduceKind::VarPopulation, mu, Axis::All)?;
    let spread_mu = tape.sqrt_floor(mu_var, 0.0)?;
    let sigma_var = tape.reduce(ReduceKind::VarPopulation, sigma, Axis::All)?;
    let spread_sigma = tape.sqrt_floor(sigma_var, 0.0)?;

    let centered = tape.sub(z, mu)?;
    let eps_s = tape.constant(Tensor::column(eps_sigma.to_vec()));
    let sigma_noise = tape.mul(eps_s, spread_sigma)?;
    // sigma is floored, so the division is safe even below DIV_FLOOR
    let ratio = tape.div_unchecked(sigma_noise, sigma)?;
    let spread = tape.mul(centered, ratio)?;
    let shifted = tape.add(z, spread)?;
    let eps_m = tape.constant(Tensor::column(eps_mu.to_vec()));
    let mu_noise = tape.mul(eps_m, spread_mu)?;
    tape.add(shifted, mu_noise)
}

/// Masked mixup on the tape; mask and permutation are constants.
pub fn masked_mixup_on_tape(tape: &mut Tape, z: Var, draw: &AugmentDraw) -> Result<Var> {
    let (rows, cols) = tape.value(z).shape();
    draw.validate(rows, cols)?;
    let shuffled = tape.gather_rows(z, &draw.perm)?;
    let keep = tape.constant(draw.mask.clone());
    let swap = tape.constant(draw.mask.map(|m| 1.0 - m));
    let kept = tape.mul(z, keep)?;
    let taken = tape.mul(shuffled, swap)?;
    tape.add(kept, taken)
}

/// `(1 - lambda) z + lambda z[perm]`: the whole-row interpolation used by the
/// `no_m` variant. `lambda` weights the shuffled copy, as the masked ratio does.
pub fn linear_overlay_on_tape(tape: &mut Tape, z: Var, draw: &AugmentDraw) -> Result<Var> {
    let (rows, cols) = tape.value(z).shape();
    draw.validate(rows, cols)?;
    let shuffled = tape.gather_rows(z, &draw.perm)?;
    let kept = tape.scale(z, 1.0 - draw.lambda)?;
    let taken = tape.scale(shuffled, draw.lambda)?;
    tape.add(kept, taken)
}

/// Applies `variant` with an already sampled draw.
pub fn apply_draw_on_tape(
    tape: &mut Tape,
    z: Var,
    draw: &AugmentDraw,
    variant: Variant,
    sigma_floor: f64,
) -> Result<Var> {
    let (rows, cols) = tape.value(z).shape();
    draw.validate(rows, cols)?;
    let dsu = |tape: &mut Tape| dsu_augment_on_tape(tape, z, &draw.eps_mu, &draw.eps_sigma, sigma_floor);
    match variant {
        Variant::Full => {
            let z_dsu = dsu(tape)?;
            masked_mixup_on_tape(tape, z_dsu, draw)
        }
        Variant::NoMmU => dsu(tape),
        Variant::NoU => masked_mixup_on_tape(tape, z, draw),
        Variant::NoM => {
            let z_dsu = dsu(tape)?;
            linear_overlay_on_tape(tape, z_dsu, draw)
        }
    }
}

/// Applies `variant` with an already sampled draw on plain values.
pub fn apply_draw(z: &Tensor, draw: &AugmentDraw, variant: Variant, sigma_floor: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let out = apply_draw_on_tape(&mut tape, zv, draw, variant, sigma_floor)?;
    Ok(tape.value(out).clone())
}

/// Full augmentation entry point on plain values. Returns `z` unchanged in
/// eval mode, when disabled, or when the per-batch coin says no.
pub fn ummu_apply(
    z: &Tensor,
    rng: &mut Rng,
    config: &UmmuConfig,
    mode: Mode,
    variant: Variant,
) -> Result<Tensor> {
    config.validate()?;
    match sample_activation(rng, z.rows(), z.cols(), config, mode)? {
        Some(draw) => apply_draw(z, &draw, variant, config.sigma_floor),
        None => Ok(z.clone()),
    }
}
