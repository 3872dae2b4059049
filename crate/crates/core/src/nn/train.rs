//! Mini-batch training and batched inference over a [`SampleSet`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adamw::{AdamW, AdamWConfig};
use super::layers::Act;
use super::loss::{mixed_loss, LossParts};
use super::schedule::lambda_schedule;
use super::unet::{crop, pad_edge, padded, NetConfig, Network};
use crate::error::{Error, Result};
use crate::grid::GeoGrid;
use crate::preprocess::{SampleRef, SampleSet};
use crate::synth::stream_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub optimizer: AdamWConfig,
    /// Evaluate the validation loss after every epoch.
    pub validate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lambda0: 0.8,
            lambda1: 0.2,
            optimizer: AdamWConfig::default(),
            validate: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch size must be positive".into()));
        }
        if !(0.0 <= self.lambda1 && self.lambda1 <= self.lambda0 && self.lambda0 <= 1.0) {
            return Err(Error::Invalid(format!("need 0 ≤ λ₁ ≤ λ₀ ≤ 1, got {} and {}", self.lambda0, self.lambda1)));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && o.weight_decay >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(Error::Invalid("optimizer hyperparameters out of range".into()));
        }
        Ok(())
    }

    /// Scheduled λ for an epoch; a single-epoch run uses λ₀.
    pub fn lambda(&self, epoch: usize) -> Result<f64> {
        if self.epochs == 1 {
            return Ok(self.lambda0);
        }
        lambda_schedule(epoch, self.epochs, self.lambda0, self.lambda1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Scheduled λ. Prediction-only training ignores it and uses 0.
    pub lambda: f64,
    /// Sample-weighted means over the epoch's batches.
    pub train: LossParts,
    pub val: Option<LossParts>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lambda,train_loss,train_concept,train_pred,val_loss,val_concept,val_pred\n");
        for r in &self.records {
            let v = |f: fn(&LossParts) -> f64| r.val.as_ref().map(|p| format!("{:.8}", f(p))).unwrap_or_default();
            s += &format!(
                "{},{:.8},{:.8},{:.8},{:.8},{},{},{}\n",
                r.epoch,
                r.lambda,
                r.train.combined,
                r.train.concept,
                r.train.pred,
                v(|p| p.combined),
                v(|p| p.concept),
                v(|p| p.pred)
            );
        }
        s
    }
}

/// Network-ready tensors for a list of samples, edge-padded to multiples
/// of 16.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Act<f32>,
    pub concepts: Act<f32>,
    pub y: Act<f32>,
}

fn stack(channels: usize, cells: usize, h: usize, w: usize, rows: &[&[f32]]) -> Act<f32> {
    let n = rows.len();
    let mut a = Act::zeros(channels, n, h, w);
    for (s, row) in rows.iter().enumerate() {
        for k in 0..channels {
            a.data[(k * n + s) * cells..(k * n + s + 1) * cells].copy_from_slice(&row[k * cells..(k + 1) * cells]);
        }
    }
    a
}

pub fn assemble(set: &SampleSet, refs: &[SampleRef]) -> Batch {
    let (h, w) = (set.grid.n_lat(), set.grid.n_lon());
    let cells = h * w;
    let (hp, wp) = (padded(h), padded(w));
    let xs: Vec<&[f32]> = refs.iter().map(|&r| set.x(r)).collect();
    let cs: Vec<&[f32]> = refs.iter().map(|&r| set.concept_target(r)).collect();
    let ys: Vec<&[f32]> = refs.iter().map(|&r| set.y_target(r)).collect();
    Batch {
        x: pad_edge(&stack(set.in_channels(), cells, h, w, &xs), hp, wp),
        concepts: pad_edge(&stack(4, cells, h, w, &cs), hp, wp),
        y: pad_edge(&stack(1, cells, h, w, &ys), hp, wp),
    }
}

/// Ocean mask on the padded grid; padding is never ocean.
pub fn loss_mask(grid: &GeoGrid) -> Vec<bool> {
    let (h, w) = (grid.n_lat(), grid.n_lon());
    let (hp, wp) = (padded(h), padded(w));
    let mut m = vec![false; hp * wp];
    for i in 0..h {
        for j in 0..w {
            m[i * wp + j] = grid.is_ocean(i, j);
        }
    }
    m
}

fn check_set(cfg: &NetConfig, set: &SampleSet) -> Result<()> {
    if set.in_channels() != cfg.in_channels {
        return Err(Error::Shape(format!(
            "samples carry {} channels, network expects {}",
            set.in_channels(),
            cfg.in_channels
        )));
    }
    Ok(())
}

fn accumulate(acc: &mut [f64; 3], p: &LossParts, n: usize) {
    acc[0] += p.concept * n as f64;
    acc[1] += p.pred * n as f64;
    acc[2] += p.combined * n as f64;
}

fn mean_parts(acc: [f64; 3], n: usize) -> LossParts {
    LossParts {
        concept: acc[0] / n as f64,
        pred: acc[1] / n as f64,
        combined: acc[2] / n as f64,
    }
}

/// Eval-mode loss over a whole set at a given λ.
pub fn evaluate_loss(net: &Network<f32>, set: &SampleSet, batch_size: usize, lambda: f64) -> Result<LossParts> {
    check_set(&net.cfg, set)?;
    if set.is_empty() {
        return Err(Error::Invalid("cannot evaluate on an empty sample set".into()));
    }
    let mask = loss_mask(&set.grid);
    let mut acc = [0.0; 3];
    for refs in set.samples.chunks(batch_size.max(1)) {
        let b = assemble(set, refs);
        let out = net.forward(&b.x)?;
        let l = mixed_loss(&out.concepts, &out.y, &b.concepts, &b.y, &mask, lambda)?;
        accumulate(&mut acc, &l.parts, refs.len());
    }
    Ok(mean_parts(acc, set.len()))
}

/// Trains a fresh network initialized from `seed`. Batch order comes from a
/// per-epoch stream of the same seed, so the result depends on nothing else.
pub fn train(cfg: &NetConfig, set: &SampleSet, val: Option<&SampleSet>, tc: &TrainConfig, seed: u64) -> Result<(Network<f32>, History)> {
    let net = Network::new(cfg.clone(), seed)?;
    train_from(net, set, val, tc, seed)
}

/// [`train`] starting from given weights.
pub fn train_from(
    mut net: Network<f32>,
    set: &SampleSet,
    val: Option<&SampleSet>,
    tc: &TrainConfig,
    seed: u64,
) -> Result<(Network<f32>, History)> {
    tc.validate()?;
    check_set(&net.cfg, set)?;
    if set.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mask = loss_mask(&set.grid);
    let supervised = net.cfg.mode.supervised();
    let mut opt = AdamW::<f32>::new(tc.optimizer, net.n_params());
    let mut history = History::default();
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 0..tc.epochs {
        let lambda = tc.lambda(epoch)?;
        let lambda_loss = if supervised { lambda } else { 0.0 };
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch as u64, "shuffle")));
        let mut acc = [0.0; 3];
        for idx in order.chunks(tc.batch_size) {
            let refs: Vec<SampleRef> = idx.iter().map(|&i| set.samples[i]).collect();
            let b = assemble(set, &refs);
            let (out, cache) = net.forward_train(&b.x)?;
            let l = mixed_loss(&out.concepts, &out.y, &b.concepts, &b.y, &mask, lambda_loss)?;
            if !l.parts.combined.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: l.parts.combined,
                });
            }
            let d_free = out.free.as_ref().map(|f| Act::zeros(f.c, f.n, f.h, f.w));
            let d_concepts = if supervised { l.d_concepts } else { Act::zeros(out.concepts.c, out.concepts.n, out.concepts.h, out.concepts.w) };
            let grads = net.backward(&cache, &d_concepts, d_free.as_ref(), &l.d_y)?;
            opt.update(&mut net.params, &grads).map_err(|e| match e {
                Error::Numerical(_) => Error::Diverged { epoch, loss: f64::NAN },
                e => e,
            })?;
            accumulate(&mut acc, &l.parts, refs.len());
        }
        let train = mean_parts(acc, set.len());
        let val = match val {
            Some(v) if tc.validate && !v.is_empty() => Some(evaluate_loss(&net, v, tc.batch_size, lambda_loss)?),
            _ => None,
        };
        log::info!(
            "{} seed {seed} epoch {epoch}: λ {lambda:.3} train {:.5} val {}",
            net.cfg.mode.name(),
            train.combined,
            val.map(|v| format!("{:.5}", v.combined)).unwrap_or_else(|| "-".into())
        );
        history.records.push(EpochRecord { epoch, lambda, train, val });
    }
    Ok((net, history))
}

/// Outputs for one sample on the unpadded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    pub target: SampleRef,
    /// `[n_prescribed × cells]`.
    pub concepts: Vec<f32>,
    /// `[n_free × cells]`, empty without a free head.
    pub free: Vec<f32>,
    /// `[cells]`.
    pub y: Vec<f32>,
}

fn unstack(a: &Act<f32>, s: usize) -> Vec<f32> {
    let cells = a.h * a.w;
    (0..a.c).flat_map(|k| a.data[(k * a.n + s) * cells..(k * a.n + s + 1) * cells].iter().copied()).collect()
}

/// Eval-mode predictions for every sample of a set, in set order.
pub fn predict(net: &Network<f32>, set: &SampleSet, batch_size: usize) -> Result<Vec<SamplePrediction>> {
    check_set(&net.cfg, set)?;
    let (h, w) = (set.grid.n_lat(), set.grid.n_lon());
    let mut out = Vec::with_capacity(set.len());
    for refs in set.samples.chunks(batch_size.max(1)) {
        let b = assemble(set, refs);
        let o = net.forward(&b.x)?;
        let concepts = crop(&o.concepts, h, w);
        let free = o.free.as_ref().map(|f| crop(f, h, w));
        let y = crop(&o.y, h, w);
        for (s, &r) in refs.iter().enumerate() {
            out.push(SamplePrediction {
                target: r,
                concepts: unstack(&concepts, s),
                free: free.as_ref().map(|f| unstack(f, s)).unwrap_or_default(),
                y: unstack(&y, s),
            });
        }
    }
    Ok(out)
}
