//! The concept-bottleneck U-Net.
//!
//! ```text
//! x ─ enc0 ─ enc1 ─ enc2 ─ enc3 ─ bottom          (conv-BN-ReLU ×2, 2×2 max pool between)
//!      │      │      │      │       │
//!     dec0 ─ dec1 ─ dec2 ─ dec3 ────┘            (2×2 transposed conv, concat skip, conv-BN-ReLU ×2)
//!      │
//!      ├─ concept head (1×1) ─┐
//!      └─ free head (1×1) ────┴─ combine (1×1, shared weights) ─ ŷ
//! ```
//!
//! Parameters live in one flat vector in declaration order; [`ParamSpec`]
//! names each slice. Each tensor is initialized from its own random stream
//! keyed by `(seed, name)`, so configurations built with the same seed share
//! every same-named, same-shaped tensor.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{self, Act, BnCache};
use super::Real;
use crate::error::{Error, Result};
use crate::synth::stream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Four supervised concept channels plus one free channel.
    Mixed,
    /// Same five channels, none supervised (λ ≡ 0).
    PredictionOnly,
    /// Four supervised concept channels, no free channel.
    PrescriptionOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Mixed, Mode::PredictionOnly, Mode::PrescriptionOnly];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mixed => "mixed",
            Mode::PredictionOnly => "prediction_only",
            Mode::PrescriptionOnly => "prescription_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn n_free(self) -> usize {
        match self {
            Mode::PrescriptionOnly => 0,
            _ => 1,
        }
    }

    /// Whether the first four bottleneck channels are concept-supervised.
    pub fn supervised(self) -> bool {
        self != Mode::PredictionOnly
    }

    /// Labels of the bottleneck channels, in combine-weight order.
    pub fn channel_labels(self) -> Vec<String> {
        match self {
            Mode::PredictionOnly => (1..=5).map(|k| format!("latent-{k}")).collect(),
            _ => {
                let mut v: Vec<String> = crate::concepts::CONCEPT_NAMES.iter().map(|s| s.to_string()).collect();
                if self.n_free() == 1 {
                    v.push("free".into());
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub widths: [usize; 4],
    pub n_prescribed: usize,
    pub mode: Mode,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl NetConfig {
    pub fn new(in_channels: usize, widths: [usize; 4], mode: Mode) -> Self {
        Self {
            in_channels,
            widths,
            n_prescribed: 4,
            mode,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn n_free(&self) -> usize {
        self.mode.n_free()
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.n_prescribed + self.n_free()
    }

    /// Channels of the deepest level.
    pub fn bottom_width(&self) -> usize {
        2 * self.widths[3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.widths.contains(&0) || self.n_prescribed == 0 {
            return Err(Error::Invalid("network channel counts must be positive".into()));
        }
        if !(self.bn_eps > 0.0 && (0.0..=1.0).contains(&self.bn_momentum)) {
            return Err(Error::Invalid("batch norm needs eps > 0 and momentum in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
struct ConvBn {
    cout: usize,
    w: Range<usize>,
    gamma: Range<usize>,
    beta: Range<usize>,
    mean: Range<usize>,
    var: Range<usize>,
}

#[derive(Debug, Clone)]
struct Stage {
    a: ConvBn,
    b: ConvBn,
}

#[derive(Debug, Clone)]
struct Linear {
    w: Range<usize>,
    b: Range<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    enc: Vec<Stage>,
    bottom: Stage,
    /// Indexed by level, 0 = finest.
    up: Vec<Linear>,
    dec: Vec<Stage>,
    concept: Linear,
    free: Option<Linear>,
    combine: Linear,
}

#[derive(Default)]
struct Builder {
    params: Vec<ParamSpec>,
    n_params: usize,
    running: Vec<ParamSpec>,
    n_running: usize,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>) -> Range<usize> {
        let len: usize = shape.iter().product();
        let r = self.n_params..self.n_params + len;
        self.n_params += len;
        self.params.push(ParamSpec {
            name,
            shape,
            range: r.clone(),
        });
        r
    }

    fn buffer(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.n_running..self.n_running + len;
        self.n_running += len;
        self.running.push(ParamSpec {
            name,
            shape: vec![len],
            range: r.clone(),
        });
        r
    }

    fn conv_bn(&mut self, prefix: &str, cin: usize, cout: usize) -> ConvBn {
        ConvBn {
            cout,
            w: self.param(format!("{prefix}.conv.w"), vec![cout, cin, 3, 3]),
            gamma: self.param(format!("{prefix}.bn.gamma"), vec![cout]),
            beta: self.param(format!("{prefix}.bn.beta"), vec![cout]),
            mean: self.buffer(format!("{prefix}.bn.running_mean"), cout),
            var: self.buffer(format!("{prefix}.bn.running_var"), cout),
        }
    }

    fn stage(&mut self, prefix: &str, cin: usize, cout: usize) -> Stage {
        Stage {
            a: self.conv_bn(&format!("{prefix}.a"), cin, cout),
            b: self.conv_bn(&format!("{prefix}.b"), cout, cout),
        }
    }

    fn linear(&mut self, prefix: &str, cin: usize, cout: usize) -> Linear {
        Linear {
            w: self.param(format!("{prefix}.w"), vec![cout, cin]),
            b: self.param(format!("{prefix}.b"), vec![cout]),
        }
    }
}

fn build(cfg: &NetConfig) -> (Layout, Builder) {
    let mut b = Builder::default();
    let w = cfg.widths;
    let mut enc = Vec::new();
    let mut cin = cfg.in_channels;
    for (l, &wl) in w.iter().enumerate() {
        enc.push(b.stage(&format!("enc{l}"), cin, wl));
        cin = wl;
    }
    let bottom = b.stage("bottom", w[3], cfg.bottom_width());
    let mut up = vec![None, None, None, None];
    let mut dec = vec![None, None, None, None];
    let mut below = cfg.bottom_width();
    for l in (0..4).rev() {
        up[l] = Some(Linear {
            w: b.param(format!("up{l}.w"), vec![below, w[l], 2, 2]),
            b: b.param(format!("up{l}.b"), vec![w[l]]),
        });
        dec[l] = Some(b.stage(&format!("dec{l}"), 2 * w[l], w[l]));
        below = w[l];
    }
    let concept = b.linear("head.concept", w[0], cfg.n_prescribed);
    let free = (cfg.n_free() > 0).then(|| b.linear("head.free", w[0], cfg.n_free()));
    let combine = b.linear("combine", cfg.bottleneck_channels(), 1);
    let layout = Layout {
        enc,
        bottom,
        up: up.into_iter().map(Option::unwrap).collect(),
        dec: dec.into_iter().map(Option::unwrap).collect(),
        concept,
        free,
        combine,
    };
    (layout, b)
}

/// Network outputs on the (padded) input grid.
#[derive(Debug, Clone)]
pub struct Output<T> {
    /// `[n_prescribed][N][H][W]`.
    pub concepts: Act<T>,
    /// `[n_free][N][H][W]`, absent without a free head.
    pub free: Option<Act<T>>,
    /// `[1][N][H][W]`.
    pub y: Act<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    bn: BnCache<T>,
    y: Act<T>,
}

#[derive(Debug, Clone)]
struct StageCache<T> {
    a: BlockCache<T>,
    b: BlockCache<T>,
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    x: Act<T>,
    enc: Vec<StageCache<T>>,
    pool_arg: Vec<Vec<u8>>,
    pooled: Vec<Act<T>>,
    bottom: StageCache<T>,
    /// Decoder inputs `[up; skip]`, by level.
    cat: Vec<Option<Act<T>>>,
    dec: Vec<Option<StageCache<T>>>,
    z: Act<T>,
}

impl<T: Real> Cache<T> {
    /// Hash of every ReLU on/off state and max-pool winner. Two parameter
    /// vectors with equal signatures lie in the same linear piece of the
    /// network (batch norm aside), which finite-difference checks rely on.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        let stages = self.enc.iter().chain(std::iter::once(&self.bottom)).chain(self.dec.iter().flatten());
        for s in stages {
            for blk in [&s.a, &s.b] {
                for v in &blk.y.data {
                    eat((*v > T::zero()) as u8);
                }
            }
        }
        for a in &self.pool_arg {
            for &q in a {
                eat(q);
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub cfg: NetConfig,
    pub params: Vec<T>,
    /// Batch-norm running means and variances.
    pub running: Vec<T>,
    specs: Vec<ParamSpec>,
    running_specs: Vec<ParamSpec>,
    layout: Layout,
}

enum Bn<'a, T> {
    Train(&'a mut [T]),
    Eval(&'a [T]),
}

impl<T: PartialEq> PartialEq for Network<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cfg == o.cfg && self.specs == o.specs && self.params == o.params && self.running == o.running
    }
}

impl<T: Real> Network<T> {
    /// Fresh network: He-normal 3×3 kernels, `N(0, 1/fan_in)` for transposed
    /// convolutions and heads, zero biases, unit BN scale.
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (layout, b) = build(&cfg);
        let mut params = vec![T::zero(); b.n_params];
        for s in &b.params {
            let slot = &mut params[s.range.clone()];
            let kind = s.name.rsplit('.').next().unwrap();
            if kind == "gamma" {
                slot.fill(T::one());
                continue;
            }
            if kind != "w" {
                continue;
            }
            let fan_in = if s.name.starts_with("up") { s.shape[0] } else { s.shape[1..].iter().product() };
            let gain = if s.name.contains(".conv.") { 2.0 } else { 1.0 };
            let std = (gain / fan_in as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, &s.name));
            for v in slot {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::of(std * z);
            }
        }
        let mut running = vec![T::zero(); b.n_running];
        for s in &b.running {
            if s.name.ends_with("running_var") {
                running[s.range.clone()].fill(T::one());
            }
        }
        Ok(Self {
            cfg,
            params,
            running,
            specs: b.params,
            running_specs: b.running,
            layout,
        })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn running_specs(&self) -> &[ParamSpec] {
        &self.running_specs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.spec(name).map(|s| &self.params[s.range.clone()])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.spec(name)?.range.clone();
        Some(&mut self.params[r])
    }

    pub fn running_stat(&self, name: &str) -> Option<&[T]> {
        self.running_specs.iter().find(|s| s.name == name).map(|s| &self.running[s.range.clone()])
    }

    /// Combine-layer weights, one per bottleneck channel.
    pub fn combine_weights(&self) -> &[T] {
        &self.params[self.layout.combine.w.clone()]
    }

    /// Same architecture with every tensor converted to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            cfg: self.cfg.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
            running: self.running.iter().map(|v| U::of(v.f64())).collect(),
            specs: self.specs.clone(),
            running_specs: self.running_specs.clone(),
            layout: self.layout.clone(),
        }
    }

    fn check_input(&self, x: &Act<T>) -> Result<()> {
        if x.c != self.cfg.in_channels {
            return Err(Error::Shape(format!("input has {} channels, network expects {}", x.c, self.cfg.in_channels)));
        }
        if x.h % 16 != 0 || x.w % 16 != 0 || x.h == 0 || x.w == 0 {
            return Err(Error::Shape(format!("input {}×{} is not a positive multiple of 16", x.h, x.w)));
        }
        if x.n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass (running batch-norm statistics).
    pub fn forward(&self, x: &Act<T>) -> Result<Output<T>> {
        self.check_input(x)?;
        let (out, _) = run(&self.cfg, &self.layout, &self.params, Bn::Eval(&self.running), x.clone(), false);
        Ok(out)
    }

    /// Training-mode forward pass: batch statistics, running-stat update and
    /// a cache for [`Network::backward`].
    pub fn forward_train(&mut self, x: &Act<T>) -> Result<(Output<T>, Cache<T>)> {
        self.check_input(x)?;
        let (out, cache) = run(&self.cfg, &self.layout, &self.params, Bn::Train(&mut self.running), x.clone(), true);
        Ok((out, cache.expect("training forward keeps a cache")))
    }

    /// Gradients of the loss with respect to every parameter, in declaration
    /// order, given upstream gradients of the three outputs.
    pub fn backward(&self, cache: &Cache<T>, d_concepts: &Act<T>, d_free: Option<&Act<T>>, d_y: &Act<T>) -> Result<Vec<T>> {
        let lay = &self.layout;
        let p = &self.params;
        let mut g = vec![T::zero(); p.len()];
        if !d_y.same_shape(&Act::zeros(1, cache.x.n, cache.x.h, cache.x.w)) {
            return Err(Error::Shape("prediction gradient shape does not match the cache".into()));
        }
        if d_concepts.c != self.cfg.n_prescribed || d_free.map(|d| d.c) != self.layout.free.as_ref().map(|_| self.cfg.n_free()) {
            return Err(Error::Shape("bottleneck gradient channels do not match the network".into()));
        }

        let feat = &cache.dec[0].as_ref().unwrap().b.y;
        let dz = linear_backward(&cache.z, p, &lay.combine, d_y, &mut g, true).unwrap();
        let (mut dc, df) = layers::split_channels(dz, self.cfg.n_prescribed);
        for (a, b) in dc.data.iter_mut().zip(&d_concepts.data) {
            *a = *a + *b;
        }
        let mut dfeat = linear_backward(feat, p, &lay.concept, &dc, &mut g, true).unwrap();
        if let (Some(head), Some(d_ext)) = (&lay.free, d_free) {
            let mut df = df;
            for (a, b) in df.data.iter_mut().zip(&d_ext.data) {
                *a = *a + *b;
            }
            let d2 = linear_backward(feat, p, head, &df, &mut g, true).unwrap();
            for (a, b) in dfeat.data.iter_mut().zip(&d2.data) {
                *a = *a + *b;
            }
        }

        let mut skip_grads: Vec<Option<Act<T>>> = vec![None, None, None, None];
        let mut d = dfeat;
        for l in 0..4 {
            let cat = cache.cat[l].as_ref().unwrap();
            let dcat = stage_backward(cat, cache.dec[l].as_ref().unwrap(), p, &lay.dec[l], d, &mut g, true).unwrap();
            let (dup, dskip) = layers::split_channels(dcat, self.cfg.widths[l]);
            skip_grads[l] = Some(dskip);
            let up_in = if l == 3 { &cache.bottom.b.y } else { &cache.dec[l + 1].as_ref().unwrap().b.y };
            let up = &lay.up[l];
            let (gw, rest) = g.split_at_mut(up.b.start);
            let gw = &mut gw[up.w.clone()];
            let gb = &mut rest[..up.b.len()];
            d = layers::convt2x2_backward(up_in, &p[up.w.clone()], &dup, gw, gb);
        }
        d = stage_backward(&cache.pooled[3], &cache.bottom, p, &lay.bottom, d, &mut g, true).unwrap();
        for l in (0..4).rev() {
            let mut dy = layers::maxpool_backward(&d, &cache.pool_arg[l]);
            let ds = skip_grads[l].take().unwrap();
            for (a, b) in dy.data.iter_mut().zip(&ds.data) {
                *a = *a + *b;
            }
            let input = if l == 0 { &cache.x } else { &cache.pooled[l - 1] };
            match stage_backward(input, &cache.enc[l], p, &lay.enc[l], dy, &mut g, l > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
        Ok(g)
    }
}

fn block_forward<T: Real>(cfg: &NetConfig, x: &Act<T>, p: &[T], cb: &ConvBn, bn: &mut Bn<'_, T>, keep: bool) -> (Act<T>, Option<BnCache<T>>) {
    let mut y = layers::conv3x3_forward(x, &p[cb.w.clone()], cb.cout);
    let (gamma, beta) = (&p[cb.gamma.clone()], &p[cb.beta.clone()]);
    let cache = match bn {
        Bn::Train(run) => {
            let (lo, hi) = run.split_at_mut(cb.var.start);
            let c = layers::batchnorm_train(&mut y, gamma, beta, cfg.bn_eps, cfg.bn_momentum, &mut lo[cb.mean.clone()], &mut hi[..cb.var.len()]);
            keep.then_some(c)
        }
        Bn::Eval(run) => {
            layers::batchnorm_eval(&mut y, gamma, beta, cfg.bn_eps, &run[cb.mean.clone()], &run[cb.var.clone()]);
            None
        }
    };
    layers::relu_inplace(&mut y);
    (y, cache)
}

fn stage_forward<T: Real>(cfg: &NetConfig, x: &Act<T>, p: &[T], st: &Stage, bn: &mut Bn<'_, T>, keep: bool) -> (Act<T>, Option<StageCache<T>>) {
    let (ya, ca) = block_forward(cfg, x, p, &st.a, bn, keep);
    let (yb, cb) = block_forward(cfg, &ya, p, &st.b, bn, keep);
    if keep {
        let cache = StageCache {
            a: BlockCache { bn: ca.unwrap(), y: ya },
            b: BlockCache { bn: cb.unwrap(), y: yb.clone() },
        };
        (yb, Some(cache))
    } else {
        (yb, None)
    }
}

fn run<T: Real>(cfg: &NetConfig, lay: &Layout, p: &[T], mut bn: Bn<'_, T>, x: Act<T>, keep: bool) -> (Output<T>, Option<Cache<T>>) {
    let mut enc = Vec::new();
    let mut pool_arg = Vec::new();
    let mut pooled: Vec<Act<T>> = Vec::new();
    let mut skips = Vec::new();
    for l in 0..4 {
        let input = if l == 0 { &x } else { &pooled[l - 1] };
        let (y, c) = stage_forward(cfg, input, p, &lay.enc[l], &mut bn, keep);
        let (pl, arg) = layers::maxpool_forward(&y);
        enc.extend(c);
        pool_arg.push(arg);
        skips.push(y);
        pooled.push(pl);
    }
    let (mut d, bottom) = stage_forward(cfg, &pooled[3], p, &lay.bottom, &mut bn, keep);
    let mut cat: Vec<Option<Act<T>>> = vec![None, None, None, None];
    let mut dec: Vec<Option<StageCache<T>>> = vec![None, None, None, None];
    for l in (0..4).rev() {
        let up = layers::convt2x2_forward(&d, &p[lay.up[l].w.clone()], &p[lay.up[l].b.clone()]);
        let c = layers::concat(&up, &skips[l]);
        let (y, sc) = stage_forward(cfg, &c, p, &lay.dec[l], &mut bn, keep);
        if keep {
            cat[l] = Some(c);
            dec[l] = sc;
        }
        d = y;
    }
    let concepts = layers::conv1x1_forward(&d, &p[lay.concept.w.clone()], &p[lay.concept.b.clone()]);
    let free = lay.free.as_ref().map(|h| layers::conv1x1_forward(&d, &p[h.w.clone()], &p[h.b.clone()]));
    let z = match &free {
        Some(f) => layers::concat(&concepts, f),
        None => concepts.clone(),
    };
    let y = layers::conv1x1_forward(&z, &p[lay.combine.w.clone()], &p[lay.combine.b.clone()]);
    let out = Output { concepts, free, y };
    let cache = keep.then(|| Cache {
        x,
        enc,
        pool_arg,
        pooled,
        bottom: bottom.unwrap(),
        cat,
        dec,
        z,
    });
    (out, cache)
}

fn linear_backward<T: Real>(x: &Act<T>, p: &[T], lin: &Linear, dy: &Act<T>, g: &mut [T], need_dx: bool) -> Option<Act<T>> {
    let (gw, rest) = g.split_at_mut(lin.b.start);
    layers::conv1x1_backward(x, &p[lin.w.clone()], dy, &mut gw[lin.w.clone()], &mut rest[..lin.b.len()], need_dx)
}

fn block_backward<T: Real>(x: &Act<T>, bc: &BlockCache<T>, p: &[T], cb: &ConvBn, mut dy: Act<T>, g: &mut [T], need_dx: bool) -> Option<Act<T>> {
    layers::relu_backward(&mut dy, &bc.y);
    {
        let (lo, hi) = g.split_at_mut(cb.beta.start);
        layers::batchnorm_backward(&mut dy, &bc.bn, &p[cb.gamma.clone()], &mut lo[cb.gamma.clone()], &mut hi[..cb.beta.len()]);
    }
    layers::conv3x3_backward(x, &p[cb.w.clone()], &dy, &mut g[cb.w.clone()], need_dx)
}

fn stage_backward<T: Real>(x: &Act<T>, sc: &StageCache<T>, p: &[T], st: &Stage, dy: Act<T>, g: &mut [T], need_dx: bool) -> Option<Act<T>> {
    let da = block_backward(&sc.a.y, &sc.b, p, &st.b, dy, g, true).unwrap();
    block_backward(x, &sc.a, p, &st.a, da, g, need_dx)
}

/// Edge-replicating pad of `[C][N][H][W]` to `[C][N][hp][wp]`.
pub fn pad_edge<T: Real>(x: &Act<T>, hp: usize, wp: usize) -> Act<T> {
    if (hp, wp) == (x.h, x.w) {
        return x.clone();
    }
    let mut out = Act::zeros(x.c, x.n, hp, wp);
    for cn in 0..x.c * x.n {
        let src = &x.data[cn * x.h * x.w..(cn + 1) * x.h * x.w];
        let dst = &mut out.data[cn * hp * wp..(cn + 1) * hp * wp];
        for i in 0..hp {
            let si = i.min(x.h - 1);
            for j in 0..wp {
                dst[i * wp + j] = src[si * x.w + j.min(x.w - 1)];
            }
        }
    }
    out
}

/// Top-left `[C][N][h][w]` window of a padded activation.
pub fn crop<T: Real>(x: &Act<T>, h: usize, w: usize) -> Act<T> {
    if (h, w) == (x.h, x.w) {
        return x.clone();
    }
    let mut out = Act::zeros(x.c, x.n, h, w);
    for cn in 0..x.c * x.n {
        for i in 0..h {
            let s = cn * x.h * x.w + i * x.w;
            out.data[(cn * h + i) * w..(cn * h + i + 1) * w].copy_from_slice(&x.data[s..s + w]);
        }
    }
    out
}

/// Smallest multiple of 16 not below `n`.
pub fn padded(n: usize) -> usize {
    n.div_ceil(16) * 16
}
