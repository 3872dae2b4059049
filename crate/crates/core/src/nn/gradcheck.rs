//! Finite-difference gradient checks.
//!
//! Analytic gradients are computed in `f32`; the reference is a central
//! difference of the same function evaluated on an `f64` copy of the point.
//! A probe is discarded (not failed) when either side of the difference lands
//! in a different linear piece, detected through the ReLU/max-pool/ℓ1 sign
//! signature.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{self, Act};
use super::loss::mixed_loss;
use super::unet::{Mode, NetConfig, Network};
use super::Real;
use crate::error::Result;

pub const STEP: f64 = 1e-3;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub probes: Vec<Probe>,
    pub skipped: usize,
}

impl Report {
    pub fn max_rel(&self) -> f64 {
        self.probes.iter().map(|p| p.rel).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel.total_cmp(&b.rel))
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Checks up to `want` coordinates of `point`, visiting them in `order`.
/// `value` returns the objective and a kink signature at an `f64` point;
/// `grad` returns the full analytic gradient at an `f32` point.
pub fn check(
    name: &str,
    point: &[f32],
    order: &[usize],
    want: usize,
    value: &dyn Fn(&[f64]) -> (f64, u64),
    grad: &dyn Fn(&[f32]) -> Vec<f32>,
    label: &dyn Fn(usize) -> String,
) -> Report {
    let g = grad(point);
    let base: Vec<f64> = point.iter().map(|v| *v as f64).collect();
    let (_, sig) = value(&base);
    let mut probes = Vec::new();
    let mut skipped = 0;
    let mut p = base.clone();
    for &i in order {
        if probes.len() == want {
            break;
        }
        p[i] = base[i] + STEP;
        let (vp, sp) = value(&p);
        p[i] = base[i] - STEP;
        let (vm, sm) = value(&p);
        p[i] = base[i];
        if sp != sig || sm != sig {
            skipped += 1;
            continue;
        }
        let numeric = (vp - vm) / (2.0 * STEP);
        let analytic = g[i] as f64;
        probes.push(Probe {
            label: label(i),
            analytic,
            numeric,
            rel: rel_error(analytic, numeric),
        });
    }
    Report {
        name: name.to_string(),
        probes,
        skipped,
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

fn cast<T: Real>(v: &[impl Real]) -> Vec<T> {
    v.iter().map(|x| T::of(x.f64())).collect()
}

fn dot<T: Real>(r: &[f32], y: &[T]) -> f64 {
    r.iter().zip(y).map(|(a, b)| *a as f64 * b.f64()).sum()
}

fn sign_hash<T: Real>(v: &[T]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in v {
        h ^= (*x > T::zero()) as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Coordinate labels for a concatenation of named blocks.
fn block_label(blocks: &[(&str, usize)], mut i: usize) -> String {
    for (name, len) in blocks {
        if i < *len {
            return format!("{name}[{i}]");
        }
        i -= len;
    }
    format!("?[{i}]")
}

const N: usize = 2;

/// Every layer kernel in isolation, each through the scalar projection
/// `Σ r·layer(x)` with a fixed random `r`.
pub fn check_layers(seed: u64, per_layer: usize) -> Vec<Report> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // conv3x3: x [2][N][4][4], w [3][2][3][3]
    {
        let (cin, cout, h, w) = (2, 3, 4, 4);
        let nx = cin * N * h * w;
        let point = [uniform(&mut rng, nx, 1.0), uniform(&mut rng, cout * cin * 9, 0.5)].concat();
        let r = uniform(&mut rng, cout * N * h * w, 1.0);
        let value = |p: &[f64]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            (dot(&r, &layers::conv3x3_forward(&x, &p[nx..], cout).data), 0)
        };
        let grad = |p: &[f32]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            let dy = Act::from_vec(cout, N, h, w, r.clone());
            let mut dw = vec![0.0; p.len() - nx];
            let dx = layers::conv3x3_backward(&x, &p[nx..], &dy, &mut dw, true).unwrap();
            [dx.data, dw].concat()
        };
        let blocks = [("x", nx), ("w", cout * cin * 9)];
        out.push(check("conv3x3", &point, &shuffled(&mut rng, point.len()), per_layer, &value, &grad, &|i| block_label(&blocks, i)));
    }

    // batch norm: x [3][N][3][3], γ, β
    {
        let (c, h, w) = (3, 3, 3);
        let nx = c * N * h * w;
        let gamma: Vec<f32> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
        let point = [uniform(&mut rng, nx, 2.0), gamma, uniform(&mut rng, c, 0.5)].concat();
        let r = uniform(&mut rng, nx, 1.0);
        let value = |p: &[f64]| {
            let mut x = Act::from_vec(c, N, h, w, p[..nx].to_vec());
            let (mut rm, mut rv) = (vec![0.0; c], vec![1.0; c]);
            layers::batchnorm_train(&mut x, &p[nx..nx + c], &p[nx + c..], 1e-5, 0.1, &mut rm, &mut rv);
            (dot(&r, &x.data), 0)
        };
        let grad = |p: &[f32]| {
            let mut x = Act::from_vec(c, N, h, w, p[..nx].to_vec());
            let (mut rm, mut rv) = (vec![0.0; c], vec![1.0; c]);
            let cache = layers::batchnorm_train(&mut x, &p[nx..nx + c], &p[nx + c..], 1e-5, 0.1, &mut rm, &mut rv);
            let mut dy = Act::from_vec(c, N, h, w, r.clone());
            let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
            layers::batchnorm_backward(&mut dy, &cache, &p[nx..nx + c], &mut dg, &mut db);
            [dy.data, dg, db].concat()
        };
        let blocks = [("x", nx), ("gamma", c), ("beta", c)];
        out.push(check("batchnorm", &point, &shuffled(&mut rng, point.len()), per_layer, &value, &grad, &|i| block_label(&blocks, i)));
    }

    // ReLU: x [2][N][4][4]
    {
        let shape = (2, N, 4, 4);
        let nx = shape.0 * shape.1 * shape.2 * shape.3;
        let point = uniform(&mut rng, nx, 1.0);
        let r = uniform(&mut rng, nx, 1.0);
        let value = |p: &[f64]| {
            let mut x = Act::from_vec(shape.0, shape.1, shape.2, shape.3, p.to_vec());
            layers::relu_inplace(&mut x);
            (dot(&r, &x.data), sign_hash(p))
        };
        let grad = |p: &[f32]| {
            let mut y = Act::from_vec(shape.0, shape.1, shape.2, shape.3, p.to_vec());
            layers::relu_inplace(&mut y);
            let mut dy = Act::from_vec(shape.0, shape.1, shape.2, shape.3, r.clone());
            layers::relu_backward(&mut dy, &y);
            dy.data
        };
        out.push(check("relu", &point, &shuffled(&mut rng, nx), per_layer, &value, &grad, &|i| format!("x[{i}]")));
    }

    // max pool: x [2][N][4][4]
    {
        let (c, h, w) = (2, 4, 4);
        let nx = c * N * h * w;
        let point = uniform(&mut rng, nx, 1.0);
        let r = uniform(&mut rng, nx / 4, 1.0);
        let value = |p: &[f64]| {
            let (y, arg) = layers::maxpool_forward(&Act::from_vec(c, N, h, w, p.to_vec()));
            let mut s: u64 = 0xcbf2_9ce4_8422_2325;
            for a in arg {
                s = (s ^ a as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
            (dot(&r, &y.data), s)
        };
        let grad = |p: &[f32]| {
            let (_, arg) = layers::maxpool_forward(&Act::from_vec(c, N, h, w, p.to_vec()));
            layers::maxpool_backward(&Act::from_vec(c, N, h / 2, w / 2, r.clone()), &arg).data
        };
        out.push(check("maxpool", &point, &shuffled(&mut rng, nx), per_layer, &value, &grad, &|i| format!("x[{i}]")));
    }

    // transposed conv: x [3][N][2][2], w [3][2][2][2], b [2]
    {
        let (cin, cout, h, w) = (3, 2, 2, 2);
        let nx = cin * N * h * w;
        let nw = cin * cout * 4;
        let point = [uniform(&mut rng, nx, 1.0), uniform(&mut rng, nw, 0.5), uniform(&mut rng, cout, 0.5)].concat();
        let r = uniform(&mut rng, cout * N * 4 * h * w, 1.0);
        let value = |p: &[f64]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            (dot(&r, &layers::convt2x2_forward(&x, &p[nx..nx + nw], &p[nx + nw..]).data), 0)
        };
        let grad = |p: &[f32]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            let dy = Act::from_vec(cout, N, 2 * h, 2 * w, r.clone());
            let (mut dw, mut db) = (vec![0.0; nw], vec![0.0; cout]);
            let dx = layers::convt2x2_backward(&x, &p[nx..nx + nw], &dy, &mut dw, &mut db);
            [dx.data, dw, db].concat()
        };
        let blocks = [("x", nx), ("w", nw), ("b", cout)];
        out.push(check("convt2x2", &point, &shuffled(&mut rng, point.len()), per_layer, &value, &grad, &|i| block_label(&blocks, i)));
    }

    // 1×1 conv: x [4][N][3][3], w [2][4], b [2]
    {
        let (cin, cout, h, w) = (4, 2, 3, 3);
        let nx = cin * N * h * w;
        let nw = cin * cout;
        let point = [uniform(&mut rng, nx, 1.0), uniform(&mut rng, nw, 0.5), uniform(&mut rng, cout, 0.5)].concat();
        let r = uniform(&mut rng, cout * N * h * w, 1.0);
        let value = |p: &[f64]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            (dot(&r, &layers::conv1x1_forward(&x, &p[nx..nx + nw], &p[nx + nw..]).data), 0)
        };
        let grad = |p: &[f32]| {
            let x = Act::from_vec(cin, N, h, w, p[..nx].to_vec());
            let dy = Act::from_vec(cout, N, h, w, r.clone());
            let (mut dw, mut db) = (vec![0.0; nw], vec![0.0; cout]);
            let dx = layers::conv1x1_backward(&x, &p[nx..nx + nw], &dy, &mut dw, &mut db, true).unwrap();
            [dx.data, dw, db].concat()
        };
        let blocks = [("x", nx), ("w", nw), ("b", cout)];
        out.push(check("conv1x1", &point, &shuffled(&mut rng, point.len()), per_layer, &value, &grad, &|i| block_label(&blocks, i)));
    }

    // mixed ℓ1 loss: Ĉ [4][N][3][3], ŷ [1][N][3][3]
    {
        let (h, w) = (3, 3);
        let nc = 4 * N * h * w;
        let ny = N * h * w;
        let point = [uniform(&mut rng, nc, 1.0), uniform(&mut rng, ny, 1.0)].concat();
        let c_t = uniform(&mut rng, nc, 1.0);
        let y_t = uniform(&mut rng, ny, 1.0);
        let mask: Vec<bool> = (0..h * w).map(|k| k != 4).collect();
        fn eval<T: Real>(p: &[T], c_t: &[f32], y_t: &[f32], mask: &[bool], h: usize, w: usize) -> (f64, u64, Vec<T>) {
            let nc = 4 * N * h * w;
            let l = mixed_loss(
                &Act::from_vec(4, N, h, w, p[..nc].to_vec()),
                &Act::from_vec(1, N, h, w, p[nc..].to_vec()),
                &Act::from_vec(4, N, h, w, cast(c_t)),
                &Act::from_vec(1, N, h, w, cast(y_t)),
                mask,
                0.6,
            )
            .unwrap();
            (l.parts.combined, l.signature, [l.d_concepts.data, l.d_y.data].concat())
        }
        let value = |p: &[f64]| {
            let (v, s, _) = eval(p, &c_t, &y_t, &mask, h, w);
            (v, s)
        };
        let grad = |p: &[f32]| eval(p, &c_t, &y_t, &mask, h, w).2;
        let blocks = [("c_hat", nc), ("y_hat", ny)];
        out.push(check("l1_loss", &point, &shuffled(&mut rng, point.len()), per_layer, &value, &grad, &|i| block_label(&blocks, i)));
    }
    out
}

/// Configuration used for the composed-network check.
pub fn tiny_config(mode: Mode) -> NetConfig {
    NetConfig::new(3, [2, 3, 3, 4], mode)
}

/// Whole-network check of the mixed loss (λ = 0.5) with respect to the
/// parameters, on a random 2×32×32 batch. Every tensor gets at least one
/// probe; the remaining probes are drawn at random.
pub fn check_network(cfg: &NetConfig, seed: u64, probes: usize) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (32, 32);
    let mut net = Network::<f32>::new(cfg.clone(), seed)?;
    // Nonzero biases and BN shifts so every path carries signal.
    for v in net.params.iter_mut().filter(|v| **v == 0.0) {
        *v = rng.random_range(-0.1..0.1);
    }
    let x = Act::from_vec(cfg.in_channels, N, h, w, uniform(&mut rng, cfg.in_channels * N * h * w, 1.0));
    let c_t = Act::from_vec(cfg.n_prescribed, N, h, w, uniform(&mut rng, cfg.n_prescribed * N * h * w, 1.0));
    let y_t = Act::from_vec(1, N, h, w, uniform(&mut rng, N * h * w, 1.0));
    let mask: Vec<bool> = (0..h * w).map(|k| (k / w + k % w) % 7 != 0).collect();
    let lambda = if cfg.mode.supervised() { 0.5 } else { 0.0 };

    let shadow = net.cast::<f64>();
    let (x64, c64, y64) = (
        Act::from_vec(x.c, N, h, w, cast(&x.data)),
        Act::from_vec(c_t.c, N, h, w, cast(&c_t.data)),
        Act::from_vec(1, N, h, w, cast(&y_t.data)),
    );
    let value = |p: &[f64]| {
        let mut n = shadow.clone();
        n.params.copy_from_slice(p);
        let (out, cache) = n.forward_train(&x64).unwrap();
        let l = mixed_loss(&out.concepts, &out.y, &c64, &y64, &mask, lambda).unwrap();
        (l.parts.combined, cache.kink_signature() ^ l.signature)
    };
    let template = net.clone();
    let grad = |p: &[f32]| {
        let mut n = template.clone();
        n.params.copy_from_slice(p);
        let (out, cache) = n.forward_train(&x).unwrap();
        let l = mixed_loss(&out.concepts, &out.y, &c_t, &y_t, &mask, lambda).unwrap();
        let d_free = out.free.as_ref().map(|f| Act::zeros(f.c, f.n, f.h, f.w));
        n.backward(&cache, &l.d_concepts, d_free.as_ref(), &l.d_y).unwrap()
    };

    // One random element per tensor first, then the rest in random order.
    let mut order: Vec<usize> = net.specs().iter().map(|s| rng.random_range(s.range.clone())).collect();
    let first = order.clone();
    order.extend(shuffled(&mut rng, net.n_params()).into_iter().filter(|i| !first.contains(i)));
    let specs = net.specs().to_vec();
    let label = |i: usize| {
        let s = specs.iter().find(|s| s.range.contains(&i)).unwrap();
        format!("{}[{}]", s.name, i - s.range.start)
    };
    Ok(check("network", &net.params, &order, probes, &value, &grad, &label))
}
