//! Layer kernels on `[C][N][H][W]` activations.
//!
//! Backward functions overwrite (never accumulate into) parameter gradients;
//! every parameter is used exactly once per forward pass. Subgradients at
//! kinks are fixed: ReLU passes nothing at 0 and max pooling routes to the
//! first maximum in row-major window order.

use super::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            n,
            h,
            w,
            data: vec![T::zero(); c * n * h * w],
        }
    }

    pub fn from_vec(c: usize, n: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "activation shape mismatch");
        Self { c, n, h, w, data }
    }

    /// Elements per channel (`N·H·W`).
    pub fn plane(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn channel(&self, k: usize) -> &[T] {
        let p = self.plane();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [T] {
        let p = self.plane();
        &mut self.data[k * p..(k + 1) * p]
    }

    pub fn same_shape(&self, o: &Self) -> bool {
        (self.c, self.n, self.h, self.w) == (o.c, o.n, o.h, o.w)
    }
}

// A 3×3 convolution runs on images zero-padded by one cell, flattened to
// `[C][N·(H+2)·(W+2)]`. On that layout every tap is a constant index shift,
// so one product `Z = W_taps · X_pad` (`W_taps` is `[9·C_out][C_in]`) gives
// all nine tap responses and the output is a shifted sum of `Z` rows. This
// keeps every matrix product at least `9·C_out` wide and avoids an im2col
// buffer nine times the input.

fn pad1<T: Real>(x: &Act<T>) -> Vec<T> {
    let (hp, wp) = (x.h + 2, x.w + 2);
    let mut out = vec![T::zero(); x.c * x.n * hp * wp];
    for cn in 0..x.c * x.n {
        for i in 0..x.h {
            let s = (cn * x.h + i) * x.w;
            let d = (cn * hp + i + 1) * wp + 1;
            out[d..d + x.w].copy_from_slice(&x.data[s..s + x.w]);
        }
    }
    out
}

/// Flat shift of tap `k` (row-major in the 3×3 window) on the padded layout.
fn tap_offset(k: usize, wp: usize) -> isize {
    (k / 3) as isize * wp as isize + (k % 3) as isize - wp as isize - 1
}

/// `[C_out][C_in][3][3]` → `[9][C_out][C_in]`.
fn taps_major<T: Real>(w: &[T], cout: usize, cin: usize) -> Vec<T> {
    let mut t = vec![T::zero(); w.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..9 {
                t[(k * cout + co) * cin + ci] = w[(co * cin + ci) * 9 + k];
            }
        }
    }
    t
}

/// 3×3 convolution, stride 1, zero padding 1, no bias. `w` is
/// `[C_out][C_in][3][3]`.
pub fn conv3x3_forward<T: Real>(x: &Act<T>, w: &[T], cout: usize) -> Act<T> {
    assert_eq!(w.len(), cout * x.c * 9, "conv3x3 weight shape");
    let (hp, wp) = (x.h + 2, x.w + 2);
    let pp = x.n * hp * wp;
    let xp = pad1(x);
    let wt = taps_major(w, cout, x.c);
    let mut z = vec![T::zero(); 9 * cout * pp];
    T::gemm(false, false, 9 * cout, pp, x.c, T::one(), &wt, &xp, T::zero(), &mut z);
    let mut y = Act::zeros(cout, x.n, x.h, x.w);
    for co in 0..cout {
        for n in 0..x.n {
            for i in 0..x.h {
                let q = (n * hp + i + 1) * wp + 1;
                let dst = &mut y.data[((co * x.n + n) * x.h + i) * x.w..][..x.w];
                for k in 0..9 {
                    let r = ((k * cout + co) * pp) as isize + q as isize + tap_offset(k, wp);
                    let src = &z[r as usize..r as usize + x.w];
                    dst.iter_mut().zip(src).for_each(|(a, v)| *a = *a + *v);
                }
            }
        }
    }
    y
}

/// Writes `dL/dw` into `dw`; returns `dL/dx` when `need_dx`.
pub fn conv3x3_backward<T: Real>(x: &Act<T>, w: &[T], dy: &Act<T>, dw: &mut [T], need_dx: bool) -> Option<Act<T>> {
    let (cout, cin) = (dy.c, x.c);
    let (hp, wp) = (x.h + 2, x.w + 2);
    let pp = x.n * hp * wp;
    // dys[k][co] is dy placed where tap k reads its input.
    let mut dys = vec![T::zero(); 9 * cout * pp];
    for k in 0..9 {
        let off = tap_offset(k, wp);
        for co in 0..cout {
            for n in 0..x.n {
                for i in 0..x.h {
                    let r = ((k * cout + co) * pp) as isize + ((n * hp + i + 1) * wp + 1) as isize + off;
                    let src = &dy.data[((co * x.n + n) * x.h + i) * x.w..][..x.w];
                    dys[r as usize..r as usize + x.w].copy_from_slice(src);
                }
            }
        }
    }
    let xp = pad1(x);
    let mut dwt = vec![T::zero(); 9 * cout * cin];
    T::gemm(false, true, 9 * cout, cin, pp, T::one(), &dys, &xp, T::zero(), &mut dwt);
    drop(xp);
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..9 {
                dw[(co * cin + ci) * 9 + k] = dwt[(k * cout + co) * cin + ci];
            }
        }
    }
    need_dx.then(|| {
        let wt = taps_major(w, cout, cin);
        let mut dxp = vec![T::zero(); cin * pp];
        T::gemm(true, false, cin, pp, 9 * cout, T::one(), &wt, &dys, T::zero(), &mut dxp);
        let mut dx = Act::zeros(cin, x.n, x.h, x.w);
        for cn in 0..cin * x.n {
            for i in 0..x.h {
                let s = (cn * hp + i + 1) * wp + 1;
                dx.data[(cn * x.h + i) * x.w..][..x.w].copy_from_slice(&dxp[s..s + x.w]);
            }
        }
        dx
    })
}

/// Saved batch-norm state for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Batch statistics per channel: mean and biased variance over `N·H·W`,
/// accumulated in `f64`.
fn channel_moments<T: Real>(x: &[T]) -> (f64, f64) {
    let m = x.len() as f64;
    let mean = x.iter().map(|v| v.f64()).sum::<f64>() / m;
    let var = x.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

/// Training-mode batch norm in place. Running statistics are updated with
/// `r ← (1−momentum)·r + momentum·batch` using the unbiased batch variance.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_train<T: Real>(
    x: &mut Act<T>,
    gamma: &[T],
    beta: &[T],
    eps: f64,
    momentum: f64,
    running_mean: &mut [T],
    running_var: &mut [T],
) -> BnCache<T> {
    let p = x.plane();
    let mut xhat = vec![T::zero(); x.data.len()];
    let mut inv_std = vec![T::zero(); x.c];
    for k in 0..x.c {
        let ch = x.channel_mut(k);
        let (mean, var) = channel_moments(ch);
        let is = 1.0 / (var + eps).sqrt();
        inv_std[k] = T::of(is);
        let unbiased = if p > 1 { var * p as f64 / (p - 1) as f64 } else { var };
        running_mean[k] = T::of((1.0 - momentum) * running_mean[k].f64() + momentum * mean);
        running_var[k] = T::of((1.0 - momentum) * running_var[k].f64() + momentum * unbiased);
        let (g, b) = (gamma[k], beta[k]);
        let (mean_t, is_t) = (T::of(mean), T::of(is));
        for (v, xh) in ch.iter_mut().zip(&mut xhat[k * p..(k + 1) * p]) {
            *xh = (*v - mean_t) * is_t;
            *v = g * *xh + b;
        }
    }
    BnCache { xhat, inv_std }
}

pub fn batchnorm_eval<T: Real>(x: &mut Act<T>, gamma: &[T], beta: &[T], eps: f64, running_mean: &[T], running_var: &[T]) {
    for k in 0..x.c {
        let is = T::of(1.0 / (running_var[k].f64() + eps).sqrt());
        let (m, g, b) = (running_mean[k], gamma[k], beta[k]);
        for v in x.channel_mut(k) {
            *v = g * (*v - m) * is + b;
        }
    }
}

/// In place: `dy` becomes `dL/dx`. Writes `dγ`, `dβ`.
pub fn batchnorm_backward<T: Real>(dy: &mut Act<T>, cache: &BnCache<T>, gamma: &[T], dgamma: &mut [T], dbeta: &mut [T]) {
    let p = dy.plane();
    let m = p as f64;
    for k in 0..dy.c {
        let xh = &cache.xhat[k * p..(k + 1) * p];
        let d = dy.channel_mut(k);
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for (g, x) in d.iter().zip(xh) {
            sum_d += g.f64();
            sum_dx += g.f64() * x.f64();
        }
        dgamma[k] = T::of(sum_dx);
        dbeta[k] = T::of(sum_d);
        let scale = T::of(gamma[k].f64() * cache.inv_std[k].f64() / m);
        let (sd, sdx, mt) = (T::of(sum_d), T::of(sum_dx), T::of(m));
        for (g, x) in d.iter_mut().zip(xh) {
            *g = scale * (mt * *g - sd - *x * sdx);
        }
    }
}

pub fn relu_inplace<T: Real>(x: &mut Act<T>) {
    for v in &mut x.data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Masks `dy` where the ReLU output `y` is not positive.
pub fn relu_backward<T: Real>(dy: &mut Act<T>, y: &Act<T>) {
    for (g, v) in dy.data.iter_mut().zip(&y.data) {
        if !(*v > T::zero()) {
            *g = T::zero();
        }
    }
}

/// 2×2 max pooling, stride 2. Returns the pooled map and the winning
/// position (0..4, row-major within the window) of every output.
pub fn maxpool_forward<T: Real>(x: &Act<T>) -> (Act<T>, Vec<u8>) {
    assert!(x.h % 2 == 0 && x.w % 2 == 0, "maxpool needs even spatial size");
    let (ho, wo) = (x.h / 2, x.w / 2);
    let mut y = Act::zeros(x.c, x.n, ho, wo);
    let mut arg = vec![0u8; y.data.len()];
    let mut o = 0;
    for cn in 0..x.c * x.n {
        let src = &x.data[cn * x.h * x.w..(cn + 1) * x.h * x.w];
        for i in 0..ho {
            for j in 0..wo {
                let cand = [
                    src[2 * i * x.w + 2 * j],
                    src[2 * i * x.w + 2 * j + 1],
                    src[(2 * i + 1) * x.w + 2 * j],
                    src[(2 * i + 1) * x.w + 2 * j + 1],
                ];
                let mut best = 0;
                for q in 1..4 {
                    if cand[q] > cand[best] {
                        best = q;
                    }
                }
                y.data[o] = cand[best];
                arg[o] = best as u8;
                o += 1;
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward<T: Real>(dy: &Act<T>, arg: &[u8]) -> Act<T> {
    let (h, w) = (dy.h * 2, dy.w * 2);
    let mut dx = Act::zeros(dy.c, dy.n, h, w);
    let mut o = 0;
    for cn in 0..dy.c * dy.n {
        let dst = &mut dx.data[cn * h * w..(cn + 1) * h * w];
        for i in 0..dy.h {
            for j in 0..dy.w {
                let q = arg[o] as usize;
                dst[(2 * i + q / 2) * w + 2 * j + q % 2] = dy.data[o];
                o += 1;
            }
        }
    }
    dx
}

/// 2×2 transposed convolution, stride 2, with bias. `w` is
/// `[C_in][C_out][2][2]`.
pub fn convt2x2_forward<T: Real>(x: &Act<T>, w: &[T], b: &[T]) -> Act<T> {
    let cout = b.len();
    assert_eq!(w.len(), x.c * cout * 4, "convT weight shape");
    let p = x.plane();
    let mut tmp = vec![T::zero(); cout * 4 * p];
    T::gemm(true, false, cout * 4, p, x.c, T::one(), w, &x.data, T::zero(), &mut tmp);
    let (h, wd) = (x.h, x.w);
    let mut y = Act::zeros(cout, x.n, 2 * h, 2 * wd);
    for co in 0..cout {
        let bias = b[co];
        let dst = y.channel_mut(co);
        for q in 0..4 {
            let (a, bb) = (q / 2, q % 2);
            let src = &tmp[(co * 4 + q) * p..(co * 4 + q + 1) * p];
            for n in 0..x.n {
                for i in 0..h {
                    for j in 0..wd {
                        dst[n * 4 * h * wd + (2 * i + a) * 2 * wd + 2 * j + bb] = src[n * h * wd + i * wd + j] + bias;
                    }
                }
            }
        }
    }
    y
}

pub fn convt2x2_backward<T: Real>(x: &Act<T>, w: &[T], dy: &Act<T>, dw: &mut [T], db: &mut [T]) -> Act<T> {
    let cout = dy.c;
    let p = x.plane();
    let (h, wd) = (x.h, x.w);
    let mut dtmp = vec![T::zero(); cout * 4 * p];
    for co in 0..cout {
        let src = dy.channel(co);
        db[co] = T::of(src.iter().map(|v| v.f64()).sum());
        for q in 0..4 {
            let (a, bb) = (q / 2, q % 2);
            let dst = &mut dtmp[(co * 4 + q) * p..(co * 4 + q + 1) * p];
            for n in 0..x.n {
                for i in 0..h {
                    for j in 0..wd {
                        dst[n * h * wd + i * wd + j] = src[n * 4 * h * wd + (2 * i + a) * 2 * wd + 2 * j + bb];
                    }
                }
            }
        }
    }
    T::gemm(false, true, x.c, cout * 4, p, T::one(), &x.data, &dtmp, T::zero(), dw);
    let mut dx = Act::zeros(x.c, x.n, h, wd);
    T::gemm(false, false, x.c, p, cout * 4, T::one(), w, &dtmp, T::zero(), &mut dx.data);
    dx
}

/// 1×1 convolution with bias. `w` is `[C_out][C_in]`.
pub fn conv1x1_forward<T: Real>(x: &Act<T>, w: &[T], b: &[T]) -> Act<T> {
    let cout = b.len();
    assert_eq!(w.len(), cout * x.c, "conv1x1 weight shape");
    let p = x.plane();
    let mut y = Act::zeros(cout, x.n, x.h, x.w);
    for co in 0..cout {
        y.channel_mut(co).fill(b[co]);
    }
    T::gemm(false, false, cout, p, x.c, T::one(), w, &x.data, T::one(), &mut y.data);
    y
}

pub fn conv1x1_backward<T: Real>(x: &Act<T>, w: &[T], dy: &Act<T>, dw: &mut [T], db: &mut [T], need_dx: bool) -> Option<Act<T>> {
    let cout = dy.c;
    let p = x.plane();
    for co in 0..cout {
        db[co] = T::of(dy.channel(co).iter().map(|v| v.f64()).sum());
    }
    T::gemm(false, true, cout, x.c, p, T::one(), &dy.data, &x.data, T::zero(), dw);
    need_dx.then(|| {
        let mut dx = Act::zeros(x.c, x.n, x.h, x.w);
        T::gemm(true, false, x.c, p, cout, T::one(), w, &dy.data, T::zero(), &mut dx.data);
        dx
    })
}

/// Channel concatenation `[a; b]`.
pub fn concat<T: Real>(a: &Act<T>, b: &Act<T>) -> Act<T> {
    assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w), "concat shape mismatch");
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Act::from_vec(a.c + b.c, a.n, a.h, a.w, data)
}

/// Inverse of [`concat`]: the first `ca` channels and the rest.
pub fn split_channels<T: Real>(d: Act<T>, ca: usize) -> (Act<T>, Act<T>) {
    let p = d.plane();
    let (n, h, w, c) = (d.n, d.h, d.w, d.c);
    let mut data = d.data;
    let rest = data.split_off(ca * p);
    (Act::from_vec(ca, n, h, w, data), Act::from_vec(c - ca, n, h, w, rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_act(rng: &mut ChaCha8Rng, c: usize, n: usize, h: usize, w: usize) -> Act<f64> {
        Act::from_vec(c, n, h, w, (0..c * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn at(a: &Act<f64>, c: usize, n: usize, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= a.h as isize || j >= a.w as isize {
            return 0.0;
        }
        a.data[((c * a.n + n) * a.h + i as usize) * a.w + j as usize]
    }

    #[test]
    fn conv3x3_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_act(&mut rng, 3, 2, 4, 5);
        let w = rand_vec(&mut rng, 2 * 3 * 9);
        let y = conv3x3_forward(&x, &w, 2);
        for co in 0..2 {
            for n in 0..2 {
                for i in 0..4 {
                    for j in 0..5 {
                        let mut s = 0.0;
                        for ci in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    s += w[((co * 3 + ci) * 3 + ky) * 3 + kx] * at(&x, ci, n, i + ky as isize - 1, j + kx as isize - 1);
                                }
                            }
                        }
                        assert!((at(&y, co, n, i, j) - s).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn convt_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_act(&mut rng, 3, 2, 2, 3);
        let w = rand_vec(&mut rng, 3 * 2 * 4);
        let b = rand_vec(&mut rng, 2);
        let y = convt2x2_forward(&x, &w, &b);
        assert_eq!((y.h, y.w), (4, 6));
        for co in 0..2 {
            for n in 0..2 {
                for i in 0..4 {
                    for j in 0..6 {
                        let mut s = b[co];
                        for ci in 0..3 {
                            s += w[((ci * 2 + co) * 2 + i % 2) * 2 + j % 2] * at(&x, ci, n, (i / 2) as isize, (j / 2) as isize);
                        }
                        assert!((at(&y, co, n, i as isize, j as isize) - s).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_first_maximum() {
        let x = Act::from_vec(1, 1, 2, 4, vec![1.0, 3.0, 2.0, 2.0, 3.0, 0.0, 2.0, 2.0]);
        let (y, arg) = maxpool_forward(&x);
        assert_eq!(y.data, vec![3.0, 2.0]);
        assert_eq!(arg, vec![1, 0]);
        let dx = maxpool_backward(&Act::from_vec(1, 1, 1, 2, vec![5.0, 7.0]), &arg);
        assert_eq!(dx.data, vec![0.0, 5.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = rand_act(&mut rng, 2, 3, 2, 2);
        let mut rm = vec![0.0; 2];
        let mut rv = vec![1.0; 2];
        batchnorm_train(&mut x, &[1.0, 1.0], &[0.0, 0.0], 0.0, 0.1, &mut rm, &mut rv);
        for k in 0..2 {
            let (m, v) = channel_moments(x.channel(k));
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    /// Central differences of `Σ r·f(θ)` against the analytic gradient.
    fn check(theta: &mut [f64], grad: &[f64], f: &dyn Fn(&[f64]) -> f64) {
        let h = 1e-6;
        for i in 0..theta.len() {
            let t0 = theta[i];
            theta[i] = t0 + h;
            let lp = f(theta);
            theta[i] = t0 - h;
            let lm = f(theta);
            theta[i] = t0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(err < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv3x3_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_act(&mut rng, 2, 2, 3, 4);
        let w = rand_vec(&mut rng, 3 * 2 * 9);
        let r = rand_act(&mut rng, 3, 2, 3, 4);
        let mut dw = vec![0.0; w.len()];
        let dx = conv3x3_backward(&x, &w, &r, &mut dw, true).unwrap();
        check(&mut w.clone(), &dw, &|w| dot(&conv3x3_forward(&x, w, 3).data, &r.data));
        let mut xs = x.data.clone();
        check(&mut xs, &dx.data, &|xs| {
            dot(&conv3x3_forward(&Act::from_vec(2, 2, 3, 4, xs.to_vec()), &w, 3).data, &r.data)
        });
    }

    #[test]
    fn batchnorm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_act(&mut rng, 2, 2, 2, 3);
        let gb = rand_vec(&mut rng, 4);
        let r = rand_act(&mut rng, 2, 2, 2, 3);
        let run = |x: &Act<f64>, gb: &[f64]| {
            let mut y = x.clone();
            let (mut rm, mut rv) = (vec![0.0; 2], vec![1.0; 2]);
            let c = batchnorm_train(&mut y, &gb[..2], &gb[2..], 1e-5, 0.1, &mut rm, &mut rv);
            (y, c)
        };
        let (_, cache) = run(&x, &gb);
        let mut d = r.clone();
        let (mut dg, mut db) = (vec![0.0; 2], vec![0.0; 2]);
        batchnorm_backward(&mut d, &cache, &gb[..2], &mut dg, &mut db);
        let mut grad_gb = dg.clone();
        grad_gb.extend(&db);
        check(&mut gb.clone(), &grad_gb, &|gb| dot(&run(&x, gb).0.data, &r.data));
        check(&mut x.data.clone(), &d.data, &|xs| {
            dot(&run(&Act::from_vec(2, 2, 2, 3, xs.to_vec()), &gb).0.data, &r.data)
        });
    }

    #[test]
    fn convt_and_conv1x1_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_act(&mut rng, 3, 2, 2, 2);
        let wb = rand_vec(&mut rng, 3 * 2 * 4 + 2);
        let r = rand_act(&mut rng, 2, 2, 4, 4);
        let (mut dw, mut db) = (vec![0.0; 24], vec![0.0; 2]);
        let dx = convt2x2_backward(&x, &wb[..24], &r, &mut dw, &mut db);
        dw.extend(&db);
        check(&mut wb.clone(), &dw, &|wb| dot(&convt2x2_forward(&x, &wb[..24], &wb[24..]).data, &r.data));
        check(&mut x.data.clone(), &dx.data, &|xs| {
            dot(&convt2x2_forward(&Act::from_vec(3, 2, 2, 2, xs.to_vec()), &wb[..24], &wb[24..]).data, &r.data)
        });

        let wb = rand_vec(&mut rng, 2 * 3 + 2);
        let r = rand_act(&mut rng, 2, 2, 2, 2);
        let (mut dw, mut db) = (vec![0.0; 6], vec![0.0; 2]);
        let dx = conv1x1_backward(&x, &wb[..6], &r, &mut dw, &mut db, true).unwrap();
        dw.extend(&db);
        check(&mut wb.clone(), &dw, &|wb| dot(&conv1x1_forward(&x, &wb[..6], &wb[6..]).data, &r.data));
        check(&mut x.data.clone(), &dx.data, &|xs| {
            dot(&conv1x1_forward(&Act::from_vec(3, 2, 2, 2, xs.to_vec()), &wb[..6], &wb[6..]).data, &r.data)
        });
    }

    #[test]
    fn relu_and_maxpool_gradients_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Values bounded away from 0 and from each other.
        let x = Act::from_vec(2, 1, 2, 4, (0..16).map(|k| (k as f64 - 7.5) * 0.1 + rng.random_range(-0.01..0.01)).collect());
        let r = rand_act(&mut rng, 2, 1, 1, 2);
        let (_, arg) = maxpool_forward(&x);
        let dx = maxpool_backward(&r, &arg);
        check(&mut x.data.clone(), &dx.data, &|xs| {
            dot(&maxpool_forward(&Act::from_vec(2, 1, 2, 4, xs.to_vec())).0.data, &r.data)
        });
        let r = rand_act(&mut rng, 2, 1, 2, 4);
        let mut y = x.clone();
        relu_inplace(&mut y);
        let mut d = r.clone();
        relu_backward(&mut d, &y);
        check(&mut x.data.clone(), &d.data, &|xs| {
            let mut y = Act::from_vec(2, 1, 2, 4, xs.to_vec());
            relu_inplace(&mut y);
            dot(&y.data, &r.data)
        });
    }

    #[test]
    fn concat_split_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = rand_act(&mut rng, 2, 2, 2, 2);
        let b = rand_act(&mut rng, 3, 2, 2, 2);
        let (a2, b2) = split_channels(concat(&a, &b), 2);
        assert_eq!((a2, b2), (a, b));
    }
}
