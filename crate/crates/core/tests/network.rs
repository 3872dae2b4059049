use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlhc_cbm::nn::{Act, Mode, NetConfig, Network};

/// `[c][i][j]` for one sample.
type Map = Vec<Vec<Vec<f64>>>;

fn conv3(x: &Map, w: &[f64], cout: usize) -> Map {
    let (cin, h, wd) = (x.len(), x[0].len(), x[0][0].len());
    let px = |c: usize, i: isize, j: isize| if i < 0 || j < 0 || i >= h as isize || j >= wd as isize { 0.0 } else { x[c][i as usize][j as usize] };
    (0..cout)
        .map(|o| {
            (0..h)
                .map(|i| {
                    (0..wd)
                        .map(|j| {
                            let mut s = 0.0;
                            for c in 0..cin {
                                for a in 0..3 {
                                    for b in 0..3 {
                                        s += w[((o * cin + c) * 3 + a) * 3 + b] * px(c, i as isize + a as isize - 1, j as isize + b as isize - 1);
                                    }
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn bn_relu(x: Map, net: &Network<f64>, prefix: &str) -> Map {
    let g = net.param(&format!("{prefix}.bn.gamma")).unwrap();
    let b = net.param(&format!("{prefix}.bn.beta")).unwrap();
    let m = net.running_stat(&format!("{prefix}.bn.running_mean")).unwrap();
    let v = net.running_stat(&format!("{prefix}.bn.running_var")).unwrap();
    let eps = net.cfg.bn_eps;
    x.into_iter()
        .enumerate()
        .map(|(c, plane)| {
            plane
                .into_iter()
                .map(|row| row.into_iter().map(|z| (g[c] * (z - m[c]) / (v[c] + eps).sqrt() + b[c]).max(0.0)).collect())
                .collect()
        })
        .collect()
}

fn stage(x: &Map, net: &Network<f64>, prefix: &str) -> Map {
    let mut y = x.clone();
    for half in ["a", "b"] {
        let p = format!("{prefix}.{half}");
        let w = net.param(&format!("{p}.conv.w")).unwrap();
        let cout = net.spec(&format!("{p}.conv.w")).unwrap().shape[0];
        y = bn_relu(conv3(&y, w, cout), net, &p);
    }
    y
}

fn pool(x: &Map) -> Map {
    x.iter()
        .map(|p| {
            (0..p.len() / 2)
                .map(|i| (0..p[0].len() / 2).map(|j| p[2 * i][2 * j].max(p[2 * i][2 * j + 1]).max(p[2 * i + 1][2 * j]).max(p[2 * i + 1][2 * j + 1])).collect())
                .collect()
        })
        .collect()
}

fn up(x: &Map, w: &[f64], b: &[f64]) -> Map {
    let (cin, cout) = (x.len(), b.len());
    let (h, wd) = (x[0].len(), x[0][0].len());
    (0..cout)
        .map(|o| {
            (0..2 * h)
                .map(|i| (0..2 * wd).map(|j| b[o] + (0..cin).map(|c| w[((c * cout + o) * 2 + i % 2) * 2 + j % 2] * x[c][i / 2][j / 2]).sum::<f64>()).collect())
                .collect()
        })
        .collect()
}

fn pointwise(x: &Map, w: &[f64], b: &[f64]) -> Map {
    let cin = x.len();
    (0..b.len())
        .map(|o| {
            (0..x[0].len())
                .map(|i| (0..x[0][0].len()).map(|j| b[o] + (0..cin).map(|c| w[o * cin + c] * x[c][i][j]).sum::<f64>()).collect())
                .collect()
        })
        .collect()
}

/// Definitional forward pass of one sample: concepts, free and prediction.
fn oracle(net: &Network<f64>, x: &Map) -> (Map, Option<Map>, Map) {
    let mut skips = Vec::new();
    let mut d = x.clone();
    for l in 0..4 {
        let y = stage(&d, net, &format!("enc{l}"));
        d = pool(&y);
        skips.push(y);
    }
    d = stage(&d, net, "bottom");
    for l in (0..4).rev() {
        let mut cat = up(&d, net.param(&format!("up{l}.w")).unwrap(), net.param(&format!("up{l}.b")).unwrap());
        cat.extend(skips[l].clone());
        d = stage(&cat, net, &format!("dec{l}"));
    }
    let c = pointwise(&d, net.param("head.concept.w").unwrap(), net.param("head.concept.b").unwrap());
    let f = net.param("head.free.w").map(|w| pointwise(&d, w, net.param("head.free.b").unwrap()));
    let mut z = c.clone();
    if let Some(f) = &f {
        z.extend(f.clone());
    }
    let y = pointwise(&z, net.param("combine.w").unwrap(), net.param("combine.b").unwrap());
    (c, f, y)
}

fn sample(a: &Act<f64>, n: usize) -> Map {
    (0..a.c).map(|c| (0..a.h).map(|i| (0..a.w).map(|j| a.data[((c * a.n + n) * a.h + i) * a.w + j]).collect()).collect()).collect()
}

fn randomized(mode: Mode, seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::new(NetConfig::new(3, [2, 2, 2, 2], mode), seed).unwrap();
    for v in net.params.iter_mut() {
        *v += rng.random_range(-0.2..0.2);
    }
    let specs = net.running_specs().to_vec();
    for s in specs {
        for v in &mut net.running[s.range.clone()] {
            *v = if s.name.ends_with("running_var") { rng.random_range(0.5..2.0) } else { rng.random_range(-0.3..0.3) };
        }
    }
    net
}

#[test]
fn forward_matches_definitional_oracle() {
    for (k, mode) in Mode::ALL.into_iter().enumerate() {
        let net = randomized(mode, 40 + k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, h, w) = (2, 16, 32);
        let x = Act::from_vec(3, n, h, w, (0..3 * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect());
        let out = net.forward(&x).unwrap();
        let mut worst = 0.0f64;
        for s in 0..n {
            let (c, f, y) = oracle(&net, &sample(&x, s));
            let mut cmp = |got: &Act<f64>, want: &Map| {
                let g = sample(got, s);
                for (a, b) in g.iter().flatten().flatten().zip(want.iter().flatten().flatten()) {
                    worst = worst.max((a - b).abs());
                }
            };
            cmp(&out.concepts, &c);
            cmp(&out.y, &y);
            assert_eq!(out.free.is_some(), f.is_some());
            if let (Some(a), Some(b)) = (&out.free, &f) {
                cmp(a, b);
            }
        }
        assert!(worst < 1e-10, "{mode:?}: max deviation {worst:e}");
    }
}

#[test]
fn combine_weight_gradient_by_hand() {
    // ∂(Σ ŷ)/∂w_k = Σ z_k and ∂(Σ ŷ)/∂b = N·H·W
    let mut net = randomized(Mode::Mixed, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, h, w) = (2, 16, 16);
    let x = Act::from_vec(3, n, h, w, (0..3 * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (out, cache) = net.forward_train(&x).unwrap();
    let ones = Act::from_vec(1, n, h, w, vec![1.0; n * h * w]);
    let zc = Act::zeros(4, n, h, w);
    let zf = Act::zeros(1, n, h, w);
    let g = net.backward(&cache, &zc, Some(&zf), &ones).unwrap();
    let ws = net.spec("combine.w").unwrap().range.clone();
    let bs = net.spec("combine.b").unwrap().range.clone();
    let free = out.free.unwrap();
    for k in 0..5 {
        let want: f64 = if k < 4 { out.concepts.channel(k).iter().sum() } else { free.channel(0).iter().sum() };
        assert!((g[ws.start + k] - want).abs() < 1e-9 * want.abs().max(1.0), "w{k}: {} vs {want}", g[ws.start + k]);
    }
    assert!((g[bs.start] - (n * h * w) as f64).abs() < 1e-12);
}
