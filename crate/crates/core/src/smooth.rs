//! Mask-aware separable Gaussian filtering.

/// Normalized 1-D Gaussian kernel truncated at `4σ` (length `2r + 1`).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Precomputed Gaussian filter for one grid and mask.
///
/// The output at an ocean cell is `Σ G·x·m / Σ G·m` over the truncated 2-D
/// kernel `G = g ⊗ g`, i.e. land is excluded from both the numerator and the
/// weight. Both sums are evaluated separably.
#[derive(Debug, Clone)]
pub struct Smoother {
    n_lat: usize,
    n_lon: usize,
    mask: Vec<bool>,
    kernel: Vec<f64>,
    weight: Vec<f64>,
}

impl Smoother {
    pub fn new(n_lat: usize, n_lon: usize, mask: &[bool], sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        assert_eq!(mask.len(), n_lat * n_lon);
        let kernel = gaussian_kernel(sigma);
        let m: Vec<f64> = mask.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        let weight = separable(&m, n_lat, n_lon, &kernel);
        Self {
            n_lat,
            n_lon,
            mask: mask.to_vec(),
            kernel,
            weight,
        }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Per-cell standard deviation of the output for unit white-noise input;
    /// NaN on land.
    pub fn noise_std(&self) -> Vec<f64> {
        let m: Vec<f64> = self.mask.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        let k2: Vec<f64> = self.kernel.iter().map(|k| k * k).collect();
        let s2 = separable(&m, self.n_lat, self.n_lon, &k2);
        s2.iter()
            .zip(&self.weight)
            .zip(&self.mask)
            .map(|((&s, &w), &o)| if o { s.sqrt() / w } else { f64::NAN })
            .collect()
    }

    /// Smooths one `[n_lat × n_lon]` frame; land cells come back as NaN.
    ///
    /// Values are filtered as deviations from the first ocean value, which
    /// makes constant fields exact fixed points.
    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.n_lat * self.n_lon);
        let Some(first) = self.mask.iter().position(|&o| o) else {
            return vec![f64::NAN; frame.len()];
        };
        let anchor = frame[first];
        let dev: Vec<f64> = frame
            .iter()
            .zip(&self.mask)
            .map(|(&v, &o)| if o { v - anchor } else { 0.0 })
            .collect();
        let num = separable(&dev, self.n_lat, self.n_lon, &self.kernel);
        num.iter()
            .zip(&self.weight)
            .zip(&self.mask)
            .map(|((&n, &w), &o)| if o { anchor + n / w } else { f64::NAN })
            .collect()
    }
}

/// Zero-padded separable convolution: columns along longitude, then latitude.
fn separable(x: &[f64], n_lat: usize, n_lon: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; x.len()];
    for i in 0..n_lat {
        let row = &x[i * n_lon..(i + 1) * n_lon];
        for j in 0..n_lon {
            let mut acc = 0.0;
            let lo = (j as isize - r).max(0);
            let hi = (j as isize + r).min(n_lon as isize - 1);
            for jj in lo..=hi {
                acc += kernel[(jj - j as isize + r) as usize] * row[jj as usize];
            }
            tmp[i * n_lon + j] = acc;
        }
    }
    let mut out = vec![0.0; x.len()];
    for i in 0..n_lat {
        let lo = (i as isize - r).max(0);
        let hi = (i as isize + r).min(n_lat as isize - 1);
        let dst = &mut out[i * n_lon..(i + 1) * n_lon];
        for ii in lo..=hi {
            let w = kernel[(ii - i as isize + r) as usize];
            let src = &tmp[ii as usize * n_lon..(ii as usize + 1) * n_lon];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}
