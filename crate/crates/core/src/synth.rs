//! Synthetic reanalysis members with a known linear concept → MLHC teacher.
//!
//! Every time-varying input is
//!
//! ```text
//! x(t, c) = mean + spread·P₀(c) + amp·(1 + ½·P₁(c))·cos(2π(m − peak)/12)
//!         + trend·t/120 + noise·N(t, c)
//! ```
//!
//! with `P₀`, `P₁` unit-variance smooth patterns shared by all members and
//! `N` a unit-variance AR(1) sequence of smooth fields private to each member.
//! The mixed-layer depth is generated in the log domain so it stays positive.
//! Wind stress is generated on the full rectangle and only its curl (`sowsc`)
//! is emitted.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::concepts::{self, ConceptSet, PhysConstants};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{FieldSeries, GeoGrid, TimeAxis, YearMonth};
use crate::preprocess::MemberData;
use crate::smooth::Smoother;

/// Earth's rotation rate (rad s⁻¹).
pub const OMEGA: f64 = 7.2921e-5;

/// Generation parameters for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub name: String,
    pub units: String,
    pub mean: f64,
    pub spread: f64,
    pub seasonal_amplitude: f64,
    /// Calendar month of the seasonal maximum.
    pub peak_month: f64,
    pub trend_per_decade: f64,
    pub noise_std: f64,
    /// Generate `ln x` instead of `x` (`mean` is then the median of `x`).
    pub log_domain: bool,
}

impl VarSpec {
    #[allow(clippy::too_many_arguments)]
    fn new(name: &str, units: &str, mean: f64, spread: f64, amp: f64, peak: f64, trend: f64, noise: f64) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
            mean,
            spread,
            seasonal_amplitude: amp,
            peak_month: peak,
            trend_per_decade: trend,
            noise_std: noise,
            log_domain: false,
        }
    }
}

/// Names of the generated time-varying fields, in generation order.
pub const GENERATED_VARS: [&str; 11] = [
    "sosstsst",
    "sosaline",
    "sossheig",
    "somxl010",
    "sohefldo",
    "vozocrtx_ml",
    "vomecrty_ml",
    "votempdiff",
    "vosaldiff",
    "taux",
    "tauy",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub start_year: i32,
    pub years: usize,
    pub n_members: usize,
    pub master_seed: u64,
    /// Gaussian σ (cells) of the spatial patterns and noise.
    pub spatial_scale: f64,
    pub ar1_coeff: f64,
    /// Fraction of cells that become land.
    pub land_fraction: f64,
    pub generative_weights: [f64; 4],
    pub generative_noise_std: f64,
    /// One entry per name in [`GENERATED_VARS`].
    pub vars: Vec<VarSpec>,
    pub constants: PhysConstants,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut h = VarSpec::new("somxl010", "m", 50.0, 0.15, 0.3, 2.0, 0.0, 0.1);
        h.log_domain = true;
        Self {
            n_lat: 48,
            n_lon: 64,
            lat_range: (20.0, 60.0),
            lon_range: (280.0, 350.0),
            start_year: 1979,
            years: 20,
            n_members: 5,
            master_seed: 20240,
            spatial_scale: 8.0,
            ar1_coeff: 0.9,
            land_fraction: 0.2,
            generative_weights: [0.4, 0.3, 0.2, 0.1],
            generative_noise_std: 0.1,
            vars: vec![
                VarSpec::new("sosstsst", "degC", 15.0, 4.0, 3.0, 8.0, 0.2, 0.5),
                VarSpec::new("sosaline", "psu", 35.0, 0.5, 0.2, 4.0, 0.0, 0.1),
                VarSpec::new("sossheig", "m", 0.0, 0.3, 0.05, 9.0, 0.03, 0.05),
                h,
                VarSpec::new("sohefldo", "W m-2", 0.0, 30.0, 100.0, 6.0, 0.0, 30.0),
                VarSpec::new("vozocrtx_ml", "m s-1", 0.05, 0.05, 0.02, 1.0, 0.0, 0.05),
                VarSpec::new("vomecrty_ml", "m s-1", 0.0, 0.05, 0.02, 1.0, 0.0, 0.05),
                VarSpec::new("votempdiff", "degC", 0.5, 0.5, 1.0, 8.0, 0.0, 0.5),
                VarSpec::new("vosaldiff", "psu", 0.0, 0.05, 0.02, 5.0, 0.0, 0.03),
                VarSpec::new("taux", "N m-2", 0.05, 0.05, 0.05, 1.0, 0.0, 0.03),
                VarSpec::new("tauy", "N m-2", 0.0, 0.03, 0.02, 1.0, 0.0, 0.03),
            ],
            constants: PhysConstants::default(),
        }
    }
}

impl SynthConfig {
    pub fn months(&self) -> usize {
        self.years * 12
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat < 3 || self.n_lon < 3 {
            return Err(Error::Grid(format!("synthetic grid {}×{} is degenerate (need ≥ 3×3)", self.n_lat, self.n_lon)));
        }
        if self.years < 3 {
            return Err(Error::Invalid(format!("years = {} (need ≥ 3)", self.years)));
        }
        if self.n_members == 0 {
            return Err(Error::Invalid("n_members must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.ar1_coeff) {
            return Err(Error::Invalid(format!("ar1_coeff = {} outside [0, 1)", self.ar1_coeff)));
        }
        if !(self.spatial_scale > 0.0) {
            return Err(Error::Invalid("spatial_scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.land_fraction) {
            return Err(Error::Invalid(format!("land_fraction = {} outside [0, 1)", self.land_fraction)));
        }
        if self.generative_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("generative_weights must be finite".into()));
        }
        if !(self.generative_noise_std >= 0.0 && self.generative_noise_std.is_finite()) {
            return Err(Error::Invalid("generative_noise_std must be ≥ 0".into()));
        }
        if self.vars.len() != GENERATED_VARS.len()
            || self.vars.iter().zip(GENERATED_VARS).any(|(v, n)| v.name != n)
        {
            return Err(Error::Invalid(format!("synthetic variables must be {GENERATED_VARS:?}")));
        }
        for v in &self.vars {
            let nums = [v.mean, v.spread, v.seasonal_amplitude, v.peak_month, v.trend_per_decade, v.noise_std];
            if nums.iter().any(|x| !x.is_finite()) || v.noise_std < 0.0 {
                return Err(Error::Invalid(format!("{}: parameters must be finite, noise_std ≥ 0", v.name)));
            }
            if v.log_domain && v.mean <= 0.0 {
                return Err(Error::Invalid(format!("{}: log-domain mean must be positive", v.name)));
            }
        }
        self.constants.validate()
    }

    pub fn var(&self, name: &str) -> Option<&VarSpec> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn var_mut(&mut self, name: &str) -> Option<&mut VarSpec> {
        self.vars.iter_mut().find(|v| v.name == name)
    }

    pub fn time(&self) -> TimeAxis {
        TimeAxis {
            start: YearMonth { year: self.start_year, month: 1 },
            len: self.months(),
        }
    }
}

/// Stream seed for `(master_seed, member, label)`: FNV-1a over the
/// little-endian fields and the label bytes, finished with SplitMix64.
pub fn stream_seed(master_seed: u64, member: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = master_seed.to_le_bytes().into_iter().chain(member.to_le_bytes()).chain(label.bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Member index reserved for streams shared by all members.
const SHARED: u64 = u64::MAX;

fn rng(cfg: &SynthConfig, member: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(cfg.master_seed, member, label))
}

/// Unit-variance smooth random fields on the full rectangle.
struct NoiseField {
    smoother: Smoother,
    inv_std: Vec<f64>,
}

impl NoiseField {
    fn new(n_lat: usize, n_lon: usize, sigma: f64) -> Self {
        let smoother = Smoother::new(n_lat, n_lon, &vec![true; n_lat * n_lon], sigma);
        let inv_std = smoother.noise_std().iter().map(|s| 1.0 / s).collect();
        Self { smoother, inv_std }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let white: Vec<f64> = (0..self.inv_std.len()).map(|_| StandardNormal.sample(rng)).collect();
        let mut f = self.smoother.apply(&white);
        for (v, s) in f.iter_mut().zip(&self.inv_std) {
            *v *= s;
        }
        f
    }
}

fn coordinates(cfg: &SynthConfig) -> Result<GeoGrid> {
    GeoGrid::all_ocean(cfg.n_lat, cfg.n_lon, cfg.lat_range, cfg.lon_range)
}

/// Land–sea mask shared by all members: the `land_fraction` of cells with the
/// highest score become land, where the score is a smooth random field plus a
/// westward ramp (a continent on the western edge).
pub fn synth_mask(cfg: &SynthConfig) -> Result<Vec<bool>> {
    let (n_lat, n_lon) = (cfg.n_lat, cfg.n_lon);
    let noise = NoiseField::new(n_lat, n_lon, cfg.spatial_scale).draw(&mut rng(cfg, SHARED, "mask"));
    let score: Vec<f64> = (0..n_lat * n_lon)
        .map(|c| noise[c] + 3.0 * (1.0 - 2.0 * (c % n_lon) as f64 / (n_lon - 1) as f64))
        .collect();
    let n_land = (cfg.land_fraction * score.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut mask = vec![true; score.len()];
    for &c in &order[..n_land.min(score.len() - 1)] {
        mask[c] = false;
    }
    Ok(mask)
}

pub fn synth_grid(cfg: &SynthConfig) -> Result<GeoGrid> {
    cfg.validate()?;
    let g = coordinates(cfg)?;
    GeoGrid::new(g.lat().to_vec(), g.lon().to_vec(), synth_mask(cfg)?)
}

/// Raw values `[T × n_cells]` of one generated variable on the full rectangle.
fn generate_var(cfg: &SynthConfig, member: usize, spec: &VarSpec, noise: &NoiseField) -> Vec<f64> {
    let n = cfg.n_lat * cfg.n_lon;
    let time = cfg.time();
    let mut pattern_rng = rng(cfg, SHARED, &format!("{}/pattern", spec.name));
    let p0 = noise.draw(&mut pattern_rng);
    let p1 = noise.draw(&mut pattern_rng);
    let mut noise_rng = rng(cfg, member as u64, &spec.name);
    let phi = cfg.ar1_coeff;
    let innov = (1.0 - phi * phi).sqrt();
    let base = if spec.log_domain { spec.mean.ln() } else { spec.mean };
    let mut state = noise.draw(&mut noise_rng);
    let mut out = Vec::with_capacity(time.len * n);
    for t in 0..time.len {
        if t > 0 {
            let xi = noise.draw(&mut noise_rng);
            for (s, x) in state.iter_mut().zip(&xi) {
                *s = phi * *s + innov * x;
            }
        }
        let m = time.month_of(t) as f64;
        let season = (2.0 * PI * (m - spec.peak_month) / 12.0).cos();
        let trend = spec.trend_per_decade * t as f64 / 120.0;
        for c in 0..n {
            let v = base
                + spec.spread * p0[c]
                + spec.seasonal_amplitude * (1.0 + 0.5 * p1[c]) * season
                + trend
                + spec.noise_std * state[c];
            out.push(if spec.log_domain { v.exp() } else { v });
        }
    }
    out
}

/// Bathymetry level index in `1..=75` from a smooth pattern.
fn bathymetry(cfg: &SynthConfig, noise: &NoiseField) -> Vec<f64> {
    let p = noise.draw(&mut rng(cfg, SHARED, "mbathy/pattern"));
    p.iter().map(|&v| (45.0 + 15.0 * v).round().clamp(1.0, 75.0)).collect()
}

/// All twelve inputs of one member, quantized to `f32` precision.
pub fn generate_member(cfg: &SynthConfig, member: usize) -> Result<Dataset> {
    let grid = Arc::new(synth_grid(cfg)?);
    generate_member_on(cfg, member, &grid)
}

/// As [`generate_member`], on a grid previously built by [`synth_grid`].
pub fn generate_member_on(cfg: &SynthConfig, member: usize, grid: &Arc<GeoGrid>) -> Result<Dataset> {
    cfg.validate()?;
    let time = cfg.time();
    let n = grid.n_cells();
    let noise = NoiseField::new(cfg.n_lat, cfg.n_lon, cfg.spatial_scale);
    let mut series = Vec::with_capacity(12);
    let mut stress = Vec::with_capacity(2);
    for spec in &cfg.vars {
        let values = generate_var(cfg, member, spec, &noise);
        if spec.name.starts_with("tau") {
            stress.push(values);
            continue;
        }
        series.push(FieldSeries::new(grid.clone(), time, spec.name.clone(), spec.units.clone(), values)?.quantize_f32());
    }
    let full = Arc::new(grid.without_mask());
    let taux = FieldSeries::new(full.clone(), time, "taux", "N m-2", stress.remove(0))?;
    let tauy = FieldSeries::new(full, time, "tauy", "N m-2", stress.remove(0))?;
    let curl = concepts::wind_stress_curl(&taux, &tauy)?;
    series.push(FieldSeries::new(grid.clone(), time, "sowsc", "N m-3", curl.into_values())?.quantize_f32());

    let ff: Vec<f64> = (0..n).map(|c| 2.0 * OMEGA * grid.lat()[c / cfg.n_lon].to_radians().sin()).collect();
    let depth = bathymetry(cfg, &noise);
    for (name, units, frame) in [("mbathy", "levels", depth), ("ff", "s-1", ff)] {
        let values = frame.iter().copied().cycle().take(time.len * n).collect();
        series.push(FieldSeries::new(grid.clone(), time, name, units, values)?.quantize_f32());
    }
    Dataset::new(member, series)
}

/// Pooled ocean mean and population std of a series.
pub fn pooled_moments(s: &FieldSeries) -> (f64, f64) {
    let cells = s.grid.ocean_cells();
    let count = (cells.len() * s.len()) as f64;
    let mut sum = 0.0;
    for t in 0..s.len() {
        let f = s.frame(t);
        sum += cells.iter().map(|&c| f[c]).sum::<f64>();
    }
    let mean = sum / count;
    let mut ss = 0.0;
    for t in 0..s.len() {
        let f = s.frame(t);
        ss += cells.iter().map(|&c| (f[c] - mean).powi(2)).sum::<f64>();
    }
    (mean, (ss / count).sqrt())
}

/// Teacher target `MLHC(t) = Σ w_k·z(C_k(t−1)) + ε(t)` on the concepts' grid.
///
/// Each concept is z-scored with its pooled moments over the whole concept
/// period. The result starts one month after the concepts.
pub fn generate_target(cfg: &SynthConfig, member: usize, concepts: &ConceptSet) -> Result<FieldSeries> {
    cfg.validate()?;
    let cs = concepts.as_array();
    let len = cs[0].len();
    if len < 2 {
        return Err(Error::Time("teacher needs at least 2 concept months".into()));
    }
    let grid = concepts.grid().clone();
    if grid.n_lat() != cfg.n_lat || grid.n_lon() != cfg.n_lon {
        return Err(Error::Grid(format!(
            "concepts are {}×{}, config is {}×{}",
            grid.n_lat(),
            grid.n_lon(),
            cfg.n_lat,
            cfg.n_lon
        )));
    }
    let mut scale = [(0.0, 1.0); 4];
    for (k, s) in cs.iter().enumerate() {
        let (m, sd) = pooled_moments(s);
        if sd <= 0.0 {
            return Err(Error::ZeroVariance(s.name.clone()));
        }
        scale[k] = (m, sd);
    }
    let w = cfg.generative_weights;
    let sigma = cfg.generative_noise_std;
    let mut eps_rng = rng(cfg, member as u64, "mlhc/noise");
    let n = grid.n_cells();
    let time = cs[0].time.slice(1..len)?;
    let mut values = vec![f64::NAN; time.len * n];
    for t in 0..time.len {
        for &c in grid.ocean_cells() {
            let mut y = 0.0;
            for k in 0..4 {
                y += w[k] * (cs[k].get(t, c) - scale[k].0) / scale[k].1;
            }
            let e: f64 = StandardNormal.sample(&mut eps_rng);
            values[t * n + c] = y + sigma * e;
        }
    }
    FieldSeries::new(grid, time, "mlhc", "1", values)
}

/// One member's inputs, derived concepts and teacher target.
pub fn synthesize_member(cfg: &SynthConfig, member: usize, grid: &Arc<GeoGrid>) -> Result<MemberData> {
    let dataset = generate_member_on(cfg, member, grid)?;
    let concepts = concepts::derive_concepts(&dataset, &cfg.constants)?;
    let mlhc = generate_target(cfg, member, &concepts)?.quantize_f32();
    Ok(MemberData { dataset, concepts, mlhc })
}

/// Every member of the configuration, generated in parallel.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<MemberData>> {
    use rayon::prelude::*;
    let grid = Arc::new(synth_grid(cfg)?);
    (0..cfg.n_members).into_par_iter().map(|m| synthesize_member(cfg, m, &grid)).collect()
}

/// Generates every member and writes `<out>/m<k>/<name>.ogf` plus the teacher
/// target `mlhc.ogf`.
pub fn write_members(cfg: &SynthConfig, out: &Path) -> Result<()> {
    use rayon::prelude::*;
    let grid = Arc::new(synth_grid(cfg)?);
    (0..cfg.n_members).into_par_iter().try_for_each(|m| -> Result<()> {
        let data = synthesize_member(cfg, m, &grid)?;
        let dir = out.join(format!("m{m}"));
        data.dataset.write_dir(&dir)?;
        crate::ogf::write(&data.mlhc, dir.join("mlhc.ogf"))
    })
}
