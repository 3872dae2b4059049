//! Run configuration: a line-oriented `section.key = value` file.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and falls
//! back to the desk-scale default; unknown keys, malformed values and failed
//! invariants are all collected and reported together.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diagnostics::Region;
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::grid::{Weighting, YearMonth};
use crate::nn::{Mode, NetConfig, TrainConfig};
use crate::preprocess::PreprocConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct NetOptions {
    pub widths: [usize; 4],
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            widths: [8, 16, 32, 64],
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub weighting: Weighting,
    pub predict_batch: usize,
    /// Pixels per grid cell in rendered maps.
    pub image_scale: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::CosLat,
            predict_batch: 8,
            image_scale: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagOptions {
    pub region: Region,
    pub event: YearMonth,
    pub window: usize,
}

impl Default for DiagOptions {
    fn default() -> Self {
        Self {
            region: Region {
                lat: (40.0, 45.0),
                lon: (288.0, 294.0),
            },
            event: YearMonth { year: 1998, month: 6 },
            window: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub preprocess: PreprocConfig,
    pub net: NetOptions,
    pub train: TrainConfig,
    pub ensemble: EnsembleSpec,
    pub eval: EvalOptions,
    pub diagnostics: DiagOptions,
    /// Output directory; relative paths resolve against the config file.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            preprocess: PreprocConfig::default(),
            net: NetOptions::default(),
            train: TrainConfig::default(),
            ensemble: EnsembleSpec::default(),
            eval: EvalOptions::default(),
            diagnostics: DiagOptions::default(),
            out: PathBuf::from("run"),
        }
    }
}

type Get = fn(&RunConfig) -> String;
type Set = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;

fn num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}`"))
}

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|x| num(x.trim())).collect()
}

fn array<T: FromStr + Copy + Default, const N: usize>(s: &str) -> std::result::Result<[T; N], String> {
    let v: Vec<T> = list(s)?;
    v.try_into().map_err(|v: Vec<T>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let [a, b]: [f64; 2] = array(s)?;
    Ok((a, b))
}

fn year_month(s: &str) -> std::result::Result<YearMonth, String> {
    let (y, m) = s.split_once('-').ok_or_else(|| format!("expected YYYY-MM, got `{s}`"))?;
    YearMonth::new(num(y)?, num(m)?).map_err(|e| e.to_string())
}

fn modes(s: &str) -> std::result::Result<Vec<Mode>, String> {
    s.split(',')
        .map(|x| Mode::parse(x.trim()).ok_or_else(|| format!("unknown configuration `{}`", x.trim())))
        .collect()
}

macro_rules! field {
    ($key:literal, $doc:literal, |$c:ident| $get:expr, |$m:ident, $v:ident| $set:expr) => {
        (
            $key,
            $doc,
            (|$c: &RunConfig| $get) as Get,
            (|$m: &mut RunConfig, $v: &str| -> std::result::Result<(), String> {
                $set;
                Ok(())
            }) as Set,
        )
    };
}

/// `(key, description, get, set)` for every accepted key.
pub fn fields() -> Vec<(&'static str, &'static str, Get, Set)> {
    vec![
        field!("synth.n_lat", "grid rows", |c| c.synth.n_lat.to_string(), |m, v| m.synth.n_lat = num(v)?),
        field!("synth.n_lon", "grid columns", |c| c.synth.n_lon.to_string(), |m, v| m.synth.n_lon = num(v)?),
        field!("synth.lat_range", "southern, northern cell centre (deg)", |c| join(&[c.synth.lat_range.0, c.synth.lat_range.1]), |m, v| m.synth.lat_range = pair(v)?),
        field!("synth.lon_range", "western, eastern cell centre (deg E)", |c| join(&[c.synth.lon_range.0, c.synth.lon_range.1]), |m, v| m.synth.lon_range = pair(v)?),
        field!("synth.start_year", "first year of the record", |c| c.synth.start_year.to_string(), |m, v| m.synth.start_year = num(v)?),
        field!("synth.years", "record length in years", |c| c.synth.years.to_string(), |m, v| m.synth.years = num(v)?),
        field!("synth.n_members", "data members", |c| c.synth.n_members.to_string(), |m, v| m.synth.n_members = num(v)?),
        field!("synth.master_seed", "seed of every synthetic noise stream", |c| c.synth.master_seed.to_string(), |m, v| m.synth.master_seed = num(v)?),
        field!("synth.spatial_scale", "Gaussian scale of spatial patterns (cells)", |c| c.synth.spatial_scale.to_string(), |m, v| m.synth.spatial_scale = num(v)?),
        field!("synth.ar1_coeff", "lag-1 autocorrelation of the noise", |c| c.synth.ar1_coeff.to_string(), |m, v| m.synth.ar1_coeff = num(v)?),
        field!("synth.land_fraction", "fraction of land cells", |c| c.synth.land_fraction.to_string(), |m, v| m.synth.land_fraction = num(v)?),
        field!("synth.generative_weights", "teacher weights of vos2, von2, vohfe, mxl_tendency", |c| join(&c.synth.generative_weights), |m, v| m.synth.generative_weights = array(v)?),
        field!("synth.generative_noise_std", "teacher noise std", |c| c.synth.generative_noise_std.to_string(), |m, v| m.synth.generative_noise_std = num(v)?),
        field!("preprocess.clip_lo", "lower clip percentile", |c| c.preprocess.clip_lo.to_string(), |m, v| m.preprocess.clip_lo = num(v)?),
        field!("preprocess.clip_hi", "upper clip percentile", |c| c.preprocess.clip_hi.to_string(), |m, v| m.preprocess.clip_hi = num(v)?),
        field!("preprocess.smooth_sigma", "concept smoothing sigma (cells)", |c| c.preprocess.smooth_sigma.to_string(), |m, v| m.preprocess.smooth_sigma = num(v)?),
        field!("preprocess.split", "train, validation, test fractions", |c| join(&c.preprocess.split), |m, v| m.preprocess.split = array(v)?),
        field!("preprocess.context_months", "input window length", |c| c.preprocess.context_months.to_string(), |m, v| m.preprocess.context_months = num(v)?),
        field!("preprocess.lead_months", "forecast lead", |c| c.preprocess.lead_months.to_string(), |m, v| m.preprocess.lead_months = num(v)?),
        field!("net.widths", "encoder channel widths", |c| join(&c.net.widths), |m, v| m.net.widths = array(v)?),
        field!("net.bn_eps", "batch-norm epsilon", |c| c.net.bn_eps.to_string(), |m, v| m.net.bn_eps = num(v)?),
        field!("net.bn_momentum", "batch-norm running-stat momentum", |c| c.net.bn_momentum.to_string(), |m, v| m.net.bn_momentum = num(v)?),
        field!("train.epochs", "training epochs", |c| c.train.epochs.to_string(), |m, v| m.train.epochs = num(v)?),
        field!("train.batch_size", "samples per step", |c| c.train.batch_size.to_string(), |m, v| m.train.batch_size = num(v)?),
        field!("train.lambda0", "concept-loss weight at the first epoch", |c| c.train.lambda0.to_string(), |m, v| m.train.lambda0 = num(v)?),
        field!("train.lambda1", "concept-loss weight at the last epoch", |c| c.train.lambda1.to_string(), |m, v| m.train.lambda1 = num(v)?),
        field!("train.lr", "AdamW learning rate", |c| c.train.optimizer.lr.to_string(), |m, v| m.train.optimizer.lr = num(v)?),
        field!("train.weight_decay", "AdamW decoupled weight decay", |c| c.train.optimizer.weight_decay.to_string(), |m, v| m.train.optimizer.weight_decay = num(v)?),
        field!("train.beta1", "AdamW first-moment decay", |c| c.train.optimizer.beta1.to_string(), |m, v| m.train.optimizer.beta1 = num(v)?),
        field!("train.beta2", "AdamW second-moment decay", |c| c.train.optimizer.beta2.to_string(), |m, v| m.train.optimizer.beta2 = num(v)?),
        field!("train.eps", "AdamW epsilon", |c| c.train.optimizer.eps.to_string(), |m, v| m.train.optimizer.eps = num(v)?),
        field!("train.validate", "record validation loss each epoch", |c| c.train.validate.to_string(), |m, v| m.train.validate = num(v)?),
        field!("ensemble.seeds", "initialization seed of each member", |c| join(&c.ensemble.seeds), |m, v| m.ensemble.seeds = list(v)?),
        field!("ensemble.configs", "configurations to train", |c| c.ensemble.configs.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "), |m, v| m.ensemble.configs = modes(v)?),
        field!("eval.weighting", "basin-mean weighting: uniform or coslat", |c| match c.eval.weighting {
            Weighting::Uniform => "uniform".to_string(),
            Weighting::CosLat => "coslat".to_string(),
        }, |m, v| m.eval.weighting = match v {
            "uniform" => Weighting::Uniform,
            "coslat" => Weighting::CosLat,
            _ => return Err(format!("unknown weighting `{v}`")),
        }),
        field!("eval.predict_batch", "batch size for inference", |c| c.eval.predict_batch.to_string(), |m, v| m.eval.predict_batch = num(v)?),
        field!("eval.image_scale", "pixels per cell in rendered maps", |c| c.eval.image_scale.to_string(), |m, v| m.eval.image_scale = num(v)?),
        field!("diagnostics.region_lat", "event box latitude bounds", |c| join(&[c.diagnostics.region.lat.0, c.diagnostics.region.lat.1]), |m, v| m.diagnostics.region.lat = pair(v)?),
        field!("diagnostics.region_lon", "event box longitude bounds (deg E)", |c| join(&[c.diagnostics.region.lon.0, c.diagnostics.region.lon.1]), |m, v| m.diagnostics.region.lon = pair(v)?),
        field!("diagnostics.event", "event month, YYYY-MM", |c| c.diagnostics.event.to_string(), |m, v| m.diagnostics.event = year_month(v)?),
        field!("diagnostics.window", "retrospective length in months", |c| c.diagnostics.window.to_string(), |m, v| m.diagnostics.window = num(v)?),
        field!("paths.out", "output directory", |c| c.out.display().to_string(), |m, v| m.out = PathBuf::from(v)),
    ]
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table = fields();
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `section.key = value`", no + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match table.iter().find(|f| f.0 == key) {
                None => errors.push(format!("line {}: unknown key `{key}`", no + 1)),
                Some((k, _, _, set)) => {
                    if seen.contains(k) {
                        errors.push(format!("line {}: `{key}` given twice", no + 1));
                    }
                    seen.push(k);
                    if let Err(e) = set(&mut cfg, value) {
                        errors.push(format!("line {}: `{key}`: {e}", no + 1));
                    }
                }
            }
        }
        if errors.is_empty() {
            errors.extend(cfg.violations());
        }
        if errors.is_empty() { Ok(cfg) } else { Err(Error::Config(errors)) }
    }

    /// Reads `path` and resolves a relative output directory against it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.out.is_relative() {
            cfg.out = path.parent().unwrap_or(Path::new(".")).join(&cfg.out);
        }
        Ok(cfg)
    }

    /// Every invariant the stage configs check, as messages.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |what: &str, r: Result<()>| {
            if let Err(e) = r {
                v.push(format!("{what}: {e}"));
            }
        };
        push("synth", self.synth.validate());
        push("preprocess", self.preprocess.validate());
        push("net", self.net_config(Mode::Mixed).validate());
        push("train", self.train.validate());
        push("ensemble", self.ensemble.validate());
        if self.eval.predict_batch == 0 || self.eval.image_scale == 0 {
            v.push("eval: predict_batch and image_scale must be ≥ 1".into());
        }
        let r = &self.diagnostics.region;
        if !(r.lat.0 <= r.lat.1 && r.lon.0 <= r.lon.1) {
            v.push("diagnostics: region bounds must be ordered low, high".into());
        }
        if self.diagnostics.window == 0 {
            v.push("diagnostics: window must be ≥ 1".into());
        }
        v
    }

    pub fn net_config(&self, mode: Mode) -> NetConfig {
        NetConfig {
            bn_eps: self.net.bn_eps,
            bn_momentum: self.net.bn_momentum,
            ..NetConfig::new(self.preprocess.in_channels(), self.net.widths, mode)
        }
    }

    /// Canonical text with every key; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _, get, _) in fields() {
            s.push_str(&format!("{k} = {}\n", get(self)));
        }
        s
    }
}
