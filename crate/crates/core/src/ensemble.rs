//! Seed-matched model ensembles and their aggregate predictions.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::concepts::CONCEPT_NAMES;
use crate::error::{Error, Result};
use crate::grid::FieldSeries;
use crate::nn::train::{predict, train, SamplePrediction};
use crate::nn::{History, Mode, NetConfig, Network, TrainConfig};
use crate::preprocess::{SampleRef, SampleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    /// Initialization seed of member `v{i+1}`, shared by every configuration.
    pub seeds: Vec<u64>,
    pub configs: Vec<Mode>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            configs: Mode::ALL.to_vec(),
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.configs.is_empty() {
            return Err(Error::Invalid("ensemble needs at least one seed and one configuration".into()));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(Error::Invalid(format!("seed {s} is listed twice")));
            }
        }
        for (i, m) in self.configs.iter().enumerate() {
            if self.configs[..i].contains(m) {
                return Err(Error::Invalid(format!("configuration {} is listed twice", m.name())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Member {
    pub seed: u64,
    pub net: Network<f32>,
    pub history: History,
}

#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub mode: Mode,
    pub members: Vec<Member>,
}

impl TrainedEnsemble {
    pub fn networks(&self) -> Vec<&Network<f32>> {
        self.members.iter().map(|m| &m.net).collect()
    }
}

pub fn config_for(base: &NetConfig, mode: Mode) -> NetConfig {
    NetConfig { mode, ..base.clone() }
}

/// Trains every (configuration, seed) pair. Jobs run in parallel; each is
/// deterministic on its own, so the result does not depend on scheduling.
pub fn train_ensemble(
    spec: &EnsembleSpec,
    base: &NetConfig,
    train_set: &SampleSet,
    val: Option<&SampleSet>,
    tc: &TrainConfig,
) -> Result<Vec<TrainedEnsemble>> {
    spec.validate()?;
    let jobs: Vec<(Mode, usize, u64)> = spec
        .configs
        .iter()
        .flat_map(|&m| spec.seeds.iter().enumerate().map(move |(i, &s)| (m, i, s)))
        .collect();
    let trained: Vec<(Mode, Member)> = jobs
        .into_par_iter()
        .map(|(mode, i, seed)| {
            train(&config_for(base, mode), train_set, val, tc, seed)
                .map(|(net, history)| (mode, Member { seed, net, history }))
                .map_err(|e| Error::Member {
                    config: mode.name().into(),
                    member: i + 1,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    Ok(spec
        .configs
        .iter()
        .map(|&mode| TrainedEnsemble {
            mode,
            members: trained.iter().filter(|(m, _)| *m == mode).map(|(_, mb)| mb.clone()).collect(),
        })
        .collect())
}

/// A field the network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    Mlhc,
    /// Index into [`CONCEPT_NAMES`].
    Concept(usize),
    Free,
}

impl Variable {
    /// Reporting order of the seasonal tables.
    pub const EVAL_ORDER: [Variable; 5] = [
        Variable::Mlhc,
        Variable::Concept(3),
        Variable::Concept(1),
        Variable::Concept(2),
        Variable::Concept(0),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Mlhc => "mlhc",
            Variable::Concept(k) => CONCEPT_NAMES[k],
            Variable::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mlhc" => Some(Variable::Mlhc),
            "free" => Some(Variable::Free),
            _ => CONCEPT_NAMES.iter().position(|c| *c == s).map(Variable::Concept),
        }
    }
}

/// Consecutive runs of samples from one data member, as `(member, first
/// index, length)` into `set.samples`.
pub fn segments(set: &SampleSet) -> Result<Vec<(usize, usize, usize)>> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (i, r) in set.samples.iter().enumerate() {
        match out.last_mut() {
            Some((m, start, len)) if *m == r.member => {
                if set.samples[*start + *len - 1].t + 1 != r.t {
                    return Err(Error::Time(format!("samples of member {m} are not consecutive months")));
                }
                *len += 1;
            }
            _ => {
                if out.iter().any(|s| s.0 == r.member) {
                    return Err(Error::Time(format!("samples of member {} are not contiguous", r.member)));
                }
                out.push((r.member, i, 1));
            }
        }
    }
    Ok(out)
}

fn series_from(set: &SampleSet, refs: &[SampleRef], name: &str, units: &str, get: impl Fn(usize, usize) -> f64) -> Result<FieldSeries> {
    let time = set.base.slice(refs[0].t..refs[0].t + refs.len())?;
    let grid = set.grid.clone();
    let n = grid.n_cells();
    let mut v = vec![f64::NAN; refs.len() * n];
    for t in 0..refs.len() {
        for &c in grid.ocean_cells() {
            v[t * n + c] = get(t, c);
        }
    }
    FieldSeries::new(grid, time, name, units, v)
}

/// Normalized targets of `var`, one series per data member.
pub fn target_series(set: &SampleSet, var: Variable) -> Result<Vec<FieldSeries>> {
    if var == Variable::Free {
        return Err(Error::MissingVariable("free (no target exists)".into()));
    }
    let n = set.n_cells();
    segments(set)?
        .into_iter()
        .map(|(_, start, len)| {
            let refs = &set.samples[start..start + len];
            series_from(set, refs, var.name(), "1", |t, c| match var {
                Variable::Mlhc => set.y_target(refs[t])[c] as f64,
                Variable::Concept(k) => set.concept_target(refs[t])[k * n + c] as f64,
                Variable::Free => f64::NAN,
            })
        })
        .collect()
}

/// Predictions of one model for `var`, one series per data member.
pub fn prediction_series(set: &SampleSet, preds: &[SamplePrediction], var: Variable) -> Result<Vec<FieldSeries>> {
    if preds.len() != set.len() || preds.iter().zip(&set.samples).any(|(p, r)| p.target != *r) {
        return Err(Error::Shape("predictions do not match the sample set".into()));
    }
    let n = set.n_cells();
    if let Some(p) = preds.first() {
        let missing = match var {
            Variable::Concept(k) => p.concepts.len() < (k + 1) * n,
            Variable::Free => p.free.len() < n,
            Variable::Mlhc => false,
        };
        if missing {
            return Err(Error::MissingVariable(var.name().into()));
        }
    }
    segments(set)?
        .into_iter()
        .map(|(_, start, len)| {
            let refs = &set.samples[start..start + len];
            series_from(set, refs, var.name(), "1", |t, c| {
                let p = &preds[start + t];
                (match var {
                    Variable::Mlhc => p.y[c],
                    Variable::Concept(k) => p.concepts[k * n + c],
                    Variable::Free => p.free[c],
                }) as f64
            })
        })
        .collect()
}

fn check_members(members: &[&FieldSeries]) -> Result<()> {
    let first = members.first().ok_or_else(|| Error::Invalid("ensemble has no member".into()))?;
    for m in &members[1..] {
        m.check_aligned(first)?;
    }
    Ok(())
}

/// Per cell-time mean over members.
pub fn ensemble_mean(members: &[&FieldSeries]) -> Result<FieldSeries> {
    check_members(members)?;
    let k = members.len() as f64;
    let n = members[0].grid.n_cells();
    members[0].derive(format!("{}_mean", members[0].name), members[0].units.clone(), |t, c| {
        members.iter().map(|m| m.values()[t * n + c]).sum::<f64>() / k
    })
}

/// Per cell-time population standard deviation over members (two-pass).
pub fn ensemble_std(members: &[&FieldSeries]) -> Result<FieldSeries> {
    check_members(members)?;
    if members.len() < 2 {
        return Err(Error::Invalid("ensemble spread needs at least two members".into()));
    }
    let k = members.len() as f64;
    let n = members[0].grid.n_cells();
    members[0].derive(format!("{}_std", members[0].name), members[0].units.clone(), |t, c| {
        let mean = members.iter().map(|m| m.values()[t * n + c]).sum::<f64>() / k;
        (members.iter().map(|m| (m.values()[t * n + c] - mean).powi(2)).sum::<f64>() / k).sqrt()
    })
}

/// `mean ± 2·std`.
pub fn ensemble_band(members: &[&FieldSeries]) -> Result<(FieldSeries, FieldSeries)> {
    let mean = ensemble_mean(members)?;
    let std = ensemble_std(members)?;
    let n = mean.grid.n_cells();
    let lo = mean.derive(format!("{}_lo", members[0].name), mean.units.clone(), |t, c| mean.values()[t * n + c] - 2.0 * std.values()[t * n + c])?;
    let hi = mean.derive(format!("{}_hi", members[0].name), mean.units.clone(), |t, c| mean.values()[t * n + c] + 2.0 * std.values()[t * n + c])?;
    Ok((lo, hi))
}

/// Eval-mode predictions of every model member on one sample set.
#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    pub set: SampleSet,
    pub members: Vec<Vec<SamplePrediction>>,
}

pub fn predict_ensemble(nets: &[&Network<f32>], set: &SampleSet, batch_size: usize) -> Result<EnsemblePrediction> {
    if nets.is_empty() {
        return Err(Error::Invalid("ensemble has no member".into()));
    }
    let members = nets.par_iter().map(|n| predict(n, set, batch_size)).collect::<Result<_>>()?;
    Ok(EnsemblePrediction { set: set.clone(), members })
}

/// One variable of an ensemble on one data-member segment.
#[derive(Debug, Clone)]
pub struct EnsembleField {
    pub members: Vec<FieldSeries>,
    pub mean: FieldSeries,
    /// Absent for single-member ensembles.
    pub std: Option<FieldSeries>,
}

impl EnsemblePrediction {
    /// `[model member][segment]`.
    pub fn member_series(&self, var: Variable) -> Result<Vec<Vec<FieldSeries>>> {
        self.members.iter().map(|p| prediction_series(&self.set, p, var)).collect()
    }

    /// Mean (and spread) per segment.
    pub fn fields(&self, var: Variable) -> Result<Vec<EnsembleField>> {
        let per = self.member_series(var)?;
        let n_seg = per[0].len();
        (0..n_seg)
            .map(|s| {
                let members: Vec<FieldSeries> = per.iter().map(|m| m[s].clone()).collect();
                let refs: Vec<&FieldSeries> = members.iter().collect();
                let mean = ensemble_mean(&refs)?;
                let std = if refs.len() > 1 { Some(ensemble_std(&refs)?) } else { None };
                Ok(EnsembleField { members, mean, std })
            })
            .collect()
    }

    pub fn means(&self, var: Variable) -> Result<Vec<FieldSeries>> {
        Ok(self.fields(var)?.into_iter().map(|f| f.mean).collect())
    }
}

/// SHA-256 over every normalized array a sample set draws from.
pub fn data_hash(set: &SampleSet) -> String {
    let mut h = Sha256::new();
    for m in set.members.iter() {
        h.update((m.member as u64).to_le_bytes());
        for v in m.inputs.iter().chain(&m.concepts).chain(&m.mlhc) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
