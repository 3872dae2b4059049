//! Data conditioning: detrend → clip → smooth (concepts) → z-score → split →
//! samples.
//!
//! Clip thresholds and normalization moments come from training months only,
//! pooled over ocean cells and members. Static inputs (`mbathy`, `ff`) skip
//! detrending and clipping; the MLHC target is only z-scored.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use crate::concepts::{ConceptSet, CONCEPT_NAMES};
use crate::dataset::{Dataset, INPUT_VARS, STATIC_VARS};
use crate::error::{Error, FormatError, Result};
use crate::grid::{FieldSeries, GeoGrid, TimeAxis, YearMonth};
use crate::smooth::Smoother;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocConfig {
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub smooth_sigma: f64,
    pub split: [f64; 3],
    pub context_months: usize,
    pub lead_months: usize,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            clip_lo: 2.0,
            clip_hi: 98.0,
            smooth_sigma: 3.0,
            split: [0.8, 0.1, 0.1],
            context_months: 6,
            lead_months: 1,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.clip_lo && self.clip_lo < self.clip_hi && self.clip_hi <= 100.0) {
            return Err(Error::Invalid(format!(
                "clip percentiles must satisfy 0 ≤ lo < hi ≤ 100, got {} and {}",
                self.clip_lo, self.clip_hi
            )));
        }
        if !(self.smooth_sigma > 0.0) {
            return Err(Error::Invalid("smooth_sigma must be positive".into()));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("split fractions {:?} must be ≥ 0 and sum to 1", self.split)));
        }
        if self.context_months == 0 || self.lead_months == 0 {
            return Err(Error::Invalid("context_months and lead_months must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.context_months * INPUT_VARS.len()
    }
}

/// Per-cell least-squares line over the whole record, subtracted.
pub fn detrend_linear(series: &FieldSeries) -> Result<FieldSeries> {
    let t_len = series.len();
    if t_len < 2 {
        return Err(Error::Time(format!("{}: detrending needs at least 2 months", series.name)));
    }
    let n = series.grid.n_cells();
    let t_mean = (t_len - 1) as f64 / 2.0;
    let stt: f64 = (0..t_len).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let v = series.values();
    let mut fit = vec![(0.0, 0.0); n];
    for &c in series.grid.ocean_cells() {
        let mean = (0..t_len).map(|t| v[t * n + c]).sum::<f64>() / t_len as f64;
        let sxy: f64 = (0..t_len).map(|t| (t as f64 - t_mean) * (v[t * n + c] - mean)).sum();
        fit[c] = (mean, sxy / stt);
    }
    series.derive(series.name.clone(), series.units.clone(), |t, c| {
        let (mean, slope) = fit[c];
        v[t * n + c] - mean - slope * (t as f64 - t_mean)
    })
}

/// Empirical percentile of sorted data with linear interpolation between
/// order statistics (`rank = p/100·(n−1)`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ocean values of `series` over the index range `r`.
fn ocean_values(series: &FieldSeries, r: Range<usize>, out: &mut Vec<f64>) {
    for t in r {
        let f = series.frame(t);
        out.extend(series.grid.ocean_cells().iter().map(|&c| f[c]));
    }
}

/// Pooled `(p_lo, p_hi)` thresholds over ocean cells and the given index
/// ranges of each series.
pub fn clip_thresholds(parts: &[(&FieldSeries, Range<usize>)], lo: f64, hi: f64) -> Result<(f64, f64)> {
    let mut pool = Vec::new();
    for (s, r) in parts {
        if r.end > s.len() {
            return Err(Error::Time(format!("{}: reference range {r:?} exceeds {} months", s.name, s.len())));
        }
        ocean_values(s, r.clone(), &mut pool);
    }
    if pool.is_empty() {
        return Err(Error::Invalid("clip reference period is empty".into()));
    }
    pool.sort_by(f64::total_cmp);
    Ok((percentile_sorted(&pool, lo), percentile_sorted(&pool, hi)))
}

pub fn clamp_series(series: &FieldSeries, (lo, hi): (f64, f64)) -> Result<FieldSeries> {
    series.map(series.name.clone(), series.units.clone(), |v| v.clamp(lo, hi))
}

/// Clamps `series` into its `[lo, hi]` percentiles over the `reference` months.
pub fn clip_percentiles(series: &FieldSeries, lo: f64, hi: f64, reference: Range<usize>) -> Result<FieldSeries> {
    let th = clip_thresholds(&[(series, reference)], lo, hi)?;
    clamp_series(series, th)
}

/// Frame-wise mask-renormalized Gaussian filter.
pub fn gaussian_smooth(series: &FieldSeries, sigma: f64) -> Result<FieldSeries> {
    if !(sigma > 0.0) {
        return Err(Error::Invalid("smoothing sigma must be positive".into()));
    }
    let g = &series.grid;
    let s = Smoother::new(g.n_lat(), g.n_lon(), g.mask(), sigma);
    let mut values = Vec::with_capacity(series.values().len());
    for t in 0..series.len() {
        values.extend(s.apply(series.frame(t)));
    }
    FieldSeries::new(g.clone(), series.time, series.name.clone(), series.units.clone(), values)
}

/// Scalar mean and population standard deviation per named quantity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormStats {
    entries: Vec<(String, f64, f64)>,
}

impl NormStats {
    pub fn insert(&mut self, name: &str, mean: f64, std: f64) -> Result<()> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        match self.entries.iter_mut().find(|e| e.0 == name) {
            Some(e) => *e = (name.to_string(), mean, std),
            None => self.entries.push((name.to_string(), mean, std)),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<(f64, f64)> {
        self.entries
            .iter()
            .find(|e| e.0 == name)
            .map(|e| (e.1, e.2))
            .ok_or_else(|| Error::MissingVariable(format!("normalization stats for {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    /// `name=mean,std` lines in insertion order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, m, sd) in &self.entries {
            writeln!(s, "{n}={m:?},{sd:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, FormatError> {
        let mut out = Self::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || FormatError::Invalid(format!("line {}: expected `name=mean,std`", k + 1));
            let (name, rest) = line.split_once('=').ok_or_else(bad)?;
            let (m, sd) = rest.split_once(',').ok_or_else(bad)?;
            let m: f64 = m.trim().parse().map_err(|_| bad())?;
            let sd: f64 = sd.trim().parse().map_err(|_| bad())?;
            out.insert(name.trim(), m, sd)
                .map_err(|_| FormatError::Invalid(format!("line {}: non-positive std", k + 1)))?;
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|source| Error::Format {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Pooled mean and population std over ocean cells and the given ranges.
pub fn zscore_fit(name: &str, parts: &[(&FieldSeries, Range<usize>)]) -> Result<(f64, f64)> {
    let mut pool = Vec::new();
    for (s, r) in parts {
        ocean_values(s, r.clone(), &mut pool);
    }
    if pool.is_empty() {
        return Err(Error::Invalid(format!("{name}: empty training portion")));
    }
    let n = pool.len() as f64;
    let mean = pool.iter().sum::<f64>() / n;
    let var = pool.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs()) || std == 0.0 {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    Ok((mean, std))
}

pub fn zscore_apply(series: &FieldSeries, (mean, std): (f64, f64)) -> Result<FieldSeries> {
    series.map(series.name.clone(), series.units.clone(), |v| (v - mean) / std)
}

/// Chronological train / validation / test month ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }
}

impl Split {
    pub fn range(&self, k: SplitKind) -> Range<usize> {
        match k {
            SplitKind::Train => self.train.clone(),
            SplitKind::Val => self.val.clone(),
            SplitKind::Test => self.test.clone(),
        }
    }

    pub fn kind_of(&self, t: usize) -> Option<SplitKind> {
        SplitKind::ALL.into_iter().find(|&k| self.range(k).contains(&t))
    }
}

/// First `⌊f₀·T⌋` months train, next `⌊f₁·T⌋` validation, rest test.
pub fn temporal_split(time: &TimeAxis, fractions: [f64; 3]) -> Result<Split> {
    let t = time.len;
    let n_train = (fractions[0] * t as f64 + 1e-9).floor() as usize;
    let n_val = (fractions[1] * t as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= t {
        return Err(Error::Time(format!(
            "{t} months cannot be split {fractions:?} into three non-empty ranges"
        )));
    }
    Ok(Split {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..t,
    })
}

/// One reanalysis member with its concepts and target.
#[derive(Debug, Clone)]
pub struct MemberData {
    pub dataset: Dataset,
    pub concepts: ConceptSet,
    pub mlhc: FieldSeries,
}

/// Offset of `s` on the member's base (input) axis.
fn offset_on(base: &TimeAxis, s: &FieldSeries) -> Result<usize> {
    let off = base
        .index_of(s.time.start)
        .ok_or_else(|| Error::Time(format!("{} starts outside the input period", s.name)))?;
    if off + s.len() > base.len {
        return Err(Error::Time(format!("{} extends past the input period", s.name)));
    }
    Ok(off)
}

/// Index range of `s` covering base months `r` (clamped to the series).
fn local_range(off: usize, len: usize, r: &Range<usize>) -> Range<usize> {
    let a = r.start.max(off).min(off + len) - off;
    let b = r.end.max(off).min(off + len) - off;
    a..b
}

/// Normalized per-member arrays on the base axis, land and invalid months 0.
#[derive(Debug, Clone)]
pub struct MemberArrays {
    pub member: usize,
    /// `[T][12][cells]`.
    pub inputs: Vec<f32>,
    /// `[T][4][cells]`.
    pub concepts: Vec<f32>,
    /// `[T][cells]`.
    pub mlhc: Vec<f32>,
    /// First base month from which every input and concept is available.
    pub first_valid: usize,
    /// Base months where concept and MLHC targets exist.
    pub target_months: Range<usize>,
}

/// Index of one supervised sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    /// Position in [`SampleSet::members`].
    pub member: usize,
    /// Target month on the base axis.
    pub t: usize,
}

/// Materialized sample (one member-month).
#[derive(Debug, Clone)]
pub struct Sample {
    /// `[context·12 × n_lat × n_lon]`, oldest month first.
    pub x: Vec<f32>,
    /// `[4 × n_lat × n_lon]`.
    pub c_target: Vec<f32>,
    /// `[n_lat × n_lon]`.
    pub y_target: Vec<f32>,
    pub target_time: YearMonth,
    pub member: usize,
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub kind: SplitKind,
    pub grid: Arc<GeoGrid>,
    pub base: TimeAxis,
    pub context: usize,
    pub lead: usize,
    pub stats: Arc<NormStats>,
    pub members: Arc<Vec<MemberArrays>>,
    pub samples: Vec<SampleRef>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn in_channels(&self) -> usize {
        self.context * INPUT_VARS.len()
    }

    /// First and last (inclusive) base month of the context window.
    pub fn context_months(&self, r: SampleRef) -> (usize, usize) {
        let last = r.t - self.lead;
        (last + 1 - self.context, last)
    }

    /// Input window of a sample, `[context·12 × cells]`.
    pub fn x(&self, r: SampleRef) -> &[f32] {
        let n = self.n_cells() * INPUT_VARS.len();
        let (a, b) = self.context_months(r);
        &self.members[r.member].inputs[a * n..(b + 1) * n]
    }

    pub fn concept_target(&self, r: SampleRef) -> &[f32] {
        let n = self.n_cells() * 4;
        &self.members[r.member].concepts[r.t * n..(r.t + 1) * n]
    }

    pub fn y_target(&self, r: SampleRef) -> &[f32] {
        let n = self.n_cells();
        &self.members[r.member].mlhc[r.t * n..(r.t + 1) * n]
    }

    pub fn sample(&self, i: usize) -> Sample {
        let r = self.samples[i];
        Sample {
            x: self.x(r).to_vec(),
            c_target: self.concept_target(r).to_vec(),
            y_target: self.y_target(r).to_vec(),
            target_time: self.base.at(r.t),
            member: self.members[r.member].member,
        }
    }

    /// Samples of one member, in target-month order.
    pub fn member_samples(&self, member: usize) -> Vec<SampleRef> {
        self.samples.iter().copied().filter(|r| r.member == member).collect()
    }
}

/// Valid target months of a split: target, and every context month, lie in
/// `split ∩ [first_valid, …)`, with targets inside `targets`.
pub fn valid_targets(
    split: &Range<usize>,
    first_valid: usize,
    targets: &Range<usize>,
    context: usize,
    lead: usize,
) -> Range<usize> {
    let lo = split.start.max(first_valid) + context + lead - 1;
    let lo = lo.max(targets.start);
    let hi = split.end.min(targets.end);
    lo..hi.max(lo)
}

/// Output of the conditioning chain for an ensemble of members.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: Arc<NormStats>,
    pub split: Split,
    /// `(name, p_lo, p_hi)` for every clipped quantity.
    pub clip: Vec<(String, f64, f64)>,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

impl Prepared {
    pub fn set(&self, k: SplitKind) -> &SampleSet {
        match k {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

fn conditioned(
    cfg: &PreprocConfig,
    name: &str,
    per_member: Vec<FieldSeries>,
    offsets: &[usize],
    train: &Range<usize>,
    detrend: bool,
    clip: bool,
    smooth: bool,
    clip_log: &mut Vec<(String, f64, f64)>,
    stats: &mut NormStats,
) -> Result<Vec<FieldSeries>> {
    let mut series = per_member;
    if detrend {
        series = series.iter().map(detrend_linear).collect::<Result<_>>()?;
    }
    let ranges: Vec<Range<usize>> = series
        .iter()
        .zip(offsets)
        .map(|(s, &off)| local_range(off, s.len(), train))
        .collect();
    if clip {
        let parts: Vec<_> = series.iter().zip(&ranges).map(|(s, r)| (s, r.clone())).collect();
        let th = clip_thresholds(&parts, cfg.clip_lo, cfg.clip_hi)?;
        clip_log.push((name.to_string(), th.0, th.1));
        series = series.iter().map(|s| clamp_series(s, th)).collect::<Result<_>>()?;
    }
    if smooth {
        series = series.iter().map(|s| gaussian_smooth(s, cfg.smooth_sigma)).collect::<Result<_>>()?;
    }
    let parts: Vec<_> = series.iter().zip(&ranges).map(|(s, r)| (s, r.clone())).collect();
    let moments = zscore_fit(name, &parts)?;
    stats.insert(name, moments.0, moments.1)?;
    series.iter().map(|s| zscore_apply(s, moments)).collect()
}

/// Writes normalized ocean values of `s` (at base offset `off`) into slot
/// `slot` of a `[T][slots][cells]` array; land stays 0.
fn scatter(dst: &mut [f32], s: &FieldSeries, off: usize, slot: usize, slots: usize) {
    let n = s.grid.n_cells();
    for t in 0..s.len() {
        let f = s.frame(t);
        let row = &mut dst[((off + t) * slots + slot) * n..((off + t) * slots + slot + 1) * n];
        for &c in s.grid.ocean_cells() {
            row[c] = f[c] as f32;
        }
    }
}

/// Runs the full conditioning chain on every member and assembles the three
/// sample sets.
pub fn prepare(members: &[MemberData], cfg: &PreprocConfig) -> Result<Prepared> {
    cfg.validate()?;
    let first = members.first().ok_or_else(|| Error::Invalid("no members to preprocess".into()))?;
    let grid = first.dataset.grid().clone();
    let base = first.dataset.time();
    for m in members {
        if m.dataset.time() != base || **m.dataset.grid() != *grid {
            return Err(Error::Grid(format!("member {} is not aligned with member {}", m.dataset.member, first.dataset.member)));
        }
        if **m.concepts.grid() != *grid || *m.mlhc.grid != *grid {
            return Err(Error::Grid(format!("member {}: concept/target grid differs from inputs", m.dataset.member)));
        }
    }
    let split = temporal_split(&base, cfg.split)?;
    let mut stats = NormStats::default();
    let mut clip_log = Vec::new();
    let n = grid.n_cells();
    let t_len = base.len;

    let mut arrays: Vec<MemberArrays> = members
        .iter()
        .map(|m| MemberArrays {
            member: m.dataset.member,
            inputs: vec![0.0; t_len * 12 * n],
            concepts: vec![0.0; t_len * 4 * n],
            mlhc: vec![0.0; t_len * n],
            first_valid: 0,
            target_months: 0..0,
        })
        .collect();

    for (k, (name, _)) in INPUT_VARS.iter().enumerate() {
        let is_static = STATIC_VARS.contains(name);
        let series: Vec<FieldSeries> = members.iter().map(|m| m.dataset.get(name).cloned()).collect::<Result<_>>()?;
        let offs = vec![0; series.len()];
        let out = conditioned(cfg, name, series, &offs, &split.train, !is_static, !is_static, false, &mut clip_log, &mut stats)?;
        for (a, s) in arrays.iter_mut().zip(&out) {
            scatter(&mut a.inputs, s, 0, k, 12);
        }
    }
    for (k, name) in CONCEPT_NAMES.iter().enumerate() {
        let series: Vec<FieldSeries> = members.iter().map(|m| m.concepts.as_array()[k].clone()).collect();
        let offs: Vec<usize> = series.iter().map(|s| offset_on(&base, s)).collect::<Result<_>>()?;
        let out = conditioned(cfg, name, series, &offs, &split.train, true, true, true, &mut clip_log, &mut stats)?;
        for ((a, s), &off) in arrays.iter_mut().zip(&out).zip(&offs) {
            scatter(&mut a.concepts, s, off, k, 4);
        }
    }
    {
        let series: Vec<FieldSeries> = members.iter().map(|m| m.mlhc.clone()).collect();
        let offs: Vec<usize> = series.iter().map(|s| offset_on(&base, s)).collect::<Result<_>>()?;
        let out = conditioned(cfg, "mlhc", series, &offs, &split.train, false, false, false, &mut clip_log, &mut stats)?;
        for ((a, s), &off) in arrays.iter_mut().zip(&out).zip(&offs) {
            scatter(&mut a.mlhc, s, off, 0, 1);
        }
    }
    for (a, m) in arrays.iter_mut().zip(members) {
        let c = &m.concepts.vos2;
        let c_off = offset_on(&base, c)?;
        let y_off = offset_on(&base, &m.mlhc)?;
        a.first_valid = c_off;
        let lo = c_off.max(y_off);
        let hi = (c_off + c.len()).min(y_off + m.mlhc.len());
        a.target_months = lo..hi.max(lo);
    }

    let stats = Arc::new(stats);
    let members_arc = Arc::new(arrays);
    let build = |kind: SplitKind| -> Result<SampleSet> {
        let range = split.range(kind);
        let mut samples = Vec::new();
        for (mi, a) in members_arc.iter().enumerate() {
            for t in valid_targets(&range, a.first_valid, &a.target_months, cfg.context_months, cfg.lead_months) {
                samples.push(SampleRef { member: mi, t });
            }
        }
        if samples.is_empty() {
            return Err(Error::Time(format!(
                "{} split {range:?} holds no sample with {} context and {} lead months",
                kind.name(),
                cfg.context_months,
                cfg.lead_months
            )));
        }
        Ok(SampleSet {
            kind,
            grid: grid.clone(),
            base,
            context: cfg.context_months,
            lead: cfg.lead_months,
            stats: stats.clone(),
            members: members_arc.clone(),
            samples,
        })
    };
    Ok(Prepared {
        train: build(SplitKind::Train)?,
        val: build(SplitKind::Val)?,
        test: build(SplitKind::Test)?,
        stats: stats.clone(),
        split: split.clone(),
        clip: clip_log,
    })
}
