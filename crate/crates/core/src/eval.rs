//! Forecast verification: seasonal anomaly correlation (ACC) maps, scalar
//! ACC in two flavours, the seasonal comparison table and basin-mean series.
//!
//! Everything works on lists of aligned `(prediction, target)` segments so an
//! evaluation period spanning several data members is verified as one pool.
//! The climatology is supplied by the caller and is normally fitted on the
//! target segments themselves.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::ensemble::{EnsembleField, Variable};
use crate::error::{Error, Result};
use crate::grid::{anomalies, basin_mean, Climatology, FieldSeries, GeoGrid, TimeAxis, Weighting, YearMonth};
use crate::nn::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Djf, Season::Mam, Season::Jja, Season::Son];

    pub fn months(self) -> [u8; 3] {
        match self {
            Season::Djf => [12, 1, 2],
            Season::Mam => [3, 4, 5],
            Season::Jja => [6, 7, 8],
            Season::Son => [9, 10, 11],
        }
    }

    pub fn of_month(month: u8) -> Self {
        match month {
            12 | 1 | 2 => Season::Djf,
            3..=5 => Season::Mam,
            6..=8 => Season::Jja,
            _ => Season::Son,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name().eq_ignore_ascii_case(s))
    }
}

/// Steps of `time` in `season`. A winter is kept only when its December,
/// January and February are all on the axis.
pub fn season_steps(time: &TimeAxis, season: Season) -> Vec<usize> {
    (0..time.len)
        .filter(|&t| {
            let m = time.month_of(t);
            if Season::of_month(m) != season {
                return false;
            }
            match m {
                12 => t + 2 < time.len,
                1 => t >= 1 && t + 1 < time.len,
                2 => t >= 2,
                _ => true,
            }
        })
        .collect()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Anomaly standard deviation below which a cell counts as zero-variance.
/// Normalized fields are O(1), so an absolute floor suffices and also catches
/// round-off left by climatology removal on constant cells.
pub const MIN_STD: f64 = 1e-10;

fn std_of(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Anomaly pairs gathered per ocean cell over the season's steps of every
/// segment: `[ocean cell][pooled step]`.
struct Pairs {
    grid: Arc<GeoGrid>,
    pred: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    n_steps: usize,
    first: YearMonth,
}

impl Pairs {
    fn cell_acc(&self, k: usize) -> Option<f64> {
        if std_of(&self.pred[k]) < MIN_STD || std_of(&self.target[k]) < MIN_STD {
            return None;
        }
        pearson(&self.pred[k], &self.target[k])
    }
}

fn gather(segments: &[(&FieldSeries, &FieldSeries)], clim: &Climatology, season: Season) -> Result<Pairs> {
    let (p0, _) = segments.first().ok_or_else(|| Error::Invalid("no evaluation segments".into()))?;
    let grid = p0.grid.clone();
    let n_ocean = grid.n_ocean();
    let mut pred = vec![Vec::new(); n_ocean];
    let mut target = vec![Vec::new(); n_ocean];
    let mut n_steps = 0;
    let mut first: Option<YearMonth> = None;
    for (p, t) in segments {
        p.check_aligned(t)?;
        if !(Arc::ptr_eq(&p.grid, &grid) || *p.grid == *grid) {
            return Err(Error::Grid(format!("{}: segment grids differ", p.name)));
        }
        let pa = anomalies(p, clim)?;
        let ta = anomalies(t, clim)?;
        for s in season_steps(&p.time, season) {
            n_steps += 1;
            let ym = p.time.at(s);
            first = Some(first.map_or(ym, |f| f.min(ym)));
            let (fp, ft) = (pa.frame(s), ta.frame(s));
            for (k, &c) in grid.ocean_cells().iter().enumerate() {
                pred[k].push(fp[c]);
                target[k].push(ft[c]);
            }
        }
    }
    if n_steps < 2 {
        return Err(Error::Time(format!("{} has {n_steps} evaluation steps, need at least 2", season.name())));
    }
    Ok(Pairs {
        grid,
        pred,
        target,
        n_steps,
        first: first.unwrap(),
    })
}

/// Per-cell seasonal ACC. Land and zero-variance cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct AccMap {
    pub grid: Arc<GeoGrid>,
    pub season: Season,
    /// `[n_lat × n_lon]`
    pub values: Vec<f64>,
    pub n_steps: usize,
    /// Ocean cells dropped for zero anomaly variance.
    pub n_excluded: usize,
    first: YearMonth,
}

impl AccMap {
    pub fn n_valid(&self) -> usize {
        self.grid.n_ocean() - self.n_excluded
    }

    /// One-step series on a grid whose mask also hides excluded cells.
    pub fn to_series(&self, name: &str) -> Result<FieldSeries> {
        let mask: Vec<bool> = self.values.iter().map(|v| !v.is_nan()).collect();
        let grid = Arc::new(GeoGrid::new(self.grid.lat().to_vec(), self.grid.lon().to_vec(), mask)?);
        FieldSeries::new(grid, TimeAxis::new(self.first, 1)?, name, "1", self.values.clone())
    }

    /// Mean over valid cells.
    pub fn mean(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn acc_map(segments: &[(&FieldSeries, &FieldSeries)], clim: &Climatology, season: Season) -> Result<AccMap> {
    let p = gather(segments, clim, season)?;
    let mut values = vec![f64::NAN; p.grid.n_cells()];
    let mut n_excluded = 0;
    for (k, &c) in p.grid.ocean_cells().iter().enumerate() {
        match p.cell_acc(k) {
            Some(r) => values[c] = r,
            None => n_excluded += 1,
        }
    }
    Ok(AccMap {
        grid: p.grid,
        season,
        values,
        n_steps: p.n_steps,
        n_excluded,
        first: p.first,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccMode {
    /// One correlation over every valid (cell, step) anomaly pair.
    Pooled,
    /// Mean of the per-cell map over valid cells.
    MapMean,
}

impl AccMode {
    pub fn name(self) -> &'static str {
        match self {
            AccMode::Pooled => "pooled",
            AccMode::MapMean => "map_mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccScalar {
    pub acc: f64,
    pub n_cells: usize,
    pub n_steps: usize,
    pub n_excluded: usize,
}

pub fn acc_scalar(segments: &[(&FieldSeries, &FieldSeries)], clim: &Climatology, season: Season, mode: AccMode) -> Result<AccScalar> {
    let p = gather(segments, clim, season)?;
    let valid: Vec<usize> = (0..p.pred.len()).filter(|&k| p.cell_acc(k).is_some()).collect();
    let n_excluded = p.pred.len() - valid.len();
    if valid.is_empty() {
        return Err(Error::ZeroVariance(format!("every cell in {}", season.name())));
    }
    let acc = match mode {
        AccMode::Pooled => {
            let a: Vec<f64> = valid.iter().flat_map(|&k| p.pred[k].iter().copied()).collect();
            let b: Vec<f64> = valid.iter().flat_map(|&k| p.target[k].iter().copied()).collect();
            pearson(&a, &b).expect("valid cells have variance")
        }
        AccMode::MapMean => {
            valid.iter().map(|&k| p.cell_acc(k).unwrap()).sum::<f64>() / valid.len() as f64
        }
    };
    Ok(AccScalar {
        acc,
        n_cells: valid.len(),
        n_steps: p.n_steps,
        n_excluded,
    })
}

/// Predictions of one configuration, one series per data-member segment.
#[derive(Debug, Clone)]
pub struct ConfigPredictions {
    pub mode: Mode,
    pub fields: Vec<(Variable, Vec<FieldSeries>)>,
}

impl ConfigPredictions {
    pub fn get(&self, var: Variable) -> Option<&[FieldSeries]> {
        self.fields.iter().find(|(v, _)| *v == var).map(|(_, s)| s.as_slice())
    }
}

/// Whether `mode` carries a prediction of `var` in the seasonal table.
pub fn reports(mode: Mode, var: Variable) -> bool {
    match var {
        Variable::Mlhc => true,
        Variable::Concept(_) => mode.supervised(),
        Variable::Free => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub variable: Variable,
    pub mode: Mode,
    pub season: Season,
    pub acc: AccScalar,
}

pub const TABLE_HEADER: &str = "variable,config,season,acc,n_cells,n_steps";

/// Seasonal ACC for every reported (variable, configuration, season).
/// Rows run variable-major in [`Variable::EVAL_ORDER`], then configuration
/// in the order given, then season. Each variable's climatology is fitted on
/// its target segments.
pub fn seasonal_table(configs: &[ConfigPredictions], targets: &[(Variable, Vec<FieldSeries>)], mode: AccMode) -> Result<Vec<TableRow>> {
    if configs.is_empty() {
        return Err(Error::Invalid("seasonal table needs at least one configuration".into()));
    }
    let mut rows = Vec::new();
    for var in Variable::EVAL_ORDER {
        let reporting: Vec<&ConfigPredictions> = configs.iter().filter(|c| reports(c.mode, var)).collect();
        if reporting.is_empty() {
            continue;
        }
        let tgt = targets
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::MissingVariable(format!("target {}", var.name())))?;
        let clim = Climatology::fit_many(&tgt.iter().collect::<Vec<_>>())?;
        for cfg in reporting {
            let pred = cfg
                .get(var)
                .ok_or_else(|| Error::MissingVariable(format!("{} prediction of {}", cfg.mode.name(), var.name())))?;
            if pred.len() != tgt.len() {
                return Err(Error::Shape(format!(
                    "{} {}: {} segments, targets have {}",
                    cfg.mode.name(),
                    var.name(),
                    pred.len(),
                    tgt.len()
                )));
            }
            let segs: Vec<(&FieldSeries, &FieldSeries)> = pred.iter().zip(tgt).collect();
            for season in Season::ALL {
                rows.push(TableRow {
                    variable: var,
                    mode: cfg.mode,
                    season,
                    acc: acc_scalar(&segs, &clim, season, mode)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn fmt_acc(v: f64) -> String {
    format!("{v:.6}")
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variable.name(),
            r.mode.name(),
            r.season.name(),
            fmt_acc(r.acc.acc),
            r.acc.n_cells,
            r.acc.n_steps
        )
        .unwrap();
    }
    s
}

/// Basin-mean target, ensemble mean and ±2σ band of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinSeries {
    pub time: TimeAxis,
    pub target: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

pub fn basin_timeseries(field: &EnsembleField, target: &FieldSeries, weighting: Weighting) -> Result<BasinSeries> {
    field.mean.check_aligned(target)?;
    let (lo, hi) = match &field.std {
        Some(std) => {
            let n = std.grid.n_cells();
            let m = field.mean.values();
            let lo = field.mean.derive("lo", "", |t, c| m[t * n + c] - 2.0 * std.values()[t * n + c])?;
            let hi = field.mean.derive("hi", "", |t, c| m[t * n + c] + 2.0 * std.values()[t * n + c])?;
            (Some(basin_mean(&lo, weighting)?), Some(basin_mean(&hi, weighting)?))
        }
        None => (None, None),
    };
    Ok(BasinSeries {
        time: target.time,
        target: basin_mean(target, weighting)?,
        mean: basin_mean(&field.mean, weighting)?,
        lo,
        hi,
    })
}

impl BasinSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("month,target,mean,lo,hi\n");
        let opt = |v: &Option<Vec<f64>>, t: usize| v.as_ref().map_or(String::new(), |v| format!("{:.6}", v[t]));
        for t in 0..self.time.len {
            writeln!(
                s,
                "{},{:.6},{:.6},{},{}",
                self.time.at(t),
                self.target[t],
                self.mean[t],
                opt(&self.lo, t),
                opt(&self.hi, t)
            )
            .unwrap();
        }
        s
    }
}
