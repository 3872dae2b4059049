//! Mechanistic diagnostics: bottleneck contributions and their spread across
//! members, free-concept discrepancy composites, the concept-regularization
//! comparison and regional anomaly retrospectives.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::ensemble::Variable;
use crate::error::{Error, Result};
use crate::eval::{fmt_acc, season_steps, AccScalar, Season, TableRow, TABLE_HEADER};
use crate::grid::{anomalies, basin_mean, monthly_climatology, FieldSeries, GeoGrid, TimeAxis, Weighting, YearMonth};
use crate::nn::{Mode, Network, Real};

/// Relative weight of each bottleneck channel in the combine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ContributionVector {
    /// `|w_k| / Σ|w_j|`.
    pub fn from_weights(weights: &[f64], labels: Vec<String>) -> Result<Self> {
        if weights.len() != labels.len() {
            return Err(Error::Shape(format!("{} weights for {} labels", weights.len(), labels.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite combine weight".into()));
        }
        let total: f64 = weights.iter().map(|w| w.abs()).sum();
        if total == 0.0 {
            return Err(Error::Numerical("combine weights are all zero".into()));
        }
        Ok(Self {
            labels,
            values: weights.iter().map(|w| w.abs() / total).collect(),
        })
    }

    /// Channel indices from largest to smallest contribution.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }
}

pub fn bottleneck_contributions<T: Real>(net: &Network<T>) -> Result<ContributionVector> {
    let w: Vec<f64> = net.combine_weights().iter().map(|v| v.f64()).collect();
    ContributionVector::from_weights(&w, net.cfg.mode.channel_labels())
}

/// Whether the supervised concepts rank in the same order as `teacher`
/// weights by magnitude (free channel ignored).
pub fn ordering_matches(c: &ContributionVector, teacher: &[f64]) -> bool {
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
        idx
    };
    c.values.len() >= teacher.len() && order(&c.values[..teacher.len()]) == order(teacher)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionSpread {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    /// Population std across members.
    pub std: Vec<f64>,
    /// Mean of the per-channel stds.
    pub summary: f64,
}

pub fn contribution_spread(members: &[ContributionVector]) -> Result<ContributionSpread> {
    if members.len() < 2 {
        return Err(Error::Invalid("contribution spread needs at least two members".into()));
    }
    let labels = members[0].labels.clone();
    if let Some(m) = members.iter().find(|m| m.labels != labels) {
        return Err(Error::Invalid(format!("channel labels differ: {:?} vs {:?}", m.labels, labels)));
    }
    let k = members.len() as f64;
    let mean: Vec<f64> = (0..labels.len()).map(|j| members.iter().map(|m| m.values[j]).sum::<f64>() / k).collect();
    let std: Vec<f64> = (0..labels.len())
        .map(|j| (members.iter().map(|m| (m.values[j] - mean[j]).powi(2)).sum::<f64>() / k).sqrt())
        .collect();
    let summary = std.iter().sum::<f64>() / std.len() as f64;
    Ok(ContributionSpread { labels, mean, std, summary })
}

/// `config,member,<labels...>` rows, one per member.
pub fn contributions_csv(rows: &[(Mode, u64, ContributionVector)]) -> String {
    let mut s = String::from("config,seed,channel,contribution\n");
    for (mode, seed, c) in rows {
        for (l, v) in c.labels.iter().zip(&c.values) {
            writeln!(s, "{},{seed},{l},{v:.6}", mode.name()).unwrap();
        }
    }
    s
}

pub fn spread_csv(rows: &[(Mode, ContributionSpread)]) -> String {
    let mut s = String::from("config,channel,mean,std\n");
    for (mode, sp) in rows {
        for j in 0..sp.labels.len() {
            writeln!(s, "{},{},{:.6},{:.6}", mode.name(), sp.labels[j], sp.mean[j], sp.std[j]).unwrap();
        }
        writeln!(s, "{},summary,,{:.6}", mode.name(), sp.summary).unwrap();
    }
    s
}

/// Per-cell seasonal time mean of some quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalComposite {
    pub season: Season,
    pub grid: Arc<GeoGrid>,
    /// `[n_lat × n_lon]`, NaN on land.
    pub values: Vec<f64>,
    pub n_steps: usize,
    first: YearMonth,
}

impl SeasonalComposite {
    pub fn to_series(&self, name: &str) -> Result<FieldSeries> {
        FieldSeries::new(self.grid.clone(), TimeAxis::new(self.first, 1)?, name, "1", self.values.clone())
    }
}

/// Seasonal composites of `ŷ − free` over every segment pair. Seasons with
/// no steps are omitted.
pub fn free_concept_discrepancy(pred: &[FieldSeries], free: &[FieldSeries], seasons: &[Season]) -> Result<Vec<SeasonalComposite>> {
    if pred.len() != free.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} prediction segments, {} free-concept segments", pred.len(), free.len())));
    }
    for (p, f) in pred.iter().zip(free) {
        p.check_aligned(f)?;
    }
    let grid = pred[0].grid.clone();
    if let Some(p) = pred.iter().find(|p| !(Arc::ptr_eq(&p.grid, &grid) || *p.grid == *grid)) {
        return Err(Error::Grid(format!("{}: segment grids differ", p.name)));
    }
    let n = grid.n_cells();
    let mut out = Vec::new();
    for &season in seasons {
        let mut sum = vec![0.0; n];
        let mut steps = 0;
        let mut first: Option<YearMonth> = None;
        for (p, f) in pred.iter().zip(free) {
            for t in season_steps(&p.time, season) {
                steps += 1;
                first = Some(first.map_or(p.time.at(t), |x| x.min(p.time.at(t))));
                let (a, b) = (p.frame(t), f.frame(t));
                for &c in grid.ocean_cells() {
                    sum[c] += a[c] - b[c];
                }
            }
        }
        let Some(first) = first else { continue };
        let mut values = vec![f64::NAN; n];
        for &c in grid.ocean_cells() {
            values[c] = sum[c] / steps as f64;
        }
        out.push(SeasonalComposite {
            season,
            grid: grid.clone(),
            values,
            n_steps: steps,
            first,
        });
    }
    Ok(out)
}

/// Latitude/longitude box, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lat: (f64, f64),
    pub lon: (f64, f64),
}

impl Region {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat.0..=self.lat.1).contains(&lat) && (self.lon.0..=self.lon.1).contains(&lon)
    }
}

/// Row and column ranges of `region` on `grid`.
fn crop_bounds(grid: &GeoGrid, region: &Region) -> Result<(Vec<usize>, Vec<usize>)> {
    let rows: Vec<usize> = (0..grid.n_lat()).filter(|&i| (region.lat.0..=region.lat.1).contains(&grid.lat()[i])).collect();
    let cols: Vec<usize> = (0..grid.n_lon()).filter(|&j| (region.lon.0..=region.lon.1).contains(&grid.lon()[j])).collect();
    let ocean = rows.iter().any(|&i| cols.iter().any(|&j| grid.is_ocean(i, j)));
    if !ocean {
        return Err(Error::Grid(format!("region {region:?} contains no ocean cell")));
    }
    Ok((rows, cols))
}

/// Sub-series of `s` restricted to the rows and columns given.
fn crop(s: &FieldSeries, rows: &[usize], cols: &[usize]) -> Result<FieldSeries> {
    let g = &s.grid;
    let mask = rows.iter().flat_map(|&i| cols.iter().map(move |&j| g.is_ocean(i, j))).collect();
    let sub = Arc::new(GeoGrid::new(
        rows.iter().map(|&i| g.lat()[i]).collect(),
        cols.iter().map(|&j| g.lon()[j]).collect(),
        mask,
    )?);
    let w = cols.len();
    let n_lon = g.n_lon();
    FieldSeries::from_fn(sub, s.time, s.name.clone(), s.units.clone(), |t, c| s.get(t, rows[c / w] * n_lon + cols[c % w]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetroField {
    pub name: String,
    /// Anomalies over the window, cropped to the region.
    pub maps: FieldSeries,
    /// Region-mean anomaly per window month.
    pub region_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrospectiveReport {
    pub region: Region,
    pub event: YearMonth,
    pub window: usize,
    pub fields: Vec<RetroField>,
}

impl RetrospectiveReport {
    pub fn months(&self) -> Vec<YearMonth> {
        (0..self.window).map(|k| self.event.add_months(k as i64 + 1 - self.window as i64)).collect()
    }

    /// `field,month,anomaly` over the window.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("field,month,region_mean_anomaly\n");
        let months = self.months();
        for f in &self.fields {
            for (m, v) in months.iter().zip(&f.region_mean) {
                writeln!(s, "{},{m},{v:.6}", f.name).unwrap();
            }
        }
        s
    }
}

/// Anomalies (against each series' full-period monthly climatology) for the
/// `window` months ending at `event`, cropped to `region`.
pub fn retrospective(fields: &[(&str, &FieldSeries)], region: Region, event: YearMonth, window: usize) -> Result<RetrospectiveReport> {
    if window == 0 {
        return Err(Error::Invalid("retrospective window must be at least one month".into()));
    }
    let mut out = Vec::new();
    for (name, s) in fields {
        let end = s
            .time
            .index_of(event)
            .ok_or_else(|| Error::Time(format!("{name}: event month {event} outside series")))?;
        if end + 1 < window {
            return Err(Error::Time(format!("{name}: {window}-month window before {event} starts before the series")));
        }
        let (rows, cols) = crop_bounds(&s.grid, &region)?;
        let clim = monthly_climatology(s, 0..s.len())?;
        let anom = anomalies(s, &clim)?.slice_time(end + 1 - window..end + 1)?;
        let maps = crop(&anom, &rows, &cols)?.with_name(format!("{name}_anom"), s.units.clone());
        let region_mean = basin_mean(&maps, Weighting::Uniform)?;
        out.push(RetroField {
            name: name.to_string(),
            maps,
            region_mean,
        });
    }
    Ok(RetrospectiveReport {
        region,
        event,
        window,
        fields: out,
    })
}

/// Pearson correlation of `a(t)` with `b(t + lag)`.
pub fn lagged_correlation(a: &[f64], b: &[f64], lag: usize) -> Option<f64> {
    if lag >= a.len().min(b.len()) {
        return None;
    }
    let n = a.len().min(b.len()) - lag;
    crate::eval::pearson(&a[..n], &b[lag..lag + n])
}

/// Lag in `0..=max_lag` at which `a` best leads `b`.
pub fn peak_lag(a: &[f64], b: &[f64], max_lag: usize) -> Option<(usize, f64)> {
    (0..=max_lag)
        .filter_map(|l| lagged_correlation(a, b, l).map(|r| (l, r)))
        .max_by(|x, y| x.1.total_cmp(&y.1))
}

/// Paired seasonal ACC of the mixed and prescription-only configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationRow {
    pub variable: Variable,
    pub season: Season,
    pub mixed: AccScalar,
    pub prescription: AccScalar,
}

impl RegularizationRow {
    pub fn delta(&self) -> f64 {
        self.mixed.acc - self.prescription.acc
    }
}

pub fn regularization_report(table: &[TableRow]) -> Result<Vec<RegularizationRow>> {
    let find = |v: Variable, m: Mode, s: Season| table.iter().find(|r| r.variable == v && r.mode == m && r.season == s);
    let mut out = Vec::new();
    for var in Variable::EVAL_ORDER {
        for season in Season::ALL {
            let (a, b) = (find(var, Mode::Mixed, season), find(var, Mode::PrescriptionOnly, season));
            let (a, b) = match (a, b) {
                (Some(a), Some(b)) => (a, b),
                (None, None) => continue,
                _ => {
                    return Err(Error::MissingVariable(format!(
                        "{} {}: both mixed and prescription_only rows are needed",
                        var.name(),
                        season.name()
                    )))
                }
            };
            if (a.acc.n_cells + a.acc.n_excluded, a.acc.n_steps) != (b.acc.n_cells + b.acc.n_excluded, b.acc.n_steps) {
                return Err(Error::Shape(format!("{} {}: configurations were evaluated on different samples", var.name(), season.name())));
            }
            out.push(RegularizationRow {
                variable: var,
                season,
                mixed: a.acc,
                prescription: b.acc,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::MissingVariable("no variable has both mixed and prescription_only rows".into()));
    }
    Ok(out)
}

pub fn regularization_csv(rows: &[RegularizationRow]) -> String {
    let mut s = format!("{TABLE_HEADER},delta\n");
    for r in rows {
        for (mode, a) in [(Mode::Mixed, &r.mixed), (Mode::PrescriptionOnly, &r.prescription)] {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.variable.name(),
                mode.name(),
                r.season.name(),
                fmt_acc(a.acc),
                a.n_cells,
                a.n_steps,
                fmt_acc(r.delta())
            )
            .unwrap();
        }
    }
    s
}

/// Mean delta over seasons for one variable and the sign per season.
pub fn delta_summary(rows: &[RegularizationRow], var: Variable) -> Option<(f64, String)> {
    let d: Vec<(Season, f64)> = rows.iter().filter(|r| r.variable == var).map(|r| (r.season, r.delta())).collect();
    if d.is_empty() {
        return None;
    }
    let mean = d.iter().map(|x| x.1).sum::<f64>() / d.len() as f64;
    let signs = d
        .iter()
        .map(|(s, v)| format!("{}{}", s.name(), if *v > 0.0 { '+' } else if *v < 0.0 { '-' } else { '0' }))
        .collect::<Vec<_>>()
        .join(" ");
    Some((mean, signs))
}
