//! Gridded data model: a regular lat-lon grid with an ocean mask, monthly time
//! axes, masked field stacks, and the climatology/anomaly machinery built on
//! top of them.
//!
//! Land cells hold a quiet NaN in memory. Every reduction walks the ocean
//! index list of the grid, so a land value never reaches arithmetic.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Mean Earth radius used for metric factors (m).
pub const EARTH_RADIUS: f64 = 6.371e6;

#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    lat: Vec<f64>,
    lon: Vec<f64>,
    mask: Vec<bool>,
    ocean: Vec<usize>,
}

fn strictly_monotonic(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

impl GeoGrid {
    /// Builds a grid from coordinate vectors and a row-major `[n_lat × n_lon]`
    /// ocean mask (`true` = ocean).
    pub fn new(lat: Vec<f64>, lon: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if lat.is_empty() || lon.is_empty() {
            return Err(Error::Grid("empty coordinate axis".into()));
        }
        if mask.len() != lat.len() * lon.len() {
            return Err(Error::Grid(format!(
                "mask has {} cells, expected {}×{}",
                mask.len(),
                lat.len(),
                lon.len()
            )));
        }
        if !strictly_monotonic(&lat) || !strictly_monotonic(&lon) {
            return Err(Error::Grid("coordinates must be strictly monotonic".into()));
        }
        if lat.iter().any(|&v| !(-90.0..=90.0).contains(&v)) {
            return Err(Error::Grid("latitude outside [-90, 90]".into()));
        }
        if lon.iter().any(|&v| !(-180.0..360.0).contains(&v)) {
            return Err(Error::Grid("longitude outside [-180, 360)".into()));
        }
        let ocean: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if ocean.is_empty() {
            return Err(Error::Grid("grid has no ocean cells".into()));
        }
        Ok(Self {
            lat,
            lon,
            mask,
            ocean,
        })
    }

    /// Evenly spaced cell centres spanning `[lat0, lat1] × [lon0, lon1]`.
    pub fn regular(
        n_lat: usize,
        n_lon: usize,
        lat_range: (f64, f64),
        lon_range: (f64, f64),
        mask: Vec<bool>,
    ) -> Result<Self> {
        let axis = |n: usize, (a, b): (f64, f64)| -> Vec<f64> {
            if n == 1 {
                vec![0.5 * (a + b)]
            } else {
                (0..n)
                    .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        };
        Self::new(axis(n_lat, lat_range), axis(n_lon, lon_range), mask)
    }

    pub fn all_ocean(n_lat: usize, n_lon: usize, lat_range: (f64, f64), lon_range: (f64, f64)) -> Result<Self> {
        Self::regular(n_lat, n_lon, lat_range, lon_range, vec![true; n_lat * n_lon])
    }

    pub fn n_lat(&self) -> usize {
        self.lat.len()
    }

    pub fn n_lon(&self) -> usize {
        self.lon.len()
    }

    pub fn n_cells(&self) -> usize {
        self.mask.len()
    }

    pub fn lat(&self) -> &[f64] {
        &self.lat
    }

    pub fn lon(&self) -> &[f64] {
        &self.lon
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Row-major indices of ocean cells, ascending.
    pub fn ocean_cells(&self) -> &[usize] {
        &self.ocean
    }

    pub fn n_ocean(&self) -> usize {
        self.ocean.len()
    }

    pub fn is_ocean(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_lon() + j]
    }

    /// Same coordinates with every cell marked ocean.
    pub fn without_mask(&self) -> Self {
        let n = self.n_cells();
        Self {
            lat: self.lat.clone(),
            lon: self.lon.clone(),
            mask: vec![true; n],
            ocean: (0..n).collect(),
        }
    }

    /// Uniform spacing `(dlat, dlon)` in degrees, if both axes are uniform.
    pub fn uniform_spacing(&self) -> Option<(f64, f64)> {
        fn step(v: &[f64]) -> Option<f64> {
            if v.len() < 2 {
                return None;
            }
            let d = v[1] - v[0];
            let tol = 1e-9 * d.abs().max(1.0);
            v.windows(2)
                .all(|w| ((w[1] - w[0]) - d).abs() <= tol)
                .then_some(d)
        }
        Some((step(&self.lat)?, step(&self.lon)?))
    }
}

/// Calendar month stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Time(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(n: i64) -> Self {
        Self {
            year: n.div_euclid(12) as i32,
            month: (n.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn add_months(self, k: i64) -> Self {
        Self::from_ordinal(self.ordinal() + k)
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// `len` consecutive months starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeAxis {
    pub start: YearMonth,
    pub len: usize,
}

impl TimeAxis {
    pub fn new(start: YearMonth, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Time("time axis must have at least one month".into()));
        }
        Ok(Self { start, len })
    }

    pub fn at(&self, t: usize) -> YearMonth {
        self.start.add_months(t as i64)
    }

    /// Calendar month (1..=12) of step `t`.
    pub fn month_of(&self, t: usize) -> u8 {
        self.at(t).month
    }

    pub fn index_of(&self, ym: YearMonth) -> Option<usize> {
        let d = ym.ordinal() - self.start.ordinal();
        (d >= 0 && (d as usize) < self.len).then_some(d as usize)
    }

    pub fn end(&self) -> YearMonth {
        self.at(self.len - 1)
    }

    /// Sub-axis for the index range `r`.
    pub fn slice(&self, r: Range<usize>) -> Result<Self> {
        if r.end > self.len || r.start >= r.end {
            return Err(Error::Time(format!(
                "range {r:?} invalid for axis of length {}",
                self.len
            )));
        }
        Self::new(self.at(r.start), r.end - r.start)
    }
}

/// A monthly stack of 2-D fields on a shared grid, `[T × n_lat × n_lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub grid: Arc<GeoGrid>,
    pub time: TimeAxis,
    pub name: String,
    pub units: String,
    values: Vec<f64>,
}

impl FieldSeries {
    /// Validates shape and ocean finiteness; land cells are overwritten with
    /// the sentinel.
    pub fn new(
        grid: Arc<GeoGrid>,
        time: TimeAxis,
        name: impl Into<String>,
        units: impl Into<String>,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        let n = grid.n_cells();
        if values.len() != time.len * n {
            return Err(Error::Shape(format!(
                "{name}: {} values for {} months × {} cells",
                values.len(),
                time.len,
                n
            )));
        }
        for (t, frame) in values.chunks_exact_mut(n).enumerate() {
            for (c, v) in frame.iter_mut().enumerate() {
                if grid.mask()[c] {
                    if !v.is_finite() {
                        return Err(Error::Invalid(format!(
                            "{name}: non-finite ocean value at t={t}, cell={c}"
                        )));
                    }
                } else {
                    *v = f64::NAN;
                }
            }
        }
        Ok(Self {
            grid,
            time,
            name,
            units: units.into(),
            values,
        })
    }

    /// Builds a series by evaluating `f(t, cell)` on ocean cells.
    pub fn from_fn(
        grid: Arc<GeoGrid>,
        time: TimeAxis,
        name: impl Into<String>,
        units: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = grid.n_cells();
        let mut values = vec![f64::NAN; time.len * n];
        for t in 0..time.len {
            for &c in grid.ocean_cells() {
                values[t * n + c] = f(t, c);
            }
        }
        Self::new(grid, time, name, units, values)
    }

    pub fn len(&self) -> usize {
        self.time.len
    }

    pub fn is_empty(&self) -> bool {
        self.time.len == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.grid.n_cells();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, cell: usize) -> f64 {
        self.values[t * self.grid.n_cells() + cell]
    }

    /// Applies `f` to every ocean value; land stays sentinel.
    pub fn map(&self, name: impl Into<String>, units: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = self.grid.n_cells();
        self.derive(name, units, |t, c| f(self.values[t * n + c]))
    }

    /// Same grid and time axis, new values from `f(t, cell)`.
    pub fn derive(
        &self,
        name: impl Into<String>,
        units: impl Into<String>,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        Self::from_fn(self.grid.clone(), self.time, name, units, f)
    }

    /// Renamed copy.
    pub fn with_name(mut self, name: impl Into<String>, units: impl Into<String>) -> Self {
        self.name = name.into();
        self.units = units.into();
        self
    }

    /// Sub-series over the index range `r`.
    pub fn slice_time(&self, r: Range<usize>) -> Result<Self> {
        let time = self.time.slice(r.clone())?;
        let n = self.grid.n_cells();
        Ok(Self {
            grid: self.grid.clone(),
            time,
            name: self.name.clone(),
            units: self.units.clone(),
            values: self.values[r.start * n..r.end * n].to_vec(),
        })
    }

    /// Sub-series covering `[from, to]` (inclusive calendar months).
    pub fn slice_months(&self, from: YearMonth, to: YearMonth) -> Result<Self> {
        let a = self
            .time
            .index_of(from)
            .ok_or_else(|| Error::Time(format!("{}: {from} outside series", self.name)))?;
        let b = self
            .time
            .index_of(to)
            .ok_or_else(|| Error::Time(format!("{}: {to} outside series", self.name)))?;
        self.slice_time(a..b + 1)
    }

    /// Rounds every value through `f32`, the on-disk precision.
    pub fn quantize_f32(mut self) -> Self {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
        self
    }

    pub fn same_layout(&self, other: &FieldSeries) -> bool {
        self.time == other.time && (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid)
    }

    pub fn check_aligned(&self, other: &FieldSeries) -> Result<()> {
        if !(Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid) {
            return Err(Error::Grid(format!("{} and {} grids differ", self.name, other.name)));
        }
        if self.time != other.time {
            return Err(Error::Time(format!(
                "{} ({}..{}) and {} ({}..{}) are not aligned",
                self.name,
                self.time.start,
                self.time.end(),
                other.name,
                other.time.start,
                other.time.end()
            )));
        }
        Ok(())
    }
}

/// Spatial weighting used by basin means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Uniform,
    /// Cell weight proportional to cos(latitude).
    CosLat,
}

fn cell_weights(grid: &GeoGrid, w: Weighting) -> Vec<f64> {
    let n_lon = grid.n_lon();
    grid.ocean_cells()
        .iter()
        .map(|&c| match w {
            Weighting::Uniform => 1.0,
            Weighting::CosLat => grid.lat()[c / n_lon].to_radians().cos(),
        })
        .collect()
}

/// Per-time-step mean over ocean cells.
pub fn basin_mean(series: &FieldSeries, weighting: Weighting) -> Result<Vec<f64>> {
    let grid = &series.grid;
    if grid.n_ocean() == 0 {
        return Err(Error::Grid("basin mean over an all-land grid".into()));
    }
    let w = cell_weights(grid, weighting);
    let wsum: f64 = w.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::Grid("basin weights sum to zero".into()));
    }
    Ok((0..series.len())
        .map(|t| {
            let frame = series.frame(t);
            grid.ocean_cells()
                .iter()
                .zip(&w)
                .map(|(&c, &wc)| wc * frame[c])
                .sum::<f64>()
                / wsum
        })
        .collect())
}

/// Twelve per-cell monthly means.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    pub grid: Arc<GeoGrid>,
    /// `[12 × n_cells]`, January first; land holds the sentinel.
    means: Vec<f64>,
    /// First and last month of the reference period.
    pub period: (YearMonth, YearMonth),
}

impl Climatology {
    /// Mean field for calendar month `month` (1..=12).
    pub fn month(&self, month: u8) -> &[f64] {
        let n = self.grid.n_cells();
        let m = month as usize - 1;
        &self.means[m * n..(m + 1) * n]
    }

    /// Pools the steps of several aligned-grid series (e.g. disjoint
    /// evaluation segments) into one climatology.
    pub fn fit_many(parts: &[&FieldSeries]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("climatology needs at least one series".into()))?;
        let grid = first.grid.clone();
        let n = grid.n_cells();
        let mut sums = vec![0.0f64; 12 * n];
        let mut counts = [0usize; 12];
        let mut lo = first.time.start;
        let mut hi = first.time.end();
        for s in parts {
            if !(Arc::ptr_eq(&s.grid, &grid) || *s.grid == *grid) {
                return Err(Error::Grid(format!("{}: grid differs from {}", s.name, first.name)));
            }
            lo = lo.min(s.time.start);
            hi = hi.max(s.time.end());
            for t in 0..s.len() {
                let m = s.time.month_of(t) as usize - 1;
                counts[m] += 1;
                let frame = s.frame(t);
                let acc = &mut sums[m * n..(m + 1) * n];
                for &c in grid.ocean_cells() {
                    acc[c] += frame[c];
                }
            }
        }
        if let Some(m) = counts.iter().position(|&k| k == 0) {
            return Err(Error::Time(format!(
                "period {lo}..{hi} has no instance of calendar month {}",
                m + 1
            )));
        }
        let mut means = vec![f64::NAN; 12 * n];
        for m in 0..12 {
            for &c in grid.ocean_cells() {
                means[m * n + c] = sums[m * n + c] / counts[m] as f64;
            }
        }
        Ok(Self {
            grid,
            means,
            period: (lo, hi),
        })
    }
}

/// Climatology of `series` over the index range `period`.
pub fn monthly_climatology(series: &FieldSeries, period: Range<usize>) -> Result<Climatology> {
    let part = series.slice_time(period)?;
    Climatology::fit_many(&[&part])
}

/// `series(t) − clim(month of t)` on ocean cells.
pub fn anomalies(series: &FieldSeries, clim: &Climatology) -> Result<FieldSeries> {
    if !(Arc::ptr_eq(&series.grid, &clim.grid) || *series.grid == *clim.grid) {
        return Err(Error::Grid(format!("{}: climatology grid differs", series.name)));
    }
    let n = series.grid.n_cells();
    series.derive(format!("{}_anom", series.name), series.units.clone(), |t, c| {
        series.values[t * n + c] - clim.month(series.time.month_of(t))[c]
    })
}
