//! A reanalysis member: the twelve collapsed 2-D input variables on one grid.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{FieldSeries, GeoGrid};
use crate::ogf;

/// Input variables in canonical channel order, with units.
pub const INPUT_VARS: [(&str, &str); 12] = [
    ("sosstsst", "degC"),
    ("sosaline", "psu"),
    ("sossheig", "m"),
    ("somxl010", "m"),
    ("sohefldo", "W m-2"),
    ("vozocrtx_ml", "m s-1"),
    ("vomecrty_ml", "m s-1"),
    ("votempdiff", "degC"),
    ("vosaldiff", "psu"),
    ("mbathy", "levels"),
    ("ff", "s-1"),
    ("sowsc", "N m-3"),
];

/// Inputs that carry no time dependence.
pub const STATIC_VARS: [&str; 2] = ["mbathy", "ff"];

pub fn input_index(name: &str) -> Option<usize> {
    INPUT_VARS.iter().position(|(n, _)| *n == name)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub member: usize,
    /// Series in [`INPUT_VARS`] order.
    vars: Vec<FieldSeries>,
}

impl Dataset {
    /// Orders `series` canonically and checks that every input is present
    /// exactly once on one grid and time axis.
    pub fn new(member: usize, series: Vec<FieldSeries>) -> Result<Self> {
        let mut slots: Vec<Option<FieldSeries>> = vec![None; INPUT_VARS.len()];
        for s in series {
            let k = input_index(&s.name)
                .ok_or_else(|| Error::Invalid(format!("unknown input variable `{}`", s.name)))?;
            if slots[k].is_some() {
                return Err(Error::Invalid(format!("duplicate input variable `{}`", s.name)));
            }
            slots[k] = Some(s);
        }
        let mut vars = Vec::with_capacity(slots.len());
        for (k, slot) in slots.into_iter().enumerate() {
            vars.push(slot.ok_or_else(|| Error::MissingVariable(INPUT_VARS[k].0.to_string()))?);
        }
        for s in &vars[1..] {
            vars[0].check_aligned(s)?;
        }
        Ok(Self { member, vars })
    }

    pub fn get(&self, name: &str) -> Result<&FieldSeries> {
        input_index(name)
            .map(|k| &self.vars[k])
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn vars(&self) -> &[FieldSeries] {
        &self.vars
    }

    pub fn grid(&self) -> &Arc<GeoGrid> {
        &self.vars[0].grid
    }

    pub fn time(&self) -> crate::grid::TimeAxis {
        self.vars[0].time
    }

    /// Writes `<dir>/<name>.ogf` for every variable.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for s in &self.vars {
            ogf::write(s, dir.join(format!("{}.ogf", s.name)))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path, member: usize) -> Result<Self> {
        let mut series = Vec::with_capacity(INPUT_VARS.len());
        let mut grid: Option<Arc<GeoGrid>> = None;
        for (name, _) in INPUT_VARS {
            let path = dir.join(format!("{name}.ogf"));
            if !path.exists() {
                return Err(Error::MissingVariable(name.to_string()));
            }
            let mut s = ogf::read(&path)?;
            // Share one grid allocation across the member.
            match &grid {
                Some(g) if **g == *s.grid => s.grid = g.clone(),
                Some(_) => return Err(Error::Grid(format!("{name}: grid differs from sosstsst"))),
                None => grid = Some(s.grid.clone()),
            }
            series.push(s);
        }
        Self::new(member, series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TimeAxis, YearMonth};

    fn series(name: &str, g: &Arc<GeoGrid>) -> FieldSeries {
        let time = TimeAxis::new(YearMonth::new(2000, 1).unwrap(), 2).unwrap();
        FieldSeries::from_fn(g.clone(), time, name, "1", |t, c| (t + c) as f64).unwrap()
    }

    #[test]
    fn missing_variable_is_named() {
        let g = Arc::new(GeoGrid::all_ocean(2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap());
        let all: Vec<FieldSeries> = INPUT_VARS.iter().skip(1).map(|(n, _)| series(n, &g)).collect();
        match Dataset::new(0, all) {
            Err(Error::MissingVariable(n)) => assert_eq!(n, "sosstsst"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn variables_are_reordered_canonically() {
        let g = Arc::new(GeoGrid::all_ocean(2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap());
        let all: Vec<FieldSeries> = INPUT_VARS.iter().rev().map(|(n, _)| series(n, &g)).collect();
        let d = Dataset::new(0, all).unwrap();
        let names: Vec<&str> = d.vars().iter().map(|s| s.name.as_str()).collect();
        let expect: Vec<&str> = INPUT_VARS.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, expect);
    }
}
