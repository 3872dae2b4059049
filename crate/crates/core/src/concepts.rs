//! Prescribed concept fields derived from the collapsed mixed-layer inputs.
//!
//! | label          | quantity                         | formula                                  |
//! |----------------|----------------------------------|------------------------------------------|
//! | `vos2`         | vertical shear S² [s⁻²]          | (u_ml/h)² + (v_ml/h)²                    |
//! | `von2`         | buoyancy frequency N² [s⁻²]      | −(g/ρ₀)·Δρ/δ, Δρ = ρ₀(−α·ΔT + β·ΔS)      |
//! | `vohfe`        | heat flux entrainment Q_e [W m⁻²]| ρ₀·c_p·max(∂h/∂t, 0)·ΔT                  |
//! | `mxl_tendency` | MLD tendency ∂h/∂t [m s⁻¹]       | (h(t) − h(t−1)) / seconds_per_month      |
//!
//! `ΔT` and `ΔS` are taken upper minus lower across the mixed layer base, so
//! warm-over-cold stratification has `ΔT > 0` and `N² > 0`. The inputs hold no
//! velocity profile; shear is the mixed-layer velocity over depth `h` against
//! quiescent water below. The time derivative is a backward difference, so
//! every concept series starts one month after its inputs.

use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{FieldSeries, GeoGrid, EARTH_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    /// Gravitational acceleration (m s⁻²).
    pub g: f64,
    /// Reference density (kg m⁻³).
    pub rho0: f64,
    /// Specific heat of seawater (J kg⁻¹ K⁻¹).
    pub c_p: f64,
    /// Thermal expansion coefficient (K⁻¹).
    pub alpha: f64,
    /// Haline contraction coefficient (psu⁻¹).
    pub beta: f64,
    pub t_ref: f64,
    pub s_ref: f64,
    /// Mean Gregorian month (s).
    pub seconds_per_month: f64,
    /// Thickness of the transition layer at the mixed layer base (m).
    pub transition_thickness: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self {
            g: 9.81,
            rho0: 1025.0,
            c_p: 3985.0,
            alpha: 2.0e-4,
            beta: 7.6e-4,
            t_ref: 15.0,
            s_ref: 35.0,
            seconds_per_month: 2.6298e6,
            transition_thickness: 10.0,
        }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g", self.g),
            ("rho0", self.rho0),
            ("c_p", self.c_p),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("seconds_per_month", self.seconds_per_month),
            ("transition_thickness", self.transition_thickness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("physical constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Concept labels in bottleneck channel order.
pub const CONCEPT_NAMES: [&str; 4] = ["vos2", "von2", "vohfe", "mxl_tendency"];

/// The four prescribed concepts on a shared grid and time axis.
#[derive(Debug, Clone)]
pub struct ConceptSet {
    pub vos2: FieldSeries,
    pub von2: FieldSeries,
    pub vohfe: FieldSeries,
    pub mxl_tendency: FieldSeries,
}

impl ConceptSet {
    pub fn new(vos2: FieldSeries, von2: FieldSeries, vohfe: FieldSeries, mxl_tendency: FieldSeries) -> Result<Self> {
        for s in [&von2, &vohfe, &mxl_tendency] {
            vos2.check_aligned(s)?;
        }
        for (s, name) in [&vos2, &von2, &vohfe, &mxl_tendency].into_iter().zip(CONCEPT_NAMES) {
            if s.name != name {
                return Err(Error::Invalid(format!("concept slot {name} holds `{}`", s.name)));
            }
        }
        Ok(Self {
            vos2,
            von2,
            vohfe,
            mxl_tendency,
        })
    }

    /// Series in [`CONCEPT_NAMES`] order.
    pub fn as_array(&self) -> [&FieldSeries; 4] {
        [&self.vos2, &self.von2, &self.vohfe, &self.mxl_tendency]
    }

    pub fn into_array(self) -> [FieldSeries; 4] {
        [self.vos2, self.von2, self.vohfe, self.mxl_tendency]
    }

    pub fn from_array(a: [FieldSeries; 4]) -> Result<Self> {
        let [a, b, c, d] = a;
        Self::new(a, b, c, d)
    }

    pub fn grid(&self) -> &Arc<GeoGrid> {
        &self.vos2.grid
    }
}

fn check_positive_depth(h: &FieldSeries) -> Result<()> {
    for t in 0..h.len() {
        let frame = h.frame(t);
        for &c in h.grid.ocean_cells() {
            if frame[c] <= 0.0 {
                return Err(Error::Invalid(format!(
                    "{}: non-positive depth {} at t={t}, cell={c}",
                    h.name, frame[c]
                )));
            }
        }
    }
    Ok(())
}

/// `Δρ = ρ₀·(−α·ΔT + β·ΔS)` (kg m⁻³).
pub fn linear_eos_density_delta(dt: &FieldSeries, ds: &FieldSeries, k: &PhysConstants) -> Result<FieldSeries> {
    dt.check_aligned(ds)?;
    let n = dt.grid.n_cells();
    let (t_vals, s_vals) = (dt.values(), ds.values());
    dt.derive("drho", "kg m-3", |t, c| {
        k.rho0 * (-k.alpha * t_vals[t * n + c] + k.beta * s_vals[t * n + c])
    })
}

/// `S² = (u/h)² + (v/h)²`.
pub fn vertical_shear(u: &FieldSeries, v: &FieldSeries, h: &FieldSeries) -> Result<FieldSeries> {
    u.check_aligned(v)?;
    u.check_aligned(h)?;
    check_positive_depth(h)?;
    let n = u.grid.n_cells();
    let (uv, vv, hv) = (u.values(), v.values(), h.values());
    u.derive("vos2", "s-2", |t, c| {
        let i = t * n + c;
        let du = uv[i] / hv[i];
        let dv = vv[i] / hv[i];
        du * du + dv * dv
    })
}

/// `N² = −(g/ρ₀)·Δρ/δ`, positive for warm-over-cold, fresh-over-salty water.
pub fn buoyancy_frequency(dt: &FieldSeries, ds: &FieldSeries, k: &PhysConstants) -> Result<FieldSeries> {
    let drho = linear_eos_density_delta(dt, ds, k)?;
    let scale = -k.g / k.rho0 / k.transition_thickness;
    Ok(drho.map("von2", "s-2", |d| scale * d)?)
}

/// Backward difference `(h(t) − h(t−1)) / seconds_per_month`, starting at the
/// second month of `h`.
pub fn mld_tendency(h: &FieldSeries, k: &PhysConstants) -> Result<FieldSeries> {
    if h.len() < 2 {
        return Err(Error::Time(format!("{}: tendency needs at least 2 months", h.name)));
    }
    let n = h.grid.n_cells();
    let hv = h.values();
    let time = h.time.slice(1..h.len())?;
    FieldSeries::from_fn(h.grid.clone(), time, "mxl_tendency", "m s-1", |t, c| {
        (hv[(t + 1) * n + c] - hv[t * n + c]) / k.seconds_per_month
    })
}

/// `Q_e = ρ₀·c_p·max(∂h/∂t, 0)·ΔT`, on the tendency's time axis.
pub fn heat_flux_entrainment(h: &FieldSeries, dt: &FieldSeries, k: &PhysConstants) -> Result<FieldSeries> {
    h.check_aligned(dt)?;
    let tendency = mld_tendency(h, k)?;
    let n = h.grid.n_cells();
    let (wv, tv) = (tendency.values(), dt.values());
    tendency.derive("vohfe", "W m-2", |t, c| {
        let w_e = wv[t * n + c].max(0.0);
        k.rho0 * k.c_p * w_e * tv[(t + 1) * n + c]
    })
}

/// Curl of the wind stress for one frame, `∂τy/∂x − ∂τx/∂y` (N m⁻³).
///
/// Central differences in the interior, one-sided at the grid edges, metric
/// factors `dx = R·cosφ·Δλ`, `dy = R·Δφ`. Any ocean cell whose stencil touches
/// land gets NaN.
pub fn curl_frame(taux: &[f64], tauy: &[f64], grid: &GeoGrid) -> Result<Vec<f64>> {
    let (n_lat, n_lon) = (grid.n_lat(), grid.n_lon());
    if n_lat < 3 || n_lon < 3 {
        return Err(Error::Grid(format!("curl needs at least 3×3 cells, grid is {n_lat}×{n_lon}")));
    }
    let (dlat, dlon) = grid
        .uniform_spacing()
        .ok_or_else(|| Error::Grid("curl needs uniform grid spacing".into()))?;
    let mask = grid.mask();
    let dy = EARTH_RADIUS * dlat.to_radians();
    let mut out = vec![f64::NAN; n_lat * n_lon];
    for i in 0..n_lat {
        let dx = EARTH_RADIUS * grid.lat()[i].to_radians().cos() * dlon.to_radians();
        for j in 0..n_lon {
            let c = i * n_lon + j;
            if !mask[c] {
                continue;
            }
            let (jl, jr) = (j.saturating_sub(1), (j + 1).min(n_lon - 1));
            let (il, ir) = (i.saturating_sub(1), (i + 1).min(n_lat - 1));
            let stencil = [i * n_lon + jl, i * n_lon + jr, il * n_lon + j, ir * n_lon + j];
            if stencil.iter().any(|&s| !mask[s]) {
                continue;
            }
            let dtauy_dx = (tauy[i * n_lon + jr] - tauy[i * n_lon + jl]) / ((jr - jl) as f64 * dx);
            let dtaux_dy = (taux[ir * n_lon + j] - taux[il * n_lon + j]) / ((ir - il) as f64 * dy);
            out[c] = dtauy_dx - dtaux_dy;
        }
    }
    Ok(out)
}

/// Wind-stress curl of a pair of stress series. Cells whose stencil touches
/// land are removed from the output grid's ocean mask.
pub fn wind_stress_curl(taux: &FieldSeries, tauy: &FieldSeries) -> Result<FieldSeries> {
    taux.check_aligned(tauy)?;
    let grid = &taux.grid;
    let n = grid.n_cells();
    let mut values = Vec::with_capacity(taux.values().len());
    for t in 0..taux.len() {
        values.extend(curl_frame(taux.frame(t), tauy.frame(t), grid)?);
    }
    let mask: Vec<bool> = (0..n).map(|c| values[c].is_finite()).collect();
    let out_grid = if mask == grid.mask() {
        grid.clone()
    } else {
        Arc::new(GeoGrid::new(grid.lat().to_vec(), grid.lon().to_vec(), mask)?)
    };
    FieldSeries::new(out_grid, taux.time, "sowsc", "N m-3", values)
}

/// `MLHC = ρ₀·c_p·T_ml·h` (J m⁻²).
pub fn derive_mlhc(t_ml: &FieldSeries, h: &FieldSeries, k: &PhysConstants) -> Result<FieldSeries> {
    t_ml.check_aligned(h)?;
    check_positive_depth(h)?;
    let n = h.grid.n_cells();
    let (tv, hv) = (t_ml.values(), h.values());
    h.derive("mlhc", "J m-2", |t, c| k.rho0 * k.c_p * tv[t * n + c] * hv[t * n + c])
}

/// All four concepts from a member, truncated to the common valid range
/// (the first input month has no tendency).
pub fn derive_concepts(data: &Dataset, k: &PhysConstants) -> Result<ConceptSet> {
    k.validate()?;
    let h = data.get("somxl010")?;
    let u = data.get("vozocrtx_ml")?;
    let v = data.get("vomecrty_ml")?;
    let dt = data.get("votempdiff")?;
    let ds = data.get("vosaldiff")?;
    if h.len() < 2 {
        return Err(Error::Time("concept derivation needs at least 2 months".into()));
    }
    let valid = 1..h.len();
    let vos2 = vertical_shear(&u.slice_time(valid.clone())?, &v.slice_time(valid.clone())?, &h.slice_time(valid.clone())?)?;
    let von2 = buoyancy_frequency(&dt.slice_time(valid.clone())?, &ds.slice_time(valid)?, k)?;
    let vohfe = heat_flux_entrainment(h, dt, k)?;
    let mxl = mld_tendency(h, k)?;
    ConceptSet::new(vos2, von2, vohfe, mxl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TimeAxis, YearMonth};

    fn grid(n_lat: usize, n_lon: usize) -> Arc<GeoGrid> {
        Arc::new(GeoGrid::all_ocean(n_lat, n_lon, (30.0, 40.0), (300.0, 310.0)).unwrap())
    }

    fn constant(g: &Arc<GeoGrid>, len: usize, v: f64) -> FieldSeries {
        let time = TimeAxis::new(YearMonth::new(2000, 1).unwrap(), len).unwrap();
        FieldSeries::from_fn(g.clone(), time, "x", "1", |_, _| v).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn density_delta_closed_forms() {
        let g = grid(1, 1);
        let k = PhysConstants::default();
        let d = |dt, ds| linear_eos_density_delta(&constant(&g, 1, dt), &constant(&g, 1, ds), &k).unwrap().values()[0];
        assert_eq!(d(0.0, 0.0), 0.0);
        assert!(close(d(1.0, 0.0), -0.205, 1e-12));
        assert!(close(d(0.0, 1.0), 0.779, 1e-12));
    }

    #[test]
    fn shear_closed_forms() {
        let g = grid(1, 1);
        let zero = vertical_shear(&constant(&g, 1, 0.0), &constant(&g, 1, 0.0), &constant(&g, 1, 50.0)).unwrap();
        assert_eq!(zero.values()[0], 0.0);
        let s = vertical_shear(&constant(&g, 1, 0.1), &constant(&g, 1, 0.0), &constant(&g, 1, 50.0)).unwrap();
        assert!(close(s.values()[0], 4e-6, 1e-12));
        assert!(vertical_shear(&constant(&g, 1, 0.1), &constant(&g, 1, 0.0), &constant(&g, 1, 0.0)).is_err());
    }

    #[test]
    fn stable_stratification_has_positive_n2() {
        let g = grid(1, 1);
        let k = PhysConstants::default();
        let n2 = buoyancy_frequency(&constant(&g, 1, 2.0), &constant(&g, 1, 0.0), &k).unwrap();
        assert!(close(n2.values()[0], 3.924e-4, 1e-12));
        let n2 = buoyancy_frequency(&constant(&g, 1, 0.0), &constant(&g, 1, 0.0), &k).unwrap();
        assert_eq!(n2.values()[0], 0.0);
    }

    #[test]
    fn tendency_and_entrainment_closed_forms() {
        let g = grid(1, 1);
        let k = PhysConstants::default();
        let time = TimeAxis::new(YearMonth::new(2000, 1).unwrap(), 3).unwrap();
        let h = FieldSeries::from_fn(g.clone(), time, "somxl010", "m", |t, _| 50.0 + 26.298 * t as f64).unwrap();
        let w = mld_tendency(&h, &k).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.time.start, YearMonth::new(2000, 2).unwrap());
        assert!(close(w.values()[0], 1e-5, 1e-12));
        let q = heat_flux_entrainment(&h, &constant(&g, 3, 2.0), &k).unwrap();
        assert!(close(q.values()[1], 81.6925, 1e-12));
        assert!(mld_tendency(&h.slice_time(0..1).unwrap(), &k).is_err());
    }

    #[test]
    fn shoaling_layer_has_no_entrainment() {
        let g = grid(2, 2);
        let k = PhysConstants::default();
        let time = TimeAxis::new(YearMonth::new(2000, 1).unwrap(), 6).unwrap();
        let h = FieldSeries::from_fn(g.clone(), time, "h", "m", |t, c| 100.0 - 7.0 * t as f64 - c as f64).unwrap();
        let q = heat_flux_entrainment(&h, &constant(&g, 6, 3.0), &k).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_stress_has_zero_curl() {
        let g = grid(6, 7);
        let out = curl_frame(&vec![0.1; 42], &vec![-0.05; 42], &g).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_ramp_curl_is_exact_in_interior() {
        let g = grid(6, 7);
        let a = 3.0e-7;
        let (dlat, dlon) = g.uniform_spacing().unwrap();
        let _ = dlat;
        let mut tauy = vec![0.0; 42];
        for i in 0..6 {
            let dx = EARTH_RADIUS * g.lat()[i].to_radians().cos() * dlon.to_radians();
            for j in 0..7 {
                tauy[i * 7 + j] = a * j as f64 * dx;
            }
        }
        let out = curl_frame(&vec![0.0; 42], &tauy, &g).unwrap();
        for i in 1..5 {
            for j in 1..6 {
                assert!(close(out[i * 7 + j], a, 1e-12));
            }
        }
    }

    #[test]
    fn curl_masks_cells_next_to_land() {
        let mut mask = vec![true; 25];
        mask[12] = false;
        let g = GeoGrid::regular(5, 5, (0.0, 4.0), (0.0, 4.0), mask).unwrap();
        let out = curl_frame(&vec![0.0; 25], &vec![0.0; 25], &g).unwrap();
        for c in [7, 11, 13, 17, 12] {
            assert!(out[c].is_nan());
        }
        assert_eq!(out[0], 0.0);
        assert!(curl_frame(&[0.0; 4], &[0.0; 4], &GeoGrid::all_ocean(2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap()).is_err());
    }

    #[test]
    fn mlhc_closed_form_and_scaling() {
        let g = grid(1, 1);
        let k = PhysConstants::default();
        let m = derive_mlhc(&constant(&g, 1, 10.0), &constant(&g, 1, 50.0), &k).unwrap();
        assert!(close(m.values()[0], 2.0423125e9, 1e-12));
        let z = derive_mlhc(&constant(&g, 1, 0.0), &constant(&g, 1, 50.0), &k).unwrap();
        assert_eq!(z.values()[0], 0.0);
        let m2 = derive_mlhc(&constant(&g, 1, 10.0), &constant(&g, 1, 100.0), &k).unwrap();
        assert_eq!(m2.values()[0], 2.0 * m.values()[0]);
        assert!(derive_mlhc(&constant(&g, 1, 10.0), &constant(&g, 1, -1.0), &k).is_err());
    }
}
