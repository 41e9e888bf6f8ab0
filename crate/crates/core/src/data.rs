//! Manifold samplers, analytic fields, corruption, and wind-field ingestion.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Deserialize;

use crate::error::{Result, TbnnError};
use crate::geometry::PointCloud;

/// Nominal Earth radius used for the spherical embedding.
pub const EARTH_RADIUS: f64 = 6356.8;

/// A point cloud with an embedded tangent vector per point.
#[derive(Clone, Debug)]
pub struct SampledField {
    pub cloud: PointCloud,
    /// `n × p`, row `i` is the field at point `i`.
    pub field: DMatrix<f64>,
    pub manifold: String,
    pub seed: u64,
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn poisson_count<R: Rng>(rng: &mut R, expected_n: f64) -> Result<usize> {
    if !(expected_n.is_finite() && expected_n > 0.0) {
        return Err(TbnnError::invalid(format!("expected_n must be positive, got {expected_n}")));
    }
    let dist = Poisson::new(expected_n).map_err(|e| TbnnError::invalid(e.to_string()))?;
    Ok((dist.sample(rng) as usize).max(1))
}

pub fn torus_point(theta: f64, phi: f64, a: f64, b: f64) -> Vector3<f64> {
    let r = b + a * theta.cos();
    Vector3::new(r * phi.cos(), r * phi.sin(), a * theta.sin())
}

/// Outward unit normal of the ring torus at `(θ, φ)`.
pub fn torus_normal(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin())
}

/// Area-uniform sample of the ring torus with `Poisson(expected_n)` points.
/// Intrinsic parameters `(θ, φ)` are stored per point; `θ` is the tube angle.
pub fn sample_torus(expected_n: f64, a: f64, b: f64, seed: u64) -> Result<PointCloud> {
    if !(a > 0.0 && b > a) {
        return Err(TbnnError::invalid(format!("need b > a > 0, got a={a}, b={b}")));
    }
    let mut rng = rng_for(seed);
    let n = poisson_count(&mut rng, expected_n)?;
    let mut pts = DMatrix::zeros(n, 3);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let phi = rng.random_range(0.0..TAU);
        let theta = loop {
            let t = rng.random_range(0.0..TAU);
            if rng.random::<f64>() * (b + a) <= b + a * t.cos() {
                break t;
            }
        };
        let p = torus_point(theta, phi, a, b);
        for c in 0..3 {
            pts[(i, c)] = p[c];
        }
        params[(i, 0)] = theta;
        params[(i, 1)] = phi;
    }
    PointCloud::new(pts)?.with_params(params)
}

/// Rows `(−sin α, cos α, 0)`. Evaluated at the azimuthal angle this is tangent to the torus.
pub fn torus_field(angles: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(angles.len(), 3, |i, c| match c {
        0 => -angles[i].sin(),
        1 => angles[i].cos(),
        _ => 0.0,
    })
}

/// Torus sample with the azimuthal unit field.
pub fn sample_torus_field(expected_n: f64, a: f64, b: f64, seed: u64) -> Result<SampledField> {
    let cloud = sample_torus(expected_n, a, b, seed)?;
    let phis: Vec<f64> = cloud.params().expect("torus stores params").column(1).iter().copied().collect();
    Ok(SampledField {
        field: torus_field(&phis),
        cloud,
        manifold: "torus".into(),
        seed,
    })
}

/// Piecewise "bottle" immersion of the Klein bottle, `(u, v) ∈ [0, 2π)²`.
pub fn klein_point(u: f64, v: f64) -> Vector3<f64> {
    let r = 4.0 * (1.0 - u.cos() / 2.0);
    let base = 6.0 * u.cos() * (1.0 + u.sin());
    if u < PI {
        Vector3::new(base + r * u.cos() * v.cos(), 16.0 * u.sin() + r * u.sin() * v.cos(), r * v.sin())
    } else {
        Vector3::new(base + r * (v + PI).cos(), 16.0 * u.sin(), r * v.sin())
    }
}

fn klein_area_element(u: f64, v: f64) -> f64 {
    let h = 1e-6;
    let du = (klein_point(u + h, v) - klein_point(u - h, v)) / (2.0 * h);
    let dv = (klein_point(u, v + h) - klein_point(u, v - h)) / (2.0 * h);
    du.cross(&dv).norm()
}

struct KleinBounds {
    lo: Vector3<f64>,
    scale: f64,
    max_area: f64,
}

fn klein_bounds() -> &'static KleinBounds {
    static BOUNDS: OnceLock<KleinBounds> = OnceLock::new();
    BOUNDS.get_or_init(|| {
        let m = 400;
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let mut max_area: f64 = 0.0;
        for a in 0..m {
            for c in 0..m {
                let (u, v) = (TAU * a as f64 / m as f64, TAU * c as f64 / m as f64);
                let p = klein_point(u, v);
                lo = lo.inf(&p);
                hi = hi.sup(&p);
                max_area = max_area.max(klein_area_element(u + 1e-3, v));
            }
        }
        let extent = (hi - lo).max();
        let margin = 0.01 * extent;
        KleinBounds {
            lo: lo - Vector3::repeat(margin),
            scale: extent + 2.0 * margin,
            max_area: 1.05 * max_area,
        }
    })
}

/// Area-uniform sample of the immersed Klein bottle, rescaled into `[0, 1]³`.
/// Intrinsic parameters `(u, v)` are stored per point.
pub fn sample_klein(expected_n: f64, seed: u64) -> Result<PointCloud> {
    let bounds = klein_bounds();
    let mut rng = rng_for(seed);
    let n = poisson_count(&mut rng, expected_n)?;
    let mut pts = DMatrix::zeros(n, 3);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let (u, v) = loop {
            let u = rng.random_range(0.0..TAU);
            let v = rng.random_range(0.0..TAU);
            if rng.random::<f64>() * bounds.max_area <= klein_area_element(u, v) {
                break (u, v);
            }
        };
        let p = (klein_point(u, v) - bounds.lo) / bounds.scale;
        for c in 0..3 {
            pts[(i, c)] = p[c];
        }
        params[(i, 0)] = u;
        params[(i, 1)] = v;
    }
    PointCloud::new(pts)?.with_params(params)
}

/// Ring torus rescaled into `[0, 1]³` with the same convention as [`sample_klein`].
pub fn sample_unit_torus(expected_n: f64, a: f64, b: f64, seed: u64) -> Result<PointCloud> {
    let cloud = sample_torus(expected_n, a, b, seed)?;
    let extent = 2.0 * (a + b);
    let pts = DMatrix::from_fn(cloud.len(), 3, |i, c| {
        let shift = if c == 2 { a } else { a + b };
        (cloud.points()[(i, c)] + shift) / extent
    });
    let params = cloud.params().expect("torus stores params").clone();
    PointCloud::new(pts)?.with_params(params)
}

/// Flat torus `S¹(r) × S¹(r) ⊂ ℝ⁴`; its tangent bundle carries parallel fields.
pub fn sample_flat_torus(expected_n: f64, radius: f64, seed: u64) -> Result<PointCloud> {
    if radius <= 0.0 {
        return Err(TbnnError::invalid("radius must be positive"));
    }
    let mut rng = rng_for(seed);
    let n = poisson_count(&mut rng, expected_n)?;
    let mut pts = DMatrix::zeros(n, 4);
    let mut params = DMatrix::zeros(n, 2);
    for i in 0..n {
        let s: f64 = rng.random_range(0.0..TAU);
        let t: f64 = rng.random_range(0.0..TAU);
        pts[(i, 0)] = radius * s.cos();
        pts[(i, 1)] = radius * s.sin();
        pts[(i, 2)] = radius * t.cos();
        pts[(i, 3)] = radius * t.sin();
        params[(i, 0)] = s;
        params[(i, 1)] = t;
    }
    PointCloud::new(pts)?.with_params(params)
}

/// Adds i.i.d. `N(0, τ²)` noise to every entry.
pub fn add_awgn(field: &DMatrix<f64>, tau: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(TbnnError::invalid(format!("noise std must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(field.clone());
    }
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, tau).map_err(|e| TbnnError::invalid(e.to_string()))?;
    Ok(field.map(|v| v + normal.sample(&mut rng)))
}

/// Indices included independently with probability `prob`, ascending.
pub fn mask_nodes(n: usize, prob: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(TbnnError::invalid(format!("mask probability must lie in [0, 1], got {prob}")));
    }
    let mut rng = rng_for(seed);
    Ok((0..n).filter(|_| rng.random::<f64>() < prob).collect())
}

/// Copy of `field` whose rows outside `available` are replaced by the mean of the available rows.
pub fn impute_mean(field: &DMatrix<f64>, available: &[usize]) -> Result<DMatrix<f64>> {
    if available.is_empty() {
        return Err(TbnnError::invalid("no available rows to average"));
    }
    let mut mean = DMatrix::zeros(1, field.ncols());
    for &i in available {
        mean += field.row(i);
    }
    mean /= available.len() as f64;
    let mut keep = vec![false; field.nrows()];
    for &i in available {
        keep[i] = true;
    }
    let mut out = field.clone();
    for (i, k) in keep.iter().enumerate() {
        if !k {
            out.set_row(i, &mean.row(0));
        }
    }
    Ok(out)
}

pub fn latlon_to_xyz(lat_deg: f64, lon_deg: f64, radius: f64) -> Vector3<f64> {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    radius * Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

/// `u ê_east + v ê_north`; undefined at the poles.
pub fn wind_to_tangent(u: f64, v: f64, lat_deg: f64, lon_deg: f64) -> Result<Vector3<f64>> {
    if !(-90.0..=90.0).contains(&lat_deg) {
        return Err(TbnnError::invalid(format!("latitude {lat_deg} outside [-90, 90]")));
    }
    if (90.0 - lat_deg.abs()).abs() < 1e-9 {
        return Err(TbnnError::invalid(format!(
            "eastward direction is undefined at the pole (lat {lat_deg})"
        )));
    }
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    let east = Vector3::new(-lon.sin(), lon.cos(), 0.0);
    let north = Vector3::new(-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos());
    Ok(u * east + v * north)
}

/// Zonal/meridional wind at fixed stations for one date.
#[derive(Clone, Debug, PartialEq)]
pub struct WindDay {
    pub date: String,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl WindDay {
    pub fn len(&self) -> usize {
        self.lat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lat.is_empty()
    }

    /// Stations on a sphere of the given radius with embedded tangent wind vectors.
    pub fn to_field(&self, radius: f64) -> Result<SampledField> {
        let n = self.len();
        let mut pts = DMatrix::zeros(n, 3);
        let mut field = DMatrix::zeros(n, 3);
        for i in 0..n {
            let p = latlon_to_xyz(self.lat[i], self.lon[i], radius);
            let w = wind_to_tangent(self.u[i], self.v[i], self.lat[i], self.lon[i])?;
            for c in 0..3 {
                pts[(i, c)] = p[c];
                field[(i, c)] = w[c];
            }
        }
        let params = DMatrix::from_fn(n, 2, |i, c| if c == 0 { self.lat[i] } else { self.lon[i] });
        Ok(SampledField {
            cloud: PointCloud::new(pts)?.with_params(params)?,
            field,
            manifold: "sphere".into(),
            seed: 0,
        })
    }
}

/// Daily wind fields sharing the scale factor applied at load time.
#[derive(Clone, Debug, PartialEq)]
pub struct WindSeries {
    pub days: Vec<WindDay>,
    /// Raw values were divided by this to land in `[−1, 1]`.
    pub scale: f64,
}

impl WindSeries {
    /// Errors unless every day lists the same stations in the same order.
    pub fn check_fixed_stations(&self) -> Result<()> {
        let first = self.days.first().ok_or(TbnnError::EmptyFile)?;
        for d in &self.days[1..] {
            if d.lat != first.lat || d.lon != first.lon {
                return Err(TbnnError::invalid(format!(
                    "stations on {} differ from those on {}",
                    d.date, first.date
                )));
            }
        }
        Ok(())
    }

    /// Divides every component by the largest magnitude so values lie in `[−1, 1]`.
    fn rescaled(mut days: Vec<WindDay>) -> Self {
        let max = days
            .iter()
            .flat_map(|d| d.u.iter().chain(&d.v))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max > 0.0 { max } else { 1.0 };
        for d in &mut days {
            d.u.iter_mut().chain(d.v.iter_mut()).for_each(|v| *v /= scale);
        }
        Self { days, scale }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "lat", "lon", "u", "v"])?;
        for d in &self.days {
            for i in 0..d.len() {
                w.write_record([
                    d.date.clone(),
                    format!("{}", d.lat[i]),
                    format!("{}", d.lon[i]),
                    format!("{:.16e}", d.u[i] * self.scale),
                    format!("{:.16e}", d.v[i] * self.scale),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct WindRow {
    date: String,
    lat: String,
    lon: String,
    u: String,
    v: String,
}

/// Reads `date,lat,lon,u,v` (any column order), groups rows by date in order of
/// first appearance, and rescales the wind components into `[−1, 1]`.
pub fn load_wind_csv<R: Read>(reader: R) -> Result<WindSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["date", "lat", "lon", "u", "v"] {
        if !headers.iter().any(|h| h == col) {
            return Err(TbnnError::MissingColumn(col.into()));
        }
    }
    let mut days: Vec<WindDay> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: WindRow = rec.deserialize(Some(&headers)).map_err(|e| TbnnError::Parse {
            line,
            message: e.to_string(),
        })?;
        let num = |name: &str, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TbnnError::Parse {
                    line,
                    message: format!("column `{name}`: cannot parse `{s}` as a finite number"),
                })
        };
        let (lat, lon, u, v) = (num("lat", &row.lat)?, num("lon", &row.lon)?, num("u", &row.u)?, num("v", &row.v)?);
        if !(-90.0..=90.0).contains(&lat) {
            return Err(TbnnError::Parse {
                line,
                message: format!("latitude {lat} outside [-90, 90]"),
            });
        }
        let slot = *index.entry(row.date.clone()).or_insert_with(|| {
            days.push(WindDay {
                date: row.date.clone(),
                lat: Vec::new(),
                lon: Vec::new(),
                u: Vec::new(),
                v: Vec::new(),
            });
            days.len() - 1
        });
        let d = &mut days[slot];
        d.lat.push(lat);
        d.lon.push(lon);
        d.u.push(u);
        d.v.push(v);
    }
    if days.is_empty() {
        return Err(TbnnError::EmptyFile);
    }
    Ok(WindSeries::rescaled(days))
}

pub fn load_wind_csv_path(path: impl AsRef<Path>) -> Result<WindSeries> {
    load_wind_csv(std::fs::File::open(path)?)
}

/// Parameters of the synthetic wind generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWind {
    /// Grid spacing in degrees; latitudes stop one step short of the poles.
    pub grid_step: f64,
    pub days: usize,
    /// Relative amplitude of the day-to-day (temporally white) component.
    pub weather: f64,
    /// Per-station white noise.
    pub station_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticWind {
    fn default() -> Self {
        Self {
            grid_step: 10.0,
            days: 616,
            weather: 0.6,
            station_noise: 0.02,
            seed: 2016,
        }
    }
}

/// Monomials `x^a y^b z^c` of total degree 1..=3.
fn monomials() -> Vec<[i32; 3]> {
    let mut out = Vec::new();
    for deg in 1..=3 {
        for a in 0..=deg {
            for b in 0..=deg - a {
                out.push([a, b, deg - a - b]);
            }
        }
    }
    out
}

fn monomial_gradient(e: [i32; 3], p: &Vector3<f64>) -> Vector3<f64> {
    let pw = |x: f64, k: i32| if k <= 0 { 1.0 } else { x.powi(k) };
    let [a, b, c] = e;
    Vector3::new(
        if a > 0 { a as f64 * pw(p.x, a - 1) * pw(p.y, b) * pw(p.z, c) } else { 0.0 },
        if b > 0 { b as f64 * pw(p.x, a) * pw(p.y, b - 1) * pw(p.z, c) } else { 0.0 },
        if c > 0 { c as f64 * pw(p.x, a) * pw(p.y, b) * pw(p.z, c - 1) } else { 0.0 },
    )
}

/// Smooth, mostly rotational wind on a regular lat/lon grid. Each stream/potential
/// coefficient is a mean plus an annual cycle plus white day-to-day weather.
/// Day 0 is dated 2016-01-01.
pub fn synthetic_wind(cfg: &SyntheticWind) -> Result<WindSeries> {
    if !(cfg.grid_step > 0.0 && cfg.grid_step <= 45.0) || cfg.days == 0 {
        return Err(TbnnError::invalid("synthetic wind needs 0 < grid_step <= 45 and days >= 1"));
    }
    let mut rng = rng_for(cfg.seed);
    let basis = monomials();
    let m = basis.len();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // [stream, potential] × monomial: mean, seasonal amplitude, phase
    let draw = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> { (0..m).map(|_| s * normal.sample(rng)).collect() };
    let mean_rot = draw(&mut rng, 1.0);
    let mean_div = draw(&mut rng, 0.3);
    let amp_rot = draw(&mut rng, 0.5);
    let amp_div = draw(&mut rng, 0.15);
    let phase: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();

    let mut lats = Vec::new();
    let mut lons = Vec::new();
    let mut lat = -90.0 + cfg.grid_step;
    while lat < 90.0 - 1e-9 {
        let mut lon = 0.0;
        while lon < 360.0 - 1e-9 {
            lats.push(lat);
            lons.push(lon);
            lon += cfg.grid_step;
        }
        lat += cfg.grid_step;
    }
    let positions: Vec<Vector3<f64>> = lats.iter().zip(&lons).map(|(a, o)| latlon_to_xyz(*a, *o, 1.0)).collect();
    let grads: Vec<Vec<Vector3<f64>>> = positions
        .iter()
        .map(|p| basis.iter().map(|e| monomial_gradient(*e, p)).collect())
        .collect();

    let start = NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date");
    let station_noise = Normal::new(0.0, cfg.station_noise.max(0.0)).map_err(|e| TbnnError::invalid(e.to_string()))?;
    let mut days = Vec::with_capacity(cfg.days);
    for t in 0..cfg.days {
        let season = TAU * t as f64 / 365.25;
        let coef = |mean: &[f64], amp: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..m)
                .map(|j| mean[j] + amp[j] * (season + phase[j]).sin() + cfg.weather * mean[j].abs().max(0.3) * normal.sample(rng))
                .collect()
        };
        let c_rot = coef(&mean_rot, &amp_rot, &mut rng);
        let c_div = coef(&mean_div, &amp_div, &mut rng);
        let mut u = Vec::with_capacity(lats.len());
        let mut v = Vec::with_capacity(lats.len());
        for (s, p) in positions.iter().enumerate() {
            let mut g_rot = Vector3::zeros();
            let mut g_div = Vector3::zeros();
            for j in 0..m {
                g_rot += c_rot[j] * grads[s][j];
                g_div += c_div[j] * grads[s][j];
            }
            let w = p.cross(&g_rot) + (g_div - g_div.dot(p) * p);
            let (la, lo) = (lats[s].to_radians(), lons[s].to_radians());
            let east = Vector3::new(-lo.sin(), lo.cos(), 0.0);
            let north = Vector3::new(-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos());
            u.push(w.dot(&east) + station_noise.sample(&mut rng));
            v.push(w.dot(&north) + station_noise.sample(&mut rng));
        }
        let date = start
            .checked_add_days(Days::new(t as u64))
            .ok_or_else(|| TbnnError::invalid("date overflow"))?;
        days.push(WindDay {
            date: date.format("%Y-%m-%d").to_string(),
            lat: lats.clone(),
            lon: lons.clone(),
            u,
            v,
        });
    }
    Ok(WindSeries::rescaled(days))
}

/// Index of the first day whose date string is at least `date` (ISO dates sort lexically).
pub fn day_index(series: &WindSeries, date: &str) -> Option<usize> {
    series.days.iter().position(|d| d.date.as_str() >= date)
}
