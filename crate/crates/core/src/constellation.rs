//! Keplerian constellation description and two-body propagation.
//!
//! Everything inside the crate is SI (m, s, rad). The on-disk constellation
//! format uses km and degrees and is converted when loaded.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lunar gravitational parameter (m³/s²).
pub const MU_MOON: f64 = 4.9028e12;
/// Lunar occultation radius (m).
pub const R_MOON: f64 = 1.7374e6;
/// Martian gravitational parameter (m³/s²).
pub const MU_MARS: f64 = 4.282837e13;
/// Martian occultation radius (m).
pub const R_MARS: f64 = 3.3895e6;

const KEPLER_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const BISECTION_MAX_ITER: usize = 200;

const ELFO_JSON: &str = include_str!("../configs/elfo.json");
const MARS_WALKER_JSON: &str = include_str!("../configs/mars_walker.json");

#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub name: String,
    /// Gravitational parameter (m³/s²).
    pub mu: f64,
    /// Radius of the occulting sphere (m).
    pub radius: f64,
}

impl BodyParams {
    pub fn new(name: impl Into<String>, mu: f64, radius: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            name: name.into(),
            mu,
            radius,
        })
    }

    pub fn moon() -> Self {
        Self::new("Moon", MU_MOON, R_MOON).expect("valid constants")
    }

    pub fn mars() -> Self {
        Self::new("Mars", MU_MARS, R_MARS).expect("valid constants")
    }
}

/// Classical Keplerian elements in SI units, angles in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements {
    /// Semi-major axis (m).
    pub a: f64,
    pub e: f64,
    /// Inclination (rad).
    pub i: f64,
    /// Right ascension of the ascending node (rad).
    pub raan: f64,
    /// Argument of periapsis (rad).
    pub argp: f64,
    /// Mean anomaly at t = 0 (rad).
    pub m0: f64,
}

impl OrbitalElements {
    /// Builds elements, normalizing every angle into [0, 2π).
    pub fn new(a: f64, e: f64, i: f64, raan: f64, argp: f64, m0: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("semi-major axis must be positive, got {a}")));
        }
        if !(0.0..1.0).contains(&e) {
            return Err(Error::InvalidInput(format!("eccentricity must be in [0, 1), got {e}")));
        }
        for (label, v) in [("i", i), ("raan", raan), ("argp", argp), ("M0", m0)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{label} must be finite")));
            }
        }
        Ok(Self {
            a,
            e,
            i: wrap_angle(i),
            raan: wrap_angle(raan),
            argp: wrap_angle(argp),
            m0: wrap_angle(m0),
        })
    }

    pub fn mean_motion(&self, mu: f64) -> f64 {
        (mu / (self.a * self.a * self.a)).sqrt()
    }

    pub fn periapsis_radius(&self) -> f64 {
        self.a * (1.0 - self.e)
    }

    pub fn apoapsis_radius(&self) -> f64 {
        self.a * (1.0 + self.e)
    }

    /// Inertial position (m) at time `t` (s).
    pub fn position_at(&self, mu: f64, t: f64) -> Result<Vector3<f64>> {
        let mean_anomaly = self.m0 + self.mean_motion(mu) * t;
        let ecc_anomaly = solve_kepler(mean_anomaly, self.e)?;
        let (sin_e, cos_e) = ecc_anomaly.sin_cos();
        let perifocal = Vector3::new(
            self.a * (cos_e - self.e),
            self.a * (1.0 - self.e * self.e).sqrt() * sin_e,
            0.0,
        );
        Ok(self.perifocal_to_inertial(&perifocal))
    }

    /// Inertial velocity (m/s) at time `t` (s).
    pub fn velocity_at(&self, mu: f64, t: f64) -> Result<Vector3<f64>> {
        let n = self.mean_motion(mu);
        let ecc_anomaly = solve_kepler(self.m0 + n * t, self.e)?;
        let (sin_e, cos_e) = ecc_anomaly.sin_cos();
        let e_dot = n / (1.0 - self.e * cos_e);
        let perifocal = Vector3::new(
            -self.a * sin_e * e_dot,
            self.a * (1.0 - self.e * self.e).sqrt() * cos_e * e_dot,
            0.0,
        );
        Ok(self.perifocal_to_inertial(&perifocal))
    }

    // R3(-Ω) R1(-i) R3(-ω)
    fn perifocal_to_inertial(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (so, co) = self.raan.sin_cos();
        let (si, ci) = self.i.sin_cos();
        let (sw, cw) = self.argp.sin_cos();
        let p = Vector3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
        let q = Vector3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);
        p * v.x + q * v.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationConfig {
    pub name: String,
    pub body: BodyParams,
    /// Index in this list is the satellite id.
    pub satellites: Vec<OrbitalElements>,
}

/// Minimum satellite count: one clique of the detection size.
pub const MIN_SATELLITES: usize = 6;

impl ConstellationConfig {
    pub fn new(
        name: impl Into<String>,
        body: BodyParams,
        satellites: Vec<OrbitalElements>,
    ) -> Result<Self> {
        if satellites.len() < MIN_SATELLITES {
            return Err(Error::InvalidInput(format!(
                "constellation needs at least {MIN_SATELLITES} satellites, got {}",
                satellites.len()
            )));
        }
        if let Some((id, _)) = satellites
            .iter()
            .enumerate()
            .find(|(_, el)| el.periapsis_radius() <= body.radius)
        {
            return Err(Error::InvalidInput(format!(
                "satellite {id} intersects the central body"
            )));
        }
        Ok(Self {
            name: name.into(),
            body,
            satellites,
        })
    }

    /// The 12-satellite elliptical lunar frozen orbit constellation.
    pub fn elfo() -> Self {
        ConstellationFile::from_json(ELFO_JSON)
            .and_then(|f| f.to_config())
            .expect("bundled ELFO config is valid")
    }

    /// The 12-satellite Walker-Delta constellation around Mars.
    pub fn mars_walker() -> Self {
        ConstellationFile::from_json(MARS_WALKER_JSON)
            .and_then(|f| f.to_config())
            .expect("bundled Mars config is valid")
    }

    /// Loads a bundled constellation by name, or a config file by path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "elfo" => Ok(Self::elfo()),
            "mars_walker" | "mars" => Ok(Self::mars_walker()),
            path => ConstellationFile::read(path)?.to_config(),
        }
    }

    pub fn len(&self) -> usize {
        self.satellites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satellites.is_empty()
    }

    /// Period of the first satellite's orbit; every bundled constellation
    /// shares one semi-major axis.
    pub fn period(&self) -> f64 {
        orbital_period(self.satellites[0].a, self.body.mu)
    }
}

/// Satellite positions at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSet {
    pub t: f64,
    pub positions: Vec<Vector3<f64>>,
}

impl PositionSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.positions[i] - self.positions[j]).norm()
    }
}

/// Solves Kepler's equation `E - e sin E = M` for the eccentric anomaly.
///
/// Newton from `E = M` (or `π` for `e >= 0.8`), with a bisection fallback on
/// `[M - e, M + e]` if Newton does not reach `|residual| < 1e-12` in 50 steps.
/// The returned anomaly lies near `M` wrapped to [0, 2π).
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !mean_anomaly.is_finite() {
        return Err(Error::InvalidInput("mean anomaly must be finite".into()));
    }
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidInput(format!("eccentricity must be in [0, 1), got {e}")));
    }
    let m = wrap_angle(mean_anomaly);
    if e == 0.0 {
        return Ok(m);
    }
    let residual = |ea: f64| ea - e * ea.sin() - m;

    let mut ea = if e < 0.8 { m } else { PI };
    for _ in 0..NEWTON_MAX_ITER {
        let f = residual(ea);
        if f.abs() < KEPLER_TOL {
            return Ok(ea);
        }
        ea -= f / (1.0 - e * ea.cos());
    }
    if residual(ea).abs() < KEPLER_TOL {
        return Ok(ea);
    }

    // residual is strictly increasing, with a root inside [m - e, m + e]
    let (mut lo, mut hi) = (m - e, m + e);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if f.abs() < KEPLER_TOL {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!(
        "Kepler solver did not converge for M={mean_anomaly}, e={e}"
    )))
}

/// Two-body orbital period `2π √(a³/μ)` (s).
pub fn orbital_period(a: f64, mu: f64) -> f64 {
    TAU * (a * a * a / mu).sqrt()
}

/// Propagates every satellite of `config` to time `t` (s).
pub fn propagate(config: &ConstellationConfig, t: f64) -> Result<PositionSet> {
    if !t.is_finite() {
        return Err(Error::InvalidInput("epoch must be finite".into()));
    }
    let positions = config
        .satellites
        .iter()
        .map(|el| el.position_at(config.body.mu, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PositionSet { t, positions })
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyFile {
    pub name: String,
    pub mu_km3_s2: f64,
    pub radius_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SatelliteFile {
    pub a_km: f64,
    pub e: f64,
    pub i_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub M0_deg: f64,
}

/// On-disk constellation document (km, km³/s², degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub body: BodyFile,
    pub satellites: Vec<SatelliteFile>,
}

fn default_name() -> String {
    "constellation".to_string()
}

impl ConstellationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::InvalidInput(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_config(&self) -> Result<ConstellationConfig> {
        let body = BodyParams::new(
            self.body.name.clone(),
            self.body.mu_km3_s2 * 1e9,
            self.body.radius_km * 1e3,
        )?;
        let satellites = self
            .satellites
            .iter()
            .map(|s| {
                OrbitalElements::new(
                    s.a_km * 1e3,
                    s.e,
                    s.i_deg.to_radians(),
                    s.raan_deg.to_radians(),
                    s.argp_deg.to_radians(),
                    s.M0_deg.to_radians(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ConstellationConfig::new(self.name.clone(), body, satellites)
    }

    pub fn from_config(config: &ConstellationConfig) -> Self {
        Self {
            name: config.name.clone(),
            body: BodyFile {
                name: config.body.name.clone(),
                mu_km3_s2: config.body.mu / 1e9,
                radius_km: config.body.radius / 1e3,
            },
            satellites: config
                .satellites
                .iter()
                .map(|el| SatelliteFile {
                    a_km: el.a / 1e3,
                    e: el.e,
                    i_deg: el.i.to_degrees(),
                    raan_deg: el.raan.to_degrees(),
                    argp_deg: el.argp.to_degrees(),
                    M0_deg: el.m0.to_degrees(),
                })
                .collect(),
        }
    }
}
