//! Direction-dependent effective-area tables for the hexagonal detector
//! array, and azimuthal attenuation profiles for tracked object classes.
//!
//! The effective area of each crystal is modeled analytically: silhouette
//! area of the crystal toward the source, times a fixed intrinsic
//! photopeak efficiency, times transmission through any sibling crystals
//! that sit along the ray. Elevation is handled by a multiplicative
//! cosine factor. Tables are immutable once built; lookups are pure.

mod attenuation;

pub use attenuation::{
    build_attenuation_profile, AttenuationProfile, ClassProfiles, ShieldingSpec, SourcePlacement,
    ATTEN_STEP_DEG,
};

use crate::error::{Error, Result};
use crate::types::NUM_DETECTORS;
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Linear attenuation coefficients at 662 keV, 1/m.
pub mod materials {
    pub const MU_PB: f64 = 125.7;
    pub const MU_AL: f64 = 20.2;
    pub const MU_NAI: f64 = 29.7;
    pub const MU_TISSUE: f64 = 8.6;

    pub fn mu_662(material: &str) -> Option<f64> {
        match material {
            "Pb" | "pb" | "lead" => Some(MU_PB),
            "Al" | "al" | "aluminum" => Some(MU_AL),
            "NaI" | "nai" => Some(MU_NAI),
            "tissue" => Some(MU_TISSUE),
            _ => None,
        }
    }
}

/// Default intrinsic photopeak efficiency at 662 keV.
pub const INTRINSIC_EFFICIENCY: f64 = 0.35;

/// Azimuth grid spacing of the response table, degrees.
pub const RESPONSE_STEP_DEG: f64 = 10.0;

/// Number of azimuth nodes in the response table.
pub const RESPONSE_NODES: usize = 36;

/// One crystal of the array: position offset from the platform origin,
/// outward face normal, and box dimensions (thickness along the normal,
/// width, height), meters.
#[derive(Debug, Clone)]
pub struct CrystalGeometry {
    pub offset: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub dims: Vector3<f64>,
}

impl CrystalGeometry {
    /// Orthonormal local axes: (normal, tangent, vertical).
    fn axes(&self) -> Matrix3<f64> {
        let n = self.normal.normalize();
        let up = Vector3::z();
        let t = up.cross(&n).normalize();
        Matrix3::from_columns(&[n, t, up])
    }

    /// Silhouette area toward unit direction `u`, m^2.
    fn projected_area(&self, u: &Vector3<f64>) -> f64 {
        let axes = self.axes();
        let local = axes.transpose() * u;
        let (a, b, c) = (self.dims.x, self.dims.y, self.dims.z);
        local.x.abs() * b * c + local.y.abs() * a * c + local.z.abs() * a * b
    }

    /// Chord length of the ray `origin + s * dir` (s > 0) through this box, m.
    fn chord(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
        let axes = self.axes();
        let o = axes.transpose() * (origin - self.offset);
        let d = axes.transpose() * dir;
        let half = self.dims / 2.0;
        let mut t_min = 0.0_f64;
        let mut t_max = f64::INFINITY;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if o[i].abs() > half[i] {
                    return 0.0;
                }
                continue;
            }
            let t1 = (-half[i] - o[i]) / d[i];
            let t2 = (half[i] - o[i]) / d[i];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
        (t_max - t_min).max(0.0)
    }
}

/// Geometry of the full detector array in the platform frame.
#[derive(Debug, Clone)]
pub struct DetectorArrayGeometry {
    pub detectors: Vec<CrystalGeometry>,
    /// Height of the crystal centers above ground, m.
    pub elevation: f64,
}

impl DetectorArrayGeometry {
    /// Six 2 in x 4 in x 16 in crystals at 60 degree spacing, faces
    /// outward, centers 1.3 m off the ground. The ring is tight: adjacent
    /// crystals almost touch, so crystals shadow each other appreciably.
    pub fn hexagonal() -> Self {
        const IN: f64 = 0.0254;
        let dims = Vector3::new(2.0 * IN, 4.0 * IN, 16.0 * IN);
        let radius = 0.12;
        let detectors = (0..NUM_DETECTORS)
            .map(|k| {
                let ang = (k as f64) * 60.0_f64.to_radians();
                let n = Vector3::new(ang.cos(), ang.sin(), 0.0);
                CrystalGeometry {
                    offset: n * radius,
                    normal: n,
                    dims,
                }
            })
            .collect();
        DetectorArrayGeometry {
            detectors,
            elevation: 1.3,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "hex6" => Ok(Self::hexagonal()),
            other => Err(Error::validation(format!(
                "unknown detector array '{other}'"
            ))),
        }
    }

    /// Transmission through sibling crystals for a ray leaving detector
    /// `det` in direction `dir` (unit, platform frame).
    fn sibling_transmission(&self, det: usize, dir: &Vector3<f64>) -> f64 {
        let origin = self.detectors[det].offset;
        let mut path = 0.0;
        for (j, sib) in self.detectors.iter().enumerate() {
            if j != det {
                path += sib.chord(&origin, dir);
            }
        }
        (-materials::MU_NAI * path).exp()
    }
}

/// Effective area per unit source emission as a function of azimuth, one
/// curve per detector. Azimuth is the direction from the detector to the
/// source in the platform frame; elevation enters as cos(el).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    pub roi_id: String,
    /// eps[detector][node], m^2, nodes every `RESPONSE_STEP_DEG`.
    eps: Vec<Vec<f64>>,
}

/// Build the response table for `geometry` with the given intrinsic
/// photopeak efficiency.
pub fn build_response(
    geometry: &DetectorArrayGeometry,
    roi_id: &str,
    intrinsic_efficiency: f64,
) -> ResponseTable {
    let eps = (0..geometry.detectors.len())
        .map(|d| {
            (0..RESPONSE_NODES)
                .map(|k| {
                    let az = (k as f64 * RESPONSE_STEP_DEG).to_radians();
                    let dir = Vector3::new(az.cos(), az.sin(), 0.0);
                    let area = geometry.detectors[d].projected_area(&dir);
                    area * intrinsic_efficiency * geometry.sibling_transmission(d, &dir)
                })
                .collect()
        })
        .collect();
    ResponseTable {
        roi_id: roi_id.to_string(),
        eps,
    }
}

impl ResponseTable {
    /// A direction-independent table: every detector sees `eps` at all
    /// azimuths. Useful for matched-model studies and tests.
    pub fn uniform(roi_id: &str, num_detectors: usize, eps: f64) -> Self {
        ResponseTable {
            roi_id: roi_id.to_string(),
            eps: vec![vec![eps; RESPONSE_NODES]; num_detectors],
        }
    }

    pub fn num_detectors(&self) -> usize {
        self.eps.len()
    }

    /// Effective area for `detector` toward (azimuth, elevation) radians, m^2.
    /// Linear interpolation between the bracketing azimuth nodes, times
    /// cos(elevation) clamped at zero.
    pub fn lookup_eps(&self, detector: usize, azimuth: f64, elevation: f64) -> f64 {
        let curve = &self.eps[detector];
        let step = RESPONSE_STEP_DEG.to_radians();
        let az = azimuth.rem_euclid(2.0 * PI);
        let pos = az / step;
        let i0 = (pos.floor() as usize) % RESPONSE_NODES;
        let i1 = (i0 + 1) % RESPONSE_NODES;
        let frac = pos - pos.floor();
        let at_zero = curve[i0] * (1.0 - frac) + curve[i1] * frac;
        at_zero * elevation.cos().max(0.0)
    }

    pub fn node(&self, detector: usize, node: usize) -> f64 {
        self.eps[detector][node]
    }

    /// Serialize as `azimuth_deg value` blocks, one per detector.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# response v1 roi={}", self.roi_id)?;
        for (d, curve) in self.eps.iter().enumerate() {
            writeln!(w, "detector {d}")?;
            for (k, v) in curve.iter().enumerate() {
                writeln!(w, "{} {v:e}", k as f64 * RESPONSE_STEP_DEG)?;
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let parse = |msg: String| Error::Parse {
            path: path.to_string(),
            message: msg,
        };
        let mut roi_id = String::new();
        let mut eps: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(idx) = rest.find("roi=") {
                    roi_id = rest[idx + 4..].trim().to_string();
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix("detector ") {
                let d: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| parse(format!("line {}: bad detector id", ln + 1)))?;
                if d != eps.len() {
                    return Err(parse(format!("line {}: detector ids out of order", ln + 1)));
                }
                eps.push(Vec::with_capacity(RESPONSE_NODES));
                continue;
            }
            let mut it = line.split_whitespace();
            let (az, v) = (it.next(), it.next());
            let v: f64 = v
                .ok_or_else(|| parse(format!("line {}: missing value", ln + 1)))?
                .parse()
                .map_err(|_| parse(format!("line {}: bad value", ln + 1)))?;
            let _az: f64 = az
                .unwrap()
                .parse()
                .map_err(|_| parse(format!("line {}: bad azimuth", ln + 1)))?;
            let curve = eps
                .last_mut()
                .ok_or_else(|| parse(format!("line {}: value before detector header", ln + 1)))?;
            curve.push(v);
        }
        if eps.is_empty() || eps.iter().any(|c| c.len() != RESPONSE_NODES) {
            return Err(parse("wrong node count".to_string()));
        }
        Ok(ResponseTable { roi_id, eps })
    }
}

/// Effective area (per source emission) from a counting measurement at
/// distance `r_sim` with `x_counts` recorded out of `n_particles` emitted
/// into 4 pi.
pub fn effective_area_from_counts(r_sim: f64, x_counts: f64, n_particles: f64) -> Result<f64> {
    if r_sim <= 0.0 || n_particles <= 0.0 || x_counts < 0.0 {
        return Err(Error::validation(format!(
            "effective_area_from_counts requires r > 0, n > 0, x >= 0 (got r={r_sim}, x={x_counts}, n={n_particles})"
        )));
    }
    Ok(4.0 * PI * r_sim * r_sim * x_counts / n_particles)
}
