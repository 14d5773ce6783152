//! Azimuthal attenuation profiles for tracked object classes.
//!
//! The profile gives the transmission factor from the source position out
//! of the carrying object as a function of bearing in the object's heading
//! frame (0 = object heading). Occluding material is modeled as slabs:
//! an engine block toward the front of vehicles, door/frame aluminum to
//! the sides, a torso for pedestrians with the source in a backpack
//! behind. Configured shielding multiplies uniformly at all bearings.

use super::materials;
use crate::error::{Error, Result};
use crate::types::ObjectClass;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Azimuth grid spacing of attenuation profiles, degrees.
pub const ATTEN_STEP_DEG: f64 = 5.0;

/// Number of azimuth nodes in a profile.
pub const ATTEN_NODES: usize = 72;

/// Fixed shielding around the source itself.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShieldingSpec {
    pub material: String,
    /// Slab thickness, m.
    pub thickness_m: f64,
    /// Linear attenuation coefficient at the ROI energy, 1/m. Defaults to
    /// the built-in material table when omitted.
    #[serde(default)]
    pub mu_per_m: Option<f64>,
}

impl ShieldingSpec {
    pub fn mu(&self) -> Result<f64> {
        if let Some(mu) = self.mu_per_m {
            if mu <= 0.0 {
                return Err(Error::validation("shielding mu must be > 0"));
            }
            return Ok(mu);
        }
        materials::mu_662(&self.material)
            .ok_or_else(|| Error::validation(format!("unknown material '{}'", self.material)))
    }

    pub fn transmission(&self) -> Result<f64> {
        if self.thickness_m < 0.0 {
            return Err(Error::validation("shielding thickness must be >= 0"));
        }
        Ok((-self.mu()? * self.thickness_m).exp())
    }
}

/// Where the source sits within the carrying object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourcePlacement {
    /// Rear of a vehicle.
    Trunk,
    /// Behind a pedestrian.
    Backpack,
    /// Object center with no occluding slabs (isotropic).
    Center,
}

/// One occluding slab: normal bearing, thickness, attenuation coefficient,
/// angular half-width over which the slab blocks the ray, and a cap on the
/// slant chord.
struct Slab {
    normal_deg: f64,
    thickness: f64,
    mu: f64,
    halfwidth_deg: f64,
    max_chord: f64,
}

impl Slab {
    fn chord(&self, theta_deg: f64) -> f64 {
        let mut delta = (theta_deg - self.normal_deg).rem_euclid(360.0);
        if delta > 180.0 {
            delta -= 360.0;
        }
        if delta.abs() >= self.halfwidth_deg {
            return 0.0;
        }
        (self.thickness / delta.to_radians().cos()).min(self.max_chord)
    }
}

fn slabs_for(class: ObjectClass, placement: SourcePlacement) -> Vec<Slab> {
    if placement == SourcePlacement::Center {
        return Vec::new();
    }
    match class {
        ObjectClass::Person => vec![Slab {
            normal_deg: 0.0,
            thickness: 0.24,
            mu: materials::MU_TISSUE,
            halfwidth_deg: 90.0,
            max_chord: 0.5,
        }],
        ObjectClass::Car | ObjectClass::Truck | ObjectClass::Bus => vec![
            // Engine block in the narrow forward cone subtended from the
            // trunk; rays outside it exit through the cabin instead.
            Slab {
                normal_deg: 0.0,
                thickness: 1.0,
                mu: materials::MU_AL,
                halfwidth_deg: 15.0,
                max_chord: 1.1,
            },
            // Doors, cabin, and frame to either side; the rear sector
            // (trunk lid) is open.
            Slab {
                normal_deg: 90.0,
                thickness: 0.05,
                mu: materials::MU_AL,
                halfwidth_deg: 75.0,
                max_chord: 0.15,
            },
            Slab {
                normal_deg: -90.0,
                thickness: 0.05,
                mu: materials::MU_AL,
                halfwidth_deg: 75.0,
                max_chord: 0.15,
            },
        ],
        ObjectClass::Motorcycle => vec![Slab {
            normal_deg: 0.0,
            thickness: 0.20,
            mu: materials::MU_AL,
            halfwidth_deg: 30.0,
            max_chord: 0.4,
        }],
    }
}

/// Transmission factor per azimuth node for one object class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationProfile {
    pub class: ObjectClass,
    factors: Vec<f64>,
}

/// Build the profile for `class` with the given fixed shielding applied
/// isotropically on top of the class slab layout.
pub fn build_attenuation_profile(
    class: ObjectClass,
    shielding: &[ShieldingSpec],
    placement: SourcePlacement,
) -> Result<AttenuationProfile> {
    let mut shield = 1.0;
    for s in shielding {
        shield *= s.transmission()?;
    }
    let slabs = slabs_for(class, placement);
    let factors = (0..ATTEN_NODES)
        .map(|k| {
            let theta = k as f64 * ATTEN_STEP_DEG;
            let mu_t: f64 = slabs.iter().map(|s| s.mu * s.chord(theta)).sum();
            shield * (-mu_t).exp()
        })
        .collect();
    Ok(AttenuationProfile { class, factors })
}

impl AttenuationProfile {
    /// Uniform profile (no angular structure), e.g. shielding only.
    pub fn isotropic(class: ObjectClass, factor: f64) -> Self {
        assert!(factor > 0.0 && factor <= 1.0);
        AttenuationProfile {
            class,
            factors: vec![factor; ATTEN_NODES],
        }
    }

    /// Transmission at bearing `theta` (radians, object heading frame),
    /// linearly interpolated on the 5 degree grid.
    pub fn attenuation_at(&self, theta: f64) -> f64 {
        let step = ATTEN_STEP_DEG.to_radians();
        let t = theta.rem_euclid(2.0 * PI);
        let pos = t / step;
        let i0 = (pos.floor() as usize) % ATTEN_NODES;
        let i1 = (i0 + 1) % ATTEN_NODES;
        let frac = pos - pos.floor();
        self.factors[i0] * (1.0 - frac) + self.factors[i1] * frac
    }

    /// Mean transmission over all bearings; used when no heading is known.
    pub fn isotropic_average(&self) -> f64 {
        self.factors.iter().sum::<f64>() / self.factors.len() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.factors[k]
    }

    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# attenuation v1 class={}", self.class)?;
        for (k, v) in self.factors.iter().enumerate() {
            writeln!(w, "{} {v:e}", k as f64 * ATTEN_STEP_DEG)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let parse = |msg: String| Error::Parse {
            path: path.to_string(),
            message: msg,
        };
        let mut class = None;
        let mut factors = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(idx) = rest.find("class=") {
                    class = ObjectClass::parse(rest[idx + 6..].trim());
                }
                continue;
            }
            let v = line
                .split_whitespace()
                .nth(1)
                .ok_or_else(|| parse(format!("line {}: missing value", ln + 1)))?;
            factors.push(
                v.parse()
                    .map_err(|_| parse(format!("line {}: bad value", ln + 1)))?,
            );
        }
        let class = class.ok_or_else(|| parse("missing class header".into()))?;
        if factors.len() != ATTEN_NODES {
            return Err(parse(format!(
                "expected {ATTEN_NODES} nodes, got {}",
                factors.len()
            )));
        }
        Ok(AttenuationProfile { class, factors })
    }
}

/// One attenuation profile per object class, built once per scenario.
#[derive(Debug, Clone)]
pub struct ClassProfiles {
    profiles: Vec<AttenuationProfile>,
}

impl ClassProfiles {
    /// Class slab layouts with the given shielding: pedestrians carry the
    /// source in a backpack, vehicles in the trunk.
    pub fn build(shielding: &[ShieldingSpec]) -> crate::error::Result<Self> {
        let profiles = ObjectClass::ALL
            .iter()
            .map(|&class| {
                let placement = if class.is_vehicle() {
                    SourcePlacement::Trunk
                } else {
                    SourcePlacement::Backpack
                };
                build_attenuation_profile(class, shielding, placement)
            })
            .collect::<crate::error::Result<_>>()?;
        Ok(ClassProfiles { profiles })
    }

    /// The same uniform transmission for every class and bearing.
    pub fn isotropic(factor: f64) -> Self {
        ClassProfiles {
            profiles: ObjectClass::ALL
                .iter()
                .map(|&c| AttenuationProfile::isotropic(c, factor))
                .collect(),
        }
    }

    pub fn get(&self, class: ObjectClass) -> &AttenuationProfile {
        let idx = ObjectClass::ALL.iter().position(|&c| c == class).unwrap();
        &self.profiles[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pb_2cm() -> Vec<ShieldingSpec> {
        vec![ShieldingSpec {
            material: "Pb".into(),
            thickness_m: 0.02,
            mu_per_m: None,
        }]
    }

    #[test]
    fn lead_shielding_uniform_factor() {
        let p = build_attenuation_profile(ObjectClass::Person, &pb_2cm(), SourcePlacement::Center)
            .unwrap();
        let expected = (-materials::MU_PB * 0.02).exp();
        assert!((expected - 0.0810).abs() < 1e-4);
        for k in 0..ATTEN_NODES {
            assert!((p.node(k) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn pedestrian_backpack_direction_is_shielding_only() {
        let p =
            build_attenuation_profile(ObjectClass::Person, &pb_2cm(), SourcePlacement::Backpack)
                .unwrap();
        let shield = (-materials::MU_PB * 0.02).exp();
        // Bearing 180 deg points from the backpack away from the torso.
        assert!((p.attenuation_at(PI) - shield).abs() < 1e-12);
        // Forward goes through the torso.
        assert!(p.attenuation_at(0.0) < shield);
    }

    #[test]
    fn vehicle_engine_block_factor() {
        let p = build_attenuation_profile(ObjectClass::Car, &[], SourcePlacement::Trunk).unwrap();
        let expected = (-materials::MU_AL * 1.0).exp();
        assert!((p.attenuation_at(0.0) - expected).abs() < 1e-12);
        // Rear is unobstructed.
        assert!((p.attenuation_at(PI) - 1.0).abs() < 1e-12);
        // Sides see the door slab.
        let door = (-materials::MU_AL * 0.05).exp();
        assert!((p.attenuation_at(PI / 2.0) - door).abs() < 1e-12);
    }

    #[test]
    fn interpolation_between_nodes() {
        let mut p = AttenuationProfile::isotropic(ObjectClass::Car, 1.0);
        p.factors[0] = 0.2;
        p.factors[1] = 0.4;
        let theta = (2.5_f64).to_radians();
        assert!((p.attenuation_at(theta) - 0.3).abs() < 1e-12);
        assert!((p.attenuation_at(0.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn transparent_profile_everywhere_one() {
        let p = AttenuationProfile::isotropic(ObjectClass::Person, 1.0);
        for theta in [0.0, 0.7, 2.1, 4.9, 6.2] {
            assert_eq!(p.attenuation_at(theta), 1.0);
        }
    }

    #[test]
    fn periodicity_and_range() {
        let p = build_attenuation_profile(ObjectClass::Truck, &pb_2cm(), SourcePlacement::Trunk)
            .unwrap();
        for k in 0..ATTEN_NODES {
            let v = p.node(k);
            assert!(v > 0.0 && v <= 1.0);
        }
        for theta in [0.0, 1.0, 3.0, 5.5] {
            assert!((p.attenuation_at(theta) - p.attenuation_at(theta + 2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn added_shielding_strictly_decreases_transmission() {
        let base =
            build_attenuation_profile(ObjectClass::Car, &pb_2cm(), SourcePlacement::Trunk).unwrap();
        let mut thicker = pb_2cm();
        thicker[0].thickness_m = 0.03;
        let more =
            build_attenuation_profile(ObjectClass::Car, &thicker, SourcePlacement::Trunk).unwrap();
        for k in 0..ATTEN_NODES {
            assert!(more.node(k) < base.node(k));
        }
    }

    #[test]
    fn unknown_material_rejected() {
        let spec = vec![ShieldingSpec {
            material: "unobtainium".into(),
            thickness_m: 0.01,
            mu_per_m: None,
        }];
        assert!(
            build_attenuation_profile(ObjectClass::Car, &spec, SourcePlacement::Trunk).is_err()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let p =
            build_attenuation_profile(ObjectClass::Person, &pb_2cm(), SourcePlacement::Backpack)
                .unwrap();
        let mut buf = Vec::new();
        p.save(&mut buf).unwrap();
        let loaded = AttenuationProfile::load(std::io::Cursor::new(&buf), "mem").unwrap();
        assert_eq!(p, loaded);
    }
}
