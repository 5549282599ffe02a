//! Alloy profile and random diamond-lattice crystals with isotopic placement.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{IsotopeTable, Species, A_SI_NM};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Smeared square well of Si between Si(1-x)Ge(x) barriers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterostructureProfile {
    pub well_width_nm: f64,
    pub barrier_ge_fraction: f64,
    /// Standard deviation of the Gaussian smearing of each interface.
    pub interface_sigma_nm: f64,
    pub well_center_z_nm: f64,
}

impl Default for HeterostructureProfile {
    fn default() -> Self {
        Self {
            well_width_nm: 5.0,
            barrier_ge_fraction: 0.30,
            interface_sigma_nm: 0.136,
            well_center_z_nm: 0.0,
        }
    }
}

impl HeterostructureProfile {
    pub fn with_width(well_width_nm: f64) -> Self {
        Self { well_width_nm, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.well_width_nm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "well_width_nm must be positive, got {}",
                self.well_width_nm
            )));
        }
        if !(0.0..=1.0).contains(&self.barrier_ge_fraction) {
            return Err(Error::InvalidParameter(format!(
                "barrier_ge_fraction {} outside [0, 1]",
                self.barrier_ge_fraction
            )));
        }
        if !(self.interface_sigma_nm >= 0.0) {
            return Err(Error::InvalidParameter("interface_sigma_nm must be >= 0".into()));
        }
        if !self.well_center_z_nm.is_finite() {
            return Err(Error::InvalidParameter("well_center_z_nm must be finite".into()));
        }
        Ok(())
    }

    /// Lower and upper well edges.
    pub fn edges(&self) -> (f64, f64) {
        let h = 0.5 * self.well_width_nm;
        (self.well_center_z_nm - h, self.well_center_z_nm + h)
    }

    /// Ge fraction x(z).
    pub fn ge_fraction(&self, z_nm: f64) -> f64 {
        ge_fraction(z_nm, self)
    }
}

/// Ge fraction at height `z_nm`: the square well convolved with a Gaussian
/// of standard deviation `interface_sigma_nm`.
pub fn ge_fraction(z_nm: f64, profile: &HeterostructureProfile) -> f64 {
    let (z1, z2) = profile.edges();
    let xb = profile.barrier_ge_fraction;
    let sigma = profile.interface_sigma_nm;
    if sigma == 0.0 {
        let step = |d: f64| {
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                0.0
            } else {
                0.5
            }
        };
        let inside = step(z_nm - z1) - step(z_nm - z2);
        return xb * (1.0 - inside);
    }
    let s = sigma * std::f64::consts::SQRT_2;
    // 0.5 * (erf(a) - erf(b)) written with erfc on the far side for accuracy deep in the barrier.
    let a = (z_nm - z1) / s;
    let b = (z_nm - z2) / s;
    let inside = if b > 0.0 {
        0.5 * (libm::erfc(b) - libm::erfc(a))
    } else if a < 0.0 {
        0.5 * (libm::erfc(-a) - libm::erfc(-b))
    } else {
        0.5 * (libm::erf(a) - libm::erf(b))
    };
    (xb * (1.0 - inside)).clamp(0.0, xb)
}

/// Axis-aligned region of the crystal that is populated, in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl SimulationBox {
    /// Box of lateral side `lateral_nm` centred on `(cx, cy)`, spanning the
    /// well plus `margin_nm` of barrier above and below.
    pub fn around_dot(
        center: (f64, f64),
        lateral_nm: f64,
        profile: &HeterostructureProfile,
        margin_nm: f64,
    ) -> Self {
        let (z1, z2) = profile.edges();
        let h = 0.5 * lateral_nm;
        Self {
            x_min: center.0 - h,
            x_max: center.0 + h,
            y_min: center.1 - h,
            y_max: center.1 + h,
            z_min: z1 - margin_nm,
            z_max: z2 + margin_nm,
        }
    }

    pub fn volume_nm3(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
            * (self.y_max - self.y_min).max(0.0)
            * (self.z_max - self.z_min).max(0.0)
    }

    pub fn contains(&self, r: [f64; 3]) -> bool {
        (self.x_min..self.x_max).contains(&r[0])
            && (self.y_min..self.y_max).contains(&r[1])
            && (self.z_min..self.z_max).contains(&r[2])
    }

    fn check_extents(&self) -> Result<()> {
        let ok = self.x_max > self.x_min && self.y_max > self.y_min && self.z_max > self.z_min;
        if !ok || !self.volume_nm3().is_finite() {
            return Err(Error::DegenerateBox);
        }
        Ok(())
    }

    /// Full validation: positive extents and at least 10 nm of barrier on
    /// each side of the well.
    pub fn validate(&self, profile: &HeterostructureProfile) -> Result<()> {
        self.check_extents()?;
        let (z1, z2) = profile.edges();
        if z1 - self.z_min < 10.0 - 1e-9 || self.z_max - z2 < 10.0 - 1e-9 {
            return Err(Error::InvalidParameter(
                "simulation box must include at least 10 nm of barrier on each side of the well".into(),
            ));
        }
        Ok(())
    }
}

/// Quadrupole splitting and field-gradient angle of a 73Ge nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadrupole {
    /// rad/s
    pub xi: f64,
    /// rad
    pub theta: f64,
}

/// One spinful nucleus.
///
/// Positions are stored as integer lattice coordinates in units of a/4 so
/// that site identity (and tie-breaking) is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearSite {
    pub lattice: [i32; 3],
    pub species: Species,
    /// Hyperfine coupling magnitude (rad/s); zero until filled.
    pub coupling: f64,
    pub quadrupole: Option<Quadrupole>,
    /// +1 for dot 1, -1 for dot 2, 0 while unassigned.
    pub dot_sign: i8,
}

impl NuclearSite {
    pub fn new(lattice: [i32; 3], species: Species) -> Self {
        Self { lattice, species, coupling: 0.0, quadrupole: None, dot_sign: 0 }
    }

    pub fn position_nm(&self) -> [f64; 3] {
        let q = 0.25 * A_SI_NM;
        [self.lattice[0] as f64 * q, self.lattice[1] as f64 * q, self.lattice[2] as f64 * q]
    }

    /// Ordering key used for deterministic tie-breaks.
    pub fn lattice_key(&self) -> (i32, i32, i32) {
        (self.lattice[2], self.lattice[1], self.lattice[0])
    }
}

/// Whether quarter-lattice coordinates `(ux, uy, uz)` are a diamond site.
pub fn is_diamond_site(u: [i32; 3]) -> bool {
    let p = u[2].rem_euclid(2);
    if u[0].rem_euclid(2) != p || u[1].rem_euclid(2) != p {
        return false;
    }
    let s = (u[0] + u[1] + u[2]).rem_euclid(4);
    if p == 0 {
        s == 0
    } else {
        s == 3
    }
}

/// In-plane lattice points of atomic plane `uz` inside `bx`, in scan order.
fn plane_sites(uz: i32, bx: &SimulationBox) -> impl Iterator<Item = (i32, i32)> {
    let q = 0.25 * A_SI_NM;
    let ux_lo = (bx.x_min / q).ceil() as i32;
    let ux_hi = (bx.x_max / q).ceil() as i32; // exclusive
    let uy_lo = (bx.y_min / q).ceil() as i32;
    let uy_hi = (bx.y_max / q).ceil() as i32;
    let parity = uz.rem_euclid(2);
    let target = if parity == 0 { 0 } else { 3 };
    (uy_lo..uy_hi).filter(move |uy| uy.rem_euclid(2) == parity).flat_map(move |uy| {
        let want = (target - uy - uz).rem_euclid(4);
        let start = ux_lo + (want - ux_lo).rem_euclid(4);
        (start..ux_hi).step_by(4).map(move |ux| (ux, uy))
    })
}

fn plane_range(bx: &SimulationBox) -> std::ops::Range<i32> {
    let q = 0.25 * A_SI_NM;
    (bx.z_min / q).ceil() as i32..(bx.z_max / q).ceil() as i32
}

/// Number of diamond sites enumerated inside the box.
pub fn count_lattice_sites(bx: &SimulationBox) -> usize {
    plane_range(bx).map(|uz| plane_sites(uz, bx).count()).sum()
}

/// Local 29Si abundance: the well value in pure Si, the barrier value in the
/// alloy, interpolated through the interfaces by the Ge fraction.
pub fn si29_abundance_at(z_nm: f64, profile: &HeterostructureProfile, isotopes: &IsotopeTable) -> f64 {
    let well = isotopes.si29_well.abundance;
    let barrier = isotopes.si29_barrier.abundance;
    if profile.barrier_ge_fraction <= 0.0 {
        return well;
    }
    let w = profile.ge_fraction(z_nm) / profile.barrier_ge_fraction;
    well + (barrier - well) * w
}

/// Per-site (Ge73, Si29) placement probabilities at height `z_nm`.
pub fn placement_probabilities(
    z_nm: f64,
    profile: &HeterostructureProfile,
    isotopes: &IsotopeTable,
) -> (f64, f64) {
    let x = profile.ge_fraction(z_nm);
    let p_ge = isotopes.ge73.abundance * x;
    let p_si = si29_abundance_at(z_nm, profile, isotopes) * (1.0 - x);
    (p_ge, p_si)
}

/// Populate every diamond site in `bx` with Ge73, Si29 or nothing.
///
/// Each atomic plane draws from its own child stream, so the result is
/// identical for any number of worker threads. Spinless sites are never
/// materialised.
pub fn generate_crystal(
    profile: &HeterostructureProfile,
    bx: &SimulationBox,
    isotopes: &IsotopeTable,
    stream: &RngStream,
) -> Result<Vec<NuclearSite>> {
    profile.validate()?;
    isotopes.validate()?;
    bx.check_extents()?;
    let planes = plane_range(bx);
    if planes.is_empty() {
        return Err(Error::DegenerateBox);
    }
    let q = 0.25 * A_SI_NM;
    let per_plane: Vec<Vec<NuclearSite>> = planes
        .into_par_iter()
        .map(|uz| {
            let (p_ge, p_si) = placement_probabilities(uz as f64 * q, profile, isotopes);
            let mut out = Vec::new();
            if p_ge + p_si <= 0.0 {
                return out;
            }
            let mut rng = stream.child(uz as i64 as u64).rng();
            for (ux, uy) in plane_sites(uz, bx) {
                let u: f64 = rng.random();
                if u < p_ge {
                    out.push(NuclearSite::new([ux, uy, uz], Species::Ge73));
                } else if u < p_ge + p_si {
                    out.push(NuclearSite::new([ux, uy, uz], Species::Si29));
                }
            }
            out
        })
        .collect();
    Ok(per_plane.into_iter().flatten().collect())
}

/// Draw `(xi, theta)` for a 73Ge site.
///
/// `xi` follows a zero-centred Lorentzian of half-width `xi_scale`, truncated
/// at ±100·`xi_scale` (sampled exactly by inverting the truncated CDF);
/// `theta = atan(x / y)` with `x`, `y` independent standard normals.
pub fn draw_quadrupole_params<R: Rng + ?Sized>(
    site: &NuclearSite,
    xi_scale: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if site.species != Species::Ge73 {
        return Err(Error::QuadrupoleOnSpinHalf);
    }
    if !(xi_scale >= 0.0) {
        return Err(Error::InvalidParameter(format!("xi_scale must be >= 0, got {xi_scale}")));
    }
    let u: f64 = rng.random();
    let half_span = 100.0_f64.atan() / PI;
    let xi = if xi_scale == 0.0 {
        0.0
    } else {
        xi_scale * (PI * (2.0 * u - 1.0) * half_span).tan()
    };
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let theta = if y == 0.0 { std::f64::consts::FRAC_PI_2 } else { (x / y).atan() };
    Ok((xi, theta))
}

#[derive(Debug, Serialize, Deserialize)]
struct SiteRecord {
    x_nm: f64,
    y_nm: f64,
    z_nm: f64,
    species: Species,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    theta: Option<f64>,
}

/// Write one JSON object per site.
pub fn write_jsonl<W: Write>(sites: &[NuclearSite], mut w: W) -> Result<()> {
    for s in sites {
        let p = s.position_nm();
        let rec = SiteRecord {
            x_nm: p[0],
            y_nm: p[1],
            z_nm: p[2],
            species: s.species,
            xi: s.quadrupole.map(|q| q.xi),
            theta: s.quadrupole.map(|q| q.theta),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read sites written by [`write_jsonl`]. Positions are snapped back onto
/// the lattice; off-lattice records are rejected.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<NuclearSite>> {
    let q = 0.25 * A_SI_NM;
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SiteRecord = serde_json::from_str(&line)?;
        let u = [rec.x_nm, rec.y_nm, rec.z_nm].map(|v| (v / q).round() as i32);
        if !is_diamond_site(u) {
            return Err(Error::InvalidParameter(format!("off-lattice site in record: {line}")));
        }
        let mut site = NuclearSite::new(u, rec.species);
        if let (Some(xi), Some(theta)) = (rec.xi, rec.theta) {
            site.quadrupole = Some(Quadrupole { xi, theta });
        }
        out.push(site);
    }
    Ok(out)
}
