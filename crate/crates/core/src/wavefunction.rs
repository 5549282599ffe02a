//! Vertical envelope solve and the full 3D electron density.
//!
//! The density used for hyperfine couplings is
//! `G(x - x0, y - y0) * rho(z) * [1 + cos(q z + phi)]`, normalised to one over
//! the dot's simulation box, where `rho` is the envelope density, `G` a 2D
//! Gaussian and `q = 2 k0` the valley beat wavevector.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::{A_SI_NM, ELECTRON_MASS, ELEMENTARY_CHARGE, HBAR};
use crate::crystal::{HeterostructureProfile, NuclearSite, SimulationBox};
use crate::error::{Error, Result};

/// Valley wavevector k0 = 0.82 (2π / a), in nm⁻¹.
pub const VALLEY_K0: f64 = 0.82 * 2.0 * PI / A_SI_NM;

/// Number of points on the valley-phase search grid.
pub const PHASE_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    /// Conduction-band offset per unit Ge fraction (eV).
    pub band_offset_slope_ev: f64,
    /// Vertical electric field (V/m).
    pub field_v_per_m: f64,
    pub effective_mass_kg: f64,
}

impl Default for PotentialModel {
    fn default() -> Self {
        Self {
            // 180 meV at 25 % Ge.
            band_offset_slope_ev: 0.180 / 0.25,
            field_v_per_m: 0.0,
            effective_mass_kg: 0.916 * ELECTRON_MASS,
        }
    }
}

impl PotentialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_offset_slope_ev > 0.0) || !(self.effective_mass_kg > 0.0) {
            return Err(Error::InvalidParameter(
                "band offset slope and effective mass must be positive".into(),
            ));
        }
        if !self.field_v_per_m.is_finite() {
            return Err(Error::InvalidParameter("vertical field must be finite".into()));
        }
        Ok(())
    }

    /// Potential energy (eV) at height `z_nm`.
    pub fn potential_ev(&self, z_nm: f64, profile: &HeterostructureProfile) -> f64 {
        // e F z with F in V/m and z in nm gives eV after the 1e-9.
        self.band_offset_slope_ev * profile.ge_fraction(z_nm) + self.field_v_per_m * z_nm * 1e-9
    }

    /// ħ²/2m in eV·nm².
    pub fn kinetic_scale(&self) -> f64 {
        HBAR * HBAR / (2.0 * self.effective_mass_kg) / ELEMENTARY_CHARGE * 1e18
    }
}

/// Uniform vertical grid; the wavefunction is taken to vanish just outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalGrid {
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
}

impl VerticalGrid {
    pub fn for_box(bx: &SimulationBox, dz: f64) -> Self {
        Self { z_min: bx.z_min, z_max: bx.z_max, dz }
    }

    fn len(&self) -> usize {
        ((self.z_max - self.z_min) / self.dz).round() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeWavefunction {
    pub z0_nm: f64,
    pub dz_nm: f64,
    /// Envelope amplitude on the grid (nm^-1/2), positive, trapezoid-normalised.
    pub psi: Vec<f64>,
    pub potential_ev: Vec<f64>,
    pub ground_energy_ev: f64,
    /// 1/e diameter of the lateral |ψ|² Gaussian.
    pub lateral_diameter_nm: f64,
    pub dot_center_nm: (f64, f64),
    pub valley_phase: f64,
    /// Lateral window (x_min, x_max, y_min, y_max) the density is normalised over;
    /// `None` means the whole plane.
    pub lateral_window: Option<[f64; 4]>,
    #[serde(skip)]
    norm: NormCache,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct NormCache {
    /// ∫ rho, ∫ rho cos(qz), ∫ rho sin(qz) of the interpolated envelope density.
    moments: [f64; 3],
    lateral_mass: f64,
}

impl EnvelopeWavefunction {
    /// Wrap tabulated envelope samples. `psi` is renormalised to unit
    /// trapezoidal norm.
    pub fn from_samples(
        z0_nm: f64,
        dz_nm: f64,
        mut psi: Vec<f64>,
        potential_ev: Vec<f64>,
        ground_energy_ev: f64,
        lateral_diameter_nm: f64,
    ) -> Result<Self> {
        if psi.len() < 2 || !(dz_nm > 0.0) || !(lateral_diameter_nm > 0.0) {
            return Err(Error::InvalidParameter("envelope needs >= 2 samples, dz > 0 and d_xy > 0".into()));
        }
        let norm = trapezoid_sq(&psi, dz_nm).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("envelope has zero norm".into()));
        }
        psi.iter_mut().for_each(|p| *p /= norm);
        let mut wf = Self {
            z0_nm,
            dz_nm,
            psi,
            potential_ev,
            ground_energy_ev,
            lateral_diameter_nm,
            dot_center_nm: (0.0, 0.0),
            valley_phase: 0.0,
            lateral_window: None,
            norm: NormCache::default(),
        };
        wf.refresh();
        Ok(wf)
    }

    fn refresh(&mut self) {
        self.norm.moments = self.density_moments();
        self.norm.lateral_mass = self.lateral_mass();
    }

    /// Rebuild cached normalisation after deserialisation.
    pub fn restore(mut self) -> Self {
        self.refresh();
        self
    }

    /// Same envelope centred on another dot and normalised over `window`.
    pub fn for_dot(&self, center: (f64, f64), window: Option<&SimulationBox>) -> Self {
        let mut wf = self.clone();
        wf.dot_center_nm = center;
        wf.lateral_window = window.map(|b| [b.x_min, b.x_max, b.y_min, b.y_max]);
        wf.refresh();
        wf
    }

    pub fn with_valley_phase(mut self, phi: f64) -> Self {
        self.valley_phase = phi;
        self
    }

    pub fn z_max_nm(&self) -> f64 {
        self.z0_nm + self.dz_nm * (self.psi.len() - 1) as f64
    }

    pub fn z_grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.psi.len()).map(move |i| self.z0_nm + i as f64 * self.dz_nm)
    }

    /// Linear interpolation of |ψ_env|² (zero outside the grid).
    pub fn envelope_density(&self, z_nm: f64) -> f64 {
        let s = (z_nm - self.z0_nm) / self.dz_nm;
        if s < 0.0 || s > (self.psi.len() - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.psi.len() - 2);
        let w = s - i as f64;
        let (a, b) = (self.psi[i] * self.psi[i], self.psi[i + 1] * self.psi[i + 1]);
        a + (b - a) * w
    }

    /// Exact integrals of the interpolated density against 1, cos(qz), sin(qz).
    fn density_moments(&self) -> [f64; 3] {
        let q = 2.0 * VALLEY_K0;
        let mut m = [0.0; 3];
        for i in 0..self.psi.len() - 1 {
            let za = self.z0_nm + i as f64 * self.dz_nm;
            let zb = za + self.dz_nm;
            let ra = self.psi[i] * self.psi[i];
            let rb = self.psi[i + 1] * self.psi[i + 1];
            let slope = (rb - ra) / self.dz_nm;
            m[0] += 0.5 * (ra + rb) * self.dz_nm;
            // ∫ (ra + slope (z - za)) e^{iqz} dz, integrated by parts.
            let anti = |z: f64, r: f64| -> (f64, f64) {
                let (s, c) = (q * z).sin_cos();
                (r * s / q + slope * c / (q * q), -r * c / q + slope * s / (q * q))
            };
            let (ca, sa) = anti(za, ra);
            let (cb, sb) = anti(zb, rb);
            m[1] += cb - ca;
            m[2] += sb - sa;
        }
        m
    }

    fn lateral_mass(&self) -> f64 {
        let r0 = 0.5 * self.lateral_diameter_nm;
        match self.lateral_window {
            None => 1.0,
            Some([x0, x1, y0, y1]) => {
                let (cx, cy) = self.dot_center_nm;
                let frac = |a: f64, b: f64, c: f64| 0.5 * (libm::erf((b - c) / r0) - libm::erf((a - c) / r0));
                frac(x0, x1, cx) * frac(y0, y1, cy)
            }
        }
    }

    /// Vertical normalisation ∫ rho(z) [1 + cos(qz + phi)] dz for a given phase.
    pub fn vertical_norm(&self, phi: f64) -> f64 {
        let [m0, mc, ms] = self.norm.moments;
        let (s, c) = phi.sin_cos();
        m0 + mc * c - ms * s
    }

    /// Normalised lateral Gaussian with |ψ|² 1/e diameter `lateral_diameter_nm`.
    pub fn lateral_density(&self, x_nm: f64, y_nm: f64) -> f64 {
        let r0 = 0.5 * self.lateral_diameter_nm;
        let (dx, dy) = (x_nm - self.dot_center_nm.0, y_nm - self.dot_center_nm.1);
        (-(dx * dx + dy * dy) / (r0 * r0)).exp() / (PI * r0 * r0) / self.norm.lateral_mass
    }

    /// Unnormalised vertical factor rho(z) [1 + cos(qz + phi)].
    fn vertical_weight(&self, z_nm: f64, phi: f64) -> f64 {
        self.envelope_density(z_nm) * (1.0 + (2.0 * VALLEY_K0 * z_nm + phi).cos())
    }

    /// |ψ(r)|² in nm⁻³.
    pub fn density_at(&self, r: [f64; 3]) -> f64 {
        density_at(r, self)
    }
}

fn trapezoid_sq(psi: &[f64], dz: f64) -> f64 {
    let n = psi.len();
    let inner: f64 = psi.iter().map(|p| p * p).sum();
    (inner - 0.5 * (psi[0] * psi[0] + psi[n - 1] * psi[n - 1])) * dz
}

/// Electron density at `r` (nm) including the valley modulation.
pub fn density_at(r: [f64; 3], wf: &EnvelopeWavefunction) -> f64 {
    let phi = wf.valley_phase;
    wf.lateral_density(r[0], r[1]) * wf.vertical_weight(r[2], phi) / wf.vertical_norm(phi)
}

/// Ground state of `-ħ²/2m d²/dz² + V(z)` on a uniform grid with hard walls
/// just outside it.
pub fn solve_vertical(
    profile: &HeterostructureProfile,
    pot: &PotentialModel,
    grid: &VerticalGrid,
    lateral_diameter_nm: f64,
) -> Result<EnvelopeWavefunction> {
    profile.validate()?;
    pot.validate()?;
    if !(grid.dz > 0.0) || !(grid.z_max > grid.z_min) {
        return Err(Error::InvalidParameter("vertical grid must have dz > 0 and z_max > z_min".into()));
    }
    let n = grid.len();
    if n < 8 {
        return Err(Error::InvalidParameter("vertical grid too coarse".into()));
    }
    let t = pot.kinetic_scale() / (grid.dz * grid.dz);
    let v: Vec<f64> = (0..n).map(|i| pot.potential_ev(grid.z_min + i as f64 * grid.dz, profile)).collect();
    let diag: Vec<f64> = v.iter().map(|vi| 2.0 * t + vi).collect();
    let off = -t;

    let energy = lowest_eigenvalue(&diag, off);
    let psi = inverse_iteration(&diag, off, energy);

    let mut psi = psi;
    // Ground state is nodeless; fix the sign so it is positive.
    let total: f64 = psi.iter().sum();
    if total < 0.0 {
        psi.iter_mut().for_each(|p| *p = -*p);
    }
    let wf = EnvelopeWavefunction::from_samples(grid.z_min, grid.dz, psi, v, energy, lateral_diameter_nm)?;

    let edge = ((n as f64) * 0.15).ceil() as usize;
    let boundary_mass = trapezoid_sq(&wf.psi[..edge.max(2)], grid.dz)
        + trapezoid_sq(&wf.psi[n - edge.max(2)..], grid.dz);
    if boundary_mass > 0.01 {
        return Err(Error::Unbound { boundary_mass });
    }
    Ok(wf)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    let e2 = off * off;
    for (i, d) in diag.iter().enumerate() {
        q = if i == 0 { d - x } else { d - x - e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (d.abs() + off.abs());
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn lowest_eigenvalue(diag: &[f64], off: f64) -> f64 {
    let (mut lo, mut hi) = diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| {
        (l.min(d - 2.0 * off.abs()), h.max(d + 2.0 * off.abs()))
    });
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn inverse_iteration(diag: &[f64], off: f64, shift: f64) -> Vec<f64> {
    let n = diag.len();
    let mut x = vec![1.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for _ in 0..4 {
        // Thomas algorithm on (T - shift) y = x.
        let tiny = f64::EPSILON * (diag[0].abs() + off.abs());
        let mut denom = diag[0] - shift;
        if denom.abs() < tiny {
            denom = tiny;
        }
        c[0] = off / denom;
        d[0] = x[0] / denom;
        for i in 1..n {
            let mut m = diag[i] - shift - off * c[i - 1];
            if m.abs() < tiny {
                m = tiny;
            }
            c[i] = off / m;
            d[i] = (x[i] - off * d[i - 1]) / m;
        }
        let mut y = vec![0.0; n];
        y[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = d[i] - c[i] * y[i + 1];
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    x
}

/// Valley phase that minimises the summed density on the given Ge sites.
///
/// Searches a uniform grid of [`PHASE_GRID`] phases on [0, 2π); ties go to
/// the smallest phase. With no sites the phase is 0.
pub fn choose_valley_phase(wf: &EnvelopeWavefunction, ge_sites: &[NuclearSite]) -> f64 {
    if ge_sites.is_empty() {
        return 0.0;
    }
    let q = 2.0 * VALLEY_K0;
    // The objective is (W + C cos φ - S sin φ) / N(φ); accumulate W, C, S once.
    let (mut w, mut c, mut s) = (0.0, 0.0, 0.0);
    for site in ge_sites {
        let r = site.position_nm();
        let weight = wf.lateral_density(r[0], r[1]) * wf.envelope_density(r[2]);
        let (sn, cs) = (q * r[2]).sin_cos();
        w += weight;
        c += weight * cs;
        s += weight * sn;
    }
    let mut best = (0.0, f64::INFINITY);
    for k in 0..PHASE_GRID {
        let phi = 2.0 * PI * k as f64 / PHASE_GRID as f64;
        let (sp, cp) = phi.sin_cos();
        let obj = (w + c * cp - s * sp) / wf.vertical_norm(phi);
        if obj < best.1 {
            best = (phi, obj);
        }
    }
    best.0
}

/// Write `z_nm,psi_env,potential_ev` rows.
pub fn write_wavefunction_csv<W: Write>(wf: &EnvelopeWavefunction, mut w: W) -> Result<()> {
    writeln!(w, "z_nm,psi_env,potential_ev")?;
    for (i, z) in wf.z_grid().enumerate() {
        let v = wf.potential_ev.get(i).copied().unwrap_or(f64::NAN);
        writeln!(w, "{z:.6},{:.12e},{v:.9e}", wf.psi[i])?;
    }
    Ok(())
}
