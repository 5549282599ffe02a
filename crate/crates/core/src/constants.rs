//! Physical constants, isotope data and unit conventions.
//!
//! Every Hamiltonian in this crate is expressed in angular-frequency units
//! (rad/s), so a propagator over a free-evolution time `tau` (seconds) is
//! `exp(-i H tau)`. Lengths in the public API are in nanometres unless a name
//! says otherwise.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant (J·s).
pub const PLANCK: f64 = 2.0 * PI * HBAR;
/// Vacuum electron g-factor.
pub const G0: f64 = 2.002_319_304_36;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Electron rest mass (kg).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Silicon cubic lattice constant (nm).
pub const A_SI_NM: f64 = 0.543;

/// |gamma| of 73Ge (rad/s/T): 2π × 1.49 MHz/T.
pub const GAMMA_GE73: f64 = 2.0 * PI * 1.49e6;
/// |gamma| of 29Si (rad/s/T): 2π × 8.458 MHz/T (tabulated NMR value; the
/// sign is negative in nature but only |gamma| enters any computed quantity).
pub const GAMMA_SI29: f64 = 2.0 * PI * 8.458e6;

/// 29Si abundance in isotopically enriched silicon (800 ppm).
pub const SI29_ENRICHED: f64 = 800e-6;
/// Natural 29Si abundance.
pub const SI29_NATURAL: f64 = 0.047;
/// Natural 73Ge abundance.
pub const GE73_NATURAL: f64 = 0.0776;
/// Bunching factor for 29Si.
pub const ETA_SI29: f64 = 178.0;
/// Bunching factor for 73Ge.
pub const ETA_GE73: f64 = 570.0;

/// Bundle of the constants used by the hyperfine and filter-function code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub mu_b: f64,
    pub hbar: f64,
    pub g0: f64,
    pub gamma_ge73: f64,
    pub gamma_si29: f64,
    pub a_si_nm: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu0: MU0,
            mu_b: MU_B,
            hbar: HBAR,
            g0: G0,
            gamma_ge73: GAMMA_GE73,
            gamma_si29: GAMMA_SI29,
            a_si_nm: A_SI_NM,
        }
    }
}

/// Electron Larmor angular frequency `g mu_B B / hbar` (rad/s).
pub fn electron_larmor_omega(b_tesla: f64) -> f64 {
    G0 * MU_B * b_tesla / HBAR
}

/// Electron Larmor frequency `g mu_B B / h` (Hz).
pub fn electron_larmor_hz(b_tesla: f64) -> f64 {
    G0 * MU_B * b_tesla / PLANCK
}

/// `(g mu_B / hbar)^2`: converts a field-noise density (T²/Hz) into an
/// angular-frequency noise density ((rad/s)²/Hz).
pub fn field_to_angular_sq() -> f64 {
    let k = G0 * MU_B / HBAR;
    k * k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    Si29,
    Ge73,
}

impl Species {
    /// Twice the nuclear spin, so that half-integers stay exact.
    pub fn two_spin(self) -> u32 {
        match self {
            Species::Si29 => 1,
            Species::Ge73 => 9,
        }
    }

    pub fn spin(self) -> f64 {
        self.two_spin() as f64 / 2.0
    }

    /// `I(I+1)/3`, the per-nucleus weight in the ergodic T2* sum.
    pub fn spin_weight(self) -> f64 {
        let i = self.spin();
        i * (i + 1.0) / 3.0
    }

    /// |gamma| in rad/s/T.
    pub fn gamma(self) -> f64 {
        match self {
            Species::Si29 => GAMMA_SI29,
            Species::Ge73 => GAMMA_GE73,
        }
    }
}

/// One spinful isotope together with the parameters that set its coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotopeSpec {
    pub species: Species,
    /// Fraction of the chemical element that is this isotope.
    pub abundance: f64,
    /// Bunching factor.
    pub eta: f64,
}

impl IsotopeSpec {
    pub fn new(species: Species, abundance: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&abundance) {
            return Err(Error::InvalidParameter(format!(
                "{species:?} abundance {abundance} outside [0, 1]"
            )));
        }
        if !(eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{species:?} bunching factor must be positive, got {eta}"
            )));
        }
        Ok(Self { species, abundance, eta })
    }

    pub fn spin(&self) -> f64 {
        self.species.spin()
    }
}

/// Isotope parameters for one device. Si29 abundance is allowed to differ
/// between the well and the SiGe barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotopeTable {
    pub ge73: IsotopeSpec,
    pub si29_well: IsotopeSpec,
    pub si29_barrier: IsotopeSpec,
}

impl IsotopeTable {
    /// Enriched (800 ppm) well with natural-Si barriers.
    pub fn enriched() -> Self {
        Self {
            ge73: IsotopeSpec { species: Species::Ge73, abundance: GE73_NATURAL, eta: ETA_GE73 },
            si29_well: IsotopeSpec { species: Species::Si29, abundance: SI29_ENRICHED, eta: ETA_SI29 },
            si29_barrier: IsotopeSpec { species: Species::Si29, abundance: SI29_NATURAL, eta: ETA_SI29 },
        }
    }

    /// Natural silicon everywhere.
    pub fn natural() -> Self {
        let mut t = Self::enriched();
        t.si29_well.abundance = SI29_NATURAL;
        t
    }

    pub fn validate(&self) -> Result<()> {
        for spec in [self.ge73, self.si29_well, self.si29_barrier] {
            IsotopeSpec::new(spec.species, spec.abundance, spec.eta)?;
        }
        if self.ge73.species != Species::Ge73
            || self.si29_well.species != Species::Si29
            || self.si29_barrier.species != Species::Si29
        {
            return Err(Error::InvalidParameter("isotope table species mismatch".into()));
        }
        Ok(())
    }
}

impl Default for IsotopeTable {
    fn default() -> Self {
        Self::enriched()
    }
}
