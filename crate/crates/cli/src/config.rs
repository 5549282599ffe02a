//! Run configuration: TOML or JSON, every field defaulted to the 5 nm
//! enriched device.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinbath_core::constants::{IsotopeSpec, IsotopeTable, Species};
use spinbath_core::crystal::HeterostructureProfile;
use spinbath_core::filter::PulseSequence;
use spinbath_core::hyperfine::DeviceParams;
use spinbath_core::wavefunction::PotentialModel;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub well_widths_nm: Vec<f64>,
    pub barrier_ge_fraction: f64,
    pub interface_sigma_nm: f64,
    pub ge73_abundance: f64,
    pub si29_well_abundance: f64,
    pub si29_barrier_abundance: f64,
    pub eta_ge73: f64,
    pub eta_si29: f64,
    pub band_offset_ev: f64,
    pub field_v_per_m: f64,
    pub lateral_diameter_nm: f64,
    pub dot_separation_nm: f64,
    pub lateral_box_nm: f64,
    pub barrier_margin_nm: f64,
    pub grid_spacing_nm: f64,
    pub top_n: usize,
    pub xi_scale: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let p = DeviceParams::default();
        Self {
            well_widths_nm: vec![p.profile.well_width_nm],
            barrier_ge_fraction: p.profile.barrier_ge_fraction,
            interface_sigma_nm: p.profile.interface_sigma_nm,
            ge73_abundance: p.isotopes.ge73.abundance,
            si29_well_abundance: p.isotopes.si29_well.abundance,
            si29_barrier_abundance: p.isotopes.si29_barrier.abundance,
            eta_ge73: p.isotopes.ge73.eta,
            eta_si29: p.isotopes.si29_well.eta,
            band_offset_ev: p.potential.band_offset_slope_ev,
            field_v_per_m: p.potential.field_v_per_m,
            lateral_diameter_nm: p.lateral_diameter_nm,
            dot_separation_nm: p.dot_separation_nm,
            lateral_box_nm: p.lateral_box_nm,
            barrier_margin_nm: p.barrier_margin_nm,
            grid_spacing_nm: p.grid_spacing_nm,
            top_n: p.top_n,
            xi_scale: p.xi_scale,
        }
    }
}

impl DeviceConfig {
    /// Device parameters for one well width.
    pub fn params(&self, well_width_nm: f64) -> DeviceParams {
        let d = DeviceParams::default();
        DeviceParams {
            profile: HeterostructureProfile {
                well_width_nm,
                barrier_ge_fraction: self.barrier_ge_fraction,
                interface_sigma_nm: self.interface_sigma_nm,
                ..d.profile
            },
            isotopes: IsotopeTable {
                ge73: IsotopeSpec { species: Species::Ge73, abundance: self.ge73_abundance, eta: self.eta_ge73 },
                si29_well: IsotopeSpec { species: Species::Si29, abundance: self.si29_well_abundance, eta: self.eta_si29 },
                si29_barrier: IsotopeSpec {
                    species: Species::Si29,
                    abundance: self.si29_barrier_abundance,
                    eta: self.eta_si29,
                },
            },
            potential: PotentialModel {
                band_offset_slope_ev: self.band_offset_ev,
                field_v_per_m: self.field_v_per_m,
                ..d.potential
            },
            lateral_diameter_nm: self.lateral_diameter_nm,
            dot_separation_nm: self.dot_separation_nm,
            lateral_box_nm: self.lateral_box_nm,
            barrier_margin_nm: self.barrier_margin_nm,
            grid_spacing_nm: self.grid_spacing_nm,
            top_n: self.top_n,
            xi_scale: self.xi_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauGrid {
    pub spacing: Spacing,
    pub min_s: f64,
    pub max_s: f64,
    pub count: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self { spacing: Spacing::Log, min_s: 1e-7, max_s: 1e-4, count: 61 }
    }
}

impl TauGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min_s];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let w = k as f64 / last;
                match self.spacing {
                    Spacing::Log => self.min_s * (self.max_s / self.min_s).powf(w),
                    Spacing::Linear => self.min_s + (self.max_s - self.min_s) * w,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Swap count: 1 = Hahn echo, even = CPn.
    pub pulses: u32,
    pub fields_t: Vec<f64>,
    pub tau: TauGrid,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { pulses: 10, fields_t: vec![0.01, 0.02, 0.04, 0.08, 0.15], tau: TauGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    /// Measured decay CSVs (tau_s, p_singlet). Empty: invert the echo sweep.
    pub inputs: Vec<PathBuf>,
    /// Swap count of the measured curves; required with `inputs`.
    pub pulses: Option<u32>,
    pub field_t: Option<f64>,
    pub p0: f64,
    pub p_inf: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        Self { inputs: Vec::new(), pulses: None, field_t: None, p0: 1.0, p_inf: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub pulses: Vec<u32>,
    pub tau_s: f64,
    pub field_t: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub count: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { pulses: vec![0, 1, 10], tau_s: 3e-6, field_t: 0.0, f_min_hz: 1e3, f_max_hz: 1e7, count: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidConfig {
    /// CSV with columns t_s, p_singlet.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 means "use SPINBATH_WORKERS or all cores".
    pub workers: usize,
    pub output_dir: PathBuf,
    pub ensemble: usize,
    pub device: DeviceConfig,
    pub sweep: SweepConfig,
    pub invert: InvertConfig,
    pub filter: FilterConfig,
    pub fid: FidConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            output_dir: PathBuf::from("spinbath-out"),
            ensemble: 1,
            device: DeviceConfig::default(),
            sweep: SweepConfig::default(),
            invert: InvertConfig::default(),
            filter: FilterConfig::default(),
            fid: FidConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn widths(&self) -> &[f64] {
        &self.device.well_widths_nm
    }

    /// Checks every parameter against the model preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.ensemble == 0 {
            return Err(CliError::Config("ensemble must be >= 1".into()));
        }
        if self.device.well_widths_nm.is_empty() {
            return Err(CliError::Config("device.well_widths_nm must list at least one width".into()));
        }
        for &w in &self.device.well_widths_nm {
            self.device
                .params(w)
                .validate()
                .map_err(|e| CliError::Config(format!("device (well_width_nm = {w}): {e}")))?;
        }
        let s = &self.sweep;
        spinbath_core::quadrupole::check_sequence(s.pulses).map_err(|e| CliError::Config(format!("sweep.pulses: {e}")))?;
        if s.fields_t.is_empty() || s.fields_t.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(CliError::Config("sweep.fields_t must be a non-empty list of fields >= 0".into()));
        }
        positive("sweep.tau.min_s", s.tau.min_s)?;
        positive("sweep.tau.max_s", s.tau.max_s)?;
        if s.tau.count < 2 || !(s.tau.max_s > s.tau.min_s) {
            return Err(CliError::Config("sweep.tau needs count >= 2 and max_s > min_s".into()));
        }
        if !(self.invert.p0 > self.invert.p_inf) {
            return Err(CliError::Config(format!(
                "invert: inverted contrast (p0 = {} <= p_inf = {})",
                self.invert.p0, self.invert.p_inf
            )));
        }
        let f = &self.filter;
        for &n in &f.pulses {
            PulseSequence::from_pulses(n).map_err(|e| CliError::Config(format!("filter.pulses: {e}")))?;
        }
        positive("filter.tau_s", f.tau_s)?;
        positive("filter.f_min_hz", f.f_min_hz)?;
        if !(f.f_max_hz > f.f_min_hz) || f.count < 2 || !(f.field_t >= 0.0) {
            return Err(CliError::Config("filter needs f_max_hz > f_min_hz, count >= 2, field_t >= 0".into()));
        }
        Ok(())
    }
}
