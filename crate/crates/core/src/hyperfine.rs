//! Fermi-contact couplings, per-dot nucleus selection and ergodic T2*.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{IsotopeTable, Species, G0, MU0, MU_B};
use crate::crystal::{
    draw_quadrupole_params, generate_crystal, HeterostructureProfile, NuclearSite, Quadrupole,
    SimulationBox,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::wavefunction::{choose_valley_phase, solve_vertical, EnvelopeWavefunction, PotentialModel, VerticalGrid};

/// `(2 mu0 / 3) g0 mu_B |gamma| eta` in rad/s·m³.
pub fn coupling_prefactor(species: Species, eta: f64) -> f64 {
    2.0 * MU0 / 3.0 * G0 * MU_B * species.gamma() * eta
}

fn eta_for(species: Species, isotopes: &IsotopeTable) -> f64 {
    match species {
        Species::Ge73 => isotopes.ge73.eta,
        Species::Si29 => isotopes.si29_well.eta,
    }
}

/// Contact coupling |A| (rad/s) of `site` to the electron in `wf`.
pub fn coupling(site: &NuclearSite, wf: &EnvelopeWavefunction, isotopes: &IsotopeTable) -> f64 {
    let density_m3 = wf.density_at(site.position_nm()) * 1e27;
    coupling_prefactor(site.species, eta_for(site.species, isotopes)) * density_m3
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    coupling: f64,
    key: (i32, i32, i32),
    idx: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    /// "Greater" means ranked higher: larger coupling, then smaller lattice key.
    fn cmp(&self, other: &Self) -> Ordering {
        self.coupling
            .total_cmp(&other.coupling)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// The `n` sites of `species` with the largest coupling, in descending order.
///
/// Couplings must already be filled. Ties are broken by lattice position.
/// If fewer than `n` candidates exist all of them are returned and a warning
/// is logged.
pub fn select_top(sites: &[NuclearSite], species: Species, n: usize) -> Result<Vec<NuclearSite>> {
    if n == 0 {
        return Err(Error::InvalidParameter("top-N selection needs N >= 1".into()));
    }
    // Min-heap of the current best n.
    let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(n + 1);
    let mut candidates = 0usize;
    for (idx, s) in sites.iter().enumerate().filter(|(_, s)| s.species == species) {
        candidates += 1;
        let r = Ranked { coupling: s.coupling, key: s.lattice_key(), idx };
        if heap.len() < n {
            heap.push(std::cmp::Reverse(r));
        } else if let Some(worst) = heap.peek() {
            if r > worst.0 {
                heap.pop();
                heap.push(std::cmp::Reverse(r));
            }
        }
    }
    if candidates < n {
        log::warn!("only {candidates} {species:?} sites available for top-{n} selection");
    }
    let mut ranked: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
    ranked.sort_by(|a, b| b.cmp(a));
    Ok(ranked.into_iter().map(|r| sites[r.idx]).collect())
}

/// Everything needed to build one device realisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub profile: HeterostructureProfile,
    pub isotopes: IsotopeTable,
    pub potential: PotentialModel,
    pub lateral_diameter_nm: f64,
    pub dot_separation_nm: f64,
    /// Lateral side of the crystal box around each dot.
    pub lateral_box_nm: f64,
    /// Barrier included above and below the well.
    pub barrier_margin_nm: f64,
    pub grid_spacing_nm: f64,
    pub top_n: usize,
    /// Lorentzian half-width of the quadrupole splitting (rad/s).
    pub xi_scale: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            profile: HeterostructureProfile::default(),
            isotopes: IsotopeTable::enriched(),
            potential: PotentialModel::default(),
            lateral_diameter_nm: 30.0,
            dot_separation_nm: 100.0,
            lateral_box_nm: 90.0,
            barrier_margin_nm: 15.0,
            grid_spacing_nm: 0.02,
            top_n: 400,
            xi_scale: 1e4,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.isotopes.validate()?;
        self.potential.validate()?;
        let positive = [
            ("lateral_diameter_nm", self.lateral_diameter_nm),
            ("dot_separation_nm", self.dot_separation_nm),
            ("lateral_box_nm", self.lateral_box_nm),
            ("grid_spacing_nm", self.grid_spacing_nm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.top_n == 0 {
            return Err(Error::InvalidParameter("top_n must be >= 1".into()));
        }
        if !(self.xi_scale >= 0.0) {
            return Err(Error::InvalidParameter("xi_scale must be >= 0".into()));
        }
        if self.lateral_box_nm > self.dot_separation_nm {
            return Err(Error::InvalidParameter(
                "per-dot crystal boxes overlap: lateral_box_nm exceeds dot_separation_nm".into(),
            ));
        }
        self.dot_box(0).validate(&self.profile)
    }

    pub fn dot_center(&self, dot: usize) -> (f64, f64) {
        let h = 0.5 * self.dot_separation_nm;
        if dot == 0 {
            (-h, 0.0)
        } else {
            (h, 0.0)
        }
    }

    pub fn dot_box(&self, dot: usize) -> SimulationBox {
        SimulationBox::around_dot(self.dot_center(dot), self.lateral_box_nm, &self.profile, self.barrier_margin_nm)
    }

    pub fn vertical_grid(&self) -> VerticalGrid {
        VerticalGrid::for_box(&self.dot_box(0), self.grid_spacing_nm)
    }
}

/// Species-resolved Σ A² over every generated site of one dot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingSums {
    pub ge_count: usize,
    pub si_count: usize,
    /// Σ A² over all Ge73 sites (rad²/s²).
    pub ge_a2: f64,
    /// Σ A² over all Si29 sites.
    pub si_a2: f64,
}

/// One dot's retained bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotBath {
    pub dot_sign: i8,
    pub center_nm: (f64, f64),
    pub valley_phase: f64,
    pub ground_energy_ev: f64,
    pub sums: CouplingSums,
    /// Selected Ge73 nuclei, descending in coupling.
    pub nuclei: Vec<NuclearSite>,
}

/// One random crystal + wavefunction pair for both dots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRealization {
    pub format: String,
    pub master_seed: u64,
    pub index: u64,
    pub params: DeviceParams,
    pub dots: Vec<DotBath>,
}

pub const DEVICE_FORMAT: &str = "spinbath.device.v1";

impl DeviceRealization {
    /// All selected nuclei of both dots in a fixed order (dot 1 then dot 2).
    pub fn nuclei(&self) -> impl Iterator<Item = &NuclearSite> {
        self.dots.iter().flat_map(|d| d.nuclei.iter())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s)?;
        if d.format != DEVICE_FORMAT {
            return Err(Error::InvalidParameter(format!("unknown device format {:?}", d.format)));
        }
        Ok(d)
    }
}

const CRYSTAL_STREAM: u64 = 0;
const QUADRUPOLE_STREAM: u64 = 1;

/// Solve the shared vertical envelope for a parameter set.
pub fn solve_envelope(params: &DeviceParams) -> Result<EnvelopeWavefunction> {
    solve_vertical(&params.profile, &params.potential, &params.vertical_grid(), params.lateral_diameter_nm)
}

/// Fill couplings, pick the valley phase and select the bath for one dot.
pub fn build_dot(
    params: &DeviceParams,
    envelope: &EnvelopeWavefunction,
    dot: usize,
    stream: &RngStream,
) -> Result<(DotBath, EnvelopeWavefunction)> {
    let bx = params.dot_box(dot);
    let center = params.dot_center(dot);
    let mut sites = generate_crystal(&params.profile, &bx, &params.isotopes, &stream.child(CRYSTAL_STREAM))?;

    let wf0 = envelope.for_dot(center, Some(&bx));
    let ge: Vec<NuclearSite> = sites.iter().filter(|s| s.species == Species::Ge73).copied().collect();
    let phase = choose_valley_phase(&wf0, &ge);
    drop(ge);
    let wf = wf0.with_valley_phase(phase);

    sites.par_iter_mut().for_each(|s| s.coupling = coupling(s, &wf, &params.isotopes));
    let mut sums = CouplingSums::default();
    for s in &sites {
        match s.species {
            Species::Ge73 => {
                sums.ge_count += 1;
                sums.ge_a2 += s.coupling * s.coupling;
            }
            Species::Si29 => {
                sums.si_count += 1;
                sums.si_a2 += s.coupling * s.coupling;
            }
        }
    }

    let sign: i8 = if dot == 0 { 1 } else { -1 };
    let quad_stream = stream.child(QUADRUPOLE_STREAM);
    let mut nuclei = select_top(&sites, Species::Ge73, params.top_n)?;
    for n in nuclei.iter_mut() {
        let [ux, uy, uz] = n.lattice;
        let mut rng = quad_stream
            .child(ux as i64 as u64)
            .child(uy as i64 as u64)
            .child(uz as i64 as u64)
            .rng();
        let (xi, theta) = draw_quadrupole_params(n, params.xi_scale, &mut rng)?;
        n.quadrupole = Some(Quadrupole { xi, theta });
        n.dot_sign = sign;
    }
    let bath = DotBath {
        dot_sign: sign,
        center_nm: center,
        valley_phase: phase,
        ground_energy_ev: envelope.ground_energy_ev,
        sums,
        nuclei,
    };
    Ok((bath, wf))
}

/// Build realisation `index` of the ensemble defined by `master_seed`.
pub fn build_device(params: &DeviceParams, master_seed: u64, index: u64) -> Result<DeviceRealization> {
    params.validate()?;
    let envelope = solve_envelope(params)?;
    let root = RngStream::root(master_seed, index);
    let mut dots = Vec::with_capacity(2);
    for dot in 0..2 {
        let (bath, _) = build_dot(params, &envelope, dot, &root.child(dot as u64))?;
        dots.push(bath);
    }
    Ok(DeviceRealization {
        format: DEVICE_FORMAT.to_string(),
        master_seed,
        index,
        params: *params,
        dots,
    })
}

/// T2* with its species-resolved contributions to (1/T2*)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2StarReport {
    pub t2_star_s: f64,
    pub ge_rate_sq: f64,
    pub si_rate_sq: f64,
}

/// (1/T2*)² = ½ Σ_dots Σ_k I(I+1)/3 · A².
pub fn t2_star(device: &DeviceRealization, include_si: bool) -> Result<T2StarReport> {
    let w_ge = Species::Ge73.spin_weight();
    let w_si = Species::Si29.spin_weight();
    let ge: f64 = device.dots.iter().map(|d| 0.5 * w_ge * d.sums.ge_a2).sum();
    let si: f64 = if include_si {
        device.dots.iter().map(|d| 0.5 * w_si * d.sums.si_a2).sum()
    } else {
        0.0
    };
    report(ge, si)
}

/// T2* from an explicit list of coupled sites (couplings filled).
pub fn t2_star_from_sites(sites: &[NuclearSite]) -> Result<T2StarReport> {
    let mut ge = 0.0;
    let mut si = 0.0;
    for s in sites {
        let term = 0.5 * s.species.spin_weight() * s.coupling * s.coupling;
        match s.species {
            Species::Ge73 => ge += term,
            Species::Si29 => si += term,
        }
    }
    report(ge, si)
}

fn report(ge: f64, si: f64) -> Result<T2StarReport> {
    let total = ge + si;
    if !(total > 0.0) {
        return Err(Error::NoSpinfulNuclei);
    }
    Ok(T2StarReport { t2_star_s: total.sqrt().recip(), ge_rate_sq: ge, si_rate_sq: si })
}
