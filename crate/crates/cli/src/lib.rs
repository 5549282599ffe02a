//! Configuration-driven pipeline runner: device ensembles, echo sweeps,
//! T2 tables, spectral inversion, filter tables and FID fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod manifest;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spinbath_core::filter::{f0, full_filter, fid_fit, PulseSequence};
use spinbath_core::hyperfine::{build_device, solve_envelope, t2_star, DeviceRealization};
use spinbath_core::quadrupole::{chi_curve, ChiPoint};
use spinbath_core::spectroscopy::{
    censored_median, ensemble_mean, extract_t2, local_maxima, normalize_decay, peak_locations, DecayCurve, NoiseSpectrum,
};
use spinbath_core::wavefunction::write_wavefunction_csv;
use spinbath_core::Error as ModelError;

pub use config::RunConfig;
pub use error::CliError;
pub use manifest::RunManifest;
use manifest::{num, OutputWriter, RealizationSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    BuildDevice,
    EchoSweep,
    T2Report,
    Invert,
    FilterEval,
    FidFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildDevice => "build-device",
            Command::EchoSweep => "echo-sweep",
            Command::T2Report => "t2-report",
            Command::Invert => "invert",
            Command::FilterEval => "filter-eval",
            Command::FidFit => "fid-fit",
        }
    }
}

pub const WORKERS_ENV: &str = "SPINBATH_WORKERS";

/// Worker count: config, then SPINBATH_WORKERS, then all cores.
pub fn resolve_workers(cfg: &RunConfig) -> Result<usize, CliError> {
    if cfg.workers > 0 {
        return Ok(cfg.workers);
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")));
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Validate the config, then run `cmd` on a dedicated worker pool.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let workers = resolve_workers(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Numerical(format!("worker pool: {e}")))?;
    let start = Instant::now();
    pool.install(|| {
        let mut out = OutputWriter::new(&cfg.output_dir)?;
        let seeds = match cmd {
            Command::BuildDevice => cmd_build_device(cfg, &mut out)?,
            Command::EchoSweep => cmd_echo_sweep(cfg, &mut out)?,
            Command::T2Report => cmd_t2_report(cfg, &mut out)?,
            Command::Invert => cmd_invert(cfg, &mut out)?,
            Command::FilterEval => cmd_filter_eval(cfg, &mut out)?,
            Command::FidFit => cmd_fid_fit(cfg, &mut out)?,
        };
        out.finish(cmd.name(), cfg, seeds, workers, start.elapsed().as_secs_f64())
    })
}

pub fn width_dir(w: f64) -> String {
    format!("w{w:.3}nm")
}

pub fn field_dir(b: f64) -> String {
    format!("B{b:.6}T")
}

fn realization_seeds(cfg: &RunConfig) -> Vec<RealizationSeed> {
    cfg.widths()
        .iter()
        .flat_map(|&w| {
            (0..cfg.ensemble as u64).map(move |index| RealizationSeed { well_width_nm: w, master_seed: cfg.seed, index })
        })
        .collect()
}

fn build_all(cfg: &RunConfig) -> Result<Vec<(f64, DeviceRealization)>, CliError> {
    let tasks = realization_seeds(cfg);
    tasks
        .par_iter()
        .map(|t| {
            let params = cfg.device.params(t.well_width_nm);
            build_device(&params, t.master_seed, t.index)
                .map(|d| (t.well_width_nm, d))
                .map_err(|e| CliError::model(&format!("device (well_width_nm = {}, index {})", t.well_width_nm, t.index), e))
        })
        .collect()
}

fn cmd_build_device(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    for &w in cfg.widths() {
        let env = solve_envelope(&cfg.device.params(w)).map_err(|e| CliError::model("wavefunction", e))?;
        let mut buf = Vec::new();
        write_wavefunction_csv(&env, &mut buf).map_err(|e| CliError::model("wavefunction", e))?;
        out.write(&format!("devices/{}/wavefunction.csv", width_dir(w)), &buf)?;
    }
    let devices = build_all(cfg)?;
    let mut rows = Vec::new();
    for (w, d) in &devices {
        let json = d.to_json().map_err(|e| CliError::model("device export", e))? + "\n";
        out.write(&format!("devices/{}/device_{:04}.json", width_dir(*w), d.index), json.as_bytes())?;
        let r = t2_star(d, true).map_err(|e| CliError::model("t2*", e))?;
        rows.push(vec![num(*w), d.index.to_string(), num(r.t2_star_s), num(r.ge_rate_sq), num(r.si_rate_sq)]);
    }
    out.write_csv(
        "devices/t2_star.csv",
        &["well_width_nm", "realization", "t2_star_s", "ge_rate_sq", "si_rate_sq"],
        &rows,
    )?;
    Ok(realization_seeds(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub well_width_nm: f64,
    pub b_tesla: f64,
    pub realization: u64,
    pub path: String,
    pub max_imag_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub pulses: u32,
    pub tau_s: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    pub aggregates: Vec<SweepEntry>,
}

pub const SWEEP_INDEX: &str = "sweep/sweep_index.json";

fn decay_rows(points: &[ChiPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| vec![num(p.tau_s), num(p.t_s), num(p.chi), num(p.singlet_probability())])
        .collect()
}

fn cmd_echo_sweep(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    let taus = cfg.sweep.tau.values();
    let n = cfg.sweep.pulses;
    let fields = &cfg.sweep.fields_t;
    let devices = build_all(cfg)?;
    // One task per (device, field); the order of this list fixes the output.
    let tasks: Vec<(usize, f64)> = (0..devices.len()).flat_map(|d| fields.iter().map(move |&b| (d, b))).collect();
    let curves: Vec<Vec<ChiPoint>> = tasks
        .par_iter()
        .map(|&(d, b)| chi_curve(&devices[d].1, &taus, n, b).map_err(|e| CliError::model("echo sweep", e)))
        .collect::<Result<_, _>>()?;

    let mut index = SweepIndex { pulses: n, tau_s: taus.clone(), entries: Vec::new(), aggregates: Vec::new() };
    for ((d, b), pts) in tasks.iter().zip(&curves) {
        let (w, dev) = &devices[*d];
        let rel = format!("sweep/{}/{}/decay_{:04}.csv", width_dir(*w), field_dir(*b), dev.index);
        out.write_csv(&rel, &["tau_s", "t_s", "chi", "p_singlet"], &decay_rows(pts))?;
        index.entries.push(SweepEntry {
            well_width_nm: *w,
            b_tesla: *b,
            realization: dev.index,
            path: rel,
            max_imag_residual: pts.iter().map(|p| p.max_imag_residual).fold(0.0, f64::max),
        });
    }
    for &w in cfg.widths() {
        for &b in fields {
            let group: Vec<&Vec<ChiPoint>> = tasks
                .iter()
                .zip(&curves)
                .filter(|((d, bb), _)| devices[*d].0 == w && *bb == b)
                .map(|(_, c)| c)
                .collect();
            let rows: Vec<Vec<String>> = (0..taus.len())
                .map(|k| {
                    let chis: Vec<f64> = group.iter().map(|c| c[k].chi).collect();
                    let ps: Vec<f64> = group.iter().map(|c| c[k].singlet_probability()).collect();
                    let (pm, ps_std) = mean_std(&ps);
                    let finite: Vec<f64> = chis.iter().copied().filter(|c| c.is_finite()).collect();
                    let (cm, cs) = mean_std(&finite);
                    vec![
                        num(taus[k]),
                        num(group[0][k].t_s),
                        num(cm),
                        num(cs),
                        num(pm),
                        num(ps_std),
                        (chis.len() - finite.len()).to_string(),
                    ]
                })
                .collect();
            let rel = format!("sweep/{}/{}/aggregate.csv", width_dir(w), field_dir(b));
            out.write_csv(&rel, &["tau_s", "t_s", "chi_mean", "chi_std", "p_mean", "p_std", "censored"], &rows)?;
            index.aggregates.push(SweepEntry { well_width_nm: w, b_tesla: b, realization: u64::MAX, path: rel, max_imag_residual: 0.0 });
        }
    }
    out.write_json(SWEEP_INDEX, &index)?;
    Ok(realization_seeds(cfg))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, s)
}

fn read_sweep_index(root: &Path) -> Result<SweepIndex, CliError> {
    let path = root.join(SWEEP_INDEX);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::Config(format!("no echo sweep found at {} (run echo-sweep first)", path.display())))?;
    let idx: SweepIndex = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if idx.entries.is_empty() {
        return Err(CliError::Config(format!("{}: sweep contains no curves", path.display())));
    }
    Ok(idx)
}

/// Read a CSV with a header into named f64 columns.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?.clone();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| CliError::Config(format!("{}: missing column {n:?}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut out = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for (k, &c) in cols.iter().enumerate() {
            let v: f64 = rec
                .get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Config(format!("{}: unparsable value in column {}", path.display(), names[k])))?;
            out[k].push(v);
        }
    }
    Ok(out)
}

/// Per-curve T2 classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T2Status {
    Resolved,
    BeyondSweep,
    BelowSweep,
}

pub fn t2_of_curve(t: &[f64], chi: &[f64]) -> (T2Status, f64) {
    match extract_t2(t, chi) {
        Ok(v) => (T2Status::Resolved, v),
        Err(ModelError::T2BelowSweep) => (T2Status::BelowSweep, f64::NAN),
        Err(_) => (T2Status::BeyondSweep, f64::NAN),
    }
}

fn cmd_t2_report(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    let idx = read_sweep_index(&cfg.output_dir)?;
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for e in &idx.entries {
        if !keys.contains(&(e.well_width_nm, e.b_tesla)) {
            keys.push((e.well_width_nm, e.b_tesla));
        }
    }
    let mut per_key = Vec::new();
    for &(w, b) in &keys {
        let mut t2s = Vec::new();
        let mut all = Vec::new();
        let (mut beyond, mut below) = (0usize, 0usize);
        for e in idx.entries.iter().filter(|e| e.well_width_nm == w && e.b_tesla == b) {
            let cols = read_columns(&cfg.output_dir.join(&e.path), &["t_s", "chi"])?;
            let (status, t2) = t2_of_curve(&cols[0], &cols[1]);
            match status {
                T2Status::Resolved => {
                    t2s.push(t2);
                    all.push(t2);
                }
                T2Status::BeyondSweep => {
                    beyond += 1;
                    all.push(f64::INFINITY);
                }
                T2Status::BelowSweep => {
                    below += 1;
                    all.push(0.0);
                }
            }
            let label = serde_json::to_value(status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            samples.push(vec![num(w), num(b), e.realization.to_string(), num(t2), label]);
        }
        let (m, s) = mean_std(&t2s);
        let median = censored_median(&all);
        rows.push(vec![
            num(w),
            num(b),
            idx.pulses.to_string(),
            all.len().to_string(),
            t2s.len().to_string(),
            beyond.to_string(),
            below.to_string(),
            num(m),
            num(s),
            num(median),
        ]);
        per_key.push((w, b, median));
    }
    out.write_csv(
        "t2/t2_vs_width_vs_B.csv",
        &[
            "well_width_nm",
            "b_tesla",
            "pulses",
            "realizations",
            "resolved",
            "beyond_sweep",
            "below_sweep",
            "t2_mean_s",
            "t2_std_s",
            "t2_median_s",
        ],
        &rows,
    )?;
    out.write_csv("t2/t2_samples.csv", &["well_width_nm", "b_tesla", "realization", "t2_s", "status"], &samples)?;

    let mut div_rows = Vec::new();
    let mut widths: Vec<f64> = keys.iter().map(|k| k.0).collect();
    widths.dedup();
    for w in widths {
        let mut ks: Vec<(f64, f64)> = per_key.iter().filter(|k| k.0 == w).map(|k| (k.1, k.2)).collect();
        ks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let field = divergence_field(&ks);
        div_rows.push(vec![num(w), num(ks[0].0), num(ks[0].1), field.map_or("none".into(), num)]);
    }
    out.write_csv("t2/divergence.csv", &["well_width_nm", "base_field_t", "base_t2_median_s", "divergence_field_t"], &div_rows)?;
    Ok(Vec::new())
}

/// Lowest field at which the censored-median T2 reaches twice its value at
/// the lowest swept field. `points` are (B, median T2) in increasing B; a
/// median that is already censored at the lowest field returns that field.
pub fn divergence_field(points: &[(f64, f64)]) -> Option<f64> {
    let &(b0, base) = points.first()?;
    if base.is_infinite() {
        return Some(b0);
    }
    points.iter().skip(1).find(|(_, m)| *m >= 2.0 * base).map(|(b, _)| *b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub label: String,
    pub b_tesla: Option<f64>,
    pub expected_hz: Option<(f64, f64)>,
    pub maxima_hz: Vec<f64>,
    pub larmor_found: Option<bool>,
    pub harmonic_found: Option<bool>,
}

fn spectrum_rows(s: &NoiseSpectrum) -> Vec<Vec<String>> {
    (0..s.len())
        .map(|i| {
            vec![num(s.f_hz[i]), num(s.s_field[i]), num(s.s_freq[i]), (s.censored[i] as u8).to_string(), num(s.lobe_bw_hz[i])]
        })
        .collect()
}

const SPECTRUM_HEADER: [&str; 5] = ["f_hz", "s_field", "s_freq", "censored", "lobe_bw_hz"];

fn annotate(label: String, b: Option<f64>, f: &[f64], values: &[f64], bw: &[f64]) -> PeakReport {
    let maxima: Vec<usize> = local_maxima(values);
    let expected = b.filter(|b| *b > 0.0).map(peak_locations);
    let near = |target: f64| maxima.iter().any(|&i| (f[i] - target).abs() <= bw[i]);
    PeakReport {
        label,
        b_tesla: b,
        expected_hz: expected,
        maxima_hz: maxima.iter().map(|&i| f[i]).collect(),
        larmor_found: expected.map(|e| near(e.0)),
        harmonic_found: expected.map(|e| near(e.1)),
    }
}

fn cmd_invert(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    let inv = &cfg.invert;
    let mut peaks = Vec::new();
    if !inv.inputs.is_empty() {
        let n = inv
            .pulses
            .ok_or_else(|| CliError::Config("invert: measured inputs need invert.pulses (sequence n)".into()))?;
        for (k, path) in inv.inputs.iter().enumerate() {
            let cols = read_columns(path, &["tau_s", "p_singlet"])?;
            let mut curve = DecayCurve::new(n, inv.field_t.unwrap_or(0.0), cols[0].clone(), cols[1].clone())
                .map_err(|e| CliError::model(&path.display().to_string(), e))?;
            curve.p0 = inv.p0;
            curve.p_inf = inv.p_inf;
            let chi = normalize_decay(&curve).map_err(|e| CliError::model(&path.display().to_string(), e))?;
            let s = spinbath_core::spectroscopy::invert_spectrum(&curve.tau_s, &chi, n)
                .map_err(|e| CliError::model(&path.display().to_string(), e))?;
            out.write_csv(&format!("spectra/measured_{k:03}.csv"), &SPECTRUM_HEADER, &spectrum_rows(&s))?;
            peaks.push(annotate(path.display().to_string(), inv.field_t, &s.f_hz, &s.s_field, &s.lobe_bw_hz));
        }
        out.write_json("spectra/peaks.json", &peaks)?;
        return Ok(Vec::new());
    }

    let idx = read_sweep_index(&cfg.output_dir)?;
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for e in &idx.entries {
        if !keys.contains(&(e.well_width_nm, e.b_tesla)) {
            keys.push((e.well_width_nm, e.b_tesla));
        }
    }
    for (w, b) in keys {
        let mut spectra = Vec::new();
        for e in idx.entries.iter().filter(|e| e.well_width_nm == w && e.b_tesla == b) {
            let cols = read_columns(&cfg.output_dir.join(&e.path), &["tau_s", "chi"])?;
            let s = spinbath_core::spectroscopy::invert_spectrum(&cols[0], &cols[1], idx.pulses)
                .map_err(|err| CliError::model(&e.path, err))?;
            let rel = format!("spectra/{}/{}/spectrum_{:04}.csv", width_dir(w), field_dir(b), e.realization);
            out.write_csv(&rel, &SPECTRUM_HEADER, &spectrum_rows(&s))?;
            spectra.push(s);
        }
        let field = ensemble_mean(&spectra, true).map_err(|e| CliError::model("ensemble spectrum", e))?;
        let freq = ensemble_mean(&spectra, false).map_err(|e| CliError::model("ensemble spectrum", e))?;
        let rows: Vec<Vec<String>> = (0..field.f_hz.len())
            .map(|i| {
                vec![
                    num(field.f_hz[i]),
                    num(field.mean[i]),
                    num(field.std[i]),
                    num(freq.mean[i]),
                    num(freq.std[i]),
                    field.count[i].to_string(),
                    num(spectra[0].lobe_bw_hz[i]),
                ]
            })
            .collect();
        out.write_csv(
            &format!("spectra/{}/{}/ensemble.csv", width_dir(w), field_dir(b)),
            &["f_hz", "s_field_mean", "s_field_std", "s_freq_mean", "s_freq_std", "count", "lobe_bw_hz"],
            &rows,
        )?;
        peaks.push(annotate(
            format!("{}/{}", width_dir(w), field_dir(b)),
            Some(b),
            &field.f_hz,
            &field.mean,
            &spectra[0].lobe_bw_hz,
        ));
    }
    out.write_json("spectra/peaks.json", &peaks)?;
    Ok(Vec::new())
}

fn sequence_label(seq: &PulseSequence) -> String {
    match seq.n {
        0 => "fid".into(),
        1 => "he".into(),
        n => format!("cp{n}"),
    }
}

fn cmd_filter_eval(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    let fc = &cfg.filter;
    let seqs: Vec<PulseSequence> = fc
        .pulses
        .iter()
        .map(|&n| PulseSequence::from_pulses(n).map_err(|e| CliError::model("filter.pulses", e)))
        .collect::<Result<_, _>>()?;
    let freqs: Vec<f64> = (0..fc.count)
        .map(|k| fc.f_min_hz * (fc.f_max_hz / fc.f_min_hz).powf(k as f64 / (fc.count - 1) as f64))
        .collect();
    let mut header = vec!["f_hz".to_string()];
    for s in &seqs {
        header.push(format!("f0_{}", sequence_label(s)));
        header.push(format!("f_{}", sequence_label(s)));
    }
    let rows: Vec<Vec<String>> = freqs
        .iter()
        .map(|&f| {
            let mut r = vec![num(f)];
            for s in &seqs {
                r.push(num(f0(s, f, fc.tau_s)));
                r.push(num(full_filter(s, f, fc.tau_s, fc.field_t)));
            }
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("filter/filter_tables.csv", &h, &rows)?;
    Ok(Vec::new())
}

fn cmd_fid_fit(cfg: &RunConfig, out: &mut OutputWriter) -> Result<Vec<RealizationSeed>, CliError> {
    let path = cfg.fid.input.as_ref().ok_or_else(|| CliError::Config("fid-fit needs fid.input (CSV with t_s, p_singlet)".into()))?;
    let cols = read_columns(path, &["t_s", "p_singlet"])?;
    let fit = fid_fit(&cols[0], &cols[1]).map_err(|e| CliError::model("fid fit", e))?;
    out.write_json("fid/fid_fit.json", &fit)?;
    Ok(Vec::new())
}
