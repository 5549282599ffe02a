//! Decay normalisation, lobe-approximation spectral inversion and T2 extraction.

use serde::{Deserialize, Serialize};

use crate::constants::{field_to_angular_sq, GAMMA_GE73};
use crate::error::{Error, Result};

/// Integral of the CPn main lobe in units of n τ.
pub const MAIN_LOBE_WEIGHT: f64 = 0.732;

/// A measured or simulated echo decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Pulse count: 0 = FID, 1 = Hahn, even = CPn.
    pub n: u32,
    pub b_tesla: f64,
    pub tau_s: Vec<f64>,
    pub p_singlet: Vec<f64>,
    /// Signal for τ → 0.
    pub p0: f64,
    /// Signal for τ → ∞.
    pub p_inf: f64,
    #[serde(default)]
    pub label: String,
}

impl DecayCurve {
    pub fn new(n: u32, b_tesla: f64, tau_s: Vec<f64>, p_singlet: Vec<f64>) -> Result<Self> {
        let c = Self { n, b_tesla, tau_s, p_singlet, p0: 1.0, p_inf: 0.5, label: String::new() };
        c.validate()?;
        Ok(c)
    }

    /// Curve with P_S = (1 + e^{−χ})/2.
    pub fn from_chi(n: u32, b_tesla: f64, tau_s: Vec<f64>, chi: &[f64]) -> Result<Self> {
        let p = chi.iter().map(|c| 0.5 + 0.5 * (-c).exp()).collect();
        Self::new(n, b_tesla, tau_s, p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_s.len() != self.p_singlet.len() {
            return Err(Error::InvalidParameter("decay curve: tau and P_S lengths differ".into()));
        }
        if self.tau_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("decay curve: tau grid must be strictly increasing".into()));
        }
        if self.p_singlet.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("decay curve: P_S outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Total sequence time 2nτ (τ itself for FID).
    pub fn times(&self) -> Vec<f64> {
        let k = if self.n == 0 { 1.0 } else { 2.0 * self.n as f64 };
        self.tau_s.iter().map(|t| k * t).collect()
    }
}

/// χ = −ln[(P_S − P_∞)/(P₀ − P_∞)]; points at or below P_∞ become +∞.
pub fn normalize_decay(curve: &DecayCurve) -> Result<Vec<f64>> {
    curve.validate()?;
    if !(curve.p0 > curve.p_inf) {
        return Err(Error::InvertedContrast { p0: curve.p0, p_inf: curve.p_inf });
    }
    let span = curve.p0 - curve.p_inf;
    Ok(curve
        .p_singlet
        .iter()
        .map(|&p| {
            let r = (p - curve.p_inf) / span;
            if r > 0.0 {
                -r.ln()
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Σ_k S_k(f) estimated point by point from a CPn decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub n: u32,
    pub f_hz: Vec<f64>,
    /// 8 f χ / (0.732 n): angular-frequency units, (rad/s)²/Hz.
    pub s_freq: Vec<f64>,
    /// Magnetic-field units, T²/Hz.
    pub s_field: Vec<f64>,
    pub censored: Vec<bool>,
    /// Full main-lobe width 4f/n.
    pub lobe_bw_hz: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn len(&self) -> usize {
        self.f_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_hz.is_empty()
    }
}

/// Lobe-approximation inversion. Each τ maps to f = 1/(4τ) and t = n/(2f).
pub fn invert_spectrum(tau_s: &[f64], chi: &[f64], n: u32) -> Result<NoiseSpectrum> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InversionRequiresCpn);
    }
    if tau_s.len() != chi.len() {
        return Err(Error::InvalidParameter("inversion: tau and chi lengths differ".into()));
    }
    if tau_s.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("inversion: tau must be positive".into()));
    }
    let to_field = 1.0 / field_to_angular_sq();
    let nn = n as f64;
    let mut out = NoiseSpectrum {
        n,
        f_hz: Vec::with_capacity(tau_s.len()),
        s_freq: Vec::with_capacity(tau_s.len()),
        s_field: Vec::with_capacity(tau_s.len()),
        censored: Vec::with_capacity(tau_s.len()),
        lobe_bw_hz: Vec::with_capacity(tau_s.len()),
    };
    // Emit in increasing frequency, i.e. decreasing τ.
    for (tau, c) in tau_s.iter().zip(chi).rev() {
        let f = 0.25 / tau;
        let censored = !c.is_finite();
        let s = if censored { f64::NAN } else { 8.0 * f * c / (MAIN_LOBE_WEIGHT * nn) };
        out.f_hz.push(f);
        out.s_freq.push(s);
        out.s_field.push(s * to_field);
        out.censored.push(censored);
        out.lobe_bw_hz.push(4.0 * f / nn);
    }
    Ok(out)
}

/// First upward crossing of χ = 1, interpolated linearly in log t.
pub fn extract_t2(t_s: &[f64], chi: &[f64]) -> Result<f64> {
    if t_s.len() != chi.len() || t_s.is_empty() {
        return Err(Error::InvalidParameter("extract_t2: need matching non-empty t and chi".into()));
    }
    if chi[0] >= 1.0 {
        return Err(Error::T2BelowSweep);
    }
    for k in 1..t_s.len() {
        if chi[k] >= 1.0 {
            let (c0, c1) = (chi[k - 1], chi[k]);
            if !c1.is_finite() {
                // Censored right neighbour: no slope to follow, take the log midpoint.
                return Ok((t_s[k - 1] * t_s[k]).sqrt());
            }
            let w = (1.0 - c0) / (c1 - c0);
            let (l0, l1) = (t_s[k - 1].ln(), t_s[k].ln());
            return Ok((l0 + w * (l1 - l0)).exp());
        }
    }
    Err(Error::T2BeyondSweep)
}

/// Median of T2 samples where non-finite entries are right-censored (the
/// curve never decayed within the sweep). Returns +∞ when at least half are
/// censored, NaN for an empty slice.
pub fn censored_median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = samples.iter().map(|&x| if x.is_finite() { x } else { f64::INFINITY }).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// ⁷³Ge Larmor frequency and its first harmonic (Hz).
pub fn peak_locations(b_tesla: f64) -> (f64, f64) {
    let f1 = GAMMA_GE73 / (2.0 * std::f64::consts::PI) * b_tesla;
    (f1, 2.0 * f1)
}

/// Mean and standard deviation over spectra sharing a frequency grid,
/// ignoring censored points. Frequencies with no data are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpectrum {
    pub f_hz: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: Vec<usize>,
}

pub fn ensemble_mean(spectra: &[NoiseSpectrum], field_units: bool) -> Result<EnsembleSpectrum> {
    let first = spectra.first().ok_or_else(|| Error::InvalidParameter("empty spectrum ensemble".into()))?;
    if spectra.iter().any(|s| s.f_hz != first.f_hz) {
        return Err(Error::InvalidParameter("ensemble spectra use different frequency grids".into()));
    }
    let m = first.len();
    let mut out = EnsembleSpectrum { f_hz: first.f_hz.clone(), mean: vec![0.0; m], std: vec![0.0; m], count: vec![0; m] };
    for i in 0..m {
        let vals: Vec<f64> = spectra
            .iter()
            .filter(|s| !s.censored[i])
            .map(|s| if field_units { s.s_field[i] } else { s.s_freq[i] })
            .collect();
        out.count[i] = vals.len();
        if vals.is_empty() {
            out.mean[i] = f64::NAN;
            out.std[i] = f64::NAN;
            continue;
        }
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        out.mean[i] = mu;
        out.std[i] = var.sqrt();
    }
    Ok(out)
}

/// Indices of strict interior local maxima (NaN points never qualify).
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| {
            let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
            b.is_finite() && a.is_finite() && c.is_finite() && b > a && b > c
        })
        .collect()
}

/// Whether some local maximum lies within one lobe bandwidth of `target`.
pub fn has_peak_near(f_hz: &[f64], values: &[f64], lobe_bw_hz: &[f64], target: f64) -> bool {
    local_maxima(values).into_iter().any(|i| (f_hz[i] - target).abs() <= lobe_bw_hz[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn normalisation() {
        let c = DecayCurve::new(10, 0.01, vec![1e-6, 2e-6, 3e-6], vec![1.0, 0.5 + 0.5 / E, 0.5]).unwrap();
        let chi = normalize_decay(&c).unwrap();
        assert_eq!(chi[0], 0.0);
        assert!((chi[1] - 1.0).abs() < 1e-12);
        assert!(chi[2].is_infinite());
        let mut bad = c.clone();
        bad.p0 = 0.4;
        assert!(matches!(normalize_decay(&bad), Err(Error::InvertedContrast { .. })));
    }

    #[test]
    fn chi_round_trip() {
        let chi0 = [0.0, 0.01, 0.3, 2.0, 7.5];
        let taus = vec![1e-6, 2e-6, 3e-6, 4e-6, 5e-6];
        let c = DecayCurve::from_chi(4, 0.0, taus, &chi0).unwrap();
        for (a, b) in normalize_decay(&c).unwrap().iter().zip(&chi0) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn constant_chi_inversion() {
        let taus = vec![1e-6, 2e-6, 4e-6];
        let s = invert_spectrum(&taus, &[1.0; 3], 10).unwrap();
        for (f, v) in s.f_hz.iter().zip(&s.s_freq) {
            assert!((v - 8.0 * f / 7.32).abs() < 1e-12 * v);
        }
        assert!(invert_spectrum(&taus, &[1.0; 3], 1).is_err());
        assert!(invert_spectrum(&taus, &[1.0; 3], 3).is_err());
    }

    #[test]
    fn gaussian_decay_gives_one_over_f() {
        let (n, t2) = (10u32, 50e-6);
        let taus: Vec<f64> = (1..30).map(|k| k as f64 * 1e-7).collect();
        let chi: Vec<f64> = taus.iter().map(|t| (2.0 * n as f64 * t / t2).powi(2)).collect();
        let s = invert_spectrum(&taus, &chi, n).unwrap();
        for (f, v) in s.f_hz.iter().zip(&s.s_freq) {
            let expect = 2.0 * n as f64 / (0.732 * f * t2 * t2);
            assert!((v / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frequency_mapping() {
        let s = invert_spectrum(&[1e-6, 2e-6], &[0.1, 0.1], 4).unwrap();
        assert!((s.f_hz[1] / s.f_hz[0] - 2.0).abs() < 1e-15);
        assert!((s.lobe_bw_hz[0] - s.f_hz[0]).abs() < 1e-9);
    }

    #[test]
    fn t2_crossings() {
        let t0 = 4e-5;
        let t: Vec<f64> = (0..200).map(|k| 1e-6 * 1.03f64.powi(k)).collect();
        let gauss: Vec<f64> = t.iter().map(|x| (x / t0).powi(2)).collect();
        let expo: Vec<f64> = t.iter().map(|x| x / t0).collect();
        // χ is a power of t, so interpolation in log t is only off by the curvature of exp.
        assert!((extract_t2(&t, &gauss).unwrap() / t0 - 1.0).abs() < 1e-3);
        assert!((extract_t2(&t, &expo).unwrap() / t0 - 1.0).abs() < 1e-3);
        let on_grid = [t0 / 2.0, t0, 2.0 * t0];
        let g: Vec<f64> = on_grid.iter().map(|x| (x / t0).powi(2)).collect();
        assert!((extract_t2(&on_grid, &g).unwrap() / t0 - 1.0).abs() < 1e-14);
        assert!(matches!(extract_t2(&t[..10], &gauss[..10]), Err(Error::T2BeyondSweep)));
    }

    #[test]
    fn first_crossing_on_bumpy_curve() {
        let t = [1.0, 2.0, 4.0, 8.0, 16.0];
        let chi = [0.2, 1.5, 0.4, 3.0, 5.0];
        let t2 = extract_t2(&t, &chi).unwrap();
        assert!(t2 > 1.0 && t2 < 2.0);
    }

    #[test]
    fn ge_peaks() {
        let (a, b) = peak_locations(0.04);
        assert!((a - 59.6e3).abs() < 1e-6 && (b - 119.2e3).abs() < 1e-6);
        assert_eq!(peak_locations(0.0), (0.0, 0.0));
        let (a, b) = peak_locations(1.0);
        assert!((a - 1.49e6).abs() < 1e-6 && (b - 2.98e6).abs() < 1e-6);
    }

    #[test]
    fn maxima() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5, 2.0, f64::NAN, 1.0]), vec![1]);
    }

    #[test]
    fn median_with_censoring() {
        assert_eq!(censored_median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(censored_median(&[1.0, f64::NAN, 2.0, 4.0]), 3.0);
        assert_eq!(censored_median(&[1.0, f64::NAN]), f64::INFINITY);
        assert!(censored_median(&[]).is_nan());
    }
}
