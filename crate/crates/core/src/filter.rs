//! Filter functions for swap-echo sequences and forward decay prediction.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{electron_larmor_hz, field_to_angular_sq};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Fid,
    Hahn,
    Cpn,
}

/// An ideal-swap sequence: FID (no swaps), Hahn echo (one swap) or CPn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    pub n: u32,
}

impl PulseSequence {
    pub fn fid() -> Self {
        Self { kind: SequenceKind::Fid, n: 0 }
    }

    pub fn hahn() -> Self {
        Self { kind: SequenceKind::Hahn, n: 1 }
    }

    pub fn cpn(n: u32) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::UnsupportedSequence(n));
        }
        Ok(Self { kind: SequenceKind::Cpn, n })
    }

    /// 0 → FID, 1 → Hahn, even n → CPn.
    pub fn from_pulses(n: u32) -> Result<Self> {
        match n {
            0 => Ok(Self::fid()),
            1 => Ok(Self::hahn()),
            _ => Self::cpn(n),
        }
    }

    /// Number of τ-long segments N; total evolution time is N τ.
    pub fn segments(&self) -> usize {
        match self.kind {
            SequenceKind::Fid => 1,
            SequenceKind::Hahn => 2,
            SequenceKind::Cpn => 2 * self.n as usize,
        }
    }

    pub fn total_time(&self, tau: f64) -> f64 {
        self.segments() as f64 * tau
    }

    /// Swap times in units of τ. CPn swaps at τ, 3τ, …, (2n−1)τ.
    pub fn swap_times(&self) -> Vec<usize> {
        match self.kind {
            SequenceKind::Fid => vec![],
            SequenceKind::Hahn => vec![1],
            SequenceKind::Cpn => (0..self.n as usize).map(|k| 2 * k + 1).collect(),
        }
    }

    /// Switching matrix h(p) for each segment: which electron sits in which dot.
    pub fn switching(&self) -> Vec<[[f64; 2]; 2]> {
        let swaps = self.swap_times();
        (0..self.segments())
            .map(|p| {
                let flips = swaps.iter().filter(|&&s| s <= p).count();
                if flips % 2 == 0 {
                    [[1.0, 0.0], [0.0, 1.0]]
                } else {
                    [[0.0, 1.0], [1.0, 0.0]]
                }
            })
            .collect()
    }
}

/// C_pq built from the switching matrices.
pub fn c_matrix(seq: &PulseSequence) -> Vec<Vec<f64>> {
    let h = seq.switching();
    let n = h.len();
    let mut c = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in 0..n {
            let mut acc = 0.0;
            for k in 0..2 {
                acc += h[p][0][k] * h[q][0][k] - h[p][0][k] * h[q][1][k] - h[p][1][k] * h[q][0][k]
                    + h[p][1][k] * h[q][1][k];
            }
            c[p][q] = 0.5 * acc;
        }
    }
    c
}

/// Central-lobe filter for one sequence.
///
/// With two dots C_pq = ε_p ε_q, so the double sum is |Σ_p ε_p e^{2ipx}|².
/// The phase is reduced modulo π and the leading vanishing moments
/// Σ ε_p p^j of the signs are subtracted from the exponential, which keeps
/// full relative precision near the zeros of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralLobe {
    pub seq: PulseSequence,
    pub tau: f64,
    signs: Vec<f64>,
    /// Number of leading moments Σ ε_p p^j that vanish.
    vanishing: usize,
    /// Diagonal sums of C_pq: coeff[k] = Σ_{|p−q|=k} C_pq.
    coeff: Vec<f64>,
}

const MAX_MOMENTS: usize = 8;

/// e^{iθ} − Σ_{j<m} (iθ)^j / j!
fn exp_remainder(theta: f64, m: usize) -> (f64, f64) {
    if m == 0 {
        return (theta.cos(), theta.sin());
    }
    if theta.abs() > 0.5 {
        let (mut re, mut im) = (theta.cos(), theta.sin());
        let mut term = (1.0, 0.0);
        for j in 0..m {
            re -= term.0;
            im -= term.1;
            let t = ((-term.1) * theta / (j + 1) as f64, term.0 * theta / (j + 1) as f64);
            term = t;
        }
        return (re, im);
    }
    // Series from the m-th term on.
    let mut term = (1.0, 0.0);
    for j in 0..m {
        term = ((-term.1) * theta / (j + 1) as f64, term.0 * theta / (j + 1) as f64);
    }
    let (mut re, mut im) = (0.0, 0.0);
    let mut j = m;
    loop {
        re += term.0;
        im += term.1;
        if term.0.abs() + term.1.abs() <= 1e-18 * (re.abs() + im.abs()) || j > m + 60 {
            break;
        }
        term = ((-term.1) * theta / (j + 1) as f64, term.0 * theta / (j + 1) as f64);
        j += 1;
    }
    (re, im)
}

impl CentralLobe {
    pub fn new(seq: &PulseSequence, tau: f64) -> Self {
        let c = c_matrix(seq);
        let n = c.len();
        let mut coeff = vec![0.0; n];
        for (p, row) in c.iter().enumerate() {
            for (q, v) in row.iter().enumerate() {
                coeff[p.abs_diff(q)] += v;
            }
        }
        let signs: Vec<f64> = (0..n).map(|p| c[p][0] * c[0][0]).collect();
        debug_assert!((0..n).all(|p| (0..n).all(|q| c[p][q] == signs[p] * signs[q])));
        let vanishing = (0..MAX_MOMENTS)
            .take_while(|&j| {
                let m: f64 = signs.iter().enumerate().map(|(p, e)| e * (p as f64).powi(j as i32)).sum();
                m == 0.0
            })
            .count();
        Self { seq: *seq, tau, signs, vanishing, coeff }
    }

    pub fn total_time(&self) -> f64 {
        self.seq.total_time(self.tau)
    }

    /// F₀(f) in s².
    pub fn eval(&self, f: f64) -> f64 {
        let f = f.abs();
        let ft = f * self.tau;
        let delta = PI * (ft - ft.round());
        let envelope = if ft < 1e-8 {
            self.tau * self.tau * (1.0 - (PI * ft).powi(2) / 3.0)
        } else {
            let s = delta.sin() / (PI * f);
            s * s
        };
        let (mut re, mut im) = (0.0, 0.0);
        for (p, e) in self.signs.iter().enumerate() {
            let (r, i) = exp_remainder(2.0 * p as f64 * delta, self.vanishing);
            re += e * r;
            im += e * i;
        }
        (re * re + im * im) * envelope
    }

    /// Average of F₀ · (πf)² over one fast oscillation, used beyond f_max.
    pub fn mean_numerator(&self) -> f64 {
        let diag = self.coeff[0];
        let first = self.coeff.get(1).copied().unwrap_or(0.0);
        0.5 * diag - 0.25 * first
    }
}

/// F₀(f, τ) evaluated from the C_pq sum (finite everywhere).
pub fn f0(seq: &PulseSequence, f: f64, tau: f64) -> f64 {
    CentralLobe::new(seq, tau).eval(f)
}

/// The printed closed forms; singular at removable points, so only for comparison.
pub fn f0_closed_form(seq: &PulseSequence, f: f64, tau: f64) -> f64 {
    let pf2 = (PI * f).powi(2);
    match seq.kind {
        SequenceKind::Fid => (PI * f * tau).sin().powi(2) / pf2,
        SequenceKind::Hahn => (2.0 * PI * f * tau).sin().powi(2) * (PI * f * tau).tan().powi(2) / pf2,
        SequenceKind::Cpn => {
            let n = seq.n as f64;
            4.0 * (PI * f * tau).sin().powi(4) * (2.0 * n * PI * f * tau).sin().powi(2)
                / (2.0 * PI * f * tau).cos().powi(2)
                / pf2
        }
    }
}

/// F = F₀(f) + F₀(f + f₀) + F₀(|f − f₀|) with f₀ the electron Larmor frequency.
pub fn full_filter(seq: &PulseSequence, f: f64, tau: f64, b_tesla: f64) -> f64 {
    let lobe = CentralLobe::new(seq, tau);
    let fl = electron_larmor_hz(b_tesla);
    lobe.eval(f) + lobe.eval(f + fl) + lobe.eval((f - fl).abs())
}

/// One-sided per-dot magnetic noise density S(f) in T²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Zero,
    White {
        s0: f64,
    },
    /// S = s_1hz / f^α above `f_low`, flat at S(f_low) below it.
    PowerLaw {
        s_1hz: f64,
        alpha: f64,
        #[serde(default)]
        f_low: f64,
    },
    /// Log-log interpolated table, zero outside its range.
    Tabulated {
        f_hz: Vec<f64>,
        s: Vec<f64>,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Zero => Ok(()),
            NoiseModel::White { s0 } => {
                if *s0 >= 0.0 && s0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("white noise level must be >= 0, got {s0}")))
                }
            }
            NoiseModel::PowerLaw { s_1hz, alpha, f_low } => {
                if !(*s_1hz >= 0.0) || !alpha.is_finite() || !(*f_low >= 0.0) {
                    return Err(Error::InvalidParameter("power-law noise needs s_1hz >= 0, finite alpha, f_low >= 0".into()));
                }
                Ok(())
            }
            NoiseModel::Tabulated { f_hz, s } => {
                if f_hz.len() != s.len() || f_hz.len() < 2 {
                    return Err(Error::InvalidParameter("noise table needs >= 2 (f, S) rows".into()));
                }
                if f_hz.windows(2).any(|w| !(w[1] > w[0])) || f_hz[0] <= 0.0 {
                    return Err(Error::InvalidParameter("noise table frequencies must be positive and increasing".into()));
                }
                if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidParameter("noise table densities must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }

    pub fn density(&self, f: f64) -> f64 {
        let f = f.abs();
        match self {
            NoiseModel::Zero => 0.0,
            NoiseModel::White { s0 } => *s0,
            NoiseModel::PowerLaw { s_1hz, alpha, f_low } => s_1hz * f.max(*f_low).powf(-alpha),
            NoiseModel::Tabulated { f_hz, s } => {
                if f < f_hz[0] || f > f_hz[f_hz.len() - 1] {
                    return 0.0;
                }
                let i = f_hz.partition_point(|&x| x <= f).clamp(1, f_hz.len() - 1) - 1;
                let (f0, f1, s0, s1) = (f_hz[i], f_hz[i + 1], s[i], s[i + 1]);
                if s0 <= 0.0 || s1 <= 0.0 {
                    return s0 + (s1 - s0) * (f - f0) / (f1 - f0);
                }
                let w = (f / f0).ln() / (f1 / f0).ln();
                (s0.ln() + w * (s1.ln() - s0.ln())).exp()
            }
        }
    }

    /// Read a two-column CSV (f_hz, s) with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let (mut f_hz, mut s) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("{}: bad row {:?}", path.display(), rec)))
            };
            f_hz.push(parse(0)?);
            s.push(parse(1)?);
        }
        let m = NoiseModel::Tabulated { f_hz, s };
        m.validate()?;
        Ok(m)
    }
}

/// Quadrature settings for [`second_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterQuadrature {
    /// Explicit integration up to f_max_lobes / (4τ); beyond that the filter
    /// is replaced by its oscillation average.
    pub f_max_lobes: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
    /// Include the Larmor sidelobes F₀(f ± f₀). Without them the result is
    /// the parallel-field (central lobe only) second moment.
    pub sidelobes: bool,
}

impl Default for FilterQuadrature {
    fn default() -> Self {
        Self { f_max_lobes: 100.0, rel_tol: 1e-6, max_segments: 400_000, sidelobes: true }
    }
}

fn check_integrable(noise: &NoiseModel, seq: &PulseSequence, tau: f64, b_tesla: Option<f64>) -> Result<()> {
    let t = seq.total_time(tau);
    let probe = |x: f64| {
        let filt = match b_tesla {
            Some(b) => full_filter(seq, x, tau, b),
            None => f0(seq, x, tau),
        };
        x * noise.density(x) * filt
    };
    let r: Vec<f64> = (0..=50).map(|k| probe((1.0 / t) * 0.5f64.powi(k))).collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIntegrable("S(f)·F(f) is not finite at low frequency".into()));
    }
    let peak = r.iter().cloned().fold(0.0, f64::max);
    let (r40, r50) = (r[40], r[50]);
    if r50 > 1e-12 * peak && r50 >= 0.5 * r40 {
        return Err(Error::NonIntegrable(format!(
            "f·S(f)·F(f) does not vanish as f → 0 (value {r50:e} at f = {:e} Hz); \
             add a low-frequency cutoff to the noise model",
            (1.0 / t) * 0.5f64.powi(50)
        )));
    }
    Ok(())
}

fn tol(q: &FilterQuadrature) -> Tolerance {
    Tolerance { rel: q.rel_tol, abs: 0.0, max_segments: q.max_segments }
}

/// ∫ g(u) F₀(u) du over [lo, hi) (hi = ∞ when None), explicit below `u_max`.
fn lobe_integral<G: Fn(f64) -> f64>(
    g: G,
    lobe: &CentralLobe,
    lo: f64,
    hi: Option<f64>,
    u_max: f64,
    q: &FilterQuadrature,
) -> Result<f64> {
    let t = lobe.total_time();
    let top = hi.map_or(u_max, |h| h.min(u_max));
    let mut total = 0.0;
    if top > lo {
        let k0 = (lo * t).floor() as i64 + 1;
        let k1 = (top * t).ceil() as i64;
        let mut pts = vec![lo];
        pts.extend((k0..k1).map(|k| k as f64 / t).filter(|&u| u > lo && u < top));
        pts.push(top);
        total += integrate(|u| g(u) * lobe.eval(u), &pts, tol(q))?.value;
    }
    let avg = lobe.mean_numerator();
    let start = lo.max(u_max);
    let tail = |u: f64| g(u) * avg / (PI * u).powi(2);
    match hi {
        None => total += integrate_to_infinity(tail, start, tol(q))?.value,
        Some(h) if h > start => {
            let d = h - start;
            let mut pts: Vec<f64> = (0..=12).map(|k| h - d * 10f64.powi(-k)).collect();
            pts.push(h);
            pts.dedup();
            total += integrate(tail, &pts, tol(q))?.value;
        }
        _ => {}
    }
    Ok(total)
}

/// ∫₀^∞ S(f) F(f) df for one dot (s²·T²/Hz·Hz = T²·s²).
pub fn filtered_power(
    noise: &NoiseModel,
    seq: &PulseSequence,
    tau: f64,
    b_tesla: f64,
    q: &FilterQuadrature,
) -> Result<f64> {
    noise.validate()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if matches!(noise, NoiseModel::Zero) {
        return Ok(0.0);
    }
    check_integrable(noise, seq, tau, if q.sidelobes { Some(b_tesla) } else { None })?;
    let lobe = CentralLobe::new(seq, tau);
    let u_max = q.f_max_lobes / (4.0 * tau);
    let fl = electron_larmor_hz(b_tesla);
    let s = |f: f64| noise.density(f);
    let central = lobe_integral(s, &lobe, 0.0, None, u_max, q)?;
    if !q.sidelobes {
        return Ok(central);
    }
    if fl == 0.0 {
        return Ok(3.0 * central);
    }
    let plus = lobe_integral(|u| s(u - fl), &lobe, fl, None, u_max, q)?;
    let minus_near = lobe_integral(|u| s(fl - u), &lobe, 0.0, Some(fl), u_max, q)?;
    let minus_far = lobe_integral(|u| s(u + fl), &lobe, 0.0, None, u_max, q)?;
    Ok(central + plus + minus_near + minus_far)
}

/// σ²₁₂/2 for two identical, independent dots.
pub fn second_moment(
    noise: &NoiseModel,
    seq: &PulseSequence,
    tau: f64,
    b_tesla: f64,
    q: &FilterQuadrature,
) -> Result<f64> {
    let per_dot = filtered_power(noise, seq, tau, b_tesla, q)?;
    Ok(0.5 * field_to_angular_sq() * 2.0 * per_dot)
}

/// Constant gradient phase rate |b₁ − b₂| in rad/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticGradient {
    pub delta_omega: f64,
}

impl StaticGradient {
    pub fn new(delta_omega: f64) -> Result<Self> {
        if !(delta_omega >= 0.0) {
            return Err(Error::InvalidParameter(format!("gradient must be >= 0, got {delta_omega}")));
        }
        Ok(Self { delta_omega })
    }
}

/// Singlet return probability ½ + ½ cos(Δω t) exp(−σ²/2).
pub fn predict_ps(
    noise: &NoiseModel,
    seq: &PulseSequence,
    tau: f64,
    b_tesla: f64,
    grad: StaticGradient,
    q: &FilterQuadrature,
) -> Result<f64> {
    let half_var = second_moment(noise, seq, tau, b_tesla, q)?;
    let t = seq.total_time(tau);
    Ok((0.5 + 0.5 * (grad.delta_omega * t).cos() * (-half_var).exp()).clamp(0.0, 1.0))
}

/// Low-field FID including the Larmor sidelobes.
pub fn fid_lowfield(t: f64, t2_star: f64, omega0: f64) -> Result<f64> {
    if !(omega0 > 0.0) {
        return Err(Error::InvalidParameter(
            "fid_lowfield needs omega0 > 0; use the Gaussian form for the high-field limit".into(),
        ));
    }
    if !(t2_star > 0.0) {
        return Err(Error::InvalidParameter(format!("T2* must be positive, got {t2_star}")));
    }
    Ok(0.5 + 0.5 * (-fid_exponent(t, t2_star, omega0)).exp())
}

/// [t²ω₀² + 4(1 − cos ω₀t)] / (T₂*² ω₀²), with 1 − cos written as 2 sin² for accuracy.
pub(crate) fn fid_exponent(t: f64, t2_star: f64, omega0: f64) -> f64 {
    let s = (0.5 * omega0 * t).sin();
    let osc = 8.0 * s * s / (omega0 * omega0);
    (t * t + osc) / (t2_star * t2_star)
}

/// Result of fitting the low-field FID form to (t, P_S) data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidFit {
    pub t2_star_s: f64,
    pub omega0: f64,
    pub b_tesla: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual_ss: f64,
    /// Sum of squares of the best high-field (pure Gaussian) fit.
    pub gaussian_ss: f64,
    /// False when the Larmor oscillation is not resolved above the noise, in
    /// which case `omega0`/`b_tesla` are not meaningful.
    pub b_identifiable: bool,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn fid_model_curve(t: &[f64], t2: f64, omega0: Option<f64>) -> Vec<f64> {
    t.iter()
        .map(|&ti| match omega0 {
            Some(w) => (-fid_exponent(ti, t2, w)).exp(),
            None => (-(ti / t2).powi(2)).exp(),
        })
        .collect()
}

/// Fit P_S(t) = offset + amplitude·exp(−[t²ω₀² + 4(1−cos ω₀t)]/(T₂*²ω₀²)).
///
/// A coarse (ω₀, T₂*) grid with the linear parameters solved exactly seeds a
/// Levenberg–Marquardt refinement of all four parameters.
pub fn fid_fit(t: &[f64], p: &[f64]) -> Result<FidFit> {
    if t.len() != p.len() {
        return Err(Error::InvalidParameter("fid_fit: t and P_S lengths differ".into()));
    }
    if t.len() < 10 {
        return Err(Error::InvalidParameter("fid_fit needs at least 10 samples".into()));
    }
    if t.iter().chain(p).any(|v| !v.is_finite()) || t.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("fid_fit: samples must be finite with t >= 0".into()));
    }
    let span = t.iter().cloned().fold(0.0, f64::max);
    if !(span > 0.0) {
        return Err(Error::InvalidParameter("fid_fit: time samples span zero".into()));
    }
    let n = t.len();
    let t2_grid = log_grid(span / 50.0, 5.0 * span, 80);

    let mut best_gauss = (f64::INFINITY, span);
    for &t2 in &t2_grid {
        let (_, _, ss) = crate::fit::linear_amp_offset(&fid_model_curve(t, t2, None), p);
        if ss < best_gauss.0 {
            best_gauss = (ss, t2);
        }
    }
    let w_grid = log_grid(0.5 / span, PI * (n - 1) as f64 / span, 800);
    let mut best = (f64::INFINITY, span, w_grid[0]);
    for &w in &w_grid {
        for &t2 in &t2_grid {
            let (_, _, ss) = crate::fit::linear_amp_offset(&fid_model_curve(t, t2, Some(w)), p);
            if ss < best.0 {
                best = (ss, t2, w);
            }
        }
    }

    let gauss_resid = |q: &[f64]| -> Vec<f64> {
        let t2 = q[0].exp();
        t.iter().zip(p).map(|(&ti, &pi)| q[2] + q[1] * (-(ti / t2).powi(2)).exp() - pi).collect()
    };
    let g0 = fid_model_curve(t, best_gauss.1, None);
    let (ga, go, _) = crate::fit::linear_amp_offset(&g0, p);
    let gauss = crate::fit::levenberg_marquardt(gauss_resid, &[best_gauss.1.ln(), ga, go], 500)?;

    let resid = |q: &[f64]| -> Vec<f64> {
        let (t2, w) = (q[0].exp(), q[1].exp());
        t.iter().zip(p).map(|(&ti, &pi)| q[3] + q[2] * (-fid_exponent(ti, t2, w)).exp() - pi).collect()
    };
    let c0 = fid_model_curve(t, best.1, Some(best.2));
    let (a0, o0, _) = crate::fit::linear_amp_offset(&c0, p);
    let fit = crate::fit::levenberg_marquardt(resid, &[best.1.ln(), best.2.ln(), a0, o0], 1000)
        .map_err(|_| Error::FitDiverged { t2_star: best.1, omega0: best.2 })?;
    let (t2, w) = (fit.params[0].exp(), fit.params[1].exp());
    if !t2.is_finite() || !w.is_finite() {
        return Err(Error::FitDiverged { t2_star: best.1, omega0: best.2 });
    }
    let sigma2 = fit.ss / (n as f64 - 4.0);
    let floor = 1e-18 * n as f64;
    let b_identifiable = gauss.ss - fit.ss > (9.0 * sigma2).max(floor);
    let larmor = crate::constants::electron_larmor_omega(1.0);
    Ok(FidFit {
        t2_star_s: if b_identifiable { t2 } else { gauss.params[0].exp() },
        omega0: w,
        b_tesla: w / larmor,
        amplitude: if b_identifiable { fit.params[2] } else { gauss.params[1] },
        offset: if b_identifiable { fit.params[3] } else { gauss.params[2] },
        residual_ss: fit.ss,
        gaussian_ss: gauss.ss,
        b_identifiable,
    })
}
