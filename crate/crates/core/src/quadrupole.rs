//! Exact single-nucleus evolution under the electron-conditioned Hamiltonians
//! `H± = H_Z + H_Q ± (s A / 2) Iz` and the resulting echo decay factors.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::NuclearSite;
use crate::error::{Error, Result};
use crate::hyperfine::DeviceRealization;

pub type C64 = Complex<f64>;

/// Angular-momentum matrices in the |I, m⟩ basis ordered m = I, I−1, …, −I.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub two_spin: u32,
    pub ix: DMatrix<C64>,
    pub iy: DMatrix<C64>,
    pub iz: DMatrix<C64>,
    pub identity: DMatrix<C64>,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.two_spin as usize + 1
    }

    pub fn spin(&self) -> f64 {
        self.two_spin as f64 / 2.0
    }
}

/// Spin matrices for spin `two_spin / 2`.
pub fn spin_matrices(two_spin: u32) -> Result<SpinOperators> {
    if two_spin == 0 || two_spin > 64 {
        return Err(Error::InvalidSpin(two_spin));
    }
    let d = two_spin as usize + 1;
    let j = two_spin as f64 / 2.0;
    let m = |k: usize| j - k as f64;
    let mut iplus = DMatrix::<C64>::zeros(d, d);
    for k in 1..d {
        // I+ |m_k⟩ = sqrt(j(j+1) − m(m+1)) |m_{k−1}⟩
        let mk = m(k);
        iplus[(k - 1, k)] = C64::new((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let iminus = iplus.adjoint();
    let ix = (&iplus + &iminus).map(|v| v * 0.5);
    let iy = (&iplus - &iminus).map(|v| v * C64::new(0.0, -0.5));
    let iz = DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(m(r), 0.0) } else { C64::new(0.0, 0.0) });
    Ok(SpinOperators { two_spin, ix, iy, iz, identity: DMatrix::identity(d, d) })
}

fn real_part(m: &DMatrix<C64>) -> DMatrix<f64> {
    m.map(|v| v.re)
}

/// Quadrupole Hamiltonian (rad/s) for splitting `xi` and field-gradient angle `theta`.
pub fn quadrupole_h(xi: f64, theta: f64, ops: &SpinOperators) -> DMatrix<f64> {
    let j = ops.spin();
    let (s, c) = theta.sin_cos();
    let iz2 = &ops.iz * &ops.iz;
    let t1 = iz2 * C64::new(3.0, 0.0) - &ops.identity * C64::new(j * (j + 1.0), 0.0);
    let t2 = &ops.iz * &ops.ix + &ops.ix * &ops.iz;
    let t3 = &ops.ix * &ops.ix - &ops.iy * &ops.iy;
    let h = t1 * C64::new(0.5 * (3.0 * c * c - 1.0), 0.0)
        + t2 * C64::new(3.0 * s * c, 0.0)
        + t3 * C64::new(1.5 * s * s, 0.0);
    real_part(&h) * xi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Nuclear Hamiltonian conditioned on the electron branch (rad/s).
#[allow(clippy::too_many_arguments)]
pub fn branch_h(
    a: f64,
    s: i8,
    xi: f64,
    theta: f64,
    gamma: f64,
    b_tesla: f64,
    branch: Branch,
    ops: &SpinOperators,
) -> DMatrix<f64> {
    let iz = real_part(&ops.iz);
    let zeeman = gamma * b_tesla + branch.sign() * s as f64 * a / 2.0;
    quadrupole_h(xi, theta, ops) + iz * zeeman
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::NotHermitian(f64::INFINITY));
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let asym = (h - h.transpose()).amax() / scale;
    if asym > 1e-12 {
        return Err(Error::NotHermitian(asym));
    }
    Ok(())
}

fn phases(lambda: &DVector<f64>, tau: f64) -> DVector<C64> {
    lambda.map(|l| C64::from_polar(1.0, -l * tau))
}

fn expm_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tau: f64) -> DMatrix<C64> {
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let d = phases(&eig.eigenvalues, tau);
    let mut vd = v.clone();
    for (mut col, p) in vd.column_iter_mut().zip(d.iter()) {
        col *= *p;
    }
    vd * v.transpose()
}

/// `exp(−i H tau)` for a real symmetric `H`.
pub fn propagator(h: &DMatrix<f64>, tau: f64) -> Result<DMatrix<C64>> {
    check_symmetric(h)?;
    let eig = SymmetricEigen::new(h.clone());
    Ok(expm_from_eigen(&eig, tau))
}

/// Pulse count accepted by the echo formulas: 1 (Hahn) or even n ≥ 2.
pub fn check_sequence(n: u32) -> Result<()> {
    if n == 1 || (n >= 2 && n.is_multiple_of(2)) {
        Ok(())
    } else {
        Err(Error::UnsupportedSequence(n))
    }
}

/// Nuclear parameters entering the branch Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NucleusParams {
    pub coupling: f64,
    pub dot_sign: i8,
    pub xi: f64,
    pub theta: f64,
    pub gamma: f64,
    pub two_spin: u32,
}

impl NucleusParams {
    pub fn from_site(site: &NuclearSite) -> Self {
        let q = site.quadrupole.unwrap_or_default();
        Self {
            coupling: site.coupling,
            dot_sign: site.dot_sign,
            xi: q.xi,
            theta: q.theta,
            gamma: site.species.gamma(),
            two_spin: site.species.two_spin(),
        }
    }

    pub fn h(&self, b_tesla: f64, branch: Branch, ops: &SpinOperators) -> DMatrix<f64> {
        branch_h(self.coupling, self.dot_sign, self.xi, self.theta, self.gamma, b_tesla, branch, ops)
    }
}

/// Explicit branch propagators for one nucleus at one (tau, B).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPropagators {
    pub u_plus: DMatrix<C64>,
    pub u_minus: DMatrix<C64>,
}

impl BranchPropagators {
    pub fn new(p: &NucleusParams, b_tesla: f64, tau: f64) -> Result<Self> {
        let ops = spin_matrices(p.two_spin)?;
        Ok(Self {
            u_plus: propagator(&p.h(b_tesla, Branch::Plus, &ops), tau)?,
            u_minus: propagator(&p.h(b_tesla, Branch::Minus, &ops), tau)?,
        })
    }

    /// The trace formula evaluated literally from matrix products, divided by d.
    pub fn trace_direct(&self, n: u32) -> Result<C64> {
        check_sequence(n)?;
        let (up, um) = (&self.u_plus, &self.u_minus);
        let d = up.nrows() as f64;
        let tr = if n == 1 {
            (um * up * um.adjoint() * up.adjoint()).trace()
        } else {
            let fwd = up * um * um * up;
            let bwd = um.adjoint() * up.adjoint() * up.adjoint() * um.adjoint();
            let m = n / 2;
            (matrix_power(&fwd, m) * matrix_power(&bwd, m)).trace()
        };
        Ok(tr / d)
    }
}

fn matrix_power(a: &DMatrix<C64>, mut e: u32) -> DMatrix<C64> {
    let mut result = DMatrix::<C64>::identity(a.nrows(), a.ncols());
    let mut base = a.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Eigen-decompositions of H± for one nucleus at one field, reusable for any tau.
#[derive(Debug, Clone)]
pub struct EchoKernel {
    lambda_plus: DVector<f64>,
    lambda_minus: DVector<f64>,
    /// V⁺ᵀ V⁻: rotates the minus eigenbasis into the plus eigenbasis.
    overlap: DMatrix<C64>,
}

impl EchoKernel {
    pub fn new(p: &NucleusParams, b_tesla: f64, ops: &SpinOperators) -> Result<Self> {
        let hp = p.h(b_tesla, Branch::Plus, ops);
        let hm = p.h(b_tesla, Branch::Minus, ops);
        check_symmetric(&hp)?;
        check_symmetric(&hm)?;
        let ep = SymmetricEigen::new(hp);
        let em = SymmetricEigen::new(hm);
        let overlap = (ep.eigenvectors.transpose() * &em.eigenvectors).map(|x| C64::new(x, 0.0));
        Ok(Self { lambda_plus: ep.eigenvalues, lambda_minus: em.eigenvalues, overlap })
    }

    pub fn dim(&self) -> usize {
        self.lambda_plus.len()
    }

    /// Complex per-nucleus trace / d for pulse count `n` at spacing `tau`.
    pub fn factor(&self, tau: f64, n: u32) -> Result<C64> {
        check_sequence(n)?;
        let d = self.dim();
        let dp = phases(&self.lambda_plus, tau);
        let dm = phases(&self.lambda_minus, tau);
        // U⁻ expressed in the plus eigenbasis (complex symmetric).
        let mut od = self.overlap.clone();
        for (mut col, p) in od.column_iter_mut().zip(dm.iter()) {
            col *= *p;
        }
        let m = od * self.overlap.transpose();
        if n == 1 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    acc += m[(i, j)].norm_sqr() * dp[j] * dp[i].conj();
                }
            }
            return Ok(acc / d as f64);
        }
        // W₊ = D⁺ M² D⁺ (branch starting in +), W₋ = M D⁺² M.
        let m2 = &m * &m;
        let w_plus = DMatrix::from_fn(d, d, |i, j| dp[i] * m2[(i, j)] * dp[j]);
        let mut md = m.clone();
        for (mut col, p) in md.column_iter_mut().zip(dp.iter()) {
            col *= *p * *p;
        }
        let w_minus = md * &m;
        let k = n / 2;
        let prod = matrix_power(&w_plus, k) * matrix_power(&w_minus, k).adjoint();
        Ok(prod.trace() / d as f64)
    }
}

/// One per-nucleus echo factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoFactor {
    pub value: C64,
}

impl EchoFactor {
    pub fn re(&self) -> f64 {
        self.value.re
    }

    /// |Im(trace)| / d.
    pub fn imag_residual(&self) -> f64 {
        self.value.im.abs()
    }
}

/// Echo decay factor of a single nucleus; total evolution time is 2 n tau.
pub fn echo_decay_factor(site: &NuclearSite, tau: f64, n: u32, b_tesla: f64) -> Result<EchoFactor> {
    let p = NucleusParams::from_site(site);
    let ops = spin_matrices(p.two_spin)?;
    let value = EchoKernel::new(&p, b_tesla, &ops)?.factor(tau, n)?;
    Ok(EchoFactor { value })
}

/// χ at one sequence point of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiPoint {
    pub tau_s: f64,
    pub t_s: f64,
    /// −ln Re ∏ factors, +∞ when the product is not positive.
    pub chi: f64,
    pub product_re: f64,
    pub product_im: f64,
    /// Largest per-nucleus |Im(trace)|/d.
    pub max_imag_residual: f64,
}

impl ChiPoint {
    pub fn singlet_probability(&self) -> f64 {
        0.5 + 0.5 * (-self.chi).exp()
    }
}

/// χ from a sequence of per-nucleus factors, multiplied in the given order.
pub fn chi_from_factors(factors: &[C64]) -> f64 {
    let prod = factors.iter().fold(C64::new(1.0, 0.0), |acc, f| acc * f);
    chi_from_product(prod)
}

fn chi_from_product(prod: C64) -> f64 {
    if prod.re > 0.0 {
        -prod.re.ln()
    } else {
        f64::INFINITY
    }
}

/// χ over every selected nucleus of both dots at a single tau.
pub fn chi_total(device: &DeviceRealization, tau: f64, n: u32, b_tesla: f64) -> Result<ChiPoint> {
    Ok(chi_curve(device, &[tau], n, b_tesla)?.remove(0))
}

/// χ(tau) for a list of spacings; eigen-decompositions are shared across taus.
pub fn chi_curve(device: &DeviceRealization, taus: &[f64], n: u32, b_tesla: f64) -> Result<Vec<ChiPoint>> {
    let nuclei: Vec<NucleusParams> = device.nuclei().map(NucleusParams::from_site).collect();
    chi_curve_for(&nuclei, taus, n, b_tesla)
}

/// As [`chi_curve`] for an explicit nucleus list.
pub fn chi_curve_for(nuclei: &[NucleusParams], taus: &[f64], n: u32, b_tesla: f64) -> Result<Vec<ChiPoint>> {
    check_sequence(n)?;
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be finite and >= 0, got {t}")));
    }
    let per_nucleus: Vec<Vec<C64>> = nuclei
        .par_iter()
        .map(|p| -> Result<Vec<C64>> {
            let ops = spin_matrices(p.two_spin)?;
            let kernel = EchoKernel::new(p, b_tesla, &ops)?;
            taus.iter().map(|&tau| kernel.factor(tau, n)).collect()
        })
        .collect::<Result<_>>()?;
    let points = taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let mut prod = C64::new(1.0, 0.0);
            let mut max_im: f64 = 0.0;
            for f in &per_nucleus {
                prod *= f[k];
                max_im = max_im.max(f[k].im.abs());
            }
            ChiPoint {
                tau_s: tau,
                t_s: 2.0 * n as f64 * tau,
                chi: chi_from_product(prod),
                product_re: prod.re,
                product_im: prod.im,
                max_imag_residual: max_im,
            }
        })
        .collect();
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{Species, GAMMA_GE73};
    use std::f64::consts::PI;

    fn close(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_half_iz() {
        let ops = spin_matrices(1).unwrap();
        assert_eq!(ops.iz[(0, 0)].re, 0.5);
        assert_eq!(ops.iz[(1, 1)].re, -0.5);
    }

    #[test]
    fn spin_nine_halves_algebra() {
        let ops = spin_matrices(9).unwrap();
        assert_eq!(ops.dim(), 10);
        let tr: f64 = (&ops.iz * &ops.iz).trace().re;
        assert!((tr - 82.5).abs() < 1e-12);
        let i = C64::new(0.0, 1.0);
        let comm = |a: &DMatrix<C64>, b: &DMatrix<C64>| a * b - b * a;
        assert!(close(&comm(&ops.ix, &ops.iy), &ops.iz.map(|v| v * i)) < 1e-12);
        assert!(close(&comm(&ops.iy, &ops.iz), &ops.ix.map(|v| v * i)) < 1e-12);
        assert!(close(&comm(&ops.iz, &ops.ix), &ops.iy.map(|v| v * i)) < 1e-12);
        assert!(spin_matrices(0).is_err());
    }

    #[test]
    fn quadrupole_closed_forms() {
        let ops = spin_matrices(9).unwrap();
        let h = quadrupole_h(2.0, 0.0, &ops);
        assert!((h[(0, 0)] - 72.0).abs() < 1e-12);
        for &theta in &[0.3, 1.1, -0.7] {
            let h = quadrupole_h(1e4, theta, &ops);
            assert!(h.trace().abs() < 1e-12 * h.norm());
            assert!((&h - h.transpose()).amax() < 1e-9);
        }
        assert_eq!(quadrupole_h(0.0, 0.4, &ops).amax(), 0.0);
    }

    #[test]
    fn branch_hamiltonians() {
        let ops = spin_matrices(9).unwrap();
        let (a, b) = (3e3, 0.02);
        let hp = branch_h(a, 1, 0.0, 0.0, GAMMA_GE73, b, Branch::Plus, &ops);
        for k in 0..10 {
            let m = 4.5 - k as f64;
            assert!((hp[(k, k)] - (GAMMA_GE73 * b + a / 2.0) * m).abs() < 1e-9);
        }
        let p1 = branch_h(a, 1, 1e4, 0.5, GAMMA_GE73, b, Branch::Plus, &ops);
        let m1 = branch_h(a, -1, 1e4, 0.5, GAMMA_GE73, b, Branch::Minus, &ops);
        assert_eq!(p1, m1);
        let h = branch_h(0.0, 1, 0.0, 0.0, GAMMA_GE73, 0.04, Branch::Plus, &ops);
        let gap = h[(0, 0)] - h[(1, 1)];
        assert!((gap - 2.0 * PI * 59.6e3).abs() < 1e-6 * gap);
    }

    #[test]
    fn propagator_properties() {
        let ops = spin_matrices(9).unwrap();
        let h = branch_h(4e3, 1, 1e4, 0.8, GAMMA_GE73, 0.01, Branch::Minus, &ops);
        let id = DMatrix::<C64>::identity(10, 10);
        assert!(close(&propagator(&h, 0.0).unwrap(), &id) < 1e-12);
        let u1 = propagator(&h, 3e-6).unwrap();
        let u2 = propagator(&h, 5e-6).unwrap();
        let u12 = propagator(&h, 8e-6).unwrap();
        assert!(close(&(&u1 * &u2), &u12) < 1e-10);
        assert!(close(&(u1.adjoint() * &u1), &id) < 1e-10);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1e5, -2e5]));
        let u = propagator(&diag, 1e-6).unwrap();
        assert!((u[(0, 0)] - C64::from_polar(1.0, -0.1)).norm() < 1e-14);
        assert!((u[(1, 1)] - C64::from_polar(1.0, 0.2)).norm() < 1e-14);
        let mut bad = DMatrix::<f64>::zeros(2, 2);
        bad[(0, 1)] = 1.0;
        assert!(matches!(propagator(&bad, 1.0), Err(Error::NotHermitian(_))));
    }

    fn ge_site(a: f64, s: i8, xi: f64, theta: f64) -> NuclearSite {
        let mut site = NuclearSite::new([0, 0, 0], Species::Ge73);
        site.coupling = a;
        site.dot_sign = s;
        site.quadrupole = Some(crate::crystal::Quadrupole { xi, theta });
        site
    }

    #[test]
    fn perfect_echo_without_quadrupole() {
        for &n in &[1, 2, 4, 10] {
            let f = echo_decay_factor(&ge_site(5e3, 1, 0.0, 0.3), 7e-6, n, 0.01).unwrap();
            assert!((f.value - C64::new(1.0, 0.0)).norm() < 1e-10);
            let f = echo_decay_factor(&ge_site(0.0, -1, 2e4, 0.3), 7e-6, n, 0.01).unwrap();
            assert!((f.value - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn fast_kernel_matches_direct_products() {
        let site = ge_site(6e3, -1, 1.3e4, 0.9);
        let p = NucleusParams::from_site(&site);
        for &n in &[1, 2, 4, 6] {
            for &tau in &[1e-6, 4.4e-6, 2e-5] {
                let direct = BranchPropagators::new(&p, 0.015, tau).unwrap().trace_direct(n).unwrap();
                let fast = echo_decay_factor(&site, tau, n, 0.015).unwrap().value;
                assert!((direct - fast).norm() < 1e-10, "n={n} tau={tau}");
            }
        }
    }

    #[test]
    fn hahn_trace_is_real() {
        let site = ge_site(8e3, 1, 2.5e4, 1.2);
        for &tau in &[2e-6, 9e-6, 3e-5] {
            let f = echo_decay_factor(&site, tau, 1, 0.005).unwrap();
            assert!(f.imag_residual() < 1e-12);
            assert!(f.value.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn odd_sequences_rejected() {
        let site = ge_site(1e3, 1, 1e4, 0.1);
        assert!(matches!(echo_decay_factor(&site, 1e-6, 3, 0.01), Err(Error::UnsupportedSequence(3))));
        assert!(echo_decay_factor(&site, 1e-6, 0, 0.01).is_err());
    }

    #[test]
    fn chi_multiplicative() {
        let f = [C64::new(0.9, 0.0), C64::new(0.8, 0.0)];
        assert!((chi_from_factors(&f) + (0.72f64).ln()).abs() < 1e-15);
        assert_eq!(chi_from_factors(&[C64::new(1.0, 0.0); 3]), 0.0);
        assert_eq!(chi_from_factors(&[C64::new(-0.1, 0.0)]), f64::INFINITY);
    }

    #[test]
    fn high_field_freezes() {
        let site = ge_site(8e3, 1, 1e4, 0.7);
        for &n in &[1, 2, 10] {
            let f = echo_decay_factor(&site, 5e-6, n, 10.0).unwrap();
            assert!((f.value - C64::new(1.0, 0.0)).norm() < 1e-6);
        }
    }
}
