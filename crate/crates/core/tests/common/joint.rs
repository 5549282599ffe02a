//! Brute-force evolution of one nucleus together with the two-electron
//! {|↑↓⟩, |↓↑⟩} subspace. Shares nothing with the library's echo kernel:
//! spin matrices, the quadrupole term and the matrix exponential are all
//! rebuilt here, and the exponential is a scaled Taylor series.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C;

pub struct Spin {
    pub ix: DMatrix<C>,
    pub iy: DMatrix<C>,
    pub iz: DMatrix<C>,
}

/// Spin-I operators in the basis m = I, I−1, …, −I.
pub fn spin(two_i: usize) -> Spin {
    let d = two_i + 1;
    let j = two_i as f64 / 2.0;
    let m = |k: usize| j - k as f64;
    let mut jp = DMatrix::<C>::zeros(d, d);
    for k in 1..d {
        // ⟨m+1| J+ |m⟩ with |m⟩ = basis k and |m+1⟩ = basis k−1.
        let mm = m(k);
        jp[(k - 1, k)] = C::new((j * (j + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let half = C::new(0.5, 0.0);
    let ix = (&jp + &jm) * half;
    let iy = (&jp - &jm) * C::new(0.0, -0.5);
    let iz = DMatrix::from_fn(d, d, |a, b| if a == b { C::new(m(a), 0.0) } else { C::new(0.0, 0.0) });
    Spin { ix, iy, iz }
}

fn quadrupole(xi: f64, theta: f64, s: &Spin) -> DMatrix<C> {
    let d = s.iz.nrows();
    let j = (d as f64 - 1.0) / 2.0;
    let id = DMatrix::<C>::identity(d, d);
    let r = |x: f64| C::new(x, 0.0);
    let a = (&s.iz * &s.iz * r(3.0) - id * r(j * (j + 1.0))) * r((3.0 * theta.cos().powi(2) - 1.0) / 2.0);
    let b = (&s.iz * &s.ix + &s.ix * &s.iz) * r(3.0 * theta.sin() * theta.cos());
    let c = (&s.ix * &s.ix - &s.iy * &s.iy) * r(1.5 * theta.sin().powi(2));
    (a + b + c) * r(xi)
}

/// exp(−i H t) by scaling and squaring a Taylor series.
pub fn expm_taylor(h: &DMatrix<C>, t: f64) -> DMatrix<C> {
    let d = h.nrows();
    let a = h * C::new(0.0, -t);
    let norm: f64 = a.iter().map(|z| z.norm()).sum::<f64>();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let a = a * C::new(1.0 / 2f64.powi(s), 0.0);
    let mut term = DMatrix::<C>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &a * C::new(1.0 / k as f64, 0.0);
        sum += &term;
        if term.iter().map(|z| z.norm()).sum::<f64>() < 1e-20 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub struct Nucleus {
    /// Hyperfine coupling (rad/s) to the electron in the dot the nucleus sits in.
    pub a: f64,
    /// +1: nucleus under the electron that is ↑ in |↑↓⟩.
    pub dot_sign: i8,
    pub xi: f64,
    pub theta: f64,
    pub gamma: f64,
    pub two_i: usize,
}

/// Joint Hamiltonian on {|↑↓⟩, |↓↑⟩} ⊗ nucleus.
fn joint_h(n: &Nucleus, b: f64) -> DMatrix<C> {
    let s = spin(n.two_i);
    let d = n.two_i + 1;
    let hn = quadrupole(n.xi, n.theta, &s) + &s.iz * C::new(n.gamma * b, 0.0);
    let mut h = DMatrix::<C>::zeros(2 * d, 2 * d);
    // Electron spin in the nucleus's dot: +½ in |↑↓⟩ for dot_sign +1.
    for (e, sz) in [(0usize, 0.5), (1, -0.5)] {
        let block = &hn + &s.iz * C::new(n.a * sz * n.dot_sign as f64, 0.0);
        h.view_mut((e * d, e * d), (d, d)).copy_from(&block);
    }
    h
}

fn swap(d: usize) -> DMatrix<C> {
    let mut p = DMatrix::<C>::zeros(2 * d, 2 * d);
    for k in 0..d {
        p[(k, d + k)] = C::new(1.0, 0.0);
        p[(d + k, k)] = C::new(1.0, 0.0);
    }
    p
}

/// Singlet return probability after a Hahn echo (n = 1) or CPn (even n)
/// with swaps at τ, 3τ, …, (2n−1)τ, nucleus initially fully mixed.
pub fn singlet_probability(n: &Nucleus, b: f64, tau: f64, pulses: u32) -> f64 {
    let d = n.two_i + 1;
    let h = joint_h(n, b);
    let u1 = expm_taylor(&h, tau);
    let u2 = expm_taylor(&h, 2.0 * tau);
    let x = swap(d);
    let mut u = u1.clone();
    for k in 0..pulses {
        u = &x * u;
        u = if k + 1 == pulses { &u1 * u } else { &u2 * u };
    }
    // K = (⟨S| ⊗ 1) U (|S⟩ ⊗ 1) with |S⟩ = (|↑↓⟩ − |↓↑⟩)/√2.
    let b00 = u.view((0, 0), (d, d));
    let b01 = u.view((0, d), (d, d));
    let b10 = u.view((d, 0), (d, d));
    let b11 = u.view((d, d), (d, d));
    let k = (b00 - b01 - b10 + b11) * C::new(0.5, 0.0);
    k.iter().map(|z| z.norm_sqr()).sum::<f64>() / d as f64
}
