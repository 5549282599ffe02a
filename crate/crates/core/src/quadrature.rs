//! Globally adaptive Gauss–Kronrod (7/15) integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    (value, err)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-6, abs: 0.0, max_segments: 200_000 }
    }
}

/// ∫ f over [points[0], points.last()], with forced splits at every point.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Quadrature> {
    if points.len() < 2 {
        return Ok(Quadrature { value: 0.0, error: 0.0, segments: 0 });
    }
    let mut heap = BinaryHeap::with_capacity(points.len() * 2);
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in points.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let (value, err) = gk15(&f, w[0], w[1]);
        total += value;
        total_err += err;
        heap.push(Segment { a: w[0], b: w[1], value, err });
    }
    if !total.is_finite() {
        return Err(Error::Numerical("integrand not finite on the quadrature grid".into()));
    }
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_segments {
            log::warn!("quadrature stopped at {} segments, error {total_err:e}", heap.len());
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
        if !total.is_finite() {
            return Err(Error::Numerical("integrand not finite during refinement".into()));
        }
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.err).sum();
    Ok(Quadrature { value, error, segments: segs.len() })
}

/// ∫_a^∞ f via the substitution x = a/u (requires a > 0).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Quadrature> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("semi-infinite quadrature needs a positive lower limit".into()));
    }
    let g = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            f(a / u) * a / (u * u)
        }
    };
    integrate(g, &[0.0, 1e-6, 1e-4, 1e-2, 0.1, 1.0], tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, &[0.0, 2.0], Tolerance::default()).unwrap();
        assert!((q.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let q = integrate(|x| x.powf(-0.5), &[0.0, 1.0], Tolerance { rel: 1e-10, ..Default::default() }).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn oscillatory_with_breaks() {
        let pts: Vec<f64> = (0..=20).map(|k| k as f64 * std::f64::consts::PI).collect();
        let q = integrate(|x| x.sin().powi(2), &pts, Tolerance::default()).unwrap();
        assert!((q.value - 10.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn semi_infinite() {
        let q = integrate_to_infinity(|x| 1.0 / (x * x), 2.0, Tolerance { rel: 1e-12, ..Default::default() }).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
        assert!(integrate_to_infinity(|x| x, 0.0, Tolerance::default()).is_err());
    }
}
