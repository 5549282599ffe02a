//! Small dense Levenberg–Marquardt least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub ss: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let rp = f(&q);
        q[k] = p[k] - h;
        let rm = f(&q);
        q[k] = p[k];
        for i in 0..m {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}

/// Minimise Σ r(p)² starting from `p0`.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(f: F, p0: &[f64], max_iter: usize) -> Result<LmResult> {
    let mut p = p0.to_vec();
    let mut r = f(&p);
    let mut ss = sum_sq(&r);
    if !ss.is_finite() {
        return Err(Error::Numerical("initial residual not finite".into()));
    }
    let m = r.len();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let j = jacobian(&f, &p, m);
        let rv = DVector::from_vec(r.clone());
        let jtj = j.transpose() * &j;
        let g = j.transpose() * rv;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let rt = f(&trial);
            let st = sum_sq(&rt);
            if st.is_finite() && st < ss {
                let rel_step = step
                    .iter()
                    .zip(&p)
                    .map(|(d, x)| d.abs() / x.abs().max(1e-12))
                    .fold(0.0, f64::max);
                let drop = (ss - st) / ss.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                ss = st;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_step < 1e-12 || drop < 1e-14 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a (local) minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares parameters diverged".into()));
    }
    Ok(LmResult { params: p, ss, iterations: it, converged })
}

/// Least squares for y ≈ offset + amp·g; returns (amp, offset, ss).
pub fn linear_amp_offset(g: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = g.len() as f64;
    let (sg, sy) = (g.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sgg: f64 = g.iter().map(|v| v * v).sum();
    let sgy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sgg - sg * sg;
    let (amp, off) = if det.abs() <= 1e-14 * n * sgg.max(1e-300) {
        (0.0, sy / n)
    } else {
        ((n * sgy - sg * sy) / det, (sgg * sy - sg * sgy) / det)
    };
    let ss = g.iter().zip(y).map(|(a, b)| (b - off - amp * a).powi(2)).sum();
    (amp, off, ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let res = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * (-p[1] * x).exp() - y).collect(),
            &[1.0, 0.5],
            200,
        )
        .unwrap();
        assert!((res.params[0] - 2.5).abs() < 1e-8);
        assert!((res.params[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn linear_solution() {
        let g = [0.0, 0.5, 1.0, 1.5];
        let y: Vec<f64> = g.iter().map(|v| 0.2 + 3.0 * v).collect();
        let (a, o, ss) = linear_amp_offset(&g, &y);
        assert!((a - 3.0).abs() < 1e-12 && (o - 0.2).abs() < 1e-12 && ss < 1e-24);
    }
}
