//! Small dense optimizers: BFGS for smooth objectives with gradients,
//! Levenberg-Marquardt for nonlinear least squares, and bracketed bisection.

use alloc::vec;
use alloc::vec::Vec;

/// Inverts a dense `n x n` row-major matrix with Gauss-Jordan elimination and
/// partial pivoting. Returns `None` when the matrix is numerically singular.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| m[r1 * n + col].abs().total_cmp(&m[r2 * n + col].abs()))?;
        if m[pivot * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

/// Solves `A x = b` for a small dense system.
pub fn solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let inv = invert(a, n)?;
    Some((0..n).map(|i| (0..n).map(|j| inv[i * n + j] * b[j]).sum()).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Convergence when the infinity norm of the gradient drops below this.
    pub gradient_tolerance: f64,
    /// Convergence when the relative objective change drops below this.
    pub value_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tolerance: 1e-6, value_tolerance: 1e-13 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` with BFGS and a backtracking Armijo line search.
///
/// `f(x, grad)` returns the objective and writes the gradient. Non-finite
/// objective values are treated as +inf so the line search backs off.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = identity(n);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut stalls = 0;

    for iter in 0..opts.max_iterations {
        if g.iter().all(|v| v.abs() < opts.gradient_tolerance) {
            return Minimum { x, value: fx, iterations: iter, converged: true };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // lost positive definiteness; restart along steepest descent
            h = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if !f_new.is_finite() {
                f_new = f64::INFINITY;
            }
            if f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            let converged = g.iter().all(|v| v.abs() < libm::sqrt(opts.gradient_tolerance));
            return Minimum { x, value: fx, iterations: iter, converged };
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rel_change = (fx - f_new).abs() / fx.abs().max(1.0);
        if f_new >= fx {
            // accepted only through rounding: at the noise floor of f
            stalls += 1;
            if stalls >= 3 {
                let converged = g_new.iter().all(|v| v.abs() < libm::sqrt(opts.gradient_tolerance));
                return Minimum { x: x_new.clone(), value: f_new, iterations: iter + 1, converged };
            }
        } else {
            stalls = 0;
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if rel_change < opts.value_tolerance && step == 1.0 {
            return Minimum { x, value: fx, iterations: iter + 1, converged: true };
        }
        if sy > 1e-12 * libm::sqrt(s.iter().map(|v| v * v).sum::<f64>()) * libm::sqrt(y.iter().map(|v| v * v).sum::<f64>()) {
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    let converged = g.iter().all(|v| v.abs() < opts.gradient_tolerance);
    Minimum { x, value: fx, iterations: opts.max_iterations, converged }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Convergence on relative reduction of the sum of squares.
    pub tolerance: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { max_iterations: 400, tolerance: 1e-14 }
    }
}

#[derive(Debug, Clone)]
pub struct LsqResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub sum_squares: f64,
    /// `(JᵀJ)⁻¹` at the solution, row-major; `None` if singular.
    pub inverse_normal: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt with a central-difference Jacobian.
///
/// `residuals(x, out)` writes `m` residuals.
pub fn levenberg_marquardt<F>(mut residuals: F, x0: &[f64], m: usize, opts: LsqOptions) -> LsqResult
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    residuals(&x, &mut r);
    let mut ss = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut jac = vec![0.0; m * n];
    let mut r_trial = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        jacobian(&mut residuals, &x, m, &mut jac);
        let (jtj, jtr) = normal_equations(&jac, &r, m, n);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i * n + i] += lambda * jtj[i * n + i].max(1e-12);
            }
            let neg: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(delta) = solve(&a, &neg) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            residuals(&trial, &mut r_trial);
            let ss_trial = sum_sq(&r_trial);
            if ss_trial.is_finite() && ss_trial <= ss {
                let rel = (ss - ss_trial) / ss.max(f64::MIN_POSITIVE);
                let step_small = delta
                    .iter()
                    .zip(&trial)
                    .all(|(d, t)| d.abs() <= 1e-12 * t.abs().max(1e-12));
                x = trial;
                core::mem::swap(&mut r, &mut r_trial);
                ss = ss_trial;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if rel < opts.tolerance || step_small || ss == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // cannot reduce further: a (possibly degenerate) minimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    jacobian(&mut residuals, &x, m, &mut jac);
    let (jtj, _) = normal_equations(&jac, &r, m, n);
    LsqResult { x, sum_squares: ss, inverse_normal: invert(&jtj, n), iterations, converged }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F: FnMut(&[f64], &mut [f64])>(residuals: &mut F, x: &[f64], m: usize, jac: &mut [f64]) {
    let n = x.len();
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-3);
        xp[j] = x[j] + h;
        residuals(&xp, &mut rp);
        xp[j] = x[j] - h;
        residuals(&xp, &mut rm);
        xp[j] = x[j];
        for i in 0..m {
            jac[i * n + j] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
}

fn normal_equations(jac: &[f64], r: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for a in 0..n {
            jtr[a] += row[a] * r[i];
            for b in a..n {
                jtj[a * n + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a * n + b] = jtj[b * n + a];
        }
    }
    (jtj, jtr)
}

/// Finds a root of `f` in `[lo, hi]` by bisection. Requires a sign change.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = bfgs(rosen, &[-1.2, 1.0], BfgsOptions { max_iterations: 2000, ..Default::default() });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn lm_fits_exponential() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * libm::exp(-0.7 * t) + 0.5).collect();
        let res = levenberg_marquardt(
            |p, out| {
                for (k, (t, y)) in ts.iter().zip(&ys).enumerate() {
                    out[k] = p[0] * libm::exp(-p[1] * t) + p[2] - y;
                }
            },
            &[1.0, 0.2, 0.0],
            ts.len(),
            LsqOptions::default(),
        );
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-8);
        assert!((res.x[1] - 0.7).abs() < 1e-8);
        assert!((res.x[2] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn invert_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 1.0, 1e-9).is_none());
    }
}
