//! Small dense optimizers: BFGS with a backtracking line search, golden-section
//! search on an interval, and central-difference gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once every gradient component is below this in magnitude.
    pub gradient_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 1000,
            gradient_tolerance: 1e-12,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = scale;
    }
    h
}

/// Minimizes `f` from `x0`. The closure writes the gradient into its second
/// argument and returns the objective value.
///
/// The inverse Hessian approximation is reset to the identity whenever the
/// search direction stops being a descent direction or the line search fails.
pub fn bfgs<F>(mut f: F, x0: &[f64], options: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }

    let mut h = identity(n, 1.0);
    let mut fresh = true;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        if max_abs(&g) <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        for i in 0..n {
            p[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(n, 1.0);
            fresh = true;
            for i in 0..n {
                p[i] = -g[i];
            }
            slope = dot(&g, &p);
        }

        let mut step = 1.0;
        let mut f_new;
        loop {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + options.armijo * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }

        if !(f_new.is_finite() && f_new <= fx + options.armijo * step * slope) || f_new >= fx {
            if fresh {
                // No progress along steepest descent: the point is stationary to
                // working precision.
                converged =
                    max_abs(&g) <= sqrt(options.gradient_tolerance).max(1e-8) * (1.0 + fx.abs());
                break;
            }
            h = identity(n, 1.0);
            fresh = true;
            continue;
        }

        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * sqrt(dot(&s, &s) * dot(&y, &y)) && sy > 0.0 {
            if fresh {
                h = identity(n, sy / dot(&y, &y));
            }
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ
            let rho = 1.0 / sy;
            for i in 0..n {
                hy[i] = dot(&h[i * n..(i + 1) * n], &y);
            }
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] +=
                        rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }

        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
    }

    Minimum {
        x,
        value: fx,
        iterations,
        converged,
    }
}

/// Central-difference gradient with step `rel_step · max(|x_i|, 1)`.
pub fn central_difference<F>(mut f: F, x: &[f64], rel_step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
/// Returns `(x, f(x))` once the bracket is narrower than `tolerance`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tolerance: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    if lo > hi {
        core::mem::swap(&mut lo, &mut hi);
    }
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..500 {
        if hi - lo <= tolerance {
            break;
        }
        if fa <= fb || fb.is_nan() {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}
