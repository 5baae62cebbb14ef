//! Numerical integration: adaptive Simpson, Gauss–Legendre and trapezoid rules.

use crate::error::{Error, Result};

/// Default absolute tolerance for adaptive Simpson.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Hard cap on the number of accepted subintervals.
pub const MAX_INTERVALS: usize = 1_000_000;

const MAX_DEPTH: u32 = 60;
const INITIAL_PANELS: usize = 8;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol` with adaptive Simpson.
///
/// The interval is first split into a few equal panels so that narrow
/// features are not missed by the initial five-point estimate.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::Numeric(format!(
            "invalid quadrature request on [{a}, {b}] with tol {tol}"
        )));
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }

    let mut stack = Vec::with_capacity(64);
    let width = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    for k in (0..INITIAL_PANELS).rev() {
        let lo = a + width * k as f64;
        let hi = if k + 1 == INITIAL_PANELS { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (fa, fm, fb) = (f(lo), f(mid), f(hi));
        stack.push(Panel {
            a: lo,
            b: hi,
            fa,
            fm,
            fb,
            whole: simpson(lo, hi, fa, fm, fb),
            tol: panel_tol,
            depth: 0,
        });
    }

    let mut total = 0.0;
    let mut comp = 0.0;
    let mut accepted = 0usize;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let refined = left + right;
        let err = refined - p.whole;
        if !refined.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integrand on [{}, {}]",
                p.a, p.b
            )));
        }
        if err.abs() <= 15.0 * p.tol || p.depth >= MAX_DEPTH {
            // Neumaier summation keeps the total stable over many panels
            let term = refined + err / 15.0;
            let t = total + term;
            if total.abs() >= term.abs() {
                comp += (total - t) + term;
            } else {
                comp += (term - t) + total;
            }
            total = t;
            accepted += 1;
            if accepted > MAX_INTERVALS {
                return Err(Error::Numeric(format!(
                    "adaptive Simpson exceeded {MAX_INTERVALS} intervals on [{a}, {b}]"
                )));
            }
        } else {
            let half = 0.5 * p.tol;
            stack.push(Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: right,
                tol: half,
                depth: p.depth + 1,
            });
            stack.push(Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
                tol: half,
                depth: p.depth + 1,
            });
        }
    }
    Ok(total + comp)
}

/// Adaptive Simpson over `[a, b]` split at the given interior breakpoints.
pub fn adaptive_simpson_split<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut knots: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let share = tol / (knots.len() - 1).max(1) as f64;
    knots
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], share))
        .sum()
}

/// Composite trapezoid rule with `n` equal subintervals.
pub fn trapezoid<F>(f: F, a: f64, b: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = (b - a) / n as f64;
    let interior: f64 = (1..n).map(|k| f(a + h * k as f64)).sum();
    h * (0.5 * (f(a) + f(b)) + interior)
}

/// Trapezoid rule for a periodic integrand over one period `[a, a + period)`.
pub fn periodic_trapezoid<F>(f: F, a: f64, period: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = period / n as f64;
    h * (0..n).map(|k| f(a + h * k as f64)).sum::<f64>()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(|x| (-x * x).exp(), -6.0, 6.0, 1e-10).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn simpson_reversed_and_empty() {
        let v = adaptive_simpson(|x| x, 1.0, 0.0, 1e-10).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
        assert_eq!(adaptive_simpson(|x| x, 3.0, 3.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn simpson_rejects_non_finite() {
        assert!(adaptive_simpson(|x: f64| 1.0 / x, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn split_handles_kinks() {
        let v = adaptive_simpson_split(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - exact).abs() < 1e-12, "n={n}");
            let even = 2 * n - 2;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(even as i32)).sum();
            assert!((q - 2.0 / (even + 1) as f64).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn periodic_trapezoid_is_spectral() {
        let v = periodic_trapezoid(|t: f64| (t.cos()).exp(), 0.0, 2.0 * std::f64::consts::PI, 64);
        // 2π I0(1)
        assert!((v - 2.0 * std::f64::consts::PI * 1.266_065_877_752_008_4).abs() < 1e-12);
    }
}
