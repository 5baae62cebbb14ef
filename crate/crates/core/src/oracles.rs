//! Reference solutions: the finite discrete inverse problem in exact rational
//! arithmetic, closed forms for the exponential-decay model, and the disk
//! disintegration.
//!
//! Two contour quantities appear for the exponential-decay map and should not
//! be confused. [`expdecay_contour_arclength`] is the plain length of the
//! contour `{Q = q}` inside the unit square. [`expdecay_pushforward_density`]
//! integrates `(det J Jᵀ)^{-1/2}` along the same contour, which is the density
//! of `Q` under the uniform distribution.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::eval_discrete_parity;
use crate::output_measure::PartitionD;
use crate::posterior::GridHeatmap;
use crate::quadrature::{adaptive_simpson, gauss_legendre, periodic_trapezoid, DEFAULT_ABS_TOL};
use crate::special::beta_pdf;
use crate::sum::neumaier_sum;

pub type Rational = Ratio<i128>;

fn r(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

// ---------------------------------------------------------------------------
// Discrete inverse problem

/// A finite parameter space with a map to finitely many output symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSip {
    pub points: Vec<Vec<i64>>,
    /// Output symbol of each point, in `0..num_symbols`.
    pub qmap: Vec<usize>,
    pub prior_pmf: Vec<Rational>,
    pub data_pmf: Vec<Rational>,
}

fn check_pmf(p: &[Rational], what: &str) -> Result<()> {
    if p.iter().any(|x| *x < Rational::zero()) {
        return Err(Error::domain(format!("{what} has a negative entry")));
    }
    let s: Rational = p.iter().sum();
    if s != Rational::from_integer(1) {
        return Err(Error::domain(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl DiscreteSip {
    pub fn new(points: Vec<Vec<i64>>, qmap: Vec<usize>, prior_pmf: Vec<Rational>, data_pmf: Vec<Rational>) -> Result<Self> {
        if points.len() != qmap.len() || points.len() != prior_pmf.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points, {} map entries, {} prior masses",
                points.len(),
                qmap.len(),
                prior_pmf.len()
            )));
        }
        if let Some(&s) = qmap.iter().find(|&&s| s >= data_pmf.len()) {
            return Err(Error::ShapeMismatch(format!("symbol {s} has no data mass entry")));
        }
        check_pmf(&prior_pmf, "prior pmf")?;
        check_pmf(&data_pmf, "data pmf")?;
        Ok(Self {
            points,
            qmap,
            prior_pmf,
            data_pmf,
        })
    }

    /// The 3×3 parity example; `prior` is row-major in `(λ1, λ2)`.
    pub fn parity(prior: Vec<Rational>, data: Vec<Rational>) -> Result<Self> {
        let points: Vec<Vec<i64>> = (1..=3).flat_map(|a| (1..=3).map(move |b| vec![a, b])).collect();
        let qmap = points
            .iter()
            .map(|p| eval_discrete_parity(p[0], p[1]).map(usize::from))
            .collect::<Result<_>>()?;
        Self::new(points, qmap, prior, data)
    }

    pub fn num_symbols(&self) -> usize {
        self.data_pmf.len()
    }

    /// Indices of the points mapping to `symbol`.
    pub fn contour(&self, symbol: usize) -> Vec<usize> {
        (0..self.points.len()).filter(|&j| self.qmap[j] == symbol).collect()
    }

    /// Pushforward of a pmf on the points.
    pub fn induced_measure(&self, pmf: &[Rational]) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.num_symbols()];
        for (j, p) in pmf.iter().enumerate() {
            out[self.qmap[j]] += p;
        }
        out
    }

    /// Prior mass of each point relative to its contour, `prior(λ) / prior(Q⁻¹(Q(λ)))`.
    /// Points on contours with zero prior mass get `None`.
    pub fn conditional_weights(&self) -> Vec<Option<Rational>> {
        let contour_mass = self.induced_measure(&self.prior_pmf);
        (0..self.points.len())
            .map(|j| {
                let c = contour_mass[self.qmap[j]];
                (!c.is_zero()).then(|| self.prior_pmf[j] / c)
            })
            .collect()
    }
}

/// Exact disintegration posterior `prior(λ)/prior(contour) · data(Q(λ))`.
pub fn discrete_posterior(sip: &DiscreteSip) -> Result<Vec<Rational>> {
    let contour_mass = sip.induced_measure(&sip.prior_pmf);
    for (s, d) in sip.data_pmf.iter().enumerate() {
        if !d.is_zero() && contour_mass[s].is_zero() {
            return Err(Error::InfeasiblePrior { symbol: s });
        }
    }
    Ok(sip
        .conditional_weights()
        .into_iter()
        .enumerate()
        .map(|(j, w)| w.map_or(Rational::zero(), |w| w * sip.data_pmf[sip.qmap[j]]))
        .collect())
}

/// Shannon entropy `-Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn discrete_entropy(pmf: &[f64]) -> f64 {
    neumaier_sum(pmf.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()))
}

pub fn discrete_entropy_exact(pmf: &[Rational]) -> f64 {
    let v: Vec<f64> = pmf.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
    discrete_entropy(&v)
}

pub fn parity_uniform_prior() -> Vec<Rational> {
    vec![r(1, 9); 9]
}

/// Prior favouring points near (3, 1).
pub fn parity_informed_prior() -> Vec<Rational> {
    let (a, b) = (r(1, 20), r(3, 16));
    vec![a, a, a, b, b, a, b, b, a]
}

/// The pmf that generated the parity data.
pub fn parity_data_generating() -> Vec<Rational> {
    let (a, b) = (r(1, 20), r(1, 9));
    vec![a, a, a, b, b, a, r(5, 12), b, a]
}

/// Observed frequencies of outputs 0 and 1 in 200 Bernoulli draws.
pub fn parity_observed() -> Vec<Rational> {
    vec![r(17, 50), r(33, 50)]
}

// ---------------------------------------------------------------------------
// Exponential decay, Q(λ) = λ1 exp(-λ2 T) on [0, 1]²

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("q must lie in (0, 1) (got {q})")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("T must be positive (got {t})")));
    }
    Ok(())
}

/// Upper end of the contour `λ1 = q e^{Tλ2}` inside the unit square.
fn contour_end(q: f64, t: f64) -> f64 {
    ((1.0 / q).ln() / t).min(1.0)
}

/// Density of `Q` when `λ` is uniform on the unit square.
///
/// On the contour `λ1 = q e^{Tλ2}` the factor `(det J Jᵀ)^{-1/2}` times the
/// arclength element reduces to `e^{Tλ2} dλ2`, so the integral is
/// `(e^{T u} − 1)/T` with `u = min(1, ln(1/q)/T)`.
pub fn expdecay_pushforward_density(q: f64, t: f64) -> Result<f64> {
    check_q(q)?;
    check_t(t)?;
    Ok(if q < (-t).exp() {
        t.exp_m1() / t
    } else {
        (1.0 / q - 1.0) / t
    })
}

/// The same density by quadrature of the unsimplified contour integrand.
pub fn expdecay_pushforward_density_quadrature(q: f64, t: f64) -> Result<f64> {
    check_q(q)?;
    check_t(t)?;
    let integrand = |l2: f64| {
        let l1 = q * (t * l2).exp();
        let decay = (-t * l2).exp();
        // |∇Q| = sqrt((∂Q/∂λ1)² + (∂Q/∂λ2)²)
        let grad = decay.hypot(l1 * t * decay);
        let ds = (1.0 + (q * t * (t * l2).exp()).powi(2)).sqrt();
        ds / grad
    };
    adaptive_simpson(integrand, 0.0, contour_end(q, t), DEFAULT_ABS_TOL)
}

/// Uniform-prior posterior density `ρ_D(Q(λ)) / ρ̃_D(Q(λ))`.
pub fn expdecay_uniform_posterior_density<F>(lam: [f64; 2], t: f64, data_density: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let q = lam[0] * (-lam[1] * t).exp();
    if q >= 1.0 {
        return Err(Error::SingularContour(q));
    }
    let push = expdecay_pushforward_density(q, t)?;
    if push <= 0.0 {
        return Err(Error::SingularContour(q));
    }
    Ok(data_density(q) / push)
}

/// Density of `Q` when `λ1, λ2` are independent Beta(a, b).
pub fn expdecay_beta_data_density(q: f64, t: f64, a: f64, b: f64) -> Result<f64> {
    check_q(q)?;
    check_t(t)?;
    let integrand = |l2: f64| {
        let g = (t * l2).exp();
        beta_pdf(q * g, a, b) * g * beta_pdf(l2, a, b)
    };
    adaptive_simpson(integrand, 0.0, contour_end(q, t), DEFAULT_ABS_TOL)
}

/// Integrate a 2-D density over each cell of a grid with an `order`-point
/// Gauss–Legendre product rule.
pub fn grid_cell_integrals<F>(density: F, grid: &PartitionD, order: usize) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("cell integrals need a 2-D grid".into()));
    }
    let (nodes, weights) = gauss_legendre(order);
    (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let cb = grid.cell_bounds(c);
            let ((x0, x1), (y0, y1)) = (cb[0], cb[1]);
            let (hx, hy) = (0.5 * (x1 - x0), 0.5 * (y1 - y0));
            let mut acc = 0.0;
            for (xi, wi) in nodes.iter().zip(&weights) {
                for (yj, wj) in nodes.iter().zip(&weights) {
                    let v = density(x0 + hx * (1.0 + xi), y0 + hy * (1.0 + yj))?;
                    acc += wi * wj * v;
                }
            }
            Ok(acc * hx * hy)
        })
        .collect()
}

/// Gauss–Legendre points used per cell by the oracle heatmaps.
pub const ORACLE_GL_ORDER: usize = 6;

/// Density of `Q` for Beta(a, b)² inputs by a fixed composite Gauss–Legendre
/// rule, for callers that need many evaluations.
pub fn expdecay_beta_data_density_gl(q: f64, t: f64, a: f64, b: f64, panels: usize) -> Result<f64> {
    check_q(q)?;
    check_t(t)?;
    let (nodes, weights) = gauss_legendre(8);
    let end = contour_end(q, t);
    let h = end / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let l2 = mid + 0.5 * h * x;
            let g = (t * l2).exp();
            acc += w * beta_pdf(q * g, a, b) * g * beta_pdf(l2, a, b);
        }
    }
    Ok(acc * 0.5 * h)
}

/// A density on (0, 1) tabulated at `n + 1` equispaced nodes and linearly
/// interpolated, zero outside.
#[derive(Clone, Debug)]
pub struct TabulatedDensity {
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn build<F>(f: F, n: usize) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let values = (0..=n)
            .into_par_iter()
            .map(|i| if i == 0 || i == n { Ok(0.0) } else { f(i as f64 / n as f64) })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }

    pub fn eval(&self, q: f64) -> f64 {
        if !(q > 0.0 && q < 1.0) {
            return 0.0;
        }
        let n = self.values.len() - 1;
        let x = q * n as f64;
        let i = (x as usize).min(n - 1);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Uniform-prior posterior density on the unit square for exp-decay data
/// generated from Beta(a, b)².
#[derive(Clone, Debug)]
pub struct ExpDecayOracle {
    pub t: f64,
    data: TabulatedDensity,
}

/// Table resolution of the oracle's data density.
pub const ORACLE_TABLE_NODES: usize = 40_000;

impl ExpDecayOracle {
    pub fn new(t: f64, a: f64, b: f64) -> Result<Self> {
        check_t(t)?;
        let data = TabulatedDensity::build(|q| expdecay_beta_data_density_gl(q, t, a, b, 32), ORACLE_TABLE_NODES)?;
        Ok(Self { t, data })
    }

    pub fn data_density(&self, q: f64) -> f64 {
        self.data.eval(q)
    }

    pub fn posterior_density(&self, x: f64, y: f64) -> Result<f64> {
        let q = x * (-y * self.t).exp();
        if q <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.data.eval(q) / expdecay_pushforward_density(q, self.t)?)
    }

    /// Cell probabilities on a uniform grid over the unit square.
    pub fn heatmap(&self, cells_per_dim: [usize; 2]) -> Result<GridHeatmap> {
        let grid = PartitionD::uniform(&[(0.0, 1.0), (0.0, 1.0)], &cells_per_dim)?;
        let probs = grid_cell_integrals(|x, y| self.posterior_density(x, y), &grid, ORACLE_GL_ORDER)?;
        GridHeatmap::from_probs(grid, vec![0, 1], probs, 0.0)
    }

    /// Posterior probability of a box, integrated on a `sub × sub` grid.
    pub fn box_probability(&self, event: [(f64, f64); 2], sub: usize) -> Result<f64> {
        let grid = PartitionD::uniform(&event, &[sub, sub])?;
        let cells = grid_cell_integrals(|x, y| self.posterior_density(x, y), &grid, ORACLE_GL_ORDER)?;
        Ok(neumaier_sum(cells))
    }
}

/// Length of the contour `{λ1 e^{-λ2 T} = q}` inside the unit square.
pub fn expdecay_contour_arclength(q: f64, t: f64) -> Result<f64> {
    check_q(q)?;
    check_t(t)?;
    adaptive_simpson(
        |l2| (1.0 + (q * t * (t * l2).exp()).powi(2)).sqrt(),
        0.0,
        contour_end(q, t),
        DEFAULT_ABS_TOL,
    )
}

// ---------------------------------------------------------------------------
// Disk

/// Nodes of the periodic trapezoid rule for the contour normalizer.
pub const DISK_NODES: usize = 4096;

/// Conditional density of the angle on the circle of radius `q`.
pub fn disk_conditional_density<F>(theta: f64, q: f64, density: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("radius must lie in (0, 1] (got {q})")));
    }
    let on_circle = |th: f64| density(q * th.cos(), q * th.sin());
    let denom = periodic_trapezoid(on_circle, 0.0, std::f64::consts::TAU, DISK_NODES);
    if !(denom > 0.0) {
        return Err(Error::UnsupportedContour(q));
    }
    Ok(on_circle(theta) / denom)
}

/// Density of the radius of a uniform point in the unit disk.
pub fn disk_radius_density(q: f64) -> f64 {
    if (0.0..=1.0).contains(&q) {
        2.0 * q
    } else {
        0.0
    }
}
