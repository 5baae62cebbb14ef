//! Parameter spaces and the built-in quantity-of-interest maps.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned parameter box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ParameterSpace {
    bounds: Vec<(f64, f64)>,
}

impl ParameterSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::domain("parameter space needs at least one dimension"));
        }
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::domain(format!(
                    "dimension {d}: bounds ({lo}, {hi}) must be finite with lo < hi"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn unit_cube(n: usize) -> Self {
        Self {
            bounds: vec![(0.0, 1.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }
}

impl TryFrom<Vec<(f64, f64)>> for ParameterSpace {
    type Error = Error;

    fn try_from(bounds: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(bounds)
    }
}

impl From<ParameterSpace> for Vec<(f64, f64)> {
    fn from(space: ParameterSpace) -> Self {
        space.bounds
    }
}

/// A pure map from parameters to quantities of interest.
pub trait QoiMap: Send + Sync {
    /// Evaluate at `lam` (length n) writing m outputs into `out`.
    fn eval_into(&self, lam: &[f64], out: &mut [f64]);
}

impl<F> QoiMap for F
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn eval_into(&self, lam: &[f64], out: &mut [f64]) {
        self(lam, out)
    }
}

/// A named quantity-of-interest model `Q: Λ → D`.
#[derive(Clone)]
pub struct QoiModel {
    name: String,
    domain: ParameterSpace,
    range_bounds: Vec<(f64, f64)>,
    map: Arc<dyn QoiMap>,
}

impl fmt::Debug for QoiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QoiModel")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("range_bounds", &self.range_bounds)
            .finish_non_exhaustive()
    }
}

impl QoiModel {
    pub fn new(
        name: impl Into<String>,
        domain: ParameterSpace,
        range_bounds: Vec<(f64, f64)>,
        map: Arc<dyn QoiMap>,
    ) -> Result<Self> {
        if range_bounds.is_empty() || range_bounds.len() > domain.dim() {
            return Err(Error::domain(format!(
                "output dimension {} must satisfy 1 <= m <= n = {}",
                range_bounds.len(),
                domain.dim()
            )));
        }
        if range_bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::domain("range bounds must satisfy lo < hi"));
        }
        Ok(Self {
            name: name.into(),
            domain,
            range_bounds,
            map,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.range_bounds.len()
    }

    pub fn domain(&self) -> &ParameterSpace {
        &self.domain
    }

    pub fn range_bounds(&self) -> &[(f64, f64)] {
        &self.range_bounds
    }

    pub fn eval_into(&self, lam: &[f64], out: &mut [f64]) {
        self.map.eval_into(lam, out)
    }

    pub fn eval(&self, lam: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(lam, &mut out);
        out
    }

    /// Exponential decay `λ1 exp(-λ2 T)` on the unit square with D = [0, 1].
    pub fn exp_decay(t: f64) -> Self {
        Self {
            name: "exp_decay".into(),
            domain: ParameterSpace::unit_cube(2),
            range_bounds: vec![(0.0, 1.0)],
            map: Arc::new(move |lam: &[f64], out: &mut [f64]| {
                out[0] = eval_exp_decay(lam[0], lam[1], t)
            }),
        }
    }

    /// Drag-free flight time of a dropped ball, parameters (H0, V0, g).
    pub fn free_fall(domain: ParameterSpace, range: (f64, f64)) -> Result<Self> {
        if domain.dim() != 3 {
            return Err(Error::domain("free_fall expects a 3-dimensional (H0, V0, g) box"));
        }
        if domain.bounds()[0].0 <= 0.0 || domain.bounds()[2].0 <= 0.0 {
            return Err(Error::domain("free_fall requires H0 > 0 and g > 0 on the whole box"));
        }
        Self::new(
            "free_fall",
            domain,
            vec![range],
            Arc::new(|lam: &[f64], out: &mut [f64]| {
                out[0] = flight_time(lam[0], lam[1], lam[2]);
            }),
        )
    }

    /// The falling-ball box `[27,43]×[-1,1]×[8.8,10.8]` with D = [2.55, 3.19].
    pub fn falling_ball() -> Self {
        let domain = ParameterSpace::new(vec![(27.0, 43.0), (-1.0, 1.0), (8.8, 10.8)])
            .expect("constant bounds");
        Self::free_fall(domain, (2.55, 3.19)).expect("constant bounds")
    }

    /// Distance to the origin on `[-1,1]²` with D = [0, √2].
    pub fn disk_radius() -> Self {
        Self {
            name: "disk_radius".into(),
            domain: ParameterSpace::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).expect("constant bounds"),
            range_bounds: vec![(0.0, std::f64::consts::SQRT_2)],
            map: Arc::new(|lam: &[f64], out: &mut [f64]| out[0] = eval_disk_radius(lam[0], lam[1])),
        }
    }

    /// Parity of `λ1 + λ2` on the 3×3 lattice, embedded in `[1,3]²` with D = [0, 1].
    ///
    /// Coordinates are rounded to the nearest lattice value before evaluation.
    pub fn discrete_parity() -> Self {
        Self {
            name: "discrete_parity".into(),
            domain: ParameterSpace::new(vec![(1.0, 3.0), (1.0, 3.0)]).expect("constant bounds"),
            range_bounds: vec![(0.0, 1.0)],
            map: Arc::new(|lam: &[f64], out: &mut [f64]| {
                let (a, b) = (lam[0].round() as i64, lam[1].round() as i64);
                out[0] = if (a + b) % 2 == 0 { 1.0 } else { 0.0 };
            }),
        }
    }
}

/// `λ1 exp(-λ2 T)`.
pub fn eval_exp_decay(lam1: f64, lam2: f64, t: f64) -> f64 {
    lam1 * (-lam2 * t).exp()
}

fn flight_time(h0: f64, v0: f64, g: f64) -> f64 {
    (v0 + (v0 * v0 + 2.0 * g * h0).sqrt()) / g
}

/// Impact time `(V0 + sqrt(V0² + 2 g H0)) / g` of a ball released at height `h0`.
pub fn eval_free_fall(h0: f64, v0: f64, g: f64) -> Result<f64> {
    if !(g > 0.0) || !(h0 > 0.0) {
        return Err(Error::domain(format!(
            "free fall needs g > 0 and H0 > 0 (got g={g}, H0={h0})"
        )));
    }
    Ok(flight_time(h0, v0, g))
}

pub fn eval_disk_radius(x1: f64, x2: f64) -> f64 {
    x1.hypot(x2)
}

/// 0 when `λ1 + λ2` is odd, 1 when even; inputs must lie in {1, 2, 3}.
pub fn eval_discrete_parity(lam1: i64, lam2: i64) -> Result<u8> {
    for v in [lam1, lam2] {
        if !(1..=3).contains(&v) {
            return Err(Error::domain(format!("parity model input {v} not in {{1,2,3}}")));
        }
    }
    Ok(if (lam1 + lam2) % 2 == 0 { 1 } else { 0 })
}

/// Central-difference Jacobian (m rows × n columns) of `model` at `lam`.
pub fn jacobian_fd(model: &QoiModel, lam: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let n = model.input_dim();
    if lam.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "point has {} coordinates, model expects {n}",
            lam.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    for (dim, (&x, &(lo, hi))) in lam.iter().zip(model.domain().bounds()).enumerate() {
        if x - h < lo || x + h > hi {
            return Err(Error::Boundary {
                point: lam.to_vec(),
                dim,
                step: h,
            });
        }
    }
    let m = model.output_dim();
    let mut jac = vec![vec![0.0; n]; m];
    let mut probe = lam.to_vec();
    let (mut fwd, mut bwd) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..n {
        probe[j] = lam[j] + h;
        model.eval_into(&probe, &mut fwd);
        probe[j] = lam[j] - h;
        model.eval_into(&probe, &mut bwd);
        probe[j] = lam[j];
        for i in 0..m {
            jac[i][j] = (fwd[i] - bwd[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Named model constructors keyed by string, with numeric constants from config.
#[derive(Clone, Copy, Debug, Default)]
pub struct ModelRegistry;

impl ModelRegistry {
    pub const NAMES: [&'static str; 4] = ["exp_decay", "free_fall", "disk_radius", "discrete_parity"];

    pub fn build(&self, name: &str, params: &BTreeMap<String, f64>) -> Result<QoiModel> {
        let allowed: &[&str] = match name {
            "exp_decay" => &["T"],
            "free_fall" => &["H0_lo", "H0_hi", "V0_lo", "V0_hi", "g_lo", "g_hi", "D_lo", "D_hi"],
            "disk_radius" | "discrete_parity" => &[],
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("model '{name}' has no parameter '{bad}'")));
        }
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match name {
            "exp_decay" => {
                let t = get("T", 2.0);
                if !(t >= 0.0) {
                    return Err(Error::Config(format!("exp_decay needs T >= 0 (got {t})")));
                }
                Ok(QoiModel::exp_decay(t))
            }
            "free_fall" => {
                let domain = ParameterSpace::new(vec![
                    (get("H0_lo", 27.0), get("H0_hi", 43.0)),
                    (get("V0_lo", -1.0), get("V0_hi", 1.0)),
                    (get("g_lo", 8.8), get("g_hi", 10.8)),
                ])?;
                QoiModel::free_fall(domain, (get("D_lo", 2.55), get("D_hi", 3.19)))
            }
            "disk_radius" => Ok(QoiModel::disk_radius()),
            _ => Ok(QoiModel::discrete_parity()),
        }
    }
}
