//! Deterministic, splittable random streams and the samplers built on them.
//!
//! A [`RandomStream`] is a `(seed, stream_id)` pair. Its generator is
//! counter based: the k-th 64-bit output is `mix64(key + (k + 1) * GAMMA)`
//! where `key` is derived from the pair and `mix64` is the SplitMix64
//! finalizer (David Stafford's "Mix13" constants). Outputs therefore depend
//! only on `(seed, stream_id, k)`, so any output can be computed directly
//! with [`RandomStream::u64_at`] and substreams never share state.
//!
//! Bulk samplers split work into fixed-size chunks, each drawing from its own
//! substream. Results are independent of thread count, and growing `N`
//! leaves the first `N` draws unchanged.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ParameterSpace, QoiModel};

/// Weyl increment (2^64 / golden ratio).
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_M1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_M2: u64 = 0x94D0_49BB_1331_11EB;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Points handled per substream in the bulk samplers.
pub const CHUNK: usize = 4096;

pub const STAGE_DATA_GEN: u64 = 1;
pub const STAGE_PRIOR: u64 = 2;
pub const STAGE_NOISE: u64 = 3;
pub const STAGE_ACCEPT_REJECT: u64 = 4;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_M1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_M2);
    z ^ (z >> 31)
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Identifies a reproducible sequence of random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derive an independent child stream.
    pub fn substream(&self, child: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(child.wrapping_add(STREAM_SALT)));
        Self {
            seed: self.seed,
            stream_id: id,
        }
    }

    /// The named pipeline stage streams (data generation, prior, noise, accept-reject).
    pub fn stage(&self, stage: u64) -> Self {
        self.substream(stage)
    }

    fn key(&self) -> u64 {
        mix64(mix64(self.seed.wrapping_add(GAMMA)) ^ self.stream_id.wrapping_mul(STREAM_SALT | 1))
    }

    /// Sequential generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        StreamRng {
            key: self.key(),
            counter: 0,
        }
    }

    /// The `index`-th 64-bit output of this stream.
    pub fn u64_at(&self, index: u64) -> u64 {
        mix64(self.key().wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// The `index`-th output mapped to `[0, 1)`.
    pub fn uniform_at(&self, index: u64) -> f64 {
        to_unit(self.u64_at(index))
    }
}

/// Stateful generator over a [`RandomStream`].
#[derive(Clone, Debug)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Marsaglia–Tsang squeeze/rejection for Gamma(shape, 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            // boost: G(a) = G(a + 1) · U^(1/a)
            let g = self.gamma(shape + 1.0);
            return g * self.uniform_open_closed().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_open_closed();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    pub fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        loop {
            let g1 = self.gamma(alpha);
            let g2 = self.gamma(beta);
            let s = g1 + g2;
            if s > 0.0 {
                let x = g1 / s;
                if x > 0.0 && x < 1.0 {
                    return x;
                }
            }
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Fill `len` values in parallel, chunk `c` drawing from `stream.substream(c)`.
pub(crate) fn chunked_fill<T, F>(stream: RandomStream, len: usize, per_item: usize, fill: F) -> Vec<T>
where
    T: Send + Copy + Default,
    F: Fn(&mut StreamRng, &mut [T]) + Sync,
{
    let mut out = vec![T::default(); len * per_item];
    out.par_chunks_mut(CHUNK * per_item.max(1))
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = stream.substream(c as u64).rng();
            fill(&mut rng, chunk);
        });
    out
}

/// Parameter samples with their (optional) QoI images, both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    space: ParameterSpace,
    points: Vec<f64>,
    qvals: Option<Vec<f64>>,
    output_dim: usize,
}

impl SampleSet {
    pub fn from_points(space: ParameterSpace, points: Vec<f64>) -> Result<Self> {
        let n = space.dim();
        if points.len() % n != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates do not form rows of length {n}",
                points.len()
            )));
        }
        if let Some((row, _)) = points
            .chunks_exact(n)
            .enumerate()
            .find(|(_, p)| !space.contains(p))
        {
            return Err(Error::domain(format!("sample {row} lies outside the parameter box")));
        }
        Ok(Self {
            space,
            points,
            qvals: None,
            output_dim: 0,
        })
    }

    /// Samples with precomputed QoI images (the tabulated-model path).
    pub fn with_qvals(space: ParameterSpace, points: Vec<f64>, qvals: Vec<f64>, m: usize) -> Result<Self> {
        let mut set = Self::from_points(space, points)?;
        if m == 0 || qvals.len() != set.len() * m {
            return Err(Error::ShapeMismatch(format!(
                "{} QoI values for {} samples of output dimension {m}",
                qvals.len(),
                set.len()
            )));
        }
        set.qvals = Some(qvals);
        set.output_dim = m;
        Ok(set)
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.space.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.points[j * n..(j + 1) * n]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn qvals(&self) -> Option<&[f64]> {
        self.qvals.as_deref()
    }

    pub fn qval(&self, j: usize) -> Option<&[f64]> {
        let m = self.output_dim;
        self.qvals.as_ref().map(|q| &q[j * m..(j + 1) * m])
    }

    pub fn has_qvals(&self) -> bool {
        self.qvals.is_some()
    }

    /// Evaluate `model` at every sample (in parallel) and attach the images.
    pub fn evaluate(&mut self, model: &QoiModel) -> Result<()> {
        if model.input_dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "model '{}' takes {} inputs, samples have {}",
                model.name(),
                model.input_dim(),
                self.dim()
            )));
        }
        let m = model.output_dim();
        let n = self.dim();
        let mut q = vec![0.0; self.len() * m];
        q.par_chunks_mut(m)
            .zip(self.points.par_chunks(n))
            .for_each(|(out, lam)| model.eval_into(lam, out));
        if let Some(bad) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "model '{}' produced a non-finite value at sample {}",
                model.name(),
                bad / m
            )));
        }
        self.qvals = Some(q);
        self.output_dim = m;
        Ok(())
    }

    pub fn evaluated(mut self, model: &QoiModel) -> Result<Self> {
        self.evaluate(model)?;
        Ok(self)
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let n = self.dim();
        let m = self.output_dim;
        let points = indices.iter().flat_map(|&j| self.point(j).iter().copied()).collect();
        let qvals = self
            .qvals
            .as_ref()
            .map(|q| indices.iter().flat_map(|&j| q[j * m..(j + 1) * m].iter().copied()).collect());
        debug_assert!(indices.iter().all(|&j| j < self.points.len() / n));
        Self {
            space: self.space.clone(),
            points,
            qvals,
            output_dim: m,
        }
    }
}

/// `n_samples` i.i.d. uniform points on the box.
pub fn sample_uniform_box(space: &ParameterSpace, n_samples: usize, stream: RandomStream) -> SampleSet {
    let n = space.dim();
    let bounds = space.bounds().to_vec();
    let points = chunked_fill(stream, n_samples, n, |rng, chunk: &mut [f64]| {
        for row in chunk.chunks_mut(n) {
            for (x, &(lo, hi)) in row.iter_mut().zip(&bounds) {
                *x = (lo + rng.uniform() * (hi - lo)).min(hi);
            }
        }
    });
    SampleSet {
        space: space.clone(),
        points,
        qvals: None,
        output_dim: 0,
    }
}

/// Independent Beta(α, β) samples on the box, one shape pair per dimension.
pub fn sample_beta_product(
    space: &ParameterSpace,
    alphas: &[f64],
    betas: &[f64],
    n_samples: usize,
    stream: RandomStream,
) -> Result<SampleSet> {
    let n = space.dim();
    if alphas.len() != n || betas.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "need {n} Beta shape pairs, got {} and {}",
            alphas.len(),
            betas.len()
        )));
    }
    check_shapes(alphas.iter().chain(betas))?;
    let bounds = space.bounds().to_vec();
    let points = chunked_fill(stream, n_samples, n, |rng, chunk: &mut [f64]| {
        for row in chunk.chunks_mut(n) {
            for (d, x) in row.iter_mut().enumerate() {
                let (lo, hi) = bounds[d];
                *x = lo + rng.beta(alphas[d], betas[d]) * (hi - lo);
            }
        }
    });
    SampleSet::from_points(space.clone(), points)
}

pub(crate) fn check_shapes<'a>(shapes: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &s in shapes {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("Beta shape parameters must be positive (got {s})")));
        }
    }
    Ok(())
}

/// `n_samples` i.i.d. Beta(α, β) variates on (0, 1).
pub fn sample_beta(alpha: f64, beta: f64, n_samples: usize, stream: RandomStream) -> Result<Vec<f64>> {
    check_shapes([&alpha, &beta])?;
    Ok(chunked_fill(stream, n_samples, 1, |rng, chunk: &mut [f64]| {
        for x in chunk {
            *x = rng.beta(alpha, beta);
        }
    }))
}

/// Proposal bookkeeping from [`sample_normal_product_with_stats`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionStats {
    pub proposals: u64,
    pub accepted: u64,
    pub pilot_acceptance: f64,
}

impl RejectionStats {
    pub fn rejection_rate(&self) -> f64 {
        1.0 - self.accepted as f64 / self.proposals as f64
    }
}

const PILOT_DRAWS: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-6;

/// Independent normal marginals truncated to the box by rejection.
pub fn sample_normal_product(
    means: &[f64],
    sds: &[f64],
    space: &ParameterSpace,
    n_samples: usize,
    stream: RandomStream,
) -> Result<SampleSet> {
    sample_normal_product_with_stats(means, sds, space, n_samples, stream).map(|(s, _)| s)
}

pub fn sample_normal_product_with_stats(
    means: &[f64],
    sds: &[f64],
    space: &ParameterSpace,
    n_samples: usize,
    stream: RandomStream,
) -> Result<(SampleSet, RejectionStats)> {
    let n = space.dim();
    if means.len() != n || sds.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "need {n} means and sds, got {} and {}",
            means.len(),
            sds.len()
        )));
    }
    if let Some(sd) = sds.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::domain(format!("normal prior sd must be positive (got {sd})")));
    }
    let bounds = space.bounds().to_vec();
    let propose = |rng: &mut StreamRng, row: &mut [f64]| {
        for (d, x) in row.iter_mut().enumerate() {
            *x = means[d] + sds[d] * rng.normal();
        }
        row.iter().zip(&bounds).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    };

    let mut pilot_rng = stream.substream(u64::MAX).rng();
    let mut scratch = vec![0.0; n];
    let pilot_hits = (0..PILOT_DRAWS)
        .filter(|_| propose(&mut pilot_rng, &mut scratch))
        .count();
    let pilot_acceptance = pilot_hits as f64 / PILOT_DRAWS as f64;
    if pilot_acceptance < MIN_ACCEPTANCE {
        return Err(Error::DegeneratePrior {
            acceptance: pilot_acceptance,
        });
    }

    let mut points = vec![0.0; n_samples * n];
    let proposals: u64 = points
        .par_chunks_mut(CHUNK * n)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = stream.substream(c as u64).rng();
            let mut tries = 0u64;
            for row in chunk.chunks_mut(n) {
                loop {
                    tries += 1;
                    if propose(&mut rng, row) {
                        break;
                    }
                }
            }
            tries
        })
        .sum();
    let stats = RejectionStats {
        proposals,
        accepted: n_samples as u64,
        pilot_acceptance,
    };
    let set = SampleSet {
        space: space.clone(),
        points,
        qvals: None,
        output_dim: 0,
    };
    Ok((set, stats))
}

/// Affine map `v ↦ lo + v (hi - lo)` from the unit interval.
pub fn shift_scale(values: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    check_interval(lo, hi)?;
    Ok(values.iter().map(|v| lo + v * (hi - lo)).collect())
}

/// Inverse of [`shift_scale`].
pub fn unshift_scale(values: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    check_interval(lo, hi)?;
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo) {
        return Err(Error::domain(format!("interval needs hi > lo (got [{lo}, {hi}])")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn ks_uniform(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    fn first_outputs(s: RandomStream) -> Vec<u64> {
        let mut r = s.rng();
        (0..8).map(|_| r.next_u64()).collect()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = first_outputs(RandomStream::new(7, 0));
        assert_eq!(a, first_outputs(RandomStream::new(7, 0)));
        assert_ne!(a, first_outputs(RandomStream::new(7, 1)));
        assert_ne!(a, first_outputs(RandomStream::new(8, 0)));
        let s = RandomStream::new(7, 0);
        for (k, &x) in a.iter().enumerate() {
            assert_eq!(s.u64_at(k as u64), x);
        }
        assert_ne!(s.stage(STAGE_PRIOR), s.stage(STAGE_DATA_GEN));
    }

    /// Beta quantile by bisection on the Simpson-integrated CDF.
    fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
        let cdf = |x: f64| {
            crate::quadrature::adaptive_simpson(|t| crate::special::beta_pdf(t, a, b), 0.0, x, 1e-12).unwrap()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn beta_chi_square_goodness_of_fit() {
        // 20 equal-probability bins, df = 19, critical value at 1e-3 is 43.82
        let n = 100_000;
        for (seed, &(a, b)) in [(1.0, 1.0), (2.0, 5.0), (12.0, 12.0)].iter().enumerate() {
            let edges: Vec<f64> = (1..20).map(|k| beta_quantile(k as f64 / 20.0, a, b)).collect();
            let v = sample_beta(a, b, n, RandomStream::new(100 + seed as u64, 0)).unwrap();
            let mut counts = [0usize; 20];
            for x in v {
                counts[edges.partition_point(|e| *e <= x)] += 1;
            }
            let expected = n as f64 / 20.0;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 43.82, "Beta({a},{b}) chi2 = {chi2}");
        }
    }

    #[test]
    fn substreams_look_independent() {
        // correlation between paired uniforms of two sibling substreams
        let s = RandomStream::new(42, 0);
        let (a, b) = (s.substream(0), s.substream(1));
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|k| a.uniform_at(k)).collect();
        let ys: Vec<f64> = (0..n).map(|k| b.uniform_at(k)).collect();
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n as f64;
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn uniform_box_single_point() {
        let set = sample_uniform_box(&ParameterSpace::unit_cube(2), 1, RandomStream::new(1, 0));
        assert_eq!(set.len(), 1);
        assert!(set.point(0).iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn uniform_box_means() {
        let n = 100_000;
        let set = sample_uniform_box(&ParameterSpace::unit_cube(2), n, RandomStream::new(3, 0));
        let tol = 3.0 * (1.0 / 12f64.sqrt()) / (n as f64).sqrt();
        for d in 0..2 {
            let col: Vec<f64> = (0..n).map(|j| set.point(j)[d]).collect();
            assert!((mean_var(&col).0 - 0.5).abs() < tol);
        }
    }

    #[test]
    fn uniform_box_on_the_ball_box() {
        let n = 100_000;
        let space = ParameterSpace::new(vec![(27.0, 43.0), (-1.0, 1.0), (8.8, 10.8)]).unwrap();
        let set = sample_uniform_box(&space, n, RandomStream::new(5, 0));
        assert!((0..n).all(|j| space.contains(set.point(j))));
        let left = (0..n).filter(|&j| set.point(j)[0] < 35.0).count() as f64 / n as f64;
        assert!((left - 0.5).abs() < 0.005);
    }

    #[test]
    fn uniform_box_prefix_property() {
        let space = ParameterSpace::unit_cube(2);
        let s = RandomStream::new(9, 2);
        let small = sample_uniform_box(&space, 5000, s);
        let big = sample_uniform_box(&space, 12_000, s);
        assert_eq!(small.points(), &big.points()[..10_000]);
    }

    #[test]
    fn beta_one_one_is_uniform() {
        let v = sample_beta(1.0, 1.0, 100_000, RandomStream::new(11, 0)).unwrap();
        assert!(ks_uniform(v) < 0.01);
    }

    #[test]
    fn beta_moments() {
        let v = sample_beta(12.0, 12.0, 100_000, RandomStream::new(12, 0)).unwrap();
        let (m, var) = mean_var(&v);
        assert!((m - 0.5).abs() < 0.002);
        assert!((var - 0.01).abs() < 0.0005);
        let v = sample_beta(8.0, 8.0, 100_000, RandomStream::new(13, 0)).unwrap();
        assert!((mean_var(&v).0 - 0.5).abs() < 0.002);
    }

    #[test]
    fn beta_small_shapes_use_the_boost() {
        let v = sample_beta(0.5, 0.5, 100_000, RandomStream::new(14, 0)).unwrap();
        let (m, var) = mean_var(&v);
        // arcsine law: mean 1/2, variance 1/8
        assert!((m - 0.5).abs() < 0.004);
        assert!((var - 0.125).abs() < 0.002);
        assert!(v.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn beta_rejects_bad_shapes() {
        assert!(sample_beta(0.0, 1.0, 10, RandomStream::new(0, 0)).is_err());
        assert!(sample_beta(1.0, -2.0, 10, RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn normal_degenerate_sd() {
        let space = ParameterSpace::new(vec![(27.0, 43.0), (-1.0, 1.0), (8.8, 10.8)]).unwrap();
        let means = [35.0, 0.0, 9.81];
        let set = sample_normal_product(&means, &[1e-9; 3], &space, 1000, RandomStream::new(1, 1)).unwrap();
        for j in 0..set.len() {
            for (x, m) in set.point(j).iter().zip(means) {
                assert!((x - m).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normal_acceptance_matches_one_sigma_mass() {
        // box = mean ± 1 sd, so a proposal survives with probability 0.682689
        let space = ParameterSpace::new(vec![(-1.0, 1.0)]).unwrap();
        let n = 100_000;
        let (_, stats) =
            sample_normal_product_with_stats(&[0.0], &[1.0], &space, n, RandomStream::new(2, 0)).unwrap();
        let p = 0.682_689_492_137_085_9;
        let observed = n as f64 / stats.proposals as f64;
        let sigma = (p * (1.0 - p) / stats.proposals as f64).sqrt();
        assert!((observed - p).abs() < 3.0 * sigma + 1e-4, "{observed}");
    }

    #[test]
    fn normal_ball_prior_practically_never_rejects() {
        let space = ParameterSpace::new(vec![(27.0, 43.0), (-1.0, 1.0), (8.8, 10.8)]).unwrap();
        let (_, stats) = sample_normal_product_with_stats(
            &[35.0, 0.0, 9.81],
            &[0.1, 0.1, 0.01],
            &space,
            200_000,
            RandomStream::new(3, 0),
        )
        .unwrap();
        assert!(stats.rejection_rate() < 1e-6);
    }

    #[test]
    fn normal_far_outside_box_is_degenerate() {
        let space = ParameterSpace::new(vec![(0.0, 1.0)]).unwrap();
        let err = sample_normal_product(&[100.0], &[1.0], &space, 10, RandomStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::DegeneratePrior { .. }));
    }

    #[test]
    fn shift_scale_values() {
        let v = shift_scale(&[0.5, 0.0, 1.0], 2.55, 3.19).unwrap();
        assert!((v[0] - 2.87).abs() < 1e-12);
        assert_eq!(v[1], 2.55);
        assert_eq!(v[2], 3.19);
        let back = unshift_scale(&v, 2.55, 3.19).unwrap();
        let again = shift_scale(&back, 2.55, 3.19).unwrap();
        for (a, b) in v.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(shift_scale(&[0.5], 1.0, 1.0).is_err());
    }
}
