//! Concrete stratified objectives and the synthetic data used to exercise them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::complex::{argsort, SimplicialComplex};
use crate::metrics::{BarcodeLoss, LossValueAndGradient, MetricError};
use crate::optim::{SampledGradient, StratifiedObjective};
use crate::persistence::{Barcode, PersistenceError, PersistenceMode, PersistencePairing, PersistenceSpec};
use crate::strata::{sample_nearby_strata, PairingCache, StratumKey, DEFAULT_CACHE_CAPACITY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("InfiniteInterval: persistence losses need extended persistence so that every bar is finite")]
    InfiniteInterval,
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `f(z) = 10 log(1 + |z1|) + z2²`: smooth off the line `z1 = 0`.
///
/// The oracle is exact: within `eps` of the crease it returns the projection onto
/// `z1 = 0` together with the one-sided gradient from the opposite half-plane.
#[derive(Debug, Clone, Copy, Default)]
pub struct CreaseToy;

impl StratifiedObjective for CreaseToy {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        10.0 * x[0].abs().ln_1p() + x[1] * x[1]
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![10.0 * x[0].signum() / (1.0 + x[0].abs()), 2.0 * x[1]]
    }

    fn sample_strata(&self, x: &[f64], eps: f64, _cap: Option<usize>) -> Vec<SampledGradient> {
        if x[0].abs() > eps {
            return Vec::new();
        }
        vec![SampledGradient {
            point: vec![0.0, x[1]],
            gradient: vec![-10.0 * x[0].signum(), 2.0 * x[1]],
            distance: x[0].abs(),
        }]
    }

    fn is_differentiable(&self, x: &[f64]) -> bool {
        x[0] != 0.0
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(10.0)
    }
}

/// `x -> loss(PH(x, K))` for a filter `x` on the vertices of `K`.
///
/// Strata are the cells of the permutation arrangement. Gradients are evaluated
/// with the pairing of the cell being visited, which is looked up in a bounded
/// cache keyed by vertex order. Sampled points are mirrors, so the oracle is
/// approximate with factor 2.
pub struct PersistenceObjective<L> {
    complex: SimplicialComplex,
    spec: PersistenceSpec,
    loss: L,
    cache: PairingCache,
    lipschitz: Option<f64>,
}

impl<L: BarcodeLoss> PersistenceObjective<L> {
    pub fn new(complex: SimplicialComplex, spec: PersistenceSpec, loss: L) -> Result<Self, ObjectiveError> {
        if spec.mode != PersistenceMode::Extended {
            return Err(ObjectiveError::InfiniteInterval);
        }
        if spec.max_degree > complex.dimension() {
            return Err(PersistenceError::DegreeTooLarge {
                requested: spec.max_degree,
                dimension: complex.dimension(),
            }
            .into());
        }
        Ok(Self {
            complex,
            spec,
            loss,
            cache: PairingCache::new(DEFAULT_CACHE_CAPACITY),
            lipschitz: None,
        })
    }

    /// Declares a Lipschitz bound for the gradients of the smooth pieces.
    pub fn with_lipschitz_bound(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.cache = PairingCache::new(capacity);
        self
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn spec(&self) -> PersistenceSpec {
        self.spec
    }

    pub fn cache(&self) -> &PairingCache {
        &self.cache
    }

    fn pairing(&self, key: &StratumKey) -> std::sync::Arc<PersistencePairing> {
        self.cache
            .get_or_try_insert(key, || self.spec.pairing(&self.complex, &key.ranks()))
            .expect("degree and length checked at construction")
    }

    /// Barcode of `x`, with the cached pairing of its cell.
    pub fn barcode(&self, x: &[f64]) -> Barcode {
        self.pairing(&StratumKey::of(x)).barcode(x)
    }

    fn evaluate_in(&self, key: &StratumKey, x: &[f64]) -> LossValueAndGradient {
        let barcode = self.pairing(key).barcode(x);
        self.loss
            .evaluate(&barcode, self.complex.n_vertices())
            .expect("extended barcodes are finite and attributed")
    }

    pub fn evaluate(&self, x: &[f64]) -> LossValueAndGradient {
        self.evaluate_in(&StratumKey::of(x), x)
    }
}

impl<L: BarcodeLoss> StratifiedObjective for PersistenceObjective<L> {
    fn dim(&self) -> usize {
        self.complex.n_vertices()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).value
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.evaluate(x).gradient
    }

    fn sample_strata(&self, x: &[f64], eps: f64, cap: Option<usize>) -> Vec<SampledGradient> {
        sample_nearby_strata(x, eps, cap)
            .into_par_iter()
            .map(|s| {
                let gradient = self.evaluate_in(&s.key, &s.point).gradient;
                SampledGradient {
                    point: s.point,
                    gradient,
                    distance: s.dist_estimate,
                }
            })
            .collect()
    }

    fn is_differentiable(&self, x: &[f64]) -> bool {
        let order = argsort(x);
        order.windows(2).all(|w| x[w[0]] != x[w[1]])
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz
    }

    fn approx_factor(&self) -> f64 {
        2.0
    }
}

/// Adds `lambda ‖x‖²` to an objective.
pub struct Regularized<O> {
    pub inner: O,
    pub lambda: f64,
}

impl<O> Regularized<O> {
    pub fn new(inner: O, lambda: f64) -> Self {
        Self { inner, lambda }
    }
}

impl<O: StratifiedObjective> StratifiedObjective for Regularized<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.lambda * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.inner.gradient(x);
        g.iter_mut().zip(x).for_each(|(gv, xv)| *gv += 2.0 * self.lambda * xv);
        g
    }

    fn sample_strata(&self, x: &[f64], eps: f64, cap: Option<usize>) -> Vec<SampledGradient> {
        let mut s = self.inner.sample_strata(x, eps, cap);
        for sample in &mut s {
            for (gv, pv) in sample.gradient.iter_mut().zip(&sample.point) {
                *gv += 2.0 * self.lambda * pv;
            }
        }
        s
    }

    fn is_differentiable(&self, x: &[f64]) -> bool {
        self.inner.is_differentiable(x)
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.inner.lipschitz_bound().map(|l| l + 2.0 * self.lambda)
    }

    fn approx_factor(&self) -> f64 {
        self.inner.approx_factor()
    }
}

/// Anchors `(index, value)` of the noiseless circle filter; linear in between and
/// cyclic back to index 0.
pub const CIRCLE_ANCHORS: [(usize, f64); 6] = [(0, 0.0), (30, 1.0), (45, 0.05), (60, 0.35), (75, 0.1), (90, 0.8)];

/// Piecewise-linear filter on an `n`-cycle through the anchors, indices scaled
/// from a 120-vertex circle.
pub fn circle_base_filter(n: usize) -> Vec<f64> {
    let mut knots: Vec<(f64, f64)> = CIRCLE_ANCHORS
        .iter()
        .map(|&(i, v)| (i as f64 * n as f64 / 120.0, v))
        .collect();
    knots.push((n as f64, CIRCLE_ANCHORS[0].1));
    (0..n)
        .map(|i| {
            let t = i as f64;
            let w = knots.windows(2).find(|w| t >= w[0].0 && t <= w[1].0).unwrap();
            let s = (t - w[0].0) / (w[1].0 - w[0].0);
            w[0].1 + s * (w[1].1 - w[0].1)
        })
        .collect()
}

/// Base filter plus seeded uniform noise in `[0, amplitude]`.
pub fn noisy_circle_filter(n: usize, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    circle_base_filter(n)
        .into_iter()
        .map(|v| v + amplitude * rng.random::<f64>())
        .collect()
}

/// Starting filter for an `n`-cycle template: alternating low and high values
/// with a little seeded jitter, so the template starts with many bars.
pub fn alternating_template_filter(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| 0.3 + 0.4 * (i % 2) as f64 + 0.05 * rng.random::<f64>())
        .collect()
}

/// A graph embedded in the plane.
#[derive(Debug, Clone)]
pub struct EmbeddedGraph {
    pub complex: SimplicialComplex,
    pub coords: Vec<[f64; 2]>,
}

impl EmbeddedGraph {
    /// Projection of the embedding on the unit vector at `angle`.
    pub fn projection(&self, angle: f64) -> Vec<f64> {
        let (s, c) = angle.sin_cos();
        self.coords.iter().map(|p| c * p[0] + s * p[1]).collect()
    }
}

/// Projection angles used by the Fréchet experiment.
pub const FRECHET_DIRECTIONS: [f64; 4] = [0.0, PI / 2.0, PI / 4.0, -PI / 4.0];

/// A loop with spurs, and bootstrap-like copies of it.
#[derive(Debug, Clone)]
pub struct BootstrapFamily {
    pub base: EmbeddedGraph,
    pub copies: Vec<EmbeddedGraph>,
}

struct Spur {
    anchor: usize,
    points: Vec<[f64; 2]>,
}

fn build_graph(loop_pts: &[[f64; 2]], spurs: &[&Spur]) -> EmbeddedGraph {
    let n_loop = loop_pts.len();
    let mut coords = loop_pts.to_vec();
    let mut edges: Vec<(usize, usize)> = (0..n_loop).map(|i| (i, (i + 1) % n_loop)).collect();
    for spur in spurs {
        let mut prev = spur.anchor;
        for p in &spur.points {
            coords.push(*p);
            edges.push((prev, coords.len() - 1));
            prev = coords.len() - 1;
        }
    }
    EmbeddedGraph {
        complex: SimplicialComplex::from_edges(coords.len(), &edges).expect("valid graph"),
        coords,
    }
}

/// Synthetic stand-in for a Mapper graph and its bootstrap iterates: a noisy loop
/// with short spurs. Each copy jitters the loop and keeps a spur with
/// probability `keep`.
pub fn synthetic_bootstrap(n_loop: usize, n_spurs: usize, copies: usize, keep: f64, seed: u64) -> BootstrapFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.04).unwrap();
    let loop_pts: Vec<[f64; 2]> = (0..n_loop)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n_loop as f64;
            let r = 1.0 + jitter.sample(&mut rng);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let spurs: Vec<Spur> = (0..n_spurs)
        .map(|_| {
            let anchor = rng.random_range(0..n_loop);
            let base = loop_pts[anchor];
            let outward = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let a = base[1].atan2(base[0]) + 0.3 * (rng.random::<f64>() - 0.5);
            let points = (1..=2)
                .map(|s| {
                    let r = 1.0 + outward * 0.18 * s as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            Spur { anchor, points }
        })
        .collect();
    let base = build_graph(&loop_pts, &spurs.iter().collect::<Vec<_>>());
    let copies = (0..copies)
        .map(|_| {
            let pts: Vec<[f64; 2]> = loop_pts
                .iter()
                .map(|p| [p[0] + jitter.sample(&mut rng), p[1] + jitter.sample(&mut rng)])
                .collect();
            let kept: Vec<&Spur> = spurs.iter().filter(|_| rng.random::<f64>() < keep).collect();
            build_graph(&pts, &kept)
        })
        .collect();
    BootstrapFamily { base, copies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{DiagramDistance, TotalPersistence};

    #[test]
    fn crease_gradients_oppose_across_the_line() {
        let x = [0.05, 0.0];
        let s = CreaseToy.sample_strata(&x, 0.1, None);
        assert_eq!(s.len(), 1);
        let g = CreaseToy.gradient(&x);
        assert!(g[0] > 0.0 && s[0].gradient[0] < 0.0);
        assert!(CreaseToy.sample_strata(&[0.5, 0.0], 0.1, None).is_empty());
    }

    #[test]
    fn persistence_objective_requires_extended_mode() {
        let r = PersistenceObjective::new(SimplicialComplex::path(3), PersistenceSpec::ordinary(0), TotalPersistence);
        assert!(matches!(r, Err(ObjectiveError::InfiniteInterval)));
    }

    #[test]
    fn total_persistence_objective_matches_metrics() {
        let obj = PersistenceObjective::new(SimplicialComplex::path(5), PersistenceSpec::extended(0), TotalPersistence)
            .unwrap();
        let x = [0.4, 0.72, 0.0, 0.3, 0.14];
        assert!((obj.value(&x) - 1.2).abs() < 1e-12);
        assert_eq!(obj.gradient(&x), vec![-1.0, 2.0, -1.0, 1.0, -1.0]);
        assert!(obj.is_differentiable(&x));
        assert!(!obj.is_differentiable(&[0.1, 0.2, 0.1, 0.3, 0.4]));
        assert_eq!(obj.cache().misses(), 1);
    }

    #[test]
    fn sampled_strata_carry_their_own_gradients() {
        let obj = PersistenceObjective::new(SimplicialComplex::path(3), PersistenceSpec::extended(0), TotalPersistence)
            .unwrap();
        // Vertex 1 tops vertex 2 by a tiny margin, creating a short bar.
        let x = [0.0, 0.501, 0.5];
        let s = obj.sample_strata(&x, 0.01, None);
        assert_eq!(s.len(), 1);
        assert_eq!(obj.gradient(&x), vec![-1.0, 2.0, -1.0]);
        assert_eq!(s[0].gradient, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn regularizer_adds_quadratic() {
        let r = Regularized::new(CreaseToy, 0.5);
        assert!((r.value(&[0.0, 1.0]) - 1.5).abs() < 1e-15);
        assert_eq!(r.gradient(&[1.0, 1.0])[1], 3.0);
    }

    #[test]
    fn circle_filter_hits_anchors() {
        let f = circle_base_filter(120);
        for (i, v) in CIRCLE_ANCHORS {
            assert!((f[i] - v).abs() < 1e-12);
        }
        let noisy = noisy_circle_filter(120, 0.1, 3);
        assert!(noisy.iter().zip(&f).all(|(a, b)| a >= b && a - b <= 0.1));
    }

    #[test]
    fn registration_objective_is_zero_on_own_barcode() {
        let k = SimplicialComplex::cycle(8);
        let x = alternating_template_filter(8, 1);
        let spec = PersistenceSpec::extended(0);
        let target = spec.barcode(&k, &crate::complex::FilterVector::new(x.clone()).unwrap()).unwrap();
        let obj = PersistenceObjective::new(k, spec, DiagramDistance::new(target, 2.0).unwrap()).unwrap();
        assert_eq!(obj.value(&x), 0.0);
    }

    #[test]
    fn bootstrap_family_shapes() {
        let fam = synthetic_bootstrap(16, 4, 10, 0.3, 7);
        assert_eq!(fam.base.coords.len(), 16 + 8);
        assert_eq!(fam.copies.len(), 10);
        assert!(fam.copies.iter().all(|c| c.coords.len() >= 16 && c.complex.dimension() == 1));
        assert_eq!(fam.base.projection(0.0)[0], fam.base.coords[0][0]);
    }
}
