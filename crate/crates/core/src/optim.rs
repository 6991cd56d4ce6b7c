//! Stratified gradient sampling and baselines.
//!
//! The optimizer only talks to a [`StratifiedObjective`]: values, gradients on the
//! differentiability set, and an oracle returning one point with its gradient in
//! each nearby stratum. Descent directions are min-norm points of the convex hull
//! of the gradients collected around the iterate.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point from a nearby stratum with the gradient of that stratum's smooth piece.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGradient {
    pub point: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Distance from the query; used to restrict the sample to smaller radii.
    pub distance: f64,
}

pub trait StratifiedObjective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Only meaningful where [`is_differentiable`](Self::is_differentiable) holds.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Points with gradients from strata near `x`, excluding the stratum of `x`.
    /// Every point lies within `approx_factor() * eps` of `x`.
    fn sample_strata(&self, x: &[f64], eps: f64, cap: Option<usize>) -> Vec<SampledGradient>;
    fn is_differentiable(&self, x: &[f64]) -> bool;
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
    fn approx_factor(&self) -> f64 {
        1.0
    }
}

impl<T: StratifiedObjective + ?Sized> StratifiedObjective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn sample_strata(&self, x: &[f64], eps: f64, cap: Option<usize>) -> Vec<SampledGradient> {
        (**self).sample_strata(x, eps, cap)
    }
    fn is_differentiable(&self, x: &[f64]) -> bool {
        (**self).is_differentiable(x)
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        (**self).lipschitz_bound()
    }
    fn approx_factor(&self) -> f64 {
        (**self).approx_factor()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("NotDifferentiable: objective is not differentiable at the iterate")]
    NotDifferentiable,
    #[error("MaxInnerIterations: update step exceeded {0} inner iterations")]
    MaxInnerIterations(usize),
    #[error("MaxRounds: no differentiable descending point after {0} rounds")]
    MaxRounds(usize),
    #[error("MissingLipschitzBound: the simple update step needs a Lipschitz bound")]
    MissingLipschitzBound,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Maintains the controlling constant `C_k`.
    #[default]
    Full,
    /// Uses the objective's Lipschitz bound instead of `C_k`.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgsConfig {
    pub eps: f64,
    pub eta: f64,
    pub c0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub cap: Option<usize>,
    pub seed: u64,
    pub variant: Variant,
    pub max_inner_iters: usize,
    pub max_rounds: usize,
    pub mnp_tol: f64,
    /// Record wall-clock milliseconds in the trace (otherwise 0).
    pub timing: bool,
}

impl Default for SgsConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            eta: 0.01,
            c0: 1.0,
            beta: 0.5,
            gamma: 0.5,
            max_iters: 1000,
            cap: None,
            seed: 0,
            variant: Variant::Full,
            max_inner_iters: 1_000_000,
            max_rounds: 100,
            mnp_tol: 1e-10,
            timing: false,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), OptimError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(OptimError::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl SgsConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        check_unit("beta", self.beta)?;
        check_unit("gamma", self.gamma)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.cap == Some(0) {
            return Err(OptimError::InvalidConfig("cap must be positive".into()));
        }
        Ok(())
    }
}

/// Generators of an approximate Goldstein subgradient: `∇f(x)` first.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientSet {
    gradients: Vec<Vec<f64>>,
}

impl SubgradientSet {
    pub fn new(first: Vec<f64>) -> Self {
        Self {
            gradients: vec![first],
        }
    }

    /// Returns `None` when empty or ragged.
    pub fn from_vecs(gradients: Vec<Vec<f64>>) -> Option<Self> {
        let d = gradients.first()?.len();
        gradients.iter().all(|g| g.len() == d).then_some(Self { gradients })
    }

    pub fn push(&mut self, g: Vec<f64>) {
        assert_eq!(g.len(), self.dim(), "gradient length mismatch");
        self.gradients.push(g);
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gradients[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    pub point: Vec<f64>,
    /// Convex weights over the generators, in input order.
    pub weights: Vec<f64>,
    pub major_iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizer of `sum w_i p_i` over the affine hull of the corral.
fn affine_minimizer(points: &[&[f64]]) -> Vec<f64> {
    let k = points.len();
    let d = points[0].len();
    let p = DMatrix::from_fn(d, k, |r, c| points[c][r]);
    let gram = p.transpose() * &p;
    // [G 1; 1' 0] [w; mu] = [0; 1]
    let mut a = DMatrix::zeros(k + 1, k + 1);
    a.view_mut((0, 0), (k, k)).copy_from(&gram);
    for i in 0..k {
        a[(i, k)] = 1.0;
        a[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            a.svd(true, true)
                .solve(&rhs, 1e-14)
                .expect("svd solve with both factors")
        });
    sol.rows(0, k).iter().copied().collect()
}

/// Min-norm point of the convex hull of `set` (Wolfe's algorithm). `tol` bounds the
/// optimality gap `‖x‖² - min_i <x, p_i>` relative to `max(1, max_i ‖p_i‖²)`.
pub fn min_norm_point(set: &SubgradientSet, tol: f64) -> MinNormPoint {
    let gens = set.gradients();
    let d = set.dim();
    let scale = gens.iter().map(|g| dot(g, g)).fold(1.0, f64::max);
    let combine = |corral: &[usize], lambda: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (&i, &l) in corral.iter().zip(lambda) {
            x.iter_mut().zip(&gens[i]).for_each(|(xv, gv)| *xv += l * gv);
        }
        x
    };

    let start = (0..gens.len())
        .min_by(|&a, &b| dot(&gens[a], &gens[a]).total_cmp(&dot(&gens[b], &gens[b])))
        .unwrap();
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = gens[start].clone();
    let mut major = 0;
    let max_major = 50 * (gens.len() + d) + 100;

    while major < max_major {
        major += 1;
        let xx = dot(&x, &x);
        let (j, xp) = (0..gens.len())
            .map(|i| (i, dot(&x, &gens[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xp <= tol * scale || corral.contains(&j) {
            break;
        }
        corral.push(j);
        lambda.push(0.0);
        loop {
            let pts: Vec<&[f64]> = corral.iter().map(|&i| gens[i].as_slice()).collect();
            let w = affine_minimizer(&pts);
            if w.iter().all(|&v| v > 1e-14) {
                lambda = w;
                break;
            }
            let mut theta = 1.0f64;
            for (l, wv) in lambda.iter().zip(&w) {
                if *wv <= 1e-14 {
                    let denom = l - wv;
                    if denom > 0.0 {
                        theta = theta.min(l / denom);
                    }
                }
            }
            for (l, wv) in lambda.iter_mut().zip(&w) {
                *l = (1.0 - theta) * *l + theta * wv;
            }
            // Drop the blocking generators (at least one).
            let min_idx = (0..lambda.len())
                .min_by(|&a, &b| lambda[a].total_cmp(&lambda[b]))
                .unwrap();
            let keep: Vec<bool> = (0..lambda.len())
                .map(|i| i != min_idx && lambda[i] > 1e-14)
                .collect();
            corral = corral.iter().zip(&keep).filter(|(_, &k)| k).map(|(&c, _)| c).collect();
            lambda = lambda.iter().zip(&keep).filter(|(_, &k)| k).map(|(&l, _)| l).collect();
            let s: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= s);
            if corral.len() == 1 {
                lambda = vec![1.0];
                break;
            }
        }
        x = combine(&corral, &lambda);
    }

    let mut weights = vec![0.0; gens.len()];
    for (&i, &l) in corral.iter().zip(&lambda) {
        weights[i] += l;
    }
    MinNormPoint {
        point: x,
        weights,
        major_iterations: major,
    }
}

fn dedup(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Min-norm element of `{∇f(x)}` together with the gradients of the sampled
/// strata. Returns the direction and the number of strata used.
pub fn approx_gradient<O: StratifiedObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    eps: f64,
    cap: Option<usize>,
    tol: f64,
) -> Result<(Vec<f64>, usize), OptimError> {
    if !obj.is_differentiable(x) {
        return Err(OptimError::NotDifferentiable);
    }
    let samples = obj.sample_strata(x, eps, cap);
    let n = samples.len();
    let g = direction(obj.gradient(x), samples.iter(), tol);
    Ok((g, n))
}

fn direction<'a>(
    first: Vec<f64>,
    samples: impl Iterator<Item = &'a SampledGradient>,
    tol: f64,
) -> Vec<f64> {
    let mut gens = vec![first];
    gens.extend(samples.map(|s| s.gradient.clone()));
    let gens = dedup(gens);
    if gens.len() == 1 {
        return gens.into_iter().next().unwrap();
    }
    min_norm_point(&SubgradientSet::from_vecs(gens).unwrap(), tol).point
}

/// Result of one update step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: f64,
    pub g: Vec<f64>,
    pub g_norm: f64,
    pub eps_k: f64,
    pub c_next: f64,
    /// Sampled strata within `eps_k`.
    pub strata: usize,
    /// Number of direction evaluations.
    pub oracle_evaluations: usize,
    pub f_x: f64,
}

/// Parameters shared by the update steps.
#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub eps: f64,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub cap: Option<usize>,
    pub max_inner_iters: usize,
    pub mnp_tol: f64,
}

impl From<&SgsConfig> for StepParams {
    fn from(c: &SgsConfig) -> Self {
        Self {
            eps: c.eps,
            eta: c.eta,
            beta: c.beta,
            gamma: c.gamma,
            cap: c.cap,
            max_inner_iters: c.max_inner_iters,
            mnp_tol: c.mnp_tol,
        }
    }
}

/// Samples the strata once at the initial radius; smaller radii reuse the subset
/// of samples that are close enough.
struct RadiusSampler {
    grad_x: Vec<f64>,
    samples: Vec<SampledGradient>,
    tol: f64,
    evaluations: usize,
}

impl RadiusSampler {
    fn new<O: StratifiedObjective + ?Sized>(obj: &O, x: &[f64], p: &StepParams) -> Self {
        Self {
            grad_x: obj.gradient(x),
            samples: obj.sample_strata(x, p.eps, p.cap),
            tol: p.mnp_tol,
            evaluations: 0,
        }
    }

    fn direction(&mut self, eps_k: f64) -> (Vec<f64>, usize) {
        self.evaluations += 1;
        let active: Vec<&SampledGradient> =
            self.samples.iter().filter(|s| s.distance <= eps_k).collect();
        let g = direction(self.grad_x.clone(), active.iter().copied(), self.tol);
        (g, active.len())
    }
}

fn shifted(x: &[f64], t: f64, g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(xv, gv)| xv - t * gv).collect()
}

/// One update with the controlling constant: shrink `C` while descent fails, then
/// shrink the radius until both the descent test and `eps_k < C ‖g‖` hold.
pub fn update_step<O: StratifiedObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    c_k: f64,
    p: &StepParams,
) -> Result<StepOutcome, OptimError> {
    if !obj.is_differentiable(x) {
        return Err(OptimError::NotDifferentiable);
    }
    let a = obj.approx_factor();
    let f_x = obj.value(x);
    let mut sampler = RadiusSampler::new(obj, x, p);
    let mut eps_k = p.eps;
    let mut c = c_k;
    let mut inner = 0;
    loop {
        let (g, strata) = sampler.direction(eps_k);
        let g_norm = norm(&g);
        let outcome = |t: f64, g: Vec<f64>, c: f64, eps_k: f64, ev: usize| StepOutcome {
            t,
            g,
            g_norm,
            eps_k,
            c_next: c,
            strata,
            oracle_evaluations: ev,
            f_x,
        };
        if g_norm <= p.eta {
            return Ok(outcome(0.0, g, c, eps_k, sampler.evaluations));
        }
        let t = eps_k / (a * g_norm);
        let descent = obj.value(&shifted(x, t, &g)) < f_x - p.beta * t * g_norm * g_norm;
        if descent && eps_k < c * g_norm {
            return Ok(outcome(t, g, c, eps_k, sampler.evaluations));
        }
        while !descent && eps_k <= c * g_norm {
            c *= p.gamma;
            inner += 1;
            if inner > p.max_inner_iters {
                return Err(OptimError::MaxInnerIterations(p.max_inner_iters));
            }
        }
        eps_k *= p.gamma;
        inner += 1;
        if inner > p.max_inner_iters {
            return Err(OptimError::MaxInnerIterations(p.max_inner_iters));
        }
    }
}

/// One update with a known Lipschitz bound `L`: shrink the radius until
/// `eps_k <= (1 - β) ‖g‖ / (2L)`.
pub fn simple_update_step<O: StratifiedObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    p: &StepParams,
) -> Result<StepOutcome, OptimError> {
    if !obj.is_differentiable(x) {
        return Err(OptimError::NotDifferentiable);
    }
    let l = obj.lipschitz_bound().ok_or(OptimError::MissingLipschitzBound)?;
    let a = obj.approx_factor();
    let f_x = obj.value(x);
    let mut sampler = RadiusSampler::new(obj, x, p);
    let mut eps_k = p.eps;
    let mut inner = 0;
    loop {
        let (g, strata) = sampler.direction(eps_k);
        let g_norm = norm(&g);
        let done = g_norm <= p.eta;
        if done || eps_k <= (1.0 - p.beta) / (2.0 * l) * g_norm {
            return Ok(StepOutcome {
                t: if done { 0.0 } else { eps_k / (a * g_norm) },
                g,
                g_norm,
                eps_k,
                c_next: f64::NAN,
                strata,
                oracle_evaluations: sampler.evaluations,
                f_x,
            });
        }
        eps_k *= p.gamma;
        inner += 1;
        if inner > p.max_inner_iters {
            return Err(OptimError::MaxInnerIterations(p.max_inner_iters));
        }
    }
}

/// Uniform sample in the Euclidean ball `B(center, r)`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], r: f64) -> Vec<f64> {
    let n = center.len();
    let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm(&dir);
    if len == 0.0 {
        return center.to_vec();
    }
    let radius = r * rng.random::<f64>().powf(1.0 / n as f64);
    dir.iter_mut().for_each(|d| *d *= radius / len);
    center.iter().zip(&dir).map(|(c, d)| c + d).collect()
}

/// Replaces the candidate by samples around `x_k - t g` with halving radius until
/// it is differentiable and strictly below `f(x_k) - β t ‖g‖²`.
#[allow(clippy::too_many_arguments)]
pub fn make_differentiable<O: StratifiedObjective + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    candidate: Vec<f64>,
    x_k: &[f64],
    f_k: f64,
    t: f64,
    g: &[f64],
    beta: f64,
    max_rounds: usize,
    rng: &mut R,
) -> Result<Vec<f64>, OptimError> {
    let g_norm = norm(g);
    let center = shifted(x_k, t, g);
    let threshold = f_k - beta * t * g_norm * g_norm;
    let mut r = t * g_norm;
    let mut x = candidate;
    let mut rounds = 0;
    while !obj.is_differentiable(&x) || obj.value(&x) >= threshold {
        if rounds == max_rounds {
            return Err(OptimError::MaxRounds(max_rounds));
        }
        x = sample_ball(rng, &center, r);
        r /= 2.0;
        rounds += 1;
    }
    Ok(x)
}

/// Moves a starting point off the non-differentiable set.
fn perturb_start<O: StratifiedObjective + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    x0: &[f64],
    radius: f64,
    max_rounds: usize,
    rng: &mut R,
) -> Result<Vec<f64>, OptimError> {
    let mut r = radius;
    for _ in 0..max_rounds {
        let x = sample_ball(rng, x0, r);
        if obj.is_differentiable(&x) {
            return Ok(x);
        }
        r /= 2.0;
    }
    Err(OptimError::MaxRounds(max_rounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientBelowEta,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub g_norm: f64,
    pub eps_k: f64,
    pub t_k: f64,
    pub c_k: f64,
    pub strata: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_x: Vec<f64>,
    pub final_f: f64,
}

impl OptimizerTrace {
    /// Number of steps actually taken.
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.t_k > 0.0).count()
    }

    /// Whether every step with `t > 0` decreased `f` by at least `β t ‖g‖²`,
    /// strictly.
    pub fn satisfies_descent(&self, beta: f64) -> bool {
        let values: Vec<f64> = self
            .records
            .iter()
            .skip(1)
            .map(|r| r.f)
            .chain(std::iter::once(self.final_f))
            .collect();
        self.records.iter().zip(values).all(|(r, next)| {
            r.t_k == 0.0 || next < r.f - beta * r.t_k * r.g_norm * r.g_norm
        })
    }
}

fn elapsed_ms(start: &Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Runs stratified gradient sampling from `x0`.
pub fn sgs_run<O: StratifiedObjective + ?Sized>(
    obj: &O,
    x0: &[f64],
    config: &SgsConfig,
) -> Result<OptimizerTrace, OptimError> {
    config.validate()?;
    if x0.len() != obj.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if config.variant == Variant::Simple && obj.lipschitz_bound().is_none() {
        return Err(OptimError::MissingLipschitzBound);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = StepParams::from(config);
    let mut x = if obj.is_differentiable(x0) {
        x0.to_vec()
    } else {
        perturb_start(obj, x0, config.eps, config.max_rounds, &mut rng)?
    };
    let mut c = config.c0;
    let mut records = Vec::new();
    for k in 0..config.max_iters {
        let out = match config.variant {
            Variant::Full => update_step(obj, &x, c, &params)?,
            Variant::Simple => simple_update_step(obj, &x, &params)?,
        };
        records.push(IterationRecord {
            k,
            x: x.clone(),
            f: out.f_x,
            g_norm: out.g_norm,
            eps_k: out.eps_k,
            t_k: out.t,
            c_k: out.c_next,
            strata: out.strata,
            wall_ms: elapsed_ms(&start, config.timing),
        });
        if out.t == 0.0 {
            let final_f = out.f_x;
            return Ok(OptimizerTrace {
                records,
                termination: Termination::GradientBelowEta,
                final_x: x,
                final_f,
            });
        }
        let candidate = shifted(&x, out.t, &out.g);
        x = make_differentiable(
            obj,
            candidate,
            &x,
            out.f_x,
            out.t,
            &out.g,
            config.beta,
            config.max_rounds,
            &mut rng,
        )?;
        c = out.c_next;
    }
    let final_f = obj.value(&x);
    Ok(OptimizerTrace {
        records,
        termination: Termination::MaxIters,
        final_x: x,
        final_f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMode {
    /// Constant step `eps` along the gradient.
    #[serde(rename = "GD")]
    Gd,
    /// Step `eps / (1 + k)` along the gradient.
    #[serde(rename = "GDwD")]
    GdWithDecay,
    /// Random samples in `B(x_k, eps)`, min-norm direction, backtracking.
    #[serde(rename = "GS")]
    GradientSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub eps: f64,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Samples per iteration for gradient sampling; defaults to `dim + 1`.
    pub samples: Option<usize>,
    pub max_backtracks: usize,
    pub max_rounds: usize,
    pub mnp_tol: f64,
    pub timing: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            eta: 0.01,
            beta: 0.5,
            gamma: 0.5,
            max_iters: 1000,
            seed: 0,
            samples: None,
            max_backtracks: 60,
            max_rounds: 100,
            mnp_tol: 1e-10,
            timing: false,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        check_unit("beta", self.beta)?;
        check_unit("gamma", self.gamma)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Gradient descent, gradient descent with decay, or classical gradient sampling.
pub fn baseline_run<O: StratifiedObjective + ?Sized>(
    obj: &O,
    x0: &[f64],
    mode: BaselineMode,
    config: &BaselineConfig,
) -> Result<OptimizerTrace, OptimError> {
    config.validate()?;
    if x0.len() != obj.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = if obj.is_differentiable(x0) {
        x0.to_vec()
    } else {
        perturb_start(obj, x0, config.eps, config.max_rounds, &mut rng)?
    };
    let m = config.samples.unwrap_or(obj.dim() + 1);
    let mut records = Vec::new();
    for k in 0..config.max_iters {
        let f = obj.value(&x);
        let grad = obj.gradient(&x);
        let (g, strata) = match mode {
            BaselineMode::Gd | BaselineMode::GdWithDecay => (grad, 0),
            BaselineMode::GradientSampling => {
                let mut gens = vec![grad];
                for _ in 0..m {
                    let mut s = sample_ball(&mut rng, &x, config.eps);
                    let mut tries = 0;
                    while !obj.is_differentiable(&s) && tries < config.max_rounds {
                        s = sample_ball(&mut rng, &x, config.eps);
                        tries += 1;
                    }
                    gens.push(obj.gradient(&s));
                }
                let gens = dedup(gens);
                let g = if gens.len() == 1 {
                    gens.into_iter().next().unwrap()
                } else {
                    min_norm_point(&SubgradientSet::from_vecs(gens).unwrap(), config.mnp_tol).point
                };
                (g, m)
            }
        };
        let g_norm = norm(&g);
        let mut record = IterationRecord {
            k,
            x: x.clone(),
            f,
            g_norm,
            eps_k: config.eps,
            t_k: 0.0,
            c_k: f64::NAN,
            strata,
            wall_ms: 0.0,
        };
        if g_norm <= config.eta {
            record.wall_ms = elapsed_ms(&start, config.timing);
            records.push(record);
            return Ok(OptimizerTrace {
                records,
                termination: Termination::GradientBelowEta,
                final_x: x,
                final_f: f,
            });
        }
        match mode {
            BaselineMode::Gd | BaselineMode::GdWithDecay => {
                let step = if mode == BaselineMode::Gd {
                    config.eps
                } else {
                    config.eps / (1.0 + k as f64)
                };
                record.eps_k = step;
                record.t_k = step;
                x = shifted(&x, step, &g);
            }
            BaselineMode::GradientSampling => {
                let mut t = config.eps;
                let mut accepted = None;
                for _ in 0..config.max_backtracks {
                    if obj.value(&shifted(&x, t, &g)) < f - config.beta * t * g_norm * g_norm {
                        accepted = Some(t);
                        break;
                    }
                    t *= config.gamma;
                }
                if let Some(t) = accepted {
                    record.eps_k = t;
                    record.t_k = t;
                    let candidate = shifted(&x, t, &g);
                    x = make_differentiable(
                        obj,
                        candidate,
                        &x,
                        f,
                        t,
                        &g,
                        config.beta,
                        config.max_rounds,
                        &mut rng,
                    )?;
                }
            }
        }
        record.wall_ms = elapsed_ms(&start, config.timing);
        records.push(record);
    }
    let final_f = obj.value(&x);
    Ok(OptimizerTrace {
        records,
        termination: Termination::MaxIters,
        final_x: x,
        final_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn set(v: &[&[f64]]) -> SubgradientSet {
        SubgradientSet::from_vecs(v.iter().map(|g| g.to_vec()).collect()).unwrap()
    }

    /// f(z) = z2² (with z1 ignored); smooth everywhere.
    struct Quadratic;

    impl StratifiedObjective for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[1] * x[1]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![0.0, 2.0 * x[1]]
        }
        fn sample_strata(&self, _: &[f64], _: f64, _: Option<usize>) -> Vec<SampledGradient> {
            Vec::new()
        }
        fn is_differentiable(&self, _: &[f64]) -> bool {
            true
        }
        fn lipschitz_bound(&self) -> Option<f64> {
            Some(2.0)
        }
    }

    /// |z1| + |z2|, strata are the open quadrants.
    struct L1;

    impl StratifiedObjective for L1 {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0].abs() + x[1].abs()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().map(|v| v.signum()).collect()
        }
        fn sample_strata(&self, x: &[f64], eps: f64, _: Option<usize>) -> Vec<SampledGradient> {
            let mut out = Vec::new();
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let p = [
                    if x[0].signum() == sx { x[0] } else { 0.0 },
                    if x[1].signum() == sy { x[1] } else { 0.0 },
                ];
                let d = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
                if d > 0.0 && d <= eps {
                    out.push(SampledGradient {
                        point: p.to_vec(),
                        gradient: vec![sx, sy],
                        distance: d,
                    });
                }
            }
            out
        }
        fn is_differentiable(&self, x: &[f64]) -> bool {
            x.iter().all(|&v| v != 0.0)
        }
    }

    #[test]
    fn min_norm_examples() {
        assert_eq!(min_norm_point(&set(&[&[3.0, -1.0]]), 1e-10).point, vec![3.0, -1.0]);
        let p = min_norm_point(&set(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-10);
        assert_relative_eq!(p.point[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.point[1], 0.5, epsilon = 1e-12);
        let z = min_norm_point(&set(&[&[1.0, 0.0], &[-1.0, 0.0]]), 1e-10);
        assert!(norm(&z.point) <= 1e-12);
        let tri = min_norm_point(&set(&[&[1.0, 1.0], &[-1.0, 1.0], &[0.0, -1.0]]), 1e-10);
        assert!(norm(&tri.point) <= 1e-12);
    }

    #[test]
    fn min_norm_skips_interior_generators() {
        let p = min_norm_point(&set(&[&[2.0, 1.0], &[2.0, -1.0], &[3.0, 0.0]]), 1e-10);
        assert_relative_eq!(p.point[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.point[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(p.weights[2], 0.0);
    }

    #[test]
    fn approx_gradient_without_strata_is_gradient() {
        let (g, n) = approx_gradient(&Quadratic, &[0.3, 0.5], 0.1, None, 1e-10).unwrap();
        assert_eq!((g, n), (vec![0.0, 1.0], 0));
        assert_eq!(
            approx_gradient(&L1, &[0.0, 1.0], 0.1, None, 1e-10).unwrap_err(),
            OptimError::NotDifferentiable
        );
    }

    #[test]
    fn approx_gradient_at_kink_vanishes() {
        let (g, n) = approx_gradient(&L1, &[1e-3, -1e-3], 0.1, None, 1e-10).unwrap();
        assert_eq!(n, 3);
        assert!(norm(&g) < 1e-12);
    }

    #[test]
    fn smooth_update_accepts_first_candidate() {
        let p = StepParams::from(&SgsConfig {
            eps: 0.1,
            c0: 10.0,
            ..SgsConfig::default()
        });
        let out = update_step(&Quadratic, &[0.0, 1.0], 10.0, &p).unwrap();
        assert_eq!(out.eps_k, 0.1);
        assert_eq!(out.oracle_evaluations, 1);
        assert_relative_eq!(out.t, 0.1 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn stationary_point_returns_zero_step() {
        let p = StepParams::from(&SgsConfig::default());
        let out = update_step(&L1, &[1e-4, 1e-4], 1.0, &p).unwrap();
        assert_eq!(out.t, 0.0);
        assert!(out.g_norm <= p.eta);
    }

    #[test]
    fn simple_update_meets_radius_bound() {
        let p = StepParams::from(&SgsConfig {
            eps: 1.0,
            ..SgsConfig::default()
        });
        let out = simple_update_step(&Quadratic, &[0.0, 1.0], &p).unwrap();
        // (1 - 0.5) * 2 / 4 = 0.25, reached after two halvings.
        assert_eq!(out.eps_k, 0.25);
        assert_eq!(out.oracle_evaluations, 3);
        assert!(out.eps_k <= (1.0 - p.beta) / (2.0 * 2.0) * out.g_norm);
    }

    #[test]
    fn make_differentiable_leaves_good_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [0.5, 0.5];
        let g = L1.gradient(&x);
        let cand = shifted(&x, 0.1, &g);
        let out = make_differentiable(&L1, cand.clone(), &x, 1.0, 0.1, &g, 0.5, 100, &mut rng).unwrap();
        assert_eq!(out, cand);
        let x = [0.5, 0.1];
        let cand = shifted(&x, 0.1, &g);
        assert!(!L1.is_differentiable(&cand));
        let out = make_differentiable(&L1, cand, &x, 0.6, 0.1, &g, 0.5, 100, &mut rng).unwrap();
        assert!(L1.is_differentiable(&out));
        assert!(L1.value(&out) < 0.6 - 0.5 * 0.1 * 2.0);
    }

    #[test]
    fn sgs_on_l1_reaches_stationarity() {
        let cfg = SgsConfig {
            eps: 0.05,
            eta: 1e-3,
            c0: 10.0,
            max_iters: 500,
            ..SgsConfig::default()
        };
        let tr = sgs_run(&L1, &[0.7, -0.4], &cfg).unwrap();
        assert_eq!(tr.termination, Termination::GradientBelowEta);
        assert!(tr.satisfies_descent(cfg.beta));
        assert!(tr.final_x.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn zero_eta_hits_iteration_limit_with_monotone_values() {
        let cfg = SgsConfig {
            eps: 0.05,
            eta: 0.0,
            c0: 10.0,
            max_iters: 15,
            ..SgsConfig::default()
        };
        let tr = sgs_run(&L1, &[0.7, -0.4], &cfg).unwrap();
        assert_eq!(tr.termination, Termination::MaxIters);
        assert_eq!(tr.records.len(), 15);
        assert!(tr.records.windows(2).all(|w| w[1].f < w[0].f));
    }

    #[test]
    fn decay_schedule() {
        let cfg = BaselineConfig {
            eps: 0.1,
            eta: 0.0,
            max_iters: 5,
            ..BaselineConfig::default()
        };
        let tr = baseline_run(&Quadratic, &[0.0, 1.0], BaselineMode::GdWithDecay, &cfg).unwrap();
        for r in &tr.records {
            assert_eq!(r.t_k, 0.1 / (1.0 + r.k as f64));
        }
    }

    #[test]
    fn config_validation() {
        for bad in [
            SgsConfig { beta: 1.0, ..SgsConfig::default() },
            SgsConfig { gamma: 0.0, ..SgsConfig::default() },
            SgsConfig { eps: 0.0, ..SgsConfig::default() },
            SgsConfig { c0: -1.0, ..SgsConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(OptimError::InvalidConfig(_))));
        }
    }
}
