//! Diagram distances and barcode losses with gradients in filter space.
//!
//! `W_q` charges a matched pair the Euclidean distance between the two points and
//! an unmatched point its distance `(d - b) / sqrt(2)` to the diagonal. Points are
//! only matched within the same homology degree. Total persistence is the plain
//! sum of bar lengths, so on a single degree `W_1(D, ∅) = Pers(D) / sqrt(2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{FilterVector, SimplicialComplex};
use crate::persistence::{Barcode, Interval, PersistenceError, PersistenceSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("InfiniteInterval: interval {0} is essential; truncate or use extended persistence")]
    InfiniteInterval(usize),
    #[error("InvalidExponent: q must be finite and >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("MissingAttribution: interval {0} has no birth/death vertex")]
    MissingAttribution(usize),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
}

/// A partial matching between two diagrams; indices refer to interval positions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialMatching {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_left: Vec<usize>,
    pub unmatched_right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueAndGradient {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn check_q(q: f64) -> Result<(), MetricError> {
    if q.is_finite() && q >= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidExponent(q))
    }
}

fn check_finite(b: &Barcode) -> Result<(), MetricError> {
    match b.intervals().iter().position(|i| !i.death.is_finite() || !i.birth.is_finite()) {
        Some(i) => Err(MetricError::InfiniteInterval(i)),
        None => Ok(()),
    }
}

fn diagonal_distance(i: &Interval) -> f64 {
    (i.death - i.birth) / std::f64::consts::SQRT_2
}

fn point_distance(a: &Interval, b: &Interval) -> f64 {
    (a.birth - b.birth).hypot(a.death - b.death)
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method with
/// potentials). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is a virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Optimal `sum of q-th power costs` between two finite diagrams, and the matching
/// achieving it.
pub fn wq_cost(a: &Barcode, b: &Barcode, q: f64) -> Result<(f64, PartialMatching), MetricError> {
    check_q(q)?;
    check_finite(a)?;
    check_finite(b)?;
    let mut degrees: Vec<usize> = a
        .intervals()
        .iter()
        .chain(b.intervals())
        .map(|i| i.degree)
        .collect();
    degrees.sort_unstable();
    degrees.dedup();

    let mut total = 0.0;
    let mut matching = PartialMatching::default();
    for degree in degrees {
        let left: Vec<usize> = (0..a.len()).filter(|&i| a.intervals()[i].degree == degree).collect();
        let right: Vec<usize> = (0..b.len()).filter(|&j| b.intervals()[j].degree == degree).collect();
        let (n, m) = (left.len(), right.len());
        let size = n + m;
        let mut cost = vec![vec![0.0; size]; size];
        for (r, row) in cost.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = match (r < n, c < m) {
                    (true, true) => point_distance(&a.intervals()[left[r]], &b.intervals()[right[c]]).powf(q),
                    (true, false) => diagonal_distance(&a.intervals()[left[r]]).powf(q),
                    (false, true) => diagonal_distance(&b.intervals()[right[c]]).powf(q),
                    (false, false) => 0.0,
                };
            }
        }
        let assignment = hungarian(&cost);
        for (r, &c) in assignment.iter().enumerate() {
            total += cost[r][c];
            match (r < n, c < m) {
                (true, true) => matching.matched.push((left[r], right[c])),
                (true, false) => matching.unmatched_left.push(left[r]),
                (false, true) => matching.unmatched_right.push(right[c]),
                (false, false) => {}
            }
        }
    }
    matching.matched.sort_unstable();
    matching.unmatched_left.sort_unstable();
    matching.unmatched_right.sort_unstable();
    Ok((total, matching))
}

/// The q-th diagram distance.
pub fn wq_distance(a: &Barcode, b: &Barcode, q: f64) -> Result<(f64, PartialMatching), MetricError> {
    let (cost, matching) = wq_cost(a, b, q)?;
    Ok((cost.powf(1.0 / q), matching))
}

/// Cost of a given matching (sum of q-th powers).
pub fn matching_cost(a: &Barcode, b: &Barcode, matching: &PartialMatching, q: f64) -> f64 {
    let matched: f64 = matching
        .matched
        .iter()
        .map(|&(i, j)| point_distance(&a.intervals()[i], &b.intervals()[j]).powf(q))
        .sum();
    let left: f64 = matching
        .unmatched_left
        .iter()
        .map(|&i| diagonal_distance(&a.intervals()[i]).powf(q))
        .sum();
    let right: f64 = matching
        .unmatched_right
        .iter()
        .map(|&j| diagonal_distance(&b.intervals()[j]).powf(q))
        .sum();
    matched + left + right
}

/// `sum |d - b|` over all intervals.
pub fn total_persistence(b: &Barcode) -> Result<f64, MetricError> {
    check_finite(b)?;
    Ok(b.intervals().iter().map(|i| (i.death - i.birth).abs()).sum())
}

fn vertices(i: &Interval, id: usize) -> Result<(usize, usize), MetricError> {
    match (i.birth_vertex, i.death_vertex) {
        (Some(bv), Some(dv)) => Ok((bv, dv)),
        _ => Err(MetricError::MissingAttribution(id)),
    }
}

/// Gradient in filter space of `Pers = sum |d - b|`.
pub fn total_persistence_gradient(
    b: &Barcode,
    n_vertices: usize,
) -> Result<LossValueAndGradient, MetricError> {
    let value = total_persistence(b)?;
    let mut gradient = vec![0.0; n_vertices];
    for (id, i) in b.intervals().iter().enumerate() {
        let (bv, dv) = vertices(i, id)?;
        let s = (i.death - i.birth).signum();
        gradient[dv] += s;
        gradient[bv] -= s;
    }
    Ok(LossValueAndGradient { value, gradient })
}

/// Optimal `W_q^q` cost between `source` and `target` with its gradient in filter
/// space, routed through the source's attribution vertices.
pub fn wq_cost_gradient(
    source: &Barcode,
    target: &Barcode,
    q: f64,
    n_vertices: usize,
) -> Result<LossValueAndGradient, MetricError> {
    let (cost, matching) = wq_cost(source, target, q)?;
    let mut gradient = vec![0.0; n_vertices];
    for &(i, j) in &matching.matched {
        let (s, t) = (&source.intervals()[i], &target.intervals()[j]);
        let (bv, dv) = vertices(s, i)?;
        let (db, dd) = (s.birth - t.birth, s.death - t.death);
        let r = db.hypot(dd);
        if r > 0.0 {
            let scale = q * r.powf(q - 2.0);
            gradient[bv] += scale * db;
            gradient[dv] += scale * dd;
        }
    }
    for &i in &matching.unmatched_left {
        let s = &source.intervals()[i];
        let (bv, dv) = vertices(s, i)?;
        let l = diagonal_distance(s);
        let slope = q * l.abs().powf(q - 1.0) * l.signum() / std::f64::consts::SQRT_2;
        gradient[dv] += slope;
        gradient[bv] -= slope;
    }
    Ok(LossValueAndGradient {
        value: cost,
        gradient,
    })
}

/// `W_q(source, target)` with its gradient in filter space.
pub fn wq_distance_gradient(
    source: &Barcode,
    target: &Barcode,
    q: f64,
    n_vertices: usize,
) -> Result<LossValueAndGradient, MetricError> {
    let LossValueAndGradient { value: cost, mut gradient } =
        wq_cost_gradient(source, target, q, n_vertices)?;
    let value = cost.powf(1.0 / q);
    if cost > 0.0 {
        let outer = cost.powf(1.0 / q - 1.0) / q;
        gradient.iter_mut().for_each(|g| *g *= outer);
    } else {
        gradient.iter_mut().for_each(|g| *g = 0.0);
    }
    Ok(LossValueAndGradient { value, gradient })
}

/// `x -> W_q(PH(x, K'), target)`.
pub fn registration_loss(
    x: &FilterVector,
    template: &SimplicialComplex,
    target: &Barcode,
    q: f64,
    spec: &PersistenceSpec,
) -> Result<LossValueAndGradient, MetricError> {
    let source = spec.barcode(template, x)?;
    wq_distance_gradient(&source, target, q, template.n_vertices())
}

/// `x -> sum_i W_2(PH(x, K), target_i)^2`.
pub fn frechet_loss(
    x: &FilterVector,
    complex: &SimplicialComplex,
    targets: &[Barcode],
    spec: &PersistenceSpec,
) -> Result<LossValueAndGradient, MetricError> {
    let source = spec.barcode(complex, x)?;
    frechet_from_barcode(&source, targets, complex.n_vertices())
}

pub(crate) fn frechet_from_barcode(
    source: &Barcode,
    targets: &[Barcode],
    n_vertices: usize,
) -> Result<LossValueAndGradient, MetricError> {
    let parts: Vec<LossValueAndGradient> = targets
        .par_iter()
        .map(|t| wq_cost_gradient(source, t, 2.0, n_vertices))
        .collect::<Result<_, _>>()?;
    let mut gradient = vec![0.0; n_vertices];
    let mut value = 0.0;
    for p in parts {
        value += p.value;
        gradient.iter_mut().zip(&p.gradient).for_each(|(g, d)| *g += d);
    }
    Ok(LossValueAndGradient { value, gradient })
}

/// A real-valued function of a barcode, differentiable in the endpoints.
pub trait BarcodeLoss: Send + Sync {
    fn evaluate(&self, barcode: &Barcode, n_vertices: usize) -> Result<LossValueAndGradient, MetricError>;
}

/// Total persistence `sum |d - b|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalPersistence;

impl BarcodeLoss for TotalPersistence {
    fn evaluate(&self, barcode: &Barcode, n: usize) -> Result<LossValueAndGradient, MetricError> {
        total_persistence_gradient(barcode, n)
    }
}

/// `W_q` to a fixed target diagram.
#[derive(Debug, Clone)]
pub struct DiagramDistance {
    pub target: Barcode,
    pub q: f64,
}

impl DiagramDistance {
    pub fn new(target: Barcode, q: f64) -> Result<Self, MetricError> {
        check_q(q)?;
        check_finite(&target)?;
        Ok(Self { target, q })
    }
}

impl BarcodeLoss for DiagramDistance {
    fn evaluate(&self, barcode: &Barcode, n: usize) -> Result<LossValueAndGradient, MetricError> {
        wq_distance_gradient(barcode, &self.target, self.q, n)
    }
}

/// Sum of squared `W_2` distances to a family of diagrams.
#[derive(Debug, Clone)]
pub struct FrechetSum {
    pub targets: Vec<Barcode>,
}

impl FrechetSum {
    pub fn new(targets: Vec<Barcode>) -> Result<Self, MetricError> {
        targets.iter().try_for_each(check_finite)?;
        Ok(Self { targets })
    }
}

impl BarcodeLoss for FrechetSum {
    fn evaluate(&self, barcode: &Barcode, n: usize) -> Result<LossValueAndGradient, MetricError> {
        frechet_from_barcode(barcode, &self.targets, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::persistence_extended;
    use approx::assert_relative_eq;

    const X0: [f64; 5] = [0.4, 0.72, 0.0, 0.3, 0.14];

    #[test]
    fn identical_diagrams_are_at_distance_zero() {
        let d = Barcode::from_pairs(&[(0.0, 1.0), (0.2, 0.5), (0.3, 0.35)]);
        for q in [1.0, 2.0, 3.5] {
            let (w, m) = wq_distance(&d, &d, q).unwrap();
            assert_eq!(w, 0.0);
            assert_eq!(m.matched, vec![(0, 0), (1, 1), (2, 2)]);
        }
    }

    #[test]
    fn single_point_against_empty() {
        let d = Barcode::from_pairs(&[(0.0, 1.0)]);
        let (w, m) = wq_distance(&d, &Barcode::default(), 1.0).unwrap();
        assert_relative_eq!(w, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(m.unmatched_left, vec![0]);
    }

    #[test]
    fn matched_option_wins() {
        let a = Barcode::from_pairs(&[(0.0, 1.0)]);
        let b = Barcode::from_pairs(&[(0.1, 0.9)]);
        let (w, m) = wq_distance(&a, &b, 2.0).unwrap();
        // Unmatched alternative: sqrt(0.5 + 0.32) ≈ 0.906.
        assert_relative_eq!(w, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_eq!(m.matched, vec![(0, 0)]);
    }

    #[test]
    fn degrees_are_matched_separately() {
        let a = Barcode::new(vec![Interval::finite(0.0, 1.0, 0)]);
        let b = Barcode::new(vec![Interval::finite(0.0, 1.0, 1)]);
        let (w, m) = wq_distance(&a, &b, 1.0).unwrap();
        assert_relative_eq!(w, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert!(m.matched.is_empty());
    }

    #[test]
    fn errors() {
        let mut inf = Interval::finite(0.0, 1.0, 0);
        inf.death = f64::INFINITY;
        inf.kind = crate::persistence::IntervalKind::Essential;
        let d = Barcode::new(vec![inf]);
        assert_eq!(wq_distance(&d, &d, 1.0).unwrap_err(), MetricError::InfiniteInterval(0));
        assert_eq!(total_persistence(&d).unwrap_err(), MetricError::InfiniteInterval(0));
        let e = Barcode::default();
        assert!(matches!(wq_distance(&e, &e, 0.5), Err(MetricError::InvalidExponent(_))));
    }

    #[test]
    fn total_persistence_values() {
        assert_eq!(total_persistence(&Barcode::default()).unwrap(), 0.0);
        let k = SimplicialComplex::path(5);
        let b = persistence_extended(&k, &FilterVector::new(X0.to_vec()).unwrap(), 0).unwrap();
        assert_relative_eq!(total_persistence(&b).unwrap(), 1.20, epsilon = 1e-12);
        let flat = persistence_extended(&k, &FilterVector::new(vec![0.3; 5]).unwrap(), 0).unwrap();
        assert_eq!(total_persistence(&flat).unwrap(), 0.0);
        let g = total_persistence_gradient(&b, 5).unwrap();
        assert_eq!(g.gradient, vec![-1.0, 2.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn registration_to_self_is_flat() {
        let k = SimplicialComplex::path(5);
        let x = FilterVector::new(X0.to_vec()).unwrap();
        let spec = PersistenceSpec::extended(0);
        let target = spec.barcode(&k, &x).unwrap();
        let l = registration_loss(&x, &k, &target, 2.0, &spec).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn registration_to_empty_target_is_scaled_persistence() {
        let k = SimplicialComplex::path(5);
        let x = FilterVector::new(X0.to_vec()).unwrap();
        let spec = PersistenceSpec::extended(0);
        let l = registration_loss(&x, &k, &Barcode::default(), 1.0, &spec).unwrap();
        assert_relative_eq!(l.value, 1.2 / std::f64::consts::SQRT_2, epsilon = 1e-12);
        let support = [1usize, 2, 3, 4, 0];
        for v in 0..5 {
            assert_eq!(l.gradient[v] != 0.0, support.contains(&v));
        }
        assert_relative_eq!(l.gradient[1], 2.0 / std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn frechet_is_additive() {
        let k = SimplicialComplex::path(5);
        let x = FilterVector::new(X0.to_vec()).unwrap();
        let spec = PersistenceSpec::extended(0);
        let t = Barcode::from_pairs(&[(0.1, 0.6), (0.2, 0.25)]);
        let one = frechet_loss(&x, &k, std::slice::from_ref(&t), &spec).unwrap();
        let two = frechet_loss(&x, &k, &[t.clone(), t], &spec).unwrap();
        assert_relative_eq!(two.value, 2.0 * one.value, epsilon = 1e-15);
        let own = spec.barcode(&k, &x).unwrap();
        assert_eq!(frechet_loss(&x, &k, &[own], &spec).unwrap().value, 0.0);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5.0);
    }
}
