//! Ordinary and extended persistence of lower-star filtrations by boundary-matrix
//! reduction over GF(2).
//!
//! Every interval remembers the vertex whose filter value is its birth and the
//! vertex whose value is its death. Inside a cell of the permutation
//! stratification those vertices do not move, so endpoints are coordinate
//! functions of the filter and loss gradients route through them directly.
//!
//! Extended persistence is computed on the cone over the complex: the cone vertex
//! enters first, then the complex in sublevel order, then the cone over each
//! simplex in superlevel order.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::complex::{
    order_by_values, vertex_ranks, Direction, FilterError, FilterVector, SimplicialComplex,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PersistenceError {
    #[error("DegreeTooLarge: requested degree {requested} but the complex has dimension {dimension}")]
    DegreeTooLarge { requested: usize, dimension: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersistenceMode {
    Ordinary,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    /// Both events happen in the sublevel pass.
    Ordinary,
    /// Both events happen in the relative superlevel pass.
    Relative,
    /// Born in the sublevel pass, dies in the relative pass.
    Extended,
    /// Never dies (ordinary persistence only).
    Essential,
}

/// One bar of a barcode.
///
/// Finite intervals are stored with `birth <= death`. When the underlying pair was
/// created at the larger value (relative pairs, and extended pairs in positive
/// degree) the endpoints are swapped and `flipped` is set; the vertex fields are
/// swapped with them so that `x[birth_vertex] == birth` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub birth: f64,
    /// `f64::INFINITY` exactly when `kind == Essential`.
    pub death: f64,
    pub degree: usize,
    pub kind: IntervalKind,
    pub birth_vertex: Option<usize>,
    pub death_vertex: Option<usize>,
    pub flipped: bool,
}

impl Interval {
    /// A bare finite interval without vertex attribution.
    pub fn finite(birth: f64, death: f64, degree: usize) -> Self {
        let (birth, death, flipped) = if birth <= death {
            (birth, death, false)
        } else {
            (death, birth, true)
        };
        Self {
            birth,
            death,
            degree,
            kind: IntervalKind::Ordinary,
            birth_vertex: None,
            death_vertex: None,
            flipped,
        }
    }

    pub fn is_essential(&self) -> bool {
        self.kind == IntervalKind::Essential
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Serialize, Deserialize)]
struct IntervalRecord {
    birth: f64,
    death: Option<f64>,
    #[serde(default)]
    degree: usize,
    #[serde(default = "default_kind")]
    kind: IntervalKind,
    #[serde(default)]
    birth_vertex: Option<usize>,
    #[serde(default)]
    death_vertex: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    flipped: bool,
}

fn default_kind() -> IntervalKind {
    IntervalKind::Ordinary
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        IntervalRecord {
            birth: self.birth,
            death: (!self.is_essential()).then_some(self.death),
            degree: self.degree,
            kind: self.kind,
            birth_vertex: self.birth_vertex,
            death_vertex: self.death_vertex,
            flipped: self.flipped,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = IntervalRecord::deserialize(deserializer)?;
        let (death, kind) = match r.death {
            Some(d) if r.kind == IntervalKind::Essential => {
                return Err(serde::de::Error::custom(format!(
                    "essential interval must have death = null, got {d}"
                )))
            }
            Some(d) => (d, r.kind),
            None => (f64::INFINITY, IntervalKind::Essential),
        };
        Ok(Interval {
            birth: r.birth,
            death,
            degree: r.degree,
            kind,
            birth_vertex: r.birth_vertex,
            death_vertex: r.death_vertex,
            flipped: r.flipped,
        })
    }
}

/// A finite multiset of intervals. Zero-length intervals are never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Barcode {
    intervals: Vec<Interval>,
}

impl Barcode {
    /// Builds a barcode, dropping intervals with `birth == death`.
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self {
            intervals: intervals
                .into_iter()
                .filter(|i| i.birth != i.death)
                .collect(),
        }
    }

    /// Degree-0 barcode from bare `(birth, death)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(pairs.iter().map(|&(b, d)| Interval::finite(b, d, 0)).collect())
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn has_essential(&self) -> bool {
        self.intervals.iter().any(Interval::is_essential)
    }

    /// Intervals of one homology degree, as a new barcode.
    pub fn in_degree(&self, degree: usize) -> Barcode {
        Barcode {
            intervals: self
                .intervals
                .iter()
                .filter(|i| i.degree == degree)
                .cloned()
                .collect(),
        }
    }

    /// Sorted `(birth, death)` endpoints of one degree; handy for comparisons.
    pub fn endpoints(&self, degree: usize) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .filter(|i| i.degree == degree)
            .map(|i| (i.birth, i.death))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }
}

/// One pair (or unpaired creator) of the reduction, before filter values are
/// substituted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRecord {
    pub degree: usize,
    pub kind: IntervalKind,
    pub birth_vertex: usize,
    pub death_vertex: Option<usize>,
}

/// The combinatorial outcome of one reduction. It only depends on the total
/// order of the vertices, so one pairing serves every filter of a stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistencePairing {
    pub mode: PersistenceMode,
    pub max_degree: usize,
    /// All pairs, including those that evaluate to zero length.
    pub pairs: Vec<PairRecord>,
    /// Number of columns in the reduced boundary matrix.
    pub n_columns: usize,
}

impl PersistencePairing {
    /// Substitutes filter values into the pairing.
    pub fn barcode(&self, x: &[f64]) -> Barcode {
        let intervals = self
            .pairs
            .iter()
            .filter(|p| p.degree <= self.max_degree)
            .filter_map(|p| {
                let b = x[p.birth_vertex];
                match p.death_vertex {
                    None => Some(Interval {
                        birth: b,
                        death: f64::INFINITY,
                        degree: p.degree,
                        kind: IntervalKind::Essential,
                        birth_vertex: Some(p.birth_vertex),
                        death_vertex: None,
                        flipped: false,
                    }),
                    Some(dv) => {
                        let d = x[dv];
                        if b == d {
                            return None;
                        }
                        let flipped = b > d;
                        let (birth, death, bv, dv) = if flipped {
                            (d, b, dv, p.birth_vertex)
                        } else {
                            (b, d, p.birth_vertex, dv)
                        };
                        Some(Interval {
                            birth,
                            death,
                            degree: p.degree,
                            kind: p.kind,
                            birth_vertex: Some(bv),
                            death_vertex: Some(dv),
                            flipped,
                        })
                    }
                }
            })
            .collect();
        Barcode { intervals }
    }

    /// Number of pairs whose both ends lie in the reduction (the cone vertex and
    /// essential classes are excluded).
    pub fn finite_pair_count(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.death_vertex.is_some())
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Apex,
    Base(usize),
    Cone(usize),
}

/// Runs the reduction for the vertex total order given by `ranks` (a permutation:
/// `ranks[v]` is the position of vertex `v`).
pub fn compute_pairing(
    complex: &SimplicialComplex,
    ranks: &[usize],
    mode: PersistenceMode,
    max_degree: usize,
) -> Result<PersistencePairing, PersistenceError> {
    if max_degree > complex.dimension() {
        return Err(PersistenceError::DegreeTooLarge {
            requested: max_degree,
            dimension: complex.dimension(),
        });
    }
    if ranks.len() != complex.n_vertices() {
        return Err(FilterError::LengthMismatch {
            expected: complex.n_vertices(),
            got: ranks.len(),
        }
        .into());
    }
    let key: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
    let up = order_by_values(complex, &key, Direction::Sublevel);

    let mut cells: Vec<Cell> = Vec::with_capacity(2 * complex.len() + 1);
    if mode == PersistenceMode::Extended {
        cells.push(Cell::Apex);
    }
    let base_offset = cells.len();
    cells.extend(up.order.iter().map(|&s| Cell::Base(s)));
    let mut base_pos = vec![0; complex.len()];
    for (p, &s) in up.order.iter().enumerate() {
        base_pos[s] = base_offset + p;
    }
    let mut cone_pos = vec![usize::MAX; complex.len()];
    if mode == PersistenceMode::Extended {
        let down = order_by_values(complex, &key, Direction::Superlevel);
        let cone_offset = cells.len();
        cells.extend(down.order.iter().map(|&s| Cell::Cone(s)));
        for (p, &s) in down.order.iter().enumerate() {
            cone_pos[s] = cone_offset + p;
        }
    }

    let columns: Vec<Vec<usize>> = cells
        .iter()
        .map(|cell| {
            let mut col: Vec<usize> = match *cell {
                Cell::Apex => Vec::new(),
                Cell::Base(s) => complex.boundary(s).into_iter().map(|f| base_pos[f]).collect(),
                Cell::Cone(s) => {
                    let mut c = vec![base_pos[s]];
                    if complex.simplex(s).len() == 1 {
                        c.push(0);
                    } else {
                        c.extend(complex.boundary(s).into_iter().map(|f| cone_pos[f]));
                    }
                    c
                }
            };
            col.sort_unstable();
            col
        })
        .collect();

    let reduced = reduce(columns);

    let max_rank = |s: usize| -> usize {
        *complex
            .simplex(s)
            .iter()
            .max_by_key(|&&v| ranks[v])
            .expect("simplices are nonempty")
    };
    let min_rank = |s: usize| -> usize {
        *complex
            .simplex(s)
            .iter()
            .min_by_key(|&&v| ranks[v])
            .expect("simplices are nonempty")
    };
    let dim = |s: usize| complex.simplex(s).len() - 1;

    let mut pairs = Vec::new();
    let mut paired = vec![false; cells.len()];
    for (death, low) in reduced.iter().enumerate() {
        let Some(&birth) = low.last() else { continue };
        paired[birth] = true;
        paired[death] = true;
        let record = match (cells[birth], cells[death]) {
            (Cell::Base(c), Cell::Base(d)) => PairRecord {
                degree: dim(c),
                kind: IntervalKind::Ordinary,
                birth_vertex: max_rank(c),
                death_vertex: Some(max_rank(d)),
            },
            (Cell::Base(c), Cell::Cone(d)) => PairRecord {
                degree: dim(c),
                kind: IntervalKind::Extended,
                birth_vertex: max_rank(c),
                death_vertex: Some(min_rank(d)),
            },
            (Cell::Cone(c), Cell::Cone(d)) => PairRecord {
                degree: dim(c) + 1,
                kind: IntervalKind::Relative,
                birth_vertex: min_rank(c),
                death_vertex: Some(min_rank(d)),
            },
            // The apex is the oldest cell, so it can never be the pivot of a
            // reduced column; cone cells never appear in base boundaries.
            (Cell::Apex, _) | (_, Cell::Apex) | (Cell::Cone(_), Cell::Base(_)) => {
                unreachable!("impossible persistence pair")
            }
        };
        pairs.push(record);
    }
    for (i, cell) in cells.iter().enumerate() {
        if paired[i] || !reduced[i].is_empty() {
            continue;
        }
        if let Cell::Base(s) = *cell {
            pairs.push(PairRecord {
                degree: dim(s),
                kind: IntervalKind::Essential,
                birth_vertex: max_rank(s),
                death_vertex: None,
            });
        }
    }
    Ok(PersistencePairing {
        mode,
        max_degree,
        pairs,
        n_columns: cells.len(),
    })
}

/// Standard left-to-right column reduction; returns the reduced columns.
fn reduce(mut columns: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let n = columns.len();
    let mut pivot_owner: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        let mut col = std::mem::take(&mut columns[j]);
        while let Some(&low) = col.last() {
            match pivot_owner[low] {
                Some(k) => col = symmetric_difference(&col, &columns[k]),
                None => {
                    pivot_owner[low] = Some(j);
                    break;
                }
            }
        }
        columns[j] = col;
    }
    columns
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn persistence(
    complex: &SimplicialComplex,
    x: &FilterVector,
    mode: PersistenceMode,
    max_degree: usize,
) -> Result<Barcode, PersistenceError> {
    x.check(complex)?;
    let ranks = vertex_ranks(x.values());
    Ok(compute_pairing(complex, &ranks, mode, max_degree)?.barcode(x.values()))
}

/// Barcode of the sublevel filtration in degrees `0..=max_degree`.
pub fn persistence_ordinary(
    complex: &SimplicialComplex,
    x: &FilterVector,
    max_degree: usize,
) -> Result<Barcode, PersistenceError> {
    persistence(complex, x, PersistenceMode::Ordinary, max_degree)
}

/// Extended barcode in degrees `0..=max_degree`; every interval is finite.
pub fn persistence_extended(
    complex: &SimplicialComplex,
    x: &FilterVector,
    max_degree: usize,
) -> Result<Barcode, PersistenceError> {
    persistence(complex, x, PersistenceMode::Extended, max_degree)
}

/// Which barcode to compute: mode plus the largest homology degree kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersistenceSpec {
    pub mode: PersistenceMode,
    pub max_degree: usize,
}

impl PersistenceSpec {
    pub fn extended(max_degree: usize) -> Self {
        Self {
            mode: PersistenceMode::Extended,
            max_degree,
        }
    }

    pub fn ordinary(max_degree: usize) -> Self {
        Self {
            mode: PersistenceMode::Ordinary,
            max_degree,
        }
    }

    pub fn barcode(
        &self,
        complex: &SimplicialComplex,
        x: &FilterVector,
    ) -> Result<Barcode, PersistenceError> {
        persistence(complex, x, self.mode, self.max_degree)
    }

    pub fn pairing(
        &self,
        complex: &SimplicialComplex,
        ranks: &[usize],
    ) -> Result<PersistencePairing, PersistenceError> {
        compute_pairing(complex, ranks, self.mode, self.max_degree)
    }
}

/// Maps interval index to `(birth_vertex, death_vertex)`: the partial derivatives
/// of the interval's endpoints are the indicator vectors of these vertices.
pub fn barcode_gradient_support(
    barcode: &Barcode,
) -> BTreeMap<usize, (Option<usize>, Option<usize>)> {
    barcode
        .intervals()
        .iter()
        .enumerate()
        .map(|(i, iv)| (i, (iv.birth_vertex, iv.death_vertex)))
        .collect()
}
