//! Simplicial complexes, vertex filters and lower-star filtration orders.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest simplex dimension accepted by [`SimplicialComplex::new`].
pub const MAX_DIMENSION: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexError {
    #[error("MissingFace: face {face:?} of simplex {simplex:?} is not listed")]
    MissingFace { simplex: Vec<usize>, face: Vec<usize> },
    #[error("MissingFace: vertex [{0}] is not listed")]
    MissingVertex(usize),
    #[error("DuplicateSimplex: {0:?} is listed more than once")]
    DuplicateSimplex(Vec<usize>),
    #[error("VertexOutOfRange: vertex {vertex} in {simplex:?} exceeds n_vertices = {n_vertices}")]
    VertexOutOfRange {
        simplex: Vec<usize>,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("EmptySimplex: simplices must contain at least one vertex")]
    EmptySimplex,
    #[error("RepeatedVertex: simplex {0:?} repeats a vertex")]
    RepeatedVertex(Vec<usize>),
    #[error("DimensionTooLarge: simplex {0:?} exceeds dimension {MAX_DIMENSION}")]
    DimensionTooLarge(Vec<usize>),
    #[error("EmptyComplex: a complex needs at least one vertex")]
    EmptyComplex,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("FilterLength: filter has {got} values but the complex has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("NonFinite: filter value at vertex {0} is not finite")]
    NonFinite(usize),
}

/// A finite abstract simplicial complex on vertices `0..n_vertices`.
///
/// Simplices are strictly increasing vertex lists, stored sorted by dimension and then
/// lexicographically, so simplex `i` for `i < n_vertices` is the vertex `[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplicialComplex {
    n_vertices: usize,
    simplices: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

/// Wire format: `{"n_vertices": int, "simplices": [[int, ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexFile {
    pub n_vertices: usize,
    pub simplices: Vec<Vec<usize>>,
}

impl SimplicialComplex {
    /// Validates and normalizes a raw simplex list.
    pub fn new(n_vertices: usize, raw: Vec<Vec<usize>>) -> Result<Self, ComplexError> {
        if n_vertices == 0 {
            return Err(ComplexError::EmptyComplex);
        }
        let mut simplices = Vec::with_capacity(raw.len());
        for mut s in raw {
            if s.is_empty() {
                return Err(ComplexError::EmptySimplex);
            }
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(ComplexError::RepeatedVertex(s));
            }
            if let Some(&v) = s.iter().find(|&&v| v >= n_vertices) {
                return Err(ComplexError::VertexOutOfRange {
                    simplex: s,
                    vertex: v,
                    n_vertices,
                });
            }
            if s.len() > MAX_DIMENSION + 1 {
                return Err(ComplexError::DimensionTooLarge(s));
            }
            simplices.push(s);
        }
        simplices.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        if let Some(w) = simplices.windows(2).find(|w| w[0] == w[1]) {
            return Err(ComplexError::DuplicateSimplex(w[0].clone()));
        }
        let index: HashMap<Vec<usize>, usize> = simplices
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        for s in &simplices {
            if s.len() < 2 {
                continue;
            }
            // Checking codimension-one faces suffices: the lower-dimensional
            // simplices are themselves checked, so closure follows by induction.
            for skip in 0..s.len() {
                let face: Vec<usize> = face_without(s, skip);
                if !index.contains_key(&face) {
                    return Err(ComplexError::MissingFace {
                        simplex: s.clone(),
                        face,
                    });
                }
            }
        }
        if let Some(v) = (0..n_vertices).find(|&v| !index.contains_key(&vec![v])) {
            return Err(ComplexError::MissingVertex(v));
        }
        Ok(Self {
            n_vertices,
            simplices,
            index,
        })
    }

    /// Like [`SimplicialComplex::new`], taking `n_vertices` as one more than the
    /// largest vertex index mentioned.
    pub fn from_simplices(raw: Vec<Vec<usize>>) -> Result<Self, ComplexError> {
        let n = raw
            .iter()
            .flat_map(|s| s.iter().copied())
            .max()
            .map_or(0, |m| m + 1);
        Self::new(n, raw)
    }

    /// The graph with the given vertices and edges (vertex singletons are added).
    pub fn from_edges(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self, ComplexError> {
        let mut raw: Vec<Vec<usize>> = (0..n_vertices).map(|v| vec![v]).collect();
        raw.extend(edges.iter().map(|&(a, b)| vec![a, b]));
        Self::new(n_vertices, raw)
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path graph is a valid complex")
    }

    /// Cycle graph on `n >= 3` vertices.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a cycle graph needs at least three vertices");
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((0, n - 1));
        Self::from_edges(n, &edges).expect("cycle graph is a valid complex")
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn simplex(&self, i: usize) -> &[usize] {
        &self.simplices[i]
    }

    /// Index of a simplex given as a sorted vertex list.
    pub fn index_of(&self, simplex: &[usize]) -> Option<usize> {
        self.index.get(simplex).copied()
    }

    pub fn dimension(&self) -> usize {
        self.simplices.last().map_or(0, |s| s.len() - 1)
    }

    /// Indices of the codimension-one faces of simplex `i`.
    pub fn boundary(&self, i: usize) -> Vec<usize> {
        let s = &self.simplices[i];
        if s.len() < 2 {
            return Vec::new();
        }
        (0..s.len())
            .map(|skip| self.index[&face_without(s, skip)])
            .collect()
    }

    pub fn to_file(&self) -> ComplexFile {
        ComplexFile {
            n_vertices: self.n_vertices,
            simplices: self.simplices.clone(),
        }
    }
}

impl TryFrom<ComplexFile> for SimplicialComplex {
    type Error = ComplexError;

    fn try_from(file: ComplexFile) -> Result<Self, Self::Error> {
        Self::new(file.n_vertices, file.simplices)
    }
}

fn face_without(s: &[usize], skip: usize) -> Vec<usize> {
    s.iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .collect()
}

/// Validates a raw simplex list, inferring the vertex count from the largest index.
pub fn validate_complex(raw: Vec<Vec<usize>>) -> Result<SimplicialComplex, ComplexError> {
    SimplicialComplex::from_simplices(raw)
}

/// One real value per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterVector(Vec<f64>);

impl FilterVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FilterError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FilterError::NonFinite(i));
        }
        Ok(Self(values))
    }

    /// Checks that the filter can be paired with `complex`.
    pub fn check(&self, complex: &SimplicialComplex) -> Result<(), FilterError> {
        if self.0.len() != complex.n_vertices() {
            return Err(FilterError::LengthMismatch {
                expected: complex.n_vertices(),
                got: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for FilterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sublevel,
    Superlevel,
}

/// Simplices of a complex listed in the order they enter a lower-star (or
/// upper-star) filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationOrder {
    pub direction: Direction,
    /// Simplex indices in entry order.
    pub order: Vec<usize>,
    /// Entry value of each simplex, indexed by simplex index.
    pub entry_values: Vec<f64>,
}

impl FiltrationOrder {
    /// `(simplex index, entry value)` pairs in entry order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.order.iter().map(|&s| (s, self.entry_values[s]))
    }

    /// Position of each simplex in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &s) in self.order.iter().enumerate() {
            pos[s] = p;
        }
        pos
    }
}

/// Entry value of every simplex: the max of its vertex values (sublevel) or the min
/// (superlevel).
pub fn entry_values(complex: &SimplicialComplex, x: &[f64], direction: Direction) -> Vec<f64> {
    complex
        .simplices()
        .iter()
        .map(|s| {
            let vals = s.iter().map(|&v| x[v]);
            match direction {
                Direction::Sublevel => vals.fold(f64::NEG_INFINITY, f64::max),
                Direction::Superlevel => vals.fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Sorts the simplices of `complex` by entry value, ascending for sublevel and
/// descending for superlevel filtrations, breaking ties by dimension and then by
/// simplex index.
pub fn lower_star_order(
    complex: &SimplicialComplex,
    x: &FilterVector,
    direction: Direction,
) -> Result<FiltrationOrder, FilterError> {
    x.check(complex)?;
    Ok(order_by_values(complex, x.values(), direction))
}

pub(crate) fn order_by_values(
    complex: &SimplicialComplex,
    x: &[f64],
    direction: Direction,
) -> FiltrationOrder {
    let entry = entry_values(complex, x, direction);
    let mut order: Vec<usize> = (0..complex.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = match direction {
            Direction::Sublevel => entry[a].total_cmp(&entry[b]),
            Direction::Superlevel => entry[b].total_cmp(&entry[a]),
        };
        by_value
            .then_with(|| complex.simplex(a).len().cmp(&complex.simplex(b).len()))
            .then_with(|| a.cmp(&b))
    });
    FiltrationOrder {
        direction,
        order,
        entry_values: entry,
    }
}

/// Rank of every vertex in the stable ascending sort of `x`: ties go to the
/// smaller vertex index first.
pub fn vertex_ranks(x: &[f64]) -> Vec<usize> {
    let order = argsort(x);
    let mut ranks = vec![0; x.len()];
    for (r, &v) in order.iter().enumerate() {
        ranks[v] = r;
    }
    ranks
}

/// Stable ascending argsort.
pub fn argsort(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| match x[a].total_cmp(&x[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}
