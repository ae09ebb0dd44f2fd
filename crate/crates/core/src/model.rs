//! The instance data model.
//!
//! A [`PeripheralModel`] describes a family of peripheral components
//! (toric cusps and boundary collars) by the constants that bound how far
//! they can grow: one self bound per component and at most one tangency
//! constant per unordered pair. A [`Configuration`] assigns each
//! component its current size — a volume for a cusp, a width for a
//! collar.
//!
//! All tolerance arithmetic happens in the *linearized* coordinates of a
//! [`ConstraintSet`]: `x = ln v` for cusps and `d` itself for collars, in
//! which every constraint is a linear inequality `a·y ≤ b`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How a collar's boundary area is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollarSize {
    Area(f64),
    /// Genus `g ≥ 2`; the area is `4π(g − 1)`.
    Genus(u32),
}

impl CollarSize {
    pub fn area(&self) -> f64 {
        match *self {
            CollarSize::Area(a) => a,
            CollarSize::Genus(g) => 4.0 * std::f64::consts::PI * (f64::from(g) - 1.0),
        }
    }
}

/// One peripheral component. A cusp carries no intrinsic constant (its
/// size is a configuration variable); a collar carries its boundary area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Cusp,
    Collar(CollarSize),
}

impl Component {
    pub fn collar_area(area: f64) -> Self {
        Component::Collar(CollarSize::Area(area))
    }

    pub fn collar_genus(genus: u32) -> Self {
        Component::Collar(CollarSize::Genus(genus))
    }

    pub fn is_collar(&self) -> bool {
        matches!(self, Component::Collar(_))
    }

    pub fn is_cusp(&self) -> bool {
        matches!(self, Component::Cusp)
    }

    /// Boundary area for collars, `None` for cusps.
    pub fn area(&self) -> Option<f64> {
        match self {
            Component::Cusp => None,
            Component::Collar(size) => Some(size.area()),
        }
    }
}

/// A tangency constant between two distinct components. Its meaning
/// depends on the pair's kinds:
///
/// * cusp/cusp — the maximal product `v_i·v_j`;
/// * cusp/collar — the relative torus area `R`, constraining
///   `v ≤ (R/2)·e^{−2d}`;
/// * collar/collar — the maximal sum `d_i + d_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConstraint {
    pub i: usize,
    pub j: usize,
    pub constant: f64,
}

impl PairConstraint {
    pub fn new(i: usize, j: usize, constant: f64) -> Self {
        Self { i, j, constant }
    }

    /// The pair as (min, max); pairs are unordered.
    pub fn canonical(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// The bound at which a component is tangent to itself or to the ambient
/// boundary: `v^max` for a cusp, `d^max` for a collar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConstraint {
    pub index: usize,
    pub bound: f64,
}

impl SelfConstraint {
    pub fn new(index: usize, bound: f64) -> Self {
        Self { index, bound }
    }
}

/// A full instance: components plus their pairwise and self constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PeripheralModel {
    pub components: Vec<Component>,
    pub pairs: Vec<PairConstraint>,
    pub self_constraints: Vec<SelfConstraint>,
}

/// One point of the deformation space: `values[k]` is the volume of cusp
/// `k` or the width of collar `k`. Collar widths may be zero (an empty
/// collar); cusp volumes must be positive wherever logarithms are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn new(values: Vec<f64>) -> Self {
        Configuration(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which linearized coordinate a component uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    /// `x = ln v` for a cusp.
    LogVolume,
    /// `d` itself for a collar.
    Width,
}

/// Where a linear inequality came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintOrigin {
    SelfBound { index: usize },
    Pair { i: usize, j: usize },
}

impl fmt::Display for ConstraintOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintOrigin::SelfBound { index } => write!(f, "self({index})"),
            ConstraintOrigin::Pair { i, j } => write!(f, "pair({i},{j})"),
        }
    }
}

/// A sparse inequality `Σ coeff·y ≤ bound` in linearized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInequality {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
    pub origin: ConstraintOrigin,
}

impl LinearInequality {
    pub fn residual(&self, y: &[f64]) -> f64 {
        let mut acc = self.bound;
        for &(k, c) in &self.coeffs {
            acc -= c * y[k];
        }
        acc
    }
}

/// The linearized constraint system of a model: a coordinate map plus one
/// inequality per pair and self constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    coords: Vec<CoordKind>,
    rows: Vec<LinearInequality>,
    self_rows: Vec<usize>,
    pair_rows: HashMap<(usize, usize), usize>,
}

impl ConstraintSet {
    pub fn coords(&self) -> &[CoordKind] {
        &self.coords
    }

    pub fn rows(&self) -> &[LinearInequality] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Row index of the self constraint of `component`.
    pub fn self_row(&self, component: usize) -> &LinearInequality {
        &self.rows[self.self_rows[component]]
    }

    /// Row for the unordered pair `(i, j)`, if the model constrains it.
    pub fn pair_row(&self, i: usize, j: usize) -> Option<&LinearInequality> {
        self.pair_rows
            .get(&(i.min(j), i.max(j)))
            .map(|&r| &self.rows[r])
    }

    /// Maps a configuration into linearized coordinates. Fails on a
    /// non-positive cusp volume or a negative collar width.
    pub fn to_linear(&self, config: &Configuration) -> Result<Vec<f64>, ModelError> {
        if config.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                got: config.len(),
            });
        }
        let mut y = Vec::with_capacity(self.dim());
        for (k, (&kind, &value)) in self.coords.iter().zip(config.values()).enumerate() {
            match kind {
                CoordKind::LogVolume => {
                    if !(value > 0.0) {
                        return Err(ModelError::NonPositiveValue { index: k, value });
                    }
                    y.push(value.ln());
                }
                CoordKind::Width => {
                    if !(value >= 0.0) {
                        return Err(ModelError::NonPositiveValue { index: k, value });
                    }
                    y.push(value);
                }
            }
        }
        Ok(y)
    }

    /// Inverse of [`ConstraintSet::to_linear`].
    pub fn from_linear(&self, y: &[f64]) -> Configuration {
        let values = self
            .coords
            .iter()
            .zip(y)
            .map(|(&kind, &c)| match kind {
                CoordKind::LogVolume => c.exp(),
                CoordKind::Width => c,
            })
            .collect();
        Configuration::new(values)
    }

    /// Checks `a·y ≤ b + tol` for every row; reports the worst violation.
    pub fn check_feasible(&self, y: &[f64], tol: f64) -> Result<(), ModelError> {
        let mut worst: Option<(ConstraintOrigin, f64)> = None;
        for row in &self.rows {
            let res = row.residual(y);
            if res < -tol && worst.map_or(true, |(_, w)| res < w) {
                worst = Some((row.origin, res));
            }
        }
        match worst {
            Some((origin, residual)) => Err(ModelError::Infeasible { origin, residual }),
            None => Ok(()),
        }
    }
}

/// Active tangencies of a configuration: an edge for every pair
/// constraint holding with equality, a self-loop for every active self
/// bound ("maximal" components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyGraph {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub self_loops: Vec<usize>,
}

impl TangencyGraph {
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let e = (i.min(j), i.max(j));
        self.edges.iter().any(|&(a, b)| (a, b) == e)
    }

    pub fn is_maximal(&self, index: usize) -> bool {
        self.self_loops.contains(&index)
    }

    /// Vertex sets of the connected components (pair edges only;
    /// self-loops do not affect connectivity).
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vertex_count];
        let mut adjacency = vec![Vec::new(); self.vertex_count];
        for &(i, j) in &self.edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut components = Vec::new();
        for start in 0..self.vertex_count {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    /// Edges with both endpoints inside `vertices`.
    pub fn edges_within(&self, vertices: &[usize]) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .copied()
            .filter(|&(i, j)| vertices.contains(&i) && vertices.contains(&j))
            .collect()
    }
}

/// A single well-formedness violation; `validate` returns them all.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("model has no components")]
    EmptyModel,
    #[error("component {index}: collar area {area} is not positive")]
    NonPositiveCollarArea { index: usize, area: f64 },
    #[error("component {index}: genus {genus} is below 2")]
    GenusTooSmall { index: usize, genus: u32 },
    #[error("pair ({i},{j}): index out of range")]
    PairIndexOutOfRange { i: usize, j: usize },
    #[error("pair ({i},{j}): indices must be distinct")]
    PairNotDistinct { i: usize, j: usize },
    #[error("pair ({i},{j}): duplicate constraint")]
    DuplicatePair { i: usize, j: usize },
    #[error("pair ({i},{j}): non-positive constant {constant}")]
    NonPositivePairConstant { i: usize, j: usize, constant: f64 },
    #[error("self constraint {index}: index out of range")]
    SelfIndexOutOfRange { index: usize },
    #[error("component {index}: duplicate self constraint")]
    DuplicateSelfConstraint { index: usize },
    #[error("component {index}: missing self constraint")]
    MissingSelfConstraint { index: usize },
    #[error("self constraint {index}: non-positive bound {bound}")]
    NonPositiveSelfBound { index: usize, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("constraint {origin} violated: residual {residual}")]
    Infeasible {
        origin: ConstraintOrigin,
        residual: f64,
    },
    #[error("component index {index} out of range (model has {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("configuration has {got} values, model has {expected} components")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {index}: value {value} not in the coordinate domain")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("generator needs at least one component")]
    EmptyGenerator,
    #[error("density {0} outside [0, 1]")]
    BadDensity(f64),
    #[error("model JSON: {0}")]
    Json(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl PeripheralModel {
    pub fn new(
        components: Vec<Component>,
        pairs: Vec<PairConstraint>,
        self_constraints: Vec<SelfConstraint>,
    ) -> Self {
        Self {
            components,
            pairs,
            self_constraints,
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Pair constraint on the unordered pair `(i, j)`, if present.
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairConstraint> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().find(|p| p.canonical() == key)
    }

    /// Self constraint of component `index`. Panics on a malformed model.
    pub fn self_bound(&self, index: usize) -> f64 {
        self.self_constraints
            .iter()
            .find(|s| s.index == index)
            .map(|s| s.bound)
            .expect("validated model has one self constraint per component")
    }

    /// Every invariant violation; an empty list means the model is
    /// well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.components.len();
        if n == 0 {
            out.push(Violation::EmptyModel);
        }
        for (index, component) in self.components.iter().enumerate() {
            match component {
                Component::Cusp => {}
                Component::Collar(CollarSize::Area(area)) => {
                    if !(*area > 0.0) {
                        out.push(Violation::NonPositiveCollarArea { index, area: *area });
                    }
                }
                Component::Collar(CollarSize::Genus(genus)) => {
                    if *genus < 2 {
                        out.push(Violation::GenusTooSmall {
                            index,
                            genus: *genus,
                        });
                    }
                }
            }
        }
        let mut seen_pairs = HashMap::new();
        for pair in &self.pairs {
            let (i, j) = (pair.i, pair.j);
            if i >= n || j >= n {
                out.push(Violation::PairIndexOutOfRange { i, j });
                continue;
            }
            if i == j {
                out.push(Violation::PairNotDistinct { i, j });
                continue;
            }
            if seen_pairs.insert(pair.canonical(), ()).is_some() {
                let (a, b) = pair.canonical();
                out.push(Violation::DuplicatePair { i: a, j: b });
            }
            if !(pair.constant > 0.0) {
                out.push(Violation::NonPositivePairConstant {
                    i,
                    j,
                    constant: pair.constant,
                });
            }
        }
        let mut self_seen = vec![false; n];
        for sc in &self.self_constraints {
            if sc.index >= n {
                out.push(Violation::SelfIndexOutOfRange { index: sc.index });
                continue;
            }
            if self_seen[sc.index] {
                out.push(Violation::DuplicateSelfConstraint { index: sc.index });
            }
            self_seen[sc.index] = true;
            if !(sc.bound > 0.0) {
                out.push(Violation::NonPositiveSelfBound {
                    index: sc.index,
                    bound: sc.bound,
                });
            }
        }
        for (index, seen) in self_seen.iter().enumerate() {
            if !seen {
                out.push(Violation::MissingSelfConstraint { index });
            }
        }
        out
    }

    fn validated(&self) -> Result<(), ModelError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Builds the linearized constraint system. Rejects invalid models
    /// with the full validation report.
    pub fn build_constraints(&self) -> Result<ConstraintSet, ModelError> {
        self.validated()?;
        let coords: Vec<CoordKind> = self
            .components
            .iter()
            .map(|c| {
                if c.is_cusp() {
                    CoordKind::LogVolume
                } else {
                    CoordKind::Width
                }
            })
            .collect();
        let mut rows = Vec::new();
        let mut pair_rows = HashMap::new();
        for pair in &self.pairs {
            let (i, j) = pair.canonical();
            let (coeffs, bound) = match (&self.components[i], &self.components[j]) {
                (Component::Cusp, Component::Cusp) => {
                    (vec![(i, 1.0), (j, 1.0)], pair.constant.ln())
                }
                (Component::Cusp, Component::Collar(_)) => {
                    (vec![(i, 1.0), (j, 2.0)], (pair.constant / 2.0).ln())
                }
                (Component::Collar(_), Component::Cusp) => {
                    (vec![(i, 2.0), (j, 1.0)], (pair.constant / 2.0).ln())
                }
                (Component::Collar(_), Component::Collar(_)) => {
                    (vec![(i, 1.0), (j, 1.0)], pair.constant)
                }
            };
            pair_rows.insert((i, j), rows.len());
            rows.push(LinearInequality {
                coeffs,
                bound,
                origin: ConstraintOrigin::Pair { i, j },
            });
        }
        let mut self_rows = vec![usize::MAX; self.len()];
        let mut ordered = self.self_constraints.clone();
        ordered.sort_by_key(|s| s.index);
        for sc in &ordered {
            let bound = match self.components[sc.index] {
                Component::Cusp => sc.bound.ln(),
                Component::Collar(_) => sc.bound,
            };
            self_rows[sc.index] = rows.len();
            rows.push(LinearInequality {
                coeffs: vec![(sc.index, 1.0)],
                bound,
                origin: ConstraintOrigin::SelfBound { index: sc.index },
            });
        }
        Ok(ConstraintSet {
            coords,
            rows,
            self_rows,
            pair_rows,
        })
    }

    /// The tangency graph of `config`: edges and self-loops for every
    /// constraint whose linearized residual is within `tol` of zero.
    /// Fails if some residual is below `−tol` (infeasible configuration).
    pub fn tangency_graph(
        &self,
        config: &Configuration,
        tol: f64,
    ) -> Result<TangencyGraph, ModelError> {
        let cs = self.build_constraints()?;
        let y = cs.to_linear(config)?;
        cs.check_feasible(&y, tol)?;
        let mut edges = Vec::new();
        let mut self_loops = Vec::new();
        for row in cs.rows() {
            if row.residual(&y).abs() <= tol {
                match row.origin {
                    ConstraintOrigin::Pair { i, j } => edges.push((i, j)),
                    ConstraintOrigin::SelfBound { index } => self_loops.push(index),
                }
            }
        }
        Ok(TangencyGraph {
            vertex_count: self.len(),
            edges,
            self_loops,
        })
    }

    /// Whether component `index`'s self constraint is active within `tol`
    /// (residual measured in linearized coordinates).
    pub fn is_maximal(
        &self,
        config: &Configuration,
        index: usize,
        tol: f64,
    ) -> Result<bool, ModelError> {
        if index >= self.len() {
            return Err(ModelError::IndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        let cs = self.build_constraints()?;
        let y = cs.to_linear(config)?;
        cs.check_feasible(&y, tol)?;
        Ok(cs.self_row(index).residual(&y).abs() <= tol)
    }

    /// Total peripheral volume of a configuration: the sum of cusp
    /// volumes plus `(A/4)(2d + sinh 2d)` per collar. Does not require
    /// feasibility; used freely by probes.
    pub fn total_volume(&self, config: &Configuration) -> f64 {
        self.components
            .iter()
            .zip(config.values())
            .map(|(component, &value)| match component {
                Component::Cusp => value,
                Component::Collar(size) => {
                    let area = size.area();
                    area / 4.0 * (2.0 * value + (2.0 * value).sinh())
                }
            })
            .sum()
    }

    /// Effective size of component `k` at `config`: the volume for a
    /// cusp, the modified volume for a collar. This is the quantity whose
    /// triangle inequalities decide local maximality.
    pub fn effective_size(&self, config: &Configuration, k: usize) -> f64 {
        match &self.components[k] {
            Component::Cusp => config.values()[k],
            Component::Collar(size) => {
                let area = size.area();
                let d = config.values()[k];
                area / 4.0 * (1.0 + (2.0 * d).cosh())
            }
        }
    }

    /// A copy whose self bounds never exceed what the pair constraints
    /// allow when every partner degenerates (a cusp can never grow past
    /// `R/2` against a width-zero collar, a collar never past `D` against
    /// an empty partner). Models arising from actual geometry satisfy
    /// this already.
    pub fn with_consistent_self_bounds(&self) -> PeripheralModel {
        let mut out = self.clone();
        for sc in &mut out.self_constraints {
            let k = sc.index;
            let mut bound = sc.bound;
            for pair in &self.pairs {
                let (i, j) = pair.canonical();
                let other = if i == k {
                    j
                } else if j == k {
                    i
                } else {
                    continue;
                };
                match (&self.components[k], &self.components[other]) {
                    (Component::Cusp, Component::Collar(_)) => {
                        bound = bound.min(pair.constant / 2.0);
                    }
                    (Component::Collar(_), Component::Collar(_)) => {
                        bound = bound.min(pair.constant);
                    }
                    _ => {}
                }
            }
            sc.bound = bound;
        }
        out
    }
}

/// Draws a random valid model: `n_cusps` cusps followed by `n_collars`
/// collars, each unordered pair receiving a constraint with probability
/// `density`. Collar areas and all constants are log-uniform with
/// logarithm in `[−2, 2]`. Deterministic for a fixed seed.
pub fn gen_random(
    n_cusps: usize,
    n_collars: usize,
    seed: u64,
    density: f64,
) -> Result<PeripheralModel, ModelError> {
    let n = n_cusps + n_collars;
    if n == 0 {
        return Err(ModelError::EmptyGenerator);
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(ModelError::BadDensity(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha8Rng| rng.gen_range(-2.0..=2.0_f64).exp();

    let mut components = Vec::with_capacity(n);
    for _ in 0..n_cusps {
        components.push(Component::Cusp);
    }
    for _ in 0..n_collars {
        let area = log_uniform(&mut rng);
        components.push(Component::collar_area(area));
    }

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !rng.gen_bool(density) {
                continue;
            }
            let constant = match (components[i].is_collar(), components[j].is_collar()) {
                // Cusp/collar constants are stored as R with log(R/2)
                // uniform in [−2, 2].
                (false, true) | (true, false) => 2.0 * log_uniform(&mut rng),
                _ => log_uniform(&mut rng),
            };
            pairs.push(PairConstraint::new(i, j, constant));
        }
    }

    let self_constraints = (0..n)
        .map(|index| SelfConstraint::new(index, log_uniform(&mut rng)))
        .collect();

    Ok(PeripheralModel::new(components, pairs, self_constraints))
}

// ---------------------------------------------------------------------
// JSON format
//
// {"components":[{"kind":"cusp"}|{"kind":"collar","area":1.5}|{"kind":"collar","genus":2}],
//  "pairs":[{"i":0,"j":1,"constant":6.0}],
//  "self":[{"index":0,"bound":4.0}]}
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ComponentJson {
    Cusp,
    Collar {
        #[serde(skip_serializing_if = "Option::is_none")]
        area: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        genus: Option<u32>,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    components: Vec<ComponentJson>,
    pairs: Vec<PairConstraint>,
    #[serde(rename = "self")]
    self_constraints: Vec<SelfConstraint>,
}

impl Serialize for PeripheralModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let components = self
            .components
            .iter()
            .map(|c| match c {
                Component::Cusp => ComponentJson::Cusp,
                Component::Collar(CollarSize::Area(a)) => ComponentJson::Collar {
                    area: Some(*a),
                    genus: None,
                },
                Component::Collar(CollarSize::Genus(g)) => ComponentJson::Collar {
                    area: None,
                    genus: Some(*g),
                },
            })
            .collect();
        ModelJson {
            components,
            pairs: self.pairs.clone(),
            self_constraints: self.self_constraints.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PeripheralModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ModelJson::deserialize(deserializer)?;
        let mut components = Vec::with_capacity(raw.components.len());
        for (k, c) in raw.components.into_iter().enumerate() {
            let component = match c {
                ComponentJson::Cusp => Component::Cusp,
                ComponentJson::Collar {
                    area: Some(a),
                    genus: None,
                } => Component::collar_area(a),
                ComponentJson::Collar {
                    area: None,
                    genus: Some(g),
                } => Component::collar_genus(g),
                ComponentJson::Collar { .. } => {
                    return Err(serde::de::Error::custom(format!(
                        "component {k}: collar needs exactly one of \"area\" or \"genus\""
                    )))
                }
            };
            components.push(component);
        }
        Ok(PeripheralModel::new(
            components,
            raw.pairs,
            raw.self_constraints,
        ))
    }
}

impl PeripheralModel {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn two_cusps(k: f64, v0_max: f64, v1_max: f64) -> PeripheralModel {
        PeripheralModel::new(
            vec![Component::Cusp, Component::Cusp],
            vec![PairConstraint::new(0, 1, k)],
            vec![
                SelfConstraint::new(0, v0_max),
                SelfConstraint::new(1, v1_max),
            ],
        )
    }

    #[test]
    fn validate_minimal_collar_model() {
        let model = PeripheralModel::new(
            vec![Component::collar_genus(2)],
            vec![],
            vec![SelfConstraint::new(0, 1.0)],
        );
        assert!(model.validate().is_empty());
        let area = model.components[0].area().unwrap();
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn validate_duplicate_pair() {
        let mut model = two_cusps(6.0, 4.0, 3.0);
        model.pairs.push(PairConstraint::new(1, 0, 5.0));
        let violations = model.validate();
        assert_eq!(violations, vec![Violation::DuplicatePair { i: 0, j: 1 }]);
    }

    #[test]
    fn validate_non_positive_constant() {
        let model = two_cusps(0.0, 4.0, 3.0);
        let violations = model.validate();
        assert_eq!(
            violations,
            vec![Violation::NonPositivePairConstant {
                i: 0,
                j: 1,
                constant: 0.0
            }]
        );
    }

    #[test]
    fn validate_missing_and_bad_self() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::Cusp],
            vec![],
            vec![SelfConstraint::new(0, -1.0)],
        );
        let violations = model.validate();
        assert!(violations.contains(&Violation::NonPositiveSelfBound {
            index: 0,
            bound: -1.0
        }));
        assert!(violations.contains(&Violation::MissingSelfConstraint { index: 1 }));
    }

    #[test]
    fn constraints_two_cusps() {
        let cs = two_cusps(6.0, 4.0, 3.0).build_constraints().unwrap();
        let row = cs.pair_row(0, 1).unwrap();
        assert_eq!(row.coeffs, vec![(0, 1.0), (1, 1.0)]);
        assert!((row.bound - 6.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constraints_cusp_collar() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::collar_area(1.0)],
            vec![PairConstraint::new(0, 1, 2.0)],
            vec![SelfConstraint::new(0, 4.0), SelfConstraint::new(1, 1.0)],
        );
        let cs = model.build_constraints().unwrap();
        let row = cs.pair_row(0, 1).unwrap();
        assert_eq!(row.coeffs, vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(row.bound, 0.0); // log(2/2)
    }

    #[test]
    fn constraints_two_collars() {
        let model = PeripheralModel::new(
            vec![Component::collar_area(1.0), Component::collar_area(2.0)],
            vec![PairConstraint::new(0, 1, 3.0)],
            vec![SelfConstraint::new(0, 2.0), SelfConstraint::new(1, 2.0)],
        );
        let cs = model.build_constraints().unwrap();
        let row = cs.pair_row(0, 1).unwrap();
        assert_eq!(row.coeffs, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(row.bound, 3.0);
    }

    #[test]
    fn invalid_model_rejected_with_report() {
        let model = two_cusps(-1.0, 4.0, 3.0);
        match model.build_constraints() {
            Err(ModelError::Invalid(violations)) => assert_eq!(violations.len(), 1),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn tangency_graph_examples() {
        let model = two_cusps(6.0, 10.0, 10.0);
        let g = model
            .tangency_graph(&Configuration::new(vec![2.0, 3.0]), 1e-9)
            .unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        assert!(g.self_loops.is_empty());

        let g = model
            .tangency_graph(&Configuration::new(vec![2.0, 2.0]), 1e-9)
            .unwrap();
        assert!(g.edges.is_empty());

        let single = PeripheralModel::new(
            vec![Component::Cusp],
            vec![],
            vec![SelfConstraint::new(0, 5.0)],
        );
        let g = single
            .tangency_graph(&Configuration::new(vec![5.0]), 1e-9)
            .unwrap();
        assert_eq!(g.self_loops, vec![0]);
    }

    #[test]
    fn tangency_graph_infeasible_names_constraint() {
        let model = two_cusps(6.0, 10.0, 10.0);
        let err = model
            .tangency_graph(&Configuration::new(vec![3.0, 3.0]), 1e-9)
            .unwrap_err();
        match err {
            ModelError::Infeasible { origin, .. } => {
                assert_eq!(origin, ConstraintOrigin::Pair { i: 0, j: 1 });
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn is_maximal_examples() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::collar_area(1.0)],
            vec![],
            vec![SelfConstraint::new(0, 5.0), SelfConstraint::new(1, 2.0)],
        );
        let config = Configuration::new(vec![5.0, 1.5]);
        assert!(model.is_maximal(&config, 0, 1e-9).unwrap());
        assert!(!model.is_maximal(&config, 1, 1e-9).unwrap());
        // Near the bound within a log-coordinate tolerance.
        let config = Configuration::new(vec![5.0 * (1.0 - 1e-14), 1.5]);
        assert!(model.is_maximal(&config, 0, 1e-9).unwrap());
        assert!(model.is_maximal(&config, 7, 1e-9).is_err());
    }

    #[test]
    fn total_volume_examples() {
        let cusp_only = PeripheralModel::new(
            vec![Component::Cusp],
            vec![],
            vec![SelfConstraint::new(0, 5.0)],
        );
        assert_eq!(
            cusp_only.total_volume(&Configuration::new(vec![2.0])),
            2.0
        );

        let collar_only = PeripheralModel::new(
            vec![Component::collar_area(4.0)],
            vec![],
            vec![SelfConstraint::new(0, 5.0)],
        );
        assert_eq!(
            collar_only.total_volume(&Configuration::new(vec![0.0])),
            0.0
        );

        let mixed = PeripheralModel::new(
            vec![Component::collar_area(1.0), Component::Cusp],
            vec![],
            vec![SelfConstraint::new(0, 5.0), SelfConstraint::new(1, 5.0)],
        );
        let total = mixed.total_volume(&Configuration::new(vec![1.0, 1.0]));
        assert!((total - (1.0 + (2.0 + 2.0_f64.sinh()) / 4.0)).abs() < 1e-12);
        assert!((total - 2.4067151).abs() < 1e-6);
    }

    #[test]
    fn gen_random_structure() {
        let single = gen_random(1, 0, 3, 1.0).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single.pairs.is_empty());
        assert_eq!(single.self_constraints.len(), 1);

        let pair = gen_random(2, 0, 5, 1.0).unwrap();
        assert_eq!(pair.pairs.len(), 1);
        assert_eq!(pair.self_constraints.len(), 2);

        assert_eq!(gen_random(3, 0, 42, 1.0), gen_random(3, 0, 42, 1.0));
        assert!(gen_random(0, 0, 1, 1.0).is_err());
        assert!(gen_random(1, 0, 1, 1.5).is_err());
    }

    #[test]
    fn tangency_graph_exact_construction() {
        // Collar sums and self bounds admit exactly-zero residuals, so
        // tol = 0 must recover precisely the constructed active set.
        let d = [0.4375, 0.8125, 0.25]; // dyadic widths
        let model = PeripheralModel::new(
            vec![
                Component::collar_area(1.0),
                Component::collar_area(2.0),
                Component::collar_area(0.5),
            ],
            vec![
                PairConstraint::new(0, 1, d[0] + d[1]),
                PairConstraint::new(1, 2, d[1] + d[2] + 0.5),
            ],
            vec![
                SelfConstraint::new(0, d[0] + 1.0),
                SelfConstraint::new(1, d[1] + 1.0),
                SelfConstraint::new(2, d[2]),
            ],
        );
        let g = model
            .tangency_graph(&Configuration::new(d.to_vec()), 0.0)
            .unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.self_loops, vec![2]);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"components":[{"kind":"cusp"},{"kind":"collar","area":1.5},{"kind":"collar","genus":2}],"pairs":[{"i":0,"j":1,"constant":6.0}],"self":[{"index":0,"bound":4.0},{"index":1,"bound":1.0},{"index":2,"bound":0.5}]}"#;
        let model = PeripheralModel::from_json_str(text).unwrap();
        assert_eq!(model.components[0], Component::Cusp);
        assert_eq!(model.components[1], Component::collar_area(1.5));
        assert_eq!(model.components[2], Component::collar_genus(2));
        let round = model.to_json_string();
        assert_eq!(round, text);
        assert_eq!(PeripheralModel::from_json_str(&round).unwrap(), model);
    }

    #[test]
    fn json_rejects_ambiguous_collar() {
        let text = r#"{"components":[{"kind":"collar"}],"pairs":[],"self":[{"index":0,"bound":1.0}]}"#;
        assert!(PeripheralModel::from_json_str(text).is_err());
        let text = r#"{"components":[{"kind":"collar","area":1.0,"genus":2}],"pairs":[],"self":[{"index":0,"bound":1.0}]}"#;
        assert!(PeripheralModel::from_json_str(text).is_err());
    }

    /// Feasibility checked directly in the original coordinates, as an
    /// independent route against the linearized checks.
    fn feasible_original(model: &PeripheralModel, config: &Configuration, rel: f64) -> bool {
        let v = config.values();
        for pair in &model.pairs {
            let (i, j) = pair.canonical();
            let ok = match (&model.components[i], &model.components[j]) {
                (Component::Cusp, Component::Cusp) => {
                    v[i] * v[j] <= pair.constant * (1.0 + rel)
                }
                (Component::Cusp, Component::Collar(_)) => {
                    v[i] <= pair.constant / 2.0 * (-2.0 * v[j]).exp() * (1.0 + rel)
                }
                (Component::Collar(_), Component::Cusp) => {
                    v[j] <= pair.constant / 2.0 * (-2.0 * v[i]).exp() * (1.0 + rel)
                }
                (Component::Collar(_), Component::Collar(_)) => {
                    v[i] + v[j] <= pair.constant + rel
                }
            };
            if !ok {
                return false;
            }
        }
        for sc in &model.self_constraints {
            let ok = match model.components[sc.index] {
                Component::Cusp => v[sc.index] <= sc.bound * (1.0 + rel),
                Component::Collar(_) => v[sc.index] <= sc.bound + rel,
            };
            if !ok {
                return false;
            }
        }
        true
    }

    proptest! {
        #[test]
        fn gen_random_always_validates(
            n_cusps in 0usize..4,
            n_collars in 0usize..4,
            seed in 0u64..500,
            density in 0.0f64..=1.0,
        ) {
            prop_assume!(n_cusps + n_collars >= 1);
            let model = gen_random(n_cusps, n_collars, seed, density).unwrap();
            prop_assert!(model.validate().is_empty());
        }

        #[test]
        fn constraints_are_a_bijection(seed in 0u64..300) {
            let model = gen_random(2, 2, seed, 0.8).unwrap();
            let cs = model.build_constraints().unwrap();
            prop_assert_eq!(
                cs.rows().len(),
                model.pairs.len() + model.self_constraints.len()
            );
            let mut origins: Vec<_> = cs.rows().iter().map(|r| r.origin).collect();
            origins.sort();
            origins.dedup();
            prop_assert_eq!(origins.len(), cs.rows().len());
        }

        #[test]
        fn feasibility_transfers_between_coordinate_systems(
            seed in 0u64..300,
            scale in -1.5f64..1.5,
        ) {
            let model = gen_random(2, 1, seed, 1.0).unwrap();
            let cs = model.build_constraints().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            let values: Vec<f64> = model.components.iter().map(|c| {
                let r: f64 = rng.gen_range(0.05..2.0);
                if c.is_cusp() { r * scale.exp() } else { r }
            }).collect();
            let config = Configuration::new(values);
            let y = cs.to_linear(&config).unwrap();
            let lin_ok = cs.check_feasible(&y, 0.0).is_ok();
            let orig_ok = feasible_original(&model, &config, 1e-12);
            if lin_ok != orig_ok {
                // Disagreement is only allowed within the float-transfer
                // band around an exactly active constraint.
                let near_active = cs.rows().iter().any(|r| r.residual(&y).abs() < 1e-11);
                prop_assert!(near_active, "feasibility disagreement away from boundary");
            }
        }

        #[test]
        fn from_linear_round_trips(seed in 0u64..200) {
            let model = gen_random(1, 1, seed, 1.0).unwrap();
            let cs = model.build_constraints().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let config = Configuration::new(vec![
                rng.gen_range(0.1..5.0),
                rng.gen_range(0.0..3.0),
            ]);
            let y = cs.to_linear(&config).unwrap();
            let back = cs.from_linear(&y);
            for (a, b) in config.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
