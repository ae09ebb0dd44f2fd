//! One-parameter deformations along tangency trees.
//!
//! When the active tangencies of a configuration form a tree, the whole
//! tree can be deformed by a single additive parameter `t` while every
//! edge stays tangent: a collar at depth `k` from the root moves as
//! `d(t) = d₀ ± t` and a cusp as `v(t) = v₀·e^{±2t}`, the sign flipping
//! across every edge. [`TreeDeformation`] precomputes those rules;
//! [`volume_curve`] samples the total volume along them.
//!
//! [`TriplePoint`] and its operations cover the mutually tangent
//! three-component configurations, whose one-sided volume derivatives
//! have closed forms in the effective sizes (volume for a cusp, modified
//! volume for a collar).

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Component, Configuration, ModelError, PeripheralModel, TangencyGraph,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeformError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("root {root} out of range (model has {len} components)")]
    RootOutOfRange { root: usize, len: usize },
    #[error("edge ({i},{j}) has no pair constraint in the model")]
    EdgeWithoutConstraint { i: usize, j: usize },
    #[error("the active tangencies containing the root form a cycle, not a tree")]
    CycleDetected,
    #[error("edge ({i},{j}) is not connected to the root through the tree")]
    DisconnectedEdge { i: usize, j: usize },
    #[error("component {component}: t = {t} drives its value to {value}")]
    NonPositiveValue {
        component: usize,
        t: f64,
        value: f64,
    },
    #[error("components {i} and {j} are not tangent within tolerance")]
    NotMutuallyTangent { i: usize, j: usize },
    #[error("component {index} is individually maximal")]
    ComponentMaximal { index: usize },
    #[error("pivot {pivot} must be 0, 1 or 2")]
    BadPivot { pivot: usize },
    #[error("indices must be three distinct components")]
    BadTripleIndices,
    #[error("need at least two samples in a non-degenerate range")]
    BadSampleRange,
}

/// How one component moves with the deformation parameter: a collar as
/// `base + sign·t`, a cusp as `base·e^{2·sign·t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentRule {
    pub sign: i8,
    pub base: f64,
}

/// A tangency-preserving deformation of the tree component containing a
/// chosen root. Components outside the tree keep their base values.
#[derive(Debug, Clone)]
pub struct TreeDeformation {
    root: usize,
    base: Configuration,
    rules: Vec<Option<ComponentRule>>,
    is_collar: Vec<bool>,
    sizes: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

impl TreeDeformation {
    /// Builds the propagation rules for `edges`, which must form a tree
    /// containing `root` and consist of constrained pairs of the model.
    pub fn new(
        model: &PeripheralModel,
        config: &Configuration,
        edges: &[(usize, usize)],
        root: usize,
    ) -> Result<Self, DeformError> {
        let n = model.len();
        if root >= n {
            return Err(DeformError::RootOutOfRange { root, len: n });
        }
        if config.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: config.len(),
            }
            .into());
        }
        for &(i, j) in edges {
            if model.pair(i, j).is_none() {
                return Err(DeformError::EdgeWithoutConstraint { i, j });
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }

        let mut rules: Vec<Option<ComponentRule>> = vec![None; n];
        let check_base = |k: usize| -> Result<f64, DeformError> {
            let value = config.values()[k];
            let ok = match model.components[k] {
                Component::Cusp => value > 0.0,
                Component::Collar(_) => value >= 0.0,
            };
            if ok {
                Ok(value)
            } else {
                Err(ModelError::NonPositiveValue { index: k, value }.into())
            }
        };
        rules[root] = Some(ComponentRule {
            sign: 1,
            base: check_base(root)?,
        });
        let mut queue = std::collections::VecDeque::from([root]);
        let mut visited_edges = 0usize;
        while let Some(v) = queue.pop_front() {
            let sign = rules[v].expect("queued vertices have rules").sign;
            for &w in &adjacency[v] {
                if rules[w].is_some() {
                    continue;
                }
                rules[w] = Some(ComponentRule {
                    sign: -sign,
                    base: check_base(w)?,
                });
                visited_edges += 1;
                queue.push_back(w);
            }
        }
        // A tree on k vertices has k − 1 edges; extra edges close cycles,
        // and edges off the root's component are not part of one tree.
        let tree_vertices = rules.iter().filter(|r| r.is_some()).count();
        if visited_edges != tree_vertices - 1 {
            return Err(DeformError::CycleDetected);
        }
        for &(i, j) in edges {
            if rules[i].is_none() || rules[j].is_none() {
                return Err(DeformError::DisconnectedEdge { i, j });
            }
        }
        if edges.len() != tree_vertices - 1 {
            return Err(DeformError::CycleDetected);
        }

        let is_collar = model.components.iter().map(Component::is_collar).collect();
        let sizes = (0..n)
            .map(|k| {
                if rules[k].is_some() {
                    model.effective_size(config, k)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            root,
            base: config.clone(),
            rules,
            is_collar,
            sizes,
            edges: edges.to_vec(),
        })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The rule of component `k`, or `None` when it is not in the tree.
    pub fn rule(&self, k: usize) -> Option<ComponentRule> {
        self.rules[k]
    }

    /// Vertices participating in the deformation.
    pub fn vertices(&self) -> Vec<usize> {
        (0..self.rules.len())
            .filter(|&k| self.rules[k].is_some())
            .collect()
    }

    /// dV/dt at t = 0: twice the signed sum of effective sizes.
    pub fn slope_at_base(&self) -> f64 {
        self.rules
            .iter()
            .zip(&self.sizes)
            .filter_map(|(rule, &s)| rule.map(|r| f64::from(r.sign) * s))
            .sum::<f64>()
            * 2.0
    }

    /// The configuration at parameter `t`. Fails when the deformation
    /// drives a collar width to zero or below.
    pub fn at(&self, t: f64) -> Result<Configuration, DeformError> {
        let mut values = self.base.values().to_vec();
        for (k, rule) in self.rules.iter().enumerate() {
            let Some(rule) = rule else { continue };
            if self.is_collar[k] {
                let d = rule.base + f64::from(rule.sign) * t;
                if d < 0.0 || (d == 0.0 && rule.base != 0.0) {
                    return Err(DeformError::NonPositiveValue {
                        component: k,
                        t,
                        value: d,
                    });
                }
                values[k] = d;
            } else {
                values[k] = rule.base * (2.0 * f64::from(rule.sign) * t).exp();
            }
        }
        Ok(Configuration::new(values))
    }
}

/// Deformation of the connected tangency-tree containing `root` in
/// `graph`; errors if that component has a cycle.
pub fn deformation_from_graph(
    model: &PeripheralModel,
    config: &Configuration,
    graph: &TangencyGraph,
    root: usize,
) -> Result<TreeDeformation, DeformError> {
    if root >= graph.vertex_count {
        return Err(DeformError::RootOutOfRange {
            root,
            len: graph.vertex_count,
        });
    }
    let component = graph
        .connected_components()
        .into_iter()
        .find(|c| c.contains(&root))
        .expect("every vertex lies in a component");
    let edges = graph.edges_within(&component);
    TreeDeformation::new(model, config, &edges, root)
}

/// Deforms the tree containing `root` by parameter `t`; every tree edge
/// stays active, components outside the tree are unchanged.
pub fn propagate(
    model: &PeripheralModel,
    config: &Configuration,
    graph: &TangencyGraph,
    root: usize,
    t: f64,
) -> Result<Configuration, DeformError> {
    deformation_from_graph(model, config, graph, root)?.at(t)
}

/// Samples `(t, V(t))` uniformly over `t_range` along the tree
/// deformation rooted at `root`.
pub fn volume_curve(
    model: &PeripheralModel,
    config: &Configuration,
    graph: &TangencyGraph,
    root: usize,
    t_range: (f64, f64),
    n_samples: usize,
) -> Result<Vec<(f64, f64)>, DeformError> {
    let deformation = deformation_from_graph(model, config, graph, root)?;
    sample_curve(model, &deformation, t_range, n_samples)
}

/// Samples a prebuilt deformation; see [`volume_curve`].
pub fn sample_curve(
    model: &PeripheralModel,
    deformation: &TreeDeformation,
    t_range: (f64, f64),
    n_samples: usize,
) -> Result<Vec<(f64, f64)>, DeformError> {
    let (lo, hi) = t_range;
    if n_samples < 2 || !(lo < hi) {
        return Err(DeformError::BadSampleRange);
    }
    let mut out = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = lo + (hi - lo) * k as f64 / (n_samples - 1) as f64;
        let config = deformation.at(t)?;
        out.push((t, model.total_volume(&config)));
    }
    Ok(out)
}

/// Writes a sampled curve as CSV with header `t,V`, `.` decimals and
/// `\n` line endings, each number as the shortest round-trip decimal.
pub fn write_curve_csv<W: io::Write>(points: &[(f64, f64)], mut writer: W) -> io::Result<()> {
    writer.write_all(b"t,V\n")?;
    for &(t, v) in points {
        writeln!(writer, "{t},{v}")?;
    }
    Ok(())
}

/// One member of a mutually tangent triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleMember {
    pub index: usize,
    pub component: Component,
    /// Width for a collar, volume for a cusp.
    pub base: f64,
    pub maximal: bool,
}

impl TripleMember {
    fn effective_size(&self) -> f64 {
        match self.component {
            Component::Cusp => self.base,
            Component::Collar(size) => {
                size.area() / 4.0 * (1.0 + (2.0 * self.base).cosh())
            }
        }
    }
}

/// Three components that are pairwise tangent at a base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TriplePoint {
    pub members: [TripleMember; 3],
}

impl TriplePoint {
    /// Builds the triple from a configuration, verifying that all three
    /// pairs are tangent within `tol` (linearized residuals).
    pub fn from_configuration(
        model: &PeripheralModel,
        config: &Configuration,
        indices: [usize; 3],
        tol: f64,
    ) -> Result<Self, DeformError> {
        let n = model.len();
        let [a, b, c] = indices;
        if a >= n || b >= n || c >= n || a == b || a == c || b == c {
            return Err(DeformError::BadTripleIndices);
        }
        let cs = model.build_constraints()?;
        let y = cs.to_linear(config)?;
        for &(i, j) in &[(a, b), (a, c), (b, c)] {
            let active = cs
                .pair_row(i, j)
                .map_or(false, |row| row.residual(&y).abs() <= tol);
            if !active {
                return Err(DeformError::NotMutuallyTangent { i, j });
            }
        }
        let members = indices.map(|k| TripleMember {
            index: k,
            component: model.components[k],
            base: config.values()[k],
            maximal: cs.self_row(k).residual(&y).abs() <= tol,
        });
        Ok(Self { members })
    }

    /// Trusted constructor for members assembled by hand.
    pub fn from_members(members: [TripleMember; 3]) -> Self {
        Self { members }
    }

    /// Effective sizes `s`: volume for cusps, modified volume for collars.
    pub fn effective_sizes(&self) -> [f64; 3] {
        [
            self.members[0].effective_size(),
            self.members[1].effective_size(),
            self.members[2].effective_size(),
        ]
    }

    fn ensure_not_maximal(&self) -> Result<(), DeformError> {
        for m in &self.members {
            if m.maximal {
                return Err(DeformError::ComponentMaximal { index: m.index });
            }
        }
        Ok(())
    }
}

/// One-sided derivatives `(V'₋, V'₊)` of the total volume with respect to
/// the pivot's natural parameter (its volume for a cusp, its width for a
/// collar), with the larger-sized partner in the role of the component
/// that stays tangent to the pivot on the shrinking side.
///
/// With effective sizes `s₁` (pivot) and `s₂ ≥ s₃` (partners):
/// a cusp pivot gives `(1 − s₂/s₁ + s₃/s₁, 1 − s₂/s₁ − s₃/s₁)`, a collar
/// pivot `(2(s₁ − s₂ + s₃), 2(s₁ − s₂ − s₃))`.
pub fn one_sided_derivatives_three(
    triple: &TriplePoint,
    pivot_index: usize,
) -> Result<(f64, f64), DeformError> {
    if pivot_index >= 3 {
        return Err(DeformError::BadPivot { pivot: pivot_index });
    }
    triple.ensure_not_maximal()?;
    let sizes = triple.effective_sizes();
    let s1 = sizes[pivot_index];
    let mut partners: Vec<f64> = (0..3)
        .filter(|&k| k != pivot_index)
        .map(|k| sizes[k])
        .collect();
    partners.sort_by(|x, y| y.total_cmp(x));
    let (s2, s3) = (partners[0], partners[1]);
    match triple.members[pivot_index].component {
        Component::Cusp => Ok((1.0 - s2 / s1 + s3 / s1, 1.0 - s2 / s1 - s3 / s1)),
        Component::Collar(_) => Ok((2.0 * (s1 - s2 + s3), 2.0 * (s1 - s2 - s3))),
    }
}

/// Verdict of the triangle test on a mutually tangent triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleVerdict {
    LocalMax,
    NotLocalMax,
    Degenerate,
}

/// Classifies a mutually tangent, individually non-maximal triple: a
/// local maximum exactly when the three effective sizes satisfy the
/// strict triangle inequalities (equivalently `V'₊ < 0 < V'₋` at every
/// pivot). Equality within `tol` (relative to the perimeter) is reported
/// as [`TripleVerdict::Degenerate`] rather than guessed either way.
pub fn classify_triple(triple: &TriplePoint, tol: f64) -> Result<TripleVerdict, DeformError> {
    triple.ensure_not_maximal()?;
    let mut sizes = triple.effective_sizes();
    sizes.sort_by(|x, y| y.total_cmp(x));
    let slack = sizes[1] + sizes[2] - sizes[0];
    let scale = f64::max(1.0, sizes[0] + sizes[1] + sizes[2]);
    if slack.abs() <= tol * scale {
        Ok(TripleVerdict::Degenerate)
    } else if slack > 0.0 {
        Ok(TripleVerdict::LocalMax)
    } else {
        Ok(TripleVerdict::NotLocalMax)
    }
}

/// Constructs a configuration of `model` in which exactly the given tree
/// of pair constraints is active: tree values are solved from the
/// equalities as a function of the root coordinate, all other components
/// sit at small background values, and the root coordinate is centred in
/// the interval keeping every other constraint strictly slack (margin
/// 1e-3). Returns `None` when no such interval exists.
pub fn seed_tree_configuration(
    model: &PeripheralModel,
    edges: &[(usize, usize)],
    root: usize,
) -> Result<Option<Configuration>, DeformError> {
    const MARGIN: f64 = 1e-3;
    let n = model.len();
    if root >= n {
        return Err(DeformError::RootOutOfRange { root, len: n });
    }
    let cs = model.build_constraints()?;
    for &(i, j) in edges {
        if model.pair(i, j).is_none() {
            return Err(DeformError::EdgeWithoutConstraint { i, j });
        }
    }

    // Linear parameterization y_k(τ) = offset_k + slope_k·τ of the tree,
    // with τ the root's linearized coordinate.
    let mut offset = vec![0.0_f64; n];
    let mut slope = vec![0.0_f64; n];
    let mut in_tree = vec![false; n];
    in_tree[root] = true;
    slope[root] = 1.0;
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in edges {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut queue = std::collections::VecDeque::from([root]);
    let mut visited_edges = 0usize;
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if in_tree[w] {
                continue;
            }
            let row = cs.pair_row(v, w).expect("edge checked above");
            let coeff = |k: usize| {
                row.coeffs
                    .iter()
                    .find(|&&(idx, _)| idx == k)
                    .map(|&(_, c)| c)
                    .expect("pair row touches both endpoints")
            };
            let (cv, cw) = (coeff(v), coeff(w));
            offset[w] = (row.bound - cv * offset[v]) / cw;
            slope[w] = -cv * slope[v] / cw;
            in_tree[w] = true;
            visited_edges += 1;
            queue.push_back(w);
        }
    }
    let tree_vertices = in_tree.iter().filter(|&&t| t).count();
    if visited_edges != tree_vertices - 1 || edges.len() != tree_vertices - 1 {
        return Err(DeformError::CycleDetected);
    }
    for &(i, j) in edges {
        if !in_tree[i] || !in_tree[j] {
            return Err(DeformError::DisconnectedEdge { i, j });
        }
    }

    // Background values for everything off the tree.
    for k in 0..n {
        if !in_tree[k] {
            offset[k] = match model.components[k] {
                Component::Cusp => -8.0,
                Component::Collar(_) => 1e-3,
            };
            slope[k] = 0.0;
        }
    }

    let edge_set: std::collections::HashSet<(usize, usize)> = edges
        .iter()
        .map(|&(i, j)| (i.min(j), i.max(j)))
        .collect();
    let mut lo = -20.0_f64;
    let mut hi = 20.0_f64;
    let apply = |c: f64, limit: f64, lo: &mut f64, hi: &mut f64| {
        // c·τ ≤ limit
        if c.abs() < 1e-12 {
            if limit < 0.0 {
                return false;
            }
        } else if c > 0.0 {
            *hi = hi.min(limit / c);
        } else {
            *lo = lo.max(limit / c);
        }
        true
    };
    for row in cs.rows() {
        if let crate::model::ConstraintOrigin::Pair { i, j } = row.origin {
            if edge_set.contains(&(i.min(j), i.max(j))) {
                continue;
            }
        }
        let mut c = 0.0;
        let mut e = 0.0;
        for &(k, coeff) in &row.coeffs {
            c += coeff * slope[k];
            e += coeff * offset[k];
        }
        if !apply(c, row.bound - MARGIN - e, &mut lo, &mut hi) {
            return Ok(None);
        }
    }
    // Keep tree collars strictly positive so the tree stays deformable.
    for k in 0..n {
        if in_tree[k] && model.components[k].is_collar() {
            // offset + slope·τ ≥ MARGIN  ⇔  −slope·τ ≤ offset − MARGIN
            if !apply(-slope[k], offset[k] - MARGIN, &mut lo, &mut hi) {
                return Ok(None);
            }
        }
    }
    if !(lo + 1e-9 < hi) {
        return Ok(None);
    }
    let tau = 0.5 * (lo + hi);
    let y: Vec<f64> = (0..n).map(|k| offset[k] + slope[k] * tau).collect();
    Ok(Some(cs.from_linear(&y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_random, PairConstraint, SelfConstraint};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn two_cusp_model(k: f64) -> PeripheralModel {
        PeripheralModel::new(
            vec![Component::Cusp, Component::Cusp],
            vec![PairConstraint::new(0, 1, k)],
            vec![
                SelfConstraint::new(0, 100.0),
                SelfConstraint::new(1, 100.0),
            ],
        )
    }

    #[test]
    fn propagate_conserves_cusp_product() {
        let model = two_cusp_model(6.0);
        let config = Configuration::new(vec![2.0, 3.0]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let t = 0.5 * 2.0_f64.ln();
        let out = propagate(&model, &config, &graph, 0, t).unwrap();
        assert!((out.values()[0] - 4.0).abs() < 1e-12);
        assert!((out.values()[1] - 1.5).abs() < 1e-12);
        assert!((out.values()[0] * out.values()[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn propagate_cusp_collar_chain() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::collar_area(1.0)],
            vec![PairConstraint::new(0, 1, 2.0)],
            vec![SelfConstraint::new(0, 10.0), SelfConstraint::new(1, 10.0)],
        );
        let config = Configuration::new(vec![1.0, 0.0]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let out = propagate(&model, &config, &graph, 1, 0.5).unwrap();
        assert!((out.values()[0] - (-1.0_f64).exp()).abs() < 1e-14);
        assert!((out.values()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn propagate_identity_at_zero() {
        let model = two_cusp_model(6.0);
        let config = Configuration::new(vec![2.0, 3.0]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let out = propagate(&model, &config, &graph, 1, 0.0).unwrap();
        assert_eq!(out, config);
    }

    #[test]
    fn propagate_rejects_cycles() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::Cusp, Component::Cusp],
            vec![
                PairConstraint::new(0, 1, 1.0),
                PairConstraint::new(0, 2, 1.0),
                PairConstraint::new(1, 2, 1.0),
            ],
            vec![
                SelfConstraint::new(0, 10.0),
                SelfConstraint::new(1, 10.0),
                SelfConstraint::new(2, 10.0),
            ],
        );
        let config = Configuration::new(vec![1.0, 1.0, 1.0]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        assert_eq!(graph.edges.len(), 3);
        match propagate(&model, &config, &graph, 0, 0.1) {
            Err(DeformError::CycleDetected) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn propagate_rejects_nonpositive_width() {
        let model = PeripheralModel::new(
            vec![Component::collar_area(1.0), Component::collar_area(1.0)],
            vec![PairConstraint::new(0, 1, 1.0)],
            vec![SelfConstraint::new(0, 10.0), SelfConstraint::new(1, 10.0)],
        );
        let config = Configuration::new(vec![0.4, 0.6]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        match propagate(&model, &config, &graph, 0, -0.5) {
            Err(DeformError::NonPositiveValue { component: 0, .. }) => {}
            other => panic!("expected width error, got {other:?}"),
        }
        // Partner hits zero on the other side.
        match propagate(&model, &config, &graph, 0, 0.7) {
            Err(DeformError::NonPositiveValue { component: 1, .. }) => {}
            other => panic!("expected width error, got {other:?}"),
        }
    }

    #[test]
    fn sign_parity_along_chain() {
        // Chain 0-1-2-3 of collars; signs must alternate with depth.
        let d = [0.5, 0.6, 0.7, 0.8];
        let model = PeripheralModel::new(
            vec![
                Component::collar_area(1.0),
                Component::collar_area(1.0),
                Component::collar_area(1.0),
                Component::collar_area(1.0),
            ],
            vec![
                PairConstraint::new(0, 1, d[0] + d[1]),
                PairConstraint::new(1, 2, d[1] + d[2]),
                PairConstraint::new(2, 3, d[2] + d[3]),
            ],
            vec![
                SelfConstraint::new(0, 10.0),
                SelfConstraint::new(1, 10.0),
                SelfConstraint::new(2, 10.0),
                SelfConstraint::new(3, 10.0),
            ],
        );
        let config = Configuration::new(d.to_vec());
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let deformation = deformation_from_graph(&model, &config, &graph, 0).unwrap();
        for (k, expected) in [(0, 1), (1, -1), (2, 1), (3, -1)] {
            assert_eq!(deformation.rule(k).unwrap().sign, expected);
        }
    }

    #[test]
    fn volume_curve_symmetric_for_equal_cusps() {
        let model = two_cusp_model(4.0);
        let config = Configuration::new(vec![2.0, 2.0]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let curve = volume_curve(&model, &config, &graph, 0, (-0.5, 0.5), 101).unwrap();
        for k in 0..curve.len() {
            let (t, v) = curve[k];
            let (t2, v2) = curve[curve.len() - 1 - k];
            assert!((t + t2).abs() < 1e-12);
            assert!((v - v2).abs() < 1e-12 * v.max(1.0));
        }
        // Minimum at t = 0.
        let mid = curve[50].1;
        assert!(curve.iter().all(|&(_, v)| v >= mid - 1e-12));
    }

    #[test]
    fn volume_curve_single_collar_increasing() {
        let model = PeripheralModel::new(
            vec![Component::collar_area(2.0)],
            vec![],
            vec![SelfConstraint::new(0, 10.0)],
        );
        let config = Configuration::new(vec![0.5]);
        let graph = model.tangency_graph(&config, 1e-9).unwrap();
        let curve = volume_curve(&model, &config, &graph, 0, (-0.2, 0.8), 50).unwrap();
        for pair in curve.windows(2) {
            assert!(pair[1].1 > pair[0].1);
        }
        let expected: Vec<f64> = curve
            .iter()
            .map(|&(t, _)| {
                crate::geometry::collar_volume(2.0, 0.5 + t).unwrap()
            })
            .collect();
        for (&(_, v), e) in curve.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_csv_format() {
        let mut buf = Vec::new();
        write_curve_csv(&[(0.0, 1.0), (0.5, 2.25)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,V\n0,1\n0.5,2.25\n");
    }

    #[test]
    fn one_sided_derivatives_examples() {
        // Three cusps with sizes (3, 5, 4).
        let cusps = TriplePoint::from_members([
            TripleMember {
                index: 0,
                component: Component::Cusp,
                base: 3.0,
                maximal: false,
            },
            TripleMember {
                index: 1,
                component: Component::Cusp,
                base: 5.0,
                maximal: false,
            },
            TripleMember {
                index: 2,
                component: Component::Cusp,
                base: 4.0,
                maximal: false,
            },
        ]);
        let (minus, plus) = one_sided_derivatives_three(&cusps, 0).unwrap();
        assert!((minus - 2.0 / 3.0).abs() < 1e-12);
        assert!((plus - (-2.0)).abs() < 1e-12);

        // Three collars with modified volumes (3, 5, 4): pick widths and
        // solve the area from the modified-volume formula.
        let collar = |target: f64, d: f64| {
            let area = 4.0 * target / (1.0 + (2.0 * d).cosh());
            (Component::collar_area(area), d)
        };
        let specs = [collar(3.0, 0.4), collar(5.0, 0.7), collar(4.0, 0.3)];
        let collars = TriplePoint::from_members([0, 1, 2].map(|k| TripleMember {
            index: k,
            component: specs[k].0,
            base: specs[k].1,
            maximal: false,
        }));
        let sizes = collars.effective_sizes();
        assert!((sizes[0] - 3.0).abs() < 1e-12);
        let (minus, plus) = one_sided_derivatives_three(&collars, 0).unwrap();
        assert!((minus - 4.0).abs() < 1e-11);
        assert!((plus - (-12.0)).abs() < 1e-11);
    }

    #[test]
    fn classify_triple_examples() {
        let cusp_triple = |sizes: [f64; 3]| {
            TriplePoint::from_members([0, 1, 2].map(|k| TripleMember {
                index: k,
                component: Component::Cusp,
                base: sizes[k],
                maximal: false,
            }))
        };
        assert_eq!(
            classify_triple(&cusp_triple([3.0, 5.0, 4.0]), 1e-9).unwrap(),
            TripleVerdict::LocalMax
        );
        assert_eq!(
            classify_triple(&cusp_triple([1.0, 5.0, 2.0]), 1e-9).unwrap(),
            TripleVerdict::NotLocalMax
        );
        assert_eq!(
            classify_triple(&cusp_triple([2.0, 5.0, 3.0]), 1e-9).unwrap(),
            TripleVerdict::Degenerate
        );
        let mut maximal = cusp_triple([3.0, 5.0, 4.0]);
        maximal.members[1].maximal = true;
        assert_eq!(
            classify_triple(&maximal, 1e-9),
            Err(DeformError::ComponentMaximal { index: 1 })
        );
    }

    #[test]
    fn triple_from_configuration_checks_tangency() {
        let model = PeripheralModel::new(
            vec![Component::Cusp, Component::Cusp, Component::Cusp],
            vec![
                PairConstraint::new(0, 1, 6.0),
                PairConstraint::new(0, 2, 8.0),
                PairConstraint::new(1, 2, 12.0),
            ],
            vec![
                SelfConstraint::new(0, 100.0),
                SelfConstraint::new(1, 100.0),
                SelfConstraint::new(2, 100.0),
            ],
        );
        let config = Configuration::new(vec![2.0, 3.0, 4.0]);
        let triple =
            TriplePoint::from_configuration(&model, &config, [0, 1, 2], 1e-9).unwrap();
        assert_eq!(triple.effective_sizes(), [2.0, 3.0, 4.0]);

        let slack = Configuration::new(vec![2.0, 3.0, 3.0]);
        match TriplePoint::from_configuration(&model, &slack, [0, 1, 2], 1e-9) {
            Err(DeformError::NotMutuallyTangent { .. }) => {}
            other => panic!("expected tangency error, got {other:?}"),
        }
    }

    /// Conservation along random tree deformations, checked in the
    /// original coordinates.
    #[test]
    fn tree_deformations_conserve_pair_invariants() {
        let mut rng = StdRng::seed_from_u64(23);
        let mut done = 0;
        let mut attempts = 0;
        while done < 20 && attempts < 400 {
            attempts += 1;
            let n_cusps = rng.gen_range(0..=3usize);
            let n_collars = rng.gen_range(0..=3usize);
            if n_cusps + n_collars < 2 {
                continue;
            }
            let model = gen_random(n_cusps, n_collars, rng.gen(), 0.9).unwrap();
            let Some((edges, root)) = random_tree(&model, &mut rng) else {
                continue;
            };
            let Some(config) = seed_tree_configuration(&model, &edges, root).unwrap() else {
                continue;
            };
            let deformation =
                TreeDeformation::new(&model, &config, &edges, root).unwrap();
            for &t in &[-0.05, -0.01, 0.02, 0.06] {
                let Ok(moved) = deformation.at(t) else { continue };
                for &(i, j) in &edges {
                    let before = pair_invariant(&model, &config, i, j);
                    let after = pair_invariant(&model, &moved, i, j);
                    assert!(
                        (before - after).abs() <= 1e-12 * before.abs().max(1.0),
                        "edge ({i},{j}): {before} vs {after}"
                    );
                }
            }
            done += 1;
        }
        assert!(done >= 10, "only {done} instances in {attempts} attempts");
    }

    /// Product for cusp/cusp, sum for collar/collar, v·e^{2d} for mixed.
    fn pair_invariant(
        model: &PeripheralModel,
        config: &Configuration,
        i: usize,
        j: usize,
    ) -> f64 {
        let v = config.values();
        match (&model.components[i], &model.components[j]) {
            (Component::Cusp, Component::Cusp) => v[i] * v[j],
            (Component::Cusp, Component::Collar(_)) => v[i] * (2.0 * v[j]).exp(),
            (Component::Collar(_), Component::Cusp) => v[j] * (2.0 * v[i]).exp(),
            (Component::Collar(_), Component::Collar(_)) => v[i] + v[j],
        }
    }

    /// Random spanning tree of a random connected subset of constrained
    /// pairs, if one exists.
    fn random_tree(
        model: &PeripheralModel,
        rng: &mut StdRng,
    ) -> Option<(Vec<(usize, usize)>, usize)> {
        let mut pairs: Vec<(usize, usize)> =
            model.pairs.iter().map(|p| p.canonical()).collect();
        if pairs.is_empty() {
            return None;
        }
        use rand::seq::SliceRandom;
        pairs.shuffle(rng);
        let mut edges = Vec::new();
        let mut member: Vec<Option<usize>> = vec![None; model.len()];
        let mut next_class = 0usize;
        for (i, j) in pairs {
            match (member[i], member[j]) {
                (None, None) => {
                    member[i] = Some(next_class);
                    member[j] = Some(next_class);
                    next_class += 1;
                    edges.push((i, j));
                }
                (Some(c), None) => {
                    member[j] = Some(c);
                    edges.push((i, j));
                }
                (None, Some(c)) => {
                    member[i] = Some(c);
                    edges.push((i, j));
                }
                (Some(a), Some(b)) if a != b => {
                    for m in member.iter_mut().flatten() {
                        if *m == b {
                            *m = a;
                        }
                    }
                    edges.push((i, j));
                }
                _ => {}
            }
            if edges.len() >= 3 {
                break;
            }
        }
        // Keep only the component of the first edge, so the edges form
        // one tree.
        let (a, _) = edges[0];
        let class = member[a];
        let edges: Vec<_> = edges
            .into_iter()
            .filter(|&(i, _)| member[i] == class)
            .collect();
        let root = edges[0].0;
        Some((edges, root))
    }

    #[test]
    fn curve_convexity_on_random_trees() {
        let mut rng = StdRng::seed_from_u64(31);
        let mut done = 0;
        let mut attempts = 0;
        while done < 20 && attempts < 400 {
            attempts += 1;
            let model = match gen_random(rng.gen_range(0..=3), rng.gen_range(0..=3), rng.gen(), 0.9)
            {
                Ok(m) if m.len() >= 2 => m,
                _ => continue,
            };
            let Some((edges, root)) = random_tree(&model, &mut rng) else {
                continue;
            };
            let Some(config) = seed_tree_configuration(&model, &edges, root).unwrap() else {
                continue;
            };
            let deformation = TreeDeformation::new(&model, &config, &edges, root).unwrap();
            let Ok(curve) = sample_curve(&model, &deformation, (-0.04, 0.04), 81) else {
                continue;
            };
            let h = curve[1].0 - curve[0].0;
            for w in curve.windows(3) {
                let second = w[2].1 - 2.0 * w[1].1 + w[0].1;
                assert!(
                    second >= -1e-10 * w[1].1.abs().max(1.0) * (h / 1e-3),
                    "non-convex sample: {second}"
                );
            }
            done += 1;
        }
        assert!(done >= 10, "only {done} instances in {attempts} attempts");
    }

    #[test]
    fn seed_tree_yields_exact_active_set() {
        let mut rng = StdRng::seed_from_u64(37);
        let mut done = 0;
        for _ in 0..200 {
            let model = match gen_random(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen(), 1.0)
            {
                Ok(m) if m.len() >= 2 => m,
                _ => continue,
            };
            let Some((edges, root)) = random_tree(&model, &mut rng) else {
                continue;
            };
            let Some(config) = seed_tree_configuration(&model, &edges, root).unwrap() else {
                continue;
            };
            let graph = model.tangency_graph(&config, 1e-9).unwrap();
            let mut expected: Vec<_> = edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
            expected.sort_unstable();
            let mut got = graph.edges.clone();
            got.sort_unstable();
            assert_eq!(got, expected);
            assert!(graph.self_loops.is_empty());
            done += 1;
            if done >= 30 {
                break;
            }
        }
        assert!(done >= 10, "too few seeded instances: {done}");
    }
}
