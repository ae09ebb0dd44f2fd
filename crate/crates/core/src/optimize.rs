//! Maximization of the total peripheral volume and classification of
//! candidate local maxima.
//!
//! The objective is strictly increasing in every coordinate and convex in
//! the linearized coordinates, so its maximum over the constraint
//! polytope sits at a vertex of the upper frontier. [`solve_global`]
//! enumerates the vertices exactly; [`greedy`] maximizes one component at
//! a time in a given order. [`classify`] decides whether a configuration
//! can be a local maximum from its tangency structure: a tree of
//! tangencies with no maximal vertex always admits an improving
//! deformation, and the remaining two- and three-component patterns are
//! settled by sign tests on the effective sizes (the one-sided volume
//! derivatives along the releasing deformations). Everything else is
//! reported as inconclusive and refined by a feasible random probe.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itertools::Itertools;

use crate::deform::{classify_triple, DeformError, TreeDeformation, TriplePoint, TripleVerdict};
use crate::model::{
    Component, Configuration, ConstraintOrigin, ConstraintSet, CoordKind, ModelError,
    PeripheralModel, TangencyGraph,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error("no feasible frontier vertex (contradictory constants)")]
    NoFeasibleVertex,
    #[error("order must be a permutation of the component indices")]
    InvalidOrder,
}

/// How a solution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FrontierEnum,
    Greedy,
    Probe,
}

/// A feasible configuration with its total volume and active constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub config: Configuration,
    pub total: f64,
    pub active_set: Vec<ConstraintOrigin>,
    pub method: SolveMethod,
}

/// Classification verdict for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LocalMax,
    NotLocalMax,
    Degenerate,
    Inconclusive,
}

/// Connectivity summary of one tangency-graph component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub vertices: Vec<usize>,
    pub is_tree: bool,
    pub has_maximal: bool,
}

/// Result of the triangle test on three effective sizes, `slack` being
/// the margin of the binding inequality (positive when it holds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub sizes: Vec<f64>,
    pub slack: f64,
}

/// A strictly improving feasible move backing a `NotLocalMax` verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImprovingDirection {
    /// Deform the tree of the given edges from `root` in direction
    /// `sign`; tangencies along the edges are preserved.
    Tree {
        root: usize,
        sign: i8,
        edges: Vec<(usize, usize)>,
    },
    /// A concrete feasible configuration with larger total volume.
    Probe { config: Configuration, total: f64 },
}

/// Probe summary attached to the evidence when a probe ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub improved: bool,
    pub trials: usize,
}

/// Structured support for a classification verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub maximal: Vec<usize>,
    pub graph: TangencyGraph,
    pub components: Vec<ComponentReport>,
    pub triangle: Option<TriangleReport>,
    pub improving: Option<ImprovingDirection>,
    pub probe: Option<ProbeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub evidence: Evidence,
}

/// Outcome of a random feasible probe around a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub improved: bool,
    pub witness: Option<Configuration>,
    pub witness_total: Option<f64>,
    pub trials: usize,
}

const FEAS_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;
/// Pivot-ratio threshold above which an active-set system is treated as
/// numerically singular and skipped.
const COND_LIMIT: f64 = 1e12;

/// One row of the enumeration system: the constraint rows plus implicit
/// `d ≥ 0` floors for collars (the optimum can sit on a width-zero
/// boundary when the constants are not mutually consistent).
struct EnumRow {
    coeffs: Vec<(usize, f64)>,
    bound: f64,
}

enum LinearOutcome {
    Solved(Vec<f64>),
    Singular,
    NearSingular,
}

fn solve_square(rows: &[&EnumRow], dim: usize) -> LinearOutcome {
    let mut a = vec![vec![0.0_f64; dim]; dim];
    let mut b = vec![0.0_f64; dim];
    for (r, row) in rows.iter().enumerate() {
        for &(k, c) in &row.coeffs {
            a[r][k] = c;
        }
        b[r] = row.bound;
    }
    let mut max_pivot = 0.0_f64;
    let mut min_pivot = f64::INFINITY;
    for col in 0..dim {
        let (pivot_row, pivot_abs) = (col..dim)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty range");
        if pivot_abs < 1e-300 {
            return LinearOutcome::Singular;
        }
        max_pivot = max_pivot.max(pivot_abs);
        min_pivot = min_pivot.min(pivot_abs);
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in (col + 1)..dim {
            let factor = a[r][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                a[r][k] -= factor * a[col][k];
            }
            b[r] -= factor * b[col];
        }
    }
    if max_pivot / min_pivot > COND_LIMIT {
        return LinearOutcome::NearSingular;
    }
    let mut x = vec![0.0_f64; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for k in (col + 1)..dim {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    LinearOutcome::Solved(x)
}

fn enumeration_rows(cs: &ConstraintSet) -> Vec<EnumRow> {
    let mut rows: Vec<EnumRow> = cs
        .rows()
        .iter()
        .map(|r| EnumRow {
            coeffs: r.coeffs.clone(),
            bound: r.bound,
        })
        .collect();
    for (k, kind) in cs.coords().iter().enumerate() {
        if *kind == CoordKind::Width {
            rows.push(EnumRow {
                coeffs: vec![(k, -1.0)],
                bound: 0.0,
            });
        }
    }
    rows
}

fn feasible_point(cs: &ConstraintSet, y: &[f64]) -> bool {
    cs.check_feasible(y, FEAS_TOL).is_ok()
        && cs
            .coords()
            .iter()
            .zip(y)
            .all(|(kind, &c)| *kind != CoordKind::Width || c >= -FEAS_TOL)
}

fn active_set_at(cs: &ConstraintSet, y: &[f64], tol: f64) -> Vec<ConstraintOrigin> {
    let mut active: Vec<ConstraintOrigin> = cs
        .rows()
        .iter()
        .filter(|r| r.residual(y).abs() <= tol)
        .map(|r| r.origin)
        .collect();
    active.sort();
    active
}

fn lex_smaller(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn clamp_widths(cs: &ConstraintSet, y: &mut [f64]) {
    for (k, kind) in cs.coords().iter().enumerate() {
        if *kind == CoordKind::Width && y[k] < 0.0 {
            y[k] = 0.0;
        }
    }
}

/// Exact global maximization of the total volume over the feasible
/// region, by enumerating the frontier vertices: every subset of
/// `n` constraints (including the implicit collar floors) with a
/// nonsingular linear system is solved, kept if feasible, and the best
/// total wins, ties broken by the lexicographically smallest
/// configuration. Exhaustive and intended for instances with at most
/// about 8 components.
pub fn solve_global(model: &PeripheralModel) -> Result<Solution, OptimizeError> {
    let cs = model.build_constraints()?;
    let n = cs.dim();
    let rows = enumeration_rows(&cs);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut near_singular = 0usize;

    for combo in (0..rows.len()).combinations(n) {
        let selected: Vec<&EnumRow> = combo.iter().map(|&r| &rows[r]).collect();
        let mut y = match solve_square(&selected, n) {
            LinearOutcome::Solved(y) => y,
            LinearOutcome::Singular => continue,
            LinearOutcome::NearSingular => {
                near_singular += 1;
                continue;
            }
        };
        if !feasible_point(&cs, &y) {
            continue;
        }
        clamp_widths(&cs, &mut y);
        let total = model.total_volume(&cs.from_linear(&y));
        let replace = match &best {
            None => true,
            Some((best_y, best_total)) => {
                let tie = TIE_TOL * f64::max(1.0, best_total.abs());
                total > best_total + tie
                    || ((total - best_total).abs() <= tie && lex_smaller(&y, best_y))
            }
        };
        if replace {
            best = Some((y, total));
        }
    }
    if near_singular > 0 {
        log::warn!("solve_global skipped {near_singular} near-singular active sets");
    }
    let (y, total) = best.ok_or(OptimizeError::NoFeasibleVertex)?;
    Ok(Solution {
        active_set: active_set_at(&cs, &y, FEAS_TOL),
        config: cs.from_linear(&y),
        total,
        method: SolveMethod::FrontierEnum,
    })
}

/// The largest linearized value component `c` may take given the values
/// already fixed; unfixed partners contribute their degenerate limit
/// (an absent cusp never constrains, an absent collar pins a cusp at
/// `R/2` and a collar at `D`).
fn step_bound(
    model: &PeripheralModel,
    cs: &ConstraintSet,
    fixed: &[Option<f64>],
    c: usize,
) -> f64 {
    let mut ub = cs.self_row(c).bound;
    for pair in &model.pairs {
        let (i, j) = pair.canonical();
        let other = if i == c {
            j
        } else if j == c {
            i
        } else {
            continue;
        };
        let row = cs.pair_row(i, j).expect("constrained pair has a row");
        let coeff = |k: usize| {
            row.coeffs
                .iter()
                .find(|&&(idx, _)| idx == k)
                .map(|&(_, v)| v)
                .expect("row touches its endpoints")
        };
        let limit = match fixed[other] {
            Some(y_other) => (row.bound - coeff(other) * y_other) / coeff(c),
            None => match model.components[other] {
                // Width 0 for an unfixed collar partner; an unfixed cusp
                // partner can vanish entirely and never constrains.
                Component::Collar(_) => row.bound / coeff(c),
                Component::Cusp => continue,
            },
        };
        ub = ub.min(limit);
    }
    if model.components[c].is_collar() {
        ub = ub.max(0.0);
    }
    ub
}

/// Greedy sequential maximization: components are processed in `order`,
/// each maximized subject to its self constraint and the constraints
/// involving components already fixed. Deterministic; the result is
/// always feasible but generally order-dependent.
pub fn greedy(model: &PeripheralModel, order: &[usize]) -> Result<Solution, OptimizeError> {
    let cs = model.build_constraints()?;
    let n = cs.dim();
    let mut seen = vec![false; n];
    if order.len() != n || !order.iter().all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
    {
        return Err(OptimizeError::InvalidOrder);
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &c in order {
        fixed[c] = Some(step_bound(model, &cs, &fixed, c));
    }
    let y: Vec<f64> = fixed.into_iter().map(|v| v.expect("all fixed")).collect();
    let config = cs.from_linear(&y);
    Ok(Solution {
        total: model.total_volume(&config),
        active_set: active_set_at(&cs, &y, FEAS_TOL),
        config,
        method: SolveMethod::Greedy,
    })
}

/// Individually attainable maximum volume of component `k` (its self
/// bound tightened by degenerate-partner pair limits).
fn individual_max_volume(model: &PeripheralModel, cs: &ConstraintSet, k: usize) -> f64 {
    let none = vec![None; model.len()];
    let bound = step_bound(model, cs, &none, k);
    match model.components[k] {
        Component::Cusp => bound.exp(),
        Component::Collar(size) => {
            let area = size.area();
            area / 4.0 * (2.0 * bound + (2.0 * bound).sinh())
        }
    }
}

/// Best greedy solution over every processing order (exhaustive; meant
/// for small instances). For the two proved special cases — two cusps, or
/// two collars of the same genus — ordering by descending individual
/// maximum is optimal, and this is cross-checked in debug builds.
pub fn greedy_best_order(model: &PeripheralModel) -> Result<Solution, OptimizeError> {
    let cs = model.build_constraints()?;
    let n = cs.dim();
    let mut best: Option<Solution> = None;
    for order in (0..n).permutations(n) {
        let candidate = greedy(model, &order)?;
        let replace = match &best {
            None => true,
            Some(b) => {
                let tie = TIE_TOL * f64::max(1.0, b.total.abs());
                candidate.total > b.total + tie
                    || ((candidate.total - b.total).abs() <= tie
                        && lex_smaller(candidate.config.values(), b.config.values()))
            }
        };
        if replace {
            best = Some(candidate);
        }
    }
    let best = best.ok_or(OptimizeError::NoFeasibleVertex)?;

    let two_cusps = n == 2 && model.components.iter().all(Component::is_cusp);
    let equal_collars = n == 2
        && model.components.iter().all(Component::is_collar)
        && (model.components[0].area().unwrap() - model.components[1].area().unwrap()).abs()
            < 1e-12;
    if two_cusps || equal_collars {
        let mut order = [0usize, 1];
        if individual_max_volume(model, &cs, 1) > individual_max_volume(model, &cs, 0) {
            order = [1, 0];
        }
        let by_max = greedy(model, &order)?;
        debug_assert!(
            (by_max.total - best.total).abs() <= 1e-9 * f64::max(1.0, best.total.abs()),
            "descending-maximum order should be optimal: {} vs {}",
            by_max.total,
            best.total
        );
    }
    Ok(best)
}

/// Samples feasible configurations within `radius` of `config` (in
/// linearized coordinates, clipped back to the feasible set along the
/// sample direction) and reports a strictly better one if found.
pub fn local_probe(
    model: &PeripheralModel,
    config: &Configuration,
    radius: f64,
    n_trials: usize,
    seed: u64,
) -> Result<ProbeOutcome, OptimizeError> {
    let cs = model.build_constraints()?;
    let y0 = cs.to_linear(config)?;
    let n = cs.dim();
    let base_total = model.total_volume(config);
    let margin = 1e-10;

    // Rows for clipping: the constraints plus collar floors.
    let rows = enumeration_rows(&cs);
    let residuals: Vec<f64> = rows
        .iter()
        .map(|row| {
            let mut acc = row.bound;
            for &(k, c) in &row.coeffs {
                acc -= c * y0[k];
            }
            acc.max(0.0)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..n_trials {
        let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
        let mut lambda = 1.0_f64;
        for (row, &res) in rows.iter().zip(&residuals) {
            let den: f64 = row.coeffs.iter().map(|&(k, c)| c * delta[k]).sum();
            if den > 0.0 {
                lambda = lambda.min(res / den);
            }
        }
        if lambda <= 0.0 {
            continue;
        }
        let y: Vec<f64> = y0.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
        let candidate = cs.from_linear(&y);
        let total = model.total_volume(&candidate);
        if total > base_total + margin {
            return Ok(ProbeOutcome {
                improved: true,
                witness: Some(candidate),
                witness_total: Some(total),
                trials: trial + 1,
            });
        }
    }
    Ok(ProbeOutcome {
        improved: false,
        witness: None,
        witness_total: None,
        trials: n_trials,
    })
}

const PROBE_REFINE_RADIUS: f64 = 1e-3;
const PROBE_REFINE_TRIALS: usize = 500;
const PROBE_REFINE_SEED: u64 = 0x7ee5;
/// Collar widths below this are treated as degenerate by the classifier.
const ZERO_WIDTH: f64 = 1e-12;

struct Analysis<'a> {
    model: &'a PeripheralModel,
    config: &'a Configuration,
    sizes: Vec<f64>,
    tol: f64,
}

impl Analysis<'_> {
    fn scale(&self, indices: &[usize]) -> f64 {
        f64::max(1.0, indices.iter().map(|&k| self.sizes[k]).sum())
    }

    /// Compares a signed size combination against zero at the working
    /// tolerance: positive, negative, or too close to call.
    fn signum(&self, value: f64, indices: &[usize]) -> i8 {
        let band = self.tol * self.scale(indices);
        if value > band {
            1
        } else if value < -band {
            -1
        } else {
            0
        }
    }

    fn zero_collar(&self, k: usize) -> bool {
        self.model.components[k].is_collar() && self.config.values()[k] < ZERO_WIDTH
    }
}

/// Classifies a feasible configuration.
///
/// The decision procedure: (a) build the tangency graph; (b) a tree
/// component with no maximal vertex admits a volume-increasing tree
/// deformation, so the verdict is `NotLocalMax`; (c)/(d) with two or
/// three components the remaining active patterns are decided exactly by
/// sign tests on the effective sizes (for a mutually tangent non-maximal
/// triple this is the strict-triangle-inequality test); (e) anything else
/// is `Inconclusive`, refined by a local probe whose witness, if any,
/// demotes the verdict to `NotLocalMax`.
pub fn classify(
    model: &PeripheralModel,
    config: &Configuration,
    tol: f64,
) -> Result<Classification, OptimizeError> {
    let graph = model.tangency_graph(config, tol)?;
    let n = graph.vertex_count;
    let maximal: Vec<usize> = graph.self_loops.clone();
    let is_maximal = |k: usize| maximal.contains(&k);

    let components: Vec<ComponentReport> = graph
        .connected_components()
        .into_iter()
        .map(|vertices| {
            let edge_count = graph.edges_within(&vertices).len();
            ComponentReport {
                is_tree: edge_count == vertices.len() - 1,
                has_maximal: vertices.iter().any(|&k| is_maximal(k)),
                vertices,
            }
        })
        .collect();

    let sizes: Vec<f64> = (0..n).map(|k| model.effective_size(config, k)).collect();
    let analysis = Analysis {
        model,
        config,
        sizes,
        tol,
    };
    let mut evidence = Evidence {
        maximal: maximal.clone(),
        graph: graph.clone(),
        components: components.clone(),
        triangle: None,
        improving: None,
        probe: None,
    };

    // (b) tree components without a maximal vertex admit an improving
    // deformation in at least one direction.
    let mut blocked_tree = false;
    for report in &components {
        if !report.is_tree || report.has_maximal {
            continue;
        }
        let edges = graph.edges_within(&report.vertices);
        let root = report.vertices[0];
        let deformation = TreeDeformation::new(model, config, &edges, root)?;
        let slope = deformation.slope_at_base();
        let mut plus_ok = true;
        let mut minus_ok = true;
        for &k in &report.vertices {
            if analysis.zero_collar(k) {
                match deformation.rule(k).map(|r| r.sign) {
                    Some(1) => minus_ok = false,
                    Some(-1) => plus_ok = false,
                    _ => {}
                }
            }
        }
        let band = tol * analysis.scale(&report.vertices);
        let sign = if slope > band && plus_ok {
            Some(1)
        } else if slope < -band && minus_ok {
            Some(-1)
        } else if slope.abs() <= band {
            // Strict convexity improves both sides at second order.
            if plus_ok {
                Some(1)
            } else if minus_ok {
                Some(-1)
            } else {
                None
            }
        } else {
            None
        };
        match sign {
            Some(sign) => {
                evidence.improving = Some(ImprovingDirection::Tree { root, sign, edges });
                return Ok(Classification {
                    verdict: Verdict::NotLocalMax,
                    evidence,
                });
            }
            None => blocked_tree = true,
        }
    }
    if blocked_tree {
        return Ok(probe_refine(model, config, evidence)?);
    }

    if maximal.len() == n {
        // Every component pinned at its individual bound: nothing can
        // grow and any feasible move shrinks.
        return Ok(Classification {
            verdict: Verdict::LocalMax,
            evidence,
        });
    }

    let verdict = match n {
        2 => two_component_verdict(&analysis, &graph),
        3 => three_component_verdict(&analysis, &graph),
        _ => None,
    };
    match verdict {
        Some((verdict, improving, triangle)) => {
            evidence.improving = improving;
            evidence.triangle = triangle;
            Ok(Classification { verdict, evidence })
        }
        None => Ok(probe_refine(model, config, evidence)?),
    }
}

type StructuredVerdict = (
    Verdict,
    Option<ImprovingDirection>,
    Option<TriangleReport>,
);

fn grow_move(root: usize, edges: Vec<(usize, usize)>) -> Option<ImprovingDirection> {
    Some(ImprovingDirection::Tree {
        root,
        sign: 1,
        edges,
    })
}

fn two_component_verdict(
    analysis: &Analysis<'_>,
    graph: &TangencyGraph,
) -> Option<StructuredVerdict> {
    if analysis.zero_collar(0) || analysis.zero_collar(1) {
        return None;
    }
    // The tree rule already handled every pattern without a maximal
    // vertex, and the all-maximal case is settled; here exactly one
    // component is maximal and, to survive the tree rule, tangent to the
    // other.
    let anchor = *graph.self_loops.first()?;
    let grower = 1 - anchor;
    if !graph.has_edge(anchor, grower) {
        return None;
    }
    let s = &analysis.sizes;
    let diff = s[anchor] - s[grower];
    Some(match analysis.signum(diff, &[0, 1]) {
        1 => (Verdict::LocalMax, None, None),
        0 => (Verdict::Degenerate, None, None),
        _ => (
            Verdict::NotLocalMax,
            grow_move(grower, vec![(anchor, grower)]),
            None,
        ),
    })
}

fn three_component_verdict(
    analysis: &Analysis<'_>,
    graph: &TangencyGraph,
) -> Option<StructuredVerdict> {
    if (0..3).any(|k| analysis.zero_collar(k)) {
        return None;
    }
    let s = &analysis.sizes;
    let all = [0usize, 1, 2];
    let maximal: Vec<usize> = graph.self_loops.clone();
    let edge = |i: usize, j: usize| graph.has_edge(i, j);

    match maximal.len() {
        0 => {
            // Only the full triangle survives the tree rule: Theorem-2
            // territory.
            if !(edge(0, 1) && edge(0, 2) && edge(1, 2)) {
                return None;
            }
            let triple = TriplePoint::from_configuration(
                analysis.model,
                analysis.config,
                [0, 1, 2],
                analysis.tol,
            )
            .ok()?;
            let verdict = classify_triple(&triple, analysis.tol).ok()?;
            let mut sorted: Vec<usize> = all.to_vec();
            sorted.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            let slack = s[sorted[1]] + s[sorted[2]] - s[sorted[0]];
            let report = TriangleReport {
                sizes: s.clone(),
                slack,
            };
            Some(match verdict {
                TripleVerdict::LocalMax => (Verdict::LocalMax, None, Some(report)),
                TripleVerdict::Degenerate => (Verdict::Degenerate, None, Some(report)),
                TripleVerdict::NotLocalMax => {
                    // Growing the oversized component improves.
                    let big = sorted[0];
                    let others: Vec<usize> = all.iter().copied().filter(|&k| k != big).collect();
                    (
                        Verdict::NotLocalMax,
                        grow_move(big, vec![(big, others[0]), (big, others[1])]),
                        Some(report),
                    )
                }
            })
        }
        1 => {
            let anchor = maximal[0];
            let others: Vec<usize> = all.iter().copied().filter(|&k| k != anchor).collect();
            let (j, k) = (others[0], others[1]);
            let (aj, ak, jk) = (edge(anchor, j), edge(anchor, k), edge(j, k));
            if aj && ak && jk {
                // Triangle with a pinned vertex: growing either free
                // component along its chain is blocked exactly when the
                // two triangle inequalities not involving the pin hold.
                let slack_j = s[anchor] + s[k] - s[j];
                let slack_k = s[anchor] + s[j] - s[k];
                let (worst, grower) = if slack_j <= slack_k {
                    (slack_j, j)
                } else {
                    (slack_k, k)
                };
                let partner = if grower == j { k } else { j };
                Some(match analysis.signum(worst, &all) {
                    1 => (Verdict::LocalMax, None, None),
                    0 => (Verdict::Degenerate, None, None),
                    _ => (
                        Verdict::NotLocalMax,
                        grow_move(grower, vec![(anchor, grower), (grower, partner)]),
                        None,
                    ),
                })
            } else if aj && ak {
                // Star around the pinned component: shrinking it grows
                // both partners at once.
                let diff = s[anchor] - s[j] - s[k];
                Some(match analysis.signum(diff, &all) {
                    1 => (Verdict::LocalMax, None, None),
                    0 => (Verdict::Degenerate, None, None),
                    _ => (
                        Verdict::NotLocalMax,
                        Some(ImprovingDirection::Tree {
                            root: anchor,
                            sign: -1,
                            edges: vec![(anchor, j), (anchor, k)],
                        }),
                        None,
                    ),
                })
            } else if (aj && jk) || (ak && jk) {
                // Chain anchored at the pinned end.
                let (middle, leaf) = if aj { (j, k) } else { (k, j) };
                let leaf_diff = s[middle] - s[leaf];
                let middle_slack = s[anchor] + s[leaf] - s[middle];
                match (
                    analysis.signum(leaf_diff, &[middle, leaf]),
                    analysis.signum(middle_slack, &all),
                ) {
                    (1, 1) => Some((Verdict::LocalMax, None, None)),
                    (-1, _) => Some((
                        Verdict::NotLocalMax,
                        grow_move(leaf, vec![(middle, leaf)]),
                        None,
                    )),
                    (_, -1) => Some((
                        Verdict::NotLocalMax,
                        grow_move(middle, vec![(anchor, middle), (middle, leaf)]),
                        None,
                    )),
                    _ => Some((Verdict::Degenerate, None, None)),
                }
            } else {
                // Any other pattern leaves a free tree component, which
                // the tree rule would have caught.
                None
            }
        }
        2 => {
            let free = all.iter().copied().find(|k| !maximal.contains(k))?;
            let anchors: Vec<usize> = maximal
                .iter()
                .copied()
                .filter(|&m| edge(m, free))
                .collect();
            if anchors.is_empty() {
                return None;
            }
            let anchor_sum: f64 = anchors.iter().map(|&m| s[m]).sum();
            let diff = anchor_sum - s[free];
            Some(match analysis.signum(diff, &all) {
                1 => (Verdict::LocalMax, None, None),
                0 => (Verdict::Degenerate, None, None),
                _ => (
                    Verdict::NotLocalMax,
                    grow_move(free, anchors.iter().map(|&m| (m, free)).collect()),
                    None,
                ),
            })
        }
        _ => unreachable!("all-maximal case handled before the match"),
    }
}

fn probe_refine(
    model: &PeripheralModel,
    config: &Configuration,
    mut evidence: Evidence,
) -> Result<Classification, OptimizeError> {
    let outcome = local_probe(
        model,
        config,
        PROBE_REFINE_RADIUS,
        PROBE_REFINE_TRIALS,
        PROBE_REFINE_SEED,
    )?;
    evidence.probe = Some(ProbeReport {
        improved: outcome.improved,
        trials: outcome.trials,
    });
    if outcome.improved {
        evidence.improving = Some(ImprovingDirection::Probe {
            config: outcome.witness.expect("improved probes carry a witness"),
            total: outcome.witness_total.expect("improved probes carry a total"),
        });
        Ok(Classification {
            verdict: Verdict::NotLocalMax,
            evidence,
        })
    } else {
        Ok(Classification {
            verdict: Verdict::Inconclusive,
            evidence,
        })
    }
}
