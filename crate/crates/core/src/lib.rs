//! Solver and analysis toolkit for maximizing total peripheral volume —
//! the volume recoverable by boundary collars and cusp neighbourhoods
//! with disjoint embedded interiors — over instances described abstractly
//! by areas and tangency constants.
//!
//! * [`model`] — instance data model, validation, linearized constraints,
//!   tangency detection, random instance generation.
//! * [`geometry`] — the closed-form volume formulas and tangency
//!   relations.
//! * [`deform`] — one-parameter deformations along tangency trees, volume
//!   curves, and the three-component one-sided derivative formulas.
//! * [`optimize`] — global maximization over the feasible region, greedy
//!   sequential maximization, and local-maximum classification.
//! * [`oracle`] — independent brute-force grid search used to verify the
//!   solver on small instances.

pub mod deform;
pub mod geometry;
pub mod model;
pub mod optimize;
pub mod oracle;

pub use deform::{
    classify_triple, deformation_from_graph, one_sided_derivatives_three, propagate,
    sample_curve, seed_tree_configuration, volume_curve, write_curve_csv, ComponentRule,
    DeformError, TreeDeformation, TripleMember, TriplePoint, TripleVerdict,
};
pub use geometry::{CollarShape, GeometryError};
pub use model::{
    gen_random, CollarSize, Component, Configuration, ConstraintOrigin, ConstraintSet, CoordKind,
    LinearInequality, ModelError, PairConstraint, PeripheralModel, SelfConstraint, TangencyGraph,
    Violation,
};
pub use optimize::{
    classify, greedy, greedy_best_order, local_probe, solve_global, Classification,
    ComponentReport, Evidence, ImprovingDirection, OptimizeError, ProbeOutcome, ProbeReport,
    Solution, SolveMethod, TriangleReport, Verdict,
};
pub use oracle::{grid_search, verify_instance, GridSpec, OracleError, VerifyReport, VerifyVerdict};

/// Default tolerance for tangency detection, in linearized coordinates.
pub const DEFAULT_TOL: f64 = 1e-9;
