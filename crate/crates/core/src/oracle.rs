//! Independent brute-force verification.
//!
//! [`grid_search`] exhaustively scans a box in the linearized coordinates
//! with iterative refinement around the incumbent, entirely independent
//! of the frontier-enumeration path in [`crate::optimize`]. It exists to
//! check the solver, never to back it: production code must not call
//! into this module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Configuration, ConstraintSet, CoordKind, ModelError, PeripheralModel};
use crate::optimize::{Solution, SolveMethod};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("grid search supports at most 4 components, got {0}")]
    TooManyComponents(usize),
    #[error("no feasible grid point; widen the ranges or lower the floors")]
    NoFeasiblePoint,
    #[error("grid spec invalid: {0}")]
    BadSpec(String),
}

/// Search box and refinement schedule for [`grid_search`], in linearized
/// coordinates (`ln v` for cusps, `d` for collars).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Per-coordinate `(lo, hi)`.
    pub ranges: Vec<(f64, f64)>,
    /// Grid points per axis per round (≥ 3).
    pub resolution: usize,
    /// Refinement rounds (≥ 1).
    pub rounds: usize,
    /// Box-width factor applied per refinement round, in (0, 1).
    pub shrink: f64,
}

impl GridSpec {
    pub const DEFAULT_RESOLUTION: usize = 25;
    pub const DEFAULT_ROUNDS: usize = 22;
    pub const DEFAULT_SHRINK: f64 = 0.35;

    /// Default box for a model: each coordinate runs from a positive
    /// floor up to its self bound. Floors start at `ln v = −6` for cusps
    /// and `d = 1e-6` for collars, and the cusp floor is lowered further
    /// whenever a pair constraint can squeeze the optimal cusp below it
    /// (a wide collar forces `x ≤ ln(R/2) − 2·d_max`).
    pub fn for_model(model: &PeripheralModel) -> Result<Self, OracleError> {
        let cs = model.build_constraints()?;
        let n = cs.dim();
        let upper: Vec<f64> = (0..n).map(|k| cs.self_row(k).bound).collect();
        let mut ranges = Vec::with_capacity(n);
        for k in 0..n {
            let mut lo: f64 = match cs.coords()[k] {
                CoordKind::LogVolume => -6.0,
                CoordKind::Width => 1e-6,
            };
            if cs.coords()[k] == CoordKind::LogVolume {
                for row in cs.rows() {
                    let Some(&(_, own_coeff)) =
                        row.coeffs.iter().find(|&&(idx, _)| idx == k)
                    else {
                        continue;
                    };
                    let others: f64 = row
                        .coeffs
                        .iter()
                        .filter(|&&(idx, _)| idx != k)
                        .map(|&(idx, c)| c * upper[idx])
                        .sum();
                    lo = lo.min((row.bound - others) / own_coeff - 1.0);
                }
            }
            ranges.push((lo, upper[k]));
        }
        Ok(Self {
            ranges,
            resolution: Self::DEFAULT_RESOLUTION,
            rounds: Self::DEFAULT_ROUNDS,
            shrink: Self::DEFAULT_SHRINK,
        })
    }

    fn validate(&self, dim: usize) -> Result<(), OracleError> {
        if self.resolution < 3 {
            return Err(OracleError::BadSpec(format!(
                "resolution {} below 3",
                self.resolution
            )));
        }
        if self.rounds < 1 {
            return Err(OracleError::BadSpec("rounds must be at least 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OracleError::BadSpec(format!(
                "shrink {} outside (0, 1)",
                self.shrink
            )));
        }
        if self.ranges.len() != dim {
            return Err(OracleError::BadSpec(format!(
                "{} ranges for {} coordinates",
                self.ranges.len(),
                dim
            )));
        }
        if self.ranges.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(OracleError::BadSpec("empty coordinate range".into()));
        }
        Ok(())
    }
}

const GRID_FEAS_TOL: f64 = 1e-12;
/// Separated round-one candidates kept for independent refinement.
const SEED_POOL: usize = 8;

fn lex_before(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .find_map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Equal => None,
            ord => Some(ord == std::cmp::Ordering::Less),
        })
        .unwrap_or(false)
}

fn better(candidate: &(Vec<f64>, f64), incumbent: &(Vec<f64>, f64)) -> bool {
    candidate.1 > incumbent.1 || (candidate.1 == incumbent.1 && lex_before(&candidate.0, &incumbent.0))
}

fn scan_box(
    model: &PeripheralModel,
    cs: &ConstraintSet,
    box_ranges: &[(f64, f64)],
    resolution: usize,
    best: &mut Option<(Vec<f64>, f64)>,
) {
    let n = box_ranges.len();
    let mut index = vec![0usize; n];
    let mut y = vec![0.0_f64; n];
    loop {
        for k in 0..n {
            let (lo, hi) = box_ranges[k];
            y[k] = lo + (hi - lo) * index[k] as f64 / (resolution - 1) as f64;
        }
        if cs.check_feasible(&y, GRID_FEAS_TOL).is_ok() {
            let total = model.total_volume(&cs.from_linear(&y));
            let candidate = (y.clone(), total);
            if best.as_ref().map_or(true, |b| better(&candidate, b)) {
                *best = Some(candidate);
            }
        }
        // Odometer over the lattice.
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            index[k] += 1;
            if index[k] < resolution {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

/// Full-box scan that also keeps the best point of up to [`SEED_POOL`]
/// mutually separated regions; the maximum of a convex objective can sit
/// at several competing frontier vertices and a single incumbent would
/// commit to one of them too early.
fn scan_box_pool(
    model: &PeripheralModel,
    cs: &ConstraintSet,
    box_ranges: &[(f64, f64)],
    resolution: usize,
) -> Vec<(Vec<f64>, f64)> {
    let n = box_ranges.len();
    let spacing: Vec<f64> = box_ranges
        .iter()
        .map(|(lo, hi)| (hi - lo) / (resolution - 1) as f64)
        .collect();
    let near = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&spacing)
            .all(|((x, y), s)| (x - y).abs() <= 2.0 * s + 1e-300)
    };
    let mut pool: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut index = vec![0usize; n];
    let mut y = vec![0.0_f64; n];
    loop {
        for k in 0..n {
            let (lo, hi) = box_ranges[k];
            y[k] = lo + (hi - lo) * index[k] as f64 / (resolution - 1) as f64;
        }
        if cs.check_feasible(&y, GRID_FEAS_TOL).is_ok() {
            let total = model.total_volume(&cs.from_linear(&y));
            let candidate = (y.clone(), total);
            if let Some(slot) = pool.iter_mut().find(|p| near(&p.0, &candidate.0)) {
                if better(&candidate, slot) {
                    *slot = candidate;
                }
            } else {
                pool.push(candidate);
                pool.sort_by(|a, b| b.1.total_cmp(&a.1));
                pool.truncate(SEED_POOL);
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return pool;
            }
            index[k] += 1;
            if index[k] < resolution {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

/// Best feasible grid point after iterative refinement. The first round
/// scans the whole box and keeps the best point of each competitive
/// region; each is then refined independently in shrinking boxes around
/// its incumbent. The result never regresses across rounds and every
/// returned configuration satisfies all constraints to `1e-12`.
pub fn grid_search(model: &PeripheralModel, spec: &GridSpec) -> Result<Solution, OracleError> {
    let cs = model.build_constraints()?;
    let n = cs.dim();
    if n > 4 {
        return Err(OracleError::TooManyComponents(n));
    }
    spec.validate(n)?;

    let pool = scan_box_pool(model, &cs, &spec.ranges, spec.resolution);
    let round_one_best = pool.first().cloned().ok_or(OracleError::NoFeasiblePoint)?;
    // Refine every seed that is still competitive after the coarse scan.
    let cutoff = round_one_best.1 - f64::max(0.3 * round_one_best.1.abs(), 0.3);
    let mut best = round_one_best;
    for seed in pool {
        if seed.1 < cutoff {
            continue;
        }
        let mut incumbent = seed;
        for round in 1..spec.rounds {
            let shrink = spec.shrink.powi(round as i32);
            let mut box_ranges = Vec::with_capacity(n);
            for k in 0..n {
                let (orig_lo, orig_hi) = spec.ranges[k];
                let half = (orig_hi - orig_lo) * shrink / 2.0;
                let center = incumbent.0[k];
                box_ranges.push(((center - half).max(orig_lo), (center + half).min(orig_hi)));
            }
            let mut candidate = Some(incumbent.clone());
            scan_box(model, &cs, &box_ranges, spec.resolution, &mut candidate);
            incumbent = candidate.expect("seeded with the incumbent");
        }
        if better(&incumbent, &best) {
            best = incumbent;
        }
    }
    let (y, total) = best;
    Ok(Solution {
        config: cs.from_linear(&y),
        total,
        active_set: Vec::new(),
        method: SolveMethod::Probe,
    })
}

/// PASS/FAIL verdict of an oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerifyVerdict {
    Pass,
    Fail,
}

/// Comparison of a candidate solution against the grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instance_seed: Option<u64>,
    pub candidate_total: f64,
    pub oracle_total: f64,
    pub verdict: VerifyVerdict,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.verdict == VerifyVerdict::Pass
    }
}

/// Runs the grid oracle on `model` and compares totals: PASS iff the
/// candidate is within `rel_tol·max(1, oracle)` of the oracle and not
/// materially below it (the candidate may legitimately beat the grid).
pub fn verify_instance(
    model: &PeripheralModel,
    candidate: &Solution,
    rel_tol: f64,
) -> Result<VerifyReport, OracleError> {
    let spec = GridSpec::for_model(model)?;
    let oracle = grid_search(model, &spec)?;
    let close = (candidate.total - oracle.total).abs()
        <= rel_tol * f64::max(1.0, oracle.total.abs());
    let not_below = candidate.total >= oracle.total - rel_tol;
    let verdict = if close && not_below {
        VerifyVerdict::Pass
    } else {
        VerifyVerdict::Fail
    };
    Ok(VerifyReport {
        instance_seed: None,
        candidate_total: candidate.total,
        oracle_total: oracle.total,
        verdict,
    })
}

/// Convenience: feasibility of a configuration against the model, at the
/// oracle's tolerance.
pub fn is_feasible(model: &PeripheralModel, config: &Configuration) -> Result<bool, OracleError> {
    let cs = model.build_constraints()?;
    let y = match cs.to_linear(config) {
        Ok(y) => y,
        Err(_) => return Ok(false),
    };
    Ok(cs.check_feasible(&y, GRID_FEAS_TOL).is_ok())
}
