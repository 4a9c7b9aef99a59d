//! The multi-marginal formulation: build the linear program over couplings
//! of `N` discrete marginals with cost `c_p`, solve it exactly, and push the
//! optimal plan forward to the barycenter measure.

use serde::{Deserialize, Serialize};

use crate::measures::DiscreteMeasure;
use crate::pbarycenter::{solve_raw, DEFAULT_TOL};
use crate::simplex::{solve_transport, MASS_EPS};
use crate::vecmath::dist;
use crate::{Error, Result};

/// Marginal masses must be reproduced by a plan within this tolerance.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Barycenter atoms closer than this are merged in the pushforward.
pub const ATOM_MERGE_TOL: f64 = 1e-9;

/// A complete barycenter problem instance: `N ≥ 2` marginals of common
/// dimension, positive weights `λ` summing to one, and `p ∈ (1, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterProblem {
    marginals: Vec<DiscreteMeasure>,
    lambda: Vec<f64>,
    p: f64,
}

impl BarycenterProblem {
    pub fn new(marginals: Vec<DiscreteMeasure>, lambda: Vec<f64>, p: f64) -> Result<Self> {
        if marginals.len() < 2 {
            return Err(Error::Invalid("need at least two marginals".into()));
        }
        if lambda.len() != marginals.len() {
            return Err(Error::Invalid(format!(
                "{} weights for {} marginals",
                lambda.len(),
                marginals.len()
            )));
        }
        let dim = marginals[0].dim();
        for m in &marginals[1..] {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
        }
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Invalid("weights must be strictly positive".into()));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("weights sum to {sum}, not 1")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Invalid(format!("exponent {p} outside (1, inf)")));
        }
        Ok(Self {
            marginals,
            lambda,
            p,
        })
    }

    pub fn marginal_count(&self) -> usize {
        self.marginals.len()
    }

    pub fn dim(&self) -> usize {
        self.marginals[0].dim()
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &DiscreteMeasure {
        &self.marginals[i]
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// Number of LP variables, `Π n_i`.
    pub fn variable_count(&self) -> u128 {
        self.marginals.iter().map(|m| m.len() as u128).product()
    }

    /// The support points selected by a multi-index.
    pub(crate) fn points_at<'a>(&'a self, idx: &[usize], out: &mut Vec<&'a [f64]>) {
        out.clear();
        for (i, &a) in idx.iter().enumerate() {
            out.push(self.marginals[i].point(a));
        }
    }

    /// `c_p` and the pointwise barycenter of the support combination `idx`.
    pub fn cost_and_barycenter(&self, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut pts = Vec::with_capacity(idx.len());
        self.points_at(idx, &mut pts);
        let raw = solve_raw(self.dim(), &pts, &self.lambda, self.p, DEFAULT_TOL)?;
        let cost = pts
            .iter()
            .zip(&self.lambda)
            .map(|(x, &l)| l * dist(x, &raw.z).powf(self.p))
            .sum();
        Ok((cost, raw.z))
    }
}

/// One sparse entry of a transport plan: a multi-index into the marginal
/// supports and its mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub idx: Vec<usize>,
    pub mass: f64,
}

/// A sparse coupling of the problem's marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    problem: BarycenterProblem,
    entries: Vec<PlanEntry>,
    cost: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    entries: Vec<PlanEntry>,
    cost: f64,
}

impl TransportPlan {
    /// Wraps entries as a plan after validating index ranges, positive
    /// masses, and the marginal constraints within [`MARGINAL_TOL`].
    pub fn new(
        problem: BarycenterProblem,
        entries: Vec<PlanEntry>,
        cost: f64,
    ) -> Result<Self> {
        let n = problem.marginal_count();
        for e in &entries {
            if e.idx.len() != n {
                return Err(Error::Invalid(format!(
                    "entry has {} indices for {} marginals",
                    e.idx.len(),
                    n
                )));
            }
            for (i, &a) in e.idx.iter().enumerate() {
                if a >= problem.marginal(i).len() {
                    return Err(Error::IndexOutOfRange {
                        index: a,
                        limit: problem.marginal(i).len(),
                    });
                }
            }
            if !(e.mass > 0.0) {
                return Err(Error::Invalid(format!("non-positive mass {}", e.mass)));
            }
        }
        for i in 0..n {
            let mut sums = vec![0.0; problem.marginal(i).len()];
            for e in &entries {
                sums[e.idx[i]] += e.mass;
            }
            for (a, (&got, &want)) in sums
                .iter()
                .zip(problem.marginal(i).weights())
                .enumerate()
            {
                if (got - want).abs() > MARGINAL_TOL {
                    return Err(Error::Invalid(format!(
                        "marginal {i} atom {a}: plan mass {got} vs weight {want}"
                    )));
                }
            }
        }
        Ok(Self {
            problem,
            entries,
            cost,
        })
    }

    pub fn problem(&self) -> &BarycenterProblem {
        &self.problem
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Support points of one entry.
    pub fn entry_points(&self, e: &PlanEntry) -> Vec<Vec<f64>> {
        e.idx
            .iter()
            .enumerate()
            .map(|(i, &a)| self.problem.marginal(i).point(a).to_vec())
            .collect()
    }

    /// Serializes entries and cost; indices are zero-based.
    pub fn to_json_string(&self) -> Result<String> {
        let doc = PlanJson {
            entries: self.entries.clone(),
            cost: self.cost,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Reads a plan back against its problem, re-validating all invariants.
    pub fn from_json(problem: BarycenterProblem, json: &str) -> Result<Self> {
        let doc: PlanJson = serde_json::from_str(json)?;
        Self::new(problem, doc.entries, doc.cost)
    }
}

/// Solves the multi-marginal program exactly and returns the optimal plan
/// with its cost. The plan is a vertex of the transportation polytope, so
/// its support has at most `Σ n_i − N + 1` entries.
pub fn solve_mmot(problem: &BarycenterProblem) -> Result<(TransportPlan, f64)> {
    let weights: Vec<Vec<f64>> = problem
        .marginals
        .iter()
        .map(|m| m.weights().to_vec())
        .collect();

    let dim = problem.dim();
    let lambda = problem.lambda.clone();
    let p = problem.p;
    let marginals = &problem.marginals;
    let mut pts: Vec<&[f64]> = Vec::with_capacity(marginals.len());
    let mut cost_fn = |idx: &[usize]| -> f64 {
        pts.clear();
        for (i, &a) in idx.iter().enumerate() {
            pts.push(marginals[i].point(a));
        }
        match solve_raw(dim, &pts, &lambda, p, DEFAULT_TOL) {
            Ok(raw) => pts
                .iter()
                .zip(&lambda)
                .map(|(x, &l)| l * dist(x, &raw.z).powf(p))
                .sum(),
            // Unreachable for valid configurations; poison the column.
            Err(_) => f64::INFINITY,
        }
    };

    let sol = solve_transport(&weights, &mut cost_fn)?;
    if sol.entries.iter().any(|(_, g)| !g.is_finite())
        || !sol.cost.is_finite()
    {
        return Err(Error::NonConvergence(0));
    }

    let entries = sol
        .entries
        .into_iter()
        .map(|(idx, mass)| PlanEntry { idx, mass })
        .collect();
    let plan = TransportPlan::new(problem.clone(), entries, sol.cost)?;
    Ok((plan, sol.cost))
}

/// LP dual variables of the optimal basis, one value per marginal atom.
///
/// They satisfy `Σ_i u_i(j_i) ≤ c_p(x_{j_1}, …, x_{j_N})` on every support
/// combination, with equality on the support of the optimal plan.
pub fn solve_mmot_with_duals(
    problem: &BarycenterProblem,
) -> Result<(TransportPlan, f64, Vec<Vec<f64>>)> {
    let weights: Vec<Vec<f64>> = problem
        .marginals
        .iter()
        .map(|m| m.weights().to_vec())
        .collect();
    let dim = problem.dim();
    let lambda = problem.lambda.clone();
    let p = problem.p;
    let marginals = &problem.marginals;
    let mut pts: Vec<&[f64]> = Vec::with_capacity(marginals.len());
    let mut cost_fn = |idx: &[usize]| -> f64 {
        pts.clear();
        for (i, &a) in idx.iter().enumerate() {
            pts.push(marginals[i].point(a));
        }
        match solve_raw(dim, &pts, &lambda, p, DEFAULT_TOL) {
            Ok(raw) => pts
                .iter()
                .zip(&lambda)
                .map(|(x, &l)| l * dist(x, &raw.z).powf(p))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let sol = solve_transport(&weights, &mut cost_fn)?;
    let entries = sol
        .entries
        .into_iter()
        .map(|(idx, mass)| PlanEntry { idx, mass })
        .collect();
    let plan = TransportPlan::new(problem.clone(), entries, sol.cost)?;
    Ok((plan, sol.cost, sol.duals))
}

/// Pushes a plan forward through the pointwise barycenter map: one atom
/// `x̄_p(x_{j_1}, …, x_{j_N})` per entry, atoms within [`ATOM_MERGE_TOL`]
/// merged.
pub fn pushforward_barycenter(plan: &TransportPlan) -> Result<DiscreteMeasure> {
    Ok(pushforward_with_mapping(plan)?.0)
}

/// Pushforward measure plus, per plan entry, the index of the merged atom
/// it maps to.
pub fn pushforward_with_mapping(
    plan: &TransportPlan,
) -> Result<(DiscreteMeasure, Vec<usize>)> {
    let problem = plan.problem();
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut mapping = Vec::with_capacity(plan.entries().len());

    for e in plan.entries() {
        let (_, z) = problem.cost_and_barycenter(&e.idx)?;
        let slot = atoms.iter().position(|a| dist(a, &z) <= ATOM_MERGE_TOL);
        match slot {
            Some(k) => {
                masses[k] += e.mass;
                mapping.push(k);
            }
            None => {
                atoms.push(z);
                masses.push(e.mass);
                mapping.push(atoms.len() - 1);
            }
        }
    }

    // Plan masses drop sub-MASS_EPS degeneracies, so renormalization is a
    // machine-precision correction here.
    let measure = DiscreteMeasure::new(problem.dim(), atoms, masses)?;
    debug_assert!((plan.total_mass() - 1.0).abs() <= MARGINAL_TOL + MASS_EPS);
    Ok((measure, mapping))
}

/// The `i`-th marginal of a plan, as a measure on that marginal's support.
/// For a valid plan this equals the stored marginal within [`MARGINAL_TOL`].
pub fn plan_marginal(plan: &TransportPlan, i: usize) -> Result<DiscreteMeasure> {
    let problem = plan.problem();
    if i >= problem.marginal_count() {
        return Err(Error::IndexOutOfRange {
            index: i,
            limit: problem.marginal_count(),
        });
    }
    let marginal = problem.marginal(i);
    let mut sums = vec![0.0; marginal.len()];
    for e in plan.entries() {
        sums[e.idx[i]] += e.mass;
    }
    let (points, weights): (Vec<_>, Vec<_>) = marginal
        .points()
        .iter()
        .zip(sums)
        .filter(|(_, s)| *s > 0.0)
        .map(|(pt, s)| (pt.clone(), s))
        .unzip();
    DiscreteMeasure::new(problem.dim(), points, weights)
}
