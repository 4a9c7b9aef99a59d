//! Revised simplex for transportation polytopes with implicitly generated
//! columns.
//!
//! The LP has one equality row per marginal atom and one variable per
//! multi-index of the product of supports. Since each marginal's rows sum to
//! the total-mass row, one row per marginal beyond the first is redundant
//! and dropped, leaving a full-rank system with `Σ n_i − N + 1` rows.
//! Columns are never materialized: pricing walks the multi-index space in
//! lexicographic order and evaluates the cost through a caller-supplied
//! closure, cached per column. Dantzig pricing is used while the objective
//! makes progress; a run of degenerate pivots switches to Bland's rule,
//! which restores the anti-cycling guarantee, until the objective strictly
//! decreases again.

use crate::{Error, Result};

/// Hard cap on the implicit variable count.
pub(crate) const VARIABLE_BUDGET: u128 = 10_000_000;

/// Masses at or below this level are treated as zero when extracting a plan.
pub(crate) const MASS_EPS: f64 = 1e-12;

const PIVOT_EPS: f64 = 1e-10;
const REFACTOR_EVERY: usize = 256;
const STALL_LIMIT: usize = 64;
const MAX_PIVOTS: usize = 400_000;

/// An optimal vertex of the transportation polytope.
pub(crate) struct TransportSolution {
    /// Positive-mass plan entries, lexicographically sorted multi-indices.
    pub entries: Vec<(Vec<usize>, f64)>,
    /// Objective value at the vertex.
    pub cost: f64,
    /// Dual variable per marginal atom; dropped rows carry zero.
    pub duals: Vec<Vec<f64>>,
    /// Simplex pivots used across both phases.
    pub pivots: usize,
}

struct Tableau<'a, C: FnMut(&[usize]) -> f64> {
    sizes: Vec<usize>,
    total: usize,
    /// Row index per (marginal, atom); `usize::MAX` marks a dropped row.
    row_of: Vec<Vec<usize>>,
    m: usize,
    rhs: Vec<f64>,
    cost_fn: &'a mut C,
    cost_cache: Vec<f64>,
    c_max: f64,
    /// Basis variable indices; values >= `total` are artificials.
    basis: Vec<usize>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    scratch_idx: Vec<usize>,
    scratch_col: Vec<usize>,
    pivots: usize,
}

impl<'a, C: FnMut(&[usize]) -> f64> Tableau<'a, C> {
    fn new(marginals: &[Vec<f64>], cost_fn: &'a mut C) -> Result<Self> {
        let n_marg = marginals.len();
        let sizes: Vec<usize> = marginals.iter().map(|w| w.len()).collect();
        let total_u128: u128 = sizes.iter().map(|&n| n as u128).product();
        if total_u128 > VARIABLE_BUDGET {
            return Err(Error::VariableBudget {
                vars: total_u128,
                budget: VARIABLE_BUDGET,
            });
        }
        let total = total_u128 as usize;

        let mut row_of = Vec::with_capacity(n_marg);
        let mut m = 0usize;
        for (i, &n) in sizes.iter().enumerate() {
            let mut rows = vec![usize::MAX; n];
            let keep = if i == 0 { n } else { n - 1 };
            for (a, slot) in rows.iter_mut().enumerate().take(keep) {
                *slot = m;
                m += 1;
                let _ = a;
            }
            row_of.push(rows);
        }

        let mut rhs = vec![0.0; m];
        for (i, w) in marginals.iter().enumerate() {
            for (a, &mass) in w.iter().enumerate() {
                let r = row_of[i][a];
                if r != usize::MAX {
                    rhs[r] = mass;
                }
            }
        }

        // Identity basis of artificials, basis inverse = identity.
        let basis: Vec<usize> = (0..m).map(|r| total + r).collect();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let x_b = rhs.clone();

        Ok(Self {
            total,
            row_of,
            m,
            rhs,
            cost_fn,
            cost_cache: vec![f64::NAN; total],
            c_max: 0.0,
            basis,
            binv,
            x_b,
            scratch_idx: vec![0; n_marg],
            scratch_col: Vec::with_capacity(n_marg),
            pivots: 0,
            sizes,
        })
    }

    #[inline]
    fn unrank(&self, mut rank: usize, out: &mut [usize]) {
        for i in (0..self.sizes.len()).rev() {
            out[i] = rank % self.sizes[i];
            rank /= self.sizes[i];
        }
    }

    /// Rows hit by the column of the given multi-index.
    #[inline]
    fn column_rows(row_of: &[Vec<usize>], idx: &[usize], out: &mut Vec<usize>) {
        out.clear();
        for (i, &a) in idx.iter().enumerate() {
            let r = row_of[i][a];
            if r != usize::MAX {
                out.push(r);
            }
        }
    }

    fn cost_of(&mut self, rank: usize) -> f64 {
        let cached = self.cost_cache[rank];
        if cached.is_nan() {
            let mut idx = std::mem::take(&mut self.scratch_idx);
            self.unrank(rank, &mut idx);
            let c = (self.cost_fn)(&idx);
            self.scratch_idx = idx;
            self.cost_cache[rank] = c;
            if c.abs() > self.c_max {
                self.c_max = c.abs();
            }
            c
        } else {
            cached
        }
    }

    /// `y = c_B · B^{-1}` for the current basis under the given cost view.
    fn duals(&mut self, phase_one: bool) -> Vec<f64> {
        let basis = self.basis.clone();
        let mut cb = vec![0.0; self.m];
        for (k, &var) in basis.iter().enumerate() {
            cb[k] = if var >= self.total {
                if phase_one {
                    1.0
                } else {
                    0.0
                }
            } else if phase_one {
                0.0
            } else {
                self.cost_of(var)
            };
        }
        let mut y = vec![0.0; self.m];
        for (k, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[k * self.m..(k + 1) * self.m];
                for (yj, &bj) in y.iter_mut().zip(row) {
                    *yj += c * bj;
                }
            }
        }
        y
    }

    /// Scans all columns for a negative reduced cost. Returns the entering
    /// rank, or `None` at optimality. In Bland mode the first candidate in
    /// lexicographic order wins; otherwise the most negative one does.
    fn price(&mut self, y: &[f64], phase_one: bool, bland: bool, tol: f64) -> Option<usize> {
        let mut best_rank = None;
        let mut best_rc = -tol;
        let mut idx = std::mem::take(&mut self.scratch_idx);
        for rank in 0..self.total {
            self.unrank(rank, &mut idx);
            let mut ydot = 0.0;
            for (i, &a) in idx.iter().enumerate() {
                let r = self.row_of[i][a];
                if r != usize::MAX {
                    ydot += y[r];
                }
            }
            let rc = if phase_one {
                -ydot
            } else {
                let c = self.cost_cache[rank];
                let c = if c.is_nan() {
                    let v = (self.cost_fn)(&idx);
                    self.cost_cache[rank] = v;
                    if v.abs() > self.c_max {
                        self.c_max = v.abs();
                    }
                    v
                } else {
                    c
                };
                c - ydot
            };
            if rc < best_rc {
                best_rc = rc;
                best_rank = Some(rank);
                if bland {
                    break;
                }
            }
        }
        self.scratch_idx = idx;
        best_rank
    }

    /// One pivot with entering variable `rank`. Returns the step length.
    fn pivot(&mut self, rank: usize, phase_one: bool) -> Result<f64> {
        let m = self.m;
        let mut idx = std::mem::take(&mut self.scratch_idx);
        self.unrank(rank, &mut idx);
        let mut col = std::mem::take(&mut self.scratch_col);
        Self::column_rows(&self.row_of, &idx, &mut col);
        self.scratch_idx = idx;

        // d = B^{-1} a, using the sparsity of a.
        let mut d = vec![0.0; m];
        for (k, dk) in d.iter_mut().enumerate() {
            let row = &self.binv[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for &r in &col {
                acc += row[r];
            }
            *dk = acc;
        }
        self.scratch_col = col;

        // Ratio test. Basic artificials at zero level are evicted at step
        // zero whenever the direction touches them, which keeps them from
        // re-entering the solution in phase 2.
        let mut leave: Option<(f64, usize, usize)> = None; // (ratio, var, row)
        for k in 0..m {
            let var = self.basis[k];
            let is_artificial = var >= self.total;
            let candidate = if !phase_one && is_artificial && d[k].abs() > PIVOT_EPS {
                Some(0.0)
            } else if d[k] > PIVOT_EPS {
                Some((self.x_b[k].max(0.0)) / d[k])
            } else {
                None
            };
            if let Some(ratio) = candidate {
                let better = match leave {
                    None => true,
                    Some((r0, v0, _)) => ratio < r0 || (ratio == r0 && var < v0),
                };
                if better {
                    leave = Some((ratio, var, k));
                }
            }
        }
        let (step, _, leave_row) = leave.ok_or(Error::Infeasible)?;

        // Update solution values and the basis inverse.
        for k in 0..m {
            if k != leave_row {
                self.x_b[k] -= step * d[k];
                if self.x_b[k] < 0.0 && self.x_b[k] > -1e-11 {
                    self.x_b[k] = 0.0;
                }
            }
        }
        self.x_b[leave_row] = step;

        let pivot_val = d[leave_row];
        let prow = leave_row * m;
        for j in 0..m {
            self.binv[prow + j] /= pivot_val;
        }
        for k in 0..m {
            if k == leave_row || d[k] == 0.0 {
                continue;
            }
            let factor = d[k];
            let (head, tail) = self.binv.split_at_mut(prow.max(k * m));
            let (src, dst) = if k * m < prow {
                (&tail[..m], &mut head[k * m..k * m + m])
            } else {
                (&head[prow..prow + m], &mut tail[..m])
            };
            for (dv, &sv) in dst.iter_mut().zip(src) {
                *dv -= factor * sv;
            }
        }

        self.basis[leave_row] = rank;
        self.pivots += 1;
        if self.pivots % REFACTOR_EVERY == 0 {
            self.refactor()?;
        }
        Ok(step)
    }

    /// Rebuilds the basis inverse and solution from scratch via
    /// Gauss-Jordan with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat: Vec<f64> = vec![0.0; m * m];
        let mut idx = std::mem::take(&mut self.scratch_idx);
        let mut col = std::mem::take(&mut self.scratch_col);
        for (k, &var) in self.basis.iter().enumerate() {
            if var >= self.total {
                mat[(var - self.total) * m + k] = 1.0;
            } else {
                self.unrank(var, &mut idx);
                Self::column_rows(&self.row_of, &idx, &mut col);
                for &r in &col {
                    mat[r * m + k] = 1.0;
                }
            }
        }
        self.scratch_idx = idx;
        self.scratch_col = col;

        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = mat[c * m + c].abs();
            for r in (c + 1)..m {
                let v = mat[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(Error::Infeasible);
            }
            if piv != c {
                for j in 0..m {
                    mat.swap(c * m + j, piv * m + j);
                    inv.swap(c * m + j, piv * m + j);
                }
            }
            let pv = mat[c * m + c];
            for j in 0..m {
                mat[c * m + j] /= pv;
                inv[c * m + j] /= pv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = mat[r * m + c];
                if f != 0.0 {
                    for j in 0..m {
                        mat[r * m + j] -= f * mat[c * m + j];
                        inv[r * m + j] -= f * inv[c * m + j];
                    }
                }
            }
        }
        self.binv = inv;
        let mut xb = vec![0.0; m];
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            xb[r] = row.iter().zip(&self.rhs).map(|(b, v)| b * v).sum();
            if xb[r] < 0.0 && xb[r] > -1e-9 {
                xb[r] = 0.0;
            }
        }
        self.x_b = xb;
        Ok(())
    }

    fn run_phase(&mut self, phase_one: bool) -> Result<()> {
        let mut bland = false;
        let mut stall = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::NonConvergence(MAX_PIVOTS));
            }
            let y = self.duals(phase_one);
            let tol = if phase_one {
                1e-11
            } else {
                1e-11 * (1.0 + self.c_max)
            };
            let Some(rank) = self.price(&y, phase_one, bland, tol) else {
                return Ok(());
            };
            let step = self.pivot(rank, phase_one)?;
            if step > 1e-13 {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    bland = true;
                }
            }
        }
    }
}

/// Solves `min Σ_J cost(J) γ_J` over couplings of the given marginals.
///
/// The marginal weight vectors must each sum to one. Returns an optimal
/// vertex together with the dual variables certifying it.
pub(crate) fn solve_transport<C: FnMut(&[usize]) -> f64>(
    marginals: &[Vec<f64>],
    cost_fn: &mut C,
) -> Result<TransportSolution> {
    if marginals.is_empty() {
        return Err(Error::Invalid("need at least one marginal".into()));
    }
    for w in marginals {
        if w.is_empty() {
            return Err(Error::Invalid("marginal with empty support".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("marginal mass {s} is not 1")));
        }
    }

    let mut tab = Tableau::new(marginals, cost_fn)?;

    tab.run_phase(true)?;
    let phase1_obj: f64 = tab
        .basis
        .iter()
        .zip(&tab.x_b)
        .filter(|(&v, _)| v >= tab.total)
        .map(|(_, &x)| x)
        .sum();
    if phase1_obj > 1e-8 {
        return Err(Error::Infeasible);
    }

    tab.run_phase(false)?;

    // Plan entries: positive-mass basic real variables.
    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    let n_marg = marginals.len();
    for (k, &var) in tab.basis.iter().enumerate() {
        if var < tab.total && tab.x_b[k] > MASS_EPS {
            let mut idx = vec![0usize; n_marg];
            tab.unrank(var, &mut idx);
            entries.push((idx, tab.x_b[k]));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let basic: Vec<(usize, f64)> = tab
        .basis
        .iter()
        .zip(&tab.x_b)
        .filter(|(&v, _)| v < tab.total)
        .map(|(&v, &x)| (v, x))
        .collect();
    let cost: f64 = basic.into_iter().map(|(v, x)| tab.cost_of(v) * x).sum();

    let y = tab.duals(false);
    let mut duals = Vec::with_capacity(n_marg);
    for rows in &tab.row_of {
        duals.push(
            rows.iter()
                .map(|&r| if r == usize::MAX { 0.0 } else { y[r] })
                .collect(),
        );
    }

    Ok(TransportSolution {
        entries,
        cost,
        duals,
        pivots: tab.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_marginals_single_entry() {
        let marg = vec![vec![1.0], vec![1.0], vec![1.0]];
        let mut cost = |_: &[usize]| 7.5;
        let sol = solve_transport(&marg, &mut cost).unwrap();
        assert_eq!(sol.entries, vec![(vec![0, 0, 0], 1.0)]);
        assert!((sol.cost - 7.5).abs() < 1e-12);
        let dual_sum: f64 = sol.duals.iter().map(|u| u[0]).sum();
        assert!((dual_sum - 7.5).abs() < 1e-9);
    }

    #[test]
    fn two_marginal_known_optimum() {
        // Classic 2x2: mass must cross on the cheap diagonal.
        let marg = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let mut cost = |idx: &[usize]| if idx[0] == idx[1] { 0.0 } else { 1.0 };
        let sol = solve_transport(&marg, &mut cost).unwrap();
        assert!(sol.cost.abs() < 1e-12);
        assert_eq!(sol.entries.len(), 2);
        for (idx, mass) in &sol.entries {
            assert_eq!(idx[0], idx[1]);
            assert!((mass - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_three_matches_permutation_enumeration() {
        // Uniform marginals on 3 atoms: vertices are permutation matrices,
        // so brute force over all 6 permutations is an exact oracle.
        let xs = [0.0f64, 1.0, 3.0];
        let ys = [0.2f64, 1.5, 2.5];
        let marg = vec![vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]];
        let c = |i: usize, j: usize| (xs[i] - ys[j]).powi(2);
        let mut cost = |idx: &[usize]| c(idx[0], idx[1]);
        let sol = solve_transport(&marg, &mut cost).unwrap();

        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|perm| (0..3).map(|i| c(i, perm[i])).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        assert!((sol.cost - best).abs() < 1e-10, "{} vs {}", sol.cost, best);
    }

    #[test]
    fn duals_certify_optimality() {
        let marg = vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5]];
        let pts = [[0.0, 1.0], [0.25, 0.8], [0.5, 0.1]];
        let mut cost = |idx: &[usize]| {
            let z: f64 = (0..3).map(|i| pts[i][idx[i]]).sum::<f64>() / 3.0;
            (0..3).map(|i| (pts[i][idx[i]] - z).powi(2)).sum::<f64>() / 3.0
        };
        let sol = solve_transport(&marg, &mut cost).unwrap();

        // Weak duality on every column, equality on the support.
        for j0 in 0..2 {
            for j1 in 0..2 {
                for j2 in 0..2 {
                    let idx = [j0, j1, j2];
                    let c = cost(&idx);
                    let u = sol.duals[0][j0] + sol.duals[1][j1] + sol.duals[2][j2];
                    assert!(u <= c + 1e-8, "dual violation at {idx:?}");
                }
            }
        }
        for (idx, _) in &sol.entries {
            let c = cost(idx);
            let u: f64 = (0..3).map(|i| sol.duals[i][idx[i]]).sum();
            assert!((u - c).abs() < 1e-8);
        }

        // Sparsity bound on the vertex.
        assert!(sol.entries.len() <= 2 + 2 + 2 - 3 + 1);

        // Marginal constraints.
        for i in 0..3 {
            for a in 0..2 {
                let mass: f64 = sol
                    .entries
                    .iter()
                    .filter(|(idx, _)| idx[i] == a)
                    .map(|(_, g)| g)
                    .sum();
                assert!((mass - marg[i][a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn budget_guard() {
        let marg: Vec<Vec<f64>> = (0..9).map(|_| vec![0.1; 10]).collect();
        let mut cost = |_: &[usize]| 0.0;
        match solve_transport(&marg, &mut cost) {
            Err(Error::VariableBudget { .. }) => {}
            other => panic!("expected budget error, got {:?}", other.map(|s| s.cost)),
        }
    }
}
