//! Discrete probability measures: data model, ingestion, Gaussian
//! discretization, and generalized inverse CDFs.

use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::vecmath::compensated_sum;
use crate::{Error, Result};

/// Tolerance on the stored weight sum after normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest deviation of a raw weight sum from one that is silently
/// renormalized on ingestion; anything worse is rejected.
pub const INGEST_SUM_TOL: f64 = 1e-6;

/// Input format accepted by [`load_measure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureFormat {
    /// One record per atom, `x1,...,xd,w`, no header.
    Csv,
    /// `{"dim": d, "atoms": [{"x": [..], "w": ..}, ...]}`.
    Json,
}

/// A finitely supported probability measure on `R^d`.
///
/// Invariants enforced on construction: all weights strictly positive and
/// summing to one within [`WEIGHT_SUM_TOL`], points pairwise distinct, and
/// every point of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    x: Vec<f64>,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<AtomJson>,
}

impl DiscreteMeasure {
    /// Builds a measure from raw atoms: merges exactly coinciding points,
    /// rejects non-positive weights, and renormalizes the total mass to one
    /// when it deviates by at most [`INGEST_SUM_TOL`].
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if points.is_empty() {
            return Err(Error::Invalid("measure needs at least one atom".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        for pt in &points {
            if pt.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: pt.len(),
                });
            }
            if pt.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("non-finite coordinate".into()));
            }
        }
        for &w in &weights {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Invalid(format!("non-positive weight {w}")));
            }
        }

        // Merge duplicates on exact coordinate equality only; nearby but
        // distinct atoms stay separate.
        let mut merged_points: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(points.len());
        for (pt, w) in points.into_iter().zip(weights) {
            match merged_points.iter().position(|q| q == &pt) {
                Some(k) => merged_weights[k] += w,
                None => {
                    merged_points.push(pt);
                    merged_weights.push(w);
                }
            }
        }

        let total = compensated_sum(merged_weights.iter().copied());
        if (total - 1.0).abs() > INGEST_SUM_TOL {
            return Err(Error::WeightSum(total, INGEST_SUM_TOL));
        }
        for w in &mut merged_weights {
            *w /= total;
        }
        // Pin the last weight so the stored sum is one to machine precision
        // even for long atom lists.
        let n = merged_weights.len();
        if n > 1 {
            let head = compensated_sum(merged_weights[..n - 1].iter().copied());
            let last = 1.0 - head;
            if !(last > 0.0) {
                return Err(Error::Invalid(
                    "weights vanish under normalization".into(),
                ));
            }
            merged_weights[n - 1] = last;
        } else {
            merged_weights[0] = 1.0;
        }

        let m = Self {
            dim,
            points: merged_points,
            weights: merged_weights,
        };
        debug_assert!((m.total_mass() - 1.0).abs() <= WEIGHT_SUM_TOL);
        Ok(m)
    }

    /// A unit mass at a single point.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, vec![point], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Atom coordinates as scalars; only valid for `dim == 1`.
    pub fn scalars(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    /// Atom indices sorted by coordinate together with cumulative weights;
    /// only valid for `dim == 1`. The cumulative array ends at the total mass.
    fn sorted_cumulative(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.points[a][0].total_cmp(&self.points[b][0]));
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &k in &order {
            acc += self.weights[k];
            cum.push(acc);
        }
        Ok((order, cum))
    }

    /// Generalized inverse CDF `F^{-1}(y) = inf { x : F(x) ≥ y }` for a
    /// one-dimensional measure and `y ∈ (0, 1)`.
    pub fn quantile(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Invalid(format!("quantile level {y} outside (0,1)")));
        }
        let (order, cum) = self.sorted_cumulative()?;
        // First sorted atom whose cumulative weight reaches y.
        let k = cum.partition_point(|&c| c < y);
        let k = k.min(order.len() - 1);
        Ok(self.points[order[k]][0])
    }

    /// Quantiles at many levels at once, reusing one sorted pass.
    pub fn quantiles(&self, levels: &[f64]) -> Result<Vec<f64>> {
        let (order, cum) = self.sorted_cumulative()?;
        levels
            .iter()
            .map(|&y| {
                if !(y > 0.0 && y < 1.0) {
                    return Err(Error::Invalid(format!(
                        "quantile level {y} outside (0,1)"
                    )));
                }
                let k = cum.partition_point(|&c| c < y).min(order.len() - 1);
                Ok(self.points[order[k]][0])
            })
            .collect()
    }

    /// Cumulative weight breakpoints strictly inside `(0, 1)`, sorted by
    /// atom coordinate. Used by the exact 1D transport integrals.
    pub(crate) fn interior_breakpoints(&self) -> Result<Vec<f64>> {
        let (_, cum) = self.sorted_cumulative()?;
        Ok(cum
            .iter()
            .copied()
            .take(cum.len().saturating_sub(1))
            .filter(|&c| c > 0.0 && c < 1.0)
            .collect())
    }

    /// Serializes to the atom-list JSON format.
    pub fn to_json_string(&self) -> Result<String> {
        let doc = MeasureJson {
            dim: self.dim,
            atoms: self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(x, &w)| AtomJson { x: x.clone(), w })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Serializes to the headerless CSV format `x1,...,xd,w`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (pt, w) in self.points.iter().zip(&self.weights) {
            for c in pt {
                out.push_str(&format!("{c:.16e},"));
            }
            out.push_str(&format!("{w:.16e}\n"));
        }
        out
    }
}

/// Reads a measure from a byte stream in the declared format.
///
/// Duplicate atoms are merged with summed weights, and the weights are
/// renormalized to total mass one when within [`INGEST_SUM_TOL`] of it.
pub fn load_measure(source: impl Read, format: MeasureFormat) -> Result<DiscreteMeasure> {
    match format {
        MeasureFormat::Csv => load_csv(source),
        MeasureFormat::Json => load_json(source),
    }
}

fn load_csv(source: impl Read) -> Result<DiscreteMeasure> {
    let reader = BufReader::new(source);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!(
                "line {}: need at least one coordinate and a weight",
                lineno + 1
            )));
        }
        let mut values = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::Parse(format!("line {}: bad number {:?}", lineno + 1, f))
            })?;
            values.push(v);
        }
        let w = values.pop().expect("at least two fields");
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: values.len(),
                })
            }
            _ => {}
        }
        points.push(values);
        weights.push(w);
    }

    let dim = dim.ok_or_else(|| Error::Parse("empty measure file".into()))?;
    DiscreteMeasure::new(dim, points, weights)
}

fn load_json(source: impl Read) -> Result<DiscreteMeasure> {
    let doc: MeasureJson = serde_json::from_reader(source)?;
    let (points, weights) = doc.atoms.into_iter().map(|a| (a.x, a.w)).unzip();
    DiscreteMeasure::new(doc.dim, points, weights)
}

/// Quantile-midpoint discretization of a Gaussian: `n` atoms at
/// `mean + std · Φ^{-1}((k − 1/2) / n)`, each of weight `1/n`.
pub fn discretize_gaussian(mean: f64, std: f64, n: usize) -> Result<DiscreteMeasure> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Invalid(format!("std must be positive, got {std}")));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one atom".into()));
    }
    let mut points = Vec::with_capacity(n);
    for k in 1..=n {
        let y = (k as f64 - 0.5) / n as f64;
        points.push(vec![mean + std * norm_inv_cdf(y)]);
    }
    let weights = vec![1.0 / n as f64; n];
    DiscreteMeasure::new(1, points, weights)
}

/// A uniform grid of inverse-CDF samples on `(0, 1)`: levels
/// `y_k = (k − 1/2)/m`, values non-decreasing in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    m: usize,
    levels: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileGrid {
    /// Validates monotonicity and wraps the samples.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("quantile grid needs m >= 1".into()));
        }
        for win in values.windows(2) {
            if win[1] < win[0] {
                return Err(Error::Invalid(format!(
                    "quantile values decrease: {} -> {}",
                    win[0], win[1]
                )));
            }
        }
        let m = values.len();
        let levels = (1..=m).map(|k| (k as f64 - 0.5) / m as f64).collect();
        Ok(Self { m, levels, values })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

// --- standard normal machinery -------------------------------------------

/// `erf` by the all-positive-terms series
/// `erf(x) = 2x e^{-x²}/√π · Σ_k (2x²)^k / (1·3···(2k+1))`,
/// which is cancellation-free for all arguments of interest here.
pub fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < 0.0 {
        return -erf_series(-x);
    }
    if x > 6.5 {
        // erfc(6.5) < 4e-20: saturated at f64 resolution.
        return 1.0;
    }
    let two_x2 = 2.0 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1u32;
    loop {
        term *= two_x2 / (2 * k + 1) as f64;
        sum += term;
        if term < sum * 1e-17 || k > 400 {
            break;
        }
        k += 1;
    }
    let front = 2.0 / std::f64::consts::PI.sqrt() * x * (-x * x).exp();
    (front * sum).min(1.0)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

/// Standard normal inverse CDF by bisection on [`norm_cdf`].
///
/// Deterministic across platforms; resolves the root to about 1e-13.
pub fn norm_inv_cdf(y: f64) -> f64 {
    assert!(y > 0.0 && y < 1.0, "level {y} outside (0,1)");
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parse_basic() {
        let m = load_measure("0,0.5\n1,0.5".as_bytes(), MeasureFormat::Csv).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.len(), 2);
        assert_eq!(m.points(), &[vec![0.0], vec![1.0]]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_duplicate_merge() {
        let m = load_measure("0,0.3\n0,0.2\n1,0.5".as_bytes(), MeasureFormat::Csv).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.points(), &[vec![0.0], vec![1.0]]);
        assert!((m.weight(0) - 0.5).abs() < 1e-15);
        assert!((m.weight(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn csv_bad_weight_sum() {
        let err = load_measure("0,0.4\n1,0.4".as_bytes(), MeasureFormat::Csv).unwrap_err();
        match err {
            Error::WeightSum(s, _) => assert!((s - 0.8).abs() < 1e-12),
            other => panic!("expected weight-sum error, got {other}"),
        }
    }

    #[test]
    fn csv_rejects_nonpositive_weight_and_mixed_dim() {
        assert!(load_measure("0,-0.5\n1,1.5".as_bytes(), MeasureFormat::Csv).is_err());
        assert!(load_measure("0,1,0.5\n1,0.5".as_bytes(), MeasureFormat::Csv).is_err());
        assert!(load_measure("0,abc\n".as_bytes(), MeasureFormat::Csv).is_err());
        assert!(load_measure("".as_bytes(), MeasureFormat::Csv).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = load_measure(
            r#"{"dim":2,"atoms":[{"x":[0.0,1.0],"w":0.25},{"x":[1.0,0.0],"w":0.75}]}"#.as_bytes(),
            MeasureFormat::Json,
        )
        .unwrap();
        assert_eq!(m.dim(), 2);
        let back = load_measure(m.to_json_string().unwrap().as_bytes(), MeasureFormat::Json)
            .unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_roundtrip_preserves_values() {
        let m = DiscreteMeasure::new(
            1,
            vec![vec![0.1234567890123456], vec![2.0 / 3.0]],
            vec![1.0 / 3.0, 2.0 / 3.0],
        )
        .unwrap();
        let back = load_measure(m.to_csv_string().as_bytes(), MeasureFormat::Csv).unwrap();
        assert_eq!(m.points(), back.points());
        for (a, b) in m.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_single_atom_is_mean() {
        let m = discretize_gaussian(0.0, 1.0, 1).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.point(0)[0].abs() < 1e-12);
        assert_eq!(m.weight(0), 1.0);
    }

    #[test]
    fn gaussian_two_atoms_at_quartiles() {
        // Φ^{-1}(0.75) frozen from an independent bisection on the normal CDF.
        let q = 0.6744897501960817;
        let m = discretize_gaussian(0.0, 1.0, 2).unwrap();
        assert!((m.point(0)[0] + q).abs() < 1e-11, "got {}", m.point(0)[0]);
        assert!((m.point(1)[0] - q).abs() < 1e-11);
        assert_eq!(m.weights(), &[0.5, 0.5]);

        let shifted = discretize_gaussian(3.0, 2.0, 2).unwrap();
        assert!((shifted.point(0)[0] - (3.0 - 2.0 * q)).abs() < 1e-10);
        assert!((shifted.point(1)[0] - (3.0 + 2.0 * q)).abs() < 1e-10);
        let mid = 0.5 * (shifted.point(0)[0] + shifted.point(1)[0]);
        assert!((mid - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_bad_std() {
        assert!(discretize_gaussian(0.0, 0.0, 4).is_err());
        assert!(discretize_gaussian(0.0, -1.0, 4).is_err());
    }

    #[test]
    fn quantile_step_function() {
        let m = DiscreteMeasure::new(1, vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.quantile(0.3).unwrap(), 0.0);
        // At the jump the inf definition stays on the left atom.
        assert_eq!(m.quantile(0.5).unwrap(), 0.0);
        assert_eq!(m.quantile(0.500000001).unwrap(), 1.0);

        let m3 = DiscreteMeasure::new(
            1,
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        assert_eq!(m3.quantile(0.6).unwrap(), 2.0);

        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn quantile_rejects_multidim() {
        let m = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        assert!(m.quantile(0.5).is_err());
    }

    #[test]
    fn erf_matches_reference_values() {
        // Frozen from an independent high-precision evaluation.
        assert!((erf_series(0.5) - 0.5204998778130465).abs() < 1e-14);
        assert!((erf_series(1.5) - 0.9661051464753108).abs() < 1e-14);
        assert!((erf_series(3.0) - 0.9999779095030014).abs() < 1e-14);
        assert!((erf_series(-0.5) + 0.5204998778130465).abs() < 1e-14);
    }

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(1.0) - 0.8413447460685429).abs() < 1e-13);
        assert!((norm_cdf(-2.5) - 0.006209665325776132).abs() < 1e-14);
        assert!((norm_inv_cdf(0.005) + 2.575829303548901).abs() < 1e-11);
    }

    #[test]
    fn gaussian_mean_error_shrinks() {
        for &n in &[10usize, 100] {
            let m = discretize_gaussian(2.0, 1.5, n).unwrap();
            let mean: f64 = m
                .points()
                .iter()
                .zip(m.weights())
                .map(|(x, w)| x[0] * w)
                .sum();
            assert!(
                (mean - 2.0).abs() <= 3.0 * 1.5 / n as f64,
                "n={n}: mean {mean}"
            );
        }
    }

    #[test]
    fn quantile_grid_validation() {
        assert!(QuantileGrid::new(vec![0.0, 1.0, 1.0, 2.0]).is_ok());
        assert!(QuantileGrid::new(vec![0.0, -1.0]).is_err());
        assert!(QuantileGrid::new(vec![]).is_err());
        let g = QuantileGrid::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(g.levels(), &[0.25, 0.75]);
    }
}
