//! Small vector helpers shared by the solvers.

/// Euclidean distance between two points of equal dimension.
#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm.
#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest pairwise distance among `points`; zero for fewer than two points.
pub(crate) fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (k, a) in points.iter().enumerate() {
        for b in &points[k + 1..] {
            d = d.max(dist(a, b));
        }
    }
    d
}

/// Componentwise minimum and maximum over a set of points.
pub(crate) fn bounding_box(points: &[Vec<f64>]) -> Option<(Vec<f64>, Vec<f64>)> {
    let first = points.first()?;
    let mut lo = first.clone();
    let mut hi = first.clone();
    for pt in &points[1..] {
        for (k, &v) in pt.iter().enumerate() {
            if v < lo[k] {
                lo[k] = v;
            }
            if v > hi[k] {
                hi[k] = v;
            }
        }
    }
    Some((lo, hi))
}

/// Neumaier compensated sum; keeps the error of long weight sums near one ulp.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
