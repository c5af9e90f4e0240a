//! Small dense-geometry kernels used by the hull.

use nalgebra::{DMatrix, DVector};

use super::HullError;

/// Branching tolerance for a quantity of magnitude around `scale`.
pub(crate) fn strict_tol(scale: f64) -> f64 {
    1e-12 * (1.0 + scale)
}

/// Unit normal of the hyperplane through `points` (p points in ℝᵖ) pointing
/// away from `away_from`. Built from the QR factorization of
/// `[A₁-A_p, …, A_{p-1}-A_p, x-A_p]` with a positive `R` diagonal; the
/// normal is the negated last column of `Q`.
pub fn normal(points: &[&DVector<f64>], away_from: &DVector<f64>) -> Result<DVector<f64>, HullError> {
    let p = away_from.len();
    if points.len() != p {
        return Err(HullError::Degenerate(format!(
            "normal needs {p} points in ℝ^{p}, got {}",
            points.len()
        )));
    }
    let base = points[p - 1];
    let mut m = DMatrix::zeros(p, p);
    for (j, pt) in points[..p - 1].iter().enumerate() {
        m.set_column(j, &(*pt - base));
    }
    m.set_column(p - 1, &(away_from - base));
    let scale = m.amax();
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..p {
        let rii = r[(i, i)];
        if !(rii.abs() > 1e-12 * scale.max(1e-300)) {
            return Err(HullError::Degenerate("normal of a singular point set".into()));
        }
        if rii < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    Ok(-q.column(p - 1).into_owned())
}

/// Barycentric coordinates of `x` with respect to `n+1` vertices in ℝⁿ.
pub fn barycentric(vertices: &[&DVector<f64>], x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.len();
    if vertices.len() != n + 1 {
        return None;
    }
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for (j, v) in vertices.iter().enumerate() {
        a[(0, j)] = 1.0;
        a.view_mut((1, j), (n, 1)).copy_from(*v);
    }
    let mut b = DVector::zeros(n + 1);
    b[0] = 1.0;
    b.rows_mut(1, n).copy_from(x);
    let sol = a.lu().solve(&b)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Weights `c` with `Σc = 1` and `Σ cⱼ Eⱼ = x`. Square systems are solved
/// directly; fewer points than `n+1` fall back to least squares.
pub fn convex_combination(points: &[&DVector<f64>], x: &DVector<f64>) -> Result<DVector<f64>, HullError> {
    let n = x.len();
    let k = points.len();
    if k == 0 {
        return Err(HullError::Degenerate("empty vertex set".into()));
    }
    if k == n + 1 {
        return barycentric(points, x).ok_or_else(|| HullError::Degenerate("singular simplex".into()));
    }
    let mut a = DMatrix::zeros(n + 1, k);
    for (j, v) in points.iter().enumerate() {
        a[(0, j)] = 1.0;
        a.view_mut((1, j), (n, 1)).copy_from(*v);
    }
    let mut b = DVector::zeros(n + 1);
    b[0] = 1.0;
    b.rows_mut(1, n).copy_from(x);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax.max(1e-300) {
        return Err(HullError::Degenerate("affinely dependent vertex set".into()));
    }
    svd.solve(&b, 0.0).map_err(|e| HullError::Degenerate(e.to_string()))
}

/// Shape measure in `[0, 1]`: `√det(EᵀE) / Π‖eᵢ‖` for the edge vectors from
/// the first vertex. Zero for a flat simplex; one for mutually orthogonal edges.
pub fn simplex_quality(points: &[&DVector<f64>]) -> f64 {
    if points.len() <= 1 {
        return 1.0;
    }
    let dim = points[0].len();
    let k = points.len() - 1;
    if k > dim {
        return 0.0;
    }
    let mut e = DMatrix::zeros(dim, k);
    for j in 0..k {
        let col = points[j + 1] - points[0];
        let len = col.norm();
        if len == 0.0 {
            return 0.0;
        }
        e.set_column(j, &(col / len));
    }
    e.tr_mul(&e).determinant().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn normal_examples() {
        let (a, b) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let d = normal(&[&a, &b], &v(&[0.0, 0.0])).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((d - v(&[s, s])).amax() < 1e-15);

        let d = normal(&[&v(&[0.0, 0.0]), &v(&[1.0, 0.0])], &v(&[0.0, 1.0])).unwrap();
        assert!((d - v(&[0.0, -1.0])).amax() < 1e-15);

        let pts = [v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])];
        let refs: Vec<_> = pts.iter().collect();
        let d = normal(&refs, &v(&[0.0, 0.0, 1.0])).unwrap();
        assert!((d - v(&[0.0, 0.0, -1.0])).amax() < 1e-15);

        assert!(normal(&[&a, &a], &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn convex_combination_examples() {
        let pts = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let refs: Vec<_> = pts.iter().collect();
        let c = convex_combination(&refs, &v(&[0.25, 0.25])).unwrap();
        assert!((c - v(&[0.5, 0.25, 0.25])).amax() < 1e-15);
        let c = convex_combination(&refs, &v(&[1.0, 0.0])).unwrap();
        assert!((c - v(&[0.0, 1.0, 0.0])).amax() < 1e-15);
        // on an edge with two vertices: least squares branch
        let c = convex_combination(&refs[1..], &v(&[0.5, 0.5])).unwrap();
        assert!((c - v(&[0.5, 0.5])).amax() < 1e-14);
    }

    #[test]
    fn quality_of_flat_and_square_simplices() {
        let pts = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let refs: Vec<_> = pts.iter().collect();
        assert!((simplex_quality(&refs) - 1.0).abs() < 1e-15);
        let flat = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        let refs: Vec<_> = flat.iter().collect();
        assert!(simplex_quality(&refs) < 1e-15);
    }
}
