//! Consistency audit of a hull object.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use super::geometry::{barycentric, simplex_quality};
use super::{ConvexHull, FacetKind, VertexLink};
use crate::cost::combinations;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    /// Slack for the plane and halfspace checks, scaled by coordinate magnitude.
    pub tolerance: f64,
    /// Compare against exhaustive enumeration when `C(m, n+1) ≤` this many subsets.
    pub brute_force_subsets: Option<u64>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            brute_force_subsets: Some(2_000_000),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    /// `(check, violations)` in the order they ran.
    pub checks: Vec<(&'static str, usize)>,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, name: &'static str, found: Vec<String>) {
        self.checks.push((name, found.len()));
        self.violations.extend(found.into_iter().map(|v| format!("{name}: {v}")));
    }
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, count) in &self.checks {
            let status = if *count == 0 { "ok" } else { "FAILED" };
            writeln!(f, "{name:<16} {status} ({count} violations)")?;
        }
        for v in self.violations.iter().take(20) {
            writeln!(f, "  {v}")?;
        }
        if self.violations.len() > 20 {
            writeln!(f, "  … {} more", self.violations.len() - 20)?;
        }
        Ok(())
    }
}

fn binomial(m: usize, k: usize) -> u64 {
    if k > m {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc.min(u64::MAX as u128) as u64
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

pub fn audit(hull: &ConvexHull, opts: &AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    let m = hull.len();
    let n = hull.n;

    let mut found = Vec::new();
    for kind in [FacetKind::Lower, FacetKind::Outer] {
        let free: BTreeSet<usize> = hull.free_slots(kind).iter().copied().collect();
        if free.len() != hull.free_slots(kind).len() {
            found.push(format!("{kind:?} free list has duplicates"));
        }
        for s in 0..hull.slot_count(kind) {
            if hull.facet(kind, s).is_none() != free.contains(&s) {
                found.push(format!("{kind:?} slot {s} free-list mismatch"));
            }
        }
        if free.iter().any(|&s| s >= hull.slot_count(kind)) {
            found.push(format!("{kind:?} free list points past the slot table"));
        }
        let size = if kind == FacetKind::Lower { n + 1 } else { n };
        for (s, f) in hull.facets(kind) {
            if f.len() != size || f.iter().any(|&v| v >= m) || sorted(f).windows(2).any(|w| w[0] == w[1]) {
                found.push(format!("{kind:?} facet {s} has malformed vertices {f:?}"));
            }
        }
    }
    report.record("slots", found);

    let mut found = Vec::new();
    for (s, f) in hull.facets(FacetKind::Lower) {
        for &v in f.iter().filter(|&&v| v < m) {
            match &hull.links[v] {
                VertexLink::Facets(list) if list.contains(&s) => {}
                VertexLink::Facets(_) => found.push(format!("vertex {v} does not list lower facet {s}")),
                VertexLink::Absorbed(_) => found.push(format!("absorbed vertex {v} is in lower facet {s}")),
            }
        }
    }
    for (s, f) in hull.facets(FacetKind::Outer) {
        for &v in f.iter().filter(|&&v| v < m) {
            if !hull.outer_links[v].contains(&s) {
                found.push(format!("vertex {v} does not list outer facet {s}"));
            }
        }
    }
    for v in 0..m {
        match &hull.links[v] {
            VertexLink::Facets(list) => {
                for &s in list {
                    if !hull.facet(FacetKind::Lower, s).is_some_and(|f| f.contains(&v)) {
                        found.push(format!("vertex {v} lists lower facet {s}, which does not contain it"));
                    }
                }
            }
            VertexLink::Absorbed(k) => {
                if *k >= m {
                    found.push(format!("vertex {v} redirects to missing point {k}"));
                }
            }
        }
        for &s in &hull.outer_links[v] {
            if !hull.facet(FacetKind::Outer, s).is_some_and(|f| f.contains(&v)) {
                found.push(format!("vertex {v} lists outer facet {s}, which does not contain it"));
            }
        }
    }
    if found.is_empty() {
        for v in 0..m {
            let live = hull.resolve(v);
            if matches!(hull.links[live], VertexLink::Absorbed(_)) {
                found.push(format!("redirect chain from {v} does not end at a live vertex"));
            }
        }
    }
    report.record("graph", found);
    if !report.is_clean() {
        return report;
    }

    let scale_x = hull.xs.iter().map(|x| x.amax()).fold(0.0, f64::max);
    let scale_j = hull.js.iter().map(|j| j.abs()).fold(0.0, f64::max);
    let tol_x = opts.tolerance * (1.0 + scale_x);
    let tol_j = opts.tolerance * (1.0 + scale_j + scale_x);

    let mut found = Vec::new();
    for (s, f) in hull.facets(FacetKind::Lower) {
        let pts: Vec<_> = f.iter().map(|&v| &hull.xs[v]).collect();
        if simplex_quality(&pts) < 1e-12 {
            found.push(format!("lower facet {s} is flat"));
            continue;
        }
        let Some(plane) = affine_interpolant(hull, f) else {
            found.push(format!("lower facet {s} has no interpolant"));
            continue;
        };
        for p in 0..m {
            let value = plane.0.dot(&hull.xs[p]) + plane.1;
            if hull.js[p] < value - tol_j {
                found.push(format!("point {p} lies below lower facet {s} by {:e}", value - hull.js[p]));
            }
        }
    }
    report.record("lower_hull", found);

    let mut found = Vec::new();
    for (s, f) in hull.facets(FacetKind::Outer) {
        let pts: Vec<_> = f.iter().map(|&v| &hull.xs[v]).collect();
        let Some(d) = hyperplane_normal(&pts) else {
            found.push(format!("outer facet {s} is flat"));
            continue;
        };
        let offset = d.dot(pts[0]);
        let side = (d.dot(&hull.centroid_x) - offset).signum();
        for p in 0..m {
            let dist = -side * (d.dot(&hull.xs[p]) - offset);
            if dist > tol_x {
                found.push(format!("point {p} lies outside outer facet {s} by {dist:e}"));
            }
        }
    }
    report.record("outer_hull", found);

    let mut found = Vec::new();
    let mut ridge_count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (_, f) in hull.facets(FacetKind::Lower) {
        for d in 0..f.len() {
            *ridge_count.entry(sorted(&super::without(f, d))).or_default() += 1;
        }
    }
    let outer_set: BTreeSet<Vec<usize>> = hull.facets(FacetKind::Outer).map(|(_, f)| sorted(f)).collect();
    for (ridge, count) in &ridge_count {
        let boundary = outer_set.contains(ridge);
        let expected = if boundary { 1 } else { 2 };
        if *count != expected {
            found.push(format!("lower ridge {ridge:?} is shared by {count} facets"));
        }
    }
    for f in &outer_set {
        if !ridge_count.contains_key(f) {
            found.push(format!("outer facet {f:?} bounds no lower facet"));
        }
    }
    if n >= 2 {
        let mut outer_ridges: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for f in &outer_set {
            for d in 0..f.len() {
                *outer_ridges.entry(super::without(f, d)).or_default() += 1;
            }
        }
        for (ridge, count) in outer_ridges {
            if count != 2 {
                found.push(format!("outer ridge {ridge:?} is shared by {count} facets"));
            }
        }
    } else if outer_set.len() != 2 {
        found.push(format!("a 1-D hull needs two end points, found {}", outer_set.len()));
    }
    report.record("closure", found);

    let mut found = Vec::new();
    if m > 0 {
        let mean_x = hull.xs.iter().fold(DVector::zeros(n), |a, x| a + x) / m as f64;
        let mean_j = hull.js.iter().sum::<f64>() / m as f64;
        let err_x = (&mean_x - &hull.centroid_x).amax();
        let err_j = (mean_j - hull.centroid_xj[n])
            .abs()
            .max((mean_x - hull.centroid_xj.rows(0, n)).amax());
        let slack = 1e-12 * (m as f64).max(1.0);
        if err_x > slack * (1.0 + scale_x) {
            found.push(format!("centroid_x is off by {err_x:e}"));
        }
        if err_j > slack * (1.0 + scale_x + scale_j) {
            found.push(format!("centroid_xj is off by {err_j:e}"));
        }
    }
    report.record("centroids", found);

    if let Some(limit) = opts.brute_force_subsets {
        if binomial(m, n + 1) <= limit {
            let mut found = Vec::new();
            let live_lower: BTreeSet<Vec<usize>> = hull.facets(FacetKind::Lower).map(|(_, f)| sorted(f)).collect();
            let brute_lower: BTreeSet<Vec<usize>> = brute_force_lower_hull(&hull.xs, &hull.js, opts.tolerance)
                .into_iter()
                .collect();
            for f in live_lower.symmetric_difference(&brute_lower) {
                let side = if live_lower.contains(f) { "extra" } else { "missing" };
                found.push(format!("{side} lower facet {f:?}"));
            }
            let brute_outer: BTreeSet<Vec<usize>> = brute_force_outer_hull(&hull.xs, opts.tolerance).into_iter().collect();
            for f in outer_set.symmetric_difference(&brute_outer) {
                let side = if outer_set.contains(f) { "extra" } else { "missing" };
                found.push(format!("{side} outer facet {f:?}"));
            }
            report.record("brute_force", found);
        }
    }
    report
}

/// `(a, b)` with `J = aᵀx + b` through the facet's lifted vertices.
fn affine_interpolant(hull: &ConvexHull, f: &[usize]) -> Option<(DVector<f64>, f64)> {
    lift_plane(&f.iter().map(|&v| (&hull.xs[v], hull.js[v])).collect::<Vec<_>>())
}

fn lift_plane(points: &[(&DVector<f64>, f64)]) -> Option<(DVector<f64>, f64)> {
    let n = points[0].0.len();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut b = DVector::zeros(n + 1);
    for (i, (x, j)) in points.iter().enumerate() {
        a.view_mut((i, 0), (1, n)).copy_from(&x.transpose());
        a[(i, n)] = 1.0;
        b[i] = *j;
    }
    let sol = a.lu().solve(&b)?;
    Some((sol.rows(0, n).into_owned(), sol[n]))
}

/// Unit normal of the affine hull of `n` points in ℝⁿ.
fn hyperplane_normal(points: &[&DVector<f64>]) -> Option<DVector<f64>> {
    let n = points[0].len();
    if n == 1 {
        return Some(DVector::from_element(1, 1.0));
    }
    if simplex_quality(points) < 1e-12 {
        return None;
    }
    let mut e = DMatrix::zeros(n, n);
    for j in 1..points.len() {
        e.set_row(j - 1, &(points[j] - points[0]).transpose());
    }
    let svd = e.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Some(v_t.row(idx).transpose().normalize())
}

/// Exhaustive lower hull: every `(n+1)`-subset with a full-dimensional
/// projection whose interpolating plane has all points on or above it.
pub fn brute_force_lower_hull(xs: &[DVector<f64>], js: &[f64], tolerance: f64) -> Vec<Vec<usize>> {
    let n = xs.first().map_or(0, |x| x.len());
    let scale = xs.iter().map(|x| x.amax()).fold(0.0, f64::max) + js.iter().map(|j| j.abs()).fold(0.0, f64::max);
    let tol = tolerance * (1.0 + scale);
    let mut out = Vec::new();
    for subset in combinations(xs.len(), n + 1) {
        let pts: Vec<_> = subset.iter().map(|&v| &xs[v]).collect();
        if simplex_quality(&pts) < 1e-12 || barycentric(&pts, &xs[subset[0]]).is_none() {
            continue;
        }
        let Some((a, b)) = lift_plane(&subset.iter().map(|&v| (&xs[v], js[v])).collect::<Vec<_>>()) else {
            continue;
        };
        if (0..xs.len()).all(|p| js[p] >= a.dot(&xs[p]) + b - tol) {
            out.push(subset);
        }
    }
    out
}

/// Exhaustive boundary of `conv xs`: every `n`-subset spanning a hyperplane
/// with all points on one side.
pub fn brute_force_outer_hull(xs: &[DVector<f64>], tolerance: f64) -> Vec<Vec<usize>> {
    let n = xs.first().map_or(0, |x| x.len());
    let scale = xs.iter().map(|x| x.amax()).fold(0.0, f64::max);
    let tol = tolerance * (1.0 + scale);
    let mut out = Vec::new();
    for subset in combinations(xs.len(), n) {
        let pts: Vec<_> = subset.iter().map(|&v| &xs[v]).collect();
        let Some(d) = hyperplane_normal(&pts) else {
            continue;
        };
        let offset = d.dot(pts[0]);
        let side: Vec<f64> = xs.iter().map(|x| d.dot(x) - offset).collect();
        if side.iter().all(|&s| s <= tol) || side.iter().all(|&s| s >= -tol) {
            out.push(subset);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_dump, write_dump, DataPoint};
    use super::*;

    fn grid_hull() -> ConvexHull {
        let p = |x: f64, y: f64| {
            DataPoint::new(
                DVector::from_vec(vec![x - y]),
                DVector::from_vec(vec![x, y]),
                x * x + 0.7 * y * y + 0.1 * x * y,
            )
        };
        let mut h = ConvexHull::init(&[p(0.05, 0.02), p(1.9, -0.1), p(0.2, 1.7)]).unwrap();
        let extra = [(-1.3, 0.4), (0.6, 0.7), (1.1, -1.4), (-0.8, -1.1), (2.3, 1.9), (0.31, 0.12), (-2.0, 2.1)];
        for (x, y) in extra {
            h.insert(p(x, y), 0).unwrap();
        }
        h
    }

    #[test]
    fn clean_hull_passes() {
        let report = audit(&grid_hull(), &AuditOptions::default());
        assert!(report.is_clean(), "{report}");
        assert!(report.checks.iter().any(|(name, _)| *name == "brute_force"));
    }

    #[test]
    fn corrupted_facet_is_reported() {
        let h = grid_hull();
        let text = write_dump(&h);
        let (slot, f) = h.facets(FacetKind::Lower).next().map(|(s, f)| (s, f.to_vec())).unwrap();
        let original = format!("lower {slot} live {}", f.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        let other = (0..h.len()).find(|v| !f.contains(v)).unwrap();
        let corrupted = format!(
            "lower {slot} live {} {} {other}",
            f[0], f[1]
        );
        let broken = parse_dump(&text.replacen(&original, &corrupted, 1)).unwrap();
        let report = audit(&broken, &AuditOptions::default());
        assert!(!report.is_clean());
        assert!(report.violations.iter().any(|v| v.starts_with("graph")));
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(60, 4), 487_635);
        assert_eq!(binomial(3, 5), 0);
    }
}
