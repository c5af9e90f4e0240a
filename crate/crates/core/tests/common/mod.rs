//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use memory_mpc::hull::{ConvexHull, DataPoint, FacetKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn subsets(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > len {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < len - k + i {
                break;
            }
            if i == 0 && cur[0] >= len - k {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Lower hull facets by enumeration: a subset is a facet when the
/// plane through its lifted points has every lifted point weakly above.
pub fn lower_hull(xs: &[DVector<f64>], js: &[f64]) -> BTreeSet<Vec<usize>> {
    let n = xs[0].len();
    let mut out = BTreeSet::new();
    for s in subsets(xs.len(), n + 1) {
        // solve [x 1] [a; b] = J
        let a = DMatrix::from_fn(n + 1, n + 1, |r, c| if c < n { xs[s[r]][c] } else { 1.0 });
        let rhs = DVector::from_fn(n + 1, |r, _| js[s[r]]);
        let det = a.determinant();
        let edge = (1..=n).map(|r| (&xs[s[r]] - &xs[s[0]]).norm()).product::<f64>();
        if det.abs() <= 1e-10 * edge {
            continue;
        }
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        let above = (0..xs.len()).all(|p| {
            let plane: f64 = (0..n).map(|c| sol[c] * xs[p][c]).sum::<f64>() + sol[n];
            js[p] >= plane - 1e-9
        });
        if above {
            out.insert(s);
        }
    }
    out
}

/// Facets of `conv xs` by enumeration.
pub fn outer_hull(xs: &[DVector<f64>]) -> BTreeSet<Vec<usize>> {
    let n = xs[0].len();
    let mut out = BTreeSet::new();
    for s in subsets(xs.len(), n) {
        // normal as the cofactor vector of the edge matrix padded with a free row
        let normal = if n == 1 {
            DVector::from_element(1, 1.0)
        } else {
            let e = DMatrix::from_fn(n - 1, n, |r, c| xs[s[r + 1]][c] - xs[s[0]][c]);
            let cof = DVector::from_fn(n, |c, _| {
                let minor = e.clone().remove_column(c);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * minor.determinant()
            });
            let scale: f64 = (0..n - 1).map(|r| e.row(r).norm()).product();
            if cof.norm() <= 1e-10 * scale {
                continue;
            }
            cof.normalize()
        };
        let off = normal.dot(&xs[s[0]]);
        let side: Vec<f64> = xs.iter().map(|x| normal.dot(x) - off).collect();
        if side.iter().all(|&d| d <= 1e-9) || side.iter().all(|&d| d >= -1e-9) {
            out.insert(s);
        }
    }
    out
}

pub fn live(h: &ConvexHull, kind: FacetKind) -> BTreeSet<Vec<usize>> {
    h.facets(kind)
        .map(|(_, f)| {
            let mut f = f.to_vec();
            f.sort_unstable();
            f
        })
        .collect()
}

/// Random points in general position with a convex-plus-noise cost.
pub fn random_cloud(seed: u64, n: usize, count: usize) -> Vec<DataPoint> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let x = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
            let j = x.norm_squared() + 0.3 * r.gen_range(0.0..1.0);
            DataPoint::new(DVector::from_element(2, i as f64), x, j)
        })
        .collect()
}
