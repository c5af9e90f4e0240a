//! Incremental lower convex hull of the lifted data cloud `{(x, J)}`.
//!
//! The hull is kept as two simplicial facet lists: `lower` holds the facets of
//! the lower hull in `ℝⁿ⁺¹` (n+1 vertices each) and `outer` holds the facets
//! of `conv D_x` in `ℝⁿ` (n vertices each). Per-vertex incidence lists make
//! both directed walks (point location) and flood-fill updates local.
//!
//! Updates treat the lower hull as the polyhedron `conv(D_xJ) + {t·e_J : t ≥ 0}`
//! whose facets are the lower facets plus one vertical facet above each outer
//! facet. A new point removes every facet it sees and cones the horizon to
//! itself; horizon ridges with `n` vertices become lower facets, those with
//! `n-1` vertices become outer facets.

mod audit;
mod dump;
pub mod geometry;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DVector;
use thiserror::Error;

pub use audit::{audit, brute_force_lower_hull, brute_force_outer_hull, AuditOptions, AuditReport};
pub use dump::{parse_dump, write_dump};
use geometry::{barycentric, convex_combination, normal, simplex_quality, strict_tol};

/// Smallest accepted shape measure for a new simplex.
const MIN_QUALITY: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HullError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("point location aborted: {0}")]
    WalkAborted(String),
    #[error("location does not match the query: {0}")]
    StaleLocation(String),
    #[error("hull dimension is {expected}, got a {got}-vector")]
    Dimension { expected: usize, got: usize },
    #[error("dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One stored optimization result `(U, x, J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub seq: DVector<f64>,
    pub x: DVector<f64>,
    pub j: f64,
}

impl DataPoint {
    pub fn new(seq: DVector<f64>, x: DVector<f64>, j: f64) -> Self {
        Self { seq, x, j }
    }
}

/// Result of point location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    /// Slot of the lower facet whose projection contains the query.
    Lower(usize),
    /// Slot of an outer facet whose halfspace excludes the query.
    Outside(usize),
}

impl Location {
    /// One-based signed facet index: positive for lower facets, negative for outer ones.
    pub fn signed(self) -> i64 {
        match self {
            Location::Lower(f) => f as i64 + 1,
            Location::Outside(g) => -(g as i64 + 1),
        }
    }
}

/// Lower-hull incidence of one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VertexLink {
    Facets(Vec<usize>),
    /// Dropped off the lower hull when point `k` was added; continue the search at `k`.
    Absorbed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetKind {
    Lower,
    Outer,
}

/// Output of [`ConvexHull::generate_sw`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub seq: DVector<f64>,
    pub location: Location,
    /// Nearest live vertex, the natural start for the next query.
    pub hint: usize,
    pub vertices: Vec<usize>,
    pub weights: DVector<f64>,
    /// Interpolated cost `J^a(x)`; `+∞` outside `conv D_x`.
    pub j_approx: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsertReport {
    pub index: usize,
    /// The lifted point was above the hull and changed no facet.
    pub above_hull: bool,
    pub removed_lower: usize,
    pub removed_outer: usize,
    pub added_lower: usize,
    pub added_outer: usize,
    pub absorbed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Face {
    Lower(usize),
    Vertical(usize),
}

#[derive(Debug, Default)]
struct Plan {
    remove_lower: Vec<usize>,
    remove_outer: Vec<usize>,
    add_lower: BTreeSet<Vec<usize>>,
    add_outer: BTreeSet<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    n: usize,
    xs: Vec<DVector<f64>>,
    seqs: Vec<DVector<f64>>,
    js: Vec<f64>,
    lower: Vec<Option<Vec<usize>>>,
    outer: Vec<Option<Vec<usize>>>,
    free_lower: Vec<usize>,
    free_outer: Vec<usize>,
    links: Vec<VertexLink>,
    outer_links: Vec<Vec<usize>>,
    centroid_x: DVector<f64>,
    centroid_xj: DVector<f64>,
    scale_x: f64,
}

impl ConvexHull {
    /// Builds the hull of `n+1` affinely independent points: one lower facet
    /// and `n+1` outer facets.
    pub fn init(points: &[DataPoint]) -> Result<Self, HullError> {
        let n = points.first().map_or(0, |p| p.x.len());
        if n == 0 || points.len() != n + 1 {
            return Err(HullError::Degenerate(format!(
                "initialization needs n+1 points in ℝⁿ, got {} points",
                points.len()
            )));
        }
        for p in points {
            if p.x.len() != n {
                return Err(HullError::Dimension {
                    expected: n,
                    got: p.x.len(),
                });
            }
            if !p.j.is_finite() || p.x.iter().chain(p.seq.iter()).any(|v| !v.is_finite()) {
                return Err(HullError::Degenerate("non-finite data point".into()));
            }
        }
        let refs: Vec<_> = points.iter().map(|p| &p.x).collect();
        if simplex_quality(&refs) < MIN_QUALITY {
            return Err(HullError::Degenerate("initial states are affinely dependent".into()));
        }
        let mut hull = Self {
            n,
            xs: Vec::new(),
            seqs: Vec::new(),
            js: Vec::new(),
            lower: Vec::new(),
            outer: Vec::new(),
            free_lower: Vec::new(),
            free_outer: Vec::new(),
            links: Vec::new(),
            outer_links: Vec::new(),
            centroid_x: DVector::zeros(n),
            centroid_xj: DVector::zeros(n + 1),
            scale_x: 0.0,
        };
        for p in points {
            hull.push_point(p);
        }
        hull.add_facet(FacetKind::Lower, (0..=n).collect());
        for skip in (0..=n).rev() {
            hull.add_facet(FacetKind::Outer, (0..=n).filter(|&i| i != skip).collect());
        }
        Ok(hull)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn point_x(&self, i: usize) -> &DVector<f64> {
        &self.xs[i]
    }

    pub fn point_seq(&self, i: usize) -> &DVector<f64> {
        &self.seqs[i]
    }

    pub fn point_j(&self, i: usize) -> f64 {
        self.js[i]
    }

    pub fn lifted(&self, i: usize) -> DVector<f64> {
        let mut z = DVector::zeros(self.n + 1);
        z.rows_mut(0, self.n).copy_from(&self.xs[i]);
        z[self.n] = self.js[i];
        z
    }

    /// `(slot, vertices)` of every live facet.
    pub fn facets(&self, kind: FacetKind) -> impl Iterator<Item = (usize, &[usize])> {
        self.slots(kind)
            .iter()
            .enumerate()
            .filter_map(|(s, f)| f.as_deref().map(|v| (s, v)))
    }

    pub fn facet(&self, kind: FacetKind, slot: usize) -> Option<&[usize]> {
        self.slots(kind).get(slot).and_then(|f| f.as_deref())
    }

    pub fn slot_count(&self, kind: FacetKind) -> usize {
        self.slots(kind).len()
    }

    pub fn free_slots(&self, kind: FacetKind) -> &[usize] {
        match kind {
            FacetKind::Lower => &self.free_lower,
            FacetKind::Outer => &self.free_outer,
        }
    }

    pub fn link(&self, i: usize) -> &VertexLink {
        &self.links[i]
    }

    pub fn outer_link(&self, i: usize) -> &[usize] {
        &self.outer_links[i]
    }

    pub fn centroid_x(&self) -> &DVector<f64> {
        &self.centroid_x
    }

    pub fn centroid_xj(&self) -> &DVector<f64> {
        &self.centroid_xj
    }

    fn slots(&self, kind: FacetKind) -> &Vec<Option<Vec<usize>>> {
        match kind {
            FacetKind::Lower => &self.lower,
            FacetKind::Outer => &self.outer,
        }
    }

    fn incident(&self, kind: FacetKind, i: usize) -> &[usize] {
        match kind {
            FacetKind::Lower => match &self.links[i] {
                VertexLink::Facets(f) => f,
                VertexLink::Absorbed(_) => &[],
            },
            FacetKind::Outer => &self.outer_links[i],
        }
    }

    /// Live facets containing every vertex of `e`. An empty `e` matches all
    /// live facets; an absorbed vertex matches none.
    pub fn get_facets(&self, e: &[usize], kind: FacetKind) -> Vec<usize> {
        let Some((&first, rest)) = e.split_first() else {
            return self.facets(kind).map(|(s, _)| s).collect();
        };
        self.incident(kind, first)
            .iter()
            .copied()
            .filter(|f| rest.iter().all(|v| self.incident(kind, *v).contains(f)))
            .collect()
    }

    /// Follows absorption redirects to a live lower-hull vertex.
    pub fn resolve(&self, mut i: usize) -> usize {
        if i >= self.len() {
            i = 0;
        }
        let mut guard = 0;
        while let VertexLink::Absorbed(k) = self.links[i] {
            i = k;
            guard += 1;
            if guard > self.len() {
                break;
            }
        }
        i
    }

    fn xs_of(&self, vertices: &[usize]) -> Vec<&DVector<f64>> {
        vertices.iter().map(|&v| &self.xs[v]).collect()
    }

    fn nearest(&self, vertices: &[usize], x: &DVector<f64>) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for &v in vertices {
            let d = (&self.xs[v] - x).norm_squared();
            if d < best.0 || (d == best.0 && v < best.1) {
                best = (d, v);
            }
        }
        best.1
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), HullError> {
        if x.len() == self.n {
            Ok(())
        } else {
            Err(HullError::Dimension {
                expected: self.n,
                got: x.len(),
            })
        }
    }

    fn tol_x(&self, x: &DVector<f64>) -> f64 {
        strict_tol(self.scale_x.max(x.amax()))
    }

    /// Does the direction from vertex `i` towards `x` enter lower facet `f`?
    /// A zero direction counts as entering.
    pub fn points_in_facet(&self, x: &DVector<f64>, f: usize, i: usize) -> bool {
        let Some(vertices) = self.facet(FacetKind::Lower, f) else {
            return false;
        };
        let Some(local) = vertices.iter().position(|&v| v == i) else {
            return false;
        };
        let Some(mut mu) = barycentric(&self.xs_of(vertices), x) else {
            return false;
        };
        mu[local] -= 1.0;
        let size = mu.amax();
        if size <= self.tol_x(x) * 1e-3 {
            return true;
        }
        mu.iter()
            .enumerate()
            .all(|(j, m)| j == local || *m / size >= -1e-12)
    }

    /// Exit of the line `a + t·v` from lower facet `f` after parameter `s`:
    /// returns `(t, ridge)` with `t > s`, ties to the lowest local index.
    pub fn find_intersection(
        &self,
        a: &DVector<f64>,
        v: &DVector<f64>,
        s: f64,
        f: usize,
    ) -> Result<(f64, Vec<usize>), HullError> {
        let vertices = self
            .facet(FacetKind::Lower, f)
            .ok_or_else(|| HullError::WalkAborted(format!("lower facet {f} is not live")))?;
        let pts = self.xs_of(vertices);
        let (Some(la), Some(lv)) = (barycentric(&pts, a), barycentric(&pts, &(a + v))) else {
            return Err(HullError::Degenerate(format!("lower facet {f} is flat")));
        };
        let mut best: Option<(f64, usize)> = None;
        for j in 0..vertices.len() {
            let mu = lv[j] - la[j];
            if !(mu < 0.0) {
                continue;
            }
            let t = -la[j] / mu;
            if !(t > s) {
                continue;
            }
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, j));
            }
        }
        let (t, j) = best.ok_or_else(|| HullError::WalkAborted("line does not leave the facet".into()))?;
        let ridge = vertices
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != j)
            .map(|(_, &v)| v)
            .collect();
        Ok((t, ridge))
    }

    /// Weights expressing `x` as an affine combination of the vertices `e`.
    pub fn find_conv_comb(&self, e: &[usize], x: &DVector<f64>) -> Result<DVector<f64>, HullError> {
        convex_combination(&self.xs_of(e), x)
    }

    /// Locates `x` by a straight-line walk starting at vertex `hint` and
    /// interpolates the stored sequences.
    pub fn generate_sw(&self, x: &DVector<f64>, hint: usize) -> Result<WarmStart, HullError> {
        self.check_dim(x)?;
        let start = self.resolve(hint);
        let incident = self.incident(FacetKind::Lower, start).to_vec();
        if incident.is_empty() {
            return Err(HullError::WalkAborted(format!("vertex {start} has no lower facet")));
        }
        let a = self.xs[start].clone();
        let v = x - &a;
        if v.amax() <= self.tol_x(x) {
            return Ok(self.located(incident[0], x, Some(start)));
        }
        let Some(mut facet) = incident.iter().copied().find(|&f| self.points_in_facet(x, f, start)) else {
            return self.outside_at_vertex(start, x);
        };
        let mut s = 0.0;
        let live = self.lower.len() - self.free_lower.len();
        for _ in 0..=live + 8 {
            let vertices = self.facet(FacetKind::Lower, facet).unwrap_or(&[]);
            if let Some(lam) = barycentric(&self.xs_of(vertices), x) {
                if lam.min() >= -1e-12 {
                    return Ok(self.located(facet, x, None));
                }
            }
            let (t, ridge) = self.find_intersection(&a, &v, s, facet)?;
            if t >= 1.0 - 1e-12 {
                return Ok(self.located(facet, x, None));
            }
            let next = self
                .get_facets(&ridge, FacetKind::Lower)
                .into_iter()
                .find(|&g| g != facet);
            match next {
                Some(g) => {
                    facet = g;
                    s = t;
                }
                None => return self.exit_through(&ridge, &(&a + &v * t), x),
            }
        }
        Err(HullError::WalkAborted("walk did not terminate".into()))
    }

    fn located(&self, f: usize, x: &DVector<f64>, at_vertex: Option<usize>) -> WarmStart {
        let vertices = self.facet(FacetKind::Lower, f).unwrap_or(&[]).to_vec();
        let weights = match at_vertex {
            Some(i) => DVector::from_fn(vertices.len(), |j, _| f64::from(u8::from(vertices[j] == i))),
            None => barycentric(&self.xs_of(&vertices), x)
                .unwrap_or_else(|| DVector::from_element(vertices.len(), 1.0 / vertices.len() as f64)),
        };
        let hint = at_vertex.unwrap_or_else(|| self.nearest(&vertices, x));
        self.combine(vertices, weights, Location::Lower(f), hint)
    }

    fn combine(&self, vertices: Vec<usize>, weights: DVector<f64>, location: Location, hint: usize) -> WarmStart {
        let mut seq = DVector::zeros(self.seqs[vertices[0]].len());
        let mut j_approx = 0.0;
        for (w, &v) in weights.iter().zip(&vertices) {
            seq.axpy(*w, &self.seqs[v], 1.0);
            j_approx += w * self.js[v];
        }
        if matches!(location, Location::Outside(_)) {
            j_approx = f64::INFINITY;
        }
        WarmStart {
            seq,
            location,
            hint,
            vertices,
            weights,
            j_approx,
        }
    }

    fn exit_through(&self, ridge: &[usize], exit: &DVector<f64>, x: &DVector<f64>) -> Result<WarmStart, HullError> {
        let g = self
            .get_facets(ridge, FacetKind::Outer)
            .into_iter()
            .next()
            .ok_or_else(|| HullError::WalkAborted("boundary ridge is not an outer facet".into()))?;
        let weights = self.find_conv_comb(ridge, exit)?;
        let hint = self.nearest(ridge, x);
        Ok(self.combine(ridge.to_vec(), weights, Location::Outside(g), hint))
    }

    fn outside_at_vertex(&self, start: usize, x: &DVector<f64>) -> Result<WarmStart, HullError> {
        let mut best: Option<(f64, usize)> = None;
        for &g in self.incident(FacetKind::Outer, start) {
            let d = self.outer_distance(g, x)?;
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, g));
            }
        }
        match best {
            Some((d, g)) if d > self.tol_x(x) => {
                let vertices = self.facet(FacetKind::Outer, g).unwrap_or(&[]);
                let nearest = self.nearest(vertices, x);
                Ok(self.combine(vec![nearest], DVector::from_element(1, 1.0), Location::Outside(g), nearest))
            }
            _ => Err(HullError::WalkAborted(format!(
                "query leaves every lower facet at vertex {start} but no boundary facet excludes it"
            ))),
        }
    }

    /// Signed distance of `x` beyond outer facet `g` (positive outside).
    fn outer_distance(&self, g: usize, x: &DVector<f64>) -> Result<f64, HullError> {
        let vertices = self
            .facet(FacetKind::Outer, g)
            .ok_or_else(|| HullError::StaleLocation(format!("outer facet {g} is not live")))?;
        let pts = self.xs_of(vertices);
        if self.n == 1 {
            let side = (pts[0][0] - self.centroid_x[0]).signum();
            return Ok(side * (x[0] - pts[0][0]));
        }
        let d = normal(&pts, &self.centroid_x)?;
        Ok(d.dot(&(x - pts[self.n - 1])))
    }

    /// Value at `x` of the affine interpolant over lower facet `f`.
    fn lower_plane_at(&self, f: usize, x: &DVector<f64>) -> Option<f64> {
        let vertices = self.facet(FacetKind::Lower, f)?;
        let lam = barycentric(&self.xs_of(vertices), x)?;
        Some(vertices.iter().zip(lam.iter()).map(|(&v, l)| l * self.js[v]).sum())
    }

    /// Locates `point.x` from `hint` and inserts the point.
    pub fn insert(&mut self, point: DataPoint, hint: usize) -> Result<InsertReport, HullError> {
        let loc = self.generate_sw(&point.x, hint)?;
        self.update(point, loc.location)
    }

    /// Adds `point` given its location in the current hull.
    pub fn update(&mut self, point: DataPoint, location: Location) -> Result<InsertReport, HullError> {
        self.check_dim(&point.x)?;
        if !point.j.is_finite() || point.x.iter().chain(point.seq.iter()).any(|v| !v.is_finite()) {
            return Err(HullError::Degenerate("non-finite data point".into()));
        }
        let k = self.len();
        let x = &point.x;
        let seed = match location {
            Location::Lower(f) => {
                let vertices = self
                    .facet(FacetKind::Lower, f)
                    .ok_or_else(|| HullError::StaleLocation(format!("lower facet {f} is not live")))?;
                let lam = barycentric(&self.xs_of(vertices), x)
                    .ok_or_else(|| HullError::Degenerate(format!("lower facet {f} is flat")))?;
                if lam.min() < -1e-9 {
                    return Err(HullError::StaleLocation(format!("query is not inside lower facet {f}")));
                }
                let plane = self.lower_plane_at(f, x).unwrap_or(f64::NAN);
                if point.j > plane + self.tol_j(point.j, vertices) {
                    let nearest = self.nearest(vertices, x);
                    self.push_point(&point);
                    self.links[k] = VertexLink::Absorbed(nearest);
                    return Ok(InsertReport {
                        index: k,
                        above_hull: true,
                        ..Default::default()
                    });
                }
                Face::Lower(f)
            }
            Location::Outside(g) => {
                if !(self.outer_distance(g, x)? > self.tol_x(x)) {
                    return Err(HullError::StaleLocation(format!("query is not beyond outer facet {g}")));
                }
                Face::Vertical(g)
            }
        };
        let plan = self.plan(x, point.j, seed)?;
        self.validate(&plan, x)?;
        Ok(self.commit(&point, plan))
    }

    fn tol_j(&self, j: f64, vertices: &[usize]) -> f64 {
        let scale = vertices.iter().map(|&v| self.js[v].abs()).fold(j.abs(), f64::max);
        strict_tol(scale)
    }

    fn visible(&self, face: Face, x: &DVector<f64>, j: f64) -> Result<bool, HullError> {
        match face {
            Face::Lower(f) => {
                let vertices = self.facet(FacetKind::Lower, f).unwrap_or(&[]);
                let plane = self
                    .lower_plane_at(f, x)
                    .ok_or_else(|| HullError::Degenerate(format!("lower facet {f} is flat")))?;
                Ok(j < plane - self.tol_j(j, vertices))
            }
            Face::Vertical(g) => Ok(self.outer_distance(g, x)? > self.tol_x(x)),
        }
    }

    /// Neighbors across each ridge of `face`; `None` marks a ridge without one.
    fn ridges(&self, face: Face) -> Vec<(Vec<usize>, Vec<Face>)> {
        let mut out = Vec::new();
        match face {
            Face::Lower(f) => {
                let vertices = self.facet(FacetKind::Lower, f).unwrap_or(&[]);
                for d in 0..vertices.len() {
                    let ridge: Vec<usize> = without(vertices, d);
                    let lower: Vec<Face> = self
                        .get_facets(&ridge, FacetKind::Lower)
                        .into_iter()
                        .filter(|&g| g != f)
                        .map(Face::Lower)
                        .collect();
                    let neighbors = if lower.is_empty() {
                        self.get_facets(&ridge, FacetKind::Outer)
                            .into_iter()
                            .map(Face::Vertical)
                            .collect()
                    } else {
                        lower
                    };
                    out.push((ridge, neighbors));
                }
            }
            Face::Vertical(g) => {
                let vertices = self.facet(FacetKind::Outer, g).unwrap_or(&[]).to_vec();
                let bottom = self
                    .get_facets(&vertices, FacetKind::Lower)
                    .into_iter()
                    .map(Face::Lower)
                    .collect();
                out.push((vertices.clone(), bottom));
                for d in 0..vertices.len() {
                    let ridge = without(&vertices, d);
                    let side = self
                        .get_facets(&ridge, FacetKind::Outer)
                        .into_iter()
                        .filter(|&h| h != g)
                        .map(Face::Vertical)
                        .collect();
                    out.push((ridge, side));
                }
            }
        }
        out
    }

    fn plan(&self, x: &DVector<f64>, j: f64, seed: Face) -> Result<Plan, HullError> {
        let mut seen: BTreeMap<Face, bool> = BTreeMap::new();
        seen.insert(seed, true);
        let mut queue = VecDeque::from([seed]);
        let mut plan = Plan::default();
        let k = self.len();
        while let Some(face) = queue.pop_front() {
            match face {
                Face::Lower(f) => plan.remove_lower.push(f),
                Face::Vertical(g) => plan.remove_outer.push(g),
            }
            for (ridge, neighbors) in self.ridges(face) {
                let mut horizon = neighbors.is_empty();
                for nb in neighbors {
                    let vis = match seen.get(&nb) {
                        Some(&v) => v,
                        None => {
                            let v = self.visible(nb, x, j)?;
                            seen.insert(nb, v);
                            if v {
                                queue.push_back(nb);
                            }
                            v
                        }
                    };
                    horizon |= !vis;
                }
                if horizon {
                    let mut facet = ridge.clone();
                    facet.push(k);
                    if ridge.len() == self.n {
                        plan.add_lower.insert(facet);
                    } else {
                        plan.add_outer.insert(facet);
                    }
                }
            }
        }
        Ok(plan)
    }

    fn validate(&self, plan: &Plan, x: &DVector<f64>) -> Result<(), HullError> {
        for facet in plan.add_lower.iter().chain(&plan.add_outer) {
            let mut pts: Vec<&DVector<f64>> = facet[..facet.len() - 1].iter().map(|&v| &self.xs[v]).collect();
            pts.push(x);
            if simplex_quality(&pts) < MIN_QUALITY {
                return Err(HullError::Degenerate(format!(
                    "new facet over {:?} would be flat",
                    &facet[..facet.len() - 1]
                )));
            }
        }
        if plan.add_lower.is_empty() {
            return Err(HullError::Degenerate("update would leave the point off the hull".into()));
        }
        Ok(())
    }

    fn commit(&mut self, point: &DataPoint, plan: Plan) -> InsertReport {
        let k = self.len();
        self.push_point(point);
        let mut touched = BTreeSet::new();
        for &f in &plan.remove_lower {
            if let Some(vertices) = self.remove_facet(FacetKind::Lower, f) {
                touched.extend(vertices);
            }
        }
        for &g in &plan.remove_outer {
            self.remove_facet(FacetKind::Outer, g);
        }
        for facet in &plan.add_lower {
            self.add_facet(FacetKind::Lower, facet.clone());
        }
        for facet in &plan.add_outer {
            self.add_facet(FacetKind::Outer, facet.clone());
        }
        let mut absorbed = Vec::new();
        for v in touched {
            if matches!(&self.links[v], VertexLink::Facets(f) if f.is_empty()) {
                self.links[v] = VertexLink::Absorbed(k);
                absorbed.push(v);
            }
        }
        InsertReport {
            index: k,
            above_hull: false,
            removed_lower: plan.remove_lower.len(),
            removed_outer: plan.remove_outer.len(),
            added_lower: plan.add_lower.len(),
            added_outer: plan.add_outer.len(),
            absorbed,
        }
    }

    fn push_point(&mut self, p: &DataPoint) {
        let count = self.xs.len() as f64;
        self.centroid_x = (&self.centroid_x * count + &p.x) / (count + 1.0);
        let mut lifted = DVector::zeros(self.n + 1);
        lifted.rows_mut(0, self.n).copy_from(&p.x);
        lifted[self.n] = p.j;
        self.centroid_xj = (&self.centroid_xj * count + lifted) / (count + 1.0);
        self.scale_x = self.scale_x.max(p.x.amax());
        self.xs.push(p.x.clone());
        self.seqs.push(p.seq.clone());
        self.js.push(p.j);
        self.links.push(VertexLink::Facets(Vec::new()));
        self.outer_links.push(Vec::new());
    }

    fn add_facet(&mut self, kind: FacetKind, vertices: Vec<usize>) -> usize {
        let (slots, free) = match kind {
            FacetKind::Lower => (&mut self.lower, &mut self.free_lower),
            FacetKind::Outer => (&mut self.outer, &mut self.free_outer),
        };
        let slot = match free.pop() {
            Some(s) => {
                slots[s] = Some(vertices.clone());
                s
            }
            None => {
                slots.push(Some(vertices.clone()));
                slots.len() - 1
            }
        };
        for v in vertices {
            match kind {
                FacetKind::Lower => {
                    if let VertexLink::Facets(f) = &mut self.links[v] {
                        f.push(slot);
                    } else {
                        self.links[v] = VertexLink::Facets(vec![slot]);
                    }
                }
                FacetKind::Outer => self.outer_links[v].push(slot),
            }
        }
        slot
    }

    fn remove_facet(&mut self, kind: FacetKind, slot: usize) -> Option<Vec<usize>> {
        let (slots, free) = match kind {
            FacetKind::Lower => (&mut self.lower, &mut self.free_lower),
            FacetKind::Outer => (&mut self.outer, &mut self.free_outer),
        };
        let vertices = slots.get_mut(slot)?.take()?;
        free.push(slot);
        for &v in &vertices {
            match kind {
                FacetKind::Lower => {
                    if let VertexLink::Facets(f) = &mut self.links[v] {
                        f.retain(|&s| s != slot);
                    }
                }
                FacetKind::Outer => self.outer_links[v].retain(|&s| s != slot),
            }
        }
        Some(vertices)
    }

    /// Interpolated cost at `x`, `+∞` outside `conv D_x`.
    pub fn approximation(&self, x: &DVector<f64>, hint: usize) -> Result<f64, HullError> {
        Ok(self.generate_sw(x, hint)?.j_approx)
    }
}

fn without(vertices: &[usize], d: usize) -> Vec<usize> {
    vertices
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != d)
        .map(|(_, &v)| v)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn pt(seq: f64, x: &[f64], j: f64) -> DataPoint {
        DataPoint::new(v(&[seq]), v(x), j)
    }

    fn live(h: &ConvexHull, kind: FacetKind) -> Vec<Vec<usize>> {
        let mut f: Vec<Vec<usize>> = h
            .facets(kind)
            .map(|(_, v)| {
                let mut v = v.to_vec();
                v.sort();
                v
            })
            .collect();
        f.sort();
        f
    }

    #[test]
    fn init_examples() {
        let h = ConvexHull::init(&[pt(0.0, &[0.0], 1.0), pt(1.0, &[2.0], 1.0)]).unwrap();
        assert_eq!(live(&h, FacetKind::Lower), vec![vec![0, 1]]);
        assert_eq!(live(&h, FacetKind::Outer), vec![vec![0], vec![1]]);

        let h = ConvexHull::init(&[
            pt(0.0, &[0.0, 0.0], 0.0),
            pt(0.0, &[1.0, 0.0], 0.0),
            pt(0.0, &[0.0, 1.0], 0.0),
        ])
        .unwrap();
        assert_eq!(live(&h, FacetKind::Lower).len(), 1);
        assert_eq!(live(&h, FacetKind::Outer), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);

        assert!(ConvexHull::init(&[pt(0.0, &[0.0], 1.0), pt(1.0, &[0.0], 1.0)]).is_err());
    }

    fn one_d() -> ConvexHull {
        let mut h = ConvexHull::init(&[pt(10.0, &[0.0], 1.0), pt(20.0, &[2.0], 0.0)]).unwrap();
        h.insert(pt(30.0, &[4.0], 1.0), 0).unwrap();
        h
    }

    #[test]
    fn warm_start_one_dimensional() {
        let h = one_d();
        let w = h.generate_sw(&v(&[1.0]), 0).unwrap();
        assert!((w.seq[0] - 15.0).abs() < 1e-12);
        assert!((w.j_approx - 0.5).abs() < 1e-12);
        let f = h.facet(FacetKind::Lower, match w.location {
            Location::Lower(f) => f,
            _ => panic!("expected an interior location"),
        });
        assert_eq!(f.map(|f| { let mut f = f.to_vec(); f.sort(); f }), Some(vec![0, 1]));

        let w = h.generate_sw(&v(&[2.0]), 0).unwrap();
        assert!((w.seq[0] - 20.0).abs() < 1e-12);
        assert!((w.weights.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);

        let w = h.generate_sw(&v(&[5.0]), 0).unwrap();
        let Location::Outside(g) = w.location else { panic!("expected outside") };
        assert_eq!(h.facet(FacetKind::Outer, g), Some(&[2][..]));
        assert!((w.seq[0] - 30.0).abs() < 1e-12);
        assert!(w.location.signed() < 0);
        assert_eq!(w.j_approx, f64::INFINITY);
    }

    #[test]
    fn update_one_dimensional() {
        let mut h = ConvexHull::init(&[pt(0.0, &[0.0], 1.0), pt(0.0, &[2.0], 1.0)]).unwrap();
        h.insert(pt(0.0, &[1.0], 0.0), 0).unwrap();
        assert_eq!(live(&h, FacetKind::Lower), vec![vec![0, 2], vec![1, 2]]);
        assert_eq!(live(&h, FacetKind::Outer), vec![vec![0], vec![1]]);

        let mut h = ConvexHull::init(&[pt(0.0, &[0.0], 1.0), pt(0.0, &[2.0], 1.0)]).unwrap();
        let loc = h.generate_sw(&v(&[3.0]), 1).unwrap().location;
        assert!(matches!(loc, Location::Outside(_)));
        h.update(pt(0.0, &[3.0], 1.0), loc).unwrap();
        assert_eq!(live(&h, FacetKind::Outer), vec![vec![0], vec![2]]);
        assert!(live(&h, FacetKind::Lower).contains(&vec![1, 2]));
        assert!(matches!(h.link(1), VertexLink::Facets(f) if f.len() == 2));
    }

    #[test]
    fn point_on_facet_splits_it() {
        let mut h = ConvexHull::init(&[pt(0.0, &[0.0], 0.0), pt(0.0, &[2.0], 2.0)]).unwrap();
        let r = h.insert(pt(0.0, &[1.0], 1.0), 0).unwrap();
        assert!(!r.above_hull);
        assert_eq!(live(&h, FacetKind::Lower), vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn point_above_hull_is_absorbed() {
        let mut h = ConvexHull::init(&[pt(0.0, &[0.0], 0.0), pt(0.0, &[2.0], 0.0)]).unwrap();
        let r = h.insert(pt(0.0, &[0.5], 3.0), 1).unwrap();
        assert!(r.above_hull);
        assert_eq!(h.link(2), &VertexLink::Absorbed(0));
        assert_eq!(h.resolve(2), 0);
        assert_eq!(live(&h, FacetKind::Lower), vec![vec![0, 1]]);
    }

    #[test]
    fn find_intersection_example() {
        let h = ConvexHull::init(&[
            pt(0.0, &[0.0, 0.0], 0.0),
            pt(0.0, &[2.0, 0.0], 0.0),
            pt(0.0, &[0.0, 2.0], 0.0),
        ])
        .unwrap();
        let (t, ridge) = h.find_intersection(&v(&[0.0, 1.0]), &v(&[2.0, 0.0]), 0.0, 0).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(ridge, vec![1, 2]);
    }

    #[test]
    fn points_in_facet_examples() {
        let h = ConvexHull::init(&[
            pt(0.0, &[0.0, 0.0], 0.0),
            pt(0.0, &[1.0, 0.0], 0.0),
            pt(0.0, &[0.0, 1.0], 0.0),
        ])
        .unwrap();
        assert!(h.points_in_facet(&v(&[0.2, 0.2]), 0, 0));
        assert!(!h.points_in_facet(&v(&[-1.0, -1.0]), 0, 0));
        assert!(h.points_in_facet(&v(&[0.0, 0.0]), 0, 0));
    }

    #[test]
    fn get_facets_and_redirects() {
        let h = one_d();
        let at_middle = h.get_facets(&[1], FacetKind::Lower);
        assert_eq!(at_middle.len(), 2);
        assert_eq!(h.get_facets(&[0, 1], FacetKind::Lower).len(), 1);
        assert!(h.get_facets(&[0, 2], FacetKind::Lower).is_empty());
        assert_eq!(h.get_facets(&[], FacetKind::Outer).len(), 2);
    }
}
