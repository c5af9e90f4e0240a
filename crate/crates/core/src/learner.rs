//! Memory of past optimization results: the two learners, the significance
//! filter and the simulated-latency update queue.
//!
//! The control loop reads the published learner state; at most one update
//! is in flight, and while it runs only the newest offered point is kept.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::LipschitzRule;
use crate::error::{Error, Result};
use crate::hull::geometry::simplex_quality;
use crate::hull::{ConvexHull, DataPoint, HullError};
use crate::lipnet::LipschitzDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    #[default]
    Hull,
    Lipschitz,
    Off,
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hull" | "convex-hull" => Ok(Self::Hull),
            "lipschitz" => Ok(Self::Lipschitz),
            "off" | "none" => Ok(Self::Off),
            other => Err(Error::Config(format!("unknown learner `{other}`"))),
        }
    }
}

/// Learner answer at a query state.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub seq: DVector<f64>,
    /// `J^a(x)`; `+∞` where the learner has no bound.
    pub j_approx: f64,
}

/// Convex-hull learner that buffers points until `n+1` affinely independent
/// states are available.
#[derive(Debug, Clone)]
pub struct HullLearner {
    n: usize,
    hull: Option<ConvexHull>,
    buffer: Vec<DataPoint>,
    hint: usize,
}

impl HullLearner {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hull: None,
            buffer: Vec::new(),
            hint: 0,
        }
    }

    pub fn hull(&self) -> Option<&ConvexHull> {
        self.hull.as_ref()
    }

    pub fn len(&self) -> usize {
        self.hull.as_ref().map_or(self.buffer.len(), ConvexHull::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn query(&mut self, x: &DVector<f64>) -> Option<Answer> {
        let hull = self.hull.as_ref()?;
        let w = hull.generate_sw(x, self.hint).ok()?;
        self.hint = w.hint;
        Some(Answer {
            seq: w.seq,
            j_approx: w.j_approx,
        })
    }

    pub fn insert(&mut self, p: DataPoint) -> std::result::Result<(), HullError> {
        if let Some(hull) = &mut self.hull {
            let r = hull.insert(p, self.hint)?;
            if !r.above_hull {
                self.hint = r.index;
            }
            return Ok(());
        }
        if p.x.len() != self.n {
            return Err(HullError::Dimension {
                expected: self.n,
                got: p.x.len(),
            });
        }
        self.buffer.push(p);
        let mut chosen: Vec<usize> = Vec::new();
        for i in 0..self.buffer.len() {
            let mut pts: Vec<&DVector<f64>> = chosen.iter().map(|&c| &self.buffer[c].x).collect();
            pts.push(&self.buffer[i].x);
            if simplex_quality(&pts) > 1e-6 {
                chosen.push(i);
                if chosen.len() == self.n + 1 {
                    break;
                }
            }
        }
        if chosen.len() < self.n + 1 {
            return Ok(());
        }
        let first: Vec<DataPoint> = chosen.iter().map(|&i| self.buffer[i].clone()).collect();
        let mut hull = ConvexHull::init(&first)?;
        let rest: Vec<DataPoint> = std::mem::take(&mut self.buffer)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(_, p)| p)
            .collect();
        for p in rest {
            // a buffered point that cannot be placed is simply dropped
            let _ = hull.insert(p, 0);
        }
        self.hull = Some(hull);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LipschitzLearner {
    pub data: LipschitzDataset,
    pub rule: LipschitzRule,
    pub horizon: usize,
}

/// One learner of either kind.
#[derive(Debug, Clone)]
pub enum Learner {
    Hull(HullLearner),
    Lipschitz(LipschitzLearner),
}

impl Learner {
    pub fn query(&mut self, x: &DVector<f64>) -> Option<Answer> {
        match self {
            Learner::Hull(h) => h.query(x),
            Learner::Lipschitz(l) => l.data.warm_start(x).map(|hit| Answer {
                seq: hit.seq,
                j_approx: hit.j_approx,
            }),
        }
    }

    /// `J^a(x)` for the significance filter; `+∞` marks a state the learner
    /// cannot bound yet (empty set, outside the hull, still buffering).
    pub fn approximation(&mut self, x: &DVector<f64>) -> f64 {
        match self {
            Learner::Hull(h) if h.hull.is_none() => f64::INFINITY,
            _ => self.query(x).map_or(f64::INFINITY, |a| a.j_approx),
        }
    }

    pub fn insert(&mut self, p: DataPoint) -> Result<()> {
        match self {
            Learner::Hull(h) => h.insert(p).map_err(Error::from),
            Learner::Lipschitz(l) => {
                let lc = l.rule.constant(&p.seq, l.horizon);
                l.data.insert(p.seq, p.x, p.j, lc)
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Learner::Hull(h) => h.len(),
            Learner::Lipschitz(l) => l.data.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_hull(&self) -> Option<&ConvexHull> {
        match self {
            Learner::Hull(h) => h.hull(),
            Learner::Lipschitz(_) => None,
        }
    }
}

/// Update latency in control periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LatencySchedule {
    Fixed { steps: usize },
    /// Uniform draw from `min..=max` per update, from a seeded stream.
    Seeded { min: usize, max: usize, seed: u64 },
}

impl Default for LatencySchedule {
    fn default() -> Self {
        Self::Fixed { steps: 0 }
    }
}

impl LatencySchedule {
    pub fn is_inline(&self) -> bool {
        matches!(self, Self::Fixed { steps: 0 } | Self::Seeded { max: 0, .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LearnStats {
    pub offered: usize,
    pub added: usize,
    pub skipped_small: usize,
    pub skipped_busy: usize,
    /// Passed the filter but the learner could not place the point.
    pub rejected: usize,
}

/// Everything needed to build a fresh learner for a new reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub state_dim: usize,
    pub horizon: usize,
    pub lipschitz: LipschitzRule,
}

impl LearnerSpec {
    fn build(&self) -> Option<Learner> {
        match self.kind {
            LearnerKind::Hull => Some(Learner::Hull(HullLearner::new(self.state_dim))),
            LearnerKind::Lipschitz => Some(Learner::Lipschitz(LipschitzLearner {
                data: LipschitzDataset::new(),
                rule: self.lipschitz,
                horizon: self.horizon,
            })),
            LearnerKind::Off => None,
        }
    }
}

/// Learners keyed by reference level, with the filter and the update queue.
#[derive(Debug, Clone)]
pub struct Memory {
    spec: LearnerSpec,
    threshold: f64,
    latency: LatencySchedule,
    rng: ChaCha8Rng,
    bank: BTreeMap<u64, Learner>,
    in_flight: Option<(u64, DataPoint, usize)>,
    pending: Option<(u64, DataPoint)>,
    stats: LearnStats,
}

/// What happened to an offered point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferOutcome {
    Added,
    Started,
    Queued,
    SkippedSmall,
    Rejected,
}

pub fn reference_key(r: f64) -> u64 {
    // +0 and -0 share a learner
    (r + 0.0).to_bits()
}

impl Memory {
    pub fn new(spec: LearnerSpec, threshold: f64, latency: LatencySchedule) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::Config("significance threshold must be ≥ 0".into()));
        }
        if let LatencySchedule::Seeded { min, max, .. } = latency {
            if min > max {
                return Err(Error::Config("latency range is empty".into()));
            }
        }
        let seed = match latency {
            LatencySchedule::Seeded { seed, .. } => seed,
            LatencySchedule::Fixed { .. } => 0,
        };
        Ok(Self {
            spec,
            threshold,
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bank: BTreeMap::new(),
            in_flight: None,
            pending: None,
            stats: LearnStats::default(),
        })
    }

    pub fn stats(&self) -> LearnStats {
        self.stats
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn learner(&self, r: f64) -> Option<&Learner> {
        self.bank.get(&reference_key(r))
    }

    pub fn learners(&self) -> impl Iterator<Item = (f64, &Learner)> {
        self.bank.iter().map(|(k, l)| (f64::from_bits(*k), l))
    }

    /// Total stored points over all reference levels.
    pub fn data_size(&self) -> usize {
        self.bank.values().map(Learner::len).sum()
    }

    fn slot(&mut self, key: u64) -> Option<&mut Learner> {
        if !self.bank.contains_key(&key) {
            let learner = self.spec.build()?;
            self.bank.insert(key, learner);
        }
        self.bank.get_mut(&key)
    }

    /// Inserts points unconditionally (initial data set).
    pub fn seed(&mut self, r: f64, points: Vec<DataPoint>) -> Result<()> {
        let Some(learner) = self.slot(reference_key(r)) else {
            return Ok(());
        };
        for p in points {
            learner.insert(p)?;
        }
        Ok(())
    }

    pub fn query(&mut self, r: f64, x: &DVector<f64>) -> Option<Answer> {
        self.slot(reference_key(r))?.query(x)
    }

    pub fn approximation(&mut self, r: f64, x: &DVector<f64>) -> f64 {
        self.slot(reference_key(r)).map_or(f64::INFINITY, |l| l.approximation(x))
    }

    fn significant(&mut self, key: u64, p: &DataPoint) -> bool {
        let threshold = self.threshold;
        match self.slot(key) {
            Some(l) => {
                let ja = l.approximation(&p.x);
                ja == f64::INFINITY || ja - p.j > threshold
            }
            None => false,
        }
    }

    fn apply(&mut self, key: u64, p: DataPoint) -> OfferOutcome {
        match self.slot(key).map(|l| l.insert(p)) {
            Some(Ok(())) => {
                self.stats.added += 1;
                OfferOutcome::Added
            }
            _ => {
                self.stats.rejected += 1;
                OfferOutcome::Rejected
            }
        }
    }

    fn draw_latency(&mut self) -> usize {
        match self.latency {
            LatencySchedule::Fixed { steps } => steps,
            LatencySchedule::Seeded { min, max, .. } => self.rng.gen_range(min..=max),
        }
    }

    fn start(&mut self, key: u64, p: DataPoint, now: usize) -> OfferOutcome {
        let delay = self.draw_latency();
        if delay == 0 {
            return self.apply(key, p);
        }
        self.in_flight = Some((key, p, now + delay));
        OfferOutcome::Started
    }

    /// Completes the in-flight update if it is due at step `now`, then starts
    /// the pending point if it still passes the filter.
    pub fn tick(&mut self, now: usize) {
        let due = matches!(self.in_flight, Some((_, _, at)) if at <= now);
        if !due {
            return;
        }
        if let Some((key, p, _)) = self.in_flight.take() {
            self.apply(key, p);
        }
        if let Some((key, p)) = self.pending.take() {
            if self.significant(key, &p) {
                self.start(key, p, now);
            } else {
                self.stats.skipped_small += 1;
            }
        }
    }

    /// Offers the result `p` computed for reference `r` at step `now`.
    pub fn offer(&mut self, r: f64, p: DataPoint, now: usize) -> OfferOutcome {
        if self.spec.kind == LearnerKind::Off {
            return OfferOutcome::SkippedSmall;
        }
        self.stats.offered += 1;
        let key = reference_key(r);
        if !self.significant(key, &p) {
            self.stats.skipped_small += 1;
            return OfferOutcome::SkippedSmall;
        }
        if self.in_flight.is_some() {
            if self.pending.replace((key, p)).is_some() {
                self.stats.skipped_busy += 1;
            }
            return OfferOutcome::Queued;
        }
        self.start(key, p, now)
    }
}
