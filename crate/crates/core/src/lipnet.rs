//! Lipschitz-cone value bound `J^a(x̄) = min_{(U,x,J)∈D} J + L(U)‖x - x̄‖`
//! and the matching spatial warm start.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzRecord {
    pub seq: DVector<f64>,
    pub x: DVector<f64>,
    pub j: f64,
    pub l: f64,
}

/// Best cone at a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeHit {
    pub index: usize,
    pub seq: DVector<f64>,
    pub x: DVector<f64>,
    pub j: f64,
    /// `J + L‖x - x̄‖`.
    pub j_approx: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LipschitzDataset {
    records: Vec<LipschitzRecord>,
    l_max: f64,
}

impl LipschitzDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LipschitzRecord] {
        &self.records
    }

    /// `L_D`, the largest stored constant.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn insert(&mut self, seq: DVector<f64>, x: DVector<f64>, j: f64, l: f64) -> Result<()> {
        if !(l > 0.0) || !l.is_finite() || !(j >= 0.0) || !j.is_finite() {
            return Err(Error::NonFinite(format!("rejected record with J = {j}, L = {l}")));
        }
        if x.iter().chain(seq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rejected record with non-finite entries".into()));
        }
        if let Some(first) = self.records.first() {
            if first.x.len() != x.len() || first.seq.len() != seq.len() {
                return Err(Error::Dimension {
                    what: "Lipschitz record",
                    expected: first.x.len(),
                    got: x.len(),
                });
            }
        }
        self.l_max = self.l_max.max(l);
        self.records.push(LipschitzRecord { seq, x, j, l });
        Ok(())
    }

    /// Exhaustive scan; ties go to the earliest record.
    pub fn warm_start(&self, x: &DVector<f64>) -> Option<ConeHit> {
        let mut best: Option<(f64, usize)> = None;
        for (i, r) in self.records.iter().enumerate() {
            if r.x.len() != x.len() {
                return None;
            }
            let value = r.j + r.l * (&r.x - x).norm();
            if best.map_or(true, |(b, _)| value < b) {
                best = Some((value, i));
            }
        }
        let (j_approx, index) = best?;
        let r = &self.records[index];
        Some(ConeHit {
            index,
            seq: r.seq.clone(),
            x: r.x.clone(),
            j: r.j,
            j_approx,
        })
    }

    /// `J^a(x)`, `+∞` for an empty set.
    pub fn approximation(&self, x: &DVector<f64>) -> f64 {
        self.warm_start(x).map_or(f64::INFINITY, |h| h.j_approx)
    }

    /// One record per line: `record <i> L <l> j <J> x <x…> u <U…>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.records.iter().enumerate() {
            let join = |v: &DVector<f64>| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "record {i} L {} j {} x {} u {}", r.l, r.j, join(&r.x), join(&r.seq));
        }
        out
    }
}
