//! Scenario runner behind the `rtmpc` binary: single runs, iteration sweeps
//! and hull dump audits.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{run_closed_loop, run_with, suboptimality, Controller, RunRecord, Suboptimality};
use crate::error::{Error, Result};
use crate::hull::{audit, parse_dump, write_dump, AuditOptions, AuditReport};
use crate::learner::{LatencySchedule, Learner, LearnerKind};
use crate::model::DisturbanceSignal;
use crate::record::{write_run, SegmentSummary};
use crate::scenario::{BudgetConfig, ScenarioConfig};

/// A built-in scenario name, or a path to a TOML file.
pub fn load_scenario(name: &str) -> Result<ScenarioConfig> {
    if Path::new(name).is_file() || name.ends_with(".toml") {
        return ScenarioConfig::load(Path::new(name));
    }
    ScenarioConfig::builtin(name)
}

/// `N` for a fixed latency, `A..B` for a seeded uniform draw in `A..=B`.
pub fn parse_latency(text: &str, seed: u64) -> Result<LatencySchedule> {
    let bad = || Error::Config(format!("bad latency `{text}` (expected N or MIN..MAX)"));
    match text.split_once("..") {
        None => Ok(LatencySchedule::Fixed {
            steps: text.trim().parse().map_err(|_| bad())?,
        }),
        Some((a, b)) => {
            let min: usize = a.trim().parse().map_err(|_| bad())?;
            let max: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if min > max {
                return Err(bad());
            }
            Ok(LatencySchedule::Seeded { min, max, seed })
        }
    }
}

/// `1..10`, `1,2,5` or a single count.
pub fn parse_iterations(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad iteration range `{text}`"));
    let out: Vec<usize> = match text.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            (a..=b).collect()
        }
        None => text
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?,
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// Command-line overrides of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: u64,
    pub no_learning: bool,
    pub learner: Option<LearnerKind>,
    pub latency: Option<String>,
    pub threshold: Option<f64>,
    /// Reset runs, with `steps_per_run` steps each.
    pub runs: Option<usize>,
    pub steps_per_run: Option<usize>,
    /// Reference periods.
    pub periods: Option<usize>,
}

pub fn apply_overrides(mut c: ScenarioConfig, o: &Overrides) -> Result<ScenarioConfig> {
    if let Some(it) = o.iterations {
        c.budget = BudgetConfig::Iterations { count: it };
    }
    if let Some(kind) = o.learner {
        c.learning.learner = kind;
    }
    if o.no_learning {
        c.learning.learner = LearnerKind::Off;
    }
    if let Some(t) = o.threshold {
        c.learning.threshold = t;
    }
    if let Some(l) = &o.latency {
        c.learning.latency = parse_latency(l, o.seed)?;
    }
    if let Some(len) = o.steps_per_run {
        let x0 = match &c.disturbance {
            DisturbanceSignal::ResetSchedule { x0, .. } => x0.clone(),
            _ => c.x0.clone(),
        };
        c.disturbance = DisturbanceSignal::ResetSchedule { period: len, x0 };
    }
    if let Some(runs) = o.runs {
        let len = match &c.disturbance {
            DisturbanceSignal::ResetSchedule { period, .. } => *period,
            _ => return Err(Error::Config("--runs needs a reset schedule (--steps-per-run)".into())),
        };
        c.steps = runs * len;
    }
    if let Some(p) = o.periods {
        let period = c
            .reference
            .period()
            .ok_or_else(|| Error::Config("--periods needs a periodic reference".into()))?;
        c.steps = p * period;
    }
    if let Some(s) = o.steps {
        c.steps = s;
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub segments: Vec<SegmentSummary>,
    pub suboptimality: Option<Vec<Suboptimality>>,
}

impl RunOutput {
    /// No runtime contract was broken.
    pub fn is_clean(&self) -> bool {
        self.record.counts.is_clean()
    }
}

/// Runs the scenario and, with `out`, writes the CSVs, the config echo and
/// one dump per learner.
pub fn run_scenario(c: &ScenarioConfig, oracle: bool, out: Option<&Path>) -> Result<RunOutput> {
    let scenario = c.build()?;
    let mut ctl = Controller::new(scenario.clone())?;
    let record = run_with(&mut ctl, scenario.steps)?;
    let subs = if oracle {
        Some(suboptimality(&scenario, &record.rows)?)
    } else {
        None
    };
    let segments = match out {
        Some(dir) => {
            let segments = write_run(dir, &record, subs.as_deref())?;
            fs::write(dir.join("config.toml"), c.to_toml()?)?;
            for (i, (r, learner)) in ctl.memory().learners().enumerate() {
                let (name, text) = match learner {
                    Learner::Hull(h) => match h.hull() {
                        Some(hull) => (format!("hull-{i}.txt"), write_dump(hull)),
                        None => continue,
                    },
                    Learner::Lipschitz(l) => (format!("lipschitz-{i}.txt"), l.data.dump()),
                };
                fs::write(dir.join(name), format!("# reference {r}\n{text}"))?;
            }
            segments
        }
        None => {
            let rows: Vec<_> = record.rows.iter().map(crate::record::TraceRow::from).collect();
            crate::record::summarize(&rows, crate::record::segment_len(&record))
        }
    };
    Ok(RunOutput {
        record,
        segments,
        suboptimality: subs,
    })
}

/// Uniform draws from the state constraint set, by rejection from its
/// bounding box.
pub fn initial_conditions(c: &ScenarioConfig, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let scenario = c.build()?;
    let poly = scenario
        .state_polytope
        .as_ref()
        .ok_or_else(|| Error::Config("sweeps draw initial conditions from the state constraints".into()))?;
    let vs = poly.vertices();
    let n = poly.dim();
    let lo = DVector::from_fn(n, |i, _| vs.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min));
    let hi = DVector::from_fn(n, |i, _| vs.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = DVector::from_fn(n, |i, _| rng.gen_range(lo[i]..hi[i]));
        if poly.contains(&x, 0.0) {
            out.push(x);
        }
    }
    Ok(out)
}

/// One row of the sweep table, averaged over the repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub iterations: usize,
    pub learning: bool,
    pub repeats: usize,
    pub mean_cost: f64,
    pub mean_evaluations: f64,
    pub spatial_share: f64,
    /// Wall-clock per control step; the only non-reproducible column.
    pub mean_step_micros: f64,
}

/// Every `i_T` in `its`, learning on and off, from `repeats` seeded initial
/// conditions.
pub fn sweep_iterations(c: &ScenarioConfig, its: &[usize], repeats: usize, seed: u64) -> Result<Vec<SweepRow>> {
    if its.is_empty() || repeats == 0 {
        return Err(Error::Config("empty sweep".into()));
    }
    let x0s = initial_conditions(c, repeats, seed)?;
    let mut table = Vec::new();
    for &it in its {
        for learning in [true, false] {
            let mut cost = 0.0;
            let mut evals = 0.0;
            let mut spatial = 0.0;
            let mut micros = 0.0;
            for x0 in &x0s {
                let mut run = c.clone();
                run.x0 = x0.iter().copied().collect();
                run.budget = BudgetConfig::Iterations { count: it };
                if !learning {
                    run.learning.learner = LearnerKind::Off;
                }
                let rec = run_closed_loop(&run.build()?)?;
                let steps = rec.rows.len().max(1) as f64;
                cost += rec.accumulated_cost();
                evals += rec.rows.iter().map(|r| r.evaluations as f64).sum::<f64>() / steps;
                spatial += rec.spatial_count() as f64 / steps;
                micros += rec.elapsed.as_secs_f64() * 1e6 / steps;
            }
            let r = repeats as f64;
            table.push(SweepRow {
                iterations: it,
                learning,
                repeats,
                mean_cost: cost / r,
                mean_evaluations: evals / r,
                spatial_share: spatial / r,
                mean_step_micros: micros / r,
            });
        }
    }
    Ok(table)
}

/// The reproducible columns; timings go to [`sweep_timing_csv`].
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("iterations,learning,repeats,mean_cost,mean_evaluations,spatial_share\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{}\n",
            r.iterations, r.learning, r.repeats, r.mean_cost, r.mean_evaluations, r.spatial_share
        );
    }
    s
}

pub fn sweep_timing_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("iterations,learning,mean_step_micros\n");
    for r in rows {
        s += &format!("{},{},{}\n", r.iterations, r.learning, r.mean_step_micros);
    }
    s
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("sweep.csv"), sweep_csv(rows))?;
    fs::write(dir.join("sweep_timing.csv"), sweep_timing_csv(rows))?;
    Ok(())
}

/// Parses a hull dump (lines starting with `#` are skipped) and audits it.
pub fn audit_hull(path: &Path) -> Result<AuditReport> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let hull = parse_dump(&body)?;
    Ok(audit(&hull, &AuditOptions::default()))
}

/// Default output directory for a run.
pub fn default_out(name: &str) -> PathBuf {
    PathBuf::from("out").join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_and_range_parsing() {
        assert_eq!(parse_latency("3", 9).unwrap(), LatencySchedule::Fixed { steps: 3 });
        assert_eq!(
            parse_latency("0..50", 9).unwrap(),
            LatencySchedule::Seeded { min: 0, max: 50, seed: 9 }
        );
        assert!(parse_latency("5..2", 0).is_err());
        assert!(parse_latency("x", 0).is_err());
        assert_eq!(parse_iterations("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_iterations("1,2,5").unwrap(), vec![1, 2, 5]);
        assert!(parse_iterations("0").is_err());
        assert!(parse_iterations("3..1").is_err());
    }

    #[test]
    fn overrides_set_run_lengths() {
        let o = Overrides {
            runs: Some(3),
            steps_per_run: Some(40),
            ..Default::default()
        };
        let c = apply_overrides(ScenarioConfig::unicycle(), &o).unwrap();
        assert_eq!(c.steps, 120);
        let o = Overrides {
            periods: Some(2),
            no_learning: true,
            ..Default::default()
        };
        let c = apply_overrides(ScenarioConfig::servo(), &o).unwrap();
        assert_eq!(c.steps, 400);
        assert_eq!(c.learning.learner, LearnerKind::Off);
        assert!(apply_overrides(ScenarioConfig::double_integrator(), &o).is_err());
    }

    #[test]
    fn initial_conditions_are_feasible_and_seeded() {
        let c = ScenarioConfig::double_integrator();
        let a = initial_conditions(&c, 10, 4).unwrap();
        assert_eq!(a, initial_conditions(&c, 10, 4).unwrap());
        assert_ne!(a, initial_conditions(&c, 10, 5).unwrap());
        for x in &a {
            assert!((-2.0..=3.0).contains(&x[0]) && (-1.0..=1.0).contains(&x[1]));
        }
        assert!(initial_conditions(&ScenarioConfig::unicycle(), 1, 0).is_err());
    }
}
