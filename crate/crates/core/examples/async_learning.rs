//! The learner runs behind the controller. Points arriving while an update is
//! pending replace the queued one; the controller never waits.

use memory_mpc::controller::run_closed_loop;
use memory_mpc::learner::LatencySchedule;
use memory_mpc::scenario::ScenarioConfig;

fn main() -> memory_mpc::Result<()> {
    let schedules = [
        LatencySchedule::Fixed { steps: 0 },
        LatencySchedule::Fixed { steps: 5 },
        LatencySchedule::Fixed { steps: 50 },
        LatencySchedule::Seeded { min: 1, max: 20, seed: 3 },
    ];
    for latency in schedules {
        let mut c = ScenarioConfig::double_integrator();
        c.steps = 1000;
        c.learning.latency = latency;
        let rec = run_closed_loop(&c.build()?)?;
        let s = rec.stats;
        println!(
            "{latency:?}: cost {:.4}, added {}, busy {}, small {}, clean {}",
            rec.accumulated_cost(),
            s.added,
            s.skipped_busy,
            s.skipped_small,
            rec.counts.is_clean()
        );
    }
    Ok(())
}
