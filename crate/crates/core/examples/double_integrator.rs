//! Regulates the disturbed double integrator with two optimizer iterations
//! per step, once with the hull learner and once without.

use memory_mpc::controller::run_closed_loop;
use memory_mpc::learner::LearnerKind;
use memory_mpc::scenario::ScenarioConfig;

fn main() -> memory_mpc::Result<()> {
    for kind in [LearnerKind::Hull, LearnerKind::Off] {
        let mut c = ScenarioConfig::double_integrator();
        c.steps = 1000;
        c.learning.learner = kind;
        let rec = run_closed_loop(&c.build()?)?;
        println!(
            "{kind:?}: cost {:.4}, spatial warm starts {}/{}, data points {}, |x| {:.2e}",
            rec.accumulated_cost(),
            rec.spatial_count(),
            rec.rows.len(),
            rec.rows.last().map_or(0, |r| r.data_size),
            rec.final_state.norm()
        );
        println!("  checks {:?}", rec.counts);
    }
    Ok(())
}
