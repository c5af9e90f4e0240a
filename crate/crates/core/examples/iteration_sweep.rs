//! Accumulated cost against the iteration budget, learning on and off, over
//! seeded initial conditions of the double integrator.

use memory_mpc::cli::{sweep_csv, sweep_iterations};
use memory_mpc::scenario::ScenarioConfig;

fn main() -> memory_mpc::Result<()> {
    let mut c = ScenarioConfig::double_integrator();
    c.steps = 300;
    let rows = sweep_iterations(&c, &[1, 2, 3, 5], 3, 11)?;
    print!("{}", sweep_csv(&rows));
    for r in rows.iter().filter(|r| r.learning) {
        println!("it {}: {:.1} us per step", r.iterations, r.mean_step_micros);
    }
    Ok(())
}
