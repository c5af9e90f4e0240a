//! Repeats the unicycle parking maneuver from the same start. The Lipschitz
//! learner carries data from one run to the next, so later runs get cheaper.

use memory_mpc::controller::{run_closed_loop, run_oracle_policy};
use memory_mpc::scenario::ScenarioConfig;

fn main() -> memory_mpc::Result<()> {
    let mut c = ScenarioConfig::unicycle();
    let runs = 6;
    c.steps = 120 * runs;
    let s = c.build()?;
    let rec = run_closed_loop(&s)?;
    for (i, cost) in rec.run_costs().iter().enumerate() {
        println!("run {:2}: {cost:.4}", i + 1);
    }
    let oracle = run_oracle_policy(&s, 120)?;
    println!("converged solve every step: {:.4}", oracle.accumulated_cost());
    println!("learner {:?}", rec.stats);
    Ok(())
}
