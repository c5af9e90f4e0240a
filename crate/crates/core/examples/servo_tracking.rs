//! Tracks the piecewise-constant servo reference with one iteration per step.
//! Prints the mean tracking error of each reference period.

use memory_mpc::controller::run_closed_loop;
use memory_mpc::learner::LearnerKind;
use memory_mpc::scenario::ScenarioConfig;

fn main() -> memory_mpc::Result<()> {
    let periods: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    for kind in [LearnerKind::Hull, LearnerKind::Off] {
        let mut c = ScenarioConfig::servo();
        c.steps = 200 * periods;
        c.learning.learner = kind;
        let rec = run_closed_loop(&c.build()?)?;
        let errors: Vec<String> = rec.tracking_errors().iter().map(|e| format!("{e:.4}")).collect();
        println!("{kind:?}: {}", errors.join(" "));
    }
    Ok(())
}
