//! Upper bounds a Lipschitz function from a handful of samples. Each sample
//! defines a cone `J + L|x - x̄|`; the bound is the lowest cone.

use memory_mpc::lipnet::LipschitzDataset;
use nalgebra::dvector;

fn main() -> memory_mpc::Result<()> {
    let l = 3.5;
    let mut data = LipschitzDataset::new();
    for x in [-2.0, -0.5, 0.3, 1.7] {
        data.insert(dvector![x], dvector![x], 1.0 + (2.0 * x).sin() + x * x / 4.0, l)?;
    }
    for i in 0..=16 {
        let x = -2.5 + 5.0 * i as f64 / 16.0;
        let truth = 1.0 + (2.0 * x).sin() + x * x / 4.0;
        let hit = data.warm_start(&dvector![x]).expect("non-empty");
        println!("x {x:5.2}: bound {:7.4} >= {truth:7.4}, cone at {:5.2}", hit.j_approx, hit.x[0]);
    }
    Ok(())
}
