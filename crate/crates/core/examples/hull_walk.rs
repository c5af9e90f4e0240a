//! Builds the lower convex hull of samples of a convex function in the plane,
//! then walks to a few query points and compares the interpolant with the
//! true value.

use memory_mpc::hull::{audit, write_dump, AuditOptions, ConvexHull, DataPoint, FacetKind};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f(x: &DVector<f64>) -> f64 {
    x[0] * x[0] + 2.0 * x[1] * x[1] + 0.5 * x[0] * x[1]
}

fn point(x: DVector<f64>) -> DataPoint {
    // the stored sequence is just a tag here
    let seq = dvector![x[0] + x[1]];
    let j = f(&x);
    DataPoint::new(seq, x, j)
}

fn main() {
    let init = [dvector![-1.0, -1.0], dvector![1.0, -1.0], dvector![0.0, 1.0]];
    let mut hull = ConvexHull::init(&init.map(point)).expect("affinely independent");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hint = 0;
    for _ in 0..300 {
        let x = dvector![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        match hull.insert(point(x), hint) {
            Ok(r) => hint = r.index,
            Err(e) => println!("skipped: {e}"),
        }
    }
    println!(
        "{} points, {} lower facets, {} outer facets",
        hull.len(),
        hull.facets(FacetKind::Lower).count(),
        hull.facets(FacetKind::Outer).count()
    );
    for x in [dvector![0.0, 0.0], dvector![0.7, -0.3], dvector![1.2, 1.2], dvector![3.0, 0.0]] {
        let ws = hull.generate_sw(&x, hint).expect("query");
        println!(
            "x = {:?}: located {:?}, J^a {:.4}, f {:.4}, weights {:?}",
            x.as_slice(),
            ws.location,
            ws.j_approx,
            f(&x),
            ws.weights.as_slice()
        );
        hint = ws.hint;
    }
    let report = audit(&hull, &AuditOptions::default());
    print!("{report}");
    let dump = write_dump(&hull);
    println!("dump is {} lines", dump.lines().count());
}
