use crate::common::{live, lower_hull, outer_hull, random_cloud};
use memory_mpc::hull::{audit, AuditOptions, ConvexHull, FacetKind};

#[test]
fn incremental_hull_matches_enumeration() {
    for n in 1..=3 {
        for seed in 0..20u64 {
            let pts = random_cloud(seed * 7 + n as u64, n, 40);
            let mut h = ConvexHull::init(&pts[..=n]).unwrap();
            let mut hint = 0;
            for p in &pts[n + 1..] {
                let w = h.generate_sw(&p.x, hint).unwrap();
                hint = w.hint;
                h.update(p.clone(), w.location).unwrap();
            }
            let xs: Vec<_> = pts.iter().map(|p| p.x.clone()).collect();
            let js: Vec<_> = pts.iter().map(|p| p.j).collect();
            assert_eq!(live(&h, FacetKind::Lower), lower_hull(&xs, &js), "n={n} seed={seed}");
            assert_eq!(live(&h, FacetKind::Outer), outer_hull(&xs), "n={n} seed={seed}");
            let report = audit(&h, &AuditOptions { brute_force_subsets: None, ..Default::default() });
            assert!(report.is_clean(), "{report}");
        }
    }
}
