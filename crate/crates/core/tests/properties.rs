use approx::assert_relative_eq;
use proptest::prelude::*;

use pwsbl::geometry::{eval_wgap, project_onto_level_set, LevelProjection, Region, DEFAULT_QP_TOL};
use pwsbl::linalg::dist;
use pwsbl::problems::Cut;
use pwsbl::proximal::ProxSurrogate;
use pwsbl::Point;

fn cut_strategy(n: usize) -> impl Strategy<Value = Cut> {
    (
        prop::collection::vec(-2.0..2.0f64, n),
        -1.0..1.0f64,
        prop::collection::vec(-3.0..3.0f64, n),
    )
        .prop_map(|(c, v, g)| Cut {
            center: Point(c),
            value: v,
            gradient: g,
        })
}

proptest! {
    #[test]
    fn lowering_undoes_lifting(cut in cut_strategy(3), center in prop::collection::vec(-2.0..2.0f64, 3), rho in 0.1..5.0f64) {
        let s = ProxSurrogate::new(Point(center), rho).unwrap();
        let back = s.lower_cut(&s.lift_cut(&cut));
        for (a, b) in back.gradient.iter().zip(&cut.gradient) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_relative_eq!(back.value, cut.value, epsilon = 1e-12);
    }

    #[test]
    fn level_projection_is_feasible_and_nearest(
        cuts in prop::collection::vec(cut_strategy(3), 1..6),
        y in prop::collection::vec(-3.0..3.0f64, 3),
        z in prop::collection::vec(-1.0..1.0f64, 3),
        slack in 0.0..1.0f64,
    ) {
        let level = cuts.iter().map(|c| c.support(&z)).fold(f64::NEG_INFINITY, f64::max) + slack;
        let y = Point(y);
        match project_onto_level_set(&y, &cuts, level, &Region::WholeSpace, DEFAULT_QP_TOL).unwrap() {
            LevelProjection::Feasible { point, .. } => {
                for c in &cuts {
                    prop_assert!(c.support(&point) <= level + 1e-9);
                }
                prop_assert!(point.dist(&y) <= dist(&z, &y) + 1e-9);
            }
            LevelProjection::Infeasible { .. } => prop_assert!(false, "z is feasible"),
        }
    }

    #[test]
    fn box_projection_is_idempotent(x in prop::collection::vec(-5.0..5.0f64, 4)) {
        let region = Region::Box { lower: vec![-1.0; 4], upper: vec![2.0; 4] };
        let p = region.project(&x);
        prop_assert!(region.contains(&p, 0.0));
        prop_assert_eq!(region.project(&p), p);
    }

    #[test]
    fn wgap_does_not_grow_with_radius(cuts in prop::collection::vec(cut_strategy(2), 1..5), a in 0.05..2.0f64, scale in 1.0..5.0f64) {
        let center = Point(vec![0.0, 0.0]);
        let small = eval_wgap(&center, &cuts, a, &Region::WholeSpace, DEFAULT_QP_TOL).unwrap().value;
        let large = eval_wgap(&center, &cuts, a * scale, &Region::WholeSpace, DEFAULT_QP_TOL).unwrap().value;
        prop_assert!(large <= small + 1e-8);
    }
}
