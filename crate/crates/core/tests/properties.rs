use proptest::prelude::*;

use mvhom_core::bv_rep::{build_bv, evaluate_fhom, fixtures, BoxDomain, BvRecipe, ClosedFormDensities, PieceRecipe, Quadrature, ScalarExpr};
use mvhom_core::cell_solver::{tf_hom, CellConfig};
use mvhom_core::gamma_lab::{averaged_projection, minimize_feps, BoundaryCondition, EpsExperiment, ProjectionConfig};
use mvhom_core::grid::{Grid, GridField};
use mvhom_core::integrand::{Coefficient, Family, Integrand};
use mvhom_core::interface_solver::{theta_hom, InterfaceConfig};
use mvhom_core::linalg::Matrix;
use mvhom_core::manifold::ManifoldHandle;

fn weighted(n: usize, d: usize) -> Integrand {
    Integrand::weighted_norm(Coefficient::parse("sine:2,1,0").unwrap(), n, d)
}

fn families() -> Vec<Integrand> {
    let a = Coefficient::parse("sinesum:2,1").unwrap();
    vec![
        Integrand::weighted_norm(a.clone(), 2, 2),
        Integrand::new(
            Family::Anisotropic {
                a: a.clone(),
                b: Coefficient::parse("checker:0.5,1").unwrap(),
                direction: vec![0.6, 0.8].into(),
            },
            2,
            2,
        )
        .unwrap(),
        Integrand::new(Family::SmoothedNonconvex { a, bump: 0.5 }, 2, 2).unwrap(),
    ]
}

fn on_circle(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin()]
}

fn tangent_slope(theta: f64, len: f64) -> Matrix {
    Matrix::from_columns(&[vec![-len * theta.sin(), len * theta.cos()]])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn builtin_families_are_periodic(
        y in prop::collection::vec(-3.0f64..3.0, 2),
        xi in prop::collection::vec(-4.0f64..4.0, 4),
        axis in 0usize..2,
    ) {
        for f in families() {
            let mut shifted = y.clone();
            shifted[axis] += 1.0;
            let (u, v) = (f.eval(&y, &xi), f.eval(&shifted, &xi));
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn recession_is_positively_one_homogeneous(
        y in prop::collection::vec(0.0f64..1.0, 2),
        xi in prop::collection::vec(-4.0f64..4.0, 4),
        lambda in 0.01f64..10.0,
    ) {
        for f in families() {
            let scaled: Vec<f64> = xi.iter().map(|v| lambda * v).collect();
            let base = f.eval_recession(&y, &xi);
            let s = f.eval_recession(&y, &scaled);
            prop_assert!((s - lambda * base).abs() <= 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn recession_is_bracketed_by_the_coefficient_range(
        y in prop::collection::vec(0.0f64..1.0, 2),
        xi in prop::collection::vec(-4.0f64..4.0, 4),
    ) {
        let a = Coefficient::parse("sinesum:2,1").unwrap();
        let (lo, hi) = a.bounds();
        let f = Integrand::weighted_norm(a, 2, 2).with_offset(0.7);
        let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = f.eval_recession(&y, &xi);
        prop_assert!(r >= lo * n - 1e-12 && r <= hi * n + 1e-12);
    }

    #[test]
    fn radial_projection_fixes_manifold_values(
        angles in prop::collection::vec(-3.2f64..3.2, 25),
        seed in 0u64..1000,
    ) {
        let m = ManifoldHandle::circle();
        let g = Grid::cube(2, 4, 0.25, 0.0, false);
        let v = GridField::from_values(g, 2, angles.iter().flat_map(|t| on_circle(*t)).collect());
        let r = averaged_projection(&v, &m, &ProjectionConfig { seed, ..ProjectionConfig::default() }).unwrap();
        prop_assert_eq!(r.field.values(), v.values());
    }

    #[test]
    fn radial_projection_lands_on_the_manifold(
        radii in prop::collection::vec(0.2f64..1.5, 25),
        angles in prop::collection::vec(-3.2f64..3.2, 25),
    ) {
        let m = ManifoldHandle::circle();
        let g = Grid::cube(2, 4, 0.25, 0.0, false);
        let values = radii.iter().zip(&angles).flat_map(|(r, t)| on_circle(*t).into_iter().map(move |c| r * c)).collect();
        let v = GridField::from_values(g, 2, values);
        if let Ok(r) = averaged_projection(&v, &m, &ProjectionConfig::default()) {
            for i in 0..25 {
                prop_assert!(m.distance_to(r.field.node(i)) <= 1e-10);
            }
            prop_assert!(r.ratio.is_finite());
        }
    }

    #[test]
    fn sobolev_maps_carry_only_bulk_energy(offset in -1.0f64..1.0, slope in -3.0f64..3.0) {
        let m = ManifoldHandle::circle();
        let recipe = BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: vec![PieceRecipe::GreatCircle {
                region: BoxDomain::unit(1),
                base: vec![1.0, 0.0],
                dir: vec![0.0, 1.0],
                angle: ScalarExpr::Affine { offset, slope: vec![slope] },
            }],
        };
        let u = build_bv(&recipe, &m).unwrap();
        let dens = ClosedFormDensities { manifold: m, bulk_scale: 1.0, surface_scale: 1.0 };
        let b = evaluate_fhom(&u, &dens, &Quadrature::default()).unwrap();
        prop_assert_eq!(b.surface, 0.0);
        prop_assert_eq!(b.cantor, 0.0);
        prop_assert!((b.total - slope.abs()).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn cell_trace_is_an_upper_bound_chain_above_the_coercivity_floor(theta in -3.1f64..3.1, len in 0.1f64..4.0) {
        let m = ManifoldHandle::circle();
        let f = weighted(1, 2);
        let cfg = CellConfig { n: 16, schedule: vec![1, 2, 4], ..CellConfig::default_for(1) };
        let s = m.point(&on_circle(theta)).unwrap();
        let est = tf_hom(&f, &m, &s, &tangent_slope(theta, len), &cfg).unwrap();
        for w in est.trace.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-3 * (1.0 + len));
        }
        for (_, v) in &est.trace {
            prop_assert!(*v >= len - 1e-6);
        }
        prop_assert!(est.smoothing_gap <= 1e-3 * (1.0 + len) * 3.0);
    }

    #[test]
    fn cell_density_is_lipschitz_in_the_slope(theta in -3.1f64..3.1, len in 0.1f64..3.0, step in -1.0f64..1.0) {
        let m = ManifoldHandle::circle();
        let f = weighted(1, 2);
        let cfg = CellConfig { n: 16, schedule: vec![1, 2], ..CellConfig::default_for(1) };
        let s = m.point(&on_circle(theta)).unwrap();
        let u = tf_hom(&f, &m, &s, &tangent_slope(theta, len), &cfg).unwrap().value;
        let v = tf_hom(&f, &m, &s, &tangent_slope(theta, len + step), &cfg).unwrap().value;
        // sup of the coefficient bounds the constant.
        prop_assert!((u - v).abs() <= (3.0 + 1e-3) * step.abs() + 1e-6);
    }

    #[test]
    fn interface_trace_is_monotone_and_below_the_growth_bound(ta in -3.1f64..3.1, tb in -3.1f64..3.1) {
        let m = ManifoldHandle::circle();
        let f = weighted(1, 2);
        let (a, b) = (m.point(&on_circle(ta)).unwrap(), m.point(&on_circle(tb)).unwrap());
        let cfg = InterfaceConfig { n: 32, schedule: vec![1, 2], ..InterfaceConfig::default_for(1) };
        let est = theta_hom(&f, &m, &a, &b, &[1.0], &cfg).unwrap().estimate;
        for w in est.trace.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-3);
        }
        prop_assert!(est.value <= 3.0 * m.geodesic_distance(&a, &b) + 1e-3);
    }

    #[test]
    fn minimized_feps_fields_stay_on_the_manifold(tb in 0.3f64..3.0, seed in 0u64..100) {
        let m = ManifoldHandle::circle();
        let mut exp = EpsExperiment::new(
            weighted(1, 2),
            m.clone(),
            vec![0.25],
            BoundaryCondition::Dirichlet { a: on_circle(0.0), b: on_circle(tb) },
        );
        exp.seed = seed;
        let sol = minimize_feps(&exp, 0.25).unwrap();
        for i in 0..sol.field.grid().num_nodes() {
            prop_assert!(m.distance_to(sol.field.node(i)) <= 1e-10);
        }
        prop_assert!(sol.energy <= sol.initial_energy + 1e-12);
    }

    #[test]
    fn cantor_energy_is_stable_in_the_staircase_depth(depth in 4u32..12) {
        let m = ManifoldHandle::circle();
        let dens = ClosedFormDensities { manifold: m.clone(), bulk_scale: 1.0, surface_scale: 1.0 };
        let q = Quadrature::default();
        let at = |k| evaluate_fhom(&build_bv(&fixtures::staircase_turn(1, 2, k), &m).unwrap(), &dens, &q).unwrap().cantor;
        let (c, c_next) = (at(depth), at(depth + 1));
        // Remaining variation beyond depth k is bounded by the total.
        prop_assert!((c_next - c).abs() <= 2.0 * std::f64::consts::PI * 0.5f64.powi(depth as i32) + 1e-9);
    }
}
