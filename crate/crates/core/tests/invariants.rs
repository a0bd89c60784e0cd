use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steadypop::model::{
    f1_hierarchy, f2_total, integrate, survival, AgeGrid, Density, ModelKind, Monotonicity,
    RateFunction,
};
use steadypop::operator_lab::{
    assemble_full, assemble_split, dominant_eigenvalue, resolvent_matrix,
};
use steadypop::spectral::{net_reproduction, Characteristic};
use steadypop::verify::{random_density, random_scenario};
use steadypop::{sim, steady, Scenario};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

fn positive_density(seed: u64, cells: usize) -> Density {
    let grid = AgeGrid::new(1.0 + (seed % 9) as f64, cells).unwrap();
    random_density(&mut rng(seed), grid)
}

fn hierarchic_reference(cells: usize) -> Scenario {
    steadypop::scenario::catalog::load("hierarchic_reference")
        .unwrap()
        .with_cells(cells)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hierarchy_is_ray_invariant(seed in any::<u64>(), alpha in 1e-3..1e3f64, k in -8i32..8) {
        let u = positive_density(seed, 300);
        let q = f1_hierarchy(&u).unwrap();
        let general = f1_hierarchy(&u.scaled(alpha)).unwrap();
        // forming α·u rounds every entry, so only a few ulps survive in general
        for (x, y) in q.values().iter().zip(general.values()) {
            prop_assert!(ulp_distance(*x, *y) <= 8, "{x} vs {y}");
        }
        let exact = f1_hierarchy(&u.scaled(2f64.powi(k))).unwrap();
        prop_assert_eq!(exact.values(), q.values());
    }

    #[test]
    fn total_scales_linearly(seed in any::<u64>(), alpha in 1e-6..1e6f64) {
        let u = positive_density(seed, 250);
        let lhs = f2_total(&u.scaled(alpha));
        let rhs = alpha * f2_total(&u);
        prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs());
    }

    #[test]
    fn integrate_is_linear(seed in any::<u64>(), a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let u = positive_density(seed, 200);
        let v = random_density(&mut rng(seed ^ 0x9e37), *u.grid());
        let lhs = integrate(&u.combine(a, &v, b).unwrap());
        let (iu, iv) = (integrate(&u), integrate(&v));
        let scale = (a * iu).abs() + (b * iv).abs();
        prop_assert!((lhs - (a * iu + b * iv)).abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn survival_is_a_probability(seed in any::<u64>(), c0 in 0.0..3.0f64, c1 in 0.0..2.0f64) {
        let u = positive_density(seed, 300);
        let q = f1_hierarchy(&u).unwrap();
        let mu = RateFunction::parse(&format!("{c0} + {c1}*x*exp(-a/4)")).unwrap();
        let pi = survival(&q, &mu).unwrap();
        prop_assert!(pi.values().iter().all(|&p| p > 0.0 && p <= 1.0));
        prop_assert!(pi.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn characteristic_decreases_in_lambda(seed in any::<u64>(), l1 in -3.0..3.0f64, dl in 1e-3..3.0f64) {
        let mut r = rng(seed);
        let s = random_scenario(&mut r, 200);
        let u = random_density(&mut r, s.grid);
        let ch = Characteristic::new(&u, &s).unwrap();
        prop_assume!(ch.fertility().iter().any(|&b| b > 0.0));
        prop_assert!(ch.k(l1) > ch.k(l1 + dl));
    }

    #[test]
    fn net_reproduction_decreases_along_hierarchic_rays(seed in any::<u64>()) {
        let s = hierarchic_reference(400);
        let u = random_density(&mut rng(seed), s.grid);
        let alphas = [0.1, 0.3, 1.0, 2.5, 7.0, 20.0];
        let values: Vec<f64> = alphas
            .iter()
            .map(|&a| net_reproduction(&u.scaled(a), &s).unwrap())
            .collect();
        prop_assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    }

    #[test]
    fn level_set_is_bounded_by_saturation(seed in any::<u64>(), excess in 1.0..50.0f64) {
        // μ ≥ 1 and max_a β(a, 1.5) = 0.8 < 1
        let s = hierarchic_reference(300);
        let k = s.saturation_k.unwrap();
        let u = random_density(&mut rng(seed), s.grid).normalized().unwrap().scaled(k * excess);
        prop_assert!(net_reproduction(&u, &s).unwrap() < 1.0);
    }

    #[test]
    fn resolvent_order_along_rays(seed in any::<u64>(), a1 in 0.1..4.0f64, factor in 1.1..4.0f64, delta in 0.01..2.0f64) {
        let mut r = rng(seed);
        let mut s = random_scenario(&mut r, 40);
        prop_assume!(s.rates.kind != ModelKind::Linear);
        s.rates.beta_monotonicity = Monotonicity::Decreasing;
        prop_assume!(s.rates.infer_beta_monotonicity(s.grid.max_age()).unwrap() == Monotonicity::Decreasing);
        let u = random_density(&mut r, s.grid);
        let (u1, u2) = (u.scaled(a1), u.scaled(a1 * factor));
        let s1 = dominant_eigenvalue(&assemble_full(&u1, &s).unwrap()).unwrap();
        let s2 = dominant_eigenvalue(&assemble_full(&u2, &s).unwrap()).unwrap();
        let lambda = s1.max(s2) + delta;
        let (h1, b1) = assemble_split(&u1, &s).unwrap();
        let (h2, b2) = assemble_split(&u2, &s).unwrap();
        let diff = resolvent_matrix(&h1, &b1, lambda).unwrap() - resolvent_matrix(&h2, &b2, lambda).unwrap();
        prop_assert!(diff.min() >= -1e-12, "{}", diff.min());
    }

    #[test]
    fn stepping_preserves_positivity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_scenario(&mut r, 120);
        let mut p = random_density(&mut r, s.grid);
        for _ in 0..60 {
            p = sim::step(&p, &s).unwrap().density;
            prop_assert!(p.is_nonnegative());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ray_meets_level_set_once(seed in any::<u64>()) {
        let s = hierarchic_reference(400);
        let d = random_density(&mut rng(seed), s.grid).normalized().unwrap();
        let coarse: Vec<f64> = (0..=40).map(|i| 10f64.powf(-4.0 + 0.2 * i as f64)).collect();
        let fine: Vec<f64> = (0..=400).map(|i| 10f64.powf(-4.0 + 0.02 * i as f64)).collect();
        for alphas in [coarse, fine] {
            let signs: Vec<bool> = alphas
                .iter()
                .map(|&a| net_reproduction(&d.scaled(a), &s).unwrap() > 1.0)
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(changes, 1);
        }
        let p = steady::project_to_level_set(&d, &s).unwrap();
        prop_assert!(p.residual <= 1e-10);
    }

    #[test]
    fn theta_keeps_iterates_positive(seed in any::<u64>()) {
        let s = hierarchic_reference(300);
        let u = random_density(&mut rng(seed), s.grid);
        let mut v = steady::project_to_level_set(&u, &s).unwrap().point();
        for _ in 0..5 {
            v = steady::theta_step(&v, &s).unwrap();
            prop_assert!(v.is_strictly_positive());
            prop_assert!((net_reproduction(&v, &s).unwrap() - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn solutions_are_fixed_points_of_theta() {
    for name in [
        "gurtin_mccamy_closed_form",
        "hierarchic_reference",
        "increasing_beta",
    ] {
        let s = steadypop::scenario::catalog::load(name)
            .unwrap()
            .with_cells(1000)
            .unwrap();
        let sol = steady::solve_steady(&s).unwrap();
        let image = steady::theta_step(&sol.density, &s).unwrap();
        let gap = image.l1_distance(&sol.density).unwrap() / sol.density.l1_norm();
        assert!(gap <= 10.0 * s.solver.tol, "{name}: {gap}");
    }
}

#[test]
fn solutions_converge_under_refinement() {
    let diff = |n: usize| {
        let coarse = steady::solve_steady(&hierarchic_reference(n))
            .unwrap()
            .density;
        let fine = steady::solve_steady(&hierarchic_reference(2 * n))
            .unwrap()
            .density;
        coarse
            .interpolate_to(*fine.grid())
            .unwrap()
            .l1_distance(&fine)
            .unwrap()
    };
    let (d1, d2) = (diff(250), diff(500));
    let h = 5.0 / 250.0;
    assert!(d1 <= h, "{d1}");
    assert!(d2 < 0.75 * d1, "{d1} -> {d2}");
}
