use proptest::prelude::*;

use supnorm_core::dpm::{mixture_density, MixingMeasure, MixtureKernel};
use supnorm_core::gof::mcdiarmid_bound;
use supnorm_core::quantile::{cdf, quantile};
use supnorm_core::{
    interpolation_check, sample, ApproxOperator, DensitySpec, Grid, GridFunction, HistogramPosterior, KernelSpec, Norm,
};

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        go(f, a, m, l, 0.5 * tol, depth - 1) + go(f, m, b, r, 0.5 * tol, depth - 1)
    }
    go(f, a, b, simpson(f, a, b), tol, depth)
}

fn unit_grid() -> Grid {
    Grid::new(0.0, 1.0, 1025).unwrap()
}

prop_compose! {
    fn wave()(coef in prop::collection::vec((-2.0f64..2.0, 0.5f64..25.0, 0.0f64..6.3), 1..5),
              step in prop::option::of((0.05f64..0.95, -1.0f64..1.0))) -> GridFunction {
        unit_grid().tabulate(|x| {
            let s: f64 = coef.iter().map(|&(a, w, ph)| a * (w * x + ph).sin()).sum();
            s + step.map_or(0.0, |(at, h)| if x > at { h } else { 0.0 })
        }).unwrap()
    }
}

prop_compose! {
    fn positive_density()(coef in prop::collection::vec((0.0f64..0.3, 1u32..6), 1..4)) -> GridFunction {
        let f = unit_grid().tabulate(|x| {
            1.0 + coef.iter().map(|&(a, k)| a * (2.0 * std::f64::consts::PI * k as f64 * x).sin()).sum::<f64>()
        }).unwrap();
        f.normalized().unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interpolation_inequality(f in wave(), g in wave(), s in prop::sample::select(vec![1.5, 2.0, 3.0, 4.0])) {
        prop_assert!(interpolation_check(&f, &g, s).unwrap());
    }

    #[test]
    fn haar_is_linear_and_idempotent(f in wave(), g in wave(), a in -3.0f64..3.0, b in -3.0f64..3.0, j in 0u32..7) {
        let op = ApproxOperator::haar(j);
        let lhs = op.smooth(&f.lin_comb(a, &g, b).unwrap()).unwrap();
        let rhs = op.smooth(&f).unwrap().lin_comb(a, &op.smooth(&g).unwrap(), b).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm(Norm::Sup) < 1e-9);
        let once = op.smooth(&f).unwrap();
        let twice = op.smooth(&once).unwrap();
        prop_assert!(twice.sub(&once).unwrap().norm(Norm::Sup) < 1e-9);
    }

    #[test]
    fn convolution_is_linear(f in wave(), g in wave(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = ApproxOperator::convolution(KernelSpec::gaussian(), 4);
        let lhs = op.smooth(&f.lin_comb(a, &g, b).unwrap()).unwrap();
        let rhs = op.smooth(&f).unwrap().lin_comb(a, &op.smooth(&g).unwrap(), b).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm(Norm::Sup) < 1e-8);
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), n in 1usize..300) {
        let spec = DensitySpec::by_name("lipschitz-sine").unwrap();
        let a = sample(&spec, n, seed).unwrap();
        let b = sample(&spec, n, seed).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert!(a.values.iter().all(|x| (0.0..=1.0).contains(x)));
        let c = sample(&spec, n, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(&a.values, &c.values);
    }

    #[test]
    fn quantile_inverts_cdf(p in positive_density(), x in 0.01f64..0.99) {
        let f = cdf(&p).unwrap();
        let tau = f.eval(x);
        prop_assume!(tau > 0.0 && tau < 1.0);
        prop_assert!((quantile(&f, tau).unwrap() - x).abs() <= p.grid().step());
        prop_assert!(f.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn bayes_mean_is_bounded_density(counts in prop::collection::vec(0u64..500, 8)) {
        let post = HistogramPosterior::from_counts(3, counts).unwrap();
        let m = post.bayes_mean(&unit_grid()).unwrap();
        prop_assert!(m.max_value() <= 8.0);
        prop_assert!((m.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_mixtures_bounded_by_half(atoms in prop::collection::vec((-3.0f64..3.0, 0.01f64..1.0), 1..12)) {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let g = MixingMeasure::new(atoms.iter().map(|a| a.0).collect(), atoms.iter().map(|a| a.1 / total).collect());
        prop_assume!(g.is_ok());
        let grid = Grid::new(-15.0, 15.0, 8193).unwrap();
        let p = mixture_density(&g.unwrap(), MixtureKernel::Laplace, None, &grid).unwrap();
        prop_assert!(p.max_value() <= 0.5 + 1e-9);
        prop_assert!((p.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mcdiarmid_bound_decreases_in_t(n in 10usize..5000, t in 0.001f64..1.0, phi in 0.5f64..3.0) {
        let a = mcdiarmid_bound(n, t, phi).unwrap();
        let b = mcdiarmid_bound(n, 1.5 * t, phi).unwrap();
        prop_assert!(b <= a && b >= 0.0 && a <= 2.0);
    }
}

#[test]
fn catalog_densities_integrate_to_one() {
    for name in ["uniform", "lipschitz-sine", "holder-0.5", "laplace", "laplace-2atom", "laplace-conv2", "gaussian"] {
        let spec = DensitySpec::by_name(name).unwrap();
        let (lo, hi) = spec.domain;
        // split at kinks so the oracle sees smooth pieces
        let mut cuts = vec![lo, hi];
        cuts.extend([-1.0, 0.0, 0.5, 1.0].iter().filter(|&&c| c > lo && c < hi));
        cuts.sort_by(f64::total_cmp);
        let pdf = |x: f64| spec.pdf(x);
        let mass: f64 = cuts.windows(2).map(|w| adaptive_simpson(&pdf, w[0], w[1], 1e-12, 40)).sum();
        assert!((mass - 1.0).abs() < 1e-8, "{name}: {mass}");
        assert!((spec.cdf(hi) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kernels_have_unit_mass() {
    for k in [KernelSpec::gaussian(), KernelSpec::laplace()] {
        let f = |x: f64| k.evaluate(x);
        let r = k.support_radius().unwrap();
        let mass = adaptive_simpson(&f, -r, 0.0, 1e-13, 40) + adaptive_simpson(&f, 0.0, r, 1e-13, 40);
        assert!((mass - 1.0).abs() < 1e-9, "{}: {mass}", k.name());
    }
}
