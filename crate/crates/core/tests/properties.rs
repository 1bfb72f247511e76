use dsmr_core::evolve::{discrete_convolution, run_discrete, run_mild_exact, ConvKernel, ConvVariant};
use dsmr_core::kernels::{convex_reconstruction, ktau_sum, ktau_sum_explicit, sqrt_geometric_sum, KernelSpec};
use dsmr_core::noise::{ou_moments, sample_bundle, weight_integral, Coupling, PathBundle, StepProcess};
use dsmr_core::norms::{collect_paths, dsmr_functional};
use dsmr_core::rational_calc::{admissible_catalog, partial_fractions, reconstruct, SchemeFunction};
use dsmr_core::rng::stream;
use dsmr_core::spectral_operator::DiagonalOperator;
use num_complex::Complex64;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn catalog_scheme() -> impl Strategy<Value = SchemeFunction> {
    let all = admissible_catalog();
    (0..all.len()).prop_map(move |i| all[i].clone())
}

fn operator() -> impl Strategy<Value = DiagonalOperator> {
    prop::collection::vec(1e-2f64..1e3, 1..6).prop_map(|mut ev| {
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        DiagonalOperator::new(ev).unwrap()
    })
}

#[derive(Debug)]
struct Setup {
    op: DiagonalOperator,
    tau: f64,
    n: usize,
    bundle: PathBundle,
}

fn setup() -> impl Strategy<Value = Setup> {
    (operator(), 1e-3f64..0.5, 1usize..24, any::<u64>()).prop_map(|(op, tau, n, seed)| {
        let mut rng = stream(seed, &[1], 0);
        let bundle = sample_bundle(op.eigenvalues(), n, tau, op.dim(), &Coupling::Diagonal, true, &mut rng).unwrap();
        Setup { op, tau, n, bundle }
    })
}

fn process(s: &Setup, seed: u64) -> StepProcess {
    use rand::Rng;
    let mut rng = stream(seed, &[2], 0);
    let v = (0..s.n * s.op.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    StepProcess::diagonal(s.tau, s.n, s.op.dim(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scheme_is_linear_in_the_data(s in setup(), scheme in catalog_scheme(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (g1, g2) = (process(&s, 1), process(&s, 2));
        let mix = g1.scaled(a).add(&g2.scaled(b)).unwrap();
        let y1 = run_discrete(&s.op, &scheme, &g1, &s.bundle).unwrap();
        let y2 = run_discrete(&s.op, &scheme, &g2, &s.bundle).unwrap();
        let ym = run_discrete(&s.op, &scheme, &mix, &s.bundle).unwrap();
        let scale = y1.values.iter().chain(&y2.values).fold(1e-300f64, |m, v| m.max(v.abs())) * (a.abs() + b.abs() + 1.0);
        for i in 0..ym.values.len() {
            prop_assert!((ym.values[i] - a * y1.values[i] - b * y2.values[i]).abs() <= 1e-12 * scale);
        }
        let m1 = run_mild_exact(&s.op, &g1, &s.bundle).unwrap();
        let mm = run_mild_exact(&s.op, &g1.scaled(a), &s.bundle).unwrap();
        for i in 0..mm.values.len() {
            prop_assert!(close(mm.values[i], a * m1.values[i], 1e-12) || (mm.values[i] - a * m1.values[i]).abs() < 1e-300);
        }
    }

    #[test]
    fn dsmr_functional_is_homogeneous(s in setup(), scheme in catalog_scheme(), c in -5.0f64..5.0, p in 2.0f64..6.0) {
        let g = process(&s, 3);
        let y = run_discrete(&s.op, &scheme, &g, &s.bundle).unwrap();
        let yc = run_discrete(&s.op, &scheme, &g.scaled(c), &s.bundle).unwrap();
        let a = dsmr_functional(&s.op, &y, p, 0.0).unwrap();
        let b = dsmr_functional(&s.op, &yc, p, 0.0).unwrap();
        prop_assert!(close(b, c.abs() * a, 1e-12));
    }

    #[test]
    fn explicit_power_kernel_matches_the_recursion(s in setup(), scheme in catalog_scheme()) {
        let g = process(&s, 4);
        let y = run_discrete(&s.op, &scheme, &g, &s.bundle).unwrap();
        let r = s.op.scheme_multipliers(&scheme, s.tau).unwrap();
        let per_mode: Vec<Vec<f64>> = r.iter().map(|rk| (0..=s.n + 1).map(|i| if i == 0 { 0.0 } else { rk.powi(i as i32) }).collect()).collect();
        let conv = discrete_convolution(&ConvKernel::PerMode { values: per_mode, tail_bound: 0.0 }, &g, &s.bundle, ConvVariant::Causal).unwrap();
        let power = discrete_convolution(&ConvKernel::Power(r), &g, &s.bundle, ConvVariant::Causal).unwrap();
        prop_assert_eq!(&power.values, &y.values);
        let scale = y.values.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (a, b) in conv.values.iter().zip(&y.values) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn scheme_is_contractive_on_the_positive_axis(scheme in catalog_scheme(), x in 0.0f64..1e6) {
        prop_assert!(scheme.eval_real(x).abs() <= 1.0 + 1e-14);
    }

    #[test]
    fn partial_fractions_reconstruct_the_scheme(scheme in catalog_scheme(), re in 0.0f64..50.0, im in -50.0f64..50.0) {
        let z = Complex64::new(re, im);
        let pf = partial_fractions(&scheme).unwrap();
        let a = reconstruct(&pf, z);
        let b = scheme.eval(z).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1e-3));
    }

    #[test]
    fn ou_moments_are_a_covariance(lambda in 1e-8f64..1e8, tau in 1e-6f64..10.0) {
        let m = ou_moments(lambda, tau);
        prop_assert!(m.residual >= 0.0);
        prop_assert!(m.var_e <= tau * (1.0 + 1e-15) && m.cov <= tau * (1.0 + 1e-15));
        prop_assert!(m.cov * m.cov <= tau * m.var_e * (1.0 + 1e-12));
    }

    #[test]
    fn weight_integrals_add_up(n in 1usize..200, tau in 1e-3f64..1.0, alpha in -0.9f64..3.0) {
        let total: f64 = (0..n).map(|i| weight_integral(i, tau, alpha)).sum();
        let t = n as f64 * tau;
        prop_assert!(close(total, t.powf(alpha + 1.0) / (alpha + 1.0), 1e-10));
    }

    #[test]
    fn convex_reconstruction_is_exact(steps in prop::collection::vec(0.0f64..1.0, 1..40), tau in 1e-3f64..2.0) {
        // non-increasing decrements give a convex non-increasing kernel
        let mut d = steps.clone();
        d.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k: Vec<f64> = (0..d.len()).map(|n| d[n..].iter().sum()).collect();
        let (c, rebuilt) = convex_reconstruction(&k, tau);
        prop_assert!(c.iter().all(|x| *x >= 0.0));
        for (a, b) in rebuilt.iter().zip(&k) {
            prop_assert!((a - b).abs() <= 1e-12 * k[0].max(1e-300));
        }
        let kc: Vec<Complex64> = k.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        prop_assert!(close(c.iter().sum::<f64>(), ktau_sum_explicit(&kc, tau), 1e-12));
    }

    #[test]
    fn reference_kernel_has_unit_sum(m in 1usize..3000, e in -12i32..3) {
        let s = ktau_sum(&KernelSpec::j_reference(m, 2f64.powi(e))).unwrap();
        prop_assert!((s.sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tail_estimate_is_stable_under_the_truncation_point(v in 1e-6f64..5.0, n1 in 16usize..2048, n2 in 16usize..2048) {
        let (a, ea) = sqrt_geometric_sum(v, n1).unwrap();
        let (b, eb) = sqrt_geometric_sum(v, n2).unwrap();
        prop_assert!((a - b).abs() <= ea + eb + 1e-12 * a.max(b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn path_results_do_not_depend_on_the_pool(seed in any::<u64>(), threads in 2usize..6) {
        let f = |path: u64| {
            use rand::Rng;
            let mut rng = stream(seed, &[3], path);
            Ok((0..5).map(|_| rng.random::<f64>()).collect())
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| collect_paths(40, f)).unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| collect_paths(40, f)).unwrap();
        prop_assert_eq!(one, many);
    }
}
