use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use qcbm_core::objective::mmd_loss;
use qcbm_core::rng;
use qcbm_core::{
    CircuitSpec, KernelMatrix, KernelSpec, Layout, Parameterization, ProbDist, QcbmObjective, Shots,
};

fn parameterization() -> impl Strategy<Value = Parameterization> {
    prop_oneof![Just(Parameterization::Sgp), Just(Parameterization::Agp)]
}

fn objective(n_max: usize) -> impl Strategy<Value = (QcbmObjective, Vec<f64>)> {
    (2usize..=n_max, 0usize..=2, parameterization(), any::<bool>())
        .prop_map(|(n, l, p, brick)| {
            let layout = match (l, brick && n % 2 == 0) {
                (0, _) => Layout::None,
                (_, true) => Layout::TwoDesign,
                _ => Layout::Pc,
            };
            let spec = CircuitSpec::new(n, l, p, layout).unwrap();
            QcbmObjective::new(spec, &KernelSpec::default(), Shots::Exact).unwrap()
        })
        .prop_flat_map(|obj| {
            let dim = obj.spec().param_count();
            (Just(obj), prop::collection::vec(0.0..TAU, dim))
        })
}

fn distribution(n: usize) -> impl Strategy<Value = ProbDist> {
    prop::collection::vec(0.0f64..1.0, 1 << n).prop_filter_map("non-zero mass", move |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-6).then(|| ProbDist::exact(n, w.iter().map(|x| x / total).collect()).unwrap())
    })
}

#[test]
fn kernel_is_positive_semidefinite() {
    let specs = [
        KernelSpec::default(),
        KernelSpec { bandwidths: vec![0.5] },
        KernelSpec { bandwidths: vec![1.0] },
        KernelSpec { bandwidths: vec![4.0] },
        KernelSpec { bandwidths: vec![0.1, 10.0] },
    ];
    for spec in &specs {
        for n in 1..=6 {
            let k = KernelMatrix::new(n, spec).unwrap();
            let dim = 1 << n;
            let m = DMatrix::from_fn(dim, dim, |i, j| k.get(i, j));
            assert_eq!(m, m.transpose());
            let min = SymmetricEigen::new(m).eigenvalues.min();
            assert!(min >= -1e-9, "n={n} {spec:?}: min eigenvalue {min}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn parameter_shift_matches_central_differences((obj, theta) in objective(4)) {
        let h = 1e-4;
        let grad = obj.parameter_shift_gradient(&theta, &mut rng::from_seed(0)).unwrap();
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            let fd = (obj.exact_loss(&plus).unwrap() - obj.exact_loss(&minus).unwrap()) / (2.0 * h);
            prop_assert!((grad[j] - fd).abs() < 1e-6, "j={} ps={} fd={}", j, grad[j], fd);
        }
    }

    #[test]
    fn loss_is_two_pi_shift_invariant((obj, theta) in objective(4), j in any::<prop::sample::Index>()) {
        let j = j.index(theta.len());
        let mut shifted = theta.clone();
        shifted[j] += TAU;
        let a = obj.exact_loss(&theta).unwrap();
        let b = obj.exact_loss(&shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn mmd_is_nonnegative_symmetric_and_zero_on_the_diagonal(
        (q, p) in (2usize..=5).prop_flat_map(|n| (distribution(n), distribution(n)))
    ) {
        let k = KernelMatrix::new(q.n_qubits(), &KernelSpec::default()).unwrap();
        let qp = mmd_loss(&q, &p, &k).unwrap().value;
        let pq = mmd_loss(&p, &q, &k).unwrap().value;
        prop_assert!(qp >= 0.0);
        prop_assert!((qp - pq).abs() < 1e-12);
        prop_assert_eq!(mmd_loss(&q, &q, &k).unwrap().value, 0.0);
        // Bounded by 2 for unit-diagonal, nonnegative kernels.
        prop_assert!(qp <= 2.0 + 1e-12);
    }
}

/// Mean absolute deviation of the sampled loss from the exact loss over `reps` seeds.
fn mean_deviation(obj: &QcbmObjective, theta: &[f64], shots: u32, reps: u64) -> f64 {
    let exact = obj.exact_loss(theta).unwrap();
    let noisy = obj.with_shots(Shots::Finite(shots));
    (0..reps)
        .map(|s| (noisy.loss_at(theta, &mut rng::from_seed(s)).unwrap().value - exact).abs())
        .sum::<f64>()
        / reps as f64
}

#[test]
fn sampled_loss_error_shrinks_like_inverse_root_shots() {
    let spec = CircuitSpec::new(3, 1, Parameterization::Agp, Layout::Pc).unwrap();
    let obj = QcbmObjective::new(spec, &KernelSpec::default(), Shots::Exact).unwrap();
    let theta: Vec<f64> = (0..spec.param_count()).map(|i| 0.37 * i as f64).collect();
    let coarse = mean_deviation(&obj, &theta, 512, 100);
    let fine = mean_deviation(&obj, &theta, 8192, 100);
    // sqrt(8192 / 512) = 4; allow slack for the seed average.
    let ratio = coarse / fine;
    assert!((2.5..6.5).contains(&ratio), "coarse={coarse} fine={fine} ratio={ratio}");
}

#[test]
fn sampled_gradient_averages_to_the_exact_gradient() {
    let spec = CircuitSpec::new(2, 1, Parameterization::Sgp, Layout::Pc).unwrap();
    let exact = QcbmObjective::new(spec, &KernelSpec::default(), Shots::Exact).unwrap();
    let noisy = exact.with_shots(Shots::Finite(2048));
    let theta = [0.3, 1.1, -0.4, PI / 3.0];
    let truth = exact.parameter_shift_gradient(&theta, &mut rng::from_seed(0)).unwrap();
    let reps = 400;
    let mut mean = [0.0; 4];
    let mut sq = [0.0; 4];
    for s in 0..reps {
        let g = noisy.parameter_shift_gradient(&theta, &mut rng::from_seed(s)).unwrap();
        for j in 0..4 {
            mean[j] += g[j] / reps as f64;
            sq[j] += g[j] * g[j] / reps as f64;
        }
    }
    for j in 0..4 {
        let se = ((sq[j] - mean[j] * mean[j]).max(0.0) / reps as f64).sqrt();
        assert!(
            (mean[j] - truth[j]).abs() < 5.0 * se + 1e-9,
            "j={j} mean={} exact={} se={se}",
            mean[j],
            truth[j]
        );
    }
}
