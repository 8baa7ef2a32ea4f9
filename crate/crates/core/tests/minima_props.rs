use std::cmp::Ordering;

use proptest::prelude::*;
use qcbm_core::minima::{
    confidence_interval, estimate_bandwidth, mean_shift, select_centers, student_t_quantile,
    CONVERGENCE_FRACTION, MAX_ITERATIONS,
};
use qcbm_core::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Straightforward flat-kernel mean shift, one seed per point.
fn reference_mean_shift(points: &[Vec<f64>], bw: f64) -> Vec<Vec<f64>> {
    let r2 = bw * bw;
    let mut modes = Vec::new();
    for seed in points {
        let mut x = seed.clone();
        for _ in 0..MAX_ITERATIONS {
            let near: Vec<&Vec<f64>> = points.iter().filter(|p| dist2(p, &x) <= r2).collect();
            let mut next = vec![0.0; x.len()];
            for p in &near {
                for d in 0..x.len() {
                    next[d] += p[d] / near.len() as f64;
                }
            }
            let shift = dist2(&next, &x).sqrt();
            x = next;
            if shift < CONVERGENCE_FRACTION * bw {
                break;
            }
        }
        let support = points.iter().filter(|p| dist2(p, &x) <= r2).count();
        modes.push((x, support));
    }
    modes.sort_by(|(a, sa), (b, sb)| sb.cmp(sa).then_with(|| lex(a, b)));
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (x, _) in modes {
        if kept.iter().all(|c| dist2(c, &x) >= r2) {
            kept.push(x);
        }
    }
    kept
}

fn sorted(mut centers: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    centers.sort_by(|a, b| lex(a, b));
    centers
}

fn blobs(seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::from_seed(seed);
    let clusters = r.random_range(2..=5);
    let spread = Normal::new(0.0, r.random_range(0.05..0.6)).unwrap();
    let mut points = Vec::new();
    for _ in 0..clusters {
        let center = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        for _ in 0..r.random_range(5..25) {
            points.push(vec![
                center[0] + spread.sample(&mut r),
                center[1] + spread.sample(&mut r),
            ]);
        }
    }
    points
}

#[test]
fn mean_shift_matches_reference_on_synthetic_datasets() {
    for seed in 0..20 {
        let points = blobs(seed);
        let bw = estimate_bandwidth(&points, 0.2).unwrap();
        let ours = sorted(mean_shift(&points, bw).unwrap().centers);
        let reference = sorted(reference_mean_shift(&points, bw));
        assert_eq!(ours.len(), reference.len(), "dataset {seed}");
        for (a, b) in ours.iter().zip(&reference) {
            assert!(dist2(a, b).sqrt() < 1e-6, "dataset {seed}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn bandwidth_matches_nearest_neighbour_oracle() {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let points: Vec<Vec<f64>> = (1..=100)
        .map(|i| vec![(i as f64 * golden) % 1.0, (i as f64 * 2f64.sqrt()) % 1.0])
        .collect();
    let bw = estimate_bandwidth(&points, 0.1).unwrap();
    assert!((bw - 0.20743834298915956).abs() < 1e-12, "{bw}");
    let bw = estimate_bandwidth(&points, 0.3).unwrap();
    assert!((bw - 0.38410267685034083).abs() < 1e-12, "{bw}");
}

#[test]
fn two_tight_blobs_give_two_centers_at_their_means() {
    let mut r = rng::from_seed(7);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut points = Vec::new();
    for offset in [0.0, 10.0] {
        for _ in 0..30 {
            points.push(vec![offset + noise.sample(&mut r), noise.sample(&mut r)]);
        }
    }
    let ms = mean_shift(&points, 1.0).unwrap();
    assert_eq!(ms.centers.len(), 2);
    for (blob, members) in [(0, &points[..30]), (1, &points[30..])] {
        let mean = [
            members.iter().map(|p| p[0]).sum::<f64>() / 30.0,
            members.iter().map(|p| p[1]).sum::<f64>() / 30.0,
        ];
        let nearest = ms
            .centers
            .iter()
            .map(|c| dist2(c, &mean).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.02, "blob {blob}: {nearest}");
    }
    assert_eq!(ms.members, vec![30, 30]);
}

#[test]
fn near_identical_points_collapse_to_one_center() {
    let points: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 + 1e-7 * i as f64, -2.0]).collect();
    assert_eq!(mean_shift(&points, 1.0).unwrap().centers.len(), 1);
}

#[test]
fn t_quantiles_match_reference_values() {
    for (p, dof, expected) in [
        (0.975, 49.0, 2.0095752371292397),
        (0.975, 1.0, 12.706204736432095),
        (0.025, 9.0, -2.2621571628540997),
    ] {
        let t = student_t_quantile(p, dof).unwrap();
        assert!((t - expected).abs() < 1e-8, "p={p} dof={dof}: {t}");
    }
}

#[test]
fn downselection_of_bimodal_losses() {
    let losses: Vec<f64> = [0.1; 25].iter().chain(&[0.9; 25]).copied().collect();
    let ci = confidence_interval(&losses, 0.95).unwrap();
    assert!((ci.mean - 0.5).abs() < 1e-12);
    assert!((ci.std_dev - 0.40406101782088427).abs() < 1e-12);
    assert!((ci.t_critical - 2.0095752371292397).abs() < 1e-8);
    assert!((ci.upper - 0.6148328706930993).abs() < 1e-8);
    assert_eq!(select_centers(&[0.7, 0.1], &ci, false), vec![1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mean_shift_ignores_input_order(seed in 0u64..1000, perm_seed in any::<u64>()) {
        let points = blobs(seed);
        let bw = estimate_bandwidth(&points, 0.2).unwrap();
        let mut shuffled = points.clone();
        let mut r = rng::from_seed(perm_seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        let a = mean_shift(&points, bw).unwrap();
        let b = mean_shift(&shuffled, bw).unwrap();
        prop_assert_eq!(a.centers.len(), b.centers.len());
        for (x, y) in a.centers.iter().zip(&b.centers) {
            prop_assert!(dist2(x, y).sqrt() < 1e-9);
        }
        prop_assert!(a.centers.len() <= points.len());
        prop_assert_eq!(a.members.iter().sum::<usize>(), points.len());
    }

    #[test]
    fn kept_centers_never_exceed_candidates(
        ensemble in prop::collection::vec(0.0f64..2.0, 2..60),
        centers in prop::collection::vec(0.0f64..2.0, 1..30),
        two_sided in any::<bool>()
    ) {
        let ci = confidence_interval(&ensemble, 0.95).unwrap();
        let kept = select_centers(&centers, &ci, two_sided);
        prop_assert!(kept.len() <= centers.len());
        prop_assert!(kept.windows(2).all(|w| centers[w[0]] <= centers[w[1]]));
    }
}
