//! Representative minima of a training ensemble.
//!
//! Final parameter vectors are clustered with flat-kernel mean shift using a
//! k-nearest-neighbour bandwidth estimate, then the centers are filtered by a
//! Student-t confidence interval on the ensemble's final losses.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::objective::{GhzLabel, QcbmObjective, closest_ghz};
use crate::rng::{self, SimRng};
use crate::simulator::Shots;

pub const MAX_ITERATIONS: usize = 300;
pub const CONVERGENCE_FRACTION: f64 = 1e-3;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InsufficientData("no points".into()))?;
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }
    Ok(dim)
}

/// Mean over points of the distance to their `k`-th nearest neighbour,
/// `k = max(1, floor(quantile * N))`, excluding the point itself.
pub fn estimate_bandwidth(points: &[Vec<f64>], quantile: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "bandwidth estimation needs at least 2 points, got {}",
            points.len()
        )));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )));
    }
    check_points(points)?;
    let n = points.len();
    let k = ((quantile * n as f64).floor() as usize).clamp(1, n - 1);
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .sum();
    let bandwidth = total / n as f64;
    if bandwidth <= 0.0 {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    Ok(bandwidth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub bandwidth: f64,
    /// Ordered by in-radius support (descending), then lexicographically.
    pub centers: Vec<Vec<f64>>,
    /// Number of input points within `bandwidth` of each center.
    pub support: Vec<usize>,
    /// Number of input points assigned to each center.
    pub members: Vec<usize>,
    /// Nearest center of every input point, in input order.
    pub assignments: Vec<usize>,
}

/// Flat-kernel mean shift seeded at every point.
///
/// Points are processed in lexicographic order so that the result does not
/// depend on the input permutation.
pub fn mean_shift(points: &[Vec<f64>], bandwidth: f64) -> Result<MeanShift> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    let dim = check_points(points)?;
    let mut canonical: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    canonical.sort_by(|a, b| lexicographic(a, b));
    let radius_sq = bandwidth * bandwidth;
    let tolerance = CONVERGENCE_FRACTION * bandwidth;

    fn within<'a>(
        points: &'a [&'a [f64]],
        x: &'a [f64],
        radius_sq: f64,
    ) -> impl Iterator<Item = &'a [f64]> + 'a {
        points
            .iter()
            .copied()
            .filter(move |p| squared_distance(p, x) <= radius_sq)
    }

    let mut converged: Vec<(Vec<f64>, usize)> = canonical
        .par_iter()
        .map(|seed| {
            let mut x = seed.to_vec();
            for _ in 0..MAX_ITERATIONS {
                let mut sum = vec![0.0; dim];
                let mut count = 0usize;
                for p in within(&canonical, &x, radius_sq) {
                    for (s, v) in sum.iter_mut().zip(p.iter()) {
                        *s += v;
                    }
                    count += 1;
                }
                if count == 0 {
                    break;
                }
                let next: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
                let shift = distance(&next, &x);
                x = next;
                if shift < tolerance {
                    break;
                }
            }
            let support = within(&canonical, &x, radius_sq).count();
            (x, support)
        })
        .collect();

    converged.sort_by(|(xa, sa), (xb, sb)| sb.cmp(sa).then_with(|| lexicographic(xa, xb)));
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut support = Vec::new();
    for (x, s) in converged {
        if centers.iter().all(|c| squared_distance(c, &x) >= radius_sq) {
            centers.push(x);
            support.push(s);
        }
    }

    let assignments: Vec<usize> = points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| squared_distance(p, a).total_cmp(&squared_distance(p, b)))
                .map(|(i, _)| i)
                .expect("at least one center")
        })
        .collect();
    let mut members = vec![0; centers.len()];
    for &a in &assignments {
        members[a] += 1;
    }
    Ok(MeanShift {
        bandwidth,
        centers,
        support,
        members,
        assignments,
    })
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    let tail = 0.5 * beta_reg(0.5 * dof, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile `p` of Student's t, by bisection on the incomplete-beta CDF.
pub fn student_t_quantile(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || dof.is_nan() || dof <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t quantile needs p in (0, 1) and dof > 0, got p={p}, dof={dof}"
        )));
    }
    if p < 0.5 {
        return Ok(-student_t_quantile(1.0 - p, dof)?);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while student_t_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub std_dev: f64,
    pub t_critical: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: f64,
}

impl ConfidenceInterval {
    /// Zero spread up to rounding of the mean.
    pub fn is_degenerate(&self) -> bool {
        self.std_dev <= 8.0 * f64::EPSILON * self.mean.abs().max(f64::MIN_POSITIVE)
    }
}

/// Two-sided t interval for the mean of `values`.
pub fn confidence_interval(values: &[f64], confidence: f64) -> Result<ConfidenceInterval> {
    let count = values.len();
    if count < 2 {
        return Err(Error::InsufficientData(format!(
            "confidence interval needs at least 2 values, got {count}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let n = count as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_dev = var.sqrt();
    let t_critical = student_t_quantile(0.5 + 0.5 * confidence, n - 1.0)?;
    let half = t_critical * std_dev / n.sqrt();
    Ok(ConfidenceInterval {
        mean,
        std_dev,
        t_critical,
        lower: mean - half,
        upper: mean + half,
        count,
        confidence,
    })
}

/// Indices of centers whose loss passes the interval test, sorted by loss.
///
/// One-sided keeps `loss <= upper`; two-sided keeps `lower <= loss <= upper`.
/// A zero-variance interval keeps every center.
pub fn select_centers(center_losses: &[f64], ci: &ConfidenceInterval, two_sided: bool) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..center_losses.len())
        .filter(|&i| {
            let l = center_losses[i];
            ci.is_degenerate() || (l <= ci.upper && (!two_sided || l >= ci.lower))
        })
        .collect();
    kept.sort_by(|&a, &b| center_losses[a].total_cmp(&center_losses[b]).then(a.cmp(&b)));
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub quantile: f64,
    pub confidence: f64,
    pub two_sided: bool,
    /// Shots used to re-evaluate each center's loss.
    pub center_shots: Shots,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            quantile: 0.1,
            confidence: 0.95,
            two_sided: false,
            center_shots: Shots::Finite(8192),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterRecord {
    pub params: Vec<f64>,
    pub members: usize,
    pub support: usize,
    /// Loss re-evaluated at the center coordinates.
    pub loss: f64,
    /// Mean final training loss of the runs assigned to this center.
    pub member_mean_loss: Option<f64>,
    pub ghz: GhzLabel,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub bandwidth: f64,
    pub options: ClusterOptions,
    /// All mean-shift centers (`m`).
    pub centers: Vec<CenterRecord>,
    /// Indices into `centers` that survived down-selection (`m'`), by ascending loss.
    pub downselected: Vec<usize>,
    pub ci: ConfidenceInterval,
    pub degenerate: bool,
}

impl ClusterSummary {
    pub fn m(&self) -> usize {
        self.centers.len()
    }

    pub fn m_prime(&self) -> usize {
        self.downselected.len()
    }

    /// Parameters of the down-selected minima, in `downselected` order.
    pub fn minima(&self) -> Vec<Vec<f64>> {
        self.downselected
            .iter()
            .map(|&i| self.centers[i].params.clone())
            .collect()
    }
}

/// Re-evaluates each center's loss on its own derived stream.
pub fn center_losses(
    centers: &[Vec<f64>],
    objective: &QcbmObjective,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let base = rng::fork_seed(rng);
    centers
        .par_iter()
        .enumerate()
        .map(|(i, c)| Ok(objective.loss_at(c, &mut rng::child(base, i as u64))?.value))
        .collect()
}

/// Full clustering pipeline over an ensemble's final parameters and losses.
/// The kNN bandwidth, or for ensembles whose points all sit on exact
/// duplicates, half the smallest nonzero separation (1 if every point coincides).
pub fn cluster_bandwidth(points: &[Vec<f64>], quantile: f64) -> Result<f64> {
    match estimate_bandwidth(points, quantile) {
        Err(Error::InvalidBandwidth(_)) => {
            let closest = points
                .iter()
                .enumerate()
                .flat_map(|(i, p)| points[i + 1..].iter().map(move |q| distance(p, q)))
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min);
            Ok(if closest.is_finite() { 0.5 * closest } else { 1.0 })
        }
        other => other,
    }
}

pub fn summarize(
    final_params: &[Vec<f64>],
    final_losses: &[f64],
    objective: &QcbmObjective,
    options: &ClusterOptions,
    rng: &mut SimRng,
) -> Result<ClusterSummary> {
    if final_params.len() != final_losses.len() {
        return Err(Error::DimensionMismatch {
            expected: final_params.len(),
            found: final_losses.len(),
        });
    }
    let bandwidth = cluster_bandwidth(final_params, options.quantile)?;
    let clusters = mean_shift(final_params, bandwidth)?;
    let ci = confidence_interval(final_losses, options.confidence)?;
    let evaluator = objective.with_shots(options.center_shots);
    let losses = center_losses(&clusters.centers, &evaluator, rng)?;
    let downselected = select_centers(&losses, &ci, options.two_sided);

    let mut member_sum = vec![0.0; clusters.centers.len()];
    for (&a, l) in clusters.assignments.iter().zip(final_losses) {
        member_sum[a] += l;
    }
    let centers = clusters
        .centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let ghz = closest_ghz(&objective.spec().prepare_state(c)?)?;
            Ok(CenterRecord {
                params: c.clone(),
                members: clusters.members[i],
                support: clusters.support[i],
                loss: losses[i],
                member_mean_loss: (clusters.members[i] > 0)
                    .then(|| member_sum[i] / clusters.members[i] as f64),
                ghz: ghz.label,
                fidelity_plus: ghz.fidelity_plus,
                fidelity_minus: ghz.fidelity_minus,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterSummary {
        bandwidth,
        options: *options,
        centers,
        downselected,
        degenerate: ci.is_degenerate(),
        ci,
    })
}
