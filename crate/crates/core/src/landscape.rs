//! Straight-line barrier scans and 2-D plane projections of the loss.
//!
//! Interpolation follows `theta(alpha) = alpha * theta_A + (1 - alpha) * theta_B`,
//! so `alpha = 1` is `theta_A`. Barrier heights are reported raw and in units
//! of the shot-noise scale `1 / sqrt(n_s)`.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{GhzMatch, LossFunction, QcbmObjective, closest_ghz};
use crate::rng::{self, SimRng};
use crate::simulator::Shots;

/// Shot count assumed when normalizing barriers from exact-mode scans.
pub const DEFAULT_LANDSCAPE_SHOTS: u32 = 8192;

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn interpolate(theta_a: &[f64], theta_b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_same_len(theta_a, theta_b)?;
    Ok(theta_a
        .iter()
        .zip(theta_b)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect())
}

/// `sqrt(n_s)` for the normalized barrier metric.
pub fn shot_scale(shots: Shots) -> f64 {
    f64::from(shots.count().unwrap_or(DEFAULT_LANDSCAPE_SHOTS)).sqrt()
}

/// Evaluates `loss` at every point, one derived stream per point.
pub fn evaluate_points<F: LossFunction>(
    loss: &F,
    points: &[Vec<f64>],
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let base = rng::fork_seed(rng);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| loss.loss(p, &mut rng::child(base, i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierProfile {
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
    /// Evenly spaced from 0 (`theta_B`) to 1 (`theta_A`).
    pub alphas: Vec<f64>,
    pub losses: Vec<f64>,
    pub shots: Shots,
    /// `max loss - min(L_A, L_B)`.
    pub raw_barrier: f64,
    /// `raw_barrier * sqrt(n_s)`.
    pub alpha_metric: f64,
}

/// Raw barrier of a loss profile: its maximum minus the lower endpoint.
pub fn profile_barrier(losses: &[f64]) -> f64 {
    match (losses.first(), losses.last()) {
        (Some(first), Some(last)) => {
            let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max - first.min(*last)
        }
        _ => 0.0,
    }
}

pub fn barrier_scan<F: LossFunction>(
    loss: &F,
    theta_a: &[f64],
    theta_b: &[f64],
    resolution: usize,
    rng: &mut SimRng,
) -> Result<BarrierProfile> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "barrier scan needs at least 2 points, got {resolution}"
        )));
    }
    check_same_len(theta_a, theta_b)?;
    if theta_a.len() != loss.dim() {
        return Err(Error::DimensionMismatch {
            expected: loss.dim(),
            found: theta_a.len(),
        });
    }
    let alphas: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / (resolution - 1) as f64)
        .collect();
    let points = alphas
        .iter()
        .map(|&a| interpolate(theta_a, theta_b, a))
        .collect::<Result<Vec<_>>>()?;
    let losses = evaluate_points(loss, &points, rng)?;
    let raw_barrier = profile_barrier(&losses);
    Ok(BarrierProfile {
        theta_a: theta_a.to_vec(),
        theta_b: theta_b.to_vec(),
        alphas,
        losses,
        shots: loss.shots(),
        raw_barrier,
        alpha_metric: raw_barrier * shot_scale(loss.shots()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    All,
    /// `k` distinct pairs drawn uniformly without replacement.
    Sample(usize),
}

impl std::str::FromStr for PairPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(PairPolicy::All);
        }
        s.strip_prefix("sample:")
            .and_then(|k| k.parse().ok())
            .map(PairPolicy::Sample)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown pair policy `{s}`")))
    }
}

/// All pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn all_pairs(count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .flat_map(|i| (i + 1..count).map(move |j| (i, j)))
        .collect()
}

pub fn select_pairs(count: usize, policy: PairPolicy, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let pairs = all_pairs(count);
    match policy {
        PairPolicy::All => pairs,
        PairPolicy::Sample(k) if k >= pairs.len() => pairs,
        PairPolicy::Sample(k) => {
            let mut picked: Vec<usize> = sample(rng, pairs.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| pairs[i]).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBarrier {
    pub i: usize,
    pub j: usize,
    pub profile: BarrierProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseBarriers {
    pub pairs: Vec<PairBarrier>,
    /// Index into `pairs` of the lowest normalized barrier.
    pub lowest: usize,
    pub min_alpha_metric: f64,
    pub min_raw_barrier: f64,
}

pub fn pairwise_barriers<F: LossFunction>(
    loss: &F,
    minima: &[Vec<f64>],
    policy: PairPolicy,
    resolution: usize,
    rng: &mut SimRng,
) -> Result<PairwiseBarriers> {
    if minima.len() < 2 {
        return Err(Error::InsufficientMinima(minima.len()));
    }
    let selected = select_pairs(minima.len(), policy, rng);
    if selected.is_empty() {
        return Err(Error::InvalidArgument("pair policy selected no pairs".into()));
    }
    let base = rng::fork_seed(rng);
    let pairs = selected
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let mut stream = rng::child(base, k as u64);
            Ok(PairBarrier {
                i,
                j,
                profile: barrier_scan(loss, &minima[i], &minima[j], resolution, &mut stream)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lowest = pairs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.profile.alpha_metric.total_cmp(&b.profile.alpha_metric))
        .map(|(k, _)| k)
        .expect("non-empty");
    Ok(PairwiseBarriers {
        min_alpha_metric: pairs[lowest].profile.alpha_metric,
        min_raw_barrier: pairs[lowest].profile.raw_barrier,
        lowest,
        pairs,
    })
}

/// Orthonormal frame through three parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneBasis {
    pub origin: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub coord_b: (f64, f64),
    pub coord_c: (f64, f64),
}

/// Relative tolerance below which inputs are treated as coincident or collinear.
pub const PLANE_TOLERANCE: f64 = 1e-8;

pub fn plane_basis(theta_a: &[f64], theta_b: &[f64], theta_c: &[f64]) -> Result<PlaneBasis> {
    check_same_len(theta_a, theta_b)?;
    check_same_len(theta_a, theta_c)?;
    let ab: Vec<f64> = theta_b.iter().zip(theta_a).map(|(b, a)| b - a).collect();
    let ac: Vec<f64> = theta_c.iter().zip(theta_a).map(|(c, a)| c - a).collect();
    let len_ab = norm(&ab);
    if len_ab <= PLANE_TOLERANCE {
        return Err(Error::DegeneratePlane("theta_A and theta_B coincide".into()));
    }
    let w1: Vec<f64> = ab.iter().map(|x| x / len_ab).collect();
    let along = dot(&ac, &w1);
    let residual: Vec<f64> = ac.iter().zip(&w1).map(|(c, w)| c - along * w).collect();
    let len_res = norm(&residual);
    let scale = len_ab.max(norm(&ac));
    if len_res <= PLANE_TOLERANCE * scale.max(1.0) {
        return Err(Error::DegeneratePlane(
            "theta_C is collinear with theta_A and theta_B".into(),
        ));
    }
    let w2: Vec<f64> = residual.iter().map(|x| x / len_res).collect();
    let across = dot(&ac, &w2);
    Ok(PlaneBasis {
        origin: theta_a.to_vec(),
        coord_b: (len_ab, 0.0),
        coord_c: (along, across),
        w1,
        w2,
    })
}

impl PlaneBasis {
    /// `origin + u w1 + v w2`.
    pub fn point(&self, u: f64, v: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.w1)
            .zip(&self.w2)
            .map(|((o, a), b)| o + u * a + v * b)
            .collect()
    }

    /// Window `[lo * s, hi * s]` on both axes, `s` the extent of the anchor triangle.
    pub fn window(&self, lo: f64, hi: f64) -> ((f64, f64), (f64, f64)) {
        let s = self
            .coord_b
            .0
            .abs()
            .max(self.coord_c.0.abs())
            .max(self.coord_c.1.abs());
        ((lo * s, hi * s), (lo * s, hi * s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub name: String,
    pub coords: (f64, f64),
    /// Loss at the anchor's planar reconstruction.
    pub loss: f64,
    pub ghz: GhzMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub basis: PlaneBasis,
    pub u_values: Vec<f64>,
    pub v_values: Vec<f64>,
    /// Row-major over `v`, then `u`: `losses[iv * resolution + iu]`.
    pub losses: Vec<f64>,
    pub resolution: usize,
    pub shots: Shots,
    pub anchors: Vec<Anchor>,
}

impl PlaneGrid {
    pub fn loss(&self, iu: usize, iv: usize) -> f64 {
        self.losses[iv * self.resolution + iu]
    }
}

fn linspace(range: (f64, f64), count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (count - 1) as f64)
        .collect()
}

pub fn grid_losses(
    objective: &QcbmObjective,
    basis: &PlaneBasis,
    u_range: (f64, f64),
    v_range: (f64, f64),
    resolution: usize,
    rng: &mut SimRng,
) -> Result<PlaneGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    if basis.origin.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: basis.origin.len(),
        });
    }
    let u_values = linspace(u_range, resolution);
    let v_values = linspace(v_range, resolution);
    let points: Vec<Vec<f64>> = v_values
        .iter()
        .flat_map(|&v| u_values.iter().map(move |&u| (u, v)))
        .map(|(u, v)| basis.point(u, v))
        .collect();
    let losses = evaluate_points(objective, &points, rng)?;

    let named = [
        ("A", (0.0, 0.0)),
        ("B", basis.coord_b),
        ("C", basis.coord_c),
    ];
    let anchor_points: Vec<Vec<f64>> = named.iter().map(|(_, (u, v))| basis.point(*u, *v)).collect();
    let anchor_losses = evaluate_points(objective, &anchor_points, rng)?;
    let anchors = named
        .iter()
        .zip(&anchor_points)
        .zip(anchor_losses)
        .map(|(((name, coords), p), loss)| {
            Ok(Anchor {
                name: name.to_string(),
                coords: *coords,
                loss,
                ghz: closest_ghz(&objective.spec().prepare_state(p)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaneGrid {
        basis: basis.clone(),
        u_values,
        v_values,
        losses,
        resolution,
        shots: objective.shots(),
        anchors,
    })
}
