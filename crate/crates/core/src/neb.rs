//! Nudged elastic band search between two fixed minima.
//!
//! The band is a piecewise-linear path `A = p_0, p_1, ..., p_{t-1}, p_t = B`.
//! Each step moves every interior pivot by plain gradient descent on the
//! perpendicular part of the loss gradient plus a spring force along the
//! central-difference tangent. All pivots move from the same snapshot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{evaluate_points, interpolate, profile_barrier};
use crate::objective::LossFunction;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NebOptions {
    /// Number of linear segments `t`; the band has `t - 1` pivots.
    pub segments: usize,
    pub spring: f64,
    pub lr: f64,
    pub steps: usize,
}

impl Default for NebOptions {
    fn default() -> Self {
        Self {
            segments: 16,
            spring: 1.0,
            lr: 0.5,
            steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NebPath {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub pivots: Vec<Vec<f64>>,
    pub spring: f64,
    pub lr: f64,
    /// Loss of each pivot at the start of every step taken so far.
    pub loss_history: Vec<Vec<f64>>,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn neb_init(start: &[f64], end: &[f64], options: &NebOptions) -> Result<NebPath> {
    let t = options.segments;
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "a band needs at least 2 segments, got {t}"
        )));
    }
    if start.len() != end.len() {
        return Err(Error::DimensionMismatch {
            expected: start.len(),
            found: end.len(),
        });
    }
    let pivots = (1..t)
        .map(|i| interpolate(start, end, (t - i) as f64 / t as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(NebPath {
        start: start.to_vec(),
        end: end.to_vec(),
        pivots,
        spring: options.spring,
        lr: options.lr,
        loss_history: Vec::new(),
    })
}

impl NebPath {
    pub fn segments(&self) -> usize {
        self.pivots.len() + 1
    }

    /// Every node of the band, endpoints included.
    pub fn nodes(&self) -> Vec<&[f64]> {
        std::iter::once(self.start.as_slice())
            .chain(self.pivots.iter().map(Vec::as_slice))
            .chain(std::iter::once(self.end.as_slice()))
            .collect()
    }

    /// One synchronous band update.
    pub fn step<F: LossFunction>(&self, loss: &F, rng: &mut SimRng) -> Result<NebPath> {
        if self.start.len() != loss.dim() {
            return Err(Error::DimensionMismatch {
                expected: loss.dim(),
                found: self.start.len(),
            });
        }
        let nodes = self.nodes();
        let base = rng::fork_seed(rng);
        let updates = (1..nodes.len() - 1)
            .into_par_iter()
            .map(|i| {
                let mut stream = rng::child(base, i as u64);
                let (prev, here, next) = (nodes[i - 1], nodes[i], nodes[i + 1]);
                let value = loss.loss(here, &mut stream)?;
                let g = loss.gradient(here, &mut stream)?;
                let chord = sub(next, prev);
                let chord_len = norm(&chord);
                let tangent: Vec<f64> = if chord_len > 0.0 {
                    chord.iter().map(|x| x / chord_len).collect()
                } else {
                    vec![0.0; chord.len()]
                };
                let g_par: f64 = g.iter().zip(&tangent).map(|(a, b)| a * b).sum();
                let stretch = norm(&sub(next, here)) - norm(&sub(here, prev));
                let moved: Vec<f64> = here
                    .iter()
                    .zip(&g)
                    .zip(&tangent)
                    .map(|((x, gi), ti)| {
                        let perpendicular = -(gi - g_par * ti);
                        let spring = self.spring * stretch * ti;
                        x + self.lr * (perpendicular + spring)
                    })
                    .collect();
                Ok((moved, value))
            })
            .collect::<Result<Vec<_>>>()?;
        let (pivots, losses): (Vec<_>, Vec<_>) = updates.into_iter().unzip();
        let mut loss_history = self.loss_history.clone();
        loss_history.push(losses);
        Ok(NebPath {
            start: self.start.clone(),
            end: self.end.clone(),
            pivots,
            spring: self.spring,
            lr: self.lr,
            loss_history,
        })
    }
}

/// Losses at `resolution` evenly spaced points per segment plus the final
/// endpoint: `segments * resolution + 1` values running from `start` to `end`.
pub fn path_profile<F: LossFunction>(
    path: &NebPath,
    loss: &F,
    resolution: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if resolution < 1 {
        return Err(Error::InvalidArgument(
            "profile resolution must be at least 1".into(),
        ));
    }
    let points = profile_points(path, resolution);
    evaluate_points(loss, &points, rng)
}

/// The points sampled by [`path_profile`], with their (segment, local fraction).
pub fn profile_points(path: &NebPath, resolution: usize) -> Vec<Vec<f64>> {
    profile_layout(path.segments(), resolution)
        .into_iter()
        .map(|(segment, local)| {
            let nodes = path.nodes();
            if local == 0.0 {
                nodes[segment].to_vec()
            } else {
                nodes[segment]
                    .iter()
                    .zip(nodes[segment + 1])
                    .map(|(a, b)| a + local * (b - a))
                    .collect()
            }
        })
        .collect()
}

/// `(segment, local fraction)` for every profile point; the last entry is the
/// end node, reported as segment `t` with fraction 0.
pub fn profile_layout(segments: usize, resolution: usize) -> Vec<(usize, f64)> {
    (0..segments)
        .flat_map(|s| (0..resolution).map(move |k| (s, k as f64 / resolution as f64)))
        .chain(std::iter::once((segments, 0.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NebRun {
    pub initial: NebPath,
    pub path: NebPath,
    pub initial_profile: Vec<f64>,
    pub final_profile: Vec<f64>,
    pub initial_barrier: f64,
    pub final_barrier: f64,
    /// Max loss along the band after each step (index 0 = initial band).
    pub barrier_trace: Vec<f64>,
}

impl NebRun {
    pub fn barrier_reduction(&self) -> f64 {
        self.initial_barrier - self.final_barrier
    }
}

/// Applies `steps` band updates and profiles the band before and after.
pub fn neb_run<F: LossFunction>(
    path: &NebPath,
    loss: &F,
    steps: usize,
    profile_resolution: usize,
    rng: &mut SimRng,
) -> Result<NebRun> {
    if steps == 0 {
        return Err(Error::InvalidArgument("NEB needs at least 1 step".into()));
    }
    let profile_seed = rng::fork_seed(rng);
    let initial_profile = path_profile(path, loss, profile_resolution, &mut rng::child(profile_seed, 0))?;
    let mut barrier_trace = vec![max_of(&initial_profile)];
    let mut current = path.clone();
    for step in 0..steps {
        current = current.step(loss, rng)?;
        if step + 1 < steps {
            let p = path_profile(
                &current,
                loss,
                profile_resolution,
                &mut rng::child(profile_seed, step as u64 + 1),
            )?;
            barrier_trace.push(max_of(&p));
        }
    }
    let final_profile = path_profile(
        &current,
        loss,
        profile_resolution,
        &mut rng::child(profile_seed, steps as u64),
    )?;
    barrier_trace.push(max_of(&final_profile));
    Ok(NebRun {
        initial: path.clone(),
        initial_barrier: profile_barrier(&initial_profile),
        final_barrier: profile_barrier(&final_profile),
        path: current,
        initial_profile,
        final_profile,
        barrier_trace,
    })
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NebOutcome {
    FlatLowBarrier,
    RoutedAround,
    WideSaddle,
    Failed,
}

impl std::fmt::Display for NebOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NebOutcome::FlatLowBarrier => "FLAT_LOW_BARRIER",
            NebOutcome::RoutedAround => "ROUTED_AROUND",
            NebOutcome::WideSaddle => "WIDE_SADDLE",
            NebOutcome::Failed => "FAILED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeThresholds {
    /// Raw barrier below which the initial straight line counts as flat.
    pub flat: f64,
    /// Final/initial barrier ratio below which the band routed around the barrier.
    pub ratio: f64,
}

impl Default for OutcomeThresholds {
    fn default() -> Self {
        Self {
            flat: 0.01,
            ratio: 0.5,
        }
    }
}

/// Fraction of profile points above half of the barrier height.
fn saddle_width(profile: &[f64]) -> f64 {
    let floor = profile[0].min(profile[profile.len() - 1]);
    let level = floor + 0.5 * profile_barrier(profile);
    profile.iter().filter(|l| **l > level).count() as f64 / profile.len() as f64
}

pub fn classify_neb_outcome(
    initial: &[f64],
    final_profile: &[f64],
    thresholds: &OutcomeThresholds,
) -> Result<NebOutcome> {
    if initial.len() != final_profile.len() || initial.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: initial.len(),
            found: final_profile.len(),
        });
    }
    let before = profile_barrier(initial);
    let after = profile_barrier(final_profile);
    Ok(if before < thresholds.flat {
        NebOutcome::FlatLowBarrier
    } else if after < thresholds.ratio * before {
        NebOutcome::RoutedAround
    } else if after < before && saddle_width(final_profile) > saddle_width(initial) {
        NebOutcome::WideSaddle
    } else {
        NebOutcome::Failed
    })
}
