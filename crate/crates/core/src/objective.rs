//! GHZ target, Gaussian-mixture MMD loss and parameter-shift gradients.
//!
//! The loss is evaluated in closed form over the full `2^n` support:
//! `L = (q - p)^T K (q - p)` with
//! `K[x][y] = mean_sigma exp(-H(x, y) / (2 sigma^2))`, `H` the Hamming distance.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::CircuitSpec;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::simulator::{ProbDist, Shots, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidths: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel needs at least one bandwidth".into(),
            ));
        }
        if let Some(bad) = self
            .bandwidths
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::InvalidBandwidth(*bad));
        }
        Ok(())
    }
}

/// Dense kernel matrix over the basis states of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n_qubits: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n_qubits: usize, spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        let dim = 1usize << n_qubits;
        // Only n + 1 distinct Hamming distances exist.
        let by_distance: Vec<f64> = (0..=n_qubits)
            .map(|h| {
                spec.bandwidths
                    .iter()
                    .map(|s| (-(h as f64) / (2.0 * s * s)).exp())
                    .sum::<f64>()
                    / spec.bandwidths.len() as f64
            })
            .collect();
        let mut entries = vec![0.0; dim * dim];
        for x in 0..dim {
            for y in 0..dim {
                entries[x * dim + y] = by_distance[(x ^ y).count_ones() as usize];
            }
        }
        Ok(Self {
            n_qubits,
            dim,
            entries,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.dim + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.dim..(x + 1) * self.dim]
    }

    /// `K v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|x| self.row(x).iter().zip(v).map(|(k, a)| k * a).sum())
            .collect()
    }

    /// `a^T K b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(self.apply(b))
            .map(|(x, kb)| x * kb)
            .sum()
    }
}

/// The GHZ measurement distribution plus the `|GHZ+>`, `|GHZ->` reference states.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDist {
    pub dist: ProbDist,
    pub ghz_plus: StateVector,
    pub ghz_minus: StateVector,
}

pub fn ghz_target(n_qubits: usize) -> Result<TargetDist> {
    if n_qubits < 2 {
        return Err(Error::InvalidWidth(n_qubits));
    }
    let dim = 1usize << n_qubits;
    let mut probs = vec![0.0; dim];
    probs[0] = 0.5;
    probs[dim - 1] = 0.5;
    let ghz = |sign: f64| {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        amps[dim - 1] = Complex64::new(sign * FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(n_qubits, amps)
    };
    Ok(TargetDist {
        dist: ProbDist::exact(n_qubits, probs)?,
        ghz_plus: ghz(1.0)?,
        ghz_minus: ghz(-1.0)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub shots: Shots,
}

fn shots_of(d: &ProbDist) -> Shots {
    match d.kind() {
        crate::simulator::DistKind::Exact => Shots::Exact,
        crate::simulator::DistKind::Empirical { shots } => Shots::Finite(shots),
    }
}

pub fn mmd_loss(q: &ProbDist, p: &ProbDist, kernel: &KernelMatrix) -> Result<LossValue> {
    if q.n_qubits() != p.n_qubits() || q.n_qubits() != kernel.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: 1 << kernel.n_qubits(),
            found: if q.n_qubits() != kernel.n_qubits() {
                q.probs().len()
            } else {
                p.probs().len()
            },
        });
    }
    let diff: Vec<f64> = q.probs().iter().zip(p.probs()).map(|(a, b)| a - b).collect();
    // Clamp rounding noise; K is positive semi-definite.
    let value = kernel.bilinear(&diff, &diff).max(0.0);
    let shots = match (shots_of(q), shots_of(p)) {
        (Shots::Exact, s) | (s, Shots::Exact) => s,
        (Shots::Finite(a), Shots::Finite(b)) => Shots::Finite(a.min(b)),
    };
    Ok(LossValue { value, shots })
}

/// Label of the GHZ state with the larger overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GhzLabel {
    #[serde(rename = "GHZ+")]
    Plus,
    #[serde(rename = "GHZ-")]
    Minus,
}

impl std::fmt::Display for GhzLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GhzLabel::Plus => write!(f, "GHZ+"),
            GhzLabel::Minus => write!(f, "GHZ-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhzMatch {
    pub label: GhzLabel,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
}

/// Fidelities `|<GHZ+-|psi>|^2`; ties go to GHZ+.
pub fn closest_ghz(state: &StateVector) -> Result<GhzMatch> {
    let target = ghz_target(state.n_qubits())?;
    let fidelity_plus = target.ghz_plus.inner(state)?.norm_sqr();
    let fidelity_minus = target.ghz_minus.inner(state)?.norm_sqr();
    let label = if fidelity_minus > fidelity_plus {
        GhzLabel::Minus
    } else {
        GhzLabel::Plus
    };
    Ok(GhzMatch {
        label,
        fidelity_plus,
        fidelity_minus,
    })
}

/// A scalar loss over a parameter vector with a stochastic gradient oracle.
///
/// Implementations must be pure given the RNG stream so that parallel
/// evaluation with derived streams is reproducible.
pub trait LossFunction: Sync {
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64], rng: &mut SimRng) -> Result<f64>;

    fn gradient(&self, params: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;

    /// Shot count behind each evaluation.
    fn shots(&self) -> Shots {
        Shots::Exact
    }
}

/// Exact-mode gradient components below this are rounding residue and are
/// flushed to zero, otherwise Adam's normalization amplifies them into steps.
pub const EXACT_GRADIENT_FLOOR: f64 = 1e-12;

/// MMD loss of a QCBM against the GHZ target at a fixed shot budget.
#[derive(Debug, Clone)]
pub struct QcbmObjective {
    spec: CircuitSpec,
    target: TargetDist,
    kernel: KernelMatrix,
    shots: Shots,
}

impl QcbmObjective {
    pub fn new(spec: CircuitSpec, kernel: &KernelSpec, shots: Shots) -> Result<Self> {
        spec.validate()?;
        if shots == Shots::Finite(0) {
            return Err(Error::InvalidShots);
        }
        Ok(Self {
            spec,
            target: ghz_target(spec.n_qubits)?,
            kernel: KernelMatrix::new(spec.n_qubits, kernel)?,
            shots,
        })
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn target(&self) -> &TargetDist {
        &self.target
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    /// Same circuit, target and kernel at a different shot budget.
    pub fn with_shots(&self, shots: Shots) -> Self {
        Self {
            shots,
            ..self.clone()
        }
    }

    pub fn loss_at(&self, params: &[f64], rng: &mut SimRng) -> Result<LossValue> {
        let q = self.spec.sample_qcbm(params, self.shots, rng)?;
        mmd_loss(&q, &self.target.dist, &self.kernel)
    }

    pub fn exact_loss(&self, params: &[f64]) -> Result<f64> {
        let q = self.spec.prepare_state(params)?.measure_exact();
        Ok(mmd_loss(&q, &self.target.dist, &self.kernel)?.value)
    }

    /// Parameter-shift gradient of the loss.
    ///
    /// `q` is drawn at the unshifted point first; each shifted distribution
    /// `Q(theta +- pi/2 e_j)` then gets its own stream forked from `rng`.
    pub fn parameter_shift_gradient(&self, params: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let q = self.spec.sample_qcbm(params, self.shots, rng)?;
        let diff: Vec<f64> = q
            .probs()
            .iter()
            .zip(self.target.dist.probs())
            .map(|(a, b)| a - b)
            .collect();
        let k_diff = self.kernel.apply(&diff);
        let base = rng::fork_seed(rng);
        let floor = if self.shots.is_exact() {
            EXACT_GRADIENT_FLOOR
        } else {
            0.0
        };
        (0..params.len())
            .into_par_iter()
            .map(|j| {
                let mut shifted = params.to_vec();
                shifted[j] = params[j] + FRAC_PI_2;
                let plus = self
                    .spec
                    .sample_qcbm(&shifted, self.shots, &mut rng::child(base, 2 * j as u64))?;
                shifted[j] = params[j] - FRAC_PI_2;
                let minus = self
                    .spec
                    .sample_qcbm(&shifted, self.shots, &mut rng::child(base, 2 * j as u64 + 1))?;
                // dL/dtheta_j = 2 (q - p)^T K dq/dtheta_j, dq/dtheta_j = (Q+ - Q-) / 2
                let g: f64 = plus
                    .probs()
                    .iter()
                    .zip(minus.probs())
                    .zip(&k_diff)
                    .map(|((a, b), kd)| (a - b) * kd)
                    .sum();
                Ok(if g.abs() < floor { 0.0 } else { g })
            })
            .collect()
    }
}

impl LossFunction for QcbmObjective {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &[f64], rng: &mut SimRng) -> Result<f64> {
        Ok(self.loss_at(params, rng)?.value)
    }

    fn gradient(&self, params: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.parameter_shift_gradient(params, rng)
    }

    fn shots(&self) -> Shots {
        self.shots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{Layout, Parameterization};
    use crate::simulator::Axis;

    fn delta(n: usize, i: usize) -> ProbDist {
        let mut p = vec![0.0; 1 << n];
        p[i] = 1.0;
        ProbDist::exact(n, p).unwrap()
    }

    #[test]
    fn ghz_target_shapes() {
        let t = ghz_target(2).unwrap();
        assert_eq!(t.dist.probs(), &[0.5, 0.0, 0.0, 0.5]);
        let t6 = ghz_target(6).unwrap();
        assert_eq!(t6.dist.probs()[0], 0.5);
        assert_eq!(t6.dist.probs()[63], 0.5);
        assert_eq!(t6.dist.probs().iter().filter(|p| **p > 0.0).count(), 2);
        assert!((ghz_target(4).unwrap().dist.entropy_bits() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_diagonal_is_one() {
        let k = KernelMatrix::new(3, &KernelSpec::default()).unwrap();
        for x in 0..8 {
            assert!((k.get(x, x) - 1.0).abs() < 1e-15);
            for y in 0..8 {
                assert_eq!(k.get(x, y), k.get(y, x));
            }
        }
    }

    #[test]
    fn kernel_rejects_bad_bandwidth() {
        let bad = KernelSpec {
            bandwidths: vec![1.0, 0.0],
        };
        assert_eq!(KernelMatrix::new(2, &bad), Err(Error::InvalidBandwidth(0.0)));
        let empty = KernelSpec { bandwidths: vec![] };
        assert!(KernelMatrix::new(2, &empty).is_err());
    }

    #[test]
    fn mmd_single_bandwidth_closed_form() {
        let k = KernelMatrix::new(2, &KernelSpec { bandwidths: vec![1.0] }).unwrap();
        // Brute-force double loop over the 4-state support.
        let (q, p) = (delta(2, 0), delta(2, 3));
        let mut brute = 0.0;
        for x in 0..4 {
            for y in 0..4 {
                let h = ((x ^ y) as u32).count_ones() as f64;
                let kxy = (-h / 2.0).exp();
                brute += (q.probs()[x] - p.probs()[x]) * kxy * (q.probs()[y] - p.probs()[y]);
            }
        }
        let v = mmd_loss(&q, &p, &k).unwrap().value;
        assert!((v - 1.2642411176571153).abs() < 1e-14);
        assert!((v - brute).abs() < 1e-14);
        assert_eq!(mmd_loss(&p, &q, &k).unwrap().value, v);
        assert_eq!(mmd_loss(&q, &q, &k).unwrap().value, 0.0);
    }

    #[test]
    fn mmd_dimension_mismatch() {
        let k = KernelMatrix::new(2, &KernelSpec::default()).unwrap();
        assert!(matches!(
            mmd_loss(&delta(3, 0), &delta(2, 0), &k),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mmd_reports_provenance() {
        let k = KernelMatrix::new(2, &KernelSpec::default()).unwrap();
        let q = ProbDist::from_counts(2, &[10, 0, 0, 6]).unwrap();
        let v = mmd_loss(&q, &ghz_target(2).unwrap().dist, &k).unwrap();
        assert_eq!(v.shots, Shots::Finite(16));
    }

    #[test]
    fn zero_params_loss_matches_brute_force() {
        // 0.5 (1 - K[0][3]), K[0][3] = mean_sigma exp(-1 / sigma^2)
        let spec = CircuitSpec::new(2, 1, Parameterization::Sgp, Layout::Pc).unwrap();
        let obj = QcbmObjective::new(spec, &KernelSpec::default(), Shots::Exact).unwrap();
        let v = obj.exact_loss(&[0.0; 4]).unwrap();
        assert!((v - 0.2369488842568679).abs() < 1e-14, "{v}");
    }

    #[test]
    fn ghz_witness_has_zero_loss_and_gradient() {
        let spec = CircuitSpec::new(2, 1, Parameterization::Sgp, Layout::Pc).unwrap();
        let obj = QcbmObjective::new(spec, &KernelSpec::default(), Shots::Exact).unwrap();
        let theta = [0.0, FRAC_PI_2, 0.0, 0.0];
        let mut r = rng::from_seed(0);
        assert!(obj.loss_at(&theta, &mut r).unwrap().value < 1e-12);
        for g in obj.parameter_shift_gradient(&theta, &mut r).unwrap() {
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_at_l0_matches_closed_form() {
        // SGP n=2 L=0: q = (c0 c1, s0 c1, c0 s1, s0 s1), c_i = cos^2(t_i/2), s_i = sin^2(t_i/2).
        let spec = CircuitSpec::new(2, 0, Parameterization::Sgp, Layout::None).unwrap();
        let kspec = KernelSpec::default();
        let obj = QcbmObjective::new(spec, &kspec, Shots::Exact).unwrap();
        let k = KernelMatrix::new(2, &kspec).unwrap();
        let p = [0.5, 0.0, 0.0, 0.5];
        for theta in [[0.0f64, 0.0], [0.4, 1.9], [2.5, -0.7]] {
            let (c0, s0) = ((theta[0] / 2.0).cos().powi(2), (theta[0] / 2.0).sin().powi(2));
            let (c1, s1) = ((theta[1] / 2.0).cos().powi(2), (theta[1] / 2.0).sin().powi(2));
            let q = [c0 * c1, s0 * c1, c0 * s1, s0 * s1];
            // d(cos^2(t/2))/dt = -sin(t)/2, d(sin^2(t/2))/dt = sin(t)/2
            let (d0, d1) = (theta[0].sin() / 2.0, theta[1].sin() / 2.0);
            let dq0 = [-d0 * c1, d0 * c1, -d0 * s1, d0 * s1];
            let dq1 = [-c0 * d1, -s0 * d1, c0 * d1, s0 * d1];
            let diff: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
            let expect = [2.0 * k.bilinear(&diff, &dq0), 2.0 * k.bilinear(&diff, &dq1)];
            let got = obj
                .parameter_shift_gradient(&theta, &mut rng::from_seed(1))
                .unwrap();
            for (g, e) in got.iter().zip(expect) {
                assert!((g - e).abs() < 1e-9, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn closest_ghz_labels() {
        let t = ghz_target(3).unwrap();
        let m = closest_ghz(&t.ghz_plus).unwrap();
        assert_eq!(m.label, GhzLabel::Plus);
        assert!((m.fidelity_plus - 1.0).abs() < 1e-12 && m.fidelity_minus.abs() < 1e-12);
        let m = closest_ghz(&t.ghz_minus).unwrap();
        assert_eq!(m.label, GhzLabel::Minus);
        assert!((m.fidelity_minus - 1.0).abs() < 1e-12 && m.fidelity_plus.abs() < 1e-12);
        let z = StateVector::zero(3).unwrap();
        let m = closest_ghz(&z).unwrap();
        assert_eq!(m.label, GhzLabel::Plus);
        assert!((m.fidelity_plus - 0.5).abs() < 1e-12);
        assert!((m.fidelity_minus - 0.5).abs() < 1e-12);

        // Phase on |11> flips the label.
        let mut s = StateVector::zero(2).unwrap();
        s.apply_rotation(1, Axis::Y, FRAC_PI_2).unwrap();
        s.apply_cnot(1, 0).unwrap();
        s.apply_rotation(0, Axis::Z, std::f64::consts::PI).unwrap();
        assert_eq!(closest_ghz(&s).unwrap().label, GhzLabel::Minus);
    }
}
