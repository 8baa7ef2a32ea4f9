//! Dense statevector simulation of single-qubit Pauli rotations and CNOTs.
//!
//! Basis indices are little-endian: qubit 0 is the least-significant bit.
//! Rotations follow the half-angle convention `R_A(phi) = exp(-i phi A / 2)`.

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Number of measurement shots used to estimate a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    /// Infinite-shot limit: the Born-rule distribution itself.
    Exact,
    Finite(u32),
}

impl Shots {
    pub fn count(self) -> Option<u32> {
        match self {
            Shots::Exact => None,
            Shots::Finite(n) => Some(n),
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Shots::Exact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Exact,
    Empirical { shots: u32 },
}

/// Probability vector over the `2^n` computational basis states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    n_qubits: usize,
    probs: Vec<f64>,
    kind: DistKind,
}

impl ProbDist {
    /// Builds an exact distribution after checking length, sign and normalization.
    pub fn exact(n_qubits: usize, probs: Vec<f64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if probs.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: probs.len(),
            });
        }
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            n_qubits,
            probs,
            kind: DistKind::Exact,
        })
    }

    /// Builds an empirical distribution from per-outcome shot counts.
    pub fn from_counts(n_qubits: usize, counts: &[u64]) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if counts.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: counts.len(),
            });
        }
        let total: u64 = counts.iter().sum();
        if total == 0 || total > u32::MAX as u64 {
            return Err(Error::InvalidShots);
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            n_qubits,
            probs,
            kind: DistKind::Empirical {
                shots: total as u32,
            },
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    /// Total variation distance to another distribution over the same register.
    pub fn total_variation(&self, other: &ProbDist) -> Result<f64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                found: other.probs.len(),
            });
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.log2())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zero state `|00...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::InvalidWidth(n_qubits));
        }
        if n_qubits >= usize::BITS as usize - 1 {
            return Err(Error::InvalidWidth(n_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes; they must have length `2^n` and unit norm.
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::InvalidWidth(n_qubits));
        }
        let dim = 1usize << n_qubits;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "state norm is {norm}, expected 1"
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.amplitudes.len(),
                found: other.amplitudes.len(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// Applies `R_axis(angle)` to `qubit` in place.
    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (0.5 * angle).sin_cos();
        let zero = Complex64::new(0.0, 0.0);
        // [[m00, m01], [m10, m11]]
        let (m00, m01, m10, m11) = match axis {
            Axis::X => (
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ),
            Axis::Y => (
                Complex64::new(c, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(c, 0.0),
            ),
            Axis::Z => (Complex64::new(c, -s), zero, zero, Complex64::new(c, s)),
        };
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = m00 * a0 + m01 * a1;
                self.amplitudes[i | bit] = m10 * a0 + m11 * a1;
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::InvalidGate(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// Born-rule probabilities.
    pub fn measure_exact(&self) -> ProbDist {
        ProbDist {
            n_qubits: self.n_qubits,
            probs: self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            kind: DistKind::Exact,
        }
    }

    /// Multinomial draw of `shots` computational-basis measurements.
    pub fn sample_distribution(&self, shots: u32, rng: &mut SimRng) -> Result<ProbDist> {
        if shots == 0 {
            return Err(Error::InvalidShots);
        }
        let probs: Vec<f64> = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        let counts = sample_multinomial(&probs, shots as u64, rng);
        ProbDist::from_counts(self.n_qubits, &counts)
    }

    /// Exact or sampled distribution depending on `shots`.
    pub fn measure(&self, shots: Shots, rng: &mut SimRng) -> Result<ProbDist> {
        match shots {
            Shots::Exact => Ok(self.measure_exact()),
            Shots::Finite(n) => self.sample_distribution(n, rng),
        }
    }
}

/// Multinomial counts via sequential conditional binomials.
fn sample_multinomial(probs: &[f64], total: u64, rng: &mut SimRng) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = total;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let cond = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if cond >= 1.0 {
            remaining
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(remaining, cond)
                .expect("conditional probability in (0, 1)")
                .sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn assert_state_close(a: &StateVector, b: &StateVector, tol: f64) {
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_state() {
        let s = StateVector::zero(2).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let s = StateVector::zero(4).unwrap();
        assert_eq!(s.amplitudes().len(), 16);
        assert_eq!(s.amplitudes()[0], c(1.0));
        assert!(s.amplitudes()[1..].iter().all(|a| *a == c(0.0)));
        assert_eq!(StateVector::zero(1), Err(Error::InvalidWidth(1)));
    }

    #[test]
    fn ry_half_pi_makes_plus_state() {
        let mut s = StateVector::zero(2).unwrap();
        s.apply_rotation(0, Axis::Y, FRAC_PI_2).unwrap();
        let expected =
            StateVector::from_amplitudes(2, vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), c(0.0), c(0.0)])
                .unwrap();
        assert_state_close(&s, &expected, 1e-15);
    }

    #[test]
    fn zero_angle_is_identity() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply_rotation(1, Axis::X, 0.7).unwrap();
        s.apply_rotation(2, Axis::Y, 1.3).unwrap();
        let before = s.clone();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            s.apply_rotation(0, axis, 0.0).unwrap();
        }
        assert_eq!(s, before);
    }

    #[test]
    fn rz_on_zero_is_global_phase() {
        let phi = 0.9;
        let mut s = StateVector::zero(2).unwrap();
        s.apply_rotation(1, Axis::Z, phi).unwrap();
        let phase = Complex64::from_polar(1.0, -phi / 2.0);
        assert!((s.amplitudes()[0] - phase).norm() < 1e-15);
        assert_eq!(s.measure_exact().probs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rotation_qubit_out_of_range() {
        let mut s = StateVector::zero(2).unwrap();
        assert_eq!(
            s.apply_rotation(2, Axis::Y, 1.0),
            Err(Error::QubitIndex {
                qubit: 2,
                n_qubits: 2
            })
        );
    }

    #[test]
    fn cnot_truth_table() {
        let h = FRAC_1_SQRT_2;
        let mut s =
            StateVector::from_amplitudes(2, vec![c(h), c(h), c(0.0), c(0.0)]).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s.amplitudes(), &[c(h), c(0.0), c(0.0), c(h)]);

        let mut z = StateVector::zero(3).unwrap();
        z.apply_cnot(2, 0).unwrap();
        assert_eq!(z, StateVector::zero(3).unwrap());
    }

    #[test]
    fn cnot_is_involution() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply_rotation(0, Axis::Y, 1.1).unwrap();
        s.apply_rotation(1, Axis::X, 0.4).unwrap();
        let before = s.clone();
        s.apply_cnot(0, 2).unwrap();
        assert_ne!(s, before);
        s.apply_cnot(0, 2).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn cnot_rejects_same_qubit() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(s.apply_cnot(1, 1), Err(Error::InvalidGate(_))));
    }

    #[test]
    fn measure_bell_state() {
        let h = FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(2, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let p = s.measure_exact();
        for (a, b) in p.probs().iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(p.kind(), DistKind::Exact);
    }

    #[test]
    fn sampling_deterministic_outcome_and_errors() {
        let s = StateVector::zero(2).unwrap();
        let mut r = rng::from_seed(1);
        for shots in [1, 17, 2048] {
            let d = s.sample_distribution(shots, &mut r).unwrap();
            assert_eq!(d.probs(), &[1.0, 0.0, 0.0, 0.0]);
            assert_eq!(d.kind(), DistKind::Empirical { shots });
        }
        assert_eq!(s.sample_distribution(0, &mut r), Err(Error::InvalidShots));
    }

    #[test]
    fn sampling_reproducible_under_seed() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply_rotation(0, Axis::Y, 1.0).unwrap();
        s.apply_rotation(2, Axis::X, 2.0).unwrap();
        let a = s.sample_distribution(500, &mut rng::from_seed(9)).unwrap();
        let b = s.sample_distribution(500, &mut rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ghz_sampling_concentrates() {
        // Binomial(2048, 1/2): 5 standard deviations is sqrt(0.25 / 2048) * 5 ~ 0.055.
        let h = FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(2, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let bound = 5.0 * (0.25f64 / 2048.0).sqrt();
        for seed in 0..200 {
            let d = s.sample_distribution(2048, &mut rng::from_seed(seed)).unwrap();
            assert!((d.probs()[0] - 0.5).abs() <= bound);
            assert_eq!(d.probs()[1], 0.0);
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_of_two_point_distribution() {
        let h = FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(2, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        assert!((s.measure_exact().entropy_bits() - 1.0).abs() < 1e-12);
    }
}
