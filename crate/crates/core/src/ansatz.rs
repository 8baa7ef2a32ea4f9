//! The layered QCBM circuit family.
//!
//! A circuit of depth `L` applies `L` blocks of (rotation layer, entangling
//! layer) followed by one final rotation layer, so `L = 0` is a product-state
//! circuit. Parameters are stored layer-major, qubit-minor. Under AGP each
//! (layer, qubit) slot holds `(gamma, beta, alpha)` and applies
//! `R_Z(gamma)`, then `R_X(beta)`, then `R_Z(alpha)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::simulator::{Axis, ProbDist, Shots, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// One `R_Y` per qubit per layer.
    Sgp,
    /// `R_Z R_X R_Z` per qubit per layer.
    Agp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Ring of `n` nearest-neighbour CNOTs.
    Pc,
    /// Alternating brick layers of `n/2` CNOTs.
    TwoDesign,
    /// No entangling layers (depth 0 only).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub depth: usize,
    pub parameterization: Parameterization,
    pub layout: Layout,
    /// Drops the first-layer leading `R_Z` and the final-layer trailing `R_Z`
    /// of every qubit under AGP. Ignored for SGP.
    #[serde(default)]
    pub elide_redundant_z: bool,
}

impl CircuitSpec {
    pub fn new(
        n_qubits: usize,
        depth: usize,
        parameterization: Parameterization,
        layout: Layout,
    ) -> Result<Self> {
        let spec = Self {
            n_qubits,
            depth,
            parameterization,
            layout,
            elide_redundant_z: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_elided_z(mut self, elide: bool) -> Self {
        self.elide_redundant_z = elide;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || self.n_qubits > 20 {
            return Err(Error::InvalidWidth(self.n_qubits));
        }
        match (self.layout, self.depth) {
            (Layout::None, 0) => {}
            (Layout::None, _) => {
                return Err(Error::InvalidSpec(
                    "layout `none` requires depth 0".into(),
                ))
            }
            (_, 0) => {
                return Err(Error::InvalidSpec(
                    "depth 0 requires layout `none`".into(),
                ))
            }
            _ => {}
        }
        if self.layout == Layout::TwoDesign && !self.n_qubits.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "two-design layout needs an even qubit count, got {}",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Rotation axes applied to each qubit in rotation layer `layer`.
    pub fn slot_axes(&self, layer: usize) -> &'static [Axis] {
        match self.parameterization {
            Parameterization::Sgp => &[Axis::Y],
            Parameterization::Agp => {
                const FULL: [Axis; 3] = [Axis::Z, Axis::X, Axis::Z];
                let elide = self.elide_redundant_z;
                let first = elide && layer == 0;
                let last = elide && layer == self.depth;
                match (first, last) {
                    (false, false) => &FULL,
                    (true, false) => &FULL[1..],
                    (false, true) => &FULL[..2],
                    (true, true) => &FULL[1..2],
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        (0..=self.depth)
            .map(|layer| self.n_qubits * self.slot_axes(layer).len())
            .sum()
    }

    /// CNOT pairs `(control, target)` of entangling layer `layer_index`.
    pub fn entangler_layer(&self, layer_index: usize) -> Result<Vec<(usize, usize)>> {
        if layer_index >= self.depth {
            return Err(Error::LayerIndex {
                index: layer_index,
                depth: self.depth,
            });
        }
        let n = self.n_qubits;
        Ok(match self.layout {
            Layout::Pc => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            Layout::TwoDesign if layer_index.is_multiple_of(2) => {
                (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect()
            }
            Layout::TwoDesign => (0..n / 2).map(|i| (2 * i + 1, (2 * i + 2) % n)).collect(),
            Layout::None => Vec::new(),
        })
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(())
    }

    /// Statevector `U(theta)|0...0>`.
    pub fn prepare_state(&self, params: &[f64]) -> Result<StateVector> {
        self.check_params(params)?;
        let mut state = StateVector::zero(self.n_qubits)?;
        let mut cursor = 0;
        for layer in 0..=self.depth {
            let axes = self.slot_axes(layer);
            for qubit in 0..self.n_qubits {
                for &axis in axes {
                    state.apply_rotation(qubit, axis, params[cursor])?;
                    cursor += 1;
                }
            }
            if layer < self.depth {
                for (control, target) in self.entangler_layer(layer)? {
                    state.apply_cnot(control, target)?;
                }
            }
        }
        Ok(state)
    }

    /// The model distribution `Q(theta)`, exact or sampled.
    pub fn sample_qcbm(&self, params: &[f64], shots: Shots, rng: &mut SimRng) -> Result<ProbDist> {
        self.prepare_state(params)?.measure(shots, rng)
    }
}
