//! The system–pointer measurement interaction.
//!
//! A coupling assigns each system basis state |n⟩ a relative pointer state
//! |φ_n⟩ and acts as the isometry |n⟩ ↦ |n⟩|φ_n⟩. The pointer ready state is
//! never stored; only the image of the map enters any later computation.
//!
//! Rewriting an entangled state in the pointer basis gives relative system
//! states: for pointer outcome k the conditioned system vector is
//! `M_k |ψ⟩` with `M_k = Σ_n ⟨k|φ_n⟩ |n⟩⟨n|`. Its norm is the magnitude of
//! that branch and `Σ_k M_k† M_k = 1`.

use crate::error::{Error, Result};
use crate::qcore::{
    numerics, partial_trace, Basis, CMatrix, CVector, DensityOperator, StateVector, C64,
};

/// System basis labels of the two-slit coupling.
pub const SLIT_LABELS: [&str; 2] = ["A", "B"];
/// Photon (pointer) basis labels of the two-slit coupling.
pub const PHOTON_LABELS: [&str; 2] = ["k_A", "k_B"];

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpec {
    system_basis: Basis,
    pointer_basis: Basis,
    pointer_states: Vec<StateVector>,
}

impl CouplingSpec {
    /// General coupling: one unit pointer vector per system basis label, all
    /// over the same single-factor pointer basis.
    pub fn new(system_basis: Basis, pointer_states: Vec<StateVector>) -> Result<Self> {
        if system_basis.num_factors() != 1 {
            return Err(Error::DimensionMismatch(
                "coupling system basis must have a single factor".into(),
            ));
        }
        if pointer_states.len() != system_basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} relative pointer states for a system of dimension {}",
                pointer_states.len(),
                system_basis.dim()
            )));
        }
        let pointer_basis = pointer_states
            .first()
            .map(|p| p.basis().clone())
            .ok_or_else(|| Error::DimensionMismatch("empty system basis".into()))?;
        if pointer_basis.num_factors() != 1 {
            return Err(Error::DimensionMismatch(
                "pointer basis must have a single factor".into(),
            ));
        }
        let tolerance = numerics().algebraic;
        for p in &pointer_states {
            if p.basis() != &pointer_basis {
                return Err(Error::DimensionMismatch(
                    "relative pointer states live on different bases".into(),
                ));
            }
            let norm_sqr = p.norm_sqr();
            if (norm_sqr - 1.0).abs() > tolerance {
                return Err(Error::NotNormalized {
                    norm_sqr,
                    tolerance,
                });
            }
        }
        Ok(Self {
            system_basis,
            pointer_basis,
            pointer_states,
        })
    }

    /// Two-slit coupling with correct-answer amplitude `d` and error
    /// amplitude `e`: |φ_A⟩ = d|k_A⟩ + e|k_B⟩, |φ_B⟩ = e|k_A⟩ + d|k_B⟩.
    pub fn two_slit(d: C64, e: C64) -> Result<Self> {
        let total = d.norm_sqr() + e.norm_sqr();
        let tolerance = numerics().parameter;
        if (total - 1.0).abs() > tolerance || !total.is_finite() {
            return Err(Error::Constraint {
                constraint: "|d|^2+|e|^2".into(),
                value: total,
                tolerance,
            });
        }
        let pointer = Basis::single(PHOTON_LABELS);
        let phi_a = StateVector::normalized(vec![d, e], pointer.clone())?;
        let phi_b = StateVector::normalized(vec![e, d], pointer)?;
        Self::new(Basis::single(SLIT_LABELS), vec![phi_a, phi_b])
    }

    pub fn system_basis(&self) -> &Basis {
        &self.system_basis
    }

    pub fn pointer_basis(&self) -> &Basis {
        &self.pointer_basis
    }

    pub fn system_dim(&self) -> usize {
        self.system_basis.dim()
    }

    pub fn pointer_dim(&self) -> usize {
        self.pointer_basis.dim()
    }

    pub fn pointer_states(&self) -> &[StateVector] {
        &self.pointer_states
    }

    pub fn pointer_state(&self, system_label: &str) -> Result<&StateVector> {
        Ok(&self.pointer_states[self.system_basis.index_of(system_label)?])
    }

    /// Diagonal of the relative-state map for pointer outcome `k`:
    /// entry n is ⟨k|φ_n⟩.
    pub fn collapse_diagonal(&self, k: usize) -> Vec<C64> {
        self.pointer_states
            .iter()
            .map(|phi| phi.amplitudes()[k])
            .collect()
    }

    /// `M_k` as a matrix on system space.
    pub fn collapse_operator(&self, k: usize) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(self.collapse_diagonal(k)))
    }

    /// The entangling isometry `V = Σ_n (|n⟩ ⊗ |φ_n⟩)⟨n|` as a
    /// (system·pointer) × system matrix.
    pub fn isometry(&self) -> CMatrix {
        let (ds, dp) = (self.system_dim(), self.pointer_dim());
        let mut v = CMatrix::zeros(ds * dp, ds);
        for (n, phi) in self.pointer_states.iter().enumerate() {
            for k in 0..dp {
                v[(n * dp + k, n)] = phi.amplitudes()[k];
            }
        }
        v
    }

    /// Gram matrix `G[m][n] = ⟨φ_m|φ_n⟩`.
    pub fn decoherence_matrix(&self) -> CMatrix {
        let n = self.system_dim();
        CMatrix::from_fn(n, n, |i, j| {
            self.pointer_states[i]
                .amplitudes()
                .dotc(self.pointer_states[j].amplitudes())
        })
    }

    fn check_system(&self, system: &StateVector) -> Result<()> {
        if system.basis().dims() != self.system_basis.dims() {
            return Err(Error::DimensionMismatch(format!(
                "system state dims {:?} do not match coupling system dims {:?}",
                system.basis().dims(),
                self.system_basis.dims()
            )));
        }
        Ok(())
    }
}

/// Σ_n c_n |n⟩|φ_n⟩ on system ⊗ pointer.
pub fn entangle(system: &StateVector, c: &CouplingSpec) -> Result<StateVector> {
    c.check_system(system)?;
    let amps = c.isometry() * system.amplitudes();
    Ok(StateVector::from_parts(
        amps,
        system.basis().product(c.pointer_basis()),
    ))
}

/// ⟨φ_m|φ_n⟩
pub fn decoherence_function(c: &CouplingSpec, m: &str, n: &str) -> Result<C64> {
    let phi_m = c.pointer_state(m)?;
    let phi_n = c.pointer_state(n)?;
    phi_m.inner(phi_n)
}

/// Reduced system state of an entangled system ⊗ pointer vector, by partial
/// trace over the pointer.
pub fn reduced_density_unitary(joint: &StateVector) -> Result<DensityOperator> {
    if joint.basis().num_factors() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected a system ⊗ pointer state, got dims {:?}",
            joint.basis().dims()
        )));
    }
    partial_trace(&DensityOperator::from_pure(joint), 0)
}

/// Closed form of the reduced state: ρ_ij = c_i c_j* ⟨φ_j|φ_i⟩.
pub fn reduced_density_closed_form(
    system: &StateVector,
    c: &CouplingSpec,
) -> Result<DensityOperator> {
    c.check_system(system)?;
    let amps = system.amplitudes();
    let gram = c.decoherence_matrix();
    let n = c.system_dim();
    let m = CMatrix::from_fn(n, n, |i, j| amps[i] * amps[j].conj() * gram[(j, i)]);
    DensityOperator::new(m, system.basis().clone())
}

/// One pointer-outcome branch of a relative-state decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeComponent {
    pub pointer_label: String,
    pub magnitude: f64,
    /// `None` when the magnitude is below the algebraic tolerance; such a
    /// branch carries no state and is never sampled.
    pub state: Option<StateVector>,
}

/// |Ψ⟩ = Σ_k magnitude_k |state_k⟩ ⊗ |k⟩
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeDecomposition {
    system_basis: Basis,
    pointer_basis: Basis,
    components: Vec<RelativeComponent>,
}

impl RelativeDecomposition {
    pub fn components(&self) -> &[RelativeComponent] {
        &self.components
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.magnitude).collect()
    }

    pub fn system_basis(&self) -> &Basis {
        &self.system_basis
    }

    pub fn pointer_basis(&self) -> &Basis {
        &self.pointer_basis
    }

    /// Reassembles the joint system ⊗ pointer state.
    pub fn reconstruct(&self) -> StateVector {
        let ds = self.system_basis.dim();
        let dp = self.pointer_basis.dim();
        let mut amps = CVector::zeros(ds * dp);
        for (k, comp) in self.components.iter().enumerate() {
            if let Some(state) = &comp.state {
                for n in 0..ds {
                    amps[n * dp + k] = state.amplitudes()[n] * comp.magnitude;
                }
            }
        }
        StateVector::from_parts(amps, self.system_basis.product(&self.pointer_basis))
    }
}

/// Rewrites `entangle(system, c)` in the pointer basis.
pub fn relative_decomposition(
    system: &StateVector,
    c: &CouplingSpec,
) -> Result<RelativeDecomposition> {
    c.check_system(system)?;
    let floor = numerics().algebraic;
    let components = (0..c.pointer_dim())
        .map(|k| {
            let branch: CVector =
                CVector::from_vec(c.collapse_diagonal(k)).component_mul(system.amplitudes());
            let magnitude = branch.norm();
            let state = (magnitude >= floor).then(|| {
                StateVector::from_parts(branch.unscale(magnitude), system.basis().clone())
            });
            RelativeComponent {
                pointer_label: c.pointer_basis().factors()[0][k].clone(),
                magnitude,
                state,
            }
        })
        .collect();
    Ok(RelativeDecomposition {
        system_basis: system.basis().clone(),
        pointer_basis: c.pointer_basis().clone(),
        components,
    })
}
