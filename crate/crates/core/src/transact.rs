//! Transaction sets, Born-rule actualization and the epistemic mixture.
//!
//! A transaction set lists the incipient transactions |⟨k|ψ⟩|² |k⟩⟨k| that a
//! complete set of absorbers offers for a state. Exactly one of them is
//! actualized per run; the emitter is then left in the relative state that
//! belongs to the chosen outcome.

use rand::Rng;

use crate::coupling::{entangle, relative_decomposition, CouplingSpec, RelativeDecomposition};
use crate::error::{Error, Result};
use crate::qcore::{numerics, partial_trace, Basis, CMatrix, DensityOperator, StateVector};

/// One incipient transaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    pub label: String,
    /// Absorber basis vector |k⟩.
    pub basis_vector: StateVector,
    /// State the emitter is left in when this transaction actualizes. `None`
    /// marks a branch whose magnitude vanished; it is never sampled.
    pub relative_state: Option<StateVector>,
    /// Born weight |⟨k|ψ⟩|².
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransactionSet {
    entries: Vec<Transaction>,
    source: StateVector,
}

impl TransactionSet {
    fn checked(entries: Vec<Transaction>, source: StateVector) -> Result<Self> {
        let total: f64 = entries.iter().map(|t| t.weight).sum();
        if (total - 1.0).abs() > numerics().weight {
            return Err(Error::IncompleteAbsorber { total });
        }
        Ok(Self { entries, source })
    }

    pub fn entries(&self) -> &[Transaction] {
        &self.entries
    }

    pub fn source(&self) -> &StateVector {
        &self.source
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|t| t.weight).collect()
    }

    /// Weights used for sampling: placeholder branches count as zero.
    pub fn sampling_weights(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|t| {
                if t.relative_state.is_some() {
                    t.weight
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Outcome of a single actualization.
#[derive(Clone, Debug, PartialEq)]
pub struct ActualizedOutcome {
    pub index: usize,
    pub outcome_label: String,
    pub collapsed_system_state: StateVector,
    pub collapsed_pointer_label: String,
}

/// Process 1 in the computational basis of `psi`: one entry per label in
/// `absorber_labels`. Labels of joint bases are comma-joined, e.g. `A,k_B`.
pub fn process_one(psi: &StateVector, absorber_labels: &[&str]) -> Result<TransactionSet> {
    let basis = psi.basis();
    let mut seen = vec![false; psi.dim()];
    let mut entries = Vec::with_capacity(absorber_labels.len());
    for &label in absorber_labels {
        let index = (0..psi.dim())
            .find(|&i| basis.label(i) == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        if std::mem::replace(&mut seen[index], true) {
            return Err(Error::InvalidParameter(format!(
                "absorber `{label}` listed twice"
            )));
        }
        let basis_vector = StateVector::basis_state(basis.clone(), index)?;
        entries.push(Transaction {
            label: label.to_string(),
            weight: psi.amplitudes()[index].norm_sqr(),
            relative_state: Some(basis_vector.clone()),
            basis_vector,
        });
    }
    TransactionSet::checked(entries, psi.clone())
}

/// Process 1 against an arbitrary orthonormal absorber set.
pub fn process_one_in_basis(
    psi: &StateVector,
    absorbers: &[(String, StateVector)],
) -> Result<TransactionSet> {
    let tol = numerics().algebraic;
    for (i, (li, vi)) in absorbers.iter().enumerate() {
        for (lj, vj) in &absorbers[..i] {
            let overlap = vi.inner(vj)?.norm();
            if overlap > tol {
                return Err(Error::InvalidParameter(format!(
                    "absorbers `{li}` and `{lj}` are not orthogonal (overlap {overlap:e})"
                )));
            }
        }
    }
    let entries = absorbers
        .iter()
        .map(|(label, k)| {
            Ok(Transaction {
                label: label.clone(),
                weight: k.inner(psi)?.norm_sqr(),
                relative_state: Some(k.clone()),
                basis_vector: k.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TransactionSet::checked(entries, psi.clone())
}

/// Transactions offered by the pointer after `system` couples through `c`:
/// one per pointer label, weighted by the squared branch magnitude and
/// carrying the relative system state.
pub fn joint_transactions(system: &StateVector, c: &CouplingSpec) -> Result<TransactionSet> {
    let rd = relative_decomposition(system, c)?;
    let joint = entangle(system, c)?;
    let entries = rd
        .components()
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            Ok(Transaction {
                label: comp.pointer_label.clone(),
                basis_vector: StateVector::basis_state(c.pointer_basis().clone(), k)?,
                relative_state: comp.state.clone(),
                weight: comp.magnitude * comp.magnitude,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TransactionSet::checked(entries, joint)
}

/// Inverse-CDF selection with a single uniform `u ∈ [0, 1)`. Zero weights
/// are never selected.
pub fn sample_index(weights: &[f64], u: f64) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = u * total;
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        cumulative += w;
        last_positive = Some(i);
        if target < cumulative {
            return Some(i);
        }
    }
    last_positive
}

/// Draws one transaction with probability equal to its weight.
pub fn actualize<R: Rng + ?Sized>(t: &TransactionSet, rng: &mut R) -> Result<ActualizedOutcome> {
    let u: f64 = rng.random();
    let index = sample_index(&t.sampling_weights(), u).ok_or(Error::AllZeroWeights)?;
    let entry = &t.entries[index];
    let collapsed_system_state = entry
        .relative_state
        .clone()
        .expect("sampled entries carry a relative state");
    Ok(ActualizedOutcome {
        index,
        outcome_label: entry.label.clone(),
        collapsed_system_state,
        collapsed_pointer_label: entry.label.clone(),
    })
}

/// ρ = Σ_k magnitude_k² |state_k⟩⟨state_k| ⊗ |k⟩⟨k| on system ⊗ pointer.
pub fn epistemic_mixture(rd: &RelativeDecomposition) -> DensityOperator {
    let ds = rd.system_basis().dim();
    let dp = rd.pointer_basis().dim();
    let mut m = CMatrix::zeros(ds * dp, ds * dp);
    for (k, comp) in rd.components().iter().enumerate() {
        let Some(state) = &comp.state else { continue };
        let w = comp.magnitude * comp.magnitude;
        let a = state.amplitudes();
        for i in 0..ds {
            for j in 0..ds {
                m[(i * dp + k, j * dp + k)] = a[i] * a[j].conj() * w;
            }
        }
    }
    let basis: Basis = rd.system_basis().product(rd.pointer_basis());
    DensityOperator::new(m, basis).expect("shape follows from the bases")
}

/// Traces the pointer out of an epistemic mixture.
pub fn reduced_epistemic(rho_joint: &DensityOperator) -> Result<DensityOperator> {
    partial_trace(rho_joint, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{reduced_density_unitary, SLIT_LABELS};
    use crate::qcore::{tensor, validate_density, C64};
    use crate::rng::Streams;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn photon(a: C64, b: C64) -> StateVector {
        StateVector::normalized(vec![a, b], Basis::single(["k_A", "k_B"])).unwrap()
    }

    fn slits(a: C64, b: C64) -> StateVector {
        StateVector::normalized(vec![a, b], Basis::single(SLIT_LABELS)).unwrap()
    }

    fn weak() -> CouplingSpec {
        CouplingSpec::two_slit(r(0.8f64.sqrt()), r(0.2f64.sqrt())).unwrap()
    }

    #[test]
    fn process_one_weights() {
        let labels = ["k_A", "k_B"];
        let t = process_one(&photon(r(1.0), r(0.0)), &labels).unwrap();
        assert_eq!(t.weights(), vec![1.0, 0.0]);

        let t = process_one(&photon(r(1.0), C64::new(0.0, 1.0)), &labels).unwrap();
        for w in t.weights() {
            assert!((w - 0.5).abs() < TOL);
        }

        let t = process_one(&photon(r(0.6), r(0.8)), &labels).unwrap();
        let w = t.weights();
        assert!((w[0] - 0.36).abs() < TOL && (w[1] - 0.64).abs() < TOL);
    }

    #[test]
    fn process_one_detects_incomplete_absorbers() {
        let err = process_one(&photon(r(0.6), r(0.8)), &["k_A"]).unwrap_err();
        match err {
            Error::IncompleteAbsorber { total } => assert!((total - 0.36).abs() < TOL),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(
            process_one(&photon(r(0.6), r(0.8)), &["k_A", "k_C"]),
            Err(Error::UnknownLabel(_))
        ));
        assert!(process_one(&photon(r(0.6), r(0.8)), &["k_A", "k_A"]).is_err());
    }

    #[test]
    fn process_one_on_joint_labels() {
        let joint = entangle(&slits(r(1.0), r(1.0)), &weak()).unwrap();
        let t = process_one(&joint, &["A,k_A", "A,k_B", "B,k_A", "B,k_B"]).unwrap();
        let w = t.weights();
        assert!((w[0] - 0.4).abs() < TOL && (w[1] - 0.1).abs() < TOL);
    }

    #[test]
    fn process_one_in_rotated_basis() {
        let plus = ("k_+".to_string(), photon(r(1.0), r(1.0)));
        let minus = ("k_-".to_string(), photon(r(1.0), r(-1.0)));
        let t = process_one_in_basis(&photon(r(1.0), r(0.0)), &[plus.clone(), minus]).unwrap();
        for w in t.weights() {
            assert!((w - 0.5).abs() < TOL);
        }
        let not_orthogonal = ("k_A".to_string(), photon(r(1.0), r(0.0)));
        assert!(process_one_in_basis(&photon(r(1.0), r(0.0)), &[plus, not_orthogonal]).is_err());
    }

    #[test]
    fn joint_transaction_weights() {
        let t = joint_transactions(&slits(r(1.0), r(1.0)), &weak()).unwrap();
        for w in t.weights() {
            assert!((w - 0.5).abs() < TOL);
        }

        let t = joint_transactions(&slits(r(0.9f64.sqrt()), r(0.1f64.sqrt())), &weak()).unwrap();
        let w = t.weights();
        assert!((w[0] - 0.74).abs() < TOL && (w[1] - 0.26).abs() < TOL);

        let sharp = CouplingSpec::two_slit(r(1.0), r(0.0)).unwrap();
        let psi = slits(r(0.6), C64::new(0.0, 0.8));
        let w = joint_transactions(&psi, &sharp).unwrap().weights();
        assert!((w[0] - 0.36).abs() < TOL && (w[1] - 0.64).abs() < TOL);
    }

    #[test]
    fn certain_outcome_is_always_drawn() {
        let t = process_one(&photon(r(1.0), r(0.0)), &["k_A", "k_B"]).unwrap();
        let mut rng = Streams::new(0).stream(0);
        for _ in 0..1000 {
            assert_eq!(actualize(&t, &mut rng).unwrap().index, 0);
        }
    }

    #[test]
    fn actualization_frequencies() {
        // 3σ binomial bounds: 3·sqrt(p(1-p)/N) at N = 1e5.
        let n = 100_000;
        for (psi, p, bound) in [
            (slits(r(1.0), r(1.0)), 0.5, 0.005),
            (slits(r(0.9f64.sqrt()), r(0.1f64.sqrt())), 0.74, 0.0042),
        ] {
            let t = joint_transactions(&psi, &weak()).unwrap();
            let mut rng = Streams::new(17).stream(0);
            let hits = (0..n)
                .filter(|_| actualize(&t, &mut rng).unwrap().index == 0)
                .count();
            let freq = hits as f64 / n as f64;
            assert!((freq - p).abs() < bound, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn actualize_is_reproducible_and_collapses() {
        let t = joint_transactions(&slits(r(0.6), r(0.8)), &weak()).unwrap();
        let s = Streams::new(5);
        let a: Vec<_> = (0..20)
            .map(|i| actualize(&t, &mut s.stream(i)).unwrap())
            .collect();
        let b: Vec<_> = (0..20)
            .map(|i| actualize(&t, &mut s.stream(i)).unwrap())
            .collect();
        assert_eq!(a, b);
        let rd = relative_decomposition(&slits(r(0.6), r(0.8)), &weak()).unwrap();
        for o in &a {
            let expected = rd.components()[o.index].state.as_ref().unwrap();
            assert_eq!(&o.collapsed_system_state, expected);
            assert_eq!(
                o.collapsed_pointer_label,
                rd.components()[o.index].pointer_label
            );
        }
    }

    #[test]
    fn zero_weights_error_and_skip() {
        assert_eq!(sample_index(&[0.0, 0.0], 0.3), None);
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.0), Some(1));
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.999_999), Some(1));
        assert_eq!(sample_index(&[0.25, 0.75], 0.2), Some(0));
        assert_eq!(sample_index(&[0.25, 0.75], 0.25), Some(1));

        // A placeholder branch is not drawn even with a nonzero stored weight.
        let sharp = CouplingSpec::two_slit(r(1.0), r(0.0)).unwrap();
        let a = StateVector::basis_state(Basis::single(SLIT_LABELS), 0).unwrap();
        let t = joint_transactions(&a, &sharp).unwrap();
        let mut rng = Streams::new(1).stream(0);
        for _ in 0..100 {
            assert_eq!(actualize(&t, &mut rng).unwrap().index, 0);
        }
    }

    #[test]
    fn epistemic_mixture_shapes() {
        let sharp = CouplingSpec::two_slit(r(1.0), r(0.0)).unwrap();
        let a = StateVector::basis_state(Basis::single(SLIT_LABELS), 0).unwrap();
        let rd = relative_decomposition(&a, &sharp).unwrap();
        let rho = epistemic_mixture(&rd);
        let k_a = StateVector::basis_state(Basis::single(["k_A", "k_B"]), 0).unwrap();
        assert!(rho.max_deviation(&DensityOperator::from_pure(&tensor(&a, &k_a))) < TOL);

        let balanced = slits(r(1.0), r(1.0));
        let rd = relative_decomposition(&balanced, &weak()).unwrap();
        let rho = epistemic_mixture(&rd);
        let (d, e) = (0.8f64.sqrt(), 0.2f64.sqrt());
        let alpha = slits(r(d), r(e));
        let beta = slits(r(e), r(d));
        let k_b = StateVector::basis_state(Basis::single(["k_A", "k_B"]), 1).unwrap();
        let expected = DensityOperator::from_pure(&tensor(&alpha, &k_a))
            .matrix()
            .scale(0.5)
            + DensityOperator::from_pure(&tensor(&beta, &k_b))
                .matrix()
                .scale(0.5);
        assert!((rho.matrix() - expected).iter().all(|z| z.norm() < TOL));
        assert!(validate_density(&rho).passed);

        // No coherence between distinct pointer labels.
        for i in 0..4 {
            for j in 0..4 {
                if i % 2 != j % 2 {
                    assert_eq!(rho.entry(i, j), C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn reduced_epistemic_matches_trace() {
        let balanced = slits(r(1.0), r(1.0));
        let rho = reduced_epistemic(&epistemic_mixture(
            &relative_decomposition(&balanced, &weak()).unwrap(),
        ))
        .unwrap();
        assert!((rho.entry(0, 1) - r(0.4)).norm() < TOL);

        let sharp = CouplingSpec::two_slit(r(1.0), r(0.0)).unwrap();
        let psi = slits(r(0.6), C64::new(0.0, 0.8));
        let rho = reduced_epistemic(&epistemic_mixture(
            &relative_decomposition(&psi, &sharp).unwrap(),
        ))
        .unwrap();
        assert!((rho.entry(0, 0) - r(0.36)).norm() < TOL);
        assert!((rho.entry(1, 1) - r(0.64)).norm() < TOL);
        assert!(rho.entry(0, 1).norm() < TOL);

        let streams = Streams::new(123);
        for i in 0..1000 {
            let mut rng = streams.stream(i);
            let de = StateVector::random(Basis::indexed(2), &mut rng);
            let c = CouplingSpec::two_slit(de.amplitudes()[0], de.amplitudes()[1]).unwrap();
            let psi = StateVector::random(Basis::single(SLIT_LABELS), &mut rng);
            let epi = reduced_epistemic(&epistemic_mixture(
                &relative_decomposition(&psi, &c).unwrap(),
            ))
            .unwrap();
            let traced = reduced_density_unitary(&entangle(&psi, &c).unwrap()).unwrap();
            assert!(epi.max_deviation(&traced) < TOL);
        }
    }

    #[test]
    fn epistemic_spectrum_is_the_weights() {
        let psi = slits(r(0.6), C64::new(0.3, 0.5));
        let rd = relative_decomposition(&psi, &weak()).unwrap();
        let rho = epistemic_mixture(&rd);
        let mut eig: Vec<f64> = rho
            .matrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut w: Vec<f64> = rd.magnitudes().iter().map(|m| m * m).collect();
        w.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - w[0]).abs() < TOL && (eig[1] - w[1]).abs() < TOL);
        assert!(eig[2].abs() < TOL && eig[3].abs() < TOL);
    }

    proptest! {
        #[test]
        fn born_weights_ignore_global_phase(seed in any::<u64>(), phase in 0.0f64..std::f64::consts::TAU) {
            let mut rng = Streams::new(seed).stream(0);
            let psi = StateVector::random(Basis::single(["x", "y", "z"]), &mut rng);
            let rotated = StateVector::new(
                psi.amplitudes().iter().map(|a| a * C64::from_polar(1.0, phase)).collect(),
                psi.basis().clone(),
            ).unwrap();
            let a = process_one(&psi, &["x", "y", "z"]).unwrap().weights();
            let b = process_one(&rotated, &["x", "y", "z"]).unwrap().weights();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
