//! Small dense complex linear algebra: state vectors and density operators on
//! labeled tensor-product bases, partial traces and state-validity checks.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerances shared by every module.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Numerics {
    /// Algebraic identities: normalization, Hermiticity, unit trace.
    pub algebraic: f64,
    /// Smallest eigenvalue still accepted as positive semidefinite.
    pub eigen_floor: f64,
    /// Born-weight completeness and distribution sums.
    pub weight: f64,
    /// Parameter constraints such as |d|²+|e|² = 1.
    pub parameter: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            algebraic: 1e-12,
            eigen_floor: -1e-10,
            weight: 1e-9,
            parameter: 1e-9,
        }
    }
}

static NUMERICS: OnceLock<Numerics> = OnceLock::new();

/// The process-wide tolerances. Defaults apply unless [`configure_numerics`]
/// ran first.
pub fn numerics() -> &'static Numerics {
    NUMERICS.get_or_init(Numerics::default)
}

/// Installs custom tolerances. Fails (returning the rejected value) once the
/// tolerances have been read or set.
pub fn configure_numerics(n: Numerics) -> std::result::Result<(), Numerics> {
    NUMERICS.set(n)
}

/// Labels for each tensor factor of a Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    factors: Vec<Vec<String>>,
}

impl Basis {
    pub fn single<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            factors: vec![labels.into_iter().map(Into::into).collect()],
        }
    }

    /// Basis labeled by `0..n`, used for pixel grids.
    pub fn indexed(n: usize) -> Self {
        Self::single((0..n).map(|i| i.to_string()))
    }

    pub fn product(&self, other: &Basis) -> Basis {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Basis { factors }
    }

    pub fn factors(&self) -> &[Vec<String>] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> Option<Basis> {
        self.factors.get(index).map(|f| Basis {
            factors: vec![f.clone()],
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Vec::len).collect()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(Vec::len).product()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// Position of `label` in a single-factor basis.
    pub fn index_of(&self, label: &str) -> Result<usize> {
        if self.factors.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "label lookup needs a single-factor basis, got {} factors",
                self.factors.len()
            )));
        }
        self.factors[0]
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Joined label of flat index `i`, e.g. `A,k_B`.
    pub fn label(&self, i: usize) -> String {
        let dims = self.dims();
        let mut rem = i;
        let mut parts = vec![String::new(); dims.len()];
        for (f, &d) in dims.iter().enumerate().rev() {
            parts[f] = self.factors[f][rem % d].clone();
            rem /= d;
        }
        parts.join(",")
    }
}

/// A unit vector of complex amplitudes over a labeled basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    basis: Basis,
}

impl StateVector {
    /// Wraps amplitudes that must already be normalized.
    pub fn new(amplitudes: Vec<C64>, basis: Basis) -> Result<Self> {
        let state = Self::unchecked(amplitudes, basis)?;
        let norm_sqr = state.norm_sqr();
        let tolerance = numerics().algebraic;
        if (norm_sqr - 1.0).abs() > tolerance {
            return Err(Error::NotNormalized {
                norm_sqr,
                tolerance,
            });
        }
        Ok(state)
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<C64>, basis: Basis) -> Result<Self> {
        let mut state = Self::unchecked(amplitudes, basis)?;
        let norm = state.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized {
                norm_sqr: norm * norm,
                tolerance: numerics().algebraic,
            });
        }
        state.amplitudes.unscale_mut(norm);
        Ok(state)
    }

    fn unchecked(amplitudes: Vec<C64>, basis: Basis) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(Self {
            amplitudes: CVector::from_vec(amplitudes),
            basis,
        })
    }

    pub(crate) fn from_parts(amplitudes: CVector, basis: Basis) -> Self {
        debug_assert_eq!(amplitudes.len(), basis.dim());
        Self { amplitudes, basis }
    }

    pub fn basis_state(basis: Basis, index: usize) -> Result<Self> {
        let dim = basis.dim();
        if index >= dim {
            return Err(Error::DimensionMismatch(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self::from_parts(CVector::from_vec(amps), basis))
    }

    /// Uniformly distributed (Haar) random state.
    pub fn random<R: Rng + ?Sized>(basis: Basis, rng: &mut R) -> Self {
        loop {
            let amps: Vec<C64> = (0..basis.dim())
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            if let Ok(s) = Self::normalized(amps, basis.clone()) {
                return s;
            }
        }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: &str) -> Result<C64> {
        Ok(self.amplitudes[self.basis.index_of(label)?])
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "inner product of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Largest entrywise distance to `other`.
    pub fn max_deviation(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Overlap modulus |⟨self|other⟩|, equal to 1 for states that differ
    /// only by a global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }
}

/// Kronecker product u ⊗ v with the bases concatenated.
pub fn tensor(u: &StateVector, v: &StateVector) -> StateVector {
    StateVector::from_parts(
        u.amplitudes.kronecker(&v.amplitudes),
        u.basis.product(&v.basis),
    )
}

/// A square complex matrix on a labeled basis. Construction only checks
/// shapes; use [`validate_density`] to check the state invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    basis: Basis,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix, basis: Basis) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for dims {:?}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dims()
            )));
        }
        Ok(Self { matrix, basis })
    }

    /// |ψ⟩⟨ψ|
    pub fn from_pure(psi: &StateVector) -> Self {
        Self {
            matrix: &psi.amplitudes * psi.amplitudes.adjoint(),
            basis: psi.basis.clone(),
        }
    }

    /// Maximally mixed state on `basis`.
    pub fn maximally_mixed(basis: Basis) -> Self {
        let n = basis.dim();
        Self {
            matrix: CMatrix::identity(n, n).unscale(n as f64),
            basis,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_deviation(&self, other: &DensityOperator) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Traces out every factor except `keep`.
pub fn partial_trace(rho: &DensityOperator, keep: usize) -> Result<DensityOperator> {
    let dims = rho.basis.dims();
    if dims.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "partial trace needs at least two factors, got dims {dims:?}"
        )));
    }
    if keep >= dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "factor {keep} out of range for dims {dims:?}"
        )));
    }
    let total: usize = dims.iter().product();
    if rho.matrix.nrows() != total || rho.matrix.ncols() != total {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix inconsistent with dims {dims:?}",
            rho.matrix.nrows(),
            rho.matrix.ncols()
        )));
    }

    // Flat index = (outer · d_keep + k) · inner + r.
    let d_keep = dims[keep];
    let inner: usize = dims[keep + 1..].iter().product();
    let outer: usize = dims[..keep].iter().product();
    let flat = |o: usize, k: usize, r: usize| (o * d_keep + k) * inner + r;

    let mut out = CMatrix::zeros(d_keep, d_keep);
    for i in 0..d_keep {
        for j in 0..d_keep {
            let mut acc = C64::new(0.0, 0.0);
            for o in 0..outer {
                for r in 0..inner {
                    acc += rho.matrix[(flat(o, i, r), flat(o, j, r))];
                }
            }
            out[(i, j)] = acc;
        }
    }
    let basis = rho.basis.factor(keep).expect("keep index validated above");
    Ok(DensityOperator { matrix: out, basis })
}

/// Deviations of an operator from the density-operator invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationReport {
    /// max |ρ - ρ†| entrywise
    pub hermiticity_deviation: f64,
    /// |tr ρ - 1|
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hermiticity deviation {:e}, trace deviation {:e}, min eigenvalue {:e} ({})",
            self.hermiticity_deviation,
            self.trace_deviation,
            self.min_eigenvalue,
            if self.passed { "pass" } else { "fail" }
        )
    }
}

pub fn validate_density(rho: &DensityOperator) -> ValidationReport {
    let tol = numerics();
    let m = &rho.matrix;
    let adjoint = m.adjoint();
    let hermiticity_deviation = (m - &adjoint).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let trace_deviation = (m.trace() - C64::new(1.0, 0.0)).norm();
    let hermitian_part = (m + adjoint).unscale(2.0);
    let min_eigenvalue = hermitian_part
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let passed = hermiticity_deviation <= tol.algebraic
        && trace_deviation <= tol.algebraic
        && min_eigenvalue >= tol.eigen_floor;
    ValidationReport {
        hermiticity_deviation,
        trace_deviation,
        min_eigenvalue,
        passed,
    }
}

/// tr(ρ²)
pub fn purity(rho: &DensityOperator) -> f64 {
    // tr(ρ²) = Σ_ij ρ_ij ρ_ji, which is Σ |ρ_ij|² for Hermitian ρ.
    let m = &rho.matrix;
    let n = m.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += m[(i, j)] * m[(j, i)];
        }
    }
    acc.re
}
