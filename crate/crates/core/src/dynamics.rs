//! Repeated measurement events and the decoherence they produce.
//!
//! Each event couples the system to a fresh pointer and actualizes one
//! pointer outcome, collapsing the system with `M_k` (see [`crate::coupling`]).
//! Averaged over outcomes this multiplies ρ_mn by ⟨φ_n|φ_m⟩. Events arrive
//! as a Poisson process of rate Γ; averaging over the event count gives
//! ρ_mn(t) = ρ_mn(0)·exp(-Γ(1 - f)t).

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::coupling::CouplingSpec;
use crate::error::{Error, Result};
use crate::qcore::{
    numerics, validate_density, CMatrix, CVector, DensityOperator, StateVector, C64,
};
use crate::rng::Streams;
use crate::stats::weighted_line_fit;
use crate::transact::sample_index;

/// Trajectories per parallel work unit. Fixed so that partial sums, and
/// therefore results, do not depend on the number of workers.
const CHUNK: u64 = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct DecaySchedule {
    gamma: f64,
    f: C64,
    lambda: C64,
    t_grid: Vec<f64>,
}

impl DecaySchedule {
    pub fn new(gamma: f64, f: C64, t_grid: Vec<f64>) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "repetition rate must be positive, got {gamma}"
            )));
        }
        if !(f.norm() <= 1.0 + numerics().algebraic) {
            return Err(Error::InvalidParameter(format!(
                "decoherence function {f} exceeds unit modulus"
            )));
        }
        if t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "time grid must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(Self {
            gamma,
            f,
            lambda: (C64::new(1.0, 0.0) - f) * gamma,
            t_grid,
        })
    }

    /// Schedule for ρ_mn under coupling `c`: f = ⟨φ_n|φ_m⟩.
    pub fn for_entry(
        c: &CouplingSpec,
        m: usize,
        n: usize,
        gamma: f64,
        t_grid: Vec<f64>,
    ) -> Result<Self> {
        let f = c.decoherence_matrix()[(n, m)];
        Self::new(gamma, f, t_grid)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn f(&self) -> C64 {
        self.f
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }
}

/// `n` equally spaced times from 0 to `t_max` inclusive.
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t_max],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_system_density(rho: &DensityOperator, c: &CouplingSpec) -> Result<()> {
    if rho.basis().dims() != c.system_basis().dims() {
        return Err(Error::DimensionMismatch(format!(
            "density operator dims {:?} do not match coupling system dims {:?}",
            rho.basis().dims(),
            c.system_basis().dims()
        )));
    }
    let report = validate_density(rho);
    if !report.passed {
        return Err(Error::NotDensity(report));
    }
    Ok(())
}

/// Ensemble effect of one event: ρ ↦ Σ_k M_k ρ M_k†.
pub fn channel_step(rho: &DensityOperator, c: &CouplingSpec) -> Result<DensityOperator> {
    check_system_density(rho, c)?;
    let out = (0..c.pointer_dim()).fold(CMatrix::zeros(rho.dim(), rho.dim()), |acc, k| {
        let m = c.collapse_operator(k);
        acc + &m * rho.matrix() * m.adjoint()
    });
    DensityOperator::new(out, rho.basis().clone())
}

/// `n` successive [`channel_step`]s.
pub fn channel_power(rho: &DensityOperator, c: &CouplingSpec, n: usize) -> Result<DensityOperator> {
    (0..n).try_fold(rho.clone(), |r, _| channel_step(&r, c))
}

/// Arrival times of a rate-`gamma` Poisson process on `[0, t_max]`.
pub fn poisson_events<R: Rng + ?Sized>(gamma: f64, t_max: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() || !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "poisson events need gamma > 0 and t_max > 0, got gamma={gamma}, t_max={t_max}"
        )));
    }
    let gap = Exp::new(gamma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        let dt = gap.sample(rng);
        if dt <= 0.0 {
            continue;
        }
        t += dt;
        if t > t_max {
            return Ok(times);
        }
        times.push(t);
    }
}

/// ρ_mn(t) = ρ_mn(0)·exp(-λt) on the schedule's grid.
pub fn analytic_decay(rho0_offdiag: C64, schedule: &DecaySchedule) -> Vec<C64> {
    schedule
        .t_grid
        .iter()
        .map(|&t| rho0_offdiag * (-schedule.lambda * t).exp())
        .collect()
}

/// Relative-state maps of a coupling in the form the trajectory loop uses.
struct Collapser {
    diagonals: Vec<Vec<C64>>,
    floor: f64,
}

impl Collapser {
    fn new(c: &CouplingSpec) -> Self {
        Self {
            diagonals: (0..c.pointer_dim())
                .map(|k| c.collapse_diagonal(k))
                .collect(),
            floor: numerics().algebraic,
        }
    }

    /// Actualizes one pointer outcome and collapses `psi` in place.
    fn step<R: Rng + ?Sized>(&self, psi: &mut [C64], rng: &mut R) -> usize {
        let weights: Vec<f64> = self
            .diagonals
            .iter()
            .map(|diag| {
                let w: f64 = diag
                    .iter()
                    .zip(psi.iter())
                    .map(|(m, a)| (m * a).norm_sqr())
                    .sum();
                if w.sqrt() < self.floor {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let u: f64 = rng.random();
        let k = sample_index(&weights, u).expect("a normalized state has a nonzero branch");
        let norm = weights[k].sqrt();
        for (a, m) in psi.iter_mut().zip(&self.diagonals[k]) {
            *a = *a * m / norm;
        }
        k
    }
}

/// One Monte Carlo trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub stream_index: u64,
    pub initial_state: StateVector,
    pub event_times: Vec<f64>,
    pub outcome_labels: Vec<String>,
    /// System state right after each event.
    pub states: Vec<StateVector>,
}

impl TrajectoryRecord {
    /// State after the last event at or before `t`.
    pub fn state_at(&self, t: f64) -> &StateVector {
        let n = self.event_times.partition_point(|&e| e <= t);
        if n == 0 {
            &self.initial_state
        } else {
            &self.states[n - 1]
        }
    }
}

fn check_system_state(system: &StateVector, c: &CouplingSpec) -> Result<()> {
    if system.basis().dims() != c.system_basis().dims() {
        return Err(Error::DimensionMismatch(format!(
            "system state dims {:?} do not match coupling system dims {:?}",
            system.basis().dims(),
            c.system_basis().dims()
        )));
    }
    Ok(())
}

/// Runs trajectory `index` of `streams` up to `t_max`. Draws the same
/// numbers as trajectory `index` inside [`ensemble_decay`].
pub fn run_trajectory(
    system0: &StateVector,
    c: &CouplingSpec,
    gamma: f64,
    t_max: f64,
    streams: &Streams,
    index: u64,
) -> Result<TrajectoryRecord> {
    check_system_state(system0, c)?;
    let collapser = Collapser::new(c);
    let mut rng = streams.stream(index);
    let event_times = poisson_events(gamma, t_max, &mut rng)?;
    let mut psi: Vec<C64> = system0.amplitudes().iter().copied().collect();
    let mut outcome_labels = Vec::with_capacity(event_times.len());
    let mut states = Vec::with_capacity(event_times.len());
    for _ in &event_times {
        let k = collapser.step(&mut psi, &mut rng);
        outcome_labels.push(c.pointer_basis().factors()[0][k].clone());
        states.push(StateVector::from_parts(
            CVector::from_vec(psi.clone()),
            system0.basis().clone(),
        ));
    }
    Ok(TrajectoryRecord {
        stream_index: index,
        initial_state: system0.clone(),
        event_times,
        outcome_labels,
        states,
    })
}

/// Running sums of |ψ⟩⟨ψ| entries and their squared parts, taken relative
/// to a fixed shift (the initial state) so that runs which never leave it
/// report exactly zero spread.
#[derive(Clone, Debug)]
struct Moments {
    shift: Vec<C64>,
    sum: Vec<C64>,
    sum_sq_re: Vec<f64>,
    sum_sq_im: Vec<f64>,
}

impl Moments {
    fn new(psi0: &[C64]) -> Self {
        let d = psi0.len();
        let shift = (0..d * d)
            .map(|idx| psi0[idx / d] * psi0[idx % d].conj())
            .collect();
        Self {
            shift,
            sum: vec![C64::new(0.0, 0.0); d * d],
            sum_sq_re: vec![0.0; d * d],
            sum_sq_im: vec![0.0; d * d],
        }
    }

    fn add(&mut self, psi: &[C64]) {
        let d = psi.len();
        for i in 0..d {
            for j in 0..d {
                let idx = i * d + j;
                let z = psi[i] * psi[j].conj() - self.shift[idx];
                self.sum[idx] += z;
                self.sum_sq_re[idx] += z.re * z.re;
                self.sum_sq_im[idx] += z.im * z.im;
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq_re[i] += other.sum_sq_re[i];
            self.sum_sq_im[i] += other.sum_sq_im[i];
        }
    }

    fn finish(&self, n: u64, system: &StateVector) -> AveragedState {
        let d = system.dim();
        let nf = n as f64;
        let offset: Vec<C64> = self.sum.iter().map(|s| s / nf).collect();
        let se = |sq: f64, m: f64| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sq - nf * m * m) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        };
        let stderr_re = (0..d * d)
            .map(|i| se(self.sum_sq_re[i], offset[i].re))
            .collect();
        let stderr_im = (0..d * d)
            .map(|i| se(self.sum_sq_im[i], offset[i].im))
            .collect();
        let mean: Vec<C64> = offset.iter().zip(&self.shift).map(|(o, s)| o + s).collect();
        AveragedState {
            mean: DensityOperator::new(
                CMatrix::from_row_slice(d, d, &mean),
                system.basis().clone(),
            )
            .expect("square by construction"),
            stderr_re,
            stderr_im,
            samples: n,
        }
    }
}

/// Trajectory-averaged density operator with entrywise standard errors of
/// the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedState {
    pub mean: DensityOperator,
    stderr_re: Vec<f64>,
    stderr_im: Vec<f64>,
    pub samples: u64,
}

impl AveragedState {
    pub fn stderr_re(&self, i: usize, j: usize) -> f64 {
        self.stderr_re[i * self.mean.dim() + j]
    }

    pub fn stderr_im(&self, i: usize, j: usize) -> f64 {
        self.stderr_im[i * self.mean.dim() + j]
    }

    /// Standard error of the complex entry, √(se_re² + se_im²).
    pub fn stderr(&self, i: usize, j: usize) -> f64 {
        self.stderr_re(i, j).hypot(self.stderr_im(i, j))
    }
}

/// Parallel map over trajectory indices `0..n_traj` in fixed chunks, merged
/// in chunk order.
fn accumulate<F>(n_traj: u64, slots: usize, psi0: &[C64], run: F) -> Result<Vec<Moments>>
where
    F: Fn(u64, &mut [Moments]) -> Result<()> + Sync,
{
    let n_chunks = n_traj.div_ceil(CHUNK);
    let partials: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut local = vec![Moments::new(psi0); slots];
            let end = ((chunk + 1) * CHUNK).min(n_traj);
            for i in chunk * CHUNK..end {
                run(i, &mut local)?;
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Moments::new(psi0); slots];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// Result of [`ensemble_decay`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleDecay {
    pub t_grid: Vec<f64>,
    pub states: Vec<AveragedState>,
}

impl EnsembleDecay {
    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        self.states.iter().map(|s| s.mean.entry(i, j)).collect()
    }

    pub fn entry_stderr(&self, i: usize, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.stderr(i, j)).collect()
    }
}

/// Averages |ψ⟩⟨ψ| over `n_traj` Poisson-event trajectories at each grid
/// time. Trajectory `i` uses stream `i`; between events the state is held.
pub fn ensemble_decay(
    system0: &StateVector,
    c: &CouplingSpec,
    gamma: f64,
    t_grid: &[f64],
    n_traj: u64,
    streams: &Streams,
) -> Result<EnsembleDecay> {
    check_system_state(system0, c)?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    // Validates gamma and the grid.
    DecaySchedule::new(gamma, C64::new(0.0, 0.0), t_grid.to_vec())?;
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    let collapser = Collapser::new(c);
    let psi0: Vec<C64> = system0.amplitudes().iter().copied().collect();

    let totals = accumulate(n_traj, t_grid.len(), &psi0, |i, slots| {
        let mut rng = streams.stream(i);
        let events = if t_max > 0.0 {
            poisson_events(gamma, t_max, &mut rng)?
        } else {
            Vec::new()
        };
        let mut psi = psi0.clone();
        let mut next = 0;
        for (slot, &t) in slots.iter_mut().zip(t_grid) {
            while next < events.len() && events[next] <= t {
                collapser.step(&mut psi, &mut rng);
                next += 1;
            }
            slot.add(&psi);
        }
        Ok(())
    })?;

    Ok(EnsembleDecay {
        t_grid: t_grid.to_vec(),
        states: totals.iter().map(|m| m.finish(n_traj, system0)).collect(),
    })
}

/// Averages |ψ⟩⟨ψ| over `n_traj` trajectories that each undergo exactly
/// `n_events` collapses.
pub fn fixed_count_ensemble(
    system0: &StateVector,
    c: &CouplingSpec,
    n_events: usize,
    n_traj: u64,
    streams: &Streams,
) -> Result<AveragedState> {
    check_system_state(system0, c)?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let collapser = Collapser::new(c);
    let psi0: Vec<C64> = system0.amplitudes().iter().copied().collect();
    let totals = accumulate(n_traj, 1, &psi0, |i, slots| {
        let mut rng = streams.stream(i);
        let mut psi = psi0.clone();
        for _ in 0..n_events {
            collapser.step(&mut psi, &mut rng);
        }
        slots[0].add(&psi);
        Ok(())
    })?;
    Ok(totals[0].finish(n_traj, system0))
}

/// Decay rate from a log-linear fit of |values| against `t`.
///
/// Points whose magnitude is not at least twice their standard error are
/// dropped. Remaining points are weighted by (|v|/se)²; points with zero
/// error are used unweighted when no point has a nonzero error.
pub fn fit_decay_rate(t: &[f64], values: &[C64], stderr: &[f64]) -> Option<f64> {
    let noisy = stderr.iter().any(|&s| s > 0.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for ((&ti, v), &se) in t.iter().zip(values).zip(stderr) {
        let mag = v.norm();
        if !(mag > 0.0) {
            continue;
        }
        if noisy {
            if se <= 0.0 || mag < 2.0 * se {
                continue;
            }
            ws.push((mag / se).powi(2));
        } else {
            ws.push(1.0);
        }
        xs.push(ti);
        ys.push(mag.ln());
    }
    weighted_line_fit(&xs, &ys, &ws).map(|fit| -fit.slope)
}

/// Undoes the entangling isometry: returns ψ such that `entangle(ψ, c)`
/// equals `joint`. Fails when `joint` is not in the image of the coupling,
/// i.e. an outcome has already been actualized or the coupling is wrong.
pub fn recohere(joint: &StateVector, c: &CouplingSpec) -> Result<StateVector> {
    let expected = [c.system_dim(), c.pointer_dim()];
    if joint.basis().dims() != expected {
        return Err(Error::DimensionMismatch(format!(
            "joint dims {:?} do not match coupling dims {expected:?}",
            joint.basis().dims()
        )));
    }
    let v = c.isometry();
    let psi = v.adjoint() * joint.amplitudes();
    let residual = (joint.amplitudes() - &v * &psi).norm();
    if residual > numerics().weight {
        return Err(Error::OutsideImage { residual });
    }
    let system_basis = joint.basis().factor(0).expect("two factors checked");
    StateVector::normalized(psi.iter().copied().collect(), system_basis)
}
