//! Position-basis detection of the emitter on a pixelated screen.
//!
//! Each slit state propagates to the screen as `⟨x|A⟩ = g(x)·e^{+iθ(x)}`,
//! `⟨x|B⟩ = g(x)·e^{-iθ(x)}` with θ(x) = π s x / (λ L) and a Gaussian
//! envelope g. A relative emitter state u_A|A⟩ + u_B|B⟩ then hits pixel x
//! with weight |u_A⟨x|A⟩ + u_B⟨x|B⟩|².

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::RelativeDecomposition;
use crate::error::{Error, Result};
use crate::qcore::{StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenGeometry {
    pub n_pixels: usize,
    pub slit_separation: f64,
    pub distance: f64,
    pub wavelength: f64,
    pub envelope_width: f64,
    /// Half-width of the pixel grid in units of `envelope_width`.
    pub half_span: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        // Fringe period λL/s = 0.1: twenty periods inside ±w and about ten
        // pixels per period.
        Self {
            n_pixels: 1024,
            slit_separation: 1.0,
            distance: 1.0,
            wavelength: 0.1,
            envelope_width: 1.0,
            half_span: 5.0,
        }
    }
}

impl ScreenGeometry {
    /// Spatial period of cos 2θ(x).
    pub fn fringe_period(&self) -> f64 {
        self.wavelength * self.distance / self.slit_separation
    }

    /// θ(x)
    pub fn phase(&self, x: f64) -> f64 {
        std::f64::consts::PI * self.slit_separation * x / (self.wavelength * self.distance)
    }

    fn validate(&self) -> Result<()> {
        if self.n_pixels < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 pixels, got {}",
                self.n_pixels
            )));
        }
        for (name, v) in [
            ("slit_separation", self.slit_separation),
            ("distance", self.distance),
            ("wavelength", self.wavelength),
            ("envelope_width", self.envelope_width),
            ("half_span", self.half_span),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScreenModel {
    geometry: ScreenGeometry,
    coords: Vec<f64>,
    amp_a: Vec<C64>,
    amp_b: Vec<C64>,
}

fn normalize(v: &mut [C64]) {
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in v {
        *a /= norm;
    }
}

/// Far-field amplitudes of both slits on a symmetric pixel grid.
pub fn build_screen(geometry: ScreenGeometry) -> Result<ScreenModel> {
    geometry.validate()?;
    let n = geometry.n_pixels;
    let half = geometry.half_span * geometry.envelope_width;
    let coords: Vec<f64> = (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect();
    let w = geometry.envelope_width;
    // |g|² is a Gaussian of standard deviation w.
    let envelope = |x: f64| (-x * x / (4.0 * w * w)).exp();
    let mut amp_a: Vec<C64> = coords
        .iter()
        .map(|&x| C64::from_polar(envelope(x), geometry.phase(x)))
        .collect();
    let mut amp_b: Vec<C64> = coords
        .iter()
        .map(|&x| C64::from_polar(envelope(x), -geometry.phase(x)))
        .collect();
    normalize(&mut amp_a);
    normalize(&mut amp_b);
    Ok(ScreenModel {
        geometry,
        coords,
        amp_a,
        amp_b,
    })
}

impl ScreenModel {
    pub fn geometry(&self) -> &ScreenGeometry {
        &self.geometry
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn amp_a(&self) -> &[C64] {
        &self.amp_a
    }

    pub fn amp_b(&self) -> &[C64] {
        &self.amp_b
    }

    pub fn n_pixels(&self) -> usize {
        self.coords.len()
    }

    pub fn pitch(&self) -> f64 {
        self.coords[1] - self.coords[0]
    }

    /// Grid inner product ⟨A|B⟩ of the propagated slit states.
    pub fn slit_overlap(&self) -> C64 {
        self.amp_a
            .iter()
            .zip(&self.amp_b)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Per-pixel envelope (|⟨x|A⟩|² + |⟨x|B⟩|²)/2.
    pub fn envelope(&self) -> Vec<f64> {
        self.amp_a
            .iter()
            .zip(&self.amp_b)
            .map(|(a, b)| 0.5 * (a.norm_sqr() + b.norm_sqr()))
            .collect()
    }
}

/// Unnormalized hit intensity |u_A⟨x|A⟩ + u_B⟨x|B⟩|² of an emitter state.
fn pixel_intensity(atom_state: &StateVector, sm: &ScreenModel) -> Result<Vec<f64>> {
    if atom_state.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "screen needs a two-slit state, got dimension {}",
            atom_state.dim()
        )));
    }
    let (ua, ub) = (atom_state.amplitudes()[0], atom_state.amplitudes()[1]);
    Ok(sm
        .amp_a
        .iter()
        .zip(&sm.amp_b)
        .map(|(a, b)| (ua * a + ub * b).norm_sqr())
        .collect())
}

fn normalized_distribution(mut w: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter(
            "emitter state has no support on the screen".into(),
        ));
    }
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Hit distribution of a single emitter state, normalized to 1.
pub fn pixel_weights(atom_state: &StateVector, sm: &ScreenModel) -> Result<Vec<f64>> {
    normalized_distribution(pixel_intensity(atom_state, sm)?)
}

/// P(x) ∝ Σ_k magnitude_k² |⟨x|state_k⟩|², normalized once over the grid.
///
/// The single overall normalization makes P depend only on the reduced
/// emitter state, so any decomposition of the same state gives the same P.
pub fn total_distribution(rd: &RelativeDecomposition, sm: &ScreenModel) -> Result<Vec<f64>> {
    let mut p = vec![0.0; sm.n_pixels()];
    for comp in rd.components() {
        let Some(state) = &comp.state else { continue };
        let weight = comp.magnitude * comp.magnitude;
        for (acc, w) in p.iter_mut().zip(pixel_intensity(state, sm)?) {
            *acc += weight * w;
        }
    }
    normalized_distribution(p)
}

/// Envelope-corrected fringe visibility over the central region |x| ≤ w.
///
/// P(x) divided by the envelope is fitted by least squares to
/// `a0 + a1·cos 2θ(x) + a2·sin 2θ(x)`; the visibility of that fringe,
/// (max - min)/(max + min), is `√(a1² + a2²)/a0`.
pub fn fringe_visibility(p: &[f64], sm: &ScreenModel) -> Result<f64> {
    if p.len() != sm.n_pixels() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} pixels",
            p.len(),
            sm.n_pixels()
        )));
    }
    let g = &sm.geometry;
    let period = g.fringe_period();
    let pitch = sm.pitch();
    if pitch > period / 8.0 {
        return Err(Error::InsufficientFringeResolution { pitch, period });
    }
    let half = g.envelope_width;
    let periods = 2.0 * half / period;
    if periods < 3.0 {
        return Err(Error::TooFewFringes { periods });
    }

    let envelope = sm.envelope();
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for ((&x, &px), &env) in sm.coords.iter().zip(p).zip(&envelope) {
        if x.abs() > half || env <= 0.0 {
            continue;
        }
        let y = px / env;
        let two_theta = 2.0 * g.phase(x);
        let basis = Vector3::new(1.0, two_theta.cos(), two_theta.sin());
        normal += basis * basis.transpose();
        rhs += basis * y;
    }
    let coef = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("degenerate fringe fit".into()))?;
    if !(coef[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "no intensity in the central region".into(),
        ));
    }
    Ok((coef[1].hypot(coef[2]) / coef[0]).clamp(0.0, 1.0))
}

/// Detector counts per pixel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HitHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

/// `n` independent pixel draws from `p` by inverse CDF.
pub fn sample_hits<R: Rng + ?Sized>(p: &[f64], n: u64, rng: &mut R) -> Result<HitHistogram> {
    if p.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "pixel probabilities must be non-negative".into(),
        ));
    }
    let mut cumulative = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let mut counts = vec![0u64; p.len()];
    for _ in 0..n {
        let target = rng.random::<f64>() * acc;
        let i = cumulative
            .partition_point(|&c| c <= target)
            .min(p.len() - 1);
        counts[i] += 1;
    }
    Ok(HitHistogram { counts, total: n })
}
