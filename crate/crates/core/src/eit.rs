//! EIT window of a Λ-system dressed by a superhyperfine comb.
//!
//! Every comb line is an independent Λ-system whose two-photon resonance is
//! shifted by `s_k`. Probe and coupling sit on the centres of their optical
//! lines, so an ion whose optical lines are shifted by `x` sees the probe at
//! optical detuning `−x` and the two-photon detuning `δ₂ = Δf − s_k`.
//! Optical inhomogeneity is a Gaussian of FWHM `optical_inhom_fwhm`.
//!
//! Rates are half-widths in linear-frequency MHz. The field-noise linewidth
//! [`spin_linewidth`] is a FWHM, so each comb line uses `γ_gs = Γ/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field_map::{FieldGrid, FieldMap, ZefozPoint};
use crate::lineshape::{fwhm_to_sigma, gauss_hermite, gaussian_cauchy_transform};
use crate::spin::FieldVector;
use crate::transitions::FrequencyGrid;

/// Clock-transition curvatures of ¹⁴³Nd:YLF (kHz/mT²).
pub const ND_CURVATURES: [f64; 3] = [-52.7, -52.7, 185.3];

/// ¹⁹F gyromagnetic ratio (MHz/mT).
pub const FLUORINE_GAMMA: f64 = 0.04006;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    /// Residual linewidth Γ₀ (MHz).
    pub gamma0: f64,
    /// Field fluctuation amplitudes δBᵢ (mT).
    pub delta_b: [f64; 3],
    /// Curvatures S₂ᵢ (kHz/mT²).
    pub curvatures: [f64; 3],
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { gamma0: 0.5, delta_b: [1.0; 3], curvatures: ND_CURVATURES }
    }
}

impl NoiseModel {
    pub fn from_point(point: &ZefozPoint) -> Self {
        NoiseModel { curvatures: point.curvatures, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0) || !self.gamma0.is_finite() {
            return Err(Error::invalid(format!("gamma0 = {} must be non-negative", self.gamma0)));
        }
        if self.delta_b.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid("field fluctuation amplitudes must be non-negative"));
        }
        if self.curvatures.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("curvatures must be finite"));
        }
        Ok(())
    }
}

/// Spin-transition FWHM (MHz) at offset `delta` from the clock point:
/// `Γ₀ + Σ |S₂ᵢ| δBᵢ √(2δBᵢ² + 4ΔBᵢ²)`.
pub fn spin_linewidth(noise: &NoiseModel, delta: &FieldVector) -> f64 {
    let d = delta.to_array();
    noise.gamma0
        + (0..3)
            .map(|i| {
                let db = noise.delta_b[i];
                noise.curvatures[i].abs() * 1e-3 * db * (2.0 * db * db + 4.0 * d[i] * d[i]).sqrt()
            })
            .sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InhomogeneousAverage {
    /// Closed form through the Faddeeva function.
    Exact,
    /// Gauss–Hermite quadrature with the given node count.
    GaussHermite(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaParams {
    /// Coupling Rabi frequency Ω_c (MHz).
    pub rabi_coupling: f64,
    /// γ_ge (MHz, half-width).
    pub optical_dephasing: f64,
    /// γ_gs (MHz, half-width); replaced per comb line by `Γ/2` in [`eit_profile`].
    pub spin_dephasing: f64,
    /// MHz; 0 disables the average.
    pub optical_inhom_fwhm: f64,
    /// Centre of the comb in two-photon detuning (MHz).
    pub two_photon_offset: f64,
    /// Scales relative absorption into the transmission ratio.
    pub optical_depth: f64,
    pub averaging: InhomogeneousAverage,
}

impl Default for LambdaParams {
    fn default() -> Self {
        LambdaParams {
            rabi_coupling: 6.5,
            optical_dephasing: 1.0,
            spin_dephasing: 0.0,
            optical_inhom_fwhm: 35.0,
            two_photon_offset: 0.0,
            optical_depth: 1.0,
            averaging: InhomogeneousAverage::Exact,
        }
    }
}

impl LambdaParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("rabi_coupling", self.rabi_coupling),
            ("optical_dephasing", self.optical_dephasing),
            ("spin_dephasing", self.spin_dephasing),
            ("optical_inhom_fwhm", self.optical_inhom_fwhm),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.rabi_coupling == 0.0 && self.optical_dephasing == 0.0 && self.spin_dephasing == 0.0 {
            return Err(Error::SingularParameters);
        }
        if self.optical_dephasing == 0.0 {
            return Err(Error::invalid("optical_dephasing must be positive to normalise the absorption"));
        }
        if !self.two_photon_offset.is_finite() {
            return Err(Error::invalid("two_photon_offset must be finite"));
        }
        if !(self.optical_depth > 0.0) || !self.optical_depth.is_finite() {
            return Err(Error::invalid("optical_depth must be positive"));
        }
        if self.averaging == InhomogeneousAverage::GaussHermite(0) {
            return Err(Error::invalid("Gauss-Hermite averaging needs at least one node"));
        }
        Ok(())
    }

    fn with_spin_dephasing(&self, gamma_gs: f64) -> Self {
        LambdaParams { spin_dephasing: gamma_gs, ..self.clone() }
    }

    fn uncoupled(&self) -> Self {
        LambdaParams { rabi_coupling: 0.0, ..self.clone() }
    }
}

/// Effective optical damping `Z` with `χ = iγ_ge / (Z + iδ_p)`; `None` when the
/// dark state is perfect (`γ_gs = δ₂ = 0`, `Ω_c > 0`) and `χ` vanishes.
fn effective_damping(two_photon: f64, p: &LambdaParams) -> Option<Complex64> {
    let ge = Complex64::new(p.optical_dephasing, 0.0);
    if p.rabi_coupling == 0.0 {
        return Some(ge);
    }
    let spin = Complex64::new(p.spin_dephasing, two_photon);
    if spin == Complex64::new(0.0, 0.0) {
        return None;
    }
    Some(ge + 0.25 * p.rabi_coupling * p.rabi_coupling / spin)
}

/// Weak-probe response `iγ_ge(γ_gs + iδ₂) / [(γ_ge + iδ_p)(γ_gs + iδ₂) + (Ω_c/2)²]`,
/// normalised so that `Im χ = 1` at `Ω_c = 0`, `δ_p = 0`.
pub fn susceptibility(probe_detuning: f64, two_photon_detuning: f64, p: &LambdaParams) -> Result<Complex64> {
    p.validate()?;
    Ok(match effective_damping(two_photon_detuning, p) {
        Some(z) => Complex64::new(0.0, p.optical_dephasing) / (z + Complex64::new(0.0, probe_detuning)),
        None => Complex64::new(0.0, 0.0),
    })
}

/// `χ` averaged over the optical inhomogeneous distribution, with the probe at
/// optical detuning `−x` for an ion shifted by `x`.
pub fn averaged_susceptibility(two_photon_detuning: f64, p: &LambdaParams) -> Result<Complex64> {
    p.validate()?;
    Ok(average(two_photon_detuning, p, &nodes(p)))
}

fn nodes(p: &LambdaParams) -> Vec<(f64, f64)> {
    match p.averaging {
        InhomogeneousAverage::GaussHermite(n) if p.optical_inhom_fwhm > 0.0 => {
            let scale = 2f64.sqrt() * fwhm_to_sigma(p.optical_inhom_fwhm);
            let (t, w) = gauss_hermite(n);
            t.into_iter().zip(w).map(|(t, w)| (scale * t, w / PI.sqrt())).collect()
        }
        _ => Vec::new(),
    }
}

fn average(two_photon: f64, p: &LambdaParams, nodes: &[(f64, f64)]) -> Complex64 {
    let Some(z) = effective_damping(two_photon, p) else {
        return Complex64::new(0.0, 0.0);
    };
    let ge = p.optical_dephasing;
    let i = Complex64::new(0.0, 1.0);
    if p.optical_inhom_fwhm == 0.0 {
        return i * ge / z;
    }
    match p.averaging {
        // iγ/(Z − ix) = γ/(ζ − x) with ζ = −iZ
        InhomogeneousAverage::Exact => gaussian_cauchy_transform(-i * z, fwhm_to_sigma(p.optical_inhom_fwhm)) * ge,
        InhomogeneousAverage::GaussHermite(_) => nodes
            .iter()
            .map(|&(x, w)| i * ge * w / (z - i * x))
            .fold(Complex64::new(0.0, 0.0), |a, b| a + b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CombSpacing {
    /// Fluorine Larmor frequency `γ_F·|B|` at the applied field.
    Larmor { gamma: f64 },
    /// MHz.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CombWeights {
    /// Gaussian envelope of the given FWHM (MHz) sampled at the line shifts.
    Gaussian { fwhm: f64 },
    /// `C(n−1, k) / 2^(n−1)`.
    Binomial,
    Flat,
    /// Renormalised to unit sum.
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombModel {
    pub n_lines: usize,
    pub spacing: CombSpacing,
    pub weights: CombWeights,
    /// Sets the per-line spin linewidth.
    pub noise: NoiseModel,
}

impl Default for CombModel {
    fn default() -> Self {
        CombModel {
            n_lines: 9,
            spacing: CombSpacing::Larmor { gamma: FLUORINE_GAMMA },
            weights: CombWeights::Gaussian { fwhm: 12.0 },
            noise: NoiseModel::default(),
        }
    }
}

impl CombModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_lines == 0 || self.n_lines.is_multiple_of(2) {
            return Err(Error::invalid(format!("comb needs an odd number of lines, got {}", self.n_lines)));
        }
        match self.spacing {
            CombSpacing::Larmor { gamma } if !(gamma > 0.0) || !gamma.is_finite() => {
                return Err(Error::invalid("Larmor ratio must be positive"))
            }
            CombSpacing::Fixed(s) if !(s > 0.0) || !s.is_finite() => {
                return Err(Error::invalid(format!("comb spacing {s} MHz must be positive")))
            }
            _ => {}
        }
        match &self.weights {
            CombWeights::Gaussian { fwhm } if !(*fwhm > 0.0) || !fwhm.is_finite() => {
                return Err(Error::invalid("comb envelope FWHM must be positive"))
            }
            CombWeights::Binomial if self.n_lines > 1025 => {
                return Err(Error::invalid("binomial comb weights limited to 1025 lines"))
            }
            CombWeights::Custom(w) => {
                if w.len() != self.n_lines {
                    return Err(Error::DimensionMismatch { expected: self.n_lines, found: w.len() });
                }
                if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
                    return Err(Error::invalid("custom comb weights must be non-negative with a positive sum"));
                }
            }
            _ => {}
        }
        self.noise.validate()
    }

    /// Line spacing (MHz) at the applied field.
    pub fn spacing_at(&self, field: &FieldVector) -> f64 {
        match self.spacing {
            CombSpacing::Larmor { gamma } => gamma * field.norm(),
            CombSpacing::Fixed(s) => s,
        }
    }

    /// `s_k = (k − (n−1)/2)·spacing`.
    pub fn shifts(&self, spacing: f64) -> Vec<f64> {
        let centre = (self.n_lines as f64 - 1.0) / 2.0;
        (0..self.n_lines).map(|k| (k as f64 - centre) * spacing).collect()
    }

    pub fn line_weights(&self, spacing: f64) -> Vec<f64> {
        let raw: Vec<f64> = match &self.weights {
            CombWeights::Gaussian { fwhm } => {
                let sigma = fwhm_to_sigma(*fwhm);
                self.shifts(spacing).iter().map(|s| (-0.5 * (s / sigma).powi(2)).exp()).collect()
            }
            CombWeights::Binomial => {
                let n = self.n_lines - 1;
                let mut row = vec![1.0; 1];
                for _ in 0..n {
                    let mut next = vec![1.0; row.len() + 1];
                    for k in 1..row.len() {
                        next[k] = row[k - 1] + row[k];
                    }
                    row = next;
                }
                row
            }
            CombWeights::Flat => vec![1.0; self.n_lines],
            CombWeights::Custom(w) => w.clone(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EitProfile {
    /// Two-photon detuning Δf (MHz).
    pub detuning: Vec<f64>,
    pub alpha_on: Vec<f64>,
    pub alpha_off: Vec<f64>,
    /// Probe transmission with the coupling on relative to off, `exp(OD·(α_off − α_on))`.
    pub transmission: Vec<f64>,
    pub amplitude: f64,
    /// Per-line spin FWHM Γ (MHz).
    pub linewidth: f64,
    /// MHz.
    pub spacing: f64,
    /// Grid span is smaller than the comb extent.
    pub narrow_grid: bool,
}

impl EitProfile {
    pub fn contrast(&self) -> Vec<f64> {
        self.alpha_off.iter().zip(&self.alpha_on).map(|(a, b)| a - b).collect()
    }
}

/// Detuning grid used when none is given: ±20 MHz in 50 kHz steps.
pub fn default_detuning() -> FrequencyGrid {
    FrequencyGrid::new(-20.0, 20.0, 801)
}

pub fn default_detuning_grid() -> Vec<f64> {
    default_detuning().values()
}

/// Relative absorption with and without coupling over the two-photon detuning grid.
///
/// `bias` is the clock-point field (for the Larmor spacing) and `delta` the
/// offset from it (for the linewidth).
pub fn eit_profile(
    comb: &CombModel,
    p: &LambdaParams,
    bias: &FieldVector,
    delta: &FieldVector,
    grid: &[f64],
) -> Result<EitProfile> {
    comb.validate()?;
    p.validate()?;
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("detuning grid must be finite and strictly ascending"));
    }
    let spacing = comb.spacing_at(&(*bias + *delta));
    if comb.n_lines > 1 && !(spacing > 0.0) {
        return Err(Error::invalid("comb spacing vanishes at zero field"));
    }
    let linewidth = spin_linewidth(&comb.noise, delta);
    let on = p.with_spin_dephasing(0.5 * linewidth);
    let off = p.uncoupled();
    let shifts = comb.shifts(spacing);
    let weights = comb.line_weights(spacing);
    let quad = nodes(p);

    let absorb = |params: &LambdaParams, df: f64| -> f64 {
        shifts
            .iter()
            .zip(&weights)
            .map(|(s, w)| w * average(df - p.two_photon_offset - s, params, &quad).im)
            .sum()
    };
    let norm = absorb(&off, p.two_photon_offset);
    if !(norm > 0.0) {
        return Err(Error::ZeroAbsorption);
    }
    let pairs: Vec<(f64, f64)> = grid.par_iter().map(|&df| (absorb(&on, df) / norm, absorb(&off, df) / norm)).collect();
    let (alpha_on, alpha_off): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let transmission = alpha_off.iter().zip(&alpha_on).map(|(a, b)| (p.optical_depth * (a - b)).exp()).collect();
    let extent = (comb.n_lines as f64 - 1.0) * spacing;
    let mut profile = EitProfile {
        detuning: grid.to_vec(),
        alpha_on,
        alpha_off,
        transmission,
        amplitude: 0.0,
        linewidth,
        spacing,
        narrow_grid: grid[grid.len() - 1] - grid[0] < extent,
    };
    profile.amplitude = eit_amplitude(&profile)?;
    Ok(profile)
}

/// Largest `(α_off − α_on)/α_off` over the grid, clamped to `[0, 1]`.
pub fn eit_amplitude(profile: &EitProfile) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&off, &on) in profile.alpha_off.iter().zip(&profile.alpha_on) {
        let diff = off - on;
        if best.is_none_or(|(d, _)| diff > d) {
            best = Some((diff, off));
        }
    }
    let Some((diff, off)) = best else {
        return Err(Error::invalid("empty EIT profile"));
    };
    if !(off > 0.0) {
        return Err(Error::ZeroAbsorption);
    }
    Ok((diff / off).clamp(0.0, 1.0))
}

/// Interior strict local maxima; a flat top counts once, at its middle.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < values.len() {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < values.len() && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < values.len() && values[j + 1] < values[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Transmission maxima positions (MHz), refined by a parabola through each
/// grid maximum and its neighbours.
pub fn transmission_peaks(profile: &EitProfile) -> Vec<f64> {
    let (x, y) = (&profile.detuning, &profile.transmission);
    local_maxima(y)
        .into_iter()
        .map(|i| {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            let d0 = (y[i] - y[i - 1]) / h0;
            let d1 = (y[i + 1] - y[i]) / h1;
            let slope = (d0 * h1 + d1 * h0) / (h0 + h1);
            let second = 2.0 * (d1 - d0) / (h0 + h1);
            if second < 0.0 {
                x[i] + (-slope / second).clamp(-h0, h1)
            } else {
                x[i]
            }
        })
        .collect()
}

/// Full width at half maximum of `α_off − α_on`, between the outermost
/// half-maximum crossings; `None` if the feature runs off the grid.
pub fn feature_fwhm(profile: &EitProfile) -> Option<f64> {
    let c = profile.contrast();
    let x = &profile.detuning;
    let peak = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let first = c.iter().position(|&v| v >= half)?;
    let last = c.iter().rposition(|&v| v >= half)?;
    if first == 0 || last + 1 == c.len() {
        return None;
    }
    let cross = |a: usize, b: usize| x[a] + (half - c[a]) * (x[b] - x[a]) / (c[b] - c[a]);
    Some(cross(last, last + 1) - cross(first - 1, first))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub field: FieldVector,
    /// Two-photon frequency from the quadratic model (MHz).
    pub omega12: f64,
    /// Same from direct diagonalisation, when requested.
    pub omega12_exact: Option<f64>,
    pub linewidth: f64,
    pub amplitude: f64,
}

/// EIT amplitude and clock frequency along a 1-D field sweep through `point`.
pub fn amplitude_vs_field(
    point: &ZefozPoint,
    comb: &CombModel,
    p: &LambdaParams,
    sweep: &FieldGrid,
    detuning: &[f64],
    exact: Option<&FieldMap>,
) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    sweep.sweep_axis()?;
    sweep
        .points()
        .par_iter()
        .map(|field| {
            let delta = *field - point.field;
            let profile = eit_profile(comb, p, &point.field, &delta, detuning)?;
            let omega12_exact = exact.map(|m| m.frequency(field, &point.selector)).transpose()?;
            Ok(SweepRow {
                field: *field,
                omega12: point.quadratic_model(&delta),
                omega12_exact,
                linewidth: profile.linewidth,
                amplitude: profile.amplitude,
            })
        })
        .collect()
}
