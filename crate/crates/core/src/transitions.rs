//! Optical transition strengths, Λ-systems and absorption spectra.
//!
//! The optical operator acts on the electron spin only; the nuclear spin is a
//! spectator. Ground and excited manifolds share the same product basis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lineshape::Profile;
use crate::spin::{raising, spin_matrices, CMatrix, FieldVector, LevelSet, ProductBasis};

/// Electron part of the optical transition operator.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum TransitionOperator {
    Identity,
    #[default]
    Sx,
    Sy,
    Sz,
    SPlus,
    SMinus,
    /// A `(2S+1)×(2S+1)` matrix on the electron spin.
    Custom(CMatrix),
}

impl TransitionOperator {
    pub fn name(&self) -> &'static str {
        match self {
            TransitionOperator::Identity => "identity",
            TransitionOperator::Sx => "sx",
            TransitionOperator::Sy => "sy",
            TransitionOperator::Sz => "sz",
            TransitionOperator::SPlus => "s+",
            TransitionOperator::SMinus => "s-",
            TransitionOperator::Custom(_) => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => TransitionOperator::Identity,
            "sx" => TransitionOperator::Sx,
            "sy" => TransitionOperator::Sy,
            "sz" => TransitionOperator::Sz,
            "s+" => TransitionOperator::SPlus,
            "s-" => TransitionOperator::SMinus,
            _ => return None,
        })
    }

    pub fn electron_matrix(&self, basis: &ProductBasis) -> Result<CMatrix> {
        let s = basis.electron;
        let n = s.multiplicity();
        let [sx, sy, sz] = spin_matrices(s);
        Ok(match self {
            TransitionOperator::Identity => CMatrix::identity(n, n),
            TransitionOperator::Sx => sx,
            TransitionOperator::Sy => sy,
            TransitionOperator::Sz => sz,
            TransitionOperator::SPlus => raising(s),
            TransitionOperator::SMinus => raising(s).adjoint(),
            TransitionOperator::Custom(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: m.nrows().max(m.ncols()) });
                }
                if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::invalid("custom transition operator has non-finite entries"));
                }
                m.clone()
            }
        })
    }

    /// `1_nuclear ⊗ O_electron` on the product basis.
    pub fn full_matrix(&self, basis: &ProductBasis) -> Result<CMatrix> {
        let e = self.electron_matrix(basis)?;
        let n = basis.nuclear.multiplicity();
        Ok(DMatrix::<Complex64>::identity(n, n).kronecker(&e))
    }

    /// The operator whose matrix is the adjoint of this one.
    pub fn adjoint(&self) -> Self {
        match self {
            TransitionOperator::SPlus => TransitionOperator::SMinus,
            TransitionOperator::SMinus => TransitionOperator::SPlus,
            TransitionOperator::Custom(m) => TransitionOperator::Custom(m.adjoint()),
            other => other.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionLine {
    pub ground_label: usize,
    pub excited_label: usize,
    /// `E_e − E_g` plus the optical origin (MHz).
    pub frequency: f64,
    /// `|⟨e|O|g⟩|²`.
    pub strength: f64,
    /// Boltzmann population of the ground level.
    pub population_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, stop: f64, count: usize) -> Self {
        FrequencyGrid { start, stop, count }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 || !(self.stop > self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::invalid(format!(
                "frequency grid [{}, {}] with {} points is not usable",
                self.start, self.stop, self.count
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.count).map(|k| self.start + h * k as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumParams {
    /// K.
    pub temperature: f64,
    /// MHz.
    pub inhom_fwhm: f64,
    pub line_profile: Profile,
    pub grid: FrequencyGrid,
    /// MHz/K.
    pub boltzmann_constant: f64,
    /// Added to every optical frequency (MHz).
    pub optical_origin: f64,
}

impl SpectrumParams {
    pub const BOLTZMANN_MHZ_PER_K: f64 = 2.08366e4;
    pub const INHOM_FWHM_IN_FIELD: f64 = 35.0;
    pub const INHOM_FWHM_ZERO_FIELD: f64 = 70.0;

    /// Defaults with the inhomogeneous width appropriate for `field`.
    pub fn for_field(field: &FieldVector) -> Self {
        let inhom_fwhm =
            if field.norm() == 0.0 { Self::INHOM_FWHM_ZERO_FIELD } else { Self::INHOM_FWHM_IN_FIELD };
        SpectrumParams { inhom_fwhm, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature {} K must be positive", self.temperature)));
        }
        if !(self.inhom_fwhm > 0.0) {
            return Err(Error::invalid(format!("inhomogeneous FWHM {} MHz must be positive", self.inhom_fwhm)));
        }
        if !(self.boltzmann_constant > 0.0) {
            return Err(Error::invalid("Boltzmann constant must be positive"));
        }
        if !self.optical_origin.is_finite() {
            return Err(Error::invalid("optical origin must be finite"));
        }
        self.grid.validate()
    }
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            temperature: 2.0,
            inhom_fwhm: Self::INHOM_FWHM_IN_FIELD,
            line_profile: Profile::Gaussian,
            grid: FrequencyGrid::new(-6000.0, 6000.0, 12001),
            boltzmann_constant: Self::BOLTZMANN_MHZ_PER_K,
            optical_origin: 0.0,
        }
    }
}

/// Normalised Boltzmann populations of the levels of `levels`.
pub fn boltzmann_weights(levels: &LevelSet, temperature: f64, boltzmann_constant: f64) -> Vec<f64> {
    let kt = boltzmann_constant * temperature;
    let e = levels.energies();
    let e0 = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = e.iter().map(|&x| (-(x - e0) / kt).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// `|⟨bra_j|O|ket_i⟩|²` for every pair, indexed `[(j, i)]`.
pub fn strength_matrix(bra: &LevelSet, ket: &LevelSet, op: &TransitionOperator) -> Result<DMatrix<f64>> {
    let basis = check_bases(bra, ket)?;
    let o = op.full_matrix(&basis)?;
    let m = bra.vectors().adjoint() * o * ket.vectors();
    Ok(m.map(|c| c.norm_sqr()))
}

fn check_bases(a: &LevelSet, b: &LevelSet) -> Result<ProductBasis> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    match (a.basis(), b.basis()) {
        (Some(x), Some(y)) if x == y => Ok(x),
        (Some(x), Some(y)) => Err(Error::DimensionMismatch { expected: x.dimension(), found: y.dimension() }),
        _ => Err(Error::invalid("transition strengths need level sets with a spin basis")),
    }
}

/// All ground → excited lines, ground-major then excited label.
pub fn transition_table(
    ground: &LevelSet,
    excited: &LevelSet,
    op: &TransitionOperator,
    spectrum: &SpectrumParams,
) -> Result<Vec<TransitionLine>> {
    if !(spectrum.temperature > 0.0) || !(spectrum.boltzmann_constant > 0.0) {
        return Err(Error::invalid("temperature and Boltzmann constant must be positive"));
    }
    let strengths = strength_matrix(excited, ground, op)?;
    let weights = boltzmann_weights(ground, spectrum.temperature, spectrum.boltzmann_constant);
    let mut out = Vec::with_capacity(ground.len() * excited.len());
    for (g, (&eg, &w)) in ground.energies().iter().zip(&weights).enumerate() {
        for (e, &ee) in excited.energies().iter().enumerate() {
            out.push(TransitionLine {
                ground_label: g + 1,
                excited_label: e + 1,
                frequency: ee - eg + spectrum.optical_origin,
                strength: strengths[(e, g)],
                population_weight: w,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaSystem {
    pub ground_a: usize,
    pub ground_b: usize,
    pub excited: usize,
    pub strength_a: f64,
    pub strength_b: f64,
    /// Largest strength from the excited level to any other ground level.
    pub leakage: f64,
    pub asymmetry: f64,
    /// Two-photon (ground) splitting `E(b) − E(a)` in MHz.
    pub splitting: f64,
}

impl LambdaSystem {
    pub fn min_strength(&self) -> f64 {
        self.strength_a.min(self.strength_b)
    }
}

/// Ground pairs `a < b` sharing an excited level with balanced strengths and little leakage,
/// sorted by asymmetry and then by decreasing weaker strength.
pub fn find_lambda_systems(
    table: &[TransitionLine],
    max_asymmetry: f64,
    max_leakage_ratio: f64,
    min_strength: f64,
) -> Result<Vec<LambdaSystem>> {
    for (name, v) in [("max_asymmetry", max_asymmetry), ("max_leakage_ratio", max_leakage_ratio), ("min_strength", min_strength)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} must lie in [0, 1]")));
        }
    }
    let mut excited: Vec<usize> = table.iter().map(|l| l.excited_label).collect();
    excited.sort_unstable();
    excited.dedup();

    let mut found = Vec::new();
    for e in excited {
        let mut lines: Vec<&TransitionLine> = table.iter().filter(|l| l.excited_label == e).collect();
        lines.sort_by_key(|l| l.ground_label);
        for (i, a) in lines.iter().enumerate() {
            for b in &lines[i + 1..] {
                let (sa, sb) = (a.strength, b.strength);
                if sa < min_strength || sb < min_strength || sa + sb == 0.0 {
                    continue;
                }
                let asymmetry = (sa - sb).abs() / (sa + sb);
                let leakage = lines
                    .iter()
                    .filter(|l| l.ground_label != a.ground_label && l.ground_label != b.ground_label)
                    .map(|l| l.strength)
                    .fold(0.0, f64::max);
                let weaker = sa.min(sb);
                if asymmetry > max_asymmetry || weaker == 0.0 || leakage / weaker > max_leakage_ratio {
                    continue;
                }
                found.push(LambdaSystem {
                    ground_a: a.ground_label,
                    ground_b: b.ground_label,
                    excited: e,
                    strength_a: sa,
                    strength_b: sb,
                    leakage,
                    asymmetry,
                    splitting: a.frequency - b.frequency,
                });
            }
        }
    }
    found.sort_by(|x, y| {
        x.asymmetry
            .total_cmp(&y.asymmetry)
            .then(y.min_strength().total_cmp(&x.min_strength()))
            .then((x.excited, x.ground_a, x.ground_b).cmp(&(y.excited, y.ground_a, y.ground_b)))
    });
    Ok(found)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frequency: Vec<f64>,
    pub optical_depth: Vec<f64>,
}

/// Sum of `strength × population × profile` over all lines, sampled on the grid.
pub fn absorption_spectrum(table: &[TransitionLine], spectrum: &SpectrumParams) -> Result<Spectrum> {
    spectrum.validate()?;
    let grid = &spectrum.grid;
    if !table.iter().any(|l| l.frequency >= grid.start && l.frequency <= grid.stop) {
        return Err(Error::invalid("spectrum grid does not cover any transition line"));
    }
    let frequency = grid.values();
    let optical_depth = frequency
        .par_iter()
        .map(|&f| {
            table
                .iter()
                .map(|l| l.strength * l.population_weight * spectrum.line_profile.eval(f - l.frequency, spectrum.inhom_fwhm))
                .sum()
        })
        .collect();
    Ok(Spectrum { frequency, optical_depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{SpinParams, SpinSystem};

    const ZEFOZ_BZ: f64 = 63.627866848694175;

    fn tables(op: &TransitionOperator, bz: f64) -> Vec<TransitionLine> {
        let field = FieldVector::longitudinal(bz);
        let g = SpinSystem::new(&SpinParams::nd143_ground()).unwrap().levels(&field).unwrap();
        let e = SpinSystem::new(&SpinParams::nd143_excited()).unwrap().levels(&field).unwrap();
        transition_table(&g, &e, op, &SpectrumParams::default()).unwrap()
    }

    fn strength(t: &[TransitionLine], g: usize, e: usize) -> f64 {
        t.iter().find(|l| l.ground_label == g && l.excited_label == e).unwrap().strength
    }

    #[test]
    fn sx_couples_9e_to_8g_and_10g_only() {
        let t = tables(&TransitionOperator::Sx, ZEFOZ_BZ);
        assert_eq!(t.len(), 256);
        assert!((strength(&t, 8, 9) - 0.125).abs() < 1e-9);
        assert!((strength(&t, 10, 9) - 0.125).abs() < 1e-9);
        for g in (1..=16).filter(|g| *g != 8 && *g != 10) {
            assert!(strength(&t, g, 9) < 1e-10, "{g}");
        }
    }

    #[test]
    fn identity_does_not_couple_the_lambda() {
        let t = tables(&TransitionOperator::Identity, ZEFOZ_BZ);
        assert!(strength(&t, 8, 9) < 1e-20);
        assert!(strength(&t, 10, 9) < 1e-20);
    }

    #[test]
    fn lambda_search() {
        let t = tables(&TransitionOperator::Sx, ZEFOZ_BZ);
        let found = find_lambda_systems(&t, 0.01, 0.01, 0.0).unwrap();
        let l = found.iter().find(|l| (l.ground_a, l.ground_b, l.excited) == (8, 10, 9)).unwrap();
        assert!((l.splitting - 2087.5).abs() < 1.0);
        assert!(l.asymmetry < 1e-6);
        let none = find_lambda_systems(&t, 0.01, 0.01, 0.1251).unwrap();
        assert!(!none.iter().any(|l| (l.ground_a, l.ground_b, l.excited) == (8, 10, 9)));
        assert!(find_lambda_systems(&[], 0.01, 0.01, 0.0).unwrap().is_empty());
        assert!(find_lambda_systems(&t, 1.5, 0.01, 0.0).is_err());
    }

    #[test]
    fn custom_operator_dimension_is_checked() {
        let basis = SpinParams::nd143_ground().basis();
        let bad = TransitionOperator::Custom(CMatrix::identity(3, 3));
        assert!(matches!(bad.full_matrix(&basis), Err(Error::DimensionMismatch { .. })));
        let sx = TransitionOperator::Sx.electron_matrix(&basis).unwrap();
        assert_eq!(TransitionOperator::Custom(sx.clone()).full_matrix(&basis).unwrap(), TransitionOperator::Sx.full_matrix(&basis).unwrap());
    }

    #[test]
    fn mismatched_dimensions() {
        let small = SpinParams { nuclear_spin: crate::spin::Spin::from_twice(1), ..SpinParams::nd143_ground() };
        let g = SpinSystem::new(&SpinParams::nd143_ground()).unwrap().levels(&FieldVector::ZERO).unwrap();
        let e = SpinSystem::new(&small).unwrap().levels(&FieldVector::ZERO).unwrap();
        let err = transition_table(&g, &e, &TransitionOperator::Sx, &SpectrumParams::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn single_line_spectrum_area() {
        let line = TransitionLine { ground_label: 1, excited_label: 1, frequency: 12.0, strength: 0.3, population_weight: 0.5 };
        let mut p = SpectrumParams { grid: FrequencyGrid::new(-500.0, 500.0, 20001), ..Default::default() };
        let s = absorption_spectrum(&[line], &p).unwrap();
        let area: f64 = s.optical_depth.iter().sum::<f64>() * p.grid.step();
        assert!((area - 0.15).abs() < 0.15e-3);
        let peak = s.optical_depth.iter().cloned().fold(0.0, f64::max);

        p.inhom_fwhm *= 2.0;
        let wide = absorption_spectrum(&[line], &p).unwrap();
        let area2: f64 = wide.optical_depth.iter().sum::<f64>() * p.grid.step();
        let peak2 = wide.optical_depth.iter().cloned().fold(0.0, f64::max);
        assert!((area2 - area).abs() < 1e-3 * area);
        assert!((peak2 / peak - 0.5).abs() < 1e-3);
    }

    #[test]
    fn grid_must_cover_a_line() {
        let line = TransitionLine { ground_label: 1, excited_label: 1, frequency: 1e5, strength: 1.0, population_weight: 1.0 };
        assert!(absorption_spectrum(&[line], &SpectrumParams::default()).is_err());
    }

    #[test]
    fn lines_1_and_2_are_resolved_at_60_5_mt() {
        let t = tables(&TransitionOperator::Sx, 60.5);
        let l1 = *t.iter().find(|l| (l.ground_label, l.excited_label) == (10, 9)).unwrap();
        let l2 = *t.iter().find(|l| (l.ground_label, l.excited_label) == (8, 9)).unwrap();
        assert!(((l2.frequency - l1.frequency) - 2090.0).abs() < 10.0);
        let p = SpectrumParams::for_field(&FieldVector::longitudinal(60.5));
        let s = absorption_spectrum(&[l1, l2], &p).unwrap();
        let h = p.grid.step();
        for line in [l1, l2] {
            let k = ((line.frequency - p.grid.start) / h).round() as usize;
            let peak = s.optical_depth[k];
            let above = s.optical_depth[k - 100..k + 100].iter().filter(|&&v| v >= peak / 2.0).count();
            assert!(((above as f64) * h - 35.0).abs() <= 2.0);
        }
    }

    #[test]
    fn weights_normalise_and_flatten_at_high_temperature() {
        let g = SpinSystem::new(&SpinParams::nd143_ground()).unwrap().levels(&FieldVector::longitudinal(30.0)).unwrap();
        let w = boltzmann_weights(&g, 2.0, SpectrumParams::BOLTZMANN_MHZ_PER_K);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let hot = boltzmann_weights(&g, 1e9, SpectrumParams::BOLTZMANN_MHZ_PER_K);
        assert!(hot.iter().all(|x| (x - 1.0 / 16.0).abs() < 1e-6));
    }

    #[test]
    fn zero_field_uses_wider_line() {
        assert_eq!(SpectrumParams::for_field(&FieldVector::ZERO).inhom_fwhm, 70.0);
        assert_eq!(SpectrumParams::for_field(&FieldVector::longitudinal(1.0)).inhom_fwhm, 35.0);
    }
}
