//! Transition frequencies as functions of the applied field.
//!
//! Gradients come from Hellmann–Feynman expectation values of `∂H/∂Bᵢ` and
//! are cross-checked against central differences on every call. Hessians use
//! central second differences with one Richardson step. Stationary points of
//! a transition frequency (ZEFOZ points) are found by root finding on `∇ω`,
//! which treats minima, maxima and saddles alike.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ion_file::{Ion, State};
use crate::spin::{Axis, FieldVector, LevelSet, SpinSystem};

/// Smallest finite-difference step accepted for Hessians (mT).
pub const MIN_HESSIAN_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Manifold {
    Ground,
    Excited,
    /// Lower label in the ground manifold, upper label in the excited one.
    Optical,
}

impl Manifold {
    pub fn name(self) -> &'static str {
        match self {
            Manifold::Ground => "ground",
            Manifold::Excited => "excited",
            Manifold::Optical => "optical",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ground" => Some(Manifold::Ground),
            "excited" => Some(Manifold::Excited),
            "optical" => Some(Manifold::Optical),
            _ => None,
        }
    }
}

/// A transition `lower → upper` with 1-based, energy-ordered labels.
/// The frequency is `E(upper) − E(lower)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransitionSelector {
    pub manifold: Manifold,
    pub lower: usize,
    pub upper: usize,
}

impl TransitionSelector {
    pub const fn ground(lower: usize, upper: usize) -> Self {
        TransitionSelector { manifold: Manifold::Ground, lower, upper }
    }

    pub const fn excited(lower: usize, upper: usize) -> Self {
        TransitionSelector { manifold: Manifold::Excited, lower, upper }
    }

    pub const fn optical(ground: usize, excited: usize) -> Self {
        TransitionSelector { manifold: Manifold::Optical, lower: ground, upper: excited }
    }

    /// The `|8g⟩ ↔ |10g⟩` clock transition of ¹⁴³Nd:YLF.
    pub const fn nd_clock() -> Self {
        Self::ground(8, 10)
    }

    fn states(self) -> (State, State) {
        match self.manifold {
            Manifold::Ground => (State::Ground, State::Ground),
            Manifold::Excited => (State::Excited, State::Excited),
            Manifold::Optical => (State::Ground, State::Excited),
        }
    }
}

impl fmt::Display for TransitionSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = match self.manifold {
            Manifold::Ground => ("g", "g"),
            Manifold::Excited => ("e", "e"),
            Manifold::Optical => ("g", "e"),
        };
        write!(f, "{}{}-{}{}", self.lower, a, self.upper, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeSettings {
    /// Central-difference step for gradients (mT).
    pub gradient_step: f64,
    /// Base step for Hessians (mT); the Richardson step uses half of it.
    pub hessian_step: f64,
    pub richardson: bool,
    /// Level gaps below this (MHz) make Hellmann–Feynman unreliable.
    pub degeneracy_gap: f64,
}

impl Default for DerivativeSettings {
    fn default() -> Self {
        DerivativeSettings { gradient_step: 0.01, hessian_step: 0.5, richardson: true, degeneracy_gap: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    HellmannFeynman,
    /// A level of the pair was nearly degenerate with a neighbour.
    FiniteDifference,
}

/// `∂ω/∂Bᵢ` in MHz/mT.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gradient {
    pub value: [f64; 3],
    pub finite_difference: [f64; 3],
    pub method: GradientMethod,
    /// Smallest gap (MHz) between either level of the pair and its neighbours.
    pub min_gap: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest component difference between the returned and the finite-difference gradient.
    pub fn discrepancy(&self) -> f64 {
        self.value
            .iter()
            .zip(&self.finite_difference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_flagged(&self) -> bool {
        self.method == GradientMethod::FiniteDifference
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(v: f64, zero: f64) -> Self {
        if v > zero {
            Sign::Positive
        } else if v < -zero {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Negative => "-",
            Sign::Zero => "0",
            Sign::Positive => "+",
        })
    }
}

/// Quadratic-form matrix `Qᵢⱼ = ½ ∂²ω/∂Bᵢ∂Bⱼ` in kHz/mT², so that
/// `ω ≈ ω₀ + ΔBᵀ Q ΔB` about a stationary point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyHessian {
    pub matrix: Matrix3<f64>,
}

impl FrequencyHessian {
    /// Curvatures `S₂ᵢ = Qᵢᵢ` (kHz/mT²).
    pub fn curvatures(&self) -> [f64; 3] {
        [self.matrix[(0, 0)], self.matrix[(1, 1)], self.matrix[(2, 2)]]
    }

    /// Plain second derivatives `∂²ω/∂Bᵢ∂Bⱼ` (MHz/mT²).
    pub fn second_derivatives(&self) -> Matrix3<f64> {
        self.matrix * 2e-3
    }

    pub fn signature(&self) -> [Sign; 3] {
        self.curvatures().map(|c| Sign::of(c, 1e-6))
    }
}

/// One inclusive linear axis of a [`FieldGrid`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl AxisRange {
    pub const fn fixed(value: f64) -> Self {
        AxisRange { start: value, stop: value, count: 1 }
    }

    pub const fn new(start: f64, stop: f64, count: usize) -> Self {
        AxisRange { start, stop, count }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::invalid("grid axis needs at least one point"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop < self.start {
            return Err(Error::invalid(format!("grid axis [{}, {}] is not an interval", self.start, self.stop)));
        }
        Ok(())
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.count == 1 {
            self.start
        } else {
            self.start + (self.stop - self.start) * k as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.value(k)).collect()
    }

    pub fn is_free(&self) -> bool {
        self.stop > self.start
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.stop - self.start) / (self.count - 1) as f64
        } else {
            0.0
        }
    }
}

/// Rectangular grid of fields (mT). Axes with `stop > start` are free; the
/// others are held at `start`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldGrid {
    pub axes: [AxisRange; 3],
}

impl FieldGrid {
    pub fn new(x: AxisRange, y: AxisRange, z: AxisRange) -> Self {
        FieldGrid { axes: [x, y, z] }
    }

    pub fn point(field: FieldVector) -> Self {
        FieldGrid { axes: field.to_array().map(AxisRange::fixed) }
    }

    /// A 1-D sweep along `axis` with the other components taken from `base`.
    pub fn line(base: FieldVector, axis: Axis, start: f64, stop: f64, count: usize) -> Self {
        let mut axes = base.to_array().map(AxisRange::fixed);
        axes[axis.index()] = AxisRange::new(start, stop, count);
        FieldGrid { axes }
    }

    pub fn validate(&self) -> Result<()> {
        self.axes.iter().try_for_each(AxisRange::validate)
    }

    pub fn axis(&self, axis: Axis) -> &AxisRange {
        &self.axes[axis.index()]
    }

    pub fn free_axes(&self) -> Vec<Axis> {
        Axis::ALL.into_iter().filter(|a| self.axis(*a).is_free()).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in x-outer, z-inner order.
    pub fn points(&self) -> Vec<FieldVector> {
        let [x, y, z] = &self.axes;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..x.count {
            for j in 0..y.count {
                for k in 0..z.count {
                    out.push(FieldVector::new(x.value(i), y.value(j), z.value(k)));
                }
            }
        }
        out
    }

    pub fn contains(&self, field: &FieldVector, slack: f64) -> bool {
        Axis::ALL.into_iter().all(|a| {
            let r = self.axis(a);
            let v = field.component(a);
            v >= r.start - slack && v <= r.stop + slack
        })
    }

    /// The single varying axis of a 1-D grid (`None` for a single point).
    pub fn sweep_axis(&self) -> Result<Option<Axis>> {
        let varying: Vec<Axis> = Axis::ALL.into_iter().filter(|a| self.axis(*a).count > 1).collect();
        match varying.as_slice() {
            [] => Ok(None),
            [a] => Ok(Some(*a)),
            _ => Err(Error::invalid("expected a one-dimensional field grid")),
        }
    }
}

/// A stationary point of a transition frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ZefozPoint {
    pub selector: TransitionSelector,
    pub field: FieldVector,
    /// Transition frequency at the point (MHz).
    pub omega0: f64,
    /// Norm of the gradient over the searched axes (MHz/mT).
    pub gradient_residual: f64,
    /// `S₂ᵢ` in kHz/mT², see [`FrequencyHessian::curvatures`].
    pub curvatures: [f64; 3],
    pub hessian: FrequencyHessian,
    pub signature: [Sign; 3],
}

impl ZefozPoint {
    pub fn quadratic_model(&self, delta: &FieldVector) -> f64 {
        quadratic_model(self.omega0, &self.curvatures, delta)
    }
}

/// `ω₀ + Σ S₂ᵢ ΔBᵢ²` with `S₂ᵢ` in kHz/mT² and the result in MHz.
pub fn quadratic_model(omega0: f64, curvatures: &[f64; 3], delta: &FieldVector) -> f64 {
    let d = delta.to_array();
    omega0 + (0..3).map(|i| curvatures[i] * d[i] * d[i]).sum::<f64>() * 1e-3
}

/// Energies of every level along a 1-D field sweep, tracked by eigenvector overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelDiagram {
    pub fields: Vec<FieldVector>,
    /// `curves[c][p]`: energy of the curve that starts as level `c + 1` at the first point.
    pub curves: Vec<Vec<f64>>,
    /// Smallest assigned overlap `|⟨v(prev)|v(next)⟩|` when arriving at each point (1 at the first).
    pub min_overlap: Vec<f64>,
    /// Points where some assignment overlap fell below [`LevelDiagram::TRACKING_THRESHOLD`].
    pub flagged: Vec<bool>,
}

impl LevelDiagram {
    pub const TRACKING_THRESHOLD: f64 = 0.6;
}

/// Frequencies and their field derivatives for one ion.
#[derive(Clone, Debug)]
pub struct FieldMap {
    ground: SpinSystem,
    excited: SpinSystem,
    optical_origin: f64,
    pub settings: DerivativeSettings,
}

impl FieldMap {
    pub fn new(ion: &Ion) -> Result<Self> {
        Ok(FieldMap {
            ground: SpinSystem::new(&ion.ground)?,
            excited: SpinSystem::new(&ion.excited)?,
            optical_origin: ion.optical_origin,
            settings: DerivativeSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: DerivativeSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn system(&self, state: State) -> &SpinSystem {
        match state {
            State::Ground => &self.ground,
            State::Excited => &self.excited,
        }
    }

    pub fn levels(&self, state: State, field: &FieldVector) -> Result<LevelSet> {
        self.system(state).levels(field)
    }

    fn check_labels(&self, sel: &TransitionSelector) -> Result<()> {
        let (lo, hi) = sel.states();
        for (label, state) in [(sel.lower, lo), (sel.upper, hi)] {
            let dim = self.system(state).dimension();
            if label == 0 || label > dim {
                return Err(Error::LabelOutOfRange { label, dimension: dim });
            }
        }
        Ok(())
    }

    fn pair_levels(&self, field: &FieldVector, sel: &TransitionSelector) -> Result<(LevelSet, Option<LevelSet>)> {
        self.check_labels(sel)?;
        let (lo, hi) = sel.states();
        let lower = self.levels(lo, field)?;
        let upper = if hi == lo { None } else { Some(self.levels(hi, field)?) };
        Ok((lower, upper))
    }

    fn offset(&self, sel: &TransitionSelector) -> f64 {
        if sel.manifold == Manifold::Optical {
            self.optical_origin
        } else {
            0.0
        }
    }

    /// `E(upper) − E(lower)` in MHz, plus the optical origin for optical selectors.
    pub fn frequency(&self, field: &FieldVector, sel: &TransitionSelector) -> Result<f64> {
        let (lower, upper) = self.pair_levels(field, sel)?;
        let upper = upper.as_ref().unwrap_or(&lower);
        Ok(upper.energy(sel.upper)? - lower.energy(sel.lower)? + self.offset(sel))
    }

    fn fd_gradient(&self, field: &FieldVector, sel: &TransitionSelector, h: f64) -> Result<[f64; 3]> {
        let mut g = [0.0; 3];
        for axis in Axis::ALL {
            let b = field.component(axis);
            let plus = self.frequency(&field.with_component(axis, b + h), sel)?;
            let minus = self.frequency(&field.with_component(axis, b - h), sel)?;
            g[axis.index()] = (plus - minus) / (2.0 * h);
        }
        Ok(g)
    }

    /// `∂ω/∂Bᵢ` (MHz/mT) by Hellmann–Feynman, with the central-difference value alongside.
    /// Falls back to the finite-difference value when a level of the pair is
    /// within `degeneracy_gap` of a neighbour.
    pub fn gradient(&self, field: &FieldVector, sel: &TransitionSelector) -> Result<Gradient> {
        let mut grad = self.hellmann_feynman(field, sel)?;
        grad.finite_difference = self.fd_gradient(field, sel, self.settings.gradient_step)?;
        if grad.min_gap < self.settings.degeneracy_gap {
            grad.method = GradientMethod::FiniteDifference;
            grad.value = grad.finite_difference;
        }
        Ok(grad)
    }

    /// Hellmann–Feynman gradient only; `finite_difference` is left equal to `value`.
    pub fn hellmann_feynman(&self, field: &FieldVector, sel: &TransitionSelector) -> Result<Gradient> {
        let (lower, upper) = self.pair_levels(field, sel)?;
        let (lo_state, hi_state) = sel.states();
        let upper_set = upper.as_ref().unwrap_or(&lower);
        let d_lower = level_field_derivative(self.system(lo_state), &lower, sel.lower);
        let d_upper = level_field_derivative(self.system(hi_state), upper_set, sel.upper);
        let value = [0, 1, 2].map(|i| d_upper[i] - d_lower[i]);
        let min_gap = neighbour_gap(&lower, sel.lower).min(neighbour_gap(upper_set, sel.upper));
        Ok(Gradient { value, finite_difference: value, method: GradientMethod::HellmannFeynman, min_gap })
    }

    /// Central second differences with optional Richardson refinement.
    pub fn hessian(&self, field: &FieldVector, sel: &TransitionSelector) -> Result<FrequencyHessian> {
        let h = self.settings.hessian_step;
        let smallest = if self.settings.richardson { h / 2.0 } else { h };
        if !(smallest >= MIN_HESSIAN_STEP) {
            return Err(Error::StepTooSmall { step: smallest, min: MIN_HESSIAN_STEP });
        }
        self.check_labels(sel)?;
        let f0 = self.frequency(field, sel)?;
        let at = |dx: [f64; 3]| self.frequency(&(*field + FieldVector::from_array(dx)), sel);
        let raw = |h: f64| -> Result<Matrix3<f64>> {
            let mut m = Matrix3::zeros();
            for i in 0..3 {
                let mut e = [0.0; 3];
                e[i] = h;
                let plus = at(e)?;
                e[i] = -h;
                let minus = at(e)?;
                m[(i, i)] = (plus - 2.0 * f0 + minus) / (h * h);
                for j in 0..i {
                    let mut pp = [0.0; 3];
                    pp[i] = h;
                    pp[j] = h;
                    let mut pm = pp;
                    pm[j] = -h;
                    let mut mp = pp;
                    mp[i] = -h;
                    let mut mm = mp;
                    mm[j] = -h;
                    let v = (at(pp)? - at(pm)? - at(mp)? + at(mm)?) / (4.0 * h * h);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            Ok(m)
        };
        let coarse = raw(h)?;
        let m = if self.settings.richardson {
            let fine = raw(h / 2.0)?;
            (fine * 4.0 - coarse) / 3.0
        } else {
            coarse
        };
        Ok(FrequencyHessian { matrix: m * 0.5e3 })
    }

    /// Locates the stationary points of `ω(B)` for `sel` inside `bounds`.
    ///
    /// The grid defined by `bounds` is scanned for cells in which every
    /// gradient component over the free axes brackets zero; each such cell and
    /// `initial` seed a damped Newton iteration on `∇ω = 0`. Points that
    /// converge to `tol` inside the bounds are returned sorted by residual.
    pub fn zefoz_search(
        &self,
        sel: &TransitionSelector,
        initial: &FieldVector,
        bounds: &FieldGrid,
        tol: f64,
    ) -> Result<Vec<ZefozPoint>> {
        if !(tol > 0.0) {
            return Err(Error::invalid(format!("search tolerance {tol} must be positive")));
        }
        if sel.manifold != Manifold::Optical && sel.lower == sel.upper {
            return Err(Error::invalid("transition needs two distinct levels"));
        }
        self.check_labels(sel)?;
        bounds.validate()?;
        if !bounds.contains(initial, 1e-9) {
            return Err(Error::invalid(format!("initial field {initial:?} lies outside the search bounds")));
        }
        let free = bounds.free_axes();

        let mut seeds = vec![*initial];
        seeds.extend(self.bracketing_cells(sel, bounds, &free)?);

        let found: Vec<Option<FieldVector>> = seeds
            .par_iter()
            .map(|seed| self.newton(sel, seed, bounds, &free, tol))
            .collect::<Result<_>>()?;

        let mut points: Vec<ZefozPoint> = Vec::new();
        for field in found.into_iter().flatten() {
            let point = self.describe_point(sel, field, &free)?;
            if let Some(existing) = points.iter_mut().find(|p| (p.field - point.field).norm() < 1e-3) {
                if point.gradient_residual < existing.gradient_residual {
                    *existing = point;
                }
            } else {
                points.push(point);
            }
        }
        if points.is_empty() {
            return Err(Error::NoStationaryPoint);
        }
        points.sort_by(|a, b| {
            a.gradient_residual
                .total_cmp(&b.gradient_residual)
                .then(a.field.z.total_cmp(&b.field.z))
        });
        Ok(points)
    }

    fn free_gradient(&self, field: &FieldVector, sel: &TransitionSelector, free: &[Axis]) -> Result<DVector<f64>> {
        let g = self.hellmann_feynman(field, sel)?;
        let value = if g.min_gap < self.settings.degeneracy_gap {
            self.fd_gradient(field, sel, self.settings.gradient_step)?
        } else {
            g.value
        };
        Ok(DVector::from_iterator(free.len(), free.iter().map(|a| value[a.index()])))
    }

    fn bracketing_cells(&self, sel: &TransitionSelector, bounds: &FieldGrid, free: &[Axis]) -> Result<Vec<FieldVector>> {
        if free.is_empty() {
            return Ok(Vec::new());
        }
        let counts = bounds.axes.map(|a| a.count);
        let points = bounds.points();
        let grads: Vec<DVector<f64>> = points
            .par_iter()
            .map(|p| self.free_gradient(p, sel, free))
            .collect::<Result<_>>()?;
        let index = |i: usize, j: usize, k: usize| (i * counts[1] + j) * counts[2] + k;

        let mut seeds = Vec::new();
        let span = |a: usize| if bounds.axes[a].is_free() { counts[a] - 1 } else { 1 };
        let (nx, ny, nz) = (span(0), span(1), span(2));
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let mut corners = Vec::with_capacity(8);
                    for (di, dj, dk) in corner_offsets(bounds) {
                        corners.push(index(i + di, j + dj, k + dk));
                    }
                    let brackets = (0..free.len()).all(|c| {
                        let lo = corners.iter().map(|&p| grads[p][c]).fold(f64::INFINITY, f64::min);
                        let hi = corners.iter().map(|&p| grads[p][c]).fold(f64::NEG_INFINITY, f64::max);
                        lo <= 0.0 && hi >= 0.0
                    });
                    if brackets {
                        let mut centre = FieldVector::ZERO;
                        for &p in &corners {
                            centre = centre + points[p];
                        }
                        seeds.push(centre * (1.0 / corners.len() as f64));
                    }
                }
            }
        }
        Ok(seeds)
    }

    fn newton(
        &self,
        sel: &TransitionSelector,
        seed: &FieldVector,
        bounds: &FieldGrid,
        free: &[Axis],
        tol: f64,
    ) -> Result<Option<FieldVector>> {
        const MAX_ITER: usize = 60;
        const MAX_STEP: f64 = 5.0;
        if free.is_empty() {
            return Ok(Some(*seed));
        }
        let slack = 1e-6;
        let mut x = *seed;
        let mut g = self.free_gradient(&x, sel, free)?;
        for _ in 0..MAX_ITER {
            let r = g.norm();
            if r < tol {
                return Ok(bounds.contains(&x, slack).then_some(x));
            }
            let full = self.hessian(&x, sel)?.second_derivatives();
            let h = DMatrix::from_fn(free.len(), free.len(), |a, b| full[(free[a].index(), free[b].index())]);
            let step = newton_step(&h, &g).or_else(|| coordinate_step(&h, &g));
            let Some(mut step) = step else {
                return Ok(None);
            };
            let len = step.norm();
            if len > MAX_STEP {
                step *= MAX_STEP / len;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let mut trial = x;
                for (c, a) in free.iter().enumerate() {
                    trial = trial.with_component(*a, trial.component(*a) + t * step[c]);
                }
                if bounds.contains(&trial, MAX_STEP) {
                    let gt = self.free_gradient(&trial, sel, free)?;
                    if gt.norm() < r {
                        accepted = Some((trial, gt));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((nx, ng)) => {
                    x = nx;
                    g = ng;
                }
                None => return Ok(None),
            }
        }
        Ok(None)
    }

    fn describe_point(&self, sel: &TransitionSelector, field: FieldVector, free: &[Axis]) -> Result<ZefozPoint> {
        let omega0 = self.frequency(&field, sel)?;
        let gradient_residual = self.free_gradient(&field, sel, free)?.norm();
        let hessian = self.hessian(&field, sel)?;
        Ok(ZefozPoint {
            selector: *sel,
            field,
            omega0,
            gradient_residual,
            curvatures: hessian.curvatures(),
            signature: hessian.signature(),
            hessian,
        })
    }

    /// Energies of one manifold over a 1-D grid, each curve followed by
    /// maximum eigenvector overlap between neighbouring points.
    pub fn level_diagram(&self, grid: &FieldGrid, state: State) -> Result<LevelDiagram> {
        grid.validate()?;
        grid.sweep_axis()?;
        let fields = grid.points();
        let system = self.system(state);
        let sets: Vec<LevelSet> = fields.par_iter().map(|f| system.levels(f)).collect::<Result<_>>()?;
        let n = system.dimension();

        // assignment[c] = label index (0-based) of curve c at the current point
        let mut assignment: Vec<usize> = (0..n).collect();
        let mut curves = vec![Vec::with_capacity(fields.len()); n];
        let mut min_overlap = Vec::with_capacity(fields.len());
        let mut flagged = Vec::with_capacity(fields.len());
        for (c, curve) in curves.iter_mut().enumerate() {
            curve.push(sets[0].energies()[c]);
        }
        min_overlap.push(1.0);
        flagged.push(false);

        for p in 1..sets.len() {
            let prev = sets[p - 1].vectors();
            let next = sets[p].vectors();
            let overlap = prev.adjoint() * next;
            let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
            for (c, &k) in assignment.iter().enumerate() {
                for l in 0..n {
                    pairs.push((overlap[(k, l)].norm(), c, l));
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut curve_done = vec![false; n];
            let mut label_used = vec![false; n];
            let mut next_assignment = vec![0; n];
            let mut worst: f64 = 1.0;
            for (o, c, l) in pairs {
                if curve_done[c] || label_used[l] {
                    continue;
                }
                curve_done[c] = true;
                label_used[l] = true;
                next_assignment[c] = l;
                worst = worst.min(o);
            }
            assignment = next_assignment;
            for (c, curve) in curves.iter_mut().enumerate() {
                curve.push(sets[p].energies()[assignment[c]]);
            }
            min_overlap.push(worst);
            flagged.push(worst < LevelDiagram::TRACKING_THRESHOLD);
        }
        Ok(LevelDiagram { fields, curves, min_overlap, flagged })
    }
}

fn corner_offsets(bounds: &FieldGrid) -> Vec<(usize, usize, usize)> {
    let opts = |a: usize| if bounds.axes[a].is_free() { vec![0, 1] } else { vec![0] };
    let mut out = Vec::new();
    for di in opts(0) {
        for dj in opts(1) {
            for dk in opts(2) {
                out.push((di, dj, dk));
            }
        }
    }
    out
}

fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let svd = h.clone().svd(true, true);
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smallest < 1e-8 * scale {
        return None;
    }
    svd.solve(&(-g), 0.0).ok()
}

fn coordinate_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let mut step = DVector::zeros(g.len());
    let mut any = false;
    for i in 0..g.len() {
        if h[(i, i)].abs() > 1e-9 {
            step[i] = -g[i] / h[(i, i)];
            any = true;
        }
    }
    any.then_some(step)
}

/// `⟨v|∂H/∂Bᵢ|v⟩` for the level `label` (MHz/mT).
pub fn level_field_derivative(system: &SpinSystem, levels: &LevelSet, label: usize) -> [f64; 3] {
    let v = levels.vectors().column(label - 1);
    Axis::ALL.map(|axis| {
        let dv = system.field_derivative(axis) * v;
        let e: Complex64 = v.dotc(&dv);
        e.re
    })
}

fn neighbour_gap(levels: &LevelSet, label: usize) -> f64 {
    let e = levels.energies();
    let k = label - 1;
    let below = if k > 0 { e[k] - e[k - 1] } else { f64::INFINITY };
    let above = if k + 1 < e.len() { e[k + 1] - e[k] } else { f64::INFINITY };
    below.min(above)
}
