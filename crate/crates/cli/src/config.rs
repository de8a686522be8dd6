//! Run configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! ion = nd_ylf.ion        # optional; the built-in 143Nd:YLF parameters otherwise
//! command = eit
//! comb.spacing = 2.8
//! eit.rabi_coupling = 5
//!
//! [ground]                # optional per-key overrides of the ion parameters
//! A = -600
//! ```
//!
//! Vectors are written as space-separated components (`field = 0 0 63.6`),
//! grid axes as `start stop count` or a single fixed value. Every key and its
//! default is listed by [`defaults_table`]; [`RunConfig::echo`] writes a
//! complete config that parses back to an equal value.

use std::collections::HashMap;

use zefoz_core::eit::{
    default_detuning, CombModel, CombSpacing, CombWeights, InhomogeneousAverage, LambdaParams,
};
use zefoz_core::field_map::{DerivativeSettings, MIN_HESSIAN_STEP};
use zefoz_core::ion_file::{blank_params, section_header, set_param, strip_comment, LineError, ParseErrors, PARAM_KEYS};
use zefoz_core::lineshape::Profile;
use zefoz_core::transitions::{FrequencyGrid, SpectrumParams, TransitionOperator};
use zefoz_core::{Axis, AxisRange, FieldGrid, FieldVector, Manifold, State, TransitionSelector};

use crate::table::Format;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Levels,
    Diagram,
    Zefoz,
    Lambda,
    Spectrum,
    Eit,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 7] =
        [Command::Levels, Command::Diagram, Command::Zefoz, Command::Lambda, Command::Spectrum, Command::Eit, Command::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Command::Levels => "levels",
            Command::Diagram => "diagram",
            Command::Zefoz => "zefoz",
            Command::Lambda => "lambda",
            Command::Spectrum => "spectrum",
            Command::Eit => "eit",
            Command::Sweep => "sweep",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// What the `spectrum` command writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumTable {
    Spectrum,
    Lines,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub ion_path: Option<String>,
    /// Raw `key = value` overrides for the ground and excited sections, in file order.
    pub ion_overrides: [Vec<(String, String)>; 2],
    pub output: Option<String>,
    pub format: Format,
    /// Applied field for `levels`, `lambda` and `spectrum` (mT).
    pub field: FieldVector,
    pub state: State,
    pub transition: TransitionSelector,
    pub operator: TransitionOperator,
    pub diagram: FieldGrid,
    pub zefoz_start: FieldVector,
    pub zefoz_bounds: FieldGrid,
    pub zefoz_tol: f64,
    pub derivative: DerivativeSettings,
    pub lambda_max_asymmetry: f64,
    pub lambda_max_leakage: f64,
    pub lambda_min_strength: f64,
    /// `None` picks the zero-field or in-field width from `field`.
    pub spectrum_inhom_fwhm: Option<f64>,
    pub spectrum: SpectrumParams,
    pub spectrum_table: SpectrumTable,
    pub comb: CombModel,
    pub eit: LambdaParams,
    /// Offset from the located clock point for `eit` (mT).
    pub eit_offset: FieldVector,
    pub detuning: FrequencyGrid,
    pub sweep: FieldGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spectrum = SpectrumParams::default();
        RunConfig {
            command: Command::Levels,
            ion_path: None,
            ion_overrides: [Vec::new(), Vec::new()],
            output: None,
            format: Format::Csv,
            field: FieldVector::ZERO,
            state: State::Ground,
            transition: TransitionSelector::nd_clock(),
            operator: TransitionOperator::default(),
            diagram: FieldGrid::line(FieldVector::ZERO, Axis::Z, 0.0, 100.0, 201),
            zefoz_start: FieldVector::longitudinal(50.0),
            zefoz_bounds: FieldGrid::line(FieldVector::ZERO, Axis::Z, 30.0, 100.0, 71),
            zefoz_tol: 1e-6,
            derivative: DerivativeSettings::default(),
            lambda_max_asymmetry: 0.01,
            lambda_max_leakage: 0.01,
            lambda_min_strength: 0.0,
            spectrum_inhom_fwhm: None,
            spectrum,
            spectrum_table: SpectrumTable::Spectrum,
            comb: CombModel::default(),
            eit: LambdaParams::default(),
            eit_offset: FieldVector::ZERO,
            detuning: default_detuning(),
            sweep: FieldGrid::line(FieldVector::ZERO, Axis::Z, 54.0, 74.0, 41),
        }
    }
}

/// Every top-level key in echo order.
pub const KEYS: &[&str] = &[
    "command",
    "ion",
    "output",
    "format",
    "field",
    "state",
    "transition",
    "operator",
    "diagram.x",
    "diagram.y",
    "diagram.z",
    "zefoz.start",
    "zefoz.x",
    "zefoz.y",
    "zefoz.z",
    "zefoz.tol",
    "derivative.gradient_step",
    "derivative.hessian_step",
    "derivative.richardson",
    "derivative.degeneracy_gap",
    "lambda.max_asymmetry",
    "lambda.max_leakage",
    "lambda.min_strength",
    "spectrum.temperature",
    "spectrum.inhom_fwhm",
    "spectrum.profile",
    "spectrum.grid",
    "spectrum.boltzmann_constant",
    "spectrum.optical_origin",
    "spectrum.table",
    "noise.gamma0",
    "noise.delta_b",
    "noise.curvatures",
    "comb.n_lines",
    "comb.spacing",
    "comb.weights",
    "eit.rabi_coupling",
    "eit.optical_dephasing",
    "eit.spin_dephasing",
    "eit.optical_inhom_fwhm",
    "eit.two_photon_offset",
    "eit.optical_depth",
    "eit.averaging",
    "eit.offset",
    "eit.detuning",
    "sweep.x",
    "sweep.y",
    "sweep.z",
];

fn float(text: &str) -> Result<f64, String> {
    let v: f64 = text.parse().map_err(|_| format!("expected a number, found '{text}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{text}' is not finite"))
    }
}

fn non_negative(text: &str) -> Result<f64, String> {
    let v = float(text)?;
    if v < 0.0 {
        return Err(format!("{v} must be non-negative"));
    }
    Ok(v)
}

fn positive(text: &str) -> Result<f64, String> {
    let v = float(text)?;
    if v <= 0.0 {
        return Err(format!("{v} must be positive"));
    }
    Ok(v)
}

fn fraction(text: &str) -> Result<f64, String> {
    let v = float(text)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} must lie in [0, 1]"));
    }
    Ok(v)
}

fn count(text: &str) -> Result<usize, String> {
    text.parse().map_err(|_| format!("expected a non-negative integer, found '{text}'"))
}

fn boolean(text: &str) -> Result<bool, String> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found '{text}'")),
    }
}

fn floats<const N: usize>(text: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != N {
        return Err(format!("expected {N} numbers, found {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = float(p)?;
    }
    Ok(out)
}

fn vector(text: &str) -> Result<FieldVector, String> {
    let [x, y, z] = floats::<3>(text)?;
    Ok(FieldVector::new(x, y, z))
}

fn axis_range(text: &str) -> Result<AxisRange, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let range = match parts.as_slice() {
        [v] => AxisRange::fixed(float(v)?),
        [a, b, n] => AxisRange::new(float(a)?, float(b)?, count(n)?),
        _ => return Err(format!("expected 'value' or 'start stop count', found '{text}'")),
    };
    range.validate().map_err(|e| e.to_string())?;
    Ok(range)
}

fn frequency_grid(text: &str) -> Result<FrequencyGrid, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(format!("expected 'start stop count', found '{text}'"));
    };
    let grid = FrequencyGrid::new(float(a)?, float(b)?, count(n)?);
    grid.validate().map_err(|e| e.to_string())?;
    Ok(grid)
}

/// `8g-10g`, `10g-9e` or `1e-3e`.
pub fn parse_selector(text: &str) -> Result<TransitionSelector, String> {
    let bad = || format!("expected a transition like '8g-10g' or '10g-9e', found '{text}'");
    let (a, b) = text.split_once('-').ok_or_else(bad)?;
    let level = |s: &str| -> Option<(usize, char)> {
        let tag = s.chars().last()?;
        let n: usize = s[..s.len() - tag.len_utf8()].parse().ok()?;
        (n >= 1).then_some((n, tag))
    };
    let ((lo, ta), (hi, tb)) = (level(a.trim()).ok_or_else(bad)?, level(b.trim()).ok_or_else(bad)?);
    let manifold = match (ta, tb) {
        ('g', 'g') => Manifold::Ground,
        ('e', 'e') => Manifold::Excited,
        ('g', 'e') => Manifold::Optical,
        _ => return Err(bad()),
    };
    Ok(TransitionSelector { manifold, lower: lo, upper: hi })
}

fn format_vector(v: &FieldVector) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

fn format_axis(r: &AxisRange) -> String {
    if r.count == 1 && r.start == r.stop {
        format!("{:?}", r.start)
    } else {
        format!("{:?} {:?} {}", r.start, r.stop, r.count)
    }
}

fn format_grid(g: &FrequencyGrid) -> String {
    format!("{:?} {:?} {}", g.start, g.stop, g.count)
}

fn format_triple(v: &[f64; 3]) -> String {
    format!("{:?} {:?} {:?}", v[0], v[1], v[2])
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::Gaussian => "gaussian",
        Profile::Lorentzian => "lorentzian",
    }
}

fn format_spacing(s: &CombSpacing) -> String {
    match s {
        CombSpacing::Larmor { gamma } => format!("larmor:{gamma:?}"),
        CombSpacing::Fixed(v) => format!("{v:?}"),
    }
}

fn parse_spacing(text: &str) -> Result<CombSpacing, String> {
    match text.split_once(':') {
        Some(("larmor", g)) => Ok(CombSpacing::Larmor { gamma: positive(g.trim())? }),
        None if text == "larmor" => Ok(CombSpacing::Larmor { gamma: zefoz_core::eit::FLUORINE_GAMMA }),
        None => Ok(CombSpacing::Fixed(positive(text)?)),
        _ => Err(format!("expected a spacing in MHz or 'larmor:<MHz/mT>', found '{text}'")),
    }
}

fn format_weights(w: &CombWeights) -> String {
    match w {
        CombWeights::Gaussian { fwhm } => format!("gaussian:{fwhm:?}"),
        CombWeights::Binomial => "binomial".into(),
        CombWeights::Flat => "flat".into(),
        CombWeights::Custom(v) => {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("custom:{}", parts.join(" "))
        }
    }
}

fn parse_weights(text: &str) -> Result<CombWeights, String> {
    match text.split_once(':') {
        None if text == "binomial" => Ok(CombWeights::Binomial),
        None if text == "flat" => Ok(CombWeights::Flat),
        Some(("gaussian", w)) => Ok(CombWeights::Gaussian { fwhm: positive(w.trim())? }),
        Some(("custom", list)) => {
            let w = list.split_whitespace().map(non_negative).collect::<Result<Vec<_>, _>>()?;
            if w.iter().sum::<f64>() <= 0.0 {
                return Err("custom weights must have a positive sum".into());
            }
            Ok(CombWeights::Custom(w))
        }
        _ => Err(format!("expected binomial, flat, gaussian:<FWHM> or custom:<w1 w2 ...>, found '{text}'")),
    }
}

fn format_averaging(a: &InhomogeneousAverage) -> String {
    match a {
        InhomogeneousAverage::Exact => "exact".into(),
        InhomogeneousAverage::GaussHermite(n) => format!("gauss-hermite:{n}"),
    }
}

fn parse_averaging(text: &str) -> Result<InhomogeneousAverage, String> {
    match text.split_once(':') {
        None if text == "exact" => Ok(InhomogeneousAverage::Exact),
        Some(("gauss-hermite", n)) => {
            let n = count(n.trim())?;
            if n == 0 {
                return Err("gauss-hermite needs at least one node".into());
            }
            Ok(InhomogeneousAverage::GaussHermite(n))
        }
        _ => Err(format!("expected exact or gauss-hermite:<nodes>, found '{text}'")),
    }
}

fn path(text: &str) -> Result<String, String> {
    if text.is_empty() {
        return Err("path must not be empty".into());
    }
    Ok(text.to_string())
}

impl RunConfig {
    /// Sets one top-level key. `Ok(false)` for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        match key {
            "command" => {
                self.command = Command::from_name(v).ok_or_else(|| {
                    let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
                    format!("unknown command '{v}' (expected one of {})", names.join(", "))
                })?
            }
            "ion" => self.ion_path = Some(path(v)?),
            "output" => self.output = Some(path(v)?),
            "format" => {
                self.format = Format::from_name(v).ok_or_else(|| format!("expected csv or json-records, found '{v}'"))?
            }
            "field" => self.field = vector(v)?,
            "state" => self.state = State::from_section(v).ok_or_else(|| format!("expected ground or excited, found '{v}'"))?,
            "transition" => self.transition = parse_selector(v)?,
            "operator" => {
                self.operator = TransitionOperator::from_name(v)
                    .ok_or_else(|| format!("expected identity, sx, sy, sz, s+ or s-, found '{v}'"))?
            }
            "diagram.x" => self.diagram.axes[0] = axis_range(v)?,
            "diagram.y" => self.diagram.axes[1] = axis_range(v)?,
            "diagram.z" => self.diagram.axes[2] = axis_range(v)?,
            "zefoz.start" => self.zefoz_start = vector(v)?,
            "zefoz.x" => self.zefoz_bounds.axes[0] = axis_range(v)?,
            "zefoz.y" => self.zefoz_bounds.axes[1] = axis_range(v)?,
            "zefoz.z" => self.zefoz_bounds.axes[2] = axis_range(v)?,
            "zefoz.tol" => self.zefoz_tol = positive(v)?,
            "derivative.gradient_step" => self.derivative.gradient_step = positive(v)?,
            "derivative.hessian_step" => {
                let h = positive(v)?;
                if h < MIN_HESSIAN_STEP {
                    return Err(format!("{h} is below the minimum step of {MIN_HESSIAN_STEP} mT"));
                }
                self.derivative.hessian_step = h;
            }
            "derivative.richardson" => self.derivative.richardson = boolean(v)?,
            "derivative.degeneracy_gap" => self.derivative.degeneracy_gap = non_negative(v)?,
            "lambda.max_asymmetry" => self.lambda_max_asymmetry = fraction(v)?,
            "lambda.max_leakage" => self.lambda_max_leakage = fraction(v)?,
            "lambda.min_strength" => self.lambda_min_strength = fraction(v)?,
            "spectrum.temperature" => self.spectrum.temperature = positive(v)?,
            "spectrum.inhom_fwhm" => self.spectrum_inhom_fwhm = if v == "auto" { None } else { Some(positive(v)?) },
            "spectrum.profile" => {
                self.spectrum.line_profile = match v {
                    "gaussian" => Profile::Gaussian,
                    "lorentzian" => Profile::Lorentzian,
                    _ => return Err(format!("expected gaussian or lorentzian, found '{v}'")),
                }
            }
            "spectrum.grid" => self.spectrum.grid = frequency_grid(v)?,
            "spectrum.boltzmann_constant" => self.spectrum.boltzmann_constant = positive(v)?,
            "spectrum.optical_origin" => self.spectrum.optical_origin = float(v)?,
            "spectrum.table" => {
                self.spectrum_table = match v {
                    "spectrum" => SpectrumTable::Spectrum,
                    "lines" => SpectrumTable::Lines,
                    _ => return Err(format!("expected spectrum or lines, found '{v}'")),
                }
            }
            "noise.gamma0" => self.comb.noise.gamma0 = non_negative(v)?,
            "noise.delta_b" => {
                let d = floats::<3>(v)?;
                if d.iter().any(|x| *x < 0.0) {
                    return Err("field fluctuation amplitudes must be non-negative".into());
                }
                self.comb.noise.delta_b = d;
            }
            "noise.curvatures" => self.comb.noise.curvatures = floats::<3>(v)?,
            "comb.n_lines" => {
                let n = count(v)?;
                if n.is_multiple_of(2) {
                    return Err(format!("the comb needs an odd number of lines, found {n}"));
                }
                self.comb.n_lines = n;
            }
            "comb.spacing" => self.comb.spacing = parse_spacing(v)?,
            "comb.weights" => self.comb.weights = parse_weights(v)?,
            "eit.rabi_coupling" => self.eit.rabi_coupling = non_negative(v)?,
            "eit.optical_dephasing" => self.eit.optical_dephasing = positive(v)?,
            "eit.spin_dephasing" => self.eit.spin_dephasing = non_negative(v)?,
            "eit.optical_inhom_fwhm" => self.eit.optical_inhom_fwhm = non_negative(v)?,
            "eit.two_photon_offset" => self.eit.two_photon_offset = float(v)?,
            "eit.optical_depth" => self.eit.optical_depth = non_negative(v)?,
            "eit.averaging" => self.eit.averaging = parse_averaging(v)?,
            "eit.offset" => self.eit_offset = vector(v)?,
            "eit.detuning" => self.detuning = frequency_grid(v)?,
            "sweep.x" => self.sweep.axes[0] = axis_range(v)?,
            "sweep.y" => self.sweep.axes[1] = axis_range(v)?,
            "sweep.z" => self.sweep.axes[2] = axis_range(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Current value of a key as it would be written in a config; `None` for
    /// unset optional paths.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "command" => self.command.name().into(),
            "ion" => return self.ion_path.clone(),
            "output" => return self.output.clone(),
            "format" => self.format.name().into(),
            "field" => format_vector(&self.field),
            "state" => self.state.section().into(),
            "transition" => self.transition.to_string(),
            "operator" => self.operator.name().into(),
            "diagram.x" => format_axis(&self.diagram.axes[0]),
            "diagram.y" => format_axis(&self.diagram.axes[1]),
            "diagram.z" => format_axis(&self.diagram.axes[2]),
            "zefoz.start" => format_vector(&self.zefoz_start),
            "zefoz.x" => format_axis(&self.zefoz_bounds.axes[0]),
            "zefoz.y" => format_axis(&self.zefoz_bounds.axes[1]),
            "zefoz.z" => format_axis(&self.zefoz_bounds.axes[2]),
            "zefoz.tol" => format!("{:?}", self.zefoz_tol),
            "derivative.gradient_step" => format!("{:?}", self.derivative.gradient_step),
            "derivative.hessian_step" => format!("{:?}", self.derivative.hessian_step),
            "derivative.richardson" => self.derivative.richardson.to_string(),
            "derivative.degeneracy_gap" => format!("{:?}", self.derivative.degeneracy_gap),
            "lambda.max_asymmetry" => format!("{:?}", self.lambda_max_asymmetry),
            "lambda.max_leakage" => format!("{:?}", self.lambda_max_leakage),
            "lambda.min_strength" => format!("{:?}", self.lambda_min_strength),
            "spectrum.temperature" => format!("{:?}", self.spectrum.temperature),
            "spectrum.inhom_fwhm" => self.spectrum_inhom_fwhm.map_or("auto".into(), |v| format!("{v:?}")),
            "spectrum.profile" => profile_name(self.spectrum.line_profile).into(),
            "spectrum.grid" => format_grid(&self.spectrum.grid),
            "spectrum.boltzmann_constant" => format!("{:?}", self.spectrum.boltzmann_constant),
            "spectrum.optical_origin" => format!("{:?}", self.spectrum.optical_origin),
            "spectrum.table" => match self.spectrum_table {
                SpectrumTable::Spectrum => "spectrum".into(),
                SpectrumTable::Lines => "lines".into(),
            },
            "noise.gamma0" => format!("{:?}", self.comb.noise.gamma0),
            "noise.delta_b" => format_triple(&self.comb.noise.delta_b),
            "noise.curvatures" => format_triple(&self.comb.noise.curvatures),
            "comb.n_lines" => self.comb.n_lines.to_string(),
            "comb.spacing" => format_spacing(&self.comb.spacing),
            "comb.weights" => format_weights(&self.comb.weights),
            "eit.rabi_coupling" => format!("{:?}", self.eit.rabi_coupling),
            "eit.optical_dephasing" => format!("{:?}", self.eit.optical_dephasing),
            "eit.spin_dephasing" => format!("{:?}", self.eit.spin_dephasing),
            "eit.optical_inhom_fwhm" => format!("{:?}", self.eit.optical_inhom_fwhm),
            "eit.two_photon_offset" => format!("{:?}", self.eit.two_photon_offset),
            "eit.optical_depth" => format!("{:?}", self.eit.optical_depth),
            "eit.averaging" => format_averaging(&self.eit.averaging),
            "eit.offset" => format_vector(&self.eit_offset),
            "eit.detuning" => format_grid(&self.detuning),
            "sweep.x" => format_axis(&self.sweep.axes[0]),
            "sweep.y" => format_axis(&self.sweep.axes[1]),
            "sweep.z" => format_axis(&self.sweep.axes[2]),
            _ => return None,
        })
    }

    /// Complete config text with every key, ion overrides last.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        for state in [State::Ground, State::Excited] {
            let overrides = &self.ion_overrides[state as usize];
            if !overrides.is_empty() {
                out.push_str(&format!("\n[{}]\n", state.section()));
                for (k, v) in overrides {
                    out.push_str(&format!("{k} = {v}\n"));
                }
            }
        }
        out
    }

    /// Checks that need several keys at once.
    fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut push = |what: &str, r: zefoz_core::Result<()>| {
            if let Err(e) = r {
                errors.push(format!("{what}: {e}"));
            }
        };
        push("noise", self.comb.noise.validate());
        push("comb", self.comb.validate());
        push("eit", self.eit.validate());
        push("zefoz", self.zefoz_bounds.validate());
        if !self.zefoz_bounds.contains(&self.zefoz_start, 0.0) {
            errors.push("zefoz.start lies outside the search bounds".into());
        }
        if self.transition.manifold != Manifold::Optical && self.transition.lower == self.transition.upper {
            errors.push("transition needs two distinct levels".into());
        }
        if self.sweep.sweep_axis().is_err() {
            errors.push("sweep must vary at most one axis".into());
        }
        if self.diagram.sweep_axis().is_err() {
            errors.push("diagram must vary at most one axis".into());
        }
        if let CombWeights::Custom(w) = &self.comb.weights {
            if w.len() != self.comb.n_lines {
                errors.push(format!("comb.weights has {} entries for {} lines", w.len(), self.comb.n_lines));
            }
        }
        errors
    }
}

/// Parses and validates a config, collecting every error.
pub fn parse_config(text: &str) -> Result<RunConfig, ParseErrors> {
    let mut cfg = RunConfig::default();
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut section: Option<State> = None;
    let mut command_seen = false;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let mut fail = |message: String| errors.push(LineError { line, message });
        if let Some(name) = section_header(body) {
            match State::from_section(name) {
                Some(s) => section = Some(s),
                None => fail(format!("unknown section [{name}] (expected [ground] or [excited])")),
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            fail(format!("expected 'key = value', found '{body}'"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let scoped = match section {
            Some(s) => format!("{}.{key}", s.section()),
            None => key.to_string(),
        };
        if let Some(first) = seen.insert(scoped.clone(), line) {
            fail(format!("duplicate key '{key}' (first set on line {first})"));
            continue;
        }
        match section {
            Some(state) => {
                if !PARAM_KEYS.contains(&key) {
                    fail(format!("unknown ion parameter '{key}' (expected one of {})", PARAM_KEYS.join(", ")));
                    continue;
                }
                let mut scratch = blank_params();
                match set_param(&mut scratch, key, value) {
                    Ok(()) => cfg.ion_overrides[state as usize].push((key.to_string(), value.to_string())),
                    Err(e) => fail(format!("invalid parameter {key}: {e}")),
                }
            }
            None => match cfg.set(key, value) {
                Ok(true) => command_seen |= key == "command",
                Ok(false) => fail(format!("unknown key '{key}'")),
                Err(e) => fail(format!("{key}: {e}")),
            },
        }
    }
    if !command_seen {
        errors.push(LineError { line: 0, message: "missing required key 'command'".into() });
    }
    if errors.is_empty() {
        errors.extend(cfg.validate().into_iter().map(|message| LineError { line: 0, message }));
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ParseErrors(errors))
    }
}

/// Every key with its default value, as written in a config.
pub fn defaults_table() -> Vec<(&'static str, String)> {
    let cfg = RunConfig::default();
    KEYS.iter().filter_map(|k| cfg.get(k).map(|v| (*k, v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = parse_config("ion = nd.ion\ncommand = levels\nfield = 0 0 63.6\n").unwrap();
        assert_eq!(cfg.command, Command::Levels);
        assert_eq!(cfg.ion_path.as_deref(), Some("nd.ion"));
        assert_eq!(cfg.field, FieldVector::longitudinal(63.6));
        let echo = cfg.echo();
        for key in KEYS.iter().filter(|k| **k != "output") {
            assert!(echo.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key} missing from echo");
        }
    }

    #[test]
    fn every_key_is_settable_and_echoed() {
        let cfg = RunConfig { ion_path: Some("a".into()), output: Some("b".into()), ..Default::default() };
        for key in KEYS {
            let v = cfg.get(key).unwrap();
            let mut other = RunConfig::default();
            assert_eq!(other.set(key, &v), Ok(true), "{key}");
        }
    }

    #[test]
    fn round_trip_with_overrides() {
        let text = "\
command = eit
comb.spacing = 2.8
comb.weights = custom:1 2 3 2 1
comb.n_lines = 5
eit.averaging = gauss-hermite:48
spectrum.inhom_fwhm = 50
transition = 10g-9e
zefoz.x = -5 5 11
[ground]
A = -600
S = 1/2
[excited]
g_perp = 0.1
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.comb.spacing, CombSpacing::Fixed(2.8));
        assert_eq!(cfg.transition, TransitionSelector::optical(10, 9));
        let again = parse_config(&cfg.echo()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn reports_all_errors_with_lines() {
        let text = "command = levels\nfield = 0 0\nbogus = 1\n[ground]\nS = 0.3\nfield = 1 2 3\ncomb.n_lines = 4\n";
        let errs = parse_config(text).unwrap_err().0;
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 5, 6, 7]);
        assert!(errs[0].message.contains("expected 3 numbers"));
        assert!(errs[1].message.contains("unknown key 'bogus'"));
        assert!(errs[2].message.contains("invalid parameter S"));
        assert!(errs[3].message.contains("unknown ion parameter"));
    }

    #[test]
    fn missing_command_and_duplicates() {
        let errs = parse_config("field = 0 0 1\nfield = 0 0 2\n").unwrap_err().0;
        assert!(errs.iter().any(|e| e.line == 2 && e.message.contains("duplicate")));
        assert!(errs.iter().any(|e| e.line == 0 && e.message.contains("'command'")));
    }

    #[test]
    fn cross_key_validation() {
        let errs = parse_config("command = zefoz\nzefoz.start = 0 0 10\n").unwrap_err().0;
        assert!(errs[0].message.contains("outside the search bounds"));
        let errs = parse_config("command = eit\ncomb.weights = custom:1 1 1\n").unwrap_err().0;
        assert!(errs.iter().any(|e| e.message.contains("3 entries for 9 lines")), "{errs:?}");
        assert!(parse_config("command = zefoz\ntransition = 8g-8g\n").is_err());
    }

    #[test]
    fn selectors() {
        assert_eq!(parse_selector("8g-10g"), Ok(TransitionSelector::ground(8, 10)));
        assert_eq!(parse_selector("1e-3e"), Ok(TransitionSelector::excited(1, 3)));
        for bad in ["8g", "0g-1g", "9e-1g", "xg-1g", "8-10"] {
            assert!(parse_selector(bad).is_err(), "{bad}");
        }
    }
}
