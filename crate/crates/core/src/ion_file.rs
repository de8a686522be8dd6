//! Ion parameter files.
//!
//! A flat `key = value` format with `#` comments and two sections:
//!
//! ```text
//! [ground]
//! S = 1/2
//! I = 7/2
//! g_par = 1.987
//! g_perp = 2.554
//! A = -590
//! B_hf = -789
//! P = 0
//! mu_B = 14
//!
//! [excited]
//! ...
//! ```
//!
//! `S`, `I`, `g_par`, `A` and `B_hf` are required in each section; `g_perp`
//! and `P` default to 0 and `mu_B` to 14 MHz/mT. Spins may be written as
//! fractions (`7/2`) or decimals (`3.5`). Formatting writes every float in its
//! shortest round-trip form, so parse → format → parse is bit-exact.

use std::fmt;

use crate::spin::{Spin, SpinParams, MU_B_ROUNDED};

pub const PARAM_KEYS: [&str; 8] = ["S", "I", "g_par", "g_perp", "A", "B_hf", "P", "mu_B"];
const REQUIRED_KEYS: [&str; 5] = ["S", "I", "g_par", "A", "B_hf"];

/// Ground and excited parameter sets of one ion.
#[derive(Clone, Debug, PartialEq)]
pub struct Ion {
    pub ground: SpinParams,
    pub excited: SpinParams,
    /// Added to every optical frequency (MHz); absolute optical frequencies are not modelled.
    pub optical_origin: f64,
}

impl Ion {
    pub fn nd143_ylf() -> Self {
        Ion {
            ground: SpinParams::nd143_ground(),
            excited: SpinParams::nd143_excited(),
            optical_origin: 0.0,
        }
    }

    pub fn state(&self, state: State) -> &SpinParams {
        match state {
            State::Ground => &self.ground,
            State::Excited => &self.excited,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Ground,
    Excited,
}

impl State {
    pub fn section(self) -> &'static str {
        match self {
            State::Ground => "ground",
            State::Excited => "excited",
        }
    }

    pub fn from_section(name: &str) -> Option<Self> {
        match name {
            "ground" => Some(State::Ground),
            "excited" => Some(State::Excited),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    /// 1-based; 0 for errors that concern the file as a whole.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseErrors(pub Vec<LineError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseErrors {}

/// Parses a spin written as `n/2`, an integer, or a decimal.
pub fn parse_spin(text: &str) -> Result<Spin, String> {
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("cannot parse spin '{text}'"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("cannot parse spin '{text}'"))?;
            if den == 0.0 {
                return Err(format!("cannot parse spin '{text}'"));
            }
            num / den
        }
        None => text.parse().map_err(|_| format!("cannot parse spin '{text}'"))?,
    };
    Spin::new(value).map_err(|e| e.to_string())
}

fn parse_float(key: &str, text: &str) -> Result<f64, String> {
    let v: f64 = text.parse().map_err(|_| format!("{key}: expected a number, found '{text}'"))?;
    if !v.is_finite() {
        return Err(format!("{key}: value must be finite"));
    }
    Ok(v)
}

/// Sets one parameter from its textual value. Used by both the ion file and
/// inline ion sections of run configurations.
pub fn set_param(params: &mut SpinParams, key: &str, value: &str) -> Result<(), String> {
    match key {
        "S" => {
            let s = parse_spin(value)?;
            if s.twice() < 1 {
                return Err("S must be at least 1/2".into());
            }
            params.electron_spin = s;
        }
        "I" => params.nuclear_spin = parse_spin(value)?,
        "g_par" => params.g_parallel = parse_float(key, value)?,
        "g_perp" => params.g_perp = parse_float(key, value)?,
        "A" => params.a_parallel = parse_float(key, value)?,
        "B_hf" => params.b_perp = parse_float(key, value)?,
        "P" => params.quadrupole = parse_float(key, value)?,
        "mu_B" => {
            let v = parse_float(key, value)?;
            if v <= 0.0 {
                return Err("mu_B must be positive".into());
            }
            params.mu_b = v;
        }
        other => return Err(format!("unknown ion parameter '{other}'")),
    }
    Ok(())
}

/// Parameter set with the optional keys at their defaults and the required ones zeroed.
pub fn blank_params() -> SpinParams {
    SpinParams {
        electron_spin: Spin::HALF,
        nuclear_spin: Spin::from_twice(0),
        g_parallel: 0.0,
        g_perp: 0.0,
        a_parallel: 0.0,
        b_perp: 0.0,
        quadrupole: 0.0,
        mu_b: MU_B_ROUNDED,
    }
}

/// Strips a trailing `#` comment and surrounding whitespace.
pub fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head).trim()
}

/// `[name]` → `Some(name)`.
pub fn section_header(line: &str) -> Option<&str> {
    line.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}

pub fn parse_ion_file(text: &str) -> Result<Ion, ParseErrors> {
    let mut errors = Vec::new();
    let mut params = [blank_params(), blank_params()];
    let mut seen: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    let mut section_seen = [false, false];
    let mut current: Option<usize> = None;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(name) = section_header(line) {
            match State::from_section(name) {
                Some(state) => {
                    let idx = state as usize;
                    if section_seen[idx] {
                        errors.push(LineError { line: line_no, message: format!("duplicate section [{name}]") });
                    }
                    section_seen[idx] = true;
                    current = Some(idx);
                }
                None => {
                    errors.push(LineError { line: line_no, message: format!("unknown section [{name}]") });
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(LineError { line: line_no, message: format!("expected 'key = value', found '{line}'") });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(idx) = current else {
            errors.push(LineError { line: line_no, message: format!("'{key}' appears outside a [ground] or [excited] section") });
            continue;
        };
        let Some(&canonical) = PARAM_KEYS.iter().find(|&&p| p == key) else {
            errors.push(LineError { line: line_no, message: format!("unknown ion parameter '{key}'") });
            continue;
        };
        if seen[idx].contains(&canonical) {
            errors.push(LineError { line: line_no, message: format!("duplicate key '{key}'") });
            continue;
        }
        seen[idx].push(canonical);
        if let Err(message) = set_param(&mut params[idx], key, value) {
            errors.push(LineError { line: line_no, message });
        }
    }

    for state in [State::Ground, State::Excited] {
        let idx = state as usize;
        if !section_seen[idx] {
            errors.push(LineError { line: 0, message: format!("missing section [{}]", state.section()) });
            continue;
        }
        for key in REQUIRED_KEYS {
            if !seen[idx].contains(&key) {
                errors.push(LineError {
                    line: 0,
                    message: format!("missing required key '{key}' in [{}]", state.section()),
                });
            }
        }
    }

    if errors.is_empty() {
        let [ground, excited] = params;
        Ok(Ion { ground, excited, optical_origin: 0.0 })
    } else {
        Err(ParseErrors(errors))
    }
}

/// Writes one section body (`key = value` lines).
pub fn format_params(params: &SpinParams) -> String {
    format!(
        "S = {}\nI = {}\ng_par = {:?}\ng_perp = {:?}\nA = {:?}\nB_hf = {:?}\nP = {:?}\nmu_B = {:?}\n",
        params.electron_spin,
        params.nuclear_spin,
        params.g_parallel,
        params.g_perp,
        params.a_parallel,
        params.b_perp,
        params.quadrupole,
        params.mu_b,
    )
}

pub fn format_ion_file(ion: &Ion) -> String {
    format!("[ground]\n{}\n[excited]\n{}", format_params(&ion.ground), format_params(&ion.excited))
}
