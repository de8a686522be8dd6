//! Command dispatch.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use zefoz_core::eit::{amplitude_vs_field, eit_profile};
use zefoz_core::ion_file::{format_ion_file, parse_ion_file, set_param};
use zefoz_core::transitions::{absorption_spectrum, find_lambda_systems, transition_table, SpectrumParams};
use zefoz_core::{FieldMap, Ion, State, ZefozPoint};

use crate::config::{Command, RunConfig, SpectrumTable};
use crate::table::{write_table, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// Bad configuration or ion file.
    Config(String),
    /// A computation failed; the message names the module.
    Compute(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute(_) | RunError::Io(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Compute(m) => write!(f, "computation error: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

fn in_module(module: &'static str) -> impl Fn(zefoz_core::Error) -> RunError {
    move |e| RunError::Compute(format!("{module}: {e}"))
}

/// Result of a run before it is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    /// Provenance and summary lines, written as comments.
    pub header: Vec<String>,
    pub table: Table,
}

/// Reads the ion file (relative paths resolved against `base`) and applies the overrides.
pub fn load_ion(cfg: &RunConfig, base: Option<&Path>) -> Result<Ion, RunError> {
    let mut ion = match &cfg.ion_path {
        None => Ion::nd143_ylf(),
        Some(p) => {
            let path = resolve(p, base);
            let text = fs::read_to_string(&path)
                .map_err(|e| RunError::Config(format!("cannot read ion file {}: {e}", path.display())))?;
            parse_ion_file(&text).map_err(|e| {
                let lines: Vec<String> = e.0.iter().map(|l| format!("{}: {l}", path.display())).collect();
                RunError::Config(lines.join("\n"))
            })?
        }
    };
    for state in [State::Ground, State::Excited] {
        let params = match state {
            State::Ground => &mut ion.ground,
            State::Excited => &mut ion.excited,
        };
        for (k, v) in &cfg.ion_overrides[state as usize] {
            set_param(params, k, v).map_err(|e| RunError::Config(format!("[{}] {k}: {e}", state.section())))?;
        }
    }
    Ok(ion)
}

fn resolve(path: &str, base: Option<&Path>) -> PathBuf {
    let p = Path::new(path);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn clock_point(map: &FieldMap, cfg: &RunConfig) -> Result<ZefozPoint, RunError> {
    let found =
        map.zefoz_search(&cfg.transition, &cfg.zefoz_start, &cfg.zefoz_bounds, cfg.zefoz_tol).map_err(in_module("field_map"))?;
    Ok(found.into_iter().next().expect("search returns at least one point or an error"))
}

fn describe_point(z: &ZefozPoint) -> String {
    format!(
        "clock point {}: B = ({:?}, {:?}, {:?}) mT, omega0 = {:?} MHz, S2 = ({:?}, {:?}, {:?}) kHz/mT^2",
        z.selector, z.field.x, z.field.y, z.field.z, z.omega0, z.curvatures[0], z.curvatures[1], z.curvatures[2]
    )
}

/// Runs the configured command.
pub fn execute(cfg: &RunConfig, ion: &Ion) -> Result<Output, RunError> {
    let map = FieldMap::new(ion).map_err(in_module("spin"))?.with_settings(cfg.derivative.clone());
    let mut header = vec![format!("zefoz {VERSION}"), "config:".to_string()];
    header.extend(cfg.echo().lines().filter(|l| !l.is_empty()).map(|l| format!("  {l}")));
    header.push("ion parameters:".into());
    header.extend(format_ion_file(ion).lines().filter(|l| !l.is_empty()).map(|l| format!("  {l}")));

    let table = match cfg.command {
        Command::Levels => {
            let levels = map.levels(cfg.state, &cfg.field).map_err(in_module("spin"))?;
            let mut t = Table::new(&["Bx_mT", "By_mT", "Bz_mT", "level", "energy_MHz"]);
            for (k, e) in levels.energies().iter().enumerate() {
                t.push(vec![cfg.field.x.into(), cfg.field.y.into(), cfg.field.z.into(), (k + 1).into(), (*e).into()]);
            }
            t
        }
        Command::Diagram => {
            let d = map.level_diagram(&cfg.diagram, cfg.state).map_err(in_module("field_map"))?;
            let flagged = d.flagged.iter().filter(|f| **f).count();
            if flagged > 0 {
                header.push(format!("warning: level tracking ambiguous at {flagged} field points"));
            }
            let mut t = Table::new(&["Bx_mT", "By_mT", "Bz_mT", "level", "energy_MHz"]);
            for (p, b) in d.fields.iter().enumerate() {
                for (c, curve) in d.curves.iter().enumerate() {
                    t.push(vec![b.x.into(), b.y.into(), b.z.into(), (c + 1).into(), curve[p].into()]);
                }
            }
            t
        }
        Command::Zefoz => {
            let found = map
                .zefoz_search(&cfg.transition, &cfg.zefoz_start, &cfg.zefoz_bounds, cfg.zefoz_tol)
                .map_err(in_module("field_map"))?;
            let mut t = Table::new(&[
                "transition",
                "Bx_mT",
                "By_mT",
                "Bz_mT",
                "omega0_MHz",
                "gradient_residual_MHz_per_mT",
                "S2x_kHz_per_mT2",
                "S2y_kHz_per_mT2",
                "S2z_kHz_per_mT2",
                "Qxy_kHz_per_mT2",
                "Qxz_kHz_per_mT2",
                "Qyz_kHz_per_mT2",
                "signature",
            ]);
            for z in &found {
                let q = &z.hessian.matrix;
                let sig: String = z.signature.iter().map(|s| s.to_string()).collect();
                t.push(vec![
                    z.selector.to_string().into(),
                    z.field.x.into(),
                    z.field.y.into(),
                    z.field.z.into(),
                    z.omega0.into(),
                    z.gradient_residual.into(),
                    z.curvatures[0].into(),
                    z.curvatures[1].into(),
                    z.curvatures[2].into(),
                    q[(0, 1)].into(),
                    q[(0, 2)].into(),
                    q[(1, 2)].into(),
                    sig.into(),
                ]);
            }
            t
        }
        Command::Lambda | Command::Spectrum => {
            let spectrum = SpectrumParams {
                inhom_fwhm: cfg.spectrum_inhom_fwhm.unwrap_or(SpectrumParams::for_field(&cfg.field).inhom_fwhm),
                ..cfg.spectrum.clone()
            };
            let g = map.levels(State::Ground, &cfg.field).map_err(in_module("spin"))?;
            let e = map.levels(State::Excited, &cfg.field).map_err(in_module("spin"))?;
            let lines = transition_table(&g, &e, &cfg.operator, &spectrum).map_err(in_module("transitions"))?;
            if cfg.command == Command::Lambda {
                let found =
                    find_lambda_systems(&lines, cfg.lambda_max_asymmetry, cfg.lambda_max_leakage, cfg.lambda_min_strength)
                        .map_err(in_module("transitions"))?;
                let mut t = Table::new(&[
                    "g_a",
                    "g_b",
                    "e_label",
                    "strength_a",
                    "strength_b",
                    "asymmetry",
                    "leakage",
                    "splitting_MHz",
                ]);
                for l in found {
                    t.push(vec![
                        l.ground_a.into(),
                        l.ground_b.into(),
                        l.excited.into(),
                        l.strength_a.into(),
                        l.strength_b.into(),
                        l.asymmetry.into(),
                        l.leakage.into(),
                        l.splitting.into(),
                    ]);
                }
                t
            } else if cfg.spectrum_table == SpectrumTable::Lines {
                let mut t = Table::new(&["g_label", "e_label", "freq_MHz", "strength", "pop_weight"]);
                for l in lines {
                    t.push(vec![
                        l.ground_label.into(),
                        l.excited_label.into(),
                        l.frequency.into(),
                        l.strength.into(),
                        l.population_weight.into(),
                    ]);
                }
                t
            } else {
                let s = absorption_spectrum(&lines, &spectrum).map_err(in_module("transitions"))?;
                let mut t = Table::new(&["freq_MHz", "optical_depth"]);
                for (f, od) in s.frequency.iter().zip(&s.optical_depth) {
                    t.push(vec![(*f).into(), (*od).into()]);
                }
                t
            }
        }
        Command::Eit => {
            let z = clock_point(&map, cfg)?;
            header.push(describe_point(&z));
            let p = eit_profile(&cfg.comb, &cfg.eit, &z.field, &cfg.eit_offset, &cfg.detuning.values())
                .map_err(in_module("eit"))?;
            header.push(format!(
                "comb spacing = {:?} MHz, spin linewidth = {:?} MHz, amplitude = {:?}",
                p.spacing, p.linewidth, p.amplitude
            ));
            if p.narrow_grid {
                header.push("warning: detuning grid is narrower than the comb".into());
            }
            let mut t = Table::new(&["detuning_MHz", "alpha_off", "alpha_on", "transmission"]);
            for k in 0..p.detuning.len() {
                t.push(vec![p.detuning[k].into(), p.alpha_off[k].into(), p.alpha_on[k].into(), p.transmission[k].into()]);
            }
            t
        }
        Command::Sweep => {
            let z = clock_point(&map, cfg)?;
            header.push(describe_point(&z));
            let rows = amplitude_vs_field(&z, &cfg.comb, &cfg.eit, &cfg.sweep, &cfg.detuning.values(), None)
                .map_err(in_module("eit"))?;
            let mut t = Table::new(&["Bz_mT", "omega12_MHz", "amplitude"]);
            for r in rows {
                t.push(vec![r.field.z.into(), r.omega12.into(), r.amplitude.into()]);
            }
            t
        }
    };
    Ok(Output { header, table })
}

/// Loads the ion, runs, and writes to `out` (or the configured output, or stdout).
pub fn run(cfg: &RunConfig, base: Option<&Path>, out: Option<&Path>) -> Result<(), RunError> {
    let ion = load_ion(cfg, base)?;
    let output = execute(cfg, &ion)?;
    let target = out.map(Path::to_path_buf).or_else(|| cfg.output.as_deref().map(|p| resolve(p, base)));
    match target {
        Some(path) => {
            let mut buf = Vec::new();
            write_table(&output.table, cfg.format, &output.header, &mut buf)
                .and_then(|()| fs::write(&path, buf))
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_table(&output.table, cfg.format, &output.header, &mut lock)
                .and_then(|()| lock.flush())
                .map_err(|e| RunError::Io(format!("stdout: {e}")))
        }
    }
}
