use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zefoz_cli::{defaults_table, parse_config, RunConfig};
use zefoz_core::eit::{default_detuning, local_maxima, CombModel, LambdaParams, FLUORINE_GAMMA, ND_CURVATURES};
use zefoz_core::field_map::DerivativeSettings;
use zefoz_core::ion_file::format_ion_file;
use zefoz_core::transitions::SpectrumParams;
use zefoz_core::Ion;

fn zefoz(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_zefoz")).arg("--config").arg(&path).args(extra).output().unwrap()
}

/// Header comments stripped; returns column names and numeric rows.
fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn ion_file(dir: &Path) -> String {
    let path = dir.join("nd.ion");
    fs::write(&path, format_ion_file(&Ion::nd143_ylf())).unwrap();
    "nd.ion".into()
}

#[test]
fn zefoz_command_finds_clock_field() {
    let dir = tempfile::tempdir().unwrap();
    let ion = ion_file(dir.path());
    let out = zefoz(dir.path(), &format!("ion = {ion}\ncommand = zefoz\n"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# zefoz "));
    assert!(text.contains("#   command = zefoz"));
    assert!(text.contains("#   A = -590.0"));
    let (header, rows) = read_csv(&text);
    let bz = header.iter().position(|h| h == "Bz_mT").unwrap();
    assert_eq!(rows[0][0], "8g-10g");
    assert!((column(&rows, bz)[0] - 63.6).abs() < 0.1);
    assert_eq!(rows[0].last().unwrap(), "--+");
}

#[test]
fn zero_field_levels_pair_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = levels\nfield = 0 0 0\n", &[]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["Bx_mT", "By_mT", "Bz_mT", "level", "energy_MHz"]);
    let e = column(&rows, 4);
    assert_eq!(e.len(), 16);
    // ±M doublets; the two M = 0 states are singlets
    let mut singles = 0;
    let mut k = 0;
    while k < e.len() {
        if k + 1 < e.len() && (e[k + 1] - e[k]).abs() < 1e-6 {
            k += 2;
        } else {
            singles += 1;
            k += 1;
        }
    }
    assert_eq!(singles, 2);
}

#[test]
fn eit_defaults_at_clock_point_show_nine_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = eit\n", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["detuning_MHz", "alpha_off", "alpha_on", "transmission"]);
    assert_eq!(rows.len(), 801);
    assert_eq!(local_maxima(&column(&rows, 3)).len(), 9);
}

#[test]
fn comb_spacing_override_reaches_the_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = eit\ncomb.spacing = 2.8\n", &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("comb spacing = 2.8 MHz"));
    let (_, rows) = read_csv(&text);
    let x = column(&rows, 0);
    let t = column(&rows, 3);
    let peaks: Vec<f64> = local_maxima(&t).into_iter().map(|i| x[i]).collect();
    assert_eq!(peaks.len(), 9);
    // outer peaks are pulled inwards by the envelope, inner ones sit on the lines
    assert!((peaks[4]).abs() < 1e-9);
    assert!((peaks[5] - 2.8).abs() < 0.06);
}

#[test]
fn sweep_and_json_records() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.json");
    let out = zefoz(
        dir.path(),
        "command = sweep\nformat = json-records\nsweep.z = 60 67 15\n",
        &["--out", out_path.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let records = json["records"].as_array().unwrap();
    assert_eq!(records.len(), 15);
    let best = records.iter().max_by(|a, b| a["amplitude"].as_f64().unwrap().total_cmp(&b["amplitude"].as_f64().unwrap())).unwrap();
    assert!((best["Bz_mT"].as_f64().unwrap() - 63.6).abs() <= 0.5);
}

#[test]
fn lambda_and_spectrum_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = lambda\nfield = 0 0 63.6278668\n", &[]);
    assert!(out.status.success());
    let (_, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(&rows[0][..3], ["8", "10", "9"]);
    assert!((column(&rows, 3)[0] - 0.125).abs() < 1e-6);

    let out = zefoz(dir.path(), "command = spectrum\nfield = 0 0 63.6\nspectrum.table = lines\n", &[]);
    let (header, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["g_label", "e_label", "freq_MHz", "strength", "pop_weight"]);
    assert_eq!(rows.len(), 256);

    let out = zefoz(dir.path(), "command = spectrum\nspectrum.grid = -3000 3000 601\n", &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("spectrum.inhom_fwhm = auto"));
    assert_eq!(read_csv(&text).1.len(), 601);
}

#[test]
fn diagram_rows_are_field_major() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = diagram\ndiagram.z = 0 10 11\nstate = excited\n", &[]);
    assert!(out.status.success());
    let (_, rows) = read_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 11 * 16);
    assert_eq!(rows[16][2], "1");
    assert_eq!(rows[16][3], "1");
}

#[test]
fn invalid_spin_is_a_config_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = levels\n\n[ground]\nS = 0.3\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4") && err.contains("invalid parameter S"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zefoz(dir.path(), "command = nope\n", &[]).status.code(), Some(2));
    assert_eq!(zefoz(dir.path(), "command = levels\nion = missing.ion\n", &[]).status.code(), Some(2));
    // no clock point of 1g-2g along z inside [30, 31] mT
    let out = zefoz(dir.path(), "command = zefoz\ntransition = 1g-2g\nzefoz.z = 30 31 3\nzefoz.start = 0 0 30\n", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("field_map: "));
    let missing_dir = dir.path().join("no/such/dir/out.csv");
    let out = zefoz(dir.path(), "command = levels\n", &["--out", missing_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("out.csv"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["command = zefoz\nzefoz.x = -2 2 5\nzefoz.y = -2 2 5\n", "command = eit\neit.offset = 0 0 3\n"] {
        let a = zefoz(dir.path(), cfg, &[]);
        let b = zefoz(dir.path(), cfg, &[]);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn echo_round_trips_through_the_binary_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = zefoz(dir.path(), "command = levels\ncomb.weights = binomial\n[excited]\ng_perp = 0.5\n", &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    let echo: String = text
        .lines()
        .skip_while(|l| *l != "# config:")
        .skip(1)
        .take_while(|l| l.starts_with("#   "))
        .map(|l| format!("{}\n", &l[4..]))
        .collect();
    let cfg = parse_config(&echo).unwrap();
    assert_eq!(cfg.ion_overrides[1], vec![("g_perp".to_string(), "0.5".to_string())]);
    assert!(text.contains("#   g_perp = 0.5"));
}

fn expected_default(key: &str) -> Option<String> {
    let noise = zefoz_core::eit::NoiseModel::default();
    let lp = LambdaParams::default();
    let spec = SpectrumParams::default();
    let d = DerivativeSettings::default();
    let grid = default_detuning();
    let triple = |v: [f64; 3]| format!("{:?} {:?} {:?}", v[0], v[1], v[2]);
    Some(match key {
        "noise.gamma0" => format!("{:?}", noise.gamma0),
        "noise.delta_b" => triple(noise.delta_b),
        "noise.curvatures" => triple(ND_CURVATURES),
        "comb.n_lines" => CombModel::default().n_lines.to_string(),
        "comb.spacing" => format!("larmor:{FLUORINE_GAMMA:?}"),
        "eit.rabi_coupling" => format!("{:?}", lp.rabi_coupling),
        "eit.optical_dephasing" => format!("{:?}", lp.optical_dephasing),
        "eit.spin_dephasing" => format!("{:?}", lp.spin_dephasing),
        "eit.optical_inhom_fwhm" => format!("{:?}", lp.optical_inhom_fwhm),
        "eit.two_photon_offset" => format!("{:?}", lp.two_photon_offset),
        "eit.optical_depth" => format!("{:?}", lp.optical_depth),
        "eit.detuning" => format!("{:?} {:?} {}", grid.start, grid.stop, grid.count),
        "spectrum.temperature" => format!("{:?}", spec.temperature),
        "spectrum.boltzmann_constant" => format!("{:?}", spec.boltzmann_constant),
        "spectrum.optical_origin" => format!("{:?}", spec.optical_origin),
        "spectrum.grid" => format!("{:?} {:?} {}", spec.grid.start, spec.grid.stop, spec.grid.count),
        "derivative.gradient_step" => format!("{:?}", d.gradient_step),
        "derivative.hessian_step" => format!("{:?}", d.hessian_step),
        "derivative.richardson" => d.richardson.to_string(),
        "derivative.degeneracy_gap" => format!("{:?}", d.degeneracy_gap),
        _ => return None,
    })
}

#[test]
fn cli_defaults_equal_module_defaults() {
    let table = defaults_table();
    let mut checked = 0;
    for (key, value) in &table {
        if let Some(want) = expected_default(key) {
            assert_eq!(value, &want, "{key}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
    // and the parsed defaults are the module structs themselves
    let cfg = parse_config("command = eit\n").unwrap();
    assert_eq!(cfg.comb, CombModel::default());
    assert_eq!(cfg.eit, LambdaParams::default());
    assert_eq!(cfg.derivative, DerivativeSettings::default());
    assert_eq!(cfg.spectrum, SpectrumParams::default());
    assert_eq!(cfg, RunConfig { command: zefoz_cli::Command::Eit, ..Default::default() });
}
