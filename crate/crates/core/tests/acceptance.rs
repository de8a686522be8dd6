//! Acceptance criteria 1–9, one line each. Exits non-zero if any fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use zefoz_core::eit::{
    amplitude_vs_field, default_detuning_grid, eit_profile, feature_fwhm, local_maxima, spin_linewidth,
    transmission_peaks, CombModel, CombSpacing, LambdaParams, NoiseModel, ND_CURVATURES,
};
use zefoz_core::field_map::{GradientMethod, Sign};
use zefoz_core::spin::{state_composition, Spin, SpinParams};
use zefoz_core::transitions::{find_lambda_systems, strength_matrix, transition_table, SpectrumParams, TransitionOperator};
use zefoz_core::{Axis, AxisRange, FieldGrid, FieldMap, FieldVector, Ion, State, TransitionSelector, ZefozPoint};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn locate(map: &FieldMap) -> (Option<ZefozPoint>, Duration) {
    let t = Instant::now();
    let bounds = FieldGrid::new(AxisRange::new(-5.0, 5.0, 11), AxisRange::new(-5.0, 5.0, 11), AxisRange::new(30.0, 100.0, 36));
    let found = map.zefoz_search(&TransitionSelector::nd_clock(), &FieldVector::longitudinal(50.0), &bounds, 1e-6);
    (found.ok().and_then(|v| v.into_iter().next()), t.elapsed())
}

fn criterion_1(z: &ZefozPoint, elapsed: Duration) -> Outcome {
    let f = z.field;
    let pass = f.x.abs() <= 1e-6 && f.y.abs() <= 1e-6 && within(f.z, 63.6, 1.0) && within(z.omega0, 2087.0, 10.0) && elapsed.as_secs_f64() < 5.0;
    check(
        pass,
        format!(
            "ZEFOZ location: B = ({:.1e}, {:.1e}, {:.4}) mT, omega0 = {:.3} MHz, residual {:.1e} MHz/mT, {:.2} s",
            f.x, f.y, f.z, z.omega0, z.gradient_residual, elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(z: &ZefozPoint) -> Outcome {
    let reference = [-52.7, -52.7, 185.3];
    let ok = z.curvatures.iter().zip(reference).all(|(c, p)| ((c - p) / p).abs() <= 0.03);
    let sig = z.signature == [Sign::Negative, Sign::Negative, Sign::Positive];
    let s: String = z.signature.iter().map(|s| s.to_string()).collect();
    check(
        ok && sig,
        format!("curvatures: S2 = ({:.3}, {:.3}, {:.3}) kHz/mT^2, signature ({s})", z.curvatures[0], z.curvatures[1], z.curvatures[2]),
    )
}

fn criterion_3(map: &FieldMap, z: &ZefozPoint) -> Outcome {
    let g = map.levels(State::Ground, &z.field).unwrap();
    let e = map.levels(State::Excited, &z.field).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for label in [8, 10] {
        let comps = state_composition(&g.level(label).unwrap(), 0.0).unwrap();
        let amp = |mi: i32, ms: i32| {
            comps.iter().find(|c| c.m_i.twice() == mi && c.m_s.twice() == ms).map_or(0.0, |c| c.amplitude.norm())
        };
        let (a, b) = (amp(5, 1), amp(7, -1));
        pass &= within(a, FRAC_1_SQRT_2, 0.001) && within(b, FRAC_1_SQRT_2, 0.001);
        parts.push(format!("|{label}g> = {a:.5}|5/2,+1/2> + {b:.5}|7/2,-1/2>"));
    }
    let nine = state_composition(&e.level(9).unwrap(), 0.0).unwrap();
    let lead = &nine[0];
    let pure = lead.m_i.twice() == 7 && lead.m_s.twice() == 1 && lead.amplitude.norm() > 0.999;
    pass &= pure;
    parts.push(format!("|9e> = {:.6}|{},{}>", lead.amplitude.norm(), lead.m_i, lead.m_s));
    check(pass, format!("eigenstates: {}", parts.join(", ")))
}

fn criterion_4(map: &FieldMap, z: &ZefozPoint) -> Outcome {
    let g = map.levels(State::Ground, &z.field).unwrap();
    let e = map.levels(State::Excited, &z.field).unwrap();
    let table = transition_table(&g, &e, &TransitionOperator::Sx, &SpectrumParams::default()).unwrap();
    let found = find_lambda_systems(&table, 0.01, 0.01, 0.0).unwrap();
    match found.iter().find(|l| (l.ground_a, l.ground_b, l.excited) == (8, 10, 9)) {
        Some(l) => check(
            within(l.strength_a, 0.125, 1e-6) && within(l.strength_b, 0.125, 1e-6),
            format!(
                "lambda (8g,10g,9e): strengths {:.9} / {:.9}, asymmetry {:.1e}, leakage {:.1e}, splitting {:.3} MHz ({} systems found)",
                l.strength_a, l.strength_b, l.asymmetry, l.leakage, l.splitting, found.len()
            ),
        ),
        None => check(false, format!("lambda (8g,10g,9e) not among {} systems", found.len())),
    }
}

fn criterion_5(map: &FieldMap, z: &ZefozPoint) -> Outcome {
    // line 1: 10g -> 9e, line 2: 8g -> 9e; rounding of the f64 boundary is allowed for
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, g) in [("line 1", 10), ("line 2", 8)] {
        let grad = map.gradient(&z.field, &TransitionSelector::optical(g, 9)).unwrap();
        let dz = grad.value[2];
        pass &= grad.method == GradientMethod::HellmannFeynman && (dz - 1.33).abs() <= 0.07 + 1e-9;
        parts.push(format!("{name} {dz:.12}"));
    }
    check(pass, format!("optical gradient dw/dBz: {} MHz/mT (target 1.33 +- 0.07)", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let noise = NoiseModel { gamma0: 0.5, delta_b: [1.0; 3], curvatures: ND_CURVATURES };
    let at0 = spin_linewidth(&noise, &FieldVector::ZERO);
    let at7 = spin_linewidth(&noise, &FieldVector::longitudinal(7.0));
    check(
        within(at0, 0.911, 0.001) && within(at7, 3.26, 0.02),
        format!("linewidth: Gamma(0) = {at0:.5} MHz, Gamma(0,0,7 mT) = {at7:.5} MHz"),
    )
}

fn criterion_7(z: &ZefozPoint) -> Outcome {
    let t = Instant::now();
    let comb = CombModel { spacing: CombSpacing::Fixed(2.8), noise: NoiseModel::from_point(z), ..Default::default() };
    let p = LambdaParams::default();
    let grid = default_detuning_grid();
    let near = eit_profile(&comb, &p, &z.field, &FieldVector::ZERO, &grid).unwrap();
    let far = eit_profile(&comb, &p, &z.field, &FieldVector::longitudinal(7.0), &grid).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let peaks = transmission_peaks(&near);
    let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let far_max = local_maxima(&far.transmission).len();
    let fwhm = feature_fwhm(&far);
    let pass = peaks.len() == 9
        && gaps.iter().all(|g| within(*g, 2.8, 0.1))
        && far_max == 1
        && fwhm.is_some_and(|w| within(w, 12.0, 3.0))
        && elapsed < 10.0;
    let gap_range = gaps.iter().cloned().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    check(
        pass,
        format!(
            "comb: {} maxima at dB=0 (spacing {:.3}..{:.3} MHz), {} maximum at dBz=7 mT with FWHM {:.2} MHz, {:.2} s",
            peaks.len(),
            gap_range.0,
            gap_range.1,
            far_max,
            fwhm.unwrap_or(f64::NAN),
            elapsed
        ),
    )
}

fn criterion_8(map: &FieldMap, z: &ZefozPoint) -> Outcome {
    let step = 0.5;
    let sweep = FieldGrid::line(FieldVector::ZERO, Axis::Z, 54.0, 74.0, 41);
    let comb = CombModel { noise: NoiseModel::from_point(z), ..Default::default() };
    let rows = amplitude_vs_field(z, &comb, &LambdaParams::default(), &sweep, &default_detuning_grid(), Some(map)).unwrap();
    let best = rows.iter().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)).unwrap();
    let lowest = rows.iter().min_by(|a, b| a.omega12.total_cmp(&b.omega12)).unwrap();
    let lowest_exact = rows.iter().min_by(|a, b| a.omega12_exact.unwrap().total_cmp(&b.omega12_exact.unwrap())).unwrap();
    let pass = within(best.field.z, 63.6, step) && within(lowest.field.z, 63.6, step) && within(lowest_exact.field.z, 63.6, step);
    check(
        pass,
        format!(
            "amplitude vs field: amplitude peaks at {:.2} mT ({:.4}), omega12 minimal at {:.2} mT (model) / {:.2} mT (exact)",
            best.field.z, best.amplitude, lowest.field.z, lowest_exact.field.z
        ),
    )
}

fn random_params(rng: &mut StdRng) -> SpinParams {
    SpinParams {
        electron_spin: Spin::HALF,
        nuclear_spin: Spin::from_twice(rng.random_range(0..8)),
        g_parallel: rng.random_range(0.2..3.0),
        g_perp: rng.random_range(0.0..3.0),
        a_parallel: rng.random_range(-900.0..900.0),
        b_perp: rng.random_range(-900.0..900.0),
        quadrupole: rng.random_range(-40.0..40.0),
        mu_b: 14.0,
    }
}

fn criterion_9(map: &FieldMap, z: &ZefozPoint) -> Outcome {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);

    let mut worst_grad: f64 = 0.0;
    let mut samples = 0;
    let mut worst_unitary: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    while samples < 1000 {
        let ion = Ion { ground: random_params(&mut rng), excited: random_params(&mut rng), optical_origin: 0.0 };
        let fm = FieldMap::new(&ion).unwrap();
        let field = FieldVector::new(rng.random_range(-120.0..120.0), rng.random_range(-120.0..120.0), rng.random_range(-120.0..120.0));
        let dim = ion.ground.dimension().min(ion.excited.dimension());
        let (i, j) = (rng.random_range(1..=dim), rng.random_range(1..=dim));
        let sel = if rng.random_bool(0.5) { TransitionSelector::optical(i, j) } else { TransitionSelector::ground(i, j) };
        if sel.lower == sel.upper && sel.manifold != zefoz_core::Manifold::Optical {
            continue;
        }
        let grad = fm.gradient(&field, &sel).unwrap();
        // non-degenerate samples only; see the property tests for the gap choice
        if grad.min_gap <= 25.0 {
            continue;
        }
        samples += 1;
        worst_grad = worst_grad.max(grad.discrepancy());

        let g = fm.levels(State::Ground, &field).unwrap();
        worst_unitary = worst_unitary.max(g.unitarity_residual());
        if ion.ground.dimension() == ion.excited.dimension() {
            let e = fm.levels(State::Excited, &field).unwrap();
            let op = TransitionOperator::Sx;
            let s = strength_matrix(&e, &g, &op).unwrap();
            let o = op.full_matrix(&g.basis().unwrap()).unwrap();
            let oo = o.adjoint() * &o;
            for k in 0..g.len() {
                let v = g.vectors().column(k);
                let expect = v.dotc(&(&oo * v)).re;
                let sum: f64 = (0..e.len()).map(|r| s[(r, k)]).sum();
                worst_sum = worst_sum.max((sum - expect).abs());
            }
        }
    }

    let mut worst_model: f64 = 0.0;
    let mut probes = 0;
    for x in -2..=2 {
        for y in -2..=2 {
            for w in -2..=2 {
                let d = FieldVector::new(x as f64, y as f64, w as f64);
                if d.norm() > 2.0 {
                    continue;
                }
                probes += 1;
                let exact = map.frequency(&(z.field + d), &TransitionSelector::nd_clock()).unwrap();
                worst_model = worst_model.max((exact - z.quadratic_model(&d)).abs());
            }
        }
    }
    let elapsed = t.elapsed().as_secs_f64();
    let pass = worst_grad < 1e-4 && worst_unitary < 1e-10 && worst_sum < 1e-10 && worst_model < 0.05 && elapsed < 60.0;
    check(
        pass,
        format!(
            "hygiene: HF-FD {worst_grad:.1e} MHz/mT over {samples} samples, unitarity {worst_unitary:.1e}, sum rule {worst_sum:.1e}, quadratic model {worst_model:.4} MHz over {probes} probes, {elapsed:.2} s"
        ),
    )
}

fn main() {
    let map = FieldMap::new(&Ion::nd143_ylf()).unwrap();
    let (point, elapsed) = locate(&map);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    match &point {
        Some(z) => {
            results.push((1, criterion_1(z, elapsed)));
            results.push((2, criterion_2(z)));
            results.push((3, criterion_3(&map, z)));
            results.push((4, criterion_4(&map, z)));
            results.push((5, criterion_5(&map, z)));
        }
        None => {
            for k in 1..=5 {
                results.push((k, check(false, "no stationary point found".into())));
            }
        }
    }
    results.push((6, criterion_6()));
    if let Some(z) = &point {
        results.push((7, criterion_7(z)));
        results.push((8, criterion_8(&map, z)));
        results.push((9, criterion_9(&map, z)));
    }
    let mut failed = 0;
    for (k, r) in &results {
        println!("criterion {k}: {} {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {} failed", results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
