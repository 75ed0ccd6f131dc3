//! End-to-end acceptance checks at the reference device parameters. Runs
//! as a plain binary so every criterion reports a single line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen};

use cdpq::benchmarking::{
    avg_clifford_time, build_clifford_table, ideal_primitive, rb_sequence, run_rb, CliffordTable,
};
use cdpq::calibration::{
    auto_calibrate, coarse_scan, leakage_sweep, speed_limit, train_infidelity, CalibrationPlan, CalibrationRun,
};
use cdpq::compiler::compile_gate;
use cdpq::device::{dressed_transform, pair_splitting, qubit_frequency, rwa_hamiltonian_3lvl, sweet_spot_detuning};
use cdpq::fit::log_log_slope;
use cdpq::linalg::C64;
use cdpq::noise::{ramsey_experiment, CdpqSetup, System};
use cdpq::optimize::linspace;
use cdpq::parallel::substream;
use cdpq::pulse::{gate_envelope, half_gaussian_ramp, RampDirection};
use cdpq::sim::{lab_frame_plus_population, ramp_preparation, two_level_plus_population};
use cdpq::{
    DressedLabel, DriveConfig, GateSpec, Model, NoiseModel, Operator, PulseEnvelope, Simulator, TransmonParams, TWO_PI,
};

const MHZ: f64 = TWO_PI * 1e6;
const RWA3: Model = Model::Rwa { n_levels: 3 };

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params() -> TransmonParams {
    TransmonParams::reference_device()
}

fn calibration() -> &'static CalibrationRun {
    static RUN: OnceLock<CalibrationRun> = OnceLock::new();
    RUN.get_or_init(|| {
        auto_calibrate(
            &params(),
            &DriveConfig::reference_drive(),
            RWA3,
            &CalibrationPlan::reference(),
        )
        .expect("calibration at the reference point")
    })
}

fn calibrated_sim() -> Simulator {
    Simulator::new(params(), &calibration().drive, RWA3).unwrap()
}

/// Three-level rotating-frame matrix built directly from its entries, gate amplitude 0.
fn rwa3_real(a: f64, delta: f64, e_c: f64) -> Matrix3<f64> {
    let r2 = std::f64::consts::SQRT_2;
    Matrix3::new(delta, a, 0.0, a, -delta, r2 * a, 0.0, r2 * a, -2.0 * e_c - 3.0 * delta) * 0.5
}

/// Splitting of the two eigenvalues with the most weight on {|0⟩, |1⟩}.
fn oracle_pair_splitting(m: Matrix3<f64>) -> f64 {
    let e = SymmetricEigen::new(m);
    let mut idx = [0usize, 1, 2];
    let w = |k: usize| e.eigenvectors[(0, k)].powi(2) + e.eigenvectors[(1, k)].powi(2);
    idx.sort_by(|&a, &b| w(b).total_cmp(&w(a)));
    (e.eigenvalues[idx[0]] - e.eigenvalues[idx[1]]).abs()
}

fn c1_flux_map() -> Outcome {
    let p = params();
    let f = qubit_frequency(&p, 0.367).unwrap() / TWO_PI;
    // ω_0/2π − E_C/h = 4.64 GHz
    let f0 = 4.64e9 + 137e6;
    let oracle = f0 * (std::f64::consts::PI * 0.367).cos().sqrt() - 137e6;
    let pass = (f - 2.90e9).abs() <= 0.01e9 && (f - oracle).abs() < 1.0;
    outcome(
        pass,
        format!(
            "f_q = {:.4} GHz (oracle {:.4} GHz, target 2.90 ± 0.01)",
            f / 1e9,
            oracle / 1e9
        ),
    )
}

fn c2_dressed_basis() -> Outcome {
    let p = params();
    let beta = 0.1;
    let a = beta * p.e_c();
    let m = rwa3_real(a, 0.0, p.e_c());
    let lib = rwa3_hamiltonian_matches(&m, a, &p);
    let e = SymmetricEigen::new(m);
    let db = dressed_transform(beta).unwrap();
    let names = ["-", "+", "f"];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let row = db.analytic_state(k);
        let d = (0..3)
            .map(|j| {
                let ov: C64 = (0..3)
                    .map(|i| row.amplitudes()[i].conj() * e.eigenvectors[(i, j)])
                    .sum();
                (2.0 - 2.0 * ov.norm()).max(0.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
        parts.push(format!("|{name}> {d:.3}"));
    }
    outcome(
        lib && worst <= 0.01,
        format!("beta = 0.1 row distances {} (limit 0.01)", parts.join(", ")),
    )
}

fn rwa3_hamiltonian_matches(m: &Matrix3<f64>, a: f64, p: &TransmonParams) -> bool {
    let h = rwa_hamiltonian_3lvl(a, 0.0, 0.0, p);
    (0..3).all(|i| (0..3).all(|j| (h.get(i, j) - C64::new(m[(i, j)], 0.0)).norm() < 1e-6 * a))
}

fn c3_sweet_spot() -> Outcome {
    let p = params();
    let a = 23.0 * MHZ;
    let dss = sweet_spot_detuning(&p, a, 3);
    let h = 10e3 * TWO_PI;
    let ps = |d: f64| oracle_pair_splitting(rwa3_real(a, d, p.e_c()));
    let slope = (ps(dss + h) - ps(dss - h)) / (2.0 * h);
    let mut worst_rel: f64 = 0.0;
    let mut worst_lib: f64 = 0.0;
    for d in linspace(-10.0 * MHZ, 10.0 * MHZ, 41) {
        let s = ps(dss + d);
        worst_rel = worst_rel.max((s / (a * a + d * d).sqrt() - 1.0).abs());
        worst_lib = worst_lib.max((pair_splitting(&p, 3, a, dss + d) - s).abs() / s);
    }
    let pass = slope.abs() < 1e-3 && worst_rel <= 0.02 && worst_lib < 1e-9;
    outcome(
        pass,
        format!(
            "sweet spot at {:+.3} MHz, slope {:.1e}, max |S/sqrt(A^2+D^2) - 1| = {:.4} over |D| <= 10 MHz",
            dss / MHZ,
            slope,
            worst_rel
        ),
    )
}

fn c4_rwa_consistency() -> Outcome {
    let p = TransmonParams::from_uss_frequency(4.64e9, 137e6, 2).unwrap();
    let drive = DriveConfig::reference_drive();
    let gate = |t: f64| gate_envelope(16.0 * MHZ, 40e-9, 100e-9, t);
    let times = linspace(0.0, 1e-6, 51);
    let lab = lab_frame_plus_population(&p, &drive, gate, &times, 64).unwrap();
    let rwa = two_level_plus_population(drive.a_cdd, 0.0, gate, &times, 1e-11);
    let worst = lab.iter().zip(&rwa).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let swing = rwa.iter().fold(1.0_f64, |m, &x| m.min(x));
    outcome(
        worst <= 1e-2 && swing < 0.9,
        format!("max |dP(+)| = {worst:.2e} over 1 us (limit 1e-2), gate pulse moves P(+) to {swing:.3}"),
    )
}

fn c5_calibration() -> Outcome {
    let run = calibration();
    let calib = &run.result;
    let sim = calibrated_sim();
    let block = train_infidelity(calib, &sim, 4).unwrap();
    let handle = std::sync::Arc::new(calib.clone());
    let x90 = compile_gate(GateSpec::X90, calib, &handle).unwrap();
    let mut worst: f64 = 0.0;
    for label in [DressedLabel::Minus, DressedLabel::Plus] {
        let psi0 = sim.dressed_state(label);
        let mut psi = psi0.clone();
        for _ in 0..4 {
            psi = sim.evolve(&x90, &psi).unwrap();
        }
        worst = worst.max(1.0 - psi0.fidelity(&psi));
    }
    outcome(
        worst < 1e-4,
        format!(
            "A_g = {:.3} MHz, t_close = {:.2} ns, 4 x X/2 state infidelity {:.1e} (block {:.1e}, limit 1e-4)",
            calib.a_g / MHZ,
            calib.t_close * 1e9,
            worst,
            block
        ),
    )
}

fn c6_rate_law() -> Outcome {
    let p = params();
    let plan = CalibrationPlan::reference();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d_mhz in [0.0, 5.0, -5.0, 10.0, -10.0] {
        let d = d_mhz * MHZ;
        let drive = DriveConfig {
            detuning_offset: d,
            ..DriveConfig::reference_drive()
        };
        let sim = Simulator::new(p, &drive, RWA3).unwrap();
        let grid = linspace(0.0, plan.t_c_periods * TWO_PI / sim.splitting(), plan.t_c_points);
        let scan = coarse_scan(&plan.a_g_grid, &grid, plan.t_g, &sim).unwrap();
        let expect = (drive.a_cdd.powi(2) + d * d).sqrt();
        let rel = scan.rate / expect - 1.0;
        worst = worst.max(rel.abs());
        parts.push(format!("{d_mhz:+.0}: {:+.2}%", 100.0 * rel));
    }
    outcome(
        worst <= 0.01,
        format!("rate vs sqrt(A^2+D^2) [MHz: err] {}", parts.join(", ")),
    )
}

fn c7_leakage() -> Outcome {
    let sim = Simulator::new(params(), &DriveConfig::reference_drive(), RWA3).unwrap();
    let env = PulseEnvelope::gate(29.12 * MHZ, 40e-9, 0.0).unwrap();
    let u = sim.pulse_unitary(&env);
    let fine = sim.clone().with_pulse_dt(2.5e-11).unwrap().pulse_unitary(&env);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    let mut converged = true;
    for label in [DressedLabel::Minus, DressedLabel::Plus] {
        let psi = sim.dressed_state(label);
        let l = sim.leakage(&u.apply(&psi).unwrap());
        let lf = sim.leakage(&fine.apply(&psi).unwrap());
        converged &= (l - lf).abs() <= 0.05 * lf.max(1e-7);
        worst = worst.max(l);
        parts.push(format!("from |{}> {:.2e}", label.as_str(), l));
    }
    outcome(
        worst <= 1e-3 && converged,
        format!("|f> population {} (limit 1e-3)", parts.join(", ")),
    )
}

fn c8_speed_limit() -> Outcome {
    let p = params();
    let limit_at = |a_mhz: f64, model: Model| -> (f64, f64) {
        let drive = DriveConfig {
            a_cdd: a_mhz * MHZ,
            ..DriveConfig::reference_drive()
        };
        let sim = Simulator::new(p, &drive, model).unwrap();
        let s = a_mhz / 23.0;
        let a_g = linspace(s * MHZ, s * 60.0 * MHZ, 60);
        let t_g = linspace(5e-9 / s, 80e-9 / s, 76);
        let step = t_g[1] - t_g[0];
        let t = [DressedLabel::Minus, DressedLabel::Plus]
            .iter()
            .map(|&l| speed_limit(&leakage_sweep(&a_g, &t_g, l, &sim).unwrap().0).unwrap())
            .fold(0.0, f64::max);
        (t, step)
    };
    let (t23, step23) = limit_at(23.0, RWA3);
    let (t46, _) = limit_at(46.0, RWA3);
    let two_level = limit_at(46.0, Model::TwoLevel).0 / limit_at(23.0, Model::TwoLevel).0;
    let bound = TWO_PI / (23.0 * MHZ);
    let ratio = t46 / t23;
    let pass = t23 <= bound + step23 && (0.4..=0.6).contains(&ratio);
    outcome(
        pass,
        format!(
            "t_min(23 MHz) = {:.1} ns vs 2pi/A = {:.1} ns, t_min(46 MHz) = {:.1} ns, ratio {:.3} (0.5 ± 20%; two-level {:.3})",
            t23 * 1e9,
            bound * 1e9,
            t46 * 1e9,
            ratio,
            two_level
        ),
    )
}

/// ‖U − e^{iθ}V‖_F minimized over θ.
fn phase_free_distance(u: &Operator, v: &Operator) -> f64 {
    let ov = (v.matrix().adjoint() * u.matrix()).trace();
    let phase = if ov.norm() > 0.0 {
        ov / ov.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    (u.matrix() - v.matrix() * phase).norm()
}

fn element_unitary(table: &CliffordTable, id: usize) -> Operator {
    table.get(id).primitives.iter().fold(Operator::identity(2), |acc, &g| {
        Operator::new(ideal_primitive(g).unwrap().matrix() * acc.matrix()).unwrap()
    })
}

fn c9_clifford_algebra() -> Outcome {
    let table = build_clifford_table().unwrap();
    // ids are 1-based; slot 0 stays unused
    let units: Vec<Operator> = (0..=table.len()).map(|i| element_unitary(&table, i.max(1))).collect();
    let mut worst_closure: f64 = 0.0;
    for a in &units[1..] {
        for b in &units[1..] {
            let prod = Operator::new(a.matrix() * b.matrix()).unwrap();
            let d = units[1..]
                .iter()
                .map(|e| phase_free_distance(&prod, e))
                .fold(f64::INFINITY, f64::min);
            worst_closure = worst_closure.max(d);
        }
    }
    let mut worst_seq: f64 = 0.0;
    for k in 0..1000u64 {
        let mut rng = substream(2024, k);
        let m = 1 + (k as usize * 37) % 300;
        let (ids, rec) = rb_sequence(m, &table, &mut rng).unwrap();
        let total = ids
            .iter()
            .chain(std::iter::once(&rec))
            .fold(Operator::identity(2), |acc, &id| {
                Operator::new(units[id].matrix() * acc.matrix()).unwrap()
            });
        worst_seq = worst_seq.max(phase_free_distance(&total, &Operator::identity(2)));
    }
    outcome(
        table.len() == 24 && worst_closure < 1e-10 && worst_seq < 1e-10,
        format!(
            "{} elements, 576 products max distance {:.1e}, 1000 sequences max distance {:.1e}",
            table.len(),
            worst_closure,
            worst_seq
        ),
    )
}

fn c10_rb() -> Outcome {
    let calib = &calibration().result;
    let sim = calibrated_sim();
    let lengths: Vec<usize> = (1..=6).map(|k| 1 << k).collect();
    let clean = run_rb(&lengths, 100, calib, None, &sim, 7).unwrap();
    let mut parts = vec![format!("noiseless F = {:.6}", clean.fidelity)];
    let mut band = true;
    let mut prev = clean.fidelity;
    let mut ordered = true;
    for s in [0.3, 0.5, 0.7] {
        let noise = NoiseModel::quasistatic(s * MHZ, 7);
        let r = run_rb(&lengths, 100, calib, Some(&noise), &sim, 7).unwrap();
        band &= (0.990..=0.997).contains(&r.fidelity);
        ordered &= r.fidelity < prev;
        prev = r.fidelity;
        parts.push(format!("sigma {s} MHz F = {:.6}", r.fidelity));
    }
    let pass = clean.fidelity >= 0.999 && band && ordered;
    outcome(pass, format!("{} (noisy band 0.990-0.997)", parts.join(", ")))
}

fn c11_clifford_time() -> Outcome {
    let a = 23.0 * MHZ;
    let (t_g, t_c) = (40e-9, 36.396e-9);
    let t = avg_clifford_time(t_g, t_c, a).unwrap();
    let period = 1.0 / 23e6;
    let oracle = t_g + t_c + 9.0 * period / 24.0;
    let pass = (t - 92.7e-9).abs() <= 0.05e-9 && (t - oracle).abs() < 1e-15;
    outcome(
        pass,
        format!("T_avg = {:.2} ns for t_g + t_c = 76.40 ns (target 92.7)", t * 1e9),
    )
}

fn c12_noise_protection() -> Outcome {
    let calib = calibration().result.clone();
    let setup = CdpqSetup::new(calibrated_sim(), calib).unwrap();
    let shots = 400;
    let sigma = MHZ;
    let bare_curve = ramsey_experiment(
        System::Bare,
        &linspace(0.0, 1e-6, 41),
        &NoiseModel::quasistatic(sigma, 3),
        shots,
    )
    .unwrap();
    let t2_of = |s: f64, eps: f64, window: f64| -> f64 {
        let model = NoiseModel {
            sigma_quasistatic: s,
            a_cdd_frac_noise: eps,
            seed: 3,
            ..NoiseModel::default()
        };
        let c = ramsey_experiment(System::Cdpq(&setup), &linspace(0.0, window, 41), &model, shots).unwrap();
        c.t2().unwrap_or(f64::NAN)
    };
    let bare = bare_curve.t2().unwrap_or(f64::NAN);
    let cdpq = t2_of(sigma, 0.0, 40e-6);
    let ratio = cdpq / bare;
    let sigmas = [0.5, 1.0, 2.0];
    let rates: Vec<f64> = sigmas
        .iter()
        .map(|&s| 1.0 / t2_of(s * MHZ, 0.0, 40e-6 / (s * s)))
        .collect();
    let p_sigma = log_log_slope(&sigmas, &rates);
    let eps = [0.005, 0.01, 0.02];
    let rates: Vec<f64> = eps.iter().map(|&e| 1.0 / t2_of(0.0, e, 4e-6 * 0.01 / e)).collect();
    let p_eps = log_log_slope(&eps, &rates);
    let pass = ratio >= 10.0 && (p_sigma - 2.0).abs() <= 0.3 && (p_eps - 1.0).abs() <= 0.2;
    outcome(
        pass,
        format!(
            "T2 bare {:.3} us, CDPQ {:.2} us, ratio {:.1} (>= 10); power in sigma {:.3} (2.0 ± 0.3), in A noise {:.3} (1.0 ± 0.2)",
            bare * 1e6,
            cdpq * 1e6,
            ratio,
            p_sigma,
            p_eps
        ),
    )
}

fn c13_initialization() -> Outcome {
    let sim = Simulator::new(params(), &DriveConfig::reference_drive(), RWA3).unwrap();
    let ramps = [0.25e-6, 0.5e-6, 1e-6, 2e-6];
    let fids: Vec<f64> = ramps
        .iter()
        .map(|&t| {
            let ramp = half_gaussian_ramp(sim.a_cdd(), t, RampDirection::On).unwrap();
            ramp_preparation(&sim, &ramp, (t * 1e10) as usize)
                .unwrap()
                .final_fidelity
        })
        .collect();
    let monotone = fids.windows(2).all(|w| w[1] >= w[0]);
    let last = fids[fids.len() - 1];
    let listed: Vec<String> = ramps
        .iter()
        .zip(&fids)
        .map(|(t, f)| format!("{} us {:.5}", t * 1e6, f))
        .collect();
    outcome(
        last >= 0.999 && monotone,
        format!("fidelity {} (>= 0.999 at 2 us, monotone {monotone})", listed.join(", ")),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("flux map", c1_flux_map),
        ("dressed basis", c2_dressed_basis),
        ("sweet spot", c3_sweet_spot),
        ("rwa consistency", c4_rwa_consistency),
        ("calibration", c5_calibration),
        ("ramsey rate law", c6_rate_law),
        ("operating-point leakage", c7_leakage),
        ("speed limit", c8_speed_limit),
        ("clifford algebra", c9_clifford_algebra),
        ("randomized benchmarking", c10_rb),
        ("clifford time", c11_clifford_time),
        ("noise protection", c12_noise_protection),
        ("adiabatic initialization", c13_initialization),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|s| name.contains(s.as_str()) || *s == (i + 1).to_string())
        {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if out.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!out.pass);
        println!(
            "criterion {label:<28} {status}  {} [{:.1}s]",
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
