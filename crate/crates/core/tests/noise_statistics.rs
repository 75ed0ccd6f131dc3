use cdpq::fit::log_log_slope;
use cdpq::noise::{bare_ramsey_expectation, hahn_experiment, ramsey_experiment, sample_noise_trajectory, System};
use cdpq::optimize::linspace;
use cdpq::parallel::{substream, with_workers};
use cdpq::{NoiseModel, TWO_PI};
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn one_over_f(amp: f64) -> NoiseModel {
    NoiseModel {
        one_over_f_amp: amp,
        f_low_hz: 1e3,
        f_high_hz: 1e6,
        ..NoiseModel::default()
    }
}

#[test]
fn periodogram_slope_is_minus_one() {
    let model = one_over_f(TWO_PI * 50e3);
    let duration = 20e-3;
    // four log bins per decade between 3 kHz and 300 kHz
    let edges: Vec<f64> = (0..=8).map(|k| 3e3 * 10f64.powf(k as f64 / 4.0)).collect();
    let mut band_power = vec![0.0; edges.len() - 1];
    let shots = 12;
    for s in 0..shots {
        let traj = sample_noise_trajectory(&model, duration, &mut substream(11, s)).unwrap();
        let n = traj.delta.len();
        let mut buf: Vec<Complex<f64>> = traj.delta.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let df = 1.0 / duration;
        for (k, z) in buf.iter().enumerate().take(n / 2).skip(1) {
            let f = k as f64 * df;
            if let Some(b) = edges.windows(2).position(|w| f >= w[0] && f < w[1]) {
                band_power[b] += z.norm_sqr();
            }
        }
    }
    let centers: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    let psd: Vec<f64> = band_power
        .iter()
        .zip(edges.windows(2))
        .map(|(p, w)| p / (w[1] - w[0]))
        .collect();
    let slope = log_log_slope(&centers, &psd);
    assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
}

#[test]
fn one_over_f_variance_matches_band_power() {
    // ∫ amp²/f df over the band = amp² ln(f_high/f_low)
    let amp = TWO_PI * 10e3;
    let model = one_over_f(amp);
    let shots = 400;
    let mut acc = 0.0;
    for s in 0..shots {
        let r = model.realize(&mut substream(5, s));
        acc += r.tones.iter().map(|t| 0.5 * t.amp * t.amp).sum::<f64>();
    }
    let per_decade = acc / shots as f64 / 3.0;
    assert!((per_decade / (amp * amp) - 1.0).abs() < 1e-9, "{per_decade}");
}

#[test]
fn quasistatic_variance_within_five_percent() {
    let sigma = TWO_PI * 0.8e6;
    let model = NoiseModel {
        a_cdd_frac_noise: 0.01,
        ..NoiseModel::quasistatic(sigma, 0)
    };
    let n = 20_000;
    let draws: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let r = model.realize(&mut substream(17, k));
            (r.delta_qs, r.a_frac)
        })
        .collect();
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let vd = var(&mut draws.iter().map(|d| d.0));
    let va = var(&mut draws.iter().map(|d| d.1));
    assert!((vd / (sigma * sigma) - 1.0).abs() < 0.05, "{}", vd / (sigma * sigma));
    assert!((va / 1e-4 - 1.0).abs() < 0.05);
}

#[test]
fn bare_ramsey_tracks_gaussian_expectation() {
    let sigma = TWO_PI * 1e6;
    let delays = linspace(0.0, 0.6e-6, 13);
    let c = ramsey_experiment(System::Bare, &delays, &NoiseModel::quasistatic(sigma, 9), 2000).unwrap();
    for ((t, p), e) in delays.iter().zip(&c.survival).zip(&c.stderr) {
        let want = bare_ramsey_expectation(sigma, *t);
        assert!((p - want).abs() <= 4.0 * e + 1e-12, "t = {t}: {p} vs {want} ± {e}");
    }
}

#[test]
fn echo_not_worse_than_ramsey() {
    let model = NoiseModel {
        one_over_f_amp: TWO_PI * 30e3,
        ..NoiseModel::quasistatic(TWO_PI * 0.5e6, 21)
    };
    let delays = linspace(0.0, 2e-6, 11);
    let r = ramsey_experiment(System::Bare, &delays, &model, 300).unwrap();
    let h = hahn_experiment(System::Bare, &delays, &model, 300).unwrap();
    for (i, t) in delays.iter().enumerate() {
        let tol = 3.0 * (r.stderr[i].powi(2) + h.stderr[i].powi(2)).sqrt();
        assert!(
            h.survival[i] + tol >= r.survival[i],
            "delay {t}: {} < {}",
            h.survival[i],
            r.survival[i]
        );
    }
    assert!(h.survival.last().unwrap() > r.survival.last().unwrap());
}

#[test]
fn curves_independent_of_worker_count() {
    let model = NoiseModel {
        one_over_f_amp: TWO_PI * 20e3,
        ..NoiseModel::quasistatic(TWO_PI * 0.7e6, 4)
    };
    let delays = linspace(0.0, 1e-6, 9);
    let run = |w| {
        with_workers(Some(w), || ramsey_experiment(System::Bare, &delays, &model, 200))
            .unwrap()
            .unwrap()
    };
    let (a, b) = (run(1), run(4));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.survival), bits(&b.survival));
    assert_eq!(bits(&a.stderr), bits(&b.stderr));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tone_integrals_match_quadrature(seed in 0u64..1000, t0 in 0.0..5e-6f64, len in 1e-8..5e-6f64) {
        let model = one_over_f(TWO_PI * 40e3);
        let r = model.realize(&mut substream(seed, 0));
        let t1 = t0 + len;
        let n = 4000;
        let h = len / n as f64;
        // Simpson's rule
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let mut s = f(t0) + f(t1);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(t0 + k as f64 * h);
            }
            s * h / 3.0
        };
        let i1 = simpson(&|t| r.fluctuation(t));
        let i2 = simpson(&|t| r.fluctuation(t).powi(2));
        let scale = TWO_PI * 40e3 * 10.0 * len;
        prop_assert!((r.fluctuation_integral(t0, t1) - i1).abs() < 1e-6 * scale);
        prop_assert!((r.fluctuation_sq_integral(t0, t1) - i2).abs() < 1e-6 * scale * TWO_PI * 40e3 * 10.0);
    }

    #[test]
    fn realization_is_seed_deterministic(seed in 0u64..10_000, stream in 0u64..64) {
        let model = NoiseModel { one_over_f_amp: 1e4, ..NoiseModel::quasistatic(1e6, 0) };
        let a = model.realize(&mut substream(seed, stream));
        let b = model.realize(&mut substream(seed, stream));
        prop_assert_eq!(a, b);
    }
}
