//! Monte Carlo Ramsey and Hahn-echo experiments on the bare qubit and on
//! the CDPQ.
//!
//! Each shot draws a quasi-static detuning, a fractional CDD amplitude
//! error and a 1/f detuning trajectory (a sum of random-phase tones). Shots
//! are simulated in parallel, each from its own random substream.
//!
//! Bare qubit: ideal instantaneous π/2 pulses, survival `(1 + cos φ)/2`
//! with `φ` the exact integral of the detuning over the free evolution.
//!
//! CDPQ: the calibrated X/2 schedules are propagated under the perturbed
//! rotating-frame Hamiltonian. Waits are exact for the static part of the
//! noise; the 1/f part adds the integral of the resulting splitting change,
//! expanded to second order in the fluctuation about the static offset.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::CalibrationResult;
use crate::compiler::{compile_gate, GateSpec};
use crate::device::DressedLabel;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, MatrixText};
use crate::linalg::{CMatrix, I};
use crate::parallel::{substream, try_par_map};
use crate::sim::Simulator;

pub use crate::fit::{fit_decay, DecayFit, DecayModel};

/// Minimum number of shots per experiment.
pub const MIN_SHOTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    /// Std of the per-shot detuning offset, rad/s.
    pub sigma_quasistatic: f64,
    /// 1/f detuning amplitude, rad/s per √decade.
    pub one_over_f_amp: f64,
    /// Std of the per-shot fractional A_CDD error.
    pub a_cdd_frac_noise: f64,
    /// Visibility decay time; `None` disables it.
    pub t1: Option<f64>,
    pub seed: u64,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub tones_per_decade: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_quasistatic: 0.0,
            one_over_f_amp: 0.0,
            a_cdd_frac_noise: 0.0,
            t1: None,
            seed: 0,
            f_low_hz: 1e3,
            f_high_hz: 10e6,
            tones_per_decade: 20,
        }
    }
}

impl NoiseModel {
    pub fn quasistatic(sigma: f64, seed: u64) -> Self {
        Self {
            sigma_quasistatic: sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (x, what) in [
            (self.sigma_quasistatic, "sigma_quasistatic"),
            (self.one_over_f_amp, "one_over_f_amp"),
            (self.a_cdd_frac_noise, "a_cdd_frac_noise"),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::Validation(format!("{what} must be >= 0, got {x}")));
            }
        }
        if let Some(t1) = self.t1 {
            if !(t1 > 0.0) {
                return Err(Error::Validation(format!("t1 must be positive when set, got {t1}")));
            }
        }
        if !(self.f_low_hz > 0.0 && self.f_high_hz > self.f_low_hz) {
            return Err(Error::Validation("1/f band needs 0 < f_low < f_high".into()));
        }
        if self.tones_per_decade == 0 {
            return Err(Error::Validation("tones_per_decade must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_quasistatic == 0.0 && self.one_over_f_amp == 0.0 && self.a_cdd_frac_noise == 0.0
    }

    fn visibility(&self, t: f64) -> f64 {
        self.t1.map_or(1.0, |t1| (-t / t1).exp())
    }

    /// Draws one shot. The quasi-static offset, amplitude error and tone
    /// phases all come from `rng`.
    pub fn realize(&self, rng: &mut ChaCha8Rng) -> NoiseRealization {
        let gauss = |rng: &mut ChaCha8Rng, s: f64| {
            if s > 0.0 {
                Normal::new(0.0, s).expect("finite std").sample(rng)
            } else {
                0.0
            }
        };
        let delta_qs = gauss(rng, self.sigma_quasistatic);
        let a_frac = gauss(rng, self.a_cdd_frac_noise);
        let mut tones = Vec::new();
        if self.one_over_f_amp > 0.0 {
            let decades = (self.f_high_hz / self.f_low_hz).log10();
            let n = (decades * self.tones_per_decade as f64).ceil().max(1.0) as usize;
            let slot = decades / n as f64;
            // equal power per log-frequency slot is a 1/f spectrum
            let amp = self.one_over_f_amp * (2.0 * slot).sqrt();
            for k in 0..n {
                let lf = self.f_low_hz.log10() + slot * (k as f64 + rng.random::<f64>());
                tones.push(Tone {
                    omega: TAU * 10f64.powf(lf),
                    amp,
                    phase: TAU * rng.random::<f64>(),
                });
            }
        }
        NoiseRealization {
            delta_qs,
            a_frac,
            tones,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tone {
    pub omega: f64,
    pub amp: f64,
    pub phase: f64,
}

/// Noise seen by one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    pub delta_qs: f64,
    pub a_frac: f64,
    pub tones: Vec<Tone>,
}

impl NoiseRealization {
    /// 1/f part of the detuning at time `t`.
    pub fn fluctuation(&self, t: f64) -> f64 {
        self.tones.iter().map(|k| k.amp * (k.omega * t + k.phase).cos()).sum()
    }

    pub fn detuning(&self, t: f64) -> f64 {
        self.delta_qs + self.fluctuation(t)
    }

    /// `∫ δ_f dt` over `[t0, t1]`.
    pub fn fluctuation_integral(&self, t0: f64, t1: f64) -> f64 {
        self.tones
            .iter()
            .map(|k| k.amp * ((k.omega * t1 + k.phase).sin() - (k.omega * t0 + k.phase).sin()) / k.omega)
            .sum()
    }

    /// `∫ δ_f² dt` over `[t0, t1]`.
    pub fn fluctuation_sq_integral(&self, t0: f64, t1: f64) -> f64 {
        // cos a cos b = [cos(a-b) + cos(a+b)]/2
        let int_cos = |w: f64, p: f64| {
            if w.abs() < 1e-300 {
                p.cos() * (t1 - t0)
            } else {
                ((w * t1 + p).sin() - (w * t0 + p).sin()) / w
            }
        };
        let mut s = 0.0;
        for (i, a) in self.tones.iter().enumerate() {
            for b in &self.tones[i..] {
                let w = if std::ptr::eq(a, b) { 1.0 } else { 2.0 };
                let v = int_cos(a.omega - b.omega, a.phase - b.phase) + int_cos(a.omega + b.omega, a.phase + b.phase);
                s += w * 0.5 * a.amp * b.amp * v;
            }
        }
        s
    }
}

/// Sampled noise trajectory of one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTrajectory {
    pub times: Vec<f64>,
    /// Total detuning offset, rad/s.
    pub delta: Vec<f64>,
    /// Fractional A_CDD error (constant per shot).
    pub a_frac: Vec<f64>,
}

/// Samples one shot on a grid fine enough for the highest tone (8 points
/// per period, at most 2²² samples).
pub fn sample_noise_trajectory(model: &NoiseModel, duration: f64, rng: &mut ChaCha8Rng) -> Result<NoiseTrajectory> {
    model.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Validation(format!("duration must be positive, got {duration}")));
    }
    let n = ((duration * model.f_high_hz * 8.0).ceil() as usize + 1).clamp(2, 1 << 22);
    let r = model.realize(rng);
    let times: Vec<f64> = (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect();
    let delta = times.iter().map(|&t| r.detuning(t)).collect();
    Ok(NoiseTrajectory {
        a_frac: vec![r.a_frac; n],
        times,
        delta,
    })
}

/// Everything a CDPQ coherence run needs.
#[derive(Clone, Debug)]
pub struct CdpqSetup {
    pub sim: Simulator,
    pub calib: CalibrationResult,
    /// Round delays to whole frame periods so the noiseless sequence is
    /// delay independent.
    pub snap_delays: bool,
}

impl CdpqSetup {
    pub fn new(sim: Simulator, calib: CalibrationResult) -> Result<Self> {
        if !calib.is_calibrated() {
            return Err(Error::MissingCalibration("CDPQ coherence needs a calibrated X/2"));
        }
        Ok(Self {
            sim,
            calib,
            snap_delays: true,
        })
    }

    pub fn unsnapped(mut self) -> Self {
        self.snap_delays = false;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub enum System<'a> {
    Bare,
    Cdpq(&'a CdpqSetup),
}

impl System<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            System::Bare => "bare",
            System::Cdpq(_) => "cdpq",
        }
    }

    /// Fit shape used for this system's curves.
    pub fn default_fit(&self) -> DecayModel {
        match self {
            System::Bare => DecayModel::Gaussian,
            System::Cdpq(_) => DecayModel::Exponential,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sequence {
    Ramsey,
    Hahn,
}

impl Sequence {
    pub fn as_str(self) -> &'static str {
        match self {
            Sequence::Ramsey => "ramsey",
            Sequence::Hahn => "hahn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayCurve {
    pub system: String,
    pub sequence: Sequence,
    pub delays: Vec<f64>,
    pub survival: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `None` when no decay could be resolved (e.g. noiseless runs).
    pub fit: Option<DecayFit>,
}

impl DecayCurve {
    pub fn refit(&mut self, model: DecayModel) -> Result<&DecayFit> {
        self.fit = Some(fit_decay(&self.delays, &self.survival, model)?);
        Ok(self.fit.as_ref().expect("just set"))
    }

    pub fn t2(&self) -> Option<f64> {
        self.fit.map(|f| f.t2)
    }

    pub fn to_matrix(&self) -> MatrixText {
        let mut m = MatrixText::new(["delay_s", "survival", "stderr"])
            .meta("system", &self.system)
            .meta("sequence", self.sequence.as_str());
        match &self.fit {
            Some(f) => {
                m.push_meta("fit_model", f.model.as_str());
                m.push_meta("fit_t2_s", fmt_f64(f.t2));
                m.push_meta("fit_t2_err_s", fmt_f64(f.t2_err));
                m.push_meta("fit_amplitude", fmt_f64(f.amplitude));
                m.push_meta("fit_offset", fmt_f64(f.offset));
                m.push_meta("fit_rms_residual", fmt_f64(f.rms_residual));
            }
            None => m.push_meta("fit_model", "none"),
        }
        for i in 0..self.delays.len() {
            m.rows.push(vec![self.delays[i], self.survival[i], self.stderr[i]]);
        }
        m
    }
}

pub fn ramsey_experiment(system: System, delays: &[f64], model: &NoiseModel, n_shots: usize) -> Result<DecayCurve> {
    run_experiment(system, Sequence::Ramsey, delays, model, n_shots)
}

/// Total free evolution is split in two halves around the π pulse.
pub fn hahn_experiment(system: System, delays: &[f64], model: &NoiseModel, n_shots: usize) -> Result<DecayCurve> {
    run_experiment(system, Sequence::Hahn, delays, model, n_shots)
}

fn run_experiment(
    system: System,
    seq: Sequence,
    delays: &[f64],
    model: &NoiseModel,
    n_shots: usize,
) -> Result<DecayCurve> {
    model.validate()?;
    if n_shots < MIN_SHOTS {
        return Err(Error::Validation(format!(
            "need at least {MIN_SHOTS} shots, got {n_shots}"
        )));
    }
    let delays = prepare_delays(system, delays)?;
    let per_shot: Vec<Vec<f64>> = match system {
        System::Bare => try_par_map(n_shots, |s| {
            let r = model.realize(&mut substream(model.seed, s as u64));
            Ok(delays.iter().map(|&t| bare_survival(&r, seq, t)).collect())
        })?,
        System::Cdpq(setup) => {
            let kernel = CdpqKernel::new(setup)?;
            try_par_map(n_shots, |s| {
                let r = model.realize(&mut substream(model.seed, s as u64));
                kernel.shot(&r, seq, &delays)
            })?
        }
    };
    let n = n_shots as f64;
    let mut survival = Vec::with_capacity(delays.len());
    let mut stderr = Vec::with_capacity(delays.len());
    for (j, &t) in delays.iter().enumerate() {
        let (mut s1, mut s2) = (0.0, 0.0);
        for shot in &per_shot {
            s1 += shot[j];
            s2 += shot[j] * shot[j];
        }
        let mean = s1 / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let v = model.visibility(t);
        survival.push((0.5 + (mean - 0.5) * v).clamp(0.0, 1.0));
        stderr.push(v * (var / n).sqrt());
    }
    let fit = fit_decay(&delays, &survival, system.default_fit()).ok();
    Ok(DecayCurve {
        system: system.name().into(),
        sequence: seq,
        delays,
        survival,
        stderr,
        fit,
    })
}

fn prepare_delays(system: System, delays: &[f64]) -> Result<Vec<f64>> {
    if delays.is_empty() {
        return Err(Error::Validation("no delays given".into()));
    }
    let out: Vec<f64> = match system {
        System::Cdpq(setup) if setup.snap_delays => {
            let period = setup.calib.period();
            delays.iter().map(|&t| (t / period).round() * period).collect()
        }
        _ => delays.to_vec(),
    };
    if out.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::Validation("delays must be finite and >= 0".into()));
    }
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "delays must be strictly increasing (after snapping to the frame period)".into(),
        ));
    }
    Ok(out)
}

fn bare_survival(r: &NoiseRealization, seq: Sequence, t: f64) -> f64 {
    let phase = match seq {
        Sequence::Ramsey => r.delta_qs * t + r.fluctuation_integral(0.0, t),
        Sequence::Hahn => r.fluctuation_integral(0.0, t / 2.0) - r.fluctuation_integral(t / 2.0, t),
    };
    0.5 * (1.0 + phase.cos())
}

/// Local quadratic model of the pair splitting around the sweet spot.
struct SplittingModel {
    slope: f64,
    curvature: f64,
}

struct CdpqKernel<'a> {
    setup: &'a CdpqSetup,
    schedule: crate::compiler::PulseSchedule,
    split: SplittingModel,
    basis: CMatrix,
}

impl<'a> CdpqKernel<'a> {
    fn new(setup: &'a CdpqSetup) -> Result<Self> {
        let handle = Arc::new(setup.calib.clone());
        let schedule = compile_gate(GateSpec::X90, &setup.calib, &handle)?;
        let sim = &setup.sim;
        let h = 1e-3 * sim.a_cdd();
        let s = |d: f64| sim.perturbed(d, 0.0).actual_splitting();
        let (sp, s0, sm) = (s(h), s(0.0), s(-h));
        Ok(Self {
            setup,
            schedule,
            split: SplittingModel {
                slope: (sp - sm) / (2.0 * h),
                curvature: (sp - 2.0 * s0 + sm) / (2.0 * h * h),
            },
            basis: sim.reference_basis().basis.matrix().clone(),
        })
    }

    /// Splitting phase from the 1/f part on `[t0, t1]`, relative to the
    /// static offset already present in the perturbed dynamics.
    fn extra_phase(&self, r: &NoiseRealization, t0: f64, t1: f64) -> f64 {
        if r.tones.is_empty() {
            return 0.0;
        }
        let lin = self.split.slope + 2.0 * self.split.curvature * r.delta_qs;
        lin * r.fluctuation_integral(t0, t1) + self.split.curvature * r.fluctuation_sq_integral(t0, t1)
    }

    /// `R_z(φ)` on the dressed pair in the reference basis.
    fn frame_kick(&self, phi: f64) -> CMatrix {
        let n = self.basis.nrows();
        let mut d = CMatrix::identity(n, n);
        d[(0, 0)] = (I * (phi / 2.0)).exp();
        d[(1, 1)] = (-I * (phi / 2.0)).exp();
        &self.basis * d * self.basis.adjoint()
    }

    fn shot(&self, r: &NoiseRealization, seq: Sequence, delays: &[f64]) -> Result<Vec<f64>> {
        let sim = self.setup.sim.perturbed(r.delta_qs, r.a_frac);
        let g = sim.schedule_unitary(&self.schedule)?;
        let g = g.matrix();
        let t_gate = self.schedule.total_duration();
        let psi0 = self.setup.sim.dressed_state(DressedLabel::Minus);
        let psi0 = psi0.amplitudes();
        let target = match seq {
            Sequence::Ramsey => DressedLabel::Plus.index(),
            Sequence::Hahn => DressedLabel::Minus.index(),
        };
        let after_first = g * psi0;
        let wait = |t: f64| -> CMatrix { sim.wait_unitary(t).matrix().clone() };
        let mut out = Vec::with_capacity(delays.len());
        for &t in delays {
            let psi = match seq {
                Sequence::Ramsey => {
                    let k = self.frame_kick(self.extra_phase(r, t_gate, t_gate + t));
                    g * (k * (wait(t) * &after_first))
                }
                Sequence::Hahn => {
                    let h = t / 2.0;
                    let w = wait(h);
                    let k1 = self.frame_kick(self.extra_phase(r, t_gate, t_gate + h));
                    let t2 = 3.0 * t_gate + h;
                    let k2 = self.frame_kick(self.extra_phase(r, t2, t2 + h));
                    let mid = g * (g * (&k1 * (&w * &after_first)));
                    g * (k2 * (w * mid))
                }
            };
            let amps = self.basis.adjoint() * psi;
            out.push(amps[target].norm_sqr());
        }
        Ok(out)
    }
}

/// Analytic bare Ramsey survival under Gaussian quasi-static noise.
pub fn bare_ramsey_expectation(sigma: f64, t: f64) -> f64 {
    0.5 * (1.0 + (-0.5 * sigma * sigma * t * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::TWO_PI;

    #[test]
    fn zero_model_gives_zero_trajectory() {
        let tr = sample_noise_trajectory(&NoiseModel::default(), 1e-6, &mut substream(1, 0)).unwrap();
        assert!(tr.delta.iter().all(|&d| d == 0.0));
        assert!(tr.a_frac.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn tone_integrals_match_quadrature() {
        let m = NoiseModel {
            one_over_f_amp: TWO_PI * 1e5,
            f_low_hz: 1e5,
            f_high_hz: 1e7,
            tones_per_decade: 4,
            ..NoiseModel::default()
        };
        let r = m.realize(&mut substream(3, 0));
        let (t0, t1) = (0.3e-6, 1.7e-6);
        let n = 200_000;
        let dt = (t1 - t0) / n as f64;
        let (mut q1, mut q2) = (0.0, 0.0);
        for k in 0..n {
            let f = r.fluctuation(t0 + (k as f64 + 0.5) * dt);
            q1 += f * dt;
            q2 += f * f * dt;
        }
        assert!((r.fluctuation_integral(t0, t1) - q1).abs() < 1e-6 * q2.sqrt().max(1.0));
        assert!((r.fluctuation_sq_integral(t0, t1) - q2).abs() < 1e-6 * q2);
    }

    #[test]
    fn bare_hahn_refocuses_static_noise() {
        let m = NoiseModel::quasistatic(TWO_PI * 1e6, 2);
        let d: Vec<f64> = (1..=10).map(|k| k as f64 * 1e-7).collect();
        let c = hahn_experiment(System::Bare, &d, &m, 200).unwrap();
        assert!(c.survival.iter().all(|&p| p > 0.999_999));
    }

    #[test]
    fn too_few_shots_rejected() {
        let m = NoiseModel::default();
        assert!(ramsey_experiment(System::Bare, &[0.0, 1e-6], &m, 10).is_err());
    }

    #[test]
    fn t1_envelope_pulls_towards_half() {
        let m = NoiseModel {
            t1: Some(1e-6),
            ..NoiseModel::default()
        };
        let c = ramsey_experiment(System::Bare, &[0.0, 1e-6, 2e-6], &m, 100).unwrap();
        assert!((c.survival[1] - (0.5 + 0.5 * (-1.0f64).exp())).abs() < 1e-12);
    }
}
