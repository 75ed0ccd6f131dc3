//! Drive envelopes and their spectra.
//!
//! Amplitudes are rad/s, times are seconds, spectral axes are Hz.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::device::TWO_PI;
use crate::error::{Error, Result};

/// Literal normalization of the cos·sin gate envelope. Its true peak is
/// `3√3/4 / 1.3 ≈ 0.99926` of `A_g`; calibration absorbs the difference.
pub const GATE_NORMALIZATION: f64 = 1.3;

/// AWG sample rate the waveforms default to.
pub const DEFAULT_SAMPLE_RATE: f64 = 1e9;

/// Half-Gaussian ramps use σ = ramp_time / RAMP_SIGMAS and are cut at
/// RAMP_SIGMAS·σ, with the pedestal at the cut subtracted.
pub const RAMP_SIGMAS: f64 = 3.0;

/// `A(t) = (A_g/1.3)(1 + cos 2π(t−t0)/t_g) sin 2π(t−t0)/t_g` on `|t−t0| ≤ t_g/2`.
#[inline]
pub fn gate_envelope(a_g: f64, t_g: f64, t0: f64, t: f64) -> f64 {
    let s = t - t0;
    if s.abs() > 0.5 * t_g {
        return 0.0;
    }
    let x = TWO_PI * s / t_g;
    a_g / GATE_NORMALIZATION * (1.0 + x.cos()) * x.sin()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampDirection {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PulseEnvelope {
    /// The cos·sin gate pulse; `start` is the left edge, `t0 = start + t_g/2`.
    GateCosSin {
        amplitude: f64,
        duration: f64,
        start: f64,
    },
    HalfGaussian {
        amplitude: f64,
        duration: f64,
        start: f64,
        direction: RampDirection,
    },
    Flat {
        amplitude: f64,
        duration: f64,
        start: f64,
    },
    /// Cosine-shaped frequency sweep; evaluates to the detuning Δ(t) in
    /// rad/s while the CDD amplitude stays at `amplitude`.
    ChirpRamp {
        amplitude: f64,
        duration: f64,
        start: f64,
        f_start_hz: f64,
        f_stop_hz: f64,
    },
}

impl PulseEnvelope {
    pub fn gate(amplitude: f64, duration: f64, start: f64) -> Result<Self> {
        check_duration(duration)?;
        Ok(PulseEnvelope::GateCosSin {
            amplitude,
            duration,
            start,
        })
    }

    pub fn flat(amplitude: f64, duration: f64, start: f64) -> Result<Self> {
        check_duration(duration)?;
        Ok(PulseEnvelope::Flat {
            amplitude,
            duration,
            start,
        })
    }

    pub fn start(&self) -> f64 {
        match *self {
            PulseEnvelope::GateCosSin { start, .. }
            | PulseEnvelope::HalfGaussian { start, .. }
            | PulseEnvelope::Flat { start, .. }
            | PulseEnvelope::ChirpRamp { start, .. } => start,
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            PulseEnvelope::GateCosSin { duration, .. }
            | PulseEnvelope::HalfGaussian { duration, .. }
            | PulseEnvelope::Flat { duration, .. }
            | PulseEnvelope::ChirpRamp { duration, .. } => duration,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            PulseEnvelope::GateCosSin { amplitude, .. }
            | PulseEnvelope::HalfGaussian { amplitude, .. }
            | PulseEnvelope::Flat { amplitude, .. }
            | PulseEnvelope::ChirpRamp { amplitude, .. } => amplitude,
        }
    }

    pub fn end(&self) -> f64 {
        self.start() + self.duration()
    }

    pub fn with_start(self, new_start: f64) -> Self {
        match self {
            PulseEnvelope::GateCosSin {
                amplitude, duration, ..
            } => PulseEnvelope::GateCosSin {
                amplitude,
                duration,
                start: new_start,
            },
            PulseEnvelope::HalfGaussian {
                amplitude,
                duration,
                direction,
                ..
            } => PulseEnvelope::HalfGaussian {
                amplitude,
                duration,
                start: new_start,
                direction,
            },
            PulseEnvelope::Flat {
                amplitude, duration, ..
            } => PulseEnvelope::Flat {
                amplitude,
                duration,
                start: new_start,
            },
            PulseEnvelope::ChirpRamp {
                amplitude,
                duration,
                f_start_hz,
                f_stop_hz,
                ..
            } => PulseEnvelope::ChirpRamp {
                amplitude,
                duration,
                start: new_start,
                f_start_hz,
                f_stop_hz,
            },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PulseEnvelope::GateCosSin { .. } => "gate_cos_sin",
            PulseEnvelope::HalfGaussian {
                direction: RampDirection::On,
                ..
            } => "half_gaussian_on",
            PulseEnvelope::HalfGaussian {
                direction: RampDirection::Off,
                ..
            } => "half_gaussian_off",
            PulseEnvelope::Flat { .. } => "flat",
            PulseEnvelope::ChirpRamp { .. } => "chirp_ramp",
        }
    }

    /// Envelope value at absolute time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.start();
        let d = self.duration();
        match *self {
            PulseEnvelope::GateCosSin {
                amplitude,
                duration,
                start,
            } => gate_envelope(amplitude, duration, start + 0.5 * duration, t),
            PulseEnvelope::Flat { amplitude, .. } => {
                if (0.0..=d).contains(&s) {
                    amplitude
                } else {
                    0.0
                }
            }
            PulseEnvelope::HalfGaussian {
                amplitude,
                duration,
                direction,
                ..
            } => {
                let s = s.clamp(0.0, duration);
                let u = match direction {
                    RampDirection::On => s,
                    RampDirection::Off => duration - s,
                };
                amplitude * half_gaussian_unit(u / duration)
            }
            PulseEnvelope::ChirpRamp {
                duration,
                f_start_hz,
                f_stop_hz,
                ..
            } => {
                let u = (s / duration).clamp(0.0, 1.0);
                TWO_PI * (f_start_hz + (f_stop_hz - f_start_hz) * 0.5 * (1.0 - (PI * u).cos()))
            }
        }
    }

    /// Midpoint samples `(t, value)` at `sample_rate` over the support.
    pub fn sample(&self, sample_rate: f64) -> Vec<(f64, f64)> {
        let n = (self.duration() * sample_rate).round().max(1.0) as usize;
        let dt = self.duration() / n as f64;
        (0..n)
            .map(|k| {
                let t = self.start() + (k as f64 + 0.5) * dt;
                (t, self.eval(t))
            })
            .collect()
    }
}

fn check_duration(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "envelope duration must be positive, got {d}"
        )))
    }
}

/// Rising half-Gaussian on u ∈ [0, 1]: exactly 0 at u = 0 and 1 at u = 1.
fn half_gaussian_unit(u: f64) -> f64 {
    let k = RAMP_SIGMAS;
    let g0 = (-0.5 * k * k).exp();
    let x = (u - 1.0) * k;
    ((-0.5 * x * x).exp() - g0) / (1.0 - g0)
}

/// Half-Gaussian CDD ramp starting at `t = 0`.
pub fn half_gaussian_ramp(a_target: f64, ramp_time: f64, direction: RampDirection) -> Result<PulseEnvelope> {
    check_duration(ramp_time)?;
    Ok(PulseEnvelope::HalfGaussian {
        amplitude: a_target,
        duration: ramp_time,
        start: 0.0,
        direction,
    })
}

/// Cosine-ramp chirp from `f_start` to `f_stop` (detuning, Hz) at fixed A_CDD.
pub fn chirp_profile(a_cdd: f64, f_start: f64, f_stop: f64, chirp_time: f64) -> Result<PulseEnvelope> {
    check_duration(chirp_time)?;
    Ok(PulseEnvelope::ChirpRamp {
        amplitude: a_cdd,
        duration: chirp_time,
        start: 0.0,
        f_start_hz: f_start,
        f_stop_hz: f_stop,
    })
}

#[derive(Clone, Debug)]
pub struct EnvelopeSpectrum {
    /// Non-negative frequencies, Hz.
    pub frequencies: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub node_frequencies: Vec<f64>,
}

impl EnvelopeSpectrum {
    pub fn peak(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }

    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(f64::NAN)
    }

    /// Peak-normalized magnitude at `f` (Hz), linearly interpolated.
    pub fn normalized_at(&self, f: f64) -> Result<f64> {
        let last = *self.frequencies.last().unwrap_or(&0.0);
        if !(0.0..=last).contains(&f) {
            return Err(Error::Range(format!(
                "frequency {f:.4e} Hz outside spectrum [0, {last:.4e}] Hz"
            )));
        }
        let df = self.resolution();
        let x = f / df;
        let i = (x.floor() as usize).min(self.frequencies.len() - 2);
        let w = x - i as f64;
        let m = (1.0 - w) * self.magnitude[i] + w * self.magnitude[i + 1];
        Ok(m / self.peak())
    }
}

/// Magnitude spectrum of uniformly spaced envelope samples.
/// Nodes are local minima below 1% of the peak magnitude.
pub fn envelope_spectrum(samples: &[f64], dt: f64, zero_pad_factor: usize) -> Result<EnvelopeSpectrum> {
    if samples.len() < 64 {
        return Err(Error::Resolution(format!(
            "need at least 64 samples, got {}",
            samples.len()
        )));
    }
    if zero_pad_factor < 1 {
        return Err(Error::Resolution("zero_pad_factor must be >= 1".into()));
    }
    let n = samples.len() * zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let half = n / 2 + 1;
    let df = 1.0 / (n as f64 * dt);
    let frequencies: Vec<f64> = (0..half).map(|k| k as f64 * df).collect();
    let magnitude: Vec<f64> = buf[..half].iter().map(|z| z.norm() * dt).collect();
    let peak = magnitude.iter().copied().fold(0.0, f64::max);
    let mut nodes = Vec::new();
    for k in 0..half {
        let left = if k == 0 { f64::INFINITY } else { magnitude[k - 1] };
        let right = if k + 1 == half { f64::INFINITY } else { magnitude[k + 1] };
        let m = magnitude[k];
        if m <= left && m < right && m < 0.01 * peak {
            nodes.push(frequencies[k]);
        }
    }
    Ok(EnvelopeSpectrum {
        frequencies,
        magnitude,
        node_frequencies: nodes,
    })
}

/// Sum of the peak-normalized spectrum at each transition frequency (Hz);
/// lower values predict less leakage.
pub fn leakage_overlap_score(spectrum: &EnvelopeSpectrum, transition_freqs: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &f in transition_freqs {
        if !(f > 0.0) {
            return Err(Error::Range(format!("transition frequency must be positive, got {f}")));
        }
        total += spectrum.normalized_at(f)?;
    }
    Ok(total)
}

/// Two-column export: `time_s amplitude_rad_per_s`.
pub fn write_two_column<W: Write>(mut w: W, samples: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "# time_s amplitude_rad_per_s")?;
    for (t, a) in samples {
        writeln!(w, "{t:e} {a:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::linspace;

    #[test]
    fn envelope_zero_at_center_and_edges() {
        let (ag, tg, t0) = (1.0, 40e-9, 100e-9);
        assert_eq!(gate_envelope(ag, tg, t0, t0), 0.0);
        assert!(gate_envelope(ag, tg, t0, t0 + tg / 2.0).abs() < 1e-15);
        assert!(gate_envelope(ag, tg, t0, t0 - tg / 2.0).abs() < 1e-15);
        assert_eq!(gate_envelope(ag, tg, t0, t0 + tg), 0.0);
    }

    #[test]
    fn envelope_peak_value() {
        // oracle: max of (1+cos x) sin x is 3√3/4 at x = π/3
        let peak = 3.0 * 3f64.sqrt() / 4.0 / GATE_NORMALIZATION;
        let (ag, tg) = (2.0, 40e-9);
        let dense = linspace(-tg / 2.0, tg / 2.0, 400_001);
        let m = dense
            .iter()
            .map(|&t| gate_envelope(ag, tg, 0.0, t).abs())
            .fold(0.0, f64::max);
        assert!((m / ag - peak).abs() < 1e-9);
        assert!((peak - 0.99926).abs() < 1e-5);
    }

    #[test]
    fn envelope_integrates_to_zero() {
        let env = PulseEnvelope::gate(3.0, 40e-9, 5e-9).unwrap();
        let s: f64 = env.sample(10e9).iter().map(|p| p.1).sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn ramp_endpoints() {
        let a = TWO_PI * 23e6;
        let on = half_gaussian_ramp(a, 2e-6, RampDirection::On).unwrap();
        assert!((on.eval(2e-6) / a - 1.0).abs() < 1e-4);
        assert!(on.eval(0.0).abs() <= 1e-4 * a);
        let off = half_gaussian_ramp(a, 2e-6, RampDirection::Off).unwrap();
        assert!((off.eval(0.0) / a - 1.0).abs() < 1e-4);
        assert!(off.eval(2e-6).abs() <= 1e-4 * a);
    }

    #[test]
    fn ramp_is_monotone() {
        let on = half_gaussian_ramp(1.0, 1e-6, RampDirection::On).unwrap();
        let s = on.sample(1e9);
        assert!(s.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn chirp_endpoints() {
        let c = chirp_profile(1.0, -60e6, 0.0, 1e-6).unwrap();
        assert!((c.eval(0.0) - TWO_PI * -60e6).abs() < 1e-6);
        assert!(c.eval(1e-6).abs() < 1e-6);
        let flat = chirp_profile(1.0, 5e6, 5e6, 1e-6).unwrap();
        for t in linspace(0.0, 1e-6, 11) {
            assert!((flat.eval(t) - TWO_PI * 5e6).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_envelope_sinc_node() {
        // rectangle of length T, observed in a 4T window: first zero at 1/T
        let dur = 100e-9;
        let dt = 1e-9;
        let samples: Vec<f64> = (0..400).map(|k| if k < 100 { 1.0 } else { 0.0 }).collect();
        let spec = envelope_spectrum(&samples, dt, 4).unwrap();
        let first = spec.node_frequencies.iter().copied().find(|&f| f > 0.0).unwrap();
        assert!((first - 1.0 / dur).abs() <= spec.resolution());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            envelope_spectrum(&[1.0; 10], 1e-9, 2),
            Err(Error::Resolution(_))
        ));
    }

    fn gate_samples(tg: f64, rate: f64) -> Vec<f64> {
        let env = PulseEnvelope::gate(1.0, tg, 0.0).unwrap();
        env.sample(rate).into_iter().map(|p| p.1).collect()
    }

    #[test]
    fn gate_node_near_third_harmonic() {
        let tg = 40e-9;
        let spec = envelope_spectrum(&gate_samples(tg, 10e9), 1e-10, 16).unwrap();
        assert!(
            spec.node_frequencies.iter().any(|f| (f - 75e6).abs() <= 2e6),
            "{:?}",
            &spec.node_frequencies[..6]
        );
    }

    #[test]
    fn zero_padding_keeps_nodes() {
        let tg = 40e-9;
        let s = gate_samples(tg, 10e9);
        let a = envelope_spectrum(&s, 1e-10, 8).unwrap();
        let b = envelope_spectrum(&s, 1e-10, 16).unwrap();
        for f in a.node_frequencies.iter().filter(|&&f| f > 0.0 && f < 300e6) {
            let nearest = b
                .node_frequencies
                .iter()
                .map(|g| (g - f).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= a.resolution(), "{f}");
        }
    }

    #[test]
    fn overlap_score_at_node_and_peak() {
        let s = gate_samples(40e-9, 10e9);
        let spec = envelope_spectrum(&s, 1e-10, 16).unwrap();
        let node = spec.node_frequencies.iter().copied().find(|&f| f > 50e6).unwrap();
        assert!(leakage_overlap_score(&spec, &[node]).unwrap() < 0.01);
        let (ipk, _) = spec
            .magnitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let score = leakage_overlap_score(&spec, &[spec.frequencies[ipk]]).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
        assert!(matches!(leakage_overlap_score(&spec, &[1e12]), Err(Error::Range(_))));
        assert!(matches!(leakage_overlap_score(&spec, &[-1.0]), Err(Error::Range(_))));
    }
}
