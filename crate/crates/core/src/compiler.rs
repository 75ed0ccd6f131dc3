//! Compilation of single-qubit rotations into gapless wait/pulse schedules.
//!
//! Operator products are written rightmost-first; schedules list segments
//! in execution order. Free evolution for `t` is `R_z(S·t)` with `S` the
//! calibrated frame rate, so `R_z(φ)` costs `(φ mod 2π)/S` of waiting.
//!
//! The pulse implements a π/2 rotation with an unknown azimuthal phase. The
//! calibrated closing wait `t_close` turns pulse + wait into a pure π/2
//! rotation, whose axis defines `y`. The other ±X/2, ±Y/2 gates are its
//! conjugates by quarter-period waits, with the closing wait shortened by
//! the prefix. A closing wait below `3T/4` (`T = 2π/S`) is padded by one
//! period first, so every ±X/2, ±Y/2 lasts `t_g + closing_wait`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::calibration::CalibrationResult;
use crate::error::{Error, Result};
use crate::pulse::PulseEnvelope;

/// Relative tolerance for the contiguity check.
const CONTIGUITY_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Wait,
    XzPulse,
    YzDetuningPulse,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Wait => "wait",
            SegmentKind::XzPulse => "xz_pulse",
            SegmentKind::YzDetuningPulse => "yz_detuning_pulse",
        }
    }
}

impl std::str::FromStr for SegmentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wait" => Ok(SegmentKind::Wait),
            "xz_pulse" => Ok(SegmentKind::XzPulse),
            "yz_detuning_pulse" => Ok(SegmentKind::YzDetuningPulse),
            other => Err(Error::Parse(format!("unknown segment kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub duration: f64,
    /// Envelope for pulse kinds; `None` for waits.
    pub payload: Option<PulseEnvelope>,
}

impl Segment {
    pub fn wait(duration: f64) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::Validation(format!("wait duration must be >= 0, got {duration}")));
        }
        Ok(Self {
            kind: SegmentKind::Wait,
            start: 0.0,
            duration,
            payload: None,
        })
    }

    pub fn xz_pulse(env: PulseEnvelope) -> Self {
        Self {
            kind: SegmentKind::XzPulse,
            start: env.start(),
            duration: env.duration(),
            payload: Some(env),
        }
    }

    /// Detuning modulation `Δ(t) = Δ + env(t)`.
    pub fn yz_detuning_pulse(env: PulseEnvelope) -> Self {
        Self {
            kind: SegmentKind::YzDetuningPulse,
            start: env.start(),
            duration: env.duration(),
            payload: Some(env),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn placed_at(mut self, start: f64) -> Self {
        self.start = start;
        if let Some(env) = self.payload.take() {
            self.payload = Some(env.with_start(start));
        }
        self
    }

    fn amplitude(&self) -> f64 {
        self.payload.map_or(0.0, |e| e.amplitude())
    }
}

/// Ordered, gapless list of segments.
#[derive(Clone, Debug, Default)]
pub struct PulseSchedule {
    segments: Vec<Segment>,
    calib: Option<Arc<CalibrationResult>>,
}

impl PulseSchedule {
    pub fn new(calib: Option<Arc<CalibrationResult>>) -> Self {
        Self {
            segments: Vec::new(),
            calib,
        }
    }

    pub fn calibration(&self) -> Option<&CalibrationResult> {
        self.calib.as_deref()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::end)
    }

    /// Appends a segment at the current end time. Zero-length waits are
    /// dropped.
    pub fn push(&mut self, seg: Segment) {
        if seg.kind == SegmentKind::Wait && seg.duration == 0.0 {
            return;
        }
        let start = self.total_duration();
        // merge adjacent waits so schedules stay canonical
        if seg.kind == SegmentKind::Wait {
            if let Some(last) = self.segments.last_mut() {
                if last.kind == SegmentKind::Wait {
                    last.duration += seg.duration;
                    return;
                }
            }
        }
        self.segments.push(seg.placed_at(start));
    }

    pub fn push_wait(&mut self, duration: f64) -> Result<()> {
        self.push(Segment::wait(duration)?);
        Ok(())
    }

    /// Appends `other` after this schedule (executes later).
    pub fn extend(&mut self, other: &PulseSchedule) {
        for seg in &other.segments {
            self.push(seg.clone());
        }
    }

    /// True when each segment starts where the previous one ends.
    pub fn is_contiguous(&self) -> bool {
        let mut t = 0.0_f64;
        for s in &self.segments {
            if (s.start - t).abs() > CONTIGUITY_RTOL * t.abs().max(1e-9) {
                return false;
            }
            t = s.end();
        }
        true
    }

    /// Snaps the schedule to a sample grid of `rate` samples/s. Pulses keep
    /// `round(duration·rate)` samples; waits end on the grid point nearest
    /// their unquantized end, so timing residuals fold into the next wait.
    pub fn quantized(&self, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Resolution(format!("sample rate must be positive, got {rate}")));
        }
        let mut out = PulseSchedule::new(self.calib.clone());
        let mut cursor: i64 = 0;
        for seg in &self.segments {
            let ideal_end = seg.end();
            let end = match seg.kind {
                SegmentKind::Wait => ((ideal_end * rate).round() as i64).max(cursor),
                _ => cursor + ((seg.duration * rate).round() as i64).max(1),
            };
            let duration = (end - cursor) as f64 / rate;
            let start = cursor as f64 / rate;
            let q = match seg.kind {
                SegmentKind::Wait => Segment::wait(duration)?,
                _ => {
                    let env = seg.payload.expect("pulse segments carry envelopes");
                    let env = rescale_duration(env, duration)?;
                    Segment {
                        kind: seg.kind,
                        start,
                        duration,
                        payload: Some(env),
                    }
                }
            };
            if duration > 0.0 {
                out.segments.push(q.placed_at(start));
            }
            cursor = end;
        }
        Ok(out)
    }

    /// Line-oriented export: `kind start_s duration_s amplitude_rad_s`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kind start_s duration_s amplitude_rad_s")?;
        for s in &self.segments {
            writeln!(
                w,
                "{} {:e} {:e} {:e}",
                s.kind.as_str(),
                s.start,
                s.duration,
                s.amplitude()
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn rescale_duration(env: PulseEnvelope, duration: f64) -> Result<PulseEnvelope> {
    Ok(match env {
        PulseEnvelope::GateCosSin { amplitude, start, .. } => PulseEnvelope::gate(amplitude, duration, start)?,
        PulseEnvelope::Flat { amplitude, start, .. } => PulseEnvelope::flat(amplitude, duration, start)?,
        PulseEnvelope::HalfGaussian {
            amplitude,
            start,
            direction,
            ..
        } => PulseEnvelope::HalfGaussian {
            amplitude,
            duration,
            start,
            direction,
        },
        PulseEnvelope::ChirpRamp {
            amplitude,
            start,
            f_start_hz,
            f_stop_hz,
            ..
        } => PulseEnvelope::ChirpRamp {
            amplitude,
            duration,
            start,
            f_start_hz,
            f_stop_hz,
        },
    })
}

/// Named single-qubit gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateSpec {
    I,
    X90,
    Xm90,
    Y90,
    Ym90,
    Z,
    Z90,
    Zm90,
    /// `R_z(φ)` with φ in `[0, 2π)`.
    Rz(f64),
    /// `R_xz(π/2,γ)·R_z(γ′)·R_xz(π/2,γ)·R_z(γ″)`.
    U(f64, f64),
}

pub fn reduce_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl GateSpec {
    pub fn rz(phi: f64) -> Self {
        GateSpec::Rz(reduce_phase(phi))
    }

    pub fn u(gamma_prime: f64, gamma_double_prime: f64) -> Self {
        GateSpec::U(reduce_phase(gamma_prime), reduce_phase(gamma_double_prime))
    }

    pub fn name(&self) -> String {
        match self {
            GateSpec::I => "I".into(),
            GateSpec::X90 => "X/2".into(),
            GateSpec::Xm90 => "-X/2".into(),
            GateSpec::Y90 => "Y/2".into(),
            GateSpec::Ym90 => "-Y/2".into(),
            GateSpec::Z => "Z".into(),
            GateSpec::Z90 => "Z/2".into(),
            GateSpec::Zm90 => "-Z/2".into(),
            GateSpec::Rz(p) => format!("Rz({p})"),
            GateSpec::U(a, b) => format!("U({a},{b})"),
        }
    }

    /// The fixed primitive set used by the Clifford table.
    pub const PRIMITIVES: [GateSpec; 8] = [
        GateSpec::I,
        GateSpec::X90,
        GateSpec::Xm90,
        GateSpec::Y90,
        GateSpec::Ym90,
        GateSpec::Z,
        GateSpec::Z90,
        GateSpec::Zm90,
    ];
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for GateSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace('−', "-");
        let g = match t.as_str() {
            "I" => GateSpec::I,
            "X/2" => GateSpec::X90,
            "-X/2" => GateSpec::Xm90,
            "Y/2" => GateSpec::Y90,
            "-Y/2" => GateSpec::Ym90,
            "Z" => GateSpec::Z,
            "Z/2" => GateSpec::Z90,
            "-Z/2" => GateSpec::Zm90,
            _ => {
                let args = |p: &str| -> Option<Vec<f64>> {
                    t.strip_prefix(p)?
                        .strip_suffix(')')?
                        .split(',')
                        .map(|x| x.trim().parse().ok())
                        .collect()
                };
                if let Some(v) = args("Rz(").filter(|v| v.len() == 1) {
                    GateSpec::rz(v[0])
                } else if let Some(v) = args("U(").filter(|v| v.len() == 2) {
                    GateSpec::u(v[0], v[1])
                } else {
                    return Err(Error::UnsupportedGate(s.to_string()));
                }
            }
        };
        Ok(g)
    }
}

/// Wait realizing `R_z(γ)` at frame rate `rate`; negative phases wrap to
/// `(2π − |γ|)/rate`.
pub fn rz_wait(gamma: f64, rate: f64) -> Result<Segment> {
    if !(rate > 0.0) {
        return Err(Error::Range(format!("frame rate must be positive, got {rate}")));
    }
    Segment::wait(reduce_phase(gamma) / rate)
}

fn require_calibrated(calib: &CalibrationResult) -> Result<()> {
    if calib.is_calibrated() {
        Ok(())
    } else {
        Err(Error::MissingCalibration("gate amplitude and duration"))
    }
}

/// The bare `R_xz(π/2, γ)` pulse.
pub fn rxz_pulse(calib: &CalibrationResult) -> Result<Segment> {
    require_calibrated(calib)?;
    Ok(Segment::xz_pulse(PulseEnvelope::gate(calib.a_g, calib.t_g, 0.0)?))
}

/// `R_xz(π/2,γ)·R_z(γ′)·R_xz(π/2,γ)·R_z(γ″)`; execution order is
/// wait(γ″), pulse, wait(γ′), pulse.
pub fn compose_universal(
    gamma_prime: f64,
    gamma_double_prime: f64,
    calib: &CalibrationResult,
) -> Result<PulseSchedule> {
    require_calibrated(calib)?;
    let rate = calib.frame_rate;
    let mut s = PulseSchedule::new(Some(Arc::new(calib.clone())));
    s.push(rz_wait(gamma_double_prime, rate)?);
    s.push(rxz_pulse(calib)?);
    s.push(rz_wait(gamma_prime, rate)?);
    s.push(rxz_pulse(calib)?);
    Ok(s)
}

/// Compiles a named gate.
pub fn standard_gate(spec: GateSpec, calib: &CalibrationResult) -> Result<PulseSchedule> {
    compile_gate(spec, calib, &Arc::new(calib.clone()))
}

/// Like [`standard_gate`] but shares one calibration handle across many
/// compiled gates.
pub fn compile_gate(
    spec: GateSpec,
    calib: &CalibrationResult,
    handle: &Arc<CalibrationResult>,
) -> Result<PulseSchedule> {
    let mut s = PulseSchedule::new(Some(handle.clone()));
    let rate = calib.frame_rate;
    let equatorial = |pre: f64, s: &mut PulseSchedule| -> Result<()> {
        require_calibrated(calib)?;
        let pre_t = reduce_phase(pre) / rate;
        s.push(Segment::wait(pre_t)?);
        s.push(rxz_pulse(calib)?);
        s.push(Segment::wait((calib.closing_wait() - pre_t).max(0.0))?);
        Ok(())
    };
    match spec {
        GateSpec::I => {}
        GateSpec::Y90 => equatorial(0.0, &mut s)?,
        GateSpec::X90 => equatorial(FRAC_PI_2, &mut s)?,
        GateSpec::Ym90 => equatorial(PI, &mut s)?,
        GateSpec::Xm90 => equatorial(3.0 * FRAC_PI_2, &mut s)?,
        GateSpec::Z => s.push(rz_wait(PI, rate)?),
        GateSpec::Z90 => s.push(rz_wait(FRAC_PI_2, rate)?),
        GateSpec::Zm90 => s.push(rz_wait(-FRAC_PI_2, rate)?),
        GateSpec::Rz(phi) => s.push(rz_wait(phi, rate)?),
        GateSpec::U(a, b) => return compose_universal(a, b, calib),
    }
    Ok(s)
}

/// Rendered control waveforms on a uniform grid (midpoint samples).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Waveforms {
    pub sample_rate: f64,
    /// Gate amplitude A(t), rad/s.
    pub a: Vec<f64>,
    /// Detuning modulation Δ(t), rad/s.
    pub delta: Vec<f64>,
}

impl Waveforms {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| (k as f64 + 0.5) / self.sample_rate).collect()
    }
}

fn bandwidth(env: &PulseEnvelope) -> f64 {
    match env {
        // (1 + cos x) sin x = sin x + sin(2x)/2
        PulseEnvelope::GateCosSin { duration, .. } => 2.0 / duration,
        other => 1.0 / other.duration(),
    }
}

/// Samples `sched` at `sample_rate`: `round(total·rate)` midpoint samples,
/// pulses through their envelopes, waits as zeros.
pub fn schedule_to_waveforms(sched: &PulseSchedule, sample_rate: f64) -> Result<Waveforms> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Resolution(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    for s in sched.segments() {
        if let Some(env) = &s.payload {
            let need = 10.0 * bandwidth(env);
            if sample_rate < need {
                return Err(Error::Resolution(format!(
                    "{} needs at least {need:.3e} samples/s, got {sample_rate:.3e}",
                    env.kind_name()
                )));
            }
        }
    }
    let n = (sched.total_duration() * sample_rate).round() as usize;
    let mut a = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let segs = sched.segments();
    let mut j = 0;
    for k in 0..n {
        let t = (k as f64 + 0.5) / sample_rate;
        while j + 1 < segs.len() && t >= segs[j].end() {
            j += 1;
        }
        let s = &segs[j];
        if let Some(env) = &s.payload {
            match s.kind {
                SegmentKind::XzPulse => a[k] = env.eval(t),
                SegmentKind::YzDetuningPulse => delta[k] = env.eval(t),
                SegmentKind::Wait => {}
            }
        }
    }
    Ok(Waveforms { sample_rate, a, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::TWO_PI;

    fn calib() -> CalibrationResult {
        CalibrationResult::new(TWO_PI * 23e6, TWO_PI * 29.12e6, 40e-9, 36e-9, 0.0, TWO_PI * 23e6).unwrap()
    }

    #[test]
    fn rz_wait_arithmetic() {
        let a = TWO_PI * 23e6;
        assert_eq!(rz_wait(0.0, a).unwrap().duration, 0.0);
        let d = rz_wait(FRAC_PI_2, a).unwrap().duration;
        assert!((d - 10.869_565e-9).abs() < 1e-14);
        let g = 0.7;
        let neg = rz_wait(-g, a).unwrap().duration;
        assert!((neg - (TAU / a - g / a)).abs() < 1e-18);
    }

    #[test]
    fn uncalibrated_pulse_is_rejected() {
        let c = CalibrationResult::uncalibrated(TWO_PI * 23e6);
        assert!(matches!(rxz_pulse(&c), Err(Error::MissingCalibration(_))));
        assert!(matches!(
            standard_gate(GateSpec::X90, &c),
            Err(Error::MissingCalibration(_))
        ));
        // Z gates only need the frame rate
        assert!(standard_gate(GateSpec::Z90, &c).is_ok());
    }

    #[test]
    fn equatorial_gates_share_duration() {
        let c = calib();
        let d: Vec<f64> = [GateSpec::X90, GateSpec::Xm90, GateSpec::Y90, GateSpec::Ym90]
            .iter()
            .map(|&g| standard_gate(g, &c).unwrap().total_duration())
            .collect();
        for x in &d {
            assert!((x - 76e-9).abs() < 1e-15, "{d:?}");
        }
        assert_eq!(standard_gate(GateSpec::I, &c).unwrap().total_duration(), 0.0);
        let z2 = standard_gate(GateSpec::Z90, &c).unwrap().total_duration();
        assert!((z2 - FRAC_PI_2 / c.frame_rate).abs() < 1e-18);
    }

    #[test]
    fn schedules_are_contiguous() {
        let c = calib();
        let mut s = PulseSchedule::new(None);
        for g in [GateSpec::X90, GateSpec::Z, GateSpec::Ym90, GateSpec::u(1.0, 2.0)] {
            s.extend(&standard_gate(g, &c).unwrap());
        }
        assert!(s.is_contiguous());
        let sum: f64 = s.segments().iter().map(|x| x.duration).sum();
        assert!((sum - s.total_duration()).abs() < 1e-18);
    }

    #[test]
    fn gate_names_parse() {
        for g in GateSpec::PRIMITIVES {
            assert_eq!(g.name().parse::<GateSpec>().unwrap(), g);
        }
        assert_eq!("−X/2".parse::<GateSpec>().unwrap(), GateSpec::Xm90);
        assert_eq!("Rz(-1.5)".parse::<GateSpec>().unwrap(), GateSpec::rz(-1.5));
        assert!(matches!("T".parse::<GateSpec>(), Err(Error::UnsupportedGate(_))));
        match GateSpec::rz(-1.0) {
            GateSpec::Rz(p) => assert!((0.0..TAU).contains(&p)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn waveform_sample_counts() {
        let c = calib();
        assert!(schedule_to_waveforms(&PulseSchedule::new(None), 1e9)
            .unwrap()
            .is_empty());
        let x = standard_gate(GateSpec::X90, &c).unwrap();
        assert_eq!(schedule_to_waveforms(&x, 1e9).unwrap().len(), 76);
        let y = standard_gate(GateSpec::Y90, &c).unwrap();
        let w = schedule_to_waveforms(&y, 1e9).unwrap();
        assert_eq!(w.len(), 76);
        assert!(w.a[..40].iter().all(|v| v.abs() > 0.0));
        assert!(w.a[40..].iter().all(|v| *v == 0.0));
        // odd envelope: first half positive... mirrored by the second half
        assert!((w.a[5] + w.a[34]).abs() < 1e-6 * c.a_g);
        assert!(matches!(schedule_to_waveforms(&y, 1e8), Err(Error::Resolution(_))));
    }

    #[test]
    fn quantization_keeps_grid_and_total() {
        let c = calib();
        let mut s = PulseSchedule::new(None);
        for g in [GateSpec::X90, GateSpec::Z90, GateSpec::Xm90] {
            s.extend(&standard_gate(g, &c).unwrap());
        }
        let q = s.quantized(1e9).unwrap();
        assert!(q.is_contiguous());
        for seg in q.segments() {
            let k = seg.start * 1e9;
            assert!((k - k.round()).abs() < 1e-6);
        }
        assert!((q.total_duration() - s.total_duration()).abs() <= 0.5e-9 + 1e-15);
    }

    #[test]
    fn text_export_lines() {
        let s = standard_gate(GateSpec::X90, &calib()).unwrap();
        let txt = s.to_text();
        let lines: Vec<&str> = txt.lines().skip(1).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("xz_pulse "));
        assert_eq!(lines[0].split_whitespace().count(), 4);
    }
}
