//! Segment-level simulator shared by the compiler, calibration, noise and
//! benchmarking layers.
//!
//! The computational frame is the rotating frame of the drive. Within the
//! dressed pair the qubit basis is ordered `(|+⟩, |−⟩)`, so free evolution
//! for a time `t` is `R_z(S·t)` with `S` the pair splitting, and operators
//! compose rightmost-first.

use crate::compiler::{PulseSchedule, Segment, SegmentKind};
use crate::device::{
    dressed_eigenbasis, ideal_two_level_hamiltonian, lab_hamiltonian_at, qubit_frequency, rwa_hamiltonian,
    DressedEigenbasis, DressedLabel, DriveConfig, TransmonParams,
};
use crate::error::{Error, Result};
use crate::linalg::{c, eigh_unchecked, expm_hermitian, CMatrix, CVector, Eigen, Operator, StateVector, C64, I};
use crate::pulse::PulseEnvelope;

/// Longest step used inside gate pulses.
pub const DEFAULT_PULSE_DT: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// The ideal dressed two-level control Hamiltonian.
    TwoLevel,
    /// Rotating-frame RWA truncation with `n_levels` transmon levels.
    Rwa { n_levels: usize },
}

impl Model {
    pub fn dim(self) -> usize {
        match self {
            Model::TwoLevel => 2,
            Model::Rwa { n_levels } => n_levels,
        }
    }

    pub fn name(self) -> String {
        match self {
            Model::TwoLevel => "two_level".into(),
            Model::Rwa { n_levels } => format!("rwa{n_levels}"),
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "two_level" {
            return Ok(Model::TwoLevel);
        }
        s.strip_prefix("rwa")
            .and_then(|n| n.parse().ok())
            .filter(|n| (2..=8).contains(n))
            .map(|n_levels| Model::Rwa { n_levels })
            .ok_or_else(|| Error::Parse(format!("unknown model '{s}'")))
    }
}

/// Instantaneous control values, all rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Controls {
    pub a_cdd: f64,
    pub a_gate: f64,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    params: TransmonParams,
    model: Model,
    a_cdd: f64,
    detuning: f64,
    pulse_dt: f64,
    reference: DressedEigenbasis,
    free: Eigen,
}

impl Simulator {
    /// Simulator for a drive configuration; the rotating-frame detuning is
    /// resolved from the drive (sweet spot when the carrier is locked).
    pub fn new(params: TransmonParams, drive: &DriveConfig, model: Model) -> Result<Self> {
        drive.validate()?;
        let delta = drive.rotating_detuning(&params, model.dim())?;
        Self::from_parts(params, model, drive.a_cdd, delta)
    }

    /// Simulator with an explicit rotating-frame detuning `delta`.
    pub fn from_parts(params: TransmonParams, model: Model, a_cdd: f64, delta: f64) -> Result<Self> {
        if let Model::Rwa { n_levels } = model {
            if !(2..=8).contains(&n_levels) {
                return Err(Error::InvalidDimension(format!(
                    "model needs 2..=8 levels, got {n_levels}"
                )));
            }
        }
        if !(a_cdd > 0.0 && a_cdd.is_finite()) {
            return Err(Error::Validation(format!("A_CDD must be positive, got {a_cdd}")));
        }
        if !delta.is_finite() {
            return Err(Error::Validation("detuning must be finite".into()));
        }
        let h0 = build_hamiltonian(&params, model, a_cdd, 0.0, delta);
        let reference = dressed_eigenbasis(&h0);
        let free = eigh_unchecked(h0.matrix());
        Ok(Self {
            params,
            model,
            a_cdd,
            detuning: delta,
            pulse_dt: DEFAULT_PULSE_DT,
            reference,
            free,
        })
    }

    pub fn with_pulse_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation(format!("pulse step must be positive, got {dt}")));
        }
        self.pulse_dt = dt;
        Ok(self)
    }

    /// Same prepare/measure basis, but the dynamics see an extra detuning
    /// `delta_shift` and a fractional CDD amplitude error `a_frac`.
    pub fn perturbed(&self, delta_shift: f64, a_frac: f64) -> Self {
        let a_cdd = self.a_cdd * (1.0 + a_frac);
        let detuning = self.detuning + delta_shift;
        let h0 = build_hamiltonian(&self.params, self.model, a_cdd, 0.0, detuning);
        Self {
            params: self.params,
            model: self.model,
            a_cdd,
            detuning,
            pulse_dt: self.pulse_dt,
            reference: self.reference.clone(),
            free: eigh_unchecked(h0.matrix()),
        }
    }

    pub fn params(&self) -> &TransmonParams {
        &self.params
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn a_cdd(&self) -> f64 {
        self.a_cdd
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn pulse_dt(&self) -> f64 {
        self.pulse_dt
    }

    pub fn hamiltonian(&self, a_gate: f64) -> Operator {
        build_hamiltonian(&self.params, self.model, self.a_cdd, a_gate, self.detuning)
    }

    pub fn hamiltonian_at(&self, ctl: Controls) -> Operator {
        build_hamiltonian(&self.params, self.model, ctl.a_cdd, ctl.a_gate, ctl.delta)
    }

    /// Prepare/measure basis: columns |−⟩, |+⟩, then the leakage states.
    pub fn reference_basis(&self) -> &DressedEigenbasis {
        &self.reference
    }

    pub fn dressed_state(&self, label: DressedLabel) -> StateVector {
        self.reference.state(label)
    }

    /// Nominal pair splitting (the frame rate of free evolution).
    pub fn splitting(&self) -> f64 {
        self.reference.splitting()
    }

    /// Pair splitting of the possibly perturbed dynamics.
    pub fn actual_splitting(&self) -> f64 {
        dressed_eigenbasis(&self.hamiltonian(0.0)).splitting()
    }

    /// Exact free evolution for `t` seconds.
    pub fn wait_unitary(&self, t: f64) -> Operator {
        let v = self.free.vectors.matrix();
        let n = self.dim();
        let phases = CVector::from_iterator(n, self.free.values.iter().map(|&e| (-I * e * t).exp()));
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator::from_matrix_unchecked(scaled * v.adjoint())
    }

    fn steps_for(&self, duration: f64) -> usize {
        ((duration / self.pulse_dt).ceil() as usize).max(8)
    }

    /// Propagator of a gate-amplitude envelope `A(t)` over its support.
    pub fn pulse_unitary(&self, env: &PulseEnvelope) -> Operator {
        let (t0, d) = (env.start(), env.duration());
        let steps = self.steps_for(d);
        let dt = d / steps as f64;
        let mut u = CMatrix::identity(self.dim(), self.dim());
        for k in 0..steps {
            let t = t0 + (k as f64 + 0.5) * dt;
            let h = self.hamiltonian(env.eval(t));
            u = expm_hermitian(h.matrix(), dt) * u;
        }
        Operator::from_matrix_unchecked(u)
    }

    /// Propagator of a detuning modulation `Δ(t) = Δ + env(t)`.
    pub fn detuning_pulse_unitary(&self, env: &PulseEnvelope) -> Operator {
        let (t0, d) = (env.start(), env.duration());
        self.control_unitary(
            |t| Controls {
                a_cdd: self.a_cdd,
                a_gate: 0.0,
                delta: self.detuning + env.eval(t),
            },
            t0,
            t0 + d,
            self.steps_for(d),
        )
    }

    /// Midpoint-rule propagator for arbitrary control functions.
    pub fn control_unitary<F>(&self, controls: F, t0: f64, t1: f64, steps: usize) -> Operator
    where
        F: Fn(f64) -> Controls,
    {
        let steps = steps.max(1);
        let dt = (t1 - t0) / steps as f64;
        let mut u = CMatrix::identity(self.dim(), self.dim());
        for k in 0..steps {
            let t = t0 + (k as f64 + 0.5) * dt;
            u = expm_hermitian(self.hamiltonian_at(controls(t)).matrix(), dt) * u;
        }
        Operator::from_matrix_unchecked(u)
    }

    pub fn segment_unitary(&self, seg: &Segment) -> Result<Operator> {
        match seg.kind {
            SegmentKind::Wait => Ok(self.wait_unitary(seg.duration)),
            SegmentKind::XzPulse => seg
                .payload
                .as_ref()
                .map(|env| self.pulse_unitary(env))
                .ok_or_else(|| Error::Validation("pulse segment without envelope".into())),
            SegmentKind::YzDetuningPulse => seg
                .payload
                .as_ref()
                .map(|env| self.detuning_pulse_unitary(env))
                .ok_or_else(|| Error::Validation("pulse segment without envelope".into())),
        }
    }

    /// Full propagator of a schedule (first segment acts first).
    pub fn schedule_unitary(&self, sched: &PulseSchedule) -> Result<Operator> {
        let mut u = Operator::identity(self.dim());
        for seg in sched.segments() {
            u = &self.segment_unitary(seg)? * &u;
        }
        Ok(u)
    }

    pub fn evolve(&self, sched: &PulseSchedule, psi: &StateVector) -> Result<StateVector> {
        self.schedule_unitary(sched)?.apply(psi)
    }

    /// Columns |+⟩, |−⟩ of the reference basis: the qubit embedding.
    pub fn qubit_embedding(&self) -> CMatrix {
        let b = self.reference.basis.matrix();
        let mut q = CMatrix::zeros(self.dim(), 2);
        q.set_column(0, &b.column(1));
        q.set_column(1, &b.column(0));
        q
    }

    /// 2×2 block of `u` on the dressed pair in qubit ordering (|+⟩, |−⟩).
    /// Leakage shows up as a non-unitary block.
    pub fn qubit_block(&self, u: &Operator) -> Operator {
        let q = self.qubit_embedding();
        Operator::from_matrix_unchecked(q.adjoint() * u.matrix() * q)
    }

    /// Populations in the reference basis: `[P−, P+, leakage states...]`.
    pub fn dressed_populations(&self, psi: &StateVector) -> Vec<f64> {
        let amps = self.reference.basis.matrix().adjoint() * psi.amplitudes();
        amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Population outside the dressed pair.
    pub fn leakage(&self, psi: &StateVector) -> f64 {
        self.dressed_populations(psi).iter().skip(2).sum()
    }
}

fn build_hamiltonian(params: &TransmonParams, model: Model, a_cdd: f64, a_gate: f64, delta: f64) -> Operator {
    match model {
        Model::TwoLevel => ideal_two_level_hamiltonian(a_cdd, a_gate, delta),
        Model::Rwa { n_levels } => rwa_hamiltonian(n_levels, a_cdd, a_gate, delta, params),
    }
}

/// Outcome of an adiabatic preparation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreparationOutcome {
    /// Fidelity with the followed instantaneous eigenstate at the end.
    pub final_fidelity: f64,
    /// Minimum of that fidelity along the protocol.
    pub min_fidelity: f64,
    /// Dressed state the initial state connects to.
    pub label: DressedLabel,
}

/// Propagates `psi0` under `controls(t)` on `[0, duration]` and tracks the
/// instantaneous eigenvector continuously connected to the initial one.
/// `checkpoints` evenly spaced fidelity samples are taken.
pub fn follow_adiabatic<F>(
    sim: &Simulator,
    controls: F,
    duration: f64,
    steps: usize,
    checkpoints: usize,
) -> Result<PreparationOutcome>
where
    F: Fn(f64) -> Controls,
{
    if !(duration > 0.0) || steps == 0 || checkpoints == 0 {
        return Err(Error::Validation(
            "adiabatic protocol needs positive duration and steps".into(),
        ));
    }
    let n = sim.dim();
    let eig0 = eigh_unchecked(sim.hamiltonian_at(controls(0.0)).matrix());
    // start in the eigenvector with the most bare-|0⟩ weight
    let start = (0..n)
        .max_by(|&a, &b| {
            eig0.vectors.matrix()[(0, a)]
                .norm()
                .total_cmp(&eig0.vectors.matrix()[(0, b)].norm())
        })
        .expect("nonempty");
    let mut tracked: CVector = eig0.vectors.matrix().column(start).into_owned();
    let mut psi = tracked.clone();
    let dt = duration / steps as f64;
    let every = (steps / checkpoints).max(1);
    let mut min_f = 1.0_f64;
    let mut last_f = 1.0;
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        psi = expm_hermitian(sim.hamiltonian_at(controls(t)).matrix(), dt) * psi;
        if (k + 1) % every == 0 || k + 1 == steps {
            let tk = (k + 1) as f64 * dt;
            let e = eigh_unchecked(sim.hamiltonian_at(controls(tk)).matrix());
            let v = e.vectors.matrix();
            let j = (0..n)
                .max_by(|&a, &b| {
                    v.column(a)
                        .dotc(&tracked)
                        .norm()
                        .total_cmp(&v.column(b).dotc(&tracked).norm())
                })
                .expect("nonempty");
            tracked = v.column(j).into_owned();
            last_f = tracked.dotc(&psi).norm_sqr();
            min_f = min_f.min(last_f);
        }
    }
    let fin = dressed_eigenbasis(&sim.hamiltonian_at(controls(duration)));
    let over = |k: usize| fin.basis.matrix().column(k).dotc(&tracked).norm();
    let label = if over(1) > over(0) {
        DressedLabel::Plus
    } else {
        DressedLabel::Minus
    };
    Ok(PreparationOutcome {
        final_fidelity: last_f,
        min_fidelity: min_f,
        label,
    })
}

/// Adiabatic CDD turn-on: `A_CDD(t)` follows `ramp` at the simulator's
/// detuning, starting from bare |0⟩.
pub fn ramp_preparation(sim: &Simulator, ramp: &PulseEnvelope, steps: usize) -> Result<PreparationOutcome> {
    let delta = sim.detuning();
    let t0 = ramp.start();
    follow_adiabatic(
        sim,
        |t| Controls {
            a_cdd: ramp.eval(t0 + t),
            a_gate: 0.0,
            delta,
        },
        ramp.duration(),
        steps,
        200,
    )
}

/// Chirped preparation: fixed A_CDD while the detuning follows
/// `Δ_sim + chirp(t)`, starting in the eigenstate connected to bare |0⟩.
pub fn chirp_preparation(sim: &Simulator, chirp: &PulseEnvelope, steps: usize) -> Result<PreparationOutcome> {
    let delta = sim.detuning();
    let t0 = chirp.start();
    let a = sim.a_cdd();
    follow_adiabatic(
        sim,
        |t| Controls {
            a_cdd: a,
            a_gate: 0.0,
            delta: delta + chirp.eval(t0 + t),
        },
        chirp.duration(),
        steps,
        200,
    )
}

/// Two-level lab-frame propagation under the full (counter-rotating)
/// drive `A_CDD cos ωt + A(t) sin ωt`, sampled stroboscopically at
/// `times` (rounded to whole carrier periods). Returns `P(|+⟩)` after
/// moving each sample into the frame rotating at the carrier, with
/// `|±⟩ = (|0⟩ ± |1⟩)/√2`. The initial state is `|+⟩`.
pub fn lab_frame_plus_population<F>(
    params: &TransmonParams,
    drive: &DriveConfig,
    a_gate: F,
    times: &[f64],
    steps_per_period: usize,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    let wq = qubit_frequency(params, drive.phi)?;
    let w = drive.carrier(params)?;
    let period = std::f64::consts::TAU / w;
    let dt = period / steps_per_period as f64;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CVector::from_column_slice(&[c(s, 0.0), c(s, 0.0)]);
    let mut psi = plus.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut k_done: u64 = 0;
    for &t in times {
        let k_target = (t / period).round() as u64;
        while k_done < k_target {
            let base = k_done as f64 * period;
            for j in 0..steps_per_period {
                let tm = base + (j as f64 + 0.5) * dt;
                let h = lab_hamiltonian_at(2, wq, params.e_c(), drive.a_cdd, w, a_gate(tm), tm);
                psi = expm_hermitian(h.matrix(), dt) * psi;
            }
            k_done += 1;
        }
        // rotating frame: exp(iωt n); at whole periods only the residual
        // phase from rounding the period count matters
        let tt = k_done as f64 * period;
        let rot = CVector::from_column_slice(&[c(1.0, 0.0), (I * w * tt).exp()]);
        let v = psi.component_mul(&rot);
        out.push(plus.dotc(&v).norm_sqr());
    }
    Ok(out)
}

/// Same observable under the ideal dressed two-level Hamiltonian, where
/// `|+⟩` is the upper eigenstate of `A_CDD σz/2`.
pub fn two_level_plus_population<F>(a_cdd: f64, delta: f64, a_gate: F, times: &[f64], dt: f64) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    let mut psi = CVector::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0)]);
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let n = ((t - t_now) / dt).round().max(0.0) as usize;
        let h_dt = if n > 0 { (t - t_now) / n as f64 } else { 0.0 };
        for j in 0..n {
            let tm = t_now + (j as f64 + 0.5) * h_dt;
            let h = ideal_two_level_hamiltonian(a_cdd, a_gate(tm), delta);
            psi = expm_hermitian(h.matrix(), h_dt) * psi;
        }
        t_now = t;
        out.push(psi[0].norm_sqr());
    }
    out
}

/// Amplitude of `psi` along a reference-basis column, for diagnostics.
pub fn overlap(sim: &Simulator, label: DressedLabel, psi: &StateVector) -> C64 {
    sim.dressed_state(label).inner(psi)
}
