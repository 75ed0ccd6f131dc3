//! Automated gate tune-up and the (A_g, t_g) sweeps.
//!
//! The procedure mirrors the experimental one: pick A_CDD so that
//! `E_C/ħA_CDD` is an integer, run a coarse pulse–wait–pulse Ramsey scan
//! over (A_g, t_c) to read off the oscillation rate and the best
//! amplitude, then sharpen A_g and t_close with ever longer X/2 trains.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::compiler::{compile_gate, GateSpec};
use crate::device::{DressedLabel, DriveConfig, TransmonParams};
use crate::error::{Error, Result};
use crate::fit::{fit_sinusoid, SinusoidFit};
use crate::io::{fmt_f64, KvRecord, MatrixText};
use crate::linalg::{CMatrix, Operator};
use crate::optimize::{golden_section_min, linspace};
use crate::parallel::par_map;
use crate::pulse::PulseEnvelope;
use crate::sim::{Model, Simulator};

/// Half-width of the 50:50 band used by [`speed_limit`].
pub const CONTOUR_TOL: f64 = 0.02;

/// Contrast below which the coarse scan is considered to have failed.
pub const MIN_CONTRAST: f64 = 0.1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CalibrationMeta {
    pub seed: u64,
    pub log: Vec<String>,
}

/// Tuned gate parameters. `frame_rate` is the measured pair splitting
/// that Z gates and closing waits are timed against.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub a_cdd: f64,
    pub a_g: f64,
    pub t_g: f64,
    pub t_close: f64,
    pub delta_offset: f64,
    pub frame_rate: f64,
    pub meta: CalibrationMeta,
}

impl CalibrationResult {
    pub fn new(a_cdd: f64, a_g: f64, t_g: f64, t_close: f64, delta_offset: f64, frame_rate: f64) -> Result<Self> {
        let r = Self {
            a_cdd,
            a_g,
            t_g,
            t_close,
            delta_offset,
            frame_rate,
            meta: CalibrationMeta::default(),
        };
        r.validate()?;
        Ok(r)
    }

    /// Placeholder that only knows the frame; pulses cannot be compiled.
    pub fn uncalibrated(a_cdd: f64) -> Self {
        Self {
            a_cdd,
            a_g: 0.0,
            t_g: 0.0,
            t_close: 0.0,
            delta_offset: 0.0,
            frame_rate: a_cdd,
            meta: CalibrationMeta::default(),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.a_g > 0.0 && self.t_g > 0.0 && self.frame_rate > 0.0
    }

    pub fn period(&self) -> f64 {
        TAU / self.frame_rate
    }

    /// `t_close` lifted into `[3T/4, 7T/4)` so that the quarter-period
    /// prefixes of the other equatorial gates never make it negative.
    pub fn closing_wait(&self) -> f64 {
        let period = self.period();
        if self.t_close >= 0.75 * period {
            self.t_close
        } else {
            self.t_close + period
        }
    }

    /// Duration of every compiled ±X/2, ±Y/2.
    pub fn equatorial_duration(&self) -> f64 {
        self.t_g + self.closing_wait()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} must be positive, got {x}")))
            }
        };
        pos(self.a_cdd, "A_CDD")?;
        pos(self.a_g, "A_g")?;
        pos(self.t_g, "t_g")?;
        pos(self.frame_rate, "frame rate")?;
        if !(0.0..self.period()).contains(&self.t_close) {
            return Err(Error::Validation(format!(
                "t_close must lie in [0, {:e}), got {:e}",
                self.period(),
                self.t_close
            )));
        }
        if !self.delta_offset.is_finite() {
            return Err(Error::Validation("detuning offset must be finite".into()));
        }
        Ok(())
    }

    pub fn with_a_g(&self, a_g: f64) -> Self {
        Self { a_g, ..self.clone() }
    }

    pub fn with_t_close(&self, t_close: f64) -> Self {
        Self {
            t_close: t_close.rem_euclid(self.period()),
            ..self.clone()
        }
    }

    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set_f64("a_cdd_hz", self.a_cdd / TAU);
        r.set_f64("a_g_hz", self.a_g / TAU);
        r.set_f64("t_g_s", self.t_g);
        r.set_f64("t_close_s", self.t_close);
        r.set_f64("delta_offset_hz", self.delta_offset / TAU);
        r.set_f64("frame_rate_hz", self.frame_rate / TAU);
        r.set("calibration_seed", self.meta.seed);
        r.set("log_lines", self.meta.log.len());
        for (i, line) in self.meta.log.iter().enumerate() {
            r.set(&format!("log_{i:03}"), line);
        }
        r
    }

    pub fn from_record(r: &KvRecord) -> Result<Self> {
        let n: usize = r
            .get("log_lines")
            .unwrap_or("0")
            .parse()
            .map_err(|e| Error::Parse(format!("log_lines: {e}")))?;
        let log = (0..n)
            .map(|i| r.get(&format!("log_{i:03}")).unwrap_or_default().to_string())
            .collect();
        let seed = r
            .get("calibration_seed")
            .unwrap_or("0")
            .parse()
            .map_err(|e| Error::Parse(format!("calibration_seed: {e}")))?;
        let mut out = Self::new(
            TAU * r.get_f64("a_cdd_hz")?,
            TAU * r.get_f64("a_g_hz")?,
            r.get_f64("t_g_s")?,
            r.get_f64("t_close_s")?,
            TAU * r.get_f64("delta_offset_hz")?,
            TAU * r.get_f64("frame_rate_hz")?,
        )?;
        out.meta = CalibrationMeta { seed, log };
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }

    fn label(&self) -> String {
        format!("{}_{}", self.name, self.unit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Probability,
    Log10,
}

impl MapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Probability => "probability",
            MapKind::Log10 => "log10",
        }
    }
}

/// A 2-D map; `values[iy][ix]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepMap {
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub values: Vec<Vec<f64>>,
    pub init_state: Option<DressedLabel>,
    pub kind: MapKind,
    pub quantity: String,
}

impl SweepMap {
    pub fn get(&self, iy: usize, ix: usize) -> f64 {
        self.values[iy][ix]
    }

    /// Matrix text: one row per y value, first column is y, the remaining
    /// columns follow the x axis listed in the header.
    pub fn to_matrix(&self) -> MatrixText {
        let mut cols = vec![self.y_axis.label()];
        cols.extend((0..self.x_axis.values.len()).map(|i| format!("x{i}")));
        let x_vals: Vec<String> = self.x_axis.values.iter().map(|&v| fmt_f64(v)).collect();
        let mut m = MatrixText::new(cols)
            .meta("quantity", &self.quantity)
            .meta("map_kind", self.kind.as_str())
            .meta("x_axis", self.x_axis.label())
            .meta("x_values", x_vals.join(" "))
            .meta("y_axis", self.y_axis.label())
            .meta("init_state", self.init_state.map_or("none", |s| s.as_str()));
        for (y, row) in self.y_axis.values.iter().zip(&self.values) {
            let mut r = vec![*y];
            r.extend(row);
            m.rows.push(r);
        }
        m
    }
}

/// Picks the A_CDD nearest `target` for which `E_C/ħA_CDD` is an integer in
/// `[4, 12]`, within ±30% of `target`. Ties go to the larger amplitude.
pub fn select_acdd(params: &TransmonParams, target: f64) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Validation(format!(
            "target A_CDD must be positive, got {target}"
        )));
    }
    let e_c = params.e_c();
    let mut best: Option<f64> = None;
    for ratio in 4..=12 {
        let a = e_c / ratio as f64;
        if (a - target).abs() > 0.3 * target {
            continue;
        }
        best = match best {
            None => Some(a),
            Some(b) => {
                let (da, db) = ((a - target).abs(), (b - target).abs());
                if da < db - 1e-9 * target || ((da - db).abs() <= 1e-9 * target && a > b) {
                    Some(a)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| {
        Error::NoCandidate(format!(
            "no integer E_C/A_CDD ratio in [4, 12] within 30% of {:.4e} Hz",
            target / TAU
        ))
    })
}

/// Output of the coarse Ramsey scan.
#[derive(Clone, Debug)]
pub struct CoarseScan {
    /// P(|+⟩) with rows over A_g and columns over t_c.
    pub map: SweepMap,
    pub row_fits: Vec<Option<SinusoidFit>>,
    pub best_row: usize,
    pub a_g: f64,
    pub t_close: f64,
    /// Fitted oscillation rate in t_c, rad/s.
    pub rate: f64,
    /// `√max(rate² − A_CDD², 0)`, rad/s; the sign is not observable.
    pub detuning_estimate: f64,
    pub contrast: f64,
}

/// Pulse, wait(t_c), pulse from dressed |−⟩ for every grid point; records
/// P(|+⟩), fits each A_g row with a sinusoid in t_c and selects the row of
/// maximal contrast. `t_close` is the first maximum of that row's fit.
pub fn coarse_scan(a_g_grid: &[f64], t_c_grid: &[f64], t_g: f64, sim: &Simulator) -> Result<CoarseScan> {
    if a_g_grid.is_empty() || t_c_grid.len() < 4 {
        return Err(Error::Validation(
            "coarse scan needs a nonempty A_g grid and at least 4 t_c points".into(),
        ));
    }
    let psi0 = sim.dressed_state(DressedLabel::Minus);
    let waits: Vec<Operator> = t_c_grid.iter().map(|&t| sim.wait_unitary(t)).collect();
    let rows: Vec<Vec<f64>> = par_map(a_g_grid.len(), |i| {
        let p = sim.pulse_unitary(&PulseEnvelope::GateCosSin {
            amplitude: a_g_grid[i],
            duration: t_g,
            start: 0.0,
        });
        let after1 = p.matrix() * psi0.amplitudes();
        waits
            .iter()
            .map(|w| {
                let v = p.matrix() * (w.matrix() * &after1);
                let pops = sim.reference_basis().basis.matrix().adjoint() * v;
                pops[1].norm_sqr()
            })
            .collect()
    });
    let (w_lo, w_hi) = (0.5 * sim.a_cdd(), 2.5 * sim.a_cdd());
    let row_fits: Vec<Option<SinusoidFit>> = rows
        .iter()
        .map(|r| fit_sinusoid(t_c_grid, r, w_lo, w_hi).ok())
        .collect();
    let (best_row, contrast) = row_fits
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|f| (i, f.contrast())))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::CalibrationFailed {
            reason: "no A_g row could be fitted".into(),
            log: vec![],
        })?;
    if contrast < MIN_CONTRAST {
        return Err(Error::CalibrationFailed {
            reason: format!("coarse scan contrast {contrast:.3} below {MIN_CONTRAST}"),
            log: vec![],
        });
    }
    let fit = row_fits[best_row].expect("selected row has a fit");
    let t_close = (-fit.phase).rem_euclid(TAU) / fit.omega;
    let rate = fit.omega;
    let detuning_estimate = (rate * rate - sim.a_cdd() * sim.a_cdd()).max(0.0).sqrt();
    let map = SweepMap {
        x_axis: Axis::new("t_c", "s", t_c_grid.to_vec()),
        y_axis: Axis::new("a_g", "hz", a_g_grid.iter().map(|a| a / TAU).collect()),
        values: rows,
        init_state: Some(DressedLabel::Minus),
        kind: MapKind::Probability,
        quantity: "p_plus".into(),
    };
    Ok(CoarseScan {
        map,
        row_fits,
        best_row,
        a_g: a_g_grid[best_row],
        t_close,
        rate,
        detuning_estimate,
        contrast,
    })
}

/// Unitary of `n` back-to-back X/2 gates.
pub fn x90_train(calib: &CalibrationResult, sim: &Simulator, n: usize) -> Result<Operator> {
    let handle = Arc::new(calib.clone());
    let g = sim.schedule_unitary(&compile_gate(GateSpec::X90, calib, &handle)?)?;
    Ok(matrix_power(&g, n))
}

fn matrix_power(g: &Operator, mut n: usize) -> Operator {
    let mut base: CMatrix = g.matrix().clone();
    let mut acc = CMatrix::identity(g.dim(), g.dim());
    while n > 0 {
        if n & 1 == 1 {
            acc = &base * &acc;
        }
        base = &base * &base;
        n >>= 1;
    }
    Operator::from_matrix_unchecked(acc)
}

/// Qubit-subspace infidelity of `n` X/2 gates against the identity
/// (`n mod 4 = 0`); leakage counts as error.
pub fn train_infidelity(calib: &CalibrationResult, sim: &Simulator, n: usize) -> Result<f64> {
    let u = x90_train(calib, sim, n)?;
    let b = sim.qubit_block(&u);
    let tr = b.matrix().trace();
    Ok((1.0 - (tr / 2.0).norm_sqr()).max(0.0))
}

/// Error signal of an `n + 1` gate train from |−⟩: ideally a net X/2, so
/// P(|+⟩) − 1/2 is linear in small amplitude errors with slope ∝ n + 1.
pub fn train_signal(calib: &CalibrationResult, sim: &Simulator, n: usize) -> Result<f64> {
    let u = x90_train(calib, sim, n + 1)?;
    let psi = u.apply(&sim.dressed_state(DressedLabel::Minus))?;
    Ok(sim.dressed_populations(&psi)[1] - 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOptions {
    pub max_train: usize,
    pub max_passes: usize,
    /// Required 4-gate identity infidelity.
    pub target: f64,
    pub a_g_halfwidth: f64,
    /// Initial t_close half-width as a fraction of the frame period.
    pub t_close_halfwidth_periods: f64,
}

impl RefineOptions {
    pub fn new(max_train: usize) -> Self {
        Self {
            max_train,
            max_passes: 10,
            target: 1e-4,
            a_g_halfwidth: TAU * 2e6,
            t_close_halfwidth_periods: 0.1,
        }
    }
}

pub fn refine_with_trains(initial: &CalibrationResult, max_train: usize, sim: &Simulator) -> Result<CalibrationResult> {
    refine_with_options(initial, &RefineOptions::new(max_train), sim)
}

/// Alternating golden-section searches over A_g and t_close with train
/// lengths 4, 8, … up to `max_train`; the search intervals halve every
/// pass and a new point is kept only if the 4-gate infidelity does not
/// increase.
pub fn refine_with_options(
    initial: &CalibrationResult,
    opts: &RefineOptions,
    sim: &Simulator,
) -> Result<CalibrationResult> {
    if opts.max_train < 4 {
        return Err(Error::Validation(format!(
            "max_train must be >= 4, got {}",
            opts.max_train
        )));
    }
    let mut cur = initial.clone();
    cur.validate()?;
    let mut log = cur.meta.log.clone();
    let mut best4 = train_infidelity(&cur, sim, 4)?;
    log.push(format!(
        "start a_g_hz={} t_close_s={} infidelity4={}",
        fmt_f64(cur.a_g / TAU),
        fmt_f64(cur.t_close),
        fmt_f64(best4)
    ));
    let mut w_a = opts.a_g_halfwidth;
    let mut w_t = opts.t_close_halfwidth_periods * cur.period();
    let full_len_pass = (opts.max_train / 4).max(1).ilog2() as usize;
    for pass in 0..opts.max_passes {
        let n = (4usize << pass.min(20)).min(opts.max_train);
        let n = n - n % 4;

        let lo = (cur.a_g - w_a).max(1e-3 * cur.a_g);
        let (a, _) = golden_section_min(
            |a| train_infidelity(&cur.with_a_g(a), sim, n).unwrap_or(f64::INFINITY),
            lo,
            cur.a_g + w_a,
            w_a * 1e-4,
            200,
        );
        let cand = cur.with_a_g(a);
        let f4 = train_infidelity(&cand, sim, 4)?;
        if f4 <= best4 {
            cur = cand;
            best4 = f4;
        }

        let t0 = cur.t_close;
        let (t, _) = golden_section_min(
            |t| train_infidelity(&cur.with_t_close(t), sim, n).unwrap_or(f64::INFINITY),
            t0 - w_t,
            t0 + w_t,
            w_t * 1e-4,
            200,
        );
        let cand = cur.with_t_close(t);
        let f4 = train_infidelity(&cand, sim, 4)?;
        if f4 <= best4 {
            cur = cand;
            best4 = f4;
        }
        let fn_ = train_infidelity(&cur, sim, n)?;
        log.push(format!(
            "pass={pass} train={n} a_g_hz={} t_close_s={} infidelity4={} infidelity_train={}",
            fmt_f64(cur.a_g / TAU),
            fmt_f64(cur.t_close),
            fmt_f64(best4),
            fmt_f64(fn_)
        ));
        log::debug!("{}", log.last().expect("pass logged"));
        w_a *= 0.5;
        w_t *= 0.5;
        if pass >= full_len_pass && best4 < 1e-3 * opts.target {
            break;
        }
    }
    if !(best4 < opts.target) {
        return Err(Error::CalibrationFailed {
            reason: format!("4-gate infidelity {best4:.3e} did not reach {:.1e}", opts.target),
            log,
        });
    }
    cur.meta.log = log;
    Ok(cur)
}

/// Settings for [`auto_calibrate`].
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPlan {
    /// When set, A_CDD is first snapped with [`select_acdd`].
    pub target_a_cdd: Option<f64>,
    pub t_g: f64,
    pub a_g_grid: Vec<f64>,
    pub t_c_points: usize,
    /// Span of the t_c scan in frame periods.
    pub t_c_periods: f64,
    pub max_train: usize,
    pub seed: u64,
}

impl CalibrationPlan {
    pub fn reference() -> Self {
        Self {
            target_a_cdd: None,
            t_g: 40e-9,
            a_g_grid: linspace(TAU * 2e6, TAU * 40e6, 39),
            t_c_points: 97,
            t_c_periods: 3.0,
            max_train: 64,
            seed: 0,
        }
    }
}

/// Everything [`auto_calibrate`] produced.
#[derive(Clone, Debug)]
pub struct CalibrationRun {
    pub result: CalibrationResult,
    pub coarse: CoarseScan,
    /// A_CDD actually used.
    pub drive: DriveConfig,
}

/// Full tune-up: optional A_CDD selection, coarse scan with detuning
/// correction, then train refinement.
pub fn auto_calibrate(
    params: &TransmonParams,
    drive: &DriveConfig,
    model: Model,
    plan: &CalibrationPlan,
) -> Result<CalibrationRun> {
    drive.validate()?;
    let mut drive = *drive;
    let mut log = Vec::new();
    if let Some(target) = plan.target_a_cdd {
        drive.a_cdd = select_acdd(params, target)?;
        log.push(format!(
            "select_acdd target_hz={} chosen_hz={} ratio={}",
            fmt_f64(target / TAU),
            fmt_f64(drive.a_cdd / TAU),
            (params.e_c() / drive.a_cdd).round()
        ));
    }
    let scan_at = |d: &DriveConfig| -> Result<(Simulator, CoarseScan)> {
        let sim = Simulator::new(*params, d, model)?;
        let period = TAU / sim.splitting();
        let grid = linspace(0.0, plan.t_c_periods * period, plan.t_c_points);
        let scan = coarse_scan(&plan.a_g_grid, &grid, plan.t_g, &sim)?;
        Ok((sim, scan))
    };
    let (mut sim, mut scan) = scan_at(&drive)?;
    log.push(format!(
        "coarse rate_hz={} detuning_estimate_hz={} a_g_hz={} contrast={}",
        fmt_f64(scan.rate / TAU),
        fmt_f64(scan.detuning_estimate / TAU),
        fmt_f64(scan.a_g / TAU),
        fmt_f64(scan.contrast)
    ));
    let mut correction = 0.0;
    if scan.detuning_estimate > 0.0 {
        // the rate is even in Δ: try both signs and keep the slower one
        let mut best: Option<(f64, Simulator, CoarseScan)> = None;
        for sign in [-1.0, 1.0] {
            let corr = sign * scan.detuning_estimate;
            let d = DriveConfig {
                detuning_offset: drive.detuning_offset + corr,
                ..drive
            };
            let (s, c) = scan_at(&d)?;
            log.push(format!(
                "correction_hz={} rate_hz={}",
                fmt_f64(corr / TAU),
                fmt_f64(c.rate / TAU)
            ));
            if best.as_ref().is_none_or(|b| c.rate < b.2.rate) {
                best = Some((corr, s, c));
            }
        }
        let (corr, s, c) = best.expect("two candidates");
        if c.rate < scan.rate {
            correction = corr;
            sim = s;
            scan = c;
            drive.detuning_offset += corr;
        }
    }
    let mut initial = CalibrationResult::new(
        drive.a_cdd,
        scan.a_g,
        plan.t_g,
        scan.t_close.rem_euclid(TAU / scan.rate),
        correction,
        scan.rate,
    )?;
    initial.meta = CalibrationMeta { seed: plan.seed, log };
    let result = refine_with_options(&initial, &RefineOptions::new(plan.max_train), &sim)?;
    Ok(CalibrationRun {
        result,
        coarse: scan,
        drive,
    })
}

/// One gate pulse per (A_g, t_g) from dressed `init`. Returns the transfer
/// probability into the other dressed state and log10 of the population
/// left outside the dressed pair. Rows follow `a_g_grid`, columns
/// `t_g_grid`.
pub fn leakage_sweep(
    a_g_grid: &[f64],
    t_g_grid: &[f64],
    init: DressedLabel,
    sim: &Simulator,
) -> Result<(SweepMap, SweepMap)> {
    if a_g_grid.is_empty() || t_g_grid.is_empty() {
        return Err(Error::Validation("leakage sweep needs nonempty grids".into()));
    }
    if t_g_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Validation("gate durations must be positive".into()));
    }
    let psi0 = sim.dressed_state(init);
    let nx = t_g_grid.len();
    let cells: Vec<(f64, f64)> = par_map(a_g_grid.len() * nx, |k| {
        let (iy, ix) = (k / nx, k % nx);
        let u = sim.pulse_unitary(&PulseEnvelope::GateCosSin {
            amplitude: a_g_grid[iy],
            duration: t_g_grid[ix],
            start: 0.0,
        });
        let v = u.matrix() * psi0.amplitudes();
        let amps = sim.reference_basis().basis.matrix().adjoint() * v;
        let transfer = amps[init.other().index()].norm_sqr();
        let leak: f64 = amps.iter().skip(2).map(|z| z.norm_sqr()).sum();
        (transfer, leak.max(1e-16).log10())
    });
    let to_rows = |pick: fn(&(f64, f64)) -> f64| -> Vec<Vec<f64>> {
        cells.chunks(nx).map(|r| r.iter().map(pick).collect()).collect()
    };
    let x = Axis::new("t_g", "s", t_g_grid.to_vec());
    let y = Axis::new("a_g", "hz", a_g_grid.iter().map(|a| a / TAU).collect());
    let pop = SweepMap {
        x_axis: x.clone(),
        y_axis: y.clone(),
        values: to_rows(|c| c.0),
        init_state: Some(init),
        kind: MapKind::Probability,
        quantity: format!("p_{}", init.other().as_str()),
    };
    let leak = SweepMap {
        x_axis: x,
        y_axis: y,
        values: to_rows(|c| c.1),
        init_state: Some(init),
        kind: MapKind::Log10,
        quantity: "log10_p_leak".into(),
    };
    Ok((pop, leak))
}

/// Minimal `t_g` over cells whose transfer probability is within
/// [`CONTOUR_TOL`] of 1/2.
pub fn speed_limit(sweep: &SweepMap) -> Result<f64> {
    let mut best: Option<f64> = None;
    for row in &sweep.values {
        for (ix, &v) in row.iter().enumerate() {
            if (v - 0.5).abs() <= CONTOUR_TOL {
                let t = sweep.x_axis.values[ix];
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
    }
    best.ok_or_else(|| Error::Range("no 50:50 cell in the sweep".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::TWO_PI;

    #[test]
    fn acdd_selection_examples() {
        let p = TransmonParams::reference_device();
        let a = select_acdd(&p, TWO_PI * 23e6).unwrap();
        assert!((a / TWO_PI - 137e6 / 6.0).abs() < 1.0);
        let p140 = TransmonParams::from_uss_frequency(4.64e9, 140e6, 3).unwrap();
        let a = select_acdd(&p140, TWO_PI * 20e6).unwrap();
        assert!((a / TWO_PI - 20e6).abs() < 1e-6);
        assert!(matches!(select_acdd(&p, TWO_PI * 1e6), Err(Error::NoCandidate(_))));
    }

    #[test]
    fn acdd_tie_prefers_larger() {
        // E_C/h = 120 MHz: ratios 5 and 6 give 24 and 20 MHz, target 22 MHz
        let p = TransmonParams::from_uss_frequency(4.64e9, 120e6, 3).unwrap();
        let a = select_acdd(&p, TWO_PI * 22e6).unwrap();
        assert!((a / TWO_PI - 24e6).abs() < 1e-3);
    }

    #[test]
    fn record_round_trip() {
        let mut c = CalibrationResult::new(
            TWO_PI * 23e6,
            TWO_PI * 16e6,
            40e-9,
            30e-9,
            -TWO_PI * 1e5,
            TWO_PI * 22.9e6,
        )
        .unwrap();
        c.meta.seed = 11;
        c.meta.log = vec!["pass=0 ok".into(), "pass=1 ok".into()];
        let txt = c.to_record().render("h", 11).unwrap();
        let back = CalibrationResult::from_record(&KvRecord::parse(&txt).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_results_rejected() {
        assert!(CalibrationResult::new(TWO_PI * 23e6, 0.0, 40e-9, 1e-9, 0.0, TWO_PI * 23e6).is_err());
        assert!(CalibrationResult::new(TWO_PI * 23e6, 1.0, 40e-9, 50e-9, 0.0, TWO_PI * 23e6).is_err());
    }

    #[test]
    fn speed_limit_requires_contour() {
        let m = SweepMap {
            x_axis: Axis::new("t_g", "s", vec![1.0, 2.0, 3.0]),
            y_axis: Axis::new("a_g", "hz", vec![0.0, 1.0]),
            values: vec![vec![0.0, 0.1, 0.2], vec![0.3, 0.51, 0.49]],
            init_state: None,
            kind: MapKind::Probability,
            quantity: "p".into(),
        };
        assert_eq!(speed_limit(&m).unwrap(), 2.0);
        let flat = SweepMap {
            values: vec![vec![0.0; 3]; 2],
            ..m
        };
        assert!(matches!(speed_limit(&flat), Err(Error::Range(_))));
    }
}
