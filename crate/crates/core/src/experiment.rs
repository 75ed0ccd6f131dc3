//! Experiment configuration, output records and the command runners.
//!
//! Configs are TOML with units in every key name. The config hash is the
//! SHA-256 of the canonical re-serialization of the fully defaulted config
//! with `seed` and `output_dir` removed, so the same physics hashes the same
//! wherever it is written to. Every artifact carries that hash plus the
//! seed; only `manifest.kv` holds timestamps.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::benchmarking::{avg_clifford_time, build_clifford_table, run_rb_with, CdpqRb, RBResult};
use crate::calibration::{
    auto_calibrate, leakage_sweep, speed_limit, train_infidelity, CalibrationPlan, CalibrationResult, CalibrationRun,
};
use crate::device::{pair_splitting, rwa_hamiltonian, DressedLabel, DriveConfig, TransmonParams};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, sha256_hex, verify_text, KvRecord, MatrixText, Verification};
use crate::linalg::eigendecompose;
use crate::noise::{hahn_experiment, ramsey_experiment, CdpqSetup, DecayCurve, NoiseModel, System};
use crate::optimize::linspace;
use crate::sim::{Model, Simulator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// ω_0/2π − E_C/h.
    pub uss_frequency_hz: f64,
    pub e_c_over_h_hz: f64,
    pub n_levels: usize,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            uss_frequency_hz: 4.64e9,
            e_c_over_h_hz: 137e6,
            n_levels: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub a_cdd_hz: f64,
    pub flux_phi0: f64,
    /// Absent: carrier locked to the sweet spot.
    pub drive_frequency_hz: Option<f64>,
    pub detuning_offset_hz: f64,
    /// `"rwa"` (n_levels from the device) or `"two_level"`.
    pub model: String,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            a_cdd_hz: 23e6,
            flux_phi0: 0.367,
            drive_frequency_hz: None,
            detuning_offset_hz: 0.0,
            model: "rwa".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_quasistatic_hz: f64,
    pub one_over_f_amp_hz: f64,
    pub a_cdd_frac_noise: f64,
    pub t1_s: Option<f64>,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub tones_per_decade: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let m = NoiseModel::default();
        Self {
            sigma_quasistatic_hz: 1e6,
            one_over_f_amp_hz: 0.0,
            a_cdd_frac_noise: 0.0,
            t1_s: None,
            f_low_hz: m.f_low_hz,
            f_high_hz: m.f_high_hz,
            tones_per_decade: m.tones_per_decade,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// Snap A_CDD to an integer E_C/ħA_CDD ratio near this target.
    pub target_a_cdd_hz: Option<f64>,
    pub t_g_s: f64,
    pub a_g_min_hz: f64,
    pub a_g_max_hz: f64,
    pub a_g_points: usize,
    pub t_c_points: usize,
    pub t_c_periods: f64,
    pub max_train: usize,
    /// Reuse a saved `calibration.kv` instead of tuning up again.
    pub record: Option<PathBuf>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            target_a_cdd_hz: None,
            t_g_s: 40e-9,
            a_g_min_hz: 2e6,
            a_g_max_hz: 40e6,
            a_g_points: 39,
            t_c_points: 97,
            t_c_periods: 3.0,
            max_train: 64,
            record: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Detuning from the sweet spot.
    pub detuning_min_hz: f64,
    pub detuning_max_hz: f64,
    pub points: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            detuning_min_hz: -60e6,
            detuning_max_hz: 60e6,
            points: 241,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub a_g_min_hz: f64,
    pub a_g_max_hz: f64,
    pub a_g_points: usize,
    pub t_g_min_s: f64,
    pub t_g_max_s: f64,
    pub t_g_points: usize,
    pub operating_a_g_hz: f64,
    pub operating_t_g_s: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            a_g_min_hz: 1e6,
            a_g_max_hz: 60e6,
            a_g_points: 60,
            t_g_min_s: 5e-9,
            t_g_max_s: 80e-9,
            t_g_points: 76,
            operating_a_g_hz: 29.12e6,
            operating_t_g_s: 40e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceSection {
    pub n_shots: usize,
    pub points: usize,
    pub bare_delay_max_s: f64,
    pub cdpq_delay_max_s: f64,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        Self {
            n_shots: 400,
            points: 41,
            bare_delay_max_s: 1e-6,
            cdpq_delay_max_s: 40e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbSection {
    pub lengths: Vec<usize>,
    pub n_random: usize,
    /// Draw quasi-static noise from `[noise]` for every sequence.
    pub with_noise: bool,
}

impl Default for RbSection {
    fn default() -> Self {
        Self {
            lengths: vec![2, 4, 8, 16, 32, 64, 128, 256],
            n_random: 100,
            with_noise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub device: DeviceSection,
    pub drive: DriveSection,
    pub noise: NoiseSection,
    pub calibration: CalibrationSection,
    pub spectrum: SpectrumSection,
    pub sweep: SweepSection,
    pub coherence: CoherenceSection,
    pub rb: RbSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            device: DeviceSection::default(),
            drive: DriveSection::default(),
            noise: NoiseSection::default(),
            calibration: CalibrationSection::default(),
            spectrum: SpectrumSection::default(),
            sweep: SweepSection::default(),
            coherence: CoherenceSection::default(),
            rb: RbSection::default(),
        }
    }
}

fn grid_check(n: usize, lo: f64, hi: f64, what: &str) -> Result<()> {
    if n < 2 || !(hi > lo) {
        return Err(Error::Config(format!("{what}: need >= 2 points and max > min")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of everything except `seed` and `output_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.seed = 0;
        c.output_dir = PathBuf::new();
        Ok(sha256_hex(c.to_toml()?.as_bytes()))
    }

    pub fn params(&self) -> Result<TransmonParams> {
        TransmonParams::from_uss_frequency(
            self.device.uss_frequency_hz,
            self.device.e_c_over_h_hz,
            self.device.n_levels,
        )
    }

    pub fn drive(&self) -> Result<DriveConfig> {
        DriveConfig::new(
            TAU * self.drive.a_cdd_hz,
            self.drive.drive_frequency_hz.map(|f| TAU * f),
            self.drive.flux_phi0,
            TAU * self.drive.detuning_offset_hz,
        )
    }

    pub fn model(&self) -> Result<Model> {
        match self.drive.model.as_str() {
            "rwa" => Ok(Model::Rwa {
                n_levels: self.device.n_levels,
            }),
            "two_level" => Ok(Model::TwoLevel),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected rwa or two_level)"
            ))),
        }
    }

    /// Noise model with the run seed.
    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma_quasistatic: TAU * self.noise.sigma_quasistatic_hz,
            one_over_f_amp: TAU * self.noise.one_over_f_amp_hz,
            a_cdd_frac_noise: self.noise.a_cdd_frac_noise,
            t1: self.noise.t1_s,
            seed: self.seed,
            f_low_hz: self.noise.f_low_hz,
            f_high_hz: self.noise.f_high_hz,
            tones_per_decade: self.noise.tones_per_decade,
        }
    }

    pub fn calibration_plan(&self) -> CalibrationPlan {
        let c = &self.calibration;
        CalibrationPlan {
            target_a_cdd: c.target_a_cdd_hz.map(|f| TAU * f),
            t_g: c.t_g_s,
            a_g_grid: linspace(TAU * c.a_g_min_hz, TAU * c.a_g_max_hz, c.a_g_points),
            t_c_points: c.t_c_points,
            t_c_periods: c.t_c_periods,
            max_train: c.max_train,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.drive()?;
        self.model()?;
        self.noise_model().validate()?;
        let c = &self.calibration;
        grid_check(c.a_g_points, c.a_g_min_hz, c.a_g_max_hz, "calibration A_g grid")?;
        if !(c.t_g_s > 0.0) || c.t_c_points < 4 || !(c.t_c_periods > 0.0) || c.max_train < 4 {
            return Err(Error::Config(
                "calibration: need t_g_s > 0, t_c_points >= 4, t_c_periods > 0, max_train >= 4".into(),
            ));
        }
        let s = &self.spectrum;
        grid_check(s.points, s.detuning_min_hz, s.detuning_max_hz, "spectrum grid")?;
        let w = &self.sweep;
        grid_check(w.a_g_points, w.a_g_min_hz, w.a_g_max_hz, "sweep A_g grid")?;
        grid_check(w.t_g_points, w.t_g_min_s, w.t_g_max_s, "sweep t_g grid")?;
        if !(w.t_g_min_s > 0.0) {
            return Err(Error::Config("sweep: t_g_min_s must be positive".into()));
        }
        let h = &self.coherence;
        if h.points < 5 || !(h.bare_delay_max_s > 0.0 && h.cdpq_delay_max_s > 0.0) {
            return Err(Error::Config(
                "coherence: need >= 5 points and positive delay ranges".into(),
            ));
        }
        if self.rb.lengths.len() < 3 || self.rb.lengths.contains(&0) {
            return Err(Error::Config("rb: need at least 3 positive lengths".into()));
        }
        Ok(())
    }

    /// Simulator for the configured drive (carrier resolved to Δ).
    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.params()?, &self.drive()?, self.model()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Spectrum,
    Calibrate,
    SweepLeakage,
    Coherence,
    Rb,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::SweepLeakage => "sweep-leakage",
            ExperimentKind::Coherence => "coherence",
            ExperimentKind::Rb => "rb",
        }
    }
}

/// What a runner produced. Timestamps are seconds since the Unix epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<PathBuf>,
    pub started: f64,
    pub finished: f64,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

struct Writer<'a> {
    dir: &'a Path,
    hash: String,
    seed: u64,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &ExperimentConfig, dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            hash: cfg.hash()?,
            seed: cfg.seed,
            files: Vec::new(),
        })
    }

    fn matrix(&mut self, name: &str, m: &MatrixText) -> Result<()> {
        let p = self.dir.join(name);
        m.write(&p, &self.hash, self.seed)?;
        self.files.push(p);
        Ok(())
    }

    fn kv(&mut self, name: &str, r: &KvRecord) -> Result<()> {
        let p = self.dir.join(name);
        r.write(&p, &self.hash, self.seed)?;
        self.files.push(p);
        Ok(())
    }

    fn finish(self, kind: ExperimentKind, started: f64) -> Result<ExperimentRecord> {
        let rec = ExperimentRecord {
            kind,
            config_hash: self.hash,
            seed: self.seed,
            files: self.files,
            started,
            finished: now(),
        };
        let mut m = KvRecord::new();
        m.set("kind", kind.as_str());
        m.set("started_unix_s", format!("{:.3}", rec.started));
        m.set("finished_unix_s", format!("{:.3}", rec.finished));
        for (i, f) in rec.files.iter().enumerate() {
            let name = f
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            m.set(&format!("file_{i:02}"), name);
        }
        let p = self.dir.join(format!("manifest_{}.kv", kind.as_str()));
        m.write(&p, &rec.config_hash, rec.seed)?;
        Ok(rec)
    }
}

fn config_record(cfg: &ExperimentConfig) -> Result<KvRecord> {
    let mut r = KvRecord::new();
    let value: toml::Value = toml::Value::try_from(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fn flatten(prefix: &str, v: &toml::Value, out: &mut KvRecord) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    flatten(&key, v, out);
                }
            }
            toml::Value::Array(a) => {
                let s: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                out.set(prefix, s.join(" "));
            }
            toml::Value::String(s) => out.set(prefix, s),
            other => out.set(prefix, other),
        }
    }
    flatten("", &value, &mut r);
    Ok(r)
}

/// Three lowest eigenenergies of the rotating-frame model over a detuning
/// grid measured from the sweet spot.
pub fn spectrum_table(cfg: &ExperimentConfig) -> Result<MatrixText> {
    let params = cfg.params()?;
    let drive = cfg.drive()?;
    let n = cfg.device.n_levels;
    let nk = n.min(3);
    let delta0 = if drive.a_cdd > 0.0 {
        Simulator::new(
            params,
            &DriveConfig {
                detuning_offset: 0.0,
                ..drive
            },
            Model::Rwa { n_levels: n },
        )?
        .detuning()
    } else {
        0.0
    };
    let mut cols = vec!["detuning_hz".to_string()];
    cols.extend((0..nk).map(|k| format!("e{k}_hz")));
    cols.push("pair_splitting_hz".into());
    let mut m = MatrixText::new(cols)
        .meta("model", format!("rwa{n}"))
        .meta("a_cdd_hz", fmt_f64(cfg.drive.a_cdd_hz))
        .meta("sweet_spot_detuning_hz", fmt_f64(delta0 / TAU))
        .meta("detuning_reference", "sweet_spot");
    let s = &cfg.spectrum;
    let mut best = (f64::INFINITY, 0.0);
    for d in linspace(s.detuning_min_hz, s.detuning_max_hz, s.points) {
        let h = rwa_hamiltonian(n, drive.a_cdd, 0.0, delta0 + TAU * d, &params);
        let e = eigendecompose(&h)?;
        let mut vals: Vec<f64> = e.values.iter().map(|v| v / TAU).collect();
        vals.sort_by(f64::total_cmp);
        let gap = pair_splitting(&params, n, drive.a_cdd, delta0 + TAU * d) / TAU;
        if gap < best.0 {
            best = (gap, d);
        }
        let mut row = vec![d];
        row.extend(&vals[..nk]);
        row.push(gap);
        m.push_row(row)?;
    }
    m.push_meta("min_gap_hz", fmt_f64(best.0));
    m.push_meta("min_gap_at_detuning_hz", fmt_f64(best.1));
    Ok(m)
}

pub fn run_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let t0 = now();
    let mut w = Writer::new(cfg, out)?;
    w.matrix("spectrum.dat", &spectrum_table(cfg)?)?;
    w.finish(ExperimentKind::Spectrum, t0)
}

/// Auto-calibration, or the saved record when the config points to one.
pub fn obtain_calibration(cfg: &ExperimentConfig) -> Result<(CalibrationResult, Simulator, Option<CalibrationRun>)> {
    let params = cfg.params()?;
    let model = cfg.model()?;
    if let Some(path) = &cfg.calibration.record {
        let rec = KvRecord::parse(&fs::read_to_string(path)?)?;
        let c = CalibrationResult::from_record(&rec)?;
        let drive = DriveConfig {
            a_cdd: c.a_cdd,
            detuning_offset: cfg.drive()?.detuning_offset + c.delta_offset,
            ..cfg.drive()?
        };
        let sim = Simulator::new(params, &drive, model)?;
        return Ok((c, sim, None));
    }
    let run = auto_calibrate(&params, &cfg.drive()?, model, &cfg.calibration_plan())?;
    let sim = Simulator::new(params, &run.drive, model)?;
    Ok((run.result.clone(), sim, Some(run)))
}

pub fn run_calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let t0 = now();
    let mut w = Writer::new(cfg, out)?;
    let params = cfg.params()?;
    let model = cfg.model()?;
    let run = match auto_calibrate(&params, &cfg.drive()?, model, &cfg.calibration_plan()) {
        Ok(r) => r,
        Err(Error::CalibrationFailed { reason, log }) => {
            let mut r = KvRecord::new();
            r.set("status", "failed");
            r.set("reason", &reason);
            for (i, l) in log.iter().enumerate() {
                r.set(&format!("log_{i:03}"), l);
            }
            w.kv("calibration_failed.kv", &r)?;
            return Err(Error::CalibrationFailed { reason, log });
        }
        Err(e) => return Err(e),
    };
    let sim = Simulator::new(params, &run.drive, model)?;
    let mut rec = run.result.to_record();
    rec.set("status", "converged");
    rec.set("model", model.name());
    rec.set_f64("identity4_infidelity", train_infidelity(&run.result, &sim, 4)?);
    rec.set_f64("coarse_rate_hz", run.coarse.rate / TAU);
    rec.set_f64("coarse_detuning_estimate_hz", run.coarse.detuning_estimate / TAU);
    rec.set_f64("coarse_contrast", run.coarse.contrast);
    w.kv("calibration.kv", &rec)?;
    w.matrix("coarse_scan.dat", &run.coarse.map.to_matrix())?;
    w.finish(ExperimentKind::Calibrate, t0)
}

pub fn run_sweep_leakage(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let t0 = now();
    let mut w = Writer::new(cfg, out)?;
    let sim = cfg.simulator()?;
    let s = &cfg.sweep;
    let a_grid: Vec<f64> = linspace(TAU * s.a_g_min_hz, TAU * s.a_g_max_hz, s.a_g_points);
    let t_grid = linspace(s.t_g_min_s, s.t_g_max_s, s.t_g_points);
    let mut summary = KvRecord::new();
    for init in [DressedLabel::Minus, DressedLabel::Plus] {
        let (pop, leak) = leakage_sweep(&a_grid, &t_grid, init, &sim)?;
        for (name, map) in [("transfer", &pop), ("leakage", &leak)] {
            let m = map
                .to_matrix()
                .meta("operating_a_g_hz", fmt_f64(s.operating_a_g_hz))
                .meta("operating_t_g_s", fmt_f64(s.operating_t_g_s));
            w.matrix(&format!("sweep_{name}_{}.dat", init.as_str()), &m)?;
        }
        match speed_limit(&pop) {
            Ok(t) => summary.set_f64(&format!("speed_limit_{}_s", init.as_str()), t),
            Err(_) => summary.set(&format!("speed_limit_{}_s", init.as_str()), "none"),
        }
        let op = sim.pulse_unitary(&crate::pulse::PulseEnvelope::gate(
            TAU * s.operating_a_g_hz,
            s.operating_t_g_s,
            0.0,
        )?);
        let psi = op.apply(&sim.dressed_state(init))?;
        summary.set_f64(&format!("operating_leakage_{}", init.as_str()), sim.leakage(&psi));
    }
    summary.set_f64("two_pi_over_a_cdd_s", TAU / sim.a_cdd());
    w.kv("sweep_summary.kv", &summary)?;
    w.finish(ExperimentKind::SweepLeakage, t0)
}

/// The four coherence curves: bare and CDPQ, Ramsey and Hahn.
pub fn coherence_curves(cfg: &ExperimentConfig) -> Result<Vec<DecayCurve>> {
    let (calib, sim, _) = obtain_calibration(cfg)?;
    let setup = CdpqSetup::new(sim, calib)?;
    let noise = cfg.noise_model();
    let h = &cfg.coherence;
    let bare = linspace(0.0, h.bare_delay_max_s, h.points);
    let cdpq = linspace(0.0, h.cdpq_delay_max_s, h.points);
    Ok(vec![
        ramsey_experiment(System::Bare, &bare, &noise, h.n_shots)?,
        hahn_experiment(System::Bare, &bare, &noise, h.n_shots)?,
        ramsey_experiment(System::Cdpq(&setup), &cdpq, &noise, h.n_shots)?,
        hahn_experiment(System::Cdpq(&setup), &cdpq, &noise, h.n_shots)?,
    ])
}

pub fn run_coherence(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let t0 = now();
    let mut w = Writer::new(cfg, out)?;
    let curves = coherence_curves(cfg)?;
    let mut summary = KvRecord::new();
    for c in &curves {
        let tag = format!("{}_{}", c.sequence.as_str(), c.system);
        w.matrix(&format!("{tag}.dat"), &c.to_matrix())?;
        match &c.fit {
            Some(f) => {
                summary.set_f64(&format!("{tag}_t2_s"), f.t2);
                summary.set_f64(&format!("{tag}_t2_err_s"), f.t2_err);
            }
            None => summary.set(&format!("{tag}_t2_s"), "none"),
        }
    }
    if let (Some(b), Some(c)) = (curves[0].t2(), curves[2].t2()) {
        summary.set_f64("ramsey_t2_ratio_cdpq_over_bare", c / b);
    }
    w.kv("coherence_summary.kv", &summary)?;
    w.finish(ExperimentKind::Coherence, t0)
}

pub fn rb_result(cfg: &ExperimentConfig) -> Result<(RBResult, CalibrationResult, f64)> {
    let (calib, sim, _) = obtain_calibration(cfg)?;
    let table = build_clifford_table()?;
    let noise = cfg.rb.with_noise.then(|| cfg.noise_model());
    let rb = CdpqRb::new(sim, calib.clone(), noise, &table)?;
    let res = run_rb_with(&cfg.rb.lengths, cfg.rb.n_random, cfg.seed, &table, &rb)?;
    let t_avg = avg_clifford_time(calib.t_g, calib.closing_wait(), calib.frame_rate)?;
    Ok((res, calib, t_avg))
}

pub fn run_rb(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let t0 = now();
    let mut w = Writer::new(cfg, out)?;
    let (res, calib, t_avg) = rb_result(cfg)?;
    let mut fit = res.fit_record();
    fit.set_f64("avg_clifford_time_s", t_avg);
    fit.set_f64("t_g_s", calib.t_g);
    fit.set_f64("t_close_s", calib.t_close);
    fit.set_f64("closing_wait_s", calib.closing_wait());
    fit.set("with_noise", cfg.rb.with_noise);
    w.kv("rb_fit.kv", &fit)?;
    w.matrix("rb_summary.dat", &res.summary_matrix())?;
    w.matrix("rb_raw.dat", &res.raw_matrix())?;
    w.finish(ExperimentKind::Rb, t0)
}

/// Writes the flattened config next to the outputs.
pub fn write_config_record(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let p = out.join("config.kv");
    config_record(cfg)?.write(&p, &cfg.hash()?, cfg.seed)?;
    Ok(p)
}

/// Checks every `.dat`/`.kv` file in `dir`: payload hash and, when a config
/// is given, the embedded config hash.
pub fn verify_dir(dir: &Path, cfg: Option<&ExperimentConfig>) -> Result<Vec<(PathBuf, Verification)>> {
    let expected = cfg.map(ExperimentConfig::hash).transpose()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("dat" | "kv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no artifacts in {}", dir.display())));
    }
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let v =
            verify_text(&text, expected.as_deref()).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
        out.push((p, v));
    }
    Ok(out)
}
