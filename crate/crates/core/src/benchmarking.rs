//! Single-qubit Clifford randomized benchmarking.
//!
//! The 24 Cliffords are built from the primitive set {I, ±X/2, ±Y/2, ±Z/2,
//! Z}. Each row lists primitives in execution order; its unitary is the
//! product with the last primitive on the left. Survival is the return
//! probability to the prepared dressed state |−⟩.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::CalibrationResult;
use crate::compiler::{compile_gate, GateSpec, PulseSchedule, SegmentKind};
use crate::device::DressedLabel;
use crate::error::{Error, Result};
use crate::fit::{fit_rb_decay, RbFit};
use crate::io::{KvRecord, MatrixText};
use crate::linalg::{phase_invariant_overlap, rx, ry, rz, CMatrix, CVector, Operator};
use crate::noise::NoiseModel;
use crate::parallel::{substream, try_par_map};
use crate::sim::Simulator;

/// Minimum number of random sequences per length.
pub const MIN_SEQUENCES: usize = 30;

/// Phase-insensitive matching tolerance for table lookups.
pub const MATCH_TOL: f64 = 1e-10;

const TABLE: [&[GateSpec]; 24] = {
    use GateSpec::*;
    [
        &[I],
        &[X90, X90],
        &[Y90, Y90],
        &[Z],
        &[X90, Zm90],
        &[X90, Z90],
        &[Xm90, Z90],
        &[Xm90, Zm90],
        &[Y90, Z90],
        &[Y90, Zm90],
        &[Ym90, Zm90],
        &[Ym90, Z90],
        &[X90],
        &[Xm90],
        &[Y90],
        &[Ym90],
        &[Z90],
        &[Zm90],
        &[Z, Y90],
        &[Z, Ym90],
        &[Xm90, Z],
        &[X90, Z],
        &[X90, X90, Zm90],
        &[Zm90, X90, X90],
    ]
};

/// Ideal SU(2) matrix of a table primitive.
pub fn ideal_primitive(g: GateSpec) -> Result<Operator> {
    Ok(match g {
        GateSpec::I => Operator::identity(2),
        GateSpec::X90 => rx(FRAC_PI_2),
        GateSpec::Xm90 => rx(-FRAC_PI_2),
        GateSpec::Y90 => ry(FRAC_PI_2),
        GateSpec::Ym90 => ry(-FRAC_PI_2),
        GateSpec::Z => rz(PI),
        GateSpec::Z90 => rz(FRAC_PI_2),
        GateSpec::Zm90 => rz(-FRAC_PI_2),
        GateSpec::Rz(phi) => rz(phi),
        GateSpec::U(..) => return Err(Error::UnsupportedGate(g.name())),
    })
}

#[derive(Clone, Debug)]
pub struct CliffordElement {
    /// 1-based.
    pub id: usize,
    pub primitives: Vec<GateSpec>,
    pub unitary: Operator,
}

/// The table plus its multiplication and inverse lookups (0-based indices).
#[derive(Clone, Debug)]
pub struct CliffordTable {
    elements: Vec<CliffordElement>,
    /// `product[a][b]` is the index of `U_a·U_b`.
    product: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

fn distance(u: &Operator, v: &Operator) -> f64 {
    1.0 - phase_invariant_overlap(u, v)
}

/// Builds the table and checks distinctness and closure.
pub fn build_clifford_table() -> Result<CliffordTable> {
    let mut elements = Vec::with_capacity(24);
    for (i, row) in TABLE.iter().enumerate() {
        let mut u = Operator::identity(2);
        for &g in row.iter() {
            u = &ideal_primitive(g)? * &u;
        }
        elements.push(CliffordElement {
            id: i + 1,
            primitives: row.to_vec(),
            unitary: u,
        });
    }
    CliffordTable::from_elements(elements)
}

impl CliffordTable {
    pub fn from_elements(elements: Vec<CliffordElement>) -> Result<Self> {
        let n = elements.len();
        for a in 0..n {
            for b in a + 1..n {
                if distance(&elements[a].unitary, &elements[b].unitary) < 1e-6 {
                    return Err(Error::TableIntegrity(format!(
                        "elements {} and {} coincide up to phase",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        let find = |u: &Operator| elements.iter().position(|e| distance(&e.unitary, u) < MATCH_TOL);
        let mut product = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let u = &elements[a].unitary * &elements[b].unitary;
                product[a][b] = find(&u).ok_or_else(|| {
                    Error::TableIntegrity(format!("product of {} and {} is not in the table", a + 1, b + 1))
                })?;
            }
        }
        let id = find(&Operator::identity(2))
            .ok_or_else(|| Error::TableIntegrity("identity missing from the table".into()))?;
        let inverse = (0..n)
            .map(|a| {
                (0..n)
                    .find(|&b| product[a][b] == id)
                    .ok_or_else(|| Error::TableIntegrity(format!("element {} has no inverse", a + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if id != 0 {
            return Err(Error::TableIntegrity("element 1 must be the identity".into()));
        }
        Ok(Self {
            elements,
            product,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CliffordElement] {
        &self.elements
    }

    /// Element by 1-based id.
    pub fn get(&self, id: usize) -> &CliffordElement {
        &self.elements[id - 1]
    }

    /// Id of `U_a·U_b` (1-based ids).
    pub fn compose(&self, a: usize, b: usize) -> usize {
        self.product[a - 1][b - 1] + 1
    }

    pub fn inverse(&self, id: usize) -> usize {
        self.inverse[id - 1] + 1
    }

    /// Id of the element equal to `u` up to phase.
    pub fn find(&self, u: &Operator) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| distance(&e.unitary, u) < MATCH_TOL)
            .map(|i| i + 1)
    }

    /// Id of the product of `ids` applied left to right in time.
    pub fn net(&self, ids: &[usize]) -> usize {
        ids.iter().fold(1, |acc, &g| self.compose(g, acc))
    }
}

/// Uniform random ids (1-based) plus the recovery that undoes them.
pub fn rb_sequence(m: usize, table: &CliffordTable, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, usize)> {
    if m == 0 {
        return Err(Error::Validation("sequence length must be >= 1".into()));
    }
    let ids: Vec<usize> = (0..m).map(|_| rng.random_range(1..=table.len())).collect();
    let recovery = table.inverse(table.net(&ids));
    Ok((ids, recovery))
}

/// Anything that can report the survival of one RB sequence.
pub trait SequenceSimulator: Sync {
    /// Probability of returning to the prepared state after `ids` then
    /// `recovery`. `rng` is private to this sequence.
    fn survival(&self, table: &CliffordTable, ids: &[usize], recovery: usize, rng: &mut ChaCha8Rng) -> Result<f64>;
}

/// Exact depolarizing expectation `B + A·p^m`, optionally with Gaussian
/// sampling noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepolarizingMock {
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub shot_sigma: f64,
}

impl DepolarizingMock {
    pub fn new(p: f64) -> Self {
        Self {
            p,
            a: 0.5,
            b: 0.5,
            shot_sigma: 0.0,
        }
    }
}

impl SequenceSimulator for DepolarizingMock {
    fn survival(&self, _table: &CliffordTable, ids: &[usize], _recovery: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut s = self.b + self.a * self.p.powi(ids.len() as i32);
        if self.shot_sigma > 0.0 {
            s += Normal::new(0.0, self.shot_sigma)
                .map_err(|e| Error::Validation(e.to_string()))?
                .sample(rng);
        }
        Ok(s.clamp(0.0, 1.0))
    }
}

/// Compiled gate set under the rotating-frame model. With a noise model
/// every sequence sees its own quasi-static detuning and A_CDD error.
#[derive(Clone, Debug)]
pub struct CdpqRb {
    sim: Simulator,
    calib: CalibrationResult,
    noise: Option<NoiseModel>,
    schedules: Vec<PulseSchedule>,
    nominal: Vec<CMatrix>,
}

impl CdpqRb {
    pub fn new(
        sim: Simulator,
        calib: CalibrationResult,
        noise: Option<NoiseModel>,
        table: &CliffordTable,
    ) -> Result<Self> {
        if !calib.is_calibrated() {
            return Err(Error::MissingCalibration("RB needs a calibrated gate set"));
        }
        if let Some(n) = &noise {
            n.validate()?;
        }
        let handle = Arc::new(calib.clone());
        let schedules = table
            .elements()
            .iter()
            .map(|e| {
                let mut s = PulseSchedule::new(Some(handle.clone()));
                for &g in &e.primitives {
                    s.extend(&compile_gate(g, &calib, &handle)?);
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self {
            sim,
            calib,
            noise,
            schedules,
            nominal: Vec::new(),
        };
        out.nominal = out.clifford_unitaries(&out.sim)?;
        Ok(out)
    }

    pub fn calibration(&self) -> &CalibrationResult {
        &self.calib
    }

    pub fn schedule(&self, id: usize) -> &PulseSchedule {
        &self.schedules[id - 1]
    }

    /// Full-space unitaries of all 24 Cliffords; the gate pulse is
    /// propagated once and reused.
    fn clifford_unitaries(&self, sim: &Simulator) -> Result<Vec<CMatrix>> {
        let mut pulse: Option<CMatrix> = None;
        let mut out = Vec::with_capacity(self.schedules.len());
        for s in &self.schedules {
            let mut u = CMatrix::identity(sim.dim(), sim.dim());
            for seg in s.segments() {
                let step = match seg.kind {
                    SegmentKind::Wait => sim.wait_unitary(seg.duration).into_matrix(),
                    SegmentKind::XzPulse => match &pulse {
                        Some(p) => p.clone(),
                        None => {
                            let p = sim.segment_unitary(seg)?.into_matrix();
                            pulse = Some(p.clone());
                            p
                        }
                    },
                    SegmentKind::YzDetuningPulse => sim.segment_unitary(seg)?.into_matrix(),
                };
                u = step * u;
            }
            out.push(u);
        }
        Ok(out)
    }
}

impl SequenceSimulator for CdpqRb {
    fn survival(&self, _table: &CliffordTable, ids: &[usize], recovery: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let perturbed;
        let unitaries = match &self.noise {
            Some(n) if !n.is_noiseless() => {
                let r = n.realize(rng);
                perturbed = self.clifford_unitaries(&self.sim.perturbed(r.delta_qs, r.a_frac))?;
                &perturbed
            }
            _ => &self.nominal,
        };
        let psi0 = self.sim.dressed_state(DressedLabel::Minus);
        let mut psi: CVector = psi0.amplitudes().clone();
        for &g in ids.iter().chain(std::iter::once(&recovery)) {
            psi = &unitaries[g - 1] * psi;
        }
        Ok(psi0.amplitudes().dotc(&psi).norm_sqr())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RBResult {
    pub lengths: Vec<usize>,
    pub survival_mean: Vec<f64>,
    pub survival_std: Vec<f64>,
    /// `raw[length index][sequence index]`.
    pub raw: Vec<Vec<f64>>,
    pub fit: RbFit,
    pub fidelity: f64,
    pub fidelity_err: f64,
}

impl RBResult {
    pub fn sem(&self) -> Vec<f64> {
        let n = self.raw.first().map_or(1, Vec::len) as f64;
        self.survival_std.iter().map(|s| s / n.sqrt()).collect()
    }

    pub fn summary_matrix(&self) -> MatrixText {
        let mut m = MatrixText::new(["length", "survival_mean", "survival_std"]);
        for i in 0..self.lengths.len() {
            m.rows.push(vec![
                self.lengths[i] as f64,
                self.survival_mean[i],
                self.survival_std[i],
            ]);
        }
        m
    }

    pub fn raw_matrix(&self) -> MatrixText {
        let mut m = MatrixText::new(["length", "sequence", "survival"]);
        for (i, row) in self.raw.iter().enumerate() {
            for (k, &s) in row.iter().enumerate() {
                m.rows.push(vec![self.lengths[i] as f64, k as f64, s]);
            }
        }
        m
    }

    pub fn fit_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set_f64("p", self.fit.p);
        r.set_f64("p_err", self.fit.p_err);
        r.set_f64("a", self.fit.a);
        r.set_f64("b", self.fit.b);
        r.set("b_fixed", self.fit.b_fixed);
        r.set_f64("fidelity", self.fidelity);
        r.set_f64("fidelity_err", self.fidelity_err);
        r.set("n_random", self.raw.first().map_or(0, Vec::len));
        r.set(
            "lengths",
            self.lengths.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "),
        );
        r
    }
}

/// Default geometric ladder 2, 4, …, 256.
pub fn default_lengths() -> Vec<usize> {
    (1..=8).map(|k| 1 << k).collect()
}

/// Runs RB on any [`SequenceSimulator`]. Sequence `k` at length index `i`
/// draws from substream `i·n_random + k` of `seed`.
pub fn run_rb_with(
    lengths: &[usize],
    n_random: usize,
    seed: u64,
    table: &CliffordTable,
    simulator: &dyn SequenceSimulator,
) -> Result<RBResult> {
    if n_random < MIN_SEQUENCES {
        return Err(Error::Validation(format!(
            "need at least {MIN_SEQUENCES} random sequences, got {n_random}"
        )));
    }
    if lengths.len() < 3 || lengths.contains(&0) {
        return Err(Error::Validation("need at least 3 positive sequence lengths".into()));
    }
    let nl = lengths.len();
    let flat = try_par_map(nl * n_random, |j| {
        let (i, _) = (j / n_random, j % n_random);
        let mut rng = substream(seed, j as u64);
        let (ids, rec) = rb_sequence(lengths[i], table, &mut rng)?;
        simulator.survival(table, &ids, rec, &mut rng)
    })?;
    let raw: Vec<Vec<f64>> = flat.chunks(n_random).map(<[f64]>::to_vec).collect();
    let n = n_random as f64;
    let mut mean = Vec::with_capacity(nl);
    let mut std = Vec::with_capacity(nl);
    for row in &raw {
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(mu);
        std.push(var.sqrt());
    }
    let m: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let sem: Vec<f64> = std.iter().map(|s| s / n.sqrt()).collect();
    let fit = fit_rb_decay(&m, &mean, Some(&sem)).map_err(|e| Error::Benchmark {
        reason: e.to_string(),
        lengths: lengths.to_vec(),
        survival: raw.clone(),
    })?;
    Ok(RBResult {
        lengths: lengths.to_vec(),
        survival_mean: mean,
        survival_std: std,
        raw,
        fidelity: 1.0 - (1.0 - fit.p) / 2.0,
        fidelity_err: fit.p_err / 2.0,
        fit,
    })
}

/// RB of the calibrated CDPQ gate set.
pub fn run_rb(
    lengths: &[usize],
    n_random: usize,
    calib: &CalibrationResult,
    noise: Option<&NoiseModel>,
    sim: &Simulator,
    seed: u64,
) -> Result<RBResult> {
    let table = build_clifford_table()?;
    let rb = CdpqRb::new(sim.clone(), calib.clone(), noise.cloned(), &table)?;
    run_rb_with(lengths, n_random, seed, &table, &rb)
}

/// `(24(t_g + t_close) + 9·2π/A_CDD)/24`: every Clifford pays one
/// equatorial gate on average and the table holds nine full periods of Z
/// waits.
pub fn avg_clifford_time(t_g: f64, t_close: f64, a_cdd: f64) -> Result<f64> {
    if !(t_g > 0.0 && t_close >= 0.0 && a_cdd > 0.0) {
        return Err(Error::Validation(format!(
            "need t_g > 0, t_close >= 0, A_CDD > 0 (got {t_g}, {t_close}, {a_cdd})"
        )));
    }
    Ok((24.0 * (t_g + t_close) + 9.0 * TAU / a_cdd) / 24.0)
}

/// Time-weighted mean over the compiled table, for comparison with
/// [`avg_clifford_time`].
pub fn compiled_clifford_time(rb: &CdpqRb) -> f64 {
    rb.schedules.iter().map(PulseSchedule::total_duration).sum::<f64>() / rb.schedules.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_builds() {
        let t = build_clifford_table().unwrap();
        assert_eq!(t.len(), 24);
        assert_eq!(t.compose(13, 14), 1);
        assert_eq!(t.inverse(4), 4);
    }

    #[test]
    fn short_sequences() {
        let t = build_clifford_table().unwrap();
        assert_eq!(t.inverse(t.net(&[13, 14])), 1);
        assert_eq!(t.inverse(t.net(&[4])), 4);
    }

    #[test]
    fn broken_table_rejected() {
        let mut els = build_clifford_table().unwrap().elements().to_vec();
        els[5].unitary = rx(0.3);
        assert!(matches!(
            CliffordTable::from_elements(els),
            Err(Error::TableIntegrity(_))
        ));
    }

    #[test]
    fn too_few_sequences_rejected() {
        let t = build_clifford_table().unwrap();
        let r = run_rb_with(&[1, 2, 4], 10, 0, &t, &DepolarizingMock::new(0.99));
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn clifford_time_limits() {
        let t = avg_clifford_time(40e-9, 0.0, 1e30).unwrap();
        assert!((t - 40e-9).abs() < 1e-20);
        assert!(avg_clifford_time(0.0, 1.0, 1.0).is_err());
    }
}
