//! Transmon and drive parameters plus every Hamiltonian the toolkit uses:
//! the lab frame, the rotating-frame RWA truncations, the ideal two-level
//! CDPQ control Hamiltonian and the approximate dressed frame.
//!
//! All Hamiltonians are `H/ħ` in rad/s. Detunings follow `Δ = ω − ω_q`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::linalg::{c, eigh_unchecked, CMatrix, Operator, StateVector, C64};
use crate::optimize::golden_section_min;

pub const TWO_PI: f64 = 2.0 * PI;

/// Validity bound of the analytic dressed transform.
pub const BETA_VALIDITY: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmonParams {
    /// ω_0 in rad/s.
    pub omega0: f64,
    /// E_C/h in Hz.
    pub e_c_over_h: f64,
    pub n_levels: usize,
}

impl TransmonParams {
    pub fn new(omega0: f64, e_c_over_h: f64, n_levels: usize) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::Validation(format!("omega0 must be positive, got {omega0}")));
        }
        if !(e_c_over_h > 0.0 && e_c_over_h.is_finite()) {
            return Err(Error::Validation(format!("E_C/h must be positive, got {e_c_over_h}")));
        }
        if !(2..=8).contains(&n_levels) {
            return Err(Error::InvalidDimension(format!(
                "n_levels must be in [2, 8], got {n_levels}"
            )));
        }
        Ok(Self {
            omega0,
            e_c_over_h,
            n_levels,
        })
    }

    /// Builds parameters from the upper-sweet-spot transition frequency
    /// `ω_0/2π − E_C/h` (Hz).
    pub fn from_uss_frequency(uss_hz: f64, e_c_over_h: f64, n_levels: usize) -> Result<Self> {
        Self::new(TWO_PI * (uss_hz + e_c_over_h), e_c_over_h, n_levels)
    }

    /// The tunable device: 4.64 GHz at the upper sweet spot, E_C/h = 137 MHz.
    pub fn reference_device() -> Self {
        Self::from_uss_frequency(4.64e9, 137e6, 3).expect("reference constants are valid")
    }

    /// E_C/ħ in rad/s.
    pub fn e_c(&self) -> f64 {
        TWO_PI * self.e_c_over_h
    }

    /// β = ħA_CDD/E_C.
    pub fn beta(&self, a_cdd: f64) -> f64 {
        a_cdd / self.e_c()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveConfig {
    /// CDD amplitude, rad/s.
    pub a_cdd: f64,
    /// Drive carrier (rad/s). `None` locks the carrier to the hybridized
    /// transition, i.e. the CDPQ sweet spot.
    pub omega_drive: Option<f64>,
    /// Flux bias Φ/Φ_0.
    pub phi: f64,
    /// Extra detuning on top of the carrier choice, rad/s.
    pub detuning_offset: f64,
}

impl DriveConfig {
    pub fn new(a_cdd: f64, omega_drive: Option<f64>, phi: f64, detuning_offset: f64) -> Result<Self> {
        let d = Self {
            a_cdd,
            omega_drive,
            phi,
            detuning_offset,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_cdd >= 0.0 && self.a_cdd.is_finite()) {
            return Err(Error::Validation(format!("A_CDD must be >= 0, got {}", self.a_cdd)));
        }
        if !(self.phi.abs() < 0.5) {
            return Err(Error::FluxOutOfRange { phi: self.phi });
        }
        if !self.detuning_offset.is_finite() {
            return Err(Error::Validation("detuning offset must be finite".into()));
        }
        Ok(())
    }

    /// Locked to the sweet spot at A_CDD/2π = 23 MHz, φ = 0.367.
    pub fn reference_drive() -> Self {
        Self {
            a_cdd: TWO_PI * 23e6,
            omega_drive: None,
            phi: 0.367,
            detuning_offset: 0.0,
        }
    }

    pub fn beta(&self, params: &TransmonParams) -> f64 {
        params.beta(self.a_cdd)
    }

    /// Lab-frame carrier frequency.
    pub fn carrier(&self, params: &TransmonParams) -> Result<f64> {
        match self.omega_drive {
            Some(w) => Ok(w + self.detuning_offset),
            None => Ok(qubit_frequency(params, self.phi)? + self.detuning_offset),
        }
    }

    /// Δ entering the rotating-frame Hamiltonians for an `n_levels` model.
    pub fn rotating_detuning(&self, params: &TransmonParams, n_levels: usize) -> Result<f64> {
        match self.omega_drive {
            Some(w) => Ok(w - qubit_frequency(params, self.phi)? + self.detuning_offset),
            None => Ok(sweet_spot_detuning(params, self.a_cdd, n_levels) + self.detuning_offset),
        }
    }
}

/// Flux-tuned transition frequency of a symmetric-SQUID transmon,
/// `ω_q = ω_0·√cos(πφ) − E_C/ħ`.
pub fn qubit_frequency(params: &TransmonParams, phi: f64) -> Result<f64> {
    let cp = (PI * phi).cos();
    if !(cp > 1e-12) || phi.abs() >= 0.5 {
        return Err(Error::FluxOutOfRange { phi });
    }
    Ok(params.omega0 * cp.sqrt() - params.e_c())
}

/// Lab-frame Hamiltonian
/// `ω_q a†a − (E_C/ħ) a†a†aa + A_CDD (a+a†) cos ωt + A(t) (a+a†) sin ωt`.
pub fn lab_hamiltonian(params: &TransmonParams, drive: &DriveConfig, a_gate: f64, t: f64) -> Result<Operator> {
    let wq = qubit_frequency(params, drive.phi)?;
    let w = drive.carrier(params)?;
    Ok(lab_hamiltonian_at(
        params.n_levels,
        wq,
        params.e_c(),
        drive.a_cdd,
        w,
        a_gate,
        t,
    ))
}

pub(crate) fn lab_hamiltonian_at(
    n: usize,
    wq: f64,
    e_c: f64,
    a_cdd: f64,
    carrier: f64,
    a_gate: f64,
    t: f64,
) -> Operator {
    let (s, co) = (carrier * t).sin_cos();
    let drive = a_cdd * co + a_gate * s;
    let mut m = CMatrix::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        // a†a†aa |k> = k(k-1) |k>
        m[(k, k)] = c(wq * kf - e_c * kf * (kf - 1.0), 0.0);
        if k + 1 < n {
            let x = drive * (kf + 1.0).sqrt();
            m[(k, k + 1)] = c(x, 0.0);
            m[(k + 1, k)] = c(x, 0.0);
        }
    }
    Operator::from_matrix_unchecked(m)
}

/// Three-level rotating-frame Hamiltonian, entry for entry:
///
/// ```text
/// ( Δ             A_CDD − iA       0               )
/// ( A_CDD + iA    −Δ               √2(A_CDD − iA)  ) / 2
/// ( 0             √2(A_CDD + iA)   −2E_C/ħ − 3Δ    )
/// ```
pub fn rwa_hamiltonian_3lvl(a_cdd: f64, a_gate: f64, delta: f64, params: &TransmonParams) -> Operator {
    let e_c = params.e_c();
    let lo = c(a_cdd, -a_gate);
    let hi = c(a_cdd, a_gate);
    let z = c(0.0, 0.0);
    let m = CMatrix::from_row_slice(
        3,
        3,
        &[
            c(delta, 0.0),
            lo,
            z,
            hi,
            c(-delta, 0.0),
            lo * SQRT_2,
            z,
            hi * SQRT_2,
            c(-2.0 * e_c - 3.0 * delta, 0.0),
        ],
    ) * c(0.5, 0.0);
    Operator::from_matrix_unchecked(m)
}

/// n-level rotating-frame RWA Hamiltonian. Diagonal `Δ/2 − kΔ − (E_C/2ħ)k(k−1)`,
/// couplings `√(k+1)(A_CDD ∓ iA)/2`. Reduces to [`rwa_hamiltonian_3lvl`] at n = 3
/// and to the bare-basis two-level RWA at n = 2.
pub fn rwa_hamiltonian(n_levels: usize, a_cdd: f64, a_gate: f64, delta: f64, params: &TransmonParams) -> Operator {
    if n_levels == 3 {
        return rwa_hamiltonian_3lvl(a_cdd, a_gate, delta, params);
    }
    let e_c = params.e_c();
    let mut m = CMatrix::zeros(n_levels, n_levels);
    for k in 0..n_levels {
        let kf = k as f64;
        m[(k, k)] = c(0.5 * delta - kf * delta - 0.5 * e_c * kf * (kf - 1.0), 0.0);
        if k + 1 < n_levels {
            let g = (kf + 1.0).sqrt() * 0.5;
            m[(k, k + 1)] = c(a_cdd, -a_gate) * g;
            m[(k + 1, k)] = c(a_cdd, a_gate) * g;
        }
    }
    Operator::from_matrix_unchecked(m)
}

/// Ideal CDPQ control Hamiltonian in the dressed two-level frame,
/// `A_CDD σz/2 + A σx/2 + Δ σy/2`.
pub fn ideal_two_level_hamiltonian(a_cdd: f64, a_gate: f64, delta: f64) -> Operator {
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[c(a_cdd, 0.0), c(a_gate, -delta), c(a_gate, delta), c(-a_cdd, 0.0)],
    ) * c(0.5, 0.0);
    Operator::from_matrix_unchecked(m)
}

/// Approximate dressed-frame Hamiltonian, entry for entry as printed:
///
/// ```text
/// ( A_CDD        −iA − Δ      iA + βΔ      )
/// ( iA − Δ       −A_CDD       iA + βΔ      ) / 2
/// ( −iA + βΔ     −iA + βΔ     −2E_C/ħ − 3Δ )
/// ```
///
/// The printed form is not exactly Hermitian for Δ ≠ 0 (the (0,1)/(1,0)
/// pair is `−iA − Δ` / `iA − Δ`); it is returned as printed.
pub fn dressed_hamiltonian(a_cdd: f64, a_gate: f64, delta: f64, params: &TransmonParams) -> Operator {
    let beta = params.beta(a_cdd);
    if beta >= BETA_VALIDITY {
        log::warn!("beta = {beta:.3} is outside the analytic dressed-frame validity range");
    }
    let e_c = params.e_c();
    let up = c(beta * delta, a_gate);
    let down = c(beta * delta, -a_gate);
    let m = CMatrix::from_row_slice(
        3,
        3,
        &[
            c(a_cdd, 0.0),
            c(-delta, -a_gate),
            up,
            c(-delta, a_gate),
            c(-a_cdd, 0.0),
            up,
            down,
            down,
            c(-2.0 * e_c - 3.0 * delta, 0.0),
        ],
    ) * c(0.5, 0.0);
    Operator::from_matrix_unchecked(m)
}

/// CDPQ splitting `√(A_CDD² + Δ²)`.
pub fn cdpq_splitting(a_cdd: f64, delta: f64) -> Result<f64> {
    if !(a_cdd > 0.0) {
        return Err(Error::Range(format!("A_CDD must be positive, got {a_cdd}")));
    }
    Ok(a_cdd.hypot(delta))
}

/// Analytic dressed-state transform (rows |−⟩, |+⟩, |f⟩ in the bare basis)
/// together with a symmetrically orthonormalized variant.
#[derive(Clone, Debug)]
pub struct DressedBasis {
    pub transform: Operator,
    pub orthonormal: Operator,
    pub beta: f64,
    pub in_validity_range: bool,
}

impl DressedBasis {
    /// Row `k` of the analytic transform as a normalized state.
    pub fn analytic_state(&self, k: usize) -> StateVector {
        row_state(&self.transform, k)
    }

    /// Row `k` of the orthonormalized transform.
    pub fn orthonormal_state(&self, k: usize) -> StateVector {
        row_state(&self.orthonormal, k)
    }
}

fn row_state(t: &Operator, k: usize) -> StateVector {
    let row: Vec<C64> = t.matrix().row(k).iter().copied().collect();
    StateVector::from_slice(&row).expect("transform rows are nonzero")
}

pub fn dressed_transform(beta: f64) -> Result<DressedBasis> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Range(format!("beta must be >= 0, got {beta}")));
    }
    let in_range = beta < BETA_VALIDITY;
    if !in_range {
        log::warn!("beta = {beta:.3} >= {BETA_VALIDITY}: analytic dressed transform is outside its validity range");
    }
    let s = FRAC_1_SQRT_2;
    let r = |x: f64| c(x, 0.0);
    let t = CMatrix::from_row_slice(
        3,
        3,
        &[
            r(s),
            r(-s),
            r(SQRT_2 * beta * beta),
            r(-s),
            r(-s),
            r(-SQRT_2 * beta),
            r(-beta),
            r(-beta),
            r(1.0),
        ],
    );
    // Löwdin: (T T†)^{-1/2} T
    let gram = &t * t.adjoint();
    let eig = eigh_unchecked(&gram);
    let v = eig.vectors.matrix();
    let mut inv_sqrt = CMatrix::zeros(3, 3);
    for (k, &lam) in eig.values.iter().enumerate() {
        let col = v.column(k);
        inv_sqrt += col * col.adjoint() * c(1.0 / lam.sqrt(), 0.0);
    }
    let ortho = inv_sqrt * &t;
    Ok(DressedBasis {
        transform: Operator::from_matrix_unchecked(t),
        orthonormal: Operator::from_matrix_unchecked(ortho),
        beta,
        in_validity_range: in_range,
    })
}

/// Numerical dressed eigenbasis of a rotating-frame Hamiltonian.
#[derive(Clone, Debug)]
pub struct DressedEigenbasis {
    /// Columns in the bare basis: |−⟩, |+⟩, then the non-computational
    /// states in ascending energy (|f⟩ first for three levels).
    pub basis: Operator,
    pub energies: Vec<f64>,
}

impl DressedEigenbasis {
    pub fn minus(&self) -> StateVector {
        StateVector::column_of(&self.basis, 0)
    }

    pub fn plus(&self) -> StateVector {
        StateVector::column_of(&self.basis, 1)
    }

    pub fn state(&self, label: DressedLabel) -> StateVector {
        match label {
            DressedLabel::Minus => self.minus(),
            DressedLabel::Plus => self.plus(),
        }
    }

    /// Splitting of the computational pair, E₊ − E₋.
    pub fn splitting(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DressedLabel {
    Minus,
    Plus,
}

impl DressedLabel {
    pub fn index(self) -> usize {
        match self {
            DressedLabel::Minus => 0,
            DressedLabel::Plus => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            DressedLabel::Minus => DressedLabel::Plus,
            DressedLabel::Plus => DressedLabel::Minus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DressedLabel::Minus => "minus",
            DressedLabel::Plus => "plus",
        }
    }
}

impl std::str::FromStr for DressedLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minus" | "-" => Ok(DressedLabel::Minus),
            "plus" | "+" => Ok(DressedLabel::Plus),
            other => Err(Error::Parse(format!("unknown dressed state '{other}'"))),
        }
    }
}

/// Picks the computational pair as the two eigenvectors with the most
/// weight in the bare {|0⟩, |1⟩} subspace. For the dressed two-level frame
/// (a 2×2 Hamiltonian) both eigenvectors are the pair.
pub fn dressed_eigenbasis(h: &Operator) -> DressedEigenbasis {
    let eig = eigh_unchecked(h.matrix());
    let n = h.dim();
    let v = eig.vectors.matrix();
    let mut idx: Vec<usize> = (0..n).collect();
    if n > 2 {
        let weight = |k: usize| v[(0, k)].norm_sqr() + v[(1, k)].norm_sqr();
        idx.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
        let (pair, rest) = idx.split_at_mut(2);
        pair.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]));
        rest.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]));
    }
    let mut basis = CMatrix::zeros(n, n);
    let mut energies = Vec::with_capacity(n);
    for (dst, &src) in idx.iter().enumerate() {
        basis.set_column(dst, &v.column(src));
        energies.push(eig.values[src]);
    }
    DressedEigenbasis {
        basis: Operator::from_matrix_unchecked(basis),
        energies,
    }
}

/// Numerical pair splitting of the rotating-frame model at gate amplitude 0.
pub fn pair_splitting(params: &TransmonParams, n_levels: usize, a_cdd: f64, delta: f64) -> f64 {
    dressed_eigenbasis(&rwa_hamiltonian(n_levels, a_cdd, 0.0, delta, params)).splitting()
}

/// Detuning that minimizes the numerical pair splitting: the hybridized
/// transition is Stark-shifted by the higher levels, so the sweet spot sits
/// away from bare resonance. Zero for a two-level truncation.
pub fn sweet_spot_detuning(params: &TransmonParams, a_cdd: f64, n_levels: usize) -> f64 {
    if n_levels <= 2 || a_cdd == 0.0 {
        return 0.0;
    }
    let span = a_cdd.max(1.0);
    let (x, _) = golden_section_min(
        |d| pair_splitting(params, n_levels, a_cdd, d),
        -span,
        span,
        1e-10 * span,
        200,
    );
    x
}
