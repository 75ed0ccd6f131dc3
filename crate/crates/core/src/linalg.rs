//! Dense complex linear algebra for the few-level Hilbert spaces used here.
//!
//! Hamiltonians are stored as `H/ħ` in rad/s. Everything is dense; the
//! largest space in use is an 8-level transmon truncation.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_RTOL: f64 = 1e-12;

/// Above this dimension the propagator uses scaling-and-squaring instead of
/// an eigendecomposition.
pub const EIGEN_EXPM_MAX_DIM: usize = 8;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A square complex matrix. Used for Hamiltonians (rad/s), unitaries and
/// basis changes alike.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDimension(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self(matrix))
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        debug_assert!(matrix.is_square());
        Self(matrix)
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(n: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidDimension(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Self(CMatrix::from_row_slice(n, n, entries)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |entry|; the scale used for relative tolerances.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_hermitian(&self, rtol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                if (self.0[(i, j)] - self.0[(j, i)].conj()).norm() > rtol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn ensure_hermitian(&self) -> Result<()> {
        if self.is_hermitian(HERMITIAN_RTOL) {
            Ok(())
        } else {
            Err(Error::Validation("operator is not Hermitian".into()))
        }
    }

    /// Upper bound on the spectral radius (max absolute row sum).
    pub fn spectral_scale(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "operator is {0}x{0}, state has {1} levels",
                self.dim(),
                psi.dim()
            )));
        }
        Ok(StateVector(&self.0 * &psi.0))
    }

    /// Similarity transform `S · self · S⁻¹`.
    pub fn similarity(&self, s: &Operator) -> Result<Self> {
        let inv =
            s.0.clone()
                .try_inverse()
                .ok_or_else(|| Error::Validation("singular transform".into()))?;
        Ok(Self(&s.0 * &self.0 * inv))
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

/// A pure state; amplitudes are dimensionless.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    /// Wraps amplitudes after normalizing them.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Validation("state vector has zero or non-finite norm".into()));
        }
        Ok(Self(amplitudes / c(norm, 0.0)))
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut v = CVector::zeros(n);
        v[index] = c(1.0, 0.0);
        Self(v)
    }

    /// Column `index` of a basis matrix.
    pub fn column_of(basis: &Operator, index: usize) -> Self {
        Self(basis.matrix().column(index).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// min over φ of ‖self − e^{iφ}·other‖ for unit vectors.
    pub fn phase_distance(&self, other: &StateVector) -> f64 {
        let ov = self.inner(other).norm();
        (2.0 - 2.0 * ov).max(0.0).sqrt()
    }
}

pub fn pauli_x() -> Operator {
    Operator::from_matrix_unchecked(CMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
    ))
}

pub fn pauli_y() -> Operator {
    Operator::from_matrix_unchecked(CMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
    ))
}

pub fn pauli_z() -> Operator {
    Operator::diagonal(&[1.0, -1.0])
}

/// `exp(−iθ n·σ/2)` for a unit axis `n`.
pub fn rotation(axis: [f64; 3], angle: f64) -> Operator {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [nx, ny, nz] = axis.map(|x| x / norm);
    let (s, co) = (0.5 * angle).sin_cos();
    Operator(CMatrix::from_row_slice(
        2,
        2,
        &[c(co, -s * nz), c(-s * ny, -s * nx), c(s * ny, -s * nx), c(co, s * nz)],
    ))
}

pub fn rx(angle: f64) -> Operator {
    rotation([1.0, 0.0, 0.0], angle)
}

pub fn ry(angle: f64) -> Operator {
    rotation([0.0, 1.0, 0.0], angle)
}

pub fn rz(angle: f64) -> Operator {
    rotation([0.0, 0.0, 1.0], angle)
}

/// Rotation axis and angle of a 2×2 unitary, ignoring global phase.
/// The angle is in `[0, π]` after choosing the axis sign.
pub fn su2_axis_angle(u: &Operator) -> ([f64; 3], f64) {
    let m = u.matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let g = det.sqrt();
    let v = m / g;
    // v = cos(θ/2)·1 − i sin(θ/2) n·σ
    let mut a0 = 0.5 * (v[(0, 0)] + v[(1, 1)]).re;
    let mut nz = -0.5 * (v[(0, 0)] - v[(1, 1)]).im;
    let mut nx = -0.5 * (v[(0, 1)] + v[(1, 0)]).im;
    let mut ny = 0.5 * (v[(1, 0)] - v[(0, 1)]).re;
    if a0 < 0.0 {
        a0 = -a0;
        nx = -nx;
        ny = -ny;
        nz = -nz;
    }
    let s = (nx * nx + ny * ny + nz * nz).sqrt();
    let angle = 2.0 * s.atan2(a0);
    if s < 1e-15 {
        return ([0.0, 0.0, 1.0], 0.0);
    }
    ([nx / s, ny / s, nz / s], angle)
}

/// Euler angles with `U ∝ R_z(α)·R_y(θ)·R_z(β)`.
pub fn su2_zyz(u: &Operator) -> (f64, f64, f64) {
    let m = u.matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let v = m / det.sqrt();
    // v00 = cos(θ/2) e^{−i(α+β)/2}, v10 = sin(θ/2) e^{i(α−β)/2}
    let theta = 2.0 * v[(1, 0)].norm().atan2(v[(0, 0)].norm());
    let sum = -2.0 * v[(0, 0)].arg();
    let diff = 2.0 * v[(1, 0)].arg();
    let (alpha, beta) = if v[(1, 0)].norm() < 1e-14 {
        (sum, 0.0)
    } else if v[(0, 0)].norm() < 1e-14 {
        (diff, 0.0)
    } else {
        (0.5 * (sum + diff), 0.5 * (sum - diff))
    };
    (alpha, theta, beta)
}

/// Phase-invariant overlap `|tr(U†V)|/d`; 1 for equal unitaries.
pub fn phase_invariant_overlap(u: &Operator, v: &Operator) -> f64 {
    let d = u.dim() as f64;
    (u.matrix().adjoint() * v.matrix()).trace().norm() / d
}

#[derive(Clone, Debug)]
pub struct Ladder {
    pub lowering: Operator,
    pub raising: Operator,
    pub number: Operator,
}

/// Truncated harmonic-oscillator ladder operators, `a[i, i+1] = √(i+1)`.
pub fn ladder_operators(n_levels: usize) -> Result<Ladder> {
    if n_levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "ladder operators need at least 2 levels, got {n_levels}"
        )));
    }
    let mut a = CMatrix::zeros(n_levels, n_levels);
    for i in 0..n_levels - 1 {
        a[(i, i + 1)] = c(((i + 1) as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    let number = &adag * &a;
    Ok(Ladder {
        lowering: Operator(a),
        raising: Operator(adag),
        number: Operator(number),
    })
}

/// Eigenpairs of a Hermitian operator, eigenvalues ascending, eigenvectors
/// as columns with their largest-magnitude component real and positive.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Operator,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> StateVector {
        StateVector::column_of(&self.vectors, k)
    }

    /// V · diag(λ) · V†
    pub fn reconstruct(&self) -> Operator {
        let v = self.vectors.matrix();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&x| c(x, 0.0)),
        ));
        Operator(v * d * v.adjoint())
    }
}

pub fn eigendecompose(h: &Operator) -> Result<Eigen> {
    h.ensure_hermitian()?;
    Ok(eigh_unchecked(h.matrix()))
}

pub(crate) fn eigh_unchecked(h: &CMatrix) -> Eigen {
    let n = h.nrows();
    // symmetrize so round-off in the caller cannot leak into the solver
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    let se = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(se.eigenvalues[src]);
        let mut col = se.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Eigen {
        values,
        vectors: Operator(vectors),
    }
}

/// Rotates the global phase so the largest-magnitude entry is real positive.
/// Near-ties resolve to the lowest index.
pub fn fix_phase(v: &mut CVector) {
    let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap_or(0);
    let z = v[pivot];
    let phase = z.conj() / z.norm();
    for x in v.iter_mut() {
        *x *= phase;
    }
}

/// exp(−i·H·dt) for a Hermitian H.
pub fn unitary_step(h: &Operator, dt: f64) -> Operator {
    Operator(expm_hermitian(h.matrix(), dt))
}

pub(crate) fn expm_hermitian(h: &CMatrix, dt: f64) -> CMatrix {
    let n = h.nrows();
    if n == 2 {
        return expm_2x2(h, dt);
    }
    if n <= EIGEN_EXPM_MAX_DIM {
        let eig = eigh_unchecked(h);
        let v = eig.vectors.matrix();
        let phases = CVector::from_iterator(n, eig.values.iter().map(|&e| (-I * e * dt).exp()));
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        scaled * v.adjoint()
    } else {
        (h * (-I * dt)).exp()
    }
}

// closed form for 2x2 Hermitian: H = h0·1 + h·σ
fn expm_2x2(h: &CMatrix, dt: f64) -> CMatrix {
    let h0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let hz = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let hx = 0.5 * (h[(0, 1)].re + h[(1, 0)].re);
    let hy = 0.5 * (h[(1, 0)].im - h[(0, 1)].im);
    let norm = (hx * hx + hy * hy + hz * hz).sqrt();
    let theta = norm * dt;
    let (s, co) = theta.sin_cos();
    let g = (-I * h0 * dt).exp();
    if norm == 0.0 {
        return CMatrix::identity(2, 2) * g;
    }
    let (nx, ny, nz) = (hx / norm, hy / norm, hz / norm);
    // cos θ − i sin θ (n·σ)
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[c(co, -s * nz), c(-s * ny, -s * nx), c(s * ny, -s * nx), c(co, s * nz)],
    );
    m * g
}

/// Default step: 1/(200·spectral scale) of the largest Hamiltonian sample.
pub fn default_dt(samples: &[Operator]) -> f64 {
    let scale = samples.iter().map(Operator::spectral_scale).fold(0.0, f64::max);
    if scale == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (200.0 * scale)
    }
}

fn validate_samples(h_of_t: &[Operator], dt: f64, psi0: &StateVector) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    for (k, h) in h_of_t.iter().enumerate() {
        if h.dim() != psi0.dim() {
            return Err(Error::InvalidDimension(format!(
                "sample {k} is {0}x{0}, state has {1} levels",
                h.dim(),
                psi0.dim()
            )));
        }
        if !h.is_hermitian(HERMITIAN_RTOL) {
            return Err(Error::Validation(format!("sample {k} is not Hermitian")));
        }
    }
    Ok(())
}

/// Piecewise-constant propagation: each sample is held for `dt`.
/// The returned trajectory starts with `psi0` and has `len + 1` states.
pub fn propagate(h_of_t: &[Operator], dt: f64, psi0: &StateVector) -> Result<Vec<StateVector>> {
    validate_samples(h_of_t, dt, psi0)?;
    let mut out = Vec::with_capacity(h_of_t.len() + 1);
    out.push(psi0.clone());
    let mut psi = psi0.0.clone();
    for h in h_of_t {
        psi = expm_hermitian(h.matrix(), dt) * psi;
        out.push(StateVector(psi.clone()));
    }
    Ok(out)
}

/// Same as [`propagate`] but only returns the final state.
pub fn propagate_final(h_of_t: &[Operator], dt: f64, psi0: &StateVector) -> Result<StateVector> {
    validate_samples(h_of_t, dt, psi0)?;
    let mut psi = psi0.0.clone();
    for h in h_of_t {
        psi = expm_hermitian(h.matrix(), dt) * psi;
    }
    Ok(StateVector(psi))
}

/// Time-ordered product of step propagators for `H(t)` sampled at the
/// midpoints of `steps` equal slices of `[t0, t1]`.
pub fn evolution_operator<F>(h_of_t: F, t0: f64, t1: f64, steps: usize) -> Operator
where
    F: Fn(f64) -> Operator,
{
    let dt = (t1 - t0) / steps as f64;
    let mut u: Option<CMatrix> = None;
    for k in 0..steps {
        let t = t0 + (k as f64 + 0.5) * dt;
        let step = expm_hermitian(h_of_t(t).matrix(), dt);
        u = Some(match u {
            None => step,
            Some(prev) => step * prev,
        });
    }
    match u {
        Some(m) => Operator(m),
        None => Operator::identity(h_of_t(t0).dim()),
    }
}

/// Measurement probabilities of `psi` in the columns of `basis`
/// (computational basis when `None`).
pub fn populations(psi: &StateVector, basis: Option<&Operator>) -> Result<Vec<f64>> {
    match basis {
        None => Ok(psi.0.iter().map(|z| z.norm_sqr()).collect()),
        Some(b) => {
            if b.dim() != psi.dim() {
                return Err(Error::InvalidDimension(format!(
                    "basis is {0}x{0}, state has {1} levels",
                    b.dim(),
                    psi.dim()
                )));
            }
            let gram = b.matrix().adjoint() * b.matrix();
            let off = (&gram - CMatrix::identity(b.dim(), b.dim()))
                .iter()
                .fold(0.0_f64, |m, z| m.max(z.norm()));
            if off > 1e-9 {
                return Err(Error::Validation(format!(
                    "basis columns are not orthonormal (max deviation {off:.2e})"
                )));
            }
            let amps = b.matrix().adjoint() * &psi.0;
            Ok(amps.iter().map(|z| z.norm_sqr()).collect())
        }
    }
}

/// 1 − |tr(U†V)/d|², insensitive to global phase.
pub fn trace_infidelity(u: &Operator, v: &Operator) -> f64 {
    let d = u.dim() as f64;
    let tr = (u.matrix().adjoint() * v.matrix()).trace();
    1.0 - (tr / d).norm_sqr()
}
