//! Separable least squares: one nonlinear parameter found by grid search
//! plus golden-section polish, the remaining (linear) parameters solved
//! exactly at each trial value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optimize::{grid_then_golden, linspace, logspace};

struct Linear {
    coef: Vec<f64>,
    ssr: f64,
}

fn weighted_lstsq(cols: &[Vec<f64>], y: &[f64], w: Option<&[f64]>) -> Option<Linear> {
    let n = y.len();
    let k = cols.len();
    let sw: Vec<f64> = match w {
        Some(w) => w.iter().map(|x| x.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let a = DMatrix::from_fn(n, k, |i, j| cols[j][i] * sw[i]);
    let b = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-12).ok()?;
    let r = &a * &x - &b;
    let ssr = r.norm_squared();
    if !ssr.is_finite() {
        return None;
    }
    Some(Linear {
        coef: x.iter().copied().collect(),
        ssr,
    })
}

/// Covariance `(JᵀWJ)⁻¹·s²` of all parameters. With weights the scale
/// `s²` is 1 (weights are inverse variances); without, it is the residual
/// variance.
fn covariance(jac: &DMatrix<f64>, w: Option<&[f64]>, ssr: f64) -> Option<DMatrix<f64>> {
    let (n, k) = jac.shape();
    let wj = match w {
        Some(w) => DMatrix::from_fn(n, k, |i, j| jac[(i, j)] * w[i]),
        None => jac.clone(),
    };
    let jtj = jac.transpose() * wj;
    let inv = jtj.try_inverse()?;
    let s2 = match w {
        Some(_) => 1.0,
        None if n > k => ssr / (n - k) as f64,
        None => 0.0,
    };
    Some(inv * s2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayModel {
    /// a·exp(−t/T) + c
    Exponential,
    /// a·exp(−(t/T)²) + c
    Gaussian,
}

impl DecayModel {
    pub fn shape(self, t: f64, t2: f64) -> f64 {
        match self {
            DecayModel::Exponential => (-t / t2).exp(),
            DecayModel::Gaussian => (-(t / t2).powi(2)).exp(),
        }
    }

    fn d_shape_d_t2(self, t: f64, t2: f64) -> f64 {
        match self {
            DecayModel::Exponential => (-t / t2).exp() * t / (t2 * t2),
            DecayModel::Gaussian => (-(t / t2).powi(2)).exp() * 2.0 * t * t / (t2 * t2 * t2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for DecayModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(DecayModel::Exponential),
            "gaussian" | "gauss" => Ok(DecayModel::Gaussian),
            other => Err(Error::Parse(format!("unknown decay model '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub t2: f64,
    pub t2_err: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

/// Smallest survival drop across the delay window that counts as a decay.
pub const MIN_VISIBLE_DECAY: f64 = 1e-3;

pub fn fit_decay(t: &[f64], y: &[f64], model: DecayModel) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidDimension("delays and samples differ in length".into()));
    }
    if t.len() < 5 {
        return Err(Error::Fit {
            reason: format!("need at least 5 points, got {}", t.len()),
            residual: f64::NAN,
        });
    }
    let t_max = t.iter().copied().fold(f64::MIN, f64::max);
    let t_min = t.iter().copied().fold(f64::MAX, f64::min);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::Fit {
            reason: "delays do not span a range".into(),
            residual: f64::NAN,
        });
    }
    let cols = |t2: f64| {
        vec![
            t.iter().map(|&x| model.shape(x, t2)).collect::<Vec<_>>(),
            vec![1.0; t.len()],
        ]
    };
    let ssr = |ln_t2: f64| weighted_lstsq(&cols(ln_t2.exp()), y, None).map_or(f64::INFINITY, |l| l.ssr);
    let grid: Vec<f64> = logspace(span / 500.0, span * 100.0, 400)
        .into_iter()
        .map(f64::ln)
        .collect();
    let (ln_t2, best) = grid_then_golden(ssr, &grid, 1e-10);
    let t2 = ln_t2.exp();
    let lin = weighted_lstsq(&cols(t2), y, None).ok_or_else(|| Error::Fit {
        reason: "singular design".into(),
        residual: f64::NAN,
    })?;
    let (a, c0) = (lin.coef[0], lin.coef[1]);
    let rms = (best / t.len() as f64).sqrt();
    let visible = (a * (model.shape(t_min, t2) - model.shape(t_max, t2))).abs();
    let at_edge = ln_t2 >= grid[grid.len() - 2];
    if at_edge || visible <= (3.0 * rms).max(MIN_VISIBLE_DECAY) {
        return Err(Error::Fit {
            reason: "no decay resolved over the delay range".into(),
            residual: rms,
        });
    }
    let jac = DMatrix::from_fn(t.len(), 3, |i, j| match j {
        0 => model.shape(t[i], t2),
        1 => a * model.d_shape_d_t2(t[i], t2),
        _ => 1.0,
    });
    let t2_err = covariance(&jac, None, best)
        .map(|cov| cov[(1, 1)].max(0.0).sqrt())
        .unwrap_or(f64::NAN);
    Ok(DecayFit {
        model,
        t2,
        t2_err,
        amplitude: a,
        offset: c0,
        rms_residual: rms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidFit {
    /// Angular frequency, rad per unit of `t`.
    pub omega: f64,
    pub amplitude: f64,
    /// y = offset + amplitude·cos(ω t + phase)
    pub phase: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

impl SinusoidFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).cos()
    }

    /// Peak-to-peak contrast of the fitted oscillation.
    pub fn contrast(&self) -> f64 {
        2.0 * self.amplitude
    }
}

/// Fits a single sinusoid with frequency searched in `[omega_lo, omega_hi]`.
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega_lo: f64, omega_hi: f64) -> Result<SinusoidFit> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::Fit {
            reason: "need at least 4 samples".into(),
            residual: f64::NAN,
        });
    }
    let t_max = t.iter().copied().fold(f64::MIN, f64::max);
    let t_min = t.iter().copied().fold(f64::MAX, f64::min);
    let span = (t_max - t_min).max(f64::MIN_POSITIVE);
    let cols = |w: f64| {
        vec![
            t.iter().map(|&x| (w * x).cos()).collect::<Vec<_>>(),
            t.iter().map(|&x| (w * x).sin()).collect::<Vec<_>>(),
            vec![1.0; t.len()],
        ]
    };
    let ssr = |w: f64| weighted_lstsq(&cols(w), y, None).map_or(f64::INFINITY, |l| l.ssr);
    // ~10 grid points per 2π/span of frequency
    let n = (((omega_hi - omega_lo) * span / (2.0 * std::f64::consts::PI)) * 10.0).ceil() as usize;
    let grid = linspace(omega_lo, omega_hi, n.clamp(200, 200_000));
    let (omega, best) = grid_then_golden(ssr, &grid, 1e-12 * omega_hi.abs().max(1.0));
    let lin = weighted_lstsq(&cols(omega), y, None).ok_or_else(|| Error::Fit {
        reason: "singular design".into(),
        residual: f64::NAN,
    })?;
    let (a, b, c0) = (lin.coef[0], lin.coef[1], lin.coef[2]);
    Ok(SinusoidFit {
        omega,
        amplitude: a.hypot(b),
        phase: (-b).atan2(a),
        offset: c0,
        rms_residual: (best / t.len() as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbFit {
    pub p: f64,
    pub p_err: f64,
    pub a: f64,
    pub b: f64,
    /// True when the asymptote had to be pinned at 1/2 because the decay was
    /// too shallow to separate A from B.
    pub b_fixed: bool,
}

/// Fits `A·pᵐ + B` to mean survivals, weighted by `1/σ²` when `sigma` is given.
pub fn fit_rb_decay(m: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<RbFit> {
    if m.len() != y.len() || m.len() < 3 {
        return Err(Error::Fit {
            reason: "need at least 3 sequence lengths".into(),
            residual: f64::NAN,
        });
    }
    let w: Option<Vec<f64>> = sigma.map(|s| s.iter().map(|&x| 1.0 / x.max(1e-6).powi(2)).collect());
    let wref = w.as_deref();
    // p = 1 − exp(−u)
    let grid: Vec<f64> = linspace(0.3, 22.0, 800);
    let p_of = |u: f64| 1.0 - (-u).exp();

    let free_cols = |p: f64| vec![m.iter().map(|&k| p.powf(k)).collect::<Vec<_>>(), vec![1.0; m.len()]];
    let ssr_free = |u: f64| weighted_lstsq(&free_cols(p_of(u)), y, wref).map_or(f64::INFINITY, |l| l.ssr);
    let (u, best) = grid_then_golden(ssr_free, &grid, 1e-12);
    let p = p_of(u);
    let lin = weighted_lstsq(&free_cols(p), y, wref);
    let m_max = m.iter().copied().fold(0.0, f64::max);

    // a shallow decay lets a tiny A trade off against B near 1
    let free_ok = match &lin {
        Some(l) => {
            let (a, b) = (l.coef[0], l.coef[1]);
            (0.2..=1.05).contains(&a) && (-0.05..=0.8).contains(&b) && p.powf(m_max) < 0.8
        }
        None => false,
    };
    if free_ok {
        let l = lin.expect("checked above");
        let (a, b) = (l.coef[0], l.coef[1]);
        let jac = DMatrix::from_fn(m.len(), 3, |i, j| match j {
            0 => p.powf(m[i]),
            1 => a * m[i] * p.powf(m[i] - 1.0),
            _ => 1.0,
        });
        let p_err = covariance(&jac, wref, best)
            .map(|cov| cov[(1, 1)].max(0.0).sqrt())
            .unwrap_or(f64::NAN);
        return Ok(RbFit {
            p,
            p_err,
            a,
            b,
            b_fixed: false,
        });
    }

    // shallow decay: pin the single-qubit asymptote B = 1/2
    let shifted: Vec<f64> = y.iter().map(|v| v - 0.5).collect();
    let fixed_cols = |p: f64| vec![m.iter().map(|&k| p.powf(k)).collect::<Vec<_>>()];
    let ssr_fixed = |u: f64| weighted_lstsq(&fixed_cols(p_of(u)), &shifted, wref).map_or(f64::INFINITY, |l| l.ssr);
    let (u, best) = grid_then_golden(ssr_fixed, &grid, 1e-12);
    let p = p_of(u);
    let l = weighted_lstsq(&fixed_cols(p), &shifted, wref).ok_or_else(|| Error::Fit {
        reason: "singular design".into(),
        residual: f64::NAN,
    })?;
    let a = l.coef[0];
    if !(a > 0.0) {
        return Err(Error::Fit {
            reason: "survival does not decay towards 1/2".into(),
            residual: (best / m.len() as f64).sqrt(),
        });
    }
    let jac = DMatrix::from_fn(m.len(), 2, |i, j| match j {
        0 => p.powf(m[i]),
        _ => a * m[i] * p.powf(m[i] - 1.0),
    });
    let p_err = covariance(&jac, wref, best)
        .map(|cov| cov[(1, 1)].max(0.0).sqrt())
        .unwrap_or(f64::NAN);
    Ok(RbFit {
        p,
        p_err,
        a,
        b: 0.5,
        b_fixed: true,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
