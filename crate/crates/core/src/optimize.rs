//! One-dimensional minimizers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
/// Returns `(x_min, f(x_min))`.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Evaluates `f` on `grid`, then polishes the best cell with golden-section
/// search between its neighbours.
pub fn grid_then_golden<F>(mut f: F, grid: &[f64], tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    assert!(!grid.is_empty());
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, fx) = golden_section_min(&mut f, lo, hi, tol, 200);
    if fx <= vals[best] {
        (x, fx)
    } else {
        (grid[best], vals[best])
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section_min(|x| (x - 1.25).powi(2) + 3.0, -4.0, 9.0, 1e-10, 200);
        // a parabola pins x only to ~sqrt(machine epsilon)
        assert!((x - 1.25).abs() < 1e-6);
        assert!((fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_escapes_local_minimum() {
        let f = |x: f64| (3.0 * x).cos() + 0.1 * x;
        let grid = linspace(-3.0, 3.0, 61);
        let (x, _) = grid_then_golden(f, &grid, 1e-10);
        // global minimum near x = -π/3·3 ... check against a dense scan
        let dense = linspace(-3.0, 3.0, 600_001);
        let xd = dense.iter().copied().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((x - xd).abs() < 1e-4);
    }

    #[test]
    fn spacing_helpers() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let l = logspace(1.0, 100.0, 3);
        assert!((l[1] - 10.0).abs() < 1e-12);
    }
}
