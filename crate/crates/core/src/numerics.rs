//! Small dense helpers shared by the path and solver code.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Step used for central differences of first derivatives.
pub fn fd_step_first(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Step used for Hessians and Jacobians: `1e-4 * max(1, |v|)`.
pub fn fd_step_second(v: &[f64]) -> f64 {
    1e-4 * norm(v).max(1.0)
}

/// Solves a symmetric tridiagonal system with constant diagonal `a` and
/// off-diagonal `b` (Thomas algorithm). Overwrites `rhs` with the solution.
pub fn solve_const_tridiagonal(a: f64, b: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut denom = a;
    c[0] = b / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = a - b * c[i - 1];
        c[i] = b / denom;
        rhs[i] = (rhs[i] - b * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let n = 7;
        let (a, b) = (2.5, -1.0);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.3).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = a * x_true[i];
            if i > 0 {
                rhs[i] += b * x_true[i - 1];
            }
            if i + 1 < n {
                rhs[i] += b * x_true[i + 1];
            }
        }
        solve_const_tridiagonal(a, b, &mut rhs);
        for i in 0..n {
            assert!((rhs[i] - x_true[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 2.0).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s - 0.5).abs() < 1e-14 && (c + 2.0).abs() < 1e-14);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
