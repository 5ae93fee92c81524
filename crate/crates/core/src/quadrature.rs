//! Quadrature rules: Gauss–Hermite nodes for standard normal increments and
//! composite Simpson integration for Gaussian reference values.

use crate::{Error, Result};

/// Nodes and weights of the `q`-point Gauss–Hermite rule for the standard
/// normal law (probabilists' convention): `Σ w_k f(z_k) ≈ E[f(Z)]`, `Z ~ N(0,1)`.
/// Nodes are returned ascending and exactly symmetric.
pub fn gauss_hermite(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 || q > 200 {
        return Err(Error::argument(format!(
            "Gauss–Hermite order must be in 1..=200, got {q}"
        )));
    }
    // Physicists' roots by Newton iteration on the orthonormal recurrence,
    // then z = √2·x, w = w_phys/√π.
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = q.div_ceil(2);
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let nf = q as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..q {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical(format!(
                "Gauss–Hermite root {i} of order {q} did not converge"
            )));
        }
        x[i] = z;
        x[q - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[q - 1 - i] = w[i];
    }
    if q % 2 == 1 {
        x[m - 1] = 0.0;
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
    nodes.reverse();
    weights.reverse();
    // Renormalise away the last ulp so Σw = 1.
    let total: f64 = weights.iter().sum();
    for v in &mut weights {
        *v /= total;
    }
    Ok((nodes, weights))
}

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let x = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[f(σ√t Z)]` for `Z ~ N(0,1)`, integrated piecewise with a break at 0 so
/// kinks at the origin stay on a panel boundary.
pub fn normal_expectation(f: impl Fn(f64) -> f64, sigma: f64, t: f64) -> f64 {
    let s = sigma * t.sqrt();
    let g = |z: f64| f(s * z) * normal_pdf(z);
    simpson(g, -12.0, 0.0, 24_000) + simpson(g, 0.0, 12.0, 24_000)
}

/// `E[f(S_t − B_t, S_t)]` for a classical Brownian motion with volatility
/// `σ`, from the joint density of drawdown `y` and running maximum `s`:
/// `2(y+s)/√(2πσ⁶t³) · exp(−(y+s)²/(2σ²t))` on `y, s ≥ 0`.
pub fn reflected_joint_expectation(f: impl Fn(f64, f64) -> f64, sigma: f64, t: f64) -> f64 {
    let v = sigma * sigma * t;
    let norm = 2.0 / (2.0 * std::f64::consts::PI * v * v * v).sqrt();
    let upper = 10.0 * v.sqrt();
    simpson(
        |s| {
            simpson(
                |y| {
                    let r = y + s;
                    f(y, s) * norm * r * (-r * r / (2.0 * v)).exp()
                },
                0.0,
                upper,
                600,
            )
        },
        0.0,
        upper,
        600,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_moments() {
        for q in [1, 2, 3, 8, 16, 40] {
            let (z, w) = gauss_hermite(q).unwrap();
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(w.iter().all(|&v| v > 0.0));
            for k in 0..q {
                assert_eq!(z[k], -z[q - 1 - k]);
            }
            assert!(z.windows(2).all(|p| p[0] < p[1]));
            if q >= 2 {
                let m2: f64 = z.iter().zip(&w).map(|(z, w)| w * z * z).sum();
                assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-12);
            }
            if q >= 3 {
                let m4: f64 = z.iter().zip(&w).map(|(z, w)| w * z.powi(4)).sum();
                assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-11);
            }
        }
        assert!(gauss_hermite(0).is_err());
    }

    #[test]
    fn normal_expectation_of_abs() {
        let v = normal_expectation(f64::abs, 1.0, 1.0);
        assert_abs_diff_eq!(v, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-10);
        let c = normal_expectation(f64::cos, 1.0, 1.0);
        assert_abs_diff_eq!(c, (-0.5f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn joint_density_marginals() {
        // E[S] = E[|B|] and the density integrates to one.
        let mass = reflected_joint_expectation(|_, _| 1.0, 1.0, 1.0);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
        let es = reflected_joint_expectation(|_, s| s, 1.0, 1.0);
        assert_abs_diff_eq!(es, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-7);
        let ey = reflected_joint_expectation(|y, _| y, 1.0, 1.0);
        assert_abs_diff_eq!(ey, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-7);
    }
}
