//! Gamma density, orthonormal Laguerre and Hermite polynomials, Bessel
//! functions and the analytic constants of the Riesz kernel.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Result};
use crate::quad::tanh_sinh;

pub fn gamma_density(u: f64, beta: f64) -> Result<f64> {
    if !(u > 0.0) || !(beta > 0.0) {
        return domain(format!("gamma density needs u > 0 and beta > 0 (u={u}, beta={beta})"));
    }
    Ok(((beta - 1.0) * u.ln() - u - ln_gamma(beta)).exp())
}

/// Orthonormal generalized Laguerre polynomials for the Gamma(β) weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreBasis {
    pub beta: f64,
    pub k_max: usize,
}

impl LaguerreBasis {
    pub fn new(beta: f64, k_max: usize) -> Result<Self> {
        if !(beta > 0.0) {
            return domain(format!("laguerre basis needs beta > 0, got {beta}"));
        }
        Ok(LaguerreBasis { beta, k_max })
    }

    /// e_0(u), ..., e_{k_max}(u) by the three-term recurrence, normalized on the fly.
    pub fn eval_all(&self, u: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k_max + 1);
        self.eval_into(u, &mut out);
        out
    }

    pub fn eval_into(&self, u: f64, out: &mut Vec<f64>) {
        out.clear();
        let b = self.beta;
        out.push(1.0);
        if self.k_max == 0 {
            return;
        }
        // work with ẽ_k = e_k directly: L_k^{(b-1)} scaled by sqrt(k! Γ(b) / Γ(b+k))
        let mut prev = 1.0;
        let mut cur = (b - u) / b.sqrt();
        out.push(cur);
        for k in 1..self.k_max {
            let kf = k as f64;
            // L_{k+1} = ((2k+b-u) L_k - (k+b-1) L_{k-1}) / (k+1)
            let s_next = ((kf + 1.0) * (b + kf)).sqrt();
            let s_prev = (kf * (b + kf - 1.0)).sqrt();
            let next = ((2.0 * kf + b - u) * cur - s_prev * prev) / s_next;
            prev = cur;
            cur = next;
            out.push(cur);
        }
    }

    pub fn eval(&self, k: usize, u: f64) -> f64 {
        LaguerreBasis { beta: self.beta, k_max: k }.eval_all(u)[k]
    }
}

pub fn laguerre_e(k: i64, beta: f64, u: f64) -> Result<f64> {
    if k < 0 {
        return domain(format!("laguerre order must be non-negative, got {k}"));
    }
    Ok(LaguerreBasis::new(beta, k as usize)?.eval(k as usize, u))
}

/// Probabilists' Hermite polynomial He_k(u).
pub fn hermite(k: usize, u: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, u);
    if k == 0 {
        return 1.0;
    }
    for j in 1..k {
        let h2 = u * h1 - j as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Upper end of the quadrature range for the Gamma(β) weight.
pub fn gamma_upper(beta: f64) -> f64 {
    beta + 40.0 * beta.sqrt() + 40.0
}

/// Same rule for an integrand growing like u^degree: the tail of
/// u^{degree} p_β behaves like a Gamma(β + degree) tail.
pub fn gamma_upper_for(beta: f64, degree: usize) -> f64 {
    gamma_upper(beta + degree as f64)
}

/// ∫ g(u) p_β(u) du over (0, ∞). For β < 1 the integrable singularity at the
/// origin is removed by the substitution u = t^{1/β} on (0, 1).
pub fn gamma_expectation<G: Fn(f64) -> f64>(g: G, beta: f64, rel_tol: f64) -> crate::quad::QuadResult {
    gamma_expectation_deg(g, beta, 0, rel_tol)
}

/// As [`gamma_expectation`] for integrands of polynomial growth `degree`.
pub fn gamma_expectation_deg<G: Fn(f64) -> f64>(g: G, beta: f64, degree: usize, rel_tol: f64) -> crate::quad::QuadResult {
    let upper = gamma_upper_for(beta, degree);
    let lg = ln_gamma(beta);
    let abs_tol = 1e-15;
    if beta >= 1.0 {
        // Kronrod nodes never touch the endpoints, so u = 0 is not evaluated
        let f = |u: f64| g(u) * ((beta - 1.0) * u.ln() - u - lg).exp();
        let pts = [0.0, beta.max(1.0), 2.0 * beta + 10.0, 2.0 * (beta + degree as f64) + 30.0, upper];
        crate::quad::integrate_pts(f, &pts, abs_tol, rel_tol, 4000)
    } else {
        // ∫_0^1: u = t^{1/β}, du·u^{β-1} = dt/β
        let inner = |t: f64| {
            let u = t.powf(1.0 / beta);
            g(u) * (-u - lg).exp() / beta
        };
        let a = crate::quad::integrate_pts(inner, &[0.0, 0.5, 1.0], abs_tol, rel_tol, 4000);
        let outer = |u: f64| g(u) * ((beta - 1.0) * u.ln() - u - lg).exp();
        let b = crate::quad::integrate_pts(outer, &[1.0, 10.0, 2.0 * degree as f64 + 30.0, upper], abs_tol, rel_tol, 4000);
        crate::quad::QuadResult {
            value: a.value + b.value,
            abs_err: a.abs_err + b.abs_err,
            converged: a.converged && b.converged,
        }
    }
}

fn ln_bessel_i_series(rho: f64, z: f64) -> f64 {
    // all terms positive, so the sum is well-conditioned for any z that does not overflow
    let half = 0.5 * z;
    let q = half * half;
    let mut term = 1.0;
    let mut sum = term;
    for k in 1..1000 {
        let kf = k as f64;
        term *= q / (kf * (kf + rho));
        sum += term;
        if kf > half && term < 1e-17 * sum {
            break;
        }
    }
    rho * half.ln() - ln_gamma(rho + 1.0) + sum.ln()
}

/// Large-argument expansion; None when it does not reach full precision.
fn ln_bessel_i_asymptotic(rho: f64, z: f64) -> Option<f64> {
    let mu = 4.0 * rho * rho;
    let mut term = 1.0f64;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * z);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return Some(z - 0.5 * (2.0 * PI * z).ln() + sum.ln());
        }
    }
    None
}

/// ln ∫_{-1}^{1} (1-t²)^{ρ-1/2} e^{z(t-1)} dt, for ρ > -1/2.
fn ln_bessel_integral_scaled(rho: f64, z: f64) -> f64 {
    let p = rho - 0.5;
    let r = tanh_sinh(
        |_t, dl, dr| (dl * dr).powf(p) * (-z * dr).exp(),
        -1.0,
        1.0,
        1e-14,
    );
    r.value.ln()
}

const SERIES_MAX_Z: f64 = 40.0;

/// ln I_ρ(z) for ρ > -1 and z > 0.
pub fn ln_bessel_i(rho: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return domain(format!("bessel_i needs z > 0, got {z}"));
    }
    if !(rho > -1.0) {
        return domain(format!("bessel_i order must exceed -1, got {rho}"));
    }
    if z <= SERIES_MAX_Z {
        return Ok(ln_bessel_i_series(rho, z));
    }
    if let Some(v) = ln_bessel_i_asymptotic(rho, z) {
        return Ok(v);
    }
    if rho < 0.5 {
        // the integrand is singular at ±1 for ρ < 1/2; step up instead:
        // I_ρ = I_{ρ+2} + (2(ρ+1)/z) I_{ρ+1}, a sum of positive terms
        let a = ln_bessel_i(rho + 2.0, z)?;
        let b = ln_bessel_i(rho + 1.0, z)? + (2.0 * (rho + 1.0) / z).ln();
        let m = a.max(b);
        return Ok(m + ((a - m).exp() + (b - m).exp()).ln());
    }
    Ok(rho * (0.5 * z).ln() - 0.5 * PI.ln() - ln_gamma(rho + 0.5) + ln_bessel_integral_scaled(rho, z) + z)
}

pub fn bessel_i(rho: f64, z: f64) -> Result<f64> {
    Ok(ln_bessel_i(rho, z)?.exp())
}

/// Bessel J of order `two_nu / 2` (integer or half-integer), x ≥ 0.
pub fn bessel_j_half(two_nu: u32, x: f64) -> f64 {
    let nu = two_nu as f64 / 2.0;
    if x == 0.0 {
        return if two_nu == 0 { 1.0 } else { 0.0 };
    }
    if x < 1.0 + nu {
        // ascending series is well-conditioned here
        let q = -0.25 * x * x;
        let mut term = (0.5 * x).powf(nu) / gamma(nu + 1.0);
        let mut sum = term;
        for k in 1..80 {
            let kf = k as f64;
            term *= q / (kf * (kf + nu));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    if two_nu % 2 == 0 {
        // J_n(x) = (1/π) ∫_0^π cos(nτ - x sin τ) dτ; periodic integrand, trapezoid is spectral
        let n = (two_nu / 2) as f64;
        let m = (2.0 * x + 64.0) as usize;
        let h = PI / m as f64;
        let mut s = 0.5 * ((0.0f64).cos() + (n * PI).cos());
        for j in 1..m {
            let t = j as f64 * h;
            s += (n * t - x * t.sin()).cos();
        }
        s * h / PI
    } else {
        let c = (2.0 / (PI * x)).sqrt();
        let mut jm = c * x.cos(); // J_{-1/2}
        let mut j = c * x.sin(); // J_{1/2}
        let mut order = 0.5;
        while order < nu {
            let next = 2.0 * order / x * j - jm;
            jm = j;
            j = next;
            order += 1.0;
        }
        j
    }
}

/// ν(β) = π^{d/2} 2^β Γ(β/2) / Γ((d-β)/2).
pub fn nu_constant(d: usize, beta: f64) -> Result<f64> {
    let df = d as f64;
    if d == 0 || !(beta > 0.0 && beta < df) {
        return domain(format!("nu constant needs 0 < beta < d (beta={beta}, d={d})"));
    }
    Ok((0.5 * df * PI.ln() + beta * 2f64.ln() + ln_gamma(0.5 * beta) - ln_gamma(0.5 * (df - beta))).exp())
}

/// Leading constant of the eigenvalue asymptotics of the Riesz operator.
pub fn ctilde(d: usize, alpha: f64) -> Result<f64> {
    let df = d as f64;
    if d == 0 || !(alpha > 0.0 && alpha < df) {
        return domain(format!("ctilde needs 0 < alpha < d (alpha={alpha}, d={d})"));
    }
    let e = (df - alpha) / df;
    Ok((0.5 * alpha * PI.ln() + e * (2.0 / df).ln() + ln_gamma(0.5 * (df - alpha))
        - ln_gamma(0.5 * alpha)
        - e * ln_gamma(0.5 * df))
        .exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_laguerre() {
        let b = 1.7;
        let u = 0.9;
        let e = LaguerreBasis::new(b, 2).unwrap().eval_all(u);
        assert!((e[1] - (b - u) / b.sqrt()).abs() < 1e-14);
        let e2 = (u * u - 2.0 * (b + 1.0) * u + (b + 1.0) * b) / (2.0 * (b + 1.0) * b).sqrt();
        assert!((e[2] - e2).abs() < 1e-14);
    }

    #[test]
    fn bessel_overlap_at_switch() {
        let integral = |rho: f64, z: f64| rho * (0.5 * z).ln() - 0.5 * PI.ln() - ln_gamma(rho + 0.5) + ln_bessel_integral_scaled(rho, z) + z;
        for rho in [0.5, 1.0, 2.2, 7.5] {
            for z in [1e-2, 3.0, SERIES_MAX_Z] {
                let (s, q) = (ln_bessel_i_series(rho, z), integral(rho, z));
                assert!((s - q).abs() < 1e-11, "rho {rho} z {z}: {s} vs {q}");
            }
            let z = 1.5 * SERIES_MAX_Z;
            let a = ln_bessel_i_asymptotic(rho, z).unwrap();
            assert!((a - integral(rho, z)).abs() < 1e-11, "rho {rho}: asymptotic {a}");
            assert!((a - ln_bessel_i_series(rho, z)).abs() < 1e-11);
        }
    }
}
