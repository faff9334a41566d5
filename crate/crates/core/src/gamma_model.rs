//! Gamma-correlated bivariate structure and Laguerre analysis of subordinating functions.

use std::sync::Arc;

use serde_json::Value;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::registry::{param_f64, param_f64_or, param_usize_or, Registry};
use crate::specfun::{gamma_density, gamma_expectation, ln_bessel_i, LaguerreBasis};

/// Largest accepted correlation; the closed form is singular at 1.
pub const MAX_GAMMA_CORR: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMarginal {
    pub beta: f64,
}

impl GammaMarginal {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return domain(format!("gamma shape must be positive, got {beta}"));
        }
        Ok(GammaMarginal { beta })
    }

    /// Marginal of χ²_r / ... with r degrees of freedom, i.e. shape r/2.
    pub fn chi_squared(r: usize) -> Result<Self> {
        GammaMarginal::new(r as f64 / 2.0)
    }

    pub fn density(&self, u: f64) -> Result<f64> {
        gamma_density(u, self.beta)
    }
}

/// A function applied pointwise to the chi-squared field. Implementations must be reentrant.
pub trait Subordinator: Send + Sync {
    fn eval(&self, u: f64) -> f64;
    fn name(&self) -> String;
    /// Optional upper bound on ∫F²p_β, used only as a sanity check.
    fn square_integrable_hint(&self) -> Option<f64> {
        None
    }
    /// E F(U) for U ~ Gamma(β), when known in closed form.
    fn exact_mean(&self, _beta: f64) -> Option<f64> {
        None
    }
}

pub struct FnSubordinator<F: Fn(f64) -> f64 + Send + Sync> {
    pub label: String,
    pub f: F,
}

impl<F: Fn(f64) -> f64 + Send + Sync> Subordinator for FnSubordinator<F> {
    fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

pub fn subordinator<F: Fn(f64) -> f64 + Send + Sync + 'static>(label: &str, f: F) -> Arc<dyn Subordinator> {
    Arc::new(FnSubordinator { label: label.to_string(), f })
}

struct Identity;
impl Subordinator for Identity {
    fn eval(&self, u: f64) -> f64 {
        u
    }
    fn name(&self) -> String {
        "identity".into()
    }
    fn exact_mean(&self, beta: f64) -> Option<f64> {
        Some(beta)
    }
}

struct Power(f64);
impl Subordinator for Power {
    fn eval(&self, u: f64) -> f64 {
        u.powf(self.0)
    }
    fn name(&self) -> String {
        format!("power({})", self.0)
    }
    fn exact_mean(&self, beta: f64) -> Option<f64> {
        (beta + self.0 > 0.0).then(|| (ln_gamma(beta + self.0) - ln_gamma(beta)).exp())
    }
}

struct Constant(f64);
impl Subordinator for Constant {
    fn eval(&self, _u: f64) -> f64 {
        self.0
    }
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }
    fn square_integrable_hint(&self) -> Option<f64> {
        Some(self.0 * self.0)
    }
    fn exact_mean(&self, _beta: f64) -> Option<f64> {
        Some(self.0)
    }
}

/// Σ c_i u^i, coefficients in increasing degree.
struct Polynomial(Vec<f64>);
impl Subordinator for Polynomial {
    fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
    fn name(&self) -> String {
        format!("polynomial({:?})", self.0)
    }
    fn exact_mean(&self, beta: f64) -> Option<f64> {
        // E U^i = β(β+1)...(β+i−1)
        let mut moment = 1.0;
        let mut total = 0.0;
        for (i, c) in self.0.iter().enumerate() {
            total += c * moment;
            moment *= beta + i as f64;
        }
        Some(total)
    }
}

struct Laguerre {
    basis: LaguerreBasis,
    scale: f64,
}
impl Subordinator for Laguerre {
    fn eval(&self, u: f64) -> f64 {
        self.scale * self.basis.eval(self.basis.k_max, u)
    }
    fn name(&self) -> String {
        format!("laguerre(k={}, beta={})", self.basis.k_max, self.basis.beta)
    }
    fn exact_mean(&self, beta: f64) -> Option<f64> {
        (beta == self.basis.beta && self.basis.k_max > 0).then_some(0.0)
    }
}

pub fn laguerre_subordinator(k: usize, beta: f64, scale: f64) -> Result<Arc<dyn Subordinator>> {
    Ok(Arc::new(Laguerre { basis: LaguerreBasis::new(beta, k)?, scale }))
}

fn default_beta(params: &Value) -> Result<f64> {
    if let Some(b) = params.get("beta").and_then(Value::as_f64) {
        return Ok(b);
    }
    match params.get("r").and_then(Value::as_u64) {
        Some(r) => Ok(r as f64 / 2.0),
        None => Err(Error::Config("laguerre-based functions need 'beta' or 'r'".into())),
    }
}

/// Built-in subordinating functions, selectable by name.
///
/// `laguerre` and `rank2_quadratic` take `beta` (or `r`, meaning beta = r/2).
pub fn subordinator_registry() -> Registry<dyn Subordinator> {
    let mut reg: Registry<dyn Subordinator> = Registry::new("subordinating function");
    reg.register("identity", |_| Ok(Box::new(Identity)));
    reg.register("square", |_| Ok(Box::new(Power(2.0))));
    reg.register("power", |p| Ok(Box::new(Power(param_f64(p, "p")?))));
    reg.register("constant", |p| Ok(Box::new(Constant(param_f64_or(p, "c", 1.0)?))));
    reg.register("polynomial", |p| {
        let coeffs = p
            .get("coeffs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Config("polynomial needs 'coeffs'".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::Config("polynomial coefficients must be numbers".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Box::new(Polynomial(coeffs)))
    });
    reg.register("laguerre", |p| {
        let k = param_usize_or(p, "k", 1)?;
        let beta = default_beta(p)?;
        Ok(Box::new(Laguerre { basis: LaguerreBasis::new(beta, k)?, scale: param_f64_or(p, "scale", 1.0)? }))
    });
    reg.register("rank2_quadratic", |p| {
        let beta = default_beta(p)?;
        Ok(Box::new(Polynomial(vec![0.0, -2.0 * (beta + 1.0), 1.0])))
    });
    reg
}

fn check_corr(gamma_corr: f64) -> Result<()> {
    if !(0.0..=MAX_GAMMA_CORR).contains(&gamma_corr) {
        return domain(format!("correlation must lie in [0, 1 - 1e-6], got {gamma_corr}"));
    }
    Ok(())
}

/// Hille–Hardy closed form of the bivariate Gamma density.
pub fn bivariate_density_closed(u: f64, w: f64, gamma_corr: f64, beta: f64) -> Result<f64> {
    check_corr(gamma_corr)?;
    if gamma_corr == 0.0 {
        return Ok(gamma_density(u, beta)? * gamma_density(w, beta)?);
    }
    if !(u > 0.0 && w > 0.0 && beta > 0.0) {
        return domain("bivariate density needs u, w, beta > 0");
    }
    let g = gamma_corr;
    let z = 2.0 * (u * w * g).sqrt() / (1.0 - g);
    let ln = 0.5 * (beta - 1.0) * (u * w / g).ln() - (u + w) / (1.0 - g) + ln_bessel_i(beta - 1.0, z)?
        - ln_gamma(beta)
        - (1.0 - g).ln();
    Ok(ln.exp())
}

/// Truncated diagonal (bilinear) expansion of the same density.
pub fn bivariate_density_series(u: f64, w: f64, gamma_corr: f64, beta: f64, n_terms: usize) -> Result<f64> {
    check_corr(gamma_corr)?;
    if n_terms == 0 {
        return domain("series needs at least one term");
    }
    let basis = LaguerreBasis::new(beta, n_terms)?;
    let eu = basis.eval_all(u);
    let ew = basis.eval_all(w);
    let mut s = 1.0;
    let mut gk = 1.0;
    for k in 1..=n_terms {
        gk *= gamma_corr;
        s += gk * eu[k] * ew[k];
    }
    Ok(gamma_density(u, beta)? * gamma_density(w, beta)? * s)
}

/// Σ_{k≥1} γ^{2k}, the chi-square divergence of the pair from independence.
pub fn pearson_functional(gamma_corr: f64) -> Result<f64> {
    if !(gamma_corr.abs() < 1.0) {
        return domain(format!("pearson functional needs |gamma| < 1, got {gamma_corr}"));
    }
    Ok(gamma_corr * gamma_corr / (1.0 - gamma_corr * gamma_corr))
}

/// ∫F² p_β, with an integrability check.
pub fn l2_norm_sq(f: &dyn Subordinator, beta: f64) -> Result<f64> {
    let r = gamma_expectation(|u| f.eval(u).powi(2), beta, 1e-12);
    if !r.value.is_finite() || !r.converged {
        return Err(Error::Integrability(format!("∫F²p_β did not converge for {}", f.name())));
    }
    Ok(r.value)
}

/// Laguerre coefficients C_0..C_{q_max} of F against the Gamma(β) weight.
pub fn laguerre_coeffs(f: &dyn Subordinator, beta: f64, q_max: usize) -> Result<Vec<f64>> {
    let norm_sq = l2_norm_sq(f, beta)?;
    let basis = LaguerreBasis::new(beta, q_max)?;
    let abs_tol = 1e-13 * norm_sq.sqrt().max(1e-300);
    (0..=q_max)
        .map(|q| {
            let r = gamma_expectation(|u| f.eval(u) * basis.eval(q, u), beta, 1e-12);
            if !r.value.is_finite() || r.abs_err > abs_tol.max(1e-10 * r.value.abs()) && !r.converged {
                return Err(Error::Integrability(format!("coefficient {q} of {} did not converge", f.name())));
            }
            Ok(r.value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub coeffs: Vec<f64>,
    pub norm: f64,
}

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
pub const DEFAULT_Q_MAX: usize = 8;

/// Smallest k ≥ 1 with |C_k| > tol·‖F‖.
pub fn laguerre_rank(f: &dyn Subordinator, beta: f64, tol: f64) -> Result<RankReport> {
    laguerre_rank_upto(f, beta, tol, DEFAULT_Q_MAX)
}

pub fn laguerre_rank_upto(f: &dyn Subordinator, beta: f64, tol: f64, q_max: usize) -> Result<RankReport> {
    if !(tol > 0.0) {
        return domain("rank tolerance must be positive");
    }
    let coeffs = laguerre_coeffs(f, beta, q_max)?;
    let norm = l2_norm_sq(f, beta)?.sqrt();
    match (1..=q_max).find(|&k| coeffs[k].abs() > tol * norm) {
        Some(rank) => Ok(RankReport { rank, coeffs, norm }),
        None => Err(Error::RankUndetermined { q_max, coeffs }),
    }
}
