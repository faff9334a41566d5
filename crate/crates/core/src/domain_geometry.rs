//! Observation domains, the characteristic function of the uniform law on
//! them, and singular double and cyclic integrals of the Riesz kernel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::quad::{integrate_pts, tanh_sinh};
use crate::rng::stream;
use crate::specfun::{bessel_j_half, nu_constant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Ball { radius: f64, d: usize },
    Rectangle { bounds: Vec<(f64, f64)> },
}

/// Monte Carlo value with its standard error (0 for exact results).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_err: 0.0 }
    }
}

fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h * PI.ln() - ln_gamma(h + 1.0)).exp()
}

fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

impl Domain {
    pub fn ball(radius: f64, d: usize) -> Result<Self> {
        if !(radius > 0.0) || d == 0 {
            return domain(format!("ball needs radius > 0 and d >= 1 (radius={radius}, d={d})"));
        }
        Ok(Domain::Ball { radius, d })
    }

    pub fn rectangle(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return domain("rectangle needs at least one axis");
        }
        for &(a, b) in &bounds {
            if !(a < 0.0 && 0.0 < b) {
                return domain(format!("rectangle bounds must satisfy a < 0 < b, got ({a}, {b})"));
            }
        }
        Ok(Domain::Rectangle { bounds })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Domain::rectangle(vec![(a, b)])
    }

    /// Re-checks invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Ball { radius, d } => Domain::ball(*radius, *d).map(|_| ()),
            Domain::Rectangle { bounds } => Domain::rectangle(bounds.clone()).map(|_| ()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { d, .. } => *d,
            Domain::Rectangle { bounds } => bounds.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Ball { radius, d } => unit_ball_volume(*d) * radius.powi(*d as i32),
            Domain::Rectangle { bounds } => bounds.iter().map(|(a, b)| b - a).product(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => 2.0 * radius,
            Domain::Rectangle { bounds } => bounds.iter().map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt(),
        }
    }

    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            Domain::Ball { radius, d } => vec![(-radius, *radius); *d],
            Domain::Rectangle { bounds } => bounds.clone(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { radius, .. } => x.iter().map(|v| v * v).sum::<f64>() <= radius * radius,
            Domain::Rectangle { bounds } => x.iter().zip(bounds).all(|(v, (a, b))| *a <= *v && *v <= *b),
        }
    }

    /// Homothety about the origin.
    pub fn scale(&self, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return domain(format!("scale factor must be positive, got {t}"));
        }
        Ok(match self {
            Domain::Ball { radius, d } => Domain::Ball { radius: radius * t, d: *d },
            Domain::Rectangle { bounds } => Domain::Rectangle { bounds: bounds.iter().map(|(a, b)| (a * t, b * t)).collect() },
        })
    }

    /// Volume of D ∩ (D + u).
    pub fn covariogram(&self, u: &[f64]) -> Result<f64> {
        match self {
            Domain::Rectangle { bounds } => Ok(bounds.iter().zip(u).map(|((a, b), v)| (b - a - v.abs()).max(0.0)).product()),
            Domain::Ball { radius, d } => {
                let t = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r = *radius;
                if t >= 2.0 * r {
                    return Ok(0.0);
                }
                match d {
                    1 => Ok(2.0 * r - t),
                    2 => Ok(2.0 * r * r * (t / (2.0 * r)).acos() - 0.5 * t * (4.0 * r * r - t * t).sqrt()),
                    3 => Ok(PI / 12.0 * (4.0 * r + t) * (2.0 * r - t).powi(2)),
                    _ => domain("ball covariogram is implemented for d <= 3"),
                }
            }
        }
    }

    /// (1/|D|) ∫_D e^{-i<λ,x>} dx.
    pub fn char_fn_uniform(&self, lambda: &[f64]) -> Result<Complex64> {
        if lambda.len() != self.dim() {
            return domain(format!("frequency has dimension {}, domain {}", lambda.len(), self.dim()));
        }
        Ok(match self {
            Domain::Rectangle { bounds } => bounds
                .iter()
                .zip(lambda)
                .map(|(&(a, b), &l)| interval_char_fn(a, b, l))
                .product(),
            Domain::Ball { radius, d } => {
                let k = lambda.iter().map(|v| v * v).sum::<f64>().sqrt() * radius;
                if k < 1e-8 {
                    return Ok(Complex64::new(1.0 - k * k / (2.0 * (*d as f64 + 2.0)), 0.0));
                }
                let h = *d as f64 / 2.0;
                let v = (2.0 * PI).powf(h) * radius.powi(*d as i32) * bessel_j_half(*d as u32, k) / k.powf(h);
                Complex64::new(v / self.volume(), 0.0)
            }
        })
    }
}

fn interval_char_fn(a: f64, b: f64, l: f64) -> Complex64 {
    let x = l * (b - a);
    if x.abs() < 1e-6 {
        // first-order expansion around λ = 0
        let m = 0.5 * (a + b);
        return Complex64::new(1.0 - l * l * (a * a + a * b + b * b) / 6.0, -l * m);
    }
    let num = Complex64::from_polar(1.0, -l * b) - Complex64::from_polar(1.0, -l * a);
    num / Complex64::new(0.0, -x)
}

/// Samples a vector with density ∝ |u|^{-s} on the ball of radius `rmax`.
fn sample_power_ball<R: Rng>(rng: &mut R, d: usize, s: f64, rmax: f64, out: &mut [f64]) {
    let mut n2 = 0.0;
    for v in out.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
        n2 += *v * *v;
    }
    let v: f64 = rng.random::<f64>();
    let rho = rmax * v.powf(1.0 / (d as f64 - s));
    let f = rho / n2.sqrt();
    out.iter_mut().for_each(|x| *x *= f);
}

/// ∫_{|u|<rmax} |u|^{-s} du.
fn power_ball_mass(d: usize, s: f64, rmax: f64) -> f64 {
    sphere_area(d) * rmax.powf(d as f64 - s) / (d as f64 - s)
}

pub const DEFAULT_MC_SAMPLES: usize = 400_000;
const SHARDS: usize = 16;

fn mean_and_se(parts: Vec<(f64, f64, usize)>) -> Estimate {
    let (s, s2, n) = parts.into_iter().fold((0.0, 0.0, 0usize), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    let n = n as f64;
    let m = s / n;
    let var = (s2 / n - m * m).max(0.0) * n / (n - 1.0);
    Estimate { value: m, std_err: (var / n).sqrt() }
}

/// a² = ∫_D∫_D |x-y|^{-s} dx dy. Exact for d = 1; importance-sampled otherwise.
pub fn singular_moment(dom: &Domain, s: f64) -> Result<Estimate> {
    singular_moment_mc(dom, s, DEFAULT_MC_SAMPLES, 0x51_6e_67)
}

pub fn singular_moment_mc(dom: &Domain, s: f64, samples: usize, seed: u64) -> Result<Estimate> {
    let d = dom.dim();
    if !(s > 0.0) {
        return domain(format!("singular exponent must be positive, got {s}"));
    }
    if s >= d as f64 {
        return Err(Error::Divergence { s, d });
    }
    if d == 1 {
        let l = dom.diameter();
        return Ok(Estimate::exact(2.0 * l.powf(2.0 - s) / ((1.0 - s) * (2.0 - s))));
    }
    // u = x - y has density A(u)/|D|² with A the covariogram; sample u ∝ |u|^{-s}
    let rmax = dom.diameter();
    let z = power_ball_mass(d, s, rmax);
    let per = samples.div_ceil(SHARDS);
    let parts: Result<Vec<_>> = (0..SHARDS)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, &[k as u64]);
            let mut u = vec![0.0; d];
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..per {
                sample_power_ball(&mut rng, d, s, rmax, &mut u);
                let w = z * dom.covariogram(&u)?;
                a += w;
                b += w * w;
            }
            Ok((a, b, per))
        })
        .collect();
    Ok(mean_and_se(parts?))
}

/// Monte Carlo estimate of the cyclic integral ∫ Π |x_i - x_{i+1}|^{-α} with x_{m+1} = x_1.
pub fn cyclic_integral_mc(dom: &Domain, alpha: f64, m: usize, samples: usize, seed: u64) -> Result<Estimate> {
    let d = dom.dim();
    check_cyclic(d, alpha, m)?;
    let rmax = dom.diameter();
    let z = power_ball_mass(d, alpha, rmax);
    let vol = dom.volume();
    let bbox = dom.bounding_box();
    let per = samples.div_ceil(SHARDS);
    let parts: Vec<_> = (0..SHARDS)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, &[k as u64, m as u64]);
            let mut x1 = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut u = vec![0.0; d];
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..per {
                loop {
                    for (v, (lo, hi)) in x1.iter_mut().zip(&bbox) {
                        *v = rng.random_range(*lo..*hi);
                    }
                    if dom.contains(&x1) {
                        break;
                    }
                }
                x.copy_from_slice(&x1);
                let mut inside = true;
                for _ in 0..m - 1 {
                    sample_power_ball(&mut rng, d, alpha, rmax, &mut u);
                    x.iter_mut().zip(&u).for_each(|(p, q)| *p += q);
                    if !dom.contains(&x) {
                        inside = false;
                        break;
                    }
                }
                let w = if inside {
                    let dist = x.iter().zip(&x1).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                    vol * z.powi(m as i32 - 1) * dist.powf(-alpha)
                } else {
                    0.0
                };
                a += w;
                b += w * w;
            }
            (a, b, per)
        })
        .collect();
    Ok(mean_and_se(parts))
}

pub(crate) fn check_cyclic(d: usize, alpha: f64, m: usize) -> Result<()> {
    if m < 2 {
        return domain(format!("cyclic integrals need m >= 2, got {m}"));
    }
    if !(alpha > 0.0 && alpha < d as f64 / 2.0) {
        return domain(format!("cyclic integrals need 0 < alpha < d/2, got {alpha}"));
    }
    Ok(())
}

// ∫_0^∞ t^{a-1} (s+t)^{a-1} dt with t = s·x/(1-x)
fn outer_half_line(a: f64, s: f64) -> f64 {
    tanh_sinh(
        |_x, l, r| {
            // t = s l / r, s + t = s / r, dt = s / r² dx
            (s * l / r).powf(a - 1.0) * (s / r).powf(a - 1.0) * s / (r * r)
        },
        0.0,
        1.0,
        1e-12,
    )
    .value
}

/// ∫ |t|^{a-1} |s-t|^{a-1} dt computed numerically (0 < a < 1/2, s > 0).
fn riesz_convolution_numeric(a: f64, s: f64) -> f64 {
    let middle = tanh_sinh(|_t, l, r| (l * r).powf(a - 1.0), 0.0, s, 1e-12).value;
    2.0 * outer_half_line(a, s) + middle
}

/// ∫∫ |K(λ₁+λ₂, D)|² |λ₁|^{a-1} |λ₂|^{a-1} dλ₁ dλ₂ over R², d = 1, by nested quadrature.
///
/// The outer variable is s = λ₁+λ₂ (unit Jacobian); the inner integral over λ₁ is
/// evaluated numerically for every outer node. Oscillation periods of |K|² give the
/// outer breakpoints; beyond `r_max` the tail uses the period-averaged envelope.
pub fn riesz_pair_integral(dom: &Domain, a: f64, r_max: f64) -> Result<f64> {
    if dom.dim() != 1 {
        return domain("oscillatory identity is implemented for d = 1");
    }
    if !(a > 0.0 && a < 0.5) {
        return domain(format!("pair exponent must lie in (0, 1/2), got {a}"));
    }
    let len = dom.diameter();
    let f = |s: f64| -> f64 {
        let k = dom.char_fn_uniform(&[s]).unwrap().norm_sqr();
        k * riesz_convolution_numeric(a, s)
    };
    let period = 2.0 * PI / len;
    let first = tanh_sinh(|s, _, _| f(s), 0.0, period, 1e-11).value;
    let n = (r_max / period).ceil() as usize;
    let pts: Vec<f64> = (1..=n).map(|k| k as f64 * period).collect();
    let body = integrate_pts(f, &pts, 1e-14, 1e-10, 100_000).value;
    // tail: |K|² averages to 2/(sL)², convolution scales like s^{2a-1}
    let r = pts[pts.len() - 1];
    let g_r = riesz_convolution_numeric(a, r);
    let tail = 2.0 / (len * len) * g_r * r.powf(1.0 - 2.0 * a) * r.powf(2.0 * a - 2.0) / (2.0 - 2.0 * a);
    Ok(2.0 * (first + body + tail))
}

/// Both sides of the rank-one oscillatory identity: (quadrature, [a ν(α)/|D|]²).
pub fn rank1_oscillatory_identity(dom: &Domain, alpha: f64) -> Result<(f64, f64)> {
    let lhs = riesz_pair_integral(dom, alpha, 400.0 * PI)?;
    let a2 = singular_moment(dom, 2.0 * alpha)?.value;
    let nu = nu_constant(1, alpha)?;
    Ok((lhs, a2 * nu * nu / dom.volume().powi(2)))
}

/// Both sides of the rank-two identity: the four-fold integral, reduced to a
/// two-fold one by composing each frequency pair exactly, and [a₂ ν(α)²/|D|]².
pub fn rank2_oscillatory_identity(dom: &Domain, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 0.25) {
        return domain("rank-two identity needs 0 < alpha < 1/4");
    }
    // ∫|t|^{α-1}|1-t|^{α-1}dt = B(α,α) + 2B(α,1-2α)
    let lb = |x: f64, y: f64| (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp();
    let c = lb(alpha, alpha) + 2.0 * lb(alpha, 1.0 - 2.0 * alpha);
    let lhs = c * c * riesz_pair_integral(dom, 2.0 * alpha, 400.0 * PI)?;
    let a2 = singular_moment(dom, 4.0 * alpha)?.value;
    let nu = nu_constant(1, alpha)?;
    Ok((lhs, a2 * nu.powi(4) / dom.volume().powi(2)))
}
