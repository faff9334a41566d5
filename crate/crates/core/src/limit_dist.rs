//! Limit laws of the normalized functionals: the rank-one law as a weighted sum of
//! centered chi-squares (characteristic function, sampler, density, Lévy measure)
//! and the rank-two law built from a two-level spectrum.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::domain_geometry::{singular_moment, Domain};
use crate::error::{domain, Error, Result};
use crate::quad::{gauss_legendre, integrate_pts};
use crate::rng::stream;
use crate::specfun::{ctilde, hermite, nu_constant};
use crate::spectral_operator::{nystrom_eigs, OperatorSpectrum, TwoLevelSpectrum};

const SHARD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Limit {
    pub r: usize,
    pub alpha: f64,
    pub d: usize,
    pub domain: Domain,
    /// λ_n(S) = −λ̂_n/√(2r) with λ̂_n = λ_n(K_α)/a; negative, shrinking in magnitude.
    pub lambda_s: Vec<f64>,
    pub c1_multiplier: f64,
    /// Unresolved part of Σλ̂², i.e. tail_l2_mass / a².
    pub tail_l2: f64,
}

impl Rank1Limit {
    pub fn from_spectrum(r: usize, spec: &OperatorSpectrum) -> Result<Self> {
        if r == 0 {
            return domain("r must be at least 1");
        }
        let d = spec.domain.dim();
        if !(2.0 * spec.alpha < d as f64) {
            return domain(format!("rank-one limit needs alpha < d/2, got {}", spec.alpha));
        }
        let a = singular_moment(&spec.domain, 2.0 * spec.alpha)?.value.sqrt();
        let f = -1.0 / (a * (2.0 * r as f64).sqrt());
        Ok(Rank1Limit {
            r,
            alpha: spec.alpha,
            d,
            domain: spec.domain.clone(),
            lambda_s: spec.eigenvalues.iter().filter(|l| **l > 0.0).map(|l| l * f).collect(),
            c1_multiplier: 1.0,
            tail_l2: spec.tail_l2_mass / (a * a),
        })
    }

    pub fn new(r: usize, dom: &Domain, alpha: f64, resolution: usize) -> Result<Self> {
        Self::from_spectrum(r, &nystrom_eigs(dom, alpha, resolution)?)
    }

    pub fn with_multiplier(mut self, c: f64) -> Self {
        self.c1_multiplier = c;
        self
    }

    /// Σλ̂² over the resolved spectrum (the variance for multiplier 1).
    pub fn resolved_variance(&self) -> f64 {
        2.0 * self.r as f64 * self.lambda_s.iter().map(|l| l * l).sum::<f64>()
    }

    /// κ₃ = 8r Σ λ_n(S)³ (times c³).
    pub fn third_cumulant(&self) -> f64 {
        8.0 * self.r as f64 * self.lambda_s.iter().map(|l| l.powi(3)).sum::<f64>() * self.c1_multiplier.powi(3)
    }

    fn log_charfn(&self, z: f64) -> Complex64 {
        let z = z * self.c1_multiplier;
        let half_r = 0.5 * self.r as f64;
        // per copy: E e^{izλ(ε²−1)} = (1 − 2izλ)^{-1/2} e^{-izλ}
        self.lambda_s
            .iter()
            .map(|&l| {
                let x = Complex64::new(0.0, 2.0 * z * l);
                half_r * (-(Complex64::new(1.0, 0.0) - x).ln() - x)
            })
            .sum()
    }

    pub fn charfn(&self, z: f64) -> Complex64 {
        self.log_charfn(z).exp()
    }

    /// φ(z) and a bound on the effect of the unresolved spectrum, from
    /// |log((1−x)e^x)| ≤ |x|² for |x| ≤ 1/2.
    pub fn charfn_with_bound(&self, z: f64) -> (Complex64, f64) {
        let p = self.charfn(z);
        let zc = z * self.c1_multiplier;
        (p, p.norm() * ((zc * zc * self.tail_l2).exp() - 1.0))
    }

    pub fn sample(&self, n_trunc: usize, count: usize, seed: u64) -> Result<Samples> {
        if n_trunc == 0 || n_trunc > self.lambda_s.len() {
            return domain(format!("n_trunc must be in 1..={}, got {n_trunc}", self.lambda_s.len()));
        }
        let lam = &self.lambda_s[..n_trunc];
        let chi = ChiSquared::new(self.r as f64).map_err(|e| Error::Config(e.to_string()))?;
        let r = self.r as f64;
        let c = self.c1_multiplier;
        let values = sharded(count, seed, |rng| c * lam.iter().map(|&l| l * (rng.sample(chi) - r)).sum::<f64>());
        let kept = 2.0 * r * lam.iter().map(|l| l * l).sum::<f64>();
        let deficit = 1.0 - kept / (self.resolved_variance() + self.tail_l2);
        let warning = (deficit > 0.05).then(|| format!("truncation keeps {:.1}% of the variance", 100.0 * (1.0 - deficit)));
        Ok(Samples { values, variance_deficit: deficit, warning })
    }

    pub fn sample_all(&self, count: usize, seed: u64) -> Result<Samples> {
        self.sample(self.lambda_s.len(), count, seed)
    }

    /// Mean ± 12 standard deviations, the default inversion window.
    pub fn default_grid(&self, points: usize) -> Vec<f64> {
        let s = self.resolved_variance().sqrt() * self.c1_multiplier.abs();
        (0..points).map(|i| -12.0 * s + 24.0 * s * i as f64 / (points - 1).max(1) as f64).collect()
    }

    /// Density and distribution function by Gil–Pelaez inversion.
    pub fn pdf_cdf(&self, x: &[f64]) -> Result<PdfCdf> {
        if x.iter().any(|v| !v.is_finite()) {
            return domain("inversion grid must be finite");
        }
        // find where |φ| is negligible
        let mut zmax = 1.0;
        while self.charfn(zmax).norm() > 1e-14 {
            zmax *= 1.5;
            if zmax > 1e5 {
                return Err(Error::Accuracy("characteristic function does not decay; inversion integral diverges".into()));
            }
        }
        let xspan = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let width = (0.5 / xspan).min(0.05);
        let panels = (zmax / width).ceil() as usize;
        let (gx, gw) = gauss_legendre(12);
        let nodes: Vec<(f64, f64, Complex64)> = (0..panels)
            .flat_map(|k| {
                let (a, b) = (k as f64 * zmax / panels as f64, (k + 1) as f64 * zmax / panels as f64);
                gx.iter().zip(&gw).map(move |(t, w)| (0.5 * (a + b) + 0.5 * (b - a) * t, 0.5 * (b - a) * w)).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(z, w)| (z, w, self.charfn(z)))
            .collect();
        let res: Vec<(f64, f64)> = x
            .par_iter()
            .map(|&xv| {
                let (mut f, mut g) = (0.0, 0.0);
                for &(z, w, p) in &nodes {
                    let e = Complex64::from_polar(1.0, -z * xv) * p;
                    f += w * e.re;
                    g += w * e.im / z;
                }
                (f / std::f64::consts::PI, 0.5 - g / std::f64::consts::PI)
            })
            .collect();
        let mut pdf = Vec::with_capacity(x.len());
        let mut cdf = Vec::with_capacity(x.len());
        for (i, &(f, g)) in res.iter().enumerate() {
            if f < -1e-6 {
                return Err(Error::Accuracy(format!("density {f:e} at x = {} is below the ringing tolerance", x[i])));
            }
            pdf.push(if f < 1e-8 { f.max(0.0) } else { f });
            cdf.push(g.clamp(0.0, 1.0));
        }
        // remove ringing-level non-monotonicity
        for i in 1..cdf.len() {
            if cdf[i] < cdf[i - 1] {
                if cdf[i - 1] - cdf[i] > 1e-6 {
                    return Err(Error::Accuracy(format!("distribution function decreases by {:e} at x = {}", cdf[i - 1] - cdf[i], x[i])));
                }
                cdf[i] = cdf[i - 1];
            }
        }
        Ok(PdfCdf { x: x.to_vec(), pdf, cdf })
    }

    /// Lévy density of −S (multiplier 1): (r/2u) Σ_k exp(−u / (2|λ_k(S)|)) over the resolved spectrum.
    pub fn levy_density(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return domain(format!("Lévy density needs u > 0, got {u}"));
        }
        Ok(self.levy_sum(u))
    }

    fn levy_sum(&self, u: f64) -> f64 {
        0.5 * self.r as f64 / u * self.lambda_s.iter().map(|l| (-u / (2.0 * l.abs())).exp()).sum::<f64>()
    }

    /// Contribution of the unresolved eigenvalues, continued with the asymptotic law.
    pub fn levy_tail_bound(&self, u: f64) -> f64 {
        let (amp, p) = self.eigen_asymptote();
        let n = self.lambda_s.len() as f64 + 0.5;
        // ∫_n^∞ exp(−u k^p/(2A)) dk = (1/p)(2A/u)^{1/p} Γ(1/p, u n^p/(2A))
        let s = 1.0 / p;
        let x = u * n.powf(p) / (2.0 * amp);
        0.5 * self.r as f64 / u * s * (2.0 * amp / u).powf(s) * gamma(s) * gamma_ur(s, x)
    }

    /// |λ_n(S)| ≈ A n^{-p}: returns (A, p).
    fn eigen_asymptote(&self) -> (f64, f64) {
        let df = self.d as f64;
        let p = (df - self.alpha) / df;
        let a = singular_moment(&self.domain, 2.0 * self.alpha).map(|e| e.value.sqrt()).unwrap_or(f64::NAN);
        let c = ctilde(self.d, self.alpha).unwrap_or(f64::NAN) * self.domain.volume().powf(p);
        (c / (a * (2.0 * self.r as f64).sqrt()), p)
    }

    pub fn levy_asymptote(&self, u: f64, regime: LevyRegime) -> Result<f64> {
        if !(u > 0.0) {
            return domain(format!("Lévy asymptote needs u > 0, got {u}"));
        }
        let half_r = 0.5 * self.r as f64;
        Ok(match regime {
            LevyRegime::LargeU => half_r / u * (-u / (2.0 * self.lambda_s[0].abs())).exp(),
            LevyRegime::SmallU => {
                let (amp, p) = self.eigen_asymptote();
                half_r / u * gamma(1.0 + 1.0 / p) * (2.0 * amp / u).powf(1.0 / p)
            }
        })
    }

    /// The small-u log-log slope of the Lévy density, (α/d − 2)/(1 − α/d).
    pub fn small_u_slope(&self) -> f64 {
        let t = self.alpha / self.d as f64;
        (t - 2.0) / (1.0 - t)
    }

    /// exp ∫ (e^{iuθ} − 1 − iuθ) q(u) du evaluated numerically. The Lévy density
    /// describes the jumps of −S at multiplier 1, so this equals `charfn(−θ)` there.
    pub fn charfn_levy(&self, theta: f64) -> Result<Complex64> {
        if theta == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let lmin = self.lambda_s.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        let lmax = self.lambda_s[0].abs();
        let lo = 1e-3 * lmin;
        let hi = 80.0 * lmax;
        let mut pts = vec![0.0];
        let mut u = lo;
        while u < hi {
            pts.push(u);
            u *= 1.5;
        }
        pts.push(hi);
        let part = |f: &dyn Fn(f64) -> f64| integrate_pts(|u| f(u), &pts, 1e-13, 1e-10, 200_000);
        let re = part(&|u: f64| ((theta * u).cos() - 1.0) * self.levy_sum(u));
        let im = part(&|u: f64| ((theta * u).sin() - theta * u) * self.levy_sum(u));
        if !(re.converged && im.converged) {
            return Err(Error::Accuracy(format!("Lévy–Khintchine quadrature did not converge at θ = {theta}")));
        }
        // beyond `hi` every term is below e^{-40}
        Ok(Complex64::new(re.value, im.value).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyRegime {
    SmallU,
    LargeU,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Samples {
    pub values: Vec<f64>,
    /// 1 − (variance kept by the truncation) / (full variance).
    pub variance_deficit: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdfCdf {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

fn sharded<F>(count: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let shards = count.div_ceil(SHARD);
    let parts: Vec<Vec<f64>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, &[s as u64]);
            let n = SHARD.min(count - s * SHARD);
            (0..n).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank2Limit {
    pub r: usize,
    pub spectrum: TwoLevelSpectrum,
    /// |D| (r(r/2+1))^{-1/2} / (4ν(α)²)
    pub scale: f64,
    /// Factor making the truncated sampler variance exactly one.
    pub renorm: f64,
    pub n_max: usize,
    pub p_max: usize,
}

impl Rank2Limit {
    pub fn new(r: usize, spectrum: TwoLevelSpectrum, n_max: usize, p_max: usize) -> Result<Self> {
        if r == 0 {
            return domain("r must be at least 1");
        }
        let n_max = n_max.min(spectrum.mu.len());
        let p_max = p_max.min(spectrum.gamma_weights.iter().map(Vec::len).min().unwrap_or(0));
        if n_max == 0 || p_max == 0 {
            return domain("rank-two truncation is empty");
        }
        let nu = nu_constant(spectrum.domain.dim(), spectrum.alpha)?;
        let rf = r as f64;
        let scale = spectrum.domain.volume() / (rf * (rf / 2.0 + 1.0)).sqrt() / (4.0 * nu * nu);
        let mut lim = Rank2Limit { r, spectrum, scale, renorm: 1.0, n_max, p_max };
        lim.renorm = 1.0 / (scale * lim.raw_variance().sqrt());
        Ok(lim)
    }

    /// Σ_n μ_n² (8r²g_n² + 16r f_n) with g = Σ_{p≤P} γ², f = Σ γ⁴: variance of the bracket sum.
    fn raw_variance(&self) -> f64 {
        let r = self.r as f64;
        (0..self.n_max)
            .map(|n| {
                let g = &self.spectrum.gamma_weights[n][..self.p_max];
                let g2: f64 = g.iter().map(|x| x * x).sum();
                let g4: f64 = g.iter().map(|x| x.powi(4)).sum();
                self.spectrum.mu[n].powi(2) * (8.0 * r * r * g2 * g2 + 16.0 * r * g4)
            })
            .sum()
    }

    /// Share of Σμ²(Σγ²)² not covered by the truncation, against the closed-form limit when available.
    pub fn variance_deficit(&self) -> f64 {
        let kept: f64 = (0..self.n_max)
            .map(|n| self.spectrum.mu[n].powi(2) * self.spectrum.gamma_weights[n][..self.p_max].iter().map(|x| x * x).sum::<f64>().powi(2))
            .sum();
        match crate::spectral_operator::rank2_mu_l2_target(&self.spectrum.domain, self.spectrum.alpha) {
            Ok(t) if t > 0.0 => 1.0 - kept / t,
            _ => 0.0,
        }
    }

    /// One block η_n of the series (before μ_n and the scale factors).
    fn block<R: Rng>(&self, n: usize, rng: &mut R, x: &mut [f64]) -> f64 {
        let g = &self.spectrum.gamma_weights[n][..self.p_max];
        let mut wick = 0.0;
        for xk in x.iter_mut() {
            *xk = 0.0;
            for &gp in g {
                let e: f64 = rng.sample(StandardNormal);
                let h2 = hermite(2, e);
                *xk += gp * h2;
                wick += gp * gp * (4.0 * h2 + 2.0);
            }
        }
        let s: f64 = x.iter().sum();
        // Σ_{k≠j} X_j X_k + Σ_k :X_k²: = (Σ_k X_k)² − Wick correction
        s * s - wick
    }

    pub fn sample(&self, count: usize, seed: u64) -> Samples {
        let f = self.scale * self.renorm;
        let values = sharded(count, seed, |rng| {
            let mut x = vec![0.0; self.r];
            f * (0..self.n_max).map(|n| self.spectrum.mu[n] * self.block(n, rng, &mut x)).sum::<f64>()
        });
        let deficit = self.variance_deficit();
        let warning = (deficit > 0.15).then(|| format!("truncated spectrum keeps {:.1}% of the limiting Σμ²", 100.0 * (1.0 - deficit)));
        Samples { values, variance_deficit: deficit, warning }
    }

    /// Per-block contributions μ_n η_n for the first `blocks` indices, one row per draw.
    pub fn sample_blocks(&self, blocks: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let blocks = blocks.min(self.n_max);
        (0..count)
            .map(|i| {
                let mut rng = stream(seed, &[i as u64, 0xb10c]);
                let mut x = vec![0.0; self.r];
                (0..blocks).map(|n| self.spectrum.mu[n] * self.block(n, &mut rng, &mut x)).collect()
            })
            .collect()
    }
}
