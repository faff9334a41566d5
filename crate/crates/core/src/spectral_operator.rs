//! Discretized Riesz operator K_α: eigenvalues, trace powers, Fredholm
//! determinants, and the two-level spectrum behind the rank-two limit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain_geometry::{check_cyclic, cyclic_integral_mc, singular_moment, Domain, Estimate};
use crate::error::{domain, Error, Result};
use crate::quad::gauss_legendre;
use crate::registry::{param_f64_or, param_usize_or, Registry};
use crate::rng::stream;
use crate::specfun::nu_constant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpectrum {
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
    pub resolution: usize,
    pub domain: Domain,
    pub alpha: f64,
    /// max(0, a² − Σλ²) with a² the exact (or Monte Carlo) Hilbert–Schmidt norm;
    /// infinite when 2α ≥ d.
    pub tail_l2_mass: f64,
}

/// Galerkin matrix of K_α on a cell partition: entries are cell volume times
/// the cell-pair average of |x − y|^{-α}.
#[derive(Debug, Clone)]
pub struct RieszSystem {
    pub matrix: DMatrix<f64>,
    pub cell_volume: f64,
    pub centers: Vec<Vec<f64>>,
}

fn pair_antiderivative(u: f64, alpha: f64) -> f64 {
    u.abs().powf(2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha))
}

/// Mean of |x − y|^{-α} for x, y uniform in a cube of side h (d ≥ 2), by Monte Carlo.
fn cube_self_average(d: usize, h: f64, alpha: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, &[d as u64]);
    let mut s = 0.0;
    for _ in 0..samples {
        let mut r2 = 0.0;
        for _ in 0..d {
            let t: f64 = rng.random::<f64>() - rng.random::<f64>();
            r2 += t * t;
        }
        s += r2.powf(-alpha / 2.0);
    }
    s / samples as f64 * h.powf(-alpha)
}

pub fn riesz_system(dom: &Domain, alpha: f64, n: usize) -> Result<RieszSystem> {
    let d = dom.dim();
    if !(alpha > 0.0 && alpha < d as f64) {
        return domain(format!("nystrom needs 0 < alpha < d, got {alpha}"));
    }
    if n < 8 {
        return domain(format!("nystrom resolution must be at least 8, got {n}"));
    }
    let bbox = dom.bounding_box();
    if d == 1 {
        let (a, b) = bbox[0];
        let h = (b - a) / n as f64;
        let centers = (0..n).map(|i| vec![a + (i as f64 + 0.5) * h]).collect();
        // exact cell-pair integrals via the second difference of the antiderivative
        let row: Vec<f64> = (0..n)
            .map(|k| {
                let dist = k as f64 * h;
                (pair_antiderivative(dist + h, alpha) - 2.0 * pair_antiderivative(dist, alpha)
                    + pair_antiderivative(dist - h, alpha))
                    / h
            })
            .collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]);
        return Ok(RieszSystem { matrix, cell_volume: h, centers });
    }
    // d ≥ 2: uniform cubes over the bounding box, active if the center lies in D
    let h = bbox.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min) / n as f64;
    let counts: Vec<usize> = bbox.iter().map(|(a, b)| ((b - a) / h).round() as usize).collect();
    let total: usize = counts.iter().product();
    let mut centers = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut x = Vec::with_capacity(d);
        for (k, &c) in counts.iter().enumerate() {
            x.push(bbox[k].0 + ((rem % c) as f64 + 0.5) * h);
            rem /= c;
        }
        if dom.contains(&x) {
            centers.push(x);
        }
    }
    let m = centers.len();
    let vol = h.powi(d as i32);
    let diag = cube_self_average(d, h, alpha, 100_000, 0xd1a9);
    let mut matrix = DMatrix::zeros(m, m);
    for i in 0..m {
        matrix[(i, i)] = vol * diag;
        for j in 0..i {
            let r: f64 = centers[i].iter().zip(&centers[j]).map(|(p, q): (&f64, &f64)| (p - q).powi(2)).sum::<f64>().sqrt();
            let v = vol * r.powf(-alpha);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(RieszSystem { matrix, cell_volume: vol, centers })
}

/// Eigenvalues (descending) and matching eigenvectors as columns.
pub fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

fn clamp_spectrum(mut vals: Vec<f64>) -> Result<Vec<f64>> {
    let top = vals.first().copied().unwrap_or(0.0);
    if let Some(&low) = vals.last() {
        if low < -1e-8 * top {
            return Err(Error::Discretization(format!("eigenvalue {low:e} below -1e-8·λ₁ (λ₁ = {top})")));
        }
    }
    vals.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(vals)
}

pub fn nystrom_eigs(dom: &Domain, alpha: f64, n: usize) -> Result<OperatorSpectrum> {
    let sys = riesz_system(dom, alpha, n)?;
    let resolution = n;
    let vals = SymmetricEigen::new(sys.matrix).eigenvalues;
    let mut vals: Vec<f64> = vals.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let eigenvalues = clamp_spectrum(vals)?;
    // for 2α ≥ d the operator is compact but not Hilbert–Schmidt
    let tail_l2_mass = if 2.0 * alpha < dom.dim() as f64 {
        let a2 = singular_moment(dom, 2.0 * alpha)?.value;
        (a2 - eigenvalues.iter().map(|l| l * l).sum::<f64>()).max(0.0)
    } else {
        f64::INFINITY
    };
    Ok(OperatorSpectrum { eigenvalues, resolution, domain: dom.clone(), alpha, tail_l2_mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePower {
    pub value: f64,
    /// Bound on the contribution of unresolved eigenvalues.
    pub tail_bound: f64,
}

pub fn trace_power(spec: &OperatorSpectrum, m: usize) -> Result<TracePower> {
    if m < 2 {
        return domain("trace powers below 2 diverge for the Riesz operator");
    }
    let d = spec.domain.dim() as f64;
    if m as f64 * (d - spec.alpha) <= d {
        return domain(format!("trace power {m} diverges for alpha = {} in dimension {d}", spec.alpha));
    }
    let value = spec.eigenvalues.iter().map(|l| l.powi(m as i32)).sum();
    let last = spec.eigenvalues.last().copied().unwrap_or(0.0);
    Ok(TracePower { value, tail_bound: spec.tail_l2_mass * last.powi(m as i32 - 2) })
}

/// det(I − ω K_α²) as the product Π(1 − ω λ_n²).
pub fn fredholm_det(spec: &OperatorSpectrum, omega: Complex64) -> Complex64 {
    spec.eigenvalues.iter().map(|l| Complex64::new(1.0, 0.0) - omega * l * l).product()
}

/// Same determinant from exp(−Σ_k Tr K^{2k} ω^k / k), valid for |ω|·Σλ² < 1.
pub fn fredholm_det_series(spec: &OperatorSpectrum, omega: Complex64) -> Result<Complex64> {
    let t2: f64 = spec.eigenvalues.iter().map(|l| l * l).sum();
    if omega.norm() * t2 >= 1.0 {
        return Err(Error::Convergence(format!("|ω|·Tr K² = {} >= 1", omega.norm() * t2)));
    }
    let sq: Vec<f64> = spec.eigenvalues.iter().map(|l| l * l).collect();
    let mut pow = sq.clone();
    let mut wk = omega;
    let mut log = Complex64::new(0.0, 0.0);
    for k in 1..10_000 {
        let tr: f64 = pow.iter().sum();
        let term = wk * tr / k as f64;
        log -= term;
        if term.norm() < 1e-18 * log.norm().max(1e-300) || term.norm() < 1e-300 {
            break;
        }
        pow.iter_mut().zip(&sq).for_each(|(p, s)| *p *= s);
        wk *= omega;
    }
    Ok(log.exp())
}

/// Partial products of the Carleman-regularized factor Π(1 − w λ_n) e^{w λ_n}.
pub fn carleman_partial_products(eigs: &[f64], w: Complex64) -> Vec<Complex64> {
    let mut acc = Complex64::new(1.0, 0.0);
    eigs.iter()
        .map(|&l| {
            acc *= (Complex64::new(1.0, 0.0) - w * l) * (w * l).exp();
            acc
        })
        .collect()
}

/// Ways to evaluate the cyclic integrals c_m.
pub trait CyclicIntegrator: Send + Sync {
    fn name(&self) -> &'static str;
    fn c_m(&self, dom: &Domain, alpha: f64, m: usize) -> Result<Estimate>;
}

struct SpectralCyclic {
    resolution: usize,
}

impl CyclicIntegrator for SpectralCyclic {
    fn name(&self) -> &'static str {
        "spectral"
    }
    fn c_m(&self, dom: &Domain, alpha: f64, m: usize) -> Result<Estimate> {
        check_cyclic(dom.dim(), alpha, m)?;
        let spec = nystrom_eigs(dom, alpha, self.resolution)?;
        let t = trace_power(&spec, m)?;
        Ok(Estimate { value: t.value, std_err: t.tail_bound })
    }
}

struct MonteCarloCyclic {
    samples: usize,
    seed: u64,
}

impl CyclicIntegrator for MonteCarloCyclic {
    fn name(&self) -> &'static str {
        "montecarlo"
    }
    fn c_m(&self, dom: &Domain, alpha: f64, m: usize) -> Result<Estimate> {
        cyclic_integral_mc(dom, alpha, m, self.samples, self.seed)
    }
}

/// `spectral` (default, params: resolution) or `montecarlo` (params: samples, seed).
pub fn cyclic_registry() -> Registry<dyn CyclicIntegrator> {
    let mut reg: Registry<dyn CyclicIntegrator> = Registry::new("cyclic integral method");
    reg.register("spectral", |p| Ok(Box::new(SpectralCyclic { resolution: param_usize_or(p, "resolution", 512)? })));
    reg.register("montecarlo", |p| {
        Ok(Box::new(MonteCarloCyclic {
            samples: param_usize_or(p, "samples", 2_000_000)?,
            seed: param_usize_or(p, "seed", 7)? as u64,
        }))
    });
    reg
}

pub fn cyclic_integral(dom: &Domain, alpha: f64, m: usize, method: &str, params: &Value) -> Result<Estimate> {
    cyclic_registry().build(method, params)?.c_m(dom, alpha, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSpectrum {
    pub strategy: String,
    /// Outer eigenvalues, descending.
    pub mu: Vec<f64>,
    /// Inner weights per outer index, sorted by decreasing magnitude; Σ_p γ² = 1.
    pub gamma_weights: Vec<Vec<f64>>,
    pub alpha: f64,
    pub domain: Domain,
    /// Human-readable description of the discretization.
    pub grid: String,
}

impl TwoLevelSpectrum {
    pub fn weight_norm_errors(&self) -> Vec<f64> {
        self.gamma_weights.iter().map(|g| (g.iter().map(|x| x * x).sum::<f64>() - 1.0).abs()).collect()
    }

    pub fn mu_l2(&self) -> f64 {
        self.mu.iter().map(|m| m * m).sum()
    }

    fn check_normalization(&self) -> Result<()> {
        let worst = self.weight_norm_errors().into_iter().fold(0.0, f64::max);
        if worst > 1e-3 {
            return Err(Error::Resolution(format!("inner weights normalized only to {worst:e}")));
        }
        Ok(())
    }
}

/// [a₂ ν(α)² / |D|]², the limit of Σμ_n².
pub fn rank2_mu_l2_target(dom: &Domain, alpha: f64) -> Result<f64> {
    let a2 = singular_moment(dom, 4.0 * alpha)?.value;
    let nu = nu_constant(dom.dim(), alpha)?;
    Ok(a2 * nu.powi(4) / dom.volume().powi(2))
}

pub trait Rank2Strategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, dom: &Domain, alpha: f64) -> Result<TwoLevelSpectrum>;
}

fn check_rank2(dom: &Domain, alpha: f64) -> Result<()> {
    if dom.dim() != 1 {
        return domain("two-level spectra are implemented for d = 1");
    }
    if !(alpha > 0.0 && alpha < 0.25) {
        return domain(format!("rank-two limit needs 0 < alpha < d/4, got {alpha}"));
    }
    Ok(())
}

fn sort_by_magnitude(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    v
}

/// Space-side construction. The outer operator is the Riesz operator with the
/// doubled exponent 2α (its kernel is the square of K_α's), discretized as the
/// Hadamard square of the K_α Galerkin matrix. For each outer eigenfunction g_n,
/// the inner weights are the eigenvalues of K_α^{1/2} g_n K_α^{1/2}, scaled to
/// unit ℓ² norm.
struct DirectRank2 {
    resolution: usize,
    n_outer: usize,
}

impl Rank2Strategy for DirectRank2 {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn compute(&self, dom: &Domain, alpha: f64) -> Result<TwoLevelSpectrum> {
        check_rank2(dom, alpha)?;
        let sys = riesz_system(dom, alpha, self.resolution)?;
        let h = sys.cell_volume;
        let n = sys.matrix.nrows();
        let k2 = sys.matrix.map(|a| a * a / h);
        let (lam2, v2) = sorted_eigen(k2);
        let (lam, v) = sorted_eigen(sys.matrix.clone());
        let lam = clamp_spectrum(lam)?;
        let sqrt_a = &v * DMatrix::from_diagonal(&DVector::from_iterator(n, lam.iter().map(|l| l.sqrt()))) * v.transpose();
        let nu = nu_constant(1, alpha)?;
        let vol = dom.volume();
        let n_outer = self.n_outer.min(n);
        let results: Vec<(f64, Vec<f64>)> = (0..n_outer)
            .into_par_iter()
            .map(|k| {
                let g = v2.column(k) / h.sqrt();
                let mut m = sqrt_a.clone();
                for (j, mut col) in m.column_iter_mut().enumerate() {
                    col *= g[j];
                }
                let inner = &sqrt_a * m;
                let inner = (&inner + inner.transpose()) * 0.5;
                let vals: Vec<f64> = SymmetricEigen::new(inner).eigenvalues.iter().copied().collect();
                let norm = vals.iter().map(|x| x * x).sum::<f64>().sqrt();
                (nu * nu * lam2[k] / vol, sort_by_magnitude(vals.iter().map(|x| x / norm).collect()))
            })
            .collect();
        let (mu, gamma_weights) = results.into_iter().unzip();
        let out = TwoLevelSpectrum {
            strategy: "direct".into(),
            mu,
            gamma_weights,
            alpha,
            domain: dom.clone(),
            grid: format!("galerkin cells={} outer={}", n, n_outer),
        };
        out.check_normalization()?;
        Ok(out)
    }
}

/// Frequency-side construction on a symmetric log-spaced grid of M cells per
/// frequency variable. The kernel K(λ₁+λ₂+λ₃+λ₄, D) is paired as (λ₁,λ₂)×(λ₃,λ₄),
/// restricted to swap-symmetric pairs, and projected onto cell indicators in the
/// G_α-weighted space. Writing K(s) = |D|⁻¹∫_D e^{-isx}dx, every projected entry is
/// |D|⁻¹∫_D φ_p(x) φ_q(x) dx with φ built from exact cell averages of e^{-iλx},
/// so no point evaluation of the oscillating kernel is needed. Because it is a
/// projection, Σμ² approaches its limit from below.
struct SpectralGridRank2 {
    m: usize,
    lambda_min: f64,
    lambda_max: f64,
    n_outer: usize,
}

const X_PANELS: usize = 128;

impl SpectralGridRank2 {
    /// Cell edges for |λ|; the first cell reaches down to 0.
    fn edges(&self) -> Vec<f64> {
        let half = self.m / 2;
        let (lo, hi) = (self.lambda_min.ln(), self.lambda_max.ln());
        let dt = (hi - lo) / half as f64;
        let mut e: Vec<f64> = (0..=half).map(|k| (lo + k as f64 * dt).exp()).collect();
        e[0] = 0.0;
        e
    }

    /// Normalized cell average ∫_cell e^{-iλx} G_α(dλ) / √(G_α(cell)) at each x.
    fn cell_transform(lo: f64, hi: f64, alpha: f64, xs: &[f64], gl: &(Vec<f64>, Vec<f64>)) -> Vec<Complex64> {
        let mass = (hi.powf(alpha) - lo.powf(alpha)) / alpha;
        // nodes in λ with G_α weights
        let mut lam = Vec::new();
        let mut wts = Vec::new();
        let xmax = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let panels = ((hi - lo) * xmax).ceil().max(1.0) as usize;
        for j in 0..panels {
            let (a, b) = (lo + (hi - lo) * j as f64 / panels as f64, lo + (hi - lo) * (j + 1) as f64 / panels as f64);
            if a == 0.0 {
                // t = λ^α removes the singular weight
                let tb = b.powf(alpha);
                for (t, w) in gl.0.iter().zip(&gl.1) {
                    let tt = 0.5 * tb * (t + 1.0);
                    lam.push(tt.powf(1.0 / alpha));
                    wts.push(0.5 * tb * w / alpha);
                }
            } else {
                for (t, w) in gl.0.iter().zip(&gl.1) {
                    let l = 0.5 * (a + b) + 0.5 * (b - a) * t;
                    lam.push(l);
                    wts.push(0.5 * (b - a) * w * l.powf(alpha - 1.0));
                }
            }
        }
        let norm = mass.sqrt();
        xs.iter()
            .map(|&x| lam.iter().zip(&wts).map(|(&l, &w)| Complex64::from_polar(w, -l * x)).sum::<Complex64>() / norm)
            .collect()
    }
}

impl Rank2Strategy for SpectralGridRank2 {
    fn name(&self) -> &'static str {
        "spectral_grid"
    }

    fn compute(&self, dom: &Domain, alpha: f64) -> Result<TwoLevelSpectrum> {
        check_rank2(dom, alpha)?;
        if self.m < 4 || self.m % 2 == 1 || self.m * self.m > 4096 {
            return domain(format!("grid size M must be even with 4 <= M and M² <= 4096, got {}", self.m));
        }
        if !(self.lambda_min > 0.0 && self.lambda_max > self.lambda_min) {
            return domain("spectral grid needs 0 < lambda_min < lambda_max");
        }
        let (a, b) = dom.bounding_box()[0];
        if (a + b).abs() > 1e-12 * (b - a) {
            return domain("spectral_grid needs an interval symmetric about 0; use the direct strategy");
        }
        // x-quadrature on [0, b]; the symmetric half is the complex conjugate
        let gl = gauss_legendre(16);
        let (mut xs, mut xw) = (Vec::new(), Vec::new());
        for k in 0..X_PANELS {
            let (p, q) = (b * k as f64 / X_PANELS as f64, b * (k + 1) as f64 / X_PANELS as f64);
            for (t, w) in gl.0.iter().zip(&gl.1) {
                xs.push(0.5 * (p + q) + 0.5 * (q - p) * t);
                xw.push(0.5 * (q - p) * w);
            }
        }
        let edges = self.edges();
        let half: Vec<Vec<Complex64>> = edges
            .par_windows(2)
            .map(|e| Self::cell_transform(e[0], e[1], alpha, &xs, &gl))
            .collect();
        // cells ordered +λ₀, −λ₀, +λ₁, −λ₁, …; a negative cell is the conjugate
        let phi: Vec<Vec<Complex64>> = half.iter().flat_map(|g| [g.clone(), g.iter().map(|z| z.conj()).collect()]).collect();
        let m = phi.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
        let np = pairs.len();
        let nx = xs.len();
        // symmetric-pair basis: (e_ij + e_ji)/√2 for i < j, e_ii on the diagonal
        let fac = |(i, j): (usize, usize)| if i == j { 1.0 } else { 2f64.sqrt() };
        let sxw: Vec<f64> = xw.iter().map(|w| w.sqrt()).collect();
        let mut re = DMatrix::zeros(np, nx);
        let mut im = DMatrix::zeros(np, nx);
        for (r, &(i, j)) in pairs.iter().enumerate() {
            let f = fac((i, j));
            for k in 0..nx {
                let z = phi[i][k] * phi[j][k] * (f * sxw[k]);
                re[(r, k)] = z.re;
                im[(r, k)] = z.im;
            }
        }
        // |D|⁻¹ ∫_{-b}^{b} = (2/|D|) ∫_0^b Re(φ_p φ_q)
        let scale = 2.0 / dom.volume();
        let h = (&re * re.transpose() - &im * im.transpose()) * scale;
        let (mu, vecs) = sorted_eigen(h);
        // keep the largest outer eigenvalues by magnitude
        let mut order: Vec<usize> = (0..np).collect();
        order.sort_by(|&x, &y| mu[y].abs().total_cmp(&mu[x].abs()));
        let n_outer = self.n_outer.min(np);
        let mut mus = Vec::with_capacity(n_outer);
        let mut weights = Vec::with_capacity(n_outer);
        for &k in order.iter().take(n_outer) {
            let mut phi = DMatrix::zeros(m, m);
            for (r, &(i, j)) in pairs.iter().enumerate() {
                let v = vecs[(r, k)] / fac((i, j));
                phi[(i, j)] = v;
                phi[(j, i)] = v;
            }
            let vals: Vec<f64> = SymmetricEigen::new(phi).eigenvalues.iter().copied().collect();
            mus.push(mu[k]);
            weights.push(sort_by_magnitude(vals));
        }
        let out = TwoLevelSpectrum {
            strategy: "spectral_grid".into(),
            mu: mus,
            gamma_weights: weights,
            alpha,
            domain: dom.clone(),
            grid: format!("M={} log-spaced |λ| cells in [0, {}], first edge {}", self.m, self.lambda_max, self.lambda_min),
        };
        out.check_normalization()?;
        Ok(out)
    }
}

/// `direct` (params: resolution, n_outer) and `spectral_grid` (params: m, lambda_min, lambda_max, n_outer).
pub fn rank2_registry() -> Registry<dyn Rank2Strategy> {
    let mut reg: Registry<dyn Rank2Strategy> = Registry::new("rank-two spectrum strategy");
    reg.register("direct", |p| {
        Ok(Box::new(DirectRank2 {
            resolution: param_usize_or(p, "resolution", 256)?,
            n_outer: param_usize_or(p, "n_outer", 64)?,
        }))
    });
    reg.register("spectral_grid", |p| {
        Ok(Box::new(SpectralGridRank2 {
            m: param_usize_or(p, "m", 64)?,
            lambda_min: param_f64_or(p, "lambda_min", 1e-3)?,
            lambda_max: param_f64_or(p, "lambda_max", 400.0 * PI)?,
            n_outer: param_usize_or(p, "n_outer", 64)?,
        }))
    });
    reg
}

pub fn rank2_spectrum(dom: &Domain, alpha: f64, strategy: &str, params: &Value) -> Result<TwoLevelSpectrum> {
    rank2_registry().build(strategy, params)?.compute(dom, alpha)
}
