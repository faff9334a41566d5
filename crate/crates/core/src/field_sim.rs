//! Long-memory Gaussian fields on grids, chi-squared subordination and
//! empirical diagnostics.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::domain_geometry::Domain;
use crate::error::{domain, Error, Result};
use crate::gamma_model::Subordinator;
use crate::registry::Registry;
use crate::rng::stream;
use crate::specfun::hermite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// B(r) = (1 + r^β)^{-γ}, long memory with exponent α = βγ.
    Cauchy { beta_exp: f64, gamma_exp: f64 },
}

impl CovarianceModel {
    pub fn cauchy(beta_exp: f64, gamma_exp: f64) -> Result<Self> {
        let m = CovarianceModel::Cauchy { beta_exp, gamma_exp };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceModel::Cauchy { beta_exp, gamma_exp } => {
                if !(beta_exp > 0.0 && beta_exp <= 2.0) || !(gamma_exp > 0.0) {
                    return domain(format!("cauchy model needs 0 < beta <= 2 and gamma > 0 (beta={beta_exp}, gamma={gamma_exp})"));
                }
                Ok(())
            }
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            CovarianceModel::Cauchy { beta_exp, gamma_exp } => beta_exp * gamma_exp,
        }
    }

    pub fn covariance(&self, r: f64) -> f64 {
        match *self {
            CovarianceModel::Cauchy { beta_exp, gamma_exp } => (1.0 + r.powf(beta_exp)).powf(-gamma_exp),
        }
    }

    /// L(r) = r^α B(r); tends to 1 at infinity.
    pub fn slowly_varying(&self, r: f64) -> f64 {
        match *self {
            CovarianceModel::Cauchy { beta_exp, gamma_exp } => (r.powf(-beta_exp) + 1.0).powf(-gamma_exp),
        }
    }

    /// α < d/2 for rank one, α < d/4 for rank two.
    pub fn check_rank(&self, d: usize, rank: usize) -> Result<()> {
        let bound = d as f64 / (2.0 * rank as f64);
        if !(self.alpha() < bound) {
            return Err(Error::Config(format!("alpha = {} must be below d/{} = {bound} for rank {rank}", self.alpha(), 2 * rank)));
        }
        Ok(())
    }
}

/// Regular grid over the bounding box of D(T); cells whose centers lie in D(T) are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: Domain,
    pub t: f64,
    pub points_per_axis: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub cell_volume: f64,
    /// Flat (axis-0 fastest) indices of the active cells.
    pub active: Vec<usize>,
}

impl GridSpec {
    pub fn new(dom: &Domain, t: f64, cells_per_unit: usize) -> Result<Self> {
        if cells_per_unit == 0 {
            return domain("cells_per_unit must be positive");
        }
        let scaled = dom.scale(t)?;
        let bbox = scaled.bounding_box();
        let mut points_per_axis = Vec::new();
        let mut spacing = Vec::new();
        let mut origin = Vec::new();
        for &(a, b) in &bbox {
            let n = (((b - a) * cells_per_unit as f64).round() as usize).max(1);
            points_per_axis.push(n);
            spacing.push((b - a) / n as f64);
            origin.push(a);
        }
        let total: usize = points_per_axis.iter().product();
        let mut g = GridSpec {
            domain: dom.clone(),
            t,
            cell_volume: spacing.iter().product(),
            points_per_axis,
            spacing,
            origin,
            active: Vec::new(),
        };
        g.active = (0..total).filter(|&i| scaled.contains(&g.center(i))).collect();
        if g.active.len() < 2 {
            return domain("grid has fewer than two active cells");
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.points_per_axis.len()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.iter().product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.points_per_axis
            .iter()
            .map(|&n| {
                let i = flat % n;
                flat /= n;
                i
            })
            .collect()
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + (i as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    /// Summed volume of the active cells.
    pub fn active_volume(&self) -> f64 {
        self.cell_volume * self.active.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub grid: Arc<GridSpec>,
    /// One vector per copy, over the active cells in grid order.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub copy_count: usize,
}

/// A sampler bound to one grid and covariance; draws are cheap and repeatable.
pub trait PreparedField: Send + Sync {
    fn method(&self) -> &'static str;
    fn grid(&self) -> &Arc<GridSpec>;
    /// Copies for `seed`, each a field on the active cells.
    fn draw(&self, copies: usize, seed: u64) -> FieldSample;
}

pub trait GaussianSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn prepare(&self, grid: &GridSpec, model: &CovarianceModel) -> Result<Box<dyn PreparedField>>;
}

struct CirculantField {
    grid: Arc<GridSpec>,
    dims: Vec<usize>,
    /// √(λ/m) per embedding frequency.
    scale: Vec<f64>,
    pad: usize,
    fft: Vec<Arc<dyn rustfft::Fft<f64>>>,
}

fn fft_nd(data: &mut [Complex64], dims: &[usize], ffts: &[Arc<dyn rustfft::Fft<f64>>]) {
    let mut stride = 1;
    let mut line = Vec::new();
    for (axis, &n) in dims.iter().enumerate() {
        if n > 1 {
            let total = data.len();
            line.resize(n, Complex64::new(0.0, 0.0));
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    for k in 0..n {
                        line[k] = data[start + off + k * stride];
                    }
                    ffts[axis].process(&mut line);
                    for k in 0..n {
                        data[start + off + k * stride] = line[k];
                    }
                }
            }
        }
        stride *= n;
    }
}

impl CirculantField {
    fn build(grid: &GridSpec, model: &CovarianceModel, pad: usize) -> (Vec<usize>, Vec<f64>, Vec<Arc<dyn rustfft::Fft<f64>>>) {
        let dims: Vec<usize> = grid.points_per_axis.iter().map(|&n| if n > 1 { 2 * (n - 1) * pad } else { 1 }).collect();
        let total: usize = dims.iter().product();
        let mut planner = FftPlanner::new();
        let ffts: Vec<_> = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let mut c = vec![Complex64::new(0.0, 0.0); total];
        for (flat, v) in c.iter_mut().enumerate() {
            let mut rem = flat;
            let mut r2 = 0.0;
            for (k, &m) in dims.iter().enumerate() {
                let j = rem % m;
                rem /= m;
                let lag = j.min(m - j) as f64 * grid.spacing[k];
                r2 += lag * lag;
            }
            *v = Complex64::new(model.covariance(r2.sqrt()), 0.0);
        }
        fft_nd(&mut c, &dims, &ffts);
        (dims, c.iter().map(|z| z.re).collect(), ffts)
    }
}

impl PreparedField for CirculantField {
    fn method(&self) -> &'static str {
        "circulant"
    }
    fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    fn draw(&self, copies: usize, seed: u64) -> FieldSample {
        let total = self.scale.len();
        let mut values = Vec::with_capacity(copies);
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        let index_of = |flat: usize| -> usize {
            // grid flat index → embedding flat index
            let mut rem = flat;
            let mut out = 0;
            let mut stride = 1;
            for (k, &n) in self.grid.points_per_axis.iter().enumerate() {
                out += (rem % n) * stride;
                rem /= n;
                stride *= self.dims[k];
            }
            out
        };
        let idx: Vec<usize> = self.grid.active.iter().map(|&a| index_of(a)).collect();
        for pair in 0..copies.div_ceil(2) {
            let mut rng = stream(seed, &[pair as u64]);
            for (z, s) in buf.iter_mut().zip(&self.scale) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = Complex64::new(re * s, im * s);
            }
            fft_nd(&mut buf, &self.dims, &self.fft);
            values.push(idx.iter().map(|&i| buf[i].re).collect());
            if values.len() < copies {
                values.push(idx.iter().map(|&i| buf[i].im).collect());
            }
        }
        FieldSample { grid: self.grid.clone(), values, seed, copy_count: copies }
    }
}

struct CholeskyField {
    grid: Arc<GridSpec>,
    lower: DMatrix<f64>,
}

impl PreparedField for CholeskyField {
    fn method(&self) -> &'static str {
        "cholesky"
    }
    fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    fn draw(&self, copies: usize, seed: u64) -> FieldSample {
        let n = self.lower.nrows();
        let values = (0..copies)
            .map(|c| {
                let mut rng = stream(seed, &[c as u64, 0xc401]);
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&self.lower * z).iter().copied().collect()
            })
            .collect();
        FieldSample { grid: self.grid.clone(), values, seed, copy_count: copies }
    }
}

pub const MAX_PAD: usize = 8;
pub const EMBEDDING_TOL: f64 = 1e-10;
pub const CHOLESKY_JITTER: f64 = 1e-12;
pub const MAX_CHOLESKY_POINTS: usize = 8192;

/// Outcome of trying circulant embedding at increasing padding.
#[derive(Debug, Clone)]
pub struct EmbeddingReport {
    /// (pad, min eigenvalue / max eigenvalue)
    pub attempts: Vec<(usize, f64)>,
}

fn try_circulant(grid: &GridSpec, model: &CovarianceModel) -> std::result::Result<CirculantField, EmbeddingReport> {
    let mut attempts = Vec::new();
    let mut pad = 1;
    while pad <= MAX_PAD {
        let (dims, eig, fft) = CirculantField::build(grid, model, pad);
        let max = eig.iter().copied().fold(f64::MIN, f64::max);
        let min = eig.iter().copied().fold(f64::MAX, f64::min);
        attempts.push((pad, min / max));
        if min >= -EMBEDDING_TOL * max {
            let m = eig.len() as f64;
            let scale = eig.iter().map(|l| (l.max(0.0) / m).sqrt()).collect();
            return Ok(CirculantField { grid: Arc::new(grid.clone()), dims, scale, pad, fft });
        }
        pad *= 2;
    }
    Err(EmbeddingReport { attempts })
}

fn cholesky_field(grid: &GridSpec, model: &CovarianceModel, why: &str) -> Result<CholeskyField> {
    let n = grid.active.len();
    if n > MAX_CHOLESKY_POINTS {
        return Err(Error::SimulationInfeasible(format!("{why}; {n} active cells exceed the dense fallback limit {MAX_CHOLESKY_POINTS}")));
    }
    let centers: Vec<Vec<f64>> = grid.active.iter().map(|&i| grid.center(i)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let r = centers[i].iter().zip(&centers[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        model.covariance(r) + if i == j { CHOLESKY_JITTER } else { 0.0 }
    });
    match Cholesky::new(cov) {
        Some(c) => Ok(CholeskyField { grid: Arc::new(grid.clone()), lower: c.l() }),
        None => Err(Error::SimulationInfeasible(format!("{why}; dense Cholesky with jitter {CHOLESKY_JITTER:e} failed"))),
    }
}

struct CirculantSampler;
impl GaussianSampler for CirculantSampler {
    fn name(&self) -> &'static str {
        "circulant"
    }
    fn prepare(&self, grid: &GridSpec, model: &CovarianceModel) -> Result<Box<dyn PreparedField>> {
        try_circulant(grid, model)
            .map(|f| Box::new(f) as Box<dyn PreparedField>)
            .map_err(|r| Error::SimulationInfeasible(format!("circulant embedding not non-negative definite: {:?}", r.attempts)))
    }
}

struct CholeskySampler;
impl GaussianSampler for CholeskySampler {
    fn name(&self) -> &'static str {
        "cholesky"
    }
    fn prepare(&self, grid: &GridSpec, model: &CovarianceModel) -> Result<Box<dyn PreparedField>> {
        Ok(Box::new(cholesky_field(grid, model, "cholesky requested")?))
    }
}

/// Circulant embedding with padding, then dense Cholesky.
struct AutoSampler;
impl GaussianSampler for AutoSampler {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn prepare(&self, grid: &GridSpec, model: &CovarianceModel) -> Result<Box<dyn PreparedField>> {
        match try_circulant(grid, model) {
            Ok(f) => Ok(Box::new(f)),
            Err(r) => Ok(Box::new(cholesky_field(grid, model, &format!("embedding failed: {:?}", r.attempts))?)),
        }
    }
}

pub fn sampler_registry() -> Registry<dyn GaussianSampler> {
    let mut reg: Registry<dyn GaussianSampler> = Registry::new("gaussian sampler");
    reg.register("auto", |_| Ok(Box::new(AutoSampler)));
    reg.register("circulant", |_| Ok(Box::new(CirculantSampler)));
    reg.register("cholesky", |_| Ok(Box::new(CholeskySampler)));
    reg
}

/// Padding used by a circulant field, if that is the method.
pub fn embedding_pad(grid: &GridSpec, model: &CovarianceModel) -> Option<usize> {
    try_circulant(grid, model).ok().map(|f| f.pad)
}

pub fn sample_gaussian(grid: &GridSpec, model: &CovarianceModel, copies: usize, seed: u64) -> Result<FieldSample> {
    if copies == 0 {
        return domain("at least one copy is required");
    }
    Ok(AutoSampler.prepare(grid, model)?.draw(copies, seed))
}

/// χ²_r(x) = ½ Σ_j Y_j(x)².
pub fn chi_squared(sample: &FieldSample) -> FieldSample {
    let n = sample.values[0].len();
    let v = (0..n).map(|i| 0.5 * sample.values.iter().map(|c| c[i] * c[i]).sum::<f64>()).collect();
    FieldSample { grid: sample.grid.clone(), values: vec![v], seed: sample.seed, copy_count: 1 }
}

pub fn subordinate(sample: &FieldSample, f: &dyn Subordinator) -> Result<FieldSample> {
    if sample.values.len() != 1 {
        return domain("subordination needs a single-valued field");
    }
    let mut out = Vec::with_capacity(sample.values[0].len());
    for (k, &u) in sample.values[0].iter().enumerate() {
        let v = f.eval(u);
        if !v.is_finite() {
            let at = sample.grid.center(sample.grid.active[k]);
            return Err(Error::Evaluation(format!("{} is not finite at x = {:?} (input {u})", f.name(), at)));
        }
        out.push(v);
    }
    Ok(FieldSample { grid: sample.grid.clone(), values: vec![out], seed: sample.seed, copy_count: 1 })
}

/// −(1/√(2r)) Σ_j H₂(y_j): the first Laguerre polynomial of χ²_r written in the Gaussians.
pub fn e1_hermite_form(ys: &[f64]) -> f64 {
    let r = ys.len() as f64;
    -ys.iter().map(|&y| hermite(2, y)).sum::<f64>() / (2.0 * r).sqrt()
}

/// ¼ (r(r/2+1))^{-1/2} [Σ_{k≠j} H₂(y_k)H₂(y_j) + Σ_k H₄(y_k)], the second Laguerre polynomial of χ²_r.
pub fn e2_hermite_form(ys: &[f64]) -> f64 {
    let r = ys.len() as f64;
    let h2: Vec<f64> = ys.iter().map(|&y| hermite(2, y)).collect();
    let s: f64 = h2.iter().sum();
    let sq: f64 = h2.iter().map(|h| h * h).sum();
    let h4: f64 = ys.iter().map(|&y| hermite(4, y)).sum();
    0.25 / (r * (r / 2.0 + 1.0)).sqrt() * ((s * s - sq) + h4)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    /// (lag in cells along axis 0, correlation, standard error)
    pub correlations: Vec<(usize, f64, f64)>,
}

/// Mean, variance and lagged correlations of the first copy, pooled over the grid.
/// Standard errors treat cells as independent and are therefore optimistic under long memory.
pub fn empirical_moments(sample: &FieldSample, lags: &[usize]) -> MomentReport {
    let v = &sample.values[0];
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let g = &sample.grid;
    let pos: std::collections::HashMap<usize, usize> = g.active.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let correlations = lags
        .iter()
        .map(|&lag| {
            let mut s = 0.0;
            let mut cnt = 0usize;
            for (k, &flat) in g.active.iter().enumerate() {
                let i0 = flat % g.points_per_axis[0];
                if i0 + lag < g.points_per_axis[0] {
                    if let Some(&k2) = pos.get(&(flat + lag)) {
                        s += (v[k] - mean) * (v[k2] - mean);
                        cnt += 1;
                    }
                }
            }
            let c = if variance > 0.0 && cnt > 0 { s / cnt as f64 / variance } else if lag == 0 { 1.0 } else { 0.0 };
            (lag, c, ((1.0 - c * c).max(0.0) / (cnt.max(1) as f64)).sqrt())
        })
        .collect();
    MomentReport { mean, mean_se: (variance / n).sqrt(), variance, correlations }
}

#[derive(Serialize, Deserialize)]
struct DumpMeta {
    grid: GridSpec,
    model: Option<CovarianceModel>,
    seed: u64,
    copy_count: usize,
    values_per_copy: usize,
    layout: String,
}

/// Raw little-endian f64 values (copy-major) plus a `<path>.json` sidecar.
pub fn write_field_sample(sample: &FieldSample, model: Option<&CovarianceModel>, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * sample.values.iter().map(Vec::len).sum::<usize>());
    for c in &sample.values {
        for v in c {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    let meta = DumpMeta {
        grid: (*sample.grid).clone(),
        model: model.copied(),
        seed: sample.seed,
        copy_count: sample.copy_count,
        values_per_copy: sample.values.first().map_or(0, Vec::len),
        layout: "f64 little-endian, copy-major, active cells in grid order".into(),
    };
    std::fs::write(sidecar(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_field_sample(path: &Path) -> Result<(FieldSample, Option<CovarianceModel>)> {
    let meta: DumpMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != 8 * meta.copy_count * meta.values_per_copy {
        return Err(Error::Config(format!("{} has {} bytes, sidecar expects {}", path.display(), bytes.len(), 8 * meta.copy_count * meta.values_per_copy)));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let values = vals.chunks(meta.values_per_copy.max(1)).map(<[f64]>::to_vec).collect();
    Ok((FieldSample { grid: Arc::new(meta.grid), values, seed: meta.seed, copy_count: meta.copy_count }, meta.model))
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
