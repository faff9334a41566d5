//! Monte Carlo experiments on the normalized integrals of subordinated
//! chi-squared fields: variance scaling, reduction residuals and KS checks.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain_geometry::{singular_moment, Domain};
use crate::error::{Error, Result};
use crate::field_sim::{sampler_registry, CovarianceModel, FieldSample, GridSpec, PreparedField};
use crate::gamma_model::{laguerre_coeffs, laguerre_rank, subordinator_registry, Subordinator, DEFAULT_RANK_TOL};
use crate::rng::derive_seed;
use crate::specfun::LaguerreBasis;

/// Default cap on grid points (bounding box of D(T) at the largest T).
pub const DEFAULT_MAX_GRID_POINTS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: String,
    #[serde(default)]
    pub params: Value,
}

impl DomainSpec {
    /// `interval {a, b}` (default [-1, 1]), `ball {radius, d}`, `rectangle {bounds: [[a, b], ...]}`.
    pub fn build(&self) -> Result<Domain> {
        let p = &self.params;
        let num = |k: &str, dflt: f64| -> Result<f64> {
            match p.get(k) {
                None | Some(Value::Null) => Ok(dflt),
                Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("domain parameter '{k}' must be a number"))),
            }
        };
        match self.shape.as_str() {
            "interval" => Domain::interval(num("a", -1.0)?, num("b", 1.0)?),
            "ball" => {
                let d = p.get("d").and_then(Value::as_u64).unwrap_or(1) as usize;
                Domain::ball(num("radius", 1.0)?, d)
            }
            "rectangle" => {
                let bounds: Vec<(f64, f64)> = serde_json::from_value(p.get("bounds").cloned().unwrap_or(Value::Null))
                    .map_err(|e| Error::Config(format!("rectangle bounds: {e}")))?;
                Domain::rectangle(bounds)
            }
            other => Err(Error::Config(format!("unknown domain shape '{other}' (known: interval, ball, rectangle)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: CovarianceModel,
    pub domain: DomainSpec,
    pub r: usize,
    #[serde(rename = "F")]
    pub f: FunctionSpec,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub cells_per_unit: usize,
    pub replicates: usize,
    pub seed: u64,
    pub rank: usize,
    /// Gaussian sampler name; `auto` tries circulant embedding, then Cholesky.
    #[serde(default = "default_sampler")]
    pub sampler: String,
    #[serde(default = "default_budget")]
    pub max_grid_points: usize,
}

fn default_sampler() -> String {
    "auto".into()
}

fn default_budget() -> usize {
    DEFAULT_MAX_GRID_POINTS
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad experiment config: {e}")))?;
        Ok(cfg)
    }
}

/// One replicate at one T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportRecord {
    #[serde(rename = "T")]
    pub t: f64,
    pub replicate: usize,
    /// S_T(F)
    pub s_value: f64,
    /// S_{k,T}: the same normalization applied to ∫e_k
    pub s_basis: f64,
    /// ∫_{D(T)} e_k, unnormalized
    pub basis_integral: f64,
}

/// Grid, prepared sampler and normalizing constant for one T.
pub struct Stage {
    pub t: f64,
    pub grid: Arc<GridSpec>,
    pub field: Box<dyn PreparedField>,
    /// a_{d,k} L^k(T) T^{d−kα}
    pub norm: f64,
}

/// A validated configuration with everything that does not depend on T.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub domain: Domain,
    pub f: Box<dyn Subordinator>,
    /// C_0 and C_k of F
    pub c0: f64,
    pub ck: f64,
    /// a_{d,k}
    pub a: f64,
    basis: LaguerreBasis,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let c = &config;
        c.model.validate()?;
        let dom = c.domain.build()?;
        let d = dom.dim();
        if c.r == 0 {
            return Err(Error::Config("r must be a positive integer".into()));
        }
        if !(c.rank == 1 || c.rank == 2) {
            return Err(Error::Config(format!("rank must be 1 or 2, got {}", c.rank)));
        }
        c.model.check_rank(d, c.rank)?;
        if c.t_list.is_empty() || c.t_list.iter().any(|t| !(*t > 0.0)) || c.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("T_list must be non-empty, positive and strictly increasing".into()));
        }
        if c.cells_per_unit == 0 || c.replicates == 0 {
            return Err(Error::Config("cells_per_unit and replicates must be positive".into()));
        }
        let t_max = *c.t_list.last().unwrap();
        let points: f64 = dom.bounding_box().iter().map(|(a, b)| ((b - a) * t_max * c.cells_per_unit as f64).round().max(1.0)).product();
        if points > c.max_grid_points as f64 {
            return Err(Error::Config(format!("largest grid has {points} points, budget is {}", c.max_grid_points)));
        }
        sampler_registry().build(&c.sampler, &Value::Null)?;

        let beta = c.r as f64 / 2.0;
        let mut params = if c.f.params.is_null() { Value::Object(Default::default()) } else { c.f.params.clone() };
        if let Value::Object(m) = &mut params {
            m.entry("r").or_insert(Value::from(c.r));
        }
        let f = subordinator_registry().build(&c.f.name, &params)?;
        let coeffs = laguerre_coeffs(f.as_ref(), beta, c.rank)?;
        let a = singular_moment(&dom, 2.0 * c.rank as f64 * c.model.alpha())?.value.sqrt();
        let c0 = f.exact_mean(beta).unwrap_or(coeffs[0]);
        Ok(Experiment { c0, ck: coeffs[c.rank], a, f, domain: dom, basis: LaguerreBasis::new(beta, c.rank)?, config })
    }

    pub fn rank(&self) -> usize {
        self.config.rank
    }

    /// a_{d,k} L^k(T) T^{d−kα}.
    pub fn normalization(&self, t: f64) -> f64 {
        let k = self.rank() as f64;
        let d = self.domain.dim() as f64;
        let m = &self.config.model;
        self.a * m.slowly_varying(t).powf(k) * t.powf(d - k * m.alpha())
    }

    pub fn stage(&self, t: f64) -> Result<Stage> {
        let grid = GridSpec::new(&self.domain, t, self.config.cells_per_unit)?;
        let sampler = sampler_registry().build(&self.config.sampler, &Value::Null)?;
        let field = sampler.prepare(&grid, &self.config.model)?;
        Ok(Stage { t, grid: field.grid().clone(), field, norm: self.normalization(t) })
    }

    pub fn replicate_seed(&self, t_index: usize, replicate: usize) -> u64 {
        derive_seed(self.config.seed, &[t_index as u64, replicate as u64])
    }

    /// The r Gaussian copies for one replicate.
    pub fn draw(&self, stage: &Stage, seed: u64) -> FieldSample {
        stage.field.draw(self.config.r, seed)
    }

    /// (S_T(F), ∫e_k) from one set of Gaussian copies.
    pub fn evaluate(&self, stage: &Stage, sample: &FieldSample) -> Result<(f64, f64)> {
        let n = sample.values[0].len();
        let k = self.rank();
        let mut sum_f = 0.0;
        let mut sum_e = 0.0;
        for i in 0..n {
            let u = 0.5 * sample.values.iter().map(|c| c[i] * c[i]).sum::<f64>();
            let v = self.f.eval(u);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("{} is not finite at chi-squared value {u}", self.f.name())));
            }
            sum_f += v - self.c0;
            sum_e += self.basis.eval(k, u);
        }
        // Σ(F − C₀)·vol is Σ F·vol minus C₀ times the summed active cell volume.
        let vol = stage.grid.cell_volume;
        Ok((vol * sum_f / stage.norm, vol * sum_e))
    }

    pub fn record(&self, stage: &Stage, t_index: usize, replicate: usize) -> Result<ReportRecord> {
        let sample = self.draw(stage, self.replicate_seed(t_index, replicate));
        let (s_value, basis_integral) = self.evaluate(stage, &sample)?;
        Ok(ReportRecord { t: stage.t, replicate, s_value, s_basis: basis_integral / stage.norm, basis_integral })
    }

    /// All replicates at T_list[t_index], in replicate order.
    pub fn run_stage(&self, t_index: usize) -> Result<Vec<ReportRecord>> {
        let stage = self.stage(self.config.t_list[t_index])?;
        (0..self.config.replicates).into_par_iter().map(|i| self.record(&stage, t_index, i)).collect()
    }

    pub fn run(&self) -> Result<Vec<Vec<ReportRecord>>> {
        (0..self.config.t_list.len()).map(|i| self.run_stage(i)).collect()
    }
}

/// S_T(F) for a single replicate seed.
pub fn functional_st(config: &ExperimentConfig, t: f64, replicate_seed: u64) -> Result<f64> {
    let exp = Experiment::new(config.clone())?;
    let stage = exp.stage(t)?;
    let sample = exp.draw(&stage, replicate_seed);
    Ok(exp.evaluate(&stage, &sample)?.0)
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub variance: f64,
    /// Var S_{k,T}, which tends to 1
    pub normalized_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub std_err: f64,
    pub intercept: f64,
    pub rows: Vec<ScalingRow>,
}

/// Least-squares line through (x, y): (slope, its standard error, intercept).
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se, intercept)
}

fn need(config: &ExperimentConfig, t_min: usize, rep_min: usize) -> Result<()> {
    if config.t_list.len() < t_min {
        return Err(Error::Statistics(format!("need at least {t_min} values in T_list, got {}", config.t_list.len())));
    }
    if config.replicates < rep_min {
        return Err(Error::Statistics(format!("need at least {rep_min} replicates, got {}", config.replicates)));
    }
    Ok(())
}

/// Fit of log Var ∫_{D(T)} e_k on log T over already simulated records.
pub fn scaling_from_records(records: &[Vec<ReportRecord>]) -> ScalingFit {
    let rows: Vec<ScalingRow> = records
        .iter()
        .map(|recs| {
            let raw: Vec<f64> = recs.iter().map(|r| r.basis_integral).collect();
            let norm: Vec<f64> = recs.iter().map(|r| r.s_basis).collect();
            ScalingRow { t: recs[0].t, variance: sample_variance(&raw), normalized_variance: sample_variance(&norm) }
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let (slope, std_err, intercept) = ols(&x, &y);
    ScalingFit { slope, std_err, intercept, rows }
}

pub fn variance_scaling(config: &ExperimentConfig) -> Result<ScalingFit> {
    need(config, 4, 100)?;
    let exp = Experiment::new(config.clone())?;
    Ok(scaling_from_records(&exp.run()?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub var_s: f64,
    pub var_residual: f64,
    pub ratio: f64,
}

pub fn residuals_from_records(records: &[Vec<ReportRecord>], ck: f64) -> Vec<ResidualRow> {
    records
        .iter()
        .map(|recs| {
            let s: Vec<f64> = recs.iter().map(|r| r.s_value).collect();
            let d: Vec<f64> = recs.iter().map(|r| r.s_value - ck * r.s_basis).collect();
            let (var_s, var_residual) = (sample_variance(&s), sample_variance(&d));
            ResidualRow { t: recs[0].t, var_s, var_residual, ratio: var_residual / var_s }
        })
        .collect()
}

/// Var[S_T(F) − C_k S_{k,T}] / Var[S_T(F)] per T, both terms from the same field draws.
pub fn reduction_residual(config: &ExperimentConfig) -> Result<Vec<ResidualRow>> {
    need(config, 1, 100)?;
    let exp = Experiment::new(config.clone())?;
    let detected = laguerre_rank(exp.f.as_ref(), config.r as f64 / 2.0, DEFAULT_RANK_TOL)?;
    if detected.rank != config.rank {
        return Err(Error::Config(format!("F has Laguerre rank {}, config says {}", detected.rank, config.rank)));
    }
    Ok(residuals_from_records(&exp.run()?, exp.ck))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let t = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov distance with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn ks_compare(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 100 || b.len() < 100 {
        return Err(Error::Statistics(format!("KS needs at least 100 values per sample, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Statistics("KS input contains non-finite values".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut dmax) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        dmax = dmax.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    Ok(KsResult { statistic: dmax, p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * dmax) })
}
