use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chifield::gamma_model::{laguerre_coeffs, laguerre_rank_upto, subordinator_registry, DEFAULT_RANK_TOL};
use chifield::harness::{
    ks_compare, reduction_residual, variance_scaling, DomainSpec, Experiment, ExperimentConfig, ReportRecord,
};
use chifield::limit_dist::{LevyRegime, Rank1Limit, Rank2Limit};
use chifield::spectral_operator::{cyclic_integral, nystrom_eigs, rank2_spectrum, OperatorSpectrum};
use chifield::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "chifield", version, about = "Chi-squared random fields, their functionals and limit laws")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Out {
    /// CSV destination; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DomainArgs {
    /// interval, ball or rectangle
    #[arg(long, default_value = "interval")]
    domain: String,
    /// Shape parameters as JSON, e.g. '{"a": -1, "b": 1}' or '{"radius": 1, "d": 2}'
    #[arg(long, default_value = "{}")]
    domain_params: String,
}

#[derive(Args, Clone)]
struct FnArgs {
    /// Subordinating function name (identity, square, power, constant, polynomial, laguerre, rank2_quadratic)
    #[arg(long = "f", default_value = "square")]
    f: String,
    /// Function parameters as JSON
    #[arg(long, default_value = "{}")]
    params: String,
    /// Degrees of freedom; the Gamma shape is r/2
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 8)]
    q_max: usize,
}

#[derive(Args, Clone)]
struct LimitArgs {
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Galerkin cells used for the eigenvalues
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Reuse a spectrum written by `eigs --json`
    #[arg(long)]
    spectrum: Option<PathBuf>,
    #[command(flatten)]
    dom: DomainArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Laguerre rank of a subordinating function
    Rank {
        #[command(flatten)]
        f: FnArgs,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Laguerre coefficients C_0..C_qmax
    Coeffs {
        #[command(flatten)]
        f: FnArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Per-replicate functionals for an experiment config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Eigenvalues of the Riesz operator on a domain
    Eigs {
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[command(flatten)]
        dom: DomainArgs,
        /// Also write the full spectrum (with metadata) as JSON
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Characteristic function of the rank-one limit
    Charfn {
        /// Comma-separated arguments
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        z: Vec<f64>,
        #[command(flatten)]
        lim: LimitArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Draws from the rank-one or rank-two limit law
    SampleLimit {
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 10000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Rank-two spectrum strategy (direct or spectral_grid)
        #[arg(long, default_value = "direct")]
        strategy: String,
        #[arg(long, default_value = "{}")]
        strategy_params: String,
        #[command(flatten)]
        lim: LimitArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Lévy density of the rank-one limit with its asymptotes
    Levy {
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1")]
        u: Vec<f64>,
        #[command(flatten)]
        lim: LimitArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Log-log variance scaling of the rank-k basis integral
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Reduction residual ratios per T
    Reduce {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Two-sample Kolmogorov–Smirnov test on single-column CSV files
    Ks {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Cyclic integrals c_m of the Riesz kernel
    Cyclic {
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        m: Vec<usize>,
        /// spectral or montecarlo
        #[arg(long, default_value = "spectral")]
        method: String,
        #[arg(long, default_value = "{}")]
        method_params: String,
        #[command(flatten)]
        dom: DomainArgs,
        #[command(flatten)]
        out: Out,
    },
}

fn json_arg(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{what} is not valid JSON: {e}")))
}

fn domain_of(d: &DomainArgs) -> Result<chifield::domain_geometry::Domain> {
    DomainSpec { shape: d.domain.clone(), params: json_arg(&d.domain_params, "--domain-params")? }.build()
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn write_rows<T: Serialize>(out: &Out, rows: &[T]) -> Result<()> {
    let sink: Box<dyn Write> = match &out.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

fn rank1_limit(lim: &LimitArgs) -> Result<Rank1Limit> {
    match &lim.spectrum {
        Some(p) => {
            let spec: OperatorSpectrum = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            Rank1Limit::from_spectrum(lim.r, &spec)
        }
        None => Rank1Limit::new(lim.r, &domain_of(&lim.dom)?, lim.alpha, lim.n),
    }
}

fn subordinator_params(f: &FnArgs) -> Result<Value> {
    let mut p = json_arg(&f.params, "--params")?;
    if p.is_null() {
        p = Value::Object(Default::default());
    }
    if let Value::Object(m) = &mut p {
        m.entry("r").or_insert(Value::from(f.r));
    }
    Ok(p)
}

#[derive(Serialize)]
struct CoeffRow {
    k: usize,
    coeff: f64,
}

#[derive(Serialize)]
struct RankRow {
    rank: usize,
    norm: f64,
    c_rank: f64,
}

#[derive(Serialize)]
struct EigRow {
    index: usize,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct CharRow {
    z: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct ValueRow {
    value: f64,
}

#[derive(Serialize)]
struct LevyRow {
    u: f64,
    density: f64,
    tail_bound: f64,
    small_u: f64,
    large_u: f64,
}

#[derive(Serialize)]
struct CyclicRow {
    m: usize,
    value: f64,
    std_err: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Rank { f, tol, out } => {
            let func = subordinator_registry().build(&f.f, &subordinator_params(&f)?)?;
            let rep = laguerre_rank_upto(func.as_ref(), f.r as f64 / 2.0, tol, f.q_max)?;
            write_rows(&out, &[RankRow { rank: rep.rank, norm: rep.norm, c_rank: rep.coeffs[rep.rank] }])
        }
        Cmd::Coeffs { f, out } => {
            let func = subordinator_registry().build(&f.f, &subordinator_params(&f)?)?;
            let c = laguerre_coeffs(func.as_ref(), f.r as f64 / 2.0, f.q_max)?;
            write_rows(&out, &c.iter().enumerate().map(|(k, &coeff)| CoeffRow { k, coeff }).collect::<Vec<_>>())
        }
        Cmd::Simulate { config, out } => {
            let exp = Experiment::new(load_config(&config)?)?;
            let rows: Vec<ReportRecord> = exp.run()?.into_iter().flatten().collect();
            write_rows(&out, &rows)
        }
        Cmd::Eigs { alpha, n, dom, json, out } => {
            let spec = nystrom_eigs(&domain_of(&dom)?, alpha, n)?;
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_string(&spec)?)?;
            }
            let rows: Vec<EigRow> = spec.eigenvalues.iter().enumerate().map(|(i, &eigenvalue)| EigRow { index: i + 1, eigenvalue }).collect();
            write_rows(&out, &rows)
        }
        Cmd::Charfn { z, lim, out } => {
            let l = rank1_limit(&lim)?;
            let rows: Vec<CharRow> = z
                .iter()
                .map(|&z| {
                    let p = l.charfn(z);
                    CharRow { z, re: p.re, im: p.im }
                })
                .collect();
            write_rows(&out, &rows)
        }
        Cmd::SampleLimit { rank, count, seed, strategy, strategy_params, lim, out } => {
            let s = match rank {
                1 => rank1_limit(&lim)?.sample_all(count, seed)?,
                2 => {
                    let spec = rank2_spectrum(&domain_of(&lim.dom)?, lim.alpha, &strategy, &json_arg(&strategy_params, "--strategy-params")?)?;
                    let (n, p) = (spec.mu.len(), usize::MAX);
                    Rank2Limit::new(lim.r, spec, n, p)?.sample(count, seed)
                }
                _ => return Err(Error::Config(format!("--rank must be 1 or 2, got {rank}"))),
            };
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
            write_rows(&out, &s.values.iter().map(|&value| ValueRow { value }).collect::<Vec<_>>())
        }
        Cmd::Levy { u, lim, out } => {
            let l = rank1_limit(&lim)?;
            let rows = u
                .iter()
                .map(|&u| {
                    Ok(LevyRow {
                        u,
                        density: l.levy_density(u)?,
                        tail_bound: l.levy_tail_bound(u),
                        small_u: l.levy_asymptote(u, LevyRegime::SmallU)?,
                        large_u: l.levy_asymptote(u, LevyRegime::LargeU)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_rows(&out, &rows)
        }
        Cmd::Scaling { config, out } => {
            let fit = variance_scaling(&load_config(&config)?)?;
            eprintln!("slope {} (standard error {})", fit.slope, fit.std_err);
            write_rows(&out, &fit.rows)
        }
        Cmd::Reduce { config, out } => write_rows(&out, &reduction_residual(&load_config(&config)?)?),
        Cmd::Ks { a, b, out } => {
            let r = ks_compare(&read_column(&a)?, &read_column(&b)?)?;
            write_rows(&out, &[r])
        }
        Cmd::Cyclic { alpha, m, method, method_params, dom, out } => {
            let d = domain_of(&dom)?;
            let params = json_arg(&method_params, "--method-params")?;
            let rows = m
                .iter()
                .map(|&m| cyclic_integral(&d, alpha, m, &method, &params).map(|e| CyclicRow { m, value: e.value, std_err: e.std_err }))
                .collect::<Result<Vec<_>>>()?;
            write_rows(&out, &rows)
        }
    }
}

/// First column of a CSV file; a non-numeric first row is taken as a header.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let field = rec.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => vals.push(v),
            Err(_) if i == 0 => {}
            Err(_) => return Err(Error::Config(format!("{}: row {} is not a number: '{field}'", path.display(), i + 1))),
        }
    }
    Ok(vals)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("CHIFIELD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool can only be installed once; ignore the error if something already did
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
