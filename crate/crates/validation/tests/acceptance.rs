//! End-to-end acceptance checks. Each check prints one PASS/FAIL line with the
//! measured quantities; the process exits non-zero if any check fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use chifield::domain_geometry::{rank1_oscillatory_identity, Domain, singular_moment};
use chifield::field_sim::{e1_hermite_form, e2_hermite_form, sample_gaussian, CovarianceModel, GridSpec};
use chifield::gamma_model::{bivariate_density_closed, bivariate_density_series};
use chifield::harness::{
    ks_compare, residuals_from_records, sample_variance, scaling_from_records, DomainSpec, Experiment, ExperimentConfig,
    FunctionSpec, DEFAULT_MAX_GRID_POINTS,
};
use chifield::limit_dist::{LevyRegime, Rank1Limit, Rank2Limit};
use chifield::specfun::{gamma_expectation_deg, laguerre_e, LaguerreBasis};
use chifield::spectral_operator::{fredholm_det, fredholm_det_series, nystrom_eigs, rank2_spectrum};
use num_complex::Complex64;
use serde_json::json;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn unit() -> Domain {
    Domain::interval(-1.0, 1.0).unwrap()
}

/// Cauchy model with β = 2, γ = 0.1 (α = 0.2), r = 2 on [-1, 1], four cells per unit length.
fn experiment(f: &str, params: serde_json::Value, rank: usize, t_list: Vec<f64>, replicates: usize, seed: u64) -> Experiment {
    Experiment::new(ExperimentConfig {
        model: CovarianceModel::cauchy(2.0, 0.1).unwrap(),
        domain: DomainSpec { shape: "interval".into(), params: json!({"a": -1.0, "b": 1.0}) },
        r: 2,
        f: FunctionSpec { name: f.into(), params },
        t_list,
        cells_per_unit: 4,
        replicates,
        seed,
        rank,
        sampler: "auto".into(),
        max_grid_points: DEFAULT_MAX_GRID_POINTS,
    })
    .unwrap()
}

const T_LIST: [f64; 5] = [32.0, 64.0, 128.0, 256.0, 512.0];

fn orthonormality() -> Outcome {
    let mut worst: f64 = 0.0;
    for beta in [0.5, 1.0, 2.5] {
        let basis = LaguerreBasis::new(beta, 12).unwrap();
        for k in 0..=12 {
            for m in k..=12 {
                let v = gamma_expectation_deg(|u| { let e = basis.eval_all(u); e[k] * e[m] }, beta, k + m, 1e-13).value;
                worst = worst.max((v - if k == m { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    outcome(worst < 1e-8, format!("max |<e_k,e_m> - delta| = {worst:.2e} (limit 1e-8)"))
}

fn hille_hardy() -> Outcome {
    let pts: Vec<f64> = (1..=5).map(|i| 0.1 + 7.9 * i as f64 / 6.0).collect();
    let mut worst: f64 = 0.0;
    for g in [0.1, 0.5, 0.9] {
        for b in [0.5, 1.0, 3.0] {
            for &u in &pts {
                for &w in &pts {
                    let c = bivariate_density_closed(u, w, g, b).unwrap();
                    let s = bivariate_density_series(u, w, g, b, 100).unwrap();
                    worst = worst.max((c - s).abs());
                }
            }
        }
    }
    outcome(worst < 1e-6, format!("sup |closed - series(100)| = {worst:.2e} (limit 1e-6)"))
}

fn hermite_identities() -> Outcome {
    // 10^4 cells of a simulated field: T = 1250 on [-1, 1] with 4 cells per unit
    let grid = GridSpec::new(&unit(), 1250.0, 4).unwrap();
    let model = CovarianceModel::cauchy(2.0, 0.1).unwrap();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for r in [1usize, 2, 5] {
        let beta = r as f64 / 2.0;
        let s = sample_gaussian(&grid, &model, r, 100 + r as u64).unwrap();
        points = s.values[0].len();
        for i in 0..points {
            let ys: Vec<f64> = s.values.iter().map(|c| c[i]).collect();
            let u = 0.5 * ys.iter().map(|y| y * y).sum::<f64>();
            let e1 = laguerre_e(1, beta, u).unwrap();
            let e2 = laguerre_e(2, beta, u).unwrap();
            worst = worst.max((e1 - e1_hermite_form(&ys)).abs() / (1.0 + e1.abs()));
            worst = worst.max((e2 - e2_hermite_form(&ys)).abs() / (1.0 + e2.abs()));
        }
    }
    outcome(worst < 1e-10, format!("{points} field points per r in {{1,2,5}}: max deviation {worst:.2e} (limit 1e-10)"))
}

fn trace_target() -> Outcome {
    let s = nystrom_eigs(&unit(), 0.25, 512).unwrap();
    let sum: f64 = s.eigenvalues.iter().map(|l| l * l).sum();
    let target = 16.0 * 2f64.sqrt() / 3.0;
    let rel = (sum / target - 1.0).abs();
    outcome(rel < 0.02, format!("sum lambda^2 = {sum:.6} vs {target:.6}, rel. error {rel:.4} (limit 0.02)"))
}

fn oscillatory_identity() -> Outcome {
    let (lhs, rhs) = rank1_oscillatory_identity(&unit(), 0.25).unwrap();
    let rel = (lhs / rhs - 1.0).abs();
    outcome(rel < 0.01, format!("quadrature {lhs:.6} vs [a nu / |D|]^2 = {rhs:.6}, rel. error {rel:.2e} (limit 0.01)"))
}

fn fredholm() -> Outcome {
    let s = nystrom_eigs(&unit(), 0.25, 512).unwrap();
    let l1 = s.eigenvalues[0];
    let mut worst: f64 = 0.0;
    for k in 0..64 {
        let w = Complex64::from_polar(0.5 / (l1 * l1) * (k % 16 + 1) as f64 / 16.0, k as f64 * 0.41);
        let p = fredholm_det(&s, w);
        let q = fredholm_det_series(&s, w).unwrap();
        worst = worst.max((p - q).norm() / p.norm().max(1.0));
    }
    outcome(worst < 1e-8, format!("64 points with |omega| <= 0.5/lambda1^2: max |product - series| = {worst:.2e} (limit 1e-8)"))
}

fn charfn_duality() -> Outcome {
    let l = Rank1Limit::new(2, &unit(), 0.25, 512).unwrap();
    let s = l.sample_all(1_000_000, 2024).unwrap();
    let n = s.values.len() as f64;
    let mut worst: f64 = 0.0;
    for z in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
        let e: Complex64 = s.values.iter().map(|&x| Complex64::from_polar(1.0, z * x)).sum::<Complex64>() / n;
        worst = worst.max((e - l.charfn(z)).norm());
    }
    let var = sample_variance(&s.values);
    let pass = worst < 0.01 && (var - 1.0).abs() < 0.02;
    outcome(pass, format!("alpha = 0.25, r = 2, 1e6 draws: max |ecf - phi| = {worst:.4} (limit 0.01), variance {var:.4} (1 +- 0.02)"))
}

fn variance_scaling() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1usize, 2] {
        let exp = experiment("laguerre", json!({"k": k}), k, T_LIST.to_vec(), 20_000, 80 + k as u64);
        let fit = scaling_from_records(&exp.run().unwrap());
        let target = 2.0 - 2.0 * k as f64 * 0.2;
        let ok = (fit.slope - target).abs() < 0.15;
        pass &= ok;
        parts.push(format!("k={k}: slope {:.3} +- {:.3} vs {target:.1}", fit.slope, fit.std_err));
    }
    outcome(pass, format!("alpha = 0.2, 20000 replicates, T = 32..512: {} (tolerance 0.15)", parts.join("; ")))
}

fn reduction() -> Outcome {
    let exp = experiment("square", json!({}), 1, T_LIST.to_vec(), 100_000, 90);
    let rows = residuals_from_records(&exp.run().unwrap(), exp.ck);
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    let last = *ratios.last().unwrap();
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    outcome(monotone && last < 0.1, format!("F(u) = u^2, 100000 replicates, ratios [{}]: monotone {monotone}, last {last:.4} (limit 0.1)", shown.join(", ")))
}

fn distributional() -> Outcome {
    let exp = experiment("laguerre", json!({"k": 1}), 1, vec![512.0], 2000, 100);
    let s: Vec<f64> = exp.run().unwrap()[0].iter().map(|r| r.s_value).collect();
    let lim = Rank1Limit::new(2, &unit(), 0.2, 512).unwrap();
    let y = lim.sample_all(200_000, 101).unwrap().values;
    let ks = ks_compare(&s, &y).unwrap();
    // same check with F(u) = u², whose rank-one part has coefficient C_1
    let sq = experiment("square", json!({}), 1, vec![512.0], 2000, 102);
    let s2: Vec<f64> = sq.run().unwrap()[0].iter().map(|r| r.s_value / sq.ck).collect();
    let ks2 = ks_compare(&s2, &y).unwrap();
    outcome(
        ks.statistic < 0.05,
        format!("F = e_1, T = 512, 2000 replicates vs 2e5 limit draws: KS {:.4} (p = {:.3}, limit 0.05); info: F = u^2 / C_1 gives {:.4}", ks.statistic, ks.p_value, ks2.statistic),
    )
}

fn levy() -> Outcome {
    let l = Rank1Limit::new(2, &unit(), 0.2, 512).unwrap();
    let l1 = l.lambda_s[0].abs();
    let mut worst_large: f64 = 0.0;
    for f in [20.0, 25.0, 30.0, 40.0, 60.0] {
        let u = f * l1;
        let ratio = l.levy_density(u).unwrap() / l.levy_asymptote(u, LevyRegime::LargeU).unwrap();
        worst_large = worst_large.max((ratio - 1.0).abs());
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut u = 1e-5;
    while u < 0.1 * l1 {
        let q = l.levy_density(u).unwrap();
        if l.levy_tail_bound(u) < 1e-3 * q {
            xs.push(u.ln());
            ys.push(q.ln());
        }
        u *= 1.1;
    }
    let (slope, _, _) = chifield::harness::ols(&xs, &ys);
    let want = l.small_u_slope();
    let rel = (slope / want - 1.0).abs();
    outcome(
        worst_large < 0.05 && rel < 0.05 && xs.len() > 10,
        format!("large-u max |ratio - 1| = {worst_large:.2e} (limit 0.05); small-u slope {slope:.4} vs {want:.4} over {} points, rel. {rel:.4} (limit 0.05)", xs.len()),
    )
}

/// Var S_{2,T} of the discretized field, exactly: Σ_ij B⁴(|x_i − x_j|) h² / norm², d = 1.
fn exact_rank2_variance(exp: &Experiment, t: f64) -> f64 {
    let grid = GridSpec::new(&exp.domain, t, exp.config.cells_per_unit).unwrap();
    let n = grid.active.len();
    let h = grid.spacing[0];
    let m = &exp.config.model;
    let s: f64 = (0..n).map(|lag| if lag == 0 { n as f64 } else { 2.0 * (n - lag) as f64 } * m.covariance(lag as f64 * h).powi(4)).sum();
    s * h * h / exp.normalization(t).powi(2)
}

fn rank2_chain() -> Outcome {
    let spec = rank2_spectrum(&unit(), 0.2, "spectral_grid", &json!({"m": 64})).unwrap();
    let norm_err = spec.weight_norm_errors().into_iter().fold(0.0, f64::max);
    let n = spec.mu.len();
    let lim = Rank2Limit::new(2, spec, n, usize::MAX).unwrap();
    let draws = lim.sample(50_000, 120).values;
    let count = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / count;
    let var_lim = sample_variance(&draws);
    let mean_ok = mean.abs() < 3.0 * (var_lim / count).sqrt();

    let exp = experiment("laguerre", json!({"k": 2}), 2, vec![512.0], 20_000, 121);
    let s: Vec<f64> = exp.run().unwrap()[0].iter().map(|r| r.s_value).collect();
    let var_t = sample_variance(&s);
    let rel = (var_t / var_lim - 1.0).abs();
    let exact = exact_rank2_variance(&exp, 512.0);

    // information only: the finite-T gap closes like T^{-(1 - 4α)}, much faster at α = 0.1
    let small = Experiment::new(ExperimentConfig { model: CovarianceModel::cauchy(2.0, 0.05).unwrap(), ..exp.config.clone() }).unwrap();
    let s_small: Vec<f64> = small.run().unwrap()[0].iter().map(|r| r.s_value).collect();

    outcome(
        mean_ok && rel < 0.15 && norm_err < 1e-3,
        format!(
            "sampler mean {mean:.4} (3 SE = {:.4}), sampler variance {var_lim:.4}; Var S_2,T at T = 512: {var_t:.4} from 20000 replicates (exact for the grid {exact:.4}), rel. gap {rel:.3} (limit 0.15); max |sum gamma^2 - 1| = {norm_err:.1e} (limit 1e-3); info: alpha = 0.1 gives Var S_2,T = {:.4} (exact {:.4})",
            3.0 * (var_lim / count).sqrt(),
            sample_variance(&s_small),
            exact_rank2_variance(&small, 512.0)
        ),
    )
}

fn main() {
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("Laguerre orthonormality", orthonormality),
        ("Hille-Hardy closed form vs series", hille_hardy),
        ("Laguerre-Hermite identities", hermite_identities),
        ("Riesz trace target", trace_target),
        ("Oscillatory identity", oscillatory_identity),
        ("Fredholm determinant product vs series", fredholm),
        ("Characteristic function vs sampler", charfn_duality),
        ("Variance scaling", variance_scaling),
        ("Reduction principle", reduction),
        ("Distributional convergence", distributional),
        ("Levy density asymptotics", levy),
        ("Rank-two chain", rank2_chain),
    ];
    // keep the singular-moment cache warm for the interval so timings reflect the checks
    let _ = singular_moment(&unit(), 0.4);
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status}  {name}: {} [{:.1}s]", i + 1, out.detail, start.elapsed().as_secs_f64());
        if !out.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", checks.len());
    } else {
        println!("acceptance: {} of {} criteria fail: {:?}", failed.len(), checks.len(), failed);
        std::process::exit(1);
    }
}
