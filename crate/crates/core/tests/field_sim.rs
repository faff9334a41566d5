use chifield::domain_geometry::Domain;
use chifield::field_sim::*;
use chifield::gamma_model::subordinator;
use chifield::specfun::laguerre_e;
use chifield::Error;
use proptest::prelude::*;
use serde_json::json;

fn unit() -> Domain {
    Domain::interval(-1.0, 1.0).unwrap()
}

#[test]
fn model_basics() {
    assert!(CovarianceModel::cauchy(2.5, 0.1).is_err());
    assert!(CovarianceModel::cauchy(1.0, 0.0).is_err());
    let m = CovarianceModel::cauchy(2.0, 0.1).unwrap();
    assert!((m.alpha() - 0.2).abs() < 1e-15);
    assert_eq!(m.covariance(0.0), 1.0);
    assert!((m.slowly_varying(1e6) - 1.0).abs() < 1e-12);
    assert!((m.covariance(3.0) - 10f64.powf(-0.1)).abs() < 1e-15);
    assert!(m.check_rank(1, 2).is_ok());
    assert!(matches!(CovarianceModel::cauchy(1.0, 0.3).unwrap().check_rank(1, 2), Err(Error::Config(_))));
    assert!(CovarianceModel::cauchy(1.0, 0.6).unwrap().check_rank(1, 1).is_err());
}

#[test]
fn grid_geometry() {
    let g = GridSpec::new(&unit(), 8.0, 4).unwrap();
    assert_eq!(g.points_per_axis, vec![64]);
    assert_eq!(g.active.len(), 64);
    assert!((g.cell_volume - 0.25).abs() < 1e-15);
    assert!((g.active_volume() - 16.0).abs() < 1e-12);
    let disk = GridSpec::new(&Domain::ball(1.0, 2).unwrap(), 10.0, 2).unwrap();
    assert_eq!(disk.points_per_axis, vec![40, 40]);
    let area = disk.active_volume();
    assert!((area / (std::f64::consts::PI * 100.0) - 1.0).abs() < 0.02, "{area}");
    assert!(GridSpec::new(&unit(), -1.0, 4).is_err());
    assert!(GridSpec::new(&unit(), 1.0, 0).is_err());
}

fn empirical_cov(samples: &[Vec<f64>], lag: usize) -> f64 {
    let n = samples[0].len();
    let mut s = 0.0;
    let mut c = 0usize;
    for v in samples {
        for i in 0..n - lag {
            s += v[i] * v[i + lag];
            c += 1;
        }
    }
    s / c as f64
}

#[test]
fn circulant_covariance() {
    let m = CovarianceModel::cauchy(1.0, 0.3).unwrap();
    let g = GridSpec::new(&unit(), 16.0, 2).unwrap();
    let p = sampler_registry().build("circulant", &json!({})).unwrap().prepare(&g, &m).unwrap();
    assert_eq!(p.method(), "circulant");
    let mut all = Vec::new();
    for rep in 0..400 {
        all.extend(p.draw(2, rep).values);
    }
    for lag in [0usize, 1, 4, 16] {
        let want = m.covariance(lag as f64 * g.spacing[0]);
        let got = empirical_cov(&all, lag);
        // long memory inflates the error; 0.05 is several standard errors here
        assert!((got - want).abs() < 0.05, "lag {lag}: {got} vs {want}");
    }
    // copies of one draw are uncorrelated
    let s = p.draw(2, 0);
    assert_eq!(s.values.len(), 2);
    assert_eq!(p.draw(3, 5).values.len(), 3);
    assert_eq!(p.draw(2, 5).values, p.draw(2, 5).values);
    assert_ne!(p.draw(2, 5).values, p.draw(2, 6).values);
}

#[test]
fn cholesky_fallback() {
    let m = CovarianceModel::cauchy(2.0, 0.1).unwrap();
    let g = GridSpec::new(&unit(), 32.0, 4).unwrap();
    assert_eq!(embedding_pad(&g, &m), None);
    let circ = sampler_registry().build("circulant", &json!({})).unwrap().prepare(&g, &m);
    assert!(matches!(circ, Err(Error::SimulationInfeasible(_))));
    let auto = sampler_registry().build("auto", &json!({})).unwrap().prepare(&g, &m).unwrap();
    assert_eq!(auto.method(), "cholesky");
    let mut all = Vec::new();
    for rep in 0..200 {
        all.extend(auto.draw(2, rep).values);
    }
    for lag in [0usize, 2, 8] {
        let want = m.covariance(lag as f64 * g.spacing[0]);
        assert!((empirical_cov(&all, lag) - want).abs() < 0.05);
    }
    let big = GridSpec::new(&unit(), 256.0, 4).unwrap();
    assert!(embedding_pad(&big, &m).is_some());
    assert!(sampler_registry().build("nope", &json!({})).is_err());
}

#[test]
fn two_dimensional_field() {
    let m = CovarianceModel::cauchy(1.0, 0.3).unwrap();
    let g = GridSpec::new(&Domain::ball(1.0, 2).unwrap(), 6.0, 2).unwrap();
    let s = sample_gaussian(&g, &m, 2, 3).unwrap();
    assert_eq!(s.values[0].len(), g.active.len());
    let mut all = Vec::new();
    for rep in 0..300 {
        all.extend(sample_gaussian(&g, &m, 2, rep).unwrap().values);
    }
    let var: f64 = all.iter().flatten().map(|v| v * v).sum::<f64>() / (all.len() * all[0].len()) as f64;
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn chi_squared_and_subordination() {
    let m = CovarianceModel::cauchy(1.0, 0.2).unwrap();
    let g = GridSpec::new(&unit(), 64.0, 2).unwrap();
    let mut total = 0.0;
    let mut count = 0.0;
    for rep in 0..50 {
        let s = sample_gaussian(&g, &m, 3, rep).unwrap();
        let c = chi_squared(&s);
        assert!(c.values[0].iter().all(|v| *v >= 0.0));
        total += c.values[0].iter().sum::<f64>();
        count += c.values[0].len() as f64;
    }
    assert!((total / count - 1.5).abs() < 0.1);
    let c = chi_squared(&sample_gaussian(&g, &m, 2, 0).unwrap());
    let sq = subordinate(&c, &*subordinator("square", |u| u * u)).unwrap();
    assert!((sq.values[0][7] - c.values[0][7].powi(2)).abs() < 1e-15);
    let bad = subordinate(&c, &*subordinator("log", |u: f64| (u - 1e9).ln()));
    assert!(matches!(bad, Err(Error::Evaluation(_))));
}

#[test]
fn laguerre_hermite_identities() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for r in [1usize, 2, 5] {
        let beta = r as f64 / 2.0;
        for _ in 0..10_000 {
            let ys: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 2.0).collect();
            let u = 0.5 * ys.iter().map(|y| y * y).sum::<f64>();
            let e1 = laguerre_e(1, beta, u).unwrap();
            let e2 = laguerre_e(2, beta, u).unwrap();
            assert!((e1 - e1_hermite_form(&ys)).abs() < 1e-10 * (1.0 + e1.abs()));
            assert!((e2 - e2_hermite_form(&ys)).abs() < 1e-10 * (1.0 + e2.abs()), "r={r}: {e2} vs {}", e2_hermite_form(&ys));
        }
    }
}

#[test]
fn moments_report() {
    let m = CovarianceModel::cauchy(1.0, 0.2).unwrap();
    let g = GridSpec::new(&unit(), 256.0, 2).unwrap();
    let s = sample_gaussian(&g, &m, 1, 9).unwrap();
    let rep = empirical_moments(&s, &[0, 1, 10]);
    assert!((rep.correlations[0].1 - 1.0).abs() < 1e-12);
    assert!(rep.variance > 0.0 && rep.mean_se > 0.0);
    assert!(rep.correlations[1].1 > rep.correlations[2].1);
}

#[test]
fn dump_round_trip() {
    let m = CovarianceModel::cauchy(1.0, 0.2).unwrap();
    let g = GridSpec::new(&unit(), 8.0, 2).unwrap();
    let s = sample_gaussian(&g, &m, 2, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.bin");
    write_field_sample(&s, Some(&m), &path).unwrap();
    let (back, model) = read_field_sample(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(model, Some(m));
    std::fs::write(&path, [0u8; 5]).unwrap();
    assert!(read_field_sample(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn covariance_is_decreasing_and_bounded(b in 0.2f64..2.0, g in 0.05f64..1.0, r in 0.0f64..100.0) {
        let m = CovarianceModel::cauchy(b, g).unwrap();
        let c = m.covariance(r);
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert!(m.covariance(r + 0.5) <= c);
        prop_assert!(m.slowly_varying(r + 1.0) <= 1.0);
    }

    #[test]
    fn draws_are_deterministic(seed in 0u64..1000, copies in 1usize..4) {
        let m = CovarianceModel::cauchy(1.0, 0.3).unwrap();
        let g = GridSpec::new(&unit(), 4.0, 2).unwrap();
        prop_assert_eq!(sample_gaussian(&g, &m, copies, seed).unwrap().values, sample_gaussian(&g, &m, copies, seed).unwrap().values);
    }
}
