use chifield::specfun::*;
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

// explicit-sum oracle for L_k^{(a)}, independent of the recurrence
fn laguerre_explicit(k: usize, a: f64, u: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..=k {
        // C(k+a, k-i) = Π_{j=1}^{k-i} (a+i+j)/j
        let binom: f64 = (1..=k - i).map(|j| (a + (i + j) as f64) / j as f64).product();
        let fact: f64 = (1..=i).map(|j| j as f64).product();
        s += if i % 2 == 0 { 1.0 } else { -1.0 } * binom * u.powi(i as i32) / fact;
    }
    s
}

#[test]
fn gamma_density_examples() {
    assert!(close(gamma_density(1.0, 1.0).unwrap(), (-1f64).exp(), 1e-14));
    assert!(close(gamma_density(1.0, 2.0).unwrap(), (-1f64).exp(), 1e-14));
    assert!(gamma_density(0.0, 1.0).is_err());
    assert!(gamma_density(1.0, -1.0).is_err());
    for beta in [0.5, 1.0, 2.5] {
        let m = gamma_expectation(|_| 1.0, beta, 1e-13).value;
        assert!((m - 1.0).abs() < 1e-12, "beta {beta}: {m}");
    }
}

#[test]
fn laguerre_examples() {
    assert_eq!(laguerre_e(0, 3.3, 7.0).unwrap(), 1.0);
    assert!(close(laguerre_e(1, 2.0, 0.5).unwrap(), 1.5 / 2f64.sqrt(), 1e-14));
    assert!(close(laguerre_e(2, 1.0, 2.0).unwrap(), -1.0, 1e-14));
    assert!(laguerre_e(-1, 1.0, 1.0).is_err());
    // mpmath, 30 digits
    assert!(close(laguerre_e(7, 2.5, 3.3).unwrap(), 0.374800966360327590696839719015, 1e-13));
    assert!(close(laguerre_e(12, 0.5, 0.2).unwrap(), -0.444112376311979485626688511201, 1e-12));
}

#[test]
fn laguerre_matches_explicit_sum() {
    for beta in [0.5, 1.0, 2.5, 4.0] {
        for k in 0..6 {
            for u in [0.1, 1.0, 3.7, 9.0] {
                let norm = (gamma(k as f64 + 1.0) * gamma(beta) / gamma(beta + k as f64)).sqrt();
                let want = laguerre_explicit(k, beta - 1.0, u) * norm;
                let got = laguerre_e(k as i64, beta, u).unwrap();
                assert!((got - want).abs() < 1e-11 * want.abs().max(1.0), "k={k} beta={beta} u={u}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn orthonormal_and_mean_zero() {
    for beta in [0.5, 1.0, 2.5] {
        let basis = LaguerreBasis::new(beta, 12).unwrap();
        for k in 0..=12 {
            for m in k..=12 {
                let v = gamma_expectation_deg(|u| { let e = basis.eval_all(u); e[k] * e[m] }, beta, k + m, 1e-13).value;
                let d = if k == m { 1.0 } else { 0.0 };
                assert!((v - d).abs() < 1e-8, "beta {beta} <e{k},e{m}> = {v}");
            }
        }
    }
}

#[test]
fn hermite_examples() {
    assert_eq!(hermite(2, 0.0), -1.0);
    assert_eq!(hermite(2, 1.0), 0.0);
    assert_eq!(hermite(4, 1.0), -2.0);
    let x: f64 = 1.3;
    let he7 = x.powi(7) - 21.0 * x.powi(5) + 105.0 * x.powi(3) - 105.0 * x;
    assert!(close(hermite(7, x), he7, 1e-13));
}

#[test]
fn bessel_examples() {
    let want = (2.0 / std::f64::consts::PI).sqrt() * 1f64.sinh();
    assert!(close(bessel_i(0.5, 1.0).unwrap(), want, 1e-12));
    let cases = [
        (0.0, 5.0, 27.2398718236044468945442320759),
        (2.5, 30.0, 703124015519.203251788181683461),
        (-0.5, 3.0, 4.63775775786150279273006174768),
        (-0.3, 0.7, 1.24704987734565276780824707309),
        (1.5, 200.0, 2.02821751765552416885738024468e85),
        (0.25, 1e-3, 0.164976279097201693758973621269),
    ];
    for (rho, z, v) in cases {
        let got = bessel_i(rho, z).unwrap();
        assert!(close(got, v, 1e-11), "I_{rho}({z}) = {got}, want {v}");
    }
    assert!(bessel_i(1.0, 0.0).is_err());
    // small-z leading term
    let rho: f64 = 0.7;
    let z: f64 = 1e-6;
    let lead = (0.5 * z).powf(rho) / gamma(rho + 1.0);
    assert!(close(bessel_i(rho, z).unwrap() / lead, 1.0, 1e-9));
}

#[test]
fn bessel_j_examples() {
    let cases = [
        (1, 3.7, -0.219776259850527834858010937734),
        (0, 10.0, -0.245935764451348335197760862485),
        (1, 0.3, 0.430493517328124557535133315507),
        (3, 2.5, 0.525080264664003145948604934574),
        (3, 12.0, -0.204663448496529687590007656677),
        (2, 7.5, 0.1352484275797055051822405),
        (2, 0.4, 0.1960265779553187545503809),
        (4, 30.0, 0.07845124607326534890128004),
    ];
    for (two_nu, x, v) in cases {
        let got = bessel_j_half(two_nu, x);
        assert!((got - v).abs() < 1e-12, "J_{}({x}) = {got}, want {v}", two_nu as f64 / 2.0);
    }
}

#[test]
fn analytic_constants() {
    let s2pi = (2.0 * std::f64::consts::PI).sqrt();
    assert!(close(nu_constant(1, 0.5).unwrap(), s2pi, 1e-13));
    assert!(close(nu_constant(2, 1.0).unwrap(), 6.28318530717958647692528676656, 1e-13));
    assert!(close(nu_constant(3, 1.2).unwrap(), 17.827265656560545451537222636, 1e-13));
    assert!(close(ctilde(1, 0.5).unwrap(), 2f64.sqrt(), 1e-13));
    // high-precision fixture (mpmath, 30 digits)
    assert!(close(ctilde(2, 1.0).unwrap(), 1.77245385090551602729816748334, 1e-13));
    assert!(close(ctilde(3, 1.2).unwrap(), 1.20222089353811379072708151955, 1e-13));
    assert!(close(ctilde(1, 0.25).unwrap(), 0.397457820953963318329888086181, 1e-13));
    assert!(nu_constant(1, 1.0).is_err());
    assert!(ctilde(2, 0.0).is_err());
}

proptest! {
    #[test]
    fn hermite_recurrence_matches_explicit(u in -5.0f64..5.0) {
        prop_assert!((hermite(2, u) - (u * u - 1.0)).abs() < 1e-12);
        prop_assert!((hermite(4, u) - (u.powi(4) - 6.0 * u * u + 3.0)).abs() < 1e-12 * (1.0 + u.powi(4)));
    }

    #[test]
    fn nu_reflection(d in 1usize..4, frac in 0.01f64..0.99) {
        let alpha = frac * d as f64 / 4.0;
        let p = nu_constant(d, 4.0 * alpha).unwrap() * nu_constant(d, d as f64 - 4.0 * alpha).unwrap();
        prop_assert!((p / (2.0 * std::f64::consts::PI).powi(d as i32) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ctilde_positive(d in 1usize..4, frac in 0.001f64..0.999) {
        prop_assert!(ctilde(d, frac * d as f64).unwrap() > 0.0);
    }

    #[test]
    fn bessel_positive(rho in -0.99f64..6.0, z in 1e-4f64..300.0) {
        let v = bessel_i(rho, z).unwrap();
        prop_assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn bessel_recurrence(rho in 0.0f64..4.0, z in 0.05f64..50.0) {
        // I_{ρ-1} - I_{ρ+1} = (2ρ/z) I_ρ
        let a = bessel_i(rho - 0.5, z).unwrap() - bessel_i(rho + 1.5, z).unwrap();
        let b = 2.0 * (rho + 0.5) / z * bessel_i(rho + 0.5, z).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * b.abs(), "{} vs {}", a, b);
    }
}
