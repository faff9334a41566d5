use chifield::domain_geometry::*;
use chifield::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

fn unit() -> Domain {
    Domain::interval(-1.0, 1.0).unwrap()
}

#[test]
fn construction_and_scaling() {
    assert!(Domain::rectangle(vec![(0.5, 1.0)]).is_err());
    assert!(Domain::ball(-1.0, 2).is_err());
    let b = Domain::ball(1.0, 3).unwrap();
    let s = b.scale(2.5).unwrap();
    assert!((s.volume() - 2.5f64.powi(3) * b.volume()).abs() < 1e-12);
    assert_eq!(unit().scale(1.0).unwrap(), unit());
    assert_eq!(unit().scale(3.0).unwrap(), Domain::interval(-3.0, 3.0).unwrap());
    assert!(matches!(unit().scale(0.0), Err(Error::Domain(_))));
    assert!((Domain::ball(1.0, 2).unwrap().volume() - PI).abs() < 1e-12);
}

#[test]
fn char_fn_examples() {
    let d = unit();
    assert!((d.char_fn_uniform(&[0.0]).unwrap() - 1.0).norm() < 1e-15);
    assert!(d.char_fn_uniform(&[PI]).unwrap().norm() < 1e-15);
    for &l in &[0.3, 1.7, 11.0] {
        assert!((d.char_fn_uniform(&[l]).unwrap().re - l.sin() / l).abs() < 1e-14);
    }
    // unit disk: |D| K = 2π J₁(|λ|)/|λ|; J₁(2) = 0.5767248077568734
    let disk = Domain::ball(1.0, 2).unwrap();
    let k = disk.char_fn_uniform(&[2.0f64.sqrt(), 2.0f64.sqrt()]).unwrap();
    assert!((k.re * PI - 2.0 * PI * 0.5767248077568734 / 2.0).abs() < 1e-10);
    let ball3 = Domain::ball(1.0, 3).unwrap();
    assert!((ball3.char_fn_uniform(&[0.0, 0.0, 0.0]).unwrap() - 1.0).norm() < 1e-12);
    // 3-ball: K = 3(sin k − k cos k)/k³
    let kk: f64 = 1.3;
    let want = 3.0 * (kk.sin() - kk * kk.cos()) / kk.powi(3);
    assert!((ball3.char_fn_uniform(&[0.0, kk, 0.0]).unwrap().re - want).abs() < 1e-10);
}

#[test]
fn rectangle_char_fn_is_product() {
    let r = Domain::rectangle(vec![(-1.0, 2.0), (-0.5, 0.5)]).unwrap();
    let a = Domain::interval(-1.0, 2.0).unwrap().char_fn_uniform(&[0.7]).unwrap();
    let b = Domain::interval(-0.5, 0.5).unwrap().char_fn_uniform(&[-1.9]).unwrap();
    assert!((r.char_fn_uniform(&[0.7, -1.9]).unwrap() - a * b).norm() < 1e-14);
}

#[test]
fn singular_moment_closed_forms() {
    let a = singular_moment(&unit(), 0.5).unwrap();
    assert!((a.value - 7.542472332656507).abs() < 1e-9);
    assert_eq!(a.std_err, 0.0);
    assert!((singular_moment(&unit(), 0.8).unwrap().value - 19.14497).abs() < 1e-5);
    assert!((singular_moment(&unit(), 1e-9).unwrap().value - 4.0).abs() < 1e-7);
    assert!(matches!(singular_moment(&unit(), 1.0), Err(Error::Divergence { .. })));
}

#[test]
fn singular_moment_monte_carlo() {
    // oracles from one-dimensional quadrature of the covariogram
    let cases = [
        (Domain::ball(1.0, 2).unwrap(), 0.5, 11.834407386243772),
        (Domain::ball(1.0, 2).unwrap(), 1.0, 16.755160819145564),
        (Domain::rectangle(vec![(-1.0, 1.0), (-0.5, 0.5)]).unwrap(), 0.5, 5.213041149921212),
    ];
    for (dom, s, want) in cases {
        let e = singular_moment(&dom, s).unwrap();
        assert!(e.std_err > 0.0 && e.std_err < 0.01 * want);
        assert!((e.value - want).abs() < 4.0 * e.std_err, "{dom:?} s={s}: {} ± {} vs {want}", e.value, e.std_err);
    }
}

#[test]
fn singular_moment_homothety() {
    let disk = Domain::ball(1.0, 2).unwrap();
    let t: f64 = 3.0;
    let base = singular_moment_mc(&disk, 0.6, 400_000, 1).unwrap();
    let big = singular_moment_mc(&disk.scale(t).unwrap(), 0.6, 400_000, 2).unwrap();
    let f = t.powf(4.0 - 0.6);
    let se = (big.std_err.powi(2) + (f * base.std_err).powi(2)).sqrt();
    assert!((big.value - f * base.value).abs() < 4.0 * se);
    let one = unit();
    let big1 = singular_moment(&one.scale(t).unwrap(), 0.5).unwrap().value;
    assert!((big1 / singular_moment(&one, 0.5).unwrap().value - t.powf(1.5)).abs() < 1e-10);
}

#[test]
fn cyclic_two_matches_singular_moment() {
    let e = cyclic_integral_mc(&unit(), 0.25, 2, 400_000, 3).unwrap();
    assert!((e.value - 7.542472).abs() < 4.0 * e.std_err, "{e:?}");
    assert!(cyclic_integral_mc(&unit(), 0.25, 1, 10, 3).is_err());
    assert!(cyclic_integral_mc(&unit(), 0.6, 3, 10, 3).is_err());
}

#[test]
fn rank1_identity() {
    let (lhs, rhs) = rank1_oscillatory_identity(&unit(), 0.25).unwrap();
    assert!((lhs / rhs - 1.0).abs() < 0.01, "{lhs} vs {rhs}");
}

#[test]
fn rank2_identity() {
    let (lhs, rhs) = rank2_oscillatory_identity(&unit(), 0.2).unwrap();
    assert!((lhs / rhs - 1.0).abs() < 0.05, "{lhs} vs {rhs}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn char_fn_bounded_and_hermitian(l in -50.0f64..50.0, m in -50.0f64..50.0, a in 0.1f64..3.0, b in 0.1f64..3.0) {
        let r = Domain::rectangle(vec![(-a, b), (-b, a)]).unwrap();
        let k = r.char_fn_uniform(&[l, m]).unwrap();
        prop_assert!(k.norm() <= 1.0 + 1e-12);
        let kc = r.char_fn_uniform(&[-l, -m]).unwrap();
        prop_assert!((k.conj() - kc).norm() < 1e-12);
    }

    #[test]
    fn interval_moment_homothety(s in 0.05f64..0.95, t in 0.2f64..20.0) {
        let a = singular_moment(&unit(), s).unwrap().value;
        let b = singular_moment(&unit().scale(t).unwrap(), s).unwrap().value;
        prop_assert!((b / (a * t.powf(2.0 - s)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn covariogram_at_zero_is_volume(r in 0.1f64..4.0, d in 1usize..4) {
        let b = Domain::ball(r, d).unwrap();
        prop_assert!((b.covariogram(&vec![0.0; d]).unwrap() / b.volume() - 1.0).abs() < 1e-12);
    }
}
