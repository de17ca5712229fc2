use pathkac::hermite::{delta_coeffs, evaluate, pair, project, translate};
use pathkac::potential::{make_constant, norm_potential};
use pathkac::transform::{forward_map, roundtrip, solve_hat};
use pathkac::GridPath;
use proptest::prelude::*;

fn bump(x: &[f64]) -> f64 {
    (-(x[0] - 0.3).powi(2)).exp()
}

#[test]
fn constant_potential_scales_by_exponential() {
    let lambda = 0.7;
    let y = GridPath::sample(0.0, 1e-2, 100, 2, |t, out| {
        out[0] = t.cos();
        out[1] = 1.0 + t;
    })
    .unwrap();
    let hat = forward_map(&y, &make_constant(lambda)).unwrap();
    for i in 0..y.len() {
        let t = i as f64 * 1e-2;
        for j in 0..2 {
            let expected = y.point(i)[j] * (lambda * t).exp();
            assert!((hat.point(i)[j] - expected).abs() < 1e-13);
        }
    }
    let (solved, diag) = solve_hat(&y, &make_constant(lambda), 1e-13).unwrap();
    assert!(diag.final_residual <= 1e-12);
    for i in 0..y.len() {
        assert!(
            (solved.point(i)[0] - y.point(i)[0] * (-lambda * i as f64 * 1e-2).exp()).abs() < 1e-11
        );
    }
}

#[test]
fn delta_pairing_evaluates_projected_function() {
    let f = project(&bump, 48, 1).unwrap();
    for x in [-1.0, 0.0, 0.3, 1.5] {
        let v = pair(&f, &delta_coeffs(&[x], 48)).unwrap();
        assert!((v - bump(&[x])).abs() < 1e-8, "x = {x}: {v}");
        assert!((evaluate(&f, &[x]).unwrap() - v).abs() < 1e-12);
    }
}

#[test]
fn translation_shifts_the_argument() {
    let u = project(&bump, 64, 1).unwrap();
    let z = 0.4;
    let shifted = translate(&u, &[z]).unwrap();
    for x in [-0.5, 0.2, 0.9] {
        let got = evaluate(&shifted, &[x]).unwrap();
        assert!((got - bump(&[x - z])).abs() < 1e-7, "x = {x}: {got}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn roundtrip_recovers_bounded_paths(
        a in -1.0f64..1.0,
        w in 0.5f64..6.0,
        phase in 0.0f64..6.3,
        lambda in -1.0f64..2.0,
    ) {
        let y = GridPath::sample(0.0, 1e-3, 1000, 1, |t, out| out[0] = a + (w * t + phase).sin()).unwrap();
        for c in [make_constant(lambda), norm_potential()] {
            let rt = roundtrip(&y, &c, 1e-12).unwrap();
            prop_assert!(rt.max() <= 1e-9, "error {}", rt.max());
        }
    }
}
