use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use unlearn_arena::numerics::{
    gaussian_vector, invert_spd, jeffreys_interval, kl_divergence, sherman_morrison_downdate,
    softmax, Matrix, RngStream,
};
use unlearn_arena::Error;

fn spd_with_downdate(entries: &[f64], n: usize, u_scale: f64) -> (Matrix<f64>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = entries.chunks(n).map(|r| r.to_vec()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let mut a = x.transpose().matmul(&x).unwrap();
    a.add_diagonal(1.0);
    let u: Vec<f64> = entries[..n].iter().map(|v| v * u_scale).collect();
    (a, u)
}

fn max_abs(m: &Matrix<f64>) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            best = best.max(m.get(i, j).abs());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn downdate_matches_direct_inverse(
        n in 2usize..7,
        entries in prop::collection::vec(-2.0f64..2.0, 7 * 3 * 7),
        u_scale in 0.0f64..0.5,
    ) {
        let (a, u) = spd_with_downdate(&entries[..3 * n * n], n, u_scale);
        let reduced = a.minus_outer(&u).unwrap();
        let direct = invert_spd(&reduced).unwrap();
        let fast = sherman_morrison_downdate(&invert_spd(&a).unwrap(), &u).unwrap();
        let rel = fast.max_abs_diff(&direct) / max_abs(&direct).max(1.0);
        prop_assert!(rel <= 1e-7, "relative error {rel}");
        let residual = reduced.matmul(&fast).unwrap().identity_residual();
        prop_assert!(residual <= 1e-7, "residual {residual}");
    }

    #[test]
    fn kl_is_non_negative_and_zero_only_on_equal_inputs(
        zp in prop::collection::vec(-8.0f64..8.0, 2..12),
        shift in prop::collection::vec(-8.0f64..8.0, 12),
    ) {
        let p = softmax(&zp);
        let zq: Vec<f64> = zp.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let q = softmax(&zq);
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-6 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn softmax_is_normalized_and_monotone(
        z in prop::collection::vec(-50.0f64..50.0, 1..20),
        scale in prop::sample::select(vec![1e-3, 1.0, 10.0, 1e3]),
    ) {
        let z: Vec<f64> = z.iter().map(|v| v * scale).collect();
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..z.len() {
            for j in 0..z.len() {
                if z[i] < z[j] {
                    prop_assert!(p[i] <= p[j]);
                }
            }
        }
    }

    #[test]
    fn jeffreys_width_shrinks_with_trials(k in 1u64..40, ratio in 0usize..5) {
        let (s, n) = (ratio as u64 * k, 4 * k);
        let small = jeffreys_interval(s, n, 0.95).unwrap();
        let large = jeffreys_interval(2 * s, 2 * n, 0.95).unwrap();
        prop_assert!(large.width() <= small.width() + 1e-12);
        for ci in [small, large] {
            prop_assert!(0.0 <= ci.lo && ci.lo <= ci.hi && ci.hi <= 1.0);
        }
    }
}

// Reference values evaluated at 50 significant digits from the exact binary inputs.
const KL_FIXTURES: [(&[f64], &[f64], f64); 6] = [
    (
        &[
            0.5163445572150758,
            0.0895885028432353,
            0.0013399740228225033,
            0.387634796985329,
            0.005092168933537515,
        ],
        &[
            0.2621436696432536,
            0.40671301662174686,
            0.09936639253802146,
            0.04242994068860919,
            0.18934698050836907,
        ],
        1.047830267503034552284118,
    ),
    (
        &[
            0.009435350698997381,
            0.20663958047980732,
            0.7839250688211953,
        ],
        &[0.13320597786856433, 0.23220006710350918, 0.6345939550279265],
        0.1165869461757539491291154,
    ),
    (
        &[0.6791305704542691, 0.3208694295457309],
        &[0.9457416279253182, 0.05425837207468173],
        0.3453756830562134619890866,
    ),
    (
        &[0.7074468423153532, 0.17552181363502825, 0.11703134404961867],
        &[0.23850339300109613, 0.6186661994083096, 0.14283040759059426],
        0.5247547011600777973080912,
    ),
    (
        &[0.3132973284140992, 0.6777961143146899, 0.008906557271210928],
        &[0.07131560744088787, 0.2212782744073772, 0.7074061181517349],
        1.183469450341370795650029,
    ),
    (
        &[
            0.21207025456707074,
            0.07610469327108957,
            0.2993647648259608,
            0.04589828688689033,
            0.02166597083120955,
            0.011344901972811102,
            0.2134919388445813,
            0.002352190849364889,
            0.03164794375500452,
            0.08605905419601725,
        ],
        &[
            0.07198499159901592,
            0.09344115106522775,
            0.1260504217156142,
            0.016943778356639894,
            0.10629112976295194,
            0.03563086774768575,
            0.07169583359972112,
            0.192096090985554,
            0.08791496361171837,
            0.1979507715558711,
        ],
        0.5893356099978920449977712,
    ),
];

#[test]
fn kl_matches_high_precision_reference() {
    for (p, q, want) in KL_FIXTURES {
        let got = kl_divergence(p, q).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn kl_closed_forms() {
    assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    let ln2 = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
    assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-15);
}

/// `P(X ≤ sin²θ)` for `X ~ Beta(a, b)` by Simpson's rule in `θ`; the substitution
/// `x = sin²θ` turns the density into `2 sin^(2a−1)θ cos^(2b−1)θ`, bounded for `a, b ≥ ½`.
fn beta_mass(a: f64, b: f64, theta: f64) -> f64 {
    let f = |t: f64| 2.0 * t.sin().powf(2.0 * a - 1.0) * t.cos().powf(2.0 * b - 1.0);
    let n = 20_000;
    let h = theta / n as f64;
    let mut s = f(0.0) + f(theta);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn integrated_quantile(a: f64, b: f64, p: f64) -> f64 {
    let total = beta_mass(a, b, std::f64::consts::FRAC_PI_2);
    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if beta_mass(a, b, mid) / total < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).sin().powi(2)
}

#[test]
fn jeffreys_matches_integrated_posterior() {
    for (s, n) in [(64u64, 128u64), (96, 128), (128, 128), (0, 0)] {
        let ci = jeffreys_interval(s, n, 0.95).unwrap();
        let (a, b) = (s as f64 + 0.5, (n - s) as f64 + 0.5);
        let lo = integrated_quantile(a, b, 0.025);
        let hi = integrated_quantile(a, b, 0.975);
        assert!(
            (ci.lo - lo).abs() <= 1e-6 && (ci.hi - hi).abs() <= 1e-6,
            "{s}/{n}: {ci:?} vs [{lo}, {hi}]"
        );
    }
}

#[test]
fn jeffreys_fixture_shapes() {
    let even = jeffreys_interval(64, 128, 0.95).unwrap();
    assert!((even.lo + even.hi - 1.0).abs() <= 1e-8);
    let all = jeffreys_interval(128, 128, 0.95).unwrap();
    assert!(all.lo > 0.9 && all.hi < 1.0);
    assert!(!jeffreys_interval(96, 128, 0.95).unwrap().contains(0.5));
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rational(rows: &[&[i64]]) -> Matrix<BigRational> {
    Matrix::from_rows(
        &rows
            .iter()
            .map(|r| r.iter().map(|&v| q(v)).collect())
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

#[test]
fn exact_rational_downdate() {
    let a = rational(&[&[2, 1], &[1, 2]]);
    let down = sherman_morrison_downdate(&invert_spd(&a).unwrap(), &[q(1), q(1)]).unwrap();
    assert_eq!(down, rational(&[&[1, 0], &[0, 1]]));

    let a = rational(&[&[6, 2, 1], &[2, 5, 2], &[1, 2, 4]]);
    let u = [q(1), q(-1), q(1)];
    let down = sherman_morrison_downdate(&invert_spd(&a).unwrap(), &u).unwrap();
    let product = a.minus_outer(&u).unwrap().matmul(&down).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(*product.get(i, j), q(i64::from(i == j)));
        }
    }
}

#[test]
fn exact_singular_downdate_is_detected() {
    let a = rational(&[&[2, 0], &[0, 1]]);
    let err = sherman_morrison_downdate(&invert_spd(&a).unwrap(), &[q(0), q(1)]).unwrap_err();
    assert!(matches!(err, Error::SingularDowndate { .. }));
}

#[test]
fn gaussian_vector_law_of_large_numbers() {
    let v = gaussian_vector(&mut RngStream::new(11, 3), 100_000, 0.0, 0.1);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!(
        mean.abs() <= 0.01 && (var - 0.1).abs() <= 0.01,
        "{mean} {var}"
    );
    assert_eq!(
        v,
        gaussian_vector(&mut RngStream::new(11, 3), 100_000, 0.0, 0.1)
    );
    assert_eq!(
        gaussian_vector(&mut RngStream::new(1, 1), 3, 0.0, 0.0),
        vec![0.0; 3]
    );
}
