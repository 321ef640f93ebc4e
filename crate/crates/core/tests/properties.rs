use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use surge_core::model::{GaussianBump, ModeProfile, Nonlinearity};
use surge_core::principles::{
    lemma4_relaxation_crosscheck, random_metzler, Instance, SmoothData, TriangleGrid,
};
use surge_core::spectral::{metzler_witness, pseudo_inverse_apply};
use surge_core::*;

/// Operator self-adjoint in the weighted product, so every eigenvalue is real.
fn reversible(m: usize, upper: &[f64], weights: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            a[(i, j)] = upper[k];
            a[(j, i)] = upper[k];
            k += 1;
        }
    }
    let mut l = DMatrix::from_fn(m, m, |i, j| a[(i, j)] / weights[i]);
    for i in 0..m {
        l[(i, i)] = -l.row(i).sum();
    }
    l
}

fn arb_operator() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..2.0, m * m),
            prop::collection::vec(0.5f64..2.0, m),
        )
            .prop_map(move |(entries, weights)| {
                let mut l = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { entries[i * m + j] });
                for i in 0..m {
                    l[(i, i)] = -l.row(i).sum();
                }
                (l, weights)
            })
    })
}

fn arb_bump() -> impl Strategy<Value = GaussianBump> {
    (-2.0f64..2.0, 0.2f64..4.0, -1.0f64..1.0).prop_map(|(a, b, c)| GaussianBump::new(a, b, c))
}

fn arb_spec() -> impl Strategy<Value = ProblemSpec> {
    (2usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..2.0, m * (m - 1) / 2),
            prop::collection::vec(0.5f64..2.0, m),
            prop::collection::vec(prop_oneof![-3.0f64..-0.5, 0.5f64..3.0], m),
            prop::collection::vec(-1.0f64..1.0, m),
            prop::collection::vec(-1.0f64..1.0, m),
            prop::collection::vec(prop::collection::vec(arb_bump(), 1..3), 1..=m),
            0.1f64..2.0,
            prop::option::of(any::<u64>()),
        )
            .prop_map(move |(upper, weights, speeds, c1, c2, modes, horizon, seed)| {
                let floor = speeds.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
                ProblemSpec {
                    operator: reversible(m, &upper, &weights),
                    speeds,
                    speed_floor: floor,
                    weights,
                    nonlinearity: Nonlinearity {
                        linear: c1,
                        quadratic: c2,
                    },
                    initial: modes.into_iter().map(|bumps| ModeProfile { bumps }).collect(),
                    horizon,
                    eps: vec![0.2, 0.1, 0.05],
                    seed,
                }
            })
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip_is_exact(spec in arb_spec()) {
        prop_assert!(spec.validate().is_ok());
        let loaded = load_problem(&spec.to_config_text()).unwrap();
        prop_assert_eq!(&loaded, &spec);
        let _ = check_conditions(&loaded);
    }

    #[test]
    fn sampling_is_linear_in_profiles(spec in arb_spec(), extra in prop::collection::vec(arb_bump(), 1..3)) {
        let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
        let grid = UniformGrid::new(-3.0, 0.05, 121).unwrap();
        let mut other = spec.clone();
        other.initial = vec![ModeProfile { bumps: extra }];
        let mut sum = spec.clone();
        sum.initial[0].bumps.extend(other.initial[0].bumps.iter().copied());
        let a = sample_initial(&spec, &sd, grid).unwrap();
        let b = sample_initial(&other, &sd, grid).unwrap();
        let c = sample_initial(&sum, &sd, grid).unwrap();
        let scale = 1.0 + a.sup_norm() + b.sup_norm();
        for k in 0..c.values.len() {
            prop_assert!((c.values[k] - a.values[k] - b.values[k]).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn pseudo_inverse_contract((l, weights) in arb_operator(), raw in prop::collection::vec(-1.0f64..1.0, 8)) {
        let m = l.nrows();
        let sd = eigendecompose(&l, &weights).unwrap();
        let (h0, h0s) = zero_mode(&sd).unwrap();
        let c = sd.inner(&raw[..m], &h0s);
        let f: Vec<f64> = raw[..m].iter().zip(&h0).map(|(v, h)| v - c * h).collect();
        prop_assume!(sup(&f) > 1e-6);
        let g = pseudo_inverse_apply(&sd, &f).unwrap();
        let lg = &l * DVector::from_column_slice(&g);
        let res = lg.iter().zip(&f).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        prop_assert!(res <= 1e-10 * sup(&f), "residual {res:e}");
        prop_assert!(sd.inner(&g, &h0s).abs() <= 1e-12);
    }

    #[test]
    fn modes_are_biorthonormal((l, weights) in arb_operator()) {
        let sd = eigendecompose(&l, &weights).unwrap();
        prop_assert!(sd.biorthogonality_residual() <= 1e-10);
    }

    #[test]
    fn psi0_is_orthogonal_to_kernel((l, weights) in arb_operator(), speeds in prop::collection::vec(0.5f64..3.0, 8)) {
        let m = l.nrows();
        let sd = eigendecompose(&l, &weights).unwrap();
        let Ok(kc) = KernelCoefficients::new(&sd, &speeds[..m]) else { return Ok(()) };
        let v: Vec<f64> = kc.psi0.iter().zip(&kc.h0).map(|(p, h)| p * h).collect();
        prop_assert!(sd.inner(&v, &kc.h0_star).abs() <= 1e-12);
    }

    #[test]
    fn drift_invariant_under_operator_scaling(
        (l, weights) in arb_operator(),
        speeds in prop::collection::vec(0.5f64..3.0, 8),
        c in 0.05f64..20.0,
    ) {
        let m = l.nrows();
        let a = eigendecompose(&l, &weights).unwrap();
        let b = eigendecompose(&(&l * c), &weights).unwrap();
        let ka = KernelCoefficients::new(&a, &speeds[..m]).unwrap();
        let kb = KernelCoefficients::new(&b, &speeds[..m]).unwrap();
        prop_assert!((ka.b - kb.b).abs() <= 1e-12 * ka.b.abs().max(1.0));
        prop_assert!((b.gap - c * a.gap).abs() <= 1e-9 * c * a.gap);
    }

    #[test]
    fn metzler_witness_matches_brute_force(
        off in prop::collection::vec(-0.3f64..1.0, 25),
        diag in prop::collection::vec(-3.0f64..1.0, 5),
        probes in prop::collection::vec(prop::collection::vec(1e-3f64..1.0, 5), 20),
    ) {
        let l = DMatrix::from_fn(5, 5, |i, j| if i == j { diag[i] } else { off[i * 5 + j] });
        let (metzler, k) = metzler_witness(&l);
        let shifted = &l - DMatrix::identity(5, 5) * k;
        let mut samples: Vec<Vec<f64>> = probes;
        for j in 0..5 {
            samples.push((0..5).map(|i| if i == j { 1.0 } else { 1e-9 }).collect());
        }
        let all_positive = samples.iter().all(|u| {
            let out = &shifted * DVector::from_column_slice(u);
            out.iter().all(|&v| v > 0.0)
        });
        prop_assert_eq!(metzler, all_positive);
    }

    #[test]
    fn triangle_endpoints_are_exact(x0 in -5.0f64..5.0, t0 in 0.01f64..3.0, speeds in prop::collection::vec(-2.0f64..3.0, 2..6)) {
        let tri = characteristic_triangle(x0, t0, &speeds).unwrap();
        let d_min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
        let d_max = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(tri.m1.to_bits(), (x0 - d_min * t0).to_bits());
        prop_assert_eq!(tri.m2.to_bits(), (x0 - d_max * t0).to_bits());
        prop_assert!(tri.m2 <= tri.m1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn positivity_verdict_is_monotone_in_data(
        seed in any::<u64>(),
        speeds in prop::collection::vec(-1.0f64..2.0, 3),
        bumps in prop::collection::vec(0.0f64..1.0, 3),
        lift_u in 0.0f64..0.5,
        lift_f in 0.0f64..0.5,
    ) {
        let mut rng = surge_core::principles::instance_rng(seed, 0);
        let op = random_metzler(&mut rng, 3);
        let initial = SmoothData { base: vec![0.05; 3], bump: bumps, center: vec![0.0, 0.3, -0.3], width: 0.5 };
        let source = SmoothData::constant(vec![0.01; 3]);
        let tri = characteristic_triangle(0.0, 0.4, &speeds).unwrap();
        let grid = TriangleGrid::monotone(0.04);
        let base = lemma2_positivity(&Instance::linear(op.clone(), speeds.clone(), initial.clone(), source.clone()), &tri, &grid).unwrap();
        let mut up_initial = initial;
        up_initial.base.iter_mut().for_each(|v| *v += lift_u);
        let mut up_source = source;
        up_source.base.iter_mut().for_each(|v| *v += lift_f);
        let lifted = lemma2_positivity(&Instance::linear(op, speeds, up_initial, up_source), &tri, &grid).unwrap();
        if base.verdict.is_pass() {
            prop_assert!(lifted.verdict.is_pass(), "{:?}", lifted);
        }
        prop_assert!(lifted.min_value >= base.min_value - 1e-12);
    }

    #[test]
    fn barrier_equals_positivity_of_sum_and_difference(
        seed in any::<u64>(),
        speeds in prop::collection::vec(-1.0f64..2.0, 3),
        base2 in prop::collection::vec(-0.4f64..0.4, 3),
        bump2 in prop::collection::vec(-0.5f64..0.5, 3),
        gap in 0.01f64..0.3,
    ) {
        let mut rng = surge_core::principles::instance_rng(seed, 1);
        let op = random_metzler(&mut rng, 3);
        let center = vec![0.0, 0.2, -0.2];
        let d2 = SmoothData { base: base2, bump: bump2, center: center.clone(), width: 0.5 };
        let d1 = SmoothData { base: vec![d2.sup_bound() + gap; 3], bump: vec![0.1; 3], center, width: 0.5 };
        let combine = |s: f64| SmoothData {
            base: d1.base.iter().zip(&d2.base).map(|(a, b)| a + s * b).collect(),
            bump: d1.bump.iter().zip(&d2.bump).map(|(a, b)| a + s * b).collect(),
            center: d1.center.clone(),
            width: 0.5,
        };
        let tri = characteristic_triangle(0.2, 0.4, &speeds).unwrap();
        let grid = TriangleGrid::monotone(0.04);
        let barrier = lemma3_barrier(&op, &speeds, (&d1, &d1), (&d2, &d2), &tri, &grid).unwrap();
        let sum = lemma2_positivity(&Instance::linear(op.clone(), speeds.clone(), combine(1.0), combine(1.0)), &tri, &grid).unwrap();
        let diff = lemma2_positivity(&Instance::linear(op.clone(), speeds.clone(), combine(-1.0), combine(-1.0)), &tri, &grid).unwrap();
        prop_assert_eq!(barrier.sum.is_pass(), sum.verdict.is_pass());
        prop_assert_eq!(barrier.difference.is_pass(), diff.verdict.is_pass());
        prop_assert_eq!(barrier.verdict.is_pass(), sum.verdict.is_pass() && diff.verdict.is_pass());
        let joint = sum.min_value.min(diff.min_value);
        prop_assert!((barrier.margin - joint).abs() <= 1e-10, "{} vs {}", barrier.margin, joint);
    }

    #[test]
    fn relaxation_bound_matches_modal(
        seed in any::<u64>(),
        u0 in prop::collection::vec(-1.0f64..1.0, 3),
        t0 in 0.1f64..1.5,
    ) {
        prop_assume!(sup(&u0) > 0.05);
        let mut rng = surge_core::principles::instance_rng(seed, 2);
        let op = random_metzler(&mut rng, 3);
        let (numeric, modal) =
            lemma4_relaxation_crosscheck(&op, &[1.0, 0.5, -0.5], &u0, t0, &TriangleGrid::smooth(0.05)).unwrap();
        prop_assert!((numeric - modal).abs() <= 1e-8, "{numeric} vs {modal}");
    }
}
