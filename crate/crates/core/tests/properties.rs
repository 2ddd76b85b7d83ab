use morphflow::geometry::GradientOperator;
use morphflow::lattice::{Index3, Vec3};
use morphflow::lifting::{analyze, max_depth};
use morphflow::tvl1::threshold_point;
use morphflow::volume::{interpolate, warp};
use morphflow::{DisplacementField, LatticeDescriptor, LatticeKind, LiftingMode, Volume};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = LatticeKind> {
    prop_oneof![
        Just(LatticeKind::Cartesian),
        Just(LatticeKind::TiltedCuboid),
        Just(LatticeKind::Fcc),
    ]
}

fn mode() -> impl Strategy<Value = LiftingMode> {
    prop_oneof![Just(LiftingMode::Min), Just(LiftingMode::Max)]
}

fn extents(lo: usize, hi: usize) -> impl Strategy<Value = Index3> {
    [lo..=hi, lo..=hi, lo..=hi]
}

/// Integer-valued Cartesian volume with its sample values.
fn integer_volume(lo: usize, hi: usize) -> impl Strategy<Value = Volume> {
    extents(lo, hi).prop_flat_map(|e| {
        proptest::collection::vec(0u32..4096, e[0] * e[1] * e[2]).prop_map(move |d| {
            Volume::new(
                LatticeDescriptor::cartesian(e).unwrap(),
                d.into_iter().map(f64::from).collect(),
            )
            .unwrap()
        })
    })
}

fn negate(v: &Volume) -> Volume {
    v.map(|x| -x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lifting_round_trip_is_bit_exact(v in integer_volume(2, 14), m in mode(), depth in 0usize..=9) {
        let levels = depth.min(max_depth(v.extents()));
        let rec = analyze(&v, levels, m).unwrap().reconstruct().unwrap();
        prop_assert_eq!(rec.data(), v.data());
        prop_assert_eq!(rec.extents(), v.extents());
    }

    #[test]
    fn every_step_keeps_the_mode_extremum(v in integer_volume(2, 12), m in mode()) {
        let dec = analyze(&v, max_depth(v.extents()).min(9), m).unwrap();
        for a in dec.approximations() {
            match m {
                LiftingMode::Max => prop_assert_eq!(a.max(), v.max()),
                LiftingMode::Min => prop_assert_eq!(a.min(), v.min()),
            }
        }
    }

    #[test]
    fn min_mode_is_dual_to_max_mode(v in integer_volume(2, 10), depth in 1usize..=6) {
        let levels = depth.min(max_depth(v.extents()));
        let lo = analyze(&v, levels, LiftingMode::Min).unwrap();
        let hi = analyze(&negate(&v), levels, LiftingMode::Max).unwrap();
        for (a, b) in lo.approximations().iter().zip(hi.approximations()) {
            let nb = negate(b);
            prop_assert_eq!(a.data(), nb.data());
        }
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient(
        k in kind(),
        e in extents(1, 7),
        scale in 0.25f64..8.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lat = LatticeDescriptor::new(k, scale, [0.0; 3], e, 0).unwrap();
        let op = GradientOperator::new(&lat).unwrap();
        let u: Vec<f64> = (0..lat.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<Vec3> = (0..lat.len()).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect();
        let mut g = vec![[0.0; 3]; lat.len()];
        let mut d = vec![0.0; lat.len()];
        op.apply_gradient(&u, &mut g);
        op.apply_divergence(&p, &mut d);
        let gp: f64 = g.iter().zip(&p).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
        let ud: f64 = u.iter().zip(&d).map(|(a, b)| a * b).sum();
        let bound: f64 = g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
            * p.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((gp + ud).abs() <= 1e-10 * bound.max(1e-300));
    }

    #[test]
    fn threshold_is_locally_optimal(
        g in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
        u in [-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0],
        rho in -2.0f64..2.0,
        lambda in 0.5f64..50.0,
        theta in 0.05f64..1.0,
    ) {
        let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        prop_assume!(g2 > 1e-4);
        let obj = |v: Vec3| {
            let dv = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
            (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]) / (2.0 * theta)
                + lambda * (rho + g[0] * dv[0] + g[1] * dv[1] + g[2] * dv[2]).abs()
        };
        let v = threshold_point(g, rho, u, lambda, theta);
        // perturbations in every direction cannot improve a convex minimum
        let best = obj(v);
        for d in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], g] {
            for h in [1e-3, -1e-3] {
                prop_assert!(obj([v[0] + h * d[0], v[1] + h * d[1], v[2] + h * d[2]]) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn trilinear_interpolation_reproduces_affine_data(
        e in extents(2, 6),
        a in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
        t in [0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0],
    ) {
        let lat = LatticeDescriptor::cartesian(e).unwrap();
        let v = Volume::from_fn(lat, |[i, j, k]| a[0] * i as f64 + a[1] * j as f64 + a[2] * k as f64).unwrap();
        let x = [0, 1, 2].map(|c| t[c] * (e[c] - 1) as f64);
        let expected = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
        prop_assert!((interpolate(&v, x) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_warp_is_identity_on_every_lattice(k in kind(), e in extents(1, 6), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lat = LatticeDescriptor::new(k, 2.0, [1.0, -1.0, 0.5], e, 0).unwrap();
        let v = Volume::new(lat.clone(), (0..lat.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        let w = warp(&v, &DisplacementField::zeros(lat)).unwrap();
        prop_assert_eq!(w.data(), v.data());
    }
}
