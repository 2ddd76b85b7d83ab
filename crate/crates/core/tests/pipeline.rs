use morphflow::metrics::strain;
use morphflow::pipeline::{run, run_baseline, run_traced};
use morphflow::synth::{deform, make_phantom, Deformation, PhantomSpec, Preset};
use morphflow::{DisplacementField, LatticeKind, MorphFlowConfig, Pyramid};

fn mean_epe(u: &DisplacementField, t: [f64; 3], margin: usize) -> f64 {
    let lat = u.lattice();
    let e = lat.extents();
    let (mut sum, mut count) = (0.0, 0.0);
    for n in 0..lat.len() {
        let idx = lat.unravel(n);
        if (0..3).all(|a| idx[a] >= margin && idx[a] + margin < e[a]) {
            let d = u.at(n);
            sum += ((d[0] - t[0]).powi(2) + (d[1] - t[1]).powi(2) + (d[2] - t[2]).powi(2)).sqrt();
            count += 1.0;
        }
    }
    sum / count
}

/// Plane means of ε₃₃ with their z coordinates.
fn e33_profile(u: &DisplacementField) -> Vec<(f64, f64)> {
    let s = strain(u).unwrap();
    let lat = u.lattice();
    let e = lat.extents();
    (0..e[2])
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..e[1] {
                for i in 0..e[0] {
                    acc += s.e33[lat.linear([i, j, k])];
                }
            }
            (lat.position([0, 0, k])[2], acc / (e[0] * e[1]) as f64)
        })
        .collect()
}

/// Largest plane mean within one voxel of the plane over the mean magnitude
/// of planes at least four voxels away.
fn peak_to_background(u: &DisplacementField, plane: f64) -> f64 {
    let profile = e33_profile(u);
    let peak = profile
        .iter()
        .filter(|(z, _)| (z - plane).abs() <= 1.0)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let far: Vec<f64> = profile
        .iter()
        .filter(|(z, _)| (z - plane).abs() >= 4.0)
        .map(|p| p.1.abs())
        .collect();
    peak / (far.iter().sum::<f64>() / far.len() as f64)
}

#[test]
fn gaussian_baseline_recovers_rigid_shift() {
    let fixed = make_phantom(&PhantomSpec::concrete([32; 3], 4)).unwrap();
    let t = [2.0, 1.0, 0.0];
    let (moving, _) = deform(&fixed, &Deformation::Translate(t)).unwrap();
    let config = MorphFlowConfig {
        l_start: 6,
        ..MorphFlowConfig::default()
    };
    for pyramid in [Pyramid::Gaussian, Pyramid::Haar] {
        let u = run_baseline(&fixed, &moving, pyramid, &config).unwrap();
        let epe = mean_epe(&u, t, 4);
        assert!(epe < 0.3, "{pyramid:?}: endpoint error {epe}");
    }
}

#[test]
fn morphological_pyramid_recovers_shift_and_lowers_energy() {
    let fixed = make_phantom(&PhantomSpec::concrete([32; 3], 5)).unwrap();
    let t = [1.0, 0.0, 0.0];
    let (moving, _) = deform(&fixed, &Deformation::Translate(t)).unwrap();
    let config = MorphFlowConfig {
        l_start: 6,
        ..MorphFlowConfig::default()
    };
    let (u, records) = run_traced(&fixed, &moving, &config).unwrap();
    assert!(mean_epe(&u, t, 4) < 0.2);
    let kinds: Vec<LatticeKind> = records.iter().map(|r| r.kind).collect();
    assert_eq!(kinds.len(), 7);
    assert_eq!(kinds[0], LatticeKind::Cartesian);
    let last = records.last().unwrap();
    assert_eq!((last.level, last.extents), (0, [32; 3]));
    assert!(last.energy_after < last.energy_before);
}

#[test]
fn crack_strain_peak_is_sharper_than_gaussian_baseline() {
    let preset = Preset::Crack32;
    let (fixed, moving, _) = preset.generate(2).unwrap();
    let Deformation::CrackOpen { position, .. } = preset.deformation() else {
        unreachable!()
    };
    let config = MorphFlowConfig {
        l_start: 6,
        ..MorphFlowConfig::default()
    };
    let morph = run(&fixed, &moving, &config).unwrap();
    let gauss = run_baseline(&fixed, &moving, Pyramid::Gaussian, &config).unwrap();
    let (m, g) = (
        peak_to_background(&morph, position),
        peak_to_background(&gauss, position),
    );
    println!("peak-to-background: morphological {m:.2}, gaussian {g:.2}");
    assert!(m > g);

    // the recovered field jumps across the crack
    let profile = e33_profile(&morph);
    let (z, _) =
        profile.iter().cloned().fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    assert!((z - position).abs() <= 2.0, "peak at {z}");
}
