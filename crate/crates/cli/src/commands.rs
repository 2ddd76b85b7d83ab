use std::fs;
use std::path::{Path, PathBuf};

use morphflow::io::{
    field_paths, load_field, load_raw, load_volume, save_field, save_raw, sidecar_path, SampleType,
    VolumeMeta,
};
use morphflow::lattice::Index3;
use morphflow::lifting::analyze;
use morphflow::metrics::{
    ml_ssim, residual, residual_stats, rmse, scanline as scan, ssim, strain as strain_of,
    SsimParams, StrainField,
};
use morphflow::pipeline::{run_baseline_traced, run_traced};
use morphflow::synth::Axis;
use morphflow::volume::warp;
use morphflow::{DisplacementField, LiftingMode, MorphFlowConfig, Pyramid, SolverParams, Volume};
use serde_json::json;

use crate::args::{
    DecomposeArgs, FlowArgs, MetricsArgs, PyramidChoice, ScanlineArgs, StrainArgs, SynthArgs,
};
use crate::report::RunReport;
use crate::CliError;

type Outcome = Result<(RunReport, Option<PathBuf>), CliError>;

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn extents3(v: &Option<Vec<usize>>) -> Result<Option<Index3>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some(&[x, y, z]) => Ok(Some([x, y, z])),
        Some(other) => Err(CliError::Usage(format!(
            "--extents takes three values, got {}",
            other.len()
        ))),
    }
}

/// Headerless input when extents are given, sidecar input otherwise.
fn read_volume(
    path: &Path,
    extents: Option<Index3>,
    dtype: Option<SampleType>,
    report: &mut RunReport,
) -> Result<Volume, CliError> {
    report.digest(path)?;
    if let Some(extents) = extents {
        let dtype = dtype.unwrap_or(SampleType::Uint8);
        return Ok(load_raw(path, VolumeMeta { extents, dtype })?);
    }
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(CliError::Usage(format!(
            "{} has no sidecar {}; pass --extents and --dtype for headerless input",
            path.display(),
            sidecar.display()
        )));
    }
    report.digest(&sidecar)?;
    Ok(load_volume(path)?)
}

fn read_field(prefix: &Path, report: &mut RunReport) -> Result<DisplacementField, CliError> {
    let (files, sidecar) = field_paths(prefix);
    for p in files.iter().chain([&sidecar]) {
        report.digest(p)?;
    }
    Ok(load_field(prefix)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn save_volume(v: &Volume, path: PathBuf, report: &mut RunReport) -> Result<(), CliError> {
    save_raw(v, &path)?;
    report.outputs.push(sidecar_path(&path));
    report.outputs.push(path);
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn decompose(mut a: DecomposeArgs) -> Outcome {
    let levels = *a.levels.get_or_insert(3);
    let mode = *a.mode.get_or_insert(LiftingMode::Min);
    let input = required(&a.input, "input")?;
    let out_dir = required(&a.out_dir, "out-dir")?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| out_dir.join("report.json"));
    let mut report = RunReport::new("decompose", &a);

    let v = read_volume(&input, extents3(&a.extents)?, a.dtype, &mut report)?;
    let dec = analyze(&v, levels, mode)?;
    create_dir(&out_dir)?;
    let mut entries = Vec::with_capacity(levels);
    for level in 1..=levels {
        let approx = dec
            .approximation(level)
            .expect("level within decomposition");
        let name = format!("level_{level:02}.raw");
        save_volume(approx, out_dir.join(&name), &mut report)?;
        let lat = approx.lattice();
        entries.push(json!({
            "level": level,
            "kind": lat.kind(),
            "extents": lat.extents(),
            "scale": lat.scale(),
            "origin": lat.origin(),
            "path": name,
        }));
    }
    let manifest = json!({
        "input": input,
        "mode": mode,
        "extents": v.extents(),
        "levels": entries,
    });
    let manifest_path = out_dir.join("manifest.json");
    write_text(
        &manifest_path,
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;
    report.outputs.push(manifest_path);
    report.results = json!({
        "levels": levels,
        "coarsest_extents": dec.coarsest().extents(),
        "coarsest_kind": dec.coarsest().lattice().kind(),
    });
    Ok((report, Some(report_path)))
}

pub fn flow(mut a: FlowArgs) -> Outcome {
    let l_start = *a.l_start.get_or_insert(12);
    let l_end = *a.l_end.get_or_insert(0);
    let mode = *a.mode.get_or_insert(LiftingMode::Min);
    let defaults = SolverParams::with_tau(*a.tau.get_or_insert(0.25));
    let solver = SolverParams {
        lambda: *a.lambda.get_or_insert(defaults.lambda),
        theta: *a.theta.get_or_insert(defaults.theta),
        warps: *a.warps.get_or_insert(defaults.warps),
        inner_iters: *a.iters.get_or_insert(defaults.inner_iters),
        ..defaults
    };
    let pyramid = *a.pyramid.get_or_insert(PyramidChoice::Morph);
    let prefix = a
        .out_prefix
        .get_or_insert_with(|| PathBuf::from("flow"))
        .clone();
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| suffixed(&prefix, "_report.json"));
    let fixed_path = required(&a.fixed, "fixed")?;
    let moving_path = required(&a.moving, "moving")?;
    let mut report = RunReport::new("flow", &a);

    let extents = extents3(&a.extents)?;
    let fixed = read_volume(&fixed_path, extents, a.dtype, &mut report)?;
    let moving = read_volume(&moving_path, extents, a.dtype, &mut report)?;
    let config = MorphFlowConfig {
        l_start,
        l_end,
        solver,
        mode,
    };
    let (u, levels) = match pyramid {
        PyramidChoice::Morph => run_traced(&fixed, &moving, &config)?,
        PyramidChoice::Gauss => run_baseline_traced(&fixed, &moving, Pyramid::Gaussian, &config)?,
        PyramidChoice::Haar => run_baseline_traced(&fixed, &moving, Pyramid::Haar, &config)?,
    };
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let files = save_field(&u, &prefix)?;
    report.outputs.extend(files);
    report.outputs.push(field_paths(&prefix).1);

    let n = u.lattice().len() as f64;
    let mean = [0, 1, 2].map(|c| u.component(c).iter().sum::<f64>() / n);
    let max_norm = (0..u.lattice().len())
        .map(|i| {
            let d = u.at(i);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .fold(0.0, f64::max);
    report.results = json!({
        "mean_displacement": mean,
        "max_displacement": max_norm,
        "final_energy": levels.last().map(|r| r.energy_after),
    });
    report.levels = levels;
    Ok((report, Some(report_path)))
}

pub fn metrics(mut a: MetricsArgs) -> Outcome {
    let defaults = SsimParams::default();
    let params = SsimParams {
        window_edge: *a.window.get_or_insert(defaults.window_edge),
        levels: *a.ssim_levels.get_or_insert(defaults.levels),
        ..defaults
    };
    let a_path = required(&a.a, "a")?;
    let b_path = required(&a.b, "b")?;
    let mut report = RunReport::new("metrics", &a);

    let extents = extents3(&a.extents)?;
    let va = read_volume(&a_path, extents, a.dtype, &mut report)?;
    let vb = read_volume(&b_path, extents, a.dtype, &mut report)?;
    let field = match &a.field {
        Some(prefix) => Some(read_field(prefix, &mut report)?),
        None => None,
    };
    let compared = match &field {
        Some(u) => warp(&vb, u)?,
        None => vb.clone(),
    };
    let r = residual(&va, &vb, field.as_ref())?;
    // too few halvings for the window is reported as null rather than failing
    let ml = match ml_ssim(&va, &compared, &params) {
        Ok(x) => Some(x),
        Err(e) if e.is_validation() => None,
        Err(e) => return Err(e.into()),
    };
    report.results = json!({
        "rmse": rmse(&va, &compared)?,
        "ssim": ssim(&va, &compared, &params)?,
        "ml_ssim": ml,
        "residual": residual_stats(&r),
    });
    if let Some(path) = &a.residual_out {
        save_volume(&r, path.clone(), &mut report)?;
    }
    Ok((report, a.report.clone()))
}

/// 8-bit binary PGM of one z slice, zero strain at mid grey.
fn e33_slice_pgm(s: &StrainField, k: usize, peak: f64) -> Vec<u8> {
    let lat = &s.lattice;
    let [nx, ny, _] = lat.extents();
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in 0..ny {
        for i in 0..nx {
            let v = s.e33[lat.linear([i, j, k])];
            let t = if peak > 0.0 { v / peak } else { 0.0 };
            bytes.push((127.5 + 127.5 * t).round().clamp(0.0, 255.0) as u8);
        }
    }
    bytes
}

pub fn strain(mut a: StrainArgs) -> Outcome {
    let field_prefix = required(&a.field, "field")?;
    let prefix = a
        .out_prefix
        .get_or_insert_with(|| PathBuf::from("strain"))
        .clone();
    let mut report = RunReport::new("strain", &a);
    let u = read_field(&field_prefix, &mut report)?;
    let s = strain_of(&u)?;
    let [nx, ny, nz] = u.lattice().extents();
    let slices = a.slices.clone().unwrap_or_else(|| vec![nz / 2]);
    if let Some(&k) = slices.iter().find(|&&k| k >= nz) {
        return Err(CliError::Usage(format!("slice {k} outside z extent {nz}")));
    }
    report.parameters["slices"] = json!(slices);

    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    for (c, name) in StrainField::NAMES.iter().enumerate() {
        let path = suffixed(&prefix, &format!("_{name}.raw"));
        save_volume(&s.component_volume(c), path, &mut report)?;
    }
    let peak = s.e33.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &k in &slices {
        let path = suffixed(&prefix, &format!("_e33_z{k:03}.pgm"));
        fs::write(&path, e33_slice_pgm(&s, k, peak)).map_err(|e| CliError::io(&path, e))?;
        report.outputs.push(path);
    }

    let lat = &s.lattice;
    let plane_means: Vec<f64> = (0..nz)
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..ny {
                for i in 0..nx {
                    acc += s.e33[lat.linear([i, j, k])];
                }
            }
            acc / (nx * ny) as f64
        })
        .collect();
    let peak_plane = (0..nz)
        .max_by(|&x, &y| plane_means[x].total_cmp(&plane_means[y]))
        .unwrap_or(0);
    report.results = json!({
        "e33_min": s.e33.iter().cloned().fold(f64::INFINITY, f64::min),
        "e33_max": s.e33.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "e33_peak_plane": peak_plane,
        "e33_peak_plane_z": lat.position([0, 0, peak_plane])[2],
    });
    Ok((report, a.report.clone()))
}

pub fn scanline(mut a: ScanlineArgs) -> Outcome {
    let input = required(&a.input, "input")?;
    let out = required(&a.out, "out")?;
    let axis = *a.axis.get_or_insert(Axis::Z);
    let mut report = RunReport::new("scanline", &a);
    let v = read_volume(&input, extents3(&a.extents)?, a.dtype, &mut report)?;

    let e = v.extents();
    let (slice_axis, line_axis) = match axis {
        Axis::X => (2, 1),
        Axis::Y => (2, 0),
        Axis::Z => (1, 0),
    };
    let slice = *a.slice.get_or_insert(e[slice_axis] / 2);
    let line = *a.line.get_or_insert(e[line_axis] / 2);
    report.parameters = serde_json::to_value(&a).expect("parameters serialize");
    let samples = scan(&v, axis, slice, line)?;

    let mut csv = String::from("position,value\n");
    for (x, g) in &samples {
        csv.push_str(&format!("{x},{g}\n"));
    }
    write_text(&out, &csv)?;
    report.outputs.push(out);
    let (argmin, min) =
        samples.iter().fold(
            (f64::NAN, f64::INFINITY),
            |b, &(x, g)| if g < b.1 { (x, g) } else { b },
        );
    report.results = json!({
        "samples": samples.len(),
        "min": min,
        "argmin_position": argmin,
    });
    Ok((report, a.report.clone()))
}

pub fn synth(mut a: SynthArgs) -> Outcome {
    let preset = required(&a.preset, "preset")?;
    let seed = *a.seed.get_or_insert(0);
    let out_dir = required(&a.out_dir, "out-dir")?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| out_dir.join("report.json"));
    let mut report = RunReport::new("synth", &a);

    let (fixed, moving, truth) = preset.generate(seed)?;
    create_dir(&out_dir)?;
    save_volume(&fixed, out_dir.join("fixed.raw"), &mut report)?;
    save_volume(&moving, out_dir.join("moving.raw"), &mut report)?;
    let prefix = out_dir.join("truth");
    report.outputs.extend(save_field(&truth, &prefix)?);
    report.outputs.push(field_paths(&prefix).1);

    let spec = json!({
        "preset": preset,
        "seed": seed,
        "phantom": preset.phantom(seed),
        "deformation": preset.deformation(),
    });
    let spec_path = out_dir.join("spec.json");
    write_text(
        &spec_path,
        &(serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n"),
    )?;
    report.outputs.push(spec_path);
    report.results = json!({ "extents": fixed.extents() });
    Ok((report, Some(report_path)))
}
