//! Raw little-endian volume files with JSON sidecars.
//!
//! A volume `foo.raw` is accompanied by `foo.raw.json`. Displacement fields
//! are written as `<prefix>_u.raw`, `<prefix>_v.raw`, `<prefix>_w.raw` with a
//! single `<prefix>.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind, Vec3};
use crate::volume::{DisplacementField, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    Uint8,
    Uint16,
    Float32,
}

impl SampleType {
    pub fn bytes(self) -> usize {
        match self {
            SampleType::Uint8 => 1,
            SampleType::Uint16 => 2,
            SampleType::Float32 => 4,
        }
    }
}

impl std::str::FromStr for SampleType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uint8" | "u8" => Ok(SampleType::Uint8),
            "uint16" | "u16" => Ok(SampleType::Uint16),
            "float32" | "f32" => Ok(SampleType::Float32),
            other => Err(invalid!("unknown sample type {other:?}")),
        }
    }
}

/// Shape and sample type of a headerless raw file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolumeMeta {
    pub extents: Index3,
    pub dtype: SampleType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: LatticeKind,
    pub basis: [Vec3; 3],
    pub origin: Vec3,
    pub extents: Index3,
    pub level: usize,
    pub original_extents: Index3,
    pub dtype: SampleType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
}

impl Sidecar {
    pub fn for_lattice(lattice: &LatticeDescriptor, original_extents: Index3) -> Self {
        Self {
            kind: lattice.kind(),
            basis: lattice.basis(),
            origin: lattice.origin(),
            extents: lattice.extents(),
            level: lattice.level(),
            original_extents,
            dtype: SampleType::Float32,
            components: None,
        }
    }

    pub fn lattice(&self) -> Result<LatticeDescriptor> {
        let scale = self.basis[0][0];
        let lattice =
            LatticeDescriptor::new(self.kind, scale, self.origin, self.extents, self.level)?;
        if lattice.basis() != self.basis {
            return Err(invalid!(
                "basis {:?} is not a {} basis",
                self.basis,
                self.kind
            ));
        }
        Ok(lattice)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_bytes(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_owned(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn decode(bytes: &[u8], dtype: SampleType) -> Vec<f64> {
    match dtype {
        SampleType::Uint8 => bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        SampleType::Uint16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        SampleType::Float32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    }
}

/// Loads a headerless raw volume as a level-0 Cartesian volume in `[0, 1]`.
///
/// Integer samples are divided by the type's maximum; float samples must
/// already lie in `[0, 1]`.
pub fn load_raw(path: impl AsRef<Path>, meta: VolumeMeta) -> Result<Volume> {
    let path = path.as_ref();
    let lattice = LatticeDescriptor::cartesian(meta.extents)?;
    let bytes = read_bytes(path, lattice.len() * meta.dtype.bytes())?;
    let data = decode(&bytes, meta.dtype);
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(invalid!(
            "{}: non-finite sample at {:?}",
            path.display(),
            lattice.unravel(pos)
        ));
    }
    if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid!(
            "{}: sample {} at {:?} outside [0, 1]",
            path.display(),
            data[pos],
            lattice.unravel(pos)
        ));
    }
    Volume::new(lattice, data)
}

fn write_f32(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Writes `volume` as float32 little-endian plus a sidecar at `<path>.json`.
///
/// Samples are rounded to `f32`, so `load_volume(save_raw(v)) == v` holds for
/// volumes whose samples are representable in single precision.
pub fn save_raw(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_f32(path, volume.data())?;
    write_sidecar(
        &sidecar_path(path),
        &Sidecar::for_lattice(volume.lattice(), volume.original_extents()),
    )
}

/// Loads a volume written by [`save_raw`], lattice taken from the sidecar.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let sidecar = read_sidecar(&sidecar_path(path))?;
    let lattice = sidecar.lattice()?;
    let bytes = read_bytes(path, lattice.len() * sidecar.dtype.bytes())?;
    let data = decode(&bytes, sidecar.dtype);
    Volume::with_original_extents(lattice, data, sidecar.original_extents)
}

pub fn field_paths(prefix: impl AsRef<Path>) -> ([PathBuf; 3], PathBuf) {
    let prefix = prefix.as_ref().as_os_str();
    let with = |suffix: &str| {
        let mut s = prefix.to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (
        [with("_u.raw"), with("_v.raw"), with("_w.raw")],
        with(".json"),
    )
}

pub fn save_field(field: &DisplacementField, prefix: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
    let (files, sidecar) = field_paths(prefix);
    for (c, path) in files.iter().enumerate() {
        write_f32(path, field.component(c))?;
    }
    let mut meta = Sidecar::for_lattice(field.lattice(), field.lattice().extents());
    meta.components = Some(vec!["u".into(), "v".into(), "w".into()]);
    write_sidecar(&sidecar, &meta)?;
    Ok(files)
}

pub fn load_field(prefix: impl AsRef<Path>) -> Result<DisplacementField> {
    let (files, sidecar) = field_paths(prefix);
    let meta = read_sidecar(&sidecar)?;
    let lattice = meta.lattice()?;
    let mut comps = Vec::with_capacity(3);
    for path in &files {
        let bytes = read_bytes(path, lattice.len() * meta.dtype.bytes())?;
        comps.push(decode(&bytes, meta.dtype));
    }
    let w = comps.pop().unwrap();
    let v = comps.pop().unwrap();
    let u = comps.pop().unwrap();
    DisplacementField::new(lattice, u, v, w)
}
