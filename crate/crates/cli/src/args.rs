use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use morphflow::io::SampleType;
use morphflow::synth::{Axis, Preset};
use morphflow::LiftingMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const THREADS_ENV: &str = "MORPHFLOW_THREADS";

/// Morphological-wavelet TV-L1 optical flow for volume images.
#[derive(Debug, Parser)]
#[command(name = "morphflow", version)]
pub struct Cli {
    /// JSON file with one object per subcommand; explicit flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Upper bound on worker threads
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Min/max lifting decomposition into per-level volumes
    Decompose(DecomposeArgs),
    /// Displacement field between a fixed and a moving volume
    Flow(FlowArgs),
    /// RMSE, SSIM, ML-SSIM and residual statistics of a volume pair
    Metrics(MetricsArgs),
    /// Small-strain tensor of a displacement field
    Strain(StrainArgs),
    /// Grey values along one axis-aligned line as CSV
    Scanline(ScanlineArgs),
    /// Synthetic phantom pair with its true displacement field
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Decompose(_) => "decompose",
            Command::Flow(_) => "flow",
            Command::Metrics(_) => "metrics",
            Command::Strain(_) => "strain",
            Command::Scanline(_) => "scanline",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PyramidChoice {
    Morph,
    #[serde(alias = "gaussian")]
    #[value(alias = "gaussian")]
    Gauss,
    Haar,
}

/// Fills every field left unset on the command line from `base`.
pub trait Merge {
    fn merge(self, base: Self) -> Self;
}

macro_rules! merge_fields {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Merge for $t {
            fn merge(self, base: Self) -> Self {
                Self { $($f: self.$f.or(base.$f)),* }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Extents of a headerless input; without it a sidecar is required
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z")]
    pub extents: Option<Vec<usize>>,
    #[arg(long)]
    pub dtype: Option<SampleType>,
    /// Number of lifting steps [default: 3]
    #[arg(long)]
    pub levels: Option<usize>,
    /// [default: min]
    #[arg(long)]
    pub mode: Option<LiftingMode>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Report path [default: <out-dir>/report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(DecomposeArgs {
    input,
    extents,
    dtype,
    levels,
    mode,
    out_dir,
    report
});

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowArgs {
    #[arg(long)]
    pub fixed: Option<PathBuf>,
    #[arg(long)]
    pub moving: Option<PathBuf>,
    /// Extents of headerless inputs; without it sidecars are required
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z")]
    pub extents: Option<Vec<usize>>,
    #[arg(long)]
    pub dtype: Option<SampleType>,
    /// Coarsest lifting level, a multiple of 3 [default: 12]
    #[arg(long)]
    pub l_start: Option<usize>,
    /// Finest lifting level, a multiple of 3 [default: 0]
    #[arg(long)]
    pub l_end: Option<usize>,
    /// [default: min]
    #[arg(long)]
    pub mode: Option<LiftingMode>,
    /// Primal step; the dual step follows as 1/(12 tau) [default: 0.25]
    #[arg(long)]
    pub tau: Option<f64>,
    /// [default: 25]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// [default: 0.2]
    #[arg(long)]
    pub theta: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    pub warps: Option<usize>,
    /// Inner iterations per warp [default: 30]
    #[arg(long)]
    pub iters: Option<usize>,
    /// [default: morph]
    #[arg(long, value_enum)]
    pub pyramid: Option<PyramidChoice>,
    /// Writes <prefix>_u.raw, <prefix>_v.raw, <prefix>_w.raw and <prefix>.json [default: flow]
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
    /// Report path [default: <prefix>_report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(FlowArgs {
    fixed,
    moving,
    extents,
    dtype,
    l_start,
    l_end,
    mode,
    tau,
    lambda,
    theta,
    warps,
    iters,
    pyramid,
    out_prefix,
    report,
});

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Extents of headerless inputs; without it sidecars are required
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z")]
    pub extents: Option<Vec<usize>>,
    #[arg(long)]
    pub dtype: Option<SampleType>,
    /// Field prefix; `b` is compared after warping with it
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// SSIM window edge [default: 7]
    #[arg(long)]
    pub window: Option<usize>,
    /// ML-SSIM scale count [default: 3]
    #[arg(long)]
    pub ssim_levels: Option<usize>,
    /// Writes the residual volume here
    #[arg(long)]
    pub residual_out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(MetricsArgs {
    a,
    b,
    extents,
    dtype,
    field,
    window,
    ssim_levels,
    residual_out,
    report
});

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrainArgs {
    /// Field prefix as written by `flow`
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Writes <prefix>_e11.raw … <prefix>_e23.raw and ε₃₃ slices [default: strain]
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
    /// z indices of the exported ε₃₃ slices [default: centre]
    #[arg(long, value_delimiter = ',')]
    pub slices: Option<Vec<usize>>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(StrainArgs {
    field,
    out_prefix,
    slices,
    report
});

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanlineArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z")]
    pub extents: Option<Vec<usize>>,
    #[arg(long)]
    pub dtype: Option<SampleType>,
    /// [default: z]
    #[arg(long)]
    pub axis: Option<Axis>,
    /// z index for x and y lines, y index for z lines [default: centre]
    #[arg(long)]
    pub slice: Option<usize>,
    /// Remaining index [default: centre]
    #[arg(long)]
    pub line: Option<usize>,
    /// CSV destination
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(ScanlineArgs {
    input,
    extents,
    dtype,
    axis,
    slice,
    line,
    out,
    report
});

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// shift32, shift64, crack32 or crack64
    #[arg(long)]
    pub preset: Option<Preset>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Report path [default: <out-dir>/report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
}
merge_fields!(SynthArgs {
    preset,
    seed,
    out_dir,
    report
});

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub threads: Option<usize>,
    pub decompose: Option<serde_json::Value>,
    pub flow: Option<serde_json::Value>,
    pub metrics: Option<serde_json::Value>,
    pub strain: Option<serde_json::Value>,
    pub scanline: Option<serde_json::Value>,
    pub synth: Option<serde_json::Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    fn section(&self, name: &str) -> Option<&serde_json::Value> {
        match name {
            "decompose" => self.decompose.as_ref(),
            "flow" => self.flow.as_ref(),
            "metrics" => self.metrics.as_ref(),
            "strain" => self.strain.as_ref(),
            "scanline" => self.scanline.as_ref(),
            "synth" => self.synth.as_ref(),
            _ => None,
        }
    }

    /// Merges the section for `name` under `flags`.
    pub fn apply<T: Merge + DeserializeOwned + Default>(
        &self,
        name: &str,
        flags: T,
    ) -> Result<T, CliError> {
        let base = match self.section(name) {
            Some(v) => T::deserialize(v)
                .map_err(|e| CliError::Usage(format!("config section {name:?}: {e}")))?,
            None => T::default(),
        };
        Ok(flags.merge(base))
    }
}
