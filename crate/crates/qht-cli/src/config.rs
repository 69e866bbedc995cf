//! Experiment configuration: one JSON file describes a whole experiment.
//!
//! The same file can drive every subcommand; each command reads the sections
//! it needs and ignores the rest, so a figure recipe is a single config.
//! The schema is strict: unknown keys are rejected so a typo fails the run
//! instead of silently falling back to a default.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Deserialize;

use qht::adapt::{mode_for, Mode};
use qht::homodyne::PhaseStrategy;
use qht::kernels::KernelTarget;
use qht::nullfns::FamilyKind;
use qht::states::{StateKind, StateSpec};

use crate::CliError;

/// Top-level config schema. Sampling fields are optional here because the
/// exact-mode commands do not need them; commands that do require them
/// report a config error when they are missing.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateConfig,
    /// Fock truncation override; omit to let the state pick its own.
    #[serde(default)]
    pub nmax: Option<usize>,
    /// Phase strategy: {"kind":"random"} | {"kind":"grid","p":P} |
    /// {"kind":"stratified","p":P}.
    #[serde(default)]
    pub phases: Option<PhaseStrategy>,
    #[serde(default)]
    pub blocks: Option<u32>,
    #[serde(default)]
    pub samples_per_block: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    /// Fit coefficients on the first half of the blocks only.
    #[serde(default)]
    pub split_fit: bool,
    /// Disable the conditioning guard (pathology demos only).
    #[serde(default)]
    pub keep_all_members: bool,
    /// Observable targets for `observe`; defaults to intensity, quadrature
    /// and amplitude.
    #[serde(default)]
    pub targets: Option<Vec<TargetConfig>>,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub histogram: Option<HistogramConfig>,
    #[serde(default)]
    pub pathology: PathologyConfig,
    /// Output directory; the --out flag takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn state(&self) -> Result<StateSpec, CliError> {
        let kind = self.state.to_kind()?;
        let spec = match self.nmax {
            Some(nmax) => StateSpec::with_nmax(kind, nmax),
            None => StateSpec::new(kind),
        };
        spec.map_err(CliError::from)
    }

    /// Null-family member count: explicit `family.members`, else 6 for
    /// density-matrix runs on coherent states and 10 otherwise.
    pub fn members(&self, density_matrix_run: bool) -> usize {
        self.family.members.unwrap_or({
            if density_matrix_run && matches!(self.state, StateConfig::Coherent { .. }) {
                6
            } else {
                10
            }
        })
    }
}

/// State selection.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// |alpha> with alpha = re + i im.
    Coherent {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// Squeezed vacuum, by mean photon number or squeeze parameter r
    /// (exactly one of the two), with an optional squeeze phase.
    Squeezed {
        #[serde(default)]
        mean_photons: Option<f64>,
        #[serde(default)]
        r: Option<f64>,
        #[serde(default)]
        theta: f64,
    },
    /// Number state |n>.
    Fock { n: usize },
    /// Even cat (|alpha> + |-alpha>) / norm.
    Cat {
        re: f64,
        #[serde(default)]
        im: f64,
    },
}

impl StateConfig {
    pub fn to_kind(&self) -> Result<StateKind, CliError> {
        match *self {
            StateConfig::Coherent { re, im } => Ok(StateKind::Coherent {
                alpha: C64::new(re, im),
            }),
            StateConfig::Squeezed {
                mean_photons,
                r,
                theta,
            } => {
                let r = match (mean_photons, r) {
                    (Some(nbar), None) => match StateKind::squeezed_from_mean_photons(nbar)? {
                        StateKind::SqueezedVacuum { r, .. } => r,
                        _ => unreachable!(),
                    },
                    (None, Some(r)) => r,
                    _ => {
                        return Err(CliError::Config(
                            "squeezed state needs exactly one of `mean_photons`, `r`".into(),
                        ))
                    }
                };
                Ok(StateKind::SqueezedVacuum { r, theta })
            }
            StateConfig::Fock { n } => Ok(StateKind::Fock { n }),
            StateConfig::Cat { re, im } => Ok(StateKind::Cat {
                alpha: C64::new(re, im),
            }),
        }
    }
}

/// Null-function family selection.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "default_family_kind")]
    pub kind: FamilyKind,
    /// Member count M; omit for the per-command default.
    #[serde(default)]
    pub members: Option<usize>,
}

fn default_family_kind() -> FamilyKind {
    FamilyKind::TypeI
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            kind: FamilyKind::TypeI,
            members: None,
        }
    }
}

/// Coefficient mode; `auto` picks real exactly for real-valued targets.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Real,
    Complex,
    #[default]
    Auto,
}

impl ModeConfig {
    pub fn resolve(self, target: KernelTarget) -> Mode {
        match self {
            ModeConfig::Real => Mode::Real,
            ModeConfig::Complex => Mode::Complex,
            ModeConfig::Auto => mode_for(target),
        }
    }
}

/// Estimation target.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Intensity,
    Quadrature,
    Amplitude,
    /// Normally ordered moment <a^dag^n a^m>.
    Moment { n: usize, m: usize },
    /// Density-matrix element rho_nm.
    MatrixElement { n: usize, m: usize },
}

impl TargetConfig {
    pub fn to_target(self) -> KernelTarget {
        match self {
            TargetConfig::Intensity => KernelTarget::Intensity,
            TargetConfig::Quadrature => KernelTarget::Quadrature,
            TargetConfig::Amplitude => KernelTarget::Amplitude,
            TargetConfig::Moment { n, m } => KernelTarget::Moment { n, m },
            TargetConfig::MatrixElement { n, m } => KernelTarget::MatrixElement { n, m },
        }
    }
}

/// Row label for a target in report tables.
pub fn target_label(target: KernelTarget) -> String {
    match target {
        KernelTarget::Intensity => "intensity".into(),
        KernelTarget::Quadrature => "quadrature".into(),
        KernelTarget::Amplitude => "amplitude".into(),
        KernelTarget::Moment { n, m } => format!("moment_{n}_{m}"),
        KernelTarget::MatrixElement { n, m } => format!("rho_{n}_{m}"),
    }
}

/// Which density-matrix elements `reconstruct` estimates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    /// Largest reconstructed index.
    pub nmax: usize,
    pub elements: ElementSelection,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            nmax: 5,
            elements: ElementSelection::Diagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSelection {
    /// rho_nn for n = 0..=nmax.
    Diagonal,
    /// The upper triangle n <= m <= nmax.
    Upper,
}

impl ReconstructConfig {
    pub fn elements(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..=self.nmax {
            match self.elements {
                ElementSelection::Diagonal => out.push((n, n)),
                ElementSelection::Upper => {
                    for m in n..=self.nmax {
                        out.push((n, m));
                    }
                }
            }
        }
        out
    }
}

/// Ranges of the exact gamma tables.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Largest member count in the (members, gamma) table.
    pub m_max: usize,
    /// Diagonal elements rho_nn scanned against member count.
    pub diag_max: usize,
    /// Fixed member count of the (n, m) surface table.
    pub surface_members: usize,
    /// Largest index of the (n, m) surface.
    pub surface_nmax: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            m_max: 30,
            diag_max: 5,
            surface_members: 10,
            surface_nmax: 6,
        }
    }
}

/// Kernel-value histograms emitted by `observe`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Explicit range; omit both to span the observed values.
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    /// Target to histogram; defaults to the first observe target.
    #[serde(default)]
    pub target: Option<TargetConfig>,
}

fn default_bins() -> usize {
    60
}

impl HistogramConfig {
    pub fn range(&self) -> Result<Option<(f64, f64)>, CliError> {
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
            (None, None) => Ok(None),
            _ => Err(CliError::Config(
                "histogram range needs both `lo` and `hi` (or neither)".into(),
            )),
        }
    }
}

/// Knobs of the failure-mode demos.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathologyConfig {
    /// Oversized member count for the overfit report.
    pub members_large: usize,
    /// Largest diagonal element in the overfit report.
    pub nmax: usize,
    /// Coarse grid used to expose aliasing bias.
    pub bias_grid_p: u32,
    /// Phase-dependent target of the bias report.
    pub bias_target: TargetConfig,
}

impl Default for PathologyConfig {
    fn default() -> Self {
        PathologyConfig {
            members_large: 32,
            nmax: 3,
            bias_grid_p: 2,
            bias_target: TargetConfig::MatrixElement { n: 0, m: 2 },
        }
    }
}
