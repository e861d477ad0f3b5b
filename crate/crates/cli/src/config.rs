//! Run configuration (JSON).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use eddy_core::assembly::{Extension, InterfaceSplit, Materials};
use eddy_core::mesh::BoxGeometry;
use eddy_core::verify::CHECK_NAMES;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: BoxGeometry<f64>,
    pub materials: Materials<f64>,
    pub source: SourceConfig,
    pub formulations: Vec<Formulation>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Enabled checks; all known checks when absent.
    #[serde(default)]
    pub checks: Option<BTreeSet<String>>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Mono,
    FetiDirect,
    FetiDual,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mono => "mono",
            Self::FetiDirect => "feti_direct",
            Self::FetiDual => "feti_dual",
        }
    }
}

// `deny_unknown_fields` does not combine with `flatten`; the variant
// parameter structs reject stray keys instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    #[serde(flatten)]
    pub kind: SourceKind,
    #[serde(default)]
    pub project_solenoidal: bool,
    #[serde(default)]
    pub interface_split: InterfaceSplit,
    #[serde(default)]
    pub extension: Extension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    /// Loop current truncated to the conductor.
    ConductorLoop(LoopParams),
    /// Loop current over the whole domain; needs `project_solenoidal`.
    InsulatorCoil(LoopParams),
    /// Surface current of a uniform field on the outer boundary.
    #[serde(rename = "boundary_uniform_B")]
    BoundaryUniformB { b0: [f64; 3] },
    /// Edge functional values read from a JSON array, one per mesh edge.
    Raw { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopParams {
    pub center: [f64; 3],
    pub axis: [f64; 3],
    pub radius: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Residual tolerance of the direct solves and of the checks that use it.
    pub tol: f64,
    /// Relative residual target of the dual Krylov iteration.
    pub dual_tol: f64,
    pub max_iter: usize,
    /// Dense eigen/rank checks are skipped above this many mesh edges.
    pub dense_edge_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dual_tol: 1e-12,
            max_iter: 500,
            dense_edge_limit: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub export_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        // raw coefficient files are relative to the config
        if let SourceKind::Raw { path: raw } = &mut config.source.kind {
            if raw.is_relative() {
                if let Some(dir) = path.parent() {
                    *raw = dir.join(&*raw);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |m: String| Err(RunError::Config(m));
        if self.formulations.is_empty() {
            return fail("at least one formulation is required".into());
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) || !(s.dual_tol > 0.0 && s.dual_tol.is_finite()) {
            return fail("solver tolerances must be positive".into());
        }
        if s.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if let Some(checks) = &self.checks {
            if let Some(bad) = checks.iter().find(|c| !CHECK_NAMES.contains(&c.as_str())) {
                return fail(format!(
                    "unknown check {bad:?}; known: {}",
                    CHECK_NAMES.join(", ")
                ));
            }
        }
        match &self.source.kind {
            SourceKind::ConductorLoop(p) | SourceKind::InsulatorCoil(p) => {
                let axis_len = p.axis.iter().map(|x| x * x).sum::<f64>().sqrt();
                if p.radius.is_nan()
                    || p.radius <= 0.0
                    || axis_len.is_nan()
                    || axis_len <= 0.0
                    || !p.magnitude.is_finite()
                {
                    return fail(
                        "loop source needs positive radius, nonzero axis and finite magnitude"
                            .into(),
                    );
                }
            }
            SourceKind::BoundaryUniformB { b0 } => {
                if b0.iter().any(|x| !x.is_finite()) {
                    return fail("b0 must be finite".into());
                }
            }
            SourceKind::Raw { .. } => {}
        }
        if matches!(self.source.kind, SourceKind::InsulatorCoil(_))
            && !self.source.project_solenoidal
        {
            return fail("insulator_coil requires project_solenoidal = true".into());
        }
        Ok(())
    }
}
