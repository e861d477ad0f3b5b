//! Batch driver: configuration → mesh → tree-cotree → assembly → solves →
//! checks, with a JSON report and VTK field exports.

pub mod config;
pub mod vtk;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eddy_core::assembly::{
    loop_current, uniform_field_surface_current, Assembler, AssemblyError, SourceOptions,
    SourceSpec, Support,
};
use eddy_core::mesh::{build_box_mesh, classify_entities, MeshError};
use eddy_core::solve_feti::{glue_solution, solve_feti_direct, solve_feti_dual};
use eddy_core::solve_mono::{electric_field, solve_monolithic, SolveError};
use eddy_core::topo::{build_partition, build_tree_cotree, TopoError};
use eddy_core::verify::{reconstruct_b, run_suite, Case, Check, Coefficients, SuiteConfig};
use eddy_core::{Complex, FetiSolution, MonoSolution};
use serde::Serialize;
use thiserror::Error;

pub use config::{Formulation, RunConfig, SourceKind};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "EDDY_FETI_THREADS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("topology error: {0}")]
    Topology(#[from] TopoError),
    #[error("solver error: {0}")]
    Solver(String),
}

impl RunError {
    /// 2 for configuration and I/O problems, 3 for solver and topology failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Topology(_) | Self::Solver(_) => 3,
        }
    }
}

impl From<MeshError> for RunError {
    fn from(e: MeshError) -> Self {
        match e {
            // well-formed input, but the insulator is not simply connected
            MeshError::InsulatorTopology => Self::Solver(format!("topology: {e}")),
            _ => Self::Config(format!("geometry: {e}")),
        }
    }
}

impl From<AssemblyError> for RunError {
    fn from(e: AssemblyError) -> Self {
        match e {
            AssemblyError::InvalidMaterials(_)
            | AssemblyError::RawLength { .. }
            | AssemblyError::NotSolenoidal { .. } => Self::Config(e.to_string()),
            _ => Self::Solver(e.to_string()),
        }
    }
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidTolerance(_) => Self::Config(e.to_string()),
            SolveError::Assembly(a) => a.into(),
            _ => Self::Solver(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionSummary {
    pub unknowns: usize,
    pub residual: f64,
    pub a_norm: f64,
    pub phi_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config_echo: RunConfig,
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
    pub solutions: BTreeMap<String, SolutionSummary>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// 0 if every check passes, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.all_pass())
    }
}

fn source_spec(kind: &SourceKind, edges: usize) -> Result<SourceSpec<f64>, RunError> {
    Ok(match kind {
        SourceKind::ConductorLoop(p) => SourceSpec::Volumetric {
            field: loop_current(p.center, p.axis, p.radius, p.magnitude),
            support: Support::ConductorOnly,
            order: 4,
        },
        SourceKind::InsulatorCoil(p) => SourceSpec::Volumetric {
            field: loop_current(p.center, p.axis, p.radius, p.magnitude),
            support: Support::Anywhere,
            order: 4,
        },
        SourceKind::BoundaryUniformB { b0 } => SourceSpec::Surface {
            field: uniform_field_surface_current(*b0),
            order: 2,
        },
        SourceKind::Raw { path } => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })?;
            let values: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("raw source {}: {e}", path.display())))?;
            if values.len() != edges {
                return Err(RunError::Config(format!(
                    "raw source has {} values, mesh has {edges} edges",
                    values.len()
                )));
            }
            SourceSpec::Raw(values)
        }
    })
}

fn summary(
    unknowns: usize,
    residual: f64,
    a: &[&[Complex]],
    phi: &[Complex],
    iterations: Option<usize>,
) -> SolutionSummary {
    SolutionSummary {
        unknowns,
        residual,
        a_norm: a
            .iter()
            .map(|v| eddy_core::scalar::norm_inf(v))
            .fold(0.0, f64::max),
        phi_norm: eddy_core::scalar::norm_inf(phi),
        iterations,
    }
}

fn feti_summary(s: &FetiSolution) -> SolutionSummary {
    let n = s.a_insulator.len() + s.a_conductor.len() + s.phi.len() + s.lambda.len();
    summary(
        n,
        s.residual,
        &[&s.a_conductor, &s.a_insulator],
        &s.phi,
        s.iterations,
    )
}

/// Runs the pipeline. `export_dir` overrides the configured one.
pub fn run(config: &RunConfig, export_dir: Option<&Path>) -> Result<RunReport, RunError> {
    config.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_owned(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let geometry = &config.geometry;
    let mesh = build_box_mesh(geometry)?;
    let labels = classify_entities(&mesh, geometry)?;
    lap("mesh", &mut timings);
    let trees = build_tree_cotree(&mesh, &labels, None)?;
    let partition = build_partition(&mesh, &labels, &trees);
    lap("topology", &mut timings);

    let assembler = Assembler::new(&mesh, &labels, &partition, config.materials)?;
    let spec = source_spec(&config.source.kind, mesh.edges.len())?;
    let options = SourceOptions {
        project_solenoidal: config.source.project_solenoidal,
        split: config.source.interface_split,
        extension: config.source.extension,
        ..Default::default()
    };
    let blocks = assembler.assemble(&spec, &options)?;
    lap("assembly", &mut timings);

    let tol = config.solver.tol;
    let wants = |f| config.formulations.contains(&f);
    let mut solutions = BTreeMap::new();
    let mono: Option<MonoSolution> = if wants(Formulation::Mono) {
        let s = solve_monolithic(&blocks, tol)?;
        solutions.insert(
            "mono".to_owned(),
            summary(s.unknowns, s.residual, &[&s.a], &s.phi, None),
        );
        lap("mono", &mut timings);
        Some(s)
    } else {
        None
    };
    let direct = if wants(Formulation::FetiDirect) {
        let s = solve_feti_direct(&blocks, tol)?;
        solutions.insert("feti_direct".to_owned(), feti_summary(&s));
        lap("feti_direct", &mut timings);
        Some(s)
    } else {
        None
    };
    let dual = if wants(Formulation::FetiDual) {
        let s = solve_feti_dual(&blocks, config.solver.dual_tol, config.solver.max_iter)?;
        solutions.insert("feti_dual".to_owned(), feti_summary(&s));
        lap("feti_dual", &mut timings);
        Some(s)
    } else {
        None
    };

    let uniform_field = match config.source.kind {
        SourceKind::BoundaryUniformB { b0 } => Some(b0),
        _ => None,
    };
    let case = Case {
        assembler: &assembler,
        trees: &trees,
        blocks: &blocks,
        spec: &spec,
        options: &options,
        mono: mono.as_ref(),
        feti_direct: direct.as_ref(),
        feti_dual: dual.as_ref(),
        uniform_field,
    };
    let suite = SuiteConfig {
        enabled: config.checks.clone(),
        dense_edge_limit: config.solver.dense_edge_limit,
        solver_tol: tol,
    };
    let report = run_suite(&case, &suite)?;
    lap("checks", &mut timings);

    if let Some(dir) = export_dir.or(config.outputs.export_dir.as_deref()) {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let mut fields: Vec<(&str, Vec<Complex>, Vec<Complex>)> = Vec::new();
        if let Some(s) = &mono {
            fields.push(("mono", s.a.clone(), s.phi.clone()));
        }
        for (name, s) in [("feti_direct", &direct), ("feti_dual", &dual)] {
            if let Some(s) = s {
                // gluing with the configured tolerance may legitimately fail for
                // a loosely converged dual solve; export the torn fields then
                let glued = glue_solution(&partition, s, tol.max(config.solver.dual_tol));
                let (a, phi) = match glued {
                    Ok(g) => (g.a, g.phi),
                    Err(_) => continue,
                };
                fields.push((name, a, phi));
            }
        }
        for (name, a, phi) in fields {
            let b = reconstruct_b(&mesh, &labels, &partition, Coefficients::Global(&a));
            let e = electric_field(&assembler, &a, &phi)?;
            let text = vtk::render(&format!("eddy-feti {name}"), &mesh, &labels, &b, &e);
            let path = dir.join(format!("{name}.vtk"));
            std::fs::write(&path, text).map_err(|source| RunError::Io { path, source })?;
        }
        lap("export", &mut timings);
    }

    Ok(RunReport {
        config_echo: config.clone(),
        checks: report.checks,
        skipped: report.skipped,
        solutions,
        timings,
    })
}

/// Thread count: flag, then environment, then the rayon default.
pub fn thread_count(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, RunError> {
    if let Some(n) = flag {
        return (n > 0)
            .then_some(Some(n))
            .ok_or_else(|| RunError::Config("--threads must be at least 1".into()));
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(RunError::Config(format!(
                "{THREADS_ENV}={s:?} is not a positive integer"
            ))),
        },
    }
}
