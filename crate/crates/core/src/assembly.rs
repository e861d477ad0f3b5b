//! Global, torn and diagnostic operator blocks, and the source functionals.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{
    local_curl_curl, local_mass, local_mixed, local_p1_stiffness, EdgeMatrix, MixedMatrix,
    NodalMatrix, TetGeometry,
};
use crate::linalg::{CsrMatrix, LinalgError, SparseLu, TripletBuilder};
use crate::mesh::{cross3, dot3, EntityLabels, Mesh, Subdomain, LOCAL_EDGES, LOCAL_FACES};
use crate::quadrature::{tet_rule, triangle_rule};
use crate::scalar::Real;
use crate::topo::{DofMap, DofPartition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("tet {tet} is degenerate or inverted")]
    DegenerateTet { tet: usize },
    #[error("invalid materials: {0}")]
    InvalidMaterials(String),
    #[error("interface cotree edge {edge} is missing from the {side:?} edge space")]
    InterfaceDofMissing { edge: usize, side: Subdomain },
    #[error(
        "source is not discretely solenoidal outside the conductor: vertex {vertex} has residual {residual:e} (tolerance {tol:e})"
    )]
    NotSolenoidal {
        vertex: usize,
        residual: f64,
        tol: f64,
    },
    #[error("raw source has {got} coefficients, mesh has {expected} edges")]
    RawLength { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Piecewise-constant coefficients: permeability per subdomain, conductivity
/// on the conductor (zero in the insulator) and the angular frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials<T> {
    pub mu_conductor: T,
    pub mu_insulator: T,
    pub sigma_conductor: T,
    pub omega: T,
}

impl<T: Real> Materials<T> {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.mu_conductor) || !positive(self.mu_insulator) {
            return Err(AssemblyError::InvalidMaterials(
                "permeability must be positive".into(),
            ));
        }
        if !positive(self.sigma_conductor) {
            return Err(AssemblyError::InvalidMaterials(
                "conductor conductivity must be positive".into(),
            ));
        }
        if !(self.omega >= T::zero()) || !self.omega.is_finite() {
            return Err(AssemblyError::InvalidMaterials(
                "angular frequency must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn mu(&self, sub: Subdomain) -> T {
        match sub {
            Subdomain::Conductor => self.mu_conductor,
            Subdomain::Insulator => self.mu_insulator,
        }
    }

    pub fn sigma(&self, sub: Subdomain) -> T {
        match sub {
            Subdomain::Conductor => self.sigma_conductor,
            Subdomain::Insulator => T::zero(),
        }
    }
}

/// Blocks of the monolithic gauged system on `V × U_C`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalBlocks<T: Real> {
    /// curl-curl on `V`
    pub k: CsrMatrix<T>,
    /// conductivity mass on `V`
    pub m: CsrMatrix<T>,
    /// `U_C × V` coupling `∫ σ A · ∇q`
    pub s: CsrMatrix<T>,
    /// `U_C × U_C` conductivity Laplacian
    pub c: CsrMatrix<T>,
}

/// Subdomain blocks of the torn system and the signed jump operators.
#[derive(Clone, Debug, PartialEq)]
pub struct TornBlocks<T: Real> {
    pub k_insulator: CsrMatrix<T>,
    pub k_conductor: CsrMatrix<T>,
    pub m_conductor: CsrMatrix<T>,
    pub s_conductor: CsrMatrix<T>,
    pub c_conductor: CsrMatrix<T>,
    /// `V_Γ × V_C`, `+1` entries
    pub b_conductor: CsrMatrix<T>,
    /// `V_Γ × V_I`, `−1` entries
    pub b_insulator: CsrMatrix<T>,
}

/// Right-hand sides of both formulations.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceVectors<T> {
    /// `⟨J, w_e⟩` on every mesh edge (after projection, if requested).
    pub edge_functional: Vec<T>,
    /// restriction to `V`
    pub j: Vec<T>,
    pub j_conductor: Vec<T>,
    pub j_insulator: Vec<T>,
    /// `⟨J, ∇(E q)⟩` on `U_C`
    pub j_nodal: Vec<T>,
    /// `‖G₀ᵀ J‖∞` before projection
    pub solenoidal_residual: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBlocks<T: Real> {
    pub global: GlobalBlocks<T>,
    pub torn: TornBlocks<T>,
    pub source: SourceVectors<T>,
    pub omega: T,
}

pub type VectorField<T> = Arc<dyn Fn([T; 3]) -> [T; 3] + Send + Sync>;
/// Surface current `J_s(x, outward normal, μ of the adjacent tet)`.
pub type SurfaceField<T> = Arc<dyn Fn([T; 3], [T; 3], T) -> [T; 3] + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    ConductorOnly,
    Anywhere,
}

#[derive(Clone)]
pub enum SourceSpec<T> {
    Zero,
    Volumetric {
        field: VectorField<T>,
        support: Support,
        order: usize,
    },
    Surface {
        field: SurfaceField<T>,
        order: usize,
    },
    /// Edge functional values on every mesh edge.
    Raw(Vec<T>),
}

impl<T> fmt::Debug for SourceSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Volumetric { support, order, .. } => {
                write!(f, "Volumetric({support:?}, order {order})")
            }
            Self::Surface { order, .. } => write!(f, "Surface(order {order})"),
            Self::Raw(v) => write!(f, "Raw({} values)", v.len()),
        }
    }
}

/// How interface cotree entries of `J` are shared between the subdomains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InterfaceSplit {
    #[default]
    Conductor,
    Even,
}

/// Extension of conductor nodal functions into the insulator used for `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Extension {
    #[default]
    Zero,
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceOptions<T> {
    pub project_solenoidal: bool,
    pub split: InterfaceSplit,
    pub extension: Extension,
    /// Relative tolerance of the solenoidality test on unprojected sources.
    pub solenoidal_tol: T,
}

impl<T: Real> Default for SourceOptions<T> {
    fn default() -> Self {
        Self {
            project_solenoidal: false,
            split: InterfaceSplit::Conductor,
            extension: Extension::Zero,
            solenoidal_tol: T::lit(1e-10),
        }
    }
}

/// Azimuthal current around `axis` through `center`, concentrated near
/// `radius` with a Gaussian profile of width `radius / 4`. Divergence-free.
pub fn loop_current<T: Real>(
    center: [T; 3],
    axis: [T; 3],
    radius: T,
    magnitude: T,
) -> VectorField<T> {
    let len = dot3(axis, axis).sqrt();
    let axis = axis.map(|x| x / len);
    let width = radius * T::lit(0.25);
    Arc::new(move |x: [T; 3]| {
        let d = [0, 1, 2].map(|k| x[k] - center[k]);
        let along = dot3(d, axis);
        let radial = [0, 1, 2].map(|k| d[k] - along * axis[k]);
        let rho = dot3(radial, radial).sqrt();
        let dist2 = (rho - radius) * (rho - radius) + along * along;
        let profile = magnitude * (-dist2 / (T::lit(2.0) * width * width)).exp();
        if rho <= T::epsilon() {
            return [T::zero(); 3];
        }
        cross3(axis, radial).map(|c| c * profile / rho)
    })
}

/// `J_s = (μ⁻¹ B₀) × n`, the surface current of a uniform field `B₀`.
pub fn uniform_field_surface_current<T: Real>(b0: [T; 3]) -> SurfaceField<T> {
    Arc::new(move |_x, n, mu| cross3(b0.map(|b| b / mu), n))
}

/// Element matrices of every tet, computed once.
#[derive(Clone, Debug)]
pub struct Assembler<'a, T: Real> {
    pub mesh: &'a Mesh<T>,
    pub labels: &'a EntityLabels,
    pub partition: &'a DofPartition,
    pub materials: Materials<T>,
    geometry: Vec<TetGeometry<T>>,
    curl: Vec<EdgeMatrix<T>>,
    mass: Vec<EdgeMatrix<T>>,
    mixed: Vec<MixedMatrix<T>>,
    stiffness: Vec<NodalMatrix<T>>,
}

impl<'a, T: Real> Assembler<'a, T> {
    /// Element loop runs in parallel; results are collected in tet order so
    /// the assembled matrices do not depend on the thread count.
    pub fn new(
        mesh: &'a Mesh<T>,
        labels: &'a EntityLabels,
        partition: &'a DofPartition,
        materials: Materials<T>,
    ) -> Result<Self, AssemblyError> {
        materials.validate()?;
        let geometry = (0..mesh.tets.len())
            .into_par_iter()
            .map(|t| {
                TetGeometry::new(mesh.tet_points(t)).ok_or(AssemblyError::DegenerateTet { tet: t })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let locals: Vec<_> = geometry
            .par_iter()
            .zip(labels.tet_label.par_iter())
            .map(|(g, &sub)| {
                let (mu, sigma) = (materials.mu(sub), materials.sigma(sub));
                (
                    local_curl_curl(g, mu),
                    local_mass(g, sigma),
                    local_mixed(g, sigma),
                    local_p1_stiffness(g, sigma),
                )
            })
            .collect();
        let mut curl = Vec::with_capacity(locals.len());
        let mut mass = Vec::with_capacity(locals.len());
        let mut mixed = Vec::with_capacity(locals.len());
        let mut stiffness = Vec::with_capacity(locals.len());
        for (k, m, s, c) in locals {
            curl.push(k);
            mass.push(m);
            mixed.push(s);
            stiffness.push(c);
        }
        Ok(Self {
            mesh,
            labels,
            partition,
            materials,
            geometry,
            curl,
            mass,
            mixed,
            stiffness,
        })
    }

    pub fn tet_geometry(&self, t: usize) -> &TetGeometry<T> {
        &self.geometry[t]
    }

    fn tets(&self, sub: Option<Subdomain>) -> Vec<usize> {
        match sub {
            Some(s) => self.labels.tets_of(s).collect(),
            None => (0..self.mesh.tets.len()).collect(),
        }
    }

    fn edge_block(&self, locals: &[EdgeMatrix<T>], tets: &[usize], map: &DofMap) -> CsrMatrix<T> {
        let mut b = TripletBuilder::new(map.len(), map.len());
        for &t in tets {
            let (ids, signs) = (self.mesh.tet_edges[t], self.mesh.tet_edge_signs[t]);
            for i in 0..6 {
                let Some(r) = map.local(ids[i]) else { continue };
                for j in 0..6 {
                    let Some(c) = map.local(ids[j]) else { continue };
                    let sign = T::lit(f64::from(signs[i] * signs[j]));
                    b.push(r, c, sign * locals[t][i][j]);
                }
            }
        }
        b.build()
    }

    fn mixed_block(&self, tets: &[usize], nodes: &DofMap, edges: &DofMap) -> CsrMatrix<T> {
        let mut b = TripletBuilder::new(nodes.len(), edges.len());
        for &t in tets {
            let (ids, signs, verts) = (
                self.mesh.tet_edges[t],
                self.mesh.tet_edge_signs[t],
                self.mesh.tets[t],
            );
            for k in 0..4 {
                let Some(r) = nodes.local(verts[k]) else {
                    continue;
                };
                for l in 0..6 {
                    let Some(c) = edges.local(ids[l]) else {
                        continue;
                    };
                    b.push(r, c, T::lit(f64::from(signs[l])) * self.mixed[t][k][l]);
                }
            }
        }
        b.build()
    }

    fn nodal_block(&self, tets: &[usize], nodes: &DofMap) -> CsrMatrix<T> {
        let mut b = TripletBuilder::new(nodes.len(), nodes.len());
        for &t in tets {
            let verts = self.mesh.tets[t];
            for k in 0..4 {
                let Some(r) = nodes.local(verts[k]) else {
                    continue;
                };
                for m in 0..4 {
                    let Some(c) = nodes.local(verts[m]) else {
                        continue;
                    };
                    b.push(r, c, self.stiffness[t][k][m]);
                }
            }
        }
        b.build()
    }

    /// Curl-curl block over the tets of `sub` (all tets for `None`) on an
    /// arbitrary edge space. Used for diagnostics with the full edge space or
    /// a deliberately deficient tree.
    pub fn curl_curl_on(&self, sub: Option<Subdomain>, edges: &DofMap) -> CsrMatrix<T> {
        self.edge_block(&self.curl, &self.tets(sub), edges)
    }

    /// Curl-curl over the full edge space of Ω (`None`) or of a closed subdomain, no gauge.
    pub fn full_space_curl_curl(&self, sub: Option<Subdomain>) -> (CsrMatrix<T>, DofMap) {
        let ne = self.mesh.edges.len();
        let edges = match sub {
            Some(s) => self.labels.edges_of(s).to_vec(),
            None => (0..ne).collect(),
        };
        let map = DofMap::new(edges, ne);
        (self.curl_curl_on(sub, &map), map)
    }

    pub fn global(&self) -> GlobalBlocks<T> {
        let p = self.partition;
        let all = self.tets(None);
        let cond = self.tets(Some(Subdomain::Conductor));
        GlobalBlocks {
            k: self.edge_block(&self.curl, &all, &p.v),
            m: self.edge_block(&self.mass, &cond, &p.v),
            s: self.mixed_block(&cond, &p.u_conductor, &p.v),
            c: self.nodal_block(&cond, &p.u_conductor),
        }
    }

    pub fn torn(&self) -> Result<TornBlocks<T>, AssemblyError> {
        let p = self.partition;
        let cond = self.tets(Some(Subdomain::Conductor));
        let ins = self.tets(Some(Subdomain::Insulator));
        let (b_conductor, b_insulator) = jump_operators(p)?;
        Ok(TornBlocks {
            k_insulator: self.edge_block(&self.curl, &ins, &p.v_insulator),
            k_conductor: self.edge_block(&self.curl, &cond, &p.v_conductor),
            m_conductor: self.edge_block(&self.mass, &cond, &p.v_conductor),
            s_conductor: self.mixed_block(&cond, &p.u_conductor, &p.v_conductor),
            c_conductor: self.nodal_block(&cond, &p.u_conductor),
            b_conductor,
            b_insulator,
        })
    }

    /// Coupling and Laplacian blocks tested with every conductor vertex,
    /// including the pinned one: rows over `nodes`, columns over `V` and `U_C`.
    pub fn conductor_test_blocks(&self) -> (DofMap, CsrMatrix<T>, CsrMatrix<T>) {
        let cond = self.tets(Some(Subdomain::Conductor));
        let nodes = DofMap::new(
            self.labels.conductor_vertices.clone(),
            self.mesh.vertices.len(),
        );
        let s = self.mixed_block(&cond, &nodes, &self.partition.v);
        let mut b = TripletBuilder::new(nodes.len(), self.partition.u_conductor.len());
        for &t in &cond {
            let verts = self.mesh.tets[t];
            for k in 0..4 {
                let Some(r) = nodes.local(verts[k]) else {
                    continue;
                };
                for m in 0..4 {
                    let Some(c) = self.partition.u_conductor.local(verts[m]) else {
                        continue;
                    };
                    b.push(r, c, self.stiffness[t][k][m]);
                }
            }
        }
        (nodes, s, b.build())
    }

    /// `⟨J, w_e⟩` for every mesh edge.
    pub fn edge_functional(&self, spec: &SourceSpec<T>) -> Result<Vec<T>, AssemblyError> {
        let ne = self.mesh.edges.len();
        let mut out = vec![T::zero(); ne];
        match spec {
            SourceSpec::Zero => {}
            SourceSpec::Raw(values) => {
                if values.len() != ne {
                    return Err(AssemblyError::RawLength {
                        expected: ne,
                        got: values.len(),
                    });
                }
                out.copy_from_slice(values);
            }
            SourceSpec::Volumetric {
                field,
                support,
                order,
            } => {
                let rule = tet_rule::<T>(*order);
                let tets = match support {
                    Support::ConductorOnly => self.tets(Some(Subdomain::Conductor)),
                    Support::Anywhere => self.tets(None),
                };
                let locals: Vec<[T; 6]> = tets
                    .par_iter()
                    .map(|&t| {
                        let g = &self.geometry[t];
                        let mut loc = [T::zero(); 6];
                        for (bary, w) in &rule {
                            let jx = field(g.point(*bary));
                            for (l, slot) in loc.iter_mut().enumerate() {
                                *slot += *w * g.volume * dot3(jx, g.edge_function(l, *bary));
                            }
                        }
                        loc
                    })
                    .collect();
                for (&t, loc) in tets.iter().zip(&locals) {
                    for l in 0..6 {
                        out[self.mesh.tet_edges[t][l]] +=
                            T::lit(f64::from(self.mesh.tet_edge_signs[t][l])) * loc[l];
                    }
                }
            }
            SourceSpec::Surface { field, order } => {
                let rule = triangle_rule::<T>(*order);
                for f in (0..self.mesh.faces.len()).filter(|&f| self.mesh.is_boundary_face(f)) {
                    let t = self.mesh.face_tets[f][0];
                    let g = &self.geometry[t];
                    let local_face = self.mesh.tet_faces[t]
                        .iter()
                        .position(|&x| x == f)
                        .expect("face of its tet");
                    let opposite = local_face;
                    // outward normal points away from the opposite vertex
                    let grad = g.grad_lambda[opposite];
                    let len = dot3(grad, grad).sqrt();
                    let normal = grad.map(|x| -x / len);
                    let mu = self.materials.mu(self.labels.tet_label[t]);
                    let area = self.mesh.face_area(f);
                    let corners = LOCAL_FACES[local_face];
                    for (bary3, w) in &rule {
                        let mut bary = [T::zero(); 4];
                        for (c, &lv) in corners.iter().enumerate() {
                            bary[lv] = bary3[c];
                        }
                        let js = field(g.point(bary), normal, mu);
                        for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                            if a == opposite || b == opposite {
                                continue;
                            }
                            let e = self.mesh.tet_edges[t][l];
                            let sign = T::lit(f64::from(self.mesh.tet_edge_signs[t][l]));
                            out[e] += sign * *w * area * dot3(js, g.edge_function(l, bary));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Builds all right-hand sides from a source description.
    pub fn source(
        &self,
        spec: &SourceSpec<T>,
        options: &SourceOptions<T>,
    ) -> Result<SourceVectors<T>, AssemblyError> {
        let raw = self.edge_functional(spec)?;
        let outside = SolenoidalProjector::new(self.mesh, self.labels)?;
        let residual = outside.residual(&raw);
        let (worst_vertex, worst) =
            residual
                .iter()
                .enumerate()
                .fold((usize::MAX, T::zero()), |(bv, bm), (k, r)| {
                    if r.abs() > bm {
                        (k, r.abs())
                    } else {
                        (bv, bm)
                    }
                });
        let functional = if options.project_solenoidal {
            outside.project(&raw)?
        } else {
            let scale = crate::scalar::norm_inf(&raw);
            let tol = options.solenoidal_tol * if scale > T::zero() { scale } else { T::one() };
            if worst > tol {
                return Err(AssemblyError::NotSolenoidal {
                    vertex: outside.vertices.global(worst_vertex),
                    residual: worst.as_f64(),
                    tol: tol.as_f64(),
                });
            }
            raw
        };
        self.distribute(functional, worst, options)
    }

    fn distribute(
        &self,
        functional: Vec<T>,
        residual: T,
        options: &SourceOptions<T>,
    ) -> Result<SourceVectors<T>, AssemblyError> {
        let p = self.partition;
        let on_interface =
            |e: usize| self.labels.edge_in_conductor[e] && self.labels.edge_in_insulator[e];
        let (share_c, share_i) = match options.split {
            InterfaceSplit::Conductor => (T::one(), T::zero()),
            InterfaceSplit::Even => (T::lit(0.5), T::lit(0.5)),
        };
        let j = p.v.gather(&functional);
        let j_conductor = p
            .v_conductor
            .globals()
            .iter()
            .map(|&e| {
                if on_interface(e) {
                    share_c * functional[e]
                } else {
                    functional[e]
                }
            })
            .collect();
        let j_insulator = p
            .v_insulator
            .globals()
            .iter()
            .map(|&e| {
                if on_interface(e) {
                    share_i * functional[e]
                } else {
                    functional[e]
                }
            })
            .collect();
        let j_nodal = nodal_functional(self.mesh, self.labels, p, &functional, options.extension)?;
        Ok(SourceVectors {
            edge_functional: functional,
            j,
            j_conductor,
            j_insulator,
            j_nodal,
            solenoidal_residual: residual,
        })
    }

    pub fn assemble(
        &self,
        spec: &SourceSpec<T>,
        options: &SourceOptions<T>,
    ) -> Result<OperatorBlocks<T>, AssemblyError> {
        Ok(OperatorBlocks {
            global: self.global(),
            torn: self.torn()?,
            source: self.source(spec, options)?,
            omega: self.materials.omega,
        })
    }
}

/// Signed selection matrices mapping subdomain cotree coefficients to the
/// interface cotree edges: `B_C` with `+1`, `B_I` with `−1`.
pub fn jump_operators<T: Real>(
    p: &DofPartition,
) -> Result<(CsrMatrix<T>, CsrMatrix<T>), AssemblyError> {
    let ng = p.v_interface.len();
    let mut bc = TripletBuilder::new(ng, p.v_conductor.len());
    let mut bi = TripletBuilder::new(ng, p.v_insulator.len());
    for (g, &e) in p.v_interface.globals().iter().enumerate() {
        let c = p
            .v_conductor
            .local(e)
            .ok_or(AssemblyError::InterfaceDofMissing {
                edge: e,
                side: Subdomain::Conductor,
            })?;
        let i = p
            .v_insulator
            .local(e)
            .ok_or(AssemblyError::InterfaceDofMissing {
                edge: e,
                side: Subdomain::Insulator,
            })?;
        bc.push(g, c, T::one());
        bi.push(g, i, -T::one());
    }
    Ok((bc.build(), bi.build()))
}

/// Gradients of nodal functions vanishing on Ω̄_C: the incidence columns of
/// insulator vertices off the interface, and the graph Laplacian `G₀ᵀ G₀`.
#[derive(Clone, Debug)]
pub struct SolenoidalProjector<'a, T: Real> {
    mesh: &'a Mesh<T>,
    pub vertices: DofMap,
    laplacian: Option<SparseLu<T>>,
}

impl<'a, T: Real> SolenoidalProjector<'a, T> {
    pub fn new(mesh: &'a Mesh<T>, labels: &EntityLabels) -> Result<Self, AssemblyError> {
        let members: Vec<usize> = (0..mesh.vertices.len())
            .filter(|&v| !labels.vertex_in_conductor[v])
            .collect();
        let vertices = DofMap::new(members, mesh.vertices.len());
        let laplacian = if vertices.is_empty() {
            None
        } else {
            let mut b = TripletBuilder::new(vertices.len(), vertices.len());
            for &[a, c] in &mesh.edges {
                let (la, lc) = (vertices.local(a), vertices.local(c));
                for l in [la, lc].into_iter().flatten() {
                    b.push(l, l, T::one());
                }
                if let (Some(x), Some(y)) = (la, lc) {
                    b.push(x, y, -T::one());
                    b.push(y, x, -T::one());
                }
            }
            Some(SparseLu::factor(&b.build())?)
        };
        Ok(Self {
            mesh,
            vertices,
            laplacian,
        })
    }

    /// `G₀ᵀ J`: one entry per insulator vertex off the interface.
    pub fn residual(&self, functional: &[T]) -> Vec<T> {
        let mut r = vec![T::zero(); self.vertices.len()];
        for (e, &[tail, head]) in self.mesh.edges.iter().enumerate() {
            if let Some(k) = self.vertices.local(tail) {
                r[k] -= functional[e];
            }
            if let Some(k) = self.vertices.local(head) {
                r[k] += functional[e];
            }
        }
        r
    }

    fn apply_g0(&self, c: &[T], out: &mut [T]) {
        for (e, &[tail, head]) in self.mesh.edges.iter().enumerate() {
            if let Some(k) = self.vertices.local(tail) {
                out[e] += c[k];
            }
            if let Some(k) = self.vertices.local(head) {
                out[e] -= c[k];
            }
        }
    }

    /// Removes `G₀ c` with `G₀ᵀ G₀ c = G₀ᵀ J`; one refinement step.
    pub fn project(&self, functional: &[T]) -> Result<Vec<T>, AssemblyError> {
        let mut out = functional.to_vec();
        let Some(lu) = &self.laplacian else {
            return Ok(out);
        };
        for _ in 0..2 {
            let rhs = self.residual(&out);
            let c = lu.solve(&rhs)?;
            self.apply_g0(&c, &mut out);
        }
        Ok(out)
    }

    /// Solves with the Dirichlet graph Laplacian on the outside vertices.
    pub fn solve_laplacian(&self, rhs: &[T]) -> Result<Vec<T>, AssemblyError> {
        match &self.laplacian {
            Some(lu) => Ok(lu.solve(rhs)?),
            None => Ok(Vec::new()),
        }
    }
}

/// Free-standing projection onto discretely solenoidal functionals.
pub fn project_solenoidal<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    raw: &[T],
) -> Result<Vec<T>, AssemblyError> {
    SolenoidalProjector::new(mesh, labels)?.project(raw)
}

/// `⟨J, ∇(E q)⟩` for every `q` in `U_C`, with zero or graph-harmonic extension `E`.
pub fn nodal_functional<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    partition: &DofPartition,
    functional: &[T],
    extension: Extension,
) -> Result<Vec<T>, AssemblyError> {
    nodal_functional_on(mesh, labels, &partition.u_conductor, functional, extension)
}

/// As [`nodal_functional`], tested with the nodal functions in `nodes`.
pub fn nodal_functional_on<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    nodes: &DofMap,
    functional: &[T],
    extension: Extension,
) -> Result<Vec<T>, AssemblyError> {
    // Gᵀ J over all vertices
    let mut gq = vec![T::zero(); mesh.vertices.len()];
    for (e, &[tail, head]) in mesh.edges.iter().enumerate() {
        gq[tail] -= functional[e];
        gq[head] += functional[e];
    }
    if extension == Extension::Harmonic {
        let outside = SolenoidalProjector::new(mesh, labels)?;
        let y = outside.solve_laplacian(&outside.vertices.gather(&gq))?;
        let mut correction = vec![T::zero(); mesh.vertices.len()];
        for &[a, b] in &mesh.edges {
            match (outside.vertices.local(a), outside.vertices.local(b)) {
                (Some(k), None) => correction[b] += y[k],
                (None, Some(k)) => correction[a] += y[k],
                _ => {}
            }
        }
        for v in 0..gq.len() {
            gq[v] += correction[v];
        }
    }
    Ok(nodes.gather(&gq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, classify_entities, BoxGeometry};
    use crate::topo::{build_gradient, build_partition, build_tree_cotree};

    struct Fixture {
        mesh: Mesh<f64>,
        labels: EntityLabels,
        partition: DofPartition,
    }

    fn fixture(g: &BoxGeometry<f64>) -> Fixture {
        let mesh = build_box_mesh(g).unwrap();
        let labels = classify_entities(&mesh, g).unwrap();
        let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
        let partition = build_partition(&mesh, &labels, &trees);
        Fixture {
            mesh,
            labels,
            partition,
        }
    }

    fn materials() -> Materials<f64> {
        Materials {
            mu_conductor: 2.0,
            mu_insulator: 1.0,
            sigma_conductor: 5.0,
            omega: 3.0,
        }
    }

    #[test]
    fn rejects_bad_materials() {
        let mut m = materials();
        m.sigma_conductor = 0.0;
        assert!(m.validate().is_err());
        let mut m = materials();
        m.omega = -1.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn symmetric_blocks_and_kernel() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let g = a.global();
        let t = a.torn().unwrap();
        for m in [
            &g.k,
            &g.m,
            &g.c,
            &t.k_insulator,
            &t.k_conductor,
            &t.m_conductor,
            &t.c_conductor,
        ] {
            assert!(m.asymmetry() < 1e-14);
        }
        // full-space curl-curl annihilates all gradients
        let (kfull, _) = a.full_space_curl_curl(None);
        let grad = build_gradient(&f.mesh, &f.labels, &f.partition);
        let kg = kfull.matmul(&grad.g);
        assert!(kg.max_abs() < 1e-12 * kfull.max_abs());
    }

    #[test]
    fn mass_vanishes_away_from_conductor() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let m = a.global().m;
        for (k, &e) in f.partition.v.globals().iter().enumerate() {
            if !f.labels.edge_in_conductor[e] {
                assert!(m.row(k).all(|(_, v)| v == 0.0));
            }
        }
    }

    #[test]
    fn jump_operators_are_signed_selections() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let (bc, bi) = jump_operators::<f64>(&f.partition).unwrap();
        for g in 0..bc.nrows() {
            assert_eq!(bc.row(g).collect::<Vec<_>>().len(), 1);
            assert_eq!(bi.row(g).map(|(_, v)| v).collect::<Vec<_>>(), vec![-1.0]);
        }
        // matched unit trace on one interface edge
        let e = f.partition.v_interface.global(0);
        let mut ac = vec![0.0; f.partition.v_conductor.len()];
        let mut ai = vec![0.0; f.partition.v_insulator.len()];
        ac[f.partition.v_conductor.local(e).unwrap()] = 1.0;
        ai[f.partition.v_insulator.local(e).unwrap()] = 1.0;
        let jump: Vec<f64> = bc
            .mul_vec(&ac)
            .iter()
            .zip(bi.mul_vec(&ai))
            .map(|(x, y)| x + y)
            .collect();
        assert!(jump.iter().all(|&x| x == 0.0));
        // insulator-interior cotree edge has no trace
        let interior = f
            .partition
            .v_insulator
            .globals()
            .iter()
            .position(|&e| !f.labels.edge_in_conductor[e])
            .unwrap();
        let mut ai = vec![0.0; f.partition.v_insulator.len()];
        ai[interior] = 1.0;
        assert!(bi.mul_vec(&ai).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn missing_interface_dof_is_reported() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let mut p = f.partition.clone();
        let e = p.v_interface.global(0);
        let kept: Vec<usize> = p
            .v_insulator
            .globals()
            .iter()
            .copied()
            .filter(|&x| x != e)
            .collect();
        p.v_insulator = DofMap::new(kept, f.mesh.edges.len());
        assert_eq!(
            jump_operators::<f64>(&p).unwrap_err(),
            AssemblyError::InterfaceDofMissing {
                edge: e,
                side: Subdomain::Insulator
            }
        );
    }

    #[test]
    fn zero_source_is_zero() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let s = a
            .source(&SourceSpec::Zero, &SourceOptions::default())
            .unwrap();
        for v in [&s.j, &s.j_conductor, &s.j_insulator, &s.j_nodal] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn conductor_supported_source_is_solenoidal_outside() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 4));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let spec = SourceSpec::Volumetric {
            field: loop_current([0.25, 0.5, 0.5], [1.0, 0.0, 0.0], 0.25, 1.0),
            support: Support::ConductorOnly,
            order: 4,
        };
        let raw = a.edge_functional(&spec).unwrap();
        let proj = SolenoidalProjector::new(&f.mesh, &f.labels).unwrap();
        assert!(proj.residual(&raw).iter().all(|&r| r == 0.0));
        let zero = a.source(&spec, &SourceOptions::default()).unwrap();
        let harmonic = a
            .source(
                &spec,
                &SourceOptions {
                    extension: Extension::Harmonic,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(crate::scalar::rel_diff_inf(&harmonic.j_nodal, &zero.j_nodal) < 1e-12);
    }

    #[test]
    fn anywhere_source_requires_projection() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 4));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let spec = SourceSpec::Volumetric {
            field: loop_current([0.75, 0.5, 0.5], [1.0, 0.0, 0.0], 0.25, 1.0),
            support: Support::Anywhere,
            order: 2,
        };
        assert!(matches!(
            a.source(&spec, &SourceOptions::default()),
            Err(AssemblyError::NotSolenoidal { .. })
        ));
        let opts = SourceOptions {
            project_solenoidal: true,
            ..Default::default()
        };
        let s = a.source(&spec, &opts).unwrap();
        let proj = SolenoidalProjector::new(&f.mesh, &f.labels).unwrap();
        let scale = crate::scalar::norm_inf(&s.edge_functional);
        assert!(crate::scalar::norm_inf(&proj.residual(&s.edge_functional)) <= 1e-12 * scale);
        let harmonic = a
            .source(
                &spec,
                &SourceOptions {
                    extension: Extension::Harmonic,
                    ..opts
                },
            )
            .unwrap();
        assert!(crate::scalar::rel_diff_inf(&harmonic.j_nodal, &s.j_nodal) < 1e-12);
    }

    #[test]
    fn projection_fixes_solenoidal_and_kills_gradients() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let proj = SolenoidalProjector::new(&f.mesh, &f.labels).unwrap();
        // pure gradient of an outside vertex
        let v = proj.vertices.global(0);
        let mut g0 = vec![0.0; f.mesh.edges.len()];
        for (e, &[a, b]) in f.mesh.edges.iter().enumerate() {
            if a == v {
                g0[e] = -1.0;
            } else if b == v {
                g0[e] = 1.0;
            }
        }
        let out = proj.project(&g0).unwrap();
        assert!(crate::scalar::norm_inf(&out) < 1e-14);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn projection_is_solenoidal_and_idempotent(raw in proptest::collection::vec(-1.0f64..1.0, 98)) {
            let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
            proptest::prop_assume!(raw.len() == f.mesh.edges.len());
            let proj = SolenoidalProjector::new(&f.mesh, &f.labels).unwrap();
            let out = proj.project(&raw).unwrap();
            let scale = crate::scalar::norm_inf(&raw);
            proptest::prop_assert!(crate::scalar::norm_inf(&proj.residual(&out)) <= 1e-12 * scale);
            let again = proj.project(&out).unwrap();
            let diff: Vec<f64> = again.iter().zip(&out).map(|(a, b)| a - b).collect();
            proptest::prop_assert!(crate::scalar::norm_inf(&diff) <= 1e-13 * scale);
            // the removed part is a gradient of outside vertices: it is orthogonal
            // to anything already solenoidal, so projecting twice changes nothing
            // and values on conductor-closure-only edges are untouched
            for (e, &[a, b]) in f.mesh.edges.iter().enumerate() {
                if f.labels.vertex_in_conductor[a] && f.labels.vertex_in_conductor[b] {
                    proptest::prop_assert_eq!(out[e], raw[e]);
                }
            }
        }
    }

    #[test]
    fn splitting_relations_hold() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 2));
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
        let spec = SourceSpec::Volumetric {
            field: loop_current([0.25, 0.5, 0.5], [0.0, 0.0, 1.0], 0.2, 1.0),
            support: Support::ConductorOnly,
            order: 3,
        };
        let b = a.assemble(&spec, &SourceOptions::default()).unwrap();
        let p = &f.partition;
        // gluing selection R: V → V_C × V_I
        let mut r = TripletBuilder::new(p.v_conductor.len() + p.v_insulator.len(), p.v.len());
        for (k, &e) in p.v.globals().iter().enumerate() {
            if let Some(c) = p.v_conductor.local(e) {
                r.push(c, k, 1.0);
            }
            if let Some(i) = p.v_insulator.local(e) {
                r.push(p.v_conductor.len() + i, k, 1.0);
            }
        }
        let r = r.build();
        let nc = p.v_conductor.len();
        let mut blk = TripletBuilder::new(r.nrows(), r.nrows());
        blk.push_block(0, 0, &b.torn.k_conductor, 1.0);
        blk.push_block(nc, nc, &b.torn.k_insulator, 1.0);
        let k = r.transpose().matmul(&blk.build()).matmul(&r);
        assert!(k.max_abs_diff(&b.global.k) < 1e-12 * b.global.k.max_abs());
        let mut glued = b.source.j_conductor.clone();
        glued.extend_from_slice(&b.source.j_insulator);
        let jr = r.tr_mul_vec(&glued);
        assert!(crate::scalar::rel_diff_inf(&jr, &b.source.j) < 1e-14);
    }

    #[test]
    fn assembly_is_thread_count_independent() {
        let f = fixture(&BoxGeometry::unit_cube_split_x(0.5, 4));
        let build = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials()).unwrap();
                    let spec = SourceSpec::Volumetric {
                        field: loop_current([0.25, 0.5, 0.5], [1.0, 0.0, 0.0], 0.25, 1.0),
                        support: Support::ConductorOnly,
                        order: 4,
                    };
                    a.assemble(&spec, &SourceOptions::default()).unwrap()
                })
        };
        assert_eq!(build(1), build(4));
    }
}
