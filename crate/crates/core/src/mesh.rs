//! Structured Kuhn tetrahedral meshes of an axis-aligned box with a box-shaped
//! conductor, plus the conductor / insulator / interface entity labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Local vertex pairs of the six tet edges.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Local vertex triples of the four tet faces (face `k` is opposite vertex `k`).
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("resolution must be at least 1")]
    ZeroResolution,
    #[error("domain extent along axis {axis} is not a positive multiple of the cell size 1/{resolution}")]
    DomainNotGridAligned { axis: usize, resolution: usize },
    #[error("conductor bound along axis {axis} does not lie on a grid plane")]
    ConductorNotGridAligned { axis: usize },
    #[error("conductor box leaves the domain along axis {axis}")]
    ConductorOutsideDomain { axis: usize },
    #[error("conductor subdomain is empty")]
    EmptyConductor,
    #[error("insulator subdomain is empty")]
    EmptyInsulator,
    #[error(
        "conductor must touch the domain boundary on exactly one side along at least one axis; \
         otherwise the insulator is disconnected, encloses a cavity, or wraps a tunnel"
    )]
    InsulatorTopology,
}

/// Axis-aligned domain box with an axis-aligned conductor box, meshed with
/// `resolution` cells per unit length along every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGeometry<T> {
    pub domain_min: [T; 3],
    pub domain_max: [T; 3],
    pub conductor_min: [T; 3],
    pub conductor_max: [T; 3],
    pub resolution: usize,
}

/// Validated geometry in integer grid units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub cells: [usize; 3],
    pub conductor_lo: [usize; 3],
    pub conductor_hi: [usize; 3],
}

impl GridLayout {
    pub fn vertex_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    pub fn vertex_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.cells[0] + 1) * (j + (self.cells[1] + 1) * k)
    }

    fn cell_in_conductor(&self, cell: [usize; 3]) -> bool {
        (0..3).all(|a| cell[a] >= self.conductor_lo[a] && cell[a] < self.conductor_hi[a])
    }
}

fn grid_units<T: Real>(len: T, resolution: usize) -> Option<usize> {
    let x = len.as_f64() * resolution as f64;
    let r = x.round();
    let tol = 1e-9_f64.max(64.0 * T::epsilon().as_f64()) * r.abs().max(1.0);
    ((x - r).abs() <= tol && r >= 0.0).then_some(r as usize)
}

impl<T: Real> BoxGeometry<T> {
    pub fn new(
        domain_min: [T; 3],
        domain_max: [T; 3],
        conductor_min: [T; 3],
        conductor_max: [T; 3],
        resolution: usize,
    ) -> Self {
        Self {
            domain_min,
            domain_max,
            conductor_min,
            conductor_max,
            resolution,
        }
    }

    /// Unit cube with the conductor occupying `x <= split`.
    pub fn unit_cube_split_x(split: T, resolution: usize) -> Self {
        let (z, o) = (T::zero(), T::one());
        Self::new([z; 3], [o; 3], [z; 3], [split, o, o], resolution)
    }

    pub fn cell_size(&self) -> T {
        T::one() / T::lit(self.resolution as f64)
    }

    /// Checks every geometric constraint and returns the grid layout.
    pub fn layout(&self) -> Result<GridLayout, MeshError> {
        let n = self.resolution;
        if n == 0 {
            return Err(MeshError::ZeroResolution);
        }
        let mut cells = [0; 3];
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            cells[a] = grid_units(self.domain_max[a] - self.domain_min[a], n)
                .filter(|&c| c > 0)
                .ok_or(MeshError::DomainNotGridAligned {
                    axis: a,
                    resolution: n,
                })?;
            if self.conductor_min[a] < self.domain_min[a]
                || self.conductor_max[a] > self.domain_max[a]
            {
                return Err(MeshError::ConductorOutsideDomain { axis: a });
            }
            lo[a] = grid_units(self.conductor_min[a] - self.domain_min[a], n)
                .ok_or(MeshError::ConductorNotGridAligned { axis: a })?;
            hi[a] = grid_units(self.conductor_max[a] - self.domain_min[a], n)
                .ok_or(MeshError::ConductorNotGridAligned { axis: a })?;
        }
        if (0..3).any(|a| hi[a] <= lo[a]) {
            return Err(MeshError::EmptyConductor);
        }
        if (0..3).all(|a| lo[a] == 0 && hi[a] == cells[a]) {
            return Err(MeshError::EmptyInsulator);
        }
        // Sweeping along an axis where the conductor is flush on one side only
        // retracts the insulator onto a slab, so it is contractible and the
        // interface is a disk.
        let one_sided = (0..3).any(|a| (lo[a] == 0) != (hi[a] == cells[a]));
        if !one_sided {
            return Err(MeshError::InsulatorTopology);
        }
        Ok(GridLayout {
            cells,
            conductor_lo: lo,
            conductor_hi: hi,
        })
    }
}

/// Tetrahedral mesh with globally oriented edges (`lo → hi` by vertex index)
/// and sorted faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    pub vertices: Vec<[T; 3]>,
    /// Positively oriented tets.
    pub tets: Vec<[usize; 4]>,
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<[usize; 3]>,
    pub tet_edges: Vec<[usize; 6]>,
    /// `+1` if local edge `(a, b)` of [`LOCAL_EDGES`] runs along the global orientation.
    pub tet_edge_signs: Vec<[i8; 6]>,
    pub tet_faces: Vec<[usize; 4]>,
    /// One or two adjacent tets per face.
    pub face_tets: Vec<Vec<usize>>,
    /// Edges incident to each vertex, ascending.
    pub vertex_edges: Vec<Vec<usize>>,
    /// Which grid cell each tet came from.
    pub tet_cell: Vec<[usize; 3]>,
    /// Cells along each axis.
    pub cells: [usize; 3],
}

pub fn sub3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl<T: Real> Mesh<T> {
    pub fn tet_points(&self, t: usize) -> [[T; 3]; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn signed_volume(&self, t: usize) -> T {
        let p = self.tet_points(t);
        dot3(sub3(p[1], p[0]), cross3(sub3(p[2], p[0]), sub3(p[3], p[0]))) / T::lit(6.0)
    }

    pub fn tet_centroid(&self, t: usize) -> [T; 3] {
        let p = self.tet_points(t);
        let q = T::lit(0.25);
        [0, 1, 2].map(|a| (p[0][a] + p[1][a] + p[2][a] + p[3][a]) * q)
    }

    /// Unit normal of a face (orientation: right-hand rule on the sorted vertex triple).
    pub fn face_normal(&self, f: usize) -> [T; 3] {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        let n = cross3(sub3(b, a), sub3(c, a));
        let len = dot3(n, n).sqrt();
        n.map(|x| x / len)
    }

    pub fn face_area(&self, f: usize) -> T {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        let n = cross3(sub3(b, a), sub3(c, a));
        dot3(n, n).sqrt() / T::lit(2.0)
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_tets[f].len() == 1
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edges.binary_search(&key).ok()
    }

    /// `V − E + F − T`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
            - self.tets.len() as i64
    }
}

/// Meshes the box after validating the conductor/insulator layout.
pub fn build_box_mesh<T: Real>(geometry: &BoxGeometry<T>) -> Result<Mesh<T>, MeshError> {
    let layout = geometry.layout()?;
    Ok(kuhn_mesh(
        geometry.domain_min,
        layout.cells,
        geometry.cell_size(),
    ))
}

/// Kuhn mesh of a grid of cubes with edge length `h`: every cube is split
/// into six tets sharing the min-corner → max-corner body diagonal, so the
/// face diagonals of neighbouring cubes match.
pub fn kuhn_mesh<T: Real>(origin: [T; 3], cells: [usize; 3], h: T) -> Mesh<T> {
    let layout = GridLayout {
        cells,
        conductor_lo: [0; 3],
        conductor_hi: [0; 3],
    };
    let [nx, ny, nz] = cells;

    let mut vertices = Vec::with_capacity(layout.vertex_count());
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let idx = [i, j, k];
                vertices.push([0, 1, 2].map(|a| origin[a] + T::lit(idx[a] as f64) * h));
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    let mut tet_cell = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for (p, path) in KUHN_PATHS.iter().enumerate() {
                    let mut c = [i, j, k];
                    let mut verts = [layout.vertex_index(c[0], c[1], c[2]); 4];
                    for (step, &axis) in path.iter().enumerate() {
                        c[axis] += 1;
                        verts[step + 1] = layout.vertex_index(c[0], c[1], c[2]);
                    }
                    // odd axis permutations are negatively oriented
                    if matches!(p, 1 | 2 | 5) {
                        verts.swap(2, 3);
                    }
                    tets.push(verts);
                    tet_cell.push([i, j, k]);
                }
            }
        }
    }

    Mesh::from_tets(vertices, tets, tet_cell, cells)
}

impl<T: Real> Mesh<T> {
    /// Builds the edge/face enumeration and incidence maps of a tet list.
    /// Tets must be positively oriented.
    pub fn from_tets(
        vertices: Vec<[T; 3]>,
        tets: Vec<[usize; 4]>,
        tet_cell: Vec<[usize; 3]>,
        cells: [usize; 3],
    ) -> Self {
        let mut edges: Vec<[usize; 2]> = tets
            .iter()
            .flat_map(|t| {
                LOCAL_EDGES.map(|(a, b)| {
                    let (u, v) = (t[a], t[b]);
                    [u.min(v), u.max(v)]
                })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut faces: Vec<[usize; 3]> = tets
            .iter()
            .flat_map(|t| {
                LOCAL_FACES.map(|f| {
                    let mut tri = f.map(|l| t[l]);
                    tri.sort_unstable();
                    tri
                })
            })
            .collect();
        faces.sort_unstable();
        faces.dedup();

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_edge_signs = Vec::with_capacity(tets.len());
        let mut tet_faces = Vec::with_capacity(tets.len());
        let mut face_tets = vec![Vec::new(); faces.len()];
        for (ti, t) in tets.iter().enumerate() {
            let mut ids = [0; 6];
            let mut signs = [0i8; 6];
            for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                let (u, v) = (t[a], t[b]);
                ids[l] = edges
                    .binary_search(&[u.min(v), u.max(v)])
                    .expect("edge enumerated");
                signs[l] = if u < v { 1 } else { -1 };
            }
            let mut fids = [0; 4];
            for (l, f) in LOCAL_FACES.iter().enumerate() {
                let mut tri = f.map(|x| t[x]);
                tri.sort_unstable();
                fids[l] = faces.binary_search(&tri).expect("face enumerated");
                face_tets[fids[l]].push(ti);
            }
            tet_edges.push(ids);
            tet_edge_signs.push(signs);
            tet_faces.push(fids);
        }

        let mut vertex_edges = vec![Vec::new(); vertices.len()];
        for (e, &[a, b]) in edges.iter().enumerate() {
            vertex_edges[a].push(e);
            vertex_edges[b].push(e);
        }

        Mesh {
            vertices,
            tets,
            edges,
            faces,
            tet_edges,
            tet_edge_signs,
            tet_faces,
            face_tets,
            vertex_edges,
            tet_cell,
            cells,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subdomain {
    Conductor,
    Insulator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityLabel {
    ConductorInterior,
    InsulatorInterior,
    Interface,
    OuterBoundary,
}

/// Subdomain membership of every mesh entity.
///
/// `*_in_conductor` / `*_in_insulator` describe membership in the closed
/// subdomains; the interface is their intersection.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityLabels {
    pub tet_label: Vec<Subdomain>,
    pub vertex_label: Vec<EntityLabel>,
    pub edge_label: Vec<EntityLabel>,
    pub face_label: Vec<EntityLabel>,
    pub vertex_in_conductor: Vec<bool>,
    pub vertex_in_insulator: Vec<bool>,
    pub edge_in_conductor: Vec<bool>,
    pub edge_in_insulator: Vec<bool>,
    pub conductor_vertices: Vec<usize>,
    pub insulator_vertices: Vec<usize>,
    pub interface_vertices: Vec<usize>,
    pub conductor_edges: Vec<usize>,
    pub insulator_edges: Vec<usize>,
    pub interface_edges: Vec<usize>,
    pub interface_faces: Vec<usize>,
}

impl EntityLabels {
    pub fn conductor_tets(&self) -> impl Iterator<Item = usize> + '_ {
        self.tets_of(Subdomain::Conductor)
    }

    pub fn insulator_tets(&self) -> impl Iterator<Item = usize> + '_ {
        self.tets_of(Subdomain::Insulator)
    }

    pub fn tets_of(&self, sub: Subdomain) -> impl Iterator<Item = usize> + '_ {
        self.tet_label
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == sub)
            .map(|(t, _)| t)
    }

    pub fn vertex_in(&self, sub: Subdomain, v: usize) -> bool {
        match sub {
            Subdomain::Conductor => self.vertex_in_conductor[v],
            Subdomain::Insulator => self.vertex_in_insulator[v],
        }
    }

    pub fn edge_in(&self, sub: Subdomain, e: usize) -> bool {
        match sub {
            Subdomain::Conductor => self.edge_in_conductor[e],
            Subdomain::Insulator => self.edge_in_insulator[e],
        }
    }

    pub fn vertices_of(&self, sub: Subdomain) -> &[usize] {
        match sub {
            Subdomain::Conductor => &self.conductor_vertices,
            Subdomain::Insulator => &self.insulator_vertices,
        }
    }

    pub fn edges_of(&self, sub: Subdomain) -> &[usize] {
        match sub {
            Subdomain::Conductor => &self.conductor_edges,
            Subdomain::Insulator => &self.insulator_edges,
        }
    }
}

fn label(in_c: bool, in_i: bool, on_boundary: bool) -> EntityLabel {
    match (in_c, in_i) {
        (true, true) => EntityLabel::Interface,
        _ if on_boundary => EntityLabel::OuterBoundary,
        (true, false) => EntityLabel::ConductorInterior,
        _ => EntityLabel::InsulatorInterior,
    }
}

/// Labels tets by their grid cell and propagates closed-subdomain membership
/// to faces, edges and vertices.
pub fn classify_entities<T: Real>(
    mesh: &Mesh<T>,
    geometry: &BoxGeometry<T>,
) -> Result<EntityLabels, MeshError> {
    let layout = geometry.layout()?;
    assert_eq!(
        layout.cells, mesh.cells,
        "mesh was not generated from this geometry"
    );
    let tet_label: Vec<Subdomain> = mesh
        .tet_cell
        .iter()
        .map(|&c| {
            if layout.cell_in_conductor(c) {
                Subdomain::Conductor
            } else {
                Subdomain::Insulator
            }
        })
        .collect();
    Ok(label_entities(mesh, tet_label))
}

/// Derives vertex/edge/face labels from per-tet subdomain labels.
pub fn label_entities<T: Real>(mesh: &Mesh<T>, tet_label: Vec<Subdomain>) -> EntityLabels {
    assert_eq!(tet_label.len(), mesh.tets.len());

    let (nv, ne, nf) = (mesh.vertices.len(), mesh.edges.len(), mesh.faces.len());
    let mut v_c = vec![false; nv];
    let mut v_i = vec![false; nv];
    let mut e_c = vec![false; ne];
    let mut e_i = vec![false; ne];
    let mut f_c = vec![false; nf];
    let mut f_i = vec![false; nf];
    for (t, &sub) in tet_label.iter().enumerate() {
        let (vs, es, fs) = match sub {
            Subdomain::Conductor => (&mut v_c, &mut e_c, &mut f_c),
            Subdomain::Insulator => (&mut v_i, &mut e_i, &mut f_i),
        };
        mesh.tets[t].iter().for_each(|&v| vs[v] = true);
        mesh.tet_edges[t].iter().for_each(|&e| es[e] = true);
        mesh.tet_faces[t].iter().for_each(|&f| fs[f] = true);
    }

    let mut v_bd = vec![false; nv];
    let mut e_bd = vec![false; ne];
    let face_bd: Vec<bool> = (0..nf).map(|f| mesh.is_boundary_face(f)).collect();
    for f in (0..nf).filter(|&f| face_bd[f]) {
        let [a, b, c] = mesh.faces[f];
        for v in [a, b, c] {
            v_bd[v] = true;
        }
        for (x, y) in [(a, b), (a, c), (b, c)] {
            e_bd[mesh.edge_index(x, y).expect("face edge exists")] = true;
        }
    }

    let vertex_label: Vec<_> = (0..nv).map(|v| label(v_c[v], v_i[v], v_bd[v])).collect();
    let edge_label: Vec<_> = (0..ne).map(|e| label(e_c[e], e_i[e], e_bd[e])).collect();
    let face_label: Vec<_> = (0..nf).map(|f| label(f_c[f], f_i[f], face_bd[f])).collect();

    let collect = |flags: &[bool]| {
        flags
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    let both = |a: &[bool], b: &[bool]| (0..a.len()).filter(|&k| a[k] && b[k]).collect::<Vec<_>>();

    EntityLabels {
        conductor_vertices: collect(&v_c),
        insulator_vertices: collect(&v_i),
        interface_vertices: both(&v_c, &v_i),
        conductor_edges: collect(&e_c),
        insulator_edges: collect(&e_i),
        interface_edges: both(&e_c, &e_i),
        interface_faces: both(&f_c, &f_i),
        tet_label,
        vertex_label,
        edge_label,
        face_label,
        vertex_in_conductor: v_c,
        vertex_in_insulator: v_i,
        edge_in_conductor: e_c,
        edge_in_insulator: e_i,
    }
}
