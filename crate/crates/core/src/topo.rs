//! Interface-first tree-cotree splitting and the discrete spaces built on it.
//!
//! A spanning tree of the interface graph is grown first and then continued
//! separately into the closed conductor and the closed insulator. Cotree edges
//! span the gradient-free complement on the whole domain, on each closed
//! subdomain and on the interface at the same time, which is what allows the
//! torn problem to couple only cotree traces.

use std::collections::VecDeque;

use thiserror::Error;

use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::{EntityLabels, Mesh, Subdomain};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("interface is empty")]
    EmptyInterface,
    #[error("tree root {root} is not an interface vertex")]
    RootNotOnInterface { root: usize },
    #[error("interface graph is disconnected: reached {reached} of {total} vertices")]
    DisconnectedInterface { reached: usize, total: usize },
    #[error(
        "{subdomain:?} graph is not connected to the interface ({unreached} vertices unreached)"
    )]
    DisconnectedSubdomain {
        subdomain: Subdomain,
        unreached: usize,
    },
}

/// Tree edges grouped by where they were grown, plus per-edge tree flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeCotree {
    pub root: usize,
    pub interface_tree: Vec<usize>,
    pub conductor_extension: Vec<usize>,
    pub insulator_extension: Vec<usize>,
    pub in_tree: Vec<bool>,
}

impl TreeCotree {
    pub fn is_cotree(&self, e: usize) -> bool {
        !self.in_tree[e]
    }

    pub fn tree_len(&self) -> usize {
        self.interface_tree.len() + self.conductor_extension.len() + self.insulator_extension.len()
    }

    pub fn extension(&self, sub: Subdomain) -> &[usize] {
        match sub {
            Subdomain::Conductor => &self.conductor_extension,
            Subdomain::Insulator => &self.insulator_extension,
        }
    }
}

/// Breadth-first spanning tree of the interface graph, neighbours taken in
/// ascending edge index.
pub fn build_interface_tree<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    root: usize,
) -> Result<Vec<usize>, TopoError> {
    if labels.interface_vertices.is_empty() {
        return Err(TopoError::EmptyInterface);
    }
    if !labels.vertex_in_conductor[root] || !labels.vertex_in_insulator[root] {
        return Err(TopoError::RootNotOnInterface { root });
    }
    let on_interface = |e: usize| labels.edge_in_conductor[e] && labels.edge_in_insulator[e];
    let mut visited = vec![false; mesh.vertices.len()];
    visited[root] = true;
    let tree = grow(mesh, &mut visited, VecDeque::from([root]), on_interface);
    if tree.len() + 1 != labels.interface_vertices.len() {
        return Err(TopoError::DisconnectedInterface {
            reached: tree.len() + 1,
            total: labels.interface_vertices.len(),
        });
    }
    Ok(tree)
}

/// Continues a spanning tree of the interface into one closed subdomain by a
/// multi-source breadth-first search started from all interface vertices.
pub fn extend_tree<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    interface_tree: &[usize],
    subdomain: Subdomain,
) -> Result<Vec<usize>, TopoError> {
    let mut visited = vec![false; mesh.vertices.len()];
    for &v in &labels.interface_vertices {
        visited[v] = true;
    }
    debug_assert_eq!(interface_tree.len() + 1, labels.interface_vertices.len());
    let seeds: VecDeque<usize> = labels.interface_vertices.iter().copied().collect();
    let ext = grow(mesh, &mut visited, seeds, |e| labels.edge_in(subdomain, e));
    let expected = labels.vertices_of(subdomain).len() - labels.interface_vertices.len();
    if ext.len() != expected {
        return Err(TopoError::DisconnectedSubdomain {
            subdomain,
            unreached: expected - ext.len(),
        });
    }
    Ok(ext)
}

fn grow<T: Real>(
    mesh: &Mesh<T>,
    visited: &mut [bool],
    mut queue: VecDeque<usize>,
    admissible: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut tree = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &e in &mesh.vertex_edges[v] {
            if !admissible(e) {
                continue;
            }
            let [a, b] = mesh.edges[e];
            let w = if a == v { b } else { a };
            if !visited[w] {
                visited[w] = true;
                tree.push(e);
                queue.push_back(w);
            }
        }
    }
    tree
}

/// Full interface-first splitting. `root` defaults to the lowest-index
/// interface vertex; it is also the pinned vertex of the nodal spaces.
pub fn build_tree_cotree<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    root: Option<usize>,
) -> Result<TreeCotree, TopoError> {
    let root = match root {
        Some(r) => r,
        None => *labels
            .interface_vertices
            .first()
            .ok_or(TopoError::EmptyInterface)?,
    };
    let interface_tree = build_interface_tree(mesh, labels, root)?;
    let conductor_extension = extend_tree(mesh, labels, &interface_tree, Subdomain::Conductor)?;
    let insulator_extension = extend_tree(mesh, labels, &interface_tree, Subdomain::Insulator)?;
    let mut in_tree = vec![false; mesh.edges.len()];
    for &e in interface_tree
        .iter()
        .chain(&conductor_extension)
        .chain(&insulator_extension)
    {
        in_tree[e] = true;
    }
    Ok(TreeCotree {
        root,
        interface_tree,
        conductor_extension,
        insulator_extension,
        in_tree,
    })
}

/// Bijection between a subset of global entity indices and `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    to_global: Vec<usize>,
    from_global: Vec<Option<usize>>,
}

impl DofMap {
    /// `members` must be ascending; `universe` is the global entity count.
    pub fn new(members: Vec<usize>, universe: usize) -> Self {
        let mut from_global = vec![None; universe];
        for (k, &g) in members.iter().enumerate() {
            debug_assert!(k == 0 || members[k - 1] < g, "members must be ascending");
            from_global[g] = Some(k);
        }
        Self {
            to_global: members,
            from_global,
        }
    }

    pub fn len(&self) -> usize {
        self.to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_global.is_empty()
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.from_global[global]
    }

    pub fn global(&self, local: usize) -> usize {
        self.to_global[local]
    }

    pub fn globals(&self) -> &[usize] {
        &self.to_global
    }

    /// Scatters local coefficients into a global vector (zeros elsewhere).
    pub fn scatter<S: Copy + Default>(&self, local: &[S], universe: usize) -> Vec<S> {
        assert_eq!(local.len(), self.len());
        let mut out = vec![S::default(); universe];
        for (k, &g) in self.to_global.iter().enumerate() {
            out[g] = local[k];
        }
        out
    }

    pub fn gather<S: Copy>(&self, global: &[S]) -> Vec<S> {
        self.to_global.iter().map(|&g| global[g]).collect()
    }
}

/// Index maps of the discrete spaces: edge spaces `V`, `V_C`, `V_I`, `V_Γ`
/// (cotree edges) and nodal spaces `U`, `U_C` (one pinned vertex removed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofPartition {
    pub v: DofMap,
    pub v_conductor: DofMap,
    pub v_insulator: DofMap,
    pub v_interface: DofMap,
    pub u: DofMap,
    pub u_conductor: DofMap,
    pub pinned: usize,
}

impl DofPartition {
    pub fn v_sub(&self, sub: Subdomain) -> &DofMap {
        match sub {
            Subdomain::Conductor => &self.v_conductor,
            Subdomain::Insulator => &self.v_insulator,
        }
    }
}

pub fn build_partition<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    trees: &TreeCotree,
) -> DofPartition {
    let ne = mesh.edges.len();
    let nv = mesh.vertices.len();
    let cotree = |edges: &[usize]| {
        edges
            .iter()
            .copied()
            .filter(|&e| trees.is_cotree(e))
            .collect::<Vec<_>>()
    };
    let all: Vec<usize> = (0..ne).collect();
    let unpinned = |verts: &[usize]| {
        verts
            .iter()
            .copied()
            .filter(|&v| v != trees.root)
            .collect::<Vec<_>>()
    };
    let all_vertices: Vec<usize> = (0..nv).collect();
    DofPartition {
        v: DofMap::new(cotree(&all), ne),
        v_conductor: DofMap::new(cotree(&labels.conductor_edges), ne),
        v_insulator: DofMap::new(cotree(&labels.insulator_edges), ne),
        v_interface: DofMap::new(cotree(&labels.interface_edges), ne),
        u: DofMap::new(unpinned(&all_vertices), nv),
        u_conductor: DofMap::new(unpinned(&labels.conductor_vertices), nv),
        pinned: trees.root,
    }
}

/// Cardinality and restriction identities of a compatible splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompatibilitySummary {
    /// `(edges, vertices − 1, cotree dim)` for Ω, Ω̄_C, Ω̄_I, Γ.
    pub counts: [(usize, usize, usize); 4],
    pub dimension_identities_hold: bool,
    pub conductor_restriction_holds: bool,
    pub insulator_restriction_holds: bool,
    pub interface_trace_holds: bool,
    pub trees_are_spanning: bool,
}

impl CompatibilitySummary {
    pub fn all_hold(&self) -> bool {
        self.dimension_identities_hold
            && self.conductor_restriction_holds
            && self.insulator_restriction_holds
            && self.interface_trace_holds
            && self.trees_are_spanning
    }
}

fn is_spanning_tree<T: Real>(mesh: &Mesh<T>, edges: &[usize], vertices: &[usize]) -> bool {
    if edges.len() + 1 != vertices.len() {
        return false;
    }
    // union-find: acyclic with |V| - 1 edges on the vertex set means spanning
    let mut parent: Vec<usize> = (0..mesh.vertices.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut inside = vec![false; mesh.vertices.len()];
    for &v in vertices {
        inside[v] = true;
    }
    for &e in edges {
        let [a, b] = mesh.edges[e];
        if !inside[a] || !inside[b] {
            return false;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// Recomputes the compatibility identities from scratch: each subdomain gets
/// its own cotree (edges of the closed subdomain minus the tree edges grown
/// for it), which is compared with the restriction of the global cotree.
pub fn check_compatibility<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    trees: &TreeCotree,
    partition: &DofPartition,
) -> CompatibilitySummary {
    let own_cotree = |sub: Subdomain| {
        let mut tree = vec![false; mesh.edges.len()];
        for &e in trees.interface_tree.iter().chain(trees.extension(sub)) {
            tree[e] = true;
        }
        labels
            .edges_of(sub)
            .iter()
            .copied()
            .filter(|&e| !tree[e])
            .collect::<Vec<_>>()
    };
    let restricted = |sub: Subdomain| {
        partition
            .v
            .globals()
            .iter()
            .copied()
            .filter(|&e| labels.edge_in(sub, e))
            .collect::<Vec<_>>()
    };
    let conductor_restriction_holds = own_cotree(Subdomain::Conductor)
        == restricted(Subdomain::Conductor)
        && restricted(Subdomain::Conductor) == partition.v_conductor.globals();
    let insulator_restriction_holds = own_cotree(Subdomain::Insulator)
        == restricted(Subdomain::Insulator)
        && restricted(Subdomain::Insulator) == partition.v_insulator.globals();
    let trace = |map: &DofMap| {
        map.globals()
            .iter()
            .copied()
            .filter(|&e| labels.edge_in_conductor[e] && labels.edge_in_insulator[e])
            .collect::<Vec<_>>()
    };
    let interface_trace_holds = trace(&partition.v_conductor) == partition.v_interface.globals()
        && trace(&partition.v_insulator) == partition.v_interface.globals();

    let counts = [
        (mesh.edges.len(), mesh.vertices.len() - 1, partition.v.len()),
        (
            labels.conductor_edges.len(),
            labels.conductor_vertices.len() - 1,
            partition.v_conductor.len(),
        ),
        (
            labels.insulator_edges.len(),
            labels.insulator_vertices.len() - 1,
            partition.v_insulator.len(),
        ),
        (
            labels.interface_edges.len(),
            labels.interface_vertices.len() - 1,
            partition.v_interface.len(),
        ),
    ];
    let dimension_identities_hold = counts.iter().all(|&(e, v1, d)| e == v1 + d);

    let all_vertices: Vec<usize> = (0..mesh.vertices.len()).collect();
    let all_tree: Vec<usize> = (0..mesh.edges.len())
        .filter(|&e| trees.in_tree[e])
        .collect();
    let sub_tree = |sub: Subdomain| {
        trees
            .interface_tree
            .iter()
            .chain(trees.extension(sub))
            .copied()
            .collect::<Vec<_>>()
    };
    let trees_are_spanning =
        is_spanning_tree(mesh, &trees.interface_tree, &labels.interface_vertices)
            && is_spanning_tree(
                mesh,
                &sub_tree(Subdomain::Conductor),
                &labels.conductor_vertices,
            )
            && is_spanning_tree(
                mesh,
                &sub_tree(Subdomain::Insulator),
                &labels.insulator_vertices,
            )
            && is_spanning_tree(mesh, &all_tree, &all_vertices);

    CompatibilitySummary {
        counts,
        dimension_identities_hold,
        conductor_restriction_holds,
        insulator_restriction_holds,
        interface_trace_holds,
        trees_are_spanning,
    }
}

/// Signed edge–vertex incidence (discrete gradient): `+1` at the head of the
/// edge, `−1` at its tail.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceGradient<T: Real> {
    /// All edges × `U` (pinned vertex column removed).
    pub g: CsrMatrix<T>,
    /// Edges of Ω̄_C × `U_C`.
    pub g_conductor: CsrMatrix<T>,
    /// Edges of Ω̄_I × vertices of Ω̄_I without the pinned one.
    pub g_insulator: CsrMatrix<T>,
}

/// Unpinned incidence matrix, all edges × all vertices.
pub fn full_incidence<T: Real>(mesh: &Mesh<T>) -> CsrMatrix<T> {
    let mut b = TripletBuilder::new(mesh.edges.len(), mesh.vertices.len());
    for (e, &[tail, head]) in mesh.edges.iter().enumerate() {
        b.push(e, tail, -T::one());
        b.push(e, head, T::one());
    }
    b.build()
}

fn restricted_incidence<T: Real>(mesh: &Mesh<T>, rows: &[usize], cols: &DofMap) -> CsrMatrix<T> {
    let mut b = TripletBuilder::new(rows.len(), cols.len());
    for (r, &e) in rows.iter().enumerate() {
        let [tail, head] = mesh.edges[e];
        if let Some(c) = cols.local(tail) {
            b.push(r, c, -T::one());
        }
        if let Some(c) = cols.local(head) {
            b.push(r, c, T::one());
        }
    }
    b.build()
}

pub fn build_gradient<T: Real>(
    mesh: &Mesh<T>,
    labels: &EntityLabels,
    partition: &DofPartition,
) -> IncidenceGradient<T> {
    let all: Vec<usize> = (0..mesh.edges.len()).collect();
    let insulator_nodes = DofMap::new(
        labels
            .insulator_vertices
            .iter()
            .copied()
            .filter(|&v| v != partition.pinned)
            .collect(),
        mesh.vertices.len(),
    );
    IncidenceGradient {
        g: restricted_incidence(mesh, &all, &partition.u),
        g_conductor: restricted_incidence(mesh, &labels.conductor_edges, &partition.u_conductor),
        g_insulator: restricted_incidence(mesh, &labels.insulator_edges, &insulator_nodes),
    }
}
