//! Element matrices for lowest-order Nédélec (edge) and P1 (nodal) functions
//! on a single tetrahedron.
//!
//! Local edge `l` runs from local vertex `a` to `b` with `(a, b) = LOCAL_EDGES[l]`;
//! its basis function is `λ_a ∇λ_b − λ_b ∇λ_a`. Global orientation signs are
//! applied by the assembler.

use crate::mesh::{cross3, dot3, sub3, LOCAL_EDGES};
use crate::quadrature::tet_degree2;
use crate::scalar::Real;

/// Volume and barycentric gradients of a tetrahedron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TetGeometry<T> {
    pub points: [[T; 3]; 4],
    pub volume: T,
    pub grad_lambda: [[T; 3]; 4],
}

impl<T: Real> TetGeometry<T> {
    /// `None` for degenerate or inverted tets.
    pub fn new(points: [[T; 3]; 4]) -> Option<Self> {
        let a = sub3(points[1], points[0]);
        let b = sub3(points[2], points[0]);
        let c = sub3(points[3], points[0]);
        let det = dot3(a, cross3(b, c));
        let scale = dot3(a, a).max(dot3(b, b)).max(dot3(c, c));
        if !(det > T::epsilon() * scale * scale.sqrt()) {
            return None;
        }
        let g1 = cross3(b, c).map(|x| x / det);
        let g2 = cross3(c, a).map(|x| x / det);
        let g3 = cross3(a, b).map(|x| x / det);
        let g0 = [0, 1, 2].map(|k| -(g1[k] + g2[k] + g3[k]));
        Some(Self {
            points,
            volume: det / T::lit(6.0),
            grad_lambda: [g0, g1, g2, g3],
        })
    }

    pub fn point(&self, bary: [T; 4]) -> [T; 3] {
        [0, 1, 2].map(|k| (0..4).map(|i| bary[i] * self.points[i][k]).sum())
    }

    /// Value of local edge function `l` at barycentric point `bary`.
    pub fn edge_function(&self, l: usize, bary: [T; 4]) -> [T; 3] {
        let (a, b) = LOCAL_EDGES[l];
        let (ga, gb) = (self.grad_lambda[a], self.grad_lambda[b]);
        [0, 1, 2].map(|k| bary[a] * gb[k] - bary[b] * ga[k])
    }

    /// Constant curl of local edge function `l`: `2 ∇λ_a × ∇λ_b`.
    pub fn edge_curl(&self, l: usize) -> [T; 3] {
        let (a, b) = LOCAL_EDGES[l];
        cross3(self.grad_lambda[a], self.grad_lambda[b]).map(|x| x + x)
    }

    /// Local edge vector `p_b − p_a`.
    pub fn edge_vector(&self, l: usize) -> [T; 3] {
        let (a, b) = LOCAL_EDGES[l];
        sub3(self.points[b], self.points[a])
    }
}

pub type EdgeMatrix<T> = [[T; 6]; 6];
pub type MixedMatrix<T> = [[T; 6]; 4];
pub type NodalMatrix<T> = [[T; 4]; 4];

/// `∫ μ⁻¹ curl w_i · curl w_j`.
pub fn local_curl_curl<T: Real>(tet: &TetGeometry<T>, mu: T) -> EdgeMatrix<T> {
    let curls: [[T; 3]; 6] = std::array::from_fn(|l| tet.edge_curl(l));
    let f = tet.volume / mu;
    std::array::from_fn(|i| std::array::from_fn(|j| f * dot3(curls[i], curls[j])))
}

/// `∫ σ w_i · w_j`, degree-2 quadrature (exact).
pub fn local_mass<T: Real>(tet: &TetGeometry<T>, sigma: T) -> EdgeMatrix<T> {
    let mut m = [[T::zero(); 6]; 6];
    if sigma == T::zero() {
        return m;
    }
    for (bary, w) in tet_degree2::<T>() {
        let vals: [[T; 3]; 6] = std::array::from_fn(|l| tet.edge_function(l, bary));
        let f = sigma * w * tet.volume;
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] += f * dot3(vals[i], vals[j]);
            }
        }
    }
    m
}

/// `∫ σ w_l · ∇λ_k` with rows `k` (nodes) and columns `l` (edges).
pub fn local_mixed<T: Real>(tet: &TetGeometry<T>, sigma: T) -> MixedMatrix<T> {
    let mut s = [[T::zero(); 6]; 4];
    if sigma == T::zero() {
        return s;
    }
    for (bary, w) in tet_degree2::<T>() {
        let f = sigma * w * tet.volume;
        for l in 0..6 {
            let wl = tet.edge_function(l, bary);
            for k in 0..4 {
                s[k][l] += f * dot3(wl, tet.grad_lambda[k]);
            }
        }
    }
    s
}

/// `∫ σ ∇λ_k · ∇λ_m`.
pub fn local_p1_stiffness<T: Real>(tet: &TetGeometry<T>, sigma: T) -> NodalMatrix<T> {
    let f = sigma * tet.volume;
    std::array::from_fn(|k| {
        std::array::from_fn(|m| f * dot3(tet.grad_lambda[k], tet.grad_lambda[m]))
    })
}

/// Edge coefficients of `∇λ_k` in the local edge basis: `+1` at the head of
/// the edge, `−1` at its tail.
pub fn gradient_embedding<T: Real>() -> [[T; 4]; 6] {
    std::array::from_fn(|l| {
        let (a, b) = LOCAL_EDGES[l];
        std::array::from_fn(|k| {
            if k == b {
                T::one()
            } else if k == a {
                -T::one()
            } else {
                T::zero()
            }
        })
    })
}

/// Edge integrals `∫_e F · t ds` of a field that is affine on the tet
/// (midpoint rule is exact).
pub fn interpolate_affine<T: Real>(
    tet: &TetGeometry<T>,
    field: impl Fn([T; 3]) -> [T; 3],
) -> [T; 6] {
    std::array::from_fn(|l| {
        let (a, b) = LOCAL_EDGES[l];
        let half = T::lit(0.5);
        let mid = [0, 1, 2].map(|k| (tet.points[a][k] + tet.points[b][k]) * half);
        dot3(field(mid), tet.edge_vector(l))
    })
}
