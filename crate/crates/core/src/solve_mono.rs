//! Monolithic gauged `(A, φ)` system solved by a direct factorization.

use num_complex::Complex;
use thiserror::Error;

use crate::assembly::{nodal_functional_on, Assembler, AssemblyError, Extension, OperatorBlocks};
use crate::linalg::{CsrMatrix, LinalgError, SparseLu, TripletBuilder};
use crate::mesh::Subdomain;
use crate::scalar::{norm_inf, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("tolerance must be positive, got {0:e}")]
    InvalidTolerance(f64),
    #[error("relative residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("interface jump {jump:e} exceeds {limit:e}; torn solution cannot be glued")]
    Gluing { jump: f64, limit: f64 },
    #[error("electric field is only defined on conductor tets; tet {tet} is in the insulator")]
    NotConductorTet { tet: usize },
    #[error("vector of length {got} where {expected} was expected")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

pub(crate) fn check_tol<T: Real>(tol: T) -> Result<(), SolveError> {
    if tol > T::zero() && tol.is_finite() {
        Ok(())
    } else {
        Err(SolveError::InvalidTolerance(tol.as_f64()))
    }
}

/// Normwise backward error `‖b − A x‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`, zero for a zero system.
pub fn backward_residual<T: Real>(
    a: &CsrMatrix<Complex<T>>,
    x: &[Complex<T>],
    b: &[Complex<T>],
) -> T {
    let ax = a.mul_vec(x);
    let r: Vec<Complex<T>> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let denom = a.norm_inf() * norm_inf(x) + norm_inf(b);
    if denom > T::zero() {
        norm_inf(&r) / denom
    } else {
        norm_inf(&r)
    }
}

/// LU solve followed by one step of iterative refinement.
pub fn solve_refined<T: Real>(
    a: &CsrMatrix<Complex<T>>,
    lu: &SparseLu<Complex<T>>,
    b: &[Complex<T>],
) -> Result<Vec<Complex<T>>, LinalgError> {
    let mut x = lu.solve(b)?;
    let ax = a.mul_vec(&x);
    let r: Vec<Complex<T>> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = lu.solve(&r)?;
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
    Ok(x)
}

/// Complex block system over `V × U_C`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonoSystem<T: Real> {
    pub matrix: CsrMatrix<Complex<T>>,
    pub rhs: Vec<Complex<T>>,
    /// Unknowns are `(A, φ̃)` with `φ = iω φ̃`.
    pub symmetrized: bool,
    pub dim_a: usize,
    pub omega: T,
}

impl<T: Real> MonoSystem<T> {
    /// `[[K + iωM, Sᵀ], [iωS, C]]`, right-hand side `[J; j]`.
    pub fn new(blocks: &OperatorBlocks<T>) -> Self {
        Self::build(blocks, false)
    }

    /// `[[K + iωM, iωSᵀ], [iωS, iωC]]`: complex symmetric for `ω > 0`.
    pub fn symmetrized(blocks: &OperatorBlocks<T>) -> Self {
        Self::build(blocks, true)
    }

    fn build(blocks: &OperatorBlocks<T>, symmetrized: bool) -> Self {
        let g = &blocks.global;
        let (na, nu) = (g.k.nrows(), g.c.nrows());
        let one = Complex::new(T::one(), T::zero());
        let iw = Complex::new(T::zero(), blocks.omega);
        let st = g.s.transpose();
        let mut b = TripletBuilder::new(na + nu, na + nu);
        b.push_block(0, 0, &g.k, one);
        b.push_block(0, 0, &g.m, iw);
        b.push_block(0, na, &st, if symmetrized { iw } else { one });
        b.push_block(na, 0, &g.s, iw);
        b.push_block(na, na, &g.c, if symmetrized { iw } else { one });
        let mut rhs: Vec<Complex<T>> = blocks
            .source
            .j
            .iter()
            .map(|&x| Complex::new(x, T::zero()))
            .collect();
        rhs.extend(
            blocks
                .source
                .j_nodal
                .iter()
                .map(|&x| Complex::new(x, T::zero())),
        );
        Self {
            matrix: b.build(),
            rhs,
            symmetrized,
            dim_a: na,
            omega: blocks.omega,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonoSolution<T> {
    /// Cotree coefficients over `V`.
    pub a: Vec<Complex<T>>,
    /// Nodal coefficients over `U_C`.
    pub phi: Vec<Complex<T>>,
    pub residual: T,
    pub symmetrized: bool,
    pub unknowns: usize,
}

fn solve_system<T: Real>(system: &MonoSystem<T>, tol: T) -> Result<MonoSolution<T>, SolveError> {
    check_tol(tol)?;
    let lu = SparseLu::factor(&system.matrix)?;
    let x = solve_refined(&system.matrix, &lu, &system.rhs)?;
    let residual = backward_residual(&system.matrix, &x, &system.rhs);
    if !(residual <= tol) {
        return Err(SolveError::Residual {
            residual: residual.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let (a, mut phi) = (x[..system.dim_a].to_vec(), x[system.dim_a..].to_vec());
    if system.symmetrized {
        let iw = Complex::new(T::zero(), system.omega);
        phi.iter_mut().for_each(|p| *p *= iw);
    }
    Ok(MonoSolution {
        a,
        phi,
        residual,
        symmetrized: system.symmetrized,
        unknowns: x.len(),
    })
}

pub fn solve_monolithic<T: Real>(
    blocks: &OperatorBlocks<T>,
    tol: T,
) -> Result<MonoSolution<T>, SolveError> {
    solve_system(&MonoSystem::new(blocks), tol)
}

/// Solves for `(A, φ̃)` and maps back to `φ = iω φ̃`. For `ω = 0` the
/// substitution is degenerate and the plain system is solved instead.
pub fn solve_monolithic_symmetrized<T: Real>(
    blocks: &OperatorBlocks<T>,
    tol: T,
) -> Result<MonoSolution<T>, SolveError> {
    if blocks.omega == T::zero() {
        return solve_monolithic(blocks, tol);
    }
    solve_system(&MonoSystem::symmetrized(blocks), tol)
}

/// Relative residual of the current-balance equation tested with every
/// conductor nodal function, the pinned one included.
pub fn current_balance_residual<T: Real>(
    assembler: &Assembler<'_, T>,
    blocks: &OperatorBlocks<T>,
    solution: &MonoSolution<T>,
    extension: Extension,
) -> Result<T, SolveError> {
    let (nodes, s, c) = assembler.conductor_test_blocks();
    let j = nodal_functional_on(
        assembler.mesh,
        assembler.labels,
        &nodes,
        &blocks.source.edge_functional,
        extension,
    )?;
    let iw = Complex::new(T::zero(), blocks.omega);
    let sa = s.mul_vec(&solution.a);
    let cp = c.mul_vec(&solution.phi);
    let r: Vec<Complex<T>> = (0..nodes.len())
        .map(|q| iw * sa[q] + cp[q] - Complex::new(j[q], T::zero()))
        .collect();
    // j is a cancelling sum of edge functional entries; measure it against them
    let j_ref = norm_inf(&j).max(norm_inf(&blocks.source.edge_functional));
    let scale = (s.norm_inf() * blocks.omega * norm_inf(&solution.a))
        + c.norm_inf() * norm_inf(&solution.phi)
        + j_ref;
    Ok(if scale > T::zero() {
        norm_inf(&r) / scale
    } else {
        norm_inf(&r)
    })
}

/// `E = −∇φ − iωA` at the centroid of a conductor tet.
pub fn electric_field_at<T: Real>(
    assembler: &Assembler<'_, T>,
    a: &[Complex<T>],
    phi: &[Complex<T>],
    tet: usize,
) -> Result<[Complex<T>; 3], SolveError> {
    if assembler.labels.tet_label[tet] != Subdomain::Conductor {
        return Err(SolveError::NotConductorTet { tet });
    }
    let p = assembler.partition;
    if a.len() != p.v.len() {
        return Err(SolveError::Dimension {
            expected: p.v.len(),
            got: a.len(),
        });
    }
    if phi.len() != p.u_conductor.len() {
        return Err(SolveError::Dimension {
            expected: p.u_conductor.len(),
            got: phi.len(),
        });
    }
    let mesh = assembler.mesh;
    let g = assembler.tet_geometry(tet);
    let quarter = T::lit(0.25);
    let centroid = [quarter; 4];
    let iw = Complex::new(T::zero(), assembler.materials.omega);
    let mut e = [Complex::new(T::zero(), T::zero()); 3];
    for (k, &v) in mesh.tets[tet].iter().enumerate() {
        if let Some(q) = p.u_conductor.local(v) {
            for d in 0..3 {
                e[d] -= phi[q] * g.grad_lambda[k][d];
            }
        }
    }
    for l in 0..6 {
        if let Some(dof) = p.v.local(mesh.tet_edges[tet][l]) {
            let sign = T::lit(f64::from(mesh.tet_edge_signs[tet][l]));
            let w = g.edge_function(l, centroid);
            for d in 0..3 {
                e[d] -= iw * a[dof] * (sign * w[d]);
            }
        }
    }
    Ok(e)
}

/// `(tet, E)` pairs.
pub type TetField<T> = Vec<(usize, [Complex<T>; 3])>;

/// Electric field on every conductor tet, in tet order.
pub fn electric_field<T: Real>(
    assembler: &Assembler<'_, T>,
    a: &[Complex<T>],
    phi: &[Complex<T>],
) -> Result<TetField<T>, SolveError> {
    assembler
        .labels
        .tets_of(Subdomain::Conductor)
        .map(|t| electric_field_at(assembler, a, phi, t).map(|e| (t, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        loop_current, uniform_field_surface_current, Materials, SourceOptions, SourceSpec, Support,
    };
    use crate::mesh::{build_box_mesh, classify_entities, BoxGeometry, EntityLabels, Mesh};
    use crate::topo::{build_partition, build_tree_cotree, DofPartition};

    struct Fixture {
        mesh: Mesh<f64>,
        labels: EntityLabels,
        partition: DofPartition,
    }

    fn fixture(n: usize) -> Fixture {
        let g = BoxGeometry::unit_cube_split_x(0.5, n);
        let mesh = build_box_mesh(&g).unwrap();
        let labels = classify_entities(&mesh, &g).unwrap();
        let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
        let partition = build_partition(&mesh, &labels, &trees);
        Fixture {
            mesh,
            labels,
            partition,
        }
    }

    fn materials(omega: f64, mu_c: f64) -> Materials<f64> {
        Materials {
            mu_conductor: mu_c,
            mu_insulator: 1.0,
            sigma_conductor: 3.0,
            omega,
        }
    }

    fn loop_source() -> SourceSpec<f64> {
        SourceSpec::Volumetric {
            field: loop_current([0.25, 0.5, 0.5], [1.0, 0.0, 0.0], 0.25, 1.0),
            support: Support::ConductorOnly,
            order: 4,
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(2.0, 1.0)).unwrap();
        let b = a
            .assemble(&SourceSpec::Zero, &SourceOptions::default())
            .unwrap();
        let s = solve_monolithic(&b, 1e-12).unwrap();
        assert!(s.a.iter().chain(&s.phi).all(|z| z.norm() == 0.0));
        assert_eq!(s.residual, 0.0);
        for (_, e) in electric_field(&a, &s.a, &s.phi).unwrap() {
            assert!(e.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(2.0, 1.0)).unwrap();
        let b = a
            .assemble(&SourceSpec::Zero, &SourceOptions::default())
            .unwrap();
        assert_eq!(
            solve_monolithic(&b, 0.0).unwrap_err(),
            SolveError::InvalidTolerance(0.0)
        );
    }

    #[test]
    fn uniform_field_patch_test() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(0.0, 1.0)).unwrap();
        let spec = SourceSpec::Surface {
            field: uniform_field_surface_current([0.0, 0.0, 1.0]),
            order: 2,
        };
        let b = a.assemble(&spec, &SourceOptions::default()).unwrap();
        let s = solve_monolithic(&b, 1e-12).unwrap();
        assert!(norm_inf(&s.phi) < 1e-12);
        // curl per tet from the cotree coefficients
        let full = f.partition.v.scatter(&s.a, f.mesh.edges.len());
        for t in 0..f.mesh.tets.len() {
            let g = a.tet_geometry(t);
            let mut curl = [0.0; 3];
            for l in 0..6 {
                let c = g.edge_curl(l);
                let coeff =
                    full[f.mesh.tet_edges[t][l]].re * f64::from(f.mesh.tet_edge_signs[t][l]);
                (0..3).for_each(|d| curl[d] += coeff * c[d]);
            }
            assert!(
                (curl[0]).abs() < 1e-10 && curl[1].abs() < 1e-10 && (curl[2] - 1.0).abs() < 1e-10,
                "{curl:?}"
            );
        }
    }

    #[test]
    fn static_case_decouples() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(0.0, 2.0)).unwrap();
        let b = a
            .assemble(&loop_source(), &SourceOptions::default())
            .unwrap();
        let s = solve_monolithic(&b, 1e-12).unwrap();
        // C φ = j, then K A = J − Sᵀ φ
        let lu_c = SparseLu::factor(&b.global.c).unwrap();
        let phi = lu_c.solve(&b.source.j_nodal).unwrap();
        let st_phi = b.global.s.tr_mul_vec(&phi);
        let rhs: Vec<f64> = b.source.j.iter().zip(&st_phi).map(|(j, x)| j - x).collect();
        let a_ref = SparseLu::factor(&b.global.k).unwrap().solve(&rhs).unwrap();
        let re: Vec<f64> = s.a.iter().map(|z| z.re).collect();
        assert!(crate::scalar::rel_diff_inf(&re, &a_ref) < 1e-10);
        assert!(s
            .a
            .iter()
            .all(|z| z.im == 0.0 || z.im.abs() < 1e-14 * norm_inf(&a_ref)));
    }

    #[test]
    fn symmetrization_is_invariant_and_symmetric() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(5.0, 2.0)).unwrap();
        let b = a
            .assemble(&loop_source(), &SourceOptions::default())
            .unwrap();
        let sys = MonoSystem::symmetrized(&b);
        let t = sys.matrix.transpose();
        assert!(sys.matrix.max_abs_diff(&t) <= 1e-15 * sys.matrix.max_abs());
        assert!(MonoSystem::new(&b).matrix.asymmetry() > 0.0);
        let plain = solve_monolithic(&b, 1e-12).unwrap();
        let sym = solve_monolithic_symmetrized(&b, 1e-12).unwrap();
        assert!(crate::scalar::rel_diff_inf(&sym.a, &plain.a) < 1e-10);
        assert!(crate::scalar::rel_diff_inf(&sym.phi, &plain.phi) < 1e-10);
    }

    #[test]
    fn current_balance_holds_with_constant_test_function() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(5.0, 2.0)).unwrap();
        let b = a
            .assemble(&loop_source(), &SourceOptions::default())
            .unwrap();
        let s = solve_monolithic(&b, 1e-12).unwrap();
        for ext in [Extension::Zero, Extension::Harmonic] {
            assert!(current_balance_residual(&a, &b, &s, ext).unwrap() < 1e-12);
        }
    }

    #[test]
    fn electric_field_of_linear_potential() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(5.0, 2.0)).unwrap();
        let phi: Vec<Complex<f64>> = f
            .partition
            .u_conductor
            .globals()
            .iter()
            .map(|&v| Complex::new(f.mesh.vertices[v][0], 0.0))
            .collect();
        let pinned_x = f.mesh.vertices[f.partition.pinned][0];
        // shift so that the pinned vertex (value 0) is consistent with x − x_pinned
        let phi: Vec<_> = phi.iter().map(|p| p - pinned_x).collect();
        let zero = vec![Complex::new(0.0, 0.0); f.partition.v.len()];
        for (_, e) in electric_field(&a, &zero, &phi).unwrap() {
            assert!((e[0].re + 1.0).abs() < 1e-13 && e[1].norm() < 1e-13 && e[2].norm() < 1e-13);
        }
        let ins = f.labels.tets_of(Subdomain::Insulator).next().unwrap();
        assert_eq!(
            electric_field_at(&a, &zero, &phi, ins).unwrap_err(),
            SolveError::NotConductorTet { tet: ins }
        );
    }

    #[test]
    fn system_has_full_rank() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(5.0, 2.0)).unwrap();
        let b = a
            .assemble(&SourceSpec::Zero, &SourceOptions::default())
            .unwrap();
        let m = MonoSystem::new(&b).matrix.to_dense();
        let n = m.len();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
        let sv = dense.singular_values();
        assert!(sv.min() > 1e-10 * sv.max());
    }
}
