//! Tearing-and-interconnecting saddle-point system, its dual reduction to the
//! interface multipliers, and gluing back to a global potential.

use num_complex::Complex;

use crate::assembly::OperatorBlocks;
use crate::linalg::{gmres, CsrMatrix, LinalgError, SparseLu, TripletBuilder};
use crate::scalar::{complexify, norm_inf, Real};
use crate::solve_mono::{backward_residual, check_tol, solve_refined, SolveError};
use crate::topo::DofPartition;

/// Selection `R: V → V_C × V_I`, conductor block first.
#[derive(Clone, Debug, PartialEq)]
pub struct TearingOperator<T: Real> {
    pub r: CsrMatrix<T>,
    pub dim_conductor: usize,
    pub dim_insulator: usize,
}

pub fn build_tearing<T: Real>(partition: &DofPartition) -> TearingOperator<T> {
    let (nc, ni) = (partition.v_conductor.len(), partition.v_insulator.len());
    let mut b = TripletBuilder::new(nc + ni, partition.v.len());
    for (k, &e) in partition.v.globals().iter().enumerate() {
        if let Some(c) = partition.v_conductor.local(e) {
            b.push(c, k, T::one());
        }
        if let Some(i) = partition.v_insulator.local(e) {
            b.push(nc + i, k, T::one());
        }
    }
    TearingOperator {
        r: b.build(),
        dim_conductor: nc,
        dim_insulator: ni,
    }
}

impl<T: Real> TearingOperator<T> {
    /// Torn copies `(A_C, A_I)` of a global vector.
    pub fn tear<S: crate::scalar::Scalar + std::ops::Mul<T, Output = S>>(
        &self,
        a: &[S],
    ) -> (Vec<S>, Vec<S>) {
        let mut torn = self.r.mul_vec(a);
        let ins = torn.split_off(self.dim_conductor);
        (torn, ins)
    }

    /// `[B_C B_I] R` evaluated in integer arithmetic; `None` if an entry is not integral.
    pub fn jump_product_exact(
        &self,
        b_conductor: &CsrMatrix<T>,
        b_insulator: &CsrMatrix<T>,
    ) -> Option<Vec<Vec<i64>>> {
        let int = |x: T| {
            let v = num_traits::ToPrimitive::to_i64(&x)?;
            (T::lit(v as f64) == x).then_some(v)
        };
        let ng = b_conductor.nrows();
        let mut out = vec![vec![0i64; self.r.ncols()]; ng];
        for (row, col, v) in self.r.iter() {
            let (b, local) = if row < self.dim_conductor {
                (b_conductor, row)
            } else {
                (b_insulator, row - self.dim_conductor)
            };
            let rv = int(v)?;
            for g in 0..ng {
                let bv = int(b.get(g, local))?;
                out[g][col] += bv * rv;
            }
        }
        Some(out)
    }
}

/// Saddle-point system with unknowns ordered `(A_I, A_C, φ, λ̃)`.
///
/// The jump rows and columns carry a factor `s` comparable to the curl-curl
/// entries, so the last unknown is `λ̃ = λ / s`; without it the ±1 constraint
/// rows are swamped by the `1/μ` scale of the subdomain blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct FetiSystem<T: Real> {
    pub matrix: CsrMatrix<Complex<T>>,
    pub rhs: Vec<Complex<T>>,
    /// `[dim V_I, dim V_C, dim U_C, dim V_Γ]`
    pub sizes: [usize; 4],
    pub constraint_scale: T,
}

impl<T: Real> FetiSystem<T> {
    pub fn new(blocks: &OperatorBlocks<T>) -> Self {
        let t = &blocks.torn;
        let sizes = [
            t.k_insulator.nrows(),
            t.k_conductor.nrows(),
            t.c_conductor.nrows(),
            t.b_conductor.nrows(),
        ];
        let [ni, nc, nu, ng] = sizes;
        let (o1, o2, o3) = (ni, ni + nc, ni + nc + nu);
        let one = Complex::new(T::one(), T::zero());
        let iw = Complex::new(T::zero(), blocks.omega);
        let scale = t.k_insulator.max_abs().max(t.k_conductor.max_abs());
        let constraint_scale = if scale > T::zero() { scale } else { T::one() };
        let sc = Complex::new(constraint_scale, T::zero());
        let mut b = TripletBuilder::new(o3 + ng, o3 + ng);
        b.push_block(0, 0, &t.k_insulator, one);
        b.push_block(0, o3, &t.b_insulator.transpose(), sc);
        b.push_block(o1, o1, &t.k_conductor, one);
        b.push_block(o1, o1, &t.m_conductor, iw);
        b.push_block(o1, o2, &t.s_conductor.transpose(), one);
        b.push_block(o1, o3, &t.b_conductor.transpose(), sc);
        b.push_block(o2, o1, &t.s_conductor, iw);
        b.push_block(o2, o2, &t.c_conductor, one);
        b.push_block(o3, 0, &t.b_insulator, sc);
        b.push_block(o3, o1, &t.b_conductor, sc);
        let s = &blocks.source;
        let mut rhs = complexify(&s.j_insulator);
        rhs.extend(complexify(&s.j_conductor));
        rhs.extend(complexify(&s.j_nodal));
        rhs.resize(o3 + ng, Complex::new(T::zero(), T::zero()));
        Self {
            matrix: b.build(),
            rhs,
            sizes,
            constraint_scale,
        }
    }

    /// Unknown blocks with the multiplier returned unscaled.
    fn split(&self, x: &[Complex<T>]) -> [Vec<Complex<T>>; 4] {
        let [ni, nc, nu, _] = self.sizes;
        [
            x[..ni].to_vec(),
            x[ni..ni + nc].to_vec(),
            x[ni + nc..ni + nc + nu].to_vec(),
            x[ni + nc + nu..]
                .iter()
                .map(|l| l * self.constraint_scale)
                .collect(),
        ]
    }

    fn join(
        &self,
        a_i: &[Complex<T>],
        a_c: &[Complex<T>],
        phi: &[Complex<T>],
        lambda: &[Complex<T>],
    ) -> Vec<Complex<T>> {
        let mut x = a_i.to_vec();
        x.extend_from_slice(a_c);
        x.extend_from_slice(phi);
        x.extend(lambda.iter().map(|l| l / self.constraint_scale));
        x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FetiSolution<T> {
    pub a_insulator: Vec<Complex<T>>,
    pub a_conductor: Vec<Complex<T>>,
    pub phi: Vec<Complex<T>>,
    pub lambda: Vec<Complex<T>>,
    /// Backward error of the full saddle-point system.
    pub residual: T,
    /// `‖B_C A_C + B_I A_I‖∞`
    pub jump_norm: T,
    /// Krylov iterations of the dual path; `None` for the direct path.
    pub iterations: Option<usize>,
    pub history: Vec<f64>,
}

fn jump<T: Real>(blocks: &OperatorBlocks<T>, a_c: &[Complex<T>], a_i: &[Complex<T>]) -> T {
    let bc = blocks.torn.b_conductor.mul_vec(a_c);
    let bi = blocks.torn.b_insulator.mul_vec(a_i);
    let d: Vec<Complex<T>> = bc.iter().zip(&bi).map(|(x, y)| x + y).collect();
    norm_inf(&d)
}

fn scale_of<T: Real>(a_c: &[Complex<T>], a_i: &[Complex<T>]) -> T {
    let s = norm_inf(a_c).max(norm_inf(a_i));
    if s > T::zero() {
        s
    } else {
        T::one()
    }
}

pub fn solve_feti_direct<T: Real>(
    blocks: &OperatorBlocks<T>,
    tol: T,
) -> Result<FetiSolution<T>, SolveError> {
    check_tol(tol)?;
    let system = FetiSystem::new(blocks);
    let lu = SparseLu::factor(&system.matrix)?;
    let x = solve_refined(&system.matrix, &lu, &system.rhs)?;
    let residual = backward_residual(&system.matrix, &x, &system.rhs);
    if !(residual <= tol) {
        return Err(SolveError::Residual {
            residual: residual.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let [a_insulator, a_conductor, phi, lambda] = system.split(&x);
    let jump_norm = jump(blocks, &a_conductor, &a_insulator);
    Ok(FetiSolution {
        a_insulator,
        a_conductor,
        phi,
        lambda,
        residual,
        jump_norm,
        iterations: None,
        history: Vec::new(),
    })
}

/// Factorized subdomain operators: `K_I` and the conductor block
/// `Q = [[K_C + iωM_C, S_Cᵀ], [iωS_C, C_C]]`.
struct LocalSolvers<T: Real> {
    insulator: SparseLu<Complex<T>>,
    conductor: SparseLu<Complex<T>>,
    nc: usize,
}

impl<T: Real> LocalSolvers<T> {
    fn new(blocks: &OperatorBlocks<T>) -> Result<Self, LinalgError> {
        let t = &blocks.torn;
        let (nc, nu) = (t.k_conductor.nrows(), t.c_conductor.nrows());
        let one = Complex::new(T::one(), T::zero());
        let iw = Complex::new(T::zero(), blocks.omega);
        let mut q = TripletBuilder::new(nc + nu, nc + nu);
        q.push_block(0, 0, &t.k_conductor, one);
        q.push_block(0, 0, &t.m_conductor, iw);
        q.push_block(0, nc, &t.s_conductor.transpose(), one);
        q.push_block(nc, 0, &t.s_conductor, iw);
        q.push_block(nc, nc, &t.c_conductor, one);
        let q = q.build();
        let ki = t.k_insulator.map(|x| Complex::new(x, T::zero()));
        let (insulator, conductor) = rayon::join(|| SparseLu::factor(&ki), || SparseLu::factor(&q));
        Ok(Self {
            insulator: insulator?,
            conductor: conductor?,
            nc,
        })
    }

    /// Independent subdomain solves, run concurrently.
    fn solve(
        &self,
        rhs_insulator: &[Complex<T>],
        rhs_conductor: &[Complex<T>],
    ) -> Result<[Vec<Complex<T>>; 2], LinalgError> {
        let (i, c) = rayon::join(
            || self.insulator.solve(rhs_insulator),
            || self.conductor.solve(rhs_conductor),
        );
        Ok([i?, c?])
    }
}

/// Eliminates the subdomain unknowns and solves `F λ = d` with
/// unpreconditioned GMRES, where
/// `F = B_I K_I⁻¹ B_Iᵀ + B_C P Q⁻¹ Pᵀ B_Cᵀ` and `P` extracts the `A_C` rows.
pub fn solve_feti_dual<T: Real>(
    blocks: &OperatorBlocks<T>,
    tol: T,
    max_iter: usize,
) -> Result<FetiSolution<T>, SolveError> {
    check_tol(tol)?;
    let t = &blocks.torn;
    let local = LocalSolvers::new(blocks)?;
    let nc = local.nc;
    let zero = Complex::new(T::zero(), T::zero());
    let s = &blocks.source;
    let mut q_rhs = complexify(&s.j_conductor);
    q_rhs.extend(complexify(&s.j_nodal));

    // subdomain responses for given λ and sources
    let respond = |lambda: &[Complex<T>], with_source: bool| -> Result<_, LinalgError> {
        let bi_l = t.b_insulator.tr_mul_vec(lambda);
        let bc_l = t.b_conductor.tr_mul_vec(lambda);
        let mut ri: Vec<Complex<T>> = if with_source {
            complexify(&s.j_insulator)
        } else {
            vec![zero; bi_l.len()]
        };
        let mut rc: Vec<Complex<T>> = if with_source {
            q_rhs.clone()
        } else {
            vec![zero; q_rhs.len()]
        };
        ri.iter_mut().zip(&bi_l).for_each(|(r, x)| *r -= x);
        rc[..nc].iter_mut().zip(&bc_l).for_each(|(r, x)| *r -= x);
        local.solve(&ri, &rc)
    };
    let constraint = |x_i: &[Complex<T>], x_c: &[Complex<T>]| -> Vec<Complex<T>> {
        let a = t.b_insulator.mul_vec(x_i);
        let b = t.b_conductor.mul_vec(&x_c[..nc]);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    };

    let ng = t.b_conductor.nrows();
    let [xi0, xc0] = respond(&vec![zero; ng], true)?;
    let d = constraint(&xi0, &xc0);
    let apply = |l: &[Complex<T>]| -> Vec<Complex<T>> {
        // λ ↦ −(constraint of the homogeneous response) = F λ
        let [xi, xc] = respond(l, false).expect("factorized subdomain solve");
        constraint(&xi, &xc).into_iter().map(|x| -x).collect()
    };
    let outcome = gmres(apply, &d, tol, max_iter)?;
    let lambda = outcome.solution;
    let [a_insulator, xc] = respond(&lambda, true)?;
    let (a_conductor, phi) = (xc[..nc].to_vec(), xc[nc..].to_vec());

    let system = FetiSystem::new(blocks);
    let x = system.join(&a_insulator, &a_conductor, &phi, &lambda);
    let residual = backward_residual(&system.matrix, &x, &system.rhs);
    let jump_norm = jump(blocks, &a_conductor, &a_insulator);
    Ok(FetiSolution {
        a_insulator,
        a_conductor,
        phi,
        lambda,
        residual,
        jump_norm,
        iterations: Some(outcome.iterations),
        history: outcome.history,
    })
}

/// Global potential over `V` and `φ` recovered from a torn solution.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedSolution<T> {
    pub a: Vec<Complex<T>>,
    pub phi: Vec<Complex<T>>,
}

/// Interface values are taken from the conductor side; the insulator copy
/// must agree to `tol` relative to the torn coefficients.
pub fn glue<T: Real>(
    partition: &DofPartition,
    a_conductor: &[Complex<T>],
    a_insulator: &[Complex<T>],
    phi: &[Complex<T>],
    tol: T,
) -> Result<GluedSolution<T>, SolveError> {
    for (got, expected) in [
        (a_conductor.len(), partition.v_conductor.len()),
        (a_insulator.len(), partition.v_insulator.len()),
    ] {
        if got != expected {
            return Err(SolveError::Dimension { expected, got });
        }
    }
    let mut worst = T::zero();
    for &e in partition.v_interface.globals() {
        let c = partition
            .v_conductor
            .local(e)
            .expect("interface edge in V_C");
        let i = partition
            .v_insulator
            .local(e)
            .expect("interface edge in V_I");
        worst = worst.max((a_conductor[c] - a_insulator[i]).norm());
    }
    let limit = tol * scale_of(a_conductor, a_insulator);
    if !(worst <= limit) {
        return Err(SolveError::Gluing {
            jump: worst.as_f64(),
            limit: limit.as_f64(),
        });
    }
    let a = partition
        .v
        .globals()
        .iter()
        .map(|&e| match partition.v_conductor.local(e) {
            Some(c) => a_conductor[c],
            None => {
                a_insulator[partition
                    .v_insulator
                    .local(e)
                    .expect("cotree edge in one subdomain")]
            }
        })
        .collect();
    Ok(GluedSolution {
        a,
        phi: phi.to_vec(),
    })
}

pub fn glue_solution<T: Real>(
    partition: &DofPartition,
    solution: &FetiSolution<T>,
    tol: T,
) -> Result<GluedSolution<T>, SolveError> {
    glue(
        partition,
        &solution.a_conductor,
        &solution.a_insulator,
        &solution.phi,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        loop_current, Assembler, InterfaceSplit, Materials, SourceOptions, SourceSpec, Support,
    };
    use crate::mesh::{build_box_mesh, classify_entities, BoxGeometry, EntityLabels, Mesh};
    use crate::scalar::rel_diff_inf;
    use crate::solve_mono::solve_monolithic;
    use crate::topo::{build_partition, build_tree_cotree};

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

    fn materials(omega: f64) -> Materials<f64> {
        Materials {
            mu_conductor: 2.0,
            mu_insulator: 1.0,
            sigma_conductor: 3.0,
            omega,
        }
    }

    fn source() -> SourceSpec<f64> {
        SourceSpec::Volumetric {
            field: loop_current([0.25, 0.5, 0.5], [0.0, 1.0, 0.0], 0.2, 1.0),
            support: Support::ConductorOnly,
            order: 4,
        }
    }

    fn blocks(f: &Fixture, omega: f64, split: InterfaceSplit) -> OperatorBlocks<f64> {
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(omega)).unwrap();
        a.assemble(
            &source(),
            &SourceOptions {
                split,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn tearing_columns() {
        let f = fixture(2);
        let r = build_tearing::<f64>(&f.partition);
        for (k, &e) in f.partition.v.globals().iter().enumerate() {
            let col: Vec<(usize, f64)> =
                r.r.iter()
                    .filter(|&(_, c, _)| c == k)
                    .map(|(i, _, v)| (i, v))
                    .collect();
            let on_gamma = f.partition.v_interface.local(e).is_some();
            assert_eq!(col.len(), if on_gamma { 2 } else { 1 });
            assert!(col.iter().all(|&(_, v)| v == 1.0));
            if on_gamma {
                assert!(col[0].0 < r.dim_conductor && col[1].0 >= r.dim_conductor);
            } else if f.labels.edge_in_conductor[e] {
                assert!(col[0].0 < r.dim_conductor);
            }
        }
    }

    #[test]
    fn jump_times_tearing_vanishes_exactly() {
        let f = fixture(2);
        let b = blocks(&f, 1.0, InterfaceSplit::Conductor);
        let r = build_tearing::<f64>(&f.partition);
        let prod = r
            .jump_product_exact(&b.torn.b_conductor, &b.torn.b_insulator)
            .unwrap();
        assert!(prod.iter().flatten().all(|&x| x == 0));
        // a wrong sign in B_I is detected
        let wrong = b.torn.b_insulator.map(|x| -x);
        let prod = r.jump_product_exact(&b.torn.b_conductor, &wrong).unwrap();
        assert!(prod.iter().flatten().any(|&x| x != 0));
    }

    #[test]
    fn zero_sources() {
        let f = fixture(2);
        let a = Assembler::new(&f.mesh, &f.labels, &f.partition, materials(1.0)).unwrap();
        let b = a
            .assemble(&SourceSpec::Zero, &SourceOptions::default())
            .unwrap();
        let d = solve_feti_direct(&b, 1e-12).unwrap();
        assert!(d
            .a_insulator
            .iter()
            .chain(&d.a_conductor)
            .chain(&d.phi)
            .chain(&d.lambda)
            .all(|z| z.norm() == 0.0));
        let dual = solve_feti_dual(&b, 1e-12, 50).unwrap();
        assert_eq!(dual.iterations, Some(0));
        assert!(dual.lambda.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn direct_matches_monolithic() {
        let f = fixture(2);
        for omega in [0.0, 7.0] {
            let b = blocks(&f, omega, InterfaceSplit::Conductor);
            let mono = solve_monolithic(&b, 1e-12).unwrap();
            let feti = solve_feti_direct(&b, 1e-12).unwrap();
            assert!(feti.jump_norm <= 1e-12 * scale_of(&feti.a_conductor, &feti.a_insulator));
            let g = glue_solution(&f.partition, &feti, 1e-10).unwrap();
            assert!(rel_diff_inf(&g.a, &mono.a) < 1e-9);
            assert!(rel_diff_inf(&g.phi, &mono.phi) < 1e-9);
        }
    }

    #[test]
    fn distribution_of_interface_source_is_irrelevant() {
        let f = fixture(2);
        let full = solve_feti_direct(&blocks(&f, 7.0, InterfaceSplit::Conductor), 1e-12).unwrap();
        let half = solve_feti_direct(&blocks(&f, 7.0, InterfaceSplit::Even), 1e-12).unwrap();
        assert!(rel_diff_inf(&half.a_conductor, &full.a_conductor) < 1e-10);
        assert!(rel_diff_inf(&half.a_insulator, &full.a_insulator) < 1e-10);
        assert!(rel_diff_inf(&half.phi, &full.phi) < 1e-10);
    }

    #[test]
    fn dual_matches_direct() {
        let f = fixture(2);
        let b = blocks(&f, 7.0, InterfaceSplit::Conductor);
        let direct = solve_feti_direct(&b, 1e-12).unwrap();
        let dual = solve_feti_dual(&b, 1e-13, 100).unwrap();
        assert!(dual.iterations.unwrap() <= f.partition.v_interface.len() + 1);
        assert!(rel_diff_inf(&dual.lambda, &direct.lambda) < 1e-8);
        assert!(rel_diff_inf(&dual.a_conductor, &direct.a_conductor) < 1e-8);
        assert!(rel_diff_inf(&dual.a_insulator, &direct.a_insulator) < 1e-8);
    }

    #[test]
    fn dual_reports_non_convergence() {
        let f = fixture(2);
        let b = blocks(&f, 7.0, InterfaceSplit::Conductor);
        match solve_feti_dual(&b, 1e-14, 1) {
            Err(SolveError::Linalg(LinalgError::NotConverged {
                iterations,
                history,
                ..
            })) => {
                assert_eq!(iterations, 1);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn glue_inverts_tearing() {
        let f = fixture(2);
        let r = build_tearing::<f64>(&f.partition);
        let a: Vec<Complex<f64>> = (0..f.partition.v.len())
            .map(|k| Complex::new(k as f64 - 3.5, 0.5 * k as f64))
            .collect();
        let (ac, ai) = r.tear(&a);
        let g = glue(&f.partition, &ac, &ai, &[], 1e-14).unwrap();
        assert_eq!(g.a, a);
        // violated constraint on one interface edge
        let e = f.partition.v_interface.global(0);
        let mut ai = ai;
        ai[f.partition.v_insulator.local(e).unwrap()] += 1.0;
        assert!(matches!(
            glue(&f.partition, &ac, &ai, &[], 1e-8),
            Err(SolveError::Gluing { .. })
        ));
    }
}
