//! Eddy-current (A, φ) solver on a conductor/insulator box: tree-cotree
//! gauged lowest-order edge elements, a monolithic formulation and its
//! two-subdomain tearing-and-interconnecting counterpart.
//!
//! Everything is generic over the real type; the aliases below fix `f64`.

// index loops read better in element kernels; `!(x >= 0)` style guards reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod element;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod scalar;
pub mod solve_feti;
pub mod solve_mono;
pub mod topo;
pub mod verify;

pub use scalar::{Real, Scalar};

pub type Complex = num_complex::Complex<f64>;
pub type BoxGeometry = mesh::BoxGeometry<f64>;
pub type Mesh = mesh::Mesh<f64>;
pub type Materials = assembly::Materials<f64>;
pub type SourceSpec = assembly::SourceSpec<f64>;
pub type SourceOptions = assembly::SourceOptions<f64>;
pub type OperatorBlocks = assembly::OperatorBlocks<f64>;
pub type Assembler<'a> = assembly::Assembler<'a, f64>;
pub type MonoSolution = solve_mono::MonoSolution<f64>;
pub type FetiSolution = solve_feti::FetiSolution<f64>;
pub type TearingOperator = solve_feti::TearingOperator<f64>;
pub type BField = verify::BField<f64>;
pub type SparseMatrix = linalg::CsrMatrix<f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_precision_pipeline_runs() {
        let g = mesh::BoxGeometry::<f32>::unit_cube_split_x(0.5, 2);
        let m = mesh::build_box_mesh(&g).unwrap();
        let labels = mesh::classify_entities(&m, &g).unwrap();
        let trees = topo::build_tree_cotree(&m, &labels, None).unwrap();
        let p = topo::build_partition(&m, &labels, &trees);
        let materials = assembly::Materials {
            mu_conductor: 1.0f32,
            mu_insulator: 1.0,
            sigma_conductor: 1.0,
            omega: 0.0,
        };
        let a = assembly::Assembler::new(&m, &labels, &p, materials).unwrap();
        let spec = assembly::SourceSpec::Surface {
            field: assembly::uniform_field_surface_current([0.0f32, 0.0, 1.0]),
            order: 2,
        };
        let options = assembly::SourceOptions {
            solenoidal_tol: 1e-5,
            ..Default::default()
        };
        let blocks = a.assemble(&spec, &options).unwrap();
        let s = solve_mono::solve_monolithic(&blocks, 1e-5).unwrap();
        let b = verify::reconstruct_b(&m, &labels, &p, verify::Coefficients::Global(&s.a));
        assert!(verify::uniform_field_deviation(&b, [0.0, 0.0, 1.0]) < 1e-4);
    }
}
