//! Structural invariants over randomly placed grid-aligned conductors.

use eddy_core::assembly::{loop_current, Assembler, Materials, SourceOptions, SourceSpec, Support};
use eddy_core::mesh::{build_box_mesh, classify_entities, BoxGeometry};
use eddy_core::scalar::rel_diff_inf;
use eddy_core::solve_feti::{build_tearing, glue_solution, solve_feti_direct};
use eddy_core::solve_mono::solve_monolithic;
use eddy_core::topo::{build_partition, build_tree_cotree, check_compatibility};
use eddy_core::verify::{
    check_normal_continuity, check_splitting_identities, reconstruct_b, Coefficients, FaceSet,
};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = BoxGeometry<f64>> {
    (2usize..=3)
        .prop_flat_map(|n| (Just(n), proptest::array::uniform3((0..n, 1..=n))))
        .prop_map(|(n, ranges)| {
            let h = 1.0 / n as f64;
            let lo = ranges.map(|(a, b)| (a.min(b - 1)) as f64 * h);
            let hi = ranges.map(|(a, b)| b.max(a + 1) as f64 * h);
            BoxGeometry::new([0.0; 3], [1.0; 3], lo, hi, n)
        })
        .prop_filter("admissible split", |g| g.layout().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splitting_is_compatible(g in geometry()) {
        let mesh = build_box_mesh(&g).unwrap();
        let labels = classify_entities(&mesh, &g).unwrap();
        let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
        let p = build_partition(&mesh, &labels, &trees);
        let summary = check_compatibility(&mesh, &labels, &trees, &p);
        prop_assert!(summary.all_hold(), "{summary:?}");
        prop_assert_eq!(mesh.edges.len(), mesh.vertices.len() - 1 + p.v.len());
        prop_assert_eq!(labels.interface_edges.len(), labels.interface_vertices.len() - 1 + p.v_interface.len());
    }

    #[test]
    fn torn_and_monolithic_agree(
        g in geometry(),
        mu_ratio in 0.1f64..10.0,
        omega in prop_oneof![Just(0.0), 0.5f64..20.0],
    ) {
        let mesh = build_box_mesh(&g).unwrap();
        let labels = classify_entities(&mesh, &g).unwrap();
        let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
        let p = build_partition(&mesh, &labels, &trees);
        let materials = Materials { mu_conductor: mu_ratio, mu_insulator: 1.0, sigma_conductor: 2.0, omega };
        let a = Assembler::new(&mesh, &labels, &p, materials).unwrap();
        let centre = [0, 1, 2].map(|d| 0.5 * (g.conductor_min[d] + g.conductor_max[d]));
        let spec = SourceSpec::Volumetric {
            field: loop_current(centre, [0.0, 0.0, 1.0], 0.3, 1.0),
            support: Support::ConductorOnly,
            order: 3,
        };
        let blocks = a.assemble(&spec, &SourceOptions::default()).unwrap();
        let r = build_tearing::<f64>(&p);
        prop_assert!(check_splitting_identities(&blocks, &r).max() <= 1e-12);
        let mono = solve_monolithic(&blocks, 1e-12).unwrap();
        let feti = solve_feti_direct(&blocks, 1e-12).unwrap();
        let glued = glue_solution(&p, &feti, 1e-10).unwrap();
        prop_assert!(rel_diff_inf(&glued.a, &mono.a) <= 1e-8);
        prop_assert!(rel_diff_inf(&glued.phi, &mono.phi) <= 1e-8);
        let b = reconstruct_b(&mesh, &labels, &p, Coefficients::Torn {
            conductor: &feti.a_conductor,
            insulator: &feti.a_insulator,
        });
        prop_assert!(check_normal_continuity(&b, &mesh, &labels, FaceSet::All).relative() <= 1e-11);
    }
}
