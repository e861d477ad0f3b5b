//! End-to-end runs through the public API with physical coefficients.

use std::f64::consts::PI;

use eddy_core::assembly::{
    loop_current, uniform_field_surface_current, Assembler, AssemblyError, Materials,
    SourceOptions, SourceSpec, Support,
};
use eddy_core::mesh::{build_box_mesh, classify_entities, BoxGeometry, MeshError};
use eddy_core::solve_feti::solve_feti_dual;
use eddy_core::solve_mono::{electric_field, solve_monolithic};
use eddy_core::topo::{build_partition, build_tree_cotree, TopoError};
use eddy_core::verify::{run_suite, Case, SuiteConfig};

const MU0: f64 = 4.0e-7 * PI;

#[test]
fn physical_case_passes_full_suite() {
    let g = BoxGeometry::unit_cube_split_x(0.5, 2);
    let mesh = build_box_mesh(&g).unwrap();
    let labels = classify_entities(&mesh, &g).unwrap();
    let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
    let p = build_partition(&mesh, &labels, &trees);
    let materials = Materials {
        mu_conductor: MU0,
        mu_insulator: MU0,
        sigma_conductor: 1e6,
        omega: 2.0 * PI * 50.0,
    };
    let a = Assembler::new(&mesh, &labels, &p, materials).unwrap();
    let spec = SourceSpec::Volumetric {
        field: loop_current([0.75, 0.5, 0.5], [1.0, 0.0, 0.0], 0.2, 1e6),
        support: Support::Anywhere,
        order: 4,
    };
    let options = SourceOptions {
        project_solenoidal: true,
        ..Default::default()
    };
    let blocks = a.assemble(&spec, &options).unwrap();
    let mono = solve_monolithic(&blocks, 1e-12).unwrap();
    let direct = eddy_core::solve_feti::solve_feti_direct(&blocks, 1e-12).unwrap();
    let dual = solve_feti_dual(&blocks, 1e-13, 100).unwrap();
    let case = Case {
        assembler: &a,
        trees: &trees,
        blocks: &blocks,
        spec: &spec,
        options: &options,
        mono: Some(&mono),
        feti_direct: Some(&direct),
        feti_dual: Some(&dual),
        uniform_field: None,
    };
    let report = run_suite(&case, &SuiteConfig::default()).unwrap();
    let failing: Vec<_> = report.checks.iter().filter(|c| !c.pass).collect();
    assert!(failing.is_empty(), "{failing:#?}");
    // eddy currents are induced: E is nonzero in the conductor
    let e = electric_field(&a, &mono.a, &mono.phi).unwrap();
    assert_eq!(e.len(), labels.conductor_tets().count());
    assert!(e.iter().any(|(_, v)| v.iter().any(|z| z.norm() > 0.0)));
}

#[test]
fn patch_test_report_entry() {
    let g = BoxGeometry::unit_cube_split_x(0.5, 2);
    let mesh = build_box_mesh(&g).unwrap();
    let labels = classify_entities(&mesh, &g).unwrap();
    let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
    let p = build_partition(&mesh, &labels, &trees);
    let materials = Materials {
        mu_conductor: MU0,
        mu_insulator: MU0,
        sigma_conductor: 1e6,
        omega: 0.0,
    };
    let a = Assembler::new(&mesh, &labels, &p, materials).unwrap();
    let b0 = [0.0, 0.0, 1.0];
    let spec = SourceSpec::Surface {
        field: uniform_field_surface_current(b0),
        order: 2,
    };
    let options = SourceOptions::default();
    let blocks = a.assemble(&spec, &options).unwrap();
    let mono = solve_monolithic(&blocks, 1e-12).unwrap();
    let case = Case {
        assembler: &a,
        trees: &trees,
        blocks: &blocks,
        spec: &spec,
        options: &options,
        mono: Some(&mono),
        feti_direct: None,
        feti_dual: None,
        uniform_field: Some(b0),
    };
    let report = run_suite(&case, &SuiteConfig::default()).unwrap();
    let patch = report.get("patch_test").unwrap();
    assert!(patch.pass && patch.value <= 1e-10);
    assert!(
        report.all_pass(),
        "{:?}",
        report.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>()
    );
    assert!(report.skipped.contains(&"equivalence_a".to_owned()));
}

#[test]
fn unprojected_insulator_source_is_rejected() {
    let g = BoxGeometry::unit_cube_split_x(0.5, 2);
    let mesh = build_box_mesh(&g).unwrap();
    let labels = classify_entities(&mesh, &g).unwrap();
    let trees = build_tree_cotree(&mesh, &labels, None).unwrap();
    let p = build_partition(&mesh, &labels, &trees);
    let materials = Materials {
        mu_conductor: MU0,
        mu_insulator: MU0,
        sigma_conductor: 1e6,
        omega: 1.0,
    };
    let a = Assembler::new(&mesh, &labels, &p, materials).unwrap();
    let spec = SourceSpec::Volumetric {
        field: loop_current([0.75, 0.5, 0.5], [1.0, 0.0, 0.0], 0.2, 1e6),
        support: Support::Anywhere,
        order: 4,
    };
    assert!(matches!(
        a.assemble(&spec, &SourceOptions::default()),
        Err(AssemblyError::NotSolenoidal { .. })
    ));
}

#[test]
fn invalid_inputs_surface_typed_errors() {
    let interior = BoxGeometry::new([0.0; 3], [1.0; 3], [0.25; 3], [0.75; 3], 4);
    assert_eq!(
        build_box_mesh(&interior).unwrap_err(),
        MeshError::InsulatorTopology
    );
    let g = BoxGeometry::unit_cube_split_x(0.5, 2);
    let mesh = build_box_mesh(&g).unwrap();
    let labels = classify_entities(&mesh, &g).unwrap();
    let not_on_gamma = labels
        .insulator_vertices
        .iter()
        .copied()
        .find(|&v| !labels.vertex_in_conductor[v])
        .unwrap();
    assert!(matches!(
        build_tree_cotree(&mesh, &labels, Some(not_on_gamma)),
        Err(TopoError::RootNotOnInterface { .. })
    ));
}
