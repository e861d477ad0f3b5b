//! Legacy ASCII VTK (3.0) unstructured-grid writer for per-tet fields.

use std::fmt::Write as _;

use eddy_core::mesh::{EntityLabels, Mesh, Subdomain};
use eddy_core::{BField, Complex};

/// Cell data: `B_re`, `B_im`, `E_re`, `E_im` (zero on insulator cells, where
/// E is undefined) and `subdomain` (1 conductor, 0 insulator).
///
/// Numbers use Rust's shortest round-trip formatting, so the output is a pure
/// function of the inputs.
pub fn render(
    title: &str,
    mesh: &Mesh<f64>,
    labels: &EntityLabels,
    b: &BField,
    e: &[(usize, [Complex; 3])],
) -> String {
    let nt = mesh.tets.len();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{}", title.replace('\n', " "));
    let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "CELLS {nt} {}", 5 * nt);
    for t in &mesh.tets {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(out, "10");
    }
    let _ = writeln!(out, "CELL_DATA {nt}");
    let mut e_cells = vec![[Complex::new(0.0, 0.0); 3]; nt];
    for &(t, v) in e {
        e_cells[t] = v;
    }
    let mut vectors = |name: &str, values: &mut dyn Iterator<Item = [f64; 3]>| {
        let _ = writeln!(out, "VECTORS {name} double");
        for v in values {
            let _ = writeln!(out, "{} {} {}", clean(v[0]), clean(v[1]), clean(v[2]));
        }
    };
    vectors("B_re", &mut b.values.iter().map(|v| v.map(|z| z.re)));
    vectors("B_im", &mut b.values.iter().map(|v| v.map(|z| z.im)));
    vectors("E_re", &mut e_cells.iter().map(|v| v.map(|z| z.re)));
    vectors("E_im", &mut e_cells.iter().map(|v| v.map(|z| z.im)));
    let _ = writeln!(out, "SCALARS subdomain int 1\nLOOKUP_TABLE default");
    for &s in &labels.tet_label {
        let _ = writeln!(out, "{}", u8::from(s == Subdomain::Conductor));
    }
    out
}

// -0.0 and 0.0 print differently; normalize so zero fields read as zeros
fn clean(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}
