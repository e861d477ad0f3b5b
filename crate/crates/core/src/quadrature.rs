//! Quadrature on the reference simplices.
//!
//! Points are returned in barycentric coordinates with weights summing to one,
//! so callers scale by the element measure.

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    assert!(m > 0);
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        // Newton on P_m starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn points_for(order: usize, extra: usize) -> usize {
    (order + extra + 2) / 2
}

/// Collapsed-coordinate product rule on the tetrahedron, exact for
/// polynomials of total degree `order`.
pub fn tet_rule<T: Real>(order: usize) -> Vec<([T; 4], T)> {
    let gu = gauss_legendre_unit(points_for(order, 2));
    let gv = gauss_legendre_unit(points_for(order, 1));
    let gw = gauss_legendre_unit(points_for(order, 0));
    let mut out = Vec::with_capacity(gu.len() * gv.len() * gw.len());
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            for &(w, ww) in &gw {
                let x = u;
                let y = (1.0 - u) * v;
                let z = (1.0 - u) * (1.0 - v) * w;
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                // reference volume is 1/6
                let weight = 6.0 * wu * wv * ww * jac;
                out.push(([1.0 - x - y - z, x, y, z].map(T::lit), T::lit(weight)));
            }
        }
    }
    out
}

/// Collapsed-coordinate product rule on the triangle, exact for total degree `order`.
pub fn triangle_rule<T: Real>(order: usize) -> Vec<([T; 3], T)> {
    let gu = gauss_legendre_unit(points_for(order, 1));
    let gv = gauss_legendre_unit(points_for(order, 0));
    let mut out = Vec::with_capacity(gu.len() * gv.len());
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            let x = u;
            let y = (1.0 - u) * v;
            let weight = 2.0 * wu * wv * (1.0 - u);
            out.push(([1.0 - x - y, x, y].map(T::lit), T::lit(weight)));
        }
    }
    out
}

/// Four-point symmetric rule, exact for quadratics.
pub fn tet_degree2<T: Real>() -> [([T; 4], T); 4] {
    let a = T::lit(0.585_410_196_624_968_5);
    let b = T::lit(0.138_196_601_125_010_5);
    let w = T::lit(0.25);
    [
        ([a, b, b, b], w),
        ([b, a, b, b], w),
        ([b, b, a, b], w),
        ([b, b, b, a], w),
    ]
}
