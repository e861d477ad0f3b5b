use num_traits::{Float, One, Zero};

use super::LinalgError;
use crate::scalar::{Real, Scalar};

#[derive(Clone, Debug)]
pub struct GmresOutcome<S: Scalar> {
    pub solution: Vec<S>,
    pub iterations: usize,
    /// Relative residual `‖b − A x_k‖ / ‖b‖` after each iteration (index 0 is the start).
    pub history: Vec<f64>,
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x.conj() * y).sum()
}

fn norm2<S: Scalar>(a: &[S]) -> S::Real {
    a.iter()
        .map(|x| {
            let m = x.modulus();
            m * m
        })
        .sum::<S::Real>()
        .sqrt()
}

/// Complex Givens rotation `(c, s)` with `[c s; -s̄ c] [a; b] = [r; 0]`.
fn givens<S: Scalar>(a: S, b: S) -> (S::Real, S) {
    let (ma, mb) = (a.modulus(), b.modulus());
    if mb.is_zero() {
        return (S::Real::one(), S::zero());
    }
    if ma.is_zero() {
        return (
            S::Real::zero(),
            b.conj() * S::from_real(S::Real::one() / mb),
        );
    }
    let r = ma.hypot(mb);
    let phase = a * S::from_real(S::Real::one() / ma);
    (ma / r, phase * b.conj() * S::from_real(S::Real::one() / r))
}

/// Unrestarted GMRES from a zero initial guess with modified Gram–Schmidt
/// (applied twice) for the Arnoldi basis.
///
/// Stops when the relative residual drops to `tol`, or at a lucky breakdown.
pub fn gmres<S, F>(
    apply: F,
    b: &[S],
    tol: S::Real,
    max_iter: usize,
) -> Result<GmresOutcome<S>, LinalgError>
where
    S: Scalar,
    F: Fn(&[S]) -> Vec<S>,
{
    let n = b.len();
    let beta = norm2(b);
    if beta.is_zero() {
        return Ok(GmresOutcome {
            solution: vec![S::zero(); n],
            iterations: 0,
            history: vec![0.0],
        });
    }
    let mut basis: Vec<Vec<S>> = vec![b
        .iter()
        .map(|&x| x * S::from_real(S::Real::one() / beta))
        .collect()];
    // columns of the Hessenberg matrix, already rotated
    let mut hess: Vec<Vec<S>> = Vec::new();
    let mut rotations: Vec<(S::Real, S)> = Vec::new();
    let mut g = vec![S::from_real(beta)];
    let mut history = vec![1.0];
    let breakdown = S::Real::epsilon() * S::Real::lit(16.0);

    let mut k = 0;
    while k < max_iter.min(n) {
        let mut w = apply(&basis[k]);
        let mut h = vec![S::zero(); k + 2];
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                h[i] += c;
                for (wj, &vj) in w.iter_mut().zip(v) {
                    *wj -= c * vj;
                }
            }
        }
        let hnext = norm2(&w);
        let wnorm_ref = h.iter().fold(hnext, |m, x| m.max(x.modulus()));
        h[k + 1] = S::from_real(hnext);
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = a * S::from_real(c) + s * bb;
            h[i + 1] = -(s.conj()) * a + bb * S::from_real(c);
        }
        let (c, s) = givens(h[k], h[k + 1]);
        let (a, bb) = (h[k], h[k + 1]);
        h[k] = a * S::from_real(c) + s * bb;
        h[k + 1] = S::zero();
        rotations.push((c, s));
        let gk = g[k];
        g[k] = gk * S::from_real(c);
        g.push(-(s.conj()) * gk);
        hess.push(h);
        k += 1;

        let rel = g[k].modulus() / beta;
        history.push(rel.as_f64());
        let lucky = hnext <= breakdown * wnorm_ref;
        if rel <= tol || lucky {
            break;
        }
        basis.push(
            w.iter()
                .map(|&x| x * S::from_real(S::Real::one() / hnext))
                .collect(),
        );
    }

    // back substitution on the rotated Hessenberg (upper triangular) system
    let mut y = vec![S::zero(); k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= hess[j][i] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    let mut x = vec![S::zero(); n];
    for (yi, v) in y.iter().zip(&basis) {
        for (xj, &vj) in x.iter_mut().zip(v) {
            *xj += *yi * vj;
        }
    }
    let ax = apply(&x);
    let true_res: Vec<S> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let rel = (norm2(&true_res) / beta).as_f64();
    if let Some(last) = history.last_mut() {
        *last = rel;
    }
    if rel > tol.as_f64() {
        return Err(LinalgError::NotConverged {
            iterations: k,
            last: rel,
            history,
        });
    }
    Ok(GmresOutcome {
        solution: x,
        iterations: k,
        history,
    })
}
