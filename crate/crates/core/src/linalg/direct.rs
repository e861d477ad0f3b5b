use std::collections::VecDeque;

use num_traits::{Float, Zero};

use super::{CsrMatrix, LinalgError};
use crate::scalar::{Real, Scalar};

/// Reverse Cuthill–McKee ordering of the symmetrized sparsity pattern.
///
/// Returns `perm` with `perm[new] = old`. Each connected component is started
/// from a pseudo-peripheral node found by repeated breadth-first sweeps.
pub fn reverse_cuthill_mckee<S: Scalar>(a: &CsrMatrix<S>) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&v| (degree[v], v));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].expect("queued nodes have a level");
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut eccentricity = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adj);
        let depth = levels.iter().flatten().copied().max().unwrap_or(0);
        if depth <= eccentricity && current != seed {
            break;
        }
        eccentricity = depth;
        let candidate = (0..adj.len())
            .filter(|&v| levels[v] == Some(depth))
            .min_by_key(|&v| (degree[v], v))
            .expect("deepest level is nonempty");
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

/// LU factorization with partial pivoting of a band-limited matrix.
///
/// The matrix is first reordered by reverse Cuthill–McKee, then factored in
/// band storage (LAPACK `gbtrf` layout: pivoting widens the upper band by the
/// lower bandwidth). Suitable for saddle-point systems with zero diagonal
/// blocks since pivots are chosen among the rows below the diagonal.
#[derive(Clone, Debug)]
pub struct SparseLu<S: Scalar> {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    perm: Vec<usize>,
    /// row `i` holds columns `i - lower ..= i + lower + upper`
    rows: Vec<S>,
    multipliers: Vec<S>,
    pivots: Vec<usize>,
}

impl<S: Scalar> SparseLu<S> {
    pub fn factor(a: &CsrMatrix<S>) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut lower, mut upper) = (0usize, 0usize);
        for (i, j, _) in a.iter() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                lower = lower.max(pi - pj);
            } else {
                upper = upper.max(pj - pi);
            }
        }
        let width = 2 * lower + upper + 1;
        let mut lu = Self {
            n,
            lower,
            upper,
            width,
            perm,
            rows: vec![S::zero(); n * width],
            multipliers: vec![S::zero(); n * lower],
            pivots: vec![0; n],
        };
        for (i, j, v) in a.iter() {
            let (pi, pj) = (inv[i], inv[j]);
            *lu.at_mut(pi, pj) += v;
        }
        let scale = a.max_abs();
        lu.eliminate(scale)?;
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(lower, upper)` bandwidths after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.lower + self.upper);
        i * self.width + (j + self.lower - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> S {
        self.rows[self.offset(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut S {
        let k = self.offset(i, j);
        &mut self.rows[k]
    }

    fn eliminate(&mut self, scale: S::Real) -> Result<(), LinalgError> {
        let n = self.n;
        let tiny = scale * S::Real::epsilon() * S::Real::lit(n.max(1) as f64) * S::Real::lit(1e-3);
        for k in 0..n {
            let last_row = (k + self.lower).min(n.saturating_sub(1));
            let last_col = (k + self.lower + self.upper).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).modulus();
            for r in k + 1..=last_row {
                let m = self.at(r, k).modulus();
                if m > best {
                    best = m;
                    p = r;
                }
            }
            if best <= tiny || best.is_zero() {
                return Err(LinalgError::Singular {
                    column: self.perm[k],
                    pivot: best.as_f64(),
                });
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.offset(k, j), self.offset(p, j));
                    self.rows.swap(a, b);
                }
            }
            let inv_pivot = S::one() / self.at(k, k);
            for r in k + 1..=last_row {
                let factor = self.at(r, k) * inv_pivot;
                self.multipliers[k * self.lower + (r - k - 1)] = factor;
                *self.at_mut(r, k) = S::zero();
                if factor.is_zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.at(k, j);
                    *self.at_mut(r, j) -= factor * u;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[S]) -> Result<Vec<S>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension {
                expected: self.n,
                got: b.len(),
            });
        }
        let n = self.n;
        let mut y: Vec<S> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            y.swap(k, p);
            let last_row = (k + self.lower).min(n.saturating_sub(1));
            for r in k + 1..=last_row {
                let f = self.multipliers[k * self.lower + (r - k - 1)];
                let yk = y[k];
                y[r] -= f * yk;
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + self.lower + self.upper).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=last_col {
                s -= self.at(i, j) * y[j];
            }
            y[i] = s / self.at(i, i);
        }
        let mut x = vec![S::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}
