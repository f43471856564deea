//! Dual side of `phi_K(x) = max_y psi(y) - K ||x - y||`.
//!
//! By minimax over the compact sets involved,
//!
//! ```text
//! phi_K(x) = min_{||v|| <= K} U(v),   U(v) = max_k ( w_k + <v, m_k - x> )
//! ```
//!
//! where `m_k` are the stacked vertices and `w_k` their levels. Any `v` in the
//! ball gives an upper bound, and `-v` is then a `(U(v) - phi_K(x))`-
//! supergradient of `phi_K` at `x`. The minimum is found by enumerating
//! active sets of at most `n + 1` pieces, with or without the ball constraint.

use crate::linalg::{dot, norm, solve, sub};

pub(crate) struct DualProblem<'a> {
    pub levels: &'a [f64],
    /// `m_k - x`
    pub offsets: Vec<Vec<f64>>,
    pub k: f64,
}

pub(crate) struct DualSolution {
    pub value: f64,
    pub v: Vec<f64>,
    /// Minimizers found by the enumeration (extreme points of the optimal set
    /// up to numerical tolerance).
    pub extremes: Vec<Vec<f64>>,
}

impl<'a> DualProblem<'a> {
    pub fn upper(&self, v: &[f64]) -> f64 {
        self.levels
            .iter()
            .zip(&self.offsets)
            .map(|(w, d)| w + dot(v, d))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn solve(&self) -> DualSolution {
        let n = self.offsets[0].len();
        let m = self.offsets.len();
        let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; n]];
        let mut subset: Vec<usize> = Vec::with_capacity(n + 1);
        for size in 1..=(n + 1).min(m) {
            self.enumerate(0, size, &mut subset, &mut candidates);
        }
        let values: Vec<f64> = candidates.iter().map(|v| self.upper(v)).collect();
        let (best, value) = values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &u)| if u < acc.1 { (i, u) } else { acc });
        let tol = 1e-10 * (1.0 + value.abs());
        let mut extremes: Vec<Vec<f64>> = Vec::new();
        for (v, u) in candidates.iter().zip(&values) {
            if *u <= value + tol && !extremes.iter().any(|e| norm(&sub(e, v)) < 1e-12) {
                extremes.push(v.clone());
            }
        }
        DualSolution { value, v: candidates[best].clone(), extremes }
    }

    fn enumerate(&self, start: usize, size: usize, subset: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if subset.len() == size {
            self.candidates_for(subset, out);
            return;
        }
        for i in start..self.offsets.len() {
            subset.push(i);
            self.enumerate(i + 1, size, subset, out);
            subset.pop();
        }
    }

    /// Candidates on the affine set where all pieces of `subset` tie.
    fn candidates_for(&self, subset: &[usize], out: &mut Vec<Vec<f64>>) {
        let n = self.offsets[0].len();
        let k0 = subset[0];
        let d0 = &self.offsets[k0];
        let rows: Vec<Vec<f64>> = subset[1..].iter().map(|&k| sub(&self.offsets[k], d0)).collect();
        let rhs: Vec<f64> = subset[1..].iter().map(|&k| self.levels[k0] - self.levels[k]).collect();
        let r = rows.len();

        // Minimum-norm point `c` of {v : rows v = rhs} and the projector onto
        // the null space of `rows`, applied via `project`.
        let (c, gram) = if r == 0 {
            (vec![0.0; n], Vec::new())
        } else {
            let mut gram = vec![0.0; r * r];
            for i in 0..r {
                for j in 0..r {
                    gram[i * r + j] = dot(&rows[i], &rows[j]);
                }
            }
            let Some(z) = solve(gram.clone(), rhs, r, 1e-12) else { return };
            let mut c = vec![0.0; n];
            for (zi, row) in z.iter().zip(&rows) {
                for (ck, rk) in c.iter_mut().zip(row) {
                    *ck += zi * rk;
                }
            }
            (c, gram)
        };
        let project = |u: &[f64]| -> Option<Vec<f64>> {
            if r == 0 {
                return Some(u.to_vec());
            }
            let eu: Vec<f64> = rows.iter().map(|row| dot(row, u)).collect();
            let z = solve(gram.clone(), eu, r, 1e-12)?;
            let mut p = u.to_vec();
            for (zi, row) in z.iter().zip(&rows) {
                for (pk, rk) in p.iter_mut().zip(row) {
                    *pk -= zi * rk;
                }
            }
            Some(p)
        };

        let cn = norm(&c);
        if cn > self.k * (1.0 + 1e-12) {
            return;
        }
        out.push(c.clone());
        let rho = (self.k * self.k - cn * cn).max(0.0).sqrt();
        if rho == 0.0 {
            return;
        }
        let Some(g) = project(d0) else { return };
        let gn = norm(&g);
        if gn > 1e-12 * (1.0 + norm(d0)) {
            out.push(c.iter().zip(&g).map(|(ci, gi)| ci - rho * gi / gn).collect());
        } else {
            // the tied value is flat on this affine set; probe the sphere
            // along its directions
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let Some(u) = project(&e) else { continue };
                let un = norm(&u);
                if un > 1e-9 {
                    for sign in [-1.0, 1.0] {
                        out.push(c.iter().zip(&u).map(|(ci, ui)| ci + sign * rho * ui / un).collect());
                    }
                }
            }
        }
    }
}
