//! Dense two-phase simplex method with Bland's rule.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;

/// `max <c, x>` subject to `A x = b`, `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual multipliers `y` with `A^T y >= c` and `<b, y> = value`.
    pub duals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            LpOutcome::Infeasible => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex iterations for `max <costs, x>`; only columns
    /// `< enter_limit` may enter the basis.
    fn optimize(&mut self, costs: &[f64], enter_limit: usize) -> Result<()> {
        let max_iters = 50_000;
        for _ in 0..max_iters {
            let entering = (0..enter_limit).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = self.basis.iter().zip(&self.rows).map(|(&bi, row)| costs[bi] * row[j]).sum();
                costs[j] - z > COST_TOL
            });
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][j];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(Error::Unbounded) };
            self.pivot(r, j);
        }
        Err(Error::NonConvergence { gap: f64::NAN, iterations: max_iters })
    }
}

/// Solves a small dense LP by the two-phase simplex method.
pub fn solve_lp(lp: &LpProblem) -> Result<LpOutcome> {
    let nv = lp.objective.len();
    let m = lp.a_eq.len();
    if lp.b_eq.len() != m || lp.a_eq.iter().any(|r| r.len() != nv) {
        return Err(Error::InvalidInput("LP dimensions are inconsistent".into()));
    }
    let finite = lp.objective.iter().chain(&lp.b_eq).chain(lp.a_eq.iter().flatten()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("LP data"));
    }

    let width = nv + m + 1;
    let mut signs = vec![1.0; m];
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let s = if lp.b_eq[i] < 0.0 { -1.0 } else { 1.0 };
        signs[i] = s;
        let mut row = vec![0.0; width];
        for j in 0..nv {
            row[j] = s * lp.a_eq[i][j];
        }
        row[nv + i] = 1.0;
        row[width - 1] = s * lp.b_eq[i];
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (nv..nv + m).collect(), width };

    // Phase 1: drive the artificial variables to zero.
    let mut phase1 = vec![0.0; nv + m];
    phase1[nv..].iter_mut().for_each(|c| *c = -1.0);
    t.optimize(&phase1, nv + m)?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= nv).map(|i| t.rhs(i)).sum();
    let scale = 1.0 + lp.b_eq.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if infeasibility > 1e-9 * scale {
        return Ok(LpOutcome::Infeasible);
    }
    for i in 0..m {
        if t.basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| !t.basis.contains(&j) && t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2 on the original objective; artificials may no longer enter.
    let mut phase2 = lp.objective.clone();
    phase2.extend(std::iter::repeat_n(0.0, m));
    t.optimize(&phase2, nv)?;

    let mut x = vec![0.0; nv];
    for (i, &bi) in t.basis.iter().enumerate() {
        if bi < nv {
            x[bi] = t.rhs(i).max(0.0);
        }
    }
    let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    let duals = (0..m)
        .map(|k| {
            let y: f64 = t.basis.iter().zip(&t.rows).map(|(&bi, row)| phase2[bi] * row[nv + k]).sum();
            signs[k] * y
        })
        .collect();
    Ok(LpOutcome::Optimal(LpSolution { x, value, duals }))
}
