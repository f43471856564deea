//! Away-step Frank-Wolfe for concave maximization over the unit simplex
//! `{(gamma, eta) >= 0, sum gamma + sum eta = 1}`.

use crate::error::{Error, Result};
use crate::geometry::HullCoords;

/// A concave function of the flat weight vector `(gamma, eta)`.
pub trait ConcaveObjective {
    fn value(&self, c: &[f64]) -> f64;
    /// Any supergradient at `c`.
    fn supergradient(&self, c: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FwOptions {
    /// Stop once the Frank-Wolfe gap drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Stop after this many consecutive iterations without improvement.
    pub stall_iters: usize,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions { tol: 1e-8, max_iters: 10_000, stall_iters: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwResult {
    pub coords: HullCoords,
    pub flat: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe gap at the returned iterate (an upper bound on the
    /// suboptimality whenever the objective is differentiable there).
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("concave objective"))
    }
}

/// Maximizes a concave `phi` on `[0, hi]` by golden-section search. Returns
/// `(t, phi(t))`, never worse than `t = 0`.
pub(crate) fn golden_max(phi: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let f0 = phi(0.0);
    let fh = phi(hi);
    let (mut a, mut b) = (0.0, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    let stop = 1e-14 * hi.max(1e-300);
    for _ in 0..200 {
        if b - a <= stop {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = phi(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = phi(x1);
        }
    }
    let mut best = (0.0, f0);
    for cand in [(x1, f1), (x2, f2), (hi, fh)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Away-step Frank-Wolfe over the simplex of dimension `m_a + m_b - 1`.
///
/// Starts from `start` when given, otherwise from the best unit vertex (lowest
/// index on ties). The objective value never decreases between iterations.
pub fn maximize_concave<O: ConcaveObjective + ?Sized>(
    obj: &O,
    dims: (usize, usize),
    opts: FwOptions,
    start: Option<&[f64]>,
) -> Result<FwResult> {
    let (m_a, m_b) = dims;
    if m_a == 0 || m_b == 0 {
        return Err(Error::InvalidInput("maximize_concave needs mA, mB >= 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol must be > 0".into()));
    }
    let m = m_a + m_b;
    let unit = |k: usize| {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        e
    };

    let mut c = match start {
        Some(s) => {
            if s.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: s.len() });
            }
            let mut c: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
            let total: f64 = c.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidInput("start weights sum to zero".into()));
            }
            c.iter_mut().for_each(|v| *v /= total);
            c
        }
        None => {
            let mut best = (0, f64::NEG_INFINITY);
            for k in 0..m {
                let v = finite(obj.value(&unit(k)))?;
                if v > best.1 {
                    best = (k, v);
                }
            }
            unit(best.0)
        }
    };
    let mut value = finite(obj.value(&c))?;
    let mut trace = vec![value];
    let mut gap = f64::INFINITY;
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        let g = obj.supergradient(&c);
        if g.len() != m || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("concave objective supergradient"));
        }
        let gc: f64 = g.iter().zip(&c).map(|(a, b)| a * b).sum();
        let s = (0..m).fold(0, |best, k| if g[k] > g[best] { k } else { best });
        gap = g[s] - gc;
        if gap <= opts.tol {
            converged = true;
            break;
        }
        let away = (0..m)
            .filter(|&k| c[k] > 0.0)
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if g[b] <= g[k] => Some(b),
                _ => Some(k),
            })
            .unwrap_or(s);
        let away_gap = gc - g[away];

        let (dir, max_step) = if gap >= away_gap || c[away] >= 1.0 {
            let mut d: Vec<f64> = c.iter().map(|v| -v).collect();
            d[s] += 1.0;
            (d, 1.0)
        } else {
            let mut d = c.clone();
            d[away] -= 1.0;
            (d, c[away] / (1.0 - c[away]))
        };
        let along = |t: f64| {
            let y: Vec<f64> = c.iter().zip(&dir).map(|(a, d)| (a + t * d).max(0.0)).collect();
            obj.value(&y)
        };
        let (t, v) = golden_max(along, max_step);
        finite(v)?;
        iterations += 1;
        if v > value {
            let improvement = v - value;
            for (ck, dk) in c.iter_mut().zip(&dir) {
                *ck = (*ck + t * dk).max(0.0);
            }
            let total: f64 = c.iter().sum();
            c.iter_mut().for_each(|v| *v /= total);
            value = finite(obj.value(&c))?.max(value);
            if improvement <= 1e-15 * (1.0 + value.abs()) {
                stall += 1;
            } else {
                stall = 0;
            }
        } else {
            stall += 1;
        }
        trace.push(value);
        if stall >= opts.stall_iters {
            break;
        }
    }

    Ok(FwResult { coords: HullCoords::from_flat(&c, m_a), flat: c, value, gap, iterations, converged, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(Vec<f64>);
    impl ConcaveObjective for Linear {
        fn value(&self, c: &[f64]) -> f64 {
            self.0.iter().zip(c).map(|(a, b)| a * b).sum()
        }
        fn supergradient(&self, _c: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn linear_objective_picks_best_vertex() {
        let obj = Linear(vec![0.3, -1.0, 2.5, 0.7]);
        let r = maximize_concave(&obj, (2, 2), FwOptions::default(), None).unwrap();
        assert_eq!(r.flat, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.value, 2.5);
        assert!(r.converged);
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let (t, v) = golden_max(|t| -(t - 0.3) * (t - 0.3), 1.0);
        assert!((t - 0.3).abs() < 1e-7);
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_dims_and_nonfinite() {
        let obj = Linear(vec![1.0, 1.0]);
        assert!(maximize_concave(&obj, (0, 2), FwOptions::default(), None).is_err());
        let bad = Linear(vec![f64::NAN, 1.0]);
        assert!(matches!(
            maximize_concave(&bad, (1, 1), FwOptions::default(), None),
            Err(Error::NonFinite(_))
        ));
    }
}
