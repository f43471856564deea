//! The concave tent function `psi` whose hypograph is
//! `co{A x (-inf, r], B x (-inf, s]}`.
//!
//! On polytopes `psi(x)` is the optimal value of the linear program
//!
//! ```text
//! max  r * sum(gamma) + s * sum(eta)
//! s.t. sum gamma_i a_i + sum eta_j b_j = x,  gamma, eta >= 0,  sum(gamma) + sum(eta) = 1
//! ```
//!
//! and `-inf` when the program is infeasible (`x` outside `[A,B]`). The LP
//! duals give a supergradient of `psi` at `x` for free.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{inf_linear, stacked_vertices, HullCoords, Point, Polytope};
use crate::simplex_optim::{solve_lp, LpOutcome, LpProblem};

/// Default slack for every epsilon-differential grid check.
pub const TOL_CHECK: f64 = 1e-7;

/// Guard on `|psi(x0) - s|` for the hull-slope bound.
pub const PSI_S_GUARD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTent", into = "RawTent")]
pub struct TentSpec {
    a: Polytope,
    b: Polytope,
    r: f64,
    s: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTent {
    #[serde(rename = "A")]
    a: Polytope,
    #[serde(rename = "B")]
    b: Polytope,
    r: f64,
    s: f64,
}

impl TryFrom<RawTent> for TentSpec {
    type Error = Error;
    fn try_from(raw: RawTent) -> Result<Self> {
        TentSpec::new(raw.a, raw.b, raw.r, raw.s)
    }
}

impl From<TentSpec> for RawTent {
    fn from(t: TentSpec) -> Self {
        RawTent { a: t.a, b: t.b, r: t.r, s: t.s }
    }
}

impl TentSpec {
    pub fn new(a: Polytope, b: Polytope, r: f64, s: f64) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        if !r.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("tent levels r, s"));
        }
        if r == s {
            return Err(Error::InvalidInput("tent levels must differ (r != s)".into()));
        }
        Ok(TentSpec { a, b, r, s })
    }

    pub fn a(&self) -> &Polytope {
        &self.a
    }
    pub fn b(&self) -> &Polytope {
        &self.b
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// Level attached to each stacked vertex: `r` on `A`, `s` on `B`.
    pub fn levels(&self) -> Vec<f64> {
        std::iter::repeat_n(self.r, self.a.len())
            .chain(std::iter::repeat_n(self.s, self.b.len()))
            .collect()
    }

    pub fn vertices(&self) -> Vec<&Point> {
        stacked_vertices(&self.a, &self.b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiValue {
    /// `psi(x)`, `-inf` outside `[A,B]`.
    pub value: f64,
    /// Attaining decomposition (so `lambda = sum(gamma)`); `None` outside.
    pub coords: Option<HullCoords>,
    /// A supergradient of `psi` at `x` read off the LP duals.
    pub supergradient: Option<Point>,
}

impl PsiValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

pub fn psi_eval(x: &Point, t: &TentSpec) -> Result<PsiValue> {
    check_dim(t.dim(), x.dim())?;
    let verts = t.vertices();
    let n = t.dim();
    let mut a_eq: Vec<Vec<f64>> = (0..n).map(|k| verts.iter().map(|v| v[k]).collect()).collect();
    a_eq.push(vec![1.0; verts.len()]);
    let mut b_eq = x.0.clone();
    b_eq.push(1.0);
    let lp = LpProblem { objective: t.levels(), a_eq, b_eq };
    match solve_lp(&lp)? {
        LpOutcome::Infeasible => Ok(PsiValue { value: f64::NEG_INFINITY, coords: None, supergradient: None }),
        LpOutcome::Optimal(sol) => Ok(PsiValue {
            value: sol.value,
            coords: Some(HullCoords::from_flat(&sol.x, t.a.len())),
            supergradient: Some(Point(sol.duals[..n].to_vec())),
        }),
    }
}

/// Shorthand for `psi_eval(x, t)?.value`.
pub fn psi(x: &Point, t: &TentSpec) -> Result<f64> {
    Ok(psi_eval(x, t)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperdiffCheck {
    pub ok: bool,
    /// `max_z (psi(z) - psi(x) - <p, z - x>) - eps` over the grid.
    pub worst_violation: f64,
}

/// Grid check of `p in d+_eps psi(x)`.
pub fn eps_superdiff_check_psi(p: &Point, x: &Point, eps: f64, t: &TentSpec, grid: &[Point]) -> Result<SuperdiffCheck> {
    check_dim(t.dim(), p.dim())?;
    let px = psi(x, t)?;
    if !px.is_finite() {
        return Err(Error::OutsideHull);
    }
    let mut worst = f64::NEG_INFINITY;
    for z in grid {
        let pz = psi(z, t)?;
        if !pz.is_finite() {
            continue;
        }
        let v = pz - px - p.dot(&z.sub(x)) - eps;
        worst = worst.max(v);
    }
    Ok(SuperdiffCheck { ok: worst <= TOL_CHECK, worst_violation: worst })
}

/// Smallest `eps >= 0` with `p in d+_eps psi(x)`, computed exactly:
/// `sup_z (psi(z) - <p,z>)` over `[A,B]` is attained at a vertex.
pub fn exact_superdiff_slack(p: &Point, x: &Point, t: &TentSpec) -> Result<f64> {
    check_dim(t.dim(), p.dim())?;
    let px = psi(x, t)?;
    if !px.is_finite() {
        return Err(Error::OutsideHull);
    }
    let sup = t
        .vertices()
        .iter()
        .zip(t.levels())
        .map(|(v, w)| w - p.dot(v))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((sup - (px - p.dot(x))).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropPsiBound {
    pub holds: bool,
    /// `inf_A p - inf_B p`
    pub lhs: f64,
    /// `(r - s) + (r - s) / (psi(x0) - s) * eps`
    pub rhs: f64,
}

/// Evaluates the slope bound `inf_A p - inf_B p <= r - s + (r-s)/(psi(x0)-s) eps`
/// satisfied by every `eps`-supergradient `p` of `psi` at `x0`.
pub fn prop_psi_bound_check(p: &Point, x0: &Point, eps: f64, t: &TentSpec) -> Result<PropPsiBound> {
    let px = psi(x0, t)?;
    if !px.is_finite() {
        return Err(Error::OutsideHull);
    }
    if (px - t.s).abs() < PSI_S_GUARD {
        return Err(Error::InvalidInput(format!("psi(x0) = {px} is too close to s = {}", t.s)));
    }
    let lhs = inf_linear(p, &t.a)? - inf_linear(p, &t.b)?;
    let rhs = (t.r - t.s) + (t.r - t.s) / (px - t.s) * eps;
    Ok(PropPsiBound { holds: lhs <= rhs + TOL_CHECK, lhs, rhs })
}
