//! The sup-convolution `phi_K = (-K||.||) * psi`, i.e.
//! `phi_K(x) = sup { psi(y) - K ||x - y|| : y in [A,B] }`.
//!
//! Evaluation maximizes `r sum(gamma) + s sum(eta) - K ||x - y(gamma, eta)||`
//! over the product simplex. Since `psi(y)` is the best decomposition of `y`,
//! optimizing jointly over decompositions gives the supremum over `y`. The
//! result carries a duality gap from the dual problem in [`dual`].

mod dual;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dist_to_hull, sample_set, HullCoords, Point, Polytope};
use crate::linalg::{dot, norm, sub};
use crate::simplex_optim::{maximize_concave, solve_lp, ConcaveObjective, FwOptions, LpOutcome, LpProblem};
use crate::tent::{eps_superdiff_check_psi, psi, SuperdiffCheck, TentSpec};

use dual::DualProblem;

/// `||x - z*||` above which the cone formula is used for supergradients.
pub const TOL_SEP: f64 = 1e-6;
/// Slack allowed when verifying a supergradient of `phi_K` on a grid.
pub const TOL_SUPER: f64 = 1e-4;
/// Step of the central finite differences in the fallback mode.
pub const FD_STEP: f64 = 1e-5;
/// Margin used for the strict inequalities defining `U` and `V`.
pub const UV_MARGIN: f64 = 1e-9;
/// Largest duality gap `phi_eval` accepts before reporting non-convergence.
pub const GAP_LIMIT: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct SupConvSpec {
    pub tent: TentSpec,
    k: f64,
}

impl SupConvSpec {
    pub fn new(tent: TentSpec, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidInput(format!("Lipschitz constant must be finite and > 0, got {k}")));
        }
        Ok(SupConvSpec { tent, k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    fn a(&self) -> &Polytope {
        self.tent.a()
    }

    fn b(&self) -> &Polytope {
        self.tent.b()
    }
}

/// Value of `phi_K` at a point, with a maximizer.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    /// Maximizing `y` (written `z*`).
    pub argmax: Point,
    pub coords: HullCoords,
    /// Duality gap: `phi_K(x)` lies in `[value, value + gap]`.
    pub gap: f64,
    /// Dual vector `v`, `||v|| <= K`; `-v` is a `gap`-supergradient at `x`.
    pub dual: Point,
    /// Dual minimizers found; their negated convex hull lies in the
    /// superdifferential of `phi_K` at `x`.
    pub dual_extremes: Vec<Point>,
}

struct PhiObjective<'a> {
    levels: Vec<f64>,
    vertices: Vec<&'a Point>,
    x: &'a Point,
    k: f64,
}

impl PhiObjective<'_> {
    fn y(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.x.dim()];
        for (w, v) in c.iter().zip(&self.vertices) {
            for (yi, vi) in y.iter_mut().zip(v.iter()) {
                *yi += w * vi;
            }
        }
        y
    }
}

impl ConcaveObjective for PhiObjective<'_> {
    fn value(&self, c: &[f64]) -> f64 {
        dot(&self.levels, c) - self.k * self.x.dist(&self.y(c))
    }

    fn supergradient(&self, c: &[f64]) -> Vec<f64> {
        let diff = sub(self.x, &self.y(c));
        let dn = norm(&diff);
        self.levels
            .iter()
            .zip(&self.vertices)
            .map(|(w, v)| if dn > 0.0 { w + self.k * dot(&diff, v) / dn } else { *w })
            .collect()
    }
}

/// Best decomposition with `y` restricted to the ray `x - t * dir`, `t >= 0`
/// (or `y = x` when `dir` is zero). Returns the vertex weights.
fn ray_lp(obj: &PhiObjective<'_>, dir: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = obj.x.dim();
    let m = obj.vertices.len();
    let dn = norm(dir);
    let use_ray = dn > 0.0;
    let mut objective = obj.levels.clone();
    if use_ray {
        objective.push(-obj.k);
    }
    let mut a_eq: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = obj.vertices.iter().map(|v| v[i]).collect();
            if use_ray {
                row.push(dir[i] / dn);
            }
            row
        })
        .collect();
    let mut sum_row = vec![1.0; m];
    if use_ray {
        sum_row.push(0.0);
    }
    a_eq.push(sum_row);
    let mut b_eq = obj.x.0.clone();
    b_eq.push(1.0);
    match solve_lp(&LpProblem { objective, a_eq, b_eq }) {
        Ok(LpOutcome::Optimal(sol)) => Ok(Some(sol.x[..m].to_vec())),
        Ok(LpOutcome::Infeasible) => Ok(None),
        Err(Error::Unbounded) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluates `phi_K(x)`.
///
/// The dual problem is solved exactly by active-set enumeration; its solution
/// locates a primal maximizer through a small LP, which then seeds the
/// away-step Frank-Wolfe maximizer. `tol` is the Frank-Wolfe gap tolerance.
pub fn phi_eval(x: &Point, sc: &SupConvSpec, tol: f64) -> Result<PhiValue> {
    check_dim(sc.tent.dim(), x.dim())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be > 0".into()));
    }
    let obj = PhiObjective { levels: sc.tent.levels(), vertices: sc.tent.vertices(), x, k: sc.k };
    let dual = DualProblem {
        levels: &obj.levels,
        offsets: obj.vertices.iter().map(|v| sub(v, x)).collect(),
        k: sc.k,
    };
    let dsol = dual.solve();
    let dims = (sc.a().len(), sc.b().len());
    let opts = FwOptions { tol, max_iters: 10_000, stall_iters: 30 };

    let seed = ray_lp(&obj, &dsol.v)?;
    let mut fw = maximize_concave(&obj, dims, opts, seed.as_deref())?;
    let mut gap = (dsol.value - fw.value).max(0.0);
    if gap > GAP_LIMIT || seed.is_none() {
        let cold = maximize_concave(&obj, dims, FwOptions { stall_iters: 200, ..opts }, None)?;
        if cold.value > fw.value {
            fw = cold;
        }
        gap = (dsol.value - fw.value).max(0.0);
    }
    if gap > GAP_LIMIT {
        return Err(Error::NonConvergence { gap, iterations: fw.iterations });
    }
    let argmax = fw.coords.point(sc.a(), sc.b());
    Ok(PhiValue {
        value: fw.value,
        argmax,
        coords: fw.coords,
        gap,
        dual: Point(dsol.v),
        dual_extremes: dsol.extremes.into_iter().map(Point).collect(),
    })
}

/// `phi_K(x)` with the default tolerance.
pub fn phi(x: &Point, sc: &SupConvSpec) -> Result<f64> {
    Ok(phi_eval(x, sc, 1e-10)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupergradientMode {
    /// `-K (x - z*) / ||x - z*||`
    ConeFormula,
    /// Central finite differences, or a dual vector when those fail the check.
    Fallback,
    /// Dual vector nearest to a requested target.
    Dual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Supergradient {
    pub p: Point,
    pub mode: SupergradientMode,
    /// `max_z phi(z) - phi(x) - <p, z - x>` over the verification grid.
    pub worst: f64,
}

/// Grid of points on which supergradient candidates at `x` are checked: a
/// coarse grid over `[A ∪ {x}, B]_0.25` plus small axis offsets around `x`.
pub fn verification_grid(x: &Point, sc: &SupConvSpec) -> Result<Vec<Point>> {
    let mut av: Vec<Point> = sc.a().vertices().to_vec();
    av.push(x.clone());
    let a_ext = Polytope::new(av)?;
    let mut grid = sample_set(&a_ext, sc.b(), 0.25, 9)?;
    for h in [1e-3, 1e-2, 1e-1] {
        for i in 0..x.dim() {
            let mut e = vec![0.0; x.dim()];
            e[i] = h;
            grid.push(x.add(&e));
            grid.push(x.sub(&e));
        }
    }
    Ok(grid)
}

/// `max_z phi_K(z) - phi_K(x) - <p, z - x>` over `grid`; at most
/// [`TOL_SUPER`] for a verified supergradient.
pub fn phi_superdiff_worst(p: &Point, x: &Point, sc: &SupConvSpec, grid: &[Point]) -> Result<f64> {
    check_dim(x.dim(), p.dim())?;
    let fx = phi(x, sc)?;
    worst_superdiff(p, x, fx, sc, grid)
}

fn worst_superdiff(p: &Point, x: &Point, fx: f64, sc: &SupConvSpec, grid: &[Point]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for z in grid {
        let fz = phi(z, sc)?;
        worst = worst.max(fz - fx - p.dot(&z.sub(x)));
    }
    Ok(worst)
}

fn finite_difference(x: &Point, sc: &SupConvSpec) -> Result<Point> {
    let mut g = vec![0.0; x.dim()];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut e = vec![0.0; x.dim()];
        e[i] = FD_STEP;
        *gi = (phi(&x.add(&e), sc)? - phi(&x.sub(&e), sc)?) / (2.0 * FD_STEP);
    }
    Ok(Point(g))
}

/// A supergradient of `phi_K` at `x`, verified on `grid`.
pub fn phi_supergradient(x: &Point, sc: &SupConvSpec, grid: &[Point]) -> Result<Supergradient> {
    let pv = phi_eval(x, sc, 1e-10)?;
    let sep = x.dist(&pv.argmax);
    if sep > TOL_SEP {
        let p = x.sub(&pv.argmax).scale(-sc.k / sep);
        let worst = worst_superdiff(&p, x, pv.value, sc, grid)?;
        return if worst <= TOL_SUPER {
            Ok(Supergradient { p, mode: SupergradientMode::ConeFormula, worst })
        } else {
            Err(Error::SupergradientCheck { worst })
        };
    }
    let fd = finite_difference(x, sc)?;
    let worst = worst_superdiff(&fd, x, pv.value, sc, grid)?;
    if worst <= TOL_SUPER {
        return Ok(Supergradient { p: fd, mode: SupergradientMode::Fallback, worst });
    }
    let p = pv.dual.scale(-1.0);
    let dual_worst = worst_superdiff(&p, x, pv.value, sc, grid)?;
    if dual_worst <= TOL_SUPER {
        Ok(Supergradient { p, mode: SupergradientMode::Fallback, worst: dual_worst })
    } else {
        Err(Error::SupergradientCheck { worst: worst.min(dual_worst) })
    }
}

/// The element of `-conv(dual minimizers)` nearest to `target`, verified on
/// `grid`. At kinks this picks the supergradient that best cancels a given
/// subgradient.
pub fn phi_supergradient_toward(x: &Point, sc: &SupConvSpec, target: &Point, grid: &[Point]) -> Result<Supergradient> {
    check_dim(x.dim(), target.dim())?;
    let pv = phi_eval(x, sc, 1e-10)?;
    let p = nearest_dual_supergradient(&pv, target)?;
    let worst = worst_superdiff(&p, x, pv.value, sc, grid)?;
    if worst <= TOL_SUPER {
        Ok(Supergradient { p, mode: SupergradientMode::Dual, worst })
    } else {
        Err(Error::SupergradientCheck { worst })
    }
}

/// The point of `-conv(pv.dual_extremes)` nearest to `target`. Unverified;
/// it is a `pv.gap`-supergradient by duality.
pub fn nearest_dual_supergradient(pv: &PhiValue, target: &Point) -> Result<Point> {
    let ext = Polytope::new(pv.dual_extremes.clone())?;
    Ok(dist_to_hull(&target.scale(-1.0), &ext, &ext)?.nearest.scale(-1.0))
}

/// Outcome of checking the sup-convolution transfer lemma on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma31Outcome {
    /// `p` passed the superdifferential grid check for `phi_K` at `x`.
    pub premise: bool,
    pub premise_worst: f64,
    /// The `eps`-attaining point used.
    pub y: Point,
    pub conclusion: SuperdiffCheck,
}

impl Lemma31Outcome {
    pub fn holds(&self) -> bool {
        self.premise && self.conclusion.ok
    }
}

/// If `p` is a supergradient of `phi_K` at `x` and
/// `psi(y) - K||x - y|| >= phi_K(x) - eps`, then `p` is an
/// `eps`-supergradient of `psi` at `y`. Checks both sides on `grid`.
pub fn lemma31_check(p: &Point, x: &Point, sc: &SupConvSpec, eps: f64, grid: &[Point]) -> Result<Lemma31Outcome> {
    let pv = phi_eval(x, sc, 1e-10)?;
    let attains = |y: &Point| -> Result<bool> {
        let py = psi(y, &sc.tent)?;
        Ok(py.is_finite() && py - sc.k * x.dist(y) >= pv.value - eps)
    };
    let y = if attains(&pv.argmax)? {
        pv.argmax.clone()
    } else {
        let mut found = None;
        for z in grid {
            if attains(z)? {
                found = Some(z.clone());
                break;
            }
        }
        found.ok_or(Error::NoAttainingPoint)?
    };
    let premise_worst = worst_superdiff(p, x, pv.value, sc, grid)?;
    let conclusion = eps_superdiff_check_psi(p, &y, eps, &sc.tent, grid)?;
    Ok(Lemma31Outcome { premise: premise_worst <= TOL_SUPER, premise_worst, y, conclusion })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UvOutcome {
    pub disjoint: bool,
    /// A grid point in both sets, if any.
    pub witness: Option<Point>,
}

/// Grid of `[A,B]` with cached `psi` values, for repeated `U`/`V` tests.
#[derive(Clone, Debug)]
pub struct UvGrid {
    points: Vec<Point>,
    psi: Vec<f64>,
}

impl UvGrid {
    pub fn new(sc: &SupConvSpec, grid: &[Point]) -> Result<Self> {
        let mut points = Vec::with_capacity(grid.len());
        let mut vals = Vec::with_capacity(grid.len());
        for z in grid {
            let v = psi(z, &sc.tent)?;
            if v.is_finite() {
                points.push(z.clone());
                vals.push(v);
            }
        }
        Ok(UvGrid { points, psi: vals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `U` and `V` membership at every grid point, for the given `phi_K(y)`.
    pub fn disjoint(&self, y: &Point, phi_y: f64, c: f64, k: f64, s_anchor: f64) -> UvOutcome {
        for (z, pz) in self.points.iter().zip(&self.psi) {
            let in_u = pz - k * z.dist(y) > phi_y - c - UV_MARGIN;
            let in_v = (s_anchor - pz).abs() < c + UV_MARGIN;
            if in_u && in_v {
                return UvOutcome { disjoint: false, witness: Some(z.clone()) };
            }
        }
        UvOutcome { disjoint: true, witness: None }
    }
}

/// Checks that no grid point of `[A,B]` lies in both
/// `U = {psi(z) - K||z - y|| > phi_K(y) - c}` and `V = {|s - psi(z)| < c}`.
/// Memberships are decided with margin [`UV_MARGIN`] in favour of membership.
pub fn uv_disjoint(y: &Point, c: f64, sc: &SupConvSpec, s_anchor: f64, grid: &[Point]) -> Result<UvOutcome> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput("c must be > 0".into()));
    }
    let fy = phi(y, sc)?;
    Ok(UvGrid::new(sc, grid)?.disjoint(y, fy, c, sc.k, s_anchor))
}

/// Writes `x..., phi, psi` rows for plotting.
pub fn write_samples_csv<W: Write>(mut out: W, sc: &SupConvSpec, points: &[Point]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(format!("write failed: {e}"));
    let n = sc.tent.dim();
    let header: Vec<String> = (0..n).map(|i| format!("x{i}")).chain(["phi".into(), "psi".into()]).collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for x in points {
        let f = phi(x, sc)?;
        let p = psi(x, &sc.tent)?;
        let mut cols: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        cols.push(f.to_string());
        cols.push(p.to_string());
        writeln!(out, "{}", cols.join(",")).map_err(io)?;
    }
    Ok(())
}
