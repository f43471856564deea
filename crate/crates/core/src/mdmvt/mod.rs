//! The mean value inequality pipeline: parameter selection, the restriction
//! `f1` of `f` to `C`, minimization of `g = f1 - phi_K`, and extraction of a
//! certified pair `(xi, p)` with
//!
//! ```text
//! f(xi) < inf_[A,B] f + |r - s| + eps
//! ||p|| < (max{r, s} - mu) / delta + eps
//! inf_B p - inf_A p > s - r
//! ```
//!
//! `r = inf_A f` is only known up to a grid error, so all slacks are computed
//! against the least favourable `r` in the estimate's error interval.

mod certificate;

pub use certificate::{verify_certificate, Certificate, Check, Diagnostics, Attempt, Inequality, Tolerances, VerifyReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ekeland::{descend, fuzzy_pair, minimize_g, EkelandOptions, SearchSpace, K_RESIDUAL, TOL_EVP};
use crate::error::{check_dim, Error, Result};
use crate::functions::{Domain, TestFunction};
use crate::geometry::{
    boundary_samples, bounding_box, dist_to_hull, grid_spacing, inf_linear, project_to_inflated, projected_samples, sample_set, Point,
    Polytope, BOUNDARY_TOL,
};
use crate::supconv::{phi, SupConvSpec, UvGrid, GAP_LIMIT, TOL_SUPER, UV_MARGIN};
use crate::tent::TentSpec;

/// Tolerance for the claim `inf g <= 0`.
pub const TOL_INF_G: f64 = 1e-6;
/// Margin in the strict bound defining `K`.
pub const K_MARGIN: f64 = 1e-9;
/// Bisection steps when searching for `c_n`.
pub const UV_BISECTION_STEPS: usize = 60;

fn default_resolution() -> usize {
    101
}

/// Explicit tent parameters for the sampling commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentOverride {
    pub r: f64,
    pub s: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// A problem file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub function: TestFunction,
    #[serde(rename = "A")]
    pub a: Polytope,
    #[serde(rename = "B")]
    pub b: Polytope,
    pub delta: f64,
    pub mu: f64,
    pub s: f64,
    pub epsilon: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tent: Option<TentOverride>,
}

impl ProblemSpec {
    /// Shape and finiteness checks; the inequalities involving infima are
    /// checked by [`estimate`].
    pub fn validate(&self) -> Result<()> {
        self.function.validate()?;
        check_dim(self.a.dim(), self.b.dim())?;
        check_dim(self.a.dim(), self.function.dim())?;
        let finite = [self.delta, self.mu, self.s, self.epsilon].iter().all(|v| v.is_finite());
        if !finite || !(self.delta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("delta and epsilon must be finite and > 0; mu and s finite".into()));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidInput("resolution must be >= 2".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<f64> {
        self.schedule.clone().unwrap_or_else(crate::ekeland::default_schedule)
    }
}

/// A sampled infimum: the true infimum lies in `[low, value]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfEstimate {
    pub value: f64,
    pub low: f64,
    pub argmin: Point,
}

fn estimate_inf(f: &TestFunction, a: &Polytope, b: &Polytope, delta: f64, resolution: usize, refine: bool) -> Result<InfEstimate> {
    let samples = projected_samples(a, b, delta, resolution)?;
    let mut best: Option<(f64, Point)> = None;
    for x in samples {
        let v = f.value(&x);
        if v.is_finite() && best.as_ref().is_none_or(|(bv, bx)| v < *bv || (v == *bv && x.lex_cmp(bx).is_lt())) {
            best = Some((v, x));
        }
    }
    let (value, argmin) = best.ok_or(Error::OutsideDomain)?;
    let (lo, hi) = bounding_box(a, b, delta);
    let diag = grid_spacing(a, b, delta, resolution).iter().map(|h| h * h).sum::<f64>().sqrt();
    let low = value - diag * f.lipschitz_on(&lo, &hi);
    if !refine || diag == 0.0 {
        return Ok(InfEstimate { value, low, argmin });
    }
    // local descent on f composed with the projection onto the set
    let proj = |x: &Point| project_to_inflated(x, a, b, delta).unwrap_or_else(|_| x.clone());
    let g = |x: &Point| f.value(&proj(x));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (x, v) = descend(&g, &argmin, diag, &mut rng, 200);
    if v < value {
        Ok(InfEstimate { value: v, low: low.min(v), argmin: proj(&x) })
    } else {
        Ok(InfEstimate { value, low, argmin })
    }
}

/// Sampled infima used by the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    /// `inf_A f`, the level `r`.
    pub inf_a: InfEstimate,
    pub inf_ab: InfEstimate,
    pub inf_c: InfEstimate,
    pub inf_b_delta: InfEstimate,
}

/// Estimates the infima and checks the hypotheses `A ∩ dom f ≠ ∅`,
/// `mu < inf_C f` and `s < inf_{B_delta} f` against the estimates.
pub fn estimate(ps: &ProblemSpec) -> Result<Estimates> {
    ps.validate()?;
    let f = &ps.function;
    let res = ps.resolution;
    let inf_a = match estimate_inf(f, &ps.a, &ps.a, 0.0, res, true) {
        Err(Error::OutsideDomain) => return Err(Error::InconsistentProblem("A does not meet dom f".into())),
        other => other?,
    };
    let inf_ab = estimate_inf(f, &ps.a, &ps.b, 0.0, res, false)?;
    let inf_c = estimate_inf(f, &ps.a, &ps.b, ps.delta, res, false)?;
    let inf_b_delta = estimate_inf(f, &ps.b, &ps.b, ps.delta, res, false)?;
    if !(ps.mu < inf_c.value) {
        return Err(Error::InconsistentProblem(format!("mu = {} is not below inf_C f ≈ {}", ps.mu, inf_c.value)));
    }
    if !(ps.s < inf_b_delta.value) {
        return Err(Error::InconsistentProblem(format!("s = {} is not below inf_B_delta f ≈ {}", ps.s, inf_b_delta.value)));
    }
    Ok(Estimates { inf_a, inf_ab, inf_c, inf_b_delta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Estimate of `inf_A f`, used as the level on `A`.
    pub r: f64,
    /// Lower end of the error interval of `r`.
    pub r_low: f64,
    pub s1: f64,
    pub delta1: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// `delta1 = delta (1 - 2^-j)`
    pub j: u32,
}

/// Picks `s1` and `delta1` by the deterministic rule
///
/// * `s1 = s + L/2` with `L = min{eps, eps delta, inf_{B_delta} f - s}`
///   (lower estimate of the infimum), moved to `s + 3L/4` if it collides with
///   the error interval of `r`;
/// * `delta1 = delta (1 - 2^-j)` for the smallest `j >= 1` with
///   `K = (max{r, s1} - mu) / delta1 < (max{r, s} - mu) / delta + eps`.
pub fn choose_params_with(ps: &ProblemSpec, est: &Estimates) -> Result<PipelineParams> {
    let r = est.inf_a.value;
    let r_low = est.inf_a.low;
    let room = est.inf_b_delta.low - ps.s;
    let len = ps.epsilon.min(ps.epsilon * ps.delta).min(room);
    if !(len > 0.0) {
        return Err(Error::InconsistentProblem(format!(
            "empty interval for s1: inf_B_delta f is only known to exceed {}",
            est.inf_b_delta.low
        )));
    }
    let collides = |v: f64| (v - r).abs() <= 1e-9 * (1.0 + r.abs()) || (r_low <= v && v <= r);
    let mut s1 = ps.s + 0.5 * len;
    if collides(s1) {
        s1 = ps.s + 0.75 * len;
    }
    if collides(s1) || !(s1 > ps.s) {
        return Err(Error::InconsistentProblem("could not place s1 away from r".into()));
    }
    let top = r.max(s1) - ps.mu;
    let bound = (r.max(ps.s) - ps.mu) / ps.delta + ps.epsilon;
    if !(top > 0.0) {
        return Err(Error::InconsistentProblem("max{r, s1} must exceed mu".into()));
    }
    for j in 1..=60u32 {
        let delta1 = ps.delta * (1.0 - 0.5f64.powi(j as i32));
        let k = top / delta1;
        if k < bound - K_MARGIN {
            return Ok(PipelineParams { r, r_low, s1, delta1, k, j });
        }
    }
    Err(Error::InconsistentProblem("no delta1 < delta satisfies the bound on K".into()))
}

/// [`estimate`] followed by [`choose_params_with`].
pub fn choose_params(ps: &ProblemSpec) -> Result<PipelineParams> {
    choose_params_with(ps, &estimate(ps)?)
}

/// `f1 = f` on `C = closure([A,B]_delta)`, `+inf` elsewhere. Subgradients are
/// only reported in the interior of `C`.
pub fn restrict_f(f: &TestFunction, a: &Polytope, b: &Polytope, delta: f64) -> TestFunction {
    f.clone().restricted(Domain::Inflated { a: a.clone(), b: b.clone(), delta })
}

/// The sup-convolution built from the pipeline parameters.
pub fn build_supconv(ps: &ProblemSpec, params: &PipelineParams) -> Result<SupConvSpec> {
    SupConvSpec::new(TentSpec::new(ps.a.clone(), ps.b.clone(), params.r, params.s1)?, params.k)
}

/// Distance from `s` to `[lo, hi]`, the least `|r' - s|` over the interval.
fn dist_to_interval(s: f64, lo: f64, hi: f64) -> f64 {
    if s < lo {
        lo - s
    } else if s > hi {
        s - hi
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub tol_evp: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { tol_evp: TOL_EVP }
    }
}

/// Largest `c` in `(0, c_max]` (up to bisection accuracy) with `U ∩ V`
/// empty on the grid.
fn find_c(uv: &UvGrid, y: &Point, phi_y: f64, c_max: f64, k: f64, s1: f64) -> Option<f64> {
    if uv.disjoint(y, phi_y, c_max, k, s1).disjoint {
        return Some(c_max);
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..UV_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if uv.disjoint(y, phi_y, mid, k, s1).disjoint {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// Conservative values of the three conclusions for `(xi, p)`.
pub(crate) fn conclusions(
    ps: &ProblemSpec,
    f_xi: f64,
    p: &Point,
    inf_ab_low: f64,
    r_low: f64,
    r_high: f64,
) -> Result<[Inequality; 3]> {
    let eq3_rhs = inf_ab_low + dist_to_interval(ps.s, r_low, r_high) + ps.epsilon;
    let eq4_rhs = (r_low.max(ps.s) - ps.mu) / ps.delta + ps.epsilon;
    let spread = inf_linear(p, &ps.b)? - inf_linear(p, &ps.a)?;
    let eq5_rhs = ps.s - r_low;
    Ok([
        Inequality { lhs: f_xi, rhs: eq3_rhs, slack: eq3_rhs - f_xi },
        Inequality { lhs: p.norm(), rhs: eq4_rhs, slack: eq4_rhs - p.norm() },
        Inequality { lhs: spread, rhs: eq5_rhs, slack: spread - eq5_rhs },
    ])
}

/// Runs the full pipeline and returns the certificate of the first schedule
/// entry that passes every check.
pub fn run(ps: &ProblemSpec, opts: &RunOptions) -> Result<Certificate> {
    let est = estimate(ps)?;
    let params = choose_params_with(ps, &est)?;
    let sc = build_supconv(ps, &params)?;
    let res = ps.resolution;

    let bnd = boundary_samples(&ps.a, &ps.b, ps.delta, res)?;
    let mut max_phi_bnd = f64::NEG_INFINITY;
    let mut min_g_bnd = f64::INFINITY;
    for x in &bnd {
        let fx = phi(x, &sc)?;
        max_phi_bnd = max_phi_bnd.max(fx);
        min_g_bnd = min_g_bnd.min(ps.function.value(x) - fx);
    }
    let bound_c_margin = ps.mu - max_phi_bnd;
    if !(bound_c_margin > 0.0) {
        return Err(Error::InconsistentProblem(format!("phi_K reaches {max_phi_bnd} >= mu on the boundary of C")));
    }
    if !(min_g_bnd > 0.0) {
        return Err(Error::InconsistentProblem(format!("g is not positive on the boundary of C (min {min_g_bnd})")));
    }
    let f1 = restrict_f(&ps.function, &ps.a, &ps.b, ps.delta);
    let witness = est.inf_a.argmin.clone();
    let inf_g_witness = f1.value(&witness) - phi(&witness, &sc)?;
    if !(inf_g_witness <= TOL_INF_G) {
        return Err(Error::InconsistentProblem(format!("g({witness:?}) = {inf_g_witness} > 0; r looks misestimated")));
    }

    let schedule = ps.schedule();
    let ek_opts = EkelandOptions { schedule: schedule.clone(), seed: ps.seed, tol_evp: opts.tol_evp, ..Default::default() };
    let space = SearchSpace { a: ps.a.clone(), b: ps.b.clone(), delta: ps.delta, resolution: res };
    let ek = minimize_g(&f1, &sc, &space, &ek_opts)?;

    let eps_bar = 0.5
        * (est.inf_c.low - ps.mu)
            .min(est.inf_b_delta.low - params.s1)
            .min((ps.delta - params.delta1) / (1.0 + 1.0 / params.k));
    let uv = UvGrid::new(&sc, &sample_set(&ps.a, &ps.b, 0.0, res)?)?;
    let c_max = (params.r - params.s1).abs();

    let mut attempts = Vec::new();
    for (n, pt) in ek.points.iter().enumerate() {
        let mut fail = |why: String| attempts.push(Attempt { n, eps: pt.eps, failure: why });
        let pair = match fuzzy_pair(pt, &f1, &sc, pt.eps.min(eps_bar)) {
            Ok(p) => p,
            Err(e) => {
                fail(format!("fuzzy pair: {e}"));
                continue;
            }
        };
        let margin = ps.delta - dist_to_hull(&pair.x, &ps.a, &ps.b)?.distance;
        if !(margin > BOUNDARY_TOL) {
            fail(format!("x_n not interior to C (margin {margin:.3e})"));
            continue;
        }
        let value_gap = pair.f1_x - pair.phi_y;
        if !(pair.separation < eps_bar && value_gap < eps_bar) {
            fail(format!(
                "closeness condition fails: ||x - y|| = {:.3e}, f1(x) - phi(y) = {value_gap:.3e}, eps_bar = {eps_bar:.3e}",
                pair.separation
            ));
            continue;
        }
        let Some(c_n) = find_c(&uv, &pair.y, pair.phi_y, c_max, params.k, params.s1) else {
            fail("no c_n > 0 separates U and V on the grid".into());
            continue;
        };
        let f_xi = ps.function.value(&pair.x);
        let [eq3, eq4, eq5] = conclusions(ps, f_xi, &pair.p, est.inf_ab.low, params.r_low, params.r)?;
        let failing: Vec<&str> = [("eq3", &eq3), ("eq4", &eq4), ("eq5", &eq5)]
            .iter()
            .filter(|(_, q)| !(q.slack > 0.0))
            .map(|(name, _)| *name)
            .collect();
        if !failing.is_empty() {
            fail(format!("non-positive slack in {}", failing.join(", ")));
            continue;
        }
        let diagnostics = Diagnostics {
            n,
            eps_n: pt.eps,
            u: pt.u.clone(),
            g_u: pt.value,
            evp_worst: pt.evp_worst,
            grid_inf_g: ek.grid_inf,
            y: pair.y.clone(),
            q: pair.q.clone(),
            residual: pair.residual,
            separation: pair.separation,
            value_gap,
            p_check_worst: pair.p_check_worst,
            q_check_worst: pair.q_check_worst,
            interior_margin: margin,
            eps_bar,
            c_n,
            bound_c_margin,
            bound_g_min: min_g_bnd,
            inf_g_witness,
            attempts,
        };
        return Ok(Certificate {
            version: env!("CARGO_PKG_VERSION").to_string(),
            xi: pair.x,
            p: pair.p,
            f_xi,
            eq3,
            eq4,
            eq5,
            params,
            estimates: est,
            diagnostics,
            tolerances: Tolerances {
                boundary_tol: BOUNDARY_TOL,
                tol_evp: opts.tol_evp,
                tol_super: TOL_SUPER,
                uv_margin: UV_MARGIN,
                k_residual: K_RESIDUAL,
                gap_limit: GAP_LIMIT,
                k_margin: K_MARGIN,
                resolution: res,
                seed: ps.seed,
                schedule,
            },
        });
    }
    let summary: Vec<String> = attempts.iter().map(|a| format!("n={} (eps {:.1e}): {}", a.n, a.eps, a.failure)).collect();
    Err(Error::NoCertificate(summary.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn canonical() -> ProblemSpec {
        serde_json::from_str(
            r#"{"function": {"id": "linear", "params": {"a": [1.0]}},
                "A": [[0.0]], "B": [[1.0]], "delta": 0.5, "mu": -0.6, "s": 0.4,
                "epsilon": 0.1, "resolution": 201, "seed": 7}"#,
        )
        .unwrap()
    }

    #[test]
    fn canonical_params() {
        let p = choose_params(&canonical()).unwrap();
        assert_eq!(p.r, 0.0);
        assert!((p.s1 - 0.425).abs() < 1e-12);
        // j = 6 is the first with K below 2.1
        assert_eq!(p.j, 6);
        assert!((p.delta1 - 0.4921875).abs() < 1e-15);
        assert!((p.k - 1.025 / 0.4921875).abs() < 1e-12);
        assert!(p.k < 2.1);
        // |r - s1| < |r - s| + eps
        assert!((p.r - p.s1).abs() < (p.r - 0.4f64).abs() + 0.1);
    }

    #[test]
    fn collision_with_r_moves_s1() {
        let mut ps = canonical();
        ps.function = TestFunction::Linear { a: vec![1.0], b: 0.425 };
        ps.mu = -0.2;
        let p = choose_params(&ps).unwrap();
        assert_eq!(p.r, 0.425);
        assert!((p.s1 - 0.4375).abs() < 1e-12);
        assert!(p.s1 > ps.s && p.s1 < ps.s + 0.05);
    }

    #[test]
    fn huge_epsilon_caps_s1_below_infimum() {
        let mut ps = canonical();
        ps.epsilon = 10.0;
        let est = estimate(&ps).unwrap();
        let p = choose_params_with(&ps, &est).unwrap();
        assert!(p.s1 < est.inf_b_delta.low);
        assert!((p.s1 - (0.4 + 0.5 * (est.inf_b_delta.low - 0.4))).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_are_checked() {
        let mut ps = canonical();
        ps.mu = -0.4;
        assert!(matches!(choose_params(&ps), Err(Error::InconsistentProblem(_))));
        let mut ps = canonical();
        ps.s = 0.6;
        assert!(matches!(choose_params(&ps), Err(Error::InconsistentProblem(_))));
        let mut ps = canonical();
        ps.function = ps.function.restricted(Domain::HalfSpace { normal: vec![1.0], offset: -1.0 });
        assert!(matches!(estimate(&ps), Err(Error::InconsistentProblem(_))));
        let mut ps = canonical();
        ps.delta = 0.0;
        assert!(matches!(estimate(&ps), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn restriction_examples() {
        let ps = canonical();
        let f1 = restrict_f(&ps.function, &ps.a, &ps.b, ps.delta);
        assert_eq!(f1.value(&[2.0]), f64::INFINITY);
        assert_eq!((f1.value(&[0.0]), f1.subgradients(&[0.0])), (0.0, vec![Point::scalar(1.0)]));
        assert_eq!(f1.value(&[1.5]), 1.5);
        assert!(f1.subgradients(&[1.5]).is_empty());
    }

    #[test]
    fn canonical_certificate() {
        let ps = canonical();
        let cert = run(&ps, &RunOptions::default()).unwrap();
        assert!((cert.p[0] - 1.0).abs() < 1e-6);
        assert!(cert.eq5.slack >= 0.59, "{:?}", cert.eq5);
        assert!(cert.eq4.slack >= 1.09, "{:?}", cert.eq4);
        assert!(cert.eq3.slack > 0.0);
        assert!(cert.diagnostics.bound_c_margin > 0.0);
        let report = verify_certificate(&cert, &ps);
        assert!(report.valid, "{report:?}");
    }

    #[test]
    fn eq4_bound_is_monotone_in_epsilon() {
        let ps = canonical();
        let p = Point::scalar(1.0);
        let mut last = f64::INFINITY;
        for eps in [1.0, 0.5, 0.1, 0.01, 0.001] {
            let mut q = ps.clone();
            q.epsilon = eps;
            let [_, eq4, _] = conclusions(&q, 0.0, &p, 0.0, 0.0, 0.0).unwrap();
            assert!(eq4.rhs <= last);
            last = eq4.rhs;
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let ps = canonical();
        let text = serde_json::to_string(&ps).unwrap();
        assert_eq!(serde_json::from_str::<ProblemSpec>(&text).unwrap(), ps);
        assert!(serde_json::from_str::<ProblemSpec>(r#"{"function": {"id": "linear", "params": {"a": [1.0]}}}"#).is_err());
    }
}
