use serde::{Deserialize, Serialize};

use super::{conclusions, Estimates, PipelineParams, ProblemSpec};
use crate::error::Result;
use crate::functions::f_subgrad;
use crate::geometry::{dist_to_hull, Point};
use crate::oracles::grid_inf;

/// Distance within which `p` must match a subgradient representative.
pub const TOL_REPRESENTATIVE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    /// Positive iff the inequality holds strictly.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub n: usize,
    pub eps: f64,
    pub failure: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Index of the accepted schedule entry.
    pub n: usize,
    pub eps_n: f64,
    /// Certified near-minimizer of `g` and `g(u)`.
    pub u: Point,
    pub g_u: f64,
    pub evp_worst: f64,
    pub grid_inf_g: f64,
    pub y: Point,
    pub q: Point,
    pub residual: f64,
    pub separation: f64,
    /// `f1(x_n) - phi_K(y_n)`
    pub value_gap: f64,
    pub p_check_worst: f64,
    pub q_check_worst: f64,
    /// `delta - d(xi, [A,B])`
    pub interior_margin: f64,
    pub eps_bar: f64,
    pub c_n: f64,
    /// `mu - max phi_K` over sampled boundary points of `C`.
    pub bound_c_margin: f64,
    /// `min g` over sampled boundary points of `C`.
    pub bound_g_min: f64,
    /// `g` at the sampled minimizer of `f` over `A`.
    pub inf_g_witness: f64,
    /// Earlier schedule entries and why they were rejected.
    pub attempts: Vec<Attempt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub boundary_tol: f64,
    pub tol_evp: f64,
    pub tol_super: f64,
    pub uv_margin: f64,
    pub k_residual: f64,
    pub gap_limit: f64,
    pub k_margin: f64,
    pub resolution: usize,
    pub seed: u64,
    pub schedule: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: String,
    pub xi: Point,
    pub p: Point,
    pub f_xi: f64,
    /// `f(xi) < inf_[A,B] f + |r - s| + eps`
    pub eq3: Inequality,
    /// `||p|| < (max{r, s} - mu) / delta + eps`
    pub eq4: Inequality,
    /// `inf_B p - inf_A p > s - r`
    pub eq5: Inequality,
    pub params: PipelineParams,
    pub estimates: Estimates,
    pub diagnostics: Diagnostics,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub valid: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

/// Rechecks a certificate from the problem alone, using the brute-force
/// infima of [`crate::oracles`] and exact linear infima.
pub fn verify_certificate(cert: &Certificate, ps: &ProblemSpec) -> VerifyReport {
    let checks = match recheck(cert, ps) {
        Ok(c) => c,
        Err(e) => vec![Check { name: "evaluation".into(), ok: false, detail: e.to_string() }],
    };
    VerifyReport { valid: checks.iter().all(|c| c.ok), checks }
}

fn recheck(cert: &Certificate, ps: &ProblemSpec) -> Result<Vec<Check>> {
    ps.validate()?;
    let xi = &cert.xi;
    let p = &cert.p;
    let mut out = Vec::new();

    let d = dist_to_hull(xi, &ps.a, &ps.b)?.distance;
    out.push(Check {
        name: "membership".into(),
        ok: d < ps.delta,
        detail: format!("d(xi, [A,B]) = {d} against delta = {}", ps.delta),
    });

    let reps = f_subgrad(&ps.function, xi)?;
    let nearest = reps.iter().map(|q| q.dist(p)).fold(f64::INFINITY, f64::min);
    out.push(Check {
        name: "subgradient".into(),
        ok: nearest <= TOL_REPRESENTATIVE,
        detail: if reps.is_empty() {
            "f has no subgradient at xi".into()
        } else {
            format!("distance from p to the nearest of {} representatives: {nearest:.3e}", reps.len())
        },
    });

    let f_xi = ps.function.value(xi);
    let inf_ab = grid_inf(&ps.function, &ps.a, &ps.b, 0.0, ps.resolution)?;
    let inf_a = grid_inf(&ps.function, &ps.a, &ps.a, 0.0, ps.resolution)?;
    let (r_low, r_high) = (inf_a.value - inf_a.error_bound, inf_a.value);
    let [eq3, eq4, eq5] = conclusions(ps, f_xi, p, inf_ab.value - inf_ab.error_bound, r_low, r_high)?;
    out.push(Check {
        name: "eq3".into(),
        ok: eq3.slack > 0.0,
        detail: format!("f(xi) = {} against inf_[A,B] f + |r - s| + eps >= {} (slack {:.6})", eq3.lhs, eq3.rhs, eq3.slack),
    });
    out.push(Check {
        name: "eq4".into(),
        ok: eq4.slack > 0.0,
        detail: format!("||p|| = {} against (max{{r,s}} - mu)/delta + eps >= {} (slack {:.6})", eq4.lhs, eq4.rhs, eq4.slack),
    });
    out.push(Check {
        name: "eq5".into(),
        ok: eq5.slack > 0.0,
        detail: format!(
            "inf_B p - inf_A p = {} {} s - r <= {} (slack {:.6})",
            eq5.lhs,
            if eq5.slack > 0.0 { ">" } else { "is not >" },
            eq5.rhs,
            eq5.slack
        ),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{run, RunOptions};
    use super::*;

    fn canonical() -> ProblemSpec {
        serde_json::from_str(
            r#"{"function": {"id": "linear", "params": {"a": [1.0]}},
                "A": [[0.0]], "B": [[1.0]], "delta": 0.5, "mu": -0.6, "s": 0.4,
                "epsilon": 0.1, "resolution": 201}"#,
        )
        .unwrap()
    }

    #[test]
    fn tampering_is_detected() {
        let ps = canonical();
        let cert = run(&ps, &RunOptions::default()).unwrap();
        assert!(verify_certificate(&cert, &ps).valid);

        let mut flipped = cert.clone();
        flipped.p = Point::scalar(-1.0);
        let rep = verify_certificate(&flipped, &ps);
        assert!(!rep.valid);
        let eq5 = rep.checks.iter().find(|c| c.name == "eq5").unwrap();
        assert!(!eq5.ok);
        assert!(eq5.detail.starts_with("inf_B p - inf_A p = -1 is not >"), "{}", eq5.detail);

        let mut moved = cert;
        moved.xi = Point::scalar(2.0);
        let rep = verify_certificate(&moved, &ps);
        assert!(!rep.checks.iter().find(|c| c.name == "membership").unwrap().ok);
    }

    #[test]
    fn certificate_json_round_trip() {
        let ps = canonical();
        let cert = run(&ps, &RunOptions::default()).unwrap();
        let text = serde_json::to_string_pretty(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
    }
}
