//! Catalog of lower semicontinuous test functions with value and
//! subgradient-representative oracles.
//!
//! Subdifferentials are exposed as finite sets of representatives: the
//! gradient at smooth points, extreme points (or, for the norm in `n > 1`,
//! the signed unit vectors) of the convex subdifferential at kinks, and the
//! empty set outside the effective domain.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{classify_point, dist_to_polytope, Point, PointClass, Polytope, BOUNDARY_TOL};
use crate::linalg::{dot, norm};

/// Slack allowed by [`eps_subdiff_check`].
pub const TOL_CHECK: f64 = 1e-7;
/// Pieces of a max-affine function within this (relative) distance of the
/// maximum count as active.
pub const ACTIVE_TOL: f64 = 1e-9;
/// `||x - center||` below which the norm is treated as being at its kink.
pub const KINK_TOL: f64 = 1e-12;
/// Distance to a polytope domain still counted as inside.
pub const DOMAIN_TOL: f64 = 1e-10;

/// Effective domain of a restricted function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    All,
    Polytope { vertices: Polytope },
    /// `{x : <normal, x> <= offset}`
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `C = closure([A,B]_delta)`. Subgradients are only reported in its
    /// interior.
    Inflated { a: Polytope, b: Polytope, delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Membership {
    Interior,
    /// In the domain but possibly on its boundary; subgradients are still
    /// reported.
    Closed,
    /// On the boundary of `C`; no subgradients are reported.
    Guarded,
    Outside,
}

impl Domain {
    fn membership(&self, x: &Point) -> Result<Membership> {
        Ok(match self {
            Domain::All => Membership::Interior,
            Domain::Polytope { vertices } => {
                if dist_to_polytope(x, vertices)? <= DOMAIN_TOL {
                    Membership::Closed
                } else {
                    Membership::Outside
                }
            }
            Domain::HalfSpace { normal, offset } => {
                check_dim(normal.len(), x.dim())?;
                let v = dot(normal, x);
                if v < offset - DOMAIN_TOL {
                    Membership::Interior
                } else if v <= offset + DOMAIN_TOL {
                    Membership::Closed
                } else {
                    Membership::Outside
                }
            }
            Domain::Inflated { a, b, delta } => match classify_point(x, a, b, *delta, BOUNDARY_TOL)? {
                PointClass::Interior => Membership::Interior,
                PointClass::Boundary => Membership::Guarded,
                PointClass::Exterior => Membership::Outside,
            },
        })
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Domain::All => None,
            Domain::Polytope { vertices } => Some(vertices.dim()),
            Domain::HalfSpace { normal, .. } => Some(normal.len()),
            Domain::Inflated { a, .. } => Some(a.dim()),
        }
    }
}

/// A catalog member, selected in problem files by `{"id": ..., "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `<a, x> + b`
    Linear {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
    },
    /// `1/2 <Q x, x> + <a, x> + c`, `Q` positive semidefinite.
    Quadratic {
        q: Vec<Vec<f64>>,
        a: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    /// `||x - center||`
    Norm { center: Vec<f64> },
    /// `max_i (<slopes_i, x> + offsets_i)`
    MaxAffine { slopes: Vec<Vec<f64>>, offsets: Vec<f64> },
    /// `amp sin(<w, x>) + 1/2 <Q x, x> + <a, x> + c`
    SinQuadratic {
        amp: f64,
        w: Vec<f64>,
        q: Vec<Vec<f64>>,
        a: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    /// `inner` plus the indicator of `domain`.
    Restricted { inner: Box<TestFunction>, domain: Domain },
}

fn quad_grad(q: &[Vec<f64>], a: &[f64], x: &[f64]) -> Vec<f64> {
    // gradient of 1/2 <Qx, x> is the symmetric part of Q applied to x
    (0..x.len())
        .map(|i| {
            let sym: f64 = (0..x.len()).map(|j| 0.5 * (q[i][j] + q[j][i]) * x[j]).sum();
            sym + a[i]
        })
        .collect()
}

fn quad_value(q: &[Vec<f64>], a: &[f64], c: f64, x: &[f64]) -> f64 {
    let qx: f64 = (0..x.len()).map(|i| x[i] * dot(&q[i], x)).sum();
    0.5 * qx + dot(a, x) + c
}

fn box_corners(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect()
}

fn all_finite(vals: &[f64]) -> bool {
    vals.iter().all(|v| v.is_finite())
}

impl TestFunction {
    /// Checks parameter shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("function parameters: {what}")));
        let square = |q: &[Vec<f64>], n: usize| q.len() == n && q.iter().all(|r| r.len() == n && all_finite(r));
        match self {
            TestFunction::Linear { a, b } => {
                if a.is_empty() || !all_finite(a) || !b.is_finite() {
                    return bad("linear needs a finite nonempty `a`");
                }
            }
            TestFunction::Quadratic { q, a, c } => {
                if a.is_empty() || !all_finite(a) || !square(q, a.len()) || !c.is_finite() {
                    return bad("quadratic needs a finite n x n `q` and length-n `a`");
                }
            }
            TestFunction::Norm { center } => {
                if center.is_empty() || !all_finite(center) {
                    return bad("norm needs a finite nonempty `center`");
                }
            }
            TestFunction::MaxAffine { slopes, offsets } => {
                let n = slopes.first().map_or(0, Vec::len);
                if n == 0
                    || slopes.len() != offsets.len()
                    || slopes.iter().any(|s| s.len() != n || !all_finite(s))
                    || !all_finite(offsets)
                {
                    return bad("max-affine needs equally long finite `slopes` and one offset per slope");
                }
            }
            TestFunction::SinQuadratic { amp, w, q, a, c } => {
                let n = w.len();
                if n == 0 || a.len() != n || !all_finite(w) || !all_finite(a) || !square(q, n) || !amp.is_finite() || !c.is_finite() {
                    return bad("sin-quadratic needs finite `w`, `a` of length n and an n x n `q`");
                }
            }
            TestFunction::Restricted { inner, domain } => {
                inner.validate()?;
                if let Some(d) = domain.dim() {
                    check_dim(inner.dim(), d)?;
                }
                match domain {
                    Domain::HalfSpace { normal, offset } if !all_finite(normal) || !offset.is_finite() => {
                        return bad("half-space needs a finite normal and offset");
                    }
                    Domain::Inflated { delta, .. } if !(*delta > 0.0) || !delta.is_finite() => {
                        return bad("inflated domain needs delta > 0");
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Linear { a, .. } | TestFunction::Quadratic { a, .. } => a.len(),
            TestFunction::Norm { center } => center.len(),
            TestFunction::MaxAffine { slopes, .. } => slopes.first().map_or(0, Vec::len),
            TestFunction::SinQuadratic { w, .. } => w.len(),
            TestFunction::Restricted { inner, .. } => inner.dim(),
        }
    }

    /// `f + indicator(domain)`.
    pub fn restricted(self, domain: Domain) -> Self {
        TestFunction::Restricted { inner: Box::new(self), domain }
    }

    /// Whether the member is convex by construction (quadratics assume a
    /// positive semidefinite `Q`).
    pub fn is_convex(&self) -> bool {
        match self {
            TestFunction::SinQuadratic { amp, .. } => *amp == 0.0,
            TestFunction::Restricted { inner, .. } => inner.is_convex(),
            _ => true,
        }
    }

    /// Value at `x`, `+inf` outside the effective domain. Dimensions are not
    /// checked; see [`f_eval`].
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Linear { a, b } => dot(a, x) + b,
            TestFunction::Quadratic { q, a, c } => quad_value(q, a, *c, x),
            TestFunction::Norm { center } => x.iter().zip(center).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt(),
            TestFunction::MaxAffine { slopes, offsets } => slopes
                .iter()
                .zip(offsets)
                .map(|(s, b)| dot(s, x) + b)
                .fold(f64::NEG_INFINITY, f64::max),
            TestFunction::SinQuadratic { amp, w, q, a, c } => amp * dot(w, x).sin() + quad_value(q, a, *c, x),
            TestFunction::Restricted { inner, domain } => match domain.membership(&Point(x.to_vec())) {
                Ok(Membership::Outside) | Err(_) => f64::INFINITY,
                Ok(_) => inner.value(x),
            },
        }
    }

    /// Subgradient representatives at `x`. Dimensions are not checked; see
    /// [`f_subgrad`].
    pub fn subgradients(&self, x: &[f64]) -> Vec<Point> {
        match self {
            TestFunction::Linear { a, .. } => vec![Point(a.clone())],
            TestFunction::Quadratic { q, a, .. } => vec![Point(quad_grad(q, a, x))],
            TestFunction::Norm { center } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(u, v)| u - v).collect();
                let dn = norm(&d);
                if dn > KINK_TOL {
                    vec![Point(d.iter().map(|v| v / dn).collect())]
                } else {
                    let n = x.len();
                    let mut out = Vec::with_capacity(2 * n);
                    for i in 0..n {
                        for sign in [-1.0, 1.0] {
                            let mut e = vec![0.0; n];
                            e[i] = sign;
                            out.push(Point(e));
                        }
                    }
                    out
                }
            }
            TestFunction::MaxAffine { slopes, offsets } => {
                let vals: Vec<f64> = slopes.iter().zip(offsets).map(|(s, b)| dot(s, x) + b).collect();
                let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let tol = ACTIVE_TOL * (1.0 + top.abs());
                let mut out: Vec<Point> = Vec::new();
                for (s, v) in slopes.iter().zip(&vals) {
                    if *v >= top - tol && !out.iter().any(|p| p.0 == *s) {
                        out.push(Point(s.clone()));
                    }
                }
                out
            }
            TestFunction::SinQuadratic { amp, w, q, a, .. } => {
                let cw = amp * dot(w, x).cos();
                let g = quad_grad(q, a, x);
                vec![Point(g.iter().zip(w).map(|(gi, wi)| gi + cw * wi).collect())]
            }
            TestFunction::Restricted { inner, domain } => match domain.membership(&Point(x.to_vec())) {
                Ok(Membership::Interior | Membership::Closed) => inner.subgradients(x),
                _ => Vec::new(),
            },
        }
    }

    /// A Lipschitz constant of `f` on the box `[lo, hi]` (of the inner
    /// function for restricted members).
    pub fn lipschitz_on(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let corners = || box_corners(lo, hi);
        // ||S x + a|| is convex, so its maximum over the box is at a corner
        let quad_bound = |q: &[Vec<f64>], a: &[f64]| {
            corners().iter().map(|x| norm(&quad_grad(q, a, x))).fold(0.0, f64::max)
        };
        match self {
            TestFunction::Linear { a, .. } => norm(a),
            TestFunction::Quadratic { q, a, .. } => quad_bound(q, a),
            TestFunction::Norm { .. } => 1.0,
            TestFunction::MaxAffine { slopes, .. } => slopes.iter().map(|s| norm(s)).fold(0.0, f64::max),
            TestFunction::SinQuadratic { amp, w, q, a, .. } => amp.abs() * norm(w) + quad_bound(q, a),
            TestFunction::Restricted { inner, .. } => inner.lipschitz_on(lo, hi),
        }
    }
}

/// `f(x)`, `+inf` outside `dom f`.
pub fn f_eval(f: &TestFunction, x: &Point) -> Result<f64> {
    check_dim(f.dim(), x.dim())?;
    Ok(f.value(x))
}

/// Subgradient representatives of `f` at `x`; empty outside `dom f`.
pub fn f_subgrad(f: &TestFunction, x: &Point) -> Result<Vec<Point>> {
    check_dim(f.dim(), x.dim())?;
    Ok(f.subgradients(x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubdiffCheck {
    pub ok: bool,
    /// `max_z <p, z - x> - (f(z) - f(x)) - eps` over grid points in `dom f`.
    pub worst: f64,
}

/// Checks `p` in the `eps`-subdifferential of `f` at `x` on `grid`.
pub fn eps_subdiff_check(f: &TestFunction, x: &Point, p: &Point, eps: f64, grid: &[Point]) -> Result<SubdiffCheck> {
    check_dim(f.dim(), p.dim())?;
    let fx = f_eval(f, x)?;
    if !fx.is_finite() {
        return Err(Error::OutsideDomain);
    }
    let mut worst = f64::NEG_INFINITY;
    for z in grid {
        let fz = f_eval(f, z)?;
        if fz.is_finite() {
            worst = worst.max(p.dot(&z.sub(x)) - (fz - fx) - eps);
        }
    }
    Ok(SubdiffCheck { ok: worst <= TOL_CHECK, worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_square() -> TestFunction {
        TestFunction::Quadratic { q: vec![vec![1.0]], a: vec![0.0], c: 0.0 }
    }

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<Point> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| Point::scalar(lo + i as f64 * step)).collect()
    }

    fn members_1d() -> Vec<TestFunction> {
        vec![
            TestFunction::Linear { a: vec![1.0], b: 0.0 },
            TestFunction::Quadratic { q: vec![vec![1.0]], a: vec![-0.3], c: 0.045 },
            TestFunction::Norm { center: vec![0.2] },
            TestFunction::MaxAffine { slopes: vec![vec![0.0], vec![2.0]], offsets: vec![0.0, -1.0] },
            TestFunction::SinQuadratic { amp: 0.05, w: vec![6.0], q: vec![vec![1.0]], a: vec![-0.3], c: 0.0 },
        ]
    }

    #[test]
    fn eval_examples() {
        let lin = TestFunction::Linear { a: vec![1.0], b: 0.0 };
        assert_eq!(f_eval(&lin, &Point::scalar(0.3)).unwrap(), 0.3);
        let nrm = TestFunction::Norm { center: vec![0.0, 0.0] };
        assert_eq!(f_eval(&nrm, &Point(vec![3.0, 4.0])).unwrap(), 5.0);
        let dom = Domain::Polytope { vertices: Polytope::from_coords(vec![vec![-0.25], vec![1.25]]).unwrap() };
        let rq = half_square().restricted(dom);
        assert_eq!(f_eval(&rq, &Point::scalar(2.0)).unwrap(), f64::INFINITY);
        assert_eq!(f_eval(&rq, &Point::scalar(1.0)).unwrap(), 0.5);
        assert!(f_eval(&lin, &Point(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn subgrad_examples() {
        let abs = TestFunction::Norm { center: vec![0.0] };
        let mut s: Vec<f64> = f_subgrad(&abs, &Point::scalar(0.0)).unwrap().iter().map(|p| p[0]).collect();
        s.sort_by(f64::total_cmp);
        assert_eq!(s, vec![-1.0, 1.0]);

        let ma = TestFunction::MaxAffine { slopes: vec![vec![1.0], vec![2.0]], offsets: vec![0.0, -1.0] };
        let s: Vec<f64> = f_subgrad(&ma, &Point::scalar(1.0)).unwrap().iter().map(|p| p[0]).collect();
        assert_eq!(s, vec![1.0, 2.0]);
        assert_eq!(f_subgrad(&ma, &Point::scalar(3.0)).unwrap(), vec![Point::scalar(2.0)]);

        assert_eq!(f_subgrad(&half_square(), &Point::scalar(3.0)).unwrap(), vec![Point::scalar(3.0)]);

        let hs = Domain::HalfSpace { normal: vec![1.0], offset: 1.0 };
        let r = half_square().restricted(hs);
        assert!(f_subgrad(&r, &Point::scalar(1.5)).unwrap().is_empty());
    }

    #[test]
    fn eps_subdiff_examples() {
        let f = half_square();
        let x = Point::scalar(1.0);
        assert!(eps_subdiff_check(&f, &x, &Point::scalar(1.0), 0.0, &grid(-3.0, 3.0, 0.01)).unwrap().ok);
        let out = eps_subdiff_check(&f, &x, &Point::scalar(2.0), 0.0, &grid(-3.0, 3.0, 0.01)).unwrap();
        assert!(!out.ok);
        // the violation (z - 1)(2 - (z + 1)/2) peaks at z = 2 with value 0.5
        assert!((out.worst - 0.5).abs() < 1e-9);
        assert!(eps_subdiff_check(&f, &x, &Point::scalar(1.1), 0.01, &grid(0.8, 1.2, 0.001)).unwrap().ok);

        let dom = Domain::HalfSpace { normal: vec![1.0], offset: 0.0 };
        let r = half_square().restricted(dom);
        assert_eq!(eps_subdiff_check(&r, &x, &Point::scalar(0.0), 0.0, &[]), Err(Error::OutsideDomain));
    }

    #[test]
    fn inflated_domain_hides_boundary_subgradients() {
        let a = Polytope::from_coords(vec![vec![0.0]]).unwrap();
        let b = Polytope::from_coords(vec![vec![1.0]]).unwrap();
        let f1 = TestFunction::Linear { a: vec![1.0], b: 0.0 }.restricted(Domain::Inflated { a, b, delta: 0.5 });
        assert_eq!(f1.value(&[2.0]), f64::INFINITY);
        assert_eq!(f1.value(&[0.0]), 0.0);
        assert_eq!(f1.subgradients(&[0.0]), vec![Point::scalar(1.0)]);
        assert_eq!(f1.value(&[1.5]), 1.5);
        assert!(f1.subgradients(&[1.5]).is_empty());
    }

    #[test]
    fn locality_of_restriction() {
        let dom = Domain::Polytope { vertices: Polytope::from_coords(vec![vec![-0.25], vec![1.25]]).unwrap() };
        for f in members_1d() {
            let r = f.clone().restricted(dom.clone());
            for x in [-0.1, 0.0, 0.2, 0.5, 1.0] {
                assert_eq!(f.subgradients(&[x]), r.subgradients(&[x]), "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn convex_representatives_are_subgradients() {
        let g = grid(-2.0, 2.0, 0.01);
        for f in members_1d().into_iter().filter(TestFunction::is_convex) {
            for x in [-1.0, 0.0, 0.2, 0.5, 1.3] {
                let x = Point::scalar(x);
                for p in f_subgrad(&f, &x).unwrap() {
                    assert!(eps_subdiff_check(&f, &x, &p, 0.0, &g).unwrap().ok, "{f:?} at {x:?}");
                }
            }
        }
        let nonconvex = &members_1d()[4];
        assert!(!nonconvex.is_convex());
        let x = Point::scalar(0.4);
        let local = grid(0.3, 0.5, 0.001);
        let p = &f_subgrad(nonconvex, &x).unwrap()[0];
        // Frechet: the violation shrinks quadratically near x
        assert!(eps_subdiff_check(nonconvex, &x, p, 0.01, &local).unwrap().ok);
    }

    #[test]
    fn lipschitz_bounds_hold_on_grid() {
        let (lo, hi) = (-1.0, 2.0);
        let g = grid(lo, hi, 0.01);
        for f in members_1d() {
            let l = f.lipschitz_on(&[lo], &[hi]);
            for w in g.windows(2) {
                let d = (f.value(&w[1]) - f.value(&w[0])).abs();
                assert!(d <= l * 0.01 + 1e-12, "{f:?}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"id":"max-affine","params":{"slopes":[[0.0],[2.0]],"offsets":[0.0,-1.0]}}"#;
        let f: TestFunction = serde_json::from_str(text).unwrap();
        assert_eq!(f, members_1d()[3]);
        let r = f.restricted(Domain::HalfSpace { normal: vec![1.0], offset: 2.0 });
        let back: TestFunction = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let lin: TestFunction = serde_json::from_str(r#"{"id":"linear","params":{"a":[1.0]}}"#).unwrap();
        lin.validate().unwrap();
        let bad: TestFunction = serde_json::from_str(r#"{"id":"quadratic","params":{"q":[[1.0,0.0]],"a":[0.0]}}"#).unwrap();
        assert!(bad.validate().is_err());
    }

    fn smooth_2d() -> Vec<TestFunction> {
        vec![
            TestFunction::Linear { a: vec![1.0, -0.5], b: 0.2 },
            TestFunction::Quadratic { q: vec![vec![2.0, 0.5], vec![0.5, 1.0]], a: vec![-0.3, 0.1], c: 0.0 },
            TestFunction::SinQuadratic {
                amp: 0.1,
                w: vec![3.0, -2.0],
                q: vec![vec![1.0, 0.0], vec![0.0, 0.5]],
                a: vec![0.0, 0.2],
                c: 1.0,
            },
        ]
    }

    proptest! {
        #[test]
        fn gradients_match_central_differences(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let h = 1e-6;
            for f in smooth_2d() {
                let g = &f.subgradients(&[x0, x1])[0];
                for i in 0..2 {
                    let mut up = vec![x0, x1];
                    let mut dn = vec![x0, x1];
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (f.value(&up) - f.value(&dn)) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() < 1e-5, "{:?}: {} vs {}", f, fd, g[i]);
                }
            }
        }

        #[test]
        fn norm_gradient_away_from_kink(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let f = TestFunction::Norm { center: vec![0.3, -0.1] };
            prop_assume!((x0 - 0.3).hypot(x1 + 0.1) > 1e-3);
            let g = &f.subgradients(&[x0, x1])[0];
            prop_assert!((g.norm() - 1.0).abs() < 1e-12);
            let h = 1e-7;
            let fd = (f.value(&[x0 + h, x1]) - f.value(&[x0 - h, x1])) / (2.0 * h);
            prop_assert!((fd - g[0]).abs() < 1e-5);
        }
    }
}
