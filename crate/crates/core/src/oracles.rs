//! Brute-force reference implementations for testing. Nothing in the pipeline
//! calls these; the psi and phi oracles share no code with the LP or
//! Frank-Wolfe machinery.

use crate::error::{check_dim, Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{bounding_box, grid_spacing, projected_samples, Point, Polytope};
use crate::supconv::SupConvSpec;
use crate::tent::TentSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct GridInf {
    pub value: f64,
    pub argmin: Point,
    /// `inf f` over the set lies in `[value - error_bound, value]`.
    pub error_bound: f64,
}

/// Minimum of `f` over grid samples of `closure([A,B]_delta)`.
///
/// Samples are projected into the set, so the minimum is attained there and
/// overestimates the infimum by at most `Lip(f) * ||spacing||`.
pub fn grid_inf(f: &TestFunction, a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> Result<GridInf> {
    check_dim(f.dim(), a.dim())?;
    let samples = projected_samples(a, b, delta, resolution)?;
    let mut best: Option<(f64, &Point)> = None;
    for x in &samples {
        let v = f.value(x);
        if v.is_finite() && best.is_none_or(|(bv, bx)| v < bv || (v == bv && x.lex_cmp(bx).is_lt())) {
            best = Some((v, x));
        }
    }
    let (value, argmin) = best.ok_or(Error::OutsideDomain)?;
    let (lo, hi) = bounding_box(a, b, delta);
    let diag = grid_spacing(a, b, delta, resolution).iter().map(|h| h * h).sum::<f64>().sqrt();
    Ok(GridInf { value, argmin: argmin.clone(), error_bound: diag * f.lipschitz_on(&lo, &hi) })
}

fn dist_sq(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of planar points, counter-clockwise (monotone chain).
fn hull_2d(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn seg_dist(x: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = d[0] * d[0] + d[1] * d[1];
    let t = if len > 0.0 { (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len).clamp(0.0, 1.0) } else { 0.0 };
    dist_sq(x, &[a[0] + t * d[0], a[1] + t * d[1]]).sqrt()
}

fn polygon_dist(x: &[f64; 2], poly: &[[f64; 2]]) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => dist_sq(x, &poly[0]).sqrt(),
        2 => seg_dist(x, &poly[0], &poly[1]),
        m => {
            let inside = (0..m).all(|i| cross(&poly[i], &poly[(i + 1) % m], x) >= 0.0);
            if inside {
                0.0
            } else {
                (0..m).map(|i| seg_dist(x, &poly[i], &poly[(i + 1) % m])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Gilbert's algorithm: distance from `x` to the hull of `pts`.
fn cloud_dist(x: &[f64], pts: &[Vec<f64>]) -> f64 {
    let mut y = pts[0].clone();
    for _ in 0..2000 {
        let d: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        if dd <= 1e-30 {
            return 0.0;
        }
        let s = pts
            .iter()
            .min_by(|p, q| {
                let fp: f64 = p.iter().zip(&d).map(|(a, b)| a * b).sum();
                let fq: f64 = q.iter().zip(&d).map(|(a, b)| a * b).sum();
                fp.total_cmp(&fq)
            })
            .unwrap();
        let e: Vec<f64> = s.iter().zip(&y).map(|(a, b)| a - b).collect();
        let de: f64 = d.iter().zip(&e).map(|(a, b)| a * b).sum();
        if -de <= 1e-14 * (1.0 + dd) {
            break;
        }
        let ee: f64 = e.iter().map(|v| v * v).sum();
        let t = (-de / ee).min(1.0);
        for (yi, ei) in y.iter_mut().zip(&e) {
            *yi += t * ei;
        }
    }
    dist_sq(&y, x).sqrt()
}

/// Distance from `x` to `lambda conv(A) + (1 - lambda) conv(B)`.
fn minkowski_dist(x: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], lambda: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        let (amin, amax) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v[0]), h.max(v[0])));
        let (bmin, bmax) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v[0]), h.max(v[0])));
        let lo = lambda * amin + (1.0 - lambda) * bmin;
        let hi = lambda * amax + (1.0 - lambda) * bmax;
        return (lo - x[0]).max(x[0] - hi).max(0.0);
    }
    let sums: Vec<Vec<f64>> = a
        .iter()
        .flat_map(|u| b.iter().map(move |v| u.iter().zip(v).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect()))
        .collect();
    if n == 2 {
        let hull = hull_2d(sums.iter().map(|p| [p[0], p[1]]).collect());
        polygon_dist(&[x[0], x[1]], &hull)
    } else {
        cloud_dist(x, &sums)
    }
}

fn coords(p: &Polytope) -> Vec<Vec<f64>> {
    p.vertices().iter().map(|v| v.0.clone()).collect()
}

/// `max lambda r + (1 - lambda) s` over a `resolution`-point grid of `lambda`
/// subject to `x` lying within `step * D` of `lambda A + (1 - lambda) B`,
/// where `D` bounds the distance between points of `A` and `B`. `-inf` when
/// no grid value of `lambda` qualifies.
pub fn psi_brute(x: &Point, t: &TentSpec, resolution: usize) -> Result<f64> {
    check_dim(t.dim(), x.dim())?;
    if resolution < 2 {
        return Err(Error::InvalidInput("resolution must be >= 2".into()));
    }
    let (a, b) = (coords(t.a()), coords(t.b()));
    let span = a.iter().flat_map(|u| b.iter().map(move |v| dist_sq(u, v).sqrt())).fold(0.0, f64::max);
    let step = 1.0 / (resolution - 1) as f64;
    let tol = step * span.max(1.0);
    let mut best = f64::NEG_INFINITY;
    for i in 0..resolution {
        let lambda = i as f64 * step;
        let level = lambda * t.r() + (1.0 - lambda) * t.s();
        if level > best && minkowski_dist(x, &a, &b, lambda) <= tol {
            best = level;
        }
    }
    Ok(best)
}

/// `max psi_brute(y) - K ||x - y||` over a `resolution`-per-axis grid of `y`
/// covering the bounding box of `[A,B]`, plus the vertices.
pub fn phi_brute(x: &Point, sc: &SupConvSpec, resolution: usize) -> Result<f64> {
    let t = &sc.tent;
    check_dim(t.dim(), x.dim())?;
    if resolution < 2 {
        return Err(Error::InvalidInput("resolution must be >= 2".into()));
    }
    let n = t.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let verts: Vec<Vec<f64>> = coords(t.a()).into_iter().chain(coords(t.b())).collect();
    for v in &verts {
        for k in 0..n {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut eval = |y: Vec<f64>| -> Result<()> {
        let p = psi_brute(&Point(y.clone()), t, resolution)?;
        if p.is_finite() {
            best = best.max(p - sc.k() * dist_sq(x, &y).sqrt());
        }
        Ok(())
    };
    let mut idx = vec![0usize; n];
    'grid: loop {
        let y: Vec<f64> = (0..n)
            .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (resolution - 1) as f64)
            .collect();
        eval(y)?;
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < resolution {
                continue 'grid;
            }
            idx[k] = 0;
        }
        break;
    }
    for v in verts {
        eval(v)?;
    }
    Ok(best)
}
