//! Points, vertex-represented polytopes and the hull `[A,B]`.
//!
//! All distances are Euclidean. The hull `[A,B]` is parametrized by
//! [`HullCoords`]: nonnegative weights over the vertices of `A` followed by
//! the vertices of `B`, summing to one. Dual vectors share the [`Point`] type
//! through the pairing `p(x) = <p, x>`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, solve, sub};

/// Default tolerance for the ternary boundary classification.
pub const BOUNDARY_TOL: f64 = 1e-7;

/// A point of `R^n` (or a dual vector).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn zeros(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dist(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &[f64]) -> Point {
        Point(sub(&self.0, other))
    }

    pub fn add(&self, other: &[f64]) -> Point {
        Point(self.0.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + t * dir`
    pub fn axpy(&self, t: f64, dir: &[f64]) -> Point {
        Point(self.0.iter().zip(dir).map(|(a, d)| a + t * d).collect())
    }

    /// Lexicographic comparison used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Nonempty convex polytope given by its vertex list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Polytope {
    vertices: Vec<Point>,
}

impl Polytope {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::InvalidInput("polytope needs at least one vertex".into()))?;
        let n = first.dim();
        if n == 0 {
            return Err(Error::InvalidInput("zero-dimensional vertex".into()));
        }
        for v in &vertices {
            check_dim(n, v.dim())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("polytope vertex"));
            }
        }
        Ok(Polytope { vertices })
    }

    pub fn from_coords(coords: Vec<Vec<f64>>) -> Result<Self> {
        Polytope::new(coords.into_iter().map(Point).collect())
    }

    /// A one-vertex polytope.
    pub fn singleton(p: Point) -> Result<Self> {
        Polytope::new(vec![p])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }

    /// Largest Euclidean norm of a vertex, i.e. `sup_{x in S} ||x||`.
    pub fn max_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Polytope {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Polytope::from_coords(v)
    }
}

impl From<Polytope> for Vec<Vec<f64>> {
    fn from(p: Polytope) -> Self {
        p.vertices.into_iter().map(|v| v.0).collect()
    }
}

/// Weights over the vertices of `A` (`gamma`) and `B` (`eta`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCoords {
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
}

impl HullCoords {
    /// Splits a flat weight vector `(gamma, eta)` after `m_a` entries.
    pub fn from_flat(flat: &[f64], m_a: usize) -> Self {
        HullCoords { gamma: flat[..m_a].to_vec(), eta: flat[m_a..].to_vec() }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.eta).copied().collect()
    }

    /// Total weight on `A`.
    pub fn lambda(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// The represented point `sum gamma_i a_i + sum eta_j b_j`.
    pub fn point(&self, a: &Polytope, b: &Polytope) -> Point {
        let mut y = vec![0.0; a.dim()];
        for (w, v) in self.gamma.iter().zip(a.vertices()).chain(self.eta.iter().zip(b.vertices())) {
            for (yi, vi) in y.iter_mut().zip(v.iter()) {
                *yi += w * vi;
            }
        }
        Point(y)
    }

    /// Checks nonnegativity and unit total mass within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let flat = self.flat();
        flat.iter().all(|w| *w >= -tol) && (flat.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Vertices of `A` followed by the vertices of `B`.
pub(crate) fn stacked_vertices<'a>(a: &'a Polytope, b: &'a Polytope) -> Vec<&'a Point> {
    a.vertices().iter().chain(b.vertices()).collect()
}

/// Result of projecting a point onto `[A,B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HullProjection {
    pub distance: f64,
    pub nearest: Point,
    pub coords: HullCoords,
}

/// Euclidean distance from `x` to `[A,B]` with the nearest point and its
/// hull coordinates.
pub fn dist_to_hull(x: &Point, a: &Polytope, b: &Polytope) -> Result<HullProjection> {
    check_dim(a.dim(), b.dim())?;
    check_dim(a.dim(), x.dim())?;
    let shifted: Vec<Vec<f64>> = stacked_vertices(a, b).iter().map(|v| sub(v, x)).collect();
    let weights = min_norm_point(&shifted);
    let coords = HullCoords::from_flat(&weights, a.len());
    let nearest = coords.point(a, b);
    let distance = nearest.dist(x);
    Ok(HullProjection { distance, nearest, coords })
}

/// Distance from `x` to the polytope `s`.
pub fn dist_to_polytope(x: &Point, s: &Polytope) -> Result<f64> {
    Ok(dist_to_hull(x, s, s)?.distance)
}

/// Wolfe's minimum-norm-point algorithm over `conv(points)`. Returns the
/// convex weights of the minimizer.
pub(crate) fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    const Z1: f64 = 1e-13;
    const Z2: f64 = 1e-12;
    let m = points.len();
    let sq: Vec<f64> = points.iter().map(|p| dot(p, p)).collect();
    let max_sq = sq.iter().fold(0.0_f64, |a, b| a.max(*b)).max(f64::MIN_POSITIVE);

    let k0 = (0..m).min_by(|&i, &j| sq[i].total_cmp(&sq[j])).unwrap();
    let mut active: Vec<usize> = vec![k0];
    let mut w: Vec<f64> = vec![1.0];
    let combine = |active: &[usize], w: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; points[0].len()];
        for (&i, &wi) in active.iter().zip(w) {
            for (yk, pk) in y.iter_mut().zip(&points[i]) {
                *yk += wi * pk;
            }
        }
        y
    };
    let mut y = points[k0].clone();

    for _major in 0..(50 * m + 100) {
        let yy = dot(&y, &y);
        let j = (0..m)
            .min_by(|&i, &k| dot(&y, &points[i]).total_cmp(&dot(&y, &points[k])))
            .unwrap();
        if yy - dot(&y, &points[j]) <= Z1 * max_sq || active.contains(&j) {
            break;
        }
        active.push(j);
        w.push(0.0);

        let mut stalled = false;
        for _minor in 0..(m + 5) {
            let alpha = match affine_min_norm(points, &active) {
                Some(a) => a,
                None => {
                    active.pop();
                    w.pop();
                    stalled = true;
                    break;
                }
            };
            if alpha.iter().all(|&a| a > Z2) {
                w = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (wi, ai) in w.iter().zip(&alpha) {
                if *ai <= Z2 && wi - ai > 0.0 {
                    theta = theta.min(wi / (wi - ai));
                }
            }
            for (wi, ai) in w.iter_mut().zip(&alpha) {
                *wi = theta * ai + (1.0 - theta) * *wi;
            }
            let mut k = 0;
            while k < w.len() {
                if w[k] <= Z2 && w.len() > 1 {
                    w.remove(k);
                    active.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
        }
        if stalled {
            break;
        }
        y = combine(&active, &w);
    }

    let mut full = vec![0.0; m];
    for (&i, &wi) in active.iter().zip(&w) {
        full[i] += wi.max(0.0);
    }
    let total: f64 = full.iter().sum();
    full.iter_mut().for_each(|wi| *wi /= total);
    full
}

/// Minimum-norm point of the affine hull of `points[active]`, as affine
/// weights. `None` when the active points are affinely dependent.
fn affine_min_norm(points: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let base = &points[active[0]];
    let diffs: Vec<Vec<f64>> = active[1..].iter().map(|&i| sub(&points[i], base)).collect();
    let d = k - 1;
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for r in 0..d {
        for c in 0..d {
            gram[r * d + c] = dot(&diffs[r], &diffs[c]);
        }
        rhs[r] = -dot(&diffs[r], base);
    }
    let beta = solve(gram, rhs, d, 1e-12)?;
    let mut alpha = Vec::with_capacity(k);
    alpha.push(1.0 - beta.iter().sum::<f64>());
    alpha.extend(beta);
    Some(alpha)
}

/// Ternary position of a point relative to `C = closure([A,B]_delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Interior,
    Boundary,
    Exterior,
}

pub fn classify_point(x: &Point, a: &Polytope, b: &Polytope, delta: f64, tol: f64) -> Result<PointClass> {
    if !(delta > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidInput("classify_point needs delta > 0 and tol > 0".into()));
    }
    let d = dist_to_hull(x, a, b)?.distance;
    Ok(if d < delta - tol {
        PointClass::Interior
    } else if d > delta + tol {
        PointClass::Exterior
    } else {
        PointClass::Boundary
    })
}

/// `inf_{v in S} <p, v>`, attained at a vertex.
pub fn inf_linear(p: &Point, s: &Polytope) -> Result<f64> {
    check_dim(s.dim(), p.dim())?;
    Ok(s.vertices().iter().map(|v| p.dot(v)).fold(f64::INFINITY, f64::min))
}

/// Axis-aligned bounding box `(lo, hi)` of `[A,B]_delta`.
pub fn bounding_box(a: &Polytope, b: &Polytope, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for v in stacked_vertices(a, b) {
        for k in 0..n {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    for k in 0..n {
        lo[k] -= delta;
        hi[k] += delta;
    }
    (lo, hi)
}

/// Per-axis spacing of the sampling grid (zero on degenerate axes).
pub fn grid_spacing(a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> Vec<f64> {
    let (lo, hi) = bounding_box(a, b, delta);
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { (h - l) / (resolution.max(2) - 1) as f64 } else { 0.0 })
        .collect()
}

/// The scalar grid step: the largest per-axis spacing.
pub fn grid_step(a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> f64 {
    grid_spacing(a, b, delta, resolution).into_iter().fold(0.0, f64::max)
}

/// Deterministic grid over the bounding box of `[A,B]_delta`, keeping points
/// within `delta + step` of `[A,B]`, followed by any vertex of `A` or `B` not
/// already on the grid.
pub fn sample_set(a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> Result<Vec<Point>> {
    check_dim(a.dim(), b.dim())?;
    if resolution < 2 {
        return Err(Error::InvalidInput(format!("resolution must be >= 2, got {resolution}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput("delta must be >= 0".into()));
    }
    let n = a.dim();
    let (lo, hi) = bounding_box(a, b, delta);
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            if hi[k] > lo[k] {
                (0..resolution)
                    .map(|i| {
                        if i + 1 == resolution {
                            hi[k]
                        } else {
                            lo[k] + (hi[k] - lo[k]) * i as f64 / (resolution - 1) as f64
                        }
                    })
                    .collect()
            } else {
                vec![lo[k]]
            }
        })
        .collect();
    let step = grid_step(a, b, delta, resolution);
    let keep = delta + step + 1e-12;

    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let p = Point(idx.iter().enumerate().map(|(k, &i)| axes[k][i]).collect());
        if dist_to_hull(&p, a, b)?.distance <= keep {
            out.push(p);
        }
        let mut k = n;
        loop {
            if k == 0 {
                for v in stacked_vertices(a, b) {
                    if !out.iter().any(|q| q == v) {
                        out.push(v.clone());
                    }
                }
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Nearest point of `closure([A,B]_delta)` to `x`.
pub fn project_to_inflated(x: &Point, a: &Polytope, b: &Polytope, delta: f64) -> Result<Point> {
    let proj = dist_to_hull(x, a, b)?;
    if proj.distance <= delta {
        Ok(x.clone())
    } else {
        let dir = x.sub(&proj.nearest);
        Ok(proj.nearest.axpy(delta / proj.distance, &dir))
    }
}

/// [`sample_set`] with every point projected into `closure([A,B]_delta)`.
/// Every point of that set lies within half a grid-cell diagonal of one of
/// these samples.
pub fn projected_samples(a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> Result<Vec<Point>> {
    sample_set(a, b, delta, resolution)?
        .iter()
        .map(|x| project_to_inflated(x, a, b, delta))
        .collect()
}

/// Points on `{x : d(x,[A,B]) = delta}`, obtained by pushing grid points and
/// axis offsets of the vertices radially onto the level set.
pub fn boundary_samples(a: &Polytope, b: &Polytope, delta: f64, resolution: usize) -> Result<Vec<Point>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("boundary samples need delta > 0".into()));
    }
    let n = a.dim();
    let mut seeds = sample_set(a, b, delta, resolution)?;
    for v in stacked_vertices(a, b) {
        for k in 0..n {
            for sign in [-1.0, 1.0] {
                let mut c = v.0.clone();
                c[k] += sign * delta;
                seeds.push(Point(c));
            }
        }
    }
    let mut out: Vec<Point> = Vec::new();
    for x in seeds {
        let proj = dist_to_hull(&x, a, b)?;
        if proj.distance <= 1e-9 {
            continue;
        }
        let dir = x.sub(&proj.nearest);
        let q = proj.nearest.axpy(delta / proj.distance, &dir);
        if !out.iter().any(|o| o.dist(&q) <= 1e-12) {
            out.push(q);
        }
    }
    Ok(out)
}

/// Diameter of `A ∪ B` (largest vertex-to-vertex distance).
pub fn diameter(a: &Polytope, b: &Polytope) -> f64 {
    let vs = stacked_vertices(a, b);
    let mut d: f64 = 0.0;
    for (i, u) in vs.iter().enumerate() {
        for v in &vs[i + 1..] {
            d = d.max(u.dist(v));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(v: &[&[f64]]) -> Polytope {
        Polytope::from_coords(v.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    fn seg() -> (Polytope, Polytope) {
        (poly(&[&[0.0]]), poly(&[&[1.0]]))
    }

    #[test]
    fn distance_examples() {
        let (a, b) = seg();
        let h = dist_to_hull(&Point::scalar(0.5), &a, &b).unwrap();
        assert!(h.distance < 1e-12);
        assert!((h.nearest[0] - 0.5).abs() < 1e-12);
        assert!((h.coords.lambda() - 0.5).abs() < 1e-12);

        let h = dist_to_hull(&Point::scalar(2.0), &a, &b).unwrap();
        assert!((h.distance - 1.0).abs() < 1e-12);
        assert!((h.nearest[0] - 1.0).abs() < 1e-12);

        let a2 = poly(&[&[0.0, 0.0]]);
        let b2 = poly(&[&[2.0, 0.0]]);
        let h = dist_to_hull(&Point(vec![1.0, 1.0]), &a2, &b2).unwrap();
        assert!((h.distance - 1.0).abs() < 1e-12);
        assert!(h.nearest.dist(&[1.0, 0.0]) < 1e-12);
        assert!(h.coords.is_valid(1e-12));
    }

    #[test]
    fn distance_to_square_faces_and_corners() {
        let a = poly(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let b = poly(&[&[2.0, 0.0], &[2.0, 1.0]]);
        let cases = [
            ([1.0, 0.5], 0.0),
            ([-1.0, 0.5], 1.0),
            ([1.0, 3.0], 2.0),
            ([3.0, 2.0], 2f64.sqrt()),
            ([-3.0, -4.0], 5.0),
        ];
        for (x, d) in cases {
            let h = dist_to_hull(&Point(x.to_vec()), &a, &b).unwrap();
            assert!((h.distance - d).abs() < 1e-10, "{x:?}: {} vs {d}", h.distance);
            assert!(h.coords.is_valid(1e-12));
            assert!(h.coords.point(&a, &b).dist(&h.nearest) < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (a, b) = seg();
        assert!(matches!(
            dist_to_hull(&Point(vec![0.0, 0.0]), &a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let (a, b) = seg();
        let c = |x: f64| classify_point(&Point::scalar(x), &a, &b, 0.5, 1e-9).unwrap();
        assert_eq!(c(1.4), PointClass::Interior);
        assert_eq!(c(1.5), PointClass::Boundary);
        assert_eq!(c(1.6), PointClass::Exterior);
    }

    #[test]
    fn inf_linear_examples() {
        let s = poly(&[&[0.0], &[1.0]]);
        assert_eq!(inf_linear(&Point::scalar(1.0), &s).unwrap(), 0.0);
        assert_eq!(inf_linear(&Point::scalar(-1.0), &s).unwrap(), -1.0);
        let t = poly(&[&[0.0, 0.0], &[2.0, 0.0], &[2.0, 2.0]]);
        assert_eq!(inf_linear(&Point(vec![1.0, 2.0]), &t).unwrap(), 0.0);
    }

    #[test]
    fn sample_set_examples() {
        let (a, b) = seg();
        let g: Vec<f64> = sample_set(&a, &b, 0.0, 5).unwrap().iter().map(|p| p[0]).collect();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Vec<f64> = sample_set(&a, &b, 0.5, 5).unwrap().iter().map(|p| p[0]).collect();
        assert_eq!(g, vec![-0.5, 0.0, 0.5, 1.0, 1.5]);
        let a2 = poly(&[&[0.0, 0.0]]);
        let b2 = poly(&[&[1.0, 0.0]]);
        let g: Vec<Vec<f64>> = sample_set(&a2, &b2, 0.0, 3).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(g, vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]);
        assert!(sample_set(&a, &b, 0.0, 1).is_err());
    }

    #[test]
    fn sample_set_contains_vertices_off_grid() {
        let a = poly(&[&[0.0, 0.0], &[0.3, 1.0]]);
        let b = poly(&[&[1.0, 0.1]]);
        let g = sample_set(&a, &b, 0.0, 4).unwrap();
        for v in a.vertices().iter().chain(b.vertices()) {
            assert!(g.contains(v));
        }
    }

    #[test]
    fn boundary_samples_sit_at_distance_delta() {
        let a = poly(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let b = poly(&[&[2.0, 0.0], &[2.0, 1.0]]);
        let pts = boundary_samples(&a, &b, 0.5, 9).unwrap();
        assert!(pts.len() > 10);
        for p in &pts {
            let d = dist_to_hull(p, &a, &b).unwrap().distance;
            assert!((d - 0.5).abs() < 1e-9);
        }
        let (a1, b1) = seg();
        let mut xs: Vec<f64> = boundary_samples(&a1, &b1, 0.5, 11).unwrap().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2);
        assert!((xs[0] + 0.5).abs() < 1e-12 && (xs[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn polytope_json_is_array_of_arrays() {
        let p = poly(&[&[0.0, 1.0], &[2.0, 3.5]]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[0.0,1.0],[2.0,3.5]]");
        let back: Polytope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Polytope>("[]").is_err());
        assert!(serde_json::from_str::<Polytope>("[[0.0],[1.0,2.0]]").is_err());
    }
}
