//! Minimization of `g = f1 - phi_K` with a posteriori Ekeland certification,
//! and extraction of nearly cancelling subgradient pairs.

use std::cell::RefCell;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functions::{eps_subdiff_check, TestFunction};
use crate::geometry::{grid_step, projected_samples, Point, Polytope};
use crate::simplex_optim::golden_max;
use crate::supconv::{nearest_dual_supergradient, phi, phi_eval, phi_superdiff_worst, verification_grid, PhiValue, SupConvSpec, TOL_SUPER};

/// Slack allowed by [`evp_verify`].
pub const TOL_EVP: f64 = 1e-6;
/// Fuzzy-pair residuals must be at most this multiple of `eps_n`.
pub const K_RESIDUAL: f64 = 10.0;

/// `eps_n = 10^(-1 - n/2)`, `n = 0..8`.
pub fn default_schedule() -> Vec<f64> {
    (0..9).map(|n| 10f64.powf(-1.0 - n as f64 / 2.0)).collect()
}

/// `g = f1 - phi_K`, `+inf` outside `dom f1`.
pub fn g_value(f1: &TestFunction, sc: &SupConvSpec, x: &Point) -> Result<f64> {
    let fx = f1.value(x);
    if !fx.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(fx - phi(x, sc)?)
}

/// The set `C = closure([A,B]_delta)` and the grid resolution used on it.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub a: Polytope,
    pub b: Polytope,
    pub delta: f64,
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkelandOptions {
    /// Strictly decreasing positive `eps_n`.
    pub schedule: Vec<f64>,
    pub seed: u64,
    /// Number of grid points used as descent seeds.
    pub starts: usize,
    pub max_rounds: usize,
    pub tol_evp: f64,
}

impl Default for EkelandOptions {
    fn default() -> Self {
        EkelandOptions { schedule: default_schedule(), seed: 0, starts: 4, max_rounds: 200, tol_evp: TOL_EVP }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkelandPoint {
    pub u: Point,
    pub eps: f64,
    /// `g(u)`
    pub value: f64,
    /// Result of [`evp_verify`] on the full grid.
    pub evp_worst: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkelandRun {
    pub points: Vec<EkelandPoint>,
    /// Minimum of `g` over the grid of `C`.
    pub grid_inf: f64,
    pub grid: Vec<Point>,
    pub grid_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvpCheck {
    pub ok: bool,
    /// `min_z g(z) + eps ||z - u|| - g(u)` over the grid.
    pub worst: f64,
    pub witness: Option<Point>,
}

fn evp_from_values(u: &Point, gu: f64, eps: f64, grid: &[Point], values: &[f64], tol: f64) -> EvpCheck {
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for (z, gz) in grid.iter().zip(values) {
        let lhs = gz + eps * z.dist(u) - gu;
        if lhs < worst {
            worst = lhs;
            witness = Some(z.clone());
        }
    }
    EvpCheck { ok: worst >= -tol, worst, witness }
}

/// Checks the domination inequality `g(z) + eps ||z - u|| >= g(u) - TOL_EVP`
/// at every grid point.
pub fn evp_verify(u: &Point, eps: f64, f1: &TestFunction, sc: &SupConvSpec, grid: &[Point]) -> Result<EvpCheck> {
    let gu = g_value(f1, sc, u)?;
    if !gu.is_finite() {
        return Err(Error::OutsideDomain);
    }
    let values: Vec<f64> = grid.iter().map(|z| g_value(f1, sc, z)).collect::<Result<_>>()?;
    Ok(evp_from_values(u, gu, eps, grid, &values, TOL_EVP))
}

/// Pattern search along coordinate and random directions with golden-section
/// steps. Values never increase.
pub(crate) fn descend(
    g: &dyn Fn(&Point) -> f64,
    start: &Point,
    h0: f64,
    rng: &mut ChaCha8Rng,
    max_rounds: usize,
) -> (Point, f64) {
    let n = start.dim();
    let mut x = start.clone();
    let mut fx = g(&x);
    let mut h = h0;
    for _ in 0..max_rounds {
        if h < 1e-12 {
            break;
        }
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            dirs.push(e.clone());
            e[i] = -1.0;
            dirs.push(e);
        }
        if n > 1 {
            for _ in 0..n {
                let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if dn > 1e-3 {
                    d.iter_mut().for_each(|v| *v /= dn);
                    dirs.push(d.iter().map(|v| -v).collect());
                    dirs.push(d);
                }
            }
        }
        let mut improved = false;
        for d in &dirs {
            let (t, v) = golden_max(|t| -g(&x.axpy(t, d)), h);
            if t > 0.0 && -v < fx {
                x = x.axpy(t, d);
                fx = -v;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx)
}

/// Minimizes `g = f1 - phi_K` over `C` and returns one certified point per
/// schedule entry.
///
/// The best grid points seed pattern-search descents; the best result is then
/// checked against the domination inequality for each `eps_n` and, when a
/// grid point violates it, descent restarts from that point. Values are
/// nonincreasing along the schedule and the run is deterministic in `seed`.
pub fn minimize_g(f1: &TestFunction, sc: &SupConvSpec, space: &SearchSpace, opts: &EkelandOptions) -> Result<EkelandRun> {
    if opts.schedule.is_empty()
        || opts.schedule.iter().any(|e| !(*e > 0.0) || !e.is_finite())
        || opts.schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidInput("schedule must be strictly decreasing and positive".into()));
    }
    let grid = projected_samples(&space.a, &space.b, space.delta, space.resolution)?;
    let grid_values: Vec<f64> = grid.iter().map(|z| g_value(f1, sc, z)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..grid.len()).filter(|&i| grid_values[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::InconsistentProblem("f1 is +inf on every grid point of C".into()));
    }
    order.sort_by(|&i, &j| grid_values[i].total_cmp(&grid_values[j]).then_with(|| grid[i].lex_cmp(&grid[j])));
    let grid_inf = grid_values[order[0]];

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let g = |x: &Point| -> f64 {
        match g_value(f1, sc, x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let h0 = grid_step(&space.a, &space.b, space.delta, space.resolution).max(1e-6);

    let mut best: Option<(Point, f64)> = None;
    for (k, &i) in order.iter().take(opts.starts.max(1)).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        let (x, v) = descend(&g, &grid[i], h0, &mut rng, opts.max_rounds);
        let better = match &best {
            None => true,
            Some((bx, bv)) => v < *bv || (v == *bv && x.lex_cmp(bx).is_lt()),
        };
        if better {
            best = Some((x, v));
        }
    }
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let (mut u, mut gu) = best.expect("at least one start");

    let mut points = Vec::with_capacity(opts.schedule.len());
    let mut restarts = 0u64;
    for &eps in &opts.schedule {
        let mut check = evp_from_values(&u, gu, eps, &grid, &grid_values, opts.tol_evp);
        let mut attempts = 0;
        while !check.ok {
            if attempts == 10 {
                return Err(Error::Stagnation(format!(
                    "domination inequality still fails for eps = {eps:.3e} (worst {:.3e})",
                    check.worst
                )));
            }
            attempts += 1;
            restarts += 1;
            let z = check.witness.clone().expect("violations have a witness");
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1000 + restarts));
            let (x, v) = descend(&g, &z, h0, &mut rng, opts.max_rounds);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            if v < gu {
                u = x;
                gu = v;
            }
            check = evp_from_values(&u, gu, eps, &grid, &grid_values, opts.tol_evp);
        }
        points.push(EkelandPoint { u: u.clone(), eps, value: gu, evp_worst: check.worst });
    }
    Ok(EkelandRun { points, grid_inf, grid, grid_values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzyPair {
    pub x: Point,
    /// Representative of `∂f1(x)`.
    pub p: Point,
    pub y: Point,
    /// `-p'` for a supergradient `p'` of `phi_K` at `y`.
    pub q: Point,
    pub residual: f64,
    pub separation: f64,
    pub f1_x: f64,
    pub phi_y: f64,
    /// [`eps_subdiff_check`] of `p` on a small grid around `x`.
    pub p_check_worst: f64,
    /// Superdifferential grid check of `-q` at `y`.
    pub q_check_worst: f64,
}

/// Radius of the local grid used to check `p`.
const LOCAL_RADIUS: f64 = 1e-3;

fn local_grid(x: &Point) -> Vec<Point> {
    let mut out = vec![x.clone()];
    for i in 0..x.dim() {
        for k in 1..=10 {
            let mut e = vec![0.0; x.dim()];
            e[i] = LOCAL_RADIUS * k as f64 / 10.0;
            out.push(x.add(&e));
            out.push(x.sub(&e));
        }
    }
    out
}

/// Searches `x, y` among `u` and its axis offsets at `search_radius`
/// times `1e-3, 1e-2, 0.1, 1`, with `p` ranging over the subgradient
/// representatives of `f1` at `x` and `-q` over the supergradients of `phi_K`
/// at `y` nearest to `p`. Returns the pair minimizing
/// `||p + q|| + ||x - y||`, after checking both subgradients on grids.
pub fn fuzzy_pair(u: &EkelandPoint, f1: &TestFunction, sc: &SupConvSpec, search_radius: f64) -> Result<FuzzyPair> {
    let n = u.u.dim();
    let mut cands = vec![u.u.clone()];
    for scale in [1e-3, 1e-2, 1e-1, 1.0] {
        let rho = search_radius * scale;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = sign * rho;
                cands.push(u.u.add(&e));
            }
        }
    }
    let phis: Vec<PhiValue> = cands.iter().map(|y| phi_eval(y, sc, 1e-10)).collect::<Result<_>>()?;

    let mut best: Option<(f64, usize, Point, usize, Point)> = None;
    for (xi, x) in cands.iter().enumerate() {
        if !f1.value(x).is_finite() {
            continue;
        }
        for p in f1.subgradients(x) {
            for (yi, y) in cands.iter().enumerate() {
                let pprime = nearest_dual_supergradient(&phis[yi], &p)?;
                let score = p.dist(&pprime) + x.dist(y);
                if best.as_ref().is_none_or(|b| score < b.0) {
                    best = Some((score, xi, p.clone(), yi, pprime));
                }
            }
        }
    }
    let threshold = K_RESIDUAL * u.eps;
    let Some((_, xi, p, yi, pprime)) = best else {
        return Err(Error::FuzzyPair { best: f64::INFINITY, threshold });
    };
    let residual = p.dist(&pprime);
    if residual > threshold {
        return Err(Error::FuzzyPair { best: residual, threshold });
    }
    let (x, y) = (cands[xi].clone(), cands[yi].clone());
    let p_check = eps_subdiff_check(f1, &x, &p, 1e-6, &local_grid(&x))?;
    let q_check_worst = phi_superdiff_worst(&pprime, &y, sc, &verification_grid(&y, sc)?)?;
    if q_check_worst > TOL_SUPER {
        return Err(Error::SupergradientCheck { worst: q_check_worst });
    }
    Ok(FuzzyPair {
        separation: x.dist(&y),
        f1_x: f1.value(&x),
        phi_y: phis[yi].value,
        p_check_worst: p_check.worst,
        q_check_worst,
        q: pprime.scale(-1.0),
        x,
        p,
        y,
        residual,
    })
}

/// Writes the iteration trace `n, eps, u..., g, residual`; residuals may be
/// missing for entries that were never paired.
pub fn write_trace_csv<W: Write>(mut out: W, points: &[EkelandPoint], residuals: &[Option<f64>]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(format!("write failed: {e}"));
    let n = points.first().map_or(0, |p| p.u.dim());
    let mut header = vec!["n".to_string(), "eps".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    header.extend(["g".to_string(), "residual".to_string()]);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, pt) in points.iter().enumerate() {
        let mut cols = vec![i.to_string(), pt.eps.to_string()];
        cols.extend(pt.u.iter().map(|v| v.to_string()));
        cols.push(pt.value.to_string());
        cols.push(residuals.get(i).copied().flatten().map_or(String::new(), |r| r.to_string()));
        writeln!(out, "{}", cols.join(",")).map_err(io)?;
    }
    Ok(())
}
