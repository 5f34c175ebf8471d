//! Euclidean projection onto a polyhedron {y : <a_t, y> <= b_t} by a primal
//! active-set method at desk scale (<= 32 constraints, n <= 8), with a
//! min-norm-point descent phase for feasibility.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::minimax::min_norm_point;
use crate::vecmath::{add_scaled, dot, norm, scale, sub};

pub const MAX_CONSTRAINTS: usize = 32;
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone)]
pub struct PolyhedronDistance {
    /// +infinity when the polyhedron is empty.
    pub distance: f64,
    pub projection: Option<Vec<f64>>,
    pub kkt_residual: f64,
}

fn check_caps(constraints: &[(Vec<f64>, f64)]) -> Result<usize> {
    if constraints.is_empty() {
        return Err(Error::EmptyComponentList);
    }
    let n = constraints[0].0.len();
    if constraints.len() > MAX_CONSTRAINTS {
        return Err(Error::SizeCap {
            what: format!(
                "{} constraints exceeds the projection cap of {MAX_CONSTRAINTS}",
                constraints.len()
            ),
        });
    }
    if n > MAX_DIM {
        return Err(Error::SizeCap {
            what: format!("dimension {n} exceeds the projection cap of {MAX_DIM}"),
        });
    }
    Ok(n)
}

fn violation(constraints: &[(Vec<f64>, f64)], y: &[f64]) -> f64 {
    constraints
        .iter()
        .map(|(a, b)| dot(a, y) - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exact minimizer of the piecewise-linear function s -> max_t (c_t + s g_t)
/// over s > 0. Returns (s, value); s = +inf signals unbounded descent.
fn pl_line_search(c: &[f64], g: &[f64]) -> (f64, f64) {
    let m = c.len();
    let f0 = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Slope of the envelope at s -> infinity is max g over the eventual top
    // lines; if every line has negative slope the envelope is unbounded below.
    if g.iter().all(|&gi| gi < 0.0) {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let mut best_s = 0.0;
    let mut best_v = f0;
    for i in 0..m {
        for j in i + 1..m {
            let dg = g[j] - g[i];
            if dg.abs() < 1e-300 {
                continue;
            }
            let s = (c[i] - c[j]) / dg;
            if s <= 0.0 || !s.is_finite() {
                continue;
            }
            let v = c
                .iter()
                .zip(g)
                .map(|(ci, gi)| ci + s * gi)
                .fold(f64::NEG_INFINITY, f64::max);
            if v < best_v {
                best_v = v;
                best_s = s;
            }
        }
    }
    (best_s, best_v)
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    Point(Vec<f64>),
    Infeasible,
}

/// Min-norm-point steepest descent on the max-violation function, with exact
/// line searches along each direction. Certifies infeasibility when the zero
/// vector enters the hull of the near-active rows at a positive level.
pub fn polyhedron_feasible_point(
    constraints: &[(Vec<f64>, f64)],
    start: &[f64],
) -> Result<Feasibility> {
    let _n = check_caps(constraints)?;
    let scale_b = constraints
        .iter()
        .map(|(a, b)| norm(a).max(b.abs()))
        .fold(1.0_f64, f64::max);
    let feas_tol = 1e-9 * scale_b;
    let mut y = start.to_vec();
    let mut f = violation(constraints, &y);
    if f <= feas_tol {
        return Ok(Feasibility::Point(y));
    }
    let mut eta = 1e-7 * f.abs().max(1.0);
    for _ in 0..2000 {
        if f <= feas_tol {
            return Ok(Feasibility::Point(y));
        }
        let vals: Vec<f64> = constraints.iter().map(|(a, b)| dot(a, &y) - b).collect();
        let active: Vec<usize> = (0..constraints.len())
            .filter(|&t| f - vals[t] <= eta)
            .collect();
        let grads: Vec<Vec<f64>> = active.iter().map(|&t| constraints[t].0.clone()).collect();
        let mnp = min_norm_point(&grads)?;
        if mnp.d <= 1e-10 * scale_b {
            // 0 in conv of active rows: min violation >= f - eta.
            if f - eta > feas_tol {
                return Ok(Feasibility::Infeasible);
            }
            return Ok(Feasibility::Point(y));
        }
        let dir = scale(&mnp.w, -1.0 / mnp.d);
        let g: Vec<f64> = constraints.iter().map(|(a, _)| dot(a, &dir)).collect();
        let (s, v) = pl_line_search(&vals, &g);
        if s.is_infinite() {
            // unbounded descent: jump far enough to be strictly feasible
            let jump = constraints
                .iter()
                .zip(&g)
                .map(|((_, _), gi)| {
                    debug_assert!(*gi < 0.0);
                    0.0_f64
                })
                .count();
            let _ = jump;
            let s_star = vals
                .iter()
                .zip(&g)
                .map(|(ci, gi)| (ci + 1.0) / (-gi))
                .fold(0.0_f64, f64::max);
            y = add_scaled(&y, s_star, &dir);
            f = violation(constraints, &y);
            continue;
        }
        if v < f - 1e-15 * scale_b {
            y = add_scaled(&y, s, &dir);
            f = violation(constraints, &y);
            eta = 1e-7 * f.abs().max(1.0);
        } else if eta > 1e-15 {
            eta *= 0.1;
        } else {
            break;
        }
    }
    if f <= feas_tol {
        Ok(Feasibility::Point(y))
    } else {
        Err(Error::Invalid(
            "feasibility descent stalled without a certificate".into(),
        ))
    }
}

fn solve_working_set(
    constraints: &[(Vec<f64>, f64)],
    working: &[usize],
    x: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    if working.is_empty() {
        return Some((x.to_vec(), vec![]));
    }
    let k = working.len();
    let a = DMatrix::from_fn(k, n, |i, j| constraints[working[i]].0[j]);
    let rhs = DVector::from_fn(k, |i, _| dot(&constraints[working[i]].0, x) - constraints[working[i]].1);
    let gram = &a * a.transpose();
    let lambda = match gram.clone().lu().solve(&rhs) {
        Some(l) => l,
        None => gram.svd(true, true).solve(&rhs, 1e-12).ok()?,
    };
    let correction = a.transpose() * &lambda;
    let z: Vec<f64> = x
        .iter()
        .zip(correction.iter())
        .map(|(xi, ci)| xi - ci)
        .collect();
    Some((z, lambda.as_slice().to_vec()))
}

fn row_independent(constraints: &[(Vec<f64>, f64)], working: &[usize], t: usize) -> bool {
    let rows: Vec<Vec<f64>> = working.iter().map(|&i| constraints[i].0.clone()).collect();
    let basis = crate::vecmath::orthonormal_span(&rows, 1e-10);
    let mut w = constraints[t].0.clone();
    for b in &basis {
        let c = dot(&w, b);
        for (wi, bi) in w.iter_mut().zip(b) {
            *wi -= c * bi;
        }
    }
    norm(&w) > 1e-8 * norm(&constraints[t].0).max(1.0)
}

fn subsets_up_to(m: usize, kmax: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    while let Some(j) = stack.pop() {
        if j.len() < kmax {
            for next in j[j.len() - 1] + 1..m {
                let mut jj = j.clone();
                jj.push(next);
                stack.push(jj);
            }
        }
        out.push(j);
    }
    out
}

/// Nearest point to x on the affine set {y : a_j y = b_j, j in subset},
/// None when the equations are inconsistent.
fn equality_projection(
    constraints: &[(Vec<f64>, f64)],
    subset: &[usize],
    x: &[f64],
    scale_b: f64,
) -> Option<Vec<f64>> {
    let n = x.len();
    let k = subset.len();
    let a = DMatrix::from_fn(k, n, |i, j| constraints[subset[i]].0[j]);
    let rhs = DVector::from_fn(k, |i, _| {
        dot(&constraints[subset[i]].0, x) - constraints[subset[i]].1
    });
    let mu = (a.clone() * a.transpose()).svd(true, true).solve(&rhs, 1e-12).ok()?;
    let shift = a.transpose() * mu;
    let z: Vec<f64> = x.iter().zip(shift.iter()).map(|(xi, s)| xi - s).collect();
    let consistent = subset
        .iter()
        .all(|&t| (dot(&constraints[t].0, &z) - constraints[t].1).abs() <= 1e-7 * scale_b);
    consistent.then_some(z)
}

/// Multiplier residual for a candidate projection: searches the active rows
/// for a nonnegative representation of x - z.
fn kkt_residual_at(
    constraints: &[(Vec<f64>, f64)],
    x: &[f64],
    z: &[f64],
    scale_b: f64,
) -> f64 {
    let n = x.len();
    let active: Vec<usize> = (0..constraints.len())
        .filter(|&t| (dot(&constraints[t].0, z) - constraints[t].1).abs() <= 1e-7 * scale_b)
        .collect();
    let target = DVector::from_fn(n, |i, _| x[i] - z[i]);
    let primal = violation(constraints, z).max(0.0);
    if active.is_empty() {
        return target.norm().max(primal);
    }
    let mut best = f64::INFINITY;
    for subset in subsets_up_to(active.len(), active.len().min(n)) {
        let rows: Vec<usize> = subset.iter().map(|&i| active[i]).collect();
        let k = rows.len();
        let at = DMatrix::from_fn(n, k, |i, j| constraints[rows[j]].0[i]);
        let lambda = match at.clone().svd(true, true).solve(&target, 1e-12) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let stat = (&at * &lambda - &target).norm();
        let dual = lambda.iter().fold(0.0_f64, |m, &l| m.max(-l));
        best = best.min(stat.max(dual));
        if best <= 1e-10 * scale_b {
            break;
        }
    }
    best.max(primal)
}

fn enumerate_projection(
    constraints: &[(Vec<f64>, f64)],
    x: &[f64],
    scale_b: f64,
    act_tol: f64,
) -> Result<PolyhedronDistance> {
    let n = x.len();
    let m = constraints.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for subset in subsets_up_to(m, n.min(m)) {
        let Some(z) = equality_projection(constraints, &subset, x, scale_b) else {
            continue;
        };
        if violation(constraints, &z) > 10.0 * act_tol {
            continue;
        }
        let d = crate::vecmath::dist(x, &z);
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    let (distance, projection) = best.ok_or_else(|| {
        Error::Invalid("no feasible projection candidate among active subsets".into())
    })?;
    let kkt_residual = kkt_residual_at(constraints, x, &projection, scale_b);
    if kkt_residual > 1e-8 * scale_b.max(1.0) {
        return Err(Error::Invalid(format!(
            "projection KKT residual {kkt_residual:.3e} above tolerance"
        )));
    }
    Ok(PolyhedronDistance {
        distance,
        projection: Some(projection),
        kkt_residual,
    })
}

/// Euclidean nearest point of the polyhedron to `x`, with a KKT certificate.
/// Returns distance +infinity when Phase-I certifies emptiness.
pub fn distance_to_polyhedron(
    constraints: &[(Vec<f64>, f64)],
    x: &[f64],
) -> Result<PolyhedronDistance> {
    let n = check_caps(constraints)?;
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
            context: "projection query point".into(),
        });
    }
    let scale_b = constraints
        .iter()
        .map(|(a, b)| norm(a).max(b.abs()))
        .fold(1.0_f64, f64::max);
    let act_tol = 1e-9 * scale_b;

    if violation(constraints, x) <= act_tol {
        return Ok(PolyhedronDistance {
            distance: 0.0,
            projection: Some(x.to_vec()),
            kkt_residual: 0.0,
        });
    }
    let phase1 = match polyhedron_feasible_point(constraints, x)? {
        Feasibility::Infeasible => {
            return Ok(PolyhedronDistance {
                distance: f64::INFINITY,
                projection: None,
                kkt_residual: 0.0,
            })
        }
        Feasibility::Point(p) => p,
    };

    // At desk scale, enumerate candidate active subsets: the optimum's active
    // set is one of them, so the nearest feasible equality projection is the
    // exact answer. Degenerate geometry (collinear opposing rows, zero-width
    // slabs) that stalls an active-set iteration is handled for free.
    let m = constraints.len();
    let kmax = n.min(m);
    let mut subset_count: usize = 0;
    let mut binom: f64 = 1.0;
    for k in 1..=kmax {
        binom = binom * (m - k + 1) as f64 / k as f64;
        subset_count = subset_count.saturating_add(binom as usize);
        if subset_count > 20_000 {
            break;
        }
    }
    if subset_count <= 20_000 {
        return enumerate_projection(constraints, x, scale_b, act_tol);
    }

    let mut y = phase1;

    // Working set: independent subset of the constraints active at y.
    let mut working: Vec<usize> = Vec::new();
    for t in 0..constraints.len() {
        let (a, b) = &constraints[t];
        if (dot(a, &y) - b).abs() <= act_tol && row_independent(constraints, &working, t) {
            working.push(t);
            if working.len() == n {
                break;
            }
        }
    }

    let cap = 200 * constraints.len().max(4);
    let mut lambda: Vec<f64> = vec![];
    for _ in 0..cap {
        let (z, lam) = solve_working_set(constraints, &working, x)
            .ok_or_else(|| Error::Invalid("singular working-set system".into()))?;
        lambda = lam;
        let step = sub(&z, &y);
        if norm(&step) <= 1e-12 * (1.0 + norm(x)) {
            // stationary on the working set; check dual feasibility
            if let Some((i_min, &l_min)) = lambda
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            {
                if l_min < -1e-10 * scale_b {
                    working.remove(i_min);
                    continue;
                }
            }
            y = z;
            break;
        }
        // step toward z, blocked by the nearest violated constraint
        let mut alpha = 1.0_f64;
        let mut blocking: Option<usize> = None;
        for t in 0..constraints.len() {
            if working.contains(&t) {
                continue;
            }
            let (a, b) = &constraints[t];
            let ad = dot(a, &step);
            if ad > 1e-14 * scale_b {
                let at = (b - dot(a, &y)) / ad;
                if at < alpha {
                    alpha = at.max(0.0);
                    blocking = Some(t);
                }
            }
        }
        y = add_scaled(&y, alpha, &step);
        if let Some(t) = blocking {
            if row_independent(constraints, &working, t) {
                working.push(t);
            } else {
                // degenerate pivot: swap out the working constraint that the
                // new row depends on with the largest positive coefficient
                let k = working.len();
                let a = DMatrix::from_fn(k, n, |i, j| constraints[working[i]].0[j]);
                let target = DVector::from_fn(n, |j, _| constraints[t].0[j]);
                if let Ok(mu) = (a.clone() * a.transpose())
                    .svd(true, true)
                    .solve(&(a * target), 1e-12)
                {
                    if let Some((i_max, _)) = mu
                        .iter()
                        .enumerate()
                        .max_by(|p, q| p.1.partial_cmp(q.1).unwrap())
                    {
                        working.remove(i_max);
                        working.push(t);
                    }
                }
            }
        } else if alpha >= 1.0 {
            y = z;
            // full step without blocking constraint: re-check stationarity next loop
        }
    }

    // KKT residual: stationarity + primal feasibility + dual feasibility
    let mut grad_res = sub(&y, x);
    for (i, &t) in working.iter().enumerate() {
        if i < lambda.len() {
            for (g, a) in grad_res.iter_mut().zip(&constraints[t].0) {
                *g += lambda[i] * a;
            }
        }
    }
    let stat = norm(&grad_res);
    let primal = violation(constraints, &y).max(0.0);
    let dual = lambda.iter().copied().fold(0.0_f64, |m, l| m.max(-l));
    let kkt_residual = stat.max(primal).max(dual);
    if kkt_residual > 1e-8 * scale_b.max(1.0) {
        return Err(Error::Invalid(format!(
            "projection KKT residual {kkt_residual:.3e} above tolerance"
        )));
    }
    Ok(PolyhedronDistance {
        distance: crate::vecmath::dist(x, &y),
        projection: Some(y),
        kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_projection() {
        let cons = vec![(vec![1.0, 0.0], 0.0)];
        let r = distance_to_polyhedron(&cons, &[1.0, 0.0]).unwrap();
        assert!((r.distance - 1.0).abs() < 1e-10);
        let p = r.projection.unwrap();
        assert!(p[0].abs() < 1e-10 && p[1].abs() < 1e-10);
    }

    #[test]
    fn interior_point_is_its_own_projection() {
        let cons = vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)];
        let r = distance_to_polyhedron(&cons, &[0.2, -0.3]).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.projection.unwrap(), vec![0.2, -0.3]);
    }

    #[test]
    fn example2_perturbed_wedge() {
        // x1 + 1.1 x2 <= 0, -x1 - 0.9 x2 <= 0 at (-0.1, 0.1): projection (0,0)
        let cons = vec![(vec![1.0, 1.1], 0.0), (vec![-1.0, -0.9], 0.0)];
        let r = distance_to_polyhedron(&cons, &[-0.1, 0.1]).unwrap();
        assert!((r.distance - 0.1 * std::f64::consts::SQRT_2).abs() < 1e-9);
        let p = r.projection.unwrap();
        assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9);
    }

    #[test]
    fn infeasible_pair_returns_infinite_distance() {
        // x <= 0 and x >= 1
        let cons = vec![(vec![1.0], 0.0), (vec![-1.0], -1.0)];
        let r = distance_to_polyhedron(&cons, &[0.5]).unwrap();
        assert!(r.distance.is_infinite());
        assert!(r.projection.is_none());
    }

    #[test]
    fn hyperplane_as_opposing_pair() {
        // x1 + x2 <= 0 and -(x1 + x2) <= 0: the line x1 + x2 = 0
        let cons = vec![(vec![1.0, 1.0], 0.0), (vec![-1.0, -1.0], 0.0)];
        let r = distance_to_polyhedron(&cons, &[1.0, 1.0]).unwrap();
        assert!((r.distance - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn vertex_projection_example1() {
        // project a far point into the corner region of constraints 2 and 3
        let cons = vec![
            (vec![1.0, 1.0], 1.0),
            (vec![-2.0, 1.0], 2.0),
            (vec![1.0, -2.0], 2.0),
        ];
        let r = distance_to_polyhedron(&cons, &[-8.0, -8.0]).unwrap();
        // vertex of constraints 2,3 is (-2,-2)
        let p = r.projection.unwrap();
        assert!((p[0] + 2.0).abs() < 1e-8 && (p[1] + 2.0).abs() < 1e-8);
        assert!((r.distance - 72.0_f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn caps_are_enforced() {
        let cons = vec![(vec![1.0; 9], 0.0)];
        assert!(matches!(
            distance_to_polyhedron(&cons, &[0.0; 9]),
            Err(Error::SizeCap { .. })
        ));
    }
}
