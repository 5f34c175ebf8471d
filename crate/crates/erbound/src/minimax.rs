//! The central minimax quantity gamma(J, x) = inf_{||h||=1} max_{t in J}
//! <grad f_t(x), h>, computed exactly through min-norm-point / inradius
//! duality, with a brute-force sphere oracle for cross-checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::System;
use crate::vecmath::{
    add_scaled, dot, lex_less, lex_min_unit_in_span, norm, normalize, orthonormal_complement,
    orthonormal_span, scale, sub,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Branch {
    NegativeViaMinNormPoint,
    NonnegativeViaInradius,
    SphereSearch,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::NegativeViaMinNormPoint => write!(f, "negative_via_min_norm_point"),
            Branch::NonnegativeViaInradius => write!(f, "nonnegative_via_inradius"),
            Branch::SphereSearch => write!(f, "sphere_search"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Certificate {
    MinNormPoint { w: Vec<f64>, residual: f64 },
    Facet { normal: Vec<f64>, offset: f64 },
    GridResolution { resolution: usize },
}

#[derive(Debug, Clone)]
pub struct MinimaxResult {
    pub value: f64,
    pub direction: Vec<f64>,
    pub branch: Branch,
    pub certificate: Certificate,
    pub zero_tolerance: f64,
}

// ---------------------------------------------------------------------------
// Wolfe's min-norm-point algorithm over a convex hull of finitely many points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MinNormPoint {
    pub w: Vec<f64>,
    pub d: f64,
    /// min_p <w, p - w>; optimality certificate when >= -1e-10 * scale.
    pub residual: f64,
    pub certified: bool,
    pub iterations: usize,
}

fn affine_min_norm(points: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    // minimize ||sum alpha_i p_i||^2 subject to sum alpha_i = 1
    let m = corral.len();
    let mut kkt = nalgebra::DMatrix::zeros(m + 1, m + 1);
    for (i, &pi) in corral.iter().enumerate() {
        for (j, &pj) in corral.iter().enumerate() {
            kkt[(i, j)] = dot(&points[pi], &points[pj]);
        }
        kkt[(i, m)] = 1.0;
        kkt[(m, i)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(m + 1);
    rhs[m] = 1.0;
    match kkt.clone().lu().solve(&rhs) {
        Some(sol) => Some(sol.as_slice()[..m].to_vec()),
        None => {
            let svd = kkt.svd(true, true);
            svd.solve(&rhs, 1e-12)
                .ok()
                .map(|sol| sol.as_slice()[..m].to_vec())
        }
    }
}

/// Nearest point of conv(points) to the origin (Wolfe's algorithm).
pub fn min_norm_point(points: &[Vec<f64>]) -> Result<MinNormPoint> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n = points[0].len();
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: points.iter().find(|p| p.len() != n).unwrap().len(),
            context: "min_norm_point".into(),
        });
    }
    let scale_sq = points
        .iter()
        .map(|p| dot(p, p))
        .fold(1.0_f64, f64::max);
    let opt_tol = 1e-12 * scale_sq;
    let cert_tol = 1e-10 * scale_sq.max(1.0);

    // start from the shortest point
    let start = (0..points.len())
        .min_by(|&a, &b| {
            dot(&points[a], &points[a])
                .partial_cmp(&dot(&points[b], &points[b]))
                .unwrap()
        })
        .unwrap();
    let mut corral: Vec<usize> = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let cap = 10 * points.len() * n.max(1);
    let mut w: Vec<f64>;
    let mut iterations = 0;

    for it in 0..cap {
        iterations = it + 1;
        // w = sum lambda_i p_i over corral
        w = vec![0.0; n];
        for (&idx, &l) in corral.iter().zip(&lambda) {
            for (wi, pi) in w.iter_mut().zip(&points[idx]) {
                *wi += l * pi;
            }
        }
        let ww = dot(&w, &w);
        // most violated vertex
        let j = (0..points.len())
            .min_by(|&a, &b| {
                dot(&w, &points[a])
                    .partial_cmp(&dot(&w, &points[b]))
                    .unwrap()
            })
            .unwrap();
        if dot(&w, &points[j]) >= ww - opt_tol {
            break;
        }
        if corral.contains(&j) {
            break; // numerical stall
        }
        corral.push(j);
        lambda.push(0.0);
        // minor cycle
        loop {
            let alpha = match affine_min_norm(points, &corral) {
                Some(a) => a,
                None => break,
            };
            if alpha.iter().all(|&a| a > 1e-12) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-12 && (l - a).abs() > 1e-300 {
                    theta = theta.min(l / (l - a));
                }
            }
            let theta = theta.clamp(0.0, 1.0);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let keep: Vec<usize> = (0..corral.len())
                .filter(|&i| lambda[i] > 1e-12)
                .collect();
            if keep.len() == corral.len() {
                // nothing dropped; avoid infinite minor loop
                lambda = alpha;
                break;
            }
            corral = keep.iter().map(|&i| corral[i]).collect();
            lambda = keep.iter().map(|&i| lambda[i]).collect();
            let total: f64 = lambda.iter().sum();
            if total > 0.0 {
                for l in lambda.iter_mut() {
                    *l /= total;
                }
            }
        }
    }
    // final w and certificate
    w = vec![0.0; n];
    for (&idx, &l) in corral.iter().zip(&lambda) {
        for (wi, pi) in w.iter_mut().zip(&points[idx]) {
            *wi += l * pi;
        }
    }
    let ww = dot(&w, &w);
    let residual = points
        .iter()
        .map(|p| dot(&w, p) - ww)
        .fold(f64::INFINITY, f64::min);
    Ok(MinNormPoint {
        d: ww.sqrt(),
        certified: residual >= -cert_tol,
        residual,
        w,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Exact inradius about the origin via facet enumeration (n <= 3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Inradius {
    pub r: f64,
    /// Unit outward normal of the minimizing facet; the minimax direction.
    pub normal: Vec<f64>,
    /// Distance of the facet hyperplane from the origin (= r when not degenerate).
    pub offset: f64,
    pub degenerate: bool,
}

fn cross3(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dedupe(points: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| crate::vecmath::dist(p, q) <= tol) {
            out.push(p.clone());
        }
    }
    out
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > m || k == 0 {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Largest rho >= 0 such that rho * (unit ball) is contained in conv(points),
/// assuming 0 in conv(points) (the caller checks via min_norm_point).
/// Exact facet enumeration; dimension must be <= 3.
pub fn inradius_about_origin(points: &[Vec<f64>]) -> Result<Inradius> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n = points[0].len();
    if n > 3 {
        return Err(Error::InradiusDimension { dim: n });
    }
    let sc = points.iter().map(|p| norm(p)).fold(1.0_f64, f64::max);
    let pts = dedupe(points, 1e-12 * sc);
    // affine rank
    let dirs: Vec<Vec<f64>> = pts[1..].iter().map(|p| sub(p, &pts[0])).collect();
    let aff_rank = orthonormal_span(&dirs, 1e-10 * sc).len();
    if aff_rank < n {
        // Degenerate hull: empty interior, r = 0. Certificate: a hyperplane
        // containing the hull (through the origin since 0 is in the hull).
        let comp = orthonormal_complement(&pts, n, 1e-10 * sc);
        let normal = if comp.is_empty() {
            // span(points) is full but the affine hull is flat; fall back to
            // the complement of the direction space.
            let comp2 = orthonormal_complement(&dirs, n, 1e-10 * sc);
            lex_min_unit_in_span(&comp2).unwrap_or_else(|| {
                let mut e = vec![0.0; n];
                e[0] = -1.0;
                e
            })
        } else {
            lex_min_unit_in_span(&comp).unwrap()
        };
        return Ok(Inradius {
            r: 0.0,
            normal,
            offset: 0.0,
            degenerate: true,
        });
    }
    let sup_tol = 1e-9 * sc;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for combo in combinations(pts.len(), n) {
        let nu: Vec<f64> = match n {
            1 => vec![1.0],
            2 => {
                let d = sub(&pts[combo[1]], &pts[combo[0]]);
                vec![-d[1], d[0]]
            }
            3 => {
                let d1 = sub(&pts[combo[1]], &pts[combo[0]]);
                let d2 = sub(&pts[combo[2]], &pts[combo[0]]);
                cross3(&d1, &d2)
            }
            _ => unreachable!(),
        };
        let nn = norm(&nu);
        if nn <= 1e-12 * sc.max(1.0) {
            continue;
        }
        let nu_hat = scale(&nu, 1.0 / nn);
        let beta = dot(&nu_hat, &pts[combo[0]]);
        let vals: Vec<f64> = pts.iter().map(|p| dot(&nu_hat, p)).collect();
        let vmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let candidates: [(bool, f64, Vec<f64>); 2] = [
            (false, beta, nu_hat.clone()),
            (true, -beta, scale(&nu_hat, -1.0)),
        ];
        for (flipped, off, nrm) in candidates {
            let supporting = if flipped {
                vmin >= beta - sup_tol
            } else {
                vmax <= beta + sup_tol
            };
            if !supporting {
                continue;
            }
            let r = off.max(0.0);
            match &mut best {
                None => best = Some((r, nrm)),
                Some((br, bn)) => {
                    if r < *br - 1e-12 * sc.max(1.0) {
                        *br = r;
                        *bn = nrm;
                    } else if (r - *br).abs() <= 1e-9 * sc.max(1.0) && lex_less(&nrm, bn) {
                        *bn = nrm;
                    }
                }
            }
        }
    }
    match best {
        Some((r, normal)) => Ok(Inradius {
            r,
            offset: r,
            normal,
            degenerate: false,
        }),
        None => Err(Error::Invalid(
            "facet enumeration found no supporting hyperplane".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Brute-force sphere oracle
// ---------------------------------------------------------------------------

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn support_max(points: &[Vec<f64>], h: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| dot(p, h))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Quasi-uniform grid search over unit directions followed by tangential
/// descent refinement. The returned value is always an upper bound on the
/// true infimum (it is attained by an explicit unit direction).
pub fn sphere_search_minimax(
    points: &[Vec<f64>],
    resolution: usize,
    refine_iters: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if resolution < 100 {
        return Err(Error::Invalid("resolution must be >= 100".into()));
    }
    let n = points[0].len();
    let mut best_h: Vec<f64> = Vec::new();
    let mut best_v = f64::INFINITY;
    let consider = |h: Vec<f64>, best_h: &mut Vec<f64>, best_v: &mut f64| {
        let v = support_max(points, &h);
        if v < *best_v {
            *best_v = v;
            *best_h = h;
        }
    };
    match n {
        1 => {
            consider(vec![1.0], &mut best_h, &mut best_v);
            consider(vec![-1.0], &mut best_h, &mut best_v);
        }
        2 => {
            for k in 0..resolution {
                let theta = std::f64::consts::TAU * (k as f64) / (resolution as f64);
                consider(vec![theta.cos(), theta.sin()], &mut best_h, &mut best_v);
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut produced = 0;
            while produced < resolution {
                let raw: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                if let Some(h) = normalize(&raw, 1e-12) {
                    consider(h, &mut best_h, &mut best_v);
                    produced += 1;
                }
            }
        }
    }
    // Tangential descent refinement (keeps the upper-bound property: every
    // accepted iterate is an explicitly evaluated unit direction).
    let mut h = best_h.clone();
    let mut v = best_v;
    let mut step = 4.0 / resolution as f64;
    for _ in 0..refine_iters {
        let top = points
            .iter()
            .max_by(|a, b| dot(a, &h).partial_cmp(&dot(b, &h)).unwrap())
            .unwrap();
        let proj = dot(top, &h);
        let tangent: Vec<f64> = top.iter().zip(&h).map(|(g, hi)| g - proj * hi).collect();
        let tn = norm(&tangent);
        if tn < 1e-15 {
            break;
        }
        let dir = scale(&tangent, -1.0 / tn);
        let mut s = step;
        let mut improved = false;
        for _ in 0..50 {
            let cand_raw = add_scaled(&h, s, &dir);
            if let Some(cand) = normalize(&cand_raw, 1e-14) {
                let cv = support_max(points, &cand);
                if cv < v {
                    h = cand;
                    v = cv;
                    step = s * 1.5;
                    improved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((v, h))
}

// ---------------------------------------------------------------------------
// The composed minimax
// ---------------------------------------------------------------------------

pub fn zero_tolerance_for(points: &[Vec<f64>]) -> f64 {
    let gmax = points.iter().map(|p| norm(p)).fold(0.0_f64, f64::max);
    1e-8 * gmax.max(1.0)
}

/// gamma over an explicit generator set (gradients are constant for affine
/// systems, which makes this reusable by the subset enumeration).
pub fn minimax_over_generators(gradients: &[Vec<f64>]) -> Result<MinimaxResult> {
    if gradients.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = gradients[0].len();
    let zero_tol = zero_tolerance_for(gradients);
    let mnp = min_norm_point(gradients)?;
    if mnp.d > zero_tol {
        let direction = scale(&mnp.w, -1.0 / mnp.d);
        return Ok(MinimaxResult {
            value: -mnp.d,
            direction,
            branch: Branch::NegativeViaMinNormPoint,
            certificate: Certificate::MinNormPoint {
                w: mnp.w,
                residual: mnp.residual,
            },
            zero_tolerance: zero_tol,
        });
    }
    if n <= 3 {
        let inr = inradius_about_origin(gradients)?;
        let certificate = Certificate::Facet {
            normal: inr.normal.clone(),
            offset: inr.offset,
        };
        Ok(MinimaxResult {
            value: inr.r,
            direction: inr.normal,
            branch: Branch::NonnegativeViaInradius,
            certificate,
            zero_tolerance: zero_tol,
        })
    } else {
        let resolution = 100_000;
        let (v, h) = sphere_search_minimax(gradients, resolution, 200, 0)?;
        Ok(MinimaxResult {
            value: v,
            direction: h,
            branch: Branch::SphereSearch,
            certificate: Certificate::GridResolution { resolution },
            zero_tolerance: zero_tol,
        })
    }
}

/// gamma(J, x) for a subset J of component indices.
pub fn directional_minimax(system: &System, x: &[f64], subset: &[usize]) -> Result<MinimaxResult> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let gradients: Vec<Vec<f64>> = subset
        .iter()
        .map(|&i| system.component_gradient(i, x))
        .collect();
    minimax_over_generators(&gradients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example1, example2};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn mnp_segment_projection() {
        let r = min_norm_point(&[vec![1.0, 1.0], vec![-2.0, 1.0]]).unwrap();
        assert!(r.certified);
        assert!((r.d - 1.0).abs() < 1e-10);
        assert!((r.w[0]).abs() < 1e-10 && (r.w[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mnp_single_point() {
        let r = min_norm_point(&[vec![1.0, 1.0]]).unwrap();
        assert!((r.d - SQRT2).abs() < 1e-12);
    }

    #[test]
    fn mnp_zero_in_hull() {
        let r = min_norm_point(&[vec![1.0, 1.0], vec![-2.0, 1.0], vec![1.0, -2.0]]).unwrap();
        assert!(r.d < 1e-8);
    }

    #[test]
    fn inradius_example1_generators() {
        let r =
            inradius_about_origin(&[vec![1.0, 1.0], vec![-2.0, 1.0], vec![1.0, -2.0]]).unwrap();
        assert!((r.r - SQRT2 / 2.0).abs() < 1e-12);
        // minimizing facet through (-2,1),(1,-2): outward normal (-1,-1)/sqrt(2)
        assert!((r.normal[0] + SQRT2 / 2.0).abs() < 1e-12);
        assert!((r.normal[1] + SQRT2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn inradius_cross_polytope() {
        let r = inradius_about_origin(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        assert!((r.r - SQRT2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn inradius_degenerate_segment() {
        let r = inradius_about_origin(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.r, 0.0);
        // certificate direction is orthogonal to the segment
        assert!(dot(&r.normal, &[1.0, 0.0]).abs() < 1e-12);
    }

    #[test]
    fn inradius_3d_simplex() {
        // regular simplex-ish: 0 in interior of conv of 4 points
        let pts = vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ];
        let r = inradius_about_origin(&pts).unwrap();
        // Each facet plane of this tetrahedron is at distance 1/sqrt(3).
        assert!((r.r - 1.0 / 3.0_f64.sqrt()).abs() < 1e-10);
        // sphere oracle agrees
        let (v, _) = sphere_search_minimax(&pts, 20000, 200, 7).unwrap();
        assert!((v - r.r).abs() < 1e-3);
        assert!(v >= r.r - 1e-12);
    }

    #[test]
    fn minimax_example1_subsets() {
        let s = example1();
        let x = [0.0, 0.0];
        let j12 = directional_minimax(&s, &x, &[0, 1]).unwrap();
        assert!((j12.value + 1.0).abs() < 1e-9);
        assert!((j12.direction[0]).abs() < 1e-9 && (j12.direction[1] + 1.0).abs() < 1e-9);
        assert_eq!(j12.branch, Branch::NegativeViaMinNormPoint);

        let j13 = directional_minimax(&s, &x, &[0, 2]).unwrap();
        assert!((j13.value + 1.0).abs() < 1e-9);
        assert!((j13.direction[0] + 1.0).abs() < 1e-9 && (j13.direction[1]).abs() < 1e-9);

        let j23 = directional_minimax(&s, &x, &[1, 2]).unwrap();
        assert!((j23.value + SQRT2 / 2.0).abs() < 1e-9);

        let j123 = directional_minimax(&s, &x, &[0, 1, 2]).unwrap();
        assert!((j123.value - SQRT2 / 2.0).abs() < 1e-9);
        assert_eq!(j123.branch, Branch::NonnegativeViaInradius);
    }

    #[test]
    fn minimax_example2_degenerate() {
        let s = example2();
        let r = directional_minimax(&s, &[0.0, 0.0], &[0, 1]).unwrap();
        assert!(r.value.abs() < 1e-8);
        assert_eq!(r.branch, Branch::NonnegativeViaInradius);
    }

    #[test]
    fn sphere_matches_min_norm_branch() {
        let pts = vec![vec![1.0, 1.0], vec![-2.0, 1.0]];
        let (v, _) = sphere_search_minimax(&pts, 100_000, 100, 1).unwrap();
        assert!((v + 1.0).abs() < 1e-4);
        assert!(v >= -1.0 - 1e-12);
    }

    #[test]
    fn sphere_matches_inradius_branch() {
        let pts = vec![vec![1.0, 1.0], vec![-2.0, 1.0], vec![1.0, -2.0]];
        let (v, _) = sphere_search_minimax(&pts, 100_000, 100, 1).unwrap();
        assert!((v - SQRT2 / 2.0).abs() < 1e-4);
    }

    #[test]
    fn sphere_single_point() {
        let (v, h) = sphere_search_minimax(&[vec![0.0, 3.0]], 100_000, 100, 1).unwrap();
        assert!((v + 3.0).abs() < 1e-4);
        assert!((h[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn attainment_at_reported_direction() {
        let pts = vec![vec![1.0, 1.0], vec![-2.0, 1.0], vec![1.0, -2.0]];
        let r = minimax_over_generators(&pts).unwrap();
        let attained = pts
            .iter()
            .map(|p| dot(p, &r.direction))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((attained - r.value).abs() < 1e-8);
    }
}
