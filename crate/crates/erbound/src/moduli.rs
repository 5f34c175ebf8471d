//! Local and global error-bound moduli, estimated by two independent routes:
//! the ratio f(x)/d(x, S) from the definitions, and the dual formula
//! inf d(0, ∂f(x)) over infeasible x. Distances to the sublevel set come from
//! an exact polyhedral projection when the system is affine and from a
//! bisection-plus-refinement upper bound otherwise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{active_set, active_set_default, generators};
use crate::error::{Error, Result};
use crate::minimax::min_norm_point;
use crate::model::{feasibility_probe, BoxRegion, System, FEASIBILITY_TOL};
use crate::qp::distance_to_polyhedron;
use crate::vecmath::{add_scaled, dist, dot, norm, scale, sub};

#[derive(Debug, Clone)]
pub enum EstimateKind {
    Local { x_bar: Vec<f64> },
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    RatioSampling,
    BetaFormula,
}

impl std::fmt::Display for EstimateMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateMethod::RatioSampling => write!(f, "ratio_sampling"),
            EstimateMethod::BetaFormula => write!(f, "beta_formula"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModulusEstimate {
    pub kind: EstimateKind,
    /// May be +infinity (no infeasible sample seen, or S is everything nearby).
    pub value: f64,
    pub method: EstimateMethod,
    pub samples_used: usize,
    pub radius_schedule: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Region {
    Local { x_bar: Vec<f64>, radii: Vec<f64> },
    Global { bounds: BoxRegion },
}

pub fn default_local_radii(x_bar: &[f64]) -> Vec<f64> {
    let s = norm(x_bar).max(1.0);
    vec![1e-1 * s, 1e-2 * s, 1e-3 * s]
}

// ---------------------------------------------------------------------------
// Distance to the sublevel set {f <= 0}
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SublevelDistance {
    pub value: f64,
    /// true on the exact polyhedral path; false for the bisection upper bound.
    pub exact: bool,
}

/// Bisect between an infeasible point and a feasible one; returns the
/// feasible-side endpoint (f <= 0, so its distance is a valid upper bound).
pub fn boundary_bisect(system: &System, infeasible: &[f64], feasible: &[f64]) -> Vec<f64> {
    let mut lo = infeasible.to_vec(); // f > 0 side
    let mut hi = feasible.to_vec(); // f <= 0 side
    for _ in 0..120 {
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        if system.f(&mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn find_witness_near(system: &System, x: &[f64], seed: u64) -> Option<Vec<f64>> {
    for (k, half) in [1.0, 4.0, 16.0, 64.0, 256.0].iter().enumerate() {
        let lower: Vec<f64> = x.iter().map(|v| v - half).collect();
        let upper: Vec<f64> = x.iter().map(|v| v + half).collect();
        let region = BoxRegion::new(lower, upper).ok()?;
        if let Ok(handle) = feasibility_probe(system, &region, 2000, seed.wrapping_add(k as u64)) {
            if let Some(w) = handle.witness() {
                return Some(w.to_vec());
            }
        }
    }
    None
}

/// Reusable distance-to-sublevel-set evaluator. Caches the affine constraint
/// view and, for non-affine systems, the feasibility witness, so repeated
/// queries (sampling loops) don't re-probe.
pub struct DistanceOracle<'a> {
    system: &'a System,
    constraints: Option<Vec<(Vec<f64>, f64)>>,
    witness: Option<Vec<f64>>,
    witness_searched: bool,
}

impl<'a> DistanceOracle<'a> {
    pub fn new(system: &'a System) -> Self {
        DistanceOracle {
            system,
            constraints: system.affine_constraints(),
            witness: None,
            witness_searched: false,
        }
    }

    pub fn with_witness(system: &'a System, witness: Vec<f64>) -> Self {
        DistanceOracle {
            system,
            constraints: system.affine_constraints(),
            witness: Some(witness),
            witness_searched: true,
        }
    }

    pub fn distance(&mut self, x: &[f64]) -> Result<SublevelDistance> {
        let system = self.system;
        let fx = system.f(x);
        if fx <= FEASIBILITY_TOL {
            return Ok(SublevelDistance {
                value: 0.0,
                exact: true,
            });
        }
        if let Some(constraints) = &self.constraints {
            let r = distance_to_polyhedron(constraints, x)?;
            return Ok(SublevelDistance {
                value: r.distance,
                exact: true,
            });
        }
        if !self.witness_searched {
            self.witness = find_witness_near(system, x, 12345);
            self.witness_searched = true;
        }
        let witness = match &self.witness {
            Some(w) => w.clone(),
            None => {
                return Ok(SublevelDistance {
                    value: f64::INFINITY,
                    exact: false,
                })
            }
        };
        bisect_refine_distance(system, x, &witness)
    }
}

pub fn distance_to_sublevel_set(system: &System, x: &[f64]) -> Result<SublevelDistance> {
    DistanceOracle::new(system).distance(x)
}

fn bisect_refine_distance(
    system: &System,
    x: &[f64],
    witness: &[f64],
) -> Result<SublevelDistance> {
    let mut z = boundary_bisect(system, x, witness);
    let mut best = dist(x, &z);
    // Alternate: project x onto the supporting halfspace at z, re-bisect.
    for _ in 0..100 {
        let active = active_set_default(system, &z)?;
        let top = match active.indices.first() {
            Some(&t) => t,
            None => break,
        };
        let g = system.component_gradient(top, &z);
        let gg = dot(&g, &g);
        if gg < 1e-28 {
            break;
        }
        let overshoot = dot(&g, &sub(x, &z)).max(0.0);
        let p = add_scaled(x, -overshoot / gg, &g);
        let z_new = if system.f(&p) <= FEASIBILITY_TOL {
            p
        } else {
            boundary_bisect(system, &p, &z)
        };
        let step = dist(&z_new, &z);
        let d_new = dist(x, &z_new);
        if d_new < best {
            best = d_new;
            z = z_new;
        } else {
            break;
        }
        if step < 1e-9 {
            break;
        }
    }
    Ok(SublevelDistance {
        value: best,
        exact: false,
    })
}

// ---------------------------------------------------------------------------
// Ratio route
// ---------------------------------------------------------------------------

fn ratio_at(oracle: &mut DistanceOracle, x: &[f64]) -> Result<Option<f64>> {
    let fx = oracle.system.f(x);
    if fx <= FEASIBILITY_TOL {
        return Ok(None);
    }
    let d = oracle.distance(x)?;
    if d.value <= 1e-300 {
        return Ok(None);
    }
    Ok(Some(fx / d.value))
}

/// A few steps of coordinate-perturbation descent on the ratio, accepting only
/// strictly infeasible moves with smaller ratios.
fn refine_ratio(oracle: &mut DistanceOracle, x: &[f64], r0: f64, step0: f64) -> Result<f64> {
    let n = x.len();
    let mut x = x.to_vec();
    let mut r = r0;
    let mut step = step0;
    for _ in 0..8 {
        let mut improved = false;
        for i in 0..n {
            for sgn in [-1.0, 1.0] {
                let mut cand = x.clone();
                cand[i] += sgn * step;
                if let Some(rc) = ratio_at(oracle, &cand)? {
                    if rc < r {
                        r = rc;
                        x = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(r)
}

fn sample_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let nn = norm(&raw);
        if nn > 1e-12 {
            let u: f64 = rng.gen_range(0.0_f64..1.0);
            let r = radius * u.powf(1.0 / n as f64);
            return add_scaled(center, r / nn, &raw);
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Invalid("radius schedule must be non-empty".into()));
    }
    for w in radii.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Invalid(
                "radius schedule must be strictly decreasing".into(),
            ));
        }
    }
    if radii[radii.len() - 1] <= 0.0 {
        return Err(Error::Invalid("radii must be positive".into()));
    }
    Ok(())
}

fn check_boundary(system: &System, x_bar: &[f64]) -> Result<()> {
    let f = system.f(x_bar);
    if f.abs() > FEASIBILITY_TOL * f.abs().max(1.0) {
        return Err(Error::NotOnBoundary { f_value: f });
    }
    Ok(())
}

pub fn local_modulus(
    system: &System,
    x_bar: &[f64],
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    check_radii(radii)?;
    check_boundary(system, x_bar)?;
    if samples_per_radius < 1 {
        return Err(Error::Invalid("samples_per_radius must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = DistanceOracle::new(system);
    let mut value = f64::INFINITY;
    let mut samples_used = 0;
    for &r in radii {
        let mut radius_min = f64::INFINITY;
        for _ in 0..samples_per_radius {
            let x = sample_in_ball(&mut rng, x_bar, r);
            samples_used += 1;
            if let Some(ratio) = ratio_at(&mut oracle, &x)? {
                radius_min = radius_min.min(ratio);
            }
        }
        if radius_min.is_finite() {
            // the liminf is probed at the smallest radius that sees
            // infeasible points, so later (smaller) radii overwrite
            value = radius_min;
        }
    }
    Ok(ModulusEstimate {
        kind: EstimateKind::Local {
            x_bar: x_bar.to_vec(),
        },
        value,
        method: EstimateMethod::RatioSampling,
        samples_used,
        radius_schedule: Some(radii.to_vec()),
        seed,
    })
}

pub fn global_modulus(
    system: &System,
    bounds: &BoxRegion,
    samples: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    if samples < 1 {
        return Err(Error::Invalid("samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = DistanceOracle::new(system);
    let step0 = 0.05 * bounds.diameter().max(1e-6);
    let mut value = f64::INFINITY;
    for _ in 0..samples {
        let x = bounds.sample(&mut rng);
        if let Some(r) = ratio_at(&mut oracle, &x)? {
            // refine only near-minimal samples; the rule depends on the running
            // minimum alone, so estimates stay running minima in the sample index
            if r <= 1.05 * value || value.is_infinite() {
                let rr = refine_ratio(&mut oracle, &x, r, step0)?;
                value = value.min(rr);
            } else {
                value = value.min(r);
            }
        }
    }
    Ok(ModulusEstimate {
        kind: EstimateKind::Global,
        value,
        method: EstimateMethod::RatioSampling,
        samples_used: samples,
        radius_schedule: None,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Beta route: inf over infeasible x of d(0, ∂f(x))
// ---------------------------------------------------------------------------

/// d(0, ∂f(x)) at an infeasible point: min-norm distance of active gradients.
pub fn beta_at(system: &System, x: &[f64], eta: f64) -> Result<f64> {
    let active = active_set(system, x, eta)?;
    let gens = generators(system, &active);
    Ok(min_norm_point(&gens.gradients)?.d)
}

/// Eta used when evaluating beta at a numerically constructed tie point.
fn tie_eta(f_value: f64) -> f64 {
    1e-7 * f_value.abs().max(1.0)
}

/// Move from x toward the surface where the top component ties with component
/// `other`, staying strictly infeasible. Returns the tie point when one exists
/// with f > 0 on it.
fn tie_point(system: &System, x: &[f64], top: usize, other: usize) -> Result<Option<Vec<f64>>> {
    let g_top = system.component_gradient(top, x);
    let g_other = system.component_gradient(other, x);
    let v = sub(&g_other, &g_top);
    let vv = dot(&v, &v);
    if vv < 1e-20 {
        return Ok(None);
    }
    let gap = |y: &[f64]| system.component_value(top, y) - system.component_value(other, y);
    let gap0 = gap(x);
    if gap0 <= 0.0 {
        return Ok(None);
    }
    // affine systems reach the tie in one exact step; otherwise expand + bisect
    let mut s_hi = gap0 / vv;
    let mut hi = add_scaled(x, s_hi, &v);
    let mut tries = 0;
    while gap(&hi) > 0.0 {
        s_hi *= 2.0;
        hi = add_scaled(x, s_hi, &v);
        tries += 1;
        if tries > 60 {
            return Ok(None);
        }
    }
    let mut s_lo = 0.0_f64;
    for _ in 0..80 {
        let mid = 0.5 * (s_lo + s_hi);
        if gap(&add_scaled(x, mid, &v)) > 0.0 {
            s_lo = mid;
        } else {
            s_hi = mid;
        }
    }
    let z = add_scaled(x, s_hi, &v);
    if system.f(&z) > 1e-12 {
        Ok(Some(z))
    } else {
        Ok(None)
    }
}

/// Chase component ties from an infeasible sample: the dual distance
/// d(0, ∂f(x)) drops discontinuously where active sets grow, and uniform
/// sampling almost never lands on those surfaces, so we walk onto them.
fn chase_ties(system: &System, x: &[f64]) -> Result<f64> {
    let m = system.num_components();
    let ev = system.evaluate(x)?;
    let mut best = beta_at(system, x, tie_eta(ev.f_value))?;
    let top = ev
        .component_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    for other in 0..m {
        if other == top {
            continue;
        }
        let Some(z) = tie_point(system, x, top, other)? else {
            continue;
        };
        let fz = system.f(&z);
        best = best.min(beta_at(system, &z, tie_eta(fz))?);
        // depth 2: from the pair tie, pull in a third component along a
        // direction that preserves the existing tie (affine-exact)
        let gi = system.component_gradient(top, &z);
        let gj = system.component_gradient(other, &z);
        let keep = sub(&gj, &gi);
        let kk = dot(&keep, &keep);
        for third in 0..m {
            if third == top || third == other {
                continue;
            }
            let gk = system.component_gradient(third, &z);
            let mut d = sub(&gk, &gi);
            if kk > 1e-20 {
                let c = dot(&d, &keep) / kk;
                d = sub(&d, &scale(&keep, c));
            }
            let dd = dot(&d, &d);
            if dd < 1e-20 {
                continue;
            }
            let gap = |y: &[f64]| system.component_value(top, y) - system.component_value(third, y);
            let gap0 = gap(&z);
            if gap0 <= 0.0 {
                continue;
            }
            let mut s_hi = gap0 / dd;
            let mut hi = add_scaled(&z, s_hi, &d);
            let mut tries = 0;
            let mut ok = true;
            while gap(&hi) > 0.0 {
                s_hi *= 2.0;
                hi = add_scaled(&z, s_hi, &d);
                tries += 1;
                if tries > 60 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let mut s_lo = 0.0_f64;
            for _ in 0..80 {
                let mid = 0.5 * (s_lo + s_hi);
                if gap(&add_scaled(&z, mid, &d)) > 0.0 {
                    s_lo = mid;
                } else {
                    s_hi = mid;
                }
            }
            let w = add_scaled(&z, s_hi, &d);
            let fw = system.f(&w);
            if fw > 1e-12 {
                best = best.min(beta_at(system, &w, tie_eta(fw))?);
            }
        }
    }
    Ok(best)
}

const CHASE_BUDGET: usize = 200;

pub fn beta_modulus(
    system: &System,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    if samples < 1 {
        return Err(Error::Invalid("samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value = f64::INFINITY;
    let mut used = 0;
    let mut chased = 0;
    let visit = |x: Vec<f64>, value: &mut f64, chased: &mut usize| -> Result<()> {
        if system.f(&x) <= FEASIBILITY_TOL {
            return Ok(());
        }
        let b = if *chased < CHASE_BUDGET {
            *chased += 1;
            chase_ties(system, &x)?
        } else {
            let active = active_set_default(system, &x)?;
            let gens = generators(system, &active);
            min_norm_point(&gens.gradients)?.d
        };
        *value = (*value).min(b);
        Ok(())
    };
    let (kind, radius_schedule) = match region {
        Region::Local { x_bar, radii } => {
            check_radii(radii)?;
            check_boundary(system, x_bar)?;
            for &r in radii {
                let mut radius_min = f64::INFINITY;
                for _ in 0..samples {
                    let x = sample_in_ball(&mut rng, x_bar, r);
                    used += 1;
                    let mut local = f64::INFINITY;
                    visit(x, &mut local, &mut chased)?;
                    radius_min = radius_min.min(local);
                }
                if radius_min.is_finite() {
                    value = radius_min;
                }
            }
            (
                EstimateKind::Local {
                    x_bar: x_bar.clone(),
                },
                Some(radii.clone()),
            )
        }
        Region::Global { bounds } => {
            for _ in 0..samples {
                let x = bounds.sample(&mut rng);
                used += 1;
                visit(x, &mut value, &mut chased)?;
            }
            (EstimateKind::Global, None)
        }
    };
    Ok(ModulusEstimate {
        kind,
        value,
        method: EstimateMethod::BetaFormula,
        samples_used: used,
        radius_schedule,
        seed,
    })
}
