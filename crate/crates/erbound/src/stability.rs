//! Stability verdicts for local and global error bounds: the sign and size of
//! the minimax value gamma drive everything. A zero gamma admits an explicit
//! destabilizing linear perturbation, which we search for and attach as a
//! witness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::active_set_default;
use crate::error::{Error, Result};
use crate::minimax::directional_minimax;
use crate::model::{
    feasibility_probe, BoxRegion, PerturbationSpec, System, FEASIBILITY_TOL,
};
use crate::moduli::{boundary_bisect, default_local_radii, local_modulus};
use crate::vecmath::{dist, norm, normalize, scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// gamma > 0: the solution set is the single point x_bar.
    StableSingleton,
    Stable,
    Unstable,
    Indeterminate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::StableSingleton => write!(f, "stable_singleton"),
            Classification::Stable => write!(f, "stable"),
            Classification::Unstable => write!(f, "unstable"),
            Classification::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Scope {
    Local { x_bar: Vec<f64> },
    Global,
}

/// Record of the interior-sequence probe: for each slack-ratio threshold, the
/// smallest |gamma| seen among interior points whose slack ratio against the
/// harvested boundary is below the threshold (+inf when none qualify).
#[derive(Debug, Clone)]
pub struct SequenceCheck {
    pub thresholds: Vec<f64>,
    pub min_gamma: Vec<f64>,
    pub qualifying: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub scope: Scope,
    /// gamma at x_bar (local) or tau-hat = min |gamma| over the harvested
    /// boundary (global).
    pub gamma: f64,
    pub classification: Classification,
    /// |gamma| - epsilon, when positive and defined.
    pub guaranteed_modulus: Option<f64>,
    pub witness: Option<PerturbationSpec>,
    pub witness_modulus: Option<f64>,
    pub sequence_check: Option<SequenceCheck>,
    pub zero_tolerance: f64,
    pub boundary_points: Vec<Vec<f64>>,
}

pub fn apply_perturbation(system: &System, p: PerturbationSpec) -> Result<System> {
    system.with_perturbation(p)
}

fn gamma_zero_tolerance(system: &System, points: &[Vec<f64>]) -> f64 {
    let mut gmax = 0.0_f64;
    for x in points {
        for i in 0..system.num_components() {
            gmax = gmax.max(norm(&system.component_gradient(i, x)));
        }
    }
    1e-7 * gmax.max(1.0)
}

fn gamma_at(system: &System, x: &[f64]) -> Result<f64> {
    let active = active_set_default(system, x)?;
    Ok(directional_minimax(system, x, &active.indices)?.value)
}

pub fn local_stability_verdict(
    system: &System,
    x_bar: &[f64],
    epsilon: f64,
) -> Result<StabilityVerdict> {
    let f = system.f(x_bar);
    if f.abs() > FEASIBILITY_TOL * f.abs().max(1.0) {
        return Err(Error::NotOnBoundary { f_value: f });
    }
    let gamma = gamma_at(system, x_bar)?;
    let zero_tolerance = gamma_zero_tolerance(system, std::slice::from_ref(&x_bar.to_vec()));
    let (classification, guaranteed_modulus, witness, witness_modulus) =
        if gamma > zero_tolerance {
            let c = (gamma - epsilon > 0.0).then_some(gamma - epsilon);
            (Classification::StableSingleton, c, None, None)
        } else if gamma < -zero_tolerance {
            let c = (gamma.abs() - epsilon > 0.0).then_some(gamma.abs() - epsilon);
            (Classification::Stable, c, None, None)
        } else {
            let (p, er) = adversarial_perturbation(system, x_bar, epsilon, 64, 42)?;
            (Classification::Unstable, None, Some(p), Some(er))
        };
    Ok(StabilityVerdict {
        scope: Scope::Local {
            x_bar: x_bar.to_vec(),
        },
        gamma,
        classification,
        guaranteed_modulus,
        witness,
        witness_modulus,
        sequence_check: None,
        zero_tolerance,
        boundary_points: vec![x_bar.to_vec()],
    })
}

fn perturbed_local_estimate(
    system: &System,
    x_bar: &[f64],
    u_star: &[f64],
    epsilon: f64,
    samples_per_radius: usize,
    seed: u64,
) -> Result<f64> {
    let p = PerturbationSpec::new(u_star.to_vec(), epsilon, x_bar.to_vec())?;
    let perturbed = system.base().with_perturbation(p)?;
    let radii = default_local_radii(x_bar);
    Ok(local_modulus(&perturbed, x_bar, &radii, samples_per_radius, seed)?.value)
}

/// Multi-start search over unit perturbation directions for the one that most
/// degrades the local modulus at x_bar.
pub fn adversarial_perturbation(
    system: &System,
    x_bar: &[f64],
    epsilon: f64,
    budget: usize,
    seed: u64,
) -> Result<(PerturbationSpec, f64)> {
    if budget < 1 {
        return Err(Error::Invalid("budget must be >= 1".into()));
    }
    let n = system.dimension();
    if epsilon == 0.0 {
        let radii = default_local_radii(x_bar);
        let er = local_modulus(system, x_bar, &radii, 1000, seed)?.value;
        let p = PerturbationSpec::new(vec![0.0; n], 0.0, x_bar.to_vec())?;
        return Ok((p, er));
    }
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    // deterministic starts: signed coordinate axes and active gradients
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        candidates.push(e.clone());
        e[i] = -1.0;
        candidates.push(e);
    }
    let active = active_set_default(system, x_bar)?;
    for &t in &active.indices {
        if let Some(u) = normalize(&system.component_gradient(t, x_bar), 1e-12) {
            candidates.push(scale(&u, -1.0));
            candidates.push(u);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while candidates.len() < budget.max(2 * n) {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        if let Some(u) = normalize(&raw, 1e-12) {
            candidates.push(u);
        }
    }
    let mut best_u = candidates[0].clone();
    let mut best_er = f64::INFINITY;
    for (k, u) in candidates.iter().enumerate() {
        let er = perturbed_local_estimate(system, x_bar, u, epsilon, 300, seed ^ (k as u64 + 1))?;
        if er < best_er {
            best_er = er;
            best_u = u.clone();
        }
    }
    // re-estimate the winner at full sampling effort
    let er = perturbed_local_estimate(system, x_bar, &best_u, epsilon, 2000, seed ^ 0xbeef)?;
    let p = PerturbationSpec::new(best_u, epsilon, x_bar.to_vec())?;
    Ok((p, er.min(best_er)))
}

/// Feasible points where a given constraint subset is tight, anchored at the
/// witness; affine systems only. Returns boundary candidates (vertices, edge
/// and facet points) whose true active set may be larger than the subset.
fn affine_tight_points(
    system: &System,
    witness: &[f64],
    bounds: &BoxRegion,
) -> Result<Vec<Vec<f64>>> {
    let constraints = match system.affine_constraints() {
        Some(c) => c,
        None => return Ok(vec![]),
    };
    let m = constraints.len();
    let n = system.dimension();
    if m > 32 {
        return Ok(vec![]);
    }
    let scale_b = constraints
        .iter()
        .map(|(a, b)| norm(a).max(b.abs()))
        .fold(1.0_f64, f64::max);
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    while let Some(j) = stack.pop() {
        if j.len() < n {
            for next in j[j.len() - 1] + 1..m {
                let mut jj = j.clone();
                jj.push(next);
                stack.push(jj);
            }
        }
        subsets.push(j);
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for j in subsets {
        let k = j.len();
        let a = nalgebra::DMatrix::from_fn(k, n, |r, c| constraints[j[r]].0[c]);
        let rhs = nalgebra::DVector::from_fn(k, |r, _| {
            constraints[j[r]].1 - crate::vecmath::dot(&constraints[j[r]].0, witness)
        });
        let gram = &a * a.transpose();
        let mu = match gram.svd(true, true).solve(&rhs, 1e-10) {
            Ok(mu) => mu,
            Err(_) => continue,
        };
        let shift = a.transpose() * mu;
        let x: Vec<f64> = witness
            .iter()
            .zip(shift.iter())
            .map(|(w, s)| w + s)
            .collect();
        // solvable subsets only: the tight equations must actually hold
        let ok = j.iter().all(|&t| {
            (crate::vecmath::dot(&constraints[t].0, &x) - constraints[t].1).abs()
                <= 1e-7 * scale_b
        });
        if !ok {
            continue;
        }
        let feasible = constraints
            .iter()
            .all(|(at, bt)| crate::vecmath::dot(at, &x) - bt <= 1e-9 * scale_b);
        if feasible && bounds.contains(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn global_stability_verdict(
    system: &System,
    bounds: &BoxRegion,
    boundary_samples: usize,
    interior_samples: usize,
    epsilon: f64,
    seed: u64,
) -> Result<StabilityVerdict> {
    let handle = feasibility_probe(system, bounds, 2000, seed)?;
    let witness = handle.witness().ok_or(Error::NoWitness)?.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));

    // (a) harvest boundary points: bisection from infeasible samples, plus
    // tight-subset enumeration on affine systems (vertices and faces that
    // random bisection almost never hits exactly)
    let mut boundary: Vec<Vec<f64>> = Vec::new();
    for _ in 0..boundary_samples {
        let x = bounds.sample(&mut rng);
        if system.f(&x) > FEASIBILITY_TOL {
            let z = boundary_bisect(system, &x, &witness);
            if boundary.iter().all(|b| dist(b, &z) > 1e-7) {
                boundary.push(z);
            }
        }
    }
    for x in affine_tight_points(system, &witness, bounds)? {
        if boundary.iter().all(|b| dist(b, &x) > 1e-9) {
            boundary.push(x);
        }
    }
    if boundary.is_empty() {
        return Err(Error::NoBoundaryPoints);
    }
    let zero_tolerance = gamma_zero_tolerance(system, &boundary);
    let mut tau_hat = f64::INFINITY;
    for b in &boundary {
        tau_hat = tau_hat.min(gamma_at(system, b)?.abs());
    }

    // (b) interior-sequence probe: small slack ratio against the nearest
    // harvested boundary point, one minimum |gamma| per threshold
    let thresholds = vec![1e-1, 1e-2, 1e-3];
    let mut min_gamma = vec![f64::INFINITY; thresholds.len()];
    let mut qualifying = vec![0usize; thresholds.len()];
    for _ in 0..interior_samples {
        let z = bounds.sample(&mut rng);
        let fz = system.f(&z);
        if fz > -FEASIBILITY_TOL {
            continue; // interior points only
        }
        let slack_ratio = boundary
            .iter()
            .map(|b| {
                let d = dist(&z, b);
                if d > 1e-12 {
                    (fz - system.f(b)).abs() / d
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min);
        let mut g: Option<f64> = None;
        for (i, &delta) in thresholds.iter().enumerate() {
            if slack_ratio <= delta {
                let gv = match g {
                    Some(v) => v,
                    None => {
                        let v = gamma_at(system, &z)?.abs();
                        g = Some(v);
                        v
                    }
                };
                qualifying[i] += 1;
                min_gamma[i] = min_gamma[i].min(gv);
            }
        }
    }

    let trend_ok = min_gamma
        .iter()
        .all(|&v| !v.is_finite() || v >= 0.5 * tau_hat);
    let classification = if tau_hat <= zero_tolerance {
        Classification::Unstable
    } else if trend_ok {
        Classification::Stable
    } else {
        Classification::Indeterminate
    };
    let guaranteed_modulus = (classification == Classification::Stable
        && tau_hat - epsilon > 0.0)
        .then_some(tau_hat - epsilon);
    let (witness_p, witness_modulus) = if classification == Classification::Unstable {
        // the boundary point realizing tau-hat is where perturbation bites
        let mut worst = boundary[0].clone();
        let mut worst_g = f64::INFINITY;
        for b in &boundary {
            let g = gamma_at(system, b)?.abs();
            if g < worst_g {
                worst_g = g;
                worst = b.clone();
            }
        }
        let (p, er) = adversarial_perturbation(system, &worst, epsilon, 64, seed)?;
        (Some(p), Some(er))
    } else {
        (None, None)
    };
    Ok(StabilityVerdict {
        scope: Scope::Global,
        gamma: tau_hat,
        classification,
        guaranteed_modulus,
        witness: witness_p,
        witness_modulus,
        sequence_check: Some(SequenceCheck {
            thresholds,
            min_gamma,
            qualifying,
        }),
        zero_tolerance,
        boundary_points: boundary,
    })
}
