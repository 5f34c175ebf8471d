//! Hoffman constants for linear inequality systems: boundary classification,
//! subset minimax enumeration, the uniform lower bound tau, direct sampling
//! estimates of sigma, and perturbed-system trials.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::minimax::{minimax_over_generators, Branch};
use crate::model::{BoxRegion, PerturbationSpec, System};
use crate::moduli::global_modulus;
use crate::qp::{polyhedron_feasible_point, Feasibility};
use crate::vecmath::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Interior,
    Boundary { active: Vec<usize> },
    Outside,
}

pub fn boundary_classify(system: &System, x: &[f64], eta: f64) -> Result<Location> {
    let constraints = system.require_affine()?;
    if x.len() != system.dimension() {
        return Err(Error::DimensionMismatch {
            expected: system.dimension(),
            got: x.len(),
            context: "boundary classification point".into(),
        });
    }
    let values: Vec<f64> = constraints.iter().map(|(a, b)| dot(a, x) - b).collect();
    if values.iter().any(|&v| v > eta) {
        return Ok(Location::Outside);
    }
    if values.iter().all(|&v| v < -eta) {
        return Ok(Location::Interior);
    }
    Ok(Location::Boundary {
        active: (0..values.len())
            .filter(|&t| values[t].abs() <= eta)
            .collect(),
    })
}

#[derive(Debug, Clone)]
pub struct SubsetRow {
    pub labels: Vec<String>,
    pub indices: Vec<usize>,
    pub theta: f64,
    pub direction: Vec<f64>,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    AllSubsets,
    RealizableActiveSets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoffmanVerdict {
    UniformlyBounded,
    NotUniformlyBounded,
    Indeterminate,
}

impl std::fmt::Display for HoffmanVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HoffmanVerdict::UniformlyBounded => write!(f, "uniformly_bounded"),
            HoffmanVerdict::NotUniformlyBounded => write!(f, "not_uniformly_bounded"),
            HoffmanVerdict::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationTrial {
    pub x_tilde: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub epsilon: f64,
    pub sigma_tilde: f64,
}

#[derive(Debug, Clone)]
pub struct HoffmanReport {
    pub mode: SubsetMode,
    pub subset_table: Vec<SubsetRow>,
    /// min |theta_J| over the subset table.
    pub tau: f64,
    /// Equals tau: sigma is bounded below by the subset minimax infimum.
    pub hoffman_lower_bound: f64,
    pub sampled_sigma: Option<f64>,
    pub verdict: HoffmanVerdict,
    pub perturbation_trials: Vec<PerturbationTrial>,
    pub zero_tolerance: f64,
}

pub const ALL_SUBSETS_CAP: usize = 20;

fn zero_tolerance(constraints: &[(Vec<f64>, f64)]) -> f64 {
    let gmax = constraints.iter().map(|(a, _)| norm(a)).fold(0.0_f64, f64::max);
    1e-7 * gmax.max(1.0)
}

/// All non-empty subsets of 0..m in lexicographic order of the index sequence.
fn lexicographic_subsets(m: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    fn extend(prefix: &mut Vec<usize>, m: usize, out: &mut Vec<Vec<usize>>) {
        let start = prefix.last().map_or(0, |&l| l + 1);
        for next in start..m {
            prefix.push(next);
            out.push(prefix.clone());
            extend(prefix, m, out);
            prefix.pop();
        }
    }
    extend(&mut Vec::new(), m, &mut out);
    out
}

fn subset_row(system: &System, constraints: &[(Vec<f64>, f64)], j: &[usize]) -> Result<SubsetRow> {
    let gradients: Vec<Vec<f64>> = j.iter().map(|&t| constraints[t].0.clone()).collect();
    let mm = minimax_over_generators(&gradients)?;
    Ok(SubsetRow {
        labels: j.iter().map(|&t| system.labels()[t].clone()).collect(),
        indices: j.to_vec(),
        theta: mm.value,
        direction: mm.direction,
        branch: mm.branch,
    })
}

/// Active sets realizable on the boundary, found by projecting the least-norm
/// tight-equality point of every small subset back onto the feasible set and
/// recording the constraints actually tight there.
fn realizable_active_sets(
    system: &System,
    constraints: &[(Vec<f64>, f64)],
) -> Result<Vec<Vec<usize>>> {
    let n = system.dimension();
    let m = constraints.len();
    let eta = zero_tolerance(constraints).max(1e-9);
    let feasible_probe = |x: &[f64]| -> Result<Option<Vec<f64>>> {
        match crate::qp::distance_to_polyhedron(constraints, x) {
            Ok(r) => Ok(r.projection),
            Err(_) => Ok(None),
        }
    };
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    fn extend(prefix: &mut Vec<usize>, m: usize, kmax: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == kmax {
            return;
        }
        let start = prefix.last().map_or(0, |&l| l + 1);
        for next in start..m {
            prefix.push(next);
            out.push(prefix.clone());
            extend(prefix, m, kmax, out);
            prefix.pop();
        }
    }
    extend(&mut Vec::new(), m, n.min(m), &mut subsets);
    for j in subsets {
        // least-norm point with the subset tight
        let k = j.len();
        let a = nalgebra::DMatrix::from_fn(k, n, |r, c| constraints[j[r]].0[c]);
        let rhs = nalgebra::DVector::from_fn(k, |r, _| constraints[j[r]].1);
        let mu = match (a.clone() * a.transpose()).svd(true, true).solve(&rhs, 1e-12) {
            Ok(mu) => mu,
            Err(_) => continue,
        };
        let xt = a.transpose() * mu;
        let cand: Vec<f64> = xt.iter().copied().collect();
        let tight = j
            .iter()
            .all(|&t| (dot(&constraints[t].0, &cand) - constraints[t].1).abs() <= 1e-7);
        if !tight {
            continue;
        }
        let worst = constraints
            .iter()
            .map(|(a, b)| dot(a, &cand) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        let point = if worst <= eta {
            Some(cand)
        } else {
            feasible_probe(&cand)?
        };
        let Some(p) = point else { continue };
        if let Location::Boundary { active } = boundary_classify(system, &p, eta)? {
            if !active.is_empty() && !seen.contains(&active) {
                seen.push(active);
            }
        }
    }
    seen.sort();
    Ok(seen)
}

pub fn subset_tau(system: &System, mode: SubsetMode, cap: usize) -> Result<HoffmanReport> {
    let constraints = system.require_affine()?;
    let m = constraints.len();
    let zt = zero_tolerance(&constraints);
    let subsets: Vec<Vec<usize>> = match mode {
        SubsetMode::AllSubsets => {
            if m > cap {
                return Err(Error::SizeCap {
                    what: format!(
                        "{m} constraints exceeds the all-subsets cap of {cap}; \
                         use realizable active-set enumeration instead"
                    ),
                });
            }
            lexicographic_subsets(m)
        }
        SubsetMode::RealizableActiveSets => {
            if system.dimension() > 3 {
                return Err(Error::SizeCap {
                    what: "realizable active-set enumeration requires dimension <= 3".into(),
                });
            }
            realizable_active_sets(system, &constraints)?
        }
    };
    let mut table = Vec::with_capacity(subsets.len());
    let mut tau = f64::INFINITY;
    for j in &subsets {
        let row = subset_row(system, &constraints, j)?;
        tau = tau.min(row.theta.abs());
        table.push(row);
    }
    if table.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(HoffmanReport {
        mode,
        subset_table: table,
        tau,
        hoffman_lower_bound: tau,
        sampled_sigma: None,
        verdict: HoffmanVerdict::Indeterminate,
        perturbation_trials: vec![],
        zero_tolerance: zt,
    })
}

/// Sampling upper estimate of the Hoffman constant sigma over the box.
pub fn hoffman_estimate(
    system: &System,
    bounds: &BoxRegion,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let constraints = system.require_affine()?;
    let center: Vec<f64> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    if matches!(
        polyhedron_feasible_point(&constraints, &center)?,
        Feasibility::Infeasible
    ) {
        return Err(Error::InfeasibleSystem);
    }
    let est = global_modulus(system, bounds, samples, seed)?;
    if est.value.is_infinite() {
        return Err(Error::NoInfeasibleSamples);
    }
    Ok(est.value)
}

/// Hoffman constant of the rank-one perturbed system a_t + eps*u, b_t + eps*<u, x_tilde>.
pub fn perturbed_hoffman(
    system: &System,
    x_tilde: &[f64],
    u_tilde: &[f64],
    epsilon: f64,
    bounds: &BoxRegion,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    system.require_affine()?;
    let eta = zero_tolerance(&system.require_affine()?).max(1e-9);
    match boundary_classify(system, x_tilde, eta)? {
        Location::Boundary { .. } => {}
        _ => {
            return Err(Error::NotOnBoundary {
                f_value: system.f(x_tilde),
            })
        }
    }
    let p = PerturbationSpec::new(u_tilde.to_vec(), epsilon, x_tilde.to_vec())?;
    let perturbed = system.base().with_perturbation(p)?;
    hoffman_estimate(&perturbed, bounds, samples, seed)
}

#[derive(Debug, Clone)]
pub struct HoffmanOptions {
    pub cap: usize,
    pub bounds: BoxRegion,
    pub samples: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
}

pub fn hoffman_verdict(system: &System, options: &HoffmanOptions) -> Result<HoffmanReport> {
    let constraints = system.require_affine()?;
    let m = constraints.len();
    let all = if m <= options.cap {
        Some(subset_tau(system, SubsetMode::AllSubsets, options.cap)?)
    } else {
        None
    };
    let realizable = if system.dimension() <= 3 {
        Some(subset_tau(system, SubsetMode::RealizableActiveSets, options.cap)?)
    } else {
        None
    };
    let mut report = all
        .clone()
        .or_else(|| realizable.clone())
        .ok_or_else(|| Error::SizeCap {
            what: "neither all-subsets nor realizable enumeration applicable".into(),
        })?;
    let zt = report.zero_tolerance;
    if options.samples > 0 {
        report.sampled_sigma = Some(hoffman_estimate(
            system,
            &options.bounds,
            options.samples,
            options.seed,
        )?);
    }
    report.verdict = match (&all, &realizable) {
        (Some(a), _) if a.tau > zt => HoffmanVerdict::UniformlyBounded,
        (_, Some(r)) if r.tau <= zt => HoffmanVerdict::NotUniformlyBounded,
        (None, Some(r)) if r.tau > zt => {
            // all-subsets range unavailable; realizable tau alone cannot
            // certify the stronger uniform condition
            HoffmanVerdict::Indeterminate
        }
        _ => HoffmanVerdict::Indeterminate,
    };
    // perturbation trials on realizable boundary points
    if options.trials > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x7ff));
        let boundary_anchor = realizable
            .as_ref()
            .and_then(|r| r.subset_table.first().map(|row| row.indices.clone()));
        let anchor_point: Option<Vec<f64>> = boundary_anchor.and_then(|j| {
            let n = system.dimension();
            let k = j.len().min(n);
            let a = nalgebra::DMatrix::from_fn(k, n, |r, c| constraints[j[r]].0[c]);
            let rhs = nalgebra::DVector::from_fn(k, |r, _| constraints[j[r]].1);
            (a.clone() * a.transpose())
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .ok()
                .map(|mu| (a.transpose() * mu).iter().copied().collect())
        });
        if let Some(x_tilde) = anchor_point {
            let n = system.dimension();
            for k in 0..options.trials {
                let raw: Vec<f64> = (0..n)
                    .map(|_| {
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                let Some(u) = crate::vecmath::normalize(&raw, 1e-12) else {
                    continue;
                };
                if let Ok(sigma) = perturbed_hoffman(
                    system,
                    &x_tilde,
                    &u,
                    options.epsilon,
                    &options.bounds,
                    options.samples,
                    options.seed.wrapping_add(k as u64),
                ) {
                    report.perturbation_trials.push(PerturbationTrial {
                        x_tilde: x_tilde.clone(),
                        u_tilde: u,
                        epsilon: options.epsilon,
                        sigma_tilde: sigma,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example1, example2};
    use crate::model::{ComponentFunction, IndexSet};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn classify_example1_points() {
        let s = example1();
        assert_eq!(
            boundary_classify(&s, &[0.0, 0.0], 1e-9).unwrap(),
            Location::Interior
        );
        assert_eq!(
            boundary_classify(&s, &[1.0, 0.0], 1e-9).unwrap(),
            Location::Boundary { active: vec![0] }
        );
        assert_eq!(
            boundary_classify(&s, &[2.0, 0.0], 1e-9).unwrap(),
            Location::Outside
        );
    }

    #[test]
    fn all_subsets_example1() {
        let s = example1();
        let r = subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP).unwrap();
        assert_eq!(r.subset_table.len(), 7);
        let theta = |labels: &[&str]| {
            r.subset_table
                .iter()
                .find(|row| row.labels == labels)
                .unwrap()
                .theta
        };
        assert!((theta(&["1"]) + SQRT2).abs() < 1e-9);
        assert!((theta(&["2"]) + 5.0_f64.sqrt()).abs() < 1e-9);
        assert!((theta(&["3"]) + 5.0_f64.sqrt()).abs() < 1e-9);
        assert!((theta(&["1", "2"]) + 1.0).abs() < 1e-9);
        assert!((theta(&["1", "3"]) + 1.0).abs() < 1e-9);
        assert!((theta(&["2", "3"]) + SQRT2 / 2.0).abs() < 1e-9);
        assert!((theta(&["1", "2", "3"]) - SQRT2 / 2.0).abs() < 1e-9);
        assert!((r.tau - SQRT2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn all_subsets_example2() {
        let s = example2();
        let r = subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP).unwrap();
        let theta12 = r
            .subset_table
            .iter()
            .find(|row| row.labels == ["1", "2"])
            .unwrap()
            .theta;
        assert!(theta12.abs() < 1e-8);
        assert!(r.tau < 1e-8);
    }

    #[test]
    fn single_constraint_tau_is_norm() {
        let s = System::new(
            2,
            IndexSet::finite(vec!["1".into()]).unwrap(),
            vec![ComponentFunction::Affine {
                a: vec![3.0, 4.0],
                b: 1.0,
            }],
        )
        .unwrap();
        let r = subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP).unwrap();
        assert_eq!(r.subset_table.len(), 1);
        assert!((r.tau - 5.0).abs() < 1e-12);
    }

    #[test]
    fn realizable_sets_example2_merge_to_pair() {
        let s = example2();
        let r = subset_tau(&s, SubsetMode::RealizableActiveSets, ALL_SUBSETS_CAP).unwrap();
        // every boundary point of the line x1+x2=0 has both constraints tight
        assert_eq!(r.subset_table.len(), 1);
        assert_eq!(r.subset_table[0].indices, vec![0, 1]);
        assert!(r.tau < 1e-8);
    }

    #[test]
    fn realizable_sets_example1() {
        let s = example1();
        let r = subset_tau(&s, SubsetMode::RealizableActiveSets, ALL_SUBSETS_CAP).unwrap();
        let sets: Vec<Vec<usize>> = r.subset_table.iter().map(|row| row.indices.clone()).collect();
        assert!(sets.contains(&vec![0]));
        assert!(sets.contains(&vec![1, 2]));
        assert!((r.tau - SQRT2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn subsets_cap_enforced() {
        let s = example1();
        assert!(matches!(
            subset_tau(&s, SubsetMode::AllSubsets, 2),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn estimate_halfspace_is_one() {
        let s = System::new(
            2,
            IndexSet::finite(vec!["1".into()]).unwrap(),
            vec![ComponentFunction::Affine {
                a: vec![1.0, 0.0],
                b: 0.0,
            }],
        )
        .unwrap();
        let b = BoxRegion::cube(2, -2.0, 2.0).unwrap();
        let sigma = hoffman_estimate(&s, &b, 1000, 3).unwrap();
        assert!((sigma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn estimate_respects_lower_bound_example1() {
        let s = example1();
        let b = BoxRegion::cube(2, -5.0, 5.0).unwrap();
        let sigma = hoffman_estimate(&s, &b, 3000, 5).unwrap();
        assert!(sigma >= SQRT2 / 2.0 - 1e-6);
        assert!(sigma <= SQRT2 + 1e-6);
    }

    #[test]
    fn estimate_rejects_infeasible_system() {
        let s = System::new(
            1,
            IndexSet::finite(vec!["1".into(), "2".into()]).unwrap(),
            vec![
                ComponentFunction::Affine { a: vec![1.0], b: 0.0 },
                ComponentFunction::Affine { a: vec![-1.0], b: -1.0 },
            ],
        )
        .unwrap();
        let b = BoxRegion::cube(1, -3.0, 3.0).unwrap();
        assert!(matches!(
            hoffman_estimate(&s, &b, 100, 1),
            Err(Error::InfeasibleSystem)
        ));
    }

    #[test]
    fn perturbed_example2_sigma_drops() {
        let s = example2();
        let b = BoxRegion::cube(2, -2.0, 2.0).unwrap();
        let sigma = perturbed_hoffman(&s, &[0.0, 0.0], &[0.0, 1.0], 0.1, &b, 3000, 7).unwrap();
        // worst-case ratio for this tilt is eps/sqrt(2)
        assert!(sigma <= 0.1 / SQRT2 + 0.01, "sigma = {sigma}");
    }

    #[test]
    fn perturbed_zero_eps_matches_base(){
        let s = example1();
        let b = BoxRegion::cube(2, -5.0, 5.0).unwrap();
        let base = hoffman_estimate(&s, &b, 1000, 9).unwrap();
        let same = perturbed_hoffman(&s, &[1.0, 0.0], &[1.0, 0.0], 0.0, &b, 1000, 9).unwrap();
        assert_eq!(base, same);
    }

    #[test]
    fn verdict_example1_uniformly_bounded() {
        let s = example1();
        let opts = HoffmanOptions {
            cap: ALL_SUBSETS_CAP,
            bounds: BoxRegion::cube(2, -5.0, 5.0).unwrap(),
            samples: 2000,
            trials: 3,
            epsilon: 0.1,
            seed: 11,
        };
        let r = hoffman_verdict(&s, &opts).unwrap();
        assert_eq!(r.verdict, HoffmanVerdict::UniformlyBounded);
        assert!((r.tau - SQRT2 / 2.0).abs() < 1e-9);
        assert!(r.sampled_sigma.unwrap() >= r.hoffman_lower_bound - 1e-6);
        // small tilts cannot push sigma below tau - eps
        for t in &r.perturbation_trials {
            assert!(t.sigma_tilde >= SQRT2 / 2.0 - t.epsilon - 0.05);
        }
    }

    #[test]
    fn verdict_example2_not_uniformly_bounded() {
        let s = example2();
        let opts = HoffmanOptions {
            cap: ALL_SUBSETS_CAP,
            bounds: BoxRegion::cube(2, -2.0, 2.0).unwrap(),
            samples: 2000,
            trials: 4,
            epsilon: 0.1,
            seed: 13,
        };
        let r = hoffman_verdict(&s, &opts).unwrap();
        assert_eq!(r.verdict, HoffmanVerdict::NotUniformlyBounded);
        assert!(r
            .perturbation_trials
            .iter()
            .any(|t| t.sigma_tilde < t.epsilon));
    }
}
