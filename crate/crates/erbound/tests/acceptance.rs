//! End-to-end acceptance suite. Each test prints a single pass/fail line for
//! its criterion; a panic marks the criterion failed.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use erbound::fixtures;
use erbound::hoffman::{
    hoffman_verdict, perturbed_hoffman, subset_tau, HoffmanOptions, HoffmanVerdict, SubsetMode,
    ALL_SUBSETS_CAP,
};
use erbound::minimax::{min_norm_point, minimax_over_generators, sphere_search_minimax};
use erbound::model::{BoxRegion, PerturbationSpec, FEASIBILITY_TOL};
use erbound::moduli::{
    default_local_radii, distance_to_sublevel_set, global_modulus, local_modulus,
};
use erbound::stability::{local_stability_verdict, Classification};
use erbound::synth::{random_feasible_affine_system, random_point};
use erbound::vecmath::{norm, normalize};

const SQRT2: f64 = std::f64::consts::SQRT_2;

struct Criterion {
    number: usize,
    what: &'static str,
    started: Instant,
}

impl Criterion {
    fn start(number: usize, what: &'static str) -> Self {
        Criterion {
            number,
            what,
            started: Instant::now(),
        }
    }
    fn check(&self, ok: bool, detail: &str) {
        if !ok {
            emit(&format!(
                "criterion {}: FAIL — {} ({detail})",
                self.number, self.what
            ));
            panic!("criterion {} failed: {detail}", self.number);
        }
    }
    fn finish(self, budget_secs: f64) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if elapsed > budget_secs {
            emit(&format!(
                "criterion {}: FAIL — {} (took {elapsed:.2}s > {budget_secs}s)",
                self.number, self.what
            ));
            panic!("criterion {} exceeded its time budget", self.number);
        }
        emit(&format!(
            "criterion {}: pass — {} ({elapsed:.2}s)",
            self.number, self.what
        ));
    }
}

/// Writes straight to the stderr file descriptor so the line survives the
/// test harness's output capture.
fn emit(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn theta(system: &erbound::model::System, subset: &[usize]) -> (f64, Vec<f64>) {
    let constraints = system.require_affine().unwrap();
    let g: Vec<Vec<f64>> = subset.iter().map(|&t| constraints[t].0.clone()).collect();
    let mm = minimax_over_generators(&g).unwrap();
    (mm.value, mm.direction)
}

#[test]
fn criterion_01_example1_subset_minimax() {
    let c = Criterion::start(1, "three-constraint example: subset minimax table and tau");
    let s = fixtures::example1();
    let (t12, h12) = theta(&s, &[0, 1]);
    c.check((t12 + 1.0).abs() <= 1e-9, &format!("theta_12 = {t12}"));
    c.check(
        (h12[0]).abs() <= 1e-9 && (h12[1] + 1.0).abs() <= 1e-9,
        &format!("h_12 = {h12:?}"),
    );
    let (t13, h13) = theta(&s, &[0, 2]);
    c.check((t13 + 1.0).abs() <= 1e-9, &format!("theta_13 = {t13}"));
    c.check(
        (h13[0] + 1.0).abs() <= 1e-9 && (h13[1]).abs() <= 1e-9,
        &format!("h_13 = {h13:?}"),
    );
    let (t23, _) = theta(&s, &[1, 2]);
    c.check(
        (t23 + SQRT2 / 2.0).abs() <= 1e-9,
        &format!("theta_23 = {t23}"),
    );
    let (t123, _) = theta(&s, &[0, 1, 2]);
    c.check(
        (t123 - SQRT2 / 2.0).abs() <= 1e-9,
        &format!("theta_123 = {t123} (facet enumeration)"),
    );
    // dense sphere oracle at one million directions
    let constraints = s.require_affine().unwrap();
    let gens: Vec<Vec<f64>> = constraints.iter().map(|(a, _)| a.clone()).collect();
    let (sphere, _) = sphere_search_minimax(&gens, 1_000_000, 50, 123).unwrap();
    c.check(
        (t123 - sphere).abs() <= 1e-3,
        &format!("sphere oracle {sphere} vs exact {t123}"),
    );
    let report = subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP).unwrap();
    c.check(
        (report.tau - SQRT2 / 2.0).abs() <= 1e-9,
        &format!("tau = {}", report.tau),
    );
    let verdict = hoffman_verdict(
        &s,
        &HoffmanOptions {
            cap: ALL_SUBSETS_CAP,
            bounds: BoxRegion::cube(2, -5.0, 5.0).unwrap(),
            samples: 0,
            trials: 0,
            epsilon: 0.1,
            seed: 42,
        },
    )
    .unwrap();
    c.check(
        verdict.verdict == HoffmanVerdict::UniformlyBounded,
        &format!("verdict = {}", verdict.verdict),
    );
    c.finish(1.0);
}

#[test]
fn criterion_02_example2_degenerate_pair() {
    let c = Criterion::start(2, "opposing-pair example: zero minimax and perturbed sigma");
    let s = fixtures::example2();
    let mm = minimax_over_generators(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
    c.check(mm.value.abs() <= 1e-8, &format!("minimax = {}", mm.value));
    let verdict = hoffman_verdict(
        &s,
        &HoffmanOptions {
            cap: ALL_SUBSETS_CAP,
            bounds: BoxRegion::cube(2, -2.0, 2.0).unwrap(),
            samples: 0,
            trials: 0,
            epsilon: 0.1,
            seed: 42,
        },
    )
    .unwrap();
    c.check(
        verdict.verdict == HoffmanVerdict::NotUniformlyBounded,
        &format!("verdict = {}", verdict.verdict),
    );
    let eps = 0.1;
    let bounds = BoxRegion::cube(2, -2.0, 2.0).unwrap();
    let sigma = perturbed_hoffman(&s, &[0.0, 0.0], &[0.0, 1.0], eps, &bounds, 4000, 42).unwrap();
    c.check(
        sigma <= eps / SQRT2 + 0.01,
        &format!("perturbed sigma = {sigma}"),
    );
    let spec = PerturbationSpec::new(vec![0.0, 1.0], eps, vec![0.0, 0.0]).unwrap();
    let perturbed = s.base().with_perturbation(spec).unwrap();
    let x = [-eps, eps];
    let d = distance_to_sublevel_set(&perturbed, &x).unwrap();
    let ratio = perturbed.f(&x) / d.value;
    c.check(
        (ratio - eps / SQRT2).abs() <= 1e-9,
        &format!("exact ratio at (-0.1, 0.1) = {ratio}"),
    );
    c.finish(5.0);
}

#[test]
fn criterion_03_exponential_perturbed_modulus() {
    let c = Criterion::start(3, "perturbed exponential: small global modulus, ratio at -30");
    let s = fixtures::remark32();
    let bounds = BoxRegion::new(vec![-50.0], vec![10.0]).unwrap();
    let est = global_modulus(&s, &bounds, 4000, 42).unwrap();
    c.check(est.value <= 0.11, &format!("global modulus = {}", est.value));
    let d = distance_to_sublevel_set(&s, &[-30.0]).unwrap();
    let ratio = s.f(&[-30.0]) / d.value;
    c.check(
        (ratio - 0.1).abs() <= 1e-3,
        &format!("ratio at -30 = {ratio}"),
    );
    c.finish(5.0);
}

#[test]
fn criterion_04_zero_function_unstable() {
    let c = Criterion::start(4, "identically-zero constraint: infinite modulus, unstable");
    let s = fixtures::remark31();
    let x = [0.0];
    let est = local_modulus(&s, &x, &default_local_radii(&x), 2000, 42).unwrap();
    c.check(
        est.value == f64::INFINITY,
        &format!("local modulus = {}", est.value),
    );
    let eps = 0.1;
    let verdict = local_stability_verdict(&s, &x, eps).unwrap();
    c.check(
        verdict.gamma.abs() <= 1e-12,
        &format!("gamma = {}", verdict.gamma),
    );
    c.check(
        verdict.classification == Classification::Unstable,
        &format!("classification = {}", verdict.classification),
    );
    let witness = verdict.witness.expect("unstable verdict carries a witness");
    let perturbed = s.base().with_perturbation(witness).unwrap();
    let replayed = local_modulus(&perturbed, &x, &default_local_radii(&x), 2000, 42).unwrap();
    c.check(
        replayed.value <= 5.0 * eps + 0.05,
        &format!("replayed witness modulus = {}", replayed.value),
    );
    c.finish(10.0);
}

#[test]
fn criterion_05_duality_suite() {
    let c = Criterion::start(5, "duality: -gamma equals min-norm distance at infeasible points");
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 200 {
        seed += 1;
        let s = random_feasible_affine_system(seed);
        let n = s.dimension();
        let x = (0..40)
            .map(|_| random_point(n, 4.0, &mut rng))
            .find(|x| s.f(x) > FEASIBILITY_TOL);
        let Some(x) = x else { continue };
        let active = erbound::calculus::active_set_default(&s, &x).unwrap();
        let gamma = erbound::minimax::directional_minimax(&s, &x, &active.indices)
            .unwrap()
            .value;
        let gens: Vec<Vec<f64>> = active
            .indices
            .iter()
            .map(|&i| s.component_gradient(i, &x))
            .collect();
        let d = min_norm_point(&gens).unwrap().d;
        c.check(
            (-gamma - d).abs() <= 1e-8,
            &format!("seed {seed}: gamma = {gamma}, d = {d}"),
        );
        checked += 1;
    }
    c.finish(10.0);
}

#[test]
fn criterion_06_ratio_vs_beta_estimators() {
    let c = Criterion::start(6, "ratio-sampling and beta-formula global estimates agree");
    let mut passes = 0usize;
    let mut failures: Vec<String> = Vec::new();
    for seed in 0..50u64 {
        let s = random_feasible_affine_system(seed.wrapping_add(600));
        let bounds = BoxRegion::cube(s.dimension(), -4.0, 4.0).unwrap();
        let ratio = global_modulus(&s, &bounds, 5000, 42).unwrap().value;
        let beta = erbound::moduli::beta_modulus(
            &s,
            &erbound::moduli::Region::Global {
                bounds: bounds.clone(),
            },
            5000,
            42,
        )
        .unwrap()
        .value;
        if ratio.is_infinite() && beta.is_infinite() {
            passes += 1; // no infeasible samples in the box for either
            continue;
        }
        if (ratio - beta).abs() <= 0.1 * beta.max(1.0) {
            passes += 1;
        } else {
            failures.push(format!("seed {seed}: ratio = {ratio}, beta = {beta}"));
        }
    }
    for f in &failures {
        println!("  sampling slack exceeded: {f}");
    }
    c.check(passes >= 48, &format!("{passes}/50 within tolerance"));
    c.finish(60.0);
}

#[test]
fn criterion_07_stability_bound_under_perturbation() {
    let c = Criterion::start(7, "perturbed local modulus respects |gamma| - eps");
    let eps = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut trials = 0usize;
    let mut seed = 0u64;
    while trials < 20 {
        seed += 1;
        let s = random_feasible_affine_system(seed.wrapping_add(700));
        let n = s.dimension();
        let constraints = s.require_affine().unwrap();
        // boundary point: project a random infeasible point onto the set
        let Some(x) = (0..40)
            .map(|_| random_point(n, 4.0, &mut rng))
            .find(|x| s.f(x) > FEASIBILITY_TOL)
        else {
            continue;
        };
        let proj = erbound::qp::distance_to_polyhedron(&constraints, &x)
            .unwrap()
            .projection
            .unwrap();
        if s.f(&proj).abs() > 1e-9 {
            continue;
        }
        let active = erbound::calculus::active_set(&s, &proj, 1e-7).unwrap();
        let gamma = erbound::minimax::directional_minimax(&s, &proj, &active.indices)
            .unwrap()
            .value;
        if gamma >= -0.2 {
            continue; // want clearly stable points
        }
        let raw = random_point(n, 1.0, &mut rng);
        let Some(u) = normalize(&raw, 1e-9) else {
            continue;
        };
        let spec = PerturbationSpec::new(u, eps, proj.clone()).unwrap();
        let perturbed = s.base().with_perturbation(spec).unwrap();
        let est = local_modulus(&perturbed, &proj, &default_local_radii(&proj), 2000, seed)
            .unwrap()
            .value;
        c.check(
            est >= gamma.abs() - eps - 0.05,
            &format!("seed {seed}: estimate {est} < |{gamma}| - {eps} - 0.05"),
        );
        trials += 1;
    }
    c.finish(60.0);
}

#[test]
fn criterion_08_sigma_dominates_tau() {
    let c = Criterion::start(8, "sampled Hoffman constant dominates the subset lower bound");
    for seed in 0..50u64 {
        let s = random_feasible_affine_system(seed.wrapping_add(800));
        let tau = subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP)
            .unwrap()
            .tau;
        let bounds = BoxRegion::cube(s.dimension(), -4.0, 4.0).unwrap();
        let sigma = global_modulus(&s, &bounds, 2000, 42).unwrap().value;
        c.check(
            sigma >= tau - 1e-6,
            &format!("seed {seed}: sigma = {sigma}, tau = {tau}"),
        );
    }
    c.finish(60.0);
}

#[test]
fn criterion_09_exact_vs_sphere_oracle() {
    let c = Criterion::start(9, "exact minimax agrees with the dense sphere oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for case in 0..100usize {
        let m = rng.gen_range(2..=6usize);
        let mut gens: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .filter(|g| norm(g) > 1e-3)
            .collect();
        if gens.len() < 2 {
            continue;
        }
        if case % 3 == 0 {
            // force the origin into the hull with an opposing pair
            let g = gens[0].clone();
            gens.push(vec![-g[0], -g[1]]);
        }
        let exact = minimax_over_generators(&gens).unwrap().value;
        let (sphere, _) = sphere_search_minimax(&gens, 100_000, 40, case as u64).unwrap();
        c.check(
            (exact - sphere).abs() <= 1e-3,
            &format!("case {case}: exact = {exact}, sphere = {sphere}, gens = {gens:?}"),
        );
    }
    c.finish(30.0);
}

#[test]
fn criterion_10_repro_determinism() {
    let c = Criterion::start(10, "repro payloads are byte-identical across runs");
    let bin = env!("CARGO_BIN_EXE_erbound");
    for case in ["example1", "example2", "remark31", "remark32"] {
        let payload = |_: usize| {
            let out = std::process::Command::new(bin)
                .args(["repro", case, "--seed", "42"])
                .output()
                .expect("binary runs");
            assert!(out.status.success(), "repro {case} failed");
            let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
            serde_json::to_string(&v["payload"]).unwrap()
        };
        let a = payload(0);
        let b = payload(1);
        c.check(a == b, &format!("case {case}: payloads differ"));
    }
    c.finish(120.0);
}
