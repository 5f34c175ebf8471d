//! Seeded generators for synthetic affine systems, shared by the oracle
//! command and the property suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{ComponentFunction, IndexSet, System};
use crate::vecmath::norm;

/// Random affine system with dimension in {2,3}, 2..=6 constraints, and
/// coefficients in [-3,3]. Deterministic in the seed.
pub fn random_affine_system(seed: u64) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(2..=3usize);
        let m = rng.gen_range(2..=6usize);
        let mut components = Vec::with_capacity(m);
        let mut ok = true;
        for _ in 0..m {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if norm(&a) < 1e-3 {
                ok = false;
                break;
            }
            let b: f64 = rng.gen_range(-3.0..3.0);
            components.push(ComponentFunction::Affine { a, b });
        }
        if !ok {
            continue;
        }
        let labels = (1..=m).map(|i| i.to_string()).collect();
        let system = System::new(n, IndexSet::finite(labels).unwrap(), components).unwrap();
        return system;
    }
}

/// Like `random_affine_system`, but guaranteed feasible: constraints are
/// shifted so a random anchor point satisfies them all strictly.
pub fn random_feasible_affine_system(seed: u64) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let base = random_affine_system(seed);
    let n = base.dimension();
    let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let margin = rng.gen_range(0.1..1.0);
    let components: Vec<ComponentFunction> = (0..base.num_components())
        .map(|i| match base.component(i) {
            ComponentFunction::Affine { a, .. } => {
                let b = crate::vecmath::dot(a, &anchor) + margin;
                ComponentFunction::Affine { a: a.clone(), b }
            }
            other => other.clone(),
        })
        .collect();
    System::new(n, base.index_set().clone(), components).unwrap()
}

/// Random point in the centered cube of the given half-width.
pub fn random_point(n: usize, half_width: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FEASIBILITY_TOL;

    #[test]
    fn generator_is_deterministic() {
        let a = random_affine_system(7);
        let b = random_affine_system(7);
        assert_eq!(a.dimension(), b.dimension());
        for i in 0..a.num_components() {
            assert_eq!(
                format!("{:?}", a.component(i)),
                format!("{:?}", b.component(i))
            );
        }
    }

    #[test]
    fn feasible_variant_is_feasible() {
        for seed in 0..20 {
            let s = random_feasible_affine_system(seed);
            let c = s.require_affine().unwrap();
            let start = vec![0.0; s.dimension()];
            match crate::qp::polyhedron_feasible_point(&c, &start).unwrap() {
                crate::qp::Feasibility::Point(p) => {
                    assert!(s.f(&p) <= FEASIBILITY_TOL);
                }
                crate::qp::Feasibility::Infeasible => panic!("seed {seed} infeasible"),
            }
        }
    }
}
