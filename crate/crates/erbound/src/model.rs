//! Constraint systems: component functions, the max-aggregate, file format
//! ingestion, and feasibility probing.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::vecmath::{add_scaled, all_finite, dot, norm, sub};

/// f(x) <= FEASIBILITY_TOL counts as feasible (round-off at constraint boundaries).
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum IndexOrigin {
    Finite,
    GridOnInterval { lower: f64, upper: f64, points: usize },
}

#[derive(Debug, Clone)]
pub struct IndexSet {
    labels: Vec<String>,
    origin: IndexOrigin,
}

impl IndexSet {
    pub fn finite(labels: Vec<String>) -> Result<Self> {
        Self::validated(labels, IndexOrigin::Finite)
    }

    fn validated(labels: Vec<String>, origin: IndexOrigin) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyComponentList);
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::Invalid(format!("duplicate index label `{l}`")));
            }
        }
        Ok(IndexSet { labels, origin })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn origin(&self) -> &IndexOrigin {
        &self.origin
    }
}

#[derive(Debug, Clone)]
pub enum ComponentFunction {
    /// f(x) = <a, x> - b
    Affine { a: Vec<f64>, b: f64 },
    /// f(x) = exp(<a, x> + b) - c
    ExpAffine { a: Vec<f64>, b: f64, c: f64 },
    /// f(x) = 1/2 <x, Qx> + <q, x> + r with Q symmetric PSD
    QuadraticConvex {
        q: Vec<Vec<f64>>,
        lin: Vec<f64>,
        r: f64,
    },
}

impl ComponentFunction {
    pub fn dim(&self) -> usize {
        match self {
            ComponentFunction::Affine { a, .. } => a.len(),
            ComponentFunction::ExpAffine { a, .. } => a.len(),
            ComponentFunction::QuadraticConvex { lin, .. } => lin.len(),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, ComponentFunction::Affine { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ComponentFunction::Affine { a, b } => dot(a, x) - b,
            ComponentFunction::ExpAffine { a, b, c } => (dot(a, x) + b).exp() - c,
            ComponentFunction::QuadraticConvex { q, lin, r } => {
                let mut quad = 0.0;
                for (row, xi) in q.iter().zip(x) {
                    quad += xi * dot(row, x);
                }
                0.5 * quad + dot(lin, x) + r
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ComponentFunction::Affine { a, .. } => a.clone(),
            ComponentFunction::ExpAffine { a, b, .. } => {
                let s = (dot(a, x) + b).exp();
                a.iter().map(|ai| s * ai).collect()
            }
            ComponentFunction::QuadraticConvex { q, lin, .. } => q
                .iter()
                .zip(lin)
                .map(|(row, qi)| dot(row, x) + qi)
                .collect(),
        }
    }
}

/// Linear perturbation G(t,x) = f_t(x) + eps * <u*, x - anchor>, applied
/// uniformly to every component.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub u_star: Vec<f64>,
    pub epsilon: f64,
    pub anchor: Vec<f64>,
}

impl PerturbationSpec {
    pub fn new(u_star: Vec<f64>, epsilon: f64, anchor: Vec<f64>) -> Result<Self> {
        let n = norm(&u_star);
        if n > 1.0 + 1e-12 {
            return Err(Error::PerturbationTooLarge { norm: n });
        }
        if epsilon < 0.0 {
            return Err(Error::Invalid("epsilon must be >= 0".into()));
        }
        if u_star.len() != anchor.len() {
            return Err(Error::DimensionMismatch {
                expected: u_star.len(),
                got: anchor.len(),
                context: "perturbation anchor".into(),
            });
        }
        Ok(PerturbationSpec {
            u_star,
            epsilon,
            anchor,
        })
    }

    pub fn term(&self, x: &[f64]) -> f64 {
        self.epsilon * dot(&self.u_star, &sub(x, &self.anchor))
    }
}

#[derive(Debug, Clone)]
pub struct System {
    dimension: usize,
    index_set: IndexSet,
    components: Vec<ComponentFunction>,
    perturbation: Option<PerturbationSpec>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f_value: f64,
    pub component_values: Vec<f64>,
}

impl Evaluation {
    pub fn by_label(&self, labels: &[String]) -> BTreeMap<String, f64> {
        labels
            .iter()
            .cloned()
            .zip(self.component_values.iter().copied())
            .collect()
    }
}

impl System {
    pub fn new(
        dimension: usize,
        index_set: IndexSet,
        components: Vec<ComponentFunction>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if components.is_empty() {
            return Err(Error::EmptyComponentList);
        }
        if components.len() != index_set.len() {
            return Err(Error::Invalid(format!(
                "{} labels but {} components",
                index_set.len(),
                components.len()
            )));
        }
        for (i, c) in components.iter().enumerate() {
            if c.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: c.dim(),
                    context: format!("component `{}`", index_set.labels()[i]),
                });
            }
        }
        Ok(System {
            dimension,
            index_set,
            components,
            perturbation: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn labels(&self) -> &[String] {
        self.index_set.labels()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ComponentFunction {
        &self.components[i]
    }

    pub fn perturbation(&self) -> Option<&PerturbationSpec> {
        self.perturbation.as_ref()
    }

    pub fn with_perturbation(&self, p: PerturbationSpec) -> Result<System> {
        if p.u_star.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: p.u_star.len(),
                context: "perturbation u*".into(),
            });
        }
        let mut s = self.clone();
        s.perturbation = Some(p);
        Ok(s)
    }

    /// Strips the perturbation, returning the base system.
    pub fn base(&self) -> System {
        let mut s = self.clone();
        s.perturbation = None;
        s
    }

    pub fn is_affine(&self) -> bool {
        self.components.iter().all(|c| c.is_affine())
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let base = self.components[i].value(x);
        match &self.perturbation {
            Some(p) => base + p.term(x),
            None => base,
        }
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = self.components[i].gradient(x);
        if let Some(p) = &self.perturbation {
            for (gi, ui) in g.iter_mut().zip(&p.u_star) {
                *gi += p.epsilon * ui;
            }
        }
        g
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
                context: "evaluation point".into(),
            });
        }
        if !all_finite(x) {
            return Err(Error::NonFiniteInput);
        }
        let component_values: Vec<f64> = (0..self.components.len())
            .map(|i| self.component_value(i, x))
            .collect();
        let f_value = component_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Evaluation {
            f_value,
            component_values,
        })
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        (0..self.components.len())
            .map(|i| self.component_value(i, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Effective affine constraints <a, x> <= b, with any linear perturbation
    /// folded into the coefficients. None when a component is not affine.
    pub fn affine_constraints(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        let mut out = Vec::with_capacity(self.components.len());
        for c in &self.components {
            match c {
                ComponentFunction::Affine { a, b } => {
                    let (mut a, mut b) = (a.clone(), *b);
                    if let Some(p) = &self.perturbation {
                        for (ai, ui) in a.iter_mut().zip(&p.u_star) {
                            *ai += p.epsilon * ui;
                        }
                        b += p.epsilon * dot(&p.u_star, &p.anchor);
                    }
                    out.push((a, b));
                }
                _ => return None,
            }
        }
        Some(out)
    }

    pub fn require_affine(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        match self.affine_constraints() {
            Some(c) => Ok(c),
            None => {
                let label = self
                    .components
                    .iter()
                    .position(|c| !c.is_affine())
                    .map(|i| self.index_set.labels()[i].clone())
                    .unwrap_or_default();
                Err(Error::NotAffine { label })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum FeasibilityStatus {
    NonEmpty { witness: Vec<f64> },
    Empty,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct SolutionSetHandle {
    pub status: FeasibilityStatus,
    pub best_f: f64,
    pub best_point: Vec<f64>,
}

impl SolutionSetHandle {
    pub fn witness(&self) -> Option<&[f64]> {
        match &self.status {
            FeasibilityStatus::NonEmpty { witness } => Some(witness),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Invalid("box bound lengths differ".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l > u || !l.is_finite() || !u.is_finite() {
                return Err(Error::DegenerateBox { axis: i });
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if l == u { *l } else { rng.gen_range(*l..*u) })
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// Monte-Carlo feasibility probe with a few subgradient-descent refinement
/// steps on the best sample. Never certifies emptiness from sampling.
pub fn feasibility_probe(
    system: &System,
    region: &BoxRegion,
    samples: usize,
    seed: u64,
) -> Result<SolutionSetHandle> {
    if samples < 1 {
        return Err(Error::Invalid("samples must be >= 1".into()));
    }
    if region.dim() != system.dimension() {
        return Err(Error::DimensionMismatch {
            expected: system.dimension(),
            got: region.dim(),
            context: "probe box".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = region.sample(&mut rng);
    let mut best_f = system.f(&best);
    for _ in 1..samples {
        let x = region.sample(&mut rng);
        let fx = system.f(&x);
        if fx < best_f {
            best_f = fx;
            best = x;
        }
    }
    // Subgradient descent refinement with backtracking.
    let mut x = best.clone();
    let mut fx = best_f;
    let mut step = 1.0_f64.max(region.diameter() / 10.0);
    for _ in 0..200 {
        if fx <= FEASIBILITY_TOL {
            break;
        }
        let ev = system.evaluate(&x)?;
        let top = ev
            .component_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let g = system.component_gradient(top, &x);
        let gn = norm(&g);
        if gn < 1e-14 {
            break;
        }
        let mut moved = false;
        let mut s = step;
        for _ in 0..40 {
            let cand = add_scaled(&x, -s / gn, &g);
            let fc = system.f(&cand);
            if fc < fx {
                x = cand;
                fx = fc;
                step = s * 1.5;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if fx < best_f {
        best = x;
        best_f = fx;
    }
    let status = if best_f <= FEASIBILITY_TOL {
        FeasibilityStatus::NonEmpty {
            witness: best.clone(),
        }
    } else {
        FeasibilityStatus::Unknown
    };
    Ok(SolutionSetHandle {
        status,
        best_f,
        best_point: best,
    })
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    dimension: usize,
    kind: String,
    #[serde(default)]
    constraints: Option<Vec<RawConstraint>>,
    #[serde(default)]
    components: Option<Vec<RawComponent>>,
    #[serde(default)]
    parameter: Option<RawParameter>,
    #[serde(default)]
    perturbation: Option<RawPerturbation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    a: Vec<f64>,
    b: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "type")]
enum RawComponent {
    #[serde(rename = "affine")]
    Affine { a: Vec<f64>, b: f64 },
    #[serde(rename = "exp_affine")]
    ExpAffine { a: Vec<f64>, b: f64, c: f64 },
    #[serde(rename = "quadratic")]
    Quadratic {
        q: Vec<Vec<f64>>,
        lin: Vec<f64>,
        r: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameter {
    interval: [f64; 2],
    grid: usize,
    a_coeffs: Vec<Vec<f64>>,
    b_coeffs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    u_star: Vec<f64>,
    epsilon: f64,
    anchor: Vec<f64>,
}

fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    // ascending degree
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Symmetric PSD check: all eigenvalues >= -1e-10, verified at load.
fn check_psd(q: &[Vec<f64>], path: &str) -> Result<()> {
    let n = q.len();
    for (i, row) in q.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Parse {
                path: path.to_string(),
                message: "Q is not square".into(),
            });
        }
        for j in 0..n {
            if (q[i][j] - q[j][i]).abs() > 1e-9 * (1.0 + q[i][j].abs()) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    message: format!("Q is not symmetric at ({i},{j})"),
                });
            }
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (q[i][j] + q[j][i]));
    let eig = m.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 {
        return Err(Error::NotPsd {
            path: path.to_string(),
            min_eig,
        });
    }
    Ok(())
}

pub fn parse_system(document: &str) -> Result<System> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| Error::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let n = raw.dimension;
    if n == 0 {
        return Err(Error::Parse {
            path: "$.dimension".into(),
            message: "dimension must be positive".into(),
        });
    }
    let (labels, components, origin) = match raw.kind.as_str() {
        "linear" => {
            let cons = raw.constraints.ok_or_else(|| Error::Parse {
                path: "$.constraints".into(),
                message: "missing for kind \"linear\"".into(),
            })?;
            if cons.is_empty() {
                return Err(Error::EmptyComponentList);
            }
            let mut labels = Vec::new();
            let mut comps = Vec::new();
            for (i, c) in cons.into_iter().enumerate() {
                if c.a.len() != n {
                    return Err(Error::Parse {
                        path: format!("$.constraints[{i}].a"),
                        message: format!("expected {} coordinates, got {}", n, c.a.len()),
                    });
                }
                labels.push((i + 1).to_string());
                comps.push(ComponentFunction::Affine { a: c.a, b: c.b });
            }
            (labels, comps, IndexOrigin::Finite)
        }
        "max_convex" => {
            let raw_comps = raw.components.ok_or_else(|| Error::Parse {
                path: "$.components".into(),
                message: "missing for kind \"max_convex\"".into(),
            })?;
            if raw_comps.is_empty() {
                return Err(Error::EmptyComponentList);
            }
            let mut labels = Vec::new();
            let mut comps = Vec::new();
            for (i, rc) in raw_comps.into_iter().enumerate() {
                let path = format!("$.components[{i}]");
                let comp = match rc {
                    RawComponent::Affine { a, b } => ComponentFunction::Affine { a, b },
                    RawComponent::ExpAffine { a, b, c } => {
                        ComponentFunction::ExpAffine { a, b, c }
                    }
                    RawComponent::Quadratic { q, lin, r } => {
                        check_psd(&q, &path)?;
                        ComponentFunction::QuadraticConvex { q, lin, r }
                    }
                };
                if comp.dim() != n {
                    return Err(Error::Parse {
                        path,
                        message: format!("expected dimension {}, got {}", n, comp.dim()),
                    });
                }
                labels.push((i + 1).to_string());
                comps.push(comp);
            }
            (labels, comps, IndexOrigin::Finite)
        }
        "parametric_linear" => {
            let p = raw.parameter.ok_or_else(|| Error::Parse {
                path: "$.parameter".into(),
                message: "missing for kind \"parametric_linear\"".into(),
            })?;
            if p.grid < 2 {
                return Err(Error::Parse {
                    path: "$.parameter.grid".into(),
                    message: "grid must have at least 2 points".into(),
                });
            }
            if p.interval[0] >= p.interval[1] {
                return Err(Error::Parse {
                    path: "$.parameter.interval".into(),
                    message: "interval must satisfy lo < hi".into(),
                });
            }
            if p.a_coeffs.len() != n {
                return Err(Error::Parse {
                    path: "$.parameter.a_coeffs".into(),
                    message: format!(
                        "expected one polynomial per coordinate ({} lists), got {}",
                        n,
                        p.a_coeffs.len()
                    ),
                });
            }
            for (i, poly) in p.a_coeffs.iter().enumerate() {
                if poly.is_empty() {
                    return Err(Error::Parse {
                        path: format!("$.parameter.a_coeffs[{i}]"),
                        message: "malformed polynomial spec: empty coefficient list".into(),
                    });
                }
            }
            if p.b_coeffs.is_empty() {
                return Err(Error::Parse {
                    path: "$.parameter.b_coeffs".into(),
                    message: "malformed polynomial spec: empty coefficient list".into(),
                });
            }
            let (lo, hi) = (p.interval[0], p.interval[1]);
            let k = p.grid;
            let mut labels = Vec::new();
            let mut comps = Vec::new();
            for j in 0..k {
                let t = lo + (hi - lo) * (j as f64) / ((k - 1) as f64);
                let a: Vec<f64> = p.a_coeffs.iter().map(|poly| eval_poly(poly, t)).collect();
                let b = eval_poly(&p.b_coeffs, t);
                labels.push(format!("t={t}"));
                comps.push(ComponentFunction::Affine { a, b });
            }
            (
                labels,
                comps,
                IndexOrigin::GridOnInterval {
                    lower: lo,
                    upper: hi,
                    points: k,
                },
            )
        }
        other => {
            return Err(Error::Parse {
                path: "$.kind".into(),
                message: format!("unknown kind `{other}`"),
            })
        }
    };
    let index_set = IndexSet::validated(labels, origin)?;
    let mut system = System::new(n, index_set, components)?;
    if let Some(rp) = raw.perturbation {
        let p = PerturbationSpec::new(rp.u_star, rp.epsilon, rp.anchor)?;
        system = system.with_perturbation(p)?;
    }
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn example1() -> System {
        crate::fixtures::example1()
    }

    #[test]
    fn parse_linear_example() {
        let doc = r#"{"dimension":2,"kind":"linear","constraints":[
            {"a":[1,1],"b":1},{"a":[-2,1],"b":2},{"a":[1,-2],"b":2}]}"#;
        let s = parse_system(doc).unwrap();
        assert_eq!(s.dimension(), 2);
        assert_eq!(s.num_components(), 3);
        assert!(s.is_affine());
        assert_eq!(s.labels(), &["1", "2", "3"]);
    }

    #[test]
    fn parse_rejects_empty_constraints() {
        let doc = r#"{"dimension":2,"kind":"linear","constraints":[]}"#;
        assert!(matches!(
            parse_system(doc),
            Err(Error::EmptyComponentList)
        ));
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let doc = r#"{"dimension":2,"kind":"linear","constraints":[{"a":[1,1],"b":1}],"extra":1}"#;
        assert!(matches!(parse_system(doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_rejects_dimension_mismatch() {
        let doc = r#"{"dimension":3,"kind":"linear","constraints":[{"a":[1,1],"b":1}]}"#;
        assert!(matches!(parse_system(doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_rejects_non_psd_quadratic() {
        let doc = r#"{"dimension":1,"kind":"max_convex","components":[
            {"type":"quadratic","q":[[-1.0]],"lin":[0.0],"r":0.0}]}"#;
        assert!(matches!(parse_system(doc), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn parametric_expansion_on_grid() {
        let doc = r#"{"dimension":2,"kind":"parametric_linear","parameter":{
            "interval":[0.0,1.0],"grid":3,"a_coeffs":[[0.0,1.0],[1.0,-1.0]],"b_coeffs":[1.0]}}"#;
        let s = parse_system(doc).unwrap();
        assert_eq!(s.num_components(), 3);
        // t in {0, 0.5, 1}: a(t) = (t, 1-t), b = 1
        let expected = [
            (vec![0.0, 1.0], 1.0),
            (vec![0.5, 0.5], 1.0),
            (vec![1.0, 0.0], 1.0),
        ];
        for (i, (a, b)) in expected.iter().enumerate() {
            match s.component(i) {
                ComponentFunction::Affine { a: ca, b: cb } => {
                    assert_eq!(ca, a);
                    assert_eq!(cb, b);
                }
                _ => panic!("expected affine"),
            }
        }
        assert!(matches!(
            s.index_set().origin(),
            IndexOrigin::GridOnInterval { points: 3, .. }
        ));
    }

    #[test]
    fn evaluate_example1_points() {
        let s = example1();
        let ev = s.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(ev.f_value, -1.0);
        assert_eq!(ev.component_values, vec![-1.0, -2.0, -2.0]);
        let ev = s.evaluate(&[1.0, 0.0]).unwrap();
        assert_eq!(ev.f_value, 0.0);
        assert_eq!(ev.component_values, vec![0.0, -4.0, -1.0]);
    }

    #[test]
    fn evaluate_exp_affine_at_origin() {
        let s = System::new(
            1,
            IndexSet::finite(vec!["1".into()]).unwrap(),
            vec![ComponentFunction::ExpAffine {
                a: vec![1.0],
                b: 0.0,
                c: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(s.f(&[0.0]), 0.0);
    }

    #[test]
    fn evaluate_rejects_non_finite() {
        let s = example1();
        assert!(matches!(
            s.evaluate(&[f64::NAN, 0.0]),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn probe_finds_witness_for_example1() {
        let s = example1();
        let h = feasibility_probe(&s, &BoxRegion::cube(2, -5.0, 5.0).unwrap(), 1000, 42).unwrap();
        let w = h.witness().expect("feasible system");
        assert!(s.f(w) <= FEASIBILITY_TOL);
    }

    #[test]
    fn probe_cannot_certify_inconsistent_pair() {
        let s = System::new(
            1,
            IndexSet::finite(vec!["1".into(), "2".into()]).unwrap(),
            vec![
                ComponentFunction::Affine { a: vec![1.0], b: 0.0 },
                ComponentFunction::Affine {
                    a: vec![-1.0],
                    b: -1.0,
                },
            ],
        )
        .unwrap();
        let h = feasibility_probe(&s, &BoxRegion::cube(1, -5.0, 5.0).unwrap(), 500, 1).unwrap();
        assert!(matches!(h.status, FeasibilityStatus::Unknown));
    }

    #[test]
    fn probe_halfline_feasible() {
        let s = System::new(
            1,
            IndexSet::finite(vec!["1".into()]).unwrap(),
            vec![ComponentFunction::Affine { a: vec![1.0], b: 0.0 }],
        )
        .unwrap();
        let h = feasibility_probe(&s, &BoxRegion::cube(1, -1.0, 1.0).unwrap(), 200, 3).unwrap();
        assert!(h.witness().is_some());
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            BoxRegion::new(vec![1.0], vec![0.0]),
            Err(Error::DegenerateBox { axis: 0 })
        ));
    }

    #[test]
    fn perturbation_shifts_values_uniformly() {
        let s = example1();
        let p = PerturbationSpec::new(vec![0.0, 1.0], 0.1, vec![0.0, 0.0]).unwrap();
        let sp = s.with_perturbation(p).unwrap();
        let x = [0.7, -1.3];
        let shift = 0.1 * (-1.3);
        let base = s.evaluate(&x).unwrap();
        let pert = sp.evaluate(&x).unwrap();
        for (b, q) in base.component_values.iter().zip(&pert.component_values) {
            assert!((q - b - shift).abs() < 1e-12);
        }
        assert!((pert.f_value - base.f_value - shift).abs() < 1e-12);
    }
}
