//! Small dense-vector helpers shared across the crate.

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn scale(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|a| a * s).collect()
}

/// x + s*y
pub fn add_scaled(x: &[f64], s: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + s * b).collect()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Returns the unit vector x/||x||, or None when ||x|| is below `tol`.
pub fn normalize(x: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = norm(x);
    if n <= tol {
        None
    } else {
        Some(scale(x, 1.0 / n))
    }
}

/// Strict lexicographic comparison used for deterministic tie-breaking
/// between minimizing directions.
pub fn lex_less(x: &[f64], y: &[f64]) -> bool {
    for (a, b) in x.iter().zip(y) {
        if a < b {
            return true;
        }
        if a > b {
            return false;
        }
    }
    false
}

/// Lexicographically smallest unit vector inside the span of `basis`
/// (an orthonormal set). Greedy per coordinate: push the first coordinate
/// as negative as the subspace allows, then recurse on the remainder.
pub fn lex_min_unit_in_span(basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.is_empty() {
        return None;
    }
    let n = basis[0].len();
    let active: Vec<Vec<f64>> = basis.to_vec();
    let mut accum: Vec<f64> = vec![0.0; n];
    let remaining = 1.0_f64;
    for coord in 0..n {
        if active.is_empty() || remaining <= 1e-14 {
            break;
        }
        // Projection of -e_coord onto the current subspace.
        let mut proj = vec![0.0; n];
        for b in &active {
            let c = -b[coord];
            for (p, bv) in proj.iter_mut().zip(b) {
                *p += c * bv;
            }
        }
        let pn = norm(&proj);
        if pn > 1e-12 {
            let dir = scale(&proj, 1.0 / pn);
            let step = remaining.sqrt();
            for (a, d) in accum.iter_mut().zip(&dir) {
                *a += step * d;
            }
            break;
        } else {
            // Subspace has no reach along e_coord; drop nothing, continue.
            continue;
        }
    }
    normalize(&accum, 1e-14)
}

/// Orthonormal basis of the span of `vectors` via modified Gram-Schmidt.
pub fn orthonormal_span(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let nw = norm(&w);
        if nw > tol {
            basis.push(scale(&w, 1.0 / nw));
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of span(`vectors`) in R^n.
pub fn orthonormal_complement(vectors: &[Vec<f64>], n: usize, tol: f64) -> Vec<Vec<f64>> {
    let span = orthonormal_span(vectors, tol);
    let mut comp: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        for b in span.iter().chain(comp.iter()) {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let nw = norm(&w);
        if nw > tol {
            comp.push(scale(&w, 1.0 / nw));
        }
    }
    comp
}
