//! Active index sets, directional derivatives of the max-function, and
//! subdifferential generator sets.

use crate::error::{Error, Result};
use crate::model::System;
use crate::vecmath::{add_scaled, dot};

/// Default active-set tolerance: ties are exact in constructed examples but
/// perturbed by round-off in sampled ones.
pub fn default_eta(f_value: f64) -> f64 {
    1e-9 * f_value.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub point: Vec<f64>,
    /// Indices into the system's ordered label list.
    pub indices: Vec<usize>,
    pub eta: f64,
    pub f_value: f64,
}

impl ActiveSet {
    pub fn labels<'a>(&self, system: &'a System) -> Vec<&'a str> {
        self.indices
            .iter()
            .map(|&i| system.labels()[i].as_str())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub gradients: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
}

pub fn active_set(system: &System, x: &[f64], eta: f64) -> Result<ActiveSet> {
    if eta < 0.0 {
        return Err(Error::Invalid("eta must be >= 0".into()));
    }
    let ev = system.evaluate(x)?;
    let indices: Vec<usize> = ev
        .component_values
        .iter()
        .enumerate()
        .filter(|(_, v)| ev.f_value - **v <= eta)
        .map(|(i, _)| i)
        .collect();
    Ok(ActiveSet {
        point: x.to_vec(),
        indices,
        eta,
        f_value: ev.f_value,
    })
}

pub fn active_set_default(system: &System, x: &[f64]) -> Result<ActiveSet> {
    let f = system.f(x);
    active_set(system, x, default_eta(f))
}

/// One exact gradient per active label, in active-set order.
pub fn generators(system: &System, active: &ActiveSet) -> GeneratorSet {
    let gradients = active
        .indices
        .iter()
        .map(|&i| system.component_gradient(i, &active.point))
        .collect();
    GeneratorSet {
        gradients,
        indices: active.indices.clone(),
    }
}

/// d+f(x, h) = max over active t of <grad f_t(x), h>. Computed from active
/// gradients, never from limits; the finite-difference quotient below is
/// kept as an independent oracle.
pub fn directional_derivative(system: &System, x: &[f64], h: &[f64]) -> Result<f64> {
    let active = active_set_default(system, x)?;
    let gens = generators(system, &active);
    Ok(gens
        .gradients
        .iter()
        .map(|g| dot(g, h))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Difference quotient (f(x + t h) - f(x)) / t at the smallest step, with a
/// monotone non-increase assertion across the step schedule. Convexity makes
/// the quotient nonincreasing as t -> 0+, so a violation signals an
/// evaluation bug rather than round-off.
pub fn finite_difference_dd(
    system: &System,
    x: &[f64],
    h: &[f64],
    steps: &[f64],
) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::Invalid("steps must be non-empty".into()));
    }
    for w in steps.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Invalid("steps must be strictly decreasing".into()));
        }
    }
    if steps[steps.len() - 1] <= 0.0 {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    let fx = system.f(x);
    let mut prev: Option<(f64, f64)> = None;
    let mut quotient = f64::NAN;
    for &t in steps {
        let q = (system.f(&add_scaled(x, t, h)) - fx) / t;
        if let Some((tp, qp)) = prev {
            if q > qp + 1e-10 {
                return Err(Error::QuotientMonotonicity {
                    step_small: t,
                    q_small: q,
                    step_large: tp,
                    q_large: qp,
                });
            }
        }
        prev = Some((t, q));
        quotient = q;
    }
    Ok(quotient)
}
