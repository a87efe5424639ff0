//! Central-difference gradient checking for hand-derived backward passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// A collection of named flat parameter tensors that can be perturbed in place.
pub trait ParameterSet {
    fn tensor_count(&self) -> usize;
    fn tensor_name(&self, index: usize) -> String;
    fn tensor(&self, index: usize) -> &[f64];
    fn tensor_mut(&mut self, index: usize) -> &mut [f64];
}

/// Free-standing named tensor, handy for checking small closed-form losses.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

impl ParameterSet for Vec<NamedTensor> {
    fn tensor_count(&self) -> usize {
        self.len()
    }

    fn tensor_name(&self, index: usize) -> String {
        self[index].name.clone()
    }

    fn tensor(&self, index: usize) -> &[f64] {
        &self[index].values
    }

    fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self[index].values
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates probed per tensor; smaller tensors are checked exhaustively.
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_coords_per_tensor: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `tensor[coordinate]` of the worst probe, empty if nothing was checked.
    pub worst_param: String,
    pub num_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// Every probed coordinate is restored to its original bit pattern before
/// the next probe, so `params` is unchanged on return.
pub fn finite_diff_check<P, G, F>(
    params: &mut P,
    analytic: &G,
    mut loss: F,
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    P: ParameterSet + ?Sized,
    G: ParameterSet + ?Sized,
    F: FnMut(&P) -> f64,
{
    if options.epsilon.is_nan() || options.epsilon <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference epsilon must be positive, got {}",
            options.epsilon
        )));
    }
    if params.tensor_count() != analytic.tensor_count() {
        return Err(Error::DimensionMismatch {
            op: "finite_diff_check (tensor count)",
            expected: params.tensor_count(),
            actual: analytic.tensor_count(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        num_checked: 0,
    };
    let eps = options.epsilon;

    for ti in 0..params.tensor_count() {
        let len = params.tensor(ti).len();
        if analytic.tensor(ti).len() != len {
            return Err(Error::DimensionMismatch {
                op: "finite_diff_check (tensor shape)",
                expected: len,
                actual: analytic.tensor(ti).len(),
            });
        }
        let coords: Vec<usize> = if len <= options.max_coords_per_tensor {
            (0..len).collect()
        } else {
            let mut picked = sample(&mut rng, len, options.max_coords_per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };

        for ci in coords {
            let original = params.tensor(ti)[ci];
            params.tensor_mut(ti)[ci] = original + eps;
            let plus = loss(params);
            params.tensor_mut(ti)[ci] = original - eps;
            let minus = loss(params);
            params.tensor_mut(ti)[ci] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while probing {}[{ci}]",
                    params.tensor_name(ti)
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic.tensor(ti)[ci], numeric);
            report.num_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst_param = format!("{}[{ci}]", params.tensor_name(ti));
            }
        }
    }
    Ok(report)
}
