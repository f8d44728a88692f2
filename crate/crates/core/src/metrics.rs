//! Social welfare comparison and fairness indices.

use crate::error::{invalid, Result};
use crate::model::{AssignmentInstance, Allocation};

/// Gini coefficient by the exact double sum
/// `sum_n sum_m |x_n - x_m| / (2 N sum_n x_n)`.
///
/// An all-zero vector counts as perfectly equal (0).
pub fn gini(x: &[f64]) -> f64 {
    let total: f64 = x.iter().sum();
    if x.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let pairwise: f64 = x
        .iter()
        .map(|a| x.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    pairwise / (2.0 * x.len() as f64 * total)
}

/// Jain index `(sum x)^2 / (N sum x^2)`. An all-zero vector yields 1.
pub fn jain(x: &[f64]) -> f64 {
    let total: f64 = x.iter().sum();
    let squares: f64 = x.iter().map(|v| v * v).sum();
    if x.is_empty() || squares <= 0.0 {
        return 1.0;
    }
    total * total / (x.len() as f64 * squares)
}

/// Relative loss in social welfare, in percent, floored at 0.
pub fn relative_sw_loss(alg_sw: f64, opt_sw: f64) -> Result<f64> {
    if !(opt_sw > 0.0) {
        return Err(invalid(format!("optimal social welfare {opt_sw} must be positive")));
    }
    Ok((100.0 * (opt_sw - alg_sw) / opt_sw).max(0.0))
}

/// Per-agent mean utility across evaluation steps (0 while unmatched).
pub fn mixed_outcome_values(allocations: &[Allocation], instance: &AssignmentInstance) -> Result<Vec<f64>> {
    if allocations.is_empty() {
        return Err(invalid("mixed outcome needs at least one evaluation step"));
    }
    let mut sums = vec![0.0; instance.n_agents()];
    for allocation in allocations {
        for (sum, value) in sums.iter_mut().zip(allocation.values(instance)) {
            *sum += value;
        }
    }
    let steps = allocations.len() as f64;
    Ok(sums.into_iter().map(|s| s / steps).collect())
}

/// Mean of a per-step index over evaluation steps.
pub fn mean_index_per_step(allocations: &[Allocation], instance: &AssignmentInstance, index: fn(&[f64]) -> f64) -> f64 {
    if allocations.is_empty() {
        return f64::NAN;
    }
    allocations.iter().map(|a| index(&a.values(instance))).sum::<f64>() / allocations.len() as f64
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
