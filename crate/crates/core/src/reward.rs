//! Constraint-satisfaction reward.
//!
//! Each attribute contributes its satisfaction score for the new sequence
//! plus the change in that score relative to the old sequence. The score is
//! 1 inside the target window and falls linearly to 0 at the range ends.

use crate::attr::{AttributeSpec, AttributeVector, MultiConstraint, ThresholdWindow};
use crate::error::bail;
use crate::Result;

/// Piecewise-linear proximity of `value` to `window`, in `[0, 1]`.
///
/// The lower ramp is only evaluated when `value < start`, which implies
/// `start > min`; likewise for the upper ramp. Windows that touch a range
/// end therefore never divide by zero.
pub fn satisfaction_score(value: f64, window: &ThresholdWindow, spec: &AttributeSpec) -> Result<f64> {
    spec.validate()?;
    window.validate(spec)?;
    if !spec.contains(value) {
        bail!(
            Contract,
            "value {} outside `{}` range [{}, {}]",
            value,
            spec.id,
            spec.min,
            spec.max
        );
    }
    Ok(score_unchecked(value, window.start, window.end, spec.min, spec.max))
}

#[inline]
fn score_unchecked(value: f64, start: f64, end: f64, min: f64, max: f64) -> f64 {
    if value < start {
        (value - min) / (start - min)
    } else if value <= end {
        1.0
    } else {
        (max - value) / (max - end)
    }
}

/// Per-attribute reward `2 f(new) - f(old)`, in `[-1, 2]`.
pub fn attribute_reward(
    new_value: f64,
    old_value: f64,
    window: &ThresholdWindow,
    spec: &AttributeSpec,
) -> Result<f64> {
    let new = satisfaction_score(new_value, window, spec)?;
    let old = satisfaction_score(old_value, window, spec)?;
    Ok(new + (new - old))
}

/// Sum of satisfaction scores of `attrs` under `constraint`.
pub fn satisfaction_sum(
    attrs: &AttributeVector,
    constraint: &MultiConstraint,
    specs: &[AttributeSpec],
) -> Result<f64> {
    check_dims(attrs, constraint, specs)?;
    let mut sum = 0.0;
    for ((&v, window), spec) in attrs.values().iter().zip(&constraint.windows).zip(specs) {
        sum += satisfaction_score(v, window, spec)?;
    }
    Ok(sum)
}

/// Multi-attribute reward of moving from `old` to `new`, plus raw bonus
/// scores (fluency, similarity, ...) added as extra components.
pub fn total_reward(
    new: &AttributeVector,
    old: &AttributeVector,
    constraint: &MultiConstraint,
    specs: &[AttributeSpec],
    bonuses: &[f64],
) -> Result<f64> {
    check_dims(new, constraint, specs)?;
    check_dims(old, constraint, specs)?;
    let mut total = 0.0;
    for (((&n, &o), window), spec) in new
        .values()
        .iter()
        .zip(old.values())
        .zip(&constraint.windows)
        .zip(specs)
    {
        total += attribute_reward(n, o, window, spec)?;
    }
    for &bonus in bonuses {
        if !(0.0..=1.0).contains(&bonus) {
            bail!(Contract, "bonus score {} outside [0, 1]", bonus);
        }
        total += bonus;
    }
    Ok(total)
}

/// Whether every value lies inside its window (inclusive).
pub fn satisfies(attrs: &AttributeVector, constraint: &MultiConstraint) -> Result<bool> {
    if attrs.len() != constraint.len() {
        bail!(
            Contract,
            "{} values checked against {} windows",
            attrs.len(),
            constraint.len()
        );
    }
    Ok(attrs
        .values()
        .iter()
        .zip(&constraint.windows)
        .all(|(&v, w)| w.contains(v)))
}

fn check_dims(attrs: &AttributeVector, constraint: &MultiConstraint, specs: &[AttributeSpec]) -> Result<()> {
    if attrs.len() != specs.len() || constraint.len() != specs.len() {
        bail!(
            Contract,
            "dimension mismatch: {} values, {} windows, {} attributes",
            attrs.len(),
            constraint.len(),
            specs.len()
        );
    }
    Ok(())
}
