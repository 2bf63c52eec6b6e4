//! Representativeness and diversity objectives over a distance matrix.
//!
//! Evaluation order is fixed (subset order as given, pool order inside each
//! row), so two evaluations of the same sorted subset are bit-identical.

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

fn check_indices(subset: &[usize], matrix: &DistanceMatrix) -> Result<()> {
    let n = matrix.len();
    for (pos, &i) in subset.iter().enumerate() {
        if i >= n {
            return Err(Error::InvalidSelection(format!(
                "index {i} out of range for pool of {n}"
            )));
        }
        if subset[..pos].contains(&i) {
            return Err(Error::InvalidSelection(format!("index {i} repeated")));
        }
    }
    Ok(())
}

/// Sum over selected `y` of minus the mean distance from `y` to the whole pool
/// (divisor is the pool size `N`). Always `<= 0`.
pub fn f_rep(subset: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidSelection("f_rep of an empty subset".into()));
    }
    check_indices(subset, matrix)?;
    Ok(rep_unchecked(subset, matrix))
}

/// Ordered-pair distance sum inside the subset divided by its size.
/// Each unordered pair contributes twice, so values may exceed 1.
pub fn f_div(subset: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    if subset.len() < 2 {
        return Err(Error::InvalidSelection(format!(
            "f_div needs at least 2 items, got {}",
            subset.len()
        )));
    }
    check_indices(subset, matrix)?;
    Ok(div_unchecked(subset, matrix))
}

pub(crate) fn rep_unchecked(subset: &[usize], matrix: &DistanceMatrix) -> f64 {
    let n = matrix.len() as f64;
    subset
        .iter()
        .map(|&y| -(matrix.row(y).iter().sum::<f64>() / n))
        .fold(0.0, |acc, t| acc + t)
}

pub(crate) fn div_unchecked(subset: &[usize], matrix: &DistanceMatrix) -> f64 {
    if subset.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for &a in subset {
        for &b in subset {
            if a != b {
                total += matrix.get(a, b);
            }
        }
    }
    total / subset.len() as f64
}

/// Objective value with its parts, evaluated on the sorted subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub f_rep: f64,
    pub f_div: f64,
    pub lambda: f64,
    pub objective: f64,
}

impl ObjectiveBreakdown {
    /// `f_rep + lambda * f_div` with `f_div` taken as 0 for singletons.
    pub fn evaluate(subset: &[usize], matrix: &DistanceMatrix, lambda: f64) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidSelection("empty subset".into()));
        }
        check_indices(subset, matrix)?;
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        Ok(Self::evaluate_sorted(&sorted, matrix, lambda))
    }

    pub(crate) fn evaluate_sorted(sorted: &[usize], matrix: &DistanceMatrix, lambda: f64) -> Self {
        let f_rep = rep_unchecked(sorted, matrix);
        let f_div = div_unchecked(sorted, matrix);
        Self {
            f_rep,
            f_div,
            lambda,
            objective: f_rep + lambda * f_div,
        }
    }
}

/// Left-hand side of the triangle-inequality diversity bound:
/// `(1/|Y|^2) * sum_{y in pool} sum_{y1 in Y} sum_{y2 in Y, y2 != y1} |d(y,y1) - d(y,y2)|`.
pub fn distance_difference_sum(subset: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    check_indices(subset, matrix)?;
    if subset.is_empty() {
        return Err(Error::InvalidSelection("empty subset".into()));
    }
    let mut total = 0.0;
    for y in 0..matrix.len() {
        for &a in subset {
            for &b in subset {
                if a != b {
                    total += (matrix.get(y, a) - matrix.get(y, b)).abs();
                }
            }
        }
    }
    let k = subset.len() as f64;
    Ok(total / (k * k))
}

/// Largest distance from any pool item to its nearest selected item.
pub fn covering_radius(subset: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidSelection("empty subset".into()));
    }
    check_indices(subset, matrix)?;
    Ok((0..matrix.len())
        .map(|y| {
            subset
                .iter()
                .map(|&c| matrix.get(y, c))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn abc() -> DistanceMatrix {
        DistanceMatrix::from_rows(vec![
            vec![0.0, 0.2, 0.9],
            vec![0.2, 0.0, 0.8],
            vec![0.9, 0.8, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn worked_example_values() {
        let m = abc();
        assert!((f_rep(&[0, 1], &m).unwrap() + 0.7).abs() < 1e-12);
        assert!((f_rep(&[0, 2], &m).unwrap() + 2.8 / 3.0).abs() < 1e-12);
        assert!((f_rep(&[1, 2], &m).unwrap() + 0.9).abs() < 1e-12);
        assert!((f_div(&[0, 1], &m).unwrap() - 0.2).abs() < 1e-12);
        assert!((f_div(&[0, 2], &m).unwrap() - 0.9).abs() < 1e-12);
        assert!((f_div(&[1, 2], &m).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_error_cases() {
        let zero = DistanceMatrix::from_rows(vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(f_rep(&[0, 2], &zero).unwrap(), 0.0);
        assert_eq!(f_div(&[0, 1], &zero).unwrap(), 0.0);
        assert!(f_rep(&[], &zero).is_err());
        assert!(f_div(&[1], &zero).is_err());
        assert!(f_rep(&[3], &zero).is_err());
        assert!(f_div(&[1, 1], &zero).is_err());
    }

    #[test]
    fn diversity_can_exceed_one() {
        let m = DistanceMatrix::from_rows(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(f_div(&[0, 1, 2], &m).unwrap(), 2.0);
    }

    #[test]
    fn breakdown_is_order_independent() {
        let m = abc();
        let a = ObjectiveBreakdown::evaluate(&[2, 0], &m, 1.0).unwrap();
        let b = ObjectiveBreakdown::evaluate(&[0, 2], &m, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objective, a.f_rep + a.lambda * a.f_div);
    }

    #[test]
    fn covering_radius_example() {
        let m = abc();
        assert_eq!(covering_radius(&[1, 2], &m).unwrap(), 0.2);
        assert_eq!(covering_radius(&[0, 1, 2], &m).unwrap(), 0.0);
    }
}
