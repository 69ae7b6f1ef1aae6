//! Linear-program container shared by the simplex solver and the MILP
//! encodings.
//!
//! Every variable carries finite lower/upper bounds — the verification
//! boxes and interval propagation guarantee this, and the simplex solver
//! relies on it (a fully boxed LP can never be unbounded).

use thiserror::Error;

use crate::scalar::Scalar;

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

/// One sparse constraint row `coeffs · x (≤ or =) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow<T> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// A maximisation LP with boxed variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub rows: Vec<LinRow<T>>,
    /// Dense objective, one coefficient per variable; maximised.
    pub objective: Vec<T>,
}

/// Errors from LP construction or the simplex itself.
#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("variable {index} has invalid bounds [{lower}, {upper}]")]
    BadBounds { index: usize, lower: f64, upper: f64 },
    #[error("row {row} references variable {index} out of range")]
    BadIndex { row: usize, index: usize },
    #[error("objective length {got} does not match variable count {expected}")]
    BadObjective { expected: usize, got: usize },
    #[error("simplex failed to converge within {0} pivots")]
    IterationLimit(usize),
}

/// Result of [`crate::milp::solve_lp`].
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<T> {
    /// Optimal value and a maximising point.
    Optimal { value: T, x: Vec<T> },
    Infeasible,
}

impl<T: Scalar> LinearProgram<T> {
    /// Empty program (add variables, then rows).
    pub fn new() -> Self {
        Self { lower: Vec::new(), upper: Vec::new(), rows: Vec::new(), objective: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    /// Adds a boxed variable with zero objective and returns its index.
    pub fn add_var(&mut self, lower: T, upper: T) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(T::zero());
        self.lower.len() - 1
    }

    /// Adds a constraint row.
    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, sense: Sense, rhs: T) {
        self.rows.push(LinRow { coeffs, sense, rhs });
    }

    /// Tightens a variable to the intersection of its bounds with
    /// `[lower, upper]`.
    pub fn tighten(&mut self, index: usize, lower: T, upper: T) {
        self.lower[index] = self.lower[index].max(lower);
        self.upper[index] = self.upper[index].min(upper);
    }

    /// Fixes a variable to a point value.
    pub fn fix(&mut self, index: usize, value: T) {
        self.lower[index] = value;
        self.upper[index] = value;
    }

    /// Checks finite bounds, index ranges and objective length.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for i in 0..n {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(LpError::BadBounds {
                    index: i,
                    lower: l.to_f64_lossy(),
                    upper: u.to_f64_lossy(),
                });
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coeffs.iter().any(|&(i, _)| i >= n) {
                let index = row.coeffs.iter().map(|&(i, _)| i).find(|&i| i >= n).unwrap();
                return Err(LpError::BadIndex { row: r, index });
            }
        }
        if self.objective.len() != n {
            return Err(LpError::BadObjective { expected: n, got: self.objective.len() });
        }
        Ok(())
    }

    /// Objective value at a point.
    pub fn objective_at(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Largest constraint/bound violation at a point, for feasibility
    /// checks in tests and incumbent validation.
    pub fn violation_at(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for i in 0..self.num_vars() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        for row in &self.rows {
            let lhs: T = row.coeffs.iter().map(|&(i, a)| a * x[i]).sum();
            match row.sense {
                Sense::Le => worst = worst.max(lhs - row.rhs),
                Sense::Eq => worst = worst.max((lhs - row.rhs).abs()),
            }
        }
        worst
    }
}
