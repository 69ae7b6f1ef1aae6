//! Bounded-variable primal simplex.
//!
//! Works directly on boxed variables (nonbasic variables rest at one of
//! their bounds), so the MILP relaxations never need bound rows.  Two
//! phases: phase 1 drives a basis of artificial variables to zero, phase 2
//! optimises the true objective.  Pricing is Dantzig's rule with
//! lowest-index tie-breaking, switching to Bland's rule after a run of
//! degenerate pivots so cycling cannot occur; all choices are
//! deterministic.  The basis inverse is kept explicitly and refactorised
//! periodically.

use super::lp::{LinearProgram, LpError, LpOutcome, Sense};
use crate::scalar::{s, Scalar};

/// Solves a boxed maximisation LP.
///
/// Returns `LpOutcome::Infeasible` when no point satisfies the rows and
/// bounds; unboundedness is impossible because every variable is boxed.
/// A solve whose basis turns numerically singular (tiny ratio-test pivots
/// can corrupt it) is retried with a coarser pivot floor, and as a last
/// resort with Bland's rule throughout, which avoids the aggressive pivot
/// sequences that cause the corruption.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpOutcome<T>, LpError> {
    lp.validate()?;
    let run = |scale: f64, bland: bool| {
        Simplex::new(lp).map_or(Ok(LpOutcome::Infeasible), |mut solver| {
            solver.pivot_tol *= s::<T>(scale);
            solver.force_bland = bland;
            solver.run()
        })
    };
    match run(1.0, false) {
        Err(LpError::IterationLimit(0)) => match run(1e3, false) {
            Err(LpError::IterationLimit(0)) => run(1e5, true),
            other => other,
        },
        other => other,
    }
}

struct Simplex<T> {
    m: usize,
    /// Total columns: structural, then slacks, then one artificial per row.
    n: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, T)>>,
    lower: Vec<T>,
    upper: Vec<T>,
    cost: Vec<T>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    basis_pos: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    x: Vec<T>,
    /// Row-major m×m basis inverse.
    binv: Vec<T>,
    pivots_since_factor: usize,
    dual_tol: T,
    feas_tol: T,
    pivot_tol: T,
    force_bland: bool,
}

impl<T: Scalar> Simplex<T> {
    /// Builds the standard-form working problem; `None` if a row is
    /// trivially unsatisfiable within the variable box.
    fn new(lp: &LinearProgram<T>) -> Option<Self> {
        let m = lp.rows.len();
        let n_struct = lp.num_vars();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost = lp.objective.clone();
        let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_struct];
        let mut rhs = Vec::with_capacity(m);
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != T::zero() {
                    cols[j].push((r, a));
                }
            }
            rhs.push(row.rhs);
        }

        // Slack columns for inequality rows, with implied finite bounds.
        for (r, row) in lp.rows.iter().enumerate() {
            if row.sense == Sense::Le {
                let mut row_min = T::zero();
                for &(j, a) in &row.coeffs {
                    row_min += if a >= T::zero() { a * lp.lower[j] } else { a * lp.upper[j] };
                }
                let cap = row.rhs - row_min;
                if cap < T::zero() {
                    return None;
                }
                cols.push(vec![(r, T::one())]);
                lower.push(T::zero());
                upper.push(cap);
                cost.push(T::zero());
            }
        }

        // Artificial columns; sized and signed during phase 1 setup.
        for r in 0..m {
            cols.push(vec![(r, T::one())]);
            lower.push(T::zero());
            upper.push(T::zero());
            cost.push(T::zero());
        }

        let n = cols.len();
        let eps = T::epsilon();
        Some(Self {
            m,
            n,
            n_struct,
            cols,
            lower,
            upper,
            cost,
            rhs,
            basis: Vec::new(),
            basis_pos: vec![None; n],
            at_upper: vec![false; n],
            x: vec![T::zero(); n],
            binv: Vec::new(),
            pivots_since_factor: 0,
            dual_tol: s::<T>(1e-9).max(eps * s(64.0)),
            feas_tol: s::<T>(1e-7).max(eps * s(1024.0)),
            pivot_tol: s::<T>(1e-9).max(eps * s(64.0)),
            force_bland: false,
        })
    }

    fn art(&self, row: usize) -> usize {
        self.n - self.m + row
    }

    fn run(&mut self) -> Result<LpOutcome<T>, LpError> {
        // Place every regular variable at the bound of smaller magnitude
        // (deterministic and keeps initial residuals small).
        for j in 0..self.n - self.m {
            let at_up = self.upper[j].abs() < self.lower[j].abs();
            self.at_upper[j] = at_up;
            self.x[j] = if at_up { self.upper[j] } else { self.lower[j] };
        }

        // Residuals decide artificial signs; artificials form the basis.
        let mut residual = self.rhs.clone();
        for j in 0..self.n - self.m {
            if self.x[j] != T::zero() {
                for &(r, a) in &self.cols[j] {
                    residual[r] -= a * self.x[j];
                }
            }
        }
        self.basis.clear();
        self.binv = identity(self.m);
        for r in 0..self.m {
            let aj = self.art(r);
            if residual[r] < T::zero() {
                self.cols[aj][0].1 = -T::one();
                // Basis matrix starts as diag(±1), so mirror the sign here.
                self.binv[r * self.m + r] = -T::one();
            }
            self.upper[aj] = residual[r].abs() + T::one();
            self.x[aj] = residual[r].abs();
            self.basis.push(aj);
            self.basis_pos[aj] = Some(r);
        }

        // Phase 1: drive the artificials out.
        let true_cost = std::mem::replace(&mut self.cost, vec![T::zero(); self.n]);
        for r in 0..self.m {
            let aj = self.art(r);
            self.cost[aj] = -T::one();
        }
        self.pivot_loop()?;
        let infeas: T = (0..self.m).map(|r| self.x[self.art(r)]).sum();
        if infeas > self.feas_tol {
            return Ok(LpOutcome::Infeasible);
        }

        // Phase 2: pin artificials to zero and optimise the true objective.
        self.cost = true_cost;
        for r in 0..self.m {
            let aj = self.art(r);
            self.upper[aj] = T::zero();
            self.x[aj] = T::zero();
        }
        self.refresh_basics();
        self.pivot_loop()?;

        let x = self.x[..self.n_struct].to_vec();
        let value = self.cost[..self.n_struct]
            .iter()
            .zip(&x)
            .map(|(&c, &v)| c * v)
            .sum();
        Ok(LpOutcome::Optimal { value, x })
    }

    /// Rebuilds the basis inverse and the basic values from scratch.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut mat = vec![T::zero(); m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[j] {
                mat[r * m + pos] = a;
            }
        }
        self.binv = invert(&mut mat, m).ok_or(LpError::IterationLimit(0))?;
        self.refresh_basics();
        self.pivots_since_factor = 0;
        Ok(())
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh_basics(&mut self) {
        let mut rhs = self.rhs.clone();
        for j in 0..self.n {
            if self.basis_pos[j].is_none() && self.x[j] != T::zero() {
                for &(r, a) in &self.cols[j] {
                    rhs[r] -= a * self.x[j];
                }
            }
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            let mut v = T::zero();
            for r in 0..self.m {
                v += self.binv[pos * self.m + r] * rhs[r];
            }
            self.x[j] = v;
        }
    }

    fn pivot_loop(&mut self) -> Result<(), LpError> {
        let max_pivots = 20_000 + 200 * (self.m + self.n);
        let degen_tol = self.feas_tol * s::<T>(1e-2);
        let mut degen_run = 0usize;
        let mut bland = self.force_bland;
        for _ in 0..max_pivots {
            if self.pivots_since_factor >= 32 {
                self.refactor()?;
            }
            // Simplex multipliers y = c_B B^{-1}.
            let m = self.m;
            let mut y = vec![T::zero(); m];
            for (pos, &j) in self.basis.iter().enumerate() {
                let cj = self.cost[j];
                if cj != T::zero() {
                    for r in 0..m {
                        y[r] += cj * self.binv[pos * m + r];
                    }
                }
            }

            // Pricing.
            let mut enter: Option<(usize, T)> = None;
            for j in 0..self.n {
                if self.basis_pos[j].is_some() || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut d = self.cost[j];
                for &(r, a) in &self.cols[j] {
                    d -= y[r] * a;
                }
                let improving = if self.at_upper[j] { d < -self.dual_tol } else { d > self.dual_tol };
                if !improving {
                    continue;
                }
                if bland {
                    enter = Some((j, d));
                    break;
                }
                match enter {
                    Some((_, best)) if d.abs() <= best.abs() => {}
                    _ => enter = Some((j, d)),
                }
            }
            let Some((j_in, _)) = enter else {
                return Ok(());
            };

            // Direction of travel and basic-variable ratios.
            let sigma = if self.at_upper[j_in] { -T::one() } else { T::one() };
            let mut w = vec![T::zero(); m];
            for &(r, a) in &self.cols[j_in] {
                for pos in 0..m {
                    w[pos] += self.binv[pos * m + r] * a;
                }
            }

            let mut t_best = self.upper[j_in] - self.lower[j_in];
            let mut leave: Option<(usize, bool)> = None; // (basis pos, hits upper)
            for (pos, &wi) in w.iter().enumerate() {
                let d = sigma * wi;
                if d.abs() <= self.pivot_tol {
                    continue;
                }
                let k = self.basis[pos];
                let (limit, hits_upper) = if d > T::zero() {
                    ((self.x[k] - self.lower[k]) / d, false)
                } else {
                    ((self.upper[k] - self.x[k]) / -d, true)
                };
                let limit = limit.max(T::zero());
                let replace = match leave {
                    None => limit < t_best,
                    Some((cur, _)) => {
                        limit < t_best
                            || (limit == t_best
                                && if bland {
                                    self.basis[pos] < self.basis[cur]
                                } else {
                                    wi.abs() > w[cur].abs()
                                })
                    }
                };
                if replace {
                    t_best = limit;
                    leave = Some((pos, hits_upper));
                }
            }

            let t = t_best;
            degen_run = if t <= degen_tol { degen_run + 1 } else { 0 };
            bland = degen_run > 64;

            // Move the entering variable and update the basics it drags.
            self.x[j_in] = if sigma > T::zero() { self.lower[j_in] + t } else { self.upper[j_in] - t };
            for (pos, &wi) in w.iter().enumerate() {
                let k = self.basis[pos];
                self.x[k] = self.x[k] - sigma * t * wi;
            }

            match leave {
                None => {
                    // Bound flip: no basis change.
                    self.at_upper[j_in] = !self.at_upper[j_in];
                }
                Some((r, hits_upper)) => {
                    let k_out = self.basis[r];
                    self.x[k_out] = if hits_upper { self.upper[k_out] } else { self.lower[k_out] };
                    self.at_upper[k_out] = hits_upper;
                    self.basis_pos[k_out] = None;
                    self.basis[r] = j_in;
                    self.basis_pos[j_in] = Some(r);
                    // Eta update of the inverse: eliminate w against row r.
                    let wr = w[r];
                    for i in 0..m {
                        self.binv[r * m + i] /= wr;
                    }
                    for pos in 0..m {
                        if pos != r && w[pos] != T::zero() {
                            let f = w[pos];
                            for i in 0..m {
                                let delta = f * self.binv[r * m + i];
                                self.binv[pos * m + i] -= delta;
                            }
                        }
                    }
                    self.pivots_since_factor += 1;
                }
            }
        }
        Err(LpError::IterationLimit(max_pivots))
    }
}

fn identity<T: Scalar>(m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * m];
    for i in 0..m {
        out[i * m + i] = T::one();
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting; `None` if singular.
fn invert<T: Scalar>(mat: &mut [T], m: usize) -> Option<Vec<T>> {
    let mut inv = identity::<T>(m);
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if mat[r * m + col].abs() > mat[piv * m + col].abs() {
                piv = r;
            }
        }
        if mat[piv * m + col].abs() <= T::epsilon() * s(16.0) {
            return None;
        }
        if piv != col {
            for i in 0..m {
                mat.swap(piv * m + i, col * m + i);
                inv.swap(piv * m + i, col * m + i);
            }
        }
        let d = mat[col * m + col];
        for i in 0..m {
            mat[col * m + i] /= d;
            inv[col * m + i] /= d;
        }
        for r in 0..m {
            if r != col {
                let f = mat[r * m + col];
                if f != T::zero() {
                    for i in 0..m {
                        let (a, b) = (mat[col * m + i], inv[col * m + i]);
                        mat[r * m + i] -= f * a;
                        inv[r * m + i] -= f * b;
                    }
                }
            }
        }
    }
    Some(inv)
}
