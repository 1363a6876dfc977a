//! Exact solver for the per-state maximin subproblem
//! `max_p min_o Σ_a p_a M[a][o]`, the inner step of every learner and oracle.
//!
//! The primal and the dual are solved as two separate linear programs on
//! the in-house simplex. Before solving, the matrix is mapped affinely onto
//! `[1, 2]`; the optimal strategy sets are invariant under that map, so
//! shifted and positively scaled inputs produce the same pivot sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{LinearProgram, LpOutcome, Relation};

/// Slack tolerance, relative to the game value, for tight columns.
pub const TIGHT_TOL: f64 = 1e-9;

/// Dense row-major payoff matrix; rows are the maximizer's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged matrix rows".into()));
        }
        Matrix::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Adds `shift[c]` to every entry of column `c`.
    pub fn with_column_shift(&self, shift: &[f64]) -> Matrix {
        assert_eq!(shift.len(), self.cols);
        let data = self
            .data
            .chunks(self.cols)
            .flat_map(|row| row.iter().zip(shift).map(|(v, s)| v + s))
            .collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `(p^T M)_o` for every column.
    pub fn column_payoffs(&self, row_strategy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &p) in row_strategy.iter().enumerate() {
            for (c, acc) in out.iter_mut().enumerate() {
                *acc += p * self.get(r, c);
            }
        }
        out
    }

    /// `(M q)_a` for every row.
    pub fn row_payoffs(&self, col_strategy: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * col_strategy[c]).sum())
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFiniteInput { row: i / self.cols, col: i % self.cols }),
            None => Ok(()),
        }
    }

    /// Affine image on `[1, 2]`.
    fn normalized(&self) -> Matrix {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let scale = if hi > lo { hi - lo } else { 1.0 };
        self.map(|v| (v - lo) / scale + 1.0)
    }
}

/// Maximizer side of a solved game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSolution {
    pub row_strategy: Vec<f64>,
    pub value: f64,
    /// `(p^T M)_o` per opponent column.
    pub column_payoffs: Vec<f64>,
    pub tight_columns: Vec<usize>,
}

/// Full solution with the dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSolution {
    pub row_strategy: Vec<f64>,
    pub value: f64,
    pub tight_columns: Vec<usize>,
    pub dual_strategy: Vec<f64>,
}

fn to_distribution(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / sum).collect()
}

/// Optimal mixed row strategy of `max_p min_o (p^T M)_o`, its value, and the
/// columns attaining the minimum. Used directly by the learners, which do
/// not need the dual certificate.
pub fn maximin_row(m: &Matrix) -> Result<RowSolution> {
    m.check_finite()?;
    let norm = m.normalized();
    let (rows, cols) = (m.rows, m.cols);
    // Variables: p_0..p_{rows-1}, z.
    let mut objective = vec![0.0; rows + 1];
    objective[rows] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for c in 0..cols {
        let mut coeffs: Vec<f64> = (0..rows).map(|r| -norm.get(r, c)).collect();
        coeffs.push(1.0);
        lp.add_constraint(coeffs, Relation::Le, 0.0);
    }
    let mut simplex_row = vec![1.0; rows];
    simplex_row.push(0.0);
    lp.add_constraint(simplex_row, Relation::Eq, 1.0);

    let solution = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => unreachable!("the probability simplex is never empty"),
    };
    let row_strategy = to_distribution(&solution.x[..rows]);
    let column_payoffs = m.column_payoffs(&row_strategy);
    let value = column_payoffs.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIGHT_TOL * value.abs().max(1.0);
    let tight_columns = column_payoffs
        .iter()
        .enumerate()
        .filter(|(_, &v)| v - value <= tol)
        .map(|(c, _)| c)
        .collect();
    Ok(RowSolution { row_strategy, value, column_payoffs, tight_columns })
}

/// Optimal column mixture of `min_q max_a (M q)_a` and its value.
pub fn solve_dual(m: &Matrix) -> Result<(Vec<f64>, f64)> {
    m.check_finite()?;
    let norm = m.normalized();
    let (rows, cols) = (m.rows, m.cols);
    // Variables: q_0..q_{cols-1}, w; maximize -w.
    let mut objective = vec![0.0; cols + 1];
    objective[cols] = -1.0;
    let mut lp = LinearProgram::maximize(objective);
    for r in 0..rows {
        let mut coeffs: Vec<f64> = (0..cols).map(|c| norm.get(r, c)).collect();
        coeffs.push(-1.0);
        lp.add_constraint(coeffs, Relation::Le, 0.0);
    }
    let mut simplex_row = vec![1.0; cols];
    simplex_row.push(0.0);
    lp.add_constraint(simplex_row, Relation::Eq, 1.0);

    let solution = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => unreachable!("the probability simplex is never empty"),
    };
    let q = to_distribution(&solution.x[..cols]);
    let value = m.row_payoffs(&q).into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((q, value))
}

/// Solves the maximin game and attaches the dual certificate.
pub fn solve_maximin(m: &Matrix) -> Result<MatrixGameSolution> {
    let row = maximin_row(m)?;
    let (dual_strategy, _) = solve_dual(m)?;
    Ok(MatrixGameSolution {
        row_strategy: row.row_strategy,
        value: row.value,
        tight_columns: row.tight_columns,
        dual_strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matching_pennies() {
        let s = solve_maximin(&mat(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!(close(s.value, 0.0, 1e-12));
        assert!(close(s.row_strategy[0], 0.5, 1e-12));
        assert!(close(s.dual_strategy[0], 0.5, 1e-12));
        assert_eq!(s.tight_columns, vec![0, 1]);
    }

    #[test]
    fn second_iterate_of_the_static_example() {
        let s = solve_maximin(&mat(&[&[1.0, 0.0], &[0.0, 0.5]])).unwrap();
        assert!(close(s.row_strategy[0], 1.0 / 3.0, 1e-12));
        assert!(close(s.row_strategy[1], 2.0 / 3.0, 1e-12));
        assert!(close(s.value, 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn third_iterate_equalizes_at_nine_over_thirty_two() {
        let s = solve_maximin(&mat(&[&[1.0, -5.0 / 18.0], &[0.0, 0.5]])).unwrap();
        assert!(close(s.row_strategy[0], 9.0 / 32.0, 1e-12));
        assert!(close(s.value, 9.0 / 32.0, 1e-12));
    }

    #[test]
    fn single_column_picks_the_best_row() {
        let s = solve_maximin(&mat(&[&[3.0], &[7.0]])).unwrap();
        assert_eq!(s.row_strategy, vec![0.0, 1.0]);
        assert!(close(s.value, 7.0, 1e-12));
    }

    #[test]
    fn dominant_column_gets_all_dual_mass() {
        let (q, v) = solve_dual(&mat(&[&[1.0, 5.0, 4.0], &[2.0, 6.0, 3.0]])).unwrap();
        assert_eq!(q, vec![1.0, 0.0, 0.0]);
        assert!(close(v, 2.0, 1e-12));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = mat(&[&[1.0, f64::NAN]]);
        assert_eq!(maximin_row(&m), Err(Error::NonFiniteInput { row: 0, col: 1 }));
        assert!(solve_dual(&m).is_err());
    }

    #[test]
    fn constant_matrix_is_solved() {
        let s = solve_maximin(&mat(&[&[2.0, 2.0], &[2.0, 2.0]])).unwrap();
        assert!(close(s.value, 2.0, 1e-15));
        assert!(close(s.row_strategy.iter().sum::<f64>(), 1.0, 1e-15));
    }

    #[test]
    fn column_shift_helper() {
        let m = mat(&[&[1.0, 2.0], &[3.0, 4.0]]).with_column_shift(&[10.0, -1.0]);
        assert_eq!(m.data(), &[11.0, 1.0, 13.0, 3.0]);
    }
}
